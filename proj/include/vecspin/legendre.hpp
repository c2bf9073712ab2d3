#pragma once

#include <string>

#include "vecspin/descent.hpp"
#include "vecspin/phi.hpp"

namespace vecspin {

struct PhiStarResult {
    double value = 0.0;        // inf_λ Φ(λ) − Σ λ D
    double std_error = 0.0;    // MC backend only, at the returned λ
    LambdaMatrix lambda{1};
    double grad_norm = 0.0;
    int iterations = 0;
    bool converged = false;
    std::string warning;
};

namespace detail {

// Objective and gradient of λ ↦ Φ(λ) − Σ λ D. Exact chain rule on the
// quadrature backend, central differences with common draws on MC.
inline double legendre_objective(const MixedModel& model, const SpinPrior& prior, const Matrix& d, const Path& path,
                                 const EvalSpec& spec, const OptimizerSpec& opt, const Vector& c, Vector& grad) {
    const int kappa = model.kappa();
    const Vector du = LambdaMatrix::upper(d);
    if (spec.backend == Backend::Quadrature) {
        const PhiResult phi = eval_phi(model, prior, LambdaMatrix(kappa, c), path, spec, true);
        grad = phi.gradient - du;
        return phi.value - c.dot(du);
    }
    auto f = [&](const Vector& v) { return eval_phi(model, prior, LambdaMatrix(kappa, v), path, spec).value - v.dot(du); };
    grad = fd_gradient(f, c, opt.fd_step);
    return f(c);
}

} // namespace detail

/// Φ*(D) = inf_λ [Φ(λ, D, path) − Σ_{k<=k'} λ_{k,k'} D_{k,k'}]. The objective is
/// convex in λ, so descent from `start` (default 0) reaches the infimum when it exists.
inline PhiStarResult phi_star(const MixedModel& model, const SpinPrior& prior, const Matrix& d, const Path& path,
                              const EvalSpec& spec, const OptimizerSpec& opt,
                              const LambdaMatrix* start = nullptr) {
    require(d.rows() == model.kappa() && d.cols() == model.kappa(), "D has wrong shape");
    const int kappa = model.kappa();
    Vector c0 = start ? start->coeffs() : Vector::Zero(kappa * (kappa + 1) / 2);
    auto fg = [&](const Vector& c, Vector& g) {
        return detail::legendre_objective(model, prior, d, path, spec, opt, c, g);
    };
    const DescentResult dr = gradient_descent(fg, std::move(c0), opt.max_iter, opt.step, opt.grad_tol, opt.value_tol);
    PhiStarResult out;
    out.value = dr.value;
    out.lambda = LambdaMatrix(kappa, dr.x);
    out.grad_norm = dr.grad_norm;
    out.iterations = dr.iterations;
    out.converged = dr.converged;
    if (spec.backend == Backend::MonteCarlo) out.std_error = eval_phi(model, prior, out.lambda, path, spec).std_error;
    if (!out.converged) out.warning = "phi_star did not converge within max_iter; returning the best iterate";
    return out;
}

} // namespace vecspin
