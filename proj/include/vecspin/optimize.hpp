#pragma once

#include <algorithm>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "vecspin/legendre.hpp"

namespace vecspin {

/// Unconstrained coordinates for paths ending at a fixed D with r levels.
/// x is kept in [0,1] and sorted by projection; the γ's come from factors
/// F_1..F_r via C_j = Σ_{i<=j} F_i F_i^T, normalized by S = C_r + τI:
///   γ_j = D^{1/2} S^{-1/2} C_j S^{-1/2} D^{1/2}  (j < r),   γ_r = D,
/// which is monotone for every choice of factors.
class PathCoordinates {
public:
    PathCoordinates(Matrix d, int levels) : d_(std::move(d)), r_(levels) {
        require(levels >= 1, "path needs r >= 1 levels");
        kappa_ = static_cast<int>(d_.rows());
        d_half_ = spectral_apply(d_, [](double v) { return std::sqrt(std::max(v, 0.0)); });
    }

    Eigen::Index size() const { return r_ + static_cast<Eigen::Index>(r_) * kappa_ * kappa_; }
    int levels() const { return r_; }

    Path path(const Vector& p) const {
        std::vector<double> x(static_cast<std::size_t>(r_));
        for (int j = 0; j < r_; ++j) x[static_cast<std::size_t>(j)] = std::clamp(p(j), 0.0, 1.0);
        std::sort(x.begin(), x.end());
        std::vector<Matrix> cum;
        Matrix c = Matrix::Zero(kappa_, kappa_);
        for (int j = 0; j < r_; ++j) {
            const Matrix f = factor(p, j);
            c += f * f.transpose();
            cum.push_back(c);
        }
        const Matrix s = c + kTau * Matrix::Identity(kappa_, kappa_);
        const Matrix s_inv_half = spectral_apply(s, [](double v) { return 1.0 / std::sqrt(v); });
        const Matrix m = d_half_ * s_inv_half;
        std::vector<Matrix> gammas;
        for (int j = 0; j + 1 < r_; ++j) {
            Matrix g = m * cum[static_cast<std::size_t>(j)] * m.transpose();
            gammas.push_back(0.5 * (g + g.transpose()));
        }
        gammas.push_back(d_);
        return Path(std::move(x), std::move(gammas));
    }

    Vector project(const Vector& p) const {
        Vector q = p;
        std::vector<double> x(p.data(), p.data() + r_);
        for (double& v : x) v = std::clamp(v, 0.0, 1.0);
        std::sort(x.begin(), x.end());
        for (int j = 0; j < r_; ++j) q(j) = x[static_cast<std::size_t>(j)];
        return q;
    }

    /// Evenly spaced x and γ_j = (j/r) D.
    Vector initial() const {
        Vector p = Vector::Zero(size());
        for (int j = 0; j < r_; ++j) {
            p(j) = (j + 1.0) / (r_ + 1.0);
            for (int k = 0; k < kappa_; ++k) p(offset(j) + k * kappa_ + k) = 1.0;
        }
        return p;
    }

    Vector random(Rng& rng) const {
        std::uniform_real_distribution<double> u(0.0, 1.0);
        std::normal_distribution<double> n(0.0, 1.0);
        Vector p(size());
        for (int j = 0; j < r_; ++j) p(j) = u(rng);
        for (Eigen::Index i = r_; i < p.size(); ++i) p(i) = n(rng);
        return project(p);
    }

private:
    static constexpr double kTau = 1e-10;

    Eigen::Index offset(int j) const { return r_ + static_cast<Eigen::Index>(j) * kappa_ * kappa_; }

    Matrix factor(const Vector& p, int j) const {
        Matrix f(kappa_, kappa_);
        for (int a = 0; a < kappa_; ++a)
            for (int b = 0; b < kappa_; ++b) f(a, b) = p(offset(j) + a * kappa_ + b);
        return f;
    }

    Matrix d_;
    Matrix d_half_;
    int r_;
    int kappa_ = 1;
};

struct InnerResult {
    double value = 0.0;              // inf over λ and path at fixed D
    double value_lambda_first = 0.0; // alternation starting with the λ block
    double value_path_first = 0.0;   // alternation starting with the path block
    LambdaMatrix lambda{1};
    std::optional<Path> path;
    bool converged = false;
};

namespace detail {

inline double parisi_value(const MixedModel& model, const SpinPrior& prior, const LambdaMatrix& lambda,
                           const Matrix& d, const Path& path, const EvalSpec& spec) {
    return eval_parisi(model, prior, lambda, d, path, spec).value;
}

struct Alternation {
    double value;
    LambdaMatrix lambda;
    Vector coords;
    bool converged;
};

inline Alternation alternate(const MixedModel& model, const SpinPrior& prior, const Matrix& d,
                             const PathCoordinates& pc, Vector coords, LambdaMatrix lambda, bool lambda_first,
                             const EvalSpec& spec, const OptimizerSpec& opt) {
    double value = parisi_value(model, prior, lambda, d, pc.path(coords), spec);
    bool converged = false;
    auto lambda_step = [&] {
        const PhiStarResult ps = phi_star(model, prior, d, pc.path(coords), spec, opt, &lambda);
        lambda = ps.lambda;
    };
    auto path_step = [&] {
        auto f = [&](const Vector& p) { return parisi_value(model, prior, lambda, d, pc.path(p), spec); };
        auto fg = [&](const Vector& p, Vector& g) {
            g = fd_gradient(f, p, opt.fd_step);
            return f(p);
        };
        const DescentResult dr = gradient_descent(fg, coords, opt.path_iters, opt.step, opt.grad_tol, opt.value_tol,
                                                  [&](const Vector& p) { return pc.project(p); });
        coords = dr.x;
    };
    for (int it = 0; it < opt.block_iters; ++it) {
        if (lambda_first) {
            lambda_step();
            path_step();
        } else {
            path_step();
            lambda_step();
        }
        const double next = parisi_value(model, prior, lambda, d, pc.path(coords), spec);
        const double drop = value - next;
        value = std::min(value, next);
        if (drop <= opt.value_tol * std::max(1.0, std::abs(next))) {
            converged = true;
            break;
        }
    }
    return {value, lambda, coords, converged};
}

} // namespace detail

/// inf over λ and r-level paths ending at D of 𝒫(λ, D, path). The two blocks
/// are alternated in both orders from several starting paths; the smaller
/// value is returned and both orderings are reported.
inline InnerResult inner_infimum(const MixedModel& model, const SpinPrior& prior, const Matrix& d, int levels,
                                 const EvalSpec& spec, const OptimizerSpec& opt) {
    const PathCoordinates pc(d, levels);
    const int kappa = model.kappa();
    InnerResult out;
    out.value_lambda_first = std::numeric_limits<double>::infinity();
    out.value_path_first = std::numeric_limits<double>::infinity();
    out.value = std::numeric_limits<double>::infinity();
    const int starts = std::max(1, opt.path_starts);
    for (int s = 0; s < starts; ++s) {
        Vector coords = pc.initial();
        if (s > 0) {
            Rng rng = make_rng(opt.seed, Stream::OptimizerStart, static_cast<std::uint64_t>(s));
            coords = pc.random(rng);
        }
        for (bool lambda_first : {true, false}) {
            const detail::Alternation a =
                detail::alternate(model, prior, d, pc, coords, LambdaMatrix(kappa), lambda_first, spec, opt);
            double& slot = lambda_first ? out.value_lambda_first : out.value_path_first;
            slot = std::min(slot, a.value);
            if (a.value < out.value) {
                out.value = a.value;
                out.lambda = a.lambda;
                out.path = pc.path(a.coords);
                out.converged = a.converged;
            }
        }
    }
    return out;
}

struct OptimizeResult {
    double value = 0.0;
    Matrix d;
    Vector hull_weights;
    LambdaMatrix lambda{1};
    std::optional<Path> path;
    double value_lambda_first = 0.0;
    double value_path_first = 0.0;
    int outer_iterations = 0;
    bool converged = false;
    std::string warning;
};

/// sup over D in the constraint hull of inf over (λ, path) of 𝒫, with D
/// parametrized by hull weights and maximized by simplex-projected ascent.
inline OptimizeResult optimize(const MixedModel& model, const SpinPrior& prior, int levels, const EvalSpec& spec,
                               const OptimizerSpec& opt) {
    require(model.kappa() == prior.kappa(), "model and prior kappa differ");
    require(levels >= 1, "optimize needs r >= 1");
    const ConstraintHull hull = ConstraintHull(prior).distinct();
    const auto g = static_cast<Eigen::Index>(hull.generators().size());
    // Same starting paths at every D, so finite differences in w stay smooth.
    auto inner_at = [&](const Vector& w) { return inner_infimum(model, prior, hull.combine(w), levels, spec, opt); };

    OptimizeResult out;
    out.value = -std::numeric_limits<double>::infinity();
    auto record = [&](const Vector& w, const InnerResult& ir, int iters, bool conv) {
        if (ir.value <= out.value) return;
        out.value = ir.value;
        out.d = hull.combine(w);
        out.hull_weights = w;
        out.lambda = ir.lambda;
        out.path = ir.path;
        out.value_lambda_first = ir.value_lambda_first;
        out.value_path_first = ir.value_path_first;
        out.outer_iterations = iters;
        out.converged = conv && ir.converged;
    };

    if (g == 1) {
        const Vector w = Vector::Ones(1);
        record(w, inner_at(w), 0, true);
        return out;
    }

    // Ascent on w ↦ inner(D(w)) is descent on its negative over the simplex.
    auto neg = [&](const Vector& w) { return -inner_at(w).value; };
    auto fg = [&](const Vector& w, Vector& grad) {
        grad = fd_gradient(neg, w, opt.fd_step);
        return neg(w);
    };
    const int starts = std::max(1, opt.multistarts);
    for (int s = 0; s < starts; ++s) {
        Vector w0 = Vector::Constant(g, 1.0 / static_cast<double>(g));
        if (s > 0) {
            Rng rng = make_rng(opt.seed, Stream::OptimizerStart, 0xFFFF0000ULL + static_cast<std::uint64_t>(s));
            std::exponential_distribution<double> e(1.0);
            for (Eigen::Index i = 0; i < g; ++i) w0(i) = e(rng);
            w0 /= w0.sum();
        }
        const DescentResult dr = gradient_descent(fg, w0, opt.outer_iters, opt.step, opt.grad_tol, opt.value_tol,
                                                  [](const Vector& v) { return project_simplex(v); });
        record(dr.x, inner_at(dr.x), dr.iterations, dr.converged);
    }
    if (!out.converged) out.warning = "optimizer budget exhausted before convergence; returning best-so-far";
    return out;
}

} // namespace vecspin
