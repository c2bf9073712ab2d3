#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <cstdint>
#include <vector>

#include "vecspin/linalg.hpp"

namespace vecspin {

struct OptimizerSpec {
    int max_iter = 500;
    double step = 0.1;          // initial step for backtracking
    int multistarts = 8;        // outer (hull-weight) starts
    double grad_tol = 1e-9;
    double fd_step = 1e-4;      // central differences on the MC backend
    int outer_iters = 40;       // hull-weight ascent steps
    int block_iters = 30;       // λ / path alternations
    int path_iters = 25;        // path descent steps per alternation
    int path_starts = 2;
    double value_tol = 1e-10;
    std::uint64_t seed = 0;
};

struct DescentResult {
    Vector x;
    double value = 0.0;
    double grad_norm = 0.0;
    int iterations = 0;
    bool converged = false;
};

using Projection = std::function<Vector(const Vector&)>;

/// Projected gradient descent with Armijo backtracking along the projection
/// arc. The accepted step doubles after each success so the step size tracks
/// the local curvature. `fg` returns f(x) and writes ∇f(x); an empty
/// `project` means the problem is unconstrained.
inline DescentResult gradient_descent(const std::function<double(const Vector&, Vector&)>& fg, Vector x0,
                                      int max_iter, double step, double grad_tol, double value_tol = 0.0,
                                      const Projection& project = {}) {
    DescentResult out;
    out.x = project ? project(x0) : std::move(x0);
    Vector g;
    out.value = fg(out.x, g);
    // Projected-gradient norm: the stationarity measure for the constrained problem.
    auto pg_norm = [&](const Vector& x, const Vector& grad) {
        if (grad.size() == 0) return 0.0;
        if (!project) return grad.cwiseAbs().maxCoeff();
        return (x - project(x - grad)).cwiseAbs().maxCoeff();
    };
    double t = step;
    int stalled = 0;
    for (int it = 0; it < max_iter; ++it) {
        out.iterations = it;
        out.grad_norm = pg_norm(out.x, g);
        if (out.grad_norm <= grad_tol) {
            out.converged = true;
            return out;
        }
        bool accepted = false;
        for (int half = 0; half < 60; ++half) {
            Vector trial = out.x - t * g;
            if (project) trial = project(trial);
            const double decrease = project ? (out.x - trial).squaredNorm() / t : t * g.squaredNorm();
            Vector tg;
            const double tv = fg(trial, tg);
            if (std::isfinite(tv) && tv <= out.value - 1e-4 * decrease) {
                const double drop = out.value - tv;
                out.x = std::move(trial);
                out.value = tv;
                g = std::move(tg);
                accepted = true;
                t *= 2.0;
                stalled = drop <= value_tol * std::max(1.0, std::abs(tv)) ? stalled + 1 : 0;
                break;
            }
            t *= 0.5;
        }
        if (!accepted || stalled >= 3) {
            // No descent step exists at machine precision, or progress has stalled.
            out.grad_norm = pg_norm(out.x, g);
            out.iterations = it + 1;
            out.converged = stalled >= 3 || out.grad_norm <= std::max(grad_tol, 1e-6);
            return out;
        }
    }
    out.grad_norm = pg_norm(out.x, g);
    out.iterations = max_iter;
    out.converged = out.grad_norm <= grad_tol;
    return out;
}

/// Central finite-difference gradient.
inline Vector fd_gradient(const std::function<double(const Vector&)>& f, const Vector& x, double h) {
    Vector g(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        Vector a = x, b = x;
        a(i) += h;
        b(i) -= h;
        g(i) = (f(a) - f(b)) / (2.0 * h);
    }
    return g;
}

/// Euclidean projection onto the probability simplex (sort-and-threshold).
inline Vector project_simplex(const Vector& v) {
    const Eigen::Index n = v.size();
    std::vector<double> u(v.data(), v.data() + n);
    std::sort(u.begin(), u.end(), std::greater<>());
    double cum = 0.0, tau = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        cum += u[static_cast<std::size_t>(i)];
        const double t = (cum - 1.0) / static_cast<double>(i + 1);
        if (u[static_cast<std::size_t>(i)] - t > 0.0) tau = t;
    }
    return (v.array() - tau).cwiseMax(0.0).matrix();
}

} // namespace vecspin
