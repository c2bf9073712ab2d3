#pragma once

#include <cmath>
#include <vector>

#include "vecspin/linalg.hpp"

namespace vecspin {

/// Gauss–Hermite rule for the standard normal density: Σ w_i f(x_i) ≈ E f(Z).
struct GaussHermite {
    std::vector<double> nodes;
    std::vector<double> weights;
};

/// Golub–Welsch: nodes are eigenvalues of the Jacobi matrix of the
/// probabilists' Hermite polynomials (off-diagonal sqrt(k)), weights are the
/// squared first eigenvector components. Exact for polynomials of degree 2n−1.
inline GaussHermite gauss_hermite(int n) {
    require(n >= 1, "Gauss-Hermite order must be >= 1");
    Matrix jac = Matrix::Zero(n, n);
    for (int k = 1; k < n; ++k) {
        jac(k - 1, k) = std::sqrt(static_cast<double>(k));
        jac(k, k - 1) = jac(k - 1, k);
    }
    Eigen::SelfAdjointEigenSolver<Matrix> es(jac);
    GaussHermite out;
    out.nodes.resize(static_cast<std::size_t>(n));
    out.weights.resize(static_cast<std::size_t>(n));
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        out.nodes[static_cast<std::size_t>(i)] = es.eigenvalues()(i);
        const double v = es.eigenvectors()(0, i);
        out.weights[static_cast<std::size_t>(i)] = v * v;
        total += v * v;
    }
    for (auto& w : out.weights) w /= total;
    // Symmetrize against round-off so odd moments vanish exactly.
    for (int i = 0; i < n / 2; ++i) {
        const auto a = static_cast<std::size_t>(i);
        const auto b = static_cast<std::size_t>(n - 1 - i);
        const double x = 0.5 * (out.nodes[b] - out.nodes[a]);
        const double w = 0.5 * (out.weights[a] + out.weights[b]);
        out.nodes[a] = -x;
        out.nodes[b] = x;
        out.weights[a] = out.weights[b] = w;
    }
    if (n % 2 == 1) out.nodes[static_cast<std::size_t>(n / 2)] = 0.0;
    return out;
}

/// Tensor-product rule in `dim` standard normal coordinates.
struct TensorRule {
    Matrix points;              // dim x count
    std::vector<double> log_weights;
};

inline TensorRule tensor_rule(const GaussHermite& gh, int dim) {
    const std::size_t n = gh.nodes.size();
    std::size_t count = 1;
    for (int d = 0; d < dim; ++d) count *= n;
    TensorRule out;
    out.points.resize(dim, static_cast<Eigen::Index>(count));
    out.log_weights.resize(count);
    std::vector<std::size_t> idx(static_cast<std::size_t>(dim), 0);
    for (std::size_t c = 0; c < count; ++c) {
        double lw = 0.0;
        for (int d = 0; d < dim; ++d) {
            out.points(d, static_cast<Eigen::Index>(c)) = gh.nodes[idx[static_cast<std::size_t>(d)]];
            lw += std::log(gh.weights[idx[static_cast<std::size_t>(d)]]);
        }
        out.log_weights[c] = lw;
        for (int d = 0; d < dim; ++d) {
            if (++idx[static_cast<std::size_t>(d)] < n) break;
            idx[static_cast<std::size_t>(d)] = 0;
        }
    }
    return out;
}

} // namespace vecspin
