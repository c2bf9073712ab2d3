#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <vector>

#include "vecspin/errors.hpp"

namespace vecspin {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline constexpr double kPsdTol = 1e-10;
inline constexpr double kSymTol = 1e-12;

inline double sup_norm(const Matrix& a) { return a.size() == 0 ? 0.0 : a.cwiseAbs().maxCoeff(); }
inline double l1_norm(const Matrix& a) { return a.cwiseAbs().sum(); }

inline bool is_symmetric(const Matrix& a, double tol = kSymTol) {
    return a.rows() == a.cols() && sup_norm(a - a.transpose()) <= tol;
}

/// ½(a + aᵀ) into fresh storage, so `a = symmetrized(a)` is alias-safe.
inline Matrix symmetrized(const Matrix& a) { return (0.5 * (a + a.transpose())).eval(); }

inline double min_eigenvalue(const Matrix& a) {
    if (a.size() == 0) return 0.0;
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (a + a.transpose()), Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

/// Eigendecomposition with eigenvalues sorted in decreasing order; ties keep
/// the solver's original index order.
struct SortedEigen {
    Vector values;
    Matrix vectors;
};

inline SortedEigen sorted_eigen(const Matrix& a) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (a + a.transpose()));
    const Eigen::Index n = a.rows();
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    const Vector& ev = es.eigenvalues();
    std::stable_sort(order.begin(), order.end(),
                     [&](Eigen::Index i, Eigen::Index j) { return ev(i) > ev(j); });
    SortedEigen out{Vector(n), Matrix(n, n)};
    for (Eigen::Index c = 0; c < n; ++c) {
        out.values(c) = ev(order[static_cast<std::size_t>(c)]);
        out.vectors.col(c) = es.eigenvectors().col(order[static_cast<std::size_t>(c)]);
    }
    return out;
}

/// Clips eigenvalues in [-tol, 0) to zero. Throws if any eigenvalue is below -tol.
inline Matrix repair_psd(const Matrix& a, double tol, const std::string& what) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (a + a.transpose()));
    Vector ev = es.eigenvalues();
    if (ev.size() > 0 && ev.minCoeff() < -tol) {
        std::ostringstream os;
        os << what << ": matrix is not positive semidefinite (min eigenvalue " << ev.minCoeff()
           << " < -" << tol << ")";
        throw ValidationError(os.str());
    }
    if (ev.size() > 0 && ev.minCoeff() >= 0.0) return 0.5 * (a + a.transpose());
    ev = ev.cwiseMax(0.0);
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

/// Returns F with F F^T = a for symmetric PSD a, dropping null directions.
/// The column count is the numerical rank, so degenerate covariances cost nothing.
inline Matrix psd_factor(const Matrix& a, double rank_tol = 1e-14) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (a + a.transpose()));
    const Vector& ev = es.eigenvalues();
    const double scale = std::max(1.0, ev.size() ? ev.cwiseAbs().maxCoeff() : 0.0);
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < ev.size(); ++i)
        if (ev(i) > rank_tol * scale) keep.push_back(i);
    Matrix f(a.rows(), static_cast<Eigen::Index>(keep.size()));
    for (std::size_t c = 0; c < keep.size(); ++c)
        f.col(static_cast<Eigen::Index>(c)) = es.eigenvectors().col(keep[c]) * std::sqrt(ev(keep[c]));
    return f;
}

/// Symmetric PSD matrix function via eigendecomposition.
template <typename Fn>
Matrix spectral_apply(const Matrix& a, Fn&& fn) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (a + a.transpose()));
    Vector ev = es.eigenvalues().unaryExpr(fn);
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

/// Symmetric positive-semidefinite κ×κ matrix (overlaps, constraints, path values).
class GramMatrix {
public:
    GramMatrix() = default;

    explicit GramMatrix(Matrix m, double psd_tol = kPsdTol) : m_(std::move(m)) {
        if (m_.rows() != m_.cols()) throw ValidationError("Gram matrix must be square");
        if (!m_.allFinite()) throw ValidationError("Gram matrix has non-finite entries");
        if (!is_symmetric(m_)) throw ValidationError("Gram matrix is not symmetric to 1e-12");
        const double lo = min_eigenvalue(m_);
        if (lo < -psd_tol) {
            std::ostringstream os;
            os << "Gram matrix is not PSD: min eigenvalue " << lo;
            throw ValidationError(os.str());
        }
    }

    static GramMatrix zero(int kappa) { return GramMatrix(Matrix::Zero(kappa, kappa)); }

    const Matrix& matrix() const { return m_; }
    int dim() const { return static_cast<int>(m_.rows()); }
    operator const Matrix&() const { return m_; }

private:
    Matrix m_;
};

} // namespace vecspin
