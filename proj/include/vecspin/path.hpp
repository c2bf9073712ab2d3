#pragma once

#include <algorithm>
#include <sstream>
#include <vector>

#include "vecspin/linalg.hpp"
#include "vecspin/mixing.hpp"

namespace vecspin {

/// Lagrange multipliers λ_{k,k'} for k <= k', stored row-major over the
/// upper triangle: (1,1), (1,2), ..., (1,κ), (2,2), ...
class LambdaMatrix {
public:
    explicit LambdaMatrix(int kappa) : kappa_(kappa), c_(Vector::Zero(kappa * (kappa + 1) / 2)) {
        require(kappa >= 1, "kappa must be >= 1");
    }

    LambdaMatrix(int kappa, Vector coeffs) : kappa_(kappa), c_(std::move(coeffs)) {
        require(kappa >= 1, "kappa must be >= 1");
        if (c_.size() != kappa * (kappa + 1) / 2) {
            std::ostringstream os;
            os << "lambda needs kappa(kappa+1)/2 = " << kappa * (kappa + 1) / 2 << " entries, got " << c_.size();
            throw ValidationError(os.str());
        }
        require(c_.allFinite(), "lambda entries must be finite");
    }

    int kappa() const { return kappa_; }
    Eigen::Index size() const { return c_.size(); }
    const Vector& coeffs() const { return c_; }
    Vector& coeffs() { return c_; }

    Eigen::Index index(int k, int kp) const {
        if (k > kp) std::swap(k, kp);
        return static_cast<Eigen::Index>(k * kappa_ - k * (k - 1) / 2 + (kp - k));
    }

    double operator()(int k, int kp) const { return c_(index(k, kp)); }

    /// Σ_{k<=k'} λ_{k,k'} σ(k) σ(k').
    double quadratic(const Vector& s) const {
        double out = 0.0;
        Eigen::Index i = 0;
        for (int k = 0; k < kappa_; ++k)
            for (int kp = k; kp < kappa_; ++kp) out += c_(i++) * s(k) * s(kp);
        return out;
    }

    /// Σ_{k<=k'} λ_{k,k'} D_{k,k'}.
    double pair(const Matrix& d) const {
        double out = 0.0;
        Eigen::Index i = 0;
        for (int k = 0; k < kappa_; ++k)
            for (int kp = k; kp < kappa_; ++kp) out += c_(i++) * d(k, kp);
        return out;
    }

    /// Upper-triangle vector of a matrix in the same layout.
    static Vector upper(const Matrix& d) {
        const int kappa = static_cast<int>(d.rows());
        Vector out(kappa * (kappa + 1) / 2);
        Eigen::Index i = 0;
        for (int k = 0; k < kappa; ++k)
            for (int kp = k; kp < kappa; ++kp) out(i++) = d(k, kp);
        return out;
    }

    double l1() const { return c_.cwiseAbs().sum(); }

private:
    int kappa_;
    Vector c_;
};

/// Discrete monotone path: x_0 <= ... <= x_{r-1} in [0,1] (x_{-1} = 0,
/// x_r = 1 implicit) and Gram matrices 0 = γ_0 <= γ_1 <= ... <= γ_r = D.
/// The path value is γ_j on (x_{j-1}, x_j].
class Path {
public:
    /// `x` holds x_0..x_{r-1}; `gammas` holds γ_1..γ_r.
    Path(std::vector<double> x, std::vector<Matrix> gammas, double psd_tol = kPsdTol)
        : x_(std::move(x)), gammas_(std::move(gammas)) {
        require(!x_.empty(), "path needs r >= 1 levels");
        if (gammas_.size() != x_.size()) {
            std::ostringstream os;
            os << "path has " << x_.size() << " x-values but " << gammas_.size() << " gammas (need r each)";
            throw ValidationError(os.str());
        }
        double prev = 0.0;
        for (std::size_t j = 0; j < x_.size(); ++j) {
            if (!(x_[j] >= 0.0 && x_[j] <= 1.0)) {
                std::ostringstream os;
                os << "x_" << j << "=" << x_[j] << " outside [0,1]";
                throw ValidationError(os.str());
            }
            if (x_[j] < prev) {
                std::ostringstream os;
                os << "x sequence must be non-decreasing (x_" << j << "=" << x_[j] << " < " << prev << ")";
                throw ValidationError(os.str());
            }
            prev = x_[j];
        }
        const Eigen::Index kappa = gammas_.front().rows();
        require(kappa >= 1, "gamma matrices must be non-empty");
        zero_ = Matrix::Zero(kappa, kappa);
        for (std::size_t j = 0; j < gammas_.size(); ++j) {
            const Matrix& g = gammas_[j];
            if (g.rows() != kappa || g.cols() != kappa) throw ValidationError("gamma matrices must all be kappa x kappa");
            if (!g.allFinite() || !is_symmetric(g)) {
                std::ostringstream os;
                os << "gamma_" << j + 1 << " must be finite and symmetric";
                throw ValidationError(os.str());
            }
            const Matrix& below = j == 0 ? zero_ : gammas_[j - 1];
            const double lo = min_eigenvalue(g - below);
            if (lo < -psd_tol) {
                std::ostringstream os;
                os << "path is not monotone: gamma_" << j + 1 << " - gamma_" << j << " has eigenvalue " << lo;
                throw ValidationError(os.str());
            }
        }
    }

    int levels() const { return static_cast<int>(x_.size()); }
    int kappa() const { return static_cast<int>(zero_.rows()); }

    /// x_j for j in [-1, r].
    double x(int j) const {
        if (j < 0) return 0.0;
        if (j >= levels()) return 1.0;
        return x_[static_cast<std::size_t>(j)];
    }

    /// γ_j for j in [0, r].
    const Matrix& gamma(int j) const { return j <= 0 ? zero_ : gammas_[static_cast<std::size_t>(j - 1)]; }

    const Matrix& endpoint() const { return gammas_.back(); }
    const std::vector<double>& xs() const { return x_; }
    const std::vector<Matrix>& gammas() const { return gammas_; }

    /// π(t) for t in [0,1]; π(0) = 0.
    const Matrix& at(double t) const {
        if (t <= 0.0) return zero_;
        for (int j = 0; j <= levels(); ++j)
            if (t <= x(j)) return gamma(j);
        return endpoint();
    }

private:
    std::vector<double> x_;
    std::vector<Matrix> gammas_;
    Matrix zero_;
};

/// Covariances ξ'(γ_j) − ξ'(γ_{j−1}) for j = 1..r, with round-off repair.
inline std::vector<Matrix> increments(const MixedModel& model, const Path& path, double psd_tol = kPsdTol) {
    require(model.kappa() == path.kappa(), "model and path kappa differ");
    std::vector<Matrix> out;
    out.reserve(static_cast<std::size_t>(path.levels()));
    Matrix prev = model.xi_prime(path.gamma(0));
    for (int j = 1; j <= path.levels(); ++j) {
        Matrix cur = model.xi_prime(path.gamma(j));
        std::ostringstream what;
        what << "increment " << j;
        out.push_back(repair_psd(cur - prev, psd_tol, what.str()));
        prev = std::move(cur);
    }
    return out;
}

/// ∫_0^1 ||π1(x) − π2(x)||_1 dx, exact for step paths.
inline double path_distance(const Path& a, const Path& b) {
    require(a.kappa() == b.kappa(), "paths have different kappa");
    std::vector<double> cuts{0.0, 1.0};
    for (double v : a.xs()) cuts.push_back(v);
    for (double v : b.xs()) cuts.push_back(v);
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
        const double lo = cuts[i];
        const double hi = cuts[i + 1];
        if (hi <= lo) continue;
        const double mid = 0.5 * (lo + hi);
        total += (hi - lo) * l1_norm(a.at(mid) - b.at(mid));
    }
    return total;
}

/// The deterministic θ-correction ½ Σ_{j<r} x_j Sum(θ(γ_{j+1}) − θ(γ_j)).
inline double theta_correction(const MixedModel& model, const Path& path) {
    double s = 0.0;
    for (int j = 0; j < path.levels(); ++j)
        s += path.x(j) * sum_all(model.theta(path.gamma(j + 1)) - model.theta(path.gamma(j)));
    return 0.5 * s;
}

/// Same quantity in rearranged form ½ Sum(θ(D)) − ½ ∫ Sum(θ(π(x))) dx.
inline double theta_correction_rearranged(const MixedModel& model, const Path& path) {
    double integral = 0.0;
    for (int j = 0; j <= path.levels(); ++j)
        integral += (path.x(j) - path.x(j - 1)) * sum_all(model.theta(path.gamma(j)));
    return 0.5 * sum_all(model.theta(path.endpoint())) - 0.5 * integral;
}

} // namespace vecspin
