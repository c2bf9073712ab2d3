#pragma once

#include <cmath>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "vecspin/linalg.hpp"

namespace vecspin {

/// Mixed even p-spin model with κ coordinates.
///
/// Coordinate k carries the inverse temperatures β_p(k). All coordinates
/// share one Gaussian coupling tensor per p, which is what produces the
/// cross terms ξ_{k,k'}(x) = Σ_p β_p(k) β_p(k') x^p in the covariance.
/// Only even p are accepted: the Schur product theorem then makes ξ'(γ)
/// and θ(γ) monotone in the PSD order, which the path machinery relies on.
class MixedModel {
public:
    MixedModel(int kappa, std::map<int, Vector> coefficients)
        : kappa_(kappa), beta_(std::move(coefficients)) {
        require(kappa_ >= 1, "kappa must be a positive integer");
        for (const auto& [p, b] : beta_) {
            if (p < 2 || p % 2 != 0) {
                std::ostringstream os;
                os << "mixture degree p=" << p << " must be even and >= 2";
                throw ValidationError(os.str());
            }
            if (b.size() != kappa_) {
                std::ostringstream os;
                os << "beta_" << p << " has length " << b.size() << ", expected kappa=" << kappa_;
                throw ValidationError(os.str());
            }
            if (!b.allFinite() || b.minCoeff() < 0.0) {
                std::ostringstream os;
                os << "beta_" << p << " must have finite non-negative entries";
                throw ValidationError(os.str());
            }
        }
    }

    /// Single-coordinate convenience constructor.
    static MixedModel scalar(std::map<int, double> betas) {
        std::map<int, Vector> c;
        for (const auto& [p, b] : betas) c[p] = Vector::Constant(1, b);
        return MixedModel(1, std::move(c));
    }

    int kappa() const { return kappa_; }
    const std::map<int, Vector>& coefficients() const { return beta_; }

    int p_max() const {
        int out = 0;
        for (const auto& [p, b] : beta_)
            if (b.cwiseAbs().maxCoeff() > 0.0) out = p;
        return out;
    }

    bool is_trivial() const { return p_max() == 0; }

    double xi(int k, int kp, double x) const {
        check_index(k, kp);
        double s = 0.0;
        for (const auto& [p, b] : beta_) s += b(k) * b(kp) * std::pow(x, p);
        return s;
    }

    double xi_prime(int k, int kp, double x) const {
        check_index(k, kp);
        double s = 0.0;
        for (const auto& [p, b] : beta_) s += b(k) * b(kp) * p * std::pow(x, p - 1);
        return s;
    }

    double xi_second(int k, int kp, double x) const {
        check_index(k, kp);
        double s = 0.0;
        for (const auto& [p, b] : beta_) s += b(k) * b(kp) * p * (p - 1) * std::pow(x, p - 2);
        return s;
    }

    /// θ = x ξ' − ξ, summed directly as Σ β β (p−1) x^p.
    double theta(int k, int kp, double x) const {
        check_index(k, kp);
        double s = 0.0;
        for (const auto& [p, b] : beta_) s += b(k) * b(kp) * (p - 1) * std::pow(x, p);
        return s;
    }

    // Entrywise matrix forms. Inputs need not be PSD (off-diagonal replica
    // overlap blocks are not).
    Matrix xi(const Matrix& a) const { return entrywise(a, &MixedModel::xi); }
    Matrix xi_prime(const Matrix& a) const { return entrywise(a, &MixedModel::xi_prime); }
    Matrix theta(const Matrix& a) const { return entrywise(a, &MixedModel::theta); }

    /// ξ'(γ) = Σ_p p γ^{∘(p−1)} ∘ (β_p β_p^T).
    Matrix xi_prime_hadamard(const Matrix& g) const {
        check_shape(g);
        Matrix out = Matrix::Zero(kappa_, kappa_);
        for (const auto& [p, b] : beta_)
            out += p * hadamard_power(g, p - 1).cwiseProduct(b * b.transpose());
        return out;
    }

    /// θ(γ) = Σ_p (p−1) γ^{∘p} ∘ (β_p β_p^T).
    Matrix theta_hadamard(const Matrix& g) const {
        check_shape(g);
        Matrix out = Matrix::Zero(kappa_, kappa_);
        for (const auto& [p, b] : beta_)
            out += (p - 1) * hadamard_power(g, p).cwiseProduct(b * b.transpose());
        return out;
    }

    /// Warnings for coefficients above (2c)^{-p}, c the prior support bound.
    std::vector<std::string> coefficient_warnings(double support_bound) const {
        std::vector<std::string> out;
        if (support_bound <= 0.0) return out;
        for (const auto& [p, b] : beta_) {
            const double cap = std::pow(2.0 * support_bound, -p);
            for (int k = 0; k < kappa_; ++k) {
                if (b(k) > cap) {
                    std::ostringstream os;
                    os << "beta_" << p << "(" << k + 1 << ")=" << b(k) << " exceeds (2c)^-p=" << cap
                       << " for c=" << support_bound;
                    out.push_back(os.str());
                }
            }
        }
        return out;
    }

private:
    void check_index(int k, int kp) const {
        if (k < 0 || kp < 0 || k >= kappa_ || kp >= kappa_) {
            std::ostringstream os;
            os << "coordinate index (" << k << "," << kp << ") out of range for kappa=" << kappa_;
            throw ValidationError(os.str());
        }
    }

    void check_shape(const Matrix& a) const {
        if (a.rows() != kappa_ || a.cols() != kappa_) {
            std::ostringstream os;
            os << "matrix shape " << a.rows() << "x" << a.cols() << " does not match kappa=" << kappa_;
            throw ValidationError(os.str());
        }
    }

    static Matrix hadamard_power(const Matrix& g, int q) {
        return g.unaryExpr([q](double v) { return std::pow(v, q); });
    }

    Matrix entrywise(const Matrix& a, double (MixedModel::*fn)(int, int, double) const) const {
        check_shape(a);
        Matrix out(kappa_, kappa_);
        for (int k = 0; k < kappa_; ++k)
            for (int kp = 0; kp < kappa_; ++kp) out(k, kp) = (this->*fn)(k, kp, a(k, kp));
        return out;
    }

    int kappa_;
    std::map<int, Vector> beta_;
};

/// Σ_{k,k'} A_{k,k'}.
inline double sum_all(const Matrix& a) { return a.sum(); }

/// Cov(H_N(σ¹), H_N(σ²)) / N as a function of the overlap matrix R_{1,2}.
inline double hamiltonian_covariance(const MixedModel& model, const Matrix& overlap) {
    return sum_all(model.xi(overlap));
}

} // namespace vecspin
