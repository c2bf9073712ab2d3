#pragma once

#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "vecspin/linalg.hpp"

namespace vecspin {

struct Atom {
    Vector point;
    double weight = 0.0;
};

/// Finitely supported spin prior, optionally scaled by a total mass.
///
/// The atom weights form a probability vector. `mass` rescales the whole
/// measure (mass 2 on the two Ising atoms is the counting measure on {-1,+1});
/// every free energy and Φ value then shifts by log(mass).
class SpinPrior {
public:
    SpinPrior(std::vector<Atom> atoms, double mass = 1.0) : atoms_(std::move(atoms)), mass_(mass) {
        require(!atoms_.empty(), "prior needs at least one atom");
        require(std::isfinite(mass_) && mass_ > 0.0, "prior mass must be positive and finite");
        const Eigen::Index kappa = atoms_.front().point.size();
        require(kappa >= 1, "prior atoms must have dimension >= 1");
        double total = 0.0;
        for (std::size_t a = 0; a < atoms_.size(); ++a) {
            const Atom& atom = atoms_[a];
            if (atom.point.size() != kappa) {
                std::ostringstream os;
                os << "atom " << a << " has dimension " << atom.point.size() << ", expected " << kappa;
                throw ValidationError(os.str());
            }
            require(atom.point.allFinite(), "atom points must be finite");
            if (!(atom.weight > 0.0) || !std::isfinite(atom.weight)) {
                std::ostringstream os;
                os << "atom " << a << " weight must be positive, got " << atom.weight;
                throw ValidationError(os.str());
            }
            total += atom.weight;
        }
        if (std::abs(total - 1.0) > 1e-12) {
            std::ostringstream os;
            os.precision(17);
            os << "atom weights must sum to 1 within 1e-12, got " << total;
            throw ValidationError(os.str());
        }
    }

    /// Ising prior: ±1 with probability 1/2 each.
    static SpinPrior ising(double mass = 1.0) {
        return SpinPrior({{Vector::Constant(1, 1.0), 0.5}, {Vector::Constant(1, -1.0), 0.5}}, mass);
    }

    /// Uniform on the standard basis e_1..e_κ (Potts).
    static SpinPrior potts(int kappa) {
        std::vector<Atom> atoms;
        for (int k = 0; k < kappa; ++k) atoms.push_back({Vector::Unit(kappa, k), 1.0 / kappa});
        return SpinPrior(std::move(atoms));
    }

    /// Uniform on {-1,+1}^κ.
    static SpinPrior hypercube(int kappa) {
        std::vector<Atom> atoms;
        const int n = 1 << kappa;
        for (int mask = 0; mask < n; ++mask) {
            Vector p(kappa);
            for (int k = 0; k < kappa; ++k) p(k) = (mask >> k) & 1 ? -1.0 : 1.0;
            atoms.push_back({p, 1.0 / n});
        }
        return SpinPrior(std::move(atoms));
    }

    int kappa() const { return static_cast<int>(atoms_.front().point.size()); }
    std::size_t size() const { return atoms_.size(); }
    const std::vector<Atom>& atoms() const { return atoms_; }
    const Atom& atom(std::size_t i) const { return atoms_[i]; }
    double mass() const { return mass_; }
    double log_mass() const { return std::log(mass_); }

    /// c = max over atoms of max |coordinate|.
    double support_bound() const {
        double c = 0.0;
        for (const auto& a : atoms_) c = std::max(c, a.point.cwiseAbs().maxCoeff());
        return c;
    }

private:
    std::vector<Atom> atoms_;
    double mass_;
};

/// Generators σσ^T of the convex hull of self-overlaps, one per atom.
class ConstraintHull {
public:
    explicit ConstraintHull(const SpinPrior& prior) {
        for (const auto& a : prior.atoms()) generators_.push_back(a.point * a.point.transpose());
    }

    explicit ConstraintHull(std::vector<Matrix> generators) : generators_(std::move(generators)) {
        require(!generators_.empty(), "hull needs at least one generator");
    }

    const std::vector<Matrix>& generators() const { return generators_; }
    int kappa() const { return static_cast<int>(generators_.front().rows()); }

    /// Generators with exact duplicates removed (e.g. ±σ give the same σσ^T).
    ConstraintHull distinct() const {
        std::vector<Matrix> out;
        for (const auto& g : generators_) {
            bool seen = false;
            for (const auto& h : out)
                if (sup_norm(g - h) <= 1e-14) seen = true;
            if (!seen) out.push_back(g);
        }
        return ConstraintHull(std::move(out));
    }

    Matrix combine(const Vector& w) const {
        Matrix d = Matrix::Zero(kappa(), kappa());
        for (std::size_t j = 0; j < generators_.size(); ++j) d += w(static_cast<Eigen::Index>(j)) * generators_[j];
        return d;
    }

private:
    std::vector<Matrix> generators_;
};

namespace detail {

// Lawson–Hanson active-set non-negative least squares: min ||E w - f||, w >= 0.
inline Vector nnls(const Matrix& e, const Vector& f, int max_iter = 500) {
    const Eigen::Index n = e.cols();
    Vector w = Vector::Zero(n);
    std::vector<bool> passive(static_cast<std::size_t>(n), false);
    const double tol = 1e-14 * std::max(1.0, e.cwiseAbs().maxCoeff()) * static_cast<double>(n + e.rows());
    for (int outer = 0; outer < max_iter; ++outer) {
        Vector grad = e.transpose() * (f - e * w);
        Eigen::Index best = -1;
        double best_val = tol;
        for (Eigen::Index j = 0; j < n; ++j)
            if (!passive[static_cast<std::size_t>(j)] && grad(j) > best_val) {
                best_val = grad(j);
                best = j;
            }
        if (best < 0) break;
        passive[static_cast<std::size_t>(best)] = true;
        for (int inner = 0; inner < max_iter; ++inner) {
            std::vector<Eigen::Index> idx;
            for (Eigen::Index j = 0; j < n; ++j)
                if (passive[static_cast<std::size_t>(j)]) idx.push_back(j);
            Matrix ep(e.rows(), static_cast<Eigen::Index>(idx.size()));
            for (std::size_t c = 0; c < idx.size(); ++c) ep.col(static_cast<Eigen::Index>(c)) = e.col(idx[c]);
            Vector zp = ep.completeOrthogonalDecomposition().solve(f);
            Vector z = Vector::Zero(n);
            for (std::size_t c = 0; c < idx.size(); ++c) z(idx[c]) = zp(static_cast<Eigen::Index>(c));
            bool feasible = true;
            for (auto j : idx)
                if (z(j) <= 0.0) feasible = false;
            if (feasible) {
                w = z;
                break;
            }
            double alpha = 1.0;
            for (auto j : idx)
                if (z(j) <= 0.0) alpha = std::min(alpha, w(j) / (w(j) - z(j)));
            w += alpha * (z - w);
            for (auto j : idx)
                if (w(j) <= 1e-15) {
                    w(j) = 0.0;
                    passive[static_cast<std::size_t>(j)] = false;
                }
        }
    }
    return w;
}

} // namespace detail

struct HullMembership {
    bool member = false;
    Vector weights;          // certificate when member
    double max_violation = 0.0;
    std::string violated;    // description of the worst constraint when not a member
};

/// Decides D = Σ_j w_j G_j with w >= 0, Σ w = 1 (entrywise within tol).
inline HullMembership hull_membership(const ConstraintHull& hull, const Matrix& d, double tol = 1e-8) {
    const int kappa = hull.kappa();
    require(d.rows() == kappa && d.cols() == kappa, "hull_membership: D has wrong shape");
    const auto& gens = hull.generators();
    const Eigen::Index rows = kappa * (kappa + 1) / 2 + 1;
    Matrix e(rows, static_cast<Eigen::Index>(gens.size()));
    Vector f(rows);
    for (std::size_t j = 0; j < gens.size(); ++j) {
        Eigen::Index r = 0;
        for (int k = 0; k < kappa; ++k)
            for (int kp = k; kp < kappa; ++kp) e(r++, static_cast<Eigen::Index>(j)) = gens[j](k, kp);
        e(r, static_cast<Eigen::Index>(j)) = 1.0;
    }
    {
        Eigen::Index r = 0;
        for (int k = 0; k < kappa; ++k)
            for (int kp = k; kp < kappa; ++kp) f(r++) = d(k, kp);
        f(r) = 1.0;
    }
    HullMembership out;
    out.weights = detail::nnls(e, f);
    const Matrix recon = hull.combine(out.weights);
    double worst = std::abs(out.weights.sum() - 1.0);
    std::string worst_name = "sum of weights = 1";
    for (int k = 0; k < kappa; ++k)
        for (int kp = k; kp < kappa; ++kp) {
            const double v = std::abs(recon(k, kp) - d(k, kp));
            if (v > worst) {
                worst = v;
                std::ostringstream os;
                os << "entry (" << k + 1 << "," << kp + 1 << ")";
                worst_name = os.str();
            }
        }
    if (!is_symmetric(d, tol)) {
        worst = std::max(worst, sup_norm(d - d.transpose()));
        worst_name = "symmetry";
    }
    out.max_violation = worst;
    out.member = worst <= tol;
    if (!out.member) out.violated = worst_name;
    return out;
}

/// (1/N) Σ_i σ_i σ_i^T for a configuration stored as N rows of κ coordinates.
inline Matrix self_overlap(const Matrix& config) {
    require(config.rows() >= 1, "configuration must have at least one spin");
    return config.transpose() * config / static_cast<double>(config.rows());
}

/// (1/N) Σ_i σ^a_i (σ^b_i)^T.
inline Matrix overlap(const Matrix& a, const Matrix& b) {
    require(a.rows() == b.rows() && a.cols() == b.cols(), "overlap: configuration shapes differ");
    require(a.rows() >= 1, "configuration must have at least one spin");
    return a.transpose() * b / static_cast<double>(a.rows());
}

struct TruncatedConstraint {
    Matrix d_eps;
    int m = 0;             // number of eigenvalues kept (>= sqrt(eps))
    Matrix q;              // eigenvectors, columns sorted by decreasing eigenvalue
    Vector eigenvalues;    // sorted decreasing
};

/// D_ε = Q Λ_ε Q^T with eigenvalues below sqrt(ε) removed.
inline TruncatedConstraint truncate_constraint(const Matrix& d, double eps) {
    require(eps > 0.0, "epsilon must be positive");
    GramMatrix checked(d);
    (void)checked;
    SortedEigen se = sorted_eigen(d);
    TruncatedConstraint out;
    out.q = se.vectors;
    out.eigenvalues = se.values;
    const double cut = std::sqrt(eps);
    Vector kept = Vector::Zero(d.rows());
    for (Eigen::Index i = 0; i < se.values.size(); ++i) {
        if (se.values(i) >= cut) {
            kept(i) = se.values(i);
            ++out.m;
        }
    }
    out.d_eps = se.vectors * kept.asDiagonal() * se.vectors.transpose();
    out.d_eps = symmetrized(out.d_eps);
    return out;
}

/// Linear map A with A R A^T = D_ε and small distortion tr((A−I)R(A−I)^T).
struct ModifierMatrix {
    Matrix a;
    Matrix source_overlap;
    Matrix target;         // D_ε
    double epsilon = 0.0;
    int m = 0;
    bool in_ball = true;   // ||R − D||_∞ < ε
    double residual = 0.0; // ||A R A^T − D_ε||_∞
    double distortion = 0.0; // tr((A−I) R (A−I)^T)
};

inline constexpr double kModifierTol = 1e-9;

/// Builds A(R): rotate into the eigenbasis of D, whiten the top-m block of
/// the rotated R against Λ_m, take the inverse square root, rotate back.
inline ModifierMatrix build_modifier(const Matrix& r, const Matrix& d, double eps) {
    require(eps > 0.0, "epsilon must be positive");
    GramMatrix r_checked(r);
    GramMatrix d_checked(d);
    (void)r_checked;
    (void)d_checked;
    require(r.rows() == d.rows(), "R and D shapes differ");
    const Eigen::Index kappa = d.rows();

    TruncatedConstraint tc = truncate_constraint(d, eps);
    ModifierMatrix out;
    out.source_overlap = r;
    out.target = tc.d_eps;
    out.epsilon = eps;
    out.m = tc.m;
    out.in_ball = sup_norm(r - d) < eps;

    Matrix a_rot = Matrix::Zero(kappa, kappa);
    if (tc.m > 0) {
        const Eigen::Index m = tc.m;
        const Matrix rotated = tc.q.transpose() * r * tc.q;
        const Matrix block = rotated.topLeftCorner(m, m);
        const Vector lam = tc.eigenvalues.head(m);
        const Vector lam_inv_sqrt = lam.cwiseSqrt().cwiseInverse();
        Matrix whitened = lam_inv_sqrt.asDiagonal() * block * lam_inv_sqrt.asDiagonal();
        whitened = symmetrized(whitened);
        Eigen::SelfAdjointEigenSolver<Matrix> es(whitened);
        if (es.eigenvalues().minCoeff() <= 1e-14) {
            std::ostringstream os;
            os << "modifier: whitened overlap block is singular (min eigenvalue " << es.eigenvalues().minCoeff()
               << "); R is too far from D for epsilon=" << eps;
            throw NumericalError(os.str());
        }
        const Matrix inv_sqrt = es.eigenvectors() * es.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() *
                                es.eigenvectors().transpose();
        const Matrix b = lam.cwiseSqrt().asDiagonal() * inv_sqrt * lam_inv_sqrt.asDiagonal();
        a_rot.topLeftCorner(m, m) = b;
    }
    out.a = tc.q * a_rot * tc.q.transpose();
    out.residual = sup_norm(out.a * r * out.a.transpose() - tc.d_eps);
    const Matrix dev = out.a - Matrix::Identity(kappa, kappa);
    out.distortion = (dev * r * dev.transpose()).trace();
    if (out.residual > kModifierTol) {
        std::ostringstream os;
        os << "modifier residual ||A R A^T - D_eps||_inf = " << out.residual << " exceeds " << kModifierTol;
        throw NumericalError(os.str());
    }
    return out;
}

/// ε ||A(R1) − A(R2)||_∞ / ||R1 − R2||_∞.
inline double modifier_lipschitz_ratio(const Matrix& r1, const Matrix& r2, const Matrix& d, double eps) {
    const double dr = sup_norm(r1 - r2);
    if (dr == 0.0) throw ValidationError("modifier_lipschitz_ratio: R1 == R2, ratio undefined");
    const ModifierMatrix a1 = build_modifier(r1, d, eps);
    const ModifierMatrix a2 = build_modifier(r2, d, eps);
    return eps * sup_norm(a1.a - a2.a) / dr;
}

} // namespace vecspin
