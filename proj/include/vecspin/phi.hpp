#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "vecspin/linalg.hpp"
#include "vecspin/mixing.hpp"
#include "vecspin/path.hpp"
#include "vecspin/prior.hpp"
#include "vecspin/quadrature.hpp"
#include "vecspin/random.hpp"

namespace vecspin {

enum class Backend { Quadrature, MonteCarlo };

inline const char* to_string(Backend b) { return b == Backend::Quadrature ? "quadrature" : "mc"; }

struct EvalSpec {
    Backend backend = Backend::Quadrature;
    int nodes_per_level = 16;        // Gauss–Hermite nodes per scalar dimension
    int samples_per_level = 1000;    // MC draws per tree node
    int replications = 20;           // independent MC replicas for the standard error
    std::uint64_t seed = 0;
    bool antithetic = false;
    int dim_cap = 10;                // quadrature requires κ·r <= dim_cap
    double node_budget = 5e7;        // quadrature leaf-evaluation budget
    int threads = 1;
};

/// Optional extra terms inside the single-site integral.
struct InnerTerms {
    Vector field;                 // external field h: adds ⟨h, σ⟩ (empty = off)
    double smoothing_delta = 0.0; // independent N(0, δ) shift per λ-component
    int smoothing_nodes = 16;
};

inline constexpr double kZeroX = 1e-8;

namespace detail {

inline double log_sum_exp(const double* v, std::size_t n) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) m = std::max(m, v[i]);
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += std::exp(v[i] - m);
    return m + std::log(s);
}

/// Precomputed single-site integrand: log Σ_a exp(c_a + ⟨σ_a, z⟩) + smoothing.
class InnerIntegrand {
public:
    InnerIntegrand(const SpinPrior& prior, const LambdaMatrix& lambda, const InnerTerms& extra = {})
        : kappa_(prior.kappa()), pairs_(lambda.size()) {
        require(lambda.kappa() == prior.kappa(), "lambda and prior kappa differ");
        if (extra.field.size() != 0) require(extra.field.size() == kappa_, "external field has wrong length");
        const auto n = static_cast<Eigen::Index>(prior.size());
        points_.resize(kappa_, n);
        consts_.resize(n);
        moments_.resize(pairs_, n);
        for (Eigen::Index a = 0; a < n; ++a) {
            const Atom& atom = prior.atom(static_cast<std::size_t>(a));
            points_.col(a) = atom.point;
            double c = std::log(atom.weight) + prior.log_mass() + lambda.quadratic(atom.point);
            if (extra.field.size() != 0) c += extra.field.dot(atom.point);
            consts_(a) = c;
            Eigen::Index i = 0;
            for (int k = 0; k < kappa_; ++k)
                for (int kp = k; kp < kappa_; ++kp) moments_(i++, a) = atom.point(k) * atom.point(kp);
        }
        smoothing_grad_ = Vector::Zero(pairs_);
        if (extra.smoothing_delta > 0.0) {
            // log Π_{k<=k'} E exp(λ g), g ~ N(0, δ), by Gauss–Hermite.
            const GaussHermite gh = gauss_hermite(extra.smoothing_nodes);
            const double sd = std::sqrt(extra.smoothing_delta);
            for (Eigen::Index i = 0; i < pairs_; ++i) {
                const double l = lambda.coeffs()(i);
                double num = 0.0, den = 0.0;
                for (std::size_t q = 0; q < gh.nodes.size(); ++q) {
                    const double e = gh.weights[q] * std::exp(l * sd * gh.nodes[q]);
                    den += e;
                    num += e * sd * gh.nodes[q];
                }
                smoothing_ += std::log(den);
                smoothing_grad_(i) = num / den;
            }
        }
    }

    int kappa() const { return kappa_; }
    Eigen::Index pairs() const { return pairs_; }

    // Streaming log-sum-exp: one pass, no allocation, safe to share across threads.
    double value(const Vector& z) const {
        double m = -std::numeric_limits<double>::infinity();
        double s = 0.0;
        for (Eigen::Index a = 0; a < consts_.size(); ++a) {
            const double t = consts_(a) + points_.col(a).dot(z);
            if (t > m) {
                s = s * std::exp(m - t) + 1.0;
                m = t;
            } else {
                s += std::exp(t - m);
            }
        }
        return m + std::log(s) + smoothing_;
    }

    /// Value and ∂/∂λ (Gibbs averages of σ(k)σ(k')).
    double value_grad(const Vector& z, Vector& grad) const {
        double m = -std::numeric_limits<double>::infinity();
        double s = 0.0;
        grad = Vector::Zero(pairs_);
        for (Eigen::Index a = 0; a < consts_.size(); ++a) {
            const double t = consts_(a) + points_.col(a).dot(z);
            if (t > m) {
                const double scale = std::exp(m - t);
                s = s * scale + 1.0;
                grad = grad * scale + moments_.col(a);
                m = t;
            } else {
                const double e = std::exp(t - m);
                s += e;
                grad += e * moments_.col(a);
            }
        }
        grad = grad / s + smoothing_grad_;
        return m + std::log(s) + smoothing_;
    }

private:
    int kappa_;
    Eigen::Index pairs_;
    Matrix points_;
    Vector consts_;
    Matrix moments_;
    double smoothing_ = 0.0;
    Vector smoothing_grad_;
};

} // namespace detail

/// log ∫ exp(⟨σ, z⟩ + Σ_{k<=k'} λ_{k,k'} σ(k)σ(k')) dμ(σ), max-shifted.
inline double eval_inner(const SpinPrior& prior, const LambdaMatrix& lambda, const Vector& z,
                         const InnerTerms& extra = {}) {
    require(z.size() == prior.kappa(), "eval_inner: z has wrong length");
    return detail::InnerIntegrand(prior, lambda, extra).value(z);
}

struct PhiResult {
    double value = 0.0;
    double std_error = 0.0;
    Vector gradient;   // ∂Φ/∂λ (quadrature backend only; empty otherwise)
};

namespace detail {

struct Level {
    Matrix shifts;                  // κ × nodes: factor * rule points
    std::vector<double> log_weights;
    double x = 0.0;
};

class QuadratureRecursion {
public:
    QuadratureRecursion(const InnerIntegrand& inner, const std::vector<Matrix>& incs, const Path& path,
                        const EvalSpec& spec)
        : inner_(inner) {
        const GaussHermite gh = gauss_hermite(spec.nodes_per_level);
        double leaves = 1.0;
        for (int j = 0; j < path.levels(); ++j) {
            const Matrix f = psd_factor(incs[static_cast<std::size_t>(j)]);
            const TensorRule rule = tensor_rule(gh, static_cast<int>(f.cols()));
            Level lv;
            lv.shifts = f.cols() == 0 ? Matrix::Zero(f.rows(), 1) : Matrix(f * rule.points);
            lv.log_weights = f.cols() == 0 ? std::vector<double>{0.0} : rule.log_weights;
            lv.x = path.x(j);
            leaves *= static_cast<double>(lv.log_weights.size());
            levels_.push_back(std::move(lv));
        }
        if (leaves > spec.node_budget) {
            std::ostringstream os;
            os << "quadrature needs " << leaves << " leaf evaluations, over the budget " << spec.node_budget
               << "; use the Monte-Carlo backend or fewer nodes";
            throw BudgetError(os.str());
        }
    }

    double value() const { return eval(0, Vector::Zero(inner_.kappa())); }

    double value_grad(Vector& grad) const { return eval_grad(0, Vector::Zero(inner_.kappa()), grad); }

private:
    double eval(std::size_t j, const Vector& zsum) const {
        if (j == levels_.size()) return inner_.value(zsum);
        const Level& lv = levels_[j];
        const std::size_t n = lv.log_weights.size();
        std::vector<double> terms(n);
        if (lv.x < kZeroX) {
            double s = 0.0;
            for (std::size_t q = 0; q < n; ++q)
                s += std::exp(lv.log_weights[q]) * eval(j + 1, zsum + lv.shifts.col(static_cast<Eigen::Index>(q)));
            return s;
        }
        for (std::size_t q = 0; q < n; ++q)
            terms[q] = lv.log_weights[q] + lv.x * eval(j + 1, zsum + lv.shifts.col(static_cast<Eigen::Index>(q)));
        return log_sum_exp(terms.data(), n) / lv.x;
    }

    // Chain rule: ∂X_j = E_j[W ∂X_{j+1}], W = exp(x_j X_{j+1}) / E_j exp(x_j X_{j+1}).
    double eval_grad(std::size_t j, const Vector& zsum, Vector& grad) const {
        if (j == levels_.size()) return inner_.value_grad(zsum, grad);
        const Level& lv = levels_[j];
        const std::size_t n = lv.log_weights.size();
        std::vector<double> vals(n);
        std::vector<Vector> grads(n);
        for (std::size_t q = 0; q < n; ++q)
            vals[q] = eval_grad(j + 1, zsum + lv.shifts.col(static_cast<Eigen::Index>(q)), grads[q]);
        grad = Vector::Zero(inner_.pairs());
        if (lv.x < kZeroX) {
            double s = 0.0;
            for (std::size_t q = 0; q < n; ++q) {
                const double w = std::exp(lv.log_weights[q]);
                s += w * vals[q];
                grad += w * grads[q];
            }
            return s;
        }
        std::vector<double> terms(n);
        for (std::size_t q = 0; q < n; ++q) terms[q] = lv.log_weights[q] + lv.x * vals[q];
        const double lse = log_sum_exp(terms.data(), n);
        for (std::size_t q = 0; q < n; ++q) grad += std::exp(terms[q] - lse) * grads[q];
        return lse / lv.x;
    }

    const InnerIntegrand& inner_;
    std::vector<Level> levels_;
};

// One Monte-Carlo replica of the nested recursion.
class McRecursion {
public:
    McRecursion(const InnerIntegrand& inner, const std::vector<Matrix>& incs, const Path& path, const EvalSpec& spec)
        : inner_(inner), spec_(spec) {
        for (int j = 0; j < path.levels(); ++j) {
            factors_.push_back(psd_factor(incs[static_cast<std::size_t>(j)]));
            xs_.push_back(path.x(j));
        }
    }

    double run(Rng& rng, int samples) const { return eval(0, Vector::Zero(inner_.kappa()), rng, samples); }

private:
    double eval(std::size_t j, const Vector& zsum, Rng& rng, int samples) const {
        if (j == factors_.size()) return inner_.value(zsum);
        const Matrix& f = factors_[j];
        if (f.cols() == 0) return eval(j + 1, zsum, rng, samples);
        std::normal_distribution<double> normal(0.0, 1.0);
        const auto s = static_cast<std::size_t>(samples);
        std::vector<double> vals(s);
        Vector g(f.cols());
        for (std::size_t i = 0; i < s; ++i) {
            if (spec_.antithetic && (i % 2 == 1)) {
                g = -g;
            } else {
                for (Eigen::Index d = 0; d < g.size(); ++d) g(d) = normal(rng);
            }
            vals[i] = eval(j + 1, zsum + f * g, rng, samples);
        }
        const double x = xs_[j];
        if (x < kZeroX) {
            double sum = 0.0;
            for (double v : vals) sum += v;
            return sum / static_cast<double>(s);
        }
        for (double& v : vals) v *= x;
        return (log_sum_exp(vals.data(), s) - std::log(static_cast<double>(s))) / x;
    }

    const InnerIntegrand& inner_;
    const EvalSpec& spec_;
    std::vector<Matrix> factors_;
    std::vector<double> xs_;
};

inline void check_phi_inputs(const MixedModel& model, const SpinPrior& prior, const LambdaMatrix& lambda,
                             const Path& path) {
    require(model.kappa() == prior.kappa(), "model and prior kappa differ");
    require(lambda.kappa() == model.kappa(), "lambda and model kappa differ");
    require(path.kappa() == model.kappa(), "path and model kappa differ");
}

} // namespace detail

/// Φ(λ, D, r, x, γ) = X_0 of the nested recursion
///   X_r = log ∫ exp(⟨σ, Σ_j z_j⟩ + λ-term) dμ,
///   X_j = (1/x_j) log E_j exp(x_j X_{j+1})   (plain expectation when x_j = 0).
/// The quadrature backend is exact up to the Gauss–Hermite rule and can
/// also return ∂Φ/∂λ; the Monte-Carlo backend reports a replica standard error.
inline PhiResult eval_phi(const MixedModel& model, const SpinPrior& prior, const LambdaMatrix& lambda,
                          const Path& path, const EvalSpec& spec, bool with_gradient = false,
                          const InnerTerms& extra = {}) {
    detail::check_phi_inputs(model, prior, lambda, path);
    const std::vector<Matrix> incs = increments(model, path);
    const detail::InnerIntegrand inner(prior, lambda, extra);
    PhiResult out;
    if (spec.backend == Backend::Quadrature) {
        if (model.kappa() * path.levels() > spec.dim_cap) {
            std::ostringstream os;
            os << "quadrature dimension kappa*r = " << model.kappa() * path.levels() << " exceeds dim_cap "
               << spec.dim_cap;
            throw BudgetError(os.str());
        }
        const detail::QuadratureRecursion rec(inner, incs, path, spec);
        if (with_gradient) {
            out.value = rec.value_grad(out.gradient);
        } else {
            out.value = rec.value();
        }
        return out;
    }
    require(spec.samples_per_level >= 1, "samples_per_level must be >= 1");
    require(spec.replications >= 1, "replications must be >= 1");
    const detail::McRecursion rec(inner, incs, path, spec);
    std::vector<double> reps(static_cast<std::size_t>(spec.replications));
    parallel_for(reps.size(), spec.threads, [&](std::size_t b) {
        Rng rng = make_rng(spec.seed, Stream::PhiMonteCarlo, b);
        reps[b] = rec.run(rng, spec.samples_per_level);
    });
    const MeanError me = mean_error(reps);
    out.value = me.mean;
    out.std_error = me.std_error;
    return out;
}

/// Monte-Carlo values at s and 2s draws per level; the nested log-mean-exp
/// bias is O(1/s), so 2·v(2s) − v(s) removes its leading term.
struct McConvergence {
    PhiResult at_s;
    PhiResult at_2s;
    double extrapolated = 0.0;
};

inline McConvergence eval_phi_mc_doubling(const MixedModel& model, const SpinPrior& prior, const LambdaMatrix& lambda,
                                          const Path& path, EvalSpec spec, const InnerTerms& extra = {}) {
    spec.backend = Backend::MonteCarlo;
    McConvergence out;
    out.at_s = eval_phi(model, prior, lambda, path, spec, false, extra);
    spec.samples_per_level *= 2;
    out.at_2s = eval_phi(model, prior, lambda, path, spec, false, extra);
    out.extrapolated = 2.0 * out.at_2s.value - out.at_s.value;
    return out;
}

struct ParisiResult {
    double value = 0.0;
    double std_error = 0.0;
    double phi = 0.0;
    double lagrange = 0.0;             // Σ λ_{k,k'} D_{k,k'}
    double theta_term = 0.0;           // ½ Σ x_j Sum(θ(γ_{j+1}) − θ(γ_j))
    double theta_term_rearranged = 0.0;
};

inline constexpr double kRearrangeTol = 1e-10;

/// 𝒫(λ, D, path) = Φ − Σ λ D − ½ Σ_j x_j Sum(θ(γ_{j+1}) − θ(γ_j)).
inline ParisiResult eval_parisi(const MixedModel& model, const SpinPrior& prior, const LambdaMatrix& lambda,
                                const Matrix& d, const Path& path, const EvalSpec& spec,
                                const InnerTerms& extra = {}) {
    require(d.rows() == path.kappa() && d.cols() == path.kappa(), "D has wrong shape");
    if (sup_norm(d - path.endpoint()) > 1e-12) {
        std::ostringstream os;
        os << "path endpoint gamma_r differs from D by " << sup_norm(d - path.endpoint());
        throw ValidationError(os.str());
    }
    const PhiResult phi = eval_phi(model, prior, lambda, path, spec, false, extra);
    ParisiResult out;
    out.phi = phi.value;
    out.std_error = phi.std_error;
    out.lagrange = lambda.pair(d);
    out.theta_term = theta_correction(model, path);
    out.theta_term_rearranged = theta_correction_rearranged(model, path);
    if (std::abs(out.theta_term - out.theta_term_rearranged) > kRearrangeTol) {
        std::ostringstream os;
        os.precision(17);
        os << "theta-term forms disagree: " << out.theta_term << " vs " << out.theta_term_rearranged;
        throw NumericalError(os.str());
    }
    out.value = out.phi - out.lagrange - out.theta_term;
    return out;
}

/// ε ||λ||_1 + 𝒫: the interpolation upper bound without its unquantified Lε term.
inline double guerra_bound(const MixedModel& model, const SpinPrior& prior, const Matrix& d, double eps,
                           const LambdaMatrix& lambda, const Path& path, const EvalSpec& spec) {
    require(eps >= 0.0, "epsilon must be non-negative");
    return eps * lambda.l1() + eval_parisi(model, prior, lambda, d, path, spec).value;
}

} // namespace vecspin
