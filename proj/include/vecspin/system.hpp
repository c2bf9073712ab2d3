#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <sstream>
#include <vector>

#include "vecspin/mixing.hpp"
#include "vecspin/phi.hpp"
#include "vecspin/prior.hpp"
#include "vecspin/random.hpp"

namespace vecspin {

inline constexpr double kTermBudget = 1e7;

inline double int_pow(double base, int e) {
    double out = 1.0;
    for (int i = 0; i < e; ++i) out *= base;
    return out;
}

/// Gaussian couplings g_{i1..ip}, one flat N^p tensor per p, shared by all
/// spin coordinates k.
struct DisorderSample {
    int n = 0;
    std::map<int, std::vector<double>> couplings;
};

inline DisorderSample sample_disorder(const MixedModel& model, int n, Rng& rng, double budget = kTermBudget) {
    require(n >= 1, "N must be >= 1");
    DisorderSample out;
    out.n = n;
    std::normal_distribution<double> normal(0.0, 1.0);
    for (const auto& [p, beta] : model.coefficients()) {
        if (beta.isZero(0.0)) continue;
        const double terms = int_pow(n, p);
        if (terms > budget) {
            std::ostringstream os;
            os << "p=" << p << " Hamiltonian at N=" << n << " has " << terms << " terms, over the budget " << budget;
            throw BudgetError(os.str());
        }
        std::vector<double> g(static_cast<std::size_t>(terms));
        for (double& v : g) v = normal(rng);
        out.couplings.emplace(p, std::move(g));
    }
    return out;
}

inline DisorderSample sample_disorder(const MixedModel& model, int n, std::uint64_t seed,
                                      double budget = kTermBudget) {
    Rng rng = make_rng(seed, Stream::Disorder, 0);
    return sample_disorder(model, n, rng, budget);
}

namespace detail {

// Σ_{i1..ip} g_{i1..ip} v_{i1} ... v_{ip}, contracting the last index first.
inline double contract(const std::vector<double>& g, const double* v, int n, int p) {
    std::vector<double> cur(g);
    std::size_t size = cur.size();
    for (int q = 0; q < p; ++q) {
        size /= static_cast<std::size_t>(n);
        for (std::size_t i = 0; i < size; ++i) {
            double s = 0.0;
            const double* row = cur.data() + i * static_cast<std::size_t>(n);
            for (int j = 0; j < n; ++j) s += row[j] * v[j];
            cur[i] = s;
        }
    }
    return cur[0];
}

} // namespace detail

/// H_N(σ) = Σ_k Σ_p β_p(k) N^{-(p-1)/2} Σ g_{i1..ip} σ_{i1}(k)...σ_{ip}(k); config is N×κ.
inline double hamiltonian(const MixedModel& model, const Matrix& config, const DisorderSample& disorder) {
    require(config.rows() == disorder.n, "configuration has wrong N");
    require(config.cols() == model.kappa(), "configuration has wrong kappa");
    const int n = disorder.n;
    double h = 0.0;
    for (const auto& [p, beta] : model.coefficients()) {
        const auto it = disorder.couplings.find(p);
        if (it == disorder.couplings.end()) continue;
        const double scale = std::pow(static_cast<double>(n), -(p - 1) / 2.0);
        for (int k = 0; k < model.kappa(); ++k) {
            if (beta(k) == 0.0) continue;
            const Vector col = config.col(k);
            h += beta(k) * scale * detail::contract(it->second, col.data(), n, p);
        }
    }
    return h;
}

/// Configurations σ ∈ atoms^N in lexicographic order of atom indices
/// (site 1 is the most significant digit).
class ConfigEnumerator {
public:
    ConfigEnumerator(const SpinPrior& prior, int n, double budget = kTermBudget) : prior_(prior), n_(n) {
        require(n >= 1, "N must be >= 1");
        const double count = int_pow(static_cast<double>(prior.size()), n);
        if (count > budget) {
            std::ostringstream os;
            os << prior.size() << "^" << n << " = " << count << " configurations exceed the enumeration budget "
               << budget << "; use a Monte-Carlo estimator instead";
            throw BudgetError(os.str());
        }
        count_ = static_cast<std::size_t>(count);
    }

    std::size_t count() const { return count_; }
    int n() const { return n_; }

    /// Config as an N×κ matrix and its log prior weight Σ_i log(mass · w_{a_i}).
    Matrix config(std::size_t index, double* log_weight = nullptr) const {
        Matrix c(n_, prior_.kappa());
        double lw = 0.0;
        const std::size_t a = prior_.size();
        for (int i = n_ - 1; i >= 0; --i) {
            const Atom& atom = prior_.atom(index % a);
            c.row(i) = atom.point.transpose();
            lw += std::log(atom.weight) + prior_.log_mass();
            index /= a;
        }
        if (log_weight) *log_weight = lw;
        return c;
    }

private:
    const SpinPrior& prior_;
    int n_;
    std::size_t count_ = 0;
};

struct FreeEnergyResult {
    double value = 0.0;
    double std_error = 0.0;
    std::vector<double> per_draw;                 // (1/N) log Z per disorder draw
    std::vector<double> per_draw_unconstrained;   // constrained runs only
    double unconstrained_value = 0.0;
    double hit_fraction = 1.0;                    // prior mass of the retained set
    std::size_t configurations = 0;
};

namespace detail {

// Per draw: (1/N) log Σ_{σ in subset} w(σ) e^{H(σ)} and the same over all σ,
// summed in one pass with a common shift so subset <= all holds exactly.
inline std::pair<double, double> log_partition(const MixedModel& model, const ConfigEnumerator& en,
                                               const std::vector<char>& keep, std::uint64_t seed,
                                               std::size_t draw) {
    Rng rng = make_rng(seed, Stream::Disorder, draw);
    const DisorderSample dis = sample_disorder(model, en.n(), rng);
    std::vector<double> t(en.count());
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < en.count(); ++c) {
        double lw = 0.0;
        const Matrix cfg = en.config(c, &lw);
        t[c] = lw + hamiltonian(model, cfg, dis);
        m = std::max(m, t[c]);
    }
    double all = 0.0, sub = 0.0;
    for (std::size_t c = 0; c < en.count(); ++c) {
        const double e = std::exp(t[c] - m);
        all += e;
        if (keep[c]) sub += e;
    }
    const double n = en.n();
    return {(m + std::log(sub)) / n, (m + std::log(all)) / n};
}

} // namespace detail

/// F_N = (1/N) E log Σ_{σ ∈ atoms^N} w(σ) exp H_N(σ), by enumeration.
inline FreeEnergyResult exact_free_energy(const MixedModel& model, const SpinPrior& prior, int n, int n_disorder,
                                          std::uint64_t seed, int threads = 1, double budget = kTermBudget) {
    require(model.kappa() == prior.kappa(), "model and prior kappa differ");
    require(n_disorder >= 1, "need at least one disorder draw");
    const ConfigEnumerator en(prior, n, budget);
    const std::vector<char> keep(en.count(), 1);
    FreeEnergyResult out;
    out.per_draw.resize(static_cast<std::size_t>(n_disorder));
    parallel_for(out.per_draw.size(), threads,
                 [&](std::size_t d) { out.per_draw[d] = detail::log_partition(model, en, keep, seed, d).second; });
    const MeanError me = mean_error(out.per_draw);
    out.value = me.mean;
    out.std_error = me.std_error;
    out.unconstrained_value = me.mean;
    out.configurations = en.count();
    return out;
}

/// Configurations whose self-overlap lies in the open sup-norm ball B_ε(D).
inline std::vector<char> constraint_mask(const ConfigEnumerator& en, const Matrix& d, double eps,
                                         double* hit_fraction = nullptr) {
    std::vector<char> keep(en.count(), 0);
    double mass = 0.0, total = 0.0;
    for (std::size_t c = 0; c < en.count(); ++c) {
        double lw = 0.0;
        const Matrix cfg = en.config(c, &lw);
        const double w = std::exp(lw);
        total += w;
        if (sup_norm(self_overlap(cfg) - d) < eps) {
            keep[c] = 1;
            mass += w;
        }
    }
    if (hit_fraction) *hit_fraction = mass / total;
    return keep;
}

inline FreeEnergyResult constrained_free_energy(const MixedModel& model, const SpinPrior& prior, int n,
                                                const Matrix& d, double eps, int n_disorder, std::uint64_t seed,
                                                int threads = 1, double budget = kTermBudget) {
    require(model.kappa() == prior.kappa(), "model and prior kappa differ");
    require(d.rows() == prior.kappa() && d.cols() == prior.kappa(), "D has wrong shape");
    require(eps > 0.0, "epsilon must be positive");
    require(n_disorder >= 1, "need at least one disorder draw");
    const ConfigEnumerator en(prior, n, budget);
    FreeEnergyResult out;
    const std::vector<char> keep = constraint_mask(en, d, eps, &out.hit_fraction);
    if (out.hit_fraction == 0.0) {
        std::ostringstream os;
        os << "no configuration at N=" << n << " has self-overlap within eps=" << eps << " of D";
        throw BudgetError(os.str());
    }
    out.per_draw.resize(static_cast<std::size_t>(n_disorder));
    out.per_draw_unconstrained.resize(out.per_draw.size());
    parallel_for(out.per_draw.size(), threads, [&](std::size_t dr) {
        const auto [sub, all] = detail::log_partition(model, en, keep, seed, dr);
        out.per_draw[dr] = sub;
        out.per_draw_unconstrained[dr] = all;
    });
    const MeanError me = mean_error(out.per_draw);
    out.value = me.mean;
    out.std_error = me.std_error;
    out.unconstrained_value = mean_error(out.per_draw_unconstrained).mean;
    out.configurations = en.count();
    return out;
}

/// Monte-Carlo check of E H(σ¹)H(σ²) / N against Sum ξ(R_{1,2}).
struct CovarianceCheck {
    double empirical = 0.0;
    double std_error = 0.0;
    double formula = 0.0;
};

inline CovarianceCheck hamiltonian_covariance_check(const MixedModel& model, const Matrix& a, const Matrix& b,
                                                    int draws, std::uint64_t seed, int threads = 1) {
    require(a.rows() == b.rows() && a.cols() == b.cols(), "configurations differ in shape");
    require(draws >= 2, "need at least 2 draws");
    const int n = static_cast<int>(a.rows());
    std::vector<double> prod(static_cast<std::size_t>(draws));
    parallel_for(prod.size(), threads, [&](std::size_t d) {
        Rng rng = make_rng(seed, Stream::Disorder, d);
        const DisorderSample dis = sample_disorder(model, n, rng);
        prod[d] = hamiltonian(model, a, dis) * hamiltonian(model, b, dis) / n;
    });
    const MeanError me = mean_error(prod);
    return {me.mean, me.std_error, hamiltonian_covariance(model, overlap(a, b))};
}

// ---------------------------------------------------------------------------
// Perturbation Hamiltonian

/// θ = (p, m, n_1..n_m, λ^1..λ^m).
struct Theta {
    int p = 1;
    std::vector<int> n;            // n_1..n_m
    std::vector<Vector> lambdas;   // λ^1..λ^m in [-1,1]^κ

    int m() const { return static_cast<int>(n.size()); }
    int total_n() const {
        int s = 0;
        for (int v : n) s += v;
        return s;
    }
};

inline void validate_theta(const Theta& th, int kappa) {
    require(th.p >= 1, "theta: p must be >= 1");
    require(th.m() >= 1, "theta: m must be >= 1");
    require(th.lambdas.size() == th.n.size(), "theta: need one lambda per n_j");
    for (int v : th.n) require(v >= 1, "theta: every n_j must be >= 1");
    for (const Vector& l : th.lambdas) {
        require(l.size() == kappa, "theta: lambda has wrong length");
        require(l.allFinite() && l.cwiseAbs().maxCoeff() <= 1.0, "theta: lambda entries must lie in [-1,1]");
    }
}

/// Π_j (R^{∘p} λ^j, λ^j)^{n_j}.
inline double theta_covariance(const Theta& th, const Matrix& r) {
    const Matrix rp = r.array().pow(th.p).matrix();
    double out = 1.0;
    for (int j = 0; j < th.m(); ++j) {
        const Vector& l = th.lambdas[static_cast<std::size_t>(j)];
        out *= int_pow(l.dot(rp * l), th.n[static_cast<std::size_t>(j)]);
    }
    return out;
}

/// Couplings for one θ: (N^p)^{Σn} standard Gaussians.
inline std::vector<double> sample_theta_disorder(const Theta& th, int n, Rng& rng, double budget = kTermBudget) {
    const double terms = int_pow(int_pow(n, th.p), th.total_n());
    if (terms > budget) {
        std::ostringstream os;
        os << "h_theta at N=" << n << " has " << terms << " terms, over the budget " << budget;
        throw BudgetError(os.str());
    }
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> g(static_cast<std::size_t>(terms));
    for (double& v : g) v = normal(rng);
    return g;
}

/// h_θ(σ) = N^{-pS/2} Σ_{I_1..I_m} g_{I_1..I_m} S_{λ^1}(σ_{I_1}) ... S_{λ^m}(σ_{I_m}),
/// S = Σ n_j, for an arbitrary real N×κ configuration.
inline double perturbation_h_theta(const Theta& th, const Matrix& config, const std::vector<double>& couplings) {
    validate_theta(th, static_cast<int>(config.cols()));
    const int n = static_cast<int>(config.rows());
    const auto block = static_cast<std::size_t>(int_pow(n, th.p));
    const int s = th.total_n();
    require(couplings.size() == static_cast<std::size_t>(int_pow(static_cast<double>(block), s)),
            "h_theta couplings have wrong size");
    // a_λ[e] = Σ_k λ_k Π_{i∈e} σ_i(k) over multi-indices e ∈ [N]^p.
    auto s_lambda = [&](const Vector& l) {
        std::vector<double> a(block, 0.0);
        for (Eigen::Index k = 0; k < config.cols(); ++k) {
            if (l(k) == 0.0) continue;
            std::vector<double> t{l(k)};
            for (int q = 0; q < th.p; ++q) {
                std::vector<double> nt;
                nt.reserve(t.size() * static_cast<std::size_t>(n));
                for (double v : t)
                    for (int i = 0; i < n; ++i) nt.push_back(v * config(i, k));
                t = std::move(nt);
            }
            for (std::size_t e = 0; e < block; ++e) a[e] += t[e];
        }
        return a;
    };
    std::vector<std::vector<double>> factors;
    for (int j = 0; j < th.m(); ++j) {
        const std::vector<double> a = s_lambda(th.lambdas[static_cast<std::size_t>(j)]);
        for (int c = 0; c < th.n[static_cast<std::size_t>(j)]; ++c) factors.push_back(a);
    }
    std::vector<double> cur(couplings);
    std::size_t size = cur.size();
    for (int t = s - 1; t >= 0; --t) {
        size /= block;
        const std::vector<double>& a = factors[static_cast<std::size_t>(t)];
        for (std::size_t i = 0; i < size; ++i) {
            double acc = 0.0;
            const double* row = cur.data() + i * block;
            for (std::size_t e = 0; e < block; ++e) acc += row[e] * a[e];
            cur[i] = acc;
        }
    }
    return cur[0] / std::pow(static_cast<double>(n), th.p * s / 2.0);
}

/// Monte-Carlo check of E h_θ(σ¹) h_θ(σ²) against Π_j (R^{∘p}λ^j, λ^j)^{n_j}.
inline CovarianceCheck theta_covariance_check(const Theta& th, const Matrix& a, const Matrix& b, int draws,
                                              std::uint64_t seed, int threads = 1) {
    require(a.rows() == b.rows() && a.cols() == b.cols(), "configurations differ in shape");
    require(draws >= 2, "need at least 2 draws");
    validate_theta(th, static_cast<int>(a.cols()));
    const int n = static_cast<int>(a.rows());
    std::vector<double> prod(static_cast<std::size_t>(draws));
    parallel_for(prod.size(), threads, [&](std::size_t d) {
        Rng rng = make_rng(seed, Stream::PerturbationDisorder, d);
        const std::vector<double> g = sample_theta_disorder(th, n, rng);
        prod[d] = perturbation_h_theta(th, a, g) * perturbation_h_theta(th, b, g);
    });
    const MeanError me = mean_error(prod);
    return {me.mean, me.std_error, theta_covariance(th, overlap(a, b))};
}

/// Finite θ-list with weights 2^{-j(θ)} b_p^{-Σn}, b_p = κ c^p and
/// j(θ) = p + Σn + Σ j_0(λ^j) + offset·m. j_0 numbers the distinct λ's of
/// the list in order of first appearance, starting at 1.
struct PerturbationSpec {
    std::vector<Theta> thetas;
    double gamma_s = 0.375;   // s_N = N^{γ_s}, γ_s in (1/4, 1/2)
    int offset = 22;
    bool enabled = true;
};

inline void validate_perturbation(const PerturbationSpec& spec, int kappa) {
    require(spec.gamma_s > 0.25 && spec.gamma_s < 0.5, "perturbation gamma_s must lie in (1/4, 1/2)");
    require(spec.offset >= 0, "perturbation offset must be >= 0");
    for (const Theta& th : spec.thetas) validate_theta(th, kappa);
}

inline std::vector<int> theta_j(const PerturbationSpec& spec) {
    std::vector<Vector> seen;
    auto j0 = [&](const Vector& l) {
        for (std::size_t i = 0; i < seen.size(); ++i)
            if (seen[i].size() == l.size() && seen[i] == l) return static_cast<int>(i) + 1;
        seen.push_back(l);
        return static_cast<int>(seen.size());
    };
    std::vector<int> out;
    for (const Theta& th : spec.thetas) {
        int j = th.p + th.total_n() + spec.offset * th.m();
        for (const Vector& l : th.lambdas) j += j0(l);
        out.push_back(j);
    }
    return out;
}

inline std::vector<double> perturbation_weights(const PerturbationSpec& spec, int kappa, double support_bound) {
    const std::vector<int> js = theta_j(spec);
    std::vector<double> w;
    for (std::size_t i = 0; i < spec.thetas.size(); ++i) {
        const Theta& th = spec.thetas[i];
        const double bp = kappa * int_pow(support_bound, th.p);
        w.push_back(std::ldexp(1.0, -js[i]) * std::pow(bp, -th.total_n()));
    }
    return w;
}

inline double strength(const PerturbationSpec& spec, int n) {
    return spec.enabled ? std::pow(static_cast<double>(n), spec.gamma_s) : 0.0;
}

/// One realization of the perturbation disorder: couplings per θ and u_θ ~ U[1,2].
struct PerturbationDisorder {
    std::vector<std::vector<double>> couplings;
    std::vector<double> u;
};

inline std::vector<double> sample_u(const PerturbationSpec& spec, Rng& rng) {
    std::uniform_real_distribution<double> unif(1.0, 2.0);
    std::vector<double> u;
    for (std::size_t i = 0; i < spec.thetas.size(); ++i) u.push_back(unif(rng));
    return u;
}

inline std::vector<std::vector<double>> sample_perturbation_couplings(const PerturbationSpec& spec, int n, Rng& rng) {
    std::vector<std::vector<double>> out;
    for (const Theta& th : spec.thetas) out.push_back(sample_theta_disorder(th, n, rng));
    return out;
}

/// Conditional variance Σ_θ w_θ² u_θ² C^θ(σ,σ) of h_N at one configuration.
inline double perturbation_variance(const PerturbationSpec& spec, const Matrix& config, const std::vector<double>& u,
                                    double support_bound) {
    const int kappa = static_cast<int>(config.cols());
    const std::vector<double> w = perturbation_weights(spec, kappa, support_bound);
    const Matrix r = self_overlap(config);
    double v = 0.0;
    for (std::size_t i = 0; i < spec.thetas.size(); ++i) v += w[i] * w[i] * u[i] * u[i] * theta_covariance(spec.thetas[i], r);
    return v;
}

/// h_N(σ) = Σ_θ 2^{-j(θ)} b_p^{-Σn} u_θ h_θ(σ). Rejects weightings whose
/// conditional variance at σ exceeds 1.
inline double perturbation_h(const PerturbationSpec& spec, const Matrix& config, const PerturbationDisorder& dis,
                             double support_bound) {
    require(dis.couplings.size() == spec.thetas.size() && dis.u.size() == spec.thetas.size(),
            "perturbation disorder does not match the theta list");
    if (spec.thetas.empty()) return 0.0;
    const double var = perturbation_variance(spec, config, dis.u, support_bound);
    if (var > 1.0 + 1e-12) {
        std::ostringstream os;
        os << "perturbation conditional variance " << var << " exceeds 1";
        throw ValidationError(os.str());
    }
    const std::vector<double> w = perturbation_weights(spec, static_cast<int>(config.cols()), support_bound);
    double h = 0.0;
    for (std::size_t i = 0; i < spec.thetas.size(); ++i)
        h += w[i] * dis.u[i] * perturbation_h_theta(spec.thetas[i], config, dis.couplings[i]);
    return h;
}

// ---------------------------------------------------------------------------
// Ghirlanda–Guerra discrepancy

struct GgBudget {
    int disorder_draws = 200;
    int u_draws = 1;
};

struct GgResult {
    double value = 0.0;         // mean over u of Δ
    double std_error = 0.0;
    double f_c_new = 0.0;       // E<f C̃_{1,n+1}>
    double f_mean = 0.0;        // E<f>
    double c12 = 0.0;           // E<C̃_{1,2}>
    double f_c12 = 0.0;         // E<f C̃_{1,2}>
    std::size_t retained = 0;   // configurations in Σ_ε(D)
    double hit_fraction = 0.0;
};

/// Bounded functional of the replica pair overlap R̃_{1,2}.
using PairFunctional = std::function<double(const Matrix&)>;

namespace detail {

struct GgMoments {
    double f_c_new = 0.0, f_mean = 0.0, c12 = 0.0, f_c12 = 0.0;
};

// Δ for f = f(R̃_{1,2}): for ℓ >= 3 the term <f C̃_{1,ℓ}> equals <f C̃_{1,n+1}>, so
// Δ = |(2/n) E<f C̃_{1,n+1}> − (1/n) E<f> E<C̃_{1,2}> − (1/n) E<f C̃_{1,2}>|.
inline double gg_delta(double f_c_new, double f_mean, double c12, double f_c12, int n) {
    const double inv = 1.0 / n;
    return std::abs(f_c_new - inv * f_mean * c12 - inv * f_c12 - (n - 2) * inv * f_c_new);
}

inline double gg_delta(const std::vector<GgMoments>& draws, int n, std::size_t skip = SIZE_MAX) {
    GgMoments s;
    double cnt = 0.0;
    for (std::size_t i = 0; i < draws.size(); ++i) {
        if (i == skip) continue;
        s.f_c_new += draws[i].f_c_new;
        s.f_mean += draws[i].f_mean;
        s.c12 += draws[i].c12;
        s.f_c12 += draws[i].f_c12;
        cnt += 1.0;
    }
    return gg_delta(s.f_c_new / cnt, s.f_mean / cnt, s.c12 / cnt, s.f_c12 / cnt, n);
}

} // namespace detail

/// Δ(f, n, θ) on the Gibbs measure over Σ_ε(D) with Hamiltonian
/// H_N(σ) + s_N h_N(σ̃), σ̃ = A(R(σ,σ)) σ, by exact enumeration per draw.
/// `theta` selects the covariance C̃^θ; it need not belong to the perturbation list.
inline GgResult gg_discrepancy(const MixedModel& model, const SpinPrior& prior, const PerturbationSpec& pert, int n_sites,
                               const Matrix& d, double eps, int n, const PairFunctional& f, const Theta& theta,
                               const GgBudget& budget, std::uint64_t seed, int threads = 1) {
    require(model.kappa() == prior.kappa(), "model and prior kappa differ");
    require(n >= 2, "GG discrepancy needs n >= 2");
    require(eps > 0.0, "epsilon must be positive");
    require(budget.disorder_draws >= 2 && budget.u_draws >= 1, "GG budget needs >= 2 disorder draws and >= 1 u draw");
    validate_theta(theta, model.kappa());
    validate_perturbation(pert, model.kappa());
    const ConfigEnumerator en(prior, n_sites);
    GgResult out;
    const std::vector<char> keep = constraint_mask(en, d, eps, &out.hit_fraction);

    std::vector<Matrix> sigma, tilde;
    std::vector<double> logw;
    for (std::size_t c = 0; c < en.count(); ++c) {
        if (!keep[c]) continue;
        double lw = 0.0;
        Matrix cfg = en.config(c, &lw);
        const ModifierMatrix mod = build_modifier(self_overlap(cfg), d, eps);
        tilde.push_back(cfg * mod.a.transpose());
        sigma.push_back(std::move(cfg));
        logw.push_back(lw);
    }
    out.retained = sigma.size();
    if (sigma.empty()) {
        std::ostringstream os;
        os << "no configuration at N=" << n_sites << " has self-overlap within eps=" << eps << " of D";
        throw BudgetError(os.str());
    }
    const std::size_t m = sigma.size();
    // Pair quantities are disorder-free: R̃_{12} = A_1 R(σ¹,σ²) A_2^T.
    std::vector<double> fmat(m * m), cmat(m * m);
    for (std::size_t a = 0; a < m; ++a)
        for (std::size_t b = 0; b < m; ++b) {
            const Matrix rt = overlap(tilde[a], tilde[b]);
            fmat[a * m + b] = f(rt);
            cmat[a * m + b] = theta_covariance(theta, rt);
        }
    const double s_n = strength(pert, n_sites);
    const double c_bound = prior.support_bound();

    std::vector<double> deltas, vars;
    std::vector<detail::GgMoments> all;
    for (int ui = 0; ui < budget.u_draws; ++ui) {
        Rng urng = make_rng(seed, Stream::PerturbationU, static_cast<std::uint64_t>(ui));
        const std::vector<double> u = sample_u(pert, urng);
        std::vector<detail::GgMoments> draws(static_cast<std::size_t>(budget.disorder_draws));
        parallel_for(draws.size(), threads, [&](std::size_t dr) {
            const std::uint64_t index = static_cast<std::uint64_t>(ui) * 1000003ULL + dr;
            Rng rng = make_rng(seed, Stream::Disorder, index);
            const DisorderSample dis = sample_disorder(model, n_sites, rng);
            Rng prng = make_rng(seed, Stream::PerturbationDisorder, index);
            const PerturbationDisorder pdis{sample_perturbation_couplings(pert, n_sites, prng), u};
            std::vector<double> t(m);
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t a = 0; a < m; ++a) {
                t[a] = logw[a] + hamiltonian(model, sigma[a], dis);
                if (s_n != 0.0) t[a] += s_n * perturbation_h(pert, tilde[a], pdis, c_bound);
                mx = std::max(mx, t[a]);
            }
            std::vector<double> g(m);
            double z = 0.0;
            for (std::size_t a = 0; a < m; ++a) z += (g[a] = std::exp(t[a] - mx));
            for (double& v : g) v /= z;
            // c̄(σ) = Σ_τ G(τ) C̃(σ, τ) turns the three-replica term into a pair sum.
            detail::GgMoments mo;
            for (std::size_t a = 0; a < m; ++a) {
                double cbar = 0.0;
                for (std::size_t b = 0; b < m; ++b) cbar += g[b] * cmat[a * m + b];
                double fg = 0.0, fc = 0.0, cc = 0.0;
                for (std::size_t b = 0; b < m; ++b) {
                    fg += g[b] * fmat[a * m + b];
                    fc += g[b] * fmat[a * m + b] * cmat[a * m + b];
                    cc += g[b] * cmat[a * m + b];
                }
                mo.f_c_new += g[a] * fg * cbar;
                mo.f_mean += g[a] * fg;
                mo.f_c12 += g[a] * fc;
                mo.c12 += g[a] * cc;
            }
            draws[dr] = mo;
        });
        const double delta = detail::gg_delta(draws, n);
        // Delete-one jackknife over disorder draws.
        const std::size_t k = draws.size();
        std::vector<double> jk(k);
        for (std::size_t i = 0; i < k; ++i) jk[i] = detail::gg_delta(draws, n, i);
        double jm = 0.0;
        for (double v : jk) jm += v;
        jm /= static_cast<double>(k);
        double jv = 0.0;
        for (double v : jk) jv += (v - jm) * (v - jm);
        jv *= static_cast<double>(k - 1) / static_cast<double>(k);
        deltas.push_back(delta);
        vars.push_back(jv);
        all.insert(all.end(), draws.begin(), draws.end());
    }
    const auto nu = static_cast<double>(deltas.size());
    double mean = 0.0, within = 0.0;
    for (std::size_t i = 0; i < deltas.size(); ++i) {
        mean += deltas[i];
        within += vars[i];
    }
    mean /= nu;
    double between = 0.0;
    for (double v : deltas) between += (v - mean) * (v - mean);
    between = deltas.size() > 1 ? between / (nu - 1.0) : 0.0;
    out.value = mean;
    out.std_error = std::sqrt(within / (nu * nu) + between / nu);
    for (const auto& mo : all) {
        out.f_c_new += mo.f_c_new;
        out.f_mean += mo.f_mean;
        out.c12 += mo.c12;
        out.f_c12 += mo.f_c12;
    }
    const auto na = static_cast<double>(all.size());
    out.f_c_new /= na;
    out.f_mean /= na;
    out.c12 /= na;
    out.f_c12 /= na;
    return out;
}

} // namespace vecspin
