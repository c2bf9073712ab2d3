#include <gtest/gtest.h>

#include "support/instances.hpp"
#include "support/oracles.hpp"
#include "vecspin/system.hpp"

using namespace vecspin;
using namespace testing_support;

namespace {

Theta theta(int p, std::vector<int> n, std::vector<Vector> lambdas) {
    Theta t;
    t.p = p;
    t.n = std::move(n);
    t.lambdas = std::move(lambdas);
    return t;
}

Vector vec(std::initializer_list<double> v) {
    Vector out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) out(i++) = x;
    return out;
}

} // namespace

TEST(System, SingleSiteHamiltonian) {
    const MixedModel m = MixedModel::scalar({{2, 0.7}});
    Rng rng = make_rng(1, Stream::Test, 0);
    const DisorderSample d = sample_disorder(m, 1, rng);
    for (double s : {1.0, -1.0})
        EXPECT_NEAR(hamiltonian(m, Matrix::Constant(1, 1, s), d), 0.7 * d.couplings.at(2)[0], 1e-15);
    DisorderSample zero = d;
    zero.couplings[2].assign(zero.couplings[2].size(), 0.0);
    EXPECT_EQ(hamiltonian(m, Matrix::Constant(1, 1, 1.0), zero), 0.0);
}

TEST(System, HamiltonianMatchesExplicitSums) {
    const MixedModel m(2, {{2, vec({0.5, 0.3})}, {4, vec({0.2, 0.1})}});
    Rng rng = make_rng(2, Stream::Test, 0);
    const int n = 3;
    const DisorderSample d = sample_disorder(m, n, rng);
    const Matrix s = random_matrix(rng, n, 2);
    double want = 0.0;
    const auto& g2 = d.couplings.at(2);
    const auto& g4 = d.couplings.at(4);
    for (int k = 0; k < 2; ++k) {
        const double b2 = k == 0 ? 0.5 : 0.3, b4 = k == 0 ? 0.2 : 0.1;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                want += b2 / std::sqrt(3.0) * g2[i * n + j] * s(i, k) * s(j, k);
                for (int a = 0; a < n; ++a)
                    for (int b = 0; b < n; ++b)
                        want += b4 / std::pow(3.0, 1.5) * g4[((i * n + j) * n + a) * n + b] * s(i, k) * s(j, k) *
                                s(a, k) * s(b, k);
            }
    }
    EXPECT_NEAR(hamiltonian(m, s, d), want, 1e-12);
}

TEST(System, HamiltonianCovariance) {
    const MixedModel m = MixedModel::scalar({{2, 0.5}});
    const Matrix up = Matrix::Ones(2, 1);
    const CovarianceCheck c = hamiltonian_covariance_check(m, up, up, 100000, 4);
    EXPECT_NEAR(c.formula, 0.25, 1e-15);
    // Cov(H_2(σ), H_2(σ)) = 2 · 0.25, reported per site.
    EXPECT_NEAR(c.empirical, c.formula, 3.0 * c.std_error);

    const MixedModel m2(2, {{2, vec({1.0, 0.5})}, {4, vec({0.5, 0.25})}});
    Matrix a(3, 2), b(3, 2);
    a << 1, 1, 1, -1, -1, 1;
    b << 1, -1, 1, 1, -1, -1;
    const CovarianceCheck c2 = hamiltonian_covariance_check(m2, a, b, 100000, 5);
    EXPECT_NEAR(c2.empirical, c2.formula, 3.0 * c2.std_error);
}

TEST(System, EnumeratorOrder) {
    const SpinPrior prior = SpinPrior::ising(2.0);
    const ConfigEnumerator en(prior, 3);
    EXPECT_EQ(en.count(), 8u);
    double lw = 0.0;
    const Matrix c1 = en.config(1, &lw);
    EXPECT_EQ(c1(0, 0), 1.0);
    EXPECT_EQ(c1(2, 0), -1.0);
    EXPECT_NEAR(lw, 0.0, 1e-15);
    EXPECT_THROW(ConfigEnumerator(prior, 40), BudgetError);
}

TEST(System, FreeEnergyClosedForms) {
    const FreeEnergyResult zero = exact_free_energy(MixedModel::scalar({{2, 0.0}}), SpinPrior::ising(), 4, 3, 1);
    EXPECT_NEAR(zero.value, 0.0, 1e-14);
    // One site: H = β g σ² = β g, and the prior has mass 1.
    const FreeEnergyResult one = exact_free_energy(MixedModel::scalar({{2, 0.8}}), SpinPrior::ising(), 1, 2000, 2);
    EXPECT_NEAR(one.value, 0.0, 3.0 * one.std_error);
}

TEST(System, FreeEnergyMatchesBruteForcePerDraw) {
    const double beta = 0.3;
    const MixedModel m = MixedModel::scalar({{2, beta}});
    for (int n : {2, 5}) {
        const FreeEnergyResult r = exact_free_energy(m, SpinPrior::ising(2.0), n, 20, 6);
        for (std::size_t d = 0; d < r.per_draw.size(); ++d) {
            Rng rng = make_rng(6, Stream::Disorder, d);
            const DisorderSample dis = sample_disorder(m, n, rng);
            EXPECT_NEAR(r.per_draw[d], oracle::sk_log_partition(beta, dis.couplings.at(2), n), 1e-12);
        }
    }
}

TEST(System, FreeEnergyIsThreadIndependent) {
    const MixedModel m = MixedModel::scalar({{2, 0.3}, {4, 0.1}});
    const FreeEnergyResult a = exact_free_energy(m, SpinPrior::ising(2.0), 6, 16, 3, 1);
    const FreeEnergyResult b = exact_free_energy(m, SpinPrior::ising(2.0), 6, 16, 3, 4);
    EXPECT_EQ(a.per_draw, b.per_draw);
}

TEST(System, ConstrainedFreeEnergy) {
    const MixedModel m = MixedModel::scalar({{2, 0.4}});
    const Matrix one = Matrix::Ones(1, 1);
    const FreeEnergyResult c = constrained_free_energy(m, SpinPrior::ising(2.0), 4, one, 0.01, 10, 1);
    const FreeEnergyResult u = exact_free_energy(m, SpinPrior::ising(2.0), 4, 10, 1);
    EXPECT_EQ(c.per_draw, u.per_draw);
    EXPECT_EQ(c.hit_fraction, 1.0);
    EXPECT_THROW(constrained_free_energy(m, SpinPrior::ising(2.0), 4, 0.5 * one, 0.01, 10, 1), BudgetError);

    const MixedModel m2(2, {{2, vec({0.5, 0.4})}});
    const SpinPrior prior = SpinPrior::potts(2);
    const FreeEnergyResult r = constrained_free_energy(m2, prior, 4, 0.5 * Matrix::Identity(2, 2), 0.3, 50, 2);
    EXPECT_LT(r.hit_fraction, 1.0);
    for (std::size_t d = 0; d < r.per_draw.size(); ++d) EXPECT_LE(r.per_draw[d], r.per_draw_unconstrained[d]);
}

TEST(System, FluctuationsShrinkWithN) {
    const MixedModel m = MixedModel::scalar({{2, 0.3}});
    double prev = std::numeric_limits<double>::infinity();
    for (int n : {4, 6, 8}) {
        const FreeEnergyResult r = exact_free_energy(m, SpinPrior::ising(2.0), n, 400, 8);
        double ss = 0.0;
        for (double v : r.per_draw) ss += (v - r.value) * (v - r.value);
        const double sd = std::sqrt(ss / (r.per_draw.size() - 1));
        EXPECT_LT(sd, prev);
        prev = sd;
    }
}

TEST(System, ThetaHamiltonianLinearCase) {
    const Theta th = theta(1, {1}, {vec({1.0, 0.0})});
    Rng rng = make_rng(9, Stream::Test, 0);
    const int n = 4;
    const std::vector<double> g = sample_theta_disorder(th, n, rng);
    const Matrix s = random_matrix(rng, n, 2);
    double want = 0.0;
    for (int i = 0; i < n; ++i) want += g[i] * s(i, 0);
    EXPECT_NEAR(perturbation_h_theta(th, s, g), want / 2.0, 1e-14);
    EXPECT_EQ(perturbation_h_theta(th, s, std::vector<double>(g.size(), 0.0)), 0.0);
}

TEST(System, ThetaHamiltonianExplicitSum) {
    // p = 2, n = (1, 1): N^{-2} Σ g_{(ij),(ab)} S_λ(σ_i σ_j) S_μ(σ_a σ_b).
    const Vector l = vec({1.0, 0.5}), u = vec({-0.3, 1.0});
    const Theta th = theta(2, {1, 1}, {l, u});
    Rng rng = make_rng(10, Stream::Test, 0);
    const int n = 3;
    const std::vector<double> g = sample_theta_disorder(th, n, rng);
    const Matrix s = random_matrix(rng, n, 2);
    double want = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (int a = 0; a < n; ++a)
                for (int b = 0; b < n; ++b) {
                    double sl = 0.0, su = 0.0;
                    for (int k = 0; k < 2; ++k) {
                        sl += l(k) * s(i, k) * s(j, k);
                        su += u(k) * s(a, k) * s(b, k);
                    }
                    want += g[(i * n + j) * n * n + a * n + b] * sl * su;
                }
    EXPECT_NEAR(perturbation_h_theta(th, s, g), want / 9.0, 1e-12);
}

TEST(System, ThetaCovariance) {
    Matrix a(3, 2), b(3, 2);
    a << 1, 1, 1, -1, -1, 1;
    b << 1, -1, 1, 1, -1, -1;
    for (const Theta& th : {theta(1, {1}, {vec({1.0, 0.5})}), theta(2, {2, 1}, {vec({1.0, 0.0}), vec({0.5, -0.5})})}) {
        const CovarianceCheck c = theta_covariance_check(th, a, b, 100000, 11);
        EXPECT_NEAR(c.empirical, c.formula, 3.0 * c.std_error);
    }
}

TEST(System, PerturbationWeights) {
    PerturbationSpec spec;
    spec.offset = 0;
    spec.thetas = {theta(1, {1}, {vec({1.0})}), theta(2, {1, 2}, {vec({1.0}), vec({-0.5})})};
    // j = p + Σn + Σ j0 + offset·m with j0(1) = 1, j0(-0.5) = 2.
    EXPECT_EQ(theta_j(spec), (std::vector<int>{3, 8}));
    const auto w = perturbation_weights(spec, 1, 1.0);
    EXPECT_DOUBLE_EQ(w[0], 0.125);
    EXPECT_DOUBLE_EQ(w[1], std::ldexp(1.0, -8));
    spec.offset = 22;
    EXPECT_EQ(theta_j(spec), (std::vector<int>{25, 52}));
    EXPECT_NEAR(strength(spec, 16), 2.0 * std::sqrt(2.0), 1e-12);
    spec.enabled = false;
    EXPECT_EQ(strength(spec, 16), 0.0);
    spec.gamma_s = 0.2;
    EXPECT_THROW(validate_perturbation(spec, 1), ValidationError);
}

TEST(System, PerturbationVarianceBound) {
    PerturbationSpec spec;
    spec.offset = 0;
    spec.thetas = {theta(1, {1}, {vec({1.0})})};
    const Matrix s = Matrix::Ones(4, 1);
    const PerturbationDisorder dis{{std::vector<double>(4, 0.0)}, {2.0}};
    // 2^{-3}·2 squared, times R = 1.
    EXPECT_NEAR(perturbation_variance(spec, s, dis.u, 1.0), 1.0 / 16.0, 1e-15);
    EXPECT_EQ(perturbation_h(spec, s, dis, 1.0), 0.0);
    // Support bound 1/8 makes b_p = 1/8 and the variance 4: rejected.
    EXPECT_THROW(perturbation_h(spec, s, dis, 0.125), ValidationError);
}

namespace {

// Exact Δ when the Gibbs measure is the normalized prior on the retained set:
// replicas are i.i.d., so every expectation is a finite weighted sum.
double iid_delta(const SpinPrior& prior, int n_sites, const Matrix& d, double eps, int n, const PairFunctional& f,
                 const Theta& th) {
    const ConfigEnumerator en(prior, n_sites);
    std::vector<Matrix> cfg;
    std::vector<double> w;
    for (std::size_t c = 0; c < en.count(); ++c) {
        double lw = 0.0;
        Matrix s = en.config(c, &lw);
        if (sup_norm(self_overlap(s) - d) >= eps) continue;
        const ModifierMatrix a = build_modifier(self_overlap(s), d, eps);
        cfg.push_back(s * a.a.transpose());
        w.push_back(std::exp(lw));
    }
    double z = 0.0;
    for (double v : w) z += v;
    for (double& v : w) v /= z;
    const std::size_t m = cfg.size();
    double t1 = 0.0, tf = 0.0, tc = 0.0, tfc = 0.0;
    for (std::size_t a = 0; a < m; ++a)
        for (std::size_t b = 0; b < m; ++b) {
            const double fab = f(overlap(cfg[a], cfg[b]));
            const double cab = theta_covariance(th, overlap(cfg[a], cfg[b]));
            tf += w[a] * w[b] * fab;
            tc += w[a] * w[b] * cab;
            tfc += w[a] * w[b] * fab * cab;
            for (std::size_t c = 0; c < m; ++c) t1 += w[a] * w[b] * w[c] * fab * theta_covariance(th, overlap(cfg[a], cfg[c]));
        }
    return std::abs(2.0 / n * t1 - tf * tc / n - tfc / n);
}

} // namespace

TEST(System, GgDiscrepancyConstantFunctional) {
    const MixedModel m = MixedModel::scalar({{2, 0.5}});
    PerturbationSpec pert;
    pert.thetas = {theta(1, {1}, {vec({1.0})})};
    const Theta th = theta(2, {1}, {vec({1.0})});
    GgBudget budget;
    budget.disorder_draws = 20;
    const GgResult r = gg_discrepancy(m, SpinPrior::ising(2.0), pert, 4, Matrix::Ones(1, 1), 0.5, 2,
                                      [](const Matrix&) { return 1.0; }, th, budget, 3);
    EXPECT_NEAR(r.value, 0.0, 1e-12);
    EXPECT_NEAR(r.f_c_new, r.c12, 1e-12);
}

TEST(System, GgDiscrepancyIidOracle) {
    const MixedModel zero = MixedModel::scalar({{2, 0.0}});
    PerturbationSpec pert;
    pert.enabled = false;
    GgBudget budget;
    budget.disorder_draws = 4;
    const Theta th = theta(1, {1}, {vec({1.0})});
    const Theta even = theta(2, {1}, {vec({1.0})});
    const SpinPrior prior = SpinPrior::ising(2.0);
    const Matrix d = Matrix::Ones(1, 1);
    const PairFunctional trace = [](const Matrix& r) { return r.trace(); };
    const PairFunctional square = [](const Matrix& r) { return r.trace() * r.trace(); };
    for (int n : {2, 3}) {
        for (const PairFunctional& f : {trace, square}) {
            const GgResult r = gg_discrepancy(zero, prior, pert, 4, d, 0.5, n, f, th, budget, 1);
            EXPECT_NEAR(r.value, iid_delta(prior, 4, d, 0.5, n, f, th), 1e-12);
            EXPECT_NEAR(r.std_error, 0.0, 1e-12);
        }
        // Odd f against even C: the discrepancy vanishes.
        EXPECT_NEAR(gg_discrepancy(zero, prior, pert, 4, d, 0.5, n, trace, even, budget, 1).value, 0.0, 1e-12);
    }
    // Even f against even C does not vanish: Δ = Cov(f, C)/n > 0.
    EXPECT_GT(gg_discrepancy(zero, prior, pert, 4, d, 0.5, 2, square, even, budget, 1).value, 1e-3);
}

TEST(System, GgDiscrepancyErrors) {
    const MixedModel m = MixedModel::scalar({{2, 0.3}});
    PerturbationSpec pert;
    const Theta th = theta(1, {1}, {vec({1.0})});
    const PairFunctional f = [](const Matrix& r) { return r.trace(); };
    EXPECT_THROW(gg_discrepancy(m, SpinPrior::ising(2.0), pert, 4, Matrix::Ones(1, 1), 0.5, 1, f, th, {}, 1),
                 ValidationError);
    EXPECT_THROW(gg_discrepancy(m, SpinPrior::ising(2.0), pert, 4, 0.2 * Matrix::Ones(1, 1), 0.1, 2, f, th, {}, 1),
                 BudgetError);
}

TEST(System, GgDiscrepancyThreadIndependent) {
    const MixedModel m = MixedModel::scalar({{2, 0.3}});
    PerturbationSpec pert;
    pert.offset = 0;
    pert.thetas = {theta(1, {1}, {vec({1.0})})};
    GgBudget budget;
    budget.disorder_draws = 12;
    budget.u_draws = 2;
    const PairFunctional f = [](const Matrix& r) { return r.trace(); };
    const Theta th = pert.thetas[0];
    const GgResult a = gg_discrepancy(m, SpinPrior::ising(2.0), pert, 5, Matrix::Ones(1, 1), 0.5, 2, f, th, budget, 4, 1);
    const GgResult b = gg_discrepancy(m, SpinPrior::ising(2.0), pert, 5, Matrix::Ones(1, 1), 0.5, 2, f, th, budget, 4, 3);
    EXPECT_EQ(a.value, b.value);
    EXPECT_EQ(a.std_error, b.std_error);
}
