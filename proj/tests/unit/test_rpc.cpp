#include <gtest/gtest.h>

#include "support/instances.hpp"
#include "vecspin/rpc.hpp"

using namespace vecspin;
using namespace testing_support;

namespace {

Path scalar_path(std::vector<double> x, std::vector<double> q) {
    std::vector<Matrix> g;
    for (double v : q) g.push_back(Matrix::Constant(1, 1, v));
    return Path(std::move(x), std::move(g));
}

} // namespace

TEST(Cascade, WeightsNormalized) {
    const CascadeTree t = sample_cascade({0.3, 0.7}, 16, 1);
    EXPECT_EQ(t.leaves(), 256u);
    double s = 0.0;
    for (double w : t.weights) s += w;
    EXPECT_NEAR(s, 1.0, 1e-12);
    const CascadeTree two = sample_cascade({0.5}, 2, 4);
    ASSERT_EQ(two.leaves(), 2u);
    EXPECT_NEAR(two.weights[0] + two.weights[1], 1.0, 1e-12);
}

TEST(Cascade, SeedDeterminism) {
    const CascadeTree a = sample_cascade({0.4}, 32, 77);
    const CascadeTree b = sample_cascade({0.4}, 32, 77);
    const CascadeTree c = sample_cascade({0.4}, 32, 78);
    EXPECT_EQ(a.weights, b.weights);
    EXPECT_NE(a.weights, c.weights);
}

TEST(Cascade, RejectsBoundaryParameters) {
    EXPECT_THROW(sample_cascade({0.0}, 8, 1), ValidationError);
    EXPECT_THROW(sample_cascade({1.0}, 8, 1), ValidationError);
    EXPECT_THROW(sample_cascade({0.6, 0.3}, 8, 1), ValidationError);
}

TEST(Cascade, PoissonDirichletSecondMoment) {
    // E Σ v_α² = 1 − x for PD(x, 0).
    for (double x : {0.3, 0.6}) {
        std::vector<double> s;
        for (std::uint64_t b = 0; b < 400; ++b) {
            const CascadeTree t = sample_cascade({x}, 4096, 1000 + b);
            double q = 0.0;
            for (double w : t.weights) q += w * w;
            s.push_back(q);
        }
        const MeanError me = mean_error(s);
        EXPECT_NEAR(me.mean, 1.0 - x, 3.0 * me.std_error + 2e-3) << "x=" << x;
    }
}

TEST(Cascade, AncestorDepth) {
    EXPECT_EQ(ancestor_depth(std::vector<int>{1, 2, 3}, std::vector<int>{1, 2, 3}), 3);
    EXPECT_EQ(ancestor_depth(std::vector<int>{1, 2, 3}, std::vector<int>{1, 5, 3}), 1);
    EXPECT_EQ(ancestor_depth(std::vector<int>{0, 2}, std::vector<int>{1, 2}), 0);
    const CascadeTree t = sample_cascade({0.3, 0.6}, 4, 1);
    EXPECT_EQ(ancestor_depth(t, 0, 0), 2);
    EXPECT_EQ(ancestor_depth(t, 0, 1), 1);
    EXPECT_EQ(ancestor_depth(t, 0, 4), 0);
    EXPECT_EQ(t.coordinates(6), (std::vector<int>{1, 2}));
}

TEST(Cascade, FieldCovarianceByDepth) {
    const MixedModel m = MixedModel::scalar({{2, 0.6}});
    const Path p = scalar_path({0.3, 0.6}, {0.4, 1.0});
    const CascadeTree t = sample_cascade(p.xs(), 3, 5);
    // Leaves 0, 1 share depth 1; leaves 0, 3 share depth 0.
    std::vector<double> self, d1, d0, ys, y1;
    for (std::uint64_t s = 0; s < 20000; ++s) {
        const TreeGaussianField f = sample_fields(t, m, p, s);
        self.push_back(f.z(0, 0) * f.z(0, 0));
        d1.push_back(f.z(0, 0) * f.z(0, 1));
        d0.push_back(f.z(0, 0) * f.z(0, 3));
        ys.push_back(f.y(0) * f.y(0));
        y1.push_back(f.y(0) * f.y(1));
    }
    const auto check = [](const std::vector<double>& v, double want) {
        const MeanError me = mean_error(v);
        EXPECT_NEAR(me.mean, want, 3.5 * me.std_error + 1e-12);
    };
    check(self, 2 * 0.36 * 1.0);
    check(d1, 2 * 0.36 * 0.4);
    check(d0, 0.0);
    check(ys, 0.36 * 1.0);
    check(y1, 0.36 * 0.16);
}

TEST(Cascade, YFunctionalClosedForm) {
    const MixedModel m = MixedModel::scalar({{2, 0.5}});
    const Path p = scalar_path({0.5}, {1.0});
    const OracleEstimate y = simulate_y_functional(m, p, 20, 200, 256, 11);
    EXPECT_NEAR(theta_correction(m, p), 0.0625, 1e-15);
    EXPECT_NEAR(y.value, 0.0625, 3.0 * y.std_error);
    const OracleEstimate zero = simulate_y_functional(MixedModel::scalar({{2, 0.0}}), p, 20, 10, 64, 1);
    EXPECT_NEAR(zero.value, 0.0, 1e-15);
    EXPECT_THROW(simulate_y_functional(m, p, 0, 10, 64, 1), ValidationError);
}

TEST(Cascade, YFunctionalTrendTowardsXOne) {
    // As x_0 grows the closed form grows linearly to ½ Sum θ(D) = 0.125.
    const MixedModel m = MixedModel::scalar({{2, 0.5}});
    double prev = 0.0;
    for (double x : {0.1, 0.2, 0.3}) {
        const OracleEstimate y = simulate_y_functional(m, scalar_path({x}, {1.0}), 10, 200, 256, 3);
        EXPECT_NEAR(y.value, 0.125 * x, 3.0 * y.std_error);
        EXPECT_GT(y.value, prev);
        prev = y.value;
    }
}

TEST(Cascade, SimulatePhiMatchesClosedForm) {
    const MixedModel m = MixedModel::scalar({{2, 0.5}});
    const OracleEstimate s = simulate_phi(m, SpinPrior::ising(2.0), LambdaMatrix(1), scalar_path({1.0}, {1.0}), 200, 128, 2);
    EXPECT_NEAR(s.value, std::log(2.0) + 0.25, 3.0 * s.std_error);
}

TEST(Cascade, SimulatePhiWithoutCouplingsIsExact) {
    const LambdaMatrix l(1, Vector::Constant(1, 0.4));
    const OracleEstimate s =
        simulate_phi(MixedModel::scalar({{2, 0.0}}), SpinPrior::ising(), l, scalar_path({0.5}, {1.0}), 5, 16, 1);
    EXPECT_NEAR(s.value, eval_inner(SpinPrior::ising(), l, Vector::Zero(1)), 1e-14);
    EXPECT_NEAR(s.std_error, 0.0, 1e-14);
}

TEST(Cascade, SimulatePhiMatchesQuadratureInTwoDimensions) {
    Rng rng = make_rng(12, Stream::Test, 0);
    const MixedModel m = random_model(rng, 2, 0.2, 0.4);
    const SpinPrior prior = SpinPrior::hypercube(2);
    const Path p = random_path(rng, 2, 2, 0.2, 0.6);
    const LambdaMatrix l = random_lambda(rng, 2);
    EvalSpec spec;
    const double exact = eval_phi(m, prior, l, p, spec).value;
    const OracleEstimate s = simulate_phi(m, prior, l, p, 100, 64, 3);
    EXPECT_NEAR(s.value, exact, 3.0 * s.std_error);
}

TEST(Cascade, SimulationIsThreadIndependent) {
    const MixedModel m = MixedModel::scalar({{2, 0.5}});
    const Path p = scalar_path({0.3, 0.6}, {0.5, 1.0});
    const OracleEstimate a = simulate_phi(m, SpinPrior::ising(), LambdaMatrix(1), p, 8, 16, 4, 1);
    const OracleEstimate b = simulate_phi(m, SpinPrior::ising(), LambdaMatrix(1), p, 8, 16, 4, 3);
    EXPECT_EQ(a.value, b.value);
    EXPECT_EQ(a.std_error, b.std_error);
}

TEST(Cascade, SplitBound) {
    const MixedModel m = MixedModel::scalar({{2, 0.5}});
    const Path p = scalar_path({0.4}, {1.0});
    const auto one = [](const CascadeTree&, const TreeGaussianField& f) {
        std::vector<double> a(static_cast<std::size_t>(f.z.cols()));
        for (std::size_t i = 0; i < a.size(); ++i) a[i] = std::log(2.0 * std::cosh(f.z(0, static_cast<Eigen::Index>(i))));
        return std::vector<std::vector<double>>{a};
    };
    const SplitCheck single = log_sum_split_check(m, p, one, 50, 64, 1);
    EXPECT_NEAR(single.lhs, single.rhs, 1e-12);

    const auto halves = [](const CascadeTree&, const TreeGaussianField& f) {
        const double ninf = -std::numeric_limits<double>::infinity();
        std::vector<double> pos(static_cast<std::size_t>(f.z.cols())), neg(pos.size());
        for (std::size_t i = 0; i < pos.size(); ++i) {
            const double z = f.z(0, static_cast<Eigen::Index>(i));
            pos[i] = z >= 0 ? z : ninf;
            neg[i] = z < 0 ? -z : ninf;
        }
        return std::vector<std::vector<double>>{pos, neg};
    };
    const SplitCheck split = log_sum_split_check(m, p, halves, 100, 64, 2);
    EXPECT_EQ(split.parts, 2);
    EXPECT_LE(split.lhs, split.rhs + 3.0 * std::hypot(split.lhs_se, split.max_part_se));
}
