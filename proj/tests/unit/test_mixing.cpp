#include <gtest/gtest.h>

#include "support/instances.hpp"
#include "vecspin/mixing.hpp"

using namespace vecspin;
using testing_support::random_gram;

TEST(Mixing, XiScalarByHand) {
    const MixedModel m = MixedModel::scalar({{2, 0.5}});
    EXPECT_NEAR(m.xi(0, 0, 0.6), 0.09, 1e-15);
    EXPECT_EQ(m.xi(0, 0, 0.0), 0.0);
    const MixedModel m4 = MixedModel::scalar({{2, 0.5}, {4, 0.1}});
    EXPECT_NEAR(m4.xi(0, 0, 1.0), 0.26, 1e-15);
}

TEST(Mixing, ThetaScalarByHand) {
    const MixedModel m = MixedModel::scalar({{2, 0.5}});
    EXPECT_NEAR(m.theta(0, 0, 0.6), 0.09, 1e-15);
    EXPECT_EQ(m.theta(0, 0, 0.0), 0.0);
    EXPECT_NEAR(MixedModel::scalar({{4, 0.1}}).theta(0, 0, 1.0), 0.03, 1e-15);
}

TEST(Mixing, ThetaIsXTimesXiPrimeMinusXi) {
    const MixedModel m(2, {{2, Vector::Constant(2, 0.7)}, {4, (Vector(2) << 0.2, 0.4).finished()}});
    for (double x : {-0.8, -0.1, 0.0, 0.3, 0.9})
        for (int k = 0; k < 2; ++k)
            for (int kp = 0; kp < 2; ++kp)
                EXPECT_NEAR(m.theta(k, kp, x), x * m.xi_prime(k, kp, x) - m.xi(k, kp, x), 1e-14);
}

TEST(Mixing, HadamardForms) {
    const MixedModel m(2, {{2, (Vector(2) << 1.0, 0.5).finished()}});
    Matrix g(2, 2);
    g << 1.0, 0.5, 0.5, 1.0;
    Matrix want(2, 2);
    want << 2.0, 0.5, 0.5, 0.5;
    EXPECT_LT(sup_norm(m.xi_prime_hadamard(g) - want), 1e-15);
    EXPECT_LT(sup_norm(m.xi_prime(g) - want), 1e-15);
    EXPECT_EQ(sup_norm(m.xi_prime_hadamard(Matrix::Zero(2, 2))), 0.0);

    const MixedModel s = MixedModel::scalar({{2, 0.5}});
    const Matrix q = Matrix::Constant(1, 1, 0.8);
    EXPECT_NEAR(s.xi_prime_hadamard(q)(0, 0), 0.4, 1e-15);
    EXPECT_NEAR(s.theta_hadamard(q)(0, 0), 0.16, 1e-15);
}

TEST(Mixing, HadamardAgreesWithEntrywise) {
    Rng rng = make_rng(1, Stream::Test, 0);
    for (int t = 0; t < 20; ++t) {
        const int kappa = 1 + t % 3;
        const MixedModel m = testing_support::random_model(rng, kappa);
        const Matrix g = random_gram(rng, kappa);
        EXPECT_LT(sup_norm(m.xi_prime_hadamard(g) - m.xi_prime(g)), 1e-13);
        EXPECT_LT(sup_norm(m.theta_hadamard(g) - m.theta(g)), 1e-13);
    }
}

TEST(Mixing, HamiltonianCovariance) {
    const MixedModel m = MixedModel::scalar({{2, 0.5}});
    EXPECT_NEAR(hamiltonian_covariance(m, Matrix::Constant(1, 1, 1.0)), 0.25, 1e-15);
    EXPECT_EQ(hamiltonian_covariance(m, Matrix::Zero(1, 1)), 0.0);
}

TEST(Mixing, IncrementsArePsdForMonotonePairs) {
    Rng rng = make_rng(2, Stream::Test, 0);
    for (int t = 0; t < 200; ++t) {
        const int kappa = 1 + t % 4;
        const MixedModel m = testing_support::random_model(rng, kappa);
        const Matrix lo = random_gram(rng, kappa);
        const Matrix hi = lo + random_gram(rng, kappa, 0.5);
        EXPECT_GE(min_eigenvalue(m.xi_prime_hadamard(hi) - m.xi_prime_hadamard(lo)), -1e-9);
        EXPECT_GE(min_eigenvalue(m.theta_hadamard(hi) - m.theta_hadamard(lo)), -1e-9);
    }
}

TEST(Mixing, RejectsBadInput) {
    EXPECT_THROW(MixedModel::scalar({{3, 0.5}}), ValidationError);
    EXPECT_THROW(MixedModel::scalar({{2, -0.1}}), ValidationError);
    EXPECT_THROW(MixedModel(2, {{2, Vector::Constant(1, 0.5)}}), ValidationError);
    const MixedModel m = MixedModel::scalar({{2, 0.5}});
    EXPECT_THROW(m.xi(1, 0, 0.5), ValidationError);
    EXPECT_THROW(m.xi_prime_hadamard(Matrix::Zero(2, 2)), ValidationError);
}

TEST(Mixing, CoefficientWarnings) {
    const MixedModel m = MixedModel::scalar({{2, 0.5}, {4, 0.01}});
    // c = 1: caps are 1/4 and 1/16.
    const auto w = m.coefficient_warnings(1.0);
    ASSERT_EQ(w.size(), 1u);
    EXPECT_NE(w[0].find("beta_2"), std::string::npos);
}
