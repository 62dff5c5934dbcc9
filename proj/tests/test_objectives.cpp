#include "damtl/objectives.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace damtl;

namespace
{
    std::mt19937_64 gen(2024);
}

TEST(Objectives, InnerGradientVanishesAtNoiseFreeSolution)
{
    const Matrix x = testutil::random_matrix(6, 4, gen);
    const Vector w = testutil::random_matrix(4, 1, gen);
    const Vector y = x * w;
    EXPECT_LT(inner_gradient(w, x, y, Vector::Ones(6)).norm(), 1e-12);
}

TEST(Objectives, InnerGradientMatchesFiniteDifferences)
{
    for (int trial = 0; trial < 20; ++trial)
    {
        const Matrix x = testutil::random_matrix(5, 3, gen);
        const Vector y = testutil::random_matrix(5, 1, gen);
        const Vector oi = (testutil::random_matrix(5, 1, gen).array().abs() + 0.2).matrix();
        const Vector w = testutil::random_matrix(3, 1, gen);
        const auto f = [&](const Vector &v) { return inner_loss(v, x, y, oi); };
        EXPECT_LT(relative_error(inner_gradient(w, x, y, oi), finite_difference_gradient(f, w)), 1e-6);
    }
}

TEST(Objectives, ConsensusGradientOfPairIsDifference)
{
    Vector a(2), b(2);
    a << 1, 2;
    b << 3, -1;
    std::vector<NeighborModel> nb{{1.0, b}};
    EXPECT_EQ(consensus_gradient(a, nb), a - b);
    EXPECT_DOUBLE_EQ(consensus_value(a, nb), 0.5 * (a - b).squaredNorm());
}

TEST(Objectives, EnsembleMeanColumnsAreRowMeans)
{
    Matrix w(2, 3);
    w << 1, 2, 3, 4, 6, 8;
    const Matrix m = ensemble_mean(w);
    for (int c = 0; c < 3; ++c)
    {
        EXPECT_DOUBLE_EQ(m(0, c), 2.0);
        EXPECT_DOUBLE_EQ(m(1, c), 6.0);
    }
}

TEST(Objectives, TaskPenaltyMatchesTripleLoop)
{
    const Matrix w = testutil::random_matrix(4, 5, gen);
    const Matrix m = ensemble_mean(w);
    const Matrix th = testutil::random_spd(5, gen);
    double brute = 0.0;
    for (int r = 0; r < 4; ++r)
        for (int a = 0; a < 5; ++a)
            for (int b = 0; b < 5; ++b)
                brute += (w(r, a) - m(r, a)) * th(a, b) * (w(r, b) - m(r, b));
    EXPECT_NEAR(task_penalty_value(w, m, th), brute, 1e-12 * std::max(1.0, std::abs(brute)));
}

TEST(Objectives, TaskPenaltyGradientHoldsMeanFixed)
{
    const Matrix w = testutil::random_matrix(3, 4, gen);
    const Matrix m = ensemble_mean(w);
    const Matrix th = testutil::random_spd(4, gen);
    for (int i = 0; i < 4; ++i)
    {
        const auto f = [&](const Vector &col) {
            Matrix w2 = w;
            w2.col(i) = col;
            return task_penalty_value(w2, m, th);
        };
        EXPECT_LT(relative_error(task_penalty_gradient(i, w, m, th), finite_difference_gradient(f, w.col(i))), 1e-5);
    }
}

TEST(Objectives, OuterGradientAtTargetIdentity)
{
    const Matrix s = testutil::random_spd(4, gen);
    const Matrix eye = Matrix::Identity(4, 4);
    EXPECT_LT((outer_gradient(eye, s, 1.0, eye) - (s - eye)).norm(), 1e-14);
}

TEST(Objectives, OuterGradientIsExactlySymmetric)
{
    for (int trial = 0; trial < 20; ++trial)
    {
        const Matrix th = testutil::random_spd(6, gen);
        const Matrix s = testutil::random_spd(6, gen);
        const Matrix noise = testutil::random_matrix(6, 6, gen);
        const Matrix g = outer_gradient(th, s, 0.3, Matrix::Identity(6, 6), &noise);
        EXPECT_EQ(g, g.transpose());
    }
}

TEST(Objectives, OuterGradientMatchesInverseOracle)
{
    const Matrix th = testutil::random_spd(5, gen);
    const Matrix s = testutil::random_spd(5, gen);
    const Matrix inv = testutil::from_dense(oracle::inverse(oracle::to_dense(th)));
    const Matrix expect = s + 0.7 * (th - Matrix::Identity(5, 5)) - inv;
    EXPECT_LT((outer_gradient(th, s, 0.7, Matrix::Identity(5, 5)) - 0.5 * (expect + expect.transpose())).norm(),
              1e-10);
}

TEST(Objectives, OuterGradientRejectsSingularTheta)
{
    Matrix th = Matrix::Zero(3, 3);
    th(0, 0) = 1.0;
    try
    {
        outer_gradient(th, Matrix::Zero(3, 3), 1.0, Matrix::Identity(3, 3));
        FAIL();
    }
    catch (const Error &e)
    {
        EXPECT_EQ(e.code(), ErrorCode::SingularTheta);
    }
}

TEST(Objectives, LogDetMatchesEigenvalueSum)
{
    const Matrix a = testutil::random_spd(6, gen);
    double ref = 0.0;
    for (double ev : oracle::jacobi_eigenvalues(oracle::to_dense(a)))
        ref += std::log(ev);
    EXPECT_NEAR(log_det_spd(a), ref, 1e-10);
    EXPECT_THROW(log_det_spd(-a), Error);
}

TEST(Objectives, KappaOfIdentityDesign)
{
    EXPECT_DOUBLE_EQ(kappa(Matrix::Identity(3, 3), Vector::Ones(3)), 2.0);
    Matrix rank_deficient(3, 2);
    rank_deficient << 1, 2, 2, 4, 3, 6;
    EXPECT_EQ(kappa(rank_deficient, Vector::Ones(3)), 0.0);
}

// Property: the inner loss is strongly convex with modulus kappa / 2 = lambda_min(X^T Omega^-1 X):
// f(w1) >= f(w2) + <grad f(w2), w1 - w2> + (kappa/4) |w1 - w2|^2.
TEST(Objectives, InnerLossStrongConvexity)
{
    for (int trial = 0; trial < 200; ++trial)
    {
        const Matrix x = testutil::random_matrix(6, 3, gen);
        const Vector y = testutil::random_matrix(6, 1, gen);
        const Vector oi = (testutil::random_matrix(6, 1, gen).array().abs() + 0.1).matrix();
        const Vector w1 = testutil::random_matrix(3, 1, gen);
        const Vector w2 = testutil::random_matrix(3, 1, gen);
        const double k = kappa(x, oi);
        const double lhs = inner_loss(w1, x, y, oi);
        const double rhs = inner_loss(w2, x, y, oi) + inner_gradient(w2, x, y, oi).dot(w1 - w2) +
                           0.25 * k * (w1 - w2).squaredNorm();
        EXPECT_GE(lhs, rhs - 1e-10);
    }
}
