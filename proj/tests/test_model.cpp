#include "costco/model.hpp"
#include "costco/random.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <random>

namespace costco {
namespace {

Eigen::MatrixXd unit_columns(CounterRng& rng, Index n, Index R) {
    std::normal_distribution<double> g;
    Eigen::MatrixXd m(n, R);
    for (Index j = 0; j < R; ++j)
        for (Index i = 0; i < n; ++i) m(i, j) = g(rng);
    return m.colwise().normalized();
}

CoupledModel random_model(CounterRng& rng, const std::vector<Index>& dims, Index R, Index width) {
    std::uniform_real_distribution<double> u(0.5, 3.0);
    CoupledModel m;
    m.cp.weights.resize(R);
    for (Index r = 0; r < R; ++r) m.cp.weights[r] = u(rng);
    for (Index n : dims) m.cp.factors.push_back(unit_columns(rng, n, R));
    Eigen::VectorXd sigma(R);
    for (Index r = 0; r < R; ++r) sigma[r] = u(rng);
    m.covariates.push_back({0, sigma, unit_columns(rng, width, R)});
    return m;
}

CoupledModel permuted(const CoupledModel& m, const std::vector<Index>& perm) {
    CoupledModel out = m;
    for (std::size_t t = 0; t < perm.size(); ++t) {
        const auto r = static_cast<Index>(t);
        out.cp.weights[r] = m.cp.weights[perm[t]];
        for (std::size_t k = 0; k < m.cp.factors.size(); ++k) out.cp.factors[k].col(r) = m.cp.factors[k].col(perm[t]);
        out.covariates[0].sigma[r] = m.covariates[0].sigma[perm[t]];
        out.covariates[0].V.col(r) = m.covariates[0].V.col(perm[t]);
    }
    return out;
}

TEST(ReconstructCovariate, SingleEntry) {
    CoupledModel m = empty_model(Dims{2, 2, 2}, {{0, 3}});
    m.cp.weights = Eigen::VectorXd::Ones(1);
    for (auto& f : m.cp.factors) f = Eigen::Vector2d(1, 0);
    m.covariates[0].sigma = Eigen::VectorXd::Constant(1, 2.0);
    m.covariates[0].V = Eigen::Vector3d(0, 1, 0);
    Eigen::MatrixXd want = Eigen::MatrixXd::Zero(2, 3);
    want(0, 1) = 2.0;
    EXPECT_EQ(reconstruct_covariate(m, 0), want);
}

TEST(ReconstructCovariate, EmptyModelIsZeroAndUncoupledThrows) {
    const CoupledModel m = empty_model(Dims{2, 3}, {{1, 4}});
    EXPECT_EQ(reconstruct_covariate(m, 1), Eigen::MatrixXd::Zero(3, 4));
    EXPECT_THROW(reconstruct_covariate(m, 0), DimensionError);
}

TEST(ReconstructCovariate, MatchesDoubleLoop) {
    CounterRng rng(21);
    const CoupledModel m = random_model(rng, {5, 3, 4}, 2, 6);
    const Eigen::MatrixXd got = reconstruct_covariate(m, 0);
    for (Index i = 0; i < 5; ++i)
        for (Index l = 0; l < 6; ++l) {
            double want = 0;
            for (Index r = 0; r < 2; ++r)
                want += m.covariates[0].sigma[r] * m.cp.factors[0](i, r) * m.covariates[0].V(l, r);
            EXPECT_NEAR(got(i, l), want, 1e-14);
        }
}

TEST(Align, IdentityOnTruth) {
    CounterRng rng(22);
    const CoupledModel t = random_model(rng, {6, 5, 4}, 3, 5);
    const CoupledModel a = align(t, t);
    EXPECT_EQ(a.cp.weights, t.cp.weights);
    for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(a.cp.factors[k], t.cp.factors[k]);
    const MetricsReport rep = metrics(t, t, reconstruct(t.cp));
    EXPECT_EQ(rep.tensor_error, 0.0);
    EXPECT_EQ(rep.weight_error, 0.0);
    for (double e : rep.component_errors) EXPECT_EQ(e, 0.0);
}

TEST(Align, RestoresSwappedColumns) {
    CounterRng rng(23);
    const CoupledModel t = random_model(rng, {6, 5, 4}, 2, 5);
    const CoupledModel a = align(permuted(t, {1, 0}), t);
    const MetricsReport rep = metrics(a, t, reconstruct(t.cp));
    EXPECT_LT(rep.tensor_error, 1e-15);
    EXPECT_EQ(rep.weight_error, 0.0);
    for (double e : rep.component_errors) EXPECT_EQ(e, 0.0);
}

TEST(Align, RestoresEvenSignFlips) {
    CounterRng rng(24);
    const CoupledModel t = random_model(rng, {6, 5, 4}, 2, 5);
    CoupledModel flipped = t;
    flipped.cp.factors[0].col(1) *= -1.0;
    flipped.cp.factors[1].col(1) *= -1.0;
    flipped.covariates[0].V.col(1) *= -1.0;
    // even flips leave the tensor alone
    EXPECT_LT((reconstruct(flipped.cp).values() - reconstruct(t.cp).values()).norm(), 1e-13);
    const MetricsReport rep = metrics(flipped, t, reconstruct(t.cp));
    for (double e : rep.component_errors) EXPECT_EQ(e, 0.0);
    EXPECT_EQ(align(flipped, t).covariates[0].V, t.covariates[0].V);
}

TEST(Align, IdempotentAndReconstructionPreservingUnderEvenFlips) {
    CounterRng rng(25);
    std::uniform_int_distribution<int> coin(0, 1);
    for (int trial = 0; trial < 50; ++trial) {
        const CoupledModel t = random_model(rng, {5, 4, 6}, 3, 4);
        CoupledModel e = random_model(rng, {5, 4, 6}, 3, 4);
        const CoupledModel once = align(e, t);
        const CoupledModel twice = align(once, t);
        EXPECT_EQ(once.cp.weights, twice.cp.weights);
        for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(once.cp.factors[k], twice.cp.factors[k]);

        // near-truth estimate with even flips: alignment leaves the tensor alone
        CoupledModel close = t;
        for (std::size_t k = 0; k < 3; ++k)
            close.cp.factors[k] = (close.cp.factors[k] + 0.01 * unit_columns(rng, close.cp.factors[k].rows(), 3))
                                      .colwise()
                                      .normalized();
        for (Index r = 0; r < 3; ++r)
            if (coin(rng)) {
                close.cp.factors[0].col(r) *= -1.0;
                close.cp.factors[2].col(r) *= -1.0;
            }
        const Eigen::VectorXd before = reconstruct(close.cp).values();
        EXPECT_LE((reconstruct(align(close, t).cp).values() - before).norm(), 1e-12 * before.norm());
    }
}

TEST(Metrics, InvariantUnderPermutationAndEvenFlips) {
    CounterRng rng(26);
    std::vector<Index> perm{0, 1, 2};
    std::uniform_int_distribution<int> coin(0, 1);
    for (int trial = 0; trial < 50; ++trial) {
        const CoupledModel t = random_model(rng, {5, 4, 6}, 3, 4);
        CoupledModel e = t;
        for (Index r = 0; r < 3; ++r) e.cp.factors[1].col(r) += 0.05 * unit_columns(rng, 4, 1);
        e.cp.factors[1] = e.cp.factors[1].colwise().normalized();
        const MetricsReport base = metrics(e, t, reconstruct(t.cp));

        std::shuffle(perm.begin(), perm.end(), rng);
        CoupledModel moved = permuted(e, perm);
        for (Index r = 0; r < 3; ++r)
            if (coin(rng)) {
                moved.cp.factors[0].col(r) *= -1.0;
                moved.cp.factors[1].col(r) *= -1.0;
            }
        const MetricsReport rep = metrics(moved, t, reconstruct(t.cp));
        EXPECT_NEAR(rep.tensor_error, base.tensor_error, 1e-12);
        EXPECT_NEAR(rep.weight_error, base.weight_error, 1e-15);
        for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(rep.component_errors[k], base.component_errors[k], 1e-15);
    }
}

TEST(Metrics, DoubledWeights) {
    CounterRng rng(27);
    const CoupledModel t = random_model(rng, {5, 4, 6}, 2, 4);
    CoupledModel e = t;
    e.cp.weights *= 2.0;
    const MetricsReport rep = metrics(e, t, reconstruct(t.cp));
    EXPECT_DOUBLE_EQ(rep.weight_error, 1.0);
    for (double c : rep.component_errors) EXPECT_EQ(c, 0.0);
}

TEST(Metrics, MatchesStraightLineFormula) {
    CounterRng rng(28);
    const CoupledModel t = random_model(rng, {4, 3, 5}, 2, 3);
    CoupledModel e = t;
    e.cp.weights[0] *= 1.1;
    e.cp.factors[2](0, 1) += 0.2;
    e.cp.factors[2].col(1).normalize();
    const DenseTensord truth = reconstruct(t.cp);
    const MetricsReport rep = metrics(e, t, truth);

    double num = 0, den = 0;
    for (Index i = 0; i < 4; ++i)
        for (Index j = 0; j < 3; ++j)
            for (Index k = 0; k < 5; ++k) {
                double a = 0, b = 0;
                for (Index r = 0; r < 2; ++r) {
                    a += t.cp.weights[r] * t.cp.factors[0](i, r) * t.cp.factors[1](j, r) * t.cp.factors[2](k, r);
                    b += e.cp.weights[r] * e.cp.factors[0](i, r) * e.cp.factors[1](j, r) * e.cp.factors[2](k, r);
                }
                num += (a - b) * (a - b);
                den += a * a;
            }
    EXPECT_NEAR(rep.tensor_error, std::sqrt(num / den), 1e-12);
    EXPECT_NEAR(rep.weight_error, (t.cp.weights - e.cp.weights).norm() / t.cp.weights.norm(), 1e-15);
    EXPECT_NEAR(rep.component_errors[2], (t.cp.factors[2] - e.cp.factors[2]).norm() / t.cp.factors[2].norm(), 1e-15);
    EXPECT_EQ(rep.component_errors[0], 0.0);
}

TEST(CoupledModel, ValidateCatchesBadShapes) {
    CounterRng rng(29);
    CoupledModel m = random_model(rng, {4, 3}, 2, 3);
    EXPECT_NO_THROW(m.validate());
    CoupledModel bad = m;
    bad.cp.weights[1] = 0.0;
    EXPECT_THROW(bad.validate(), DimensionError);
    bad = m;
    bad.covariates[0].V.col(0) *= 2.0;
    EXPECT_THROW(bad.validate(), DimensionError);
    bad = m;
    bad.covariates[0].sigma.resize(1);
    EXPECT_THROW(bad.validate(), DimensionError);
}

}  // namespace
}  // namespace costco
