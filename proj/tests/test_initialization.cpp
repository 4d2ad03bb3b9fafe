#include "costco/initialization.hpp"
#include "costco/random.hpp"

#include <gtest/gtest.h>

#include <Eigen/SVD>

#include <random>

namespace costco {
namespace {

Eigen::MatrixXd gaussian(CounterRng& rng, Index rows, Index cols) {
    std::normal_distribution<double> g;
    Eigen::MatrixXd m(rows, cols);
    for (Index j = 0; j < cols; ++j)
        for (Index i = 0; i < rows; ++i) m(i, j) = g(rng);
    return m;
}

Eigen::MatrixXd orthonormal(CounterRng& rng, Index n, Index R) {
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(gaussian(rng, n, R));
    return qr.householderQ() * Eigen::MatrixXd::Identity(n, R);
}

CPFactorsd cp_of(const Eigen::VectorXd& w, std::vector<Eigen::MatrixXd> f) {
    CPFactorsd cp;
    cp.weights = w;
    cp.factors = std::move(f);
    return cp;
}

// |<a, b>| for unit vectors; 1 means equal up to sign
double overlap(const Eigen::VectorXd& a, const Eigen::VectorXd& b) { return std::abs(a.dot(b)); }

TEST(SvdInit, SingleSpike) {
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(3, 4);
    M(0, 1) = 2.0;
    const SvdResult s = svd_init(M, 1);
    EXPECT_NEAR(s.sigma[0], 2.0, 1e-12);
    EXPECT_LT((s.U.col(0) - Eigen::Vector3d(1, 0, 0)).norm(), 1e-12);
    EXPECT_LT((s.V.col(0) - Eigen::Vector4d(0, 1, 0, 0)).norm(), 1e-12);
}

TEST(SvdInit, ZeroMatrixIsDegenerate) {
    EXPECT_THROW(svd_init(Eigen::MatrixXd::Zero(4, 3), 1), DegenerateComponent);
    Eigen::MatrixXd rank1 = Eigen::MatrixXd::Zero(4, 3);
    rank1(1, 1) = 1.0;
    EXPECT_THROW(svd_init(rank1, 2), DegenerateComponent);
}

TEST(SvdInit, AgreesWithDenseSvdOnRandomMatrices) {
    CounterRng rng(61);
    for (int trial = 0; trial < 20; ++trial) {
        const Index rows = 6 + trial % 5, cols = 4 + trial % 4, R = 1 + trial % 3;
        const Eigen::MatrixXd M = gaussian(rng, rows, cols);
        const SvdResult s = svd_init(M, R);
        const Eigen::JacobiSVD<Eigen::MatrixXd> ref(M, Eigen::ComputeThinU | Eigen::ComputeThinV);
        for (Index r = 0; r < R; ++r) {
            EXPECT_NEAR(s.sigma[r], ref.singularValues()[r], 1e-8 * ref.singularValues()[0]);
            EXPECT_NEAR(overlap(s.U.col(r), ref.matrixU().col(r)), 1.0, 1e-8);
            EXPECT_NEAR(overlap(s.V.col(r), ref.matrixV().col(r)), 1.0, 1e-8);
        }
        // Eckart-Young: residual of the truncation equals the discarded spectrum
        const Eigen::MatrixXd approx = s.U * s.sigma.asDiagonal() * s.V.transpose();
        const double tail = ref.singularValues().tail(ref.singularValues().size() - R).norm();
        EXPECT_NEAR((M - approx).norm(), tail, 1e-8 * M.norm());
        EXPECT_LT((s.U.transpose() * s.U - Eigen::MatrixXd::Identity(R, R)).norm(), 1e-10);
        EXPECT_LT((s.V.transpose() * s.V - Eigen::MatrixXd::Identity(R, R)).norm(), 1e-10);
        for (Index r = 1; r < R; ++r) EXPECT_GE(s.sigma[r - 1], s.sigma[r]);
    }
}

TEST(SvdInit, BestRankThreeOfTwentyByTen) {
    CounterRng rng(71);
    const Eigen::MatrixXd M = gaussian(rng, 20, 10);
    const SvdResult s = svd_init(M, 3);
    const Eigen::BDCSVD<Eigen::MatrixXd> ref(M);
    const double best = ref.singularValues().tail(7).norm();
    EXPECT_NEAR((M - s.U * s.sigma.asDiagonal() * s.V.transpose()).norm(), best, 1e-8);
    for (Index i = 0; i < 3; ++i)
        for (Index j = i + 1; j < 3; ++j) EXPECT_LT(std::abs(s.U.col(i).dot(s.U.col(j))), 1e-6);
}

TEST(SvdInit, LargestEntryOfEachLeftVectorIsPositive) {
    CounterRng rng(62);
    for (int trial = 0; trial < 20; ++trial) {
        const SvdResult s = svd_init(-gaussian(rng, 7, 5), 3);
        for (Index r = 0; r < 3; ++r) {
            Index at;
            s.U.col(r).cwiseAbs().maxCoeff(&at);
            EXPECT_GT(s.U(at, r), 0.0);
        }
    }
}

TEST(Rtpm, RankOneIsExact) {
    CounterRng rng(63);
    const CPFactorsd cp = cp_of(Eigen::VectorXd::Constant(1, 2.5),
                                {gaussian(rng, 4, 1).normalized(), gaussian(rng, 5, 1).normalized(),
                                 gaussian(rng, 3, 1).normalized()});
    const RtpmResult res = rtpm_init(reconstruct(cp), 1, InitConfig{});
    EXPECT_NEAR(res.weights[0], 2.5, 1e-9);
    for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(overlap(res.factors[k].col(0), cp.factors[k].col(0)), 1.0, 1e-10);
}

TEST(Rtpm, DominantComponentFirst) {
    CounterRng rng(72);
    std::vector<Eigen::MatrixXd> f{orthonormal(rng, 5, 2), orthonormal(rng, 5, 2), orthonormal(rng, 5, 2)};
    const RtpmResult res = rtpm_init(reconstruct(cp_of(Eigen::Vector2d(5.0, 1.0), f)), 1, InitConfig{});
    for (std::size_t k = 0; k < 3; ++k) EXPECT_GT(overlap(res.factors[k].col(0), f[k].col(0)), 0.99);
}

TEST(Rtpm, ZeroTensorIsDegenerate) {
    EXPECT_THROW(rtpm_init(DenseTensord(Dims{3, 3, 3}), 1, InitConfig{}), DegenerateComponent);
}

TEST(Rtpm, OrthogonalComponentsComeOutInOrderAndDeflationTelescopes) {
    CounterRng rng(64);
    for (int trial = 0; trial < 10; ++trial) {
        Eigen::VectorXd w(3);
        w << 10.0, 4.0, 1.0;
        std::vector<Eigen::MatrixXd> f{orthonormal(rng, 6, 3), orthonormal(rng, 5, 3), orthonormal(rng, 4, 3)};
        const CPFactorsd cp = cp_of(w, f);
        const DenseTensord t = reconstruct(cp);
        const RtpmResult res = rtpm_init(t, 3, InitConfig{});
        for (Index r = 0; r < 3; ++r) {
            EXPECT_NEAR(res.weights[r], w[r], 1e-8);
            for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(overlap(res.factors[k].col(r), f[k].col(r)), 1.0, 1e-8);
        }
        const DenseTensord back = reconstruct(cp_of(res.weights, res.factors));
        EXPECT_LT((back.values() - t.values()).norm(), 1e-8 * t.values().norm());
    }
}

TEST(Rtpm, FullObservationMatchesDenseAndFixedModesAreCopied) {
    CounterRng rng(65);
    const DenseTensord t = reconstruct(cp_of(Eigen::Vector2d(3.0, 1.0),
                                             {gaussian(rng, 4, 2).colwise().normalized(),
                                              gaussian(rng, 5, 2).colwise().normalized(),
                                              gaussian(rng, 3, 2).colwise().normalized()}));
    InitConfig cfg;
    cfg.seed = 7;
    const RtpmResult dense = rtpm_init(t, 2, cfg);
    const RtpmResult obs = rtpm_init(ObservedTensord::full(t), 2, cfg);
    EXPECT_LT((dense.weights - obs.weights).norm(), 1e-10);
    for (std::size_t k = 0; k < 3; ++k) EXPECT_LT((dense.factors[k] - obs.factors[k]).norm(), 1e-10);

    const Eigen::MatrixXd pinned = orthonormal(rng, 4, 2);
    const RtpmResult held = rtpm_init(t, 2, cfg, {{0, pinned}});
    EXPECT_EQ(held.factors[0], pinned);
}

TEST(Rtpm, SubspaceConstraintIsRespected) {
    CounterRng rng(66);
    const DenseTensord t = reconstruct(cp_of(Eigen::Vector2d(3.0, 2.0),
                                             {gaussian(rng, 6, 2).colwise().normalized(),
                                              gaussian(rng, 5, 2).colwise().normalized(),
                                              gaussian(rng, 4, 2).colwise().normalized()}));
    const Eigen::MatrixXd Q = orthonormal(rng, 6, 3);
    const RtpmResult res = rtpm_init(t, 2, InitConfig{}, {}, {{0, Q}});
    const Eigen::MatrixXd outside = res.factors[0] - Q * (Q.transpose() * res.factors[0]);
    EXPECT_LT(outside.norm(), 1e-10);
    EXPECT_THROW(rtpm_init(t, 2, InitConfig{}, {}, {{0, Eigen::MatrixXd(Q.topRows(5))}}), DimensionError);
}

Dataset coupled_data(CounterRng& rng) {
    const CPFactorsd cp = cp_of(Eigen::Vector2d(5.0, 3.0),
                                {gaussian(rng, 6, 2).colwise().normalized(), gaussian(rng, 5, 2).colwise().normalized(),
                                 gaussian(rng, 4, 2).colwise().normalized()});
    const Eigen::MatrixXd M = cp.factors[0] * Eigen::Vector2d(4.0, 2.0).asDiagonal() *
                              gaussian(rng, 3, 2).colwise().normalized().transpose();
    return Dataset{ObservedTensord::full(reconstruct(cp)), {{0, M, std::nullopt}}};
}

TEST(InitialModel, CoupledModeComesFromCovariateSvd) {
    CounterRng rng(67);
    const Dataset d = coupled_data(rng);
    InitConfig cfg;
    cfg.seed = 3;
    const CoupledModel m = initial_model(d, 2, cfg);
    EXPECT_NO_THROW(m.validate());
    EXPECT_EQ(m.cp.factors[0], svd_init(d.covariates[0].values, 2, cfg).U);
}

TEST(InitialModel, CleanRankOneCoupledIsAlreadyExact) {
    CounterRng rng(73);
    const CPFactorsd cp = cp_of(Eigen::VectorXd::Constant(1, 4.0),
                                {gaussian(rng, 6, 1).normalized(), gaussian(rng, 5, 1).normalized(),
                                 gaussian(rng, 4, 1).normalized()});
    CoupledModel truth;
    truth.cp = cp;
    truth.covariates.push_back({0, Eigen::VectorXd::Constant(1, 2.0), gaussian(rng, 3, 1).normalized()});
    const Dataset d{ObservedTensord::full(reconstruct(cp)), {{0, reconstruct_covariate(truth, 0), std::nullopt}}};
    const CoupledModel m = initialize(d, 1, InitConfig{}, 0);
    const MetricsReport rep = metrics(m, truth, reconstruct(cp));
    for (double e : rep.component_errors) EXPECT_LT(e, 1e-6);
    EXPECT_LT(rep.weight_error, 1e-6);
}

TEST(InitialModel, StartingModelsDependOnCouplingAndFixShared) {
    CounterRng rng(68);
    const Dataset d = coupled_data(rng);
    EXPECT_EQ(starting_models(d, 2).size(), 2u);
    EXPECT_EQ(starting_models(d, 2, {}, true).size(), 1u);
    const Dataset plain{d.tensor, {}};
    EXPECT_EQ(starting_models(plain, 2).size(), 1u);
    for (const auto& m : starting_models(d, 2)) EXPECT_NO_THROW(m.validate());
}

TEST(Initialize, DeterministicAndRestartZeroIsUnperturbed) {
    CounterRng rng(69);
    const Dataset d = coupled_data(rng);
    InitConfig cfg;
    cfg.seed = 11;
    const CoupledModel base = initial_model(d, 2, cfg);
    const CoupledModel r0 = initialize(d, 2, cfg, 0);
    EXPECT_EQ(r0.cp.weights, base.cp.weights);
    for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(r0.cp.factors[k], base.cp.factors[k]);

    const CoupledModel a = initialize(d, 2, cfg, 3);
    const CoupledModel b = initialize(d, 2, cfg, 3);
    const CoupledModel c = initialize(d, 2, cfg, 4);
    for (std::size_t k = 0; k < 3; ++k) {
        EXPECT_EQ(a.cp.factors[k], b.cp.factors[k]);
        EXPECT_NE(a.cp.factors[k], c.cp.factors[k]);
        EXPECT_NE(a.cp.factors[k], base.cp.factors[k]);
        for (Index r = 0; r < 2; ++r) {
            EXPECT_NE(a.cp.factors[k].col(r), base.cp.factors[k].col(r));
            EXPECT_NEAR(a.cp.factors[k].col(r).norm(), 1.0, 1e-12);
        }
    }
}

TEST(Perturb, KeepsUnitColumnsAndPositiveWeights) {
    CounterRng rng(70);
    const Dataset d = coupled_data(rng);
    const CoupledModel base = initial_model(d, 2);
    for (int i = 1; i <= 50; ++i) {
        InitConfig cfg;
        cfg.seed = static_cast<std::uint64_t>(i);
        cfg.restart_jitter = 0.05 * (i % 5 + 1);
        const CoupledModel p = perturb(base, cfg, i);
        EXPECT_NO_THROW(p.validate());
        for (const auto& f : p.cp.factors)
            for (Index r = 0; r < 2; ++r) EXPECT_NEAR(f.col(r).norm(), 1.0, 1e-12);
        EXPECT_GT(p.cp.weights.minCoeff(), 0.0);

        const CoupledModel kept = perturb(base, cfg, i, true);
        EXPECT_EQ(kept.cp.factors[0], base.cp.factors[0]);
        EXPECT_NE(kept.cp.factors[1], base.cp.factors[1]);
    }
}

}  // namespace
}  // namespace costco
