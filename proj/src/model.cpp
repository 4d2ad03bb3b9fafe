#include "costco/model.hpp"

#include <cmath>
#include <numeric>
#include <string>

namespace costco {

CouplingSpec CoupledModel::coupling() const {
    CouplingSpec spec;
    for (const auto& c : covariates) spec.push_back({c.mode, c.V.rows()});
    return spec;
}

const CovariateFactors* CoupledModel::covariate(Index mode) const {
    for (const auto& c : covariates)
        if (c.mode == mode) return &c;
    return nullptr;
}

CovariateFactors* CoupledModel::covariate(Index mode) {
    for (auto& c : covariates)
        if (c.mode == mode) return &c;
    return nullptr;
}

void CoupledModel::validate(double unit_tol) const {
    cp.check();
    const Index R = rank();
    for (Index r = 0; r < R; ++r)
        if (!(cp.weights[r] > 0)) throw DimensionError("tensor weight " + std::to_string(r) + " is not positive");
    Index prev = -1;
    for (const auto& c : covariates) {
        if (c.mode <= prev || c.mode >= order()) throw DimensionError("covariates must have distinct in-range modes");
        prev = c.mode;
        if (c.sigma.size() != R || c.V.cols() != R) throw DimensionError("covariate rank differs from tensor rank");
        for (Index r = 0; r < R; ++r)
            if (!(c.sigma[r] > 0)) throw DimensionError("covariate weight is not positive");
    }
    if (unit_tol <= 0) return;
    auto unit = [&](const Eigen::MatrixXd& m) {
        for (Index r = 0; r < m.cols(); ++r)
            if (std::abs(m.col(r).norm() - 1.0) > unit_tol) throw DimensionError("factor column is not unit norm");
    };
    for (const auto& f : cp.factors) unit(f);
    for (const auto& c : covariates) unit(c.V);
}

CoupledModel empty_model(const Dims& dims, const CouplingSpec& coupling) {
    CoupledModel m;
    m.cp.weights.resize(0);
    for (Index k = 0; k < dims.order(); ++k) m.cp.factors.emplace_back(dims[k], 0);
    for (const auto& c : coupling) m.covariates.push_back({c.mode, Eigen::VectorXd(0), Eigen::MatrixXd(c.width, 0)});
    return m;
}

Eigen::MatrixXd reconstruct_covariate(const CoupledModel& model, Index mode) {
    const CovariateFactors* cov = model.covariate(mode);
    if (!cov) throw DimensionError("mode " + std::to_string(mode) + " is not coupled");
    const Eigen::MatrixXd& U = model.cp.factors[static_cast<std::size_t>(mode)];
    return U * cov->sigma.asDiagonal() * cov->V.transpose();
}

namespace {

void check_comparable(const CoupledModel& est, const CoupledModel& truth) {
    if (est.rank() != truth.rank()) throw DimensionError("rank mismatch between estimate and truth");
    if (!(est.dims() == truth.dims())) throw DimensionError("dims mismatch between estimate and truth");
    if (!(est.coupling() == truth.coupling())) throw DimensionError("coupling mismatch between estimate and truth");
}

CoupledModel permute(const CoupledModel& m, const std::vector<Index>& from) {
    CoupledModel out = m;
    for (std::size_t t = 0; t < from.size(); ++t) {
        const auto dst = static_cast<Index>(t);
        out.cp.weights[dst] = m.cp.weights[from[t]];
        for (std::size_t k = 0; k < m.cp.factors.size(); ++k) out.cp.factors[k].col(dst) = m.cp.factors[k].col(from[t]);
        for (std::size_t c = 0; c < m.covariates.size(); ++c) {
            out.covariates[c].sigma[dst] = m.covariates[c].sigma[from[t]];
            out.covariates[c].V.col(dst) = m.covariates[c].V.col(from[t]);
        }
    }
    return out;
}

}  // namespace

CoupledModel align(const CoupledModel& est, const CoupledModel& truth) {
    check_comparable(est, truth);
    const Index R = est.rank();

    // score(t, e) = sum over tensor modes of |<est col e, truth col t>|
    Eigen::MatrixXd score = Eigen::MatrixXd::Zero(R, R);
    for (std::size_t k = 0; k < est.cp.factors.size(); ++k)
        score += (truth.cp.factors[k].transpose() * est.cp.factors[k]).cwiseAbs();

    std::vector<Index> from(static_cast<std::size_t>(R), -1);
    std::vector<bool> est_used(static_cast<std::size_t>(R), false);
    for (Index step = 0; step < R; ++step) {
        Index bt = -1, be = -1;
        double best = -1;
        // truth index outer so ties go to the lowest truth index
        for (Index t = 0; t < R; ++t) {
            if (from[static_cast<std::size_t>(t)] >= 0) continue;
            for (Index e = 0; e < R; ++e) {
                if (est_used[static_cast<std::size_t>(e)]) continue;
                if (score(t, e) > best) {
                    best = score(t, e);
                    bt = t;
                    be = e;
                }
            }
        }
        from[static_cast<std::size_t>(bt)] = be;
        est_used[static_cast<std::size_t>(be)] = true;
    }

    CoupledModel out = permute(est, from);
    auto fix_signs = [R](Eigen::MatrixXd& m, const Eigen::MatrixXd& ref) {
        for (Index r = 0; r < R; ++r)
            if (m.col(r).dot(ref.col(r)) < 0) m.col(r) = -m.col(r);
    };
    for (std::size_t k = 0; k < out.cp.factors.size(); ++k) fix_signs(out.cp.factors[k], truth.cp.factors[k]);
    for (std::size_t c = 0; c < out.covariates.size(); ++c) fix_signs(out.covariates[c].V, truth.covariates[c].V);
    return out;
}

namespace {

double relative(double diff, double ref) { return ref > 0 ? diff / ref : diff; }

}  // namespace

MetricsReport metrics(const CoupledModel& est, const CoupledModel& truth, const DenseTensord& truth_tensor) {
    check_comparable(est, truth);
    if (!(truth_tensor.dims() == truth.dims())) throw DimensionError("truth tensor dims mismatch");
    const CoupledModel a = align(est, truth);
    MetricsReport rep;
    const DenseTensord recon = reconstruct(a.cp);
    rep.tensor_error = relative((truth_tensor.values() - recon.values()).norm(), truth_tensor.values().norm());
    for (std::size_t k = 0; k < a.cp.factors.size(); ++k)
        rep.component_errors.push_back(
            relative((truth.cp.factors[k] - a.cp.factors[k]).norm(), truth.cp.factors[k].norm()));
    rep.weight_error = relative((truth.cp.weights - a.cp.weights).norm(), truth.cp.weights.norm());
    return rep;
}

MetricsReport metrics(const CoupledModel& est, const CoupledModel& truth) {
    return metrics(est, truth, reconstruct(truth.cp));
}

}  // namespace costco
