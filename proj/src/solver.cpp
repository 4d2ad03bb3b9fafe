#include "costco/solver.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>

namespace costco {

Index SolverConfig::budget(Index mode, Index n) const {
    return sparsity.empty() ? n : sparsity[static_cast<std::size_t>(mode)];
}

Index SolverConfig::covariate_budget(Index mode, Index width) const {
    auto it = covariate_sparsity.find(mode);
    return it == covariate_sparsity.end() ? width : it->second;
}

void SolverConfig::validate(const Dims& dims, const CouplingSpec& coupling) const {
    if (rank < 0) throw DimensionError("rank must be nonnegative");
    if (!(tol > 0)) throw DimensionError("tolerance must be positive");
    if (max_iterations < 1) throw DimensionError("max_iterations must be at least 1");
    if (restarts < 1) throw DimensionError("restarts must be at least 1");
    if (!sparsity.empty()) {
        if (static_cast<Index>(sparsity.size()) != dims.order())
            throw DimensionError("need one sparsity budget per tensor mode");
        for (Index k = 0; k < dims.order(); ++k) {
            const Index s = sparsity[static_cast<std::size_t>(k)];
            if (s < 1 || s > dims[k]) throw DimensionError("sparsity budget out of range for mode " + std::to_string(k));
        }
    }
    for (const auto& [mode, s] : covariate_sparsity) {
        auto it = std::find_if(coupling.begin(), coupling.end(), [m = mode](const Coupling& c) { return c.mode == m; });
        if (it == coupling.end()) throw DimensionError("covariate budget given for uncoupled mode " + std::to_string(mode));
        if (s < 1 || s > it->width) throw DimensionError("covariate sparsity budget out of range");
    }
}

Eigen::VectorXd truncate(const Eigen::VectorXd& v, Index s) {
    const Index n = v.size();
    if (s < 1 || s > n) throw DimensionError("truncation budget " + std::to_string(s) + " outside 1.." + std::to_string(n));
    if (s == n) return v;
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    std::partial_sort(order.begin(), order.begin() + s, order.end(), [&](Index a, Index b) {
        const double fa = std::abs(v[a]), fb = std::abs(v[b]);
        return fa > fb || (fa == fb && a < b);
    });
    Eigen::VectorXd out = Eigen::VectorXd::Zero(n);
    for (Index j = 0; j < s; ++j) out[order[static_cast<std::size_t>(j)]] = v[order[static_cast<std::size_t>(j)]];
    return out;
}

namespace {

// Raw pointers to the per-mode indices and to column r of each factor.
struct ColumnView {
    std::vector<const std::int32_t*> ix;
    std::vector<const double*> col;

    ColumnView(const ObservedTensord& obs, const CPFactorsd& cp, Index r) {
        for (Index k = 0; k < obs.order(); ++k) {
            ix.push_back(obs.mode_index(k).data());
            col.push_back(cp.factors[static_cast<std::size_t>(k)].col(r).data());
        }
    }
};

// out[e] = lambda_r * prod_k U_k(i_k, r) over the observed pattern.
void component_values(const ObservedTensord& obs, const CPFactorsd& cp, Index r, Eigen::VectorXd& out) {
    const ColumnView cv(obs, cp, r);
    const std::size_t K = cv.ix.size();
    const double lam = cp.weights[r];
    out.resize(obs.nnz());
    for (Index e = 0; e < obs.nnz(); ++e) {
        double p = lam;
        for (std::size_t k = 0; k < K; ++k) p *= cv.col[k][cv.ix[k][e]];
        out[e] = p;
    }
}

// num[i] = sum res_e w_e and den[i] = sum w_e^2 over entries with index i in
// `mode`, where w_e is the product of column r of every other mode.
void accumulate_mode(const ObservedTensord& obs, const Eigen::VectorXd& res, const CPFactorsd& cp, Index r,
                     Index mode, Eigen::VectorXd& num, Eigen::VectorXd& den) {
    std::vector<const std::int32_t*> ix;
    std::vector<const double*> col;
    for (Index k = 0; k < obs.order(); ++k) {
        if (k == mode) continue;
        ix.push_back(obs.mode_index(k).data());
        col.push_back(cp.factors[static_cast<std::size_t>(k)].col(r).data());
    }
    const std::int32_t* free_ix = obs.mode_index(mode).data();
    const std::size_t others = ix.size();
    num = Eigen::VectorXd::Zero(obs.dims()[mode]);
    den = Eigen::VectorXd::Zero(obs.dims()[mode]);
    for (Index e = 0; e < obs.nnz(); ++e) {
        double w = 1.0;
        for (std::size_t j = 0; j < others && w != 0.0; ++j) w *= col[j][ix[j][e]];
        if (w == 0.0) continue;
        const std::int32_t i = free_ix[e];
        num[i] += res[e] * w;
        den[i] += w * w;
    }
}

Eigen::VectorXd safe_quotient(const Eigen::VectorXd& num, const Eigen::VectorXd& den) {
    Eigen::VectorXd q(num.size());
    for (Index i = 0; i < num.size(); ++i) q[i] = den[i] != 0.0 ? num[i] / den[i] : 0.0;
    return q;
}

double normalize_or_throw(Eigen::VectorXd& v, const char* what, Index r) {
    const double n = v.norm();
    if (!(n > 0.0) || !std::isfinite(n))
        throw DegenerateComponent(std::string(what) + " of component " + std::to_string(r) + " collapsed to zero");
    v /= n;
    return n;
}

// Residuals that exclude component r: tensor values aligned with the observed
// entries, one matrix per covariate (aligned with data.covariates).
struct Residual {
    Eigen::VectorXd tensor;
    std::vector<Eigen::MatrixXd> matrices;
};

Eigen::MatrixXd covariate_residual(const Covariate& cov, const CoupledModel& model, Index r) {
    const CovariateFactors* cf = model.covariate(cov.mode);
    if (!cf) throw DimensionError("model has no covariate factors for mode " + std::to_string(cov.mode));
    const Eigen::MatrixXd& U = model.cp.factors[static_cast<std::size_t>(cov.mode)];
    Eigen::MatrixXd res = cov.values;
    for (Index m = 0; m < model.rank(); ++m)
        if (m != r) res.noalias() -= (cf->sigma[m] * U.col(m)) * cf->V.col(m).transpose();
    if (cov.mask) res = cov.mask->select(res, 0.0);
    return res;
}

Residual fresh_residual(const Dataset& data, const CoupledModel& model, Index r) {
    Residual res;
    res.tensor = data.tensor.values();
    Eigen::VectorXd comp;
    for (Index m = 0; m < model.rank(); ++m) {
        if (m == r) continue;
        component_values(data.tensor, model.cp, m, comp);
        res.tensor -= comp;
    }
    for (const auto& cov : data.covariates) res.matrices.push_back(covariate_residual(cov, model, r));
    return res;
}

std::size_t covariate_slot(const Dataset& data, Index mode) {
    for (std::size_t c = 0; c < data.covariates.size(); ++c)
        if (data.covariates[c].mode == mode) return c;
    throw DimensionError("mode " + std::to_string(mode) + " is not coupled");
}

void check_component(const CoupledModel& model, Index r, Index mode) {
    if (r < 0 || r >= model.rank()) throw DimensionError("component index out of range");
    if (mode < 0 || mode >= model.order()) throw DimensionError("mode index out of range");
}

Eigen::VectorXd raw_update(const Dataset& data, const CoupledModel& model, const Residual& res, Index r, Index mode) {
    Eigen::VectorXd num, den;
    accumulate_mode(data.tensor, res.tensor, model.cp, r, mode, num, den);
    const Covariate* cov = data.covariate(mode);
    if (cov) {
        const CovariateFactors* cf = model.covariate(mode);
        const double lam = model.cp.weights[r];
        const double sig = cf->sigma[r];
        const auto v = cf->V.col(r);
        const Eigen::MatrixXd& R_M = res.matrices[covariate_slot(data, mode)];
        num = lam * num + sig * (R_M * v);
        if (cov->mask) {
            den = lam * lam * den + sig * sig * (cov->mask->cast<double>().matrix() * v.cwiseAbs2());
        } else {
            den = lam * lam * den;
            den.array() += sig * sig * v.squaredNorm();
        }
    }
    return safe_quotient(num, den);
}

Eigen::VectorXd raw_cov_update(const Dataset& data, const CoupledModel& model, const Residual& res, Index r,
                               Index mode) {
    const std::size_t slot = covariate_slot(data, mode);
    const Covariate& cov = data.covariates[slot];
    const auto u = model.cp.factors[static_cast<std::size_t>(mode)].col(r);
    Eigen::VectorXd vt = res.matrices[slot].transpose() * u;
    if (cov.mask) {
        const Eigen::VectorXd den = cov.mask->cast<double>().matrix().transpose() * u.cwiseAbs2();
        vt = safe_quotient(vt, den);
    }
    return vt;
}

void apply_coupled(const Dataset& data, const SolverConfig& cfg, CoupledModel& model, const Residual& res, Index r,
                   Index mode) {
    if (cfg.fix_shared) return;
    auto& F = model.cp.factors[static_cast<std::size_t>(mode)];
    Eigen::VectorXd u = truncate(raw_update(data, model, res, r, mode), cfg.budget(mode, F.rows()));
    normalize_or_throw(u, "coupled factor", r);
    F.col(r) = u;
}

void apply_uncoupled(const Dataset& data, const SolverConfig& cfg, CoupledModel& model, const Residual& res, Index r,
                     Index mode, bool is_weight_mode) {
    auto& F = model.cp.factors[static_cast<std::size_t>(mode)];
    Eigen::VectorXd u = truncate(raw_update(data, model, res, r, mode), cfg.budget(mode, F.rows()));
    const double n = normalize_or_throw(u, "factor", r);
    if (is_weight_mode) model.cp.weights[r] = n;
    F.col(r) = u;
}

void apply_covariate(const Dataset& data, const SolverConfig& cfg, CoupledModel& model, const Residual& res, Index r,
                     Index mode) {
    CovariateFactors* cf = model.covariate(mode);
    Eigen::VectorXd v = truncate(raw_cov_update(data, model, res, r, mode), cfg.covariate_budget(mode, cf->V.rows()));
    cf->sigma[r] = normalize_or_throw(v, "covariate factor", r);
    cf->V.col(r) = v;
}

void apply_weight_refresh(const Dataset& data, CoupledModel& model, const Residual& res, Index r) {
    Eigen::VectorXd w;
    CPFactorsd unit = model.cp;
    unit.weights[r] = 1.0;
    component_values(data.tensor, unit, r, w);
    const double den = w.squaredNorm();
    if (den == 0.0) return;  // nothing observed on this component's support
    double lam = res.tensor.dot(w) / den;
    if (!(std::abs(lam) > 0.0) || !std::isfinite(lam))
        throw DegenerateComponent("weight of component " + std::to_string(r) + " collapsed to zero");
    if (lam < 0) {
        const Index last = model.order() - 1;
        model.cp.factors[static_cast<std::size_t>(last)].col(r) *= -1.0;
        if (CovariateFactors* cf = model.covariate(last)) cf->V.col(r) *= -1.0;
        lam = -lam;
    }
    model.cp.weights[r] = lam;
}

void update_component(const Dataset& data, const SolverConfig& cfg, CoupledModel& model, const Residual& res,
                      Index r) {
    std::vector<Index> uncoupled;
    for (Index k = 0; k < model.order(); ++k) {
        if (data.covariate(k))
            apply_coupled(data, cfg, model, res, r, k);
        else
            uncoupled.push_back(k);
    }
    for (Index k : uncoupled) apply_uncoupled(data, cfg, model, res, r, k, k == uncoupled.back());
    if (uncoupled.empty()) apply_weight_refresh(data, model, res, r);
    for (const auto& cov : data.covariates) apply_covariate(data, cfg, model, res, r, cov.mode);
}

void check_pair(const Dataset& data, const CoupledModel& model) {
    if (!(data.dims() == model.dims())) throw DimensionError("model dims do not match the data");
    if (!(data.coupling() == model.coupling())) throw DimensionError("model coupling does not match the data");
}

}  // namespace

ObservedTensord residual_tensor(const ObservedTensord& obs, const CoupledModel& model, Index r) {
    if (!(obs.dims() == model.dims())) throw DimensionError("model dims do not match the tensor");
    if (r < 0 || r >= model.rank()) throw DimensionError("component index out of range");
    Eigen::VectorXd vals = obs.values();
    Eigen::VectorXd comp;
    for (Index m = 0; m < model.rank(); ++m) {
        if (m == r) continue;
        component_values(obs, model.cp, m, comp);
        vals -= comp;
    }
    return obs.with_values(std::move(vals));
}

Eigen::MatrixXd residual_matrix(const Covariate& cov, const CoupledModel& model, Index r) {
    if (r < 0 || r >= model.rank()) throw DimensionError("component index out of range");
    return covariate_residual(cov, model, r);
}

Eigen::VectorXd raw_mode_update(const Dataset& data, const CoupledModel& model, Index r, Index mode) {
    check_pair(data, model);
    check_component(model, r, mode);
    return raw_update(data, model, fresh_residual(data, model, r), r, mode);
}

Eigen::VectorXd raw_covariate_update(const Dataset& data, const CoupledModel& model, Index r, Index mode) {
    check_pair(data, model);
    check_component(model, r, mode);
    return raw_cov_update(data, model, fresh_residual(data, model, r), r, mode);
}

void update_coupled_mode(const Dataset& data, const SolverConfig& cfg, CoupledModel& model, Index r, Index mode) {
    check_pair(data, model);
    check_component(model, r, mode);
    if (!data.covariate(mode)) throw DimensionError("mode " + std::to_string(mode) + " is not coupled");
    apply_coupled(data, cfg, model, fresh_residual(data, model, r), r, mode);
}

void update_uncoupled_mode(const Dataset& data, const SolverConfig& cfg, CoupledModel& model, Index r, Index mode,
                           bool is_weight_mode) {
    check_pair(data, model);
    check_component(model, r, mode);
    if (data.covariate(mode)) throw DimensionError("mode " + std::to_string(mode) + " is coupled");
    apply_uncoupled(data, cfg, model, fresh_residual(data, model, r), r, mode, is_weight_mode);
}

void update_covariate(const Dataset& data, const SolverConfig& cfg, CoupledModel& model, Index r, Index mode) {
    check_pair(data, model);
    check_component(model, r, mode);
    apply_covariate(data, cfg, model, fresh_residual(data, model, r), r, mode);
}

void refresh_weight(const Dataset& data, CoupledModel& model, Index r) {
    check_pair(data, model);
    check_component(model, r, 0);
    apply_weight_refresh(data, model, fresh_residual(data, model, r), r);
}

void sweep(const Dataset& data, const SolverConfig& cfg, CoupledModel& model) {
    check_pair(data, model);
    const Index R = model.rank();
    if (R == 0) return;
    const ObservedTensord& obs = data.tensor;

    // running model values at the observed entries
    Eigen::VectorXd recon = Eigen::VectorXd::Zero(obs.nnz());
    Eigen::VectorXd comp_old, comp_new;
    for (Index m = 0; m < R; ++m) {
        component_values(obs, model.cp, m, comp_old);
        recon += comp_old;
    }
    for (Index r = 0; r < R; ++r) {
        component_values(obs, model.cp, r, comp_old);
        Residual res;
        res.tensor = obs.values() - recon + comp_old;
        for (const auto& cov : data.covariates) res.matrices.push_back(covariate_residual(cov, model, r));
        update_component(data, cfg, model, res, r);
        component_values(obs, model.cp, r, comp_new);
        recon += comp_new - comp_old;
    }
}

double objective(const Dataset& data, const CoupledModel& model) {
    check_pair(data, model);
    Eigen::VectorXd resid = data.tensor.values();
    Eigen::VectorXd comp;
    for (Index m = 0; m < model.rank(); ++m) {
        component_values(data.tensor, model.cp, m, comp);
        resid -= comp;
    }
    double f = resid.squaredNorm();
    for (const auto& cov : data.covariates) {
        Eigen::MatrixXd diff = cov.values - reconstruct_covariate(model, cov.mode);
        if (cov.mask) diff = cov.mask->select(diff, 0.0);
        f += diff.squaredNorm();
    }
    return f;
}

FitResult fit_from(const Dataset& data, const SolverConfig& cfg, const CoupledModel& init) {
    data.validate();
    cfg.validate(data.dims(), data.coupling());
    check_pair(data, init);
    if (init.rank() != cfg.rank) throw DimensionError("initial model rank differs from configured rank");

    FitResult out;
    out.model = init;
    out.seed = cfg.seed;
    out.objective_trace.push_back(objective(data, init));
    for (int it = 0; it < cfg.max_iterations; ++it) {
        const std::vector<Eigen::MatrixXd> old = out.model.cp.factors;
        sweep(data, cfg, out.model);
        out.iterations = it + 1;
        out.objective_trace.push_back(objective(data, out.model));
        double change = 0.0;
        for (std::size_t k = 0; k < old.size(); ++k) {
            const double d = (old[k] - out.model.cp.factors[k]).norm();
            const double n = old[k].norm();
            change += n > 0 ? d / n : d;
        }
        if (change < cfg.tol) {
            out.converged = true;
            break;
        }
    }
    return out;
}

FitResult fit(const Dataset& data, const SolverConfig& cfg, const std::vector<CoupledModel>& starts,
              const InitConfig& init_cfg) {
    cfg.validate(data.dims(), data.coupling());
    if (starts.empty()) throw DimensionError("fit needs at least one starting model");
    InitConfig jitter = init_cfg;
    jitter.seed = cfg.seed;
    const auto bases = static_cast<int>(starts.size());
    std::optional<FitResult> best;
    std::string last_failure;
    for (int i = 0; i < cfg.restarts; ++i) {
        try {
            const CoupledModel& base = starts[static_cast<std::size_t>(i % bases)];
            FitResult res = fit_from(data, cfg, i < bases ? base : perturb(base, jitter, i, cfg.fix_shared));
            res.restart_index = i;
            if (!best || res.objective() < best->objective()) best = std::move(res);
        } catch (const DegenerateComponent& e) {
            last_failure = e.what();
        }
    }
    if (!best) throw NumericalFailure("all " + std::to_string(cfg.restarts) + " restarts degenerated: " + last_failure);
    return *best;
}

FitResult fit(const Dataset& data, const SolverConfig& cfg, const CoupledModel& init, const InitConfig& init_cfg) {
    return fit(data, cfg, std::vector<CoupledModel>{init}, init_cfg);
}

FitResult fit(const Dataset& data, const SolverConfig& cfg, const InitConfig& init_cfg) {
    cfg.validate(data.dims(), data.coupling());
    InitConfig icfg = init_cfg;
    icfg.seed = cfg.seed;
    std::vector<CoupledModel> starts;
    try {
        starts = starting_models(data, cfg.rank, icfg, cfg.fix_shared);
    } catch (const DegenerateComponent& e) {
        throw NumericalFailure(std::string("initialization degenerated: ") + e.what());
    }
    return fit(data, cfg, starts, icfg);
}

std::vector<double> complete(const CoupledModel& model, const std::vector<Coordinate>& coords) {
    const Dims dims = model.dims();
    std::vector<double> out;
    out.reserve(coords.size());
    for (const auto& c : coords) {
        if (!dims.contains(c)) throw DimensionError("coordinate outside dims " + dims.str());
        out.push_back(reconstruct_at(model.cp, c));
    }
    return out;
}

}  // namespace costco
