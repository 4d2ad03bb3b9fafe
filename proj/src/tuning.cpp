#include "costco/tuning.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

namespace costco {

void TuneGrid::validate() const {
    if (ranks.empty() || fractions.empty()) throw DimensionError("tuning grid must be nonempty");
    for (Index r : ranks)
        if (r < 1) throw DimensionError("tuning ranks must be positive");
    for (double f : fractions)
        if (!(f > 0.0 && f <= 1.0)) throw DimensionError("sparsity fractions must lie in (0, 1]");
}

Index fraction_budget(double frac, Index n) {
    // guard against 0.4 * 30 = 12.000000000000002
    const auto s = static_cast<Index>(std::ceil(frac * static_cast<double>(n) - 1e-9));
    return std::clamp<Index>(s, 1, n);
}

Index nonzero_count(const CoupledModel& model) {
    Index nz = 0;
    for (const auto& f : model.cp.factors) nz += (f.array() != 0.0).count();
    for (const auto& c : model.covariates) nz += (c.V.array() != 0.0).count();
    return nz;
}

double bic(const Dataset& data, const CoupledModel& model) {
    if (data.tensor.nnz() == 0) throw DataError("BIC needs at least one observed tensor entry");
    const double cells = static_cast<double>(data.dims().total());
    double big_n = cells;

    Eigen::VectorXd resid = data.tensor.values();
    for (Index e = 0; e < data.tensor.nnz(); ++e) resid[e] -= reconstruct_at(model.cp, data.tensor.coordinate(e));
    double misfit = resid.squaredNorm() / cells;
    for (const auto& cov : data.covariates) {
        Eigen::MatrixXd diff = cov.values - reconstruct_covariate(model, cov.mode);
        if (cov.mask) diff = cov.mask->select(diff, 0.0);
        const double size = static_cast<double>(cov.values.size());
        misfit += diff.squaredNorm() / size;
        big_n += size;
    }
    misfit = std::max(misfit, 1e-30);
    return std::log(misfit) + std::log(big_n) / big_n * static_cast<double>(nonzero_count(model));
}

SolverConfig with_fraction(const SolverConfig& base, const Dataset& data, double frac) {
    SolverConfig cfg = base;
    cfg.sparsity.clear();
    for (Index k = 0; k < data.dims().order(); ++k) cfg.sparsity.push_back(fraction_budget(frac, data.dims()[k]));
    cfg.covariate_sparsity.clear();
    for (const auto& cov : data.covariates) cfg.covariate_sparsity[cov.mode] = fraction_budget(frac, cov.values.cols());
    return cfg;
}

namespace {

std::optional<FitResult> try_fit(const Dataset& data, const SolverConfig& cfg, const std::vector<CoupledModel>& starts,
                                 const InitConfig& icfg) {
    try {
        return fit(data, cfg, starts, icfg);
    } catch (const NumericalFailure&) {
        return std::nullopt;
    }
}

}  // namespace

TuneResult tune(const Dataset& data, const TuneGrid& grid, const SolverConfig& base, const InitConfig& init) {
    grid.validate();
    data.validate();
    std::vector<Index> ranks = grid.ranks;
    std::sort(ranks.begin(), ranks.end());
    ranks.erase(std::unique(ranks.begin(), ranks.end()), ranks.end());
    std::vector<double> fractions = grid.fractions;
    std::sort(fractions.begin(), fractions.end());
    fractions.erase(std::unique(fractions.begin(), fractions.end()), fractions.end());

    InitConfig icfg = init;
    icfg.seed = base.seed;
    constexpr double inf = std::numeric_limits<double>::infinity();

    TuneResult out;
    double best = inf;
    std::optional<FitResult> best_fit;
    std::optional<std::vector<CoupledModel>> best_init;
    SolverConfig dense = base;
    dense.sparsity.clear();
    dense.covariate_sparsity.clear();
    for (Index R : ranks) {
        SolverConfig cfg = dense;
        cfg.rank = R;
        std::optional<std::vector<CoupledModel>> start;
        std::optional<FitResult> res;
        try {
            start = starting_models(data, R, icfg, cfg.fix_shared);
            res = try_fit(data, cfg, *start, icfg);
        } catch (const DegenerateComponent&) {
        }
        const double score = res ? bic(data, *res) : inf;
        out.rank_bic.emplace_back(R, score);
        if (score < best) {
            best = score;
            out.rank = R;
            out.config = cfg;
            best_fit = std::move(res);
            best_init = std::move(start);
        }
    }
    if (!best_fit) throw NumericalFailure("no rank in the tuning grid produced a usable fit");

    // stage 2 at the chosen rank; fraction 1.0 reproduces the stage-1 fit
    const FitResult dense_fit = *best_fit;
    best = inf;
    for (double frac : fractions) {
        SolverConfig cfg = with_fraction(dense, data, frac);
        cfg.rank = out.rank;
        bool untruncated = true;
        for (Index k = 0; k < data.dims().order(); ++k)
            untruncated &= cfg.sparsity[static_cast<std::size_t>(k)] == data.dims()[k];
        for (const auto& cov : data.covariates) untruncated &= cfg.covariate_sparsity[cov.mode] == cov.values.cols();
        std::optional<FitResult> res = untruncated ? std::optional<FitResult>(dense_fit)
                                                   : try_fit(data, cfg, *best_init, icfg);
        const double score = res ? bic(data, *res) : inf;
        out.fraction_bic.emplace_back(frac, score);
        if (score < best) {
            best = score;
            out.fraction = frac;
            out.config = cfg;
            out.fit = *res;
        }
    }
    if (!(best < inf)) throw NumericalFailure("no sparsity level produced a usable fit");
    return out;
}

}  // namespace costco
