#pragma once

// Truncated, masked, coupled alternating least squares with a per-rank
// refinement pass.
//
// One sweep visits every rank r in order. For each r the residuals of the
// tensor and of every covariate matrix excluding component r are formed,
// then component r is re-solved mode by mode:
//   1. coupled tensor modes (ascending), each from tensor and covariate terms
//   2. uncoupled tensor modes (ascending); the last one carries lambda_r
//   3. the V column and sigma_r of every covariate
// Each raw least-squares vector is hard-thresholded to the mode's budget and
// renormalized. Residuals excluding r do not depend on component r, so one
// residual per r serves all of its updates.

#include "costco/data.hpp"
#include "costco/initialization.hpp"

#include <cstdint>
#include <map>
#include <vector>

namespace costco {

struct SolverConfig {
    Index rank = 1;
    std::vector<Index> sparsity;               // per tensor mode; empty means no truncation
    std::map<Index, Index> covariate_sparsity;  // per coupled mode; absent means no truncation
    double tol = 1e-7;
    int max_iterations = 200;
    int restarts = 10;
    bool fix_shared = false;  // hold coupled-mode factors at their initial values
    std::uint64_t seed = 0;

    Index budget(Index mode, Index n) const;
    Index covariate_budget(Index mode, Index width) const;
    void validate(const Dims& dims, const CouplingSpec& coupling) const;
};

struct FitResult {
    CoupledModel model;
    std::vector<double> objective_trace;  // initial value, then one per sweep
    int iterations = 0;
    bool converged = false;
    int restart_index = 0;
    std::uint64_t seed = 0;

    double objective() const { return objective_trace.back(); }
};

/// Keeps the `s` largest-magnitude entries (earliest index wins ties) and
/// zeroes the rest.
Eigen::VectorXd truncate(const Eigen::VectorXd& v, Index s);

/// Observed tensor values minus the model without component r.
ObservedTensord residual_tensor(const ObservedTensord& obs, const CoupledModel& model, Index r);

/// Covariate minus the model's covariate part without component r. With a
/// mask, unobserved entries are zero.
Eigen::MatrixXd residual_matrix(const Covariate& cov, const CoupledModel& model, Index r);

/// Untruncated least-squares solution for column r of tensor mode `mode`,
/// all else fixed. For a coupled mode this is the column itself; for an
/// uncoupled mode it is lambda_r times the column.
Eigen::VectorXd raw_mode_update(const Dataset& data, const CoupledModel& model, Index r, Index mode);

/// Untruncated sigma_r v_r for the covariate on `mode`.
Eigen::VectorXd raw_covariate_update(const Dataset& data, const CoupledModel& model, Index r, Index mode);

void update_coupled_mode(const Dataset& data, const SolverConfig& cfg, CoupledModel& model, Index r, Index mode);
void update_uncoupled_mode(const Dataset& data, const SolverConfig& cfg, CoupledModel& model, Index r, Index mode,
                           bool is_weight_mode);
void update_covariate(const Dataset& data, const SolverConfig& cfg, CoupledModel& model, Index r, Index mode);

/// Least-squares refresh of lambda_r alone, used when no tensor mode is
/// uncoupled. A negative solution flips the last mode's column (and its V
/// column) so lambda_r stays positive.
void refresh_weight(const Dataset& data, CoupledModel& model, Index r);

/// One full refinement pass over all ranks.
void sweep(const Dataset& data, const SolverConfig& cfg, CoupledModel& model);

/// Squared misfit on observed tensor entries plus squared misfit of every
/// covariate (observed entries only when masked).
double objective(const Dataset& data, const CoupledModel& model);

/// Runs sweeps from `init` until the summed relative change of the tensor
/// factor matrices drops below tol or max_iterations is hit.
FitResult fit_from(const Dataset& data, const SolverConfig& cfg, const CoupledModel& init);

/// Multi-restart fit. Restart i starts from starts[i % starts.size()],
/// unchanged for the first pass over `starts` and jittered afterwards.
/// Returns the lowest final objective (lowest restart index on ties).
/// Degenerate restarts are dropped; throws NumericalFailure when none survive.
FitResult fit(const Dataset& data, const SolverConfig& cfg, const std::vector<CoupledModel>& starts,
              const InitConfig& init_cfg = {});
FitResult fit(const Dataset& data, const SolverConfig& cfg, const CoupledModel& init, const InitConfig& init_cfg = {});

/// Multi-restart fit from starting_models(data, cfg.rank), seeded by cfg.seed.
FitResult fit(const Dataset& data, const SolverConfig& cfg, const InitConfig& init_cfg = {});

/// Model values at the given coordinates.
std::vector<double> complete(const CoupledModel& model, const std::vector<Coordinate>& coords);

}  // namespace costco
