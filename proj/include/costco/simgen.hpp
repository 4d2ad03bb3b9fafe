#pragma once

#include "costco/solver.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace costco {

/// Synthetic problem: Gaussian factors, sparse uncoupled modes, dense
/// coupled modes and covariate loadings.
struct Scenario {
    std::vector<Index> dims{30, 30, 30, 30};
    CouplingSpec coupling{{0, 30}};
    Index rank = 2;
    double fraction = 0.4;  // kept entries per uncoupled column
    double eta_t = 0.001;
    double eta_m = 0.001;
    double reveal = 0.1;
    int replicas = 30;
    std::uint64_t seed = 0;
    bool orthogonal_shared = false;  // orthogonalize coupled-mode and V columns, norms kept

    void validate() const;
    /// Copy with seed derived for replica r.
    Scenario replica(int r) const;
};

struct Truth {
    CoupledModel model;
    DenseTensord tensor;
    std::vector<Eigen::MatrixXd> covariates;  // parallel to model.covariates
};

Truth gen_truth(const Scenario& scenario);

/// eta * noise * signal_norm / ||noise||, so the result has norm eta * signal_norm.
Eigen::VectorXd scaled_noise(const Eigen::VectorXd& noise, double eta, double signal_norm);

/// Adds scaled Gaussian noise and reveals each tensor entry with probability p.
/// Covariates stay fully observed.
Dataset corrupt(const Truth& truth, double eta_t, double eta_m, double p, std::uint64_t seed);

struct ExperimentConfig {
    SolverConfig solver;  // rank, budgets and seed are set per replica
    InitConfig init;
    bool ablation = true;
};

struct MethodRuns {
    std::string method;  // "costco" or "ablation"
    std::vector<std::optional<MetricsReport>> replicas;  // nullopt when every restart degenerated
};

struct SummaryRow {
    std::string method;
    std::string metric;  // "tensor", "mode<k>", "weight"
    double mean = 0;
    double stderr_ = 0;  // sample std / sqrt(n)
    int count = 0;       // replicas that produced a fit
};

struct ExperimentResult {
    Scenario scenario;
    std::vector<MethodRuns> methods;

    std::vector<SummaryRow> summary() const;
};

/// Budgets used by the harness: dense on coupled modes and covariates,
/// the scenario fraction elsewhere.
SolverConfig oracle_config(const Scenario& scenario, const SolverConfig& base);

/// Runs every replica with COSTCO and, when enabled, the no-covariate ablation
/// under the same budgets.
ExperimentResult run_experiment(const Scenario& scenario, const ExperimentConfig& cfg);

/// Columns: d1,dims,rank,reveal,eta_t,eta_m,fraction,replicas,seed,method,metric,mean,stderr,count
void write_experiment_csv(std::ostream& out, const std::vector<ExperimentResult>& results);

/// Whitespace table for plotting: one row per scenario, columns
/// reveal eta_t eta_m d1 rank then mean and stderr of each method's tensor error.
void write_plot_data(std::ostream& out, const std::vector<ExperimentResult>& results);

}  // namespace costco
