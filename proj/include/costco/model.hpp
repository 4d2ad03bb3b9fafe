#pragma once

#include "costco/tensor.hpp"

#include <optional>
#include <vector>

namespace costco {

/// A covariate matrix attached to tensor mode `mode`, with `width` columns.
struct Coupling {
    Index mode = 0;
    Index width = 0;
    friend bool operator==(const Coupling&, const Coupling&) = default;
};

/// At most one covariate per tensor mode, sorted by mode.
using CouplingSpec = std::vector<Coupling>;

/// sigma_r and unit-norm V columns of one coupled covariate matrix
/// M ~ sum_r sigma_r u_r v_r^T, where u_r is the mode's tensor factor.
struct CovariateFactors {
    Index mode = 0;
    Eigen::VectorXd sigma;
    Eigen::MatrixXd V;
};

struct CoupledModel {
    CPFactorsd cp;
    std::vector<CovariateFactors> covariates;

    Index rank() const { return cp.rank(); }
    Index order() const { return cp.order(); }
    Dims dims() const { return cp.dims(); }
    CouplingSpec coupling() const;

    /// Covariate factors for `mode`, or nullptr when the mode is uncoupled.
    const CovariateFactors* covariate(Index mode) const;
    CovariateFactors* covariate(Index mode);

    /// Shape and positivity checks; unit-norm checks when `unit_tol` > 0.
    void validate(double unit_tol = 1e-9) const;
};

/// CP model with all weights 1 and zero-width covariates; handy for tests.
CoupledModel empty_model(const Dims& dims, const CouplingSpec& coupling);

/// Dense n_k x n_v matrix sum_r sigma_r u_r v_r^T for the covariate on `mode`.
Eigen::MatrixXd reconstruct_covariate(const CoupledModel& model, Index mode);

/// Reorders and sign-flips `est` to line up with `truth`: one greedy column
/// permutation shared by every part, then an independent sign per mode and
/// rank so each column has a nonnegative inner product with its truth column.
CoupledModel align(const CoupledModel& est, const CoupledModel& truth);

struct MetricsReport {
    double tensor_error = 0;
    std::vector<double> component_errors;  // one per tensor mode
    double weight_error = 0;
};

/// Normalized Frobenius errors of the tensor, each factor matrix, and the
/// weight vector, after aligning `est` to `truth`.
MetricsReport metrics(const CoupledModel& est, const CoupledModel& truth, const DenseTensord& truth_tensor);
MetricsReport metrics(const CoupledModel& est, const CoupledModel& truth);

}  // namespace costco
