#pragma once

#include "costco/model.hpp"

#include <optional>
#include <vector>

namespace costco {

using MaskMatrix = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// Covariate matrix for tensor mode `mode`. When `mask` is set only the
/// entries where it is true are observed; the others are ignored.
struct Covariate {
    Index mode = 0;
    Eigen::MatrixXd values;
    std::optional<MaskMatrix> mask;

    /// Values with unobserved entries set to zero.
    Eigen::MatrixXd zero_filled() const;
};

/// Observed tensor plus the covariate matrices coupled to it.
struct Dataset {
    ObservedTensord tensor;
    std::vector<Covariate> covariates;  // sorted by mode, one per mode at most

    const Dims& dims() const { return tensor.dims(); }
    CouplingSpec coupling() const;
    const Covariate* covariate(Index mode) const;

    /// Same tensor, no covariates: the standalone completion problem.
    Dataset without_covariates() const { return Dataset{tensor, {}}; }

    /// Throws DimensionError when covariate rows or masks do not conform.
    void validate() const;
};

}  // namespace costco
