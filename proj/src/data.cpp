#include "costco/data.hpp"

#include <string>

namespace costco {

Eigen::MatrixXd Covariate::zero_filled() const {
    if (!mask) return values;
    return mask->select(values, 0.0);
}

CouplingSpec Dataset::coupling() const {
    CouplingSpec spec;
    for (const auto& c : covariates) spec.push_back({c.mode, c.values.cols()});
    return spec;
}

const Covariate* Dataset::covariate(Index mode) const {
    for (const auto& c : covariates)
        if (c.mode == mode) return &c;
    return nullptr;
}

void Dataset::validate() const {
    Index prev = -1;
    for (const auto& c : covariates) {
        if (c.mode <= prev || c.mode >= dims().order())
            throw DimensionError("covariates must have distinct in-range modes, sorted");
        prev = c.mode;
        if (c.values.rows() != dims()[c.mode])
            throw DimensionError("covariate for mode " + std::to_string(c.mode) + " has " +
                                 std::to_string(c.values.rows()) + " rows, tensor mode has " +
                                 std::to_string(dims()[c.mode]));
        if (c.values.cols() < 1) throw DimensionError("covariate has no columns");
        if (c.mask && (c.mask->rows() != c.values.rows() || c.mask->cols() != c.values.cols()))
            throw DimensionError("covariate mask shape differs from its matrix");
    }
}

}  // namespace costco
