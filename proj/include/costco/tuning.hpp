#pragma once

#include "costco/solver.hpp"

#include <utility>
#include <vector>

namespace costco {

struct TuneGrid {
    std::vector<Index> ranks{1, 2, 3, 4, 5};
    std::vector<double> fractions{0.2, 0.4, 0.6, 0.8, 0.9, 1.0};  // nonzero fraction per column

    void validate() const;
};

/// Number of entries kept for a nonzero fraction of n: ceil(frac * n), at least 1.
Index fraction_budget(double frac, Index n);

/// Total nonzeros across every tensor factor column and covariate V column.
Index nonzero_count(const CoupledModel& model);

/// BIC-type score: log of the mean squared misfits (tensor over all n_1...n_K
/// cells, each covariate over n_k n_v) plus log(N)/N per nonzero factor entry,
/// with N = n_1...n_K + sum n_k n_v. Lower is better. Throws DataError when
/// the tensor has no observed entries.
double bic(const Dataset& data, const CoupledModel& model);
inline double bic(const Dataset& data, const FitResult& fit) { return bic(data, fit.model); }

/// `base` with every tensor mode and covariate truncated to `frac`.
SolverConfig with_fraction(const SolverConfig& base, const Dataset& data, double frac);

struct TuneResult {
    Index rank = 0;
    double fraction = 1.0;
    SolverConfig config;
    FitResult fit;
    std::vector<std::pair<Index, double>> rank_bic;       // stage 1, +inf when every restart degenerated
    std::vector<std::pair<double, double>> fraction_bic;  // stage 2
};

/// Sequential search: rank first with no truncation, then a uniform sparsity
/// fraction at the chosen rank. Ties go to the smaller rank, then the
/// smaller fraction.
TuneResult tune(const Dataset& data, const TuneGrid& grid, const SolverConfig& base, const InitConfig& init = {});

}  // namespace costco
