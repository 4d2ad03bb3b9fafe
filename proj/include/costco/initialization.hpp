#pragma once

#include "costco/data.hpp"

#include <cstdint>
#include <map>
#include <vector>

namespace costco {

struct InitConfig {
    int rtpm_starts = 30;
    int rtpm_iters = 50;
    double rtpm_tol = 1e-10;
    int svd_power_iters = 100;
    double svd_tol = 1e-10;
    double restart_jitter = 0.1;
    std::uint64_t seed = 0;
};

struct SvdResult {
    Eigen::MatrixXd U;      // rows x R, unit columns
    Eigen::VectorXd sigma;  // nonincreasing
    Eigen::MatrixXd V;      // cols x R, unit columns
    bool converged = false;
    int iterations = 0;
};

/// Top-R singular triplets by block power iteration with Rayleigh-Ritz
/// extraction. Each U column's largest-magnitude entry is made positive.
/// Throws DegenerateComponent if a singular value is zero.
SvdResult svd_init(const Eigen::MatrixXd& M, Index R, const InitConfig& cfg = {});

struct RtpmResult {
    Eigen::VectorXd weights;
    std::vector<Eigen::MatrixXd> factors;  // every mode; fixed modes copied
};

/// Best-of-many-starts alternating rank-1 power method with deflation.
/// Columns in `fixed` (mode -> n_k x R) are held during the power steps.
/// Free modes listed in `subspaces` (mode -> n_k x q basis, orthonormal) are
/// kept inside the span of that basis. Works on a dense tensor or,
/// equivalently, on the zero-filled observed one.
template <typename TensorT>
RtpmResult rtpm_init(const TensorT& t, Index R, const InitConfig& cfg,
                     const std::map<Index, Eigen::MatrixXd>& fixed = {},
                     const std::map<Index, Eigen::MatrixXd>& subspaces = {});

/// Starting model for restart 0: SVD of each covariate for coupled modes,
/// power method on the zero-filled tensor (rescaled by the observed
/// fraction) for the rest. With every mode coupled, weights come from a
/// sequential least-squares solve instead.
CoupledModel initial_model(const Dataset& data, Index R, const InitConfig& cfg = {});

/// Alternative start: the power method runs on every mode, with each coupled
/// mode confined to the span of its covariate's top-R left singular vectors
/// instead of being pinned to them. sigma and V follow by least squares. Helps
/// when singular values are close and the SVD columns mix components.
CoupledModel subspace_model(const Dataset& data, Index R, const InitConfig& cfg = {});

/// Bases cycled through by the restarts: initial_model, then subspace_model
/// when some but not all modes are coupled and shared factors are not held.
std::vector<CoupledModel> starting_models(const Dataset& data, Index R, const InitConfig& cfg = {},
                                          bool fix_shared = false);

/// Gaussian jitter of relative size cfg.restart_jitter on every column
/// (renormalized) and multiplicative jitter on the weights. Restart 0 is
/// returned untouched. With `keep_coupled` the coupled tensor modes are left
/// as they are.
CoupledModel perturb(const CoupledModel& model, const InitConfig& cfg, int restart_index, bool keep_coupled = false);

/// initial_model followed by perturb.
CoupledModel initialize(const Dataset& data, Index R, const InitConfig& cfg, int restart_index);

}  // namespace costco
