#include "costco/initialization.hpp"

#include "costco/random.hpp"
#include "costco/solver.hpp"

#include <cmath>
#include <random>
#include <string>

namespace costco {

namespace {

Eigen::VectorXd gaussian(CounterRng& rng, Index n) {
    std::normal_distribution<double> g;
    Eigen::VectorXd v(n);
    for (Index i = 0; i < n; ++i) v[i] = g(rng);
    return v;
}

Eigen::MatrixXd orthonormalize(const Eigen::MatrixXd& A) {
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(A);
    return qr.householderQ() * Eigen::MatrixXd::Identity(A.rows(), A.cols());
}

// Flips the sign of column r so its largest-magnitude entry (earliest on
// ties) is positive. Returns true when flipped.
bool canonical_sign(Eigen::Ref<Eigen::VectorXd> u) {
    Index at = 0;
    for (Index i = 1; i < u.size(); ++i)
        if (std::abs(u[i]) > std::abs(u[at])) at = i;
    if (u[at] < 0) {
        u = -u;
        return true;
    }
    return false;
}

}  // namespace

SvdResult svd_init(const Eigen::MatrixXd& M, Index R, const InitConfig& cfg) {
    if (R < 1 || R > std::min(M.rows(), M.cols()))
        throw DimensionError("rank " + std::to_string(R) + " exceeds covariate size " + std::to_string(M.rows()) + "x" +
                             std::to_string(M.cols()));
    CounterRng rng(cfg.seed, 0x5bd1e995);
    Eigen::MatrixXd G(M.cols(), R);
    for (Index r = 0; r < R; ++r) G.col(r) = gaussian(rng, M.cols());
    Eigen::MatrixXd Q = orthonormalize(M.transpose() * (M * G));

    SvdResult out;
    const double scale = std::max(M.norm(), 1e-300);
    for (int it = 1; it <= cfg.svd_power_iters; ++it) {
        // Rayleigh-Ritz on span(Q): B = M Q, B^T B = W diag(s^2) W^T
        const Eigen::MatrixXd B = M * Q;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(B.transpose() * B);
        const Eigen::MatrixXd W = eig.eigenvectors().rowwise().reverse();
        const Eigen::VectorXd s2 = eig.eigenvalues().reverse();
        out.V = Q * W;
        out.sigma = s2.cwiseMax(0.0).cwiseSqrt();
        out.U = B * W;
        for (Index r = 0; r < R; ++r)
            if (out.sigma[r] > 0) out.U.col(r) /= out.sigma[r];
        out.iterations = it;

        // residual of the left relation M^T u = sigma v
        double worst = 0;
        for (Index r = 0; r < R; ++r)
            worst = std::max(worst, (M.transpose() * out.U.col(r) - out.sigma[r] * out.V.col(r)).norm());
        if (worst <= cfg.svd_tol * scale) {
            out.converged = true;
            break;
        }
        Q = orthonormalize(M.transpose() * (M * Q));
    }
    for (Index r = 0; r < R; ++r) {
        if (!(out.sigma[r] > 0))
            throw DegenerateComponent("singular value " + std::to_string(r) + " of the covariate is zero");
        out.U.col(r).normalize();
        out.V.col(r).normalize();
        if (canonical_sign(out.U.col(r))) out.V.col(r) = -out.V.col(r);
    }
    return out;
}

template <typename TensorT>
RtpmResult rtpm_init(const TensorT& t, Index R, const InitConfig& cfg, const std::map<Index, Eigen::MatrixXd>& fixed,
                     const std::map<Index, Eigen::MatrixXd>& subspaces) {
    const Dims& dims = t.dims();
    const Index K = dims.order();
    if (R < 1) throw DimensionError("power method needs rank >= 1");
    std::vector<Index> free_modes;
    for (Index k = 0; k < K; ++k) {
        auto it = fixed.find(k);
        if (it == fixed.end())
            free_modes.push_back(k);
        else if (it->second.rows() != dims[k] || it->second.cols() < R)
            throw DimensionError("fixed columns for mode " + std::to_string(k) + " do not conform");
    }
    for (const auto& [k, Q] : subspaces)
        if (k < 0 || k >= K || fixed.count(k) || Q.rows() != dims[k] || Q.cols() < 1)
            throw DimensionError("subspace for mode " + std::to_string(k) + " does not conform");
    // restrict a free vector to its mode's subspace, if any
    auto restrict = [&](Index k, Eigen::VectorXd& v) {
        auto it = subspaces.find(k);
        if (it != subspaces.end()) v = it->second * (it->second.transpose() * v);
    };
    if (free_modes.empty()) throw DimensionError("power method needs at least one free mode");

    RtpmResult out;
    out.weights = Eigen::VectorXd::Zero(R);
    for (Index k = 0; k < K; ++k) {
        auto it = fixed.find(k);
        out.factors.push_back(it == fixed.end() ? Eigen::MatrixXd::Zero(dims[k], R) : it->second.leftCols(R).eval());
    }

    std::vector<Eigen::VectorXd> vec(static_cast<std::size_t>(K));
    // Contraction of the deflated tensor T - sum_{m<r} w_m (rank-1)_m.
    auto deflated = [&](Index r, Index k) {
        Eigen::VectorXd g = contract(t, std::span<const Eigen::VectorXd>(vec), k);
        for (Index m = 0; m < r; ++m) {
            double p = out.weights[m];
            for (Index j = 0; j < K; ++j)
                if (j != k) p *= out.factors[static_cast<std::size_t>(j)].col(m).dot(vec[static_cast<std::size_t>(j)]);
            g -= p * out.factors[static_cast<std::size_t>(k)].col(m);
        }
        return g;
    };

    for (Index r = 0; r < R; ++r) {
        double best_abs = 0, best_val = 0;
        std::vector<Eigen::VectorXd> best;
        for (int s = 0; s < cfg.rtpm_starts; ++s) {
            CounterRng rng = CounterRng(cfg.seed, 0x7270746d).derive(static_cast<std::uint64_t>(r) * 1000003u +
                                                                       static_cast<std::uint64_t>(s));
            for (Index k = 0; k < K; ++k) {
                auto& v = vec[static_cast<std::size_t>(k)];
                if (fixed.count(k)) {
                    v = out.factors[static_cast<std::size_t>(k)].col(r);
                } else {
                    v = gaussian(rng, dims[k]);
                    restrict(k, v);
                    v.normalize();
                }
            }
            bool collapsed = false;
            for (int it = 0; it < cfg.rtpm_iters && !collapsed; ++it) {
                double delta = 0;
                for (Index k : free_modes) {
                    Eigen::VectorXd g = deflated(r, k);
                    restrict(k, g);
                    const double n = g.norm();
                    if (!(n > 0)) {
                        collapsed = true;
                        break;
                    }
                    g /= n;
                    auto& v = vec[static_cast<std::size_t>(k)];
                    delta = std::max(delta, std::min((g - v).norm(), (g + v).norm()));
                    v = std::move(g);
                }
                if (delta < cfg.rtpm_tol) break;
            }
            if (collapsed) continue;
            const Index k0 = free_modes.front();
            const double val = deflated(r, k0).dot(vec[static_cast<std::size_t>(k0)]);
            if (std::abs(val) > best_abs) {
                best_abs = std::abs(val);
                best_val = val;
                best = vec;
            }
        }
        if (!(best_abs > 0))
            throw DegenerateComponent("power method found no signal for component " + std::to_string(r));
        if (best_val < 0) best[static_cast<std::size_t>(free_modes.front())] *= -1.0;
        for (Index k : free_modes) out.factors[static_cast<std::size_t>(k)].col(r) = best[static_cast<std::size_t>(k)];
        out.weights[r] = best_abs;
    }
    return out;
}

template RtpmResult rtpm_init<DenseTensord>(const DenseTensord&, Index, const InitConfig&,
                                            const std::map<Index, Eigen::MatrixXd>&,
                                            const std::map<Index, Eigen::MatrixXd>&);
template RtpmResult rtpm_init<ObservedTensord>(const ObservedTensord&, Index, const InitConfig&,
                                               const std::map<Index, Eigen::MatrixXd>&,
                                               const std::map<Index, Eigen::MatrixXd>&);

CoupledModel initial_model(const Dataset& data, Index R, const InitConfig& cfg) {
    data.validate();
    const Dims& dims = data.dims();
    const Index K = dims.order();
    CoupledModel model;
    model.cp.weights = Eigen::VectorXd::Ones(R);
    model.cp.factors.resize(static_cast<std::size_t>(K));

    std::map<Index, Eigen::MatrixXd> fixed;
    for (const auto& cov : data.covariates) {
        SvdResult svd = svd_init(cov.zero_filled(), R, cfg);
        fixed[cov.mode] = svd.U;
        model.cp.factors[static_cast<std::size_t>(cov.mode)] = svd.U;
        model.covariates.push_back({cov.mode, svd.sigma, svd.V});
    }

    if (static_cast<Index>(fixed.size()) < K) {
        if (data.tensor.nnz() == 0) throw DegenerateComponent("no observed tensor entries to initialize from");
        RtpmResult rt = rtpm_init(data.tensor, R, cfg, fixed);
        const double frac = static_cast<double>(data.tensor.nnz()) / static_cast<double>(dims.total());
        model.cp.factors = std::move(rt.factors);
        model.cp.weights = rt.weights / frac;
    } else {
        // sequential weight solves, earlier components already in place
        for (Index r = 0; r < R; ++r) {
            CoupledModel partial = model;
            for (Index m = r + 1; m < R; ++m) partial.cp.weights[m] = 0.0;
            refresh_weight(data, partial, r);
            model.cp.weights[r] = partial.cp.weights[r];
            model.cp.factors = partial.cp.factors;
            model.covariates = partial.covariates;
        }
    }
    return model;
}

CoupledModel subspace_model(const Dataset& data, Index R, const InitConfig& cfg) {
    data.validate();
    const Dims& dims = data.dims();
    if (data.tensor.nnz() == 0) throw DegenerateComponent("no observed tensor entries to initialize from");
    std::map<Index, Eigen::MatrixXd> subspaces;
    for (const auto& cov : data.covariates) subspaces[cov.mode] = svd_init(cov.zero_filled(), R, cfg).U;

    RtpmResult rt = rtpm_init(data.tensor, R, cfg, {}, subspaces);
    const double frac = static_cast<double>(data.tensor.nnz()) / static_cast<double>(dims.total());
    CoupledModel model;
    model.cp.factors = std::move(rt.factors);
    model.cp.weights = rt.weights / frac;
    for (const auto& cov : data.covariates) {
        // sigma_r v_r from least squares M ~ U W^T with U held
        const Eigen::MatrixXd& U = model.cp.factors[static_cast<std::size_t>(cov.mode)];
        const Eigen::MatrixXd W = (U.transpose() * U).ldlt().solve(U.transpose() * cov.zero_filled()).transpose();
        CovariateFactors cf{cov.mode, W.colwise().norm().transpose(), W};
        for (Index r = 0; r < R; ++r) {
            if (!(cf.sigma[r] > 0)) throw DegenerateComponent("covariate loading " + std::to_string(r) + " is zero");
            cf.V.col(r) /= cf.sigma[r];
        }
        model.covariates.push_back(std::move(cf));
    }
    return model;
}

std::vector<CoupledModel> starting_models(const Dataset& data, Index R, const InitConfig& cfg, bool fix_shared) {
    std::vector<CoupledModel> out{initial_model(data, R, cfg)};
    const auto coupled = static_cast<Index>(data.covariates.size());
    if (!fix_shared && coupled > 0 && coupled < data.dims().order()) {
        try {
            out.push_back(subspace_model(data, R, cfg));
        } catch (const DegenerateComponent&) {
        }
    }
    return out;
}

CoupledModel perturb(const CoupledModel& model, const InitConfig& cfg, int restart_index, bool keep_coupled) {
    if (restart_index == 0) return model;
    CounterRng rng = CounterRng(cfg.seed, 0x6a697474).derive(static_cast<std::uint64_t>(restart_index));
    std::normal_distribution<double> g;
    const double j = cfg.restart_jitter;
    auto jitter_columns = [&](Eigen::MatrixXd& F) {
        const double step = j / std::sqrt(static_cast<double>(F.rows()));
        for (Index r = 0; r < F.cols(); ++r) {
            F.col(r) += step * gaussian(rng, F.rows());
            const double n = F.col(r).norm();
            if (n > 0) F.col(r) /= n;
        }
    };
    auto jitter_weights = [&](Eigen::VectorXd& w) {
        for (Index r = 0; r < w.size(); ++r) w[r] *= std::max(1.0 + j * g(rng), 1e-3);
    };

    CoupledModel out = model;
    for (Index k = 0; k < out.order(); ++k) {
        if (keep_coupled && out.covariate(k)) continue;
        jitter_columns(out.cp.factors[static_cast<std::size_t>(k)]);
    }
    jitter_weights(out.cp.weights);
    for (auto& c : out.covariates) {
        jitter_columns(c.V);
        jitter_weights(c.sigma);
    }
    return out;
}

CoupledModel initialize(const Dataset& data, Index R, const InitConfig& cfg, int restart_index) {
    return perturb(initial_model(data, R, cfg), cfg, restart_index);
}

}  // namespace costco
