#include "costco/simgen.hpp"

#include "costco/random.hpp"
#include "costco/tuning.hpp"

#include <cmath>
#include <ostream>
#include <random>
#include <string>

namespace costco {

namespace {

constexpr std::uint64_t kTruthStream = 0x7472757468;
constexpr std::uint64_t kNoiseStream = 0x6e6f697365;
constexpr std::uint64_t kMaskStream = 0x6d61736b;

Eigen::MatrixXd gaussian_matrix(CounterRng& rng, Index rows, Index cols) {
    std::normal_distribution<double> g;
    Eigen::MatrixXd m(rows, cols);
    for (Index c = 0; c < cols; ++c)
        for (Index r = 0; r < rows; ++r) m(r, c) = g(rng);
    return m;
}

Eigen::VectorXd gaussian_vector(CounterRng& rng, Index n) {
    std::normal_distribution<double> g;
    Eigen::VectorXd v(n);
    for (Index i = 0; i < n; ++i) v[i] = g(rng);
    return v;
}

// Orthogonal directions, original column norms.
void orthogonalize_keep_norms(Eigen::MatrixXd& m) {
    const Eigen::VectorXd norms = m.colwise().norm().transpose();
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(m);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(m.rows(), m.cols());
    for (Index r = 0; r < m.cols(); ++r) {
        if (q.col(r).dot(m.col(r)) < 0) q.col(r) = -q.col(r);
        m.col(r) = norms[r] * q.col(r);
    }
}

double mean(const std::vector<double>& xs) {
    double s = 0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

double standard_error(const std::vector<double>& xs) {
    if (xs.size() < 2) return 0.0;
    const double m = mean(xs);
    double ss = 0;
    for (double x : xs) ss += (x - m) * (x - m);
    const auto n = static_cast<double>(xs.size());
    return std::sqrt(ss / (n - 1)) / std::sqrt(n);
}

std::string dims_label(const std::vector<Index>& dims) {
    std::string s;
    for (std::size_t k = 0; k < dims.size(); ++k) s += (k ? "x" : "") + std::to_string(dims[k]);
    return s;
}

}  // namespace

void Scenario::validate() const {
    const Dims d(dims);
    for (const auto& c : coupling)
        if (c.mode < 0 || c.mode >= d.order() || c.width < 1) throw DimensionError("invalid scenario coupling");
    for (std::size_t i = 1; i < coupling.size(); ++i)
        if (coupling[i].mode <= coupling[i - 1].mode) throw DimensionError("scenario couplings must be sorted by mode");
    if (rank < 1) throw DimensionError("scenario rank must be positive");
    if (!(fraction > 0.0 && fraction <= 1.0)) throw DimensionError("fraction must lie in (0, 1]");
    if (!(reveal >= 0.0 && reveal <= 1.0)) throw DimensionError("reveal probability must lie in [0, 1]");
    if (!(eta_t >= 0.0) || !(eta_m >= 0.0)) throw DimensionError("noise levels must be nonnegative");
    if (replicas < 1) throw DimensionError("replicas must be at least 1");
}

Scenario Scenario::replica(int r) const {
    Scenario s = *this;
    s.seed = CounterRng(seed, 0x7265706c).derive(static_cast<std::uint64_t>(r))();
    return s;
}

Truth gen_truth(const Scenario& scenario) {
    scenario.validate();
    const Dims dims(scenario.dims);
    const Index K = dims.order(), R = scenario.rank;
    CounterRng rng(scenario.seed, kTruthStream);

    std::vector<Eigen::MatrixXd> raw;
    for (Index k = 0; k < K; ++k) raw.push_back(gaussian_matrix(rng, dims[k], R));
    std::vector<Eigen::MatrixXd> raw_v;
    for (const auto& c : scenario.coupling) raw_v.push_back(gaussian_matrix(rng, c.width, R));

    auto coupled = [&](Index k) {
        for (const auto& c : scenario.coupling)
            if (c.mode == k) return true;
        return false;
    };
    for (Index k = 0; k < K; ++k) {
        auto& m = raw[static_cast<std::size_t>(k)];
        if (coupled(k)) {
            if (scenario.orthogonal_shared) orthogonalize_keep_norms(m);
            continue;
        }
        const Index s = fraction_budget(scenario.fraction, dims[k]);
        for (Index r = 0; r < R; ++r) m.col(r) = truncate(m.col(r), s);
    }
    if (scenario.orthogonal_shared)
        for (auto& v : raw_v) orthogonalize_keep_norms(v);

    Truth truth;
    auto& model = truth.model;
    model.cp.weights = Eigen::VectorXd::Ones(R);
    for (Index k = 0; k < K; ++k) {
        const Eigen::VectorXd norms = raw[static_cast<std::size_t>(k)].colwise().norm().transpose();
        model.cp.weights = model.cp.weights.cwiseProduct(norms);
    }
    for (std::size_t c = 0; c < scenario.coupling.size(); ++c) {
        const Index mode = scenario.coupling[c].mode;
        const Eigen::VectorXd a = raw[static_cast<std::size_t>(mode)].colwise().norm().transpose();
        const Eigen::VectorXd v = raw_v[c].colwise().norm().transpose();
        model.covariates.push_back({mode, a.cwiseProduct(v), raw_v[c].colwise().normalized()});
    }
    for (auto& m : raw) model.cp.factors.push_back(m.colwise().normalized());
    model.validate();

    truth.tensor = reconstruct(model.cp);
    for (const auto& c : model.covariates) truth.covariates.push_back(reconstruct_covariate(model, c.mode));
    return truth;
}

Eigen::VectorXd scaled_noise(const Eigen::VectorXd& noise, double eta, double signal_norm) {
    const double n = noise.norm();
    if (!(n > 0)) return Eigen::VectorXd::Zero(noise.size());
    return noise * (eta * signal_norm / n);
}

Dataset corrupt(const Truth& truth, double eta_t, double eta_m, double p, std::uint64_t seed) {
    if (!(p >= 0.0 && p <= 1.0)) throw DimensionError("reveal probability must lie in [0, 1]");
    CounterRng noise_rng(seed, kNoiseStream);
    CounterRng mask_rng(seed, kMaskStream);

    const Dims& dims = truth.tensor.dims();
    Eigen::VectorXd values = truth.tensor.values();
    if (eta_t > 0) values += scaled_noise(gaussian_vector(noise_rng, values.size()), eta_t, values.norm());

    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<Coordinate> coords;
    std::vector<double> kept;
    Coordinate c(static_cast<std::size_t>(dims.order()), 0);
    for (Index e = 0; e < dims.total(); ++e) {
        if (unif(mask_rng) < p) {
            coords.push_back(c);
            kept.push_back(values[e]);
        }
        for (Index k = dims.order() - 1; k >= 0; --k) {
            auto& ck = c[static_cast<std::size_t>(k)];
            if (++ck < dims[k]) break;
            ck = 0;
        }
    }

    Dataset data{ObservedTensord::from_entries(dims, std::move(coords), std::move(kept)), {}};
    for (std::size_t i = 0; i < truth.covariates.size(); ++i) {
        Eigen::MatrixXd m = truth.covariates[i];
        if (eta_m > 0) {
            const Eigen::VectorXd noise = gaussian_vector(noise_rng, m.size());
            m += scaled_noise(noise, eta_m, m.norm()).reshaped(m.rows(), m.cols());
        }
        data.covariates.push_back({truth.model.covariates[i].mode, std::move(m), std::nullopt});
    }
    return data;
}

SolverConfig oracle_config(const Scenario& scenario, const SolverConfig& base) {
    SolverConfig cfg = base;
    cfg.rank = scenario.rank;
    cfg.sparsity.clear();
    cfg.covariate_sparsity.clear();
    for (std::size_t k = 0; k < scenario.dims.size(); ++k) {
        bool coupled = false;
        for (const auto& c : scenario.coupling) coupled |= c.mode == static_cast<Index>(k);
        const Index n = scenario.dims[k];
        cfg.sparsity.push_back(coupled ? n : fraction_budget(scenario.fraction, n));
    }
    for (const auto& c : scenario.coupling) cfg.covariate_sparsity[c.mode] = c.width;
    return cfg;
}

std::vector<SummaryRow> ExperimentResult::summary() const {
    std::vector<SummaryRow> rows;
    for (const auto& m : methods) {
        std::vector<std::string> names{"tensor"};
        for (std::size_t k = 0; k < scenario.dims.size(); ++k) names.push_back("mode" + std::to_string(k));
        names.push_back("weight");
        for (std::size_t i = 0; i < names.size(); ++i) {
            std::vector<double> xs;
            for (const auto& rep : m.replicas) {
                if (!rep) continue;
                if (i == 0)
                    xs.push_back(rep->tensor_error);
                else if (i + 1 == names.size())
                    xs.push_back(rep->weight_error);
                else
                    xs.push_back(rep->component_errors.at(i - 1));
            }
            SummaryRow row{m.method, names[i], std::nan(""), std::nan(""), static_cast<int>(xs.size())};
            if (!xs.empty()) {
                row.mean = mean(xs);
                row.stderr_ = standard_error(xs);
            }
            rows.push_back(row);
        }
    }
    return rows;
}

ExperimentResult run_experiment(const Scenario& scenario, const ExperimentConfig& cfg) {
    scenario.validate();
    ExperimentResult out;
    out.scenario = scenario;
    MethodRuns costco{"costco", {}}, ablation{"ablation", {}};

    for (int rep = 0; rep < scenario.replicas; ++rep) {
        const Scenario sc = scenario.replica(rep);
        const Truth truth = gen_truth(sc);
        const Dataset data = corrupt(truth, sc.eta_t, sc.eta_m, sc.reveal, sc.seed);

        SolverConfig solver = oracle_config(sc, cfg.solver);
        solver.seed = sc.seed;
        InitConfig init = cfg.init;
        init.seed = sc.seed;

        auto run = [&](const Dataset& d, const CoupledModel& ref) -> std::optional<MetricsReport> {
            try {
                const FitResult res = fit(d, solver, init);
                return metrics(res.model, ref, truth.tensor);
            } catch (const DegenerateComponent&) {
                return std::nullopt;
            } catch (const NumericalFailure&) {
                return std::nullopt;
            }
        };
        costco.replicas.push_back(run(data, truth.model));
        if (cfg.ablation) {
            CoupledModel bare = truth.model;
            bare.covariates.clear();
            SolverConfig saved = solver;
            solver.covariate_sparsity.clear();
            ablation.replicas.push_back(run(data.without_covariates(), bare));
            solver = saved;
        }
    }
    out.methods.push_back(std::move(costco));
    if (cfg.ablation) out.methods.push_back(std::move(ablation));
    return out;
}

void write_experiment_csv(std::ostream& out, const std::vector<ExperimentResult>& results) {
    const auto old_precision = out.precision(17);
    out << "d1,dims,rank,reveal,eta_t,eta_m,fraction,replicas,seed,method,metric,mean,stderr,count\n";
    for (const auto& res : results) {
        const Scenario& s = res.scenario;
        for (const auto& row : res.summary()) {
            out << s.dims.front() << ',' << dims_label(s.dims) << ',' << s.rank << ',' << s.reveal << ',' << s.eta_t
                << ',' << s.eta_m << ',' << s.fraction << ',' << s.replicas << ',' << s.seed << ',' << row.method << ','
                << row.metric << ',' << row.mean << ',' << row.stderr_ << ',' << row.count << '\n';
        }
    }
    out.precision(old_precision);
}

void write_plot_data(std::ostream& out, const std::vector<ExperimentResult>& results) {
    const auto old_precision = out.precision(17);
    out << "# reveal eta_t eta_m d1 rank";
    if (!results.empty())
        for (const auto& m : results.front().methods) out << ' ' << m.method << "_mean " << m.method << "_stderr";
    out << '\n';
    for (const auto& res : results) {
        const Scenario& s = res.scenario;
        out << s.reveal << ' ' << s.eta_t << ' ' << s.eta_m << ' ' << s.dims.front() << ' ' << s.rank;
        for (const auto& row : res.summary())
            if (row.metric == "tensor") out << ' ' << row.mean << ' ' << row.stderr_;
        out << '\n';
    }
    out.precision(old_precision);
}

}  // namespace costco
