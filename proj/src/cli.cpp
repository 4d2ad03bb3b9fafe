#include "costco/cli.hpp"

#include "costco/io.hpp"
#include "costco/simgen.hpp"
#include "costco/tuning.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <string>

namespace costco {

namespace {

namespace fs = std::filesystem;

struct SolverOptions {
    Index rank = 1;
    std::vector<Index> sparsity;
    std::vector<std::string> covariate_sparsity;  // MODE:S
    double fraction = 0;                          // 0: use sparsity lists
    double tol = 1e-7;
    int max_iterations = 200;
    int restarts = 10;
    bool fix_shared = false;
    int rtpm_starts = 30;
    int rtpm_iters = 50;
    double jitter = 0.1;
};

struct DataOptions {
    std::string tensor;
    std::vector<std::string> covariates;  // MODE:PATH
};

struct Common {
    std::uint64_t seed = 0;
    std::string config;  // consumed by with_config_file before parsing
};

bool given(const std::vector<std::string>& args, const std::string& flag) {
    for (const auto& a : args)
        if (a == flag || a.rfind(flag + "=", 0) == 0) return true;
    return false;
}

// CLI11 only reads config files attached to the root app, so the subcommand
// file is spliced into the arguments instead. Keys already on the command
// line are skipped; `[subcommand]` sections apply to that subcommand only.
std::vector<std::string> with_config_file(const std::vector<std::string>& args) {
    if (args.size() < 3) return args;
    std::string path;
    for (std::size_t i = 2; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
        if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
    }
    if (path.empty()) return args;
    std::vector<CLI::ConfigItem> items;
    try {
        items = CLI::ConfigTOML().from_file(path);
    } catch (const CLI::FileError&) {
        throw DataError("cannot read config file " + path);
    }
    const std::string& sub = args[1];
    std::vector<std::string> extra;
    for (const auto& item : items) {
        if (item.name == "++" || item.name == "--") continue;
        if (!item.parents.empty() && item.parents != std::vector<std::string>{sub}) continue;
        const std::string flag = "--" + item.name;
        if (flag == "--config" || given(args, flag)) continue;
        if (item.inputs.size() == 1) {
            extra.push_back(flag + "=" + item.inputs.front());
        } else {
            extra.push_back(flag);
            extra.insert(extra.end(), item.inputs.begin(), item.inputs.end());
        }
    }
    std::vector<std::string> out(args.begin(), args.begin() + 2);
    out.insert(out.end(), extra.begin(), extra.end());
    out.insert(out.end(), args.begin() + 2, args.end());
    return out;
}

void add_solver_options(CLI::App* app, SolverOptions& o, bool with_rank_and_budgets) {
    if (with_rank_and_budgets) {
        app->add_option("--rank", o.rank, "CP rank")->check(CLI::PositiveNumber);
        app->add_option("--sparsity", o.sparsity, "nonzeros kept per column, one per tensor mode");
        app->add_option("--covariate-sparsity", o.covariate_sparsity, "MODE:S nonzeros kept per V column");
        app->add_option("--fraction", o.fraction, "uniform nonzero fraction for every mode (overrides --sparsity)")
            ->check(CLI::Range(0.0, 1.0));
    }
    app->add_option("--tol", o.tol, "relative factor change for convergence")->check(CLI::PositiveNumber);
    app->add_option("--max-iter", o.max_iterations, "sweep cap per restart")->check(CLI::PositiveNumber);
    app->add_option("--restarts", o.restarts, "number of restarts")->check(CLI::PositiveNumber);
    app->add_flag("--fix-shared", o.fix_shared, "hold coupled-mode factors at their initial values");
    app->add_option("--rtpm-starts", o.rtpm_starts, "power method starts per component")->check(CLI::PositiveNumber);
    app->add_option("--rtpm-iters", o.rtpm_iters, "power method iterations per start")->check(CLI::PositiveNumber);
    app->add_option("--jitter", o.jitter, "restart perturbation scale")->check(CLI::NonNegativeNumber);
}

void add_data_options(CLI::App* app, DataOptions& o) {
    app->add_option("--tensor", o.tensor, "observed tensor file")->required();
    app->add_option("--covariate", o.covariates, "MODE:PATH covariate matrix file (repeatable)");
}

std::pair<Index, std::string> split_pair(const std::string& s, const char* flag) {
    const auto colon = s.find(':');
    if (colon == std::string::npos || colon == 0) throw CLI::ValidationError(flag, "expected MODE:VALUE, got " + s);
    try {
        return {static_cast<Index>(std::stoll(s.substr(0, colon))), s.substr(colon + 1)};
    } catch (const std::exception&) {
        throw CLI::ValidationError(flag, "expected MODE:VALUE, got " + s);
    }
}

Dataset load_dataset(const DataOptions& o) {
    Dataset data{load_tensor(o.tensor), {}};
    for (const auto& spec : o.covariates) {
        auto [mode, path] = split_pair(spec, "--covariate");
        MatrixData m = load_matrix(path);
        data.covariates.push_back({mode, std::move(m.values), std::move(m.mask)});
    }
    std::sort(data.covariates.begin(), data.covariates.end(),
              [](const Covariate& a, const Covariate& b) { return a.mode < b.mode; });
    data.validate();
    return data;
}

InitConfig init_config(const SolverOptions& o, std::uint64_t seed) {
    InitConfig c;
    c.rtpm_starts = o.rtpm_starts;
    c.rtpm_iters = o.rtpm_iters;
    c.restart_jitter = o.jitter;
    c.seed = seed;
    return c;
}

SolverConfig solver_config(const SolverOptions& o, const Dataset* data, std::uint64_t seed) {
    SolverConfig c;
    c.rank = o.rank;
    c.tol = o.tol;
    c.max_iterations = o.max_iterations;
    c.restarts = o.restarts;
    c.fix_shared = o.fix_shared;
    c.seed = seed;
    if (data && o.fraction > 0) {
        c = with_fraction(c, *data, o.fraction);
    } else {
        c.sparsity = o.sparsity;
        for (const auto& spec : o.covariate_sparsity) {
            auto [mode, value] = split_pair(spec, "--covariate-sparsity");
            try {
                c.covariate_sparsity[mode] = static_cast<Index>(std::stoll(value));
            } catch (const std::exception&) {
                throw CLI::ValidationError("--covariate-sparsity", "expected MODE:S, got " + spec);
            }
        }
    }
    return c;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    return out;
}

void write_trace(const std::string& path, const FitResult& res) {
    auto out = open_out(path);
    out.precision(17);
    out << "# iteration objective\n";
    for (std::size_t i = 0; i < res.objective_trace.size(); ++i) out << i << ' ' << res.objective_trace[i] << '\n';
}

void write_metrics(std::ostream& out, const MetricsReport& rep) {
    const auto old = out.precision(17);
    out << "metric,value\n";
    out << "tensor," << rep.tensor_error << '\n';
    for (std::size_t k = 0; k < rep.component_errors.size(); ++k)
        out << "mode" << k << ',' << rep.component_errors[k] << '\n';
    out << "weight," << rep.weight_error << '\n';
    out.precision(old);
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Covariate-assisted sparse tensor completion", "costco"};
    app.require_subcommand(1);
    Common common;

    auto with_common = [&](CLI::App* sub) {
        sub->add_option("--seed", common.seed, "random seed");
        sub->add_option("--config", common.config, "key = value configuration file; flags override it");
        return sub;
    };

    // simulate
    Scenario sim;
    int sim_coupled = 0;
    Index sim_width = 30;
    std::string sim_dir = ".";
    auto* simulate = with_common(app.add_subcommand("simulate", "generate a synthetic dataset and its truth model"));
    simulate->add_option("--dims", sim.dims, "tensor dimensions")->expected(2, 16);
    simulate->add_option("--coupled-mode", sim_coupled, "coupled tensor mode, -1 for none");
    simulate->add_option("--width", sim_width, "covariate columns")->check(CLI::PositiveNumber);
    simulate->add_option("--rank", sim.rank, "true rank")->check(CLI::PositiveNumber);
    simulate->add_option("--fraction", sim.fraction, "kept fraction per uncoupled column");
    simulate->add_option("--eta-t", sim.eta_t, "tensor noise level");
    simulate->add_option("--eta-m", sim.eta_m, "covariate noise level");
    simulate->add_option("--reveal", sim.reveal, "probability an entry is observed");
    simulate->add_flag("--orthogonal-shared", sim.orthogonal_shared, "orthogonal coupled-mode and V columns");
    simulate->add_option("--out-dir", sim_dir, "output directory");

    // fit
    DataOptions fit_data;
    SolverOptions fit_opts;
    std::string fit_out = "model.txt", fit_trace;
    auto* fit_cmd = with_common(app.add_subcommand("fit", "fit a coupled sparse CP model"));
    add_data_options(fit_cmd, fit_data);
    add_solver_options(fit_cmd, fit_opts, true);
    fit_cmd->add_option("--out", fit_out, "model output file");
    fit_cmd->add_option("--trace", fit_trace, "objective trace output file");

    // complete
    std::string comp_model, comp_coords, comp_out;
    auto* complete_cmd = with_common(app.add_subcommand("complete", "predict tensor entries from a model"));
    complete_cmd->add_option("--model", comp_model, "model file")->required();
    complete_cmd->add_option("--coords", comp_coords, "coordinate list file")->required();
    complete_cmd->add_option("--out", comp_out, "output file (default stdout)");

    // evaluate
    std::string eval_est, eval_truth, eval_out;
    auto* evaluate = with_common(app.add_subcommand("evaluate", "error metrics of an estimate against a truth model"));
    evaluate->add_option("--estimate", eval_est, "estimated model file")->required();
    evaluate->add_option("--truth", eval_truth, "truth model file")->required();
    evaluate->add_option("--out", eval_out, "metrics CSV (default stdout)");

    // tune
    DataOptions tune_data;
    SolverOptions tune_opts;
    TuneGrid grid;
    std::string tune_out = "model.txt", tune_report;
    auto* tune_cmd = with_common(app.add_subcommand("tune", "choose rank and sparsity by BIC"));
    add_data_options(tune_cmd, tune_data);
    add_solver_options(tune_cmd, tune_opts, false);
    tune_cmd->add_option("--ranks", grid.ranks, "candidate ranks");
    tune_cmd->add_option("--fractions", grid.fractions, "candidate nonzero fractions");
    tune_cmd->add_option("--out", tune_out, "model output file");
    tune_cmd->add_option("--report", tune_report, "BIC table output (default stdout)");

    // experiment
    Scenario exp_base;
    exp_base.reveal = 0.1;
    std::vector<double> exp_reveal{0.1}, exp_eta_t{0.001}, exp_eta_m{0.001};
    std::vector<Index> exp_d1, exp_ranks{2};
    SolverOptions exp_opts;
    bool exp_no_ablation = false;
    std::string exp_out = "experiment.csv", exp_plot;
    auto* experiment = with_common(app.add_subcommand("experiment", "simulation study over a scenario grid"));
    experiment->add_option("--dims", exp_base.dims, "tensor dimensions")->expected(2, 16);
    experiment->add_option("--width", exp_base.coupling[0].width, "covariate columns on mode 0");
    experiment->add_option("--fraction", exp_base.fraction, "kept fraction per uncoupled column");
    experiment->add_option("--replicas", exp_base.replicas, "replicas per scenario")->check(CLI::PositiveNumber);
    experiment->add_option("--reveal", exp_reveal, "reveal probabilities");
    experiment->add_option("--eta-t", exp_eta_t, "tensor noise levels");
    experiment->add_option("--eta-m", exp_eta_m, "covariate noise levels");
    experiment->add_option("--d1", exp_d1, "sizes of the coupled mode");
    experiment->add_option("--ranks", exp_ranks, "true ranks");
    experiment->add_flag("--no-ablation", exp_no_ablation, "skip the no-covariate baseline");
    experiment->add_flag("--orthogonal-shared", exp_base.orthogonal_shared, "orthogonal coupled-mode and V columns");
    add_solver_options(experiment, exp_opts, false);
    experiment->add_option("--out", exp_out, "summary CSV");
    experiment->add_option("--plot", exp_plot, "plot data file");

    std::vector<std::string> expanded;
    try {
        expanded = with_config_file(args);
    } catch (const DataError& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    }
    std::vector<const char*> argv;
    for (const auto& a : expanded) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        if (code != 0) {
            CLI::App* failing = &app;
            for (CLI::App* sub : app.get_subcommands()) failing = sub;
            err << failing->help();
            return 1;
        }
        return 0;
    }

    try {
        if (simulate->parsed()) {
            if (sim_coupled >= 0)
                sim.coupling = {{sim_coupled, sim_width}};
            else
                sim.coupling.clear();
            sim.seed = common.seed;
            const Truth truth = gen_truth(sim);
            const Dataset data = corrupt(truth, sim.eta_t, sim.eta_m, sim.reveal, sim.seed);
            fs::create_directories(sim_dir);
            const fs::path dir(sim_dir);
            save_tensor(dir / "tensor.txt", data.tensor);
            for (const auto& c : data.covariates)
                save_matrix(dir / ("covariate" + std::to_string(c.mode) + ".txt"), c.values);
            save_model(dir / "truth.model", ModelFile{truth.model, sim.seed, 0.0});
            out << "observed " << data.tensor.nnz() << " of " << data.dims().total() << " entries; wrote "
                << dir.string() << '\n';
        } else if (fit_cmd->parsed()) {
            const Dataset data = load_dataset(fit_data);
            const SolverConfig cfg = solver_config(fit_opts, &data, common.seed);
            const InitConfig icfg = init_config(fit_opts, common.seed);
            const FitResult res = fit(data, cfg, icfg);
            save_model(fit_out, ModelFile{res.model, common.seed, res.objective()});
            if (!fit_trace.empty()) write_trace(fit_trace, res);
            out.precision(17);
            out << "objective " << res.objective() << " after " << res.iterations << " sweeps, restart "
                << res.restart_index << (res.converged ? ", converged\n" : ", not converged\n");
        } else if (complete_cmd->parsed()) {
            const ModelFile mf = load_model(comp_model);
            const auto coords = load_coordinates(comp_coords);
            const Dims dims = mf.model.dims();
            for (const auto& c : coords)
                if (!dims.contains(c)) throw DataError(comp_coords + ": coordinate outside model dims " + dims.str());
            const auto values = complete(mf.model, coords);
            std::ofstream file;
            if (!comp_out.empty()) file = open_out(comp_out);
            std::ostream& dst = comp_out.empty() ? out : file;
            dst.precision(17);
            for (double v : values) dst << v << '\n';
        } else if (evaluate->parsed()) {
            const ModelFile est = load_model(eval_est);
            const ModelFile truth = load_model(eval_truth);
            const MetricsReport rep = metrics(est.model, truth.model, reconstruct(truth.model.cp));
            if (eval_out.empty()) {
                write_metrics(out, rep);
            } else {
                auto file = open_out(eval_out);
                write_metrics(file, rep);
            }
        } else if (tune_cmd->parsed()) {
            const Dataset data = load_dataset(tune_data);
            const SolverConfig base = solver_config(tune_opts, nullptr, common.seed);
            const TuneResult res = tune(data, grid, base, init_config(tune_opts, common.seed));
            save_model(tune_out, ModelFile{res.fit.model, common.seed, res.fit.objective()});
            std::ofstream file;
            if (!tune_report.empty()) file = open_out(tune_report);
            std::ostream& dst = tune_report.empty() ? out : file;
            dst.precision(17);
            dst << "stage,value,bic\n";
            for (const auto& [r, b] : res.rank_bic) dst << "rank," << r << ',' << b << '\n';
            for (const auto& [f, b] : res.fraction_bic) dst << "fraction," << f << ',' << b << '\n';
            dst << "chosen_rank," << res.rank << ",\nchosen_fraction," << res.fraction << ",\n";
        } else if (experiment->parsed()) {
            if (exp_d1.empty()) exp_d1.push_back(exp_base.dims.front());
            ExperimentConfig ecfg;
            ecfg.solver = solver_config(exp_opts, nullptr, common.seed);
            ecfg.init = init_config(exp_opts, common.seed);
            ecfg.ablation = !exp_no_ablation;
            std::vector<ExperimentResult> results;
            for (Index d1 : exp_d1)
                for (Index R : exp_ranks)
                    for (double p : exp_reveal)
                        for (double et : exp_eta_t)
                            for (double em : exp_eta_m) {
                                Scenario s = exp_base;
                                s.dims.front() = d1;
                                s.rank = R;
                                s.reveal = p;
                                s.eta_t = et;
                                s.eta_m = em;
                                s.seed = common.seed;
                                results.push_back(run_experiment(s, ecfg));
                                err << "finished d1=" << d1 << " rank=" << R << " reveal=" << p << " eta_t=" << et
                                    << " eta_m=" << em << '\n';
                            }
            auto csv = open_out(exp_out);
            write_experiment_csv(csv, results);
            if (!exp_plot.empty()) {
                auto plot = open_out(exp_plot);
                write_plot_data(plot, results);
            }
        }
    } catch (const CLI::ValidationError& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    } catch (const DegenerateComponent& e) {
        err << "numerical failure: " << e.what() << '\n';
        return 3;
    } catch (const NumericalFailure& e) {
        err << "numerical failure: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}

int run_cli(int argc, const char* const* argv) {
    std::vector<std::string> args(argv, argv + argc);
    return run_cli(args, std::cout, std::cerr);
}

}  // namespace costco
