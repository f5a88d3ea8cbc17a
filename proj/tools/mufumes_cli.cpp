#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mufumes/mufumes.hpp"

namespace fs = std::filesystem;
using namespace mufumes;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;
constexpr const char* kVersion = "0.1.0";

struct CommonOptions {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string out_dir;
    int workers = 0;
};

/// A named flag that maps onto a config key.
struct Shortcut {
    std::string key;
    std::string value;
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
    cmd->add_option("-c,--config", opts.config_path, "key = value config file");
    cmd->add_option("--set", opts.overrides, "override section.key=value (repeatable)");
    cmd->add_option("-o,--out", opts.out_dir, "output directory");
    cmd->add_option("-w,--workers", opts.workers, "worker threads (overrides MUFUMES_WORKERS)")
        ->check(CLI::Range(1, 4096));
}

void add_shortcut(CLI::App* cmd, std::vector<Shortcut>& shortcuts, const std::string& flag, const std::string& key,
                  const std::string& help) {
    shortcuts.push_back({key, {}});
    cmd->add_option(flag, shortcuts.back().value, help + " (" + key + ")");
}

/// Config file first, then --set overrides, then named flags.
RunConfig load_config(const CommonOptions& opts, const std::vector<Shortcut>& shortcuts) {
    RunConfig cfg;
    if (!opts.config_path.empty()) cfg.parse_file(opts.config_path);
    for (const auto& o : opts.overrides) cfg.apply_override(o, "--set " + o);
    for (const auto& s : shortcuts) {
        if (!s.value.empty()) cfg.set(s.key, s.value, "command-line flag for " + s.key);
    }
    if (!opts.out_dir.empty()) cfg.set("output.dir", opts.out_dir, "--out");
    cfg.validate();
    return cfg;
}

/// Flag, then MUFUMES_WORKERS, then the config file, then the hardware.
int resolve_workers(const CommonOptions& opts, const RunConfig& cfg) {
    if (opts.workers > 0) return opts.workers;
    if (const char* env = std::getenv("MUFUMES_WORKERS")) {
        const auto v = detail::parse_integer(env);
        if (!v || *v < 1 || *v > 4096) throw ConfigError("MUFUMES_WORKERS must be an integer in [1, 4096]");
        return static_cast<int>(*v);
    }
    if (cfg.workers) return *cfg.workers;
    return default_workers();
}

fs::path prepare_output(const RunConfig& cfg) {
    const fs::path dir(cfg.output_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw ConfigError("cannot create output directory " + dir.string() + ": " + ec.message());
    return dir;
}

RawDataset load_dataset(const RunConfig& cfg) {
    if (cfg.data_input.empty()) throw ConfigError("data.input is required (or pass --data)");
    RawDataset raw = read_dataset_csv_file(cfg.data_input);
    if (!cfg.standardize_fixed.empty() || !cfg.standardize_random.empty()) {
        for (Index c : cfg.standardize_fixed) {
            if (c >= raw.p) throw ConfigError(cfg.origins.at("data.standardize_fixed") + ": column out of range");
        }
        for (Index c : cfg.standardize_random) {
            if (c >= raw.q) throw ConfigError(cfg.origins.at("data.standardize_random") + ": column out of range");
        }
        (void)standardize_covariates(raw, cfg.standardize_fixed, cfg.standardize_random);
    }
    return raw;
}

std::vector<BSplineBasis> bases_for(const RunConfig& cfg, const std::vector<int>& dims, int uniform, Index count,
                                    const char* key) {
    std::vector<BSplineBasis> out;
    if (dims.empty()) {
        out.assign(static_cast<std::size_t>(count), make_cubic_basis(uniform));
        return out;
    }
    if (static_cast<Index>(dims.size()) != count) {
        throw ConfigError(cfg.origins.at(key) + ": " + key + " lists " + std::to_string(dims.size()) +
                          " sizes but the data has " + std::to_string(count) + " covariates");
    }
    for (int d : dims) out.push_back(make_cubic_basis(d));
    return out;
}

ModelData assemble(const RunConfig& cfg, const RawDataset& raw) {
    return assemble_design(raw, bases_for(cfg, cfg.fixed_dims, cfg.d, raw.p, "basis.fixed_dims"),
                           bases_for(cfg, cfg.random_dims, cfg.d_prime, raw.q, "basis.random_dims"));
}

void report_written(const fs::path& p) { std::cout << "wrote " << p.string() << '\n'; }

int cmd_simulate(const RunConfig& cfg) {
    const auto [raw, truth] = generate(cfg.scenario);
    std::ostringstream csv;
    write_dataset_csv(csv, raw);
    const fs::path dir = prepare_output(cfg);
    write_text_file((dir / "dataset.csv").string(), csv.str());
    write_text_file((dir / "truth.json").string(), dump_json(ground_truth_json(truth, cfg.scenario)));
    std::cout << "sigma_b = " << format_double(truth.sigma_b) << '\n'
              << "sigma_eps = " << format_double(truth.sigma_eps) << '\n'
              << "realized SNR_B = " << format_double(truth.realized_snr_b) << '\n'
              << "realized SNR_eps = " << format_double(truth.realized_snr_eps) << '\n';
    report_written(dir / "dataset.csv");
    report_written(dir / "truth.json");
    return 0;
}

void print_fit_summary(const FitResult& fit) {
    std::cout << "iterations = " << fit.iterations << (fit.converged ? " (converged)" : " (not converged)") << '\n'
              << "selected fixed:";
    for (Index k : fit.selected_fixed) std::cout << ' ' << k + 1;
    std::cout << "\nselected random:";
    for (Index r : fit.selected_random) std::cout << ' ' << r + 1;
    std::cout << "\nsigma2 = " << format_double(fit.phi.sigma2) << '\n';
}

int cmd_fit(const RunConfig& cfg) {
    const RawDataset raw = load_dataset(cfg);
    const ModelData data = assemble(cfg, raw);
    const FitResult fit = run_ecm(data, cfg.ecm);
    const std::vector<double> grid = equispaced_grid(cfg.curve_points);
    const fs::path dir = prepare_output(cfg);
    write_text_file((dir / "fit.json").string(), dump_json(fit_to_json(fit, grid)));
    write_text_file((dir / "curves.csv").string(), curves_csv(fit, grid));
    print_fit_summary(fit);
    report_written(dir / "fit.json");
    report_written(dir / "curves.csv");
    return 0;
}

int cmd_tune(const RunConfig& cfg, int workers) {
    const RawDataset raw = load_dataset(cfg);
    std::optional<ModelData> data;
    if (cfg.grid.basis_dims.empty()) data = assemble(cfg, raw);
    const TuningResult res = grid_search(raw, data, cfg.grid, cfg.ecm, workers);
    const std::vector<double> grid = equispaced_grid(cfg.curve_points);
    const fs::path dir = prepare_output(cfg);
    write_text_file((dir / "bic_table.csv").string(), bic_table_csv(res.table));
    write_text_file((dir / "best_fit.json").string(), dump_json(fit_to_json(res.best, grid)));
    write_text_file((dir / "best_curves.csv").string(), curves_csv(res.best, grid));
    const BicRow& row = res.table[res.best_index];
    std::cout << "best: lambda0 = " << format_double(row.lambda0) << ", nu0 = " << format_double(row.nu0)
              << ", d = " << row.d << ", d' = " << row.d_prime << ", BIC = " << format_double(row.bic) << '\n';
    print_fit_summary(res.best);
    report_written(dir / "bic_table.csv");
    report_written(dir / "best_fit.json");
    report_written(dir / "best_curves.csv");
    return 0;
}

json manifest_json(const RunConfig& cfg, const StudyConfig& study, const StudyResult& res) {
    json basis_dims = json::array();
    for (const auto& [d, dp] : study.grid.basis_dims) basis_dims.push_back({d, dp});
    const auto& sc = study.scenario;
    return {{"tool", "mufumes"},
            {"version", kVersion},
            {"command", "benchmark"},
            {"scenario",
             {{"scenario", to_string(sc.scenario)},
              {"n", sc.n},
              {"J", sc.J},
              {"m", sc.m},
              {"snr_b", sc.snr_b},
              {"snr_eps", std::isfinite(sc.snr_eps) ? json(sc.snr_eps) : json("inf")},
              {"seed", sc.seed}}},
            {"replications", study.replications},
            {"failures", res.failures},
            {"d", study.d},
            {"d_prime", study.d_prime},
            {"quadrature_points", study.quadrature_points},
            {"grid",
             {{"lambda0", study.grid.lambda0_grid},
              {"nu0", study.grid.nu0_grid},
              {"lambda1", study.grid.lambda1},
              {"nu1", study.grid.nu1},
              {"basis_dims", basis_dims}}},
            {"ecm",
             {{"eps1", study.ecm.eps1},
              {"eps2", study.ecm.eps2},
              {"max_iter", study.ecm.max_iter},
              {"inner_tol", study.ecm.inner_tol},
              {"inner_max_iter", study.ecm.inner_max_iter},
              {"sigma2_floor", study.ecm.sigma2_floor},
              {"init", study.ecm.init == InitStrategy::Moments ? "moments" : "identity"}}},
            {"prior", prior_json(study.ecm.prior)},
            {"warnings", res.mise.warnings},
            {"config_origins", cfg.origins}};
}

int cmd_benchmark(const RunConfig& cfg, int workers) {
    StudyConfig study;
    study.scenario = cfg.scenario;
    study.replications = cfg.replications;
    study.grid = cfg.grid;
    study.ecm = cfg.ecm;
    study.d = cfg.d;
    study.d_prime = cfg.d_prime;
    study.quadrature_points = cfg.quadrature_points;
    study.workers = workers;
    const StudyResult res = monte_carlo_study(study);
    const fs::path dir = prepare_output(cfg);
    write_text_file((dir / "selection.csv").string(), selection_table_csv(res, study.scenario.n));
    write_text_file((dir / "mise.csv").string(), mise_table_csv(res, study.scenario.n));
    write_text_file((dir / "replications.csv").string(), replications_csv(res));
    write_text_file((dir / "manifest.json").string(), dump_json(manifest_json(cfg, study, res)));
    std::cout << selection_table_csv(res, study.scenario.n) << mise_table_csv(res, study.scenario.n);
    for (const auto& w : res.mise.warnings) std::cerr << "warning: " << w << '\n';
    if (res.failures > 0) std::cerr << "warning: " << res.failures << " replication(s) failed\n";
    report_written(dir / "selection.csv");
    report_written(dir / "mise.csv");
    report_written(dir / "replications.csv");
    report_written(dir / "manifest.json");
    return 0;
}

int cmd_eval_curves(const RunConfig& cfg) {
    if (cfg.fit_input.empty()) throw ConfigError("curves.fit is required (or pass --fit)");
    json j;
    try {
        j = json::parse(read_text_file(cfg.fit_input));
    } catch (const json::parse_error& e) {
        throw DatasetError(cfg.fit_input + ": " + e.what());
    }
    auto [fit, stored_grid] = fit_from_json(j);
    const std::vector<double> grid = cfg.has("curves.points") ? equispaced_grid(cfg.curve_points) : stored_grid;
    const fs::path dir = prepare_output(cfg);
    write_text_file((dir / "curves.csv").string(), curves_csv(fit, grid));
    report_written(dir / "curves.csv");
    if (cfg.include_random) {
        write_text_file((dir / "random_curves.csv").string(), random_curves_csv(fit, grid));
        report_written(dir / "random_curves.csv");
    }
    return 0;
}

int cmd_basis(const RunConfig& cfg) {
    const BSplineBasis basis = make_cubic_basis(cfg.basis_size);
    const std::vector<double> grid = equispaced_grid(cfg.basis_points);
    const fs::path dir = prepare_output(cfg);
    write_text_file((dir / "basis.csv").string(), basis_csv(basis, grid));
    report_written(dir / "basis.csv");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multilevel functional mixed effects selection (spike-and-slab group lasso, ECM)"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    struct Command {
        CLI::App* app;
        CommonOptions opts;
        std::vector<Shortcut> shortcuts;
    };
    std::vector<Command> commands;
    commands.reserve(6);
    auto make = [&](const char* name, const char* help) -> Command& {
        commands.push_back({app.add_subcommand(name, help), {}, {}});
        commands.back().shortcuts.reserve(8);
        add_common(commands.back().app, commands.back().opts);
        return commands.back();
    };

    Command& sim = make("simulate", "generate a scenario dataset and its ground truth");
    add_shortcut(sim.app, sim.shortcuts, "--scenario", "scenario.scenario", "A or B");
    add_shortcut(sim.app, sim.shortcuts, "--n", "scenario.n", "clusters");
    add_shortcut(sim.app, sim.shortcuts, "--seed", "scenario.seed", "seed");

    Command& fit = make("fit", "fit one (lambda0, nu0) by ECM");
    add_shortcut(fit.app, fit.shortcuts, "--data", "data.input", "dataset CSV");
    add_shortcut(fit.app, fit.shortcuts, "--lambda0", "prior.lambda0", "fixed-effect spike");
    add_shortcut(fit.app, fit.shortcuts, "--nu0", "prior.nu0", "random-effect spike");

    Command& tune = make("tune", "BIC grid search over the spike parameters");
    add_shortcut(tune.app, tune.shortcuts, "--data", "data.input", "dataset CSV");

    Command& bench = make("benchmark", "Monte Carlo selection and MISE study");
    add_shortcut(bench.app, bench.shortcuts, "--scenario", "scenario.scenario", "A or B");
    add_shortcut(bench.app, bench.shortcuts, "--n", "scenario.n", "clusters");
    add_shortcut(bench.app, bench.shortcuts, "--seed", "scenario.seed", "study seed");
    add_shortcut(bench.app, bench.shortcuts, "--replications", "study.replications", "replications");

    Command& curves = make("eval-curves", "tabulate fitted curves from a fit JSON");
    add_shortcut(curves.app, curves.shortcuts, "--fit", "curves.fit", "fit JSON");
    add_shortcut(curves.app, curves.shortcuts, "--points", "curves.points", "equispaced grid size");
    add_shortcut(curves.app, curves.shortcuts, "--include-random", "curves.include_random", "true/false");

    Command& basis = make("basis", "dump a cubic B-spline basis on a grid");
    add_shortcut(basis.app, basis.shortcuts, "--size", "basis.size", "number of basis functions");
    add_shortcut(basis.app, basis.shortcuts, "--points", "basis.points", "grid size");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        for (auto& c : commands) {
            if (!c.app->parsed()) continue;
            const RunConfig cfg = load_config(c.opts, c.shortcuts);
            const std::string name = c.app->get_name();
            if (name == "simulate") return cmd_simulate(cfg);
            if (name == "fit") return cmd_fit(cfg);
            if (name == "tune") return cmd_tune(cfg, resolve_workers(c.opts, cfg));
            if (name == "benchmark") return cmd_benchmark(cfg, resolve_workers(c.opts, cfg));
            if (name == "eval-curves") return cmd_eval_curves(cfg);
            if (name == "basis") return cmd_basis(cfg);
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const ParameterError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const DatasetError& e) {
        std::cerr << "input error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const AssemblyError& e) {
        std::cerr << "input error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const InvalidDimension& e) {
        std::cerr << "input error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const Error& e) {
        std::cerr << "numeric failure: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
