#include "metabound/harness.hpp"
#include "metabound/rng.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

using namespace metabound;

namespace {

struct CliOptions {
    std::string output_dir_override;
    bool quiet = false;
};

std::string effective_output_dir(const ExperimentConfig& cfg, const CliOptions& opts) {
    return opts.output_dir_override.empty() ? cfg.output_dir : opts.output_dir_override;
}

void note(const CliOptions& opts, const std::string& message) {
    if (!opts.quiet) std::cerr << message << "\n";
}

SweepCell parse_cell_arg(const ExperimentConfig& cfg, const std::string& arg) {
    std::vector<std::string> parts;
    std::stringstream stream(arg);
    std::string piece;
    while (std::getline(stream, piece, ',')) parts.push_back(piece);
    if (parts.size() != 3)
        throw std::invalid_argument("--cell expects 'sigma,n_train,seed_index', got '" + arg + "'");
    const double sigma = std::stod(parts[0]);
    const int n_train = std::stoi(parts[1]);
    const int seed_index = std::stoi(parts[2]);
    return find_cell(cfg, sigma, n_train, seed_index);
}

int run_command(const std::string& config_path, const std::string& cell_arg,
                const CliOptions& opts) {
    const ExperimentConfig cfg = load_config(config_path);
    const SweepCell cell = parse_cell_arg(cfg, cell_arg);
    const CellResult result = run_cell(cell, cfg);

    const std::string dir = effective_output_dir(cfg, opts);
    std::filesystem::create_directories(dir);
    std::ostringstream name;
    name << "runlog_s" << format_real(cell.sigma) << "_n" << cell.n_train << "_k"
         << cell.seed_index << ".csv";
    const std::string runlog_path = (std::filesystem::path(dir) / name.str()).string();
    write_text_file(runlog_path, emit_runlog_csv(result.state));
    note(opts, "wrote " + runlog_path);

    std::cout << cell_result_to_json(result).dump(2) << "\n";
    return 0;
}

int sweep_command(const std::string& config_path, int parallel, const CliOptions& opts) {
    const ExperimentConfig cfg = load_config(config_path);
    const int workers = resolve_parallelism(parallel);
    note(opts, "running " +
                   std::to_string(cfg.sigma_grid.size() * cfg.n_train_grid.size() * cfg.n_seeds) +
                   " cells on " + std::to_string(workers) + " worker(s)");
    const SweepResult result = run_sweep(cfg, workers);
    const std::string dir = effective_output_dir(cfg, opts);
    write_sweep_outputs(result, cfg, dir);
    note(opts, "wrote gaps.csv, comparison.csv, fits.csv, fits.json under " + dir);
    for (const SigmaFit& fit : result.fits) {
        std::ostringstream line;
        line << "sigma " << format_real(fit.sigma) << ": ";
        if (fit.fit)
            line << "exponent " << format_real(fit.fit->fitted_exponent) << ", r^2 "
                 << format_real(fit.fit->r_squared) << ", k "
                 << format_real(fit.fit->constant_k);
        else
            line << fit.error;
        note(opts, line.str());
    }
    return 0;
}

int fit_bound_command(const std::string& csv_path, const std::string& config_path) {
    const std::vector<GapCsvRow> rows = parse_gap_csv(read_text_file(csv_path));
    std::vector<std::pair<double, double>> complexities;
    if (!config_path.empty()) {
        const ExperimentConfig cfg = load_config(config_path);
        for (int si = 0; si < static_cast<int>(cfg.sigma_grid.size()); ++si)
            complexities.emplace_back(cfg.sigma_grid[si], sweep_complexity(cfg, si));
    }
    const std::vector<SigmaFit> fits = refit_from_rows(rows, complexities);
    std::cout << fits_to_json(fits).dump(2) << "\n";
    return 0;
}

int compare_command(const std::string& config_path, const CliOptions& opts) {
    const ExperimentConfig cfg = load_config(config_path);
    SweepCell cell;
    cell.sigma = cfg.family.complexity_sigma;
    cell.n_train = cfg.n_train_grid.back();
    cell.seed_index = 0;
    cell.derived_seed = derive_seed(cfg.master_seed, 0xc0);
    const CellResult result = run_cell(cell, cfg);

    std::vector<ComparisonCsvRow> rows;
    for (const TaskComparison& cmp : result.comparison.per_task) {
        ComparisonCsvRow row;
        row.sigma = cell.sigma;
        row.n_train = cell.n_train;
        row.seed_index = cell.seed_index;
        row.task_index = cmp.task_index;
        row.final_return_meta = cmp.final_return_meta;
        row.final_return_scratch = cmp.final_return_scratch;
        row.steps_to_target_meta = cmp.steps_to_target_meta.value_or(-1);
        row.steps_to_target_scratch = cmp.steps_to_target_scratch.value_or(-1);
        rows.push_back(row);
    }
    const std::string dir = effective_output_dir(cfg, opts);
    std::filesystem::create_directories(dir);
    const std::string path = (std::filesystem::path(dir) / "comparison.csv").string();
    write_text_file(path, emit_comparison_csv(std::move(rows)));
    note(opts, "wrote " + path);

    std::cout << cell_result_to_json(result)["comparison"].dump(2) << "\n";
    return 0;
}

int diagnose_command(const std::string& runlog_path, double grad_tol, int window) {
    const MetaState state = parse_runlog_csv(read_text_file(runlog_path));
    const int effective_window =
        std::min(window, static_cast<int>(state.grad_norm_history.size()));
    const ConvergenceReport report = convergence_diagnostics(state, grad_tol, effective_window);
    std::cout << nlohmann::json{{"converged", report.converged},
                                {"rate_class", rate_class_name(report.rate_class)},
                                {"fitted_rate", report.fitted_rate},
                                {"window", report.window},
                                {"final_grad_norm", report.final_grad_norm}}
                     .dump(2)
              << "\n";
    return 0;
}

int dump_tasks_command(const std::string& config_path, int count, double sigma,
                       bool sigma_set) {
    ExperimentConfig cfg = load_config(config_path);
    TaskFamilySpec family = cfg.family;
    if (sigma_set) family.complexity_sigma = sigma;
    nlohmann::json out = nlohmann::json::array();
    for (int i = 0; i < count; ++i) {
        nlohmann::json entry = mdp_to_json(sample_task(family, i));
        entry["task_index"] = i;
        out.push_back(std::move(entry));
    }
    std::cout << out.dump(2) << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"metabound: a meta-RL generalization and convergence laboratory"};
    app.require_subcommand(1);
    app.fallthrough(); // global flags may appear after the subcommand

    CliOptions opts;
    app.add_option("--output-dir", opts.output_dir_override,
                   "Override the config's output directory")
        ->expected(1);
    app.add_flag("--quiet", opts.quiet, "Suppress progress messages");

    std::string config_path, cell_arg, csv_path, fit_config_path, runlog_path;
    int parallel = 1;
    double grad_tol = 1e-3;
    int window = 10;
    int dump_count = 10;
    double dump_sigma = 0.0;

    CLI::App* validate = app.add_subcommand("validate", "Parse and validate a config");
    validate->add_option("config", config_path)->required();

    CLI::App* run = app.add_subcommand("run", "Run a single sweep cell");
    run->add_option("config", config_path)->required();
    run->add_option("--cell", cell_arg, "sigma,n_train,seed_index")->required();

    CLI::App* sweep = app.add_subcommand("sweep", "Run the full sigma x N x seed sweep");
    sweep->add_option("config", config_path)->required();
    sweep->add_option("--parallel", parallel, "Worker threads (METABOUND_PARALLEL overrides)");

    CLI::App* fit_bound = app.add_subcommand("fit-bound", "Re-fit scaling laws from a gap CSV");
    fit_bound->add_option("csv", csv_path)->required();
    fit_bound->add_option("--config", fit_config_path,
                          "Config used to recompute per-sigma complexity");

    CLI::App* compare = app.add_subcommand("compare", "Meta-vs-scratch baselines only");
    compare->add_option("config", config_path)->required();

    CLI::App* diagnose = app.add_subcommand("diagnose", "Classify convergence from a run log");
    diagnose->add_option("csv", runlog_path)->required();
    diagnose->add_option("--grad-tol", grad_tol, "Gradient-norm convergence threshold");
    diagnose->add_option("--window", window, "Trailing window for the verdict");

    CLI::App* dump_tasks = app.add_subcommand("dump-tasks", "Emit sampled task MDPs as JSON");
    dump_tasks->add_option("config", config_path)->required();
    dump_tasks->add_option("--count", dump_count, "Number of tasks to emit");
    CLI::Option* sigma_opt =
        dump_tasks->add_option("--sigma", dump_sigma, "Override the family's sigma");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (app.got_subcommand(validate)) {
            load_config(config_path);
            std::cout << "ok\n";
            return 0;
        }
        if (app.got_subcommand(run)) return run_command(config_path, cell_arg, opts);
        if (app.got_subcommand(sweep)) return sweep_command(config_path, parallel, opts);
        if (app.got_subcommand(fit_bound)) return fit_bound_command(csv_path, fit_config_path);
        if (app.got_subcommand(compare)) return compare_command(config_path, opts);
        if (app.got_subcommand(diagnose)) return diagnose_command(runlog_path, grad_tol, window);
        if (app.got_subcommand(dump_tasks))
            return dump_tasks_command(config_path, dump_count, dump_sigma, sigma_opt->count() > 0);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
