#pragma once

#include "metabound/baselines.hpp"
#include "metabound/bounds.hpp"
#include "metabound/meta_learner.hpp"
#include "metabound/task_space.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace metabound {

struct ComparisonConfig {
    double lr = 0.1;
    int budget = 5;
    double target_fraction = 0.9;
};

/// Full description of a sweep: the task family template, meta-learning
/// hyperparameters, and the N x sigma x seed experimental design.
struct ExperimentConfig {
    TaskFamilySpec family;
    MetaConfig meta;
    std::vector<int> n_train_grid;   // ascending, duplicate-free
    std::vector<double> sigma_grid;  // ascending, duplicate-free
    int n_test = 64;
    int n_seeds = 1;
    std::uint64_t master_seed = 0;
    double confidence = 0.95;
    ComparisonConfig comparison;
    std::string output_dir = "out";
};

/// One unit of sweep work. derived_seed is a pure function of
/// (master_seed, sigma index, N index, seed_index); collisions across the
/// grid are checked at sweep startup.
struct SweepCell {
    double sigma = 0.0;
    int n_train = 0;
    int seed_index = 0;
    std::uint64_t derived_seed = 0;
};

struct CellResult {
    SweepCell cell;
    GapReport gap;
    double subopt_gap = 0.0;
    ConvergenceReport convergence;
    ComparisonReport comparison;
    MetaState state;
};

/// Per-sigma scaling fit; `error` is set instead of `fit` when the N grid
/// is too small (fewer than 3 points).
struct SigmaFit {
    double sigma = 0.0;
    double complexity = 0.0; // optimal-return std over 100 probe tasks
    std::optional<BoundFit> fit;
    std::string error;
};

struct SweepResult {
    std::vector<CellResult> cells; // grid order: sigma-major, then N, then seed
    std::vector<SigmaFit> fits;
};

/// One row of the gap CSV (the flat per-cell record).
struct GapCsvRow {
    std::string family;
    double sigma = 0.0;
    int n_train = 0;
    int seed_index = 0;
    std::uint64_t derived_seed = 0;
    double mean_train_return = 0.0;
    double mean_test_return = 0.0;
    double epsilon_gen_signed = 0.0;
    double epsilon_gen_abs = 0.0;
    double hoeffding_radius_test = 0.0;
    double subopt_gap = 0.0;
    int meta_iters = 0;
    double final_grad_norm = 0.0;
    std::string rate_class;
    double meta_win_fraction = 0.0;
};

struct ComparisonCsvRow {
    double sigma = 0.0;
    int n_train = 0;
    int seed_index = 0;
    int task_index = 0;
    double final_return_meta = 0.0;
    double final_return_scratch = 0.0;
    int steps_to_target_meta = -1;    // -1 marks "never reached"
    int steps_to_target_scratch = -1;
};

/// Strict parse of the JSON experiment config: unknown fields are rejected
/// with their path, all invariants are validated, and documented defaults
/// (n_test 64, confidence 0.95, target_fraction 0.9) are applied.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);
nlohmann::json config_to_json(const ExperimentConfig& cfg);

nlohmann::json mdp_to_json(const Mdp& mdp);
nlohmann::json family_spec_to_json(const TaskFamilySpec& spec);
TaskFamilySpec family_spec_from_json(const nlohmann::json& j, const std::string& path);

SweepCell make_cell(const ExperimentConfig& cfg, int sigma_index, int n_index, int seed_index);

/// Locates the grid coordinates of (sigma, n_train) in the config, or
/// throws if either value is not on the grid.
SweepCell find_cell(const ExperimentConfig& cfg, double sigma, int n_train, int seed_index);

/**
Runs one sweep cell: builds the split, meta-trains, evaluates adapted
returns on every train and test task, and assembles the gap report,
suboptimality gap, convergence report, and comparison report.
Deterministic given (cell, cfg); failures carry the cell coordinates.
*/
CellResult run_cell(const SweepCell& cell, const ExperimentConfig& cfg);

/**
Executes all sigma x N x seed cells on `parallelism` worker threads and
computes the per-sigma scaling fits. Output order (and thus every emitted
byte) is independent of the parallelism level. Any cell failure aborts the
sweep; nothing is written here, so no partial file survives a failure.
*/
SweepResult run_sweep(const ExperimentConfig& cfg, int parallelism);

/// Writes gaps.csv, comparison.csv, fits.csv and fits.json into `dir`.
void write_sweep_outputs(const SweepResult& result, const ExperimentConfig& cfg,
                         const std::string& dir);

/// Picks the worker count: the METABOUND_PARALLEL environment variable
/// overrides the requested value.
int resolve_parallelism(int requested);

/// Canonical shortest-round-trip rendering for reals in CSV/JSON artifacts.
std::string format_real(double value);

std::string emit_gap_csv(std::vector<GapCsvRow> rows);
std::vector<GapCsvRow> parse_gap_csv(const std::string& text);
std::string emit_comparison_csv(std::vector<ComparisonCsvRow> rows);
std::string emit_runlog_csv(const MetaState& state);
/// Reads a run-log CSV back into loss/grad histories for diagnosis.
MetaState parse_runlog_csv(const std::string& text);
std::string emit_fit_csv(const std::vector<SigmaFit>& fits);

nlohmann::json fits_to_json(const std::vector<SigmaFit>& fits);
nlohmann::json bound_fit_to_json(const BoundFit& fit);
nlohmann::json cell_result_to_json(const CellResult& result);

GapCsvRow gap_row_from_cell(const CellResult& result, const ExperimentConfig& cfg);

/// Recomputes the per-sigma fits from previously emitted gap rows, e.g. by
/// the fit-bound CLI path. Complexities map sigma -> measured complexity;
/// sigmas missing from the map fall back to complexity 1.
std::vector<SigmaFit> refit_from_rows(const std::vector<GapCsvRow>& rows,
                                      const std::vector<std::pair<double, double>>& complexities);

/// Measures the per-sigma complexity exactly as run_sweep does (100 probe
/// tasks seeded from the master seed and sigma index).
double sweep_complexity(const ExperimentConfig& cfg, int sigma_index);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

} // namespace metabound
