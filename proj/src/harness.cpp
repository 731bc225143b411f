#include "metabound/harness.hpp"

#include "metabound/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <unordered_set>

namespace metabound {

using nlohmann::json;

namespace {

enum StreamTag : std::uint64_t {
    kTagTasks = 20,
    kTagMetaTrain = 21,
    kTagComplexity = 22,
};

constexpr int kComplexityProbeTasks = 100;
constexpr int kDiagnosticsWindow = 10;

[[noreturn]] void config_error(const std::string& path, const std::string& what) {
    throw std::invalid_argument(path + ": " + what);
}

const json& require_field(const json& j, const std::string& path, const char* key) {
    const auto it = j.find(key);
    if (it == j.end()) config_error(path + "." + key, "missing required field");
    return *it;
}

void expect_object(const json& j, const std::string& path) {
    if (!j.is_object()) config_error(path, "expected an object");
}

void reject_unknown(const json& j, const std::string& path,
                    std::initializer_list<const char*> known) {
    for (const auto& [key, value] : j.items()) {
        bool found = false;
        for (const char* k : known)
            if (key == k) { found = true; break; }
        if (!found) config_error(path + "." + key, "unknown field");
    }
}

double as_real(const json& j, const std::string& path) {
    if (!j.is_number()) config_error(path, "expected a number");
    return j.get<double>();
}

int as_int(const json& j, const std::string& path) {
    if (!j.is_number_integer()) config_error(path, "expected an integer");
    return j.get<int>();
}

std::uint64_t as_u64(const json& j, const std::string& path) {
    if (!j.is_number_unsigned() && !j.is_number_integer())
        config_error(path, "expected a nonnegative integer");
    if (j.is_number_integer() && j.get<std::int64_t>() < 0)
        config_error(path, "expected a nonnegative integer");
    return j.get<std::uint64_t>();
}

std::string as_string(const json& j, const std::string& path) {
    if (!j.is_string()) config_error(path, "expected a string");
    return j.get<std::string>();
}

std::string family_kind_name(FamilyKind kind) {
    return kind == FamilyKind::perturbed_random ? "perturbed_random" : "perturbed_gridworld";
}

FamilyKind family_kind_from_name(const std::string& name, const std::string& path) {
    if (name == "perturbed_random") return FamilyKind::perturbed_random;
    if (name == "perturbed_gridworld") return FamilyKind::perturbed_gridworld;
    config_error(path, "unknown family_kind '" + name + "'");
}

MetaConfig meta_config_from_json(const json& j, const std::string& path) {
    expect_object(j, path);
    reject_unknown(j, path, {"inner_lr", "inner_steps", "meta_batch", "schedule", "mode",
                             "max_iters", "grad_tol"});
    MetaConfig cfg;
    cfg.inner_lr = as_real(require_field(j, path, "inner_lr"), path + ".inner_lr");
    cfg.inner_steps = as_int(require_field(j, path, "inner_steps"), path + ".inner_steps");
    cfg.meta_batch = as_int(require_field(j, path, "meta_batch"), path + ".meta_batch");
    const json& schedule = require_field(j, path, "schedule");
    expect_object(schedule, path + ".schedule");
    reject_unknown(schedule, path + ".schedule", {"c", "p"});
    cfg.schedule.base_rate = as_real(require_field(schedule, path + ".schedule", "c"),
                                     path + ".schedule.c");
    cfg.schedule.exponent = as_real(require_field(schedule, path + ".schedule", "p"),
                                    path + ".schedule.p");
    const std::string mode = as_string(require_field(j, path, "mode"), path + ".mode");
    if (mode == "first_order")
        cfg.mode = MetaMode::first_order;
    else if (mode == "full")
        cfg.mode = MetaMode::full;
    else
        config_error(path + ".mode", "must be 'first_order' or 'full'");
    cfg.max_iters = as_int(require_field(j, path, "max_iters"), path + ".max_iters");
    cfg.grad_tol = as_real(require_field(j, path, "grad_tol"), path + ".grad_tol");

    if (!(cfg.inner_lr > 0.0)) config_error(path + ".inner_lr", "must be > 0");
    if (cfg.inner_steps < 0) config_error(path + ".inner_steps", "must be >= 0");
    if (cfg.meta_batch < 1) config_error(path + ".meta_batch", "must be >= 1");
    if (!(cfg.schedule.base_rate > 0.0)) config_error(path + ".schedule.c", "must be > 0");
    if (!(cfg.schedule.exponent >= 0.0)) config_error(path + ".schedule.p", "must be >= 0");
    if (cfg.max_iters < 0) config_error(path + ".max_iters", "must be >= 0");
    if (!(cfg.grad_tol > 0.0)) config_error(path + ".grad_tol", "must be > 0");
    return cfg;
}

json meta_config_to_json(const MetaConfig& cfg) {
    return json{{"inner_lr", cfg.inner_lr},
                {"inner_steps", cfg.inner_steps},
                {"meta_batch", cfg.meta_batch},
                {"schedule", json{{"c", cfg.schedule.base_rate}, {"p", cfg.schedule.exponent}}},
                {"mode", cfg.mode == MetaMode::first_order ? "first_order" : "full"},
                {"max_iters", cfg.max_iters},
                {"grad_tol", cfg.grad_tol}};
}

template <typename T, typename Getter>
std::vector<T> grid_from_json(const json& j, const std::string& path, Getter get) {
    if (!j.is_array() || j.empty()) config_error(path, "expected a nonempty array");
    std::vector<T> grid;
    for (std::size_t i = 0; i < j.size(); ++i)
        grid.push_back(get(j[i], path + "[" + std::to_string(i) + "]"));
    for (std::size_t i = 1; i < grid.size(); ++i) {
        if (grid[i] == grid[i - 1]) config_error(path, "duplicate grid value");
        if (grid[i] < grid[i - 1]) config_error(path, "grid must be ascending");
    }
    return grid;
}

std::string cell_label(const SweepCell& cell) {
    std::ostringstream label;
    label << "cell (sigma=" << cell.sigma << ", n_train=" << cell.n_train
          << ", seed_index=" << cell.seed_index << ")";
    return label.str();
}

std::string format_int(long long value) { return std::to_string(value); }

std::string format_u64(std::uint64_t value) { return std::to_string(value); }

double parse_real_field(const std::string& field, const std::string& context) {
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (ec != std::errc() || ptr != field.data() + field.size())
        throw std::invalid_argument("bad real '" + field + "' in " + context);
    return value;
}

long long parse_int_field(const std::string& field, const std::string& context) {
    long long value = 0;
    const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (ec != std::errc() || ptr != field.data() + field.size())
        throw std::invalid_argument("bad integer '" + field + "' in " + context);
    return value;
}

std::uint64_t parse_u64_field(const std::string& field, const std::string& context) {
    std::uint64_t value = 0;
    const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (ec != std::errc() || ptr != field.data() + field.size())
        throw std::invalid_argument("bad unsigned '" + field + "' in " + context);
    return value;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (;;) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string::npos) {
            fields.push_back(line.substr(start));
            return fields;
        }
        fields.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
}

std::vector<std::string> csv_lines(const std::string& text, const std::string& context) {
    std::vector<std::string> lines;
    std::size_t start = 0;
    while (start < text.size()) {
        const std::size_t nl = text.find('\n', start);
        if (nl == std::string::npos)
            throw std::invalid_argument(context + ": missing trailing newline");
        lines.push_back(text.substr(start, nl - start));
        start = nl + 1;
    }
    if (lines.empty()) throw std::invalid_argument(context + ": empty file");
    return lines;
}

constexpr const char* kGapHeader =
    "family,sigma,n_train,seed_index,derived_seed,mean_train_return,mean_test_return,"
    "epsilon_gen_signed,epsilon_gen_abs,hoeffding_radius_test,subopt_gap,meta_iters,"
    "final_grad_norm,rate_class,meta_win_fraction";

constexpr const char* kComparisonHeader =
    "sigma,n_train,seed_index,task_index,final_return_meta,final_return_scratch,"
    "steps_to_target_meta,steps_to_target_scratch";

constexpr const char* kRunlogHeader = "iteration,meta_loss,grad_norm";

constexpr const char* kFitHeader =
    "sigma,complexity,n_points,fitted_exponent,fitted_intercept,r_squared,constant_k";

} // namespace

std::string format_real(double value) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    if (ec != std::errc()) throw std::runtime_error("failed to format real value");
    return std::string(buf, ptr);
}

ExperimentConfig parse_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(std::string("malformed JSON: ") + e.what());
    }
    expect_object(j, "config");
    reject_unknown(j, "config",
                   {"family", "meta", "n_train_grid", "sigma_grid", "n_test", "n_seeds",
                    "master_seed", "confidence", "comparison", "output_dir"});

    ExperimentConfig cfg;
    cfg.family = family_spec_from_json(require_field(j, "config", "family"), "config.family");
    cfg.meta = meta_config_from_json(require_field(j, "config", "meta"), "config.meta");
    cfg.n_train_grid = grid_from_json<int>(require_field(j, "config", "n_train_grid"),
                                           "config.n_train_grid", as_int);
    cfg.sigma_grid = grid_from_json<double>(require_field(j, "config", "sigma_grid"),
                                            "config.sigma_grid", as_real);
    cfg.n_seeds = as_int(require_field(j, "config", "n_seeds"), "config.n_seeds");
    cfg.master_seed = as_u64(require_field(j, "config", "master_seed"), "config.master_seed");

    if (j.contains("n_test")) cfg.n_test = as_int(j["n_test"], "config.n_test");
    if (j.contains("confidence")) cfg.confidence = as_real(j["confidence"], "config.confidence");
    if (j.contains("output_dir")) cfg.output_dir = as_string(j["output_dir"], "config.output_dir");

    if (j.contains("comparison")) {
        const json& cmp = j["comparison"];
        expect_object(cmp, "config.comparison");
        reject_unknown(cmp, "config.comparison", {"lr", "budget", "target_fraction"});
        cfg.comparison.lr = as_real(require_field(cmp, "config.comparison", "lr"),
                                    "config.comparison.lr");
        cfg.comparison.budget = as_int(require_field(cmp, "config.comparison", "budget"),
                                       "config.comparison.budget");
        if (cmp.contains("target_fraction"))
            cfg.comparison.target_fraction =
                as_real(cmp["target_fraction"], "config.comparison.target_fraction");
    } else {
        cfg.comparison.lr = cfg.meta.inner_lr;
    }

    for (int n : cfg.n_train_grid)
        if (n < 1) config_error("config.n_train_grid", "values must be >= 1");
    for (double s : cfg.sigma_grid)
        if (!(s >= 0.0 && s <= 1.0)) config_error("config.sigma_grid", "values must be in [0,1]");
    if (cfg.n_test < 1) config_error("config.n_test", "must be >= 1");
    if (cfg.n_seeds < 1) config_error("config.n_seeds", "must be >= 1");
    if (!(cfg.confidence > 0.0 && cfg.confidence < 1.0))
        config_error("config.confidence", "must be in (0,1)");
    if (!(cfg.comparison.lr > 0.0)) config_error("config.comparison.lr", "must be > 0");
    if (cfg.comparison.budget < 1) config_error("config.comparison.budget", "must be >= 1");
    if (!(cfg.comparison.target_fraction > 0.0 && cfg.comparison.target_fraction <= 1.0))
        config_error("config.comparison.target_fraction", "must be in (0,1]");

    const Validation family_check = validate_family_spec(cfg.family);
    if (!family_check.ok) config_error("config.family", family_check.violations.front());
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    return parse_config(read_text_file(path));
}

TaskFamilySpec family_spec_from_json(const json& j, const std::string& path) {
    expect_object(j, path);
    reject_unknown(j, path, {"family_kind", "n_states", "n_actions", "discount",
                             "complexity_sigma", "reward_range", "base_seed"});
    TaskFamilySpec spec;
    spec.family_kind = family_kind_from_name(
        as_string(require_field(j, path, "family_kind"), path + ".family_kind"),
        path + ".family_kind");
    spec.n_states = as_int(require_field(j, path, "n_states"), path + ".n_states");
    spec.n_actions = as_int(require_field(j, path, "n_actions"), path + ".n_actions");
    spec.discount = as_real(require_field(j, path, "discount"), path + ".discount");
    spec.complexity_sigma =
        as_real(require_field(j, path, "complexity_sigma"), path + ".complexity_sigma");
    const json& range = require_field(j, path, "reward_range");
    if (!range.is_array() || range.size() != 2)
        config_error(path + ".reward_range", "expected [low, high]");
    spec.reward_range = {as_real(range[0], path + ".reward_range[0]"),
                         as_real(range[1], path + ".reward_range[1]")};
    spec.base_seed = as_u64(require_field(j, path, "base_seed"), path + ".base_seed");
    return spec;
}

json family_spec_to_json(const TaskFamilySpec& spec) {
    return json{{"family_kind", family_kind_name(spec.family_kind)},
                {"n_states", spec.n_states},
                {"n_actions", spec.n_actions},
                {"discount", spec.discount},
                {"complexity_sigma", spec.complexity_sigma},
                {"reward_range", json::array({spec.reward_range.first, spec.reward_range.second})},
                {"base_seed", spec.base_seed}};
}

json config_to_json(const ExperimentConfig& cfg) {
    return json{{"family", family_spec_to_json(cfg.family)},
                {"meta", meta_config_to_json(cfg.meta)},
                {"n_train_grid", cfg.n_train_grid},
                {"sigma_grid", cfg.sigma_grid},
                {"n_test", cfg.n_test},
                {"n_seeds", cfg.n_seeds},
                {"master_seed", cfg.master_seed},
                {"confidence", cfg.confidence},
                {"comparison", json{{"lr", cfg.comparison.lr},
                                    {"budget", cfg.comparison.budget},
                                    {"target_fraction", cfg.comparison.target_fraction}}},
                {"output_dir", cfg.output_dir}};
}

json mdp_to_json(const Mdp& mdp) {
    return json{{"n_states", mdp.n_states},
                {"n_actions", mdp.n_actions},
                {"transitions", mdp.transitions},
                {"rewards", mdp.rewards},
                {"discount", mdp.discount},
                {"start_dist", mdp.start_dist},
                {"reward_range", json::array({mdp.reward_min, mdp.reward_max})}};
}

SweepCell make_cell(const ExperimentConfig& cfg, int sigma_index, int n_index, int seed_index) {
    SweepCell cell;
    cell.sigma = cfg.sigma_grid.at(sigma_index);
    cell.n_train = cfg.n_train_grid.at(n_index);
    cell.seed_index = seed_index;
    cell.derived_seed =
        derive_seed(cfg.master_seed, static_cast<std::uint64_t>(sigma_index),
                    static_cast<std::uint64_t>(n_index), static_cast<std::uint64_t>(seed_index));
    return cell;
}

SweepCell find_cell(const ExperimentConfig& cfg, double sigma, int n_train, int seed_index) {
    const auto sit = std::find(cfg.sigma_grid.begin(), cfg.sigma_grid.end(), sigma);
    if (sit == cfg.sigma_grid.end())
        throw std::invalid_argument("sigma " + format_real(sigma) + " is not on the sigma grid");
    const auto nit = std::find(cfg.n_train_grid.begin(), cfg.n_train_grid.end(), n_train);
    if (nit == cfg.n_train_grid.end())
        throw std::invalid_argument("n_train " + std::to_string(n_train) +
                                    " is not on the n_train grid");
    if (seed_index < 0 || seed_index >= cfg.n_seeds)
        throw std::invalid_argument("seed_index " + std::to_string(seed_index) +
                                    " outside [0, n_seeds)");
    return make_cell(cfg, static_cast<int>(sit - cfg.sigma_grid.begin()),
                     static_cast<int>(nit - cfg.n_train_grid.begin()), seed_index);
}

CellResult run_cell(const SweepCell& cell, const ExperimentConfig& cfg) {
    try {
        TaskFamilySpec family = cfg.family;
        family.complexity_sigma = cell.sigma;
        family.base_seed = derive_seed(cell.derived_seed, kTagTasks);
        auto [train, test] = make_split(family, cell.n_train, cfg.n_test);

        MetaConfig meta = cfg.meta;
        meta.meta_batch = std::min(meta.meta_batch, cell.n_train);

        CellResult result;
        result.cell = cell;
        result.state = meta_train(train, meta, derive_seed(cell.derived_seed, kTagMetaTrain));

        auto adapted_returns = [&](const TaskSet& tasks) {
            std::vector<double> returns;
            returns.reserve(tasks.tasks.size());
            for (const auto& [index, task] : tasks.tasks) {
                const PolicyParams adapted =
                    meta.inner_steps > 0
                        ? adapt(task, result.state.params, meta.inner_lr, meta.inner_steps)
                        : result.state.params;
                returns.push_back(exact_policy_return(task, adapted).return_value);
            }
            return returns;
        };
        const std::vector<double> train_returns = adapted_returns(train);
        const std::vector<double> test_returns = adapted_returns(test);

        GapContext context;
        context.sigma = cell.sigma;
        context.seed = cell.derived_seed;
        context.reward_range = family.reward_range;
        context.discount = family.discount;
        context.confidence = cfg.confidence;
        result.gap = generalization_gap(train_returns, test_returns, context);

        result.subopt_gap = suboptimality_gap(test, result.state.params);

        if (static_cast<int>(result.state.grad_norm_history.size()) >= 2) {
            const int window =
                std::min(kDiagnosticsWindow, static_cast<int>(result.state.grad_norm_history.size()));
            result.convergence = convergence_diagnostics(result.state, meta.grad_tol, window);
        }

        result.comparison =
            compare_meta_vs_scratch(result.state.params, test, cfg.comparison.lr,
                                    cfg.comparison.budget, cfg.comparison.target_fraction);
        return result;
    } catch (const std::exception& e) {
        throw std::runtime_error(cell_label(cell) + ": " + e.what());
    }
}

int resolve_parallelism(int requested) {
    if (const char* env = std::getenv("METABOUND_PARALLEL")) {
        const std::string text(env);
        const long long value = parse_int_field(text, "METABOUND_PARALLEL");
        requested = static_cast<int>(value);
    }
    if (requested < 1)
        throw std::invalid_argument("parallelism must be >= 1");
    return requested;
}

double sweep_complexity(const ExperimentConfig& cfg, int sigma_index) {
    TaskFamilySpec family = cfg.family;
    family.complexity_sigma = cfg.sigma_grid.at(sigma_index);
    family.base_seed =
        derive_seed(cfg.master_seed, static_cast<std::uint64_t>(sigma_index), kTagComplexity);
    TaskSet probe{family, {}, RoleTag::train};
    probe.tasks.reserve(kComplexityProbeTasks);
    for (int i = 0; i < kComplexityProbeTasks; ++i)
        probe.tasks.emplace_back(i, sample_task(family, i));
    return estimate_complexity(probe).optimal_return_std;
}

SweepResult run_sweep(const ExperimentConfig& cfg, int parallelism) {
    if (parallelism < 1) throw std::invalid_argument("parallelism must be >= 1");

    std::vector<SweepCell> cells;
    for (int si = 0; si < static_cast<int>(cfg.sigma_grid.size()); ++si)
        for (int ni = 0; ni < static_cast<int>(cfg.n_train_grid.size()); ++ni)
            for (int k = 0; k < cfg.n_seeds; ++k) cells.push_back(make_cell(cfg, si, ni, k));

    std::unordered_set<std::uint64_t> seen;
    for (const SweepCell& cell : cells)
        if (!seen.insert(cell.derived_seed).second)
            throw std::runtime_error("derived-seed collision at " + cell_label(cell));

    SweepResult result;
    result.cells.resize(cells.size());
    std::atomic<std::size_t> next{0};
    std::mutex error_mutex;
    std::string first_error;

    auto worker = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= cells.size()) return;
            {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error.empty()) return;
            }
            try {
                result.cells[i] = run_cell(cells[i], cfg);
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (first_error.empty()) first_error = e.what();
                return;
            }
        }
    };

    const int workers = std::min<int>(parallelism, static_cast<int>(cells.size()));
    if (workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
        for (std::thread& t : pool) t.join();
    }
    if (!first_error.empty()) throw std::runtime_error("sweep aborted: " + first_error);

    const int n_points = static_cast<int>(cfg.n_train_grid.size());
    const int per_sigma = n_points * cfg.n_seeds;
    for (int si = 0; si < static_cast<int>(cfg.sigma_grid.size()); ++si) {
        SigmaFit fit;
        fit.sigma = cfg.sigma_grid[si];
        fit.complexity = sweep_complexity(cfg, si);
        std::vector<std::pair<int, std::vector<double>>> rows;
        for (int ni = 0; ni < n_points; ++ni) {
            std::vector<double> gaps;
            gaps.reserve(cfg.n_seeds);
            for (int k = 0; k < cfg.n_seeds; ++k) {
                const CellResult& cell = result.cells[si * per_sigma + ni * cfg.n_seeds + k];
                gaps.push_back(cell.gap.epsilon_gen_abs);
            }
            rows.emplace_back(cfg.n_train_grid[ni], gaps);
        }
        if (n_points < 3)
            fit.error = "insufficient grid for fit (need >= 3 n_train values)";
        else
            fit.fit = fit_bound_scaling(rows, fit.complexity);
        result.fits.push_back(std::move(fit));
    }
    return result;
}

GapCsvRow gap_row_from_cell(const CellResult& result, const ExperimentConfig& cfg) {
    GapCsvRow row;
    row.family = cfg.family.family_kind == FamilyKind::perturbed_random ? "perturbed_random"
                                                                        : "perturbed_gridworld";
    row.sigma = result.cell.sigma;
    row.n_train = result.cell.n_train;
    row.seed_index = result.cell.seed_index;
    row.derived_seed = result.cell.derived_seed;
    row.mean_train_return = result.gap.mean_train_return;
    row.mean_test_return = result.gap.mean_test_return;
    row.epsilon_gen_signed = result.gap.epsilon_gen_signed;
    row.epsilon_gen_abs = result.gap.epsilon_gen_abs;
    row.hoeffding_radius_test = result.gap.hoeffding_radius_test;
    row.subopt_gap = result.subopt_gap;
    row.meta_iters = result.state.iteration;
    row.final_grad_norm = result.convergence.final_grad_norm;
    row.rate_class = rate_class_name(result.convergence.rate_class);
    row.meta_win_fraction = result.comparison.meta_win_fraction;
    return row;
}

std::string emit_gap_csv(std::vector<GapCsvRow> rows) {
    std::sort(rows.begin(), rows.end(), [](const GapCsvRow& a, const GapCsvRow& b) {
        if (a.sigma != b.sigma) return a.sigma < b.sigma;
        if (a.n_train != b.n_train) return a.n_train < b.n_train;
        return a.seed_index < b.seed_index;
    });
    std::string out(kGapHeader);
    out += '\n';
    for (const GapCsvRow& r : rows) {
        out += r.family;
        out += ',';
        out += format_real(r.sigma);
        out += ',';
        out += format_int(r.n_train);
        out += ',';
        out += format_int(r.seed_index);
        out += ',';
        out += format_u64(r.derived_seed);
        out += ',';
        out += format_real(r.mean_train_return);
        out += ',';
        out += format_real(r.mean_test_return);
        out += ',';
        out += format_real(r.epsilon_gen_signed);
        out += ',';
        out += format_real(r.epsilon_gen_abs);
        out += ',';
        out += format_real(r.hoeffding_radius_test);
        out += ',';
        out += format_real(r.subopt_gap);
        out += ',';
        out += format_int(r.meta_iters);
        out += ',';
        out += format_real(r.final_grad_norm);
        out += ',';
        out += r.rate_class;
        out += ',';
        out += format_real(r.meta_win_fraction);
        out += '\n';
    }
    return out;
}

std::vector<GapCsvRow> parse_gap_csv(const std::string& text) {
    const std::vector<std::string> lines = csv_lines(text, "gap csv");
    if (lines.front() != kGapHeader)
        throw std::invalid_argument("gap csv: unexpected header");
    std::vector<GapCsvRow> rows;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const std::string context = "gap csv line " + std::to_string(i + 1);
        const std::vector<std::string> f = split_csv_line(lines[i]);
        if (f.size() != 15) throw std::invalid_argument(context + ": expected 15 fields");
        GapCsvRow r;
        r.family = f[0];
        r.sigma = parse_real_field(f[1], context);
        r.n_train = static_cast<int>(parse_int_field(f[2], context));
        r.seed_index = static_cast<int>(parse_int_field(f[3], context));
        r.derived_seed = parse_u64_field(f[4], context);
        r.mean_train_return = parse_real_field(f[5], context);
        r.mean_test_return = parse_real_field(f[6], context);
        r.epsilon_gen_signed = parse_real_field(f[7], context);
        r.epsilon_gen_abs = parse_real_field(f[8], context);
        r.hoeffding_radius_test = parse_real_field(f[9], context);
        r.subopt_gap = parse_real_field(f[10], context);
        r.meta_iters = static_cast<int>(parse_int_field(f[11], context));
        r.final_grad_norm = parse_real_field(f[12], context);
        r.rate_class = f[13];
        r.meta_win_fraction = parse_real_field(f[14], context);
        rows.push_back(std::move(r));
    }
    return rows;
}

std::string emit_comparison_csv(std::vector<ComparisonCsvRow> rows) {
    std::sort(rows.begin(), rows.end(), [](const ComparisonCsvRow& a, const ComparisonCsvRow& b) {
        if (a.sigma != b.sigma) return a.sigma < b.sigma;
        if (a.n_train != b.n_train) return a.n_train < b.n_train;
        if (a.seed_index != b.seed_index) return a.seed_index < b.seed_index;
        return a.task_index < b.task_index;
    });
    std::string out(kComparisonHeader);
    out += '\n';
    for (const ComparisonCsvRow& r : rows) {
        out += format_real(r.sigma);
        out += ',';
        out += format_int(r.n_train);
        out += ',';
        out += format_int(r.seed_index);
        out += ',';
        out += format_int(r.task_index);
        out += ',';
        out += format_real(r.final_return_meta);
        out += ',';
        out += format_real(r.final_return_scratch);
        out += ',';
        out += format_int(r.steps_to_target_meta);
        out += ',';
        out += format_int(r.steps_to_target_scratch);
        out += '\n';
    }
    return out;
}

std::string emit_runlog_csv(const MetaState& state) {
    std::string out(kRunlogHeader);
    out += '\n';
    for (std::size_t i = 0; i < state.loss_history.size(); ++i) {
        out += format_int(static_cast<long long>(i));
        out += ',';
        out += format_real(state.loss_history[i]);
        out += ',';
        out += format_real(state.grad_norm_history[i]);
        out += '\n';
    }
    return out;
}

MetaState parse_runlog_csv(const std::string& text) {
    const std::vector<std::string> lines = csv_lines(text, "run log");
    if (lines.front() != kRunlogHeader)
        throw std::invalid_argument("run log: unexpected header");
    MetaState state;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const std::string context = "run log line " + std::to_string(i + 1);
        const std::vector<std::string> f = split_csv_line(lines[i]);
        if (f.size() != 3) throw std::invalid_argument(context + ": expected 3 fields");
        state.loss_history.push_back(parse_real_field(f[1], context));
        state.grad_norm_history.push_back(parse_real_field(f[2], context));
    }
    state.iteration = static_cast<int>(state.loss_history.size());
    return state;
}

std::string emit_fit_csv(const std::vector<SigmaFit>& fits) {
    std::string out(kFitHeader);
    out += '\n';
    for (const SigmaFit& f : fits) {
        out += format_real(f.sigma);
        out += ',';
        out += format_real(f.complexity);
        out += ',';
        if (f.fit) {
            out += format_int(static_cast<long long>(f.fit->grid.size()));
            out += ',';
            out += format_real(f.fit->fitted_exponent);
            out += ',';
            out += format_real(f.fit->fitted_intercept);
            out += ',';
            out += format_real(f.fit->r_squared);
            out += ',';
            out += format_real(f.fit->constant_k);
        } else {
            out += "0,,,,";
        }
        out += '\n';
    }
    return out;
}

json bound_fit_to_json(const BoundFit& fit) {
    json grid = json::array();
    for (const BoundGridRow& row : fit.grid)
        grid.push_back(json{{"N", row.n_train},
                            {"mean_gap", row.mean_gap},
                            {"std_gap", row.std_gap},
                            {"n_seeds", row.n_seeds}});
    return json{{"grid", grid},
                {"fitted_exponent", fit.fitted_exponent},
                {"fitted_intercept", fit.fitted_intercept},
                {"r_squared", fit.r_squared},
                {"constant_k", fit.constant_k}};
}

json fits_to_json(const std::vector<SigmaFit>& fits) {
    json out = json::array();
    for (const SigmaFit& f : fits) {
        json entry{{"sigma", f.sigma}, {"complexity", f.complexity}};
        if (f.fit)
            entry["fit"] = bound_fit_to_json(*f.fit);
        else
            entry["error"] = f.error;
        out.push_back(entry);
    }
    return out;
}

json cell_result_to_json(const CellResult& result) {
    json steps = json::array();
    for (const TaskComparison& cmp : result.comparison.per_task)
        steps.push_back(json{
            {"task_index", cmp.task_index},
            {"final_return_meta", cmp.final_return_meta},
            {"final_return_scratch", cmp.final_return_scratch},
            {"steps_to_target_meta",
             cmp.steps_to_target_meta ? json(*cmp.steps_to_target_meta) : json(nullptr)},
            {"steps_to_target_scratch",
             cmp.steps_to_target_scratch ? json(*cmp.steps_to_target_scratch) : json(nullptr)}});
    return json{
        {"cell", json{{"sigma", result.cell.sigma},
                      {"n_train", result.cell.n_train},
                      {"seed_index", result.cell.seed_index},
                      {"derived_seed", result.cell.derived_seed}}},
        {"gap", json{{"n_train", result.gap.n_train},
                     {"mean_train_return", result.gap.mean_train_return},
                     {"mean_test_return", result.gap.mean_test_return},
                     {"epsilon_gen_signed", result.gap.epsilon_gen_signed},
                     {"epsilon_gen_abs", result.gap.epsilon_gen_abs},
                     {"hoeffding_radius_test", result.gap.hoeffding_radius_test},
                     {"sigma", result.gap.sigma},
                     {"seed", result.gap.seed}}},
        {"subopt_gap", result.subopt_gap},
        {"regret", -result.subopt_gap},
        {"convergence", json{{"converged", result.convergence.converged},
                             {"rate_class", rate_class_name(result.convergence.rate_class)},
                             {"fitted_rate", result.convergence.fitted_rate},
                             {"window", result.convergence.window},
                             {"final_grad_norm", result.convergence.final_grad_norm}}},
        {"comparison", json{{"meta_win_fraction", result.comparison.meta_win_fraction},
                            {"target_fraction", result.comparison.target_fraction},
                            {"per_task", steps}}},
        {"meta_iters", result.state.iteration}};
}

std::vector<SigmaFit> refit_from_rows(
    const std::vector<GapCsvRow>& rows,
    const std::vector<std::pair<double, double>>& complexities) {
    std::vector<double> sigmas;
    for (const GapCsvRow& row : rows)
        if (std::find(sigmas.begin(), sigmas.end(), row.sigma) == sigmas.end())
            sigmas.push_back(row.sigma);
    std::sort(sigmas.begin(), sigmas.end());

    std::vector<SigmaFit> fits;
    for (double sigma : sigmas) {
        SigmaFit fit;
        fit.sigma = sigma;
        fit.complexity = 1.0;
        for (const auto& [s, c] : complexities)
            if (s == sigma) fit.complexity = c;

        std::vector<int> ns;
        for (const GapCsvRow& row : rows)
            if (row.sigma == sigma && std::find(ns.begin(), ns.end(), row.n_train) == ns.end())
                ns.push_back(row.n_train);
        std::sort(ns.begin(), ns.end());

        std::vector<std::pair<int, std::vector<double>>> grid;
        for (int n : ns) {
            std::vector<double> gaps;
            for (const GapCsvRow& row : rows)
                if (row.sigma == sigma && row.n_train == n) gaps.push_back(row.epsilon_gen_abs);
            grid.emplace_back(n, std::move(gaps));
        }
        if (grid.size() < 3)
            fit.error = "insufficient grid for fit (need >= 3 n_train values)";
        else
            fit.fit = fit_bound_scaling(grid, fit.complexity);
        fits.push_back(std::move(fit));
    }
    return fits;
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw std::runtime_error("write failed: " + path);
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open for reading: " + path);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

void write_sweep_outputs(const SweepResult& result, const ExperimentConfig& cfg,
                         const std::string& dir) {
    std::filesystem::create_directories(dir);

    std::vector<GapCsvRow> gap_rows;
    std::vector<ComparisonCsvRow> comparison_rows;
    for (const CellResult& cell : result.cells) {
        gap_rows.push_back(gap_row_from_cell(cell, cfg));
        for (const TaskComparison& cmp : cell.comparison.per_task) {
            ComparisonCsvRow row;
            row.sigma = cell.cell.sigma;
            row.n_train = cell.cell.n_train;
            row.seed_index = cell.cell.seed_index;
            row.task_index = cmp.task_index;
            row.final_return_meta = cmp.final_return_meta;
            row.final_return_scratch = cmp.final_return_scratch;
            row.steps_to_target_meta = cmp.steps_to_target_meta.value_or(-1);
            row.steps_to_target_scratch = cmp.steps_to_target_scratch.value_or(-1);
            comparison_rows.push_back(row);
        }
    }
    const std::filesystem::path base(dir);
    write_text_file((base / "gaps.csv").string(), emit_gap_csv(std::move(gap_rows)));
    write_text_file((base / "comparison.csv").string(),
                    emit_comparison_csv(std::move(comparison_rows)));
    write_text_file((base / "fits.csv").string(), emit_fit_csv(result.fits));
    write_text_file((base / "fits.json").string(), fits_to_json(result.fits).dump(2) + "\n");
}

} // namespace metabound
