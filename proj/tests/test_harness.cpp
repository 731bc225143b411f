#include "metabound/harness.hpp"

#include "test_support.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <string>

using namespace metabound;

namespace {

std::string minimal_config_text() {
    return R"({
      "family": {
        "family_kind": "perturbed_random",
        "n_states": 4, "n_actions": 2, "discount": 0.9,
        "complexity_sigma": 0.5, "reward_range": [0.0, 1.0], "base_seed": 3
      },
      "meta": {
        "inner_lr": 0.2, "inner_steps": 1, "meta_batch": 4,
        "schedule": {"c": 1.0, "p": 0.6}, "mode": "first_order",
        "max_iters": 25, "grad_tol": 1e-6
      },
      "n_train_grid": [4],
      "sigma_grid": [0.5],
      "n_seeds": 1,
      "master_seed": 77,
      "comparison": {"lr": 0.2, "budget": 3}
    })";
}

ExperimentConfig quick_config() {
    ExperimentConfig cfg = parse_config(minimal_config_text());
    cfg.n_test = 6;
    return cfg;
}

} // namespace

TEST_CASE("parse_config fills the documented defaults") {
    const ExperimentConfig cfg = parse_config(minimal_config_text());
    CHECK_EQ(cfg.n_test, 64);
    CHECK(cfg.confidence == 0.95);
    CHECK(cfg.comparison.target_fraction == 0.9);
    CHECK(cfg.output_dir == "out");
    CHECK_EQ(cfg.meta.max_iters, 25);
    CHECK(cfg.family.reward_range.first == 0.0);
}

TEST_CASE("parse_config rejects unknown fields with their path") {
    std::string text = minimal_config_text();
    text.replace(text.find("n_train_grid"), 12, "n_trian_grid");
    try {
        parse_config(text);
        FAIL("expected a parse failure");
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("n_trian_grid") != std::string::npos);
        CHECK(std::string(e.what()).find("unknown field") != std::string::npos);
    }
}

TEST_CASE("parse_config rejects duplicate grid values") {
    std::string text = minimal_config_text();
    text.replace(text.find("\"sigma_grid\": [0.5]"), 19, "\"sigma_grid\": [0.5, 0.5]");
    try {
        parse_config(text);
        FAIL("expected a parse failure");
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("duplicate") != std::string::npos);
    }
}

TEST_CASE("parse_config rejects malformed JSON and invariant violations") {
    CHECK_THROWS_AS(parse_config("{ not json"), std::invalid_argument);
    std::string text = minimal_config_text();
    text.replace(text.find("\"n_seeds\": 1"), 12, "\"n_seeds\": 0");
    CHECK_THROWS_AS(parse_config(text), std::invalid_argument);
}

TEST_CASE("config survives a JSON round trip") {
    const ExperimentConfig cfg = parse_config(minimal_config_text());
    const ExperimentConfig again = parse_config(config_to_json(cfg).dump());
    CHECK(config_to_json(cfg).dump() == config_to_json(again).dump());
}

TEST_CASE("emit_gap_csv writes a header-only file for no rows") {
    const std::string text = emit_gap_csv({});
    CHECK(text.find("family,sigma,n_train") == 0);
    CHECK(std::count(text.begin(), text.end(), '\n') == 1);
}

TEST_CASE("emit_gap_csv sorts rows and round-trips byte-exactly") {
    GapCsvRow a;
    a.family = "perturbed_random";
    a.sigma = 0.5;
    a.n_train = 16;
    a.seed_index = 1;
    a.derived_seed = 11111111111ULL;
    a.mean_train_return = 1.0 / 3.0;
    a.mean_test_return = 0.25;
    a.epsilon_gen_signed = 0.25 - 1.0 / 3.0;
    a.epsilon_gen_abs = 1.0 / 3.0 - 0.25;
    a.hoeffding_radius_test = 0.1358101515740619;
    a.subopt_gap = -0.125;
    a.meta_iters = 40;
    a.final_grad_norm = 1e-5;
    a.rate_class = "undetermined";
    a.meta_win_fraction = 0.625;
    GapCsvRow b = a;
    b.sigma = 0.1; // sorts before a
    b.seed_index = 0;

    const std::string emitted = emit_gap_csv({a, b});
    const std::size_t first_row = emitted.find('\n') + 1;
    CHECK(emitted.substr(first_row, 20).find("0.1") != std::string::npos);

    const std::string again = emit_gap_csv(parse_gap_csv(emitted));
    CHECK(emitted == again);
}

TEST_CASE("runlog csv round-trips the histories") {
    MetaState state;
    state.loss_history = {1.5, 0.75, 0.5};
    state.grad_norm_history = {2.0, 1.0, 1.0 / 3.0};
    state.iteration = 3;
    const MetaState parsed = parse_runlog_csv(emit_runlog_csv(state));
    CHECK(parsed.loss_history == state.loss_history);
    CHECK(parsed.grad_norm_history == state.grad_norm_history);
    CHECK_EQ(parsed.iteration, 3);
}

TEST_CASE("run_cell on a sigma-0 cell measures a vanishing gap") {
    ExperimentConfig cfg = quick_config();
    cfg.sigma_grid = {0.0};
    const CellResult result = run_cell(make_cell(cfg, 0, 0, 0), cfg);
    CHECK(result.gap.epsilon_gen_abs < 1e-6);
}

TEST_CASE("run_cell with max_iters 0 leaves theta0 and ties every comparison") {
    ExperimentConfig cfg = quick_config();
    cfg.meta.max_iters = 0;
    const CellResult result = run_cell(make_cell(cfg, 0, 0, 0), cfg);
    CHECK_EQ(result.state.iteration, 0);
    CHECK(result.comparison.meta_win_fraction == 0.5);
    for (const TaskComparison& cmp : result.comparison.per_task)
        CHECK(cmp.final_return_meta == cmp.final_return_scratch);
}

TEST_CASE("run_cell is byte-deterministic") {
    const ExperimentConfig cfg = quick_config();
    const SweepCell cell = make_cell(cfg, 0, 0, 0);
    const CellResult a = run_cell(cell, cfg);
    const CellResult b = run_cell(cell, cfg);
    CHECK(cell_result_to_json(a).dump() == cell_result_to_json(b).dump());
    CHECK(emit_gap_csv({gap_row_from_cell(a, cfg)}) == emit_gap_csv({gap_row_from_cell(b, cfg)}));
}

TEST_CASE("meta_batch larger than a small cell's train set is clamped") {
    ExperimentConfig cfg = quick_config();
    cfg.n_train_grid = {2}; // below cfg.meta.meta_batch == 4
    const CellResult result = run_cell(make_cell(cfg, 0, 0, 0), cfg);
    CHECK(result.state.iteration > 0);
}

TEST_CASE("a 1x1x1 sweep emits one row and records a fit error") {
    const ExperimentConfig cfg = quick_config();
    const SweepResult result = run_sweep(cfg, 1);
    REQUIRE_EQ(result.cells.size(), 1);
    REQUIRE_EQ(result.fits.size(), 1);
    CHECK_FALSE(result.fits[0].fit.has_value());
    CHECK(result.fits[0].error.find("insufficient grid") != std::string::npos);

    std::vector<GapCsvRow> rows;
    for (const CellResult& cell : result.cells) rows.push_back(gap_row_from_cell(cell, cfg));
    const std::string csv = emit_gap_csv(std::move(rows));
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 2); // header + one row
}

TEST_CASE("sweep cardinality matches the grid and fits appear per sigma") {
    ExperimentConfig cfg = quick_config();
    cfg.n_train_grid = {2, 4, 8};
    cfg.sigma_grid = {0.5};
    cfg.n_seeds = 5;
    cfg.meta.max_iters = 10;
    const SweepResult result = run_sweep(cfg, 2);
    CHECK_EQ(result.cells.size(), 15);
    REQUIRE_EQ(result.fits.size(), 1);
    CHECK(result.fits[0].fit.has_value());
    REQUIRE_EQ(result.fits[0].fit->grid.size(), 3);
    for (const BoundGridRow& row : result.fits[0].fit->grid) CHECK_EQ(row.n_seeds, 5);
}

TEST_CASE("sweep output bytes are independent of the parallelism level") {
    ExperimentConfig cfg = quick_config();
    cfg.n_train_grid = {2, 4};
    cfg.sigma_grid = {0.1, 0.8};
    cfg.n_seeds = 2;
    cfg.meta.max_iters = 8;
    const SweepResult serial = run_sweep(cfg, 1);
    const SweepResult parallel = run_sweep(cfg, 8);

    auto render = [&cfg](const SweepResult& result) {
        std::vector<GapCsvRow> rows;
        for (const CellResult& cell : result.cells) rows.push_back(gap_row_from_cell(cell, cfg));
        return emit_gap_csv(std::move(rows)) + fits_to_json(result.fits).dump(2);
    };
    CHECK(render(serial) == render(parallel));
}

TEST_CASE("distinct sweep cells derive distinct seeds") {
    ExperimentConfig cfg = quick_config();
    cfg.n_train_grid = {2, 4, 8};
    cfg.sigma_grid = {0.0, 0.5, 1.0};
    cfg.n_seeds = 3;
    std::vector<std::uint64_t> seeds;
    for (int si = 0; si < 3; ++si)
        for (int ni = 0; ni < 3; ++ni)
            for (int k = 0; k < 3; ++k) seeds.push_back(make_cell(cfg, si, ni, k).derived_seed);
    std::sort(seeds.begin(), seeds.end());
    CHECK(std::adjacent_find(seeds.begin(), seeds.end()) == seeds.end());
}

TEST_CASE("find_cell validates its coordinates") {
    const ExperimentConfig cfg = quick_config();
    CHECK_THROWS_AS(find_cell(cfg, 0.25, 4, 0), std::invalid_argument);
    CHECK_THROWS_AS(find_cell(cfg, 0.5, 3, 0), std::invalid_argument);
    CHECK_THROWS_AS(find_cell(cfg, 0.5, 4, 5), std::invalid_argument);
    const SweepCell cell = find_cell(cfg, 0.5, 4, 0);
    CHECK_EQ(cell.n_train, 4);
}

TEST_CASE("refit_from_rows reproduces the sweep's own fit") {
    ExperimentConfig cfg = quick_config();
    cfg.n_train_grid = {2, 4, 8};
    cfg.n_seeds = 2;
    cfg.meta.max_iters = 8;
    const SweepResult sweep = run_sweep(cfg, 1);

    std::vector<GapCsvRow> rows;
    for (const CellResult& cell : sweep.cells) rows.push_back(gap_row_from_cell(cell, cfg));
    const std::vector<GapCsvRow> parsed = parse_gap_csv(emit_gap_csv(rows));

    std::vector<std::pair<double, double>> complexities;
    for (int si = 0; si < static_cast<int>(cfg.sigma_grid.size()); ++si)
        complexities.emplace_back(cfg.sigma_grid[si], sweep_complexity(cfg, si));
    const std::vector<SigmaFit> refit = refit_from_rows(parsed, complexities);
    CHECK(fits_to_json(refit).dump() == fits_to_json(sweep.fits).dump());
}

TEST_CASE("run_cell handles the gridworld family end to end") {
    ExperimentConfig cfg = quick_config();
    cfg.family.family_kind = FamilyKind::perturbed_gridworld;
    cfg.family.n_states = 25;
    cfg.family.n_actions = 4;
    cfg.meta.max_iters = 5;
    cfg.n_test = 3;
    const CellResult result = run_cell(make_cell(cfg, 0, 0, 0), cfg);
    CHECK_EQ(result.state.iteration, 5);
    CHECK(result.gap.hoeffding_radius_test > 0.0);
    CHECK(gap_row_from_cell(result, cfg).family == "perturbed_gridworld");
}

TEST_CASE("the shipped demo config parses") {
    const ExperimentConfig cfg =
        load_config(std::string(METABOUND_SOURCE_DIR) + "/configs/demo.json");
    CHECK_EQ(cfg.n_train_grid.size(), 6);
    CHECK_EQ(cfg.sigma_grid.size(), 3);
    CHECK_EQ(cfg.n_seeds, 20);
}

TEST_CASE("rate class names round-trip") {
    for (RateClass rc : {RateClass::linear, RateClass::sublinear, RateClass::superlinear,
                         RateClass::undetermined})
        CHECK(rate_class_from_name(rate_class_name(rc)) == rc);
    CHECK_THROWS_AS(rate_class_from_name("quadratic"), std::invalid_argument);
}

TEST_CASE("mdp json uses the documented field names") {
    const Mdp mdp = test::identity_mdp(1.0, 0.9);
    const nlohmann::json j = mdp_to_json(mdp);
    CHECK(j.contains("n_states"));
    CHECK(j.contains("transitions"));
    CHECK(j.contains("rewards"));
    CHECK(j.contains("discount"));
    CHECK(j.contains("start_dist"));
    CHECK(j.contains("reward_range"));
    CHECK(j["transitions"].size() == 1);
}
