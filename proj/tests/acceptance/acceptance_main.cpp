// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Each criterion pins its tolerances in code.

#include "metabound/baselines.hpp"
#include "metabound/bounds.hpp"
#include "metabound/harness.hpp"
#include "metabound/meta_learner.hpp"
#include "metabound/rng.hpp"
#include "metabound/task_space.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

using namespace metabound;

namespace {

int failures = 0;

void report(int id, const std::string& name, bool pass, const std::string& detail,
            double seconds) {
    if (!pass) ++failures;
    std::printf("[%s] criterion %2d: %s (%s) [%.1fs]\n", pass ? "PASS" : "FAIL", id,
                name.c_str(), detail.c_str(), seconds);
    std::fflush(stdout);
}

template <typename Fn>
void run_criterion(int id, const std::string& name, Fn fn) {
    const auto start = std::chrono::steady_clock::now();
    bool pass = false;
    std::string detail;
    try {
        pass = fn(detail);
    } catch (const std::exception& e) {
        detail = std::string("exception: ") + e.what();
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    report(id, name, pass, detail, seconds);
}

double sup_norm(const std::vector<double>& v) {
    double best = 0.0;
    for (double x : v) best = std::max(best, std::abs(x));
    return best;
}

double sup_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double best = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) best = std::max(best, std::abs(a[i] - b[i]));
    return best;
}

Mdp random_instance(int n_states, int n_actions, double discount, std::uint64_t seed) {
    Mdp mdp = Mdp::zeros(n_states, n_actions);
    SplitMix64 rng(seed);
    for (int s = 0; s < n_states; ++s) {
        for (int a = 0; a < n_actions; ++a) {
            double sum = 0.0;
            for (int s2 = 0; s2 < n_states; ++s2) {
                const double e = -std::log(1.0 - rng.next_double());
                mdp.transition(s, a, s2) = e;
                sum += e;
            }
            for (int s2 = 0; s2 < n_states; ++s2) mdp.transition(s, a, s2) /= sum;
            mdp.reward(s, a) = rng.next_double();
        }
    }
    double start = 0.0;
    for (int s = 0; s < n_states; ++s) {
        mdp.start_dist[s] = rng.next_double() + 1e-3;
        start += mdp.start_dist[s];
    }
    for (int s = 0; s < n_states; ++s) mdp.start_dist[s] /= start;
    mdp.discount = discount;
    mdp.reward_min = 0.0;
    mdp.reward_max = 1.0;
    return mdp;
}

PolicyParams random_instance_logits(int n_states, int n_actions, std::uint64_t seed) {
    PolicyParams params = PolicyParams::zeros(n_states, n_actions);
    SplitMix64 rng(seed);
    for (double& logit : params.logits) logit = rng.next_uniform(-2.0, 2.0);
    return params;
}

/// The benchmark task family used across criteria 4-7.
TaskFamilySpec benchmark_family(double sigma) {
    TaskFamilySpec family;
    family.family_kind = FamilyKind::perturbed_random;
    family.n_states = 5;
    family.n_actions = 3;
    family.discount = 0.9;
    family.complexity_sigma = sigma;
    family.reward_range = {0.0, 1.0};
    family.base_seed = 0; // overridden per cell by the harness
    return family;
}

/// The benchmark meta-configuration: first-order mode, one inner step.
MetaConfig benchmark_meta() {
    MetaConfig meta;
    meta.inner_lr = 0.1;
    meta.inner_steps = 1;
    meta.meta_batch = 8;
    meta.schedule = {1.0, 0.6};
    meta.mode = MetaMode::first_order;
    meta.max_iters = 300;
    meta.grad_tol = 1e-5;
    return meta;
}

ExperimentConfig benchmark_config(std::vector<double> sigma_grid, std::vector<int> n_grid,
                                  int n_seeds) {
    ExperimentConfig cfg;
    cfg.family = benchmark_family(sigma_grid.front());
    cfg.meta = benchmark_meta();
    cfg.sigma_grid = std::move(sigma_grid);
    cfg.n_train_grid = std::move(n_grid);
    cfg.n_test = 64;
    cfg.n_seeds = n_seeds;
    cfg.master_seed = 20240801;
    cfg.comparison = {0.1, 5, 0.9};
    return cfg;
}

bool criterion_gradient_oracle(std::string& detail) {
    double worst = 0.0;
    for (std::uint64_t i = 0; i < 100; ++i) {
        SplitMix64 shape_rng(10'000 + i);
        const int n_states = 2 + static_cast<int>(shape_rng.next_below(5));
        const int n_actions = 2 + static_cast<int>(shape_rng.next_below(5));
        const double discount = (i % 2 == 0) ? 0.5 : 0.9;
        const Mdp mdp = random_instance(n_states, n_actions, discount, 20'000 + i);
        const PolicyParams params = random_instance_logits(n_states, n_actions, 30'000 + i);
        const std::vector<double> exact = exact_policy_gradient(mdp, params);
        const std::vector<double> fd = finite_diff_gradient(mdp, params, 1e-5);
        worst = std::max(worst, sup_diff(exact, fd) / std::max(sup_norm(exact), 1e-12));
    }
    std::ostringstream out;
    out << "max relative error " << worst << " over 100 instances, tolerance 1e-6";
    detail = out.str();
    return worst <= 1e-6;
}

bool criterion_bellman_consistency(std::string& detail) {
    double worst = 0.0;
    for (std::uint64_t i = 0; i < 100; ++i) {
        SplitMix64 shape_rng(10'000 + i);
        const int n_states = 2 + static_cast<int>(shape_rng.next_below(5));
        const int n_actions = 2 + static_cast<int>(shape_rng.next_below(5));
        const double discount = (i % 2 == 0) ? 0.5 : 0.9;
        const Mdp mdp = random_instance(n_states, n_actions, discount, 20'000 + i);
        const ValueIterationResult vi = value_iteration(mdp, 1e-10);
        const PolicyParams greedy = policy_params_from_actions(vi.greedy_policy, n_actions);
        const double evaluated = exact_policy_return(mdp, greedy).return_value;
        worst = std::max(worst, std::abs(evaluated - start_weighted(mdp, vi.values)));
    }
    std::ostringstream out;
    out << "max |greedy return - start-weighted V*| = " << worst << ", tolerance 1e-8";
    detail = out.str();
    return worst <= 1e-8;
}

bool criterion_meta_gradient_oracle(std::string& detail) {
    double worst_full = 0.0;
    double worst_k0 = 0.0;
    for (std::uint64_t i = 0; i < 20; ++i) {
        SplitMix64 rng(40'000 + i);
        const int n_states = 2 + static_cast<int>(rng.next_below(3));
        const int n_actions = 2 + static_cast<int>(rng.next_below(2));
        const Mdp a = random_instance(n_states, n_actions, 0.9, 50'000 + i);
        const Mdp b = random_instance(n_states, n_actions, 0.9, 60'000 + i);
        const PolicyParams params = random_instance_logits(n_states, n_actions, 70'000 + i);
        MetaConfig cfg;
        cfg.inner_lr = 0.2;
        cfg.inner_steps = 1 + static_cast<int>(rng.next_below(3)); // K in {1,2,3}
        cfg.mode = MetaMode::full;

        const std::vector<double> exact = meta_gradient({&a, &b}, params, cfg);
        PolicyParams probe = params;
        std::vector<double> fd(params.logits.size());
        for (std::size_t j = 0; j < params.logits.size(); ++j) {
            const double saved = probe.logits[j];
            probe.logits[j] = saved + 1e-5;
            const double plus = meta_loss({&a, &b}, probe, cfg);
            probe.logits[j] = saved - 1e-5;
            const double minus = meta_loss({&a, &b}, probe, cfg);
            probe.logits[j] = saved;
            fd[j] = (plus - minus) / 2e-5;
        }
        worst_full = std::max(worst_full, sup_diff(exact, fd) / std::max(sup_norm(exact), 1e-12));

        cfg.inner_steps = 0;
        const std::vector<double> g_full = meta_gradient({&a, &b}, params, cfg);
        cfg.mode = MetaMode::first_order;
        const std::vector<double> g_fo = meta_gradient({&a, &b}, params, cfg);
        worst_k0 = std::max(worst_k0, sup_diff(g_full, g_fo));
    }
    std::ostringstream out;
    out << "full-mode rel err " << worst_full << " (tol 1e-4); K=0 mode gap " << worst_k0
        << " (tol 1e-12)";
    detail = out.str();
    return worst_full <= 1e-4 && worst_k0 <= 1e-12;
}

bool criterion_scaling_reproduction(std::string& detail) {
    const ExperimentConfig cfg = benchmark_config({0.5}, {4, 8, 16, 32, 64, 128}, 20);
    const SweepResult sweep = run_sweep(cfg, 1); // single-threaded per the criterion
    const BoundFit& fit = *sweep.fits.front().fit;
    const double gap_small = fit.grid.front().mean_gap;  // N = 4
    const double gap_large = fit.grid.back().mean_gap;   // N = 128
    const bool exponent_ok = fit.fitted_exponent >= -0.9 && fit.fitted_exponent <= -0.15;
    const bool halved = gap_large <= 0.5 * gap_small;
    const bool r2_ok = fit.r_squared >= 0.6;
    std::ostringstream out;
    out << "exponent " << fit.fitted_exponent << " in [-0.9,-0.15]; gap(128)/gap(4) = "
        << gap_large / gap_small << " <= 0.5; r^2 " << fit.r_squared << " >= 0.6";
    detail = out.str();
    return exponent_ok && halved && r2_ok;
}

bool criterion_complexity_monotonicity(std::string& detail) {
    const ExperimentConfig cfg = benchmark_config({0.1, 0.5, 1.0}, {32}, 20);
    const SweepResult sweep = run_sweep(cfg, 1);
    std::vector<double> mean_gaps;
    for (std::size_t si = 0; si < cfg.sigma_grid.size(); ++si) {
        double acc = 0.0;
        for (int k = 0; k < cfg.n_seeds; ++k)
            acc += sweep.cells[si * cfg.n_seeds + k].gap.epsilon_gen_abs;
        mean_gaps.push_back(acc / cfg.n_seeds);
    }
    std::ostringstream out;
    out << "mean |gap| at sigma {0.1,0.5,1.0} = {" << mean_gaps[0] << ", " << mean_gaps[1]
        << ", " << mean_gaps[2] << "}";
    detail = out.str();
    return mean_gaps[0] <= mean_gaps[1] && mean_gaps[1] <= mean_gaps[2];
}

bool criterion_convergence_reproduction(std::string& detail) {
    // Robbins-Monro run on the degenerate (sigma = 0) family.
    TaskFamilySpec family = benchmark_family(0.0);
    family.base_seed = 424242;
    TaskSet train{family, {}, RoleTag::train};
    train.tasks.emplace_back(0, sample_task(family, 0));

    MetaConfig rm = benchmark_meta();
    rm.meta_batch = 1;
    rm.schedule = {0.5, 1.0};
    rm.max_iters = 2000;
    rm.grad_tol = 1e-3;
    const MetaState rm_state = meta_train(train, rm, 1);
    const ConvergenceReport rm_report = convergence_diagnostics(rm_state, 1e-3, 10);
    const bool rm_ok = rm_report.converged && rm_state.iteration <= 2000;

    // Full-batch constant-rate descent must be monotone.
    MetaConfig constant = benchmark_meta();
    constant.meta_batch = 8;
    constant.schedule = {0.05, 0.0};
    constant.max_iters = 300;
    constant.grad_tol = 1e-12;
    TaskFamilySpec bench = benchmark_family(0.5);
    bench.base_seed = 777;
    auto [bench_train, bench_test] = make_split(bench, 8, 1);
    const MetaState monotone_state = meta_train(bench_train, constant, 2);
    bool monotone = true;
    double worst_rise = 0.0;
    for (std::size_t i = 1; i < monotone_state.loss_history.size(); ++i) {
        const double rise = monotone_state.loss_history[i] - monotone_state.loss_history[i - 1];
        worst_rise = std::max(worst_rise, rise);
        if (rise > 0.0) monotone = false;
    }

    // Robbins-Monro schedule law over the sampled exponent set.
    bool schedule_ok = true;
    for (double p : {0.0, 0.25, 0.5, 0.6, 0.75, 1.0, 1.01, 2.0}) {
        const bool expected = p > 0.5 && p <= 1.0;
        if (validate_schedule({0.5, p}).valid != expected) schedule_ok = false;
    }

    std::ostringstream out;
    out << "RM clause: windowed grad norm " << rm_report.final_grad_norm << " after "
        << rm_state.iteration << " iters, target < 1e-3"
        << (rm_ok ? ""
                  : " — unattainable for exact softmax gradients at this schedule/horizon"
                    " (floor ~1/(c ln t); see notes/decisions.md)")
        << "; monotone full-batch descent " << (monotone ? "yes" : "no") << " (worst rise "
        << worst_rise << "); schedule law " << (schedule_ok ? "exact" : "violated");
    detail = out.str();
    return rm_ok && monotone && schedule_ok;
}

bool criterion_benchmark_comparison(std::string& detail) {
    const ExperimentConfig cfg = benchmark_config({0.3}, {64}, 1);
    const CellResult cell = run_cell(make_cell(cfg, 0, 0, 0), cfg);

    auto median_steps = [&cfg](const ComparisonReport& report, bool meta) {
        std::vector<int> steps;
        for (const TaskComparison& cmp : report.per_task) {
            const auto& value = meta ? cmp.steps_to_target_meta : cmp.steps_to_target_scratch;
            steps.push_back(value.value_or(cfg.comparison.budget + 1));
        }
        std::sort(steps.begin(), steps.end());
        const std::size_t n = steps.size();
        return n % 2 == 1 ? static_cast<double>(steps[n / 2])
                          : (steps[n / 2 - 1] + steps[n / 2]) / 2.0;
    };
    const double median_meta = median_steps(cell.comparison, true);
    const double median_scratch = median_steps(cell.comparison, false);
    std::ostringstream out;
    out << "meta_win_fraction " << cell.comparison.meta_win_fraction
        << " > 0.5; median steps meta " << median_meta << " <= scratch " << median_scratch;
    detail = out.str();
    return cell.comparison.meta_win_fraction > 0.5 && median_meta <= median_scratch;
}

bool criterion_concentration(std::string& detail) {
    SplitMix64 rng(314159);
    const int trials = 2000;
    const int n = 50;
    int hoeffding_hits = 0;
    int bernstein_hits = 0;
    for (int trial = 0; trial < trials; ++trial) {
        std::vector<double> samples(n);
        for (int i = 0; i < n; ++i) samples[i] = rng.next_double() < 0.3 ? 1.0 : 0.0;
        const ConcentrationInterval h = hoeffding_interval(samples, 1.0, 0.95);
        const ConcentrationInterval b = bernstein_interval(samples, 1.0, 0.95);
        if (std::abs(h.center - 0.3) <= h.radius) ++hoeffding_hits;
        if (std::abs(b.center - 0.3) <= b.radius) ++bernstein_hits;
    }
    const double h_cov = hoeffding_hits / static_cast<double>(trials);
    const double b_cov = bernstein_hits / static_cast<double>(trials);

    // Closed form sqrt(ln 40 / 200) evaluated with high-precision arithmetic.
    const double pinned = 0.13581015157406195;
    const double radius = hoeffding_interval(std::vector<double>(100, 0.0), 1.0, 0.95).radius;
    const bool radius_ok = std::abs(radius - pinned) <= 1e-6;

    std::ostringstream out;
    out << "coverage hoeffding " << h_cov << ", bernstein " << b_cov
        << " (both >= 0.95); radius(n=100) = " << radius << " within 1e-6 of sqrt(ln40/200)";
    detail = out.str();
    return h_cov >= 0.95 && b_cov >= 0.95 && radius_ok;
}

bool criterion_determinism(std::string& detail) {
    ExperimentConfig cfg = benchmark_config({0.1, 0.5, 1.0}, {2, 4, 8}, 3);
    cfg.n_test = 4;
    cfg.meta.max_iters = 10;

    namespace fs = std::filesystem;
    const fs::path base = fs::temp_directory_path() / "metabound_acceptance";
    fs::remove_all(base);
    const fs::path dir1 = base / "p1";
    const fs::path dir8 = base / "p8";
    write_sweep_outputs(run_sweep(cfg, 1), cfg, dir1.string());
    write_sweep_outputs(run_sweep(cfg, 8), cfg, dir8.string());

    bool identical = true;
    std::string mismatch;
    for (const char* name : {"gaps.csv", "comparison.csv", "fits.csv", "fits.json"}) {
        const std::string a = read_text_file((dir1 / name).string());
        const std::string b = read_text_file((dir8 / name).string());
        if (a != b) {
            identical = false;
            mismatch = name;
        }
    }
    detail = identical ? "27-cell sweep artifacts byte-identical at parallelism 1 and 8"
                       : ("mismatch in " + mismatch);
    return identical;
}

bool criterion_synthetic_fit(std::string& detail) {
    double worst_exponent = 0.0;
    for (double planted : {-0.25, -0.5, -1.0}) {
        std::vector<std::pair<int, std::vector<double>>> grid;
        for (int n : {4, 16, 64, 256})
            grid.emplace_back(n, std::vector<double>{std::pow(n, planted)});
        const BoundFit fit = fit_bound_scaling(grid, 1.0);
        worst_exponent = std::max(worst_exponent, std::abs(fit.fitted_exponent - planted));
    }

    std::vector<std::pair<int, std::vector<double>>> matched;
    for (int n : {4, 8, 16, 32, 64})
        matched.emplace_back(
            n, std::vector<double>{0.7 * std::sqrt(std::log(static_cast<double>(n)) / n)});
    const BoundFit fit = fit_bound_scaling(matched, 1.0);
    const double k_err = std::abs(fit.constant_k - 0.7);

    std::ostringstream out;
    out << "planted-exponent error " << worst_exponent << "; constant_k error " << k_err
        << " (both <= 1e-9)";
    detail = out.str();
    return worst_exponent <= 1e-9 && k_err <= 1e-9;
}

} // namespace

int main() {
    run_criterion(1, "gradient oracle suite", criterion_gradient_oracle);
    run_criterion(2, "Bellman consistency", criterion_bellman_consistency);
    run_criterion(3, "meta-gradient oracle", criterion_meta_gradient_oracle);
    run_criterion(4, "scaling-law reproduction", criterion_scaling_reproduction);
    run_criterion(5, "complexity monotonicity", criterion_complexity_monotonicity);
    run_criterion(6, "convergence reproduction", criterion_convergence_reproduction);
    run_criterion(7, "benchmark comparison", criterion_benchmark_comparison);
    run_criterion(8, "concentration coverage", criterion_concentration);
    run_criterion(9, "sweep determinism", criterion_determinism);
    run_criterion(10, "synthetic fit exactness", criterion_synthetic_fit);

    if (failures > 0) {
        std::printf("%d of 10 criteria failed (failures are analyzed in the project notes)\n",
                    failures);
        return 1;
    }
    std::printf("all acceptance criteria passed\n");
    return 0;
}
