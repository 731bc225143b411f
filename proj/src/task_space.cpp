#include "metabound/task_space.hpp"

#include "metabound/rng.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace metabound {

namespace {

// Field tags keep the per-task random streams distinct from the base-MDP
// streams and from each other.
enum StreamTag : std::uint64_t {
    kBaseTransitions = 0,
    kBaseRewards = 1,
    kTaskTransitions = 2,
    kTaskRewards = 3,
    kBaseGoal = 4,
    kTaskGoal = 5,
};

constexpr int kGridSide = 5;
constexpr int kGridStates = kGridSide * kGridSide;
constexpr int kGridActions = 4;

void require_valid(const TaskFamilySpec& spec) {
    const Validation v = validate_family_spec(spec);
    if (!v.ok) throw std::invalid_argument("invalid TaskFamilySpec: " + v.violations.front());
}

// Flat Dirichlet row via normalized exponentials.
void fill_stochastic_row(SplitMix64& rng, double* row, int n) {
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        row[i] = -std::log(1.0 - rng.next_double());
        sum += row[i];
    }
    if (sum == 0.0) { // all draws hit the lattice zero; fall back to uniform
        for (int i = 0; i < n; ++i) row[i] = 1.0 / n;
        return;
    }
    for (int i = 0; i < n; ++i) row[i] /= sum;
}

void fill_transitions(SplitMix64& rng, Mdp& mdp) {
    for (int s = 0; s < mdp.n_states; ++s)
        for (int a = 0; a < mdp.n_actions; ++a)
            fill_stochastic_row(rng, &mdp.transitions[(static_cast<std::size_t>(s) * mdp.n_actions + a) * mdp.n_states], mdp.n_states);
}

Mdp sample_perturbed_random(const TaskFamilySpec& spec, int task_index) {
    const auto [lo, hi] = spec.reward_range;
    const double span = hi - lo;
    const double sigma = spec.complexity_sigma;

    Mdp base = Mdp::zeros(spec.n_states, spec.n_actions);
    base.discount = spec.discount;
    base.reward_min = lo;
    base.reward_max = hi;
    SplitMix64 base_t(derive_seed(spec.base_seed, 0, kBaseTransitions));
    fill_transitions(base_t, base);
    SplitMix64 base_r(derive_seed(spec.base_seed, 0, kBaseRewards));
    for (double& r : base.rewards) r = base_r.next_uniform(lo, hi);
    std::fill(base.start_dist.begin(), base.start_dist.end(), 1.0 / spec.n_states);

    Mdp task = base;
    Mdp fresh = Mdp::zeros(spec.n_states, spec.n_actions);
    SplitMix64 task_t(derive_seed(spec.base_seed, static_cast<std::uint64_t>(task_index),
                                  kTaskTransitions));
    fill_transitions(task_t, fresh);
    for (std::size_t i = 0; i < task.transitions.size(); ++i)
        task.transitions[i] = (1.0 - sigma) * base.transitions[i] + sigma * fresh.transitions[i];

    SplitMix64 task_r(derive_seed(spec.base_seed, static_cast<std::uint64_t>(task_index),
                                  kTaskRewards));
    for (std::size_t i = 0; i < task.rewards.size(); ++i) {
        const double eps = task_r.next_uniform(-span / 2.0, span / 2.0);
        task.rewards[i] = std::clamp(base.rewards[i] + sigma * eps, lo, hi);
    }
    return task;
}

Mdp sample_perturbed_gridworld(const TaskFamilySpec& spec, int task_index) {
    const auto [lo, hi] = spec.reward_range;
    const double span = hi - lo;
    const double sigma = spec.complexity_sigma;

    SplitMix64 base_stream(derive_seed(spec.base_seed, 0, kBaseGoal));
    const int base_goal = static_cast<int>(base_stream.next_below(kGridStates));

    // The goal cell is discrete, so the sigma mixture acts on it as a
    // resampling probability: with probability sigma the task gets a fresh
    // uniform goal, otherwise the base goal. sigma = 0 therefore reproduces
    // the base task exactly.
    SplitMix64 task_stream(derive_seed(spec.base_seed, static_cast<std::uint64_t>(task_index),
                                       kTaskGoal));
    const double resample = task_stream.next_double();
    const int fresh_goal = static_cast<int>(task_stream.next_below(kGridStates));
    const int goal = resample < sigma ? fresh_goal : base_goal;
    const double jitter = task_stream.next_uniform(-span / 2.0, span / 2.0);
    const double goal_reward = std::clamp(hi + sigma * jitter, lo, hi);
    const double step_reward = std::clamp(0.0, lo, hi);

    Mdp mdp = Mdp::zeros(kGridStates, kGridActions);
    mdp.discount = spec.discount;
    mdp.reward_min = lo;
    mdp.reward_max = hi;
    std::fill(mdp.start_dist.begin(), mdp.start_dist.end(), 1.0 / kGridStates);

    // Deterministic moves (up, right, down, left); walking off the grid
    // stays in place; the goal cell is absorbing.
    constexpr int dr[kGridActions] = {-1, 0, 1, 0};
    constexpr int dc[kGridActions] = {0, 1, 0, -1};
    for (int s = 0; s < kGridStates; ++s) {
        const int row = s / kGridSide;
        const int col = s % kGridSide;
        for (int a = 0; a < kGridActions; ++a) {
            int next = s;
            if (s != goal) {
                const int nr = row + dr[a];
                const int nc = col + dc[a];
                if (nr >= 0 && nr < kGridSide && nc >= 0 && nc < kGridSide)
                    next = nr * kGridSide + nc;
            }
            mdp.transition(s, a, next) = 1.0;
            mdp.reward(s, a) = s == goal ? goal_reward : step_reward;
        }
    }
    return mdp;
}

} // namespace

Validation validate_family_spec(const TaskFamilySpec& spec) {
    Validation v;
    auto fail = [&v](const std::string& msg) {
        v.ok = false;
        v.violations.push_back(msg);
    };
    if (spec.n_states < 1) fail("n_states must be >= 1");
    if (spec.n_actions < 1) fail("n_actions must be >= 1");
    if (!(spec.discount >= 0.0) || spec.discount >= 1.0) fail("discount must be in [0,1)");
    if (!(spec.complexity_sigma >= 0.0 && spec.complexity_sigma <= 1.0))
        fail("complexity_sigma must be in [0,1]");
    if (!(spec.reward_range.first < spec.reward_range.second))
        fail("reward_range must be a nonempty interval");
    if (spec.family_kind == FamilyKind::perturbed_gridworld &&
        (spec.n_states != kGridStates || spec.n_actions != kGridActions)) {
        std::ostringstream msg;
        msg << "perturbed_gridworld is a fixed 5x5 grid: n_states must be " << kGridStates
            << " and n_actions " << kGridActions;
        fail(msg.str());
    }
    return v;
}

Mdp sample_task(const TaskFamilySpec& spec, int task_index) {
    require_valid(spec);
    if (task_index < 0) throw std::invalid_argument("task_index must be >= 0");
    switch (spec.family_kind) {
        case FamilyKind::perturbed_random:
            return sample_perturbed_random(spec, task_index);
        case FamilyKind::perturbed_gridworld:
            return sample_perturbed_gridworld(spec, task_index);
    }
    throw std::invalid_argument("unknown family kind");
}

std::pair<TaskSet, TaskSet> make_split(const TaskFamilySpec& spec, int n_train, int n_test) {
    if (n_train < 1 || n_test < 1)
        throw std::invalid_argument("make_split requires n_train >= 1 and n_test >= 1");
    TaskSet train{spec, {}, RoleTag::train};
    TaskSet test{spec, {}, RoleTag::test};
    train.tasks.reserve(n_train);
    test.tasks.reserve(n_test);
    for (int i = 0; i < n_train; ++i) train.tasks.emplace_back(i, sample_task(spec, i));
    for (int i = n_train; i < n_train + n_test; ++i)
        test.tasks.emplace_back(i, sample_task(spec, i));
    return {std::move(train), std::move(test)};
}

ComplexityEstimate estimate_complexity(const TaskSet& tasks) {
    const int n = static_cast<int>(tasks.tasks.size());
    if (n < 2)
        throw std::invalid_argument("estimate_complexity needs at least 2 tasks");

    std::vector<double> optimal_returns;
    optimal_returns.reserve(n);
    for (const auto& [index, mdp] : tasks.tasks) {
        const ValueIterationResult vi = value_iteration(mdp, 1e-9);
        optimal_returns.push_back(start_weighted(mdp, vi.values));
    }
    double mean = 0.0;
    for (double r : optimal_returns) mean += r;
    mean /= n;
    double var = 0.0;
    for (double r : optimal_returns) var += (r - mean) * (r - mean);
    var /= (n - 1);

    const Mdp& first = tasks.tasks.front().second;
    const double cells = static_cast<double>(first.n_states) * first.n_actions;
    double divergence = 0.0;
    int pairs = 0;
    for (int i = 0; i < n; ++i) {
        const auto& pi = tasks.tasks[i].second.transitions;
        for (int j = i + 1; j < n; ++j) {
            const auto& pj = tasks.tasks[j].second.transitions;
            double l1 = 0.0;
            for (std::size_t k = 0; k < pi.size(); ++k) l1 += std::abs(pi[k] - pj[k]);
            divergence += l1 / cells;
            ++pairs;
        }
    }

    ComplexityEstimate estimate;
    estimate.optimal_return_std = std::sqrt(var);
    estimate.mean_transition_divergence = divergence / pairs;
    estimate.n_tasks_used = n;
    return estimate;
}

} // namespace metabound
