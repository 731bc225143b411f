#pragma once

#include "metabound/mdp.hpp"

#include <cstdint>
#include <utility>
#include <vector>

namespace metabound {

enum class FamilyKind { perturbed_random, perturbed_gridworld };

/**
Seeded generator of a task distribution over MDPs.

`complexity_sigma` in [0, 1] is the variability knob: 0 collapses the family
to a single base task, 1 makes tasks independent draws. For
perturbed_random, task i mixes the base transition tensor with a fresh draw,
P_i = (1-sigma) * P_base + sigma * P_i_rand, and jitters rewards by sigma
(clamped to reward_range). perturbed_gridworld fixes 5x5 grid dynamics
(n_states = 25, n_actions = 4) and varies the goal cell and goal reward.
*/
struct TaskFamilySpec {
    FamilyKind family_kind = FamilyKind::perturbed_random;
    int n_states = 2;
    int n_actions = 2;
    double discount = 0.9;
    double complexity_sigma = 0.5;
    std::pair<double, double> reward_range{0.0, 1.0};
    std::uint64_t base_seed = 0;
};

enum class RoleTag { train, test };

struct TaskSet {
    TaskFamilySpec spec;
    std::vector<std::pair<int, Mdp>> tasks; // (task_index, mdp), indices ascending
    RoleTag role_tag = RoleTag::train;
};

/// Empirical proxies for the task-distribution complexity C: spread of
/// optimal returns across tasks and mean pairwise L1 transition distance.
/// Both are exactly 0 for a degenerate (sigma = 0) family.
struct ComplexityEstimate {
    double optimal_return_std = 0.0;
    double mean_transition_divergence = 0.0;
    int n_tasks_used = 0;
};

Validation validate_family_spec(const TaskFamilySpec& spec);

/**
Deterministically samples task `task_index` from the family. Pure function
of (spec, task_index): per-task randomness comes from SplitMix64 streams
seeded by a documented mix of (base_seed, task_index, field_tag), so tasks
may be generated in any order or concurrently with identical results.
*/
Mdp sample_task(const TaskFamilySpec& spec, int task_index);

/// Train split uses task indices [0, n_train), test uses
/// [n_train, n_train + n_test); disjoint by construction.
std::pair<TaskSet, TaskSet> make_split(const TaskFamilySpec& spec, int n_train, int n_test);

/// Needs >= 2 tasks. optimal_return_std is the sample standard deviation of
/// start-weighted optimal returns; mean_transition_divergence averages
/// (1/(S*A)) * sum |P_i - P_j| over unordered task pairs.
ComplexityEstimate estimate_complexity(const TaskSet& tasks);

} // namespace metabound
