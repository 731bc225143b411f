#pragma once

#include "metabound/mdp.hpp"
#include "metabound/task_space.hpp"

#include <optional>
#include <vector>

namespace metabound {

enum class CurveOrigin { meta_init, scratch_init };

/// Exact return after each gradient step; returns[0] is the initial return,
/// so the length is steps + 1.
struct LearningCurve {
    std::vector<double> returns;
    int task_index = 0;
    CurveOrigin origin = CurveOrigin::scratch_init;
};

struct TaskComparison {
    int task_index = 0;
    double final_return_meta = 0.0;
    double final_return_scratch = 0.0;
    std::optional<int> steps_to_target_meta;
    std::optional<int> steps_to_target_scratch;
};

/// Per-task adaptation comparison between a meta-learned initialization and
/// learning from scratch. Wins are final-return comparisons with ties
/// counting one half.
struct ComparisonReport {
    std::vector<TaskComparison> per_task; // sorted by task_index
    double meta_win_fraction = 0.0;
    double target_fraction = 0.0;
};

/// Runs `steps` exact gradient-descent steps on the task loss from `init`,
/// recording the exact return after every step. Throws on non-finite values.
LearningCurve scratch_train(const Mdp& task, const PolicyParams& init, double lr, int steps,
                            CurveOrigin origin = CurveOrigin::scratch_init,
                            int task_index = 0);

/// Smallest step index whose return reaches `target`, if any.
std::optional<int> steps_to_target(const LearningCurve& curve, double target);

/**
For each test task, trains once from `meta_params` and once from zero
logits with the same step size and budget; the per-task target is
target_fraction times the task's optimal return.
*/
ComparisonReport compare_meta_vs_scratch(const PolicyParams& meta_params, const TaskSet& test,
                                         double lr, int budget, double target_fraction);

} // namespace metabound
