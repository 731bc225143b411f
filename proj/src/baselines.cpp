#include "metabound/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace metabound {

LearningCurve scratch_train(const Mdp& task, const PolicyParams& init, double lr, int steps,
                            CurveOrigin origin, int task_index) {
    if (!(lr > 0.0)) throw std::invalid_argument("scratch_train lr must be > 0");
    if (steps < 0) throw std::invalid_argument("steps must be >= 0");

    LearningCurve curve;
    curve.task_index = task_index;
    curve.origin = origin;
    curve.returns.reserve(steps + 1);

    PolicyParams params = init;
    curve.returns.push_back(exact_policy_return(task, params).return_value);
    for (int k = 0; k < steps; ++k) {
        const std::vector<double> grad = exact_policy_gradient(task, params);
        for (std::size_t i = 0; i < grad.size(); ++i)
            params.logits[i] += lr * grad[i]; // descent on L = ascent on J
        const double ret = exact_policy_return(task, params).return_value;
        if (!std::isfinite(ret)) {
            std::ostringstream msg;
            msg << "scratch training diverged at step " << (k + 1);
            throw std::runtime_error(msg.str());
        }
        curve.returns.push_back(ret);
    }
    return curve;
}

std::optional<int> steps_to_target(const LearningCurve& curve, double target) {
    for (std::size_t i = 0; i < curve.returns.size(); ++i)
        if (curve.returns[i] >= target) return static_cast<int>(i);
    return std::nullopt;
}

ComparisonReport compare_meta_vs_scratch(const PolicyParams& meta_params, const TaskSet& test,
                                         double lr, int budget, double target_fraction) {
    if (budget < 1) throw std::invalid_argument("comparison budget must be >= 1");
    if (!(target_fraction > 0.0 && target_fraction <= 1.0))
        throw std::invalid_argument("target_fraction must be in (0,1]");

    ComparisonReport report;
    report.target_fraction = target_fraction;
    double wins = 0.0;
    for (const auto& [index, task] : test.tasks) {
        const PolicyParams scratch_init = PolicyParams::zeros(task.n_states, task.n_actions);
        const LearningCurve meta_curve =
            scratch_train(task, meta_params, lr, budget, CurveOrigin::meta_init, index);
        const LearningCurve scratch_curve =
            scratch_train(task, scratch_init, lr, budget, CurveOrigin::scratch_init, index);

        const ValueIterationResult vi = value_iteration(task, 1e-9);
        const double target = target_fraction * start_weighted(task, vi.values);

        TaskComparison cmp;
        cmp.task_index = index;
        cmp.final_return_meta = meta_curve.returns.back();
        cmp.final_return_scratch = scratch_curve.returns.back();
        cmp.steps_to_target_meta = steps_to_target(meta_curve, target);
        cmp.steps_to_target_scratch = steps_to_target(scratch_curve, target);
        report.per_task.push_back(cmp);

        if (cmp.final_return_meta > cmp.final_return_scratch)
            wins += 1.0;
        else if (cmp.final_return_meta == cmp.final_return_scratch)
            wins += 0.5;
    }
    std::sort(report.per_task.begin(), report.per_task.end(),
              [](const TaskComparison& a, const TaskComparison& b) {
                  return a.task_index < b.task_index;
              });
    report.meta_win_fraction = wins / static_cast<double>(test.tasks.size());
    return report;
}

} // namespace metabound
