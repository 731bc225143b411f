#pragma once

#include "metabound/mdp.hpp"
#include "metabound/task_space.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace metabound {

enum class MetaMode { first_order, full };

/// Power step-size schedule rate(t) = base_rate / (t+1)^exponent.
struct StepSchedule {
    double base_rate = 0.1; // c > 0
    double exponent = 1.0;  // p >= 0

    double rate(int t) const;
};

struct MetaConfig {
    double inner_lr = 0.1; // adaptation step size (alpha)
    int inner_steps = 1;   // adaptation steps (K)
    int meta_batch = 1;    // tasks sampled per meta-iteration
    StepSchedule schedule;
    MetaMode mode = MetaMode::first_order;
    int max_iters = 100;
    double grad_tol = 1e-4;
};

/// Meta-training trajectory: parameters after the last update plus full
/// per-iteration histories (both histories have length == iteration).
struct MetaState {
    PolicyParams params;
    int iteration = 0;
    std::vector<double> loss_history;      // batch meta-loss at the pre-update params
    std::vector<double> grad_norm_history; // L2 norm of the meta-gradient
    std::uint64_t rng_cursor = 0;          // per-iteration sampling streams consumed
};

enum class RateClass { linear, sublinear, superlinear, undetermined };

std::string rate_class_name(RateClass rate_class);
RateClass rate_class_from_name(const std::string& name);

struct ConvergenceReport {
    bool converged = false; // mean of the last `window` grad norms < grad_tol
    RateClass rate_class = RateClass::undetermined;
    double fitted_rate = 0.0; // slope of the winning fit
    int window = 0;
    double final_grad_norm = 0.0; // the windowed mean the verdict used
};

struct ScheduleVerdict {
    bool valid = false;
    std::vector<std::string> reasons; // which Robbins-Monro condition fails
};

/// Runs `inner_steps` exact gradient-descent steps on the task loss
/// L = -J starting from `params`. inner_steps = 0 returns params unchanged.
PolicyParams adapt(const Mdp& task, const PolicyParams& params, double inner_lr,
                   int inner_steps);

/// Mean post-adaptation loss over the given tasks.
double meta_loss(const std::vector<const Mdp*>& tasks, const PolicyParams& params,
                 const MetaConfig& cfg);
double meta_loss(const TaskSet& tasks, const PolicyParams& params, const MetaConfig& cfg);

/**
Gradient of the meta-objective at `params`, averaged over tasks.

first_order: the loss gradient evaluated at the adapted parameters (FOMAML).
full: the true gradient, backpropagated through the K inner steps; each
Hessian-vector product comes from central differences of the exact loss
gradient with perturbation magnitude 1e-5 along the normalized direction.
*/
std::vector<double> meta_gradient(const std::vector<const Mdp*>& tasks,
                                  const PolicyParams& params, const MetaConfig& cfg);

/**
MAML-style meta-training. Starts from all-zero logits (uniform policy); at
iteration t samples cfg.meta_batch train tasks without replacement from a
stream seeded by (seed, t), takes a step of size schedule.rate(t) against
the meta-gradient, and stops at max_iters or once the mean of the last 10
gradient norms drops below grad_tol. Fully deterministic given
(train, cfg, seed). Throws on non-finite loss or gradient, naming the
iteration.
*/
MetaState meta_train(const TaskSet& train, const MetaConfig& cfg, std::uint64_t seed);

/// Robbins-Monro check for power schedules c/(t+1)^p: valid iff the rates
/// sum to infinity while their squares stay summable, i.e. 0.5 < p <= 1.
ScheduleVerdict validate_schedule(const StepSchedule& schedule);

/**
Classifies the decay of the excess loss e_t = loss_t - min(loss) over the
recorded history and checks the windowed gradient-norm stopping criterion.

Fits are restricted to iterates whose excess lies within three decades of
the largest (and above a 1e-15 floor), which keeps the plateau- and
noise-dominated tail out of the regression. linear: log e_t vs t with
R^2 >= 0.98 and negative slope; sublinear: log e_t vs log t likewise;
superlinear: quadratic log-fit with curvature <= -0.01, R^2 >= 0.98 and a
decreasing trend; otherwise undetermined.
*/
ConvergenceReport convergence_diagnostics(const MetaState& state, double grad_tol,
                                          int window);

} // namespace metabound
