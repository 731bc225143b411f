#include "metabound/meta_learner.hpp"

#include "metabound/rng.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace metabound {

namespace {

constexpr double kHvpStep = 1e-5;
constexpr int kStopWindow = 10;
constexpr double kFitRSquared = 0.98;
constexpr double kCurvatureThreshold = 0.01;
constexpr double kExcessFloor = 1e-15;
constexpr double kExcessDecades = 1e-3; // keep excesses within 3 decades of the max

enum StreamTag : std::uint64_t { kBatchSampling = 10 };

std::vector<double> loss_gradient(const Mdp& task, const PolicyParams& params) {
    std::vector<double> g = exact_policy_gradient(task, params);
    for (double& v : g) v = -v;
    return g;
}

double l2_norm(const std::vector<double>& v) {
    return std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
}

// H_L(theta) * v by central differences of the exact loss gradient; the
// perturbation has magnitude kHvpStep along v/|v|.
std::vector<double> hessian_vector_product(const Mdp& task, const PolicyParams& params,
                                           const std::vector<double>& v) {
    const double norm = l2_norm(v);
    if (norm == 0.0) return std::vector<double>(v.size(), 0.0);
    PolicyParams probe = params;
    for (std::size_t i = 0; i < v.size(); ++i)
        probe.logits[i] = params.logits[i] + kHvpStep * v[i] / norm;
    std::vector<double> plus = loss_gradient(task, probe);
    for (std::size_t i = 0; i < v.size(); ++i)
        probe.logits[i] = params.logits[i] - kHvpStep * v[i] / norm;
    std::vector<double> minus = loss_gradient(task, probe);
    for (std::size_t i = 0; i < plus.size(); ++i)
        plus[i] = norm * (plus[i] - minus[i]) / (2.0 * kHvpStep);
    return plus;
}

// Gradient of the post-adaptation loss for one task, backpropagated through
// the stored inner iterates: v <- (I - alpha * H(theta_k)) v.
std::vector<double> full_task_gradient(const Mdp& task, const PolicyParams& params,
                                       const MetaConfig& cfg) {
    std::vector<PolicyParams> iterates;
    iterates.reserve(cfg.inner_steps + 1);
    iterates.push_back(params);
    for (int k = 0; k < cfg.inner_steps; ++k) {
        PolicyParams next = iterates.back();
        const std::vector<double> g = loss_gradient(task, next);
        for (std::size_t i = 0; i < g.size(); ++i) next.logits[i] -= cfg.inner_lr * g[i];
        iterates.push_back(std::move(next));
    }
    std::vector<double> v = loss_gradient(task, iterates.back());
    for (int k = cfg.inner_steps - 1; k >= 0; --k) {
        const std::vector<double> hv = hessian_vector_product(task, iterates[k], v);
        for (std::size_t i = 0; i < v.size(); ++i) v[i] -= cfg.inner_lr * hv[i];
    }
    return v;
}

std::vector<const Mdp*> task_pointers(const TaskSet& tasks) {
    std::vector<const Mdp*> ptrs;
    ptrs.reserve(tasks.tasks.size());
    for (const auto& [index, mdp] : tasks.tasks) ptrs.push_back(&mdp);
    return ptrs;
}

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
};

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
    const int n = static_cast<int>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (int i = 0; i < n; ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    LineFit fit;
    if (sxx == 0.0) return fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    fit.r_squared = syy == 0.0 ? 1.0 : (sxy * sxy) / (sxx * syy);
    return fit;
}

struct QuadFit {
    double a = 0.0, b = 0.0, c = 0.0; // y = a + b x + c x^2
    double r_squared = 0.0;
    bool ok = false;
};

QuadFit fit_quadratic(const std::vector<double>& x, const std::vector<double>& y) {
    QuadFit fit;
    const int n = static_cast<int>(x.size());
    if (n < 4) return fit;
    Eigen::MatrixXd design(n, 3);
    Eigen::VectorXd rhs(n);
    for (int i = 0; i < n; ++i) {
        design(i, 0) = 1.0;
        design(i, 1) = x[i];
        design(i, 2) = x[i] * x[i];
        rhs(i) = y[i];
    }
    const Eigen::VectorXd coef = design.colPivHouseholderQr().solve(rhs);
    fit.a = coef(0);
    fit.b = coef(1);
    fit.c = coef(2);
    const double my = rhs.mean();
    const double ss_tot = (rhs.array() - my).square().sum();
    const double ss_res = (rhs - design * coef).array().square().sum();
    fit.r_squared = ss_tot == 0.0 ? 1.0 : 1.0 - ss_res / ss_tot;
    fit.ok = true;
    return fit;
}

} // namespace

double StepSchedule::rate(int t) const {
    return base_rate / std::pow(static_cast<double>(t) + 1.0, exponent);
}

std::string rate_class_name(RateClass rate_class) {
    switch (rate_class) {
        case RateClass::linear: return "linear";
        case RateClass::sublinear: return "sublinear";
        case RateClass::superlinear: return "superlinear";
        case RateClass::undetermined: return "undetermined";
    }
    return "undetermined";
}

RateClass rate_class_from_name(const std::string& name) {
    if (name == "linear") return RateClass::linear;
    if (name == "sublinear") return RateClass::sublinear;
    if (name == "superlinear") return RateClass::superlinear;
    if (name == "undetermined") return RateClass::undetermined;
    throw std::invalid_argument("unknown rate class: " + name);
}

PolicyParams adapt(const Mdp& task, const PolicyParams& params, double inner_lr,
                   int inner_steps) {
    if (!(inner_lr > 0.0)) throw std::invalid_argument("inner_lr must be > 0");
    if (inner_steps < 0) throw std::invalid_argument("inner_steps must be >= 0");
    PolicyParams current = params;
    for (int k = 0; k < inner_steps; ++k) {
        const std::vector<double> g = loss_gradient(task, current);
        for (std::size_t i = 0; i < g.size(); ++i) current.logits[i] -= inner_lr * g[i];
    }
    return current;
}

double meta_loss(const std::vector<const Mdp*>& tasks, const PolicyParams& params,
                 const MetaConfig& cfg) {
    if (tasks.empty()) throw std::invalid_argument("meta_loss needs at least one task");
    double acc = 0.0;
    for (const Mdp* task : tasks) {
        const PolicyParams adapted =
            cfg.inner_steps > 0 ? adapt(*task, params, cfg.inner_lr, cfg.inner_steps) : params;
        acc += exact_policy_return(*task, adapted).loss_value;
    }
    return acc / static_cast<double>(tasks.size());
}

double meta_loss(const TaskSet& tasks, const PolicyParams& params, const MetaConfig& cfg) {
    return meta_loss(task_pointers(tasks), params, cfg);
}

std::vector<double> meta_gradient(const std::vector<const Mdp*>& tasks,
                                  const PolicyParams& params, const MetaConfig& cfg) {
    if (tasks.empty()) throw std::invalid_argument("meta_gradient needs at least one task");
    std::vector<double> total(params.logits.size(), 0.0);
    for (const Mdp* task : tasks) {
        std::vector<double> g;
        if (cfg.mode == MetaMode::full && cfg.inner_steps > 0) {
            g = full_task_gradient(*task, params, cfg);
        } else {
            const PolicyParams adapted =
                cfg.inner_steps > 0 ? adapt(*task, params, cfg.inner_lr, cfg.inner_steps)
                                    : params;
            g = loss_gradient(*task, adapted);
        }
        for (std::size_t i = 0; i < total.size(); ++i) total[i] += g[i];
    }
    for (double& v : total) v /= static_cast<double>(tasks.size());
    return total;
}

MetaState meta_train(const TaskSet& train, const MetaConfig& cfg, std::uint64_t seed) {
    if (train.tasks.empty()) throw std::invalid_argument("meta_train needs a nonempty train set");
    if (cfg.meta_batch < 1) throw std::invalid_argument("meta_batch must be >= 1");
    if (cfg.meta_batch > static_cast<int>(train.tasks.size()))
        throw std::invalid_argument("meta_batch exceeds train-set size");
    if (!(cfg.schedule.base_rate > 0.0)) throw std::invalid_argument("schedule base_rate must be > 0");
    if (!(cfg.schedule.exponent >= 0.0)) throw std::invalid_argument("schedule exponent must be >= 0");
    if (cfg.max_iters < 0) throw std::invalid_argument("max_iters must be >= 0");
    if (!(cfg.grad_tol > 0.0)) throw std::invalid_argument("grad_tol must be > 0");

    const Mdp& first = train.tasks.front().second;
    MetaState state;
    state.params = PolicyParams::zeros(first.n_states, first.n_actions);

    const int n_tasks = static_cast<int>(train.tasks.size());
    std::vector<int> indices(n_tasks);

    for (int t = 0; t < cfg.max_iters; ++t) {
        // Partial Fisher-Yates draw of meta_batch distinct task indices,
        // then sorted so the reduction order is fixed.
        SplitMix64 rng(derive_seed(seed, static_cast<std::uint64_t>(t), kBatchSampling));
        ++state.rng_cursor;
        std::iota(indices.begin(), indices.end(), 0);
        for (int i = 0; i < cfg.meta_batch; ++i) {
            const int j = i + static_cast<int>(rng.next_below(n_tasks - i));
            std::swap(indices[i], indices[j]);
        }
        std::vector<int> batch(indices.begin(), indices.begin() + cfg.meta_batch);
        std::sort(batch.begin(), batch.end());
        std::vector<const Mdp*> tasks;
        tasks.reserve(batch.size());
        for (int idx : batch) tasks.push_back(&train.tasks[idx].second);

        const double loss = meta_loss(tasks, state.params, cfg);
        const std::vector<double> grad = meta_gradient(tasks, state.params, cfg);
        const double grad_norm = l2_norm(grad);
        if (!std::isfinite(loss) || !std::isfinite(grad_norm)) {
            std::ostringstream msg;
            msg << "meta-training diverged at iteration " << t
                << " (non-finite loss or gradient; step size likely too large)";
            throw std::runtime_error(msg.str());
        }
        state.loss_history.push_back(loss);
        state.grad_norm_history.push_back(grad_norm);

        const double rate = cfg.schedule.rate(t);
        for (std::size_t i = 0; i < grad.size(); ++i)
            state.params.logits[i] -= rate * grad[i];
        state.iteration = t + 1;

        if (state.iteration >= kStopWindow) {
            const double windowed =
                std::accumulate(state.grad_norm_history.end() - kStopWindow,
                                state.grad_norm_history.end(), 0.0) /
                kStopWindow;
            if (windowed < cfg.grad_tol) break;
        }
    }
    return state;
}

ScheduleVerdict validate_schedule(const StepSchedule& schedule) {
    if (!(schedule.base_rate > 0.0))
        throw std::invalid_argument("schedule base_rate must be > 0");
    if (!(schedule.exponent >= 0.0))
        throw std::invalid_argument("schedule exponent must be >= 0");
    ScheduleVerdict verdict;
    verdict.valid = true;
    if (schedule.exponent > 1.0) {
        verdict.valid = false;
        verdict.reasons.push_back("rates summable (insufficient total step)");
    }
    if (schedule.exponent <= 0.5) {
        verdict.valid = false;
        verdict.reasons.push_back("squared rates not summable");
    }
    return verdict;
}

ConvergenceReport convergence_diagnostics(const MetaState& state, double grad_tol,
                                          int window) {
    const int n = static_cast<int>(state.grad_norm_history.size());
    if (window < 2) throw std::invalid_argument("window must be >= 2");
    if (n < window)
        throw std::invalid_argument("history shorter than the requested window");

    ConvergenceReport report;
    report.window = window;
    report.final_grad_norm =
        std::accumulate(state.grad_norm_history.end() - window,
                        state.grad_norm_history.end(), 0.0) /
        window;
    report.converged = report.final_grad_norm < grad_tol;

    const double min_loss =
        *std::min_element(state.loss_history.begin(), state.loss_history.end());
    double max_excess = 0.0;
    for (double loss : state.loss_history) max_excess = std::max(max_excess, loss - min_loss);
    const double cut = std::max(kExcessFloor, max_excess * kExcessDecades);

    std::vector<double> ts, log_ts, log_es;
    for (int i = 0; i < static_cast<int>(state.loss_history.size()); ++i) {
        const double excess = state.loss_history[i] - min_loss;
        if (excess < cut) continue;
        const double t = static_cast<double>(i) + 1.0;
        ts.push_back(t);
        log_ts.push_back(std::log(t));
        log_es.push_back(std::log(excess));
    }
    if (ts.size() < 3) return report; // undetermined

    const LineFit linear = fit_line(ts, log_es);
    if (linear.r_squared >= kFitRSquared && linear.slope < 0.0) {
        report.rate_class = RateClass::linear;
        report.fitted_rate = linear.slope;
        return report;
    }
    const LineFit sublinear = fit_line(log_ts, log_es);
    if (sublinear.r_squared >= kFitRSquared && sublinear.slope < 0.0) {
        report.rate_class = RateClass::sublinear;
        report.fitted_rate = sublinear.slope;
        return report;
    }
    const QuadFit quad = fit_quadratic(ts, log_es);
    if (quad.ok && quad.r_squared >= kFitRSquared && quad.c <= -kCurvatureThreshold &&
        quad.b + 2.0 * quad.c * ts.back() < 0.0) {
        report.rate_class = RateClass::superlinear;
        // mean slope over the fit window (the quadratic's midpoint derivative)
        report.fitted_rate = quad.b + quad.c * (ts.front() + ts.back());
        return report;
    }
    return report;
}

} // namespace metabound
