#include "metabound/mdp.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace metabound {

namespace {

constexpr double kRowSumTol = 1e-9;
constexpr double kIterativeResidual = 1e-10;
constexpr int kDenseSolveLimit = 64;
constexpr long kMaxSweeps = 100000000L;

void require_shape(const Mdp& mdp, const PolicyParams& params) {
    if (!params.shape_matches(mdp)) {
        std::ostringstream msg;
        msg << "policy shape (" << params.n_states << "," << params.n_actions
            << ") does not match mdp shape (" << mdp.n_states << "," << mdp.n_actions << ")";
        throw std::invalid_argument(msg.str());
    }
}

// Solves V = r + discount * P V for a fixed row-stochastic P (n x n).
std::vector<double> solve_bellman(const std::vector<double>& p, const std::vector<double>& r,
                                  double discount, int n) {
    if (n <= kDenseSolveLimit) {
        Eigen::MatrixXd a = Eigen::MatrixXd::Identity(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                a(i, j) -= discount * p[static_cast<std::size_t>(i) * n + j];
        Eigen::Map<const Eigen::VectorXd> b(r.data(), n);
        Eigen::VectorXd v = a.partialPivLu().solve(b);
        return std::vector<double>(v.data(), v.data() + n);
    }
    // Fixed-point iteration; a discount-contraction, so the residual target
    // is always reached for discount < 1.
    std::vector<double> v(n, 0.0), next(n, 0.0);
    for (long sweep = 0; sweep < kMaxSweeps; ++sweep) {
        double residual = 0.0;
        for (int i = 0; i < n; ++i) {
            double acc = r[i];
            const double* row = &p[static_cast<std::size_t>(i) * n];
            for (int j = 0; j < n; ++j) acc += discount * row[j] * v[j];
            next[i] = acc;
            residual = std::max(residual, std::abs(acc - v[i]));
        }
        v.swap(next);
        if (residual <= kIterativeResidual) return v;
    }
    throw std::runtime_error("policy evaluation failed to reach residual target");
}

// Policy-averaged transition matrix and reward vector for a stochastic
// policy given as a (state, action) probability table.
void policy_kernel(const Mdp& mdp, const std::vector<double>& pi, std::vector<double>& p_pi,
                   std::vector<double>& r_pi) {
    const int n = mdp.n_states;
    const int m = mdp.n_actions;
    p_pi.assign(static_cast<std::size_t>(n) * n, 0.0);
    r_pi.assign(n, 0.0);
    for (int s = 0; s < n; ++s) {
        for (int a = 0; a < m; ++a) {
            const double w = pi[static_cast<std::size_t>(s) * m + a];
            if (w == 0.0) continue;
            r_pi[s] += w * mdp.reward(s, a);
            for (int s2 = 0; s2 < n; ++s2)
                p_pi[static_cast<std::size_t>(s) * n + s2] += w * mdp.transition(s, a, s2);
        }
    }
}

EvalResult evaluate_policy_matrix(const Mdp& mdp, const std::vector<double>& pi) {
    std::vector<double> p_pi, r_pi;
    policy_kernel(mdp, pi, p_pi, r_pi);
    EvalResult result;
    result.state_values = solve_bellman(p_pi, r_pi, mdp.discount, mdp.n_states);
    result.return_value = start_weighted(mdp, result.state_values);
    result.loss_value = -result.return_value;
    return result;
}

// Discounted state occupancy d = mu + discount * P_pi^T d from the start
// distribution (unnormalized: sums to 1/(1-discount)).
std::vector<double> occupancy_measure(const Mdp& mdp, const std::vector<double>& p_pi) {
    const int n = mdp.n_states;
    std::vector<double> p_t(static_cast<std::size_t>(n) * n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            p_t[static_cast<std::size_t>(j) * n + i] = p_pi[static_cast<std::size_t>(i) * n + j];
    return solve_bellman(p_t, mdp.start_dist, mdp.discount, n);
}

} // namespace

Mdp Mdp::zeros(int n_states, int n_actions) {
    Mdp mdp;
    mdp.n_states = n_states;
    mdp.n_actions = n_actions;
    mdp.transitions.assign(
        static_cast<std::size_t>(n_states) * n_actions * n_states, 0.0);
    mdp.rewards.assign(static_cast<std::size_t>(n_states) * n_actions, 0.0);
    mdp.start_dist.assign(n_states, 0.0);
    return mdp;
}

PolicyParams PolicyParams::zeros(int n_states, int n_actions) {
    PolicyParams params;
    params.n_states = n_states;
    params.n_actions = n_actions;
    params.logits.assign(static_cast<std::size_t>(n_states) * n_actions, 0.0);
    return params;
}

Validation validate_mdp(const Mdp& mdp) {
    Validation v;
    auto fail = [&v](const std::string& msg) {
        v.ok = false;
        v.violations.push_back(msg);
    };

    if (mdp.n_states < 1) fail("n_states must be >= 1");
    if (mdp.n_actions < 1) fail("n_actions must be >= 1");
    if (!(mdp.discount >= 0.0) || mdp.discount >= 1.0) fail("discount must be < 1");
    if (mdp.reward_min > mdp.reward_max) fail("reward range is empty (r_min > r_max)");
    if (!v.ok) return v;

    const std::size_t want_t =
        static_cast<std::size_t>(mdp.n_states) * mdp.n_actions * mdp.n_states;
    const std::size_t want_r = static_cast<std::size_t>(mdp.n_states) * mdp.n_actions;
    if (mdp.transitions.size() != want_t || mdp.rewards.size() != want_r ||
        mdp.start_dist.size() != static_cast<std::size_t>(mdp.n_states)) {
        fail("table sizes do not match (n_states, n_actions)");
        return v;
    }

    for (int s = 0; s < mdp.n_states; ++s) {
        for (int a = 0; a < mdp.n_actions; ++a) {
            double sum = 0.0;
            for (int s2 = 0; s2 < mdp.n_states; ++s2) {
                const double p = mdp.transition(s, a, s2);
                if (p < 0.0) {
                    std::ostringstream msg;
                    msg << "negative transition probability " << p << " at (s=" << s
                        << ",a=" << a << ",s'=" << s2 << ")";
                    fail(msg.str());
                }
                sum += p;
            }
            if (std::abs(sum - 1.0) > kRowSumTol) {
                std::ostringstream msg;
                msg << "row sum " << sum << " != 1 at (s=" << s << ",a=" << a << ")";
                fail(msg.str());
            }
            const double r = mdp.reward(s, a);
            if (r < mdp.reward_min || r > mdp.reward_max || !std::isfinite(r)) {
                std::ostringstream msg;
                msg << "reward " << r << " outside [" << mdp.reward_min << ","
                    << mdp.reward_max << "] at (s=" << s << ",a=" << a << ")";
                fail(msg.str());
            }
        }
    }

    double start_sum = 0.0;
    for (int s = 0; s < mdp.n_states; ++s) {
        const double p = mdp.start_dist[s];
        if (p < 0.0) {
            std::ostringstream msg;
            msg << "negative start probability " << p << " at s=" << s;
            fail(msg.str());
        }
        start_sum += p;
    }
    if (std::abs(start_sum - 1.0) > kRowSumTol) {
        std::ostringstream msg;
        msg << "start distribution sums to " << start_sum << " != 1";
        fail(msg.str());
    }
    return v;
}

std::vector<double> softmax_policy(const PolicyParams& params) {
    const int n = params.n_states;
    const int m = params.n_actions;
    std::vector<double> pi(static_cast<std::size_t>(n) * m);
    for (int s = 0; s < n; ++s) {
        double top = -std::numeric_limits<double>::infinity();
        for (int a = 0; a < m; ++a) {
            if (!std::isfinite(params.logit(s, a)))
                throw std::invalid_argument("policy logits must be finite");
            top = std::max(top, params.logit(s, a));
        }
        double z = 0.0;
        for (int a = 0; a < m; ++a) {
            const double e = std::exp(params.logit(s, a) - top);
            pi[static_cast<std::size_t>(s) * m + a] = e;
            z += e;
        }
        for (int a = 0; a < m; ++a) pi[static_cast<std::size_t>(s) * m + a] /= z;
    }
    return pi;
}

double return_bound(const Mdp& mdp) {
    return std::max(std::abs(mdp.reward_min), std::abs(mdp.reward_max)) / (1.0 - mdp.discount);
}

double start_weighted(const Mdp& mdp, const std::vector<double>& values) {
    double acc = 0.0;
    for (int s = 0; s < mdp.n_states; ++s) acc += mdp.start_dist[s] * values[s];
    return acc;
}

EvalResult exact_policy_return(const Mdp& mdp, const PolicyParams& params) {
    require_shape(mdp, params);
    return evaluate_policy_matrix(mdp, softmax_policy(params));
}

EvalResult evaluate_deterministic(const Mdp& mdp, const std::vector<int>& actions) {
    if (actions.size() != static_cast<std::size_t>(mdp.n_states))
        throw std::invalid_argument("deterministic policy must name one action per state");
    std::vector<double> pi(static_cast<std::size_t>(mdp.n_states) * mdp.n_actions, 0.0);
    for (int s = 0; s < mdp.n_states; ++s) {
        const int a = actions[s];
        if (a < 0 || a >= mdp.n_actions)
            throw std::invalid_argument("action index out of range in deterministic policy");
        pi[static_cast<std::size_t>(s) * mdp.n_actions + a] = 1.0;
    }
    return evaluate_policy_matrix(mdp, pi);
}

ValueIterationResult value_iteration(const Mdp& mdp, double tol) {
    if (!(tol > 0.0)) throw std::invalid_argument("value_iteration tol must be > 0");
    const int n = mdp.n_states;
    const int m = mdp.n_actions;
    const double gamma = mdp.discount;
    // Residual threshold that guarantees sup-norm value error <= tol. For
    // gamma = 0 a single backup is exact and the residual hits 0 on the
    // second sweep.
    const double residual_target = gamma > 0.0 ? tol * (1.0 - gamma) / gamma : 0.0;

    ValueIterationResult result;
    result.values.assign(n, 0.0);
    std::vector<double> next(n, 0.0);
    for (long sweep = 0; sweep < kMaxSweeps; ++sweep) {
        double residual = 0.0;
        for (int s = 0; s < n; ++s) {
            double best = -std::numeric_limits<double>::infinity();
            for (int a = 0; a < m; ++a) {
                double q = mdp.reward(s, a);
                for (int s2 = 0; s2 < n; ++s2)
                    q += gamma * mdp.transition(s, a, s2) * result.values[s2];
                best = std::max(best, q);
            }
            next[s] = best;
            residual = std::max(residual, std::abs(best - result.values[s]));
        }
        result.values.swap(next);
        ++result.iterations;
        if (residual <= residual_target) break;
        if (sweep + 1 == kMaxSweeps)
            throw std::runtime_error("value iteration failed to reach residual target");
    }

    result.greedy_policy.assign(n, 0);
    for (int s = 0; s < n; ++s) {
        double best = -std::numeric_limits<double>::infinity();
        int best_a = 0;
        for (int a = 0; a < m; ++a) {
            double q = mdp.reward(s, a);
            for (int s2 = 0; s2 < n; ++s2)
                q += gamma * mdp.transition(s, a, s2) * result.values[s2];
            if (q > best) {
                best = q;
                best_a = a;
            }
        }
        result.greedy_policy[s] = best_a;
    }
    return result;
}

PolicyParams policy_params_from_actions(const std::vector<int>& actions, int n_actions,
                                        double margin) {
    PolicyParams params = PolicyParams::zeros(static_cast<int>(actions.size()), n_actions);
    for (int s = 0; s < params.n_states; ++s) params.logit(s, actions[s]) = margin;
    return params;
}

std::vector<double> exact_policy_gradient(const Mdp& mdp, const PolicyParams& params) {
    require_shape(mdp, params);
    const int n = mdp.n_states;
    const int m = mdp.n_actions;
    const std::vector<double> pi = softmax_policy(params);

    std::vector<double> p_pi, r_pi;
    policy_kernel(mdp, pi, p_pi, r_pi);
    const std::vector<double> values = solve_bellman(p_pi, r_pi, mdp.discount, n);
    const std::vector<double> occupancy = occupancy_measure(mdp, p_pi);

    std::vector<double> grad(static_cast<std::size_t>(n) * m);
    for (int s = 0; s < n; ++s) {
        for (int a = 0; a < m; ++a) {
            double q = mdp.reward(s, a);
            for (int s2 = 0; s2 < n; ++s2)
                q += mdp.discount * mdp.transition(s, a, s2) * values[s2];
            grad[static_cast<std::size_t>(s) * m + a] =
                occupancy[s] * pi[static_cast<std::size_t>(s) * m + a] * (q - values[s]);
        }
    }
    return grad;
}

std::vector<double> finite_diff_gradient(const Mdp& mdp, const PolicyParams& params,
                                         double step) {
    if (!(step > 0.0)) throw std::invalid_argument("finite difference step must be > 0");
    require_shape(mdp, params);
    PolicyParams probe = params;
    std::vector<double> grad(params.logits.size());
    for (std::size_t i = 0; i < params.logits.size(); ++i) {
        const double saved = probe.logits[i];
        probe.logits[i] = saved + step;
        const double plus = exact_policy_return(mdp, probe).return_value;
        probe.logits[i] = saved - step;
        const double minus = exact_policy_return(mdp, probe).return_value;
        probe.logits[i] = saved;
        grad[i] = (plus - minus) / (2.0 * step);
    }
    return grad;
}

} // namespace metabound
