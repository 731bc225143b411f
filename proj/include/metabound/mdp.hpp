#pragma once

#include <string>
#include <vector>

namespace metabound {

/**
A finite Markov decision process with dense row-major tables.

`transitions` is indexed (state, action, next_state) and every
(state, action) row is a probability vector. `rewards` is indexed
(state, action) and bounded by [reward_min, reward_max], which travel
with the MDP so concentration bounds can use the true range.
*/
struct Mdp {
    int n_states = 0;
    int n_actions = 0;
    std::vector<double> transitions; // n_states * n_actions * n_states
    std::vector<double> rewards;     // n_states * n_actions
    double discount = 0.0;           // in [0, 1)
    std::vector<double> start_dist;  // n_states
    double reward_min = 0.0;
    double reward_max = 0.0;

    double transition(int s, int a, int s2) const {
        return transitions[(static_cast<std::size_t>(s) * n_actions + a) * n_states + s2];
    }
    double& transition(int s, int a, int s2) {
        return transitions[(static_cast<std::size_t>(s) * n_actions + a) * n_states + s2];
    }
    double reward(int s, int a) const {
        return rewards[static_cast<std::size_t>(s) * n_actions + a];
    }
    double& reward(int s, int a) {
        return rewards[static_cast<std::size_t>(s) * n_actions + a];
    }

    /// Allocates zeroed tables for the given shape.
    static Mdp zeros(int n_states, int n_actions);
};

/// Tabular softmax policy parameters: one logit per (state, action) pair.
struct PolicyParams {
    int n_states = 0;
    int n_actions = 0;
    std::vector<double> logits; // n_states * n_actions

    double logit(int s, int a) const {
        return logits[static_cast<std::size_t>(s) * n_actions + a];
    }
    double& logit(int s, int a) {
        return logits[static_cast<std::size_t>(s) * n_actions + a];
    }

    static PolicyParams zeros(int n_states, int n_actions);

    bool shape_matches(const Mdp& mdp) const {
        return n_states == mdp.n_states && n_actions == mdp.n_actions;
    }
};

/// Result of evaluating a policy: expected discounted return from the start
/// distribution, the per-state values behind it, and the loss L = -return.
struct EvalResult {
    double return_value = 0.0;
    std::vector<double> state_values;
    double loss_value = 0.0;
};

/// Validation verdict: `ok` iff no constraint was violated; every violation
/// is reported with the offending indices.
struct Validation {
    bool ok = true;
    std::vector<std::string> violations;
};

struct ValueIterationResult {
    std::vector<double> values;      // satisfy the Bellman optimality residual bound
    std::vector<int> greedy_policy;  // argmax action per state, lowest index wins ties
    int iterations = 0;
};

/// Checks all Mdp invariants (row sums, nonnegativity, reward range,
/// discount < 1, start distribution). Reports rather than throws.
Validation validate_mdp(const Mdp& mdp);

/// Row-major (state, action) table of softmax action probabilities.
std::vector<double> softmax_policy(const PolicyParams& params);

/// |r| bound on any discounted return: max(|r_min|, |r_max|) / (1 - discount).
double return_bound(const Mdp& mdp);

/// Start-distribution weighted average of a per-state value vector.
double start_weighted(const Mdp& mdp, const std::vector<double>& values);

/**
Exact policy evaluation: solves V = R_pi + discount * P_pi V (dense linear
solve for n_states <= 64, otherwise fixed-point iteration to residual 1e-10)
and returns the start-weighted value together with L = -return.
*/
EvalResult exact_policy_return(const Mdp& mdp, const PolicyParams& params);

/// Exact evaluation of a deterministic policy given as one action per state.
EvalResult evaluate_deterministic(const Mdp& mdp, const std::vector<int>& actions);

/**
Value iteration to sup-norm Bellman residual <= tol*(1-discount)/discount,
which guarantees a value error of at most tol. Greedy actions break ties
toward the lowest index.
*/
ValueIterationResult value_iteration(const Mdp& mdp, double tol);

/// Converts a deterministic policy into softmax parameters whose argmax
/// action carries `margin` logits over the rest.
PolicyParams policy_params_from_actions(const std::vector<int>& actions, int n_actions,
                                        double margin = 40.0);

/**
Exact gradient of the expected discounted return J with respect to the
logits, via the policy-gradient identity: grad(s,a) = d(s) * pi(a|s) *
(Q(s,a) - V(s)) with d the discounted state occupancy from the start
distribution. Both d and V come from linear solves. Negate for the loss
gradient.
*/
std::vector<double> exact_policy_gradient(const Mdp& mdp, const PolicyParams& params);

/// Central-difference approximation of the same gradient, one logit at a
/// time. Test oracle for exact_policy_gradient.
std::vector<double> finite_diff_gradient(const Mdp& mdp, const PolicyParams& params,
                                         double step);

} // namespace metabound
