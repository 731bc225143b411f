#pragma once

#include "metabound/mdp.hpp"
#include "metabound/rng.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace metabound::test {

/// 1-state, 1-action MDP with a self-loop; the archetypal valid case.
inline Mdp identity_mdp(double reward = 0.0, double discount = 0.9) {
    Mdp mdp = Mdp::zeros(1, 1);
    mdp.transitions = {1.0};
    mdp.rewards = {reward};
    mdp.discount = discount;
    mdp.start_dist = {1.0};
    mdp.reward_min = std::min(0.0, reward);
    mdp.reward_max = std::max(0.0, reward);
    return mdp;
}

/// Single-state two-armed bandit with gamma = 0.
inline Mdp bandit_mdp(double r0 = 1.0, double r1 = 0.0) {
    Mdp mdp = Mdp::zeros(1, 2);
    mdp.transitions = {1.0, 1.0};
    mdp.rewards = {r0, r1};
    mdp.discount = 0.0;
    mdp.start_dist = {1.0};
    mdp.reward_min = std::min(r0, r1);
    mdp.reward_max = std::max(r0, r1);
    return mdp;
}

/// Two-state chain: s0 action "move" goes to s1 (r=0), s1 action "stay"
/// loops (r=1); each state also has a "wait" action that stays in place
/// with reward 0, so both states have the same two actions.
inline Mdp chain_mdp(double discount = 0.5) {
    Mdp mdp = Mdp::zeros(2, 2);
    // action 0 at s0: move to s1; at s1: stay at s1 (reward 1)
    mdp.transition(0, 0, 1) = 1.0;
    mdp.transition(1, 0, 1) = 1.0;
    mdp.reward(1, 0) = 1.0;
    // action 1: wait in place, reward 0
    mdp.transition(0, 1, 0) = 1.0;
    mdp.transition(1, 1, 1) = 1.0;
    mdp.discount = discount;
    mdp.start_dist = {1.0, 0.0};
    mdp.reward_min = 0.0;
    mdp.reward_max = 1.0;
    return mdp;
}

/// Seeded random MDP with Dirichlet rows and rewards in [0, 1].
inline Mdp random_mdp(int n_states, int n_actions, double discount, std::uint64_t seed) {
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
    double start_sum = 0.0;
    for (int s = 0; s < n_states; ++s) {
        mdp.start_dist[s] = rng.next_double() + 1e-3;
        start_sum += mdp.start_dist[s];
    }
    for (int s = 0; s < n_states; ++s) mdp.start_dist[s] /= start_sum;
    mdp.discount = discount;
    mdp.reward_min = 0.0;
    mdp.reward_max = 1.0;
    return mdp;
}

inline PolicyParams random_logits(int n_states, int n_actions, std::uint64_t seed,
                                  double magnitude = 2.0) {
    PolicyParams params = PolicyParams::zeros(n_states, n_actions);
    SplitMix64 rng(seed);
    for (double& logit : params.logits) logit = rng.next_uniform(-magnitude, magnitude);
    return params;
}

/// Brute-force truncated Bellman rollup: expected discounted return summed
/// over a horizon long enough that the tail is below `tail_bound`.
/// Independent of the linear-solve evaluation path.
inline double truncated_return_oracle(const Mdp& mdp, const PolicyParams& params,
                                      double tail_bound = 1e-9) {
    const std::vector<double> pi = softmax_policy(params);
    const int n = mdp.n_states;
    const int m = mdp.n_actions;
    const double r_max = std::max(std::abs(mdp.reward_min), std::abs(mdp.reward_max));
    std::vector<double> dist = mdp.start_dist;
    std::vector<double> next(n);
    double total = 0.0;
    double scale = 1.0; // discount^t
    for (int t = 0;; ++t) {
        if (mdp.discount > 0.0 && scale * r_max / (1.0 - mdp.discount) < tail_bound) break;
        double step_reward = 0.0;
        std::fill(next.begin(), next.end(), 0.0);
        for (int s = 0; s < n; ++s) {
            if (dist[s] == 0.0) continue;
            for (int a = 0; a < m; ++a) {
                const double w = dist[s] * pi[static_cast<std::size_t>(s) * m + a];
                step_reward += w * mdp.reward(s, a);
                for (int s2 = 0; s2 < n; ++s2) next[s2] += w * mdp.transition(s, a, s2);
            }
        }
        total += scale * step_reward;
        dist.swap(next);
        scale *= mdp.discount;
        if (mdp.discount == 0.0) break;
    }
    return total;
}

inline double sup_norm(const std::vector<double>& v) {
    double best = 0.0;
    for (double x : v) best = std::max(best, std::abs(x));
    return best;
}

inline double sup_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double best = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) best = std::max(best, std::abs(a[i] - b[i]));
    return best;
}

} // namespace metabound::test
