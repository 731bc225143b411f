#pragma once

#include "metabound/mdp.hpp"
#include "metabound/task_space.hpp"

#include <cstdint>
#include <utility>
#include <vector>

namespace metabound {

/// Provenance attached to a gap measurement: the family knob and seed that
/// produced the returns, plus what is needed to bound the return range
/// (reward range and discount).
struct GapContext {
    double sigma = 0.0;
    std::uint64_t seed = 0;
    std::pair<double, double> reward_range{0.0, 1.0};
    double discount = 0.0;
    double confidence = 0.95;
};

/// Measured generalization statistics for one train/test split.
/// epsilon_gen_signed is mean test return minus mean train return; the
/// absolute value is what the scaling fits consume.
struct GapReport {
    int n_train = 0;
    double mean_train_return = 0.0;
    double mean_test_return = 0.0;
    double epsilon_gen_signed = 0.0;
    double epsilon_gen_abs = 0.0;
    double hoeffding_radius_test = 0.0;
    double sigma = 0.0;
    std::uint64_t seed = 0;
};

enum class IntervalMethod { hoeffding, empirical_bernstein };

struct ConcentrationInterval {
    double center = 0.0;
    double radius = 0.0;
    double confidence = 0.0;
    IntervalMethod method = IntervalMethod::hoeffding;
};

struct BoundGridRow {
    int n_train = 0;
    double mean_gap = 0.0;
    double std_gap = 0.0;
    int n_seeds = 0;
};

/// Fitted scaling law for the gap-vs-N grid: log(mean_gap) = intercept +
/// exponent * log(N), plus the least-squares constant k in
/// gap ~ k * sqrt(complexity * ln N / N).
struct BoundFit {
    std::vector<BoundGridRow> grid; // ascending distinct N
    double fitted_exponent = 0.0;
    double fitted_intercept = 0.0;
    double r_squared = 0.0;
    double constant_k = 0.0;
};

/// Means of both lists, the signed gap (test minus train), its absolute
/// value, and a Hoeffding radius for the test mean at the context's
/// confidence using the return range (reward span / (1 - discount)).
GapReport generalization_gap(const std::vector<double>& train_returns,
                             const std::vector<double>& test_returns,
                             const GapContext& context);

/**
Mean over tasks of L(task, optimal policy) - L(task, params), with the
optimal policy from value_iteration evaluated exactly. Nonpositive up to
solver tolerance, since the optimal policy minimizes L; negate for regret.
*/
double suboptimality_gap(const TaskSet& tasks, const PolicyParams& params);

/// Two-sided Hoeffding interval: radius = range * sqrt(ln(2/(1-conf))/(2n)).
ConcentrationInterval hoeffding_interval(const std::vector<double>& samples,
                                         double range_width, double confidence);

/// Empirical Bernstein interval (Maurer-Pontil): radius =
/// sqrt(2 V ln(3/(1-conf)) / n) + 3 range ln(3/(1-conf)) / n with V the
/// unbiased sample variance. Needs n >= 2.
ConcentrationInterval bernstein_interval(const std::vector<double>& samples,
                                         double range_width, double confidence);

/**
Monte-Carlo estimate of the empirical Rademacher complexity of the
hypothesis columns of `loss_matrix` (samples x hypotheses): the expected
max over hypotheses of (1/n) sum_i sign_i * loss[i][h] under uniform
random signs. Deterministic given the seed.
*/
double empirical_rademacher(const std::vector<std::vector<double>>& loss_matrix,
                            int n_sign_draws, std::uint64_t seed);

/**
Log-log least-squares fit of mean gap against N over >= 3 distinct grid
points. Every gap value is floored at 1e-9 first so degenerate (sigma = 0)
grids stay loggable. `complexity` feeds the constant_k model; complexity 0
yields constant_k = 0.
*/
BoundFit fit_bound_scaling(const std::vector<std::pair<int, std::vector<double>>>& grid_rows,
                           double complexity);

} // namespace metabound
