#include "metabound/bounds.hpp"

#include "metabound/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>

namespace metabound {

namespace {

constexpr double kGapFloor = 1e-9;

double mean_of(const std::vector<double>& values) {
    return std::accumulate(values.begin(), values.end(), 0.0) /
           static_cast<double>(values.size());
}

double sample_variance(const std::vector<double>& values) {
    const double mean = mean_of(values);
    double acc = 0.0;
    for (double v : values) acc += (v - mean) * (v - mean);
    return acc / static_cast<double>(values.size() - 1);
}

void check_confidence(double confidence) {
    if (!(confidence > 0.0 && confidence < 1.0))
        throw std::invalid_argument("confidence must be in (0,1)");
}

} // namespace

GapReport generalization_gap(const std::vector<double>& train_returns,
                             const std::vector<double>& test_returns,
                             const GapContext& context) {
    if (train_returns.empty() || test_returns.empty())
        throw std::invalid_argument("generalization_gap needs nonempty return lists");

    GapReport report;
    report.n_train = static_cast<int>(train_returns.size());
    report.mean_train_return = mean_of(train_returns);
    report.mean_test_return = mean_of(test_returns);
    report.epsilon_gen_signed = report.mean_test_return - report.mean_train_return;
    report.epsilon_gen_abs = std::abs(report.epsilon_gen_signed);
    report.sigma = context.sigma;
    report.seed = context.seed;

    const double return_range =
        (context.reward_range.second - context.reward_range.first) / (1.0 - context.discount);
    report.hoeffding_radius_test =
        hoeffding_interval(test_returns, return_range, context.confidence).radius;
    return report;
}

double suboptimality_gap(const TaskSet& tasks, const PolicyParams& params) {
    if (tasks.tasks.empty())
        throw std::invalid_argument("suboptimality_gap needs at least one task");
    double acc = 0.0;
    for (const auto& [index, task] : tasks.tasks) {
        const ValueIterationResult vi = value_iteration(task, 1e-10);
        const double optimal_loss =
            evaluate_deterministic(task, vi.greedy_policy).loss_value;
        const double policy_loss = exact_policy_return(task, params).loss_value;
        acc += optimal_loss - policy_loss;
    }
    return acc / static_cast<double>(tasks.tasks.size());
}

ConcentrationInterval hoeffding_interval(const std::vector<double>& samples,
                                         double range_width, double confidence) {
    if (samples.empty()) throw std::invalid_argument("hoeffding_interval needs n >= 1");
    if (!(range_width > 0.0))
        throw std::invalid_argument("range_width must be > 0 (degenerate range)");
    check_confidence(confidence);
    const double n = static_cast<double>(samples.size());
    ConcentrationInterval interval;
    interval.center = mean_of(samples);
    interval.radius = range_width * std::sqrt(std::log(2.0 / (1.0 - confidence)) / (2.0 * n));
    interval.confidence = confidence;
    interval.method = IntervalMethod::hoeffding;
    return interval;
}

ConcentrationInterval bernstein_interval(const std::vector<double>& samples,
                                         double range_width, double confidence) {
    if (samples.size() < 2) throw std::invalid_argument("bernstein_interval needs n >= 2");
    if (!(range_width > 0.0))
        throw std::invalid_argument("range_width must be > 0 (degenerate range)");
    check_confidence(confidence);
    const double n = static_cast<double>(samples.size());
    const double log_term = std::log(3.0 / (1.0 - confidence));
    ConcentrationInterval interval;
    interval.center = mean_of(samples);
    interval.radius = std::sqrt(2.0 * sample_variance(samples) * log_term / n) +
                      3.0 * range_width * log_term / n;
    interval.confidence = confidence;
    interval.method = IntervalMethod::empirical_bernstein;
    return interval;
}

double empirical_rademacher(const std::vector<std::vector<double>>& loss_matrix,
                            int n_sign_draws, std::uint64_t seed) {
    if (loss_matrix.empty() || loss_matrix.front().empty())
        throw std::invalid_argument("empirical_rademacher needs a nonempty loss matrix");
    if (n_sign_draws < 1) throw std::invalid_argument("n_sign_draws must be >= 1");
    const std::size_t n_samples = loss_matrix.size();
    const std::size_t n_hypotheses = loss_matrix.front().size();
    for (const auto& row : loss_matrix)
        if (row.size() != n_hypotheses)
            throw std::invalid_argument("loss matrix rows must have equal length");

    SplitMix64 rng(seed);
    std::vector<double> signs(n_samples);
    double acc = 0.0;
    for (int draw = 0; draw < n_sign_draws; ++draw) {
        for (std::size_t i = 0; i < n_samples; ++i)
            signs[i] = (rng.next_u64() >> 63) ? 1.0 : -1.0;
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t h = 0; h < n_hypotheses; ++h) {
            double corr = 0.0;
            for (std::size_t i = 0; i < n_samples; ++i) corr += signs[i] * loss_matrix[i][h];
            best = std::max(best, corr / static_cast<double>(n_samples));
        }
        acc += best;
    }
    return acc / static_cast<double>(n_sign_draws);
}

BoundFit fit_bound_scaling(const std::vector<std::pair<int, std::vector<double>>>& grid_rows,
                           double complexity) {
    // Aggregate and order by N, rejecting duplicates.
    std::map<int, std::vector<double>> by_n;
    for (const auto& [n, gaps] : grid_rows) {
        if (n < 1) throw std::invalid_argument("grid N values must be >= 1");
        if (gaps.empty()) throw std::invalid_argument("grid rows need at least one gap value");
        if (!by_n.emplace(n, gaps).second)
            throw std::invalid_argument("duplicate N value in scaling grid");
    }
    if (by_n.size() < 3)
        throw std::invalid_argument("fit_bound_scaling needs at least 3 distinct N values");

    BoundFit fit;
    for (const auto& [n, gaps] : by_n) {
        std::vector<double> floored = gaps;
        for (double& g : floored) g = std::max(g, kGapFloor);
        BoundGridRow row;
        row.n_train = n;
        row.n_seeds = static_cast<int>(floored.size());
        row.mean_gap = mean_of(floored);
        row.std_gap = floored.size() > 1 ? std::sqrt(sample_variance(floored)) : 0.0;
        fit.grid.push_back(row);
    }

    const int points = static_cast<int>(fit.grid.size());
    double mx = 0.0, my = 0.0;
    std::vector<double> xs(points), ys(points);
    for (int i = 0; i < points; ++i) {
        xs[i] = std::log(static_cast<double>(fit.grid[i].n_train));
        ys[i] = std::log(fit.grid[i].mean_gap);
        mx += xs[i];
        my += ys[i];
    }
    mx /= points;
    my /= points;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (int i = 0; i < points; ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
        syy += (ys[i] - my) * (ys[i] - my);
    }
    if (sxx == 0.0) throw std::invalid_argument("scaling grid needs distinct N values");
    fit.fitted_exponent = sxy / sxx;
    fit.fitted_intercept = my - fit.fitted_exponent * mx;
    fit.r_squared = syy == 0.0 ? 1.0 : (sxy * sxy) / (sxx * syy);

    // Least-squares scalar in gap ~ k * sqrt(complexity * ln N / N).
    double num = 0.0, den = 0.0;
    for (const BoundGridRow& row : fit.grid) {
        const double model =
            std::sqrt(complexity * std::log(static_cast<double>(row.n_train)) / row.n_train);
        num += model * row.mean_gap;
        den += model * model;
    }
    fit.constant_k = den > 0.0 ? num / den : 0.0;
    return fit;
}

} // namespace metabound
