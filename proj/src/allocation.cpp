#include "pcm/allocation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace pcm {

void PhaseStats::validate() const {
    if (counts.empty()) throw InvalidInput("phase stats are empty");
    if (counts.size() != variances.size()) throw InvalidInput("counts and variances differ in length");
    if (!(budget > 0.0)) throw InvalidInput("budget must be positive");
    for (std::size_t c = 0; c < counts.size(); ++c) {
        if (!(counts[c] >= 0.0) || !(variances[c] >= 0.0)) {
            throw InvalidInput("phase counts and variances must be nonnegative");
        }
    }
}

namespace {

std::vector<double> neyman_weights(const PhaseStats& stats) {
    std::vector<double> w(stats.phases());
    for (std::size_t c = 0; c < w.size(); ++c) w[c] = stats.counts[c] * std::sqrt(stats.variances[c]);
    return w;
}

double checked_weight_sum(const std::vector<double>& w) {
    const double sum = std::accumulate(w.begin(), w.end(), 0.0);
    if (!(sum > 0.0)) throw DegenerateInput("every phase has N_c * sqrt(V_c) = 0");
    return sum;
}

} // namespace

std::vector<double> neyman_allocation(const PhaseStats& stats) {
    stats.validate();
    auto w = neyman_weights(stats);
    const double sum = checked_weight_sum(w);
    for (double& x : w) x = stats.budget * x / sum;
    return w;
}

double estimator_variance(const PhaseStats& stats, std::span<const double> budgets) {
    stats.validate();
    if (budgets.size() != stats.phases()) throw InvalidInput("allocation length does not match phase count");
    double total = 0.0;
    for (std::size_t c = 0; c < budgets.size(); ++c) {
        const double num = stats.counts[c] * stats.counts[c] * stats.variances[c];
        if (num == 0.0) continue;
        if (!(budgets[c] > 0.0)) return std::numeric_limits<double>::infinity();
        total += num / budgets[c];
    }
    return total;
}

double min_variance(const PhaseStats& stats) {
    stats.validate();
    const auto w = neyman_weights(stats);
    const double sum = std::accumulate(w.begin(), w.end(), 0.0);
    return sum * sum / stats.budget;
}

double speedup_ratio(const PhaseStats& stats) {
    stats.validate();
    const auto w = neyman_weights(stats);
    const double sum = checked_weight_sum(w);
    double sq = 0.0;
    for (double x : w) sq += x * x;
    return static_cast<double>(stats.phases()) * sq / (sum * sum);
}

double bias_bound(std::span<const double> keep, std::span<const double> grad_norms) {
    if (keep.size() != grad_norms.size()) throw InvalidInput("keep probabilities and gradient norms differ in length");
    double total = 0.0;
    for (std::size_t c = 0; c < keep.size(); ++c) {
        if (!(keep[c] >= 0.0 && keep[c] <= 1.0)) throw InvalidInput("keep probability outside [0,1]");
        if (!(grad_norms[c] >= 0.0)) throw InvalidInput("gradient norm must be nonnegative");
        total += (1.0 - keep[c]) * grad_norms[c];
    }
    return total;
}

Eigen::VectorXd ratio_estimator(std::span<const Eigen::VectorXd> samples, double phase_count) {
    if (samples.empty()) throw InvalidInput("ratio estimator needs at least one sample");
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(samples.front().size());
    for (const auto& s : samples) sum += s;
    return (phase_count / static_cast<double>(samples.size())) * sum;
}

std::vector<long> integer_allocation(std::span<const double> budgets) {
    const double total = std::accumulate(budgets.begin(), budgets.end(), 0.0);
    const long target = std::lround(total);

    std::vector<long> out(budgets.size());
    std::vector<std::size_t> order(budgets.size());
    long assigned = 0;
    for (std::size_t c = 0; c < budgets.size(); ++c) {
        out[c] = static_cast<long>(std::floor(budgets[c]));
        assigned += out[c];
        order[c] = c;
    }
    // Ties go to the lower phase index.
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return budgets[a] - std::floor(budgets[a]) > budgets[b] - std::floor(budgets[b]);
    });
    for (std::size_t i = 0; assigned < target && i < order.size(); ++i, ++assigned) ++out[order[i]];
    return out;
}

AllocationPlan plan_allocation(const PhaseStats& stats) {
    AllocationPlan plan;
    plan.budgets = neyman_allocation(stats);
    plan.variance = estimator_variance(stats, plan.budgets);
    plan.min_variance = min_variance(stats);
    const std::vector<double> uniform(stats.phases(), stats.budget / static_cast<double>(stats.phases()));
    plan.uniform_variance = estimator_variance(stats, uniform);
    plan.speedup = speedup_ratio(stats);
    return plan;
}

} // namespace pcm
