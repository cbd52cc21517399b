#pragma once

// Neyman allocation of a chunk budget across phases, and the quantities used
// to check it: stratified estimator variance, its closed-form minimum, the
// speedup over uniform allocation, and the masked-estimator bias bound.

#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "pcm/common.hpp"

namespace pcm {

/// Expected chunk count N_c and per-chunk gradient variance V_c for each
/// phase, plus the total budget B. Any number of phases is accepted.
struct PhaseStats {
    std::vector<double> counts;
    std::vector<double> variances;
    double budget = 1.0;

    std::size_t phases() const { return counts.size(); }
    void validate() const;
};

struct AllocationPlan {
    std::vector<double> budgets;
    double variance = 0.0;     ///< estimator variance at `budgets`
    double min_variance = 0.0; ///< (sum N sqrt V)^2 / B
    double uniform_variance = 0.0;
    double speedup = 1.0;
    std::optional<double> bias_bound;
};

/// b_c = B * N_c sqrt(V_c) / sum N sqrt V. Throws DegenerateInput when every
/// N_c sqrt(V_c) is zero.
std::vector<double> neyman_allocation(const PhaseStats& stats);

/// sum_c N_c^2 V_c / b_c. Returns +inf when some b_c = 0 while N_c^2 V_c > 0;
/// terms with N_c^2 V_c = 0 contribute nothing.
double estimator_variance(const PhaseStats& stats, std::span<const double> budgets);

double min_variance(const PhaseStats& stats);

/// K sum N^2 V / (sum N sqrt V)^2 with K = number of phases; always >= 1.
double speedup_ratio(const PhaseStats& stats);

/// sum_c (1 - p_c) ||g_c||.
double bias_bound(std::span<const double> keep, std::span<const double> grad_norms);

/// (N_c / b_c) * sum of the sampled score terms, b_c = samples.size().
Eigen::VectorXd ratio_estimator(std::span<const Eigen::VectorXd> samples, double phase_count);

/// Largest-remainder rounding of a fractional allocation to integers summing
/// to round(sum(budgets)).
std::vector<long> integer_allocation(std::span<const double> budgets);

AllocationPlan plan_allocation(const PhaseStats& stats);

} // namespace pcm
