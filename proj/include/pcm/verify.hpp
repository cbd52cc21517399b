#pragma once

// Runtime theory checks behind `pcm verify`. Each check compares a library
// routine against an independent route (enumeration, brute force, Monte
// Carlo or finite differences) and reports pass/fail with its numbers.

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace pcm {

enum class InjectedFault {
    None,
    /// Ratio estimator without the N_c / b_c factor.
    DropRatioScale,
};

struct VerifyOptions {
    std::uint64_t seed = 2024;
    std::size_t budget = 12;
    InjectedFault fault = InjectedFault::None;

    void validate() const;
};

struct CheckResult {
    std::string name;
    bool passed = false;
    nlohmann::json detail;
};

struct VerifyReport {
    std::vector<CheckResult> checks;
    bool passed() const;
    nlohmann::json to_json() const;
};

VerifyReport run_verification(const VerifyOptions& options = {});

// Individual checks, exposed for the tests.
CheckResult check_neyman_optimality(std::uint64_t seed, std::size_t instances = 100);
CheckResult check_speedup_ratio(std::uint64_t seed, std::size_t instances = 10000);
CheckResult check_ratio_unbiased_exact(InjectedFault fault);
CheckResult check_ratio_unbiased_monte_carlo(std::uint64_t seed, InjectedFault fault, std::size_t draws = 100000);
CheckResult check_bias_bound(std::uint64_t seed, std::size_t budget, std::size_t draws = 10000);
CheckResult check_gradient_finite_differences(std::uint64_t seed, std::size_t instances = 100);
CheckResult check_sampling_inclusion(std::uint64_t seed, std::size_t draws = 1000000);
CheckResult check_proxy_lower_bound(std::uint64_t seed);

/// Exact minimum of sum N^2 V / b over the grid {b : b_c = j_c * step, sum b = B}
/// by greedy marginal allocation (exact for separable convex objectives).
double grid_min_variance(const std::vector<double>& counts, const std::vector<double>& variances, double budget,
                         double step);

/// Inclusion probability of every index under sequential draws proportional
/// to the remaining weights, by enumerating all ordered draws.
std::vector<double> enumerate_inclusion(const std::vector<double>& weights, std::size_t m);

} // namespace pcm
