#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string_view>
#include <vector>

#include "pcm/grpo_core.hpp"
#include "pcm/signal.hpp"
#include "pcm/toyworld.hpp"

namespace pcm {

enum class TrainMode { Pcm, Vanilla, RandomMask, FullMask };

std::string_view mode_name(TrainMode mode);
/// Accepts "pcm", "vanilla", "random-mask"/"random_mask", "full-mask"/"full_mask".
TrainMode parse_mode(std::string_view name);

struct TrainConfig {
    TrainMode mode = TrainMode::Pcm;
    std::size_t group_size = 10;
    std::size_t budget = 12;
    std::size_t refresh_window = 5;
    double p_min = 0.1;
    double learning_rate = 0.015;
    std::size_t steps = 300;
    std::uint64_t seed = 0;
    std::size_t seeds = 1;
    std::size_t eval_rollouts = 50;
    double advantage_eps = 1e-6;
    std::optional<double> clip_ratio;

    void validate() const;
};

struct StepMetrics {
    std::size_t step = 0;
    double success_rate = 0.0;     ///< greedy evaluation after this step's update
    double train_reward = 0.0;     ///< mean reward of the training group
    bool group_skipped = false;    ///< uniform rewards, no update
    std::size_t chunks_used = 0;   ///< chunks in the actor update
    std::size_t chunks_total = 0;  ///< chunks in the group
    std::size_t cumulative_chunks = 0;
    PhaseArray<double> allocation{}; ///< mean selected chunks per trajectory, per phase
    std::optional<PhaseArray<double>> keep;
    PhaseScoreReport scores;
};

struct TrainResult {
    std::vector<StepMetrics> steps;
    GaussianChunkPolicy policy;
};

/// Called before each step; may replace the task (used to move the critical
/// phases mid-run). The feature layout must stay the same.
using SpecSchedule = std::function<void(std::size_t step, ToyTaskSpec& spec)>;

/// Runs one seed (config.seed) of the GRPO loop on the toy task.
TrainResult train(const TrainConfig& config, const ToyTaskSpec& spec, const SpecSchedule& schedule = {});

/// Per-step averages over config.seeds consecutive seeds starting at config.seed.
struct AveragedStep {
    std::size_t step = 0;
    double success_rate = 0.0;
    double success_rate_ma5 = 0.0;
    double chunks_used = 0.0;
    double chunks_total = 0.0;
    PhaseArray<double> allocation{};
    PhaseArray<double> keep{}; ///< NaN where no seed has a table yet
};

std::vector<AveragedStep> train_seeds(const TrainConfig& config, const ToyTaskSpec& spec);

/// Mean success over the last `window` steps.
double final_success(const std::vector<AveragedStep>& curve, std::size_t window = 10);
double final_success(const std::vector<StepMetrics>& run, std::size_t window = 10);

void write_metrics_csv(std::ostream& out, const std::vector<AveragedStep>& curve);

} // namespace pcm
