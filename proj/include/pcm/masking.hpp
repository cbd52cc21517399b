#pragma once

// Fixed-budget chunk selection and physical shrinking of a rollout group.

#include <cstddef>
#include <span>
#include <vector>

#include "pcm/common.hpp"
#include "pcm/grpo_core.hpp"
#include "pcm/rng.hpp"

namespace pcm {

struct SelectionMask {
    int trajectory = 0;
    std::vector<std::size_t> indices; ///< sorted, unique, each < chunk count
    std::size_t budget = 0;           ///< min(B, N_i)
};

/// Draws min(m, N) distinct indices with the law of sequential draws
/// proportional to the remaining weights. Each index gets the key
/// Exp(1) / w and the m smallest keys win. Result is sorted.
/// Throws InvalidInput for nonpositive or non-finite weights.
std::vector<std::size_t> weighted_sample_without_replacement(std::span<const double> weights, std::size_t m,
                                                             Rng& rng);

/// w_k = p_{phase(k)}, clamped below at 1e-12.
std::vector<double> chunk_weights(std::span<const Phase> phases, const PhaseArray<double>& keep);
std::vector<double> chunk_weights(const ChunkedTrajectory& traj, const PhaseArray<double>& keep);

SelectionMask sample_mask(const ChunkedTrajectory& traj, const PhaseArray<double>& keep, std::size_t budget,
                          Rng& rng);

/// Keeps only the masked chunks. Every trajectory needs exactly one mask.
CompactedBatch shrink_batch(const RolloutGroup& group, std::span<const SelectionMask> masks);

/// Every chunk of the group, unmasked.
CompactedBatch full_batch(const RolloutGroup& group);

} // namespace pcm
