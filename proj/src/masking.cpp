#include "pcm/masking.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace pcm {

std::vector<std::size_t> weighted_sample_without_replacement(std::span<const double> weights, std::size_t m,
                                                             Rng& rng) {
    for (double w : weights) {
        if (!(w > 0.0) || !std::isfinite(w)) throw InvalidInput("sampling weights must be positive and finite");
    }
    const std::size_t n = weights.size();
    m = std::min(m, n);

    std::exponential_distribution<double> exp1(1.0);
    std::vector<double> keys(n);
    for (std::size_t k = 0; k < n; ++k) keys[k] = exp1(rng) / weights[k];

    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(m), idx.end(),
                     [&](std::size_t a, std::size_t b) { return keys[a] < keys[b]; });
    idx.resize(m);
    std::sort(idx.begin(), idx.end());
    return idx;
}

std::vector<double> chunk_weights(std::span<const Phase> phases, const PhaseArray<double>& keep) {
    std::vector<double> w;
    w.reserve(phases.size());
    for (Phase p : phases) w.push_back(std::max(keep[index_of(p)], 1e-12));
    return w;
}

std::vector<double> chunk_weights(const ChunkedTrajectory& traj, const PhaseArray<double>& keep) {
    std::vector<Phase> phases;
    phases.reserve(traj.chunks.size());
    for (const auto& c : traj.chunks) phases.push_back(c.phase);
    return chunk_weights(phases, keep);
}

SelectionMask sample_mask(const ChunkedTrajectory& traj, const PhaseArray<double>& keep, std::size_t budget,
                          Rng& rng) {
    if (budget == 0) throw InvalidInput("chunk budget must be >= 1");
    const auto w = chunk_weights(traj, keep);
    SelectionMask mask;
    mask.trajectory = traj.id;
    mask.budget = std::min(budget, traj.chunks.size());
    mask.indices = weighted_sample_without_replacement(w, budget, rng);
    return mask;
}

CompactedBatch shrink_batch(const RolloutGroup& group, std::span<const SelectionMask> masks) {
    if (masks.empty()) throw InvalidInput("no selection masks given");
    if (masks.size() != group.size()) throw InvalidInput("need exactly one mask per trajectory");

    CompactedBatch out;
    out.group_size = group.size();
    std::vector<bool> seen(group.size(), false);
    for (const auto& mask : masks) {
        const auto it = std::find_if(group.trajectories.begin(), group.trajectories.end(),
                                     [&](const auto& t) { return t.id == mask.trajectory; });
        if (it == group.trajectories.end()) throw InvalidInput("mask references an unknown trajectory");
        const auto i = static_cast<std::size_t>(it - group.trajectories.begin());
        if (seen[i]) throw InvalidInput("trajectory masked twice");
        seen[i] = true;

        for (std::size_t k : mask.indices) {
            if (k >= it->chunks.size()) throw InvalidInput("mask references an out-of-range chunk");
            out.chunks.push_back({it->id, k, it->chunks[k].phase, group.advantages.at(i), it->chunks[k]});
        }
    }
    return out;
}

CompactedBatch full_batch(const RolloutGroup& group) {
    CompactedBatch out;
    out.group_size = group.size();
    for (std::size_t i = 0; i < group.size(); ++i) {
        const auto& t = group.trajectories[i];
        for (std::size_t k = 0; k < t.chunks.size(); ++k) {
            out.chunks.push_back({t.id, k, t.chunks[k].phase, group.advantages.at(i), t.chunks[k]});
        }
    }
    return out;
}

} // namespace pcm
