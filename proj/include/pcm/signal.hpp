#pragma once

// Success-failure action variance per phase and the buffered keep-probability
// table derived from it.

#include <optional>
#include <vector>

#include "pcm/common.hpp"
#include "pcm/grpo_core.hpp"

namespace pcm {

struct PhaseScoreReport {
    /// True when every reward in the group is equal; no scores are produced
    /// and the caller must leave its buffers untouched.
    bool group_skipped = false;
    /// C_c, present only for phases seen in both outcome groups.
    PhaseArray<std::optional<double>> score{};
    PhaseArray<std::size_t> success_chunks{};
    PhaseArray<std::size_t> failure_chunks{};

    bool phase_skipped(Phase p) const { return !score[index_of(p)].has_value(); }
};

/// Pools every timestep's action vector by (phase, outcome) and reports the
/// Euclidean distance between success and failure means. A reward counts as
/// success when it is >= 0.5.
PhaseScoreReport compute_phase_scores(const RolloutGroup& group);

/// Per-phase score buffers and the frozen keep-probability table.
class PhaseScoreState {
public:
    explicit PhaseScoreState(std::size_t refresh_window = 5, double p_min = 0.1);

    std::size_t refresh_window() const { return refresh_window_; }
    double p_min() const { return p_min_; }

    /// Appends each scored phase's C_c. Skipped groups are ignored entirely.
    void append(const PhaseScoreReport& report);

    /// First batch, or the buffer window has filled.
    bool refresh_due() const { return !initialized_ || steps_since_refresh_ >= refresh_window_; }

    /// Collapses buffers into max-normalized, floored keep probabilities and
    /// clears them. An all-zero score sum keeps the previous table.
    void refresh();

    bool initialized() const { return initialized_; }
    std::size_t steps_since_refresh() const { return steps_since_refresh_; }
    const PhaseArray<std::vector<double>>& buffers() const { return buffers_; }

    /// Throws std::logic_error before the first refresh.
    const PhaseArray<double>& keep_probabilities() const;

private:
    std::size_t refresh_window_;
    double p_min_;
    PhaseArray<std::vector<double>> buffers_{};
    PhaseArray<double> keep_{};
    std::size_t steps_since_refresh_ = 0;
    bool initialized_ = false;
};

/// The share/max normalization and floor applied at refresh, exposed for
/// callers that already hold summed scores. Returns nullopt when every sum is
/// zero.
std::optional<PhaseArray<double>> keep_probabilities_from_sums(const PhaseArray<double>& sums, double p_min);

} // namespace pcm
