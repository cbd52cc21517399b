#pragma once

// Gripper-driven phase labeling for chunked manipulation trajectories.
//
// Every chunk gets a gripper-close fraction g_f in [0,1]. Runs of chunks with
// g_f >= sustained_close form grasp intervals; the remaining labels are placed
// relative to those intervals and resolved by Phase priority. Labels depend on
// g_f only, so success and failure rollouts share one partition.

#include <cstddef>
#include <span>
#include <vector>

#include "pcm/common.hpp"

namespace pcm {

struct LabelingConfig {
    double sustained_close = 0.75; ///< start of a grasp interval
    double active_grip = 0.5;      ///< soft closure threshold for ActiveGrip
    double pre_grasp_low = 0.1;    ///< lower edge of the pre-grasp band; also the Tail ceiling
    std::size_t window = 3;        ///< chunks scanned before/after each interval

    /// Throws InvalidInput unless 0 <= pre_grasp_low < active_grip <= sustained_close <= 1
    /// and window >= 1.
    void validate() const;
};

struct GripperTrace {
    std::vector<double> close; ///< per-timestep close command in [0,1]
    std::size_t chunk_len = 8;

    std::size_t chunk_count() const { return (close.size() + chunk_len - 1) / chunk_len; }
};

/// Inclusive chunk-index range.
struct Interval {
    std::size_t start;
    std::size_t end;

    friend bool operator==(const Interval&, const Interval&) = default;
};

/// Mean close command per chunk; a trailing partial chunk averages over the
/// timesteps it actually has.
std::vector<double> gripper_close_fraction(const GripperTrace& trace);

/// Maximal runs of chunks with fraction >= tau, increasing and non-overlapping.
std::vector<Interval> find_sustained_intervals(std::span<const double> fractions, double tau);

std::vector<Phase> label_phases(std::span<const double> fractions, const LabelingConfig& cfg = {});

/// Convenience: fractions + labels straight from a trace.
std::vector<Phase> label_trace(const GripperTrace& trace, const LabelingConfig& cfg = {});

} // namespace pcm
