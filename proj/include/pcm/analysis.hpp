#pragma once

// Offline analysis of recorded rollouts: phase scores per task group, the
// resulting keep-probability table and sampled masks, and the cumulative
// score-capture curve used to pick a chunk budget.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "pcm/masking.hpp"
#include "pcm/signal.hpp"
#include "pcm/trace.hpp"

namespace pcm {

struct AnalysisConfig {
    std::size_t budget = 12;
    double p_min = 0.1;
    std::uint64_t seed = 0;
    LabelingConfig labeling{};
};

struct GroupAnalysis {
    int task_id = 0;
    std::size_t trajectories = 0;
    std::optional<std::string> skipped; ///< reason, when the group carries no signal
    PhaseScoreReport scores;
    std::vector<SelectionMask> masks;
};

struct AnalysisReport {
    std::vector<GroupAnalysis> groups;
    std::optional<PhaseArray<double>> keep; ///< from all informative groups
    PhaseArray<std::optional<double>> mean_score{};
    std::vector<TraceError> errors;
};

/// Groups records by task, scores each group, builds one keep table from all
/// scored groups and samples a mask per trajectory with it.
AnalysisReport analyze(std::span<const TraceRecord> records, const AnalysisConfig& config = {});

nlohmann::json to_json(const AnalysisReport& report);

struct BudgetCurve {
    std::vector<double> fraction; ///< chunks retained / total, starting at 0
    std::vector<double> captured; ///< cumulative score share, starting at 0
    double knee_fraction = 1.0;
    std::size_t knee_index = 0;   ///< number of chunks at the knee
    bool concentrated = false;    ///< false when the curve never rises above the diagonal
};

/// Cumulative share of `scores` captured by the top-j chunks, j = 0..n.
/// Throws DegenerateInput when all scores are zero.
BudgetCurve cumulative_capture(std::vector<double> scores);

/// Index of maximum height above the diagonal. A curve that never rises
/// above it reports the full budget.
void locate_knee(BudgetCurve& curve);

struct BudgetSweep {
    BudgetCurve curve;
    double chunks_per_trajectory = 0.0;
    double knee_budget = 0.0; ///< knee fraction times chunks per trajectory
    PhaseArray<double> phase_score{};
};

/// Chunks ranked by their phase's mean C_c across informative groups.
BudgetSweep sweep_budget(std::span<const TraceRecord> records, const LabelingConfig& labeling = {});

nlohmann::json to_json(const BudgetSweep& sweep);

} // namespace pcm
