#pragma once

// Line-delimited JSON trajectory records. One trajectory per line:
//
//   {"trajectory_id":3,"task_id":0,"reward":1,"chunk_len":8,"action_dim":2,
//    "gripper":[...T...],"observations":[[...],...N...],"actions":[...T*D...],
//    "phases":["approach",...]}            // "phases" optional
//
// Records sharing a task_id form one rollout group.

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "pcm/grpo_core.hpp"
#include "pcm/phase_labeling.hpp"

namespace pcm {

struct TraceRecord {
    int trajectory_id = 0;
    int task_id = 0;
    double reward = 0.0;
    std::size_t chunk_len = 8;
    std::size_t action_dim = 2;
    std::vector<double> gripper;
    std::vector<std::vector<double>> observations;
    std::vector<double> actions;
    std::optional<std::vector<Phase>> phases;

    std::size_t chunk_count() const { return (gripper.size() + chunk_len - 1) / chunk_len; }

    /// Throws InvalidInput when sizes disagree.
    void validate() const;
};

/// Parses one line. Throws InvalidInput with a description on failure.
TraceRecord parse_trace_line(const std::string& line);

std::string format_trace_line(const TraceRecord& record);

struct TraceError {
    std::size_t line = 0;
    std::string message;
};

struct TraceReadResult {
    std::vector<TraceRecord> records;
    std::vector<TraceError> errors;
};

/// Reads every non-blank line; malformed lines are collected, not fatal.
TraceReadResult read_traces(std::istream& in);

void write_traces(std::ostream& out, const std::vector<TraceRecord>& records);

/// Chunks the record, labeling from the gripper trace unless phases are given.
ChunkedTrajectory to_trajectory(const TraceRecord& record, const LabelingConfig& labeling = {});

TraceRecord to_record(const ChunkedTrajectory& traj, bool include_phases = true);

} // namespace pcm
