#include "pcm/phase_labeling.hpp"

#include <algorithm>
#include <numeric>

namespace pcm {

Phase parse_phase(std::string_view name) {
    for (Phase p : kAllPhases) {
        if (phase_name(p) == name) return p;
    }
    throw InvalidInput("unknown phase name: " + std::string(name));
}

void LabelingConfig::validate() const {
    if (!(0.0 <= pre_grasp_low && pre_grasp_low < active_grip && active_grip <= sustained_close &&
          sustained_close <= 1.0)) {
        throw InvalidInput("labeling thresholds must satisfy 0 <= pre_grasp_low < active_grip <= "
                           "sustained_close <= 1");
    }
    if (window < 1) throw InvalidInput("labeling window must be >= 1");
}

std::vector<double> gripper_close_fraction(const GripperTrace& trace) {
    if (trace.close.empty()) throw InvalidInput("gripper trace is empty");
    if (trace.chunk_len == 0) throw InvalidInput("chunk length must be positive");
    for (double g : trace.close) {
        if (!(g >= 0.0 && g <= 1.0)) throw InvalidInput("gripper commands must lie in [0,1]");
    }

    const std::size_t n = trace.chunk_count();
    std::vector<double> out;
    out.reserve(n);
    for (std::size_t j = 0; j < n; ++j) {
        const auto first = trace.close.begin() + static_cast<std::ptrdiff_t>(j * trace.chunk_len);
        const auto last = trace.close.begin() +
                          static_cast<std::ptrdiff_t>(std::min(trace.close.size(), (j + 1) * trace.chunk_len));
        const double sum = std::accumulate(first, last, 0.0);
        out.push_back(sum / static_cast<double>(last - first));
    }
    return out;
}

std::vector<Interval> find_sustained_intervals(std::span<const double> fractions, double tau) {
    std::vector<Interval> out;
    std::size_t j = 0;
    while (j < fractions.size()) {
        if (fractions[j] < tau) {
            ++j;
            continue;
        }
        std::size_t end = j;
        while (end + 1 < fractions.size() && fractions[end + 1] >= tau) ++end;
        out.push_back({j, end});
        j = end + 1;
    }
    return out;
}

std::vector<Phase> label_phases(std::span<const double> fractions, const LabelingConfig& cfg) {
    cfg.validate();
    const std::size_t n = fractions.size();
    std::vector<Phase> labels(n, Phase::Approach);

    // Lower enum value wins.
    auto offer = [&](std::size_t j, Phase p) {
        if (index_of(p) < index_of(labels[j])) labels[j] = p;
    };

    const auto intervals = find_sustained_intervals(fractions, cfg.sustained_close);
    for (const auto& iv : intervals) {
        const std::size_t lo = iv.start >= cfg.window ? iv.start - cfg.window : 0;
        for (std::size_t j = lo; j < iv.start; ++j) {
            if (fractions[j] >= cfg.pre_grasp_low && fractions[j] < cfg.active_grip) offer(j, Phase::PreGrasp);
        }
        for (std::size_t j = iv.end + 1; j <= iv.end + cfg.window && j < n; ++j) {
            if (fractions[j] < cfg.active_grip) offer(j, Phase::ReleaseRamp);
        }
    }

    // Approach is the default, so Tail only replaces it; anything with a
    // higher-priority label keeps it.
    if (!intervals.empty()) {
        for (std::size_t j = intervals.back().end + cfg.window + 1; j < n; ++j) {
            if (fractions[j] < cfg.pre_grasp_low && labels[j] == Phase::Approach) labels[j] = Phase::Tail;
        }
    }

    for (std::size_t j = 0; j < n; ++j) {
        if (fractions[j] >= cfg.active_grip) labels[j] = Phase::ActiveGrip;
    }
    return labels;
}

std::vector<Phase> label_trace(const GripperTrace& trace, const LabelingConfig& cfg) {
    const auto fractions = gripper_close_fraction(trace);
    return label_phases(fractions, cfg);
}

} // namespace pcm
