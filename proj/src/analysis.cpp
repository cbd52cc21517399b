#include "pcm/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>

namespace pcm {

using nlohmann::json;

namespace {

std::map<int, std::vector<ChunkedTrajectory>> group_by_task(std::span<const TraceRecord> records,
                                                            const LabelingConfig& labeling) {
    std::map<int, std::vector<ChunkedTrajectory>> groups;
    for (const auto& r : records) groups[r.task_id].push_back(to_trajectory(r, labeling));
    return groups;
}

json optional_phase_array(const PhaseArray<std::optional<double>>& values) {
    json j = json::object();
    for (Phase p : kAllPhases) {
        const auto& v = values[index_of(p)];
        j[std::string(phase_name(p))] = v ? json(*v) : json(nullptr);
    }
    return j;
}

} // namespace

AnalysisReport analyze(std::span<const TraceRecord> records, const AnalysisConfig& config) {
    if (config.budget == 0) throw InvalidInput("budget must be >= 1");
    AnalysisReport report;
    PhaseArray<double> score_sum{};
    PhaseArray<std::size_t> score_n{};

    std::vector<RolloutGroup> scored;
    for (auto& [task, trajs] : group_by_task(records, config.labeling)) {
        GroupAnalysis g;
        g.task_id = task;
        g.trajectories = trajs.size();
        if (trajs.size() < 2) {
            g.skipped = "group size < 2";
            report.groups.push_back(std::move(g));
            continue;
        }
        auto group = RolloutGroup::from(std::move(trajs));
        g.scores = compute_phase_scores(group);
        if (g.scores.group_skipped) {
            g.skipped = "zero reward variance";
        } else {
            for (std::size_t c = 0; c < kPhaseCount; ++c) {
                if (g.scores.score[c]) {
                    score_sum[c] += *g.scores.score[c];
                    ++score_n[c];
                }
            }
            scored.push_back(std::move(group));
        }
        report.groups.push_back(std::move(g));
    }

    // All groups form one buffer window.
    if (!scored.empty()) report.keep = keep_probabilities_from_sums(score_sum, config.p_min);
    for (std::size_t c = 0; c < kPhaseCount; ++c) {
        if (score_n[c] > 0) report.mean_score[c] = score_sum[c] / static_cast<double>(score_n[c]);
    }

    if (report.keep) {
        std::size_t s = 0;
        for (auto& g : report.groups) {
            if (g.skipped) continue;
            for (const auto& traj : scored[s].trajectories) {
                Rng rng = derive_stream(config.seed, static_cast<std::uint64_t>(traj.id),
                                        static_cast<std::uint64_t>(g.task_id));
                g.masks.push_back(sample_mask(traj, *report.keep, config.budget, rng));
            }
            ++s;
        }
    }
    return report;
}

json to_json(const AnalysisReport& report) {
    json j;
    j["groups"] = json::array();
    for (const auto& g : report.groups) {
        json jg;
        jg["task_id"] = g.task_id;
        jg["trajectories"] = g.trajectories;
        if (g.skipped) {
            jg["skipped"] = *g.skipped;
        } else {
            jg["scores"] = optional_phase_array(g.scores.score);
            json counts = json::object();
            for (Phase p : kAllPhases) {
                counts[std::string(phase_name(p))] = {{"success", g.scores.success_chunks[index_of(p)]},
                                                      {"failure", g.scores.failure_chunks[index_of(p)]}};
            }
            jg["chunk_counts"] = counts;
            jg["masks"] = json::array();
            for (const auto& m : g.masks) {
                jg["masks"].push_back({{"trajectory_id", m.trajectory}, {"budget", m.budget}, {"chunks", m.indices}});
            }
        }
        j["groups"].push_back(jg);
    }
    if (report.keep) {
        json keep = json::object();
        for (Phase p : kAllPhases) keep[std::string(phase_name(p))] = (*report.keep)[index_of(p)];
        j["keep_probabilities"] = keep;
    } else {
        j["keep_probabilities"] = nullptr;
    }
    j["mean_scores"] = optional_phase_array(report.mean_score);
    j["errors"] = json::array();
    for (const auto& e : report.errors) j["errors"].push_back({{"line", e.line}, {"message", e.message}});
    return j;
}

BudgetCurve cumulative_capture(std::vector<double> scores) {
    for (double s : scores) {
        if (!(s >= 0.0)) throw InvalidInput("chunk scores must be nonnegative");
    }
    const double total = std::accumulate(scores.begin(), scores.end(), 0.0);
    if (!(total > 0.0)) throw DegenerateInput("chunk scores sum to zero");
    std::sort(scores.begin(), scores.end(), std::greater<>());

    BudgetCurve curve;
    const double n = static_cast<double>(scores.size());
    curve.fraction.push_back(0.0);
    curve.captured.push_back(0.0);
    double run = 0.0;
    for (std::size_t j = 0; j < scores.size(); ++j) {
        run += scores[j];
        curve.fraction.push_back(static_cast<double>(j + 1) / n);
        curve.captured.push_back(run / total);
    }
    locate_knee(curve);
    return curve;
}

void locate_knee(BudgetCurve& curve) {
    double best = 0.0;
    std::size_t best_j = curve.fraction.empty() ? 0 : curve.fraction.size() - 1;
    for (std::size_t j = 0; j < curve.fraction.size(); ++j) {
        const double gap = curve.captured[j] - curve.fraction[j];
        if (gap > best + 1e-12) {
            best = gap;
            best_j = j;
        }
    }
    curve.concentrated = best > 1e-12;
    curve.knee_index = best_j;
    curve.knee_fraction = curve.fraction.empty() ? 1.0 : curve.fraction[best_j];
}

BudgetSweep sweep_budget(std::span<const TraceRecord> records, const LabelingConfig& labeling) {
    BudgetSweep sweep;
    PhaseArray<double> sum{};
    PhaseArray<std::size_t> n{};
    std::vector<Phase> all_phases;
    std::size_t trajectories = 0;

    for (auto& [task, trajs] : group_by_task(records, labeling)) {
        for (const auto& t : trajs) {
            for (const auto& c : t.chunks) all_phases.push_back(c.phase);
        }
        trajectories += trajs.size();
        if (trajs.size() < 2) continue;
        const auto report = compute_phase_scores(RolloutGroup::from(std::move(trajs)));
        if (report.group_skipped) continue;
        for (std::size_t c = 0; c < kPhaseCount; ++c) {
            if (report.score[c]) {
                sum[c] += *report.score[c];
                ++n[c];
            }
        }
    }
    if (trajectories == 0) throw InvalidInput("no trajectories to sweep");
    for (std::size_t c = 0; c < kPhaseCount; ++c) {
        sweep.phase_score[c] = n[c] ? sum[c] / static_cast<double>(n[c]) : 0.0;
    }

    std::vector<double> chunk_scores;
    chunk_scores.reserve(all_phases.size());
    for (Phase p : all_phases) chunk_scores.push_back(sweep.phase_score[index_of(p)]);
    sweep.curve = cumulative_capture(std::move(chunk_scores));
    sweep.chunks_per_trajectory = static_cast<double>(all_phases.size()) / static_cast<double>(trajectories);
    sweep.knee_budget = sweep.curve.knee_fraction * sweep.chunks_per_trajectory;
    return sweep;
}

json to_json(const BudgetSweep& sweep) {
    json j;
    json scores = json::object();
    for (Phase p : kAllPhases) scores[std::string(phase_name(p))] = sweep.phase_score[index_of(p)];
    j["phase_scores"] = scores;
    j["chunks_per_trajectory"] = sweep.chunks_per_trajectory;
    j["knee_fraction"] = sweep.curve.knee_fraction;
    j["knee_budget"] = sweep.knee_budget;
    j["concentrated"] = sweep.curve.concentrated;
    j["curve"] = json::array();
    for (std::size_t i = 0; i < sweep.curve.fraction.size(); ++i) {
        j["curve"].push_back({sweep.curve.fraction[i], sweep.curve.captured[i]});
    }
    return j;
}

} // namespace pcm
