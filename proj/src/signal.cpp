#include "pcm/signal.hpp"

#include <algorithm>
#include <numeric>

namespace pcm {

PhaseScoreReport compute_phase_scores(const RolloutGroup& group) {
    PhaseScoreReport report;
    if (group.size() < 2 || !group.has_reward_variance()) {
        report.group_skipped = true;
        return report;
    }

    const std::size_t dim = group.trajectories.front().action_dim;
    PhaseArray<Eigen::VectorXd> success_sum, failure_sum;
    PhaseArray<std::size_t> success_steps{}, failure_steps{};
    for (Phase p : kAllPhases) {
        success_sum[index_of(p)] = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
        failure_sum[index_of(p)] = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
    }

    for (const auto& traj : group.trajectories) {
        if (traj.action_dim != dim) throw InvalidInput("trajectories disagree on action dimension");
        const bool success = traj.reward >= 0.5;
        for (const auto& chunk : traj.chunks) {
            const std::size_t c = index_of(chunk.phase);
            const auto steps = static_cast<std::size_t>(chunk.actions.size()) / dim;
            auto& sum = success ? success_sum[c] : failure_sum[c];
            for (std::size_t t = 0; t < steps; ++t) {
                sum += chunk.actions.segment(static_cast<Eigen::Index>(t * dim), static_cast<Eigen::Index>(dim));
            }
            (success ? success_steps[c] : failure_steps[c]) += steps;
            ++(success ? report.success_chunks[c] : report.failure_chunks[c]);
        }
    }

    for (Phase p : kAllPhases) {
        const std::size_t c = index_of(p);
        if (success_steps[c] == 0 || failure_steps[c] == 0) continue;
        const Eigen::VectorXd diff = success_sum[c] / static_cast<double>(success_steps[c]) -
                                     failure_sum[c] / static_cast<double>(failure_steps[c]);
        report.score[c] = diff.norm();
    }
    return report;
}

PhaseScoreState::PhaseScoreState(std::size_t refresh_window, double p_min)
    : refresh_window_(refresh_window), p_min_(p_min) {
    if (refresh_window_ == 0) throw InvalidInput("refresh window must be >= 1");
    if (!(p_min_ > 0.0 && p_min_ <= 1.0)) throw InvalidInput("p_min must lie in (0, 1]");
}

void PhaseScoreState::append(const PhaseScoreReport& report) {
    if (report.group_skipped) return;
    for (Phase p : kAllPhases) {
        const auto& s = report.score[index_of(p)];
        if (s) buffers_[index_of(p)].push_back(*s);
    }
    ++steps_since_refresh_;
}

std::optional<PhaseArray<double>> keep_probabilities_from_sums(const PhaseArray<double>& sums, double p_min) {
    const double total = std::accumulate(sums.begin(), sums.end(), 0.0);
    if (!(total > 0.0)) return std::nullopt;

    PhaseArray<double> share{};
    for (std::size_t c = 0; c < kPhaseCount; ++c) share[c] = sums[c] / total;
    const double top = *std::max_element(share.begin(), share.end());

    PhaseArray<double> keep{};
    for (std::size_t c = 0; c < kPhaseCount; ++c) keep[c] = std::max(p_min, share[c] / top);
    return keep;
}

void PhaseScoreState::refresh() {
    PhaseArray<double> sums{};
    for (std::size_t c = 0; c < kPhaseCount; ++c) {
        sums[c] = std::accumulate(buffers_[c].begin(), buffers_[c].end(), 0.0);
    }
    if (auto keep = keep_probabilities_from_sums(sums, p_min_)) {
        keep_ = *keep;
        initialized_ = true;
    }
    for (auto& b : buffers_) b.clear();
    steps_since_refresh_ = 0;
}

const PhaseArray<double>& PhaseScoreState::keep_probabilities() const {
    if (!initialized_) throw std::logic_error("keep probabilities read before the first refresh");
    return keep_;
}

} // namespace pcm
