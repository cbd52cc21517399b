#include "pcm/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <numeric>
#include <ostream>

#include "pcm/masking.hpp"

namespace pcm {

std::string_view mode_name(TrainMode mode) {
    switch (mode) {
    case TrainMode::Pcm: return "pcm";
    case TrainMode::Vanilla: return "vanilla";
    case TrainMode::RandomMask: return "random-mask";
    case TrainMode::FullMask: return "full-mask";
    }
    return "unknown";
}

TrainMode parse_mode(std::string_view name) {
    if (name == "pcm") return TrainMode::Pcm;
    if (name == "vanilla") return TrainMode::Vanilla;
    if (name == "random-mask" || name == "random_mask") return TrainMode::RandomMask;
    if (name == "full-mask" || name == "full_mask") return TrainMode::FullMask;
    throw InvalidInput("unknown training mode: " + std::string(name));
}

void TrainConfig::validate() const {
    if (budget < 1) throw InvalidInput("budget must be >= 1");
    if (group_size < 2) throw InvalidInput("group size must be >= 2");
    if (refresh_window < 1) throw InvalidInput("refresh window must be >= 1");
    if (!(p_min > 0.0 && p_min <= 1.0)) throw InvalidInput("p_min must lie in (0, 1]");
    if (!(learning_rate > 0.0)) throw InvalidInput("learning rate must be positive");
    if (seeds < 1) throw InvalidInput("need at least one seed");
    if (clip_ratio && !(*clip_ratio > 0.0)) throw InvalidInput("clip ratio must be positive");
}

namespace {

// Stream ids under the run seed.
constexpr std::uint64_t kRolloutStream = 1;
constexpr std::uint64_t kEvalStream = 2;
constexpr std::uint64_t kMaskStreamBase = 1000;

std::optional<Phase> top_phase(const PhaseScoreReport& report) {
    std::optional<Phase> best;
    double best_score = -1.0;
    for (Phase p : kAllPhases) {
        const auto& s = report.score[index_of(p)];
        if (s && *s > best_score) {
            best_score = *s;
            best = p;
        }
    }
    return best;
}

Phase top_phase(const PhaseArray<double>& keep) {
    return kAllPhases[static_cast<std::size_t>(std::max_element(keep.begin(), keep.end()) - keep.begin())];
}

SelectionMask phase_only_mask(const ChunkedTrajectory& traj, Phase phase, std::size_t budget, Rng& rng) {
    std::vector<std::size_t> candidates;
    for (std::size_t k = 0; k < traj.chunks.size(); ++k) {
        if (traj.chunks[k].phase == phase) candidates.push_back(k);
    }
    SelectionMask mask;
    mask.trajectory = traj.id;
    mask.budget = std::min(budget, candidates.size());
    if (candidates.empty()) return mask;
    const std::vector<double> ones(candidates.size(), 1.0);
    for (std::size_t j : weighted_sample_without_replacement(ones, budget, rng)) mask.indices.push_back(candidates[j]);
    return mask;
}

double evaluate(const ToyTaskSpec& spec, const GaussianChunkPolicy& policy, std::size_t rollouts, Rng rng) {
    if (rollouts == 0) return 0.0;
    double wins = 0.0;
    for (std::size_t n = 0; n < rollouts; ++n) wins += generate_rollout(spec, policy, rng, true).trajectory.reward;
    return wins / static_cast<double>(rollouts);
}

} // namespace

TrainResult train(const TrainConfig& config, const ToyTaskSpec& initial_spec, const SpecSchedule& schedule) {
    config.validate();
    ToyTaskSpec spec = initial_spec;
    spec.validate();

    TrainResult result{{}, sft_policy(spec)};
    auto& policy = result.policy;
    PhaseScoreState state(config.refresh_window, config.p_min);
    std::optional<Phase> last_top;
    const ClipConfig clip{config.clip_ratio};
    std::size_t cumulative = 0;

    for (std::size_t step = 0; step < config.steps; ++step) {
        if (schedule) schedule(step, spec);

        Rng rollout_rng = derive_stream(config.seed, kRolloutStream, step);
        std::vector<ChunkedTrajectory> trajs;
        for (std::size_t i = 0; i < config.group_size; ++i) {
            trajs.push_back(generate_rollout(spec, policy, rollout_rng, false, static_cast<int>(i)).trajectory);
        }
        // The behavior policy is the current policy.
        if (clip.ratio) {
            for (auto& t : trajs) {
                for (auto& c : t.chunks) c.behavior_log_prob = policy.log_prob(c.observation, c.actions);
            }
        }
        RolloutGroup group = RolloutGroup::from(std::move(trajs), config.advantage_eps);

        StepMetrics m;
        m.step = step;
        m.chunks_total = group.total_chunks();
        for (const auto& t : group.trajectories) m.train_reward += t.reward;
        m.train_reward /= static_cast<double>(group.size());
        m.scores = compute_phase_scores(group);
        m.group_skipped = m.scores.group_skipped;

        if (!m.group_skipped) {
            CompactedBatch batch;
            if (config.mode == TrainMode::Vanilla) {
                batch = full_batch(group);
            } else {
                std::vector<SelectionMask> masks;
                masks.reserve(group.size());
                if (config.mode == TrainMode::Pcm || config.mode == TrainMode::FullMask) {
                    state.append(m.scores);
                    if (state.refresh_due()) state.refresh();
                }
                // Full masking follows the frozen table: its top phase is the
                // one with the largest buffered score share.
                if (config.mode == TrainMode::FullMask && state.initialized()) {
                    last_top = top_phase(state.keep_probabilities());
                } else if (auto top = top_phase(m.scores)) {
                    last_top = top;
                }

                for (const auto& traj : group.trajectories) {
                    Rng mask_rng = derive_stream(config.seed, kMaskStreamBase + static_cast<std::uint64_t>(traj.id), step);
                    switch (config.mode) {
                    case TrainMode::Pcm: {
                        PhaseArray<double> keep;
                        keep.fill(1.0);
                        if (state.initialized()) keep = state.keep_probabilities();
                        masks.push_back(sample_mask(traj, keep, config.budget, mask_rng));
                        break;
                    }
                    case TrainMode::RandomMask: {
                        PhaseArray<double> ones;
                        ones.fill(1.0);
                        masks.push_back(sample_mask(traj, ones, config.budget, mask_rng));
                        break;
                    }
                    case TrainMode::FullMask:
                        masks.push_back(phase_only_mask(traj, last_top.value_or(Phase::ActiveGrip), config.budget, mask_rng));
                        break;
                    case TrainMode::Vanilla: break;
                    }
                }
                batch = shrink_batch(group, masks);
            }

            policy.weights() -= config.learning_rate * masked_loss_grad(batch, policy, clip);
            m.chunks_used = batch.chunks.size();
            for (const auto& sel : batch.chunks) m.allocation[index_of(sel.phase)] += 1.0;
            for (double& a : m.allocation) a /= static_cast<double>(group.size());
        }
        if (config.mode == TrainMode::Pcm && state.initialized()) m.keep = state.keep_probabilities();

        cumulative += m.chunks_used;
        m.cumulative_chunks = cumulative;
        m.success_rate = evaluate(spec, policy, config.eval_rollouts, derive_stream(config.seed, kEvalStream, step));
        result.steps.push_back(std::move(m));
    }
    return result;
}

std::vector<AveragedStep> train_seeds(const TrainConfig& config, const ToyTaskSpec& spec) {
    config.validate();
    std::vector<std::future<TrainResult>> runs;
    for (std::size_t s = 0; s < config.seeds; ++s) {
        TrainConfig c = config;
        c.seed = config.seed + s;
        runs.push_back(std::async(std::launch::async, [c, &spec] { return train(c, spec); }));
    }

    std::vector<AveragedStep> curve(config.steps);
    std::vector<std::size_t> keep_seen(config.steps, 0);
    for (auto& f : runs) {
        const auto run = f.get();
        for (std::size_t t = 0; t < config.steps; ++t) {
            const auto& m = run.steps[t];
            auto& a = curve[t];
            a.step = t;
            a.success_rate += m.success_rate;
            a.chunks_used += static_cast<double>(m.chunks_used);
            a.chunks_total += static_cast<double>(m.chunks_total);
            for (std::size_t c = 0; c < kPhaseCount; ++c) a.allocation[c] += m.allocation[c];
            if (m.keep) {
                for (std::size_t c = 0; c < kPhaseCount; ++c) a.keep[c] += (*m.keep)[c];
                ++keep_seen[t];
            }
        }
    }
    const double n = static_cast<double>(config.seeds);
    for (std::size_t t = 0; t < config.steps; ++t) {
        auto& a = curve[t];
        a.success_rate /= n;
        a.chunks_used /= n;
        a.chunks_total /= n;
        for (double& x : a.allocation) x /= n;
        for (double& x : a.keep) {
            x = keep_seen[t] ? x / static_cast<double>(keep_seen[t]) : std::numeric_limits<double>::quiet_NaN();
        }
        const std::size_t lo = t >= 4 ? t - 4 : 0;
        double sum = 0.0;
        for (std::size_t j = lo; j <= t; ++j) sum += curve[j].success_rate;
        a.success_rate_ma5 = sum / static_cast<double>(t - lo + 1);
    }
    return curve;
}

double final_success(const std::vector<AveragedStep>& curve, std::size_t window) {
    if (curve.empty()) return 0.0;
    window = std::min(window, curve.size());
    double sum = 0.0;
    for (std::size_t j = curve.size() - window; j < curve.size(); ++j) sum += curve[j].success_rate;
    return sum / static_cast<double>(window);
}

double final_success(const std::vector<StepMetrics>& run, std::size_t window) {
    if (run.empty()) return 0.0;
    window = std::min(window, run.size());
    double sum = 0.0;
    for (std::size_t j = run.size() - window; j < run.size(); ++j) sum += run[j].success_rate;
    return sum / static_cast<double>(window);
}

void write_metrics_csv(std::ostream& out, const std::vector<AveragedStep>& curve) {
    out << "step,success_rate,success_rate_ma5,chunks_used,chunks_total";
    for (Phase p : kAllPhases) out << ",alloc_" << phase_name(p);
    for (Phase p : kAllPhases) out << ",p_" << phase_name(p);
    out << '\n';
    for (const auto& a : curve) {
        out << a.step << ',' << a.success_rate << ',' << a.success_rate_ma5 << ',' << a.chunks_used << ','
            << a.chunks_total;
        for (double x : a.allocation) out << ',' << x;
        for (double x : a.keep) {
            out << ',';
            if (!std::isnan(x)) out << x;
        }
        out << '\n';
    }
}

} // namespace pcm
