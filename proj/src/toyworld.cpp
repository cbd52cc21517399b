#include "pcm/toyworld.hpp"

#include <cmath>

namespace pcm {

namespace {

Eigen::VectorXd vec2(double x, double y) {
    Eigen::VectorXd v(2);
    v << x, y;
    return v;
}

std::vector<double> repeat_profile(std::initializer_list<std::pair<double, std::size_t>> runs) {
    std::vector<double> out;
    for (const auto& [value, count] : runs) out.insert(out.end(), count, value);
    return out;
}

ToyTaskSpec grasp_task(std::vector<double> profile) {
    ToyTaskSpec spec;
    spec.gripper_profile = std::move(profile);

    const auto ag = index_of(Phase::ActiveGrip);
    const auto pg = index_of(Phase::PreGrasp);
    const auto rr = index_of(Phase::ReleaseRamp);
    const auto ap = index_of(Phase::Approach);
    const auto tl = index_of(Phase::Tail);

    spec.critical[ag] = true;
    spec.critical[pg] = true;
    for (auto& t : spec.targets) t = Eigen::VectorXd::Zero(2);
    spec.targets[ag] = vec2(0.6, -0.4);
    spec.targets[pg] = vec2(-0.3, 0.5);

    spec.salience[ag] = 1.0;
    spec.salience[pg] = 0.9;
    spec.salience[rr] = 0.2;
    spec.salience[ap] = 0.25;
    spec.salience[tl] = 0.15;

    // Demonstrations are slightly off in the grasp phases and track the
    // context imperfectly; elsewhere they barely react to it.
    spec.demos[ag] = {spec.targets[ag] + vec2(0.25, 0.0), 0.8};
    spec.demos[pg] = {spec.targets[pg] + vec2(0.0, 0.1), 0.6};
    spec.demos[ap] = {vec2(0.2, -0.1), 0.05};
    spec.demos[rr] = {vec2(0.1, 0.1), 0.033};
    spec.demos[tl] = {vec2(0.0, 0.0), 0.016};
    return spec;
}

} // namespace

void ToyTaskSpec::validate() const {
    if (chunk_len == 0 || action_dim == 0) throw InvalidInput("chunk length and action dim must be positive");
    if (gripper_profile.empty()) throw InvalidInput("gripper profile is empty");
    for (double g : gripper_profile) {
        if (!(g >= 0.0 && g <= 1.0)) throw InvalidInput("gripper profile values must lie in [0,1]");
    }
    if (!(tolerance > 0.0)) throw InvalidInput("tolerance must be positive");
    if (!(policy_sigma > 0.0)) throw InvalidInput("policy sigma must be positive");
    if (context_scale < 0.0 || observation_noise < 0.0) throw InvalidInput("noise scales must be nonnegative");
    for (Phase p : kAllPhases) {
        const auto c = index_of(p);
        if (!(salience[c] > 0.0)) throw InvalidInput("phase salience must be positive");
        if (static_cast<std::size_t>(demos[c].base.size()) != action_dim) {
            throw InvalidInput("demo base must have action_dim entries");
        }
        if (critical[c] && static_cast<std::size_t>(targets[c].size()) != action_dim) {
            throw InvalidInput("critical phase target must have action_dim entries");
        }
    }
    labeling.validate();
}

ToyTaskSpec default_toy_spec() {
    return grasp_task(repeat_profile({{0.0, 5}, {0.25, 2}, {1.0, 4}, {0.25, 1}, {0.0, 4}}));
}

ToyTaskSpec long_horizon_toy_spec() {
    return grasp_task(repeat_profile({{0.0, 20}, {0.25, 3}, {1.0, 16}, {0.25, 1}, {0.0, 24}}));
}

ToyTaskSpec symmetric_toy_spec() {
    ToyTaskSpec spec;
    spec.gripper_profile = repeat_profile({{0.0, 3}, {0.25, 3}, {1.0, 3}, {0.25, 1}, {0.0, 5}});
    for (Phase p : kAllPhases) {
        const auto c = index_of(p);
        spec.critical[c] = true;
        spec.targets[c] = vec2(0.0, 0.0);
        spec.salience[c] = 1.0;
        spec.demos[c] = {vec2(0.08, 0.0), 0.9};
    }
    spec.tolerance = 0.35;
    return spec;
}

std::vector<double> gripper_commands(const ToyTaskSpec& spec) {
    std::vector<double> out;
    out.reserve(spec.chunks() * spec.chunk_len);
    for (double g : spec.gripper_profile) {
        const auto closed = static_cast<std::size_t>(std::lround(g * static_cast<double>(spec.chunk_len)));
        for (std::size_t t = 0; t < spec.chunk_len; ++t) out.push_back(t < closed ? 1.0 : 0.0);
    }
    return out;
}

std::vector<Phase> profile_phases(const ToyTaskSpec& spec) {
    return label_trace({gripper_commands(spec), spec.chunk_len}, spec.labeling);
}

PhaseArray<std::size_t> profile_phase_counts(const ToyTaskSpec& spec) {
    PhaseArray<std::size_t> counts{};
    for (Phase p : profile_phases(spec)) ++counts[index_of(p)];
    return counts;
}

Eigen::VectorXd phase_context(const ToyTaskSpec& spec, const Eigen::VectorXd& context, Phase phase) {
    const auto d = static_cast<Eigen::Index>(spec.action_dim);
    if (context.size() != static_cast<Eigen::Index>(spec.context_dim())) throw InvalidInput("context has the wrong size");
    if (spec.shared_context) return context;
    return context.segment(static_cast<Eigen::Index>(index_of(phase)) * d, d);
}

Eigen::VectorXd toy_observation(const ToyTaskSpec& spec, Phase phase, const Eigen::VectorXd& context, Rng& rng) {
    const auto block = static_cast<Eigen::Index>(1 + spec.action_dim);
    Eigen::VectorXd obs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(spec.feature_dim()));
    std::normal_distribution<double> noise(0.0, 1.0);
    const double s = spec.salience[index_of(phase)];
    const Eigen::Index off = static_cast<Eigen::Index>(index_of(phase)) * block;
    obs(off) = s;
    obs.segment(off + 1, block - 1) = s * phase_context(spec, context, phase);
    if (spec.observation_noise > 0.0) {
        for (Eigen::Index j = 0; j < block; ++j) obs(off + j) += spec.observation_noise * noise(rng);
    }
    return obs;
}

namespace {

Eigen::VectorXd draw_context(const ToyTaskSpec& spec, Rng& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::VectorXd z(static_cast<Eigen::Index>(spec.context_dim()));
    for (Eigen::Index d = 0; d < z.size(); ++d) z(d) = spec.context_scale * normal(rng);
    return z;
}

} // namespace

GaussianChunkPolicy sft_policy(const ToyTaskSpec& spec, std::size_t demos, std::uint64_t seed) {
    spec.validate();
    const auto phases = profile_phases(spec);
    const auto f = static_cast<Eigen::Index>(spec.feature_dim());
    const auto out_dim = static_cast<Eigen::Index>(spec.chunk_len * spec.action_dim);
    const auto rows = static_cast<Eigen::Index>(demos * kPhaseCount);

    Eigen::MatrixXd x(rows, f);
    Eigen::MatrixXd y(rows, out_dim);
    Rng rng = derive_stream(seed, 0xdead);
    Eigen::Index r = 0;
    for (std::size_t n = 0; n < demos; ++n) {
        const Eigen::VectorXd z = draw_context(spec, rng);
        for (Phase p : kAllPhases) {
            const auto& demo = spec.demos[index_of(p)];
            const Eigen::VectorXd step = demo.base + demo.context_gain * phase_context(spec, z, p);
            x.row(r) = toy_observation(spec, p, z, rng).transpose();
            for (std::size_t t = 0; t < spec.chunk_len; ++t) {
                y.row(r).segment(static_cast<Eigen::Index>(t * spec.action_dim),
                                 static_cast<Eigen::Index>(spec.action_dim)) = step.transpose();
            }
            ++r;
        }
    }
    const Eigen::MatrixXd gram = x.transpose() * x + 1e-8 * Eigen::MatrixXd::Identity(f, f);
    const Eigen::MatrixXd w = gram.ldlt().solve(x.transpose() * y).transpose();
    return GaussianChunkPolicy(w, spec.chunk_len, spec.action_dim, spec.policy_sigma);
}

double toy_reward(const ToyTaskSpec& spec, const ChunkedTrajectory& traj, const Eigen::VectorXd& context,
                  PhaseArray<std::optional<double>>* distances) {
    const auto d = static_cast<Eigen::Index>(spec.action_dim);
    PhaseArray<Eigen::VectorXd> sums;
    PhaseArray<std::size_t> steps{};
    for (auto& s : sums) s = Eigen::VectorXd::Zero(d);
    for (const auto& chunk : traj.chunks) {
        const auto c = index_of(chunk.phase);
        if (!spec.critical[c]) continue;
        for (Eigen::Index t = 0; t < chunk.actions.size() / d; ++t) sums[c] += chunk.actions.segment(t * d, d);
        steps[c] += static_cast<std::size_t>(chunk.actions.size() / d);
    }

    bool success = true;
    for (Phase p : kAllPhases) {
        const auto c = index_of(p);
        if (!spec.critical[c] || steps[c] == 0) continue;
        const double dist =
            (sums[c] / static_cast<double>(steps[c]) - spec.targets[c] - phase_context(spec, context, p)).norm();
        if (distances) (*distances)[c] = dist;
        if (dist > spec.tolerance) success = false;
    }
    return success ? 1.0 : 0.0;
}

ToyRollout generate_rollout(const ToyTaskSpec& spec, const GaussianChunkPolicy& policy, Rng& rng, bool greedy,
                            int id) {
    const auto phases = profile_phases(spec);
    ToyRollout out;
    out.context = draw_context(spec, rng);

    auto& traj = out.trajectory;
    traj.id = id;
    traj.chunk_len = spec.chunk_len;
    traj.action_dim = spec.action_dim;
    traj.gripper = gripper_commands(spec);
    traj.chunks.reserve(phases.size());

    std::normal_distribution<double> normal(0.0, 1.0);
    for (Phase p : phases) {
        Chunk chunk;
        chunk.phase = p;
        chunk.observation = toy_observation(spec, p, out.context, rng);
        chunk.actions = policy.mean(chunk.observation);
        if (!greedy) {
            for (Eigen::Index j = 0; j < chunk.actions.size(); ++j) chunk.actions(j) += policy.sigma() * normal(rng);
        }
        traj.chunks.push_back(std::move(chunk));
    }
    traj.reward = toy_reward(spec, traj, out.context, &out.critical_distance);
    return out;
}

RolloutGroup sample_group(const ToyTaskSpec& spec, const GaussianChunkPolicy& policy, std::size_t group_size,
                          Rng& rng, int first_id) {
    std::vector<ChunkedTrajectory> trajs;
    trajs.reserve(group_size);
    for (std::size_t i = 0; i < group_size; ++i) {
        trajs.push_back(generate_rollout(spec, policy, rng, false, first_id + static_cast<int>(i)).trajectory);
    }
    return RolloutGroup::from(std::move(trajs));
}

GroundTruth ground_truth_variance(const ToyTaskSpec& spec, const GaussianChunkPolicy& policy, std::size_t samples,
                                  std::uint64_t seed, std::size_t group_size) {
    if (samples < 1000) throw InvalidInput("ground truth needs at least 1000 samples");
    if (group_size < 2) throw InvalidInput("group size must be >= 2");

    constexpr std::size_t kBatches = 10;
    const Eigen::Index dim = policy.weights().size();
    const Eigen::Index d = static_cast<Eigen::Index>(spec.action_dim);

    struct Moments {
        Eigen::VectorXd sum, sumsq;
        double n = 0.0;
        double variance() const { return n < 2 ? 0.0 : (sumsq.sum() - sum.squaredNorm() / n) / (n - 1.0); }
    };
    auto fresh = [&] { return Moments{Eigen::VectorXd::Zero(dim), Eigen::VectorXd::Zero(dim), 0.0}; };

    PhaseArray<Moments> total;
    PhaseArray<std::array<Moments, kBatches>> batch;
    PhaseArray<Eigen::VectorXd> contribution;
    PhaseArray<Eigen::VectorXd> act_sum_s, act_sum_f;
    PhaseArray<double> steps_s{}, steps_f{};
    for (std::size_t c = 0; c < kPhaseCount; ++c) {
        total[c] = fresh();
        for (auto& b : batch[c]) b = fresh();
        contribution[c] = Eigen::VectorXd::Zero(dim);
        act_sum_s[c] = Eigen::VectorXd::Zero(d);
        act_sum_f[c] = Eigen::VectorXd::Zero(d);
    }

    GroundTruth gt;
    const auto counts = profile_phase_counts(spec);
    for (std::size_t c = 0; c < kPhaseCount; ++c) gt.counts[c] = static_cast<double>(counts[c]);

    const std::size_t groups = samples / group_size;
    for (std::size_t gi = 0; gi < groups; ++gi) {
        Rng rng = derive_stream(seed, gi);
        const auto group = sample_group(spec, policy, group_size, rng);
        gt.rollouts += group.size();

        for (const auto& traj : group.trajectories) {
            const bool success = traj.reward >= 0.5;
            for (const auto& chunk : traj.chunks) {
                const auto c = index_of(chunk.phase);
                for (Eigen::Index t = 0; t < chunk.actions.size() / d; ++t) {
                    (success ? act_sum_s[c] : act_sum_f[c]) += chunk.actions.segment(t * d, d);
                }
                (success ? steps_s[c] : steps_f[c]) += static_cast<double>(chunk.actions.size() / d);
            }
        }
        if (!group.has_reward_variance()) continue;
        ++gt.informative_groups;

        const auto b = gi % kBatches;
        for (std::size_t i = 0; i < group.size(); ++i) {
            for (const auto& chunk : group.trajectories[i].chunks) {
                Eigen::MatrixXd g = group.advantages[i] * policy.log_prob_grad(chunk.observation, chunk.actions).grad;
                const Eigen::Map<const Eigen::VectorXd> term(g.data(), dim);
                const auto c = index_of(chunk.phase);
                for (Moments* m : {&total[c], &batch[c][b]}) {
                    m->sum += term;
                    m->sumsq += term.cwiseAbs2();
                    m->n += 1.0;
                }
                contribution[c] -= term / static_cast<double>(group.size());
            }
        }
    }

    for (std::size_t c = 0; c < kPhaseCount; ++c) {
        gt.variance[c] = total[c].variance();
        double mean = 0.0, sq = 0.0;
        for (const auto& m : batch[c]) mean += m.variance();
        mean /= kBatches;
        for (const auto& m : batch[c]) sq += (m.variance() - mean) * (m.variance() - mean);
        gt.variance_stderr[c] = std::sqrt(sq / (kBatches - 1) / kBatches);
        if (gt.informative_groups > 0) {
            gt.grad_norm[c] = contribution[c].norm() / static_cast<double>(gt.informative_groups);
        }
        if (steps_s[c] > 0 && steps_f[c] > 0) {
            gt.proxy[c] = (act_sum_s[c] / steps_s[c] - act_sum_f[c] / steps_f[c]).norm();
        }
    }
    return gt;
}

} // namespace pcm
