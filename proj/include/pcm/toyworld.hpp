#pragma once

// Synthetic chunked manipulation task with a scripted gripper profile and a
// known split between outcome-critical and outcome-irrelevant phases.
//
// Each rollout draws a context (think: object pose jitter). By default one
// D-vector z is shared by every phase; with `shared_context = false` each
// phase gets its own independent z_c. A chunk of phase c observes the block
// s_c * [1, z_c] plus Gaussian noise, placed in the c-th slot of a K*(1+D)
// feature vector; s_c is the phase's salience. The rollout succeeds iff, for
// every critical phase, the mean action over the phase lies within
// `tolerance` of target_c + z_c. Actions in other phases never enter the
// reward. With a shared context they still correlate with it, though, which
// leaks into their success/failure action gap.

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "pcm/common.hpp"
#include "pcm/grpo_core.hpp"
#include "pcm/phase_labeling.hpp"
#include "pcm/rng.hpp"

namespace pcm {

/// Scripted demonstration for one phase: mean action = base + gain * z_c.
struct DemoBehavior {
    Eigen::VectorXd base;
    double context_gain = 0.0;
};

struct ToyTaskSpec {
    std::size_t chunk_len = 8;
    std::size_t action_dim = 2;
    /// Gripper-close fraction per chunk; the first round(f * L) timesteps of
    /// each chunk are closed. Its size is the chunk count N.
    std::vector<double> gripper_profile;
    PhaseArray<bool> critical{};
    PhaseArray<Eigen::VectorXd> targets; ///< used for critical phases
    PhaseArray<double> salience{};
    PhaseArray<DemoBehavior> demos;
    double tolerance = 0.3;
    double context_scale = 0.5;
    bool shared_context = true;
    double observation_noise = 0.02;
    double policy_sigma = 0.3;
    LabelingConfig labeling{};

    std::size_t chunks() const { return gripper_profile.size(); }
    std::size_t feature_dim() const { return kPhaseCount * (1 + action_dim); }
    std::size_t context_dim() const { return shared_context ? action_dim : kPhaseCount * action_dim; }

    /// Throws InvalidInput on inconsistent sizes or nonpositive scales.
    void validate() const;
};

/// 16 chunks: 5 approach, 2 pre-grasp, 4 active-grip, 3 release-ramp, 2 tail.
/// Critical phases are ActiveGrip and PreGrasp.
ToyTaskSpec default_toy_spec();

/// Same task stretched to 64 chunks (20/3/16/3/22).
ToyTaskSpec long_horizon_toy_spec();

/// Every phase critical, identical targets, salience and demos.
ToyTaskSpec symmetric_toy_spec();

std::vector<double> gripper_commands(const ToyTaskSpec& spec);

/// Labels of the scripted profile, one per chunk.
std::vector<Phase> profile_phases(const ToyTaskSpec& spec);

PhaseArray<std::size_t> profile_phase_counts(const ToyTaskSpec& spec);

/// The D-vector z_c seen by a phase.
Eigen::VectorXd phase_context(const ToyTaskSpec& spec, const Eigen::VectorXd& context, Phase phase);

Eigen::VectorXd toy_observation(const ToyTaskSpec& spec, Phase phase, const Eigen::VectorXd& context, Rng& rng);

/// Ridge fit of the policy mean to scripted demonstrations of every phase.
GaussianChunkPolicy sft_policy(const ToyTaskSpec& spec, std::size_t demos = 400, std::uint64_t seed = 7);

struct ToyRollout {
    ChunkedTrajectory trajectory;
    Eigen::VectorXd context; ///< context_dim() entries
    /// Distance of the mean phase action from its target, critical phases only.
    PhaseArray<std::optional<double>> critical_distance{};
};

/// Stochastic rollout; `greedy` executes the mean action instead.
ToyRollout generate_rollout(const ToyTaskSpec& spec, const GaussianChunkPolicy& policy, Rng& rng,
                            bool greedy = false, int id = 0);

/// Binary reward of a trajectory under a context. Fills `distances` if given.
double toy_reward(const ToyTaskSpec& spec, const ChunkedTrajectory& traj, const Eigen::VectorXd& context,
                  PhaseArray<std::optional<double>>* distances = nullptr);

/// Groups of `group_size` stochastic rollouts with advantages filled in.
RolloutGroup sample_group(const ToyTaskSpec& spec, const GaussianChunkPolicy& policy, std::size_t group_size,
                          Rng& rng, int first_id = 0);

struct GroundTruth {
    PhaseArray<double> variance{};        ///< V_c
    PhaseArray<double> variance_stderr{};
    PhaseArray<double> proxy{};           ///< C_c pooled over all rollouts
    PhaseArray<double> grad_norm{};       ///< ||E[g_c]|| per group
    PhaseArray<double> counts{};          ///< N_c per trajectory
    std::size_t rollouts = 0;
    std::size_t informative_groups = 0;
};

/// Monte Carlo estimate of the per-phase score-term variance, pooled over
/// groups with nonzero reward variance. Throws InvalidInput for fewer than
/// 1000 samples.
GroundTruth ground_truth_variance(const ToyTaskSpec& spec, const GaussianChunkPolicy& policy, std::size_t samples,
                                  std::uint64_t seed, std::size_t group_size = 10);

} // namespace pcm
