#pragma once

// Chunk-level GRPO: group-relative advantages, a linear-Gaussian chunk
// policy with analytic score function, full and masked loss gradients, and
// per-phase decomposition of the gradient.

#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "pcm/common.hpp"

namespace pcm {

/// One chunk of a trajectory. `actions` stores the chunk's timesteps
/// back to back: entry t*D + d is dimension d at timestep t. A trailing
/// partial chunk has fewer than L timesteps.
struct Chunk {
    Eigen::VectorXd observation;
    Eigen::VectorXd actions;
    Phase phase = Phase::Approach;
    /// log pi_old(a|s) under the behavior policy; only needed for clipping.
    std::optional<double> behavior_log_prob;
};

struct ChunkedTrajectory {
    int id = 0;
    int task = 0;
    double reward = 0.0;
    std::size_t chunk_len = 8;
    std::size_t action_dim = 2;
    std::vector<double> gripper; ///< per-timestep close command
    std::vector<Chunk> chunks;

    std::size_t timesteps() const { return gripper.size(); }
};

/// Population-statistic advantages (r_i - mean) / (std + eps).
/// Throws InvalidInput when fewer than two rewards are given.
std::vector<double> group_advantages(std::span<const double> rewards, double eps = 1e-6);

struct RolloutGroup {
    std::vector<ChunkedTrajectory> trajectories;
    std::vector<double> advantages;
    double eps = 1e-6;

    /// Builds a group and fills in advantages from the trajectories' rewards.
    static RolloutGroup from(std::vector<ChunkedTrajectory> trajectories, double eps = 1e-6);

    std::size_t size() const { return trajectories.size(); }
    bool has_reward_variance() const;
    std::size_t total_chunks() const;
};

struct LogProbGrad {
    double log_prob;
    Eigen::MatrixXd grad; ///< same shape as the policy weights
};

/// pi(a|s) = N(W s, sigma^2 I) over the L*D entries of a chunk.
class GaussianChunkPolicy {
public:
    GaussianChunkPolicy(std::size_t chunk_len, std::size_t action_dim, std::size_t feature_dim,
                        double sigma);
    GaussianChunkPolicy(Eigen::MatrixXd weights, std::size_t chunk_len, std::size_t action_dim,
                        double sigma);

    std::size_t chunk_len() const { return chunk_len_; }
    std::size_t action_dim() const { return action_dim_; }
    std::size_t feature_dim() const { return static_cast<std::size_t>(weights_.cols()); }
    double sigma() const { return sigma_; }

    const Eigen::MatrixXd& weights() const { return weights_; }
    Eigen::MatrixXd& weights() { return weights_; }

    /// Full L*D mean vector for an observation.
    Eigen::VectorXd mean(const Eigen::VectorXd& observation) const;

    /// Log density and its gradient w.r.t. the weights. `actions` may be a
    /// partial chunk (any multiple of D up to L*D entries).
    LogProbGrad log_prob_grad(const Eigen::VectorXd& observation, const Eigen::VectorXd& actions) const;

    double log_prob(const Eigen::VectorXd& observation, const Eigen::VectorXd& actions) const;

private:
    void check() const;

    Eigen::MatrixXd weights_;
    std::size_t chunk_len_;
    std::size_t action_dim_;
    double sigma_;
};

/// PPO-style ratio clipping. Disabled unless a ratio is configured and the
/// chunk carries a behavior log-probability.
struct ClipConfig {
    std::optional<double> ratio;
};

/// A chunk kept after masking, with everything the actor update needs.
struct SelectedChunk {
    int trajectory = 0;
    std::size_t chunk_index = 0;
    Phase phase = Phase::Approach;
    double advantage = 0.0;
    Chunk chunk;
};

/// The physically shrunk batch. `group_size` is G of the source group so the
/// masked loss keeps the same 1/G expectation as the full loss.
struct CompactedBatch {
    std::size_t group_size = 0;
    std::vector<SelectedChunk> chunks;
};

/// Gradient of -1/G sum_i sum_k A_i log pi(a_ik|s_ik) over all chunks.
Eigen::MatrixXd full_loss_grad(const RolloutGroup& group, const GaussianChunkPolicy& policy,
                               const ClipConfig& clip = {});

/// Same loss restricted to the retained chunks, without 1/p reweighting.
Eigen::MatrixXd masked_loss_grad(const CompactedBatch& batch, const GaussianChunkPolicy& policy,
                                 const ClipConfig& clip = {});

struct PhaseGradient {
    std::size_t chunks = 0;
    /// This phase's share of the full loss gradient; summing over phases
    /// reproduces full_loss_grad.
    Eigen::MatrixXd contribution;
    /// Mean per-chunk score term A_i * grad log pi.
    Eigen::MatrixXd mean_term;
    /// Trace of the sample covariance of the score terms; empty with < 2 chunks.
    std::optional<double> variance;
};

struct PhaseGradientStats {
    PhaseArray<std::optional<PhaseGradient>> phases;
};

PhaseGradientStats phase_gradient_stats(const RolloutGroup& group, const GaussianChunkPolicy& policy);

/// Flattened per-chunk score term A_i * grad log pi for every chunk of the
/// group, in (trajectory, chunk) order.
std::vector<Eigen::VectorXd> score_terms(const RolloutGroup& group, const GaussianChunkPolicy& policy);

} // namespace pcm
