#include "pcm/grpo_core.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace pcm {

std::vector<double> group_advantages(std::span<const double> rewards, double eps) {
    if (rewards.size() < 2) throw InvalidInput("group size must be >= 2");
    const double n = static_cast<double>(rewards.size());
    const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / n;
    double sq = 0.0;
    for (double r : rewards) sq += (r - mean) * (r - mean);
    const double sd = std::sqrt(sq / n);

    std::vector<double> out;
    out.reserve(rewards.size());
    for (double r : rewards) {
        const double centered = r - mean;
        // Equal rewards: zero numerator, and eps may be zero.
        out.push_back(centered == 0.0 ? 0.0 : centered / (sd + eps));
    }
    return out;
}

RolloutGroup RolloutGroup::from(std::vector<ChunkedTrajectory> trajectories, double eps) {
    std::vector<double> rewards;
    rewards.reserve(trajectories.size());
    for (const auto& t : trajectories) rewards.push_back(t.reward);
    RolloutGroup g;
    g.advantages = group_advantages(rewards, eps);
    g.trajectories = std::move(trajectories);
    g.eps = eps;
    return g;
}

bool RolloutGroup::has_reward_variance() const {
    return std::any_of(trajectories.begin(), trajectories.end(),
                       [&](const auto& t) { return t.reward != trajectories.front().reward; });
}

std::size_t RolloutGroup::total_chunks() const {
    std::size_t n = 0;
    for (const auto& t : trajectories) n += t.chunks.size();
    return n;
}

GaussianChunkPolicy::GaussianChunkPolicy(std::size_t chunk_len, std::size_t action_dim, std::size_t feature_dim,
                                         double sigma)
    : GaussianChunkPolicy(Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(chunk_len * action_dim),
                                                static_cast<Eigen::Index>(feature_dim)),
                          chunk_len, action_dim, sigma) {}

GaussianChunkPolicy::GaussianChunkPolicy(Eigen::MatrixXd weights, std::size_t chunk_len, std::size_t action_dim,
                                         double sigma)
    : weights_(std::move(weights)), chunk_len_(chunk_len), action_dim_(action_dim), sigma_(sigma) {
    check();
}

void GaussianChunkPolicy::check() const {
    if (!(sigma_ > 0.0) || !std::isfinite(sigma_)) throw InvalidInput("policy sigma must be positive");
    if (chunk_len_ == 0 || action_dim_ == 0) throw InvalidInput("chunk length and action dim must be positive");
    if (static_cast<std::size_t>(weights_.rows()) != chunk_len_ * action_dim_) {
        throw InvalidInput("policy weights must have L*D rows");
    }
}

Eigen::VectorXd GaussianChunkPolicy::mean(const Eigen::VectorXd& observation) const {
    if (observation.size() != weights_.cols()) throw InvalidInput("observation size does not match policy");
    return weights_ * observation;
}

LogProbGrad GaussianChunkPolicy::log_prob_grad(const Eigen::VectorXd& observation,
                                               const Eigen::VectorXd& actions) const {
    const Eigen::Index n = actions.size();
    if (n == 0 || n > weights_.rows() || n % static_cast<Eigen::Index>(action_dim_) != 0) {
        throw InvalidInput("chunk actions must hold 1..L timesteps of D entries");
    }
    const Eigen::VectorXd mu = mean(observation).head(n);
    const double var = sigma_ * sigma_;
    const Eigen::VectorXd resid = actions - mu;

    LogProbGrad out;
    out.log_prob = -0.5 * resid.squaredNorm() / var - static_cast<double>(n) * std::log(sigma_) -
                   0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
    out.grad = Eigen::MatrixXd::Zero(weights_.rows(), weights_.cols());
    out.grad.topRows(n) = (resid / var) * observation.transpose();
    return out;
}

double GaussianChunkPolicy::log_prob(const Eigen::VectorXd& observation, const Eigen::VectorXd& actions) const {
    return log_prob_grad(observation, actions).log_prob;
}

namespace {

// Gradient of the per-chunk surrogate A * r * log pi (r = 1 unclipped).
Eigen::MatrixXd surrogate_grad(const Chunk& chunk, double advantage, const GaussianChunkPolicy& policy,
                               const ClipConfig& clip) {
    auto lg = policy.log_prob_grad(chunk.observation, chunk.actions);
    if (!clip.ratio || !chunk.behavior_log_prob) return advantage * lg.grad;

    const double eps = *clip.ratio;
    const double ratio = std::exp(lg.log_prob - *chunk.behavior_log_prob);
    const bool clipped = (advantage > 0.0 && ratio > 1.0 + eps) || (advantage < 0.0 && ratio < 1.0 - eps);
    if (clipped) return Eigen::MatrixXd::Zero(lg.grad.rows(), lg.grad.cols());
    return advantage * ratio * lg.grad;
}

} // namespace

Eigen::MatrixXd full_loss_grad(const RolloutGroup& group, const GaussianChunkPolicy& policy, const ClipConfig& clip) {
    Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(policy.weights().rows(), policy.weights().cols());
    if (group.size() == 0) return grad;
    for (std::size_t i = 0; i < group.size(); ++i) {
        const double adv = group.advantages.at(i);
        if (adv == 0.0) continue;
        for (const auto& chunk : group.trajectories[i].chunks) grad -= surrogate_grad(chunk, adv, policy, clip);
    }
    return grad / static_cast<double>(group.size());
}

Eigen::MatrixXd masked_loss_grad(const CompactedBatch& batch, const GaussianChunkPolicy& policy,
                                 const ClipConfig& clip) {
    Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(policy.weights().rows(), policy.weights().cols());
    if (batch.chunks.empty() || batch.group_size == 0) return grad;
    for (const auto& sel : batch.chunks) {
        if (sel.advantage == 0.0) continue;
        grad -= surrogate_grad(sel.chunk, sel.advantage, policy, clip);
    }
    return grad / static_cast<double>(batch.group_size);
}

PhaseGradientStats phase_gradient_stats(const RolloutGroup& group, const GaussianChunkPolicy& policy) {
    const auto rows = policy.weights().rows();
    const auto cols = policy.weights().cols();
    const Eigen::Index dim = rows * cols;

    PhaseArray<std::vector<Eigen::VectorXd>> terms;
    for (std::size_t i = 0; i < group.size(); ++i) {
        const double adv = group.advantages.at(i);
        for (const auto& chunk : group.trajectories[i].chunks) {
            Eigen::MatrixXd t = adv * policy.log_prob_grad(chunk.observation, chunk.actions).grad;
            terms[index_of(chunk.phase)].emplace_back(Eigen::Map<Eigen::VectorXd>(t.data(), dim));
        }
    }

    PhaseGradientStats stats;
    const double g = static_cast<double>(group.size());
    for (Phase p : kAllPhases) {
        const auto& ts = terms[index_of(p)];
        if (ts.empty()) continue;

        Eigen::VectorXd sum = Eigen::VectorXd::Zero(dim);
        for (const auto& t : ts) sum += t;
        const Eigen::VectorXd mean = sum / static_cast<double>(ts.size());

        PhaseGradient pg;
        pg.chunks = ts.size();
        pg.contribution = Eigen::Map<const Eigen::MatrixXd>(sum.data(), rows, cols) * (-1.0 / g);
        pg.mean_term = Eigen::Map<const Eigen::MatrixXd>(mean.data(), rows, cols);
        if (ts.size() >= 2) {
            double ss = 0.0;
            for (const auto& t : ts) ss += (t - mean).squaredNorm();
            pg.variance = ss / static_cast<double>(ts.size() - 1);
        }
        stats.phases[index_of(p)] = std::move(pg);
    }
    return stats;
}

std::vector<Eigen::VectorXd> score_terms(const RolloutGroup& group, const GaussianChunkPolicy& policy) {
    std::vector<Eigen::VectorXd> out;
    out.reserve(group.total_chunks());
    const Eigen::Index dim = policy.weights().size();
    for (std::size_t i = 0; i < group.size(); ++i) {
        for (const auto& chunk : group.trajectories[i].chunks) {
            Eigen::MatrixXd t = group.advantages.at(i) * policy.log_prob_grad(chunk.observation, chunk.actions).grad;
            out.emplace_back(Eigen::Map<Eigen::VectorXd>(t.data(), dim));
        }
    }
    return out;
}

} // namespace pcm
