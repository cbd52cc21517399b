#pragma once

#include <vector>

#include "pcm/grpo_core.hpp"

// 1-D, one-timestep chunks with constant unit observation unless given.
inline pcm::ChunkedTrajectory make_traj(int id, double reward, const std::vector<pcm::Phase>& phases,
                                        const std::vector<double>& actions, std::size_t feature_dim = 1) {
    pcm::ChunkedTrajectory t;
    t.id = id;
    t.reward = reward;
    t.chunk_len = 1;
    t.action_dim = 1;
    for (std::size_t k = 0; k < phases.size(); ++k) {
        pcm::Chunk c;
        c.phase = phases[k];
        c.observation = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(feature_dim));
        c.actions = Eigen::VectorXd::Constant(1, actions[k]);
        t.chunks.push_back(c);
        t.gripper.push_back(0.0);
    }
    return t;
}
