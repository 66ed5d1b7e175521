#ifndef BP_LEARNER_MADDPG_HPP_
#define BP_LEARNER_MADDPG_HPP_

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <vector>

#include "bp/learner/backprop.hpp"
#include "bp/policy.hpp"

namespace bp::learner {

/// One replay element. Actions are normalized to [-1, 1] per component.
struct Transition {
    std::vector<VectorXd> obs;
    std::vector<VectorXd> actions;
    std::vector<double> rewards;
    std::vector<VectorXd> next_obs;
    bool done = false;
};

/// Fixed-capacity ring buffer with uniform sampling (with replacement).
class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity);

    void push(Transition t);
    std::size_t size() const { return data_.size(); }
    std::size_t capacity() const { return capacity_; }
    const Transition& operator[](std::size_t i) const { return data_[i]; }

    std::vector<std::size_t> sample_indices(std::size_t batch, std::mt19937_64& rng) const;
    std::vector<Transition> sample(std::size_t batch, std::mt19937_64& rng) const;

    void save(const std::filesystem::path& path) const;
    static ReplayBuffer load(const std::filesystem::path& path);

private:
    std::size_t capacity_;
    std::size_t next_ = 0;
    std::vector<Transition> data_;
};

/// Online and target networks plus optimizer state for one pursuer.
struct AgentNets {
    policy::DenseNet actor;
    policy::DenseNet critic;
    policy::DenseNet actor_target;
    policy::DenseNet critic_target;
    Adam actor_opt;
    Adam critic_opt;
    policy::SpectralCache spectral;
};

struct MaddpgHyper {
    double gamma = 0.95;
    double tau = 0.01;
    double actor_lr = 1e-4;
    double critic_lr = 1e-3;
    double lipschitz = 2.5;
    bool spectral_norm = true;
    bool update_actors = true;
    policy::PowerIterationOptions power{50, 1e-8};
};

struct NetShapes {
    int obs_dim = 0;
    int act_dim = 3;
    int agents = 1;
    std::vector<int> actor_hidden{64, 64};
    std::vector<int> critic_hidden{128, 128};
};

/**
 * @brief Fresh actor/critic pairs for every agent, targets copied from online nets.
 *
 * Critics see the joint observation followed by the joint normalized action.
 * When hyper.spectral_norm is set the actors start normalized.
 */
std::vector<AgentNets> make_agent_nets(const NetShapes& shapes, const VectorXd& action_scale,
                                       const MaddpgHyper& hyper, std::mt19937_64& rng);

/// target <- tau * online + (1 - tau) * target.
void soft_update(policy::DenseNet& target, const policy::DenseNet& online, double tau);

struct UpdateStats {
    std::vector<double> critic_loss;
    std::vector<double> actor_q;
};

/**
 * @brief One centralized-critic, decentralized-actor update for every agent.
 *
 * Critic i regresses r_i + gamma * Q'_i(o', mu'(o')); actor i ascends Q_i
 * through its own action. Afterwards every actor is spectrally normalized
 * (if enabled) and the targets are soft-updated from the online nets.
 */
UpdateStats maddpg_update(std::vector<AgentNets>& nets, std::span<const Transition> batch,
                          const MaddpgHyper& hyper);

/// Actor output divided by its action scale, i.e. the normalized action in [-1, 1].
VectorXd normalized_action(const policy::DenseNet& actor, const VectorXd& obs);

/// action + N(0, noise_scale^2 I), clipped componentwise to [lo, hi].
VectorXd explore(const VectorXd& action, double noise_scale, std::mt19937_64& rng,
                 double lo = -1.0, double hi = 1.0);

}  // namespace bp::learner

#endif  // BP_LEARNER_MADDPG_HPP_
