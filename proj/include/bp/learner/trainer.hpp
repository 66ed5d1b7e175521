#ifndef BP_LEARNER_TRAINER_HPP_
#define BP_LEARNER_TRAINER_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "bp/config.hpp"
#include "bp/learner/maddpg.hpp"
#include "bp/policy.hpp"

namespace bp::learner {

struct EvalSummary {
    double mean_reward = 0.0;      ///< per tick, averaged over agents and episodes
    double mean_range_error = 0.0; ///< |closest range - r_d|, last half of each episode
    std::vector<double> episode_reward;
    std::vector<double> episode_range_error;
};

/// Noise-free rollouts of the given actors, one episode per seed.
EvalSummary evaluate(const ScenarioConfig& config, std::span<const policy::DenseNet> actors,
                     std::span<const std::uint64_t> seeds, TargetSource source, int ticks);

/// Same harness driven by uniformly random normalized actions.
EvalSummary evaluate_random(const ScenarioConfig& config, std::span<const std::uint64_t> seeds,
                            int ticks, std::uint64_t rng_seed);

/// Seeds of the fixed evaluation episodes used during training.
std::vector<std::uint64_t> eval_seeds(std::uint64_t base, int count);

struct TrainOptions {
    std::filesystem::path out_dir;
    bool resume = false;
    /// Called after every finished episode with (episode, mean reward).
    std::function<void(int, double)> on_episode;
    /// Called after weights/ and checkpoint/ are written, with the next episode index.
    std::function<void(int)> on_checkpoint;
};

struct TrainResult {
    int episodes_completed = 0;
    EvalSummary final_eval;
    std::vector<policy::DenseNet> actors;
};

/**
 * @brief Spectral-normalized MADDPG training with periodic evaluation.
 *
 * Output layout under options.out_dir:
 *   weights/actor_<i>.json, weights/critic_<i>.json   latest online networks
 *   training_curve.csv                                one row per episode
 *   checkpoint/state.json, checkpoint/replay.bin      resumable state
 * Fully determined by the config seed; resuming continues the episode counter.
 */
TrainResult train(const ScenarioConfig& config, const TrainOptions& options);

/// Loads actor_<i>.json for every pursuer from a weights directory.
std::vector<policy::DenseNet> load_actors(const std::filesystem::path& dir, std::size_t count);

}  // namespace bp::learner

#endif  // BP_LEARNER_TRAINER_HPP_
