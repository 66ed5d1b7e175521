#ifndef BP_CONFIG_HPP_
#define BP_CONFIG_HPP_

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "bp/estimator.hpp"
#include "bp/simworld.hpp"

namespace bp {

inline double deg2rad(double deg) { return deg * 3.14159265358979323846 / 180.0; }

struct RewardWeights {
    double r1 = 0.2;         ///< counterclockwise search rotation
    double r2 = 1.0;         ///< target inside the FoV cone
    double r3 = 1.0;         ///< closest pursuer within range_threshold
    double r4_gain = 1.0;    ///< multiplies det(I) of the detecting team
    double r5 = -10.0;       ///< collision
    double fov_dot_threshold = std::cos(deg2rad(15.0));
    double range_threshold = 1.0;  ///< m
    double ccw_min = 0.1;          ///< rad/s
};

/// Where the target block of the observation comes from.
enum class TargetSource { GroundTruth, Deploy };

struct AgentSpec {
    sim::MotionMode mode = sim::MotionMode::Omni;
    /// [x, y, theta(rad)]; sampled uniformly in the arena when absent.
    std::optional<std::array<double, 3>> pose;
};

enum class EvaderScript { Static, Circle, IrregularCircle, Waypoints, RandomAccel, AggressiveTurn };

struct EvaderSpec {
    EvaderScript script = EvaderScript::IrregularCircle;
    sim::MotionMode mode = sim::MotionMode::Omni;
    std::optional<Vec2> start;  ///< sampled when absent
    Vec2 center = Vec2::Zero();
    double radius = 1.0;        ///< m
    double speed = 0.3;         ///< m/s
    double turn_time = 24.0;    ///< s, aggressive_turn only
    double max_accel = 0.5;     ///< m/s^2, random_accel only
    std::vector<Vec2> waypoints;
};

struct TrainingParams {
    int episodes = 2000;
    int episode_ticks = 300;
    double gamma = 0.95;
    double tau = 0.01;
    double actor_lr = 1e-4;
    double critic_lr = 1e-3;
    int batch_size = 256;
    int buffer_size = 100000;
    int warmup = 1000;
    int update_every = 1;
    double noise_scale = 0.2;
    double noise_decay = 0.9995;
    double noise_min = 0.0;
    int eval_every = 50;
    int eval_episodes = 10;
    int checkpoint_every = 100;
    std::vector<int> actor_hidden{64, 64};
    std::vector<int> critic_hidden{128, 128};
    double lipschitz = 2.5;
    bool spectral_norm = true;
    TargetSource target_source = TargetSource::GroundTruth;
};

/// Fully validated scenario description. Defaults mirror the paper experiment.
struct ScenarioConfig {
    int format_version = 1;
    std::uint64_t seed = 1;
    sim::Arena arena;
    double decision_hz = 10.0;
    double physics_hz = 100.0;
    double desired_range = 0.75;  ///< r_d, m
    double agent_radius = 0.15;
    double agent_mass = 1.0;
    sim::PhysicsParams physics;
    sim::SensorModel sensor;
    estimator::FilterParams filter;
    RewardWeights reward;
    std::vector<AgentSpec> team{{sim::MotionMode::Unicycle, std::nullopt},
                                {sim::MotionMode::Omni, std::nullopt},
                                {sim::MotionMode::Omni, std::nullopt}};
    EvaderSpec evader;
    double duration = 30.0;  ///< s, one episode for simulate / evaluate
    TrainingParams training;

    double decision_dt() const { return 1.0 / decision_hz; }
    int ticks(double seconds) const { return static_cast<int>(std::lround(seconds * decision_hz)); }
};

}  // namespace bp

#endif  // BP_CONFIG_HPP_
