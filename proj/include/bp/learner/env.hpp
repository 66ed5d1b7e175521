#ifndef BP_LEARNER_ENV_HPP_
#define BP_LEARNER_ENV_HPP_

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "bp/config.hpp"
#include "bp/estimator.hpp"
#include "bp/learner/observation.hpp"
#include "bp/simworld.hpp"

namespace bp::learner {

/// Scripted evader: produces a desired arena-frame velocity every decision tick.
class EvaderDriver {
public:
    EvaderDriver(const EvaderSpec& spec, std::uint64_t seed);

    Vec2 desired_velocity(const sim::AgentState& target, double t, const sim::Arena& arena,
                          double dt);

private:
    EvaderSpec spec_;
    std::mt19937_64 rng_;
    Vec2 random_velocity_ = Vec2::Zero();
    std::size_t waypoint_ = 0;
};

/// Body-frame command that asks an agent for arena-frame velocity @p v_world, no rotation.
sim::Command velocity_command(const sim::AgentState& agent, const Vec2& v_world);

struct StepInfo {
    std::vector<double> rewards;
    std::vector<bool> collided;  ///< per pursuer
    int measurements = 0;
    int skipped_measurements = 0;
};

/**
 * @brief The pursuit environment at decision-tick granularity.
 *
 * One tick: hold the pursuer commands and the evader command for the physics
 * substeps, then sense every pursuer, run the information filter
 * (predict + correct), and score each pursuer. The world, the sensor noise and
 * the evader script all draw from generators seeded by reset().
 */
class PursuitEnv {
public:
    PursuitEnv(ScenarioConfig config, TargetSource source);

    void reset(std::uint64_t seed);

    /**
     * @param pursuer_commands one command per pursuer, physical units.
     * @param evader_velocity overrides the evader script when set (arena frame).
     * @param drop_measurements discards this tick's bearings before fusion.
     */
    StepInfo step(std::span<const sim::Command> pursuer_commands,
                  const std::optional<Vec2>& evader_velocity = std::nullopt,
                  bool drop_measurements = false);

    std::vector<Observation> observations() const;

    const ScenarioConfig& config() const { return config_; }
    const sim::WorldState& world() const { return world_; }
    sim::WorldState& mutable_world() { return world_; }
    const std::vector<bool>& detections() const { return detections_; }
    const estimator::InformationState& filter_state() const { return filter_; }
    std::optional<Vec6> estimate() const;
    std::optional<Mat6> estimate_covariance() const;
    int tick() const { return tick_; }
    int last_measurement_count() const { return last_measurements_; }
    TargetSource source() const { return source_; }

private:
    void sense_and_fuse(bool predict, bool drop);

    ScenarioConfig config_;
    TargetSource source_;
    sim::WorldState world_;
    std::mt19937_64 rng_;
    std::optional<EvaderDriver> evader_;
    estimator::InformationState filter_;
    std::vector<bool> detections_;
    int tick_ = 0;
    int last_measurements_ = 0;
    int last_skipped_ = 0;
};

/// Spawns the configured team and target; random poses avoid overlaps.
sim::WorldState spawn_world(const ScenarioConfig& config, std::mt19937_64& rng);

}  // namespace bp::learner

#endif  // BP_LEARNER_ENV_HPP_
