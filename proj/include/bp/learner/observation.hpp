#ifndef BP_LEARNER_OBSERVATION_HPP_
#define BP_LEARNER_OBSERVATION_HPP_

#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "bp/config.hpp"
#include "bp/simworld.hpp"

namespace bp::learner {

/**
 * @brief Flat per-pursuer observation.
 *
 * Layout (relative vectors are expressed in the observer's body frame):
 *   ego    [0, 6)  : p_x, p_y (arena frame), v_fwd, v_lat, cos(theta), sin(theta)
 *   ally j [6+7j)  : dp (2), dv (2), cos(dtheta), sin(dtheta), detect_flag
 *   target [last 5]: dp (2), dv (2), valid_flag   (all zero when not detected)
 * Allies appear in increasing pursuer index, skipping the observer.
 */
struct Observation {
    static constexpr int kEgo = 6;
    static constexpr int kAlly = 7;
    static constexpr int kTarget = 5;

    static int size(std::size_t team_size) {
        return kEgo + kAlly * static_cast<int>(team_size - 1) + kTarget;
    }

    Eigen::VectorXd values;

    int ally_count() const { return (static_cast<int>(values.size()) - kEgo - kTarget) / kAlly; }
    auto ego() const { return values.head<kEgo>(); }
    auto ally(int j) const { return values.segment<kAlly>(kEgo + kAlly * j); }
    auto target() const { return values.tail<kTarget>(); }
    bool target_valid() const { return values(values.size() - 1) != 0.0; }
};

/// Training-time observation: target block from the true relative state, gated by detection.
Observation build_observation(const sim::WorldState& world, std::size_t agent_index,
                              const std::vector<bool>& detections);

/**
 * @brief Deployment observation: target block from the filter estimate.
 *
 * Has no access to the target's true state by construction. The block is
 * filled only when @p agent_index detects the target and an estimate exists.
 */
Observation build_observation(std::span<const sim::AgentState> pursuers, std::size_t agent_index,
                              const std::vector<bool>& detections,
                              const std::optional<Vec6>& target_estimate);

/// det(sum_i (I - lambda_i lambda_i^T)) over planar unit bearings; 0 for an empty list.
double observability(std::span<const Vec2> bearings);

/// What happened to one agent during the tick, as needed by the reward.
struct RewardEvents {
    bool collided = false;
};

/**
 * @brief Per-agent reward r = r1 + r2 + r3 + r4 + r5.
 *
 * r1: rotating counterclockwise (omega >= ccw_min) while not detecting.
 * r2: heading alignment lambda^T h at or above fov_dot_threshold.
 * r3: closest pursuer within range_threshold of the target.
 * r4: r4_gain * observability of the currently detecting pursuers.
 * r5: collision during the tick.
 */
double reward(const sim::WorldState& world, std::size_t agent_index,
              const std::vector<bool>& detections, const RewardEvents& events,
              const RewardWeights& weights);

/// Planar unit bearings from each detecting pursuer to the target.
std::vector<Vec2> detecting_bearings(const sim::WorldState& world, const std::vector<bool>& detections);

/// min_i |p_T - p_i| over pursuers.
double closest_range(const sim::WorldState& world);

}  // namespace bp::learner

#endif  // BP_LEARNER_OBSERVATION_HPP_
