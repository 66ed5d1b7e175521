#ifndef BP_SIMWORLD_HPP_
#define BP_SIMWORLD_HPP_

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "bp/estimator.hpp"
#include "bp/geometry.hpp"

namespace bp::sim {

enum class MotionMode { Omni, Unicycle };

std::string_view to_string(MotionMode mode);

/// Planar rigid agent. theta is the body x-axis heading, wrapped to (-pi, pi].
struct AgentState {
    Vec2 p = Vec2::Zero();
    Vec2 v = Vec2::Zero();
    double theta = 0.0;
    double omega = 0.0;
    MotionMode mode = MotionMode::Omni;
    double radius = 0.15;
    double mass = 1.0;
};

/// Desired heading rate and body-frame linear velocity.
struct Command {
    double v_h = 0.0;
    double v_x = 0.0;
    double v_y = 0.0;
};

struct Arena {
    double x_min = -2.5;
    double x_max = 2.5;
    double y_min = -2.5;
    double y_max = 2.5;
};

/// Pursuers first, then the target. Agent index n refers to the target.
struct WorldState {
    std::vector<AgentState> pursuers;
    AgentState target;
    Arena arena;
    double t = 0.0;

    std::size_t agent_count() const { return pursuers.size() + 1; }
    const AgentState& agent(std::size_t i) const {
        return i < pursuers.size() ? pursuers[i] : target;
    }
    AgentState& agent(std::size_t i) { return i < pursuers.size() ? pursuers[i] : target; }
};

struct Gains {
    double k_v = 5.0;
    double k_omega = 5.0;
};

struct ActuatorBounds {
    double v_max = 1.0;  ///< per body axis, m/s
    double w_max = 2.0;  ///< rad/s
};

struct Stiffness {
    double k_agent = 100.0;
    double k_wall = 100.0;
};

struct PhysicsParams {
    double dt = 0.01;
    int substeps = 10;
    Gains gains;
    Stiffness stiffness;
    ActuatorBounds pursuer_bounds;
    ActuatorBounds target_bounds;
};

struct SensorModel {
    double fov = 30.0 * 3.14159265358979323846 / 180.0;  ///< full cone angle, radians
    Mat3 sigma = 1e-4 * Mat3::Identity();
};

Command clip(const Command& cmd, const ActuatorBounds& bounds);

/**
 * @brief First-order velocity-lag low-level controller.
 *
 * a = k_v (R v_d - v), alpha = k_omega (omega_d - omega). In unicycle mode the
 * lateral command is zeroed before use.
 */
std::pair<Vec2, double> low_level_accel(const AgentState& agent, const Command& cmd,
                                        const Gains& gains);

/**
 * @brief Hooke's-law contact forces, summed per agent (index order of WorldState::agent).
 *
 * Overlapping agent pairs receive equal and opposite forces along the center
 * line; bodies crossing an arena wall are pushed back inward.
 */
std::vector<Vec2> contact_forces(const WorldState& world, const Stiffness& stiffness);

/// Per-agent flag: touching another agent or a wall.
std::vector<bool> in_contact(const WorldState& world);

/**
 * @brief One semi-implicit Euler step of the second-order agent dynamics.
 *
 * @p commands holds one entry per agent (pursuers, then target) and is clipped
 * to the actuator bounds. Unicycle agents carry their velocity with the body
 * frame as they turn, so their own commands never create lateral velocity.
 */
WorldState step(const WorldState& world, std::span<const Command> commands,
                const PhysicsParams& params, double dt_phys);

/**
 * @brief Limited field-of-view bearing sensing.
 *
 * Detects when lambda^T h >= cos(fov/2) (boundary inclusive); returns the true
 * 3D bearing plus Gaussian noise drawn from the sensor covariance.
 */
std::optional<estimator::BearingMeasurement> sense(const WorldState& world,
                                                   std::size_t pursuer_index,
                                                   const SensorModel& sensor,
                                                   std::mt19937_64& rng);

/// Noise-free detection test used by sense() and by the reward.
bool detects(const WorldState& world, std::size_t pursuer_index, double fov);

/// Cosine between the pursuer heading and the planar bearing to the target.
double heading_alignment(const WorldState& world, std::size_t pursuer_index);

/// Full 6D state [p; v] of an agent lifted to z = 0.
Vec6 lifted_state(const AgentState& agent);

/// Result of one decision tick worth of substeps.
struct TickOutcome {
    std::vector<bool> collided;  ///< per agent, any contact during the tick
};

/// Runs params.substeps physics steps holding @p commands.
TickOutcome advance(WorldState& world, std::span<const Command> commands,
                    const PhysicsParams& params);

}  // namespace bp::sim

#endif  // BP_SIMWORLD_HPP_
