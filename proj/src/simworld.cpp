#include "bp/simworld.hpp"

#include <algorithm>
#include <cmath>

#include "bp/errors.hpp"

namespace bp::sim {

std::string_view to_string(MotionMode mode) {
    return mode == MotionMode::Omni ? "omni" : "unicycle";
}

Command clip(const Command& cmd, const ActuatorBounds& bounds) {
    return {std::clamp(cmd.v_h, -bounds.w_max, bounds.w_max),
            std::clamp(cmd.v_x, -bounds.v_max, bounds.v_max),
            std::clamp(cmd.v_y, -bounds.v_max, bounds.v_max)};
}

std::pair<Vec2, double> low_level_accel(const AgentState& agent, const Command& cmd,
                                        const Gains& gains) {
    Vec2 v_d(cmd.v_x, cmd.v_y);
    if (agent.mode == MotionMode::Unicycle) {
        v_d.y() = 0.0;
    }
    const Vec2 a = gains.k_v * (geometry::rotation2d(agent.theta) * v_d - agent.v);
    const double alpha = gains.k_omega * (cmd.v_h - agent.omega);
    return {a, alpha};
}

std::vector<Vec2> contact_forces(const WorldState& world, const Stiffness& stiffness) {
    const std::size_t n = world.agent_count();
    std::vector<Vec2> f(n, Vec2::Zero());
    for (std::size_t i = 0; i < n; ++i) {
        const AgentState& a = world.agent(i);
        for (std::size_t j = i + 1; j < n; ++j) {
            const AgentState& b = world.agent(j);
            const Vec2 d = a.p - b.p;
            const double dist = d.norm();
            const double depth = a.radius + b.radius - dist;
            if (depth <= 0.0) {
                continue;
            }
            const Vec2 normal = dist > geometry::kEpsNorm ? Vec2(d / dist) : Vec2::UnitX();
            const Vec2 push = stiffness.k_agent * depth * normal;
            f[i] += push;
            f[j] -= push;
        }

        const Arena& ar = world.arena;
        const double left = ar.x_min + a.radius - a.p.x();
        const double right = a.p.x() + a.radius - ar.x_max;
        const double bottom = ar.y_min + a.radius - a.p.y();
        const double top = a.p.y() + a.radius - ar.y_max;
        if (left > 0.0) f[i].x() += stiffness.k_wall * left;
        if (right > 0.0) f[i].x() -= stiffness.k_wall * right;
        if (bottom > 0.0) f[i].y() += stiffness.k_wall * bottom;
        if (top > 0.0) f[i].y() -= stiffness.k_wall * top;
    }
    return f;
}

std::vector<bool> in_contact(const WorldState& world) {
    const std::size_t n = world.agent_count();
    std::vector<bool> hit(n, false);
    const Arena& ar = world.arena;
    for (std::size_t i = 0; i < n; ++i) {
        const AgentState& a = world.agent(i);
        if (a.p.x() - a.radius < ar.x_min || a.p.x() + a.radius > ar.x_max ||
            a.p.y() - a.radius < ar.y_min || a.p.y() + a.radius > ar.y_max) {
            hit[i] = true;
        }
        for (std::size_t j = i + 1; j < n; ++j) {
            const AgentState& b = world.agent(j);
            if ((a.p - b.p).norm() < a.radius + b.radius) {
                hit[i] = true;
                hit[j] = true;
            }
        }
    }
    return hit;
}

WorldState step(const WorldState& world, std::span<const Command> commands,
                const PhysicsParams& params, double dt_phys) {
    if (!(dt_phys > 0.0)) {
        throw InvalidDt("step: dt_phys must be positive");
    }
    const std::size_t n = world.agent_count();
    if (commands.size() != n) {
        throw ShapeMismatch("step: one command per agent required");
    }
    const std::vector<Vec2> f = contact_forces(world, params.stiffness);

    WorldState next = world;
    for (std::size_t i = 0; i < n; ++i) {
        const AgentState& cur = world.agent(i);
        AgentState& out = next.agent(i);
        const ActuatorBounds& bounds =
            i < world.pursuers.size() ? params.pursuer_bounds : params.target_bounds;
        const auto [a, alpha] = low_level_accel(cur, clip(commands[i], bounds), params.gains);

        Vec2 v = cur.v + (a + f[i] / cur.mass) * dt_phys;
        out.omega = cur.omega + alpha * dt_phys;
        out.theta = geometry::wrap_angle(cur.theta + out.omega * dt_phys);
        if (cur.mode == MotionMode::Unicycle) {
            // Nonholonomic: body-frame velocity turns with the vehicle.
            v = geometry::rotation2d(out.theta) * (geometry::rotation2d(cur.theta).transpose() * v);
        }
        out.v = v;
        out.p = cur.p + v * dt_phys;

        if (!out.p.allFinite() || !out.v.allFinite() || !std::isfinite(out.theta) ||
            !std::isfinite(out.omega)) {
            throw NumericalFailure("step: non-finite agent state");
        }
    }
    next.t = world.t + dt_phys;
    return next;
}

TickOutcome advance(WorldState& world, std::span<const Command> commands,
                    const PhysicsParams& params) {
    TickOutcome out;
    out.collided = in_contact(world);
    for (int s = 0; s < params.substeps; ++s) {
        world = step(world, commands, params, params.dt);
        const std::vector<bool> hit = in_contact(world);
        for (std::size_t i = 0; i < hit.size(); ++i) {
            out.collided[i] = out.collided[i] || hit[i];
        }
    }
    return out;
}

double heading_alignment(const WorldState& world, std::size_t pursuer_index) {
    const AgentState& p = world.pursuers.at(pursuer_index);
    const Vec3 lambda = geometry::bearing(geometry::lift(p.p), geometry::lift(world.target.p));
    const Vec3 h(std::cos(p.theta), std::sin(p.theta), 0.0);
    return lambda.dot(h);
}

bool detects(const WorldState& world, std::size_t pursuer_index, double fov) {
    // Tolerance keeps targets placed exactly on the cone edge inside it.
    constexpr double kEdgeTol = 1e-12;
    return heading_alignment(world, pursuer_index) >= std::cos(0.5 * fov) - kEdgeTol;
}

Vec6 lifted_state(const AgentState& agent) {
    Vec6 s;
    s << agent.p.x(), agent.p.y(), 0.0, agent.v.x(), agent.v.y(), 0.0;
    return s;
}

std::optional<estimator::BearingMeasurement> sense(const WorldState& world,
                                                   std::size_t pursuer_index,
                                                   const SensorModel& sensor,
                                                   std::mt19937_64& rng) {
    if (!detects(world, pursuer_index, sensor.fov)) {
        return std::nullopt;
    }
    const AgentState& p = world.pursuers[pursuer_index];
    const Vec3 lambda = geometry::bearing(geometry::lift(p.p), geometry::lift(world.target.p));
    std::normal_distribution<double> unit(0.0, 1.0);
    Vec3 z;
    for (int i = 0; i < 3; ++i) {
        z(i) = unit(rng);
    }
    // Symmetric square root; tolerates a zero (noise-free) covariance.
    const Eigen::SelfAdjointEigenSolver<Mat3> eig(sensor.sigma);
    const Mat3 L = eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
                   eig.eigenvectors().transpose();
    return estimator::BearingMeasurement{lambda + L * z, lifted_state(p), sensor.sigma};
}

}  // namespace bp::sim
