#include "bp/learner/observation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "bp/errors.hpp"

namespace bp::learner {

namespace {

struct RelativeTarget {
    Vec2 dp;
    Vec2 dv;
};

Observation assemble(std::span<const sim::AgentState> pursuers, std::size_t i,
                     const std::vector<bool>& detections, const std::optional<RelativeTarget>& target) {
    if (i >= pursuers.size() || detections.size() != pursuers.size()) {
        throw ShapeMismatch("build_observation: bad agent index or detection list");
    }
    const sim::AgentState& me = pursuers[i];
    const Mat2 to_body = geometry::rotation2d(me.theta).transpose();

    Observation obs;
    obs.values = Eigen::VectorXd::Zero(Observation::size(pursuers.size()));
    const Vec2 v_body = to_body * me.v;
    obs.values.head<Observation::kEgo>() << me.p.x(), me.p.y(), v_body.x(), v_body.y(),
        std::cos(me.theta), std::sin(me.theta);

    int slot = 0;
    for (std::size_t j = 0; j < pursuers.size(); ++j) {
        if (j == i) {
            continue;
        }
        const sim::AgentState& ally = pursuers[j];
        const Vec2 dp = to_body * (ally.p - me.p);
        const Vec2 dv = to_body * (ally.v - me.v);
        const double dtheta = ally.theta - me.theta;
        obs.values.segment<Observation::kAlly>(Observation::kEgo + Observation::kAlly * slot)
            << dp.x(), dp.y(), dv.x(), dv.y(), std::cos(dtheta), std::sin(dtheta),
            detections[j] ? 1.0 : 0.0;
        ++slot;
    }

    if (detections[i] && target) {
        const Vec2 dp = to_body * target->dp;
        const Vec2 dv = to_body * target->dv;
        obs.values.tail<Observation::kTarget>() << dp.x(), dp.y(), dv.x(), dv.y(), 1.0;
    }
    return obs;
}

}  // namespace

Observation build_observation(const sim::WorldState& world, std::size_t agent_index,
                              const std::vector<bool>& detections) {
    if (agent_index >= world.pursuers.size()) {
        throw ShapeMismatch("build_observation: bad agent index");
    }
    const sim::AgentState& me = world.pursuers[agent_index];
    return assemble(world.pursuers, agent_index, detections,
                    RelativeTarget{world.target.p - me.p, world.target.v - me.v});
}

Observation build_observation(std::span<const sim::AgentState> pursuers, std::size_t agent_index,
                              const std::vector<bool>& detections,
                              const std::optional<Vec6>& target_estimate) {
    std::optional<RelativeTarget> rel;
    if (target_estimate && agent_index < pursuers.size()) {
        const sim::AgentState& me = pursuers[agent_index];
        rel = RelativeTarget{target_estimate->head<2>() - me.p, target_estimate->segment<2>(3) - me.v};
    }
    return assemble(pursuers, agent_index, detections, rel);
}

double observability(std::span<const Vec2> bearings) {
    Mat2 info = Mat2::Zero();
    for (const Vec2& l : bearings) {
        info += Mat2::Identity() - l * l.transpose();
    }
    return info.determinant();
}

std::vector<Vec2> detecting_bearings(const sim::WorldState& world, const std::vector<bool>& detections) {
    std::vector<Vec2> out;
    for (std::size_t i = 0; i < world.pursuers.size(); ++i) {
        if (i < detections.size() && detections[i]) {
            const Vec2 d = world.target.p - world.pursuers[i].p;
            const double n = d.norm();
            if (n > geometry::kEpsNorm) {
                out.emplace_back(d / n);
            }
        }
    }
    return out;
}

double closest_range(const sim::WorldState& world) {
    double best = std::numeric_limits<double>::infinity();
    for (const sim::AgentState& p : world.pursuers) {
        best = std::min(best, (world.target.p - p.p).norm());
    }
    return best;
}

double reward(const sim::WorldState& world, std::size_t agent_index,
              const std::vector<bool>& detections, const RewardEvents& events,
              const RewardWeights& w) {
    const sim::AgentState& me = world.pursuers.at(agent_index);
    const bool detecting = agent_index < detections.size() && detections[agent_index];

    double r = 0.0;
    if (me.omega >= w.ccw_min && !detecting) {
        r += w.r1;
    }
    if ((world.target.p - me.p).norm() > geometry::kEpsNorm &&
        sim::heading_alignment(world, agent_index) >= w.fov_dot_threshold) {
        r += w.r2;
    }
    if (closest_range(world) <= w.range_threshold) {
        r += w.r3;
    }
    const std::vector<Vec2> bearings = detecting_bearings(world, detections);
    r += w.r4_gain * observability(bearings);
    if (events.collided) {
        r += w.r5;
    }
    return r;
}

}  // namespace bp::learner
