#include "bp/learner/env.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "bp/errors.hpp"

namespace bp::learner {

namespace {

constexpr double kSpawnMargin = 0.3;

Vec2 circle_velocity(const Vec2& p, const Vec2& center, double radius, double speed, double dir) {
    const Vec2 rel = p - center;
    const double r = rel.norm();
    if (r < 1e-6) {
        return Vec2(speed, 0.0);
    }
    const Vec2 radial = rel / r;
    const Vec2 tangent(-radial.y() * dir, radial.x() * dir);
    return speed * tangent + (radius - r) * radial;
}

}  // namespace

EvaderDriver::EvaderDriver(const EvaderSpec& spec, std::uint64_t seed) : spec_(spec), rng_(seed) {}

Vec2 EvaderDriver::desired_velocity(const sim::AgentState& target, double t,
                                    const sim::Arena& arena, double dt) {
    switch (spec_.script) {
        case EvaderScript::Static:
            return Vec2::Zero();
        case EvaderScript::Circle:
            return circle_velocity(target.p, spec_.center, spec_.radius, spec_.speed, 1.0);
        case EvaderScript::IrregularCircle: {
            const double radius = spec_.radius * (1.0 + 0.25 * std::sin(0.45 * t));
            const double speed = spec_.speed * (1.0 + 0.3 * std::sin(0.8 * t + 1.0));
            return circle_velocity(target.p, spec_.center, radius, speed, 1.0);
        }
        case EvaderScript::AggressiveTurn: {
            const bool turned = t >= spec_.turn_time;
            const bool burst = turned && t < spec_.turn_time + 2.0;
            return circle_velocity(target.p, spec_.center, spec_.radius,
                                   spec_.speed * (burst ? 2.0 : 1.0), turned ? -1.0 : 1.0);
        }
        case EvaderScript::Waypoints: {
            if (spec_.waypoints.empty()) {
                return Vec2::Zero();
            }
            Vec2 d = spec_.waypoints[waypoint_] - target.p;
            if (d.norm() < 0.1) {
                waypoint_ = (waypoint_ + 1) % spec_.waypoints.size();
                d = spec_.waypoints[waypoint_] - target.p;
            }
            const double n = d.norm();
            return n > 1e-9 ? Vec2(spec_.speed * d / n) : Vec2::Zero();
        }
        case EvaderScript::RandomAccel: {
            std::uniform_real_distribution<double> u(-1.0, 1.0);
            Vec2 a(u(rng_), u(rng_));
            if (a.norm() > 1.0) {
                a.normalize();
            }
            random_velocity_ += spec_.max_accel * dt * a;
            // Steer back toward the interior near the walls.
            const double margin = 0.6;
            if (target.p.x() < arena.x_min + margin) random_velocity_.x() = std::abs(random_velocity_.x());
            if (target.p.x() > arena.x_max - margin) random_velocity_.x() = -std::abs(random_velocity_.x());
            if (target.p.y() < arena.y_min + margin) random_velocity_.y() = std::abs(random_velocity_.y());
            if (target.p.y() > arena.y_max - margin) random_velocity_.y() = -std::abs(random_velocity_.y());
            if (random_velocity_.norm() > spec_.speed) {
                random_velocity_ *= spec_.speed / random_velocity_.norm();
            }
            return random_velocity_;
        }
    }
    return Vec2::Zero();
}

sim::Command velocity_command(const sim::AgentState& agent, const Vec2& v_world) {
    const Vec2 vb = geometry::rotation2d(agent.theta).transpose() * v_world;
    return {0.0, vb.x(), vb.y()};
}

sim::WorldState spawn_world(const ScenarioConfig& config, std::mt19937_64& rng) {
    sim::WorldState w;
    w.arena = config.arena;
    const sim::Arena& ar = config.arena;
    std::uniform_real_distribution<double> ux(ar.x_min + kSpawnMargin, ar.x_max - kSpawnMargin);
    std::uniform_real_distribution<double> uy(ar.y_min + kSpawnMargin, ar.y_max - kSpawnMargin);
    std::uniform_real_distribution<double> uth(-std::numbers::pi, std::numbers::pi);

    std::vector<Vec2> placed;
    const double clearance = 2.0 * config.agent_radius + 0.1;
    auto free_spot = [&]() {
        Vec2 p;
        for (int attempt = 0; attempt < 1000; ++attempt) {
            p = Vec2(ux(rng), uy(rng));
            const bool clear = std::all_of(placed.begin(), placed.end(),
                                           [&](const Vec2& q) { return (p - q).norm() >= clearance; });
            if (clear) {
                break;
            }
        }
        return p;
    };

    // Fixed poses claim their spots first.
    for (const AgentSpec& spec : config.team) {
        if (spec.pose) {
            placed.emplace_back((*spec.pose)[0], (*spec.pose)[1]);
        }
    }
    if (config.evader.start) {
        placed.push_back(*config.evader.start);
    }

    w.target.mode = config.evader.mode;
    w.target.radius = config.agent_radius;
    w.target.mass = config.agent_mass;
    if (config.evader.start) {
        w.target.p = *config.evader.start;
    } else {
        w.target.p = free_spot();
        placed.push_back(w.target.p);
    }

    for (const AgentSpec& spec : config.team) {
        sim::AgentState a;
        a.mode = spec.mode;
        a.radius = config.agent_radius;
        a.mass = config.agent_mass;
        if (spec.pose) {
            a.p = Vec2((*spec.pose)[0], (*spec.pose)[1]);
            a.theta = geometry::wrap_angle((*spec.pose)[2]);
        } else {
            a.p = free_spot();
            placed.push_back(a.p);
            a.theta = geometry::wrap_angle(uth(rng));
        }
        w.pursuers.push_back(a);
    }
    return w;
}

PursuitEnv::PursuitEnv(ScenarioConfig config, TargetSource source)
    : config_(std::move(config)), source_(source) {
    if (config_.team.empty()) {
        throw ShapeMismatch("PursuitEnv: team must not be empty");
    }
    config_.filter.dt = config_.decision_dt();
    config_.physics.dt = 1.0 / config_.physics_hz;
    config_.physics.substeps = static_cast<int>(std::lround(config_.physics_hz / config_.decision_hz));
    reset(config_.seed);
}

void PursuitEnv::reset(std::uint64_t seed) {
    rng_.seed(seed);
    world_ = spawn_world(config_, rng_);
    evader_.emplace(config_.evader, seed ^ 0x9e3779b97f4a7c15ULL);
    filter_ = estimator::initial_state(config_.filter);
    tick_ = 0;
    sense_and_fuse(false, false);
}

void PursuitEnv::sense_and_fuse(bool predict, bool drop) {
    const std::size_t n = world_.pursuers.size();
    detections_.assign(n, false);
    std::vector<estimator::BearingMeasurement> ms;
    for (std::size_t i = 0; i < n; ++i) {
        if (auto m = sim::sense(world_, i, config_.sensor, rng_)) {
            detections_[i] = true;
            if (!drop) {
                ms.push_back(*m);
            }
        }
    }
    if (predict) {
        filter_ = estimator::predict(filter_, config_.filter);
    }
    estimator::CorrectionReport report;
    filter_ = estimator::correct(filter_, ms, &report);
    last_measurements_ = report.fused;
    last_skipped_ = report.skipped_degenerate_range;
}

StepInfo PursuitEnv::step(std::span<const sim::Command> pursuer_commands,
                          const std::optional<Vec2>& evader_velocity, bool drop_measurements) {
    const std::size_t n = world_.pursuers.size();
    if (pursuer_commands.size() != n) {
        throw ShapeMismatch("PursuitEnv::step: one command per pursuer required");
    }
    const Vec2 v_evader = evader_velocity
                              ? *evader_velocity
                              : evader_->desired_velocity(world_.target, world_.t, world_.arena,
                                                          config_.decision_dt());
    std::vector<sim::Command> cmds(pursuer_commands.begin(), pursuer_commands.end());
    cmds.push_back(velocity_command(world_.target, v_evader));

    const sim::TickOutcome outcome = sim::advance(world_, cmds, config_.physics);
    ++tick_;
    sense_and_fuse(true, drop_measurements);

    StepInfo info;
    info.collided.assign(outcome.collided.begin(), outcome.collided.begin() + static_cast<long>(n));
    info.rewards.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        info.rewards[i] = reward(world_, i, detections_, {info.collided[i]}, config_.reward);
    }
    info.measurements = last_measurements_;
    info.skipped_measurements = last_skipped_;
    return info;
}

std::optional<Vec6> PursuitEnv::estimate() const {
    try {
        return estimator::estimate(filter_).first;
    } catch (const NotYetObservable&) {
        return std::nullopt;
    }
}

std::optional<Mat6> PursuitEnv::estimate_covariance() const {
    try {
        return estimator::estimate(filter_).second;
    } catch (const NotYetObservable&) {
        return std::nullopt;
    }
}

std::vector<Observation> PursuitEnv::observations() const {
    std::vector<Observation> out;
    const std::size_t n = world_.pursuers.size();
    out.reserve(n);
    if (source_ == TargetSource::GroundTruth) {
        for (std::size_t i = 0; i < n; ++i) {
            out.push_back(build_observation(world_, i, detections_));
        }
    } else {
        const std::optional<Vec6> est = estimate();
        for (std::size_t i = 0; i < n; ++i) {
            out.push_back(build_observation(std::span<const sim::AgentState>(world_.pursuers), i,
                                            detections_, est));
        }
    }
    return out;
}

}  // namespace bp::learner
