#include "bp/scenario/episode.hpp"

#include <cmath>
#include <limits>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "bp/errors.hpp"
#include "bp/estimator.hpp"
#include "bp/geometry.hpp"
#include "bp/learner/env.hpp"

namespace bp::scenario {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Fixed-precision rendering keeps the CSV byte-stable across runs.
std::string num(double v) {
    if (std::isnan(v)) {
        return "";
    }
    return fmt::format("{:.9g}", v);
}

bool world_finite(const sim::WorldState& w) {
    auto ok = [](const sim::AgentState& a) {
        return a.p.allFinite() && a.v.allFinite() && std::isfinite(a.theta) && std::isfinite(a.omega);
    };
    for (const auto& a : w.pursuers) {
        if (!ok(a)) return false;
    }
    return ok(w.target);
}

}  // namespace

RunMode parse_run_mode(const std::string& s) {
    if (s == "deploy") return RunMode::Deploy;
    if (s == "ground-truth" || s == "ground_truth") return RunMode::GroundTruth;
    throw ValidationError("mode", "expected deploy or ground-truth, got '" + s + "'");
}

std::string to_string(RunMode mode) { return mode == RunMode::Deploy ? "deploy" : "ground-truth"; }

void write_trajectory_header(std::ostream& os, std::size_t pursuers) {
    fmt::print(os, "# format_version={}\n", kFormatVersion);
    std::string h = "tick,t,target_x,target_y,target_vx,target_vy";
    for (std::size_t i = 0; i < pursuers; ++i) {
        h += fmt::format(",p{0}_x,p{0}_y,p{0}_vx,p{0}_vy,p{0}_theta,p{0}_omega,p{0}_detect,p{0}_cmd_w,p{0}_cmd_vx,p{0}_cmd_vy",
                         i);
    }
    h += ",est_x,est_y,est_vx,est_vy,position_error,velocity_error,range_error,observability,detection_count\n";
    os << h;
}

RunMetrics run_episode(const ScenarioConfig& config, std::span<const policy::DenseNet> policies,
                       const EpisodeOptions& options) {
    const std::size_t n = config.team.size();
    if (policies.size() != n) {
        throw ShapeMismatch(fmt::format("run_episode: {} policies for {} pursuers", policies.size(), n));
    }
    const int obs_dim = learner::Observation::size(n);
    for (const auto& p : policies) {
        policy::validate(p);
        if (p.input_dim() != obs_dim || p.output_dim() != 3) {
            throw ShapeMismatch(fmt::format("run_episode: policy is {}->{}, expected {}->3", p.input_dim(),
                                            p.output_dim(), obs_dim));
        }
    }

    const TargetSource source =
        options.mode == RunMode::Deploy ? TargetSource::Deploy : TargetSource::GroundTruth;
    learner::PursuitEnv env(config, source);
    env.reset(options.seed);
    const int ticks = options.ticks.value_or(config.ticks(config.duration));

    if (options.trajectory) {
        write_trajectory_header(*options.trajectory, n);
    }
    if (options.filter_trace) {
        estimator::write_trace_header(*options.filter_trace);
    }

    RunMetrics m;
    std::vector<sim::Command> cmds(n);
    for (int k = 0; k < ticks; ++k) {
        const std::vector<learner::Observation> obs = env.observations();
        for (std::size_t i = 0; i < n; ++i) {
            const Eigen::VectorXd a = policy::forward(policies[i], obs[i].values);
            cmds[i] = sim::Command{a(0), a(1), a(2)};
        }
        env.step(cmds);

        const sim::WorldState& w = env.world();
        const estimator::InformationState& f = env.filter_state();
        if (!world_finite(w) || !f.y.allFinite() || !f.Y.allFinite()) {
            throw NumericalFailure(fmt::format("non-finite state at tick {}", k));
        }
        const std::optional<Vec6> est = env.estimate();
        const std::vector<bool>& det = env.detections();
        int count = 0;
        for (bool d : det) count += d ? 1 : 0;

        const double range_err = learner::closest_range(w) - config.desired_range;
        const double obsv = learner::observability(learner::detecting_bearings(w, det));
        const double pos_err = est ? (est->head<2>() - w.target.p).norm() : kNaN;
        const double vel_err = est ? (est->segment<2>(3) - w.target.v).norm() : kNaN;

        m.t.push_back(w.t);
        m.detection_count.push_back(count);
        m.range_error.push_back(range_err);
        m.observability.push_back(obsv);
        m.position_error.push_back(pos_err);
        m.velocity_error.push_back(vel_err);
        m.commands.push_back(cmds);

        if (options.trajectory) {
            std::string row = fmt::format("{},{},{},{},{},{}", k + 1, num(w.t), num(w.target.p.x()),
                                          num(w.target.p.y()), num(w.target.v.x()), num(w.target.v.y()));
            for (std::size_t i = 0; i < n; ++i) {
                const sim::AgentState& a = w.pursuers[i];
                row += fmt::format(",{},{},{},{},{},{},{},{},{},{}", num(a.p.x()), num(a.p.y()), num(a.v.x()),
                                   num(a.v.y()), num(a.theta), num(a.omega), det[i] ? 1 : 0, num(cmds[i].v_h),
                                   num(cmds[i].v_x), num(cmds[i].v_y));
            }
            if (est) {
                row += fmt::format(",{},{},{},{}", num((*est)(0)), num((*est)(1)), num((*est)(3)), num((*est)(4)));
            } else {
                row += ",,,,";
            }
            row += fmt::format(",{},{},{},{},{}\n", num(pos_err), num(vel_err), num(range_err), num(obsv), count);
            *options.trajectory << row;
        }
        if (options.filter_trace) {
            estimator::write_trace_row(*options.filter_trace, f, env.last_measurement_count());
        }
    }
    return m;
}

}  // namespace bp::scenario
