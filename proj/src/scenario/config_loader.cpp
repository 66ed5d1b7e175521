#include "bp/scenario/config_loader.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "bp/errors.hpp"

namespace bp::scenario {

namespace {

/// Typed access to one YAML mapping that remembers which keys were consumed.
class Section {
public:
    Section(YAML::Node node, std::string path) : node_(std::move(node)), path_(std::move(path)) {
        if (node_ && !node_.IsNull() && !node_.IsMap()) {
            throw ValidationError(path_.empty() ? "<root>" : path_, "expected a mapping");
        }
    }

    std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    YAML::Node raw(const std::string& key) {
        known_.insert(key);
        if (!node_ || node_.IsNull()) {
            return YAML::Node();
        }
        return node_[key];
    }

    template <typename T>
    void read(const std::string& key, T& out) {
        const YAML::Node n = raw(key);
        if (!n || n.IsNull()) {
            return;
        }
        try {
            out = n.as<T>();
        } catch (const YAML::Exception&) {
            throw ValidationError(field(key), "wrong type (line " + std::to_string(n.Mark().line + 1) + ")");
        }
    }

    Section child(const std::string& key) { return Section(raw(key), field(key)); }

    void finish() const {
        if (!node_ || node_.IsNull()) {
            return;
        }
        for (const auto& kv : node_) {
            const auto key = kv.first.as<std::string>();
            if (known_.count(key) == 0) {
                throw ValidationError(field(key), "unknown key");
            }
        }
    }

private:
    YAML::Node node_;
    std::string path_;
    std::set<std::string> known_;
};

void require(bool ok, const std::string& field, const std::string& why) {
    if (!ok) {
        throw ValidationError(field, why);
    }
}

sim::MotionMode parse_mode(const std::string& s, const std::string& field) {
    if (s == "omni") return sim::MotionMode::Omni;
    if (s == "unicycle") return sim::MotionMode::Unicycle;
    throw ValidationError(field, "expected omni or unicycle, got '" + s + "'");
}

EvaderScript parse_script(const std::string& s, const std::string& field) {
    if (s == "static") return EvaderScript::Static;
    if (s == "circle") return EvaderScript::Circle;
    if (s == "irregular_circle") return EvaderScript::IrregularCircle;
    if (s == "waypoints") return EvaderScript::Waypoints;
    if (s == "random_accel") return EvaderScript::RandomAccel;
    if (s == "aggressive_turn") return EvaderScript::AggressiveTurn;
    throw ValidationError(field, "unknown evader script '" + s + "'");
}

Vec2 read_vec2(const std::vector<double>& v, const std::string& field) {
    require(v.size() == 2, field, "expected [x, y]");
    return {v[0], v[1]};
}

void positive(double v, const std::string& field) { require(std::isfinite(v) && v > 0.0, field, "must be positive"); }
void non_negative(double v, const std::string& field) {
    require(std::isfinite(v) && v >= 0.0, field, "must be non-negative");
}

ScenarioConfig from_yaml(const YAML::Node& root_node) {
    ScenarioConfig c;
    Section root(root_node, "");

    root.read("format_version", c.format_version);
    require(c.format_version == 1, "format_version", "only version 1 is supported");
    long long seed = static_cast<long long>(c.seed);
    root.read("seed", seed);
    require(seed >= 0, "seed", "must be non-negative");
    c.seed = static_cast<std::uint64_t>(seed);
    root.read("duration", c.duration);
    non_negative(c.duration, "duration");

    {
        Section s = root.child("arena");
        s.read("x_min", c.arena.x_min);
        s.read("x_max", c.arena.x_max);
        s.read("y_min", c.arena.y_min);
        s.read("y_max", c.arena.y_max);
        s.finish();
        require(c.arena.x_max > c.arena.x_min, "arena.x_max", "must exceed x_min");
        require(c.arena.y_max > c.arena.y_min, "arena.y_max", "must exceed y_min");
    }
    {
        Section s = root.child("control");
        s.read("decision_hz", c.decision_hz);
        s.read("physics_hz", c.physics_hz);
        s.read("desired_range", c.desired_range);
        s.finish();
        positive(c.decision_hz, "control.decision_hz");
        positive(c.physics_hz, "control.physics_hz");
        positive(c.desired_range, "control.desired_range");
        const double ratio = c.physics_hz / c.decision_hz;
        require(ratio >= 1.0 && std::abs(ratio - std::round(ratio)) < 1e-9, "control.physics_hz",
                "must be an integer multiple of decision_hz");
    }
    {
        Section s = root.child("agents");
        s.read("radius", c.agent_radius);
        s.read("mass", c.agent_mass);
        s.read("k_v", c.physics.gains.k_v);
        s.read("k_omega", c.physics.gains.k_omega);
        s.read("k_agent", c.physics.stiffness.k_agent);
        s.read("k_wall", c.physics.stiffness.k_wall);
        s.read("v_max", c.physics.pursuer_bounds.v_max);
        s.read("w_max", c.physics.pursuer_bounds.w_max);
        s.read("target_v_max", c.physics.target_bounds.v_max);
        s.read("target_w_max", c.physics.target_bounds.w_max);
        s.finish();
        positive(c.agent_radius, "agents.radius");
        positive(c.agent_mass, "agents.mass");
        positive(c.physics.gains.k_v, "agents.k_v");
        positive(c.physics.gains.k_omega, "agents.k_omega");
        positive(c.physics.stiffness.k_agent, "agents.k_agent");
        positive(c.physics.stiffness.k_wall, "agents.k_wall");
        positive(c.physics.pursuer_bounds.v_max, "agents.v_max");
        positive(c.physics.pursuer_bounds.w_max, "agents.w_max");
        positive(c.physics.target_bounds.v_max, "agents.target_v_max");
        positive(c.physics.target_bounds.w_max, "agents.target_w_max");
    }
    {
        Section s = root.child("sensor");
        double fov_deg = 30.0;
        double variance = 1e-4;
        s.read("fov", fov_deg);
        s.read("noise_variance", variance);
        s.finish();
        require(std::isfinite(fov_deg) && fov_deg > 0.0 && fov_deg < 360.0, "sensor.fov",
                "must lie in (0, 360) degrees");
        non_negative(variance, "sensor.noise_variance");
        c.sensor.fov = deg2rad(fov_deg);
        c.sensor.sigma = variance * Mat3::Identity();
    }
    {
        Section s = root.child("filter");
        double q = 0.25;
        double info = 1e-2;
        std::vector<double> x0(6, 0.0);
        s.read("process_noise", q);
        s.read("initial_information", info);
        s.read("initial_estimate", x0);
        s.finish();
        non_negative(q, "filter.process_noise");
        positive(info, "filter.initial_information");
        require(x0.size() == 6, "filter.initial_estimate", "expected 6 values [p; v]");
        c.filter.Q = q * Mat3::Identity();
        c.filter.initial_information = info * Mat6::Identity();
        c.filter.initial_estimate = Eigen::Map<const Vec6>(x0.data());
    }
    {
        Section s = root.child("reward");
        double fov_threshold_deg = 15.0;
        s.read("r1", c.reward.r1);
        s.read("r2", c.reward.r2);
        s.read("r3", c.reward.r3);
        s.read("r4_gain", c.reward.r4_gain);
        s.read("r5", c.reward.r5);
        s.read("fov_threshold", fov_threshold_deg);
        s.read("range_threshold", c.reward.range_threshold);
        s.read("ccw_min", c.reward.ccw_min);
        s.finish();
        require(c.reward.r1 > 0.0, "reward.r1", "must be positive");
        require(c.reward.r5 < 0.0, "reward.r5", "must be negative");
        require(fov_threshold_deg > 0.0 && fov_threshold_deg <= 180.0, "reward.fov_threshold",
                "must lie in (0, 180] degrees");
        positive(c.reward.range_threshold, "reward.range_threshold");
        non_negative(c.reward.ccw_min, "reward.ccw_min");
        c.reward.fov_dot_threshold = std::cos(deg2rad(fov_threshold_deg));
    }
    {
        const YAML::Node team = root.raw("team");
        if (team && !team.IsNull()) {
            require(team.IsSequence(), "team", "expected a list of agents");
            c.team.clear();
            for (std::size_t i = 0; i < team.size(); ++i) {
                Section s(team[i], "team[" + std::to_string(i) + "]");
                std::string mode = "omni";
                std::vector<double> pose;
                s.read("mode", mode);
                s.read("pose", pose);
                s.finish();
                AgentSpec a;
                a.mode = parse_mode(mode, s.field("mode"));
                if (!pose.empty()) {
                    require(pose.size() == 3, s.field("pose"), "expected [x, y, heading_deg]");
                    a.pose = std::array<double, 3>{pose[0], pose[1], deg2rad(pose[2])};
                }
                c.team.push_back(a);
            }
        }
        require(!c.team.empty(), "team", "at least one pursuer is required");
    }
    {
        Section s = root.child("evader");
        std::string script = "irregular_circle";
        std::string mode = "omni";
        std::vector<double> start;
        std::vector<double> center{c.evader.center.x(), c.evader.center.y()};
        std::vector<std::vector<double>> waypoints;
        s.read("script", script);
        s.read("mode", mode);
        s.read("start", start);
        s.read("center", center);
        s.read("radius", c.evader.radius);
        s.read("speed", c.evader.speed);
        s.read("turn_time", c.evader.turn_time);
        s.read("max_accel", c.evader.max_accel);
        s.read("waypoints", waypoints);
        s.finish();
        c.evader.script = parse_script(script, "evader.script");
        c.evader.mode = parse_mode(mode, "evader.mode");
        if (!start.empty()) {
            c.evader.start = read_vec2(start, "evader.start");
        }
        c.evader.center = read_vec2(center, "evader.center");
        positive(c.evader.radius, "evader.radius");
        non_negative(c.evader.speed, "evader.speed");
        non_negative(c.evader.turn_time, "evader.turn_time");
        non_negative(c.evader.max_accel, "evader.max_accel");
        for (std::size_t i = 0; i < waypoints.size(); ++i) {
            c.evader.waypoints.push_back(read_vec2(waypoints[i], "evader.waypoints[" + std::to_string(i) + "]"));
        }
        require(c.evader.script != EvaderScript::Waypoints || !c.evader.waypoints.empty(),
                "evader.waypoints", "required by the waypoints script");
    }
    {
        Section s = root.child("training");
        TrainingParams& t = c.training;
        std::string source = "ground_truth";
        s.read("episodes", t.episodes);
        s.read("episode_ticks", t.episode_ticks);
        s.read("gamma", t.gamma);
        s.read("tau", t.tau);
        s.read("actor_lr", t.actor_lr);
        s.read("critic_lr", t.critic_lr);
        s.read("batch_size", t.batch_size);
        s.read("buffer_size", t.buffer_size);
        s.read("warmup", t.warmup);
        s.read("update_every", t.update_every);
        s.read("noise_scale", t.noise_scale);
        s.read("noise_decay", t.noise_decay);
        s.read("noise_min", t.noise_min);
        s.read("eval_every", t.eval_every);
        s.read("eval_episodes", t.eval_episodes);
        s.read("checkpoint_every", t.checkpoint_every);
        s.read("actor_hidden", t.actor_hidden);
        s.read("critic_hidden", t.critic_hidden);
        s.read("lipschitz", t.lipschitz);
        s.read("spectral_norm", t.spectral_norm);
        s.read("target_source", source);
        s.finish();
        require(t.episodes >= 0, "training.episodes", "must be non-negative");
        require(t.episode_ticks > 0, "training.episode_ticks", "must be positive");
        require(t.gamma >= 0.0 && t.gamma <= 1.0, "training.gamma", "must lie in [0, 1]");
        require(t.tau > 0.0 && t.tau <= 1.0, "training.tau", "must lie in (0, 1]");
        positive(t.actor_lr, "training.actor_lr");
        positive(t.critic_lr, "training.critic_lr");
        require(t.batch_size > 0, "training.batch_size", "must be positive");
        require(t.buffer_size > 0, "training.buffer_size", "must be positive");
        require(t.warmup >= 0, "training.warmup", "must be non-negative");
        require(t.update_every > 0, "training.update_every", "must be positive");
        non_negative(t.noise_scale, "training.noise_scale");
        require(t.noise_decay > 0.0 && t.noise_decay <= 1.0, "training.noise_decay", "must lie in (0, 1]");
        non_negative(t.noise_min, "training.noise_min");
        require(t.eval_every >= 0, "training.eval_every", "must be non-negative");
        require(t.eval_episodes > 0, "training.eval_episodes", "must be positive");
        require(t.checkpoint_every >= 0, "training.checkpoint_every", "must be non-negative");
        for (int w : t.actor_hidden) require(w > 0, "training.actor_hidden", "widths must be positive");
        for (int w : t.critic_hidden) require(w > 0, "training.critic_hidden", "widths must be positive");
        positive(t.lipschitz, "training.lipschitz");
        if (source == "ground_truth") {
            t.target_source = TargetSource::GroundTruth;
        } else if (source == "deploy") {
            t.target_source = TargetSource::Deploy;
        } else {
            throw ValidationError("training.target_source", "expected ground_truth or deploy");
        }
    }
    root.finish();

    c.physics.dt = 1.0 / c.physics_hz;
    c.physics.substeps = static_cast<int>(std::lround(c.physics_hz / c.decision_hz));
    c.filter.dt = c.decision_dt();
    return c;
}

}  // namespace

ScenarioConfig parse_config(std::string_view text) {
    YAML::Node root;
    try {
        root = YAML::Load(std::string(text));
    } catch (const YAML::ParserException& e) {
        throw ParseError("config: " + e.msg, e.mark.line + 1);
    }
    return from_yaml(root);
}

ScenarioConfig load_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) {
        throw IoError("cannot read config " + path.string());
    }
    std::ostringstream ss;
    ss << is.rdbuf();
    return parse_config(ss.str());
}

std::string config_schema() {
    return R"(Scenario file (YAML). Every key is optional; defaults shown.
  format_version: 1
  seed: 1
  duration: 30                # s, one simulate/evaluate episode
  arena: {x_min: -2.5, x_max: 2.5, y_min: -2.5, y_max: 2.5}
  control: {decision_hz: 10, physics_hz: 100, desired_range: 0.75}
  agents: {radius: 0.15, mass: 1.0, k_v: 5, k_omega: 5, k_agent: 100, k_wall: 100,
           v_max: 1.0, w_max: 2.0, target_v_max: 1.0, target_w_max: 2.0}
  sensor: {fov: 30, noise_variance: 1.0e-4}           # fov: full cone, degrees
  filter: {process_noise: 0.25, initial_information: 0.01,
           initial_estimate: [0, 0, 0, 0, 0, 0]}
  reward: {r1: 0.2, r2: 1, r3: 1, r4_gain: 1, r5: -10,
           fov_threshold: 15, range_threshold: 1.0, ccw_min: 0.1}
  team:                       # one entry per pursuer; pose omitted = random spawn
    - {mode: unicycle}        # pose: [x, y, heading_deg]
    - {mode: omni}
    - {mode: omni}
  evader: {script: irregular_circle, mode: omni, center: [0, 0], radius: 1.0,
           speed: 0.3, turn_time: 24, max_accel: 0.5}
          # script: static | circle | irregular_circle | waypoints | random_accel | aggressive_turn
          # start: [x, y] (random when omitted); waypoints: [[x, y], ...]
  training: {episodes: 2000, episode_ticks: 300, gamma: 0.95, tau: 0.01,
             actor_lr: 1.0e-4, critic_lr: 1.0e-3, batch_size: 256, buffer_size: 100000,
             warmup: 1000, update_every: 1, noise_scale: 0.2, noise_decay: 0.9995,
             noise_min: 0.0, eval_every: 50, eval_episodes: 10, checkpoint_every: 100,
             actor_hidden: [64, 64], critic_hidden: [128, 128], lipschitz: 2.5,
             spectral_norm: true, target_source: ground_truth}   # or deploy
)";
}

}  // namespace bp::scenario
