#include "bp/learner/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "bp/errors.hpp"
#include "bp/learner/env.hpp"

namespace bp::learner {

namespace fs = std::filesystem;

namespace {

constexpr int kCheckpointVersion = 1;

VectorXd action_scale(const ScenarioConfig& cfg) {
    const auto& b = cfg.physics.pursuer_bounds;
    return (VectorXd(3) << b.w_max, b.v_max, b.v_max).finished();
}

std::vector<sim::Command> to_commands(const std::vector<VectorXd>& normalized, const VectorXd& scale) {
    std::vector<sim::Command> cmds;
    cmds.reserve(normalized.size());
    for (const VectorXd& a : normalized) {
        cmds.push_back({a(0) * scale(0), a(1) * scale(1), a(2) * scale(2)});
    }
    return cmds;
}

std::vector<VectorXd> obs_values(const std::vector<Observation>& obs) {
    std::vector<VectorXd> out;
    out.reserve(obs.size());
    for (const Observation& o : obs) {
        out.push_back(o.values);
    }
    return out;
}

// Runs one episode with a caller-supplied action chooser; returns (mean reward, range error).
template <typename Chooser>
std::pair<double, double> rollout(PursuitEnv& env, std::uint64_t seed, int ticks, Chooser&& choose) {
    env.reset(seed);
    const std::size_t n = env.world().pursuers.size();
    const VectorXd scale = action_scale(env.config());
    double reward_sum = 0.0;
    double range_sum = 0.0;
    int range_count = 0;
    for (int k = 0; k < ticks; ++k) {
        const std::vector<Observation> obs = env.observations();
        std::vector<VectorXd> acts;
        for (std::size_t i = 0; i < n; ++i) {
            acts.push_back(choose(i, obs[i].values));
        }
        const StepInfo info = env.step(to_commands(acts, scale));
        for (double r : info.rewards) {
            reward_sum += r;
        }
        if (k >= ticks / 2) {
            range_sum += std::abs(closest_range(env.world()) - env.config().desired_range);
            ++range_count;
        }
    }
    const double mean_reward = ticks > 0 ? reward_sum / (static_cast<double>(ticks) * n) : 0.0;
    const double range_err = range_count > 0 ? range_sum / range_count : 0.0;
    return {mean_reward, range_err};
}

EvalSummary summarize_eval(std::vector<double> rewards, std::vector<double> ranges) {
    EvalSummary s;
    s.episode_reward = std::move(rewards);
    s.episode_range_error = std::move(ranges);
    if (!s.episode_reward.empty()) {
        for (double r : s.episode_reward) s.mean_reward += r;
        for (double r : s.episode_range_error) s.mean_range_error += r;
        s.mean_reward /= static_cast<double>(s.episode_reward.size());
        s.mean_range_error /= static_cast<double>(s.episode_range_error.size());
    }
    return s;
}

std::string rng_to_string(const std::mt19937_64& rng) {
    std::ostringstream os;
    os << rng;
    return os.str();
}

std::mt19937_64 rng_from_string(const std::string& s) {
    std::istringstream is(s);
    std::mt19937_64 rng;
    is >> rng;
    if (!is) {
        throw CheckpointError("checkpoint: bad generator state");
    }
    return rng;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw IoError("cannot write " + path.string());
    }
    os << text;
}

struct TrainerState {
    int next_episode = 0;
    long total_steps = 0;
    std::uintmax_t csv_bytes = 0;
    std::mt19937_64 rng;
    std::vector<AgentNets> nets;
    ReplayBuffer replay{1};
};

void save_checkpoint(const fs::path& out, const TrainerState& st) {
    const fs::path tmp = out / "checkpoint.tmp";
    const fs::path dst = out / "checkpoint";
    fs::remove_all(tmp);
    fs::create_directories(tmp);

    nlohmann::json j;
    j["format_version"] = kCheckpointVersion;
    j["next_episode"] = st.next_episode;
    j["total_steps"] = st.total_steps;
    j["csv_bytes"] = st.csv_bytes;
    j["rng"] = rng_to_string(st.rng);
    nlohmann::json agents = nlohmann::json::array();
    for (const AgentNets& a : st.nets) {
        nlohmann::json ja;
        ja["actor"] = policy::to_json(a.actor);
        ja["critic"] = policy::to_json(a.critic);
        ja["actor_target"] = policy::to_json(a.actor_target);
        ja["critic_target"] = policy::to_json(a.critic_target);
        ja["actor_opt"] = a.actor_opt.to_json();
        ja["critic_opt"] = a.critic_opt.to_json();
        nlohmann::json sv = nlohmann::json::array();
        for (const VectorXd& v : a.spectral.right_vectors) {
            sv.push_back(std::vector<double>(v.data(), v.data() + v.size()));
        }
        ja["spectral"] = std::move(sv);
        agents.push_back(std::move(ja));
    }
    j["agents"] = std::move(agents);
    write_text(tmp / "state.json", j.dump() + "\n");
    st.replay.save(tmp / "replay.bin");

    fs::remove_all(dst);
    fs::rename(tmp, dst);
}

TrainerState load_checkpoint(const fs::path& out, std::size_t agents, int obs_dim) {
    const fs::path dir = out / "checkpoint";
    std::ifstream is(dir / "state.json", std::ios::binary);
    if (!is) {
        throw CheckpointError("no checkpoint found in " + dir.string());
    }
    TrainerState st;
    try {
        const nlohmann::json j = nlohmann::json::parse(is);
        if (j.at("format_version").get<int>() != kCheckpointVersion) {
            throw CheckpointError("checkpoint: unsupported format_version");
        }
        st.next_episode = j.at("next_episode").get<int>();
        st.total_steps = j.at("total_steps").get<long>();
        st.csv_bytes = j.at("csv_bytes").get<std::uintmax_t>();
        st.rng = rng_from_string(j.at("rng").get<std::string>());
        for (const auto& ja : j.at("agents")) {
            AgentNets a;
            a.actor = policy::from_json(ja.at("actor"));
            a.critic = policy::from_json(ja.at("critic"));
            a.actor_target = policy::from_json(ja.at("actor_target"));
            a.critic_target = policy::from_json(ja.at("critic_target"));
            a.actor_opt = Adam::from_json(ja.at("actor_opt"));
            a.critic_opt = Adam::from_json(ja.at("critic_opt"));
            for (const auto& v : ja.at("spectral")) {
                const auto d = v.get<std::vector<double>>();
                a.spectral.right_vectors.push_back(
                    Eigen::Map<const VectorXd>(d.data(), static_cast<Eigen::Index>(d.size())));
            }
            st.nets.push_back(std::move(a));
        }
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("checkpoint: corrupt state.json: ") + e.what());
    } catch (const ShapeMismatch& e) {
        throw CheckpointError(std::string("checkpoint: corrupt network: ") + e.what());
    }
    if (st.nets.size() != agents || st.nets.front().actor.input_dim() != obs_dim) {
        throw CheckpointError("checkpoint: network shapes do not match the configured team");
    }
    st.replay = ReplayBuffer::load(dir / "replay.bin");
    return st;
}

void write_weights(const fs::path& out, const std::vector<AgentNets>& nets) {
    const fs::path dir = out / "weights";
    fs::create_directories(dir);
    for (std::size_t i = 0; i < nets.size(); ++i) {
        policy::save(nets[i].actor, dir / fmt::format("actor_{}.json", i));
        policy::save(nets[i].critic, dir / fmt::format("critic_{}.json", i));
    }
}

std::string curve_header(std::size_t agents) {
    std::string h = "episode";
    for (std::size_t i = 0; i < agents; ++i) {
        h += fmt::format(",reward_agent_{}", i);
    }
    return h + ",eval_reward,eval_range_error,lipschitz_bound\n";
}

}  // namespace

std::vector<std::uint64_t> eval_seeds(std::uint64_t base, int count) {
    std::vector<std::uint64_t> seeds;
    for (int k = 0; k < count; ++k) {
        seeds.push_back(base * 7919ULL + 0xE7A1ULL + static_cast<std::uint64_t>(k) * 104729ULL);
    }
    return seeds;
}

EvalSummary evaluate(const ScenarioConfig& config, std::span<const policy::DenseNet> actors,
                     std::span<const std::uint64_t> seeds, TargetSource source, int ticks) {
    if (actors.size() != config.team.size()) {
        throw ShapeMismatch("evaluate: one actor per pursuer required");
    }
    PursuitEnv env(config, source);
    std::vector<double> rewards;
    std::vector<double> ranges;
    for (std::uint64_t seed : seeds) {
        const auto [r, e] = rollout(env, seed, ticks, [&](std::size_t i, const VectorXd& o) {
            return normalized_action(actors[i], o);
        });
        rewards.push_back(r);
        ranges.push_back(e);
    }
    return summarize_eval(std::move(rewards), std::move(ranges));
}

EvalSummary evaluate_random(const ScenarioConfig& config, std::span<const std::uint64_t> seeds,
                            int ticks, std::uint64_t rng_seed) {
    PursuitEnv env(config, TargetSource::GroundTruth);
    std::mt19937_64 rng(rng_seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> rewards;
    std::vector<double> ranges;
    for (std::uint64_t seed : seeds) {
        const auto [r, e] = rollout(env, seed, ticks, [&](std::size_t, const VectorXd&) {
            return VectorXd(Eigen::Vector3d(u(rng), u(rng), u(rng)));
        });
        rewards.push_back(r);
        ranges.push_back(e);
    }
    return summarize_eval(std::move(rewards), std::move(ranges));
}

std::vector<policy::DenseNet> load_actors(const fs::path& dir, std::size_t count) {
    std::vector<policy::DenseNet> actors;
    for (std::size_t i = 0; i < count; ++i) {
        actors.push_back(policy::load(dir / fmt::format("actor_{}.json", i)));
    }
    return actors;
}

TrainResult train(const ScenarioConfig& config, const TrainOptions& options) {
    const TrainingParams& tp = config.training;
    const fs::path& out = options.out_dir;
    fs::create_directories(out);

    PursuitEnv env(config, tp.target_source);
    const std::size_t n = config.team.size();
    const int obs_dim = Observation::size(n);
    const VectorXd scale = action_scale(config);

    MaddpgHyper hyper;
    hyper.gamma = tp.gamma;
    hyper.tau = tp.tau;
    hyper.actor_lr = tp.actor_lr;
    hyper.critic_lr = tp.critic_lr;
    hyper.lipschitz = tp.lipschitz;
    hyper.spectral_norm = tp.spectral_norm;
    hyper.power.seed = config.seed;

    TrainerState st;
    const fs::path curve_path = out / "training_curve.csv";
    if (options.resume && fs::exists(out / "checkpoint" / "state.json")) {
        st = load_checkpoint(out, n, obs_dim);
        if (fs::exists(curve_path)) {
            fs::resize_file(curve_path, st.csv_bytes);
        }
        spdlog::info("resuming from episode {}", st.next_episode);
    } else {
        st.rng.seed(config.seed);
        NetShapes shapes{obs_dim, 3, static_cast<int>(n), tp.actor_hidden, tp.critic_hidden};
        st.nets = make_agent_nets(shapes, scale, hyper, st.rng);
        st.replay = ReplayBuffer(static_cast<std::size_t>(tp.buffer_size));
        write_text(curve_path, curve_header(n));
        st.csv_bytes = fs::file_size(curve_path);
    }
    write_weights(out, st.nets);

    std::ofstream curve(curve_path, std::ios::binary | std::ios::app);
    const std::vector<std::uint64_t> seeds = eval_seeds(config.seed, tp.eval_episodes);
    const std::size_t min_fill = static_cast<std::size_t>(std::max(tp.warmup, tp.batch_size));

    TrainResult result;
    auto actors_of = [&]() {
        std::vector<policy::DenseNet> a;
        for (const AgentNets& nn : st.nets) a.push_back(nn.actor);
        return a;
    };

    for (int ep = st.next_episode; ep < tp.episodes; ++ep) {
        const double noise = std::max(tp.noise_min, tp.noise_scale * std::pow(tp.noise_decay, ep));
        env.reset(config.seed * 1000003ULL + static_cast<std::uint64_t>(ep));
        std::vector<double> ep_reward(n, 0.0);
        std::vector<VectorXd> obs = obs_values(env.observations());

        for (int k = 0; k < tp.episode_ticks; ++k) {
            std::vector<VectorXd> acts;
            for (std::size_t i = 0; i < n; ++i) {
                acts.push_back(explore(normalized_action(st.nets[i].actor, obs[i]), noise, st.rng));
            }
            const StepInfo info = env.step(to_commands(acts, scale));
            std::vector<VectorXd> next = obs_values(env.observations());
            for (std::size_t i = 0; i < n; ++i) {
                ep_reward[i] += info.rewards[i];
            }
            st.replay.push({obs, acts, info.rewards, next, false});
            obs = std::move(next);
            ++st.total_steps;

            if (st.replay.size() >= min_fill && st.total_steps % tp.update_every == 0) {
                const std::vector<Transition> batch =
                    st.replay.sample(static_cast<std::size_t>(tp.batch_size), st.rng);
                maddpg_update(st.nets, batch, hyper);
            }
        }

        double mean_reward = 0.0;
        std::string row = fmt::format("{}", ep);
        for (std::size_t i = 0; i < n; ++i) {
            const double r = ep_reward[i] / tp.episode_ticks;
            mean_reward += r / static_cast<double>(n);
            row += fmt::format(",{}", r);
        }

        const bool last = ep + 1 == tp.episodes;
        if (tp.eval_every > 0 && ((ep + 1) % tp.eval_every == 0 || last)) {
            const std::vector<policy::DenseNet> actors = actors_of();
            const EvalSummary ev = evaluate(config, actors, seeds, tp.target_source, tp.episode_ticks);
            row += fmt::format(",{},{}", ev.mean_reward, ev.mean_range_error);
            result.final_eval = ev;
            spdlog::info("episode {}: train reward {:.3f}, eval reward {:.3f}, range error {:.3f}",
                         ep, mean_reward, ev.mean_reward, ev.mean_range_error);
        } else {
            row += ",,";
        }
        double lip = 0.0;
        for (const AgentNets& a : st.nets) {
            lip = std::max(lip, policy::lipschitz_upper_bound(a.actor, {200, 1e-10}));
        }
        row += fmt::format(",{}\n", lip);
        curve << row;
        curve.flush();
        st.csv_bytes += row.size();

        if (options.on_episode) {
            options.on_episode(ep, mean_reward);
        }
        st.next_episode = ep + 1;
        if ((tp.checkpoint_every > 0 && st.next_episode % tp.checkpoint_every == 0) || last) {
            write_weights(out, st.nets);
            save_checkpoint(out, st);
            if (options.on_checkpoint) {
                options.on_checkpoint(st.next_episode);
            }
        }
    }

    write_weights(out, st.nets);
    result.episodes_completed = st.next_episode;
    result.actors = actors_of();
    return result;
}

}  // namespace bp::learner
