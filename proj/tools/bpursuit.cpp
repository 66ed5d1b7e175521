// Umbrella command-line tool: train / simulate / evaluate / serve.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "bp/errors.hpp"
#include "bp/learner/trainer.hpp"
#include "bp/livebridge.hpp"
#include "bp/logging.hpp"
#include "bp/scenario/config_loader.hpp"
#include "bp/scenario/episode.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

struct Args {
    std::string config;
    std::string weights;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::optional<int> episodes;
    std::string mode = "deploy";
    unsigned short port = 8765;
    bool resume = false;
};

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    os << text;
    if (!os) {
        throw bp::IoError("cannot write " + path.string());
    }
}

std::ofstream open_out(const fs::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw bp::IoError("cannot write " + path.string());
    }
    return os;
}

bp::ScenarioConfig load(const Args& a) {
    bp::ScenarioConfig cfg = bp::scenario::load_config(a.config);
    if (a.seed) {
        cfg.seed = *a.seed;
    }
    return cfg;
}

int cmd_train(const Args& a) {
    bp::ScenarioConfig cfg = load(a);
    if (a.episodes) {
        if (*a.episodes < 0) throw bp::ValidationError("episodes", "must be non-negative");
        cfg.training.episodes = *a.episodes;
    }
    fs::create_directories(a.out);
    bp::learner::TrainOptions opts;
    opts.out_dir = a.out;
    opts.resume = a.resume;
    const auto result = bp::learner::train(cfg, opts);
    spdlog::info("trained {} episodes, final eval reward {:.3f}, range error {:.3f}", result.episodes_completed,
                 result.final_eval.mean_reward, result.final_eval.mean_range_error);
    return kExitOk;
}

int cmd_simulate(const Args& a) {
    const bp::ScenarioConfig cfg = load(a);
    const auto actors = bp::learner::load_actors(a.weights, cfg.team.size());
    fs::create_directories(a.out);
    const fs::path out(a.out);
    std::ofstream traj = open_out(out / "trajectory.csv");
    std::ofstream trace = open_out(out / "filter_trace.csv");
    bp::scenario::EpisodeOptions opts;
    opts.mode = bp::scenario::parse_run_mode(a.mode);
    opts.seed = cfg.seed;
    opts.trajectory = &traj;
    opts.filter_trace = &trace;
    const auto metrics = bp::scenario::run_episode(cfg, actors, opts);
    if (metrics.ticks() > 0) {
        nlohmann::json j = bp::scenario::to_json(bp::scenario::summarize(metrics));
        j["seed"] = cfg.seed;
        j["mode"] = a.mode;
        write_file(out / "summary.json", j.dump(2) + "\n");
    } else {
        spdlog::warn("zero-duration episode, no summary written");
    }
    return kExitOk;
}

int cmd_evaluate(const Args& a) {
    const bp::ScenarioConfig cfg = load(a);
    const auto actors = bp::learner::load_actors(a.weights, cfg.team.size());
    const int episodes = a.episodes.value_or(cfg.training.eval_episodes);
    if (episodes <= 0) throw bp::ValidationError("episodes", "must be positive");
    fs::create_directories(a.out);

    bp::scenario::EpisodeOptions opts;
    opts.mode = bp::scenario::parse_run_mode(a.mode);
    nlohmann::json records = nlohmann::json::array();
    double pos = 0.0, range = 0.0, obsv = 0.0, det = 0.0;
    int pos_n = 0;
    for (int e = 0; e < episodes; ++e) {
        opts.seed = cfg.seed + static_cast<std::uint64_t>(e);
        const auto s = bp::scenario::summarize(bp::scenario::run_episode(cfg, actors, opts));
        nlohmann::json r = bp::scenario::to_json(s);
        r["seed"] = opts.seed;
        records.push_back(r);
        range += s.range_error_mean;
        obsv += s.observability_mean;
        det += s.detection_count_mean;
        if (std::isfinite(s.position_error_mean)) {
            pos += s.position_error_mean;
            ++pos_n;
        }
        spdlog::info("episode {}: range error {:.3f}, observability {:.3f}", e, s.range_error_mean,
                     s.observability_mean);
    }
    nlohmann::json j;
    j["format_version"] = bp::scenario::kFormatVersion;
    j["mode"] = a.mode;
    j["episodes"] = records;
    j["aggregate"] = {{"episodes", episodes},
                      {"range_error_mean", range / episodes},
                      {"observability_mean", obsv / episodes},
                      {"detection_count_mean", det / episodes},
                      {"position_error_mean", pos_n ? nlohmann::json(pos / pos_n) : nlohmann::json(nullptr)}};
    write_file(fs::path(a.out) / "summary.json", j.dump(2) + "\n");
    return kExitOk;
}

int cmd_serve(const Args& a) {
    const bp::ScenarioConfig cfg = load(a);
    bp::live::ServeOptions opts;
    opts.port = a.port;
    opts.seed = cfg.seed;
    bp::live::serve(cfg, bp::learner::load_actors(a.weights, cfg.team.size()), opts);
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    bp::logging::init_from_env();

    CLI::App app{"Bearing-only cooperative pursuit: train, simulate, evaluate and serve."};
    app.require_subcommand(1);
    app.footer("Environment: BP_LOG_LEVEL=error|info|debug\nExit codes: 0 ok, 1 invalid input, 2 runtime failure\n\n" +
               bp::scenario::config_schema());
    Args a;

    auto add_config = [&](CLI::App* s) { s->add_option("--config", a.config, "scenario YAML file")->required(); };
    auto add_seed = [&](CLI::App* s) { s->add_option("--seed", a.seed, "overrides the config seed"); };

    CLI::App* train = app.add_subcommand("train", "spectral-normalized MADDPG training");
    add_config(train);
    add_seed(train);
    train->add_option("--out", a.out, "output directory (weights, curve, checkpoint)")->required();
    train->add_option("--episodes", a.episodes, "overrides training.episodes");
    train->add_flag("--resume", a.resume, "continue from <out>/checkpoint");

    CLI::App* sim = app.add_subcommand("simulate", "one richly logged episode");
    add_config(sim);
    add_seed(sim);
    sim->add_option("--weights", a.weights, "directory with actor_<i>.json")->required();
    sim->add_option("--out", a.out, "output directory")->required();
    sim->add_option("--mode", a.mode, "deploy | ground-truth")->check(CLI::IsMember({"deploy", "ground-truth"}));

    CLI::App* eval = app.add_subcommand("evaluate", "noise-free evaluation over several seeds");
    add_config(eval);
    add_seed(eval);
    eval->add_option("--weights", a.weights, "directory with actor_<i>.json")->required();
    eval->add_option("--out", a.out, "output directory")->required();
    eval->add_option("--episodes", a.episodes, "number of episodes (default training.eval_episodes)");
    eval->add_option("--mode", a.mode, "deploy | ground-truth")->check(CLI::IsMember({"deploy", "ground-truth"}));

    CLI::App* serve = app.add_subcommand("serve", "live websocket session with a human-driven evader");
    add_config(serve);
    add_seed(serve);
    serve->add_option("--weights", a.weights, "directory with actor_<i>.json")->required();
    serve->add_option("--port", a.port, "listening port");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        std::cerr << app.help();
        return kExitValidation;
    }

    try {
        if (train->parsed()) return cmd_train(a);
        if (sim->parsed()) return cmd_simulate(a);
        if (eval->parsed()) return cmd_evaluate(a);
        if (serve->parsed()) return cmd_serve(a);
    } catch (const bp::ValidationError& e) {
        std::cerr << "invalid input: " << e.what() << "\n";
        return kExitValidation;
    } catch (const bp::ParseError& e) {
        std::cerr << "invalid input: " << e.what() << " (line " << e.line() << ")\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitRuntime;
}
