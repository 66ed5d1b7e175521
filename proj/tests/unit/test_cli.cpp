#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "bp/learner/observation.hpp"
#include "bp/policy.hpp"
#include "doctest.h"

namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
    const std::string cmd = std::string(BP_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

// Scratch directory with a short config and random (but valid) actor weights.
struct Fixture {
    fs::path root = fs::temp_directory_path() / "bp_unit_cli";
    fs::path config = root / "scenario.yaml";
    fs::path weights = root / "weights";

    Fixture() {
        fs::remove_all(root);
        fs::create_directories(weights);
        std::ofstream(config) << "seed: 4\nduration: 2\ntraining: {episodes: 2, episode_ticks: 10, warmup: 16, "
                                 "batch_size: 8, eval_every: 1, eval_episodes: 1, actor_hidden: [8], "
                                 "critic_hidden: [8]}\n";
        std::mt19937_64 rng(1);
        for (int i = 0; i < 3; ++i) {
            bp::policy::save(bp::policy::make_dense_net({bp::learner::Observation::size(3), 8, 3}, bp::policy::Head::Tanh,
                                                        Eigen::Vector3d(2, 1, 1), rng, 0.5),
                             weights / ("actor_" + std::to_string(i) + ".json"));
        }
    }
    ~Fixture() { fs::remove_all(root); }
};

}  // namespace

TEST_CASE("simulate twice gives byte-identical outputs") {
    Fixture f;
    const std::string base = "simulate --config " + f.config.string() + " --weights " + f.weights.string() + " --seed 7";
    REQUIRE(run(base + " --out " + (f.root / "run1").string()) == 0);
    REQUIRE(run(base + " --out " + (f.root / "run2").string()) == 0);
    for (const char* name : {"trajectory.csv", "filter_trace.csv", "summary.json"}) {
        INFO(name);
        CHECK(fs::exists(f.root / "run1" / name));
        CHECK(slurp(f.root / "run1" / name) == slurp(f.root / "run2" / name));
    }
    // Only the requested outputs appear.
    int entries = 0;
    for ([[maybe_unused]] const auto& e : fs::directory_iterator(f.root / "run1")) ++entries;
    CHECK(entries == 3);
}

TEST_CASE("exit codes") {
    Fixture f;
    CHECK(run("") == 1);
    CHECK(run("simulate --weights w --out o") == 1);  // missing --config
    CHECK(run("--help") == 0);
    std::ofstream(f.root / "bad.yaml") << "sensor: {fov: -1}\n";
    CHECK(run("simulate --config " + (f.root / "bad.yaml").string() + " --weights " + f.weights.string() +
              " --out " + (f.root / "o").string()) == 1);
    CHECK(run("simulate --config " + f.config.string() + " --weights " + (f.root / "missing").string() +
              " --out " + (f.root / "o").string()) == 2);
    CHECK(run("simulate --config " + f.config.string() + " --weights " + f.weights.string() + " --mode sideways" +
              " --out " + (f.root / "o").string()) == 1);
}

TEST_CASE("evaluate writes one record per episode plus an aggregate") {
    Fixture f;
    REQUIRE(run("evaluate --config " + f.config.string() + " --weights " + f.weights.string() + " --episodes 20 --out " +
                (f.root / "eval").string()) == 0);
    const auto j = nlohmann::json::parse(slurp(f.root / "eval" / "summary.json"));
    CHECK(j["episodes"].size() == 20);
    CHECK(j["aggregate"]["episodes"] == 20);
    CHECK(j["format_version"] == 1);
}

TEST_CASE("train writes weights, curve and checkpoint under --out") {
    Fixture f;
    const fs::path out = f.root / "train";
    REQUIRE(run("train --config " + f.config.string() + " --out " + out.string()) == 0);
    CHECK(fs::exists(out / "weights" / "actor_2.json"));
    CHECK(fs::exists(out / "training_curve.csv"));
    CHECK(fs::exists(out / "checkpoint" / "state.json"));
    REQUIRE(run("train --config " + f.config.string() + " --episodes 3 --resume --out " + out.string()) == 0);
    const std::string curve = slurp(out / "training_curve.csv");
    CHECK(std::count(curve.begin(), curve.end(), '\n') == 4);  // header + episodes 0..2
}
