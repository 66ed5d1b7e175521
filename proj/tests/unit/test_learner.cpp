#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "bp/errors.hpp"
#include "bp/learner/backprop.hpp"
#include "bp/learner/env.hpp"
#include "bp/learner/maddpg.hpp"
#include "bp/learner/observation.hpp"
#include "bp/learner/trainer.hpp"
#include "doctest.h"

using namespace bp;
using namespace bp::learner;
namespace fs = std::filesystem;

namespace {

sim::AgentState pursuer(double x, double y, double theta) {
    sim::AgentState a;
    a.p = {x, y};
    a.theta = theta;
    return a;
}

// Pursuers on a ring of radius r around the target, each facing it.
sim::WorldState ring_world(int n, double r, Vec2 center = Vec2::Zero()) {
    sim::WorldState w;
    w.target.p = center;
    for (int i = 0; i < n; ++i) {
        const double phi = 2.0 * M_PI * i / n;
        w.pursuers.push_back(pursuer(center.x() + r * std::cos(phi), center.y() + r * std::sin(phi), phi + M_PI));
    }
    return w;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("bp_unit_" + name);
    fs::remove_all(p);
    return p;
}

ScenarioConfig tiny_config() {
    ScenarioConfig c;
    c.team = {{sim::MotionMode::Omni, std::nullopt}, {sim::MotionMode::Omni, std::nullopt}};
    c.evader.script = EvaderScript::Static;
    auto& t = c.training;
    t.episodes = 6;
    t.episode_ticks = 20;
    t.batch_size = 16;
    t.warmup = 32;
    t.update_every = 2;
    t.eval_every = 3;
    t.eval_episodes = 2;
    t.checkpoint_every = 3;
    t.actor_hidden = {8, 8};
    t.critic_hidden = {16, 16};
    return c;
}

}  // namespace

TEST_CASE("observation layout and zero mask") {
    sim::WorldState w = ring_world(3, 0.75);
    const std::vector<bool> none(3, false);
    const Observation o = build_observation(w, 0, none);
    CHECK(o.values.size() == Observation::size(3));
    CHECK(Observation::size(3) == 6 + 14 + 5);
    CHECK(o.target().norm() == 0.0);
    CHECK_FALSE(o.target_valid());
    CHECK(o.ego()(4) == doctest::Approx(std::cos(w.pursuers[0].theta)));

    const std::vector<bool> all(3, true);
    const Observation seen = build_observation(w, 0, all);
    CHECK(seen.target_valid());
    // Target straight ahead in the body frame.
    CHECK(seen.target()(0) == doctest::Approx(0.75));
    CHECK(std::abs(seen.target()(1)) < 1e-12);
    CHECK(seen.ally(0)(6) == 1.0);

    const Observation again = build_observation(w, 0, all);
    CHECK(again.values == seen.values);
}

TEST_CASE("ally blocks follow the fixed ally ordering") {
    sim::WorldState w = ring_world(3, 0.75);
    const std::vector<bool> det{true, false, true};
    const Observation a = build_observation(w, 0, det);
    sim::WorldState swapped = w;
    std::swap(swapped.pursuers[1], swapped.pursuers[2]);
    const std::vector<bool> det_swapped{true, true, false};
    const Observation b = build_observation(swapped, 0, det_swapped);
    CHECK(a.ally(0) == b.ally(1));
    CHECK(a.ally(1) == b.ally(0));
    CHECK(a.ego() == b.ego());
    CHECK(a.target() == b.target());
}

TEST_CASE("deploy observation uses the estimate only") {
    sim::WorldState w = ring_world(2, 1.0);
    const std::vector<bool> det{true, true};
    Vec6 est = Vec6::Zero();
    est(0) = 0.1;
    const Observation o = build_observation(std::span<const sim::AgentState>(w.pursuers), 0, det, est);
    const Observation truth = build_observation(w, 0, det);
    CHECK(o.target()(0) == doctest::Approx(truth.target()(0) - 0.1));
    const Observation none = build_observation(std::span<const sim::AgentState>(w.pursuers), 0, det, std::nullopt);
    CHECK_FALSE(none.target_valid());
}

TEST_CASE("observability examples") {
    CHECK(observability({}) == 0.0);
    const Vec2 one[] = {Vec2(1, 0)};
    CHECK(observability(one) == doctest::Approx(0.0));
    const Vec2 two[] = {Vec2(1, 0), Vec2(0, 1)};
    CHECK(observability(two) == doctest::Approx(1.0));
    std::vector<Vec2> three;
    for (int i = 0; i < 3; ++i) three.emplace_back(std::cos(2 * M_PI * i / 3), std::sin(2 * M_PI * i / 3));
    CHECK(std::abs(observability(three) - 2.25) < 1e-12);
}

TEST_CASE("reward examples") {
    RewardWeights rw;
    sim::WorldState far;
    far.pursuers.push_back(pursuer(-2, -2, M_PI));  // facing away, 2.8 m from the target
    far.target.p = {0, 0};
    CHECK(reward(far, 0, {false}, {false}, rw) == 0.0);
    CHECK(reward(far, 0, {false}, {true}, rw) == -10.0);
    far.pursuers[0].omega = 0.5;
    CHECK(reward(far, 0, {false}, {false}, rw) == doctest::Approx(0.2));
    CHECK(reward(far, 0, {true}, {false}, rw) == doctest::Approx(0.0));  // r1 gated by own detection

    const sim::WorldState w = ring_world(3, 0.75);
    const std::vector<bool> all(3, true);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(reward(w, i, all, {false}, rw) == doctest::Approx(4.25).epsilon(1e-12));
    }
}

TEST_CASE("reward is bounded for three pursuers") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-2.3, 2.3), ang(-M_PI, M_PI);
    RewardWeights rw;
    for (int trial = 0; trial < 2000; ++trial) {
        sim::WorldState w;
        w.target.p = {u(rng), u(rng)};
        std::vector<bool> det;
        for (int i = 0; i < 3; ++i) {
            w.pursuers.push_back(pursuer(u(rng), u(rng), ang(rng)));
            w.pursuers.back().omega = ang(rng);
            det.push_back(sim::detects(w, i, deg2rad(30)) || trial % 3 == 0);
        }
        const double r = reward(w, 0, det, {trial % 7 == 0}, rw);
        CHECK(r >= -10.0 - 1e-12);
        CHECK(r <= 0.2 + 1 + 1 + 2.25 + 1e-9);
    }
}

TEST_CASE("single linear layer gradient is an outer product") {
    policy::DenseNet net;
    net.layers.push_back({Eigen::MatrixXd::Random(2, 3), Eigen::VectorXd::Random(2)});
    const Eigen::VectorXd x = Eigen::VectorXd::Random(3), g = Eigen::VectorXd::Random(2);
    const BackpropResult r = backprop(net, x, g);
    CHECK((r.grad.dW[0] - g * x.transpose()).norm() < 1e-15);
    CHECK((r.grad.db[0] - g).norm() < 1e-15);
    CHECK((r.input_grad.col(0) - net.layers[0].W.transpose() * g).norm() < 1e-15);
}

TEST_CASE("dead ReLU units pass no gradient") {
    policy::DenseNet net;
    Eigen::MatrixXd W1 = Eigen::MatrixXd::Identity(2, 2);
    net.layers.push_back({W1, Eigen::Vector2d(-10.0, 0.0)});  // first unit dead
    net.layers.push_back({Eigen::MatrixXd::Ones(1, 2), Eigen::VectorXd::Zero(1)});
    const BackpropResult r = backprop(net, Eigen::Vector2d(1.0, 1.0), Eigen::VectorXd::Ones(1));
    CHECK(r.grad.dW[0].row(0).norm() == 0.0);
    CHECK(r.grad.db[0](0) == 0.0);
    CHECK(r.input_grad(0, 0) == 0.0);
    CHECK(r.input_grad(1, 0) == 1.0);
}

TEST_CASE("backprop matches central finite differences") {
    const double h = 1e-5;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        std::mt19937_64 rng(seed);
        for (policy::Head head : {policy::Head::Tanh, policy::Head::Linear}) {
            policy::DenseNet net = policy::make_dense_net({5, 7, 6, 3}, head,
                                                          head == policy::Head::Tanh ? Eigen::VectorXd::Constant(3, 1.5)
                                                                                     : Eigen::VectorXd(),
                                                          rng, 0.8);
            std::normal_distribution<double> n(0, 1);
            Eigen::VectorXd x(5), g(3);
            for (int i = 0; i < 5; ++i) x(i) = n(rng);
            for (int i = 0; i < 3; ++i) g(i) = n(rng);
            const BackpropResult r = backprop(net, x, g);
            auto f = [&](const policy::DenseNet& m, const Eigen::VectorXd& in) { return g.dot(policy::forward(m, in)); };
            auto rel = [](double a, double b) { return std::abs(a - b) / std::max(1e-6, std::abs(a) + std::abs(b)); };
            for (std::size_t k = 0; k < net.layers.size(); ++k) {
                for (Eigen::Index i = 0; i < net.layers[k].W.size(); ++i) {
                    policy::DenseNet p = net, m = net;
                    p.layers[k].W(i) += h;
                    m.layers[k].W(i) -= h;
                    CHECK(rel(r.grad.dW[k](i), (f(p, x) - f(m, x)) / (2 * h)) < 1e-4);
                }
                for (Eigen::Index i = 0; i < net.layers[k].b.size(); ++i) {
                    policy::DenseNet p = net, m = net;
                    p.layers[k].b(i) += h;
                    m.layers[k].b(i) -= h;
                    CHECK(rel(r.grad.db[k](i), (f(p, x) - f(m, x)) / (2 * h)) < 1e-4);
                }
            }
            for (int i = 0; i < 5; ++i) {
                Eigen::VectorXd xp = x, xm = x;
                xp(i) += h;
                xm(i) -= h;
                CHECK(rel(r.input_grad(i, 0), (f(net, xp) - f(net, xm)) / (2 * h)) < 1e-4);
            }
        }
    }
}

TEST_CASE("adam rejects non-finite gradients and round-trips") {
    std::mt19937_64 rng(1);
    policy::DenseNet net = policy::make_dense_net({3, 4, 1}, policy::Head::Linear, {}, rng);
    Adam opt(net, {1e-2});
    NetGrad g = NetGrad::zeros_like(net);
    g.dW[0](0, 0) = 1.0;
    const double before = net.layers[0].W(0, 0);
    opt.step(net, g);
    CHECK(net.layers[0].W(0, 0) == doctest::Approx(before - 1e-2));
    const Adam back = Adam::from_json(opt.to_json());
    CHECK(back.steps() == 1);
    g.dW[0](0, 0) = std::nan("");
    CHECK_THROWS_AS(opt.step(net, g), NumericalFailure);
}

TEST_CASE("replay sampling is uniform") {
    ReplayBuffer buf(50);
    for (int i = 0; i < 80; ++i) {
        Transition t;
        t.rewards = {double(i)};
        buf.push(t);
    }
    CHECK(buf.size() == 50);
    std::mt19937_64 rng(3);
    std::vector<int> hist(50, 0);
    const int draws = 100000;
    for (std::size_t idx : buf.sample_indices(draws, rng)) hist[idx]++;
    const double expected = double(draws) / 50;
    double chi2 = 0.0;
    for (int c : hist) chi2 += (c - expected) * (c - expected) / expected;
    CHECK(chi2 < 74.92);  // chi-square 0.99 quantile, 49 dof

    // Oldest entries were overwritten.
    double min_reward = 1e9;
    for (std::size_t i = 0; i < buf.size(); ++i) min_reward = std::min(min_reward, buf[i].rewards[0]);
    CHECK(min_reward == 30.0);
}

TEST_CASE("replay buffer files round-trip and reject corruption") {
    const fs::path dir = scratch("replay");
    fs::create_directories(dir);
    ReplayBuffer buf(4);
    for (int i = 0; i < 6; ++i) {
        buf.push({{Eigen::VectorXd::Constant(2, i)}, {Eigen::VectorXd::Constant(3, -i)}, {0.5 * i}, {Eigen::VectorXd::Constant(2, i + 1)}, i == 5});
    }
    buf.save(dir / "r.bin");
    const ReplayBuffer back = ReplayBuffer::load(dir / "r.bin");
    REQUIRE(back.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(back[i].obs[0] == buf[i].obs[0]);
        CHECK(back[i].rewards == buf[i].rewards);
        CHECK(back[i].done == buf[i].done);
    }
    std::ofstream(dir / "bad.bin") << "garbage";
    CHECK_THROWS_AS(ReplayBuffer::load(dir / "bad.bin"), CheckpointError);
    fs::remove_all(dir);
}

TEST_CASE("explore") {
    std::mt19937_64 rng(4);
    const Eigen::Vector3d a(0.2, -0.5, 0.9);
    CHECK(explore(a, 0.0, rng) == a);
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const Eigen::VectorXd e = explore(a, 0.1, rng, -10, 10);
        mean += e;
    }
    mean /= n;
    CHECK((mean - a).cwiseAbs().maxCoeff() < 3 * 0.1 / std::sqrt(double(n)) * 1.5);
    for (int i = 0; i < 1000; ++i) {
        const Eigen::VectorXd e = explore(a, 2.0, rng);
        CHECK(e.maxCoeff() <= 1.0);
        CHECK(e.minCoeff() >= -1.0);
    }
}

TEST_CASE("soft update with tau one copies exactly") {
    std::mt19937_64 rng(5);
    policy::DenseNet a = policy::make_dense_net({3, 4, 2}, policy::Head::Linear, {}, rng);
    policy::DenseNet b = policy::make_dense_net({3, 4, 2}, policy::Head::Linear, {}, rng);
    soft_update(b, a, 1.0);
    for (std::size_t k = 0; k < a.layers.size(); ++k) {
        CHECK(a.layers[k].W == b.layers[k].W);
        CHECK(a.layers[k].b == b.layers[k].b);
    }
}

TEST_CASE("critic overfits a fixed batch when gamma is zero") {
    std::mt19937_64 rng(6);
    MaddpgHyper hyper;
    hyper.gamma = 0.0;
    hyper.update_actors = false;
    hyper.critic_lr = 1e-3;
    NetShapes shapes{4, 3, 2, {8, 8}, {32, 32}};
    std::vector<AgentNets> nets = make_agent_nets(shapes, Eigen::Vector3d(2, 1, 1), hyper, rng);
    std::vector<Transition> batch;
    std::normal_distribution<double> n(0, 1);
    for (int b = 0; b < 32; ++b) {
        Transition t;
        for (int i = 0; i < 2; ++i) {
            t.obs.push_back(Eigen::VectorXd::NullaryExpr(4, [&] { return n(rng); }));
            t.next_obs.push_back(Eigen::VectorXd::NullaryExpr(4, [&] { return n(rng); }));
            t.actions.push_back(Eigen::VectorXd::NullaryExpr(3, [&] { return std::tanh(n(rng)); }));
            t.rewards.push_back(n(rng));
        }
        batch.push_back(t);
    }
    const auto first = maddpg_update(nets, batch, hyper);
    UpdateStats last;
    for (int k = 0; k < 100; ++k) last = maddpg_update(nets, batch, hyper);
    for (int i = 0; i < 2; ++i) CHECK(last.critic_loss[i] < first.critic_loss[i]);
}

TEST_CASE("every update leaves actors inside the Lipschitz budget") {
    std::mt19937_64 rng(7);
    MaddpgHyper hyper;
    NetShapes shapes{4, 3, 2, {8, 8}, {16, 16}};
    std::vector<AgentNets> nets = make_agent_nets(shapes, Eigen::Vector3d(2, 1, 1), hyper, rng);
    std::vector<Transition> batch;
    for (int b = 0; b < 16; ++b) {
        Transition t;
        for (int i = 0; i < 2; ++i) {
            t.obs.push_back(Eigen::VectorXd::Random(4));
            t.next_obs.push_back(Eigen::VectorXd::Random(4));
            t.actions.push_back(Eigen::VectorXd::Random(3));
            t.rewards.push_back(1.0);
        }
        batch.push_back(t);
    }
    for (int k = 0; k < 20; ++k) {
        maddpg_update(nets, batch, hyper);
        for (const auto& a : nets) CHECK(policy::lipschitz_upper_bound(a.actor) <= 2.5 * (1 + 1e-3));
    }
    CHECK_THROWS_AS(maddpg_update(nets, {}, hyper), ShapeMismatch);
}

TEST_CASE("environment reset is deterministic and ticks advance time") {
    ScenarioConfig c = tiny_config();
    PursuitEnv a(c, TargetSource::GroundTruth), b(c, TargetSource::GroundTruth);
    a.reset(9);
    b.reset(9);
    const std::vector<sim::Command> cmds(2, sim::Command{0.5, 0.2, 0.0});
    for (int k = 0; k < 30; ++k) {
        a.step(cmds);
        b.step(cmds);
    }
    CHECK(a.world().pursuers[0].p == b.world().pursuers[0].p);
    CHECK(a.filter_state().y == b.filter_state().y);
    CHECK(a.world().t == doctest::Approx(3.0));
    CHECK(a.tick() == 30);
}

TEST_CASE("training with zero episodes writes the initial weights") {
    ScenarioConfig c = tiny_config();
    c.training.episodes = 0;
    const fs::path out = scratch("train0");
    const TrainResult r = train(c, {out, false, {}});
    CHECK(r.episodes_completed == 0);
    CHECK(fs::exists(out / "weights" / "actor_0.json"));
    CHECK(fs::exists(out / "weights" / "critic_1.json"));
    const auto actors = load_actors(out / "weights", 2);
    CHECK(policy::lipschitz_upper_bound(actors[0]) <= 2.5 * (1 + 1e-3));
    fs::remove_all(out);
}

TEST_CASE("resumed training continues the episode counter and reproduces the uninterrupted run") {
    ScenarioConfig c = tiny_config();
    const fs::path full = scratch("train_full"), part = scratch("train_part");
    train(c, {full, false, {}});

    ScenarioConfig first = c;
    first.training.episodes = 3;
    train(first, {part, false, {}});
    std::vector<int> seen;
    train(c, {part, true, [&](int ep, double) { seen.push_back(ep); }});
    CHECK(seen == std::vector<int>{3, 4, 5});

    const std::string curve = slurp(full / "training_curve.csv");
    CHECK(curve == slurp(part / "training_curve.csv"));
    CHECK(slurp(full / "weights" / "actor_0.json") == slurp(part / "weights" / "actor_0.json"));

    std::istringstream is(curve);
    std::string line;
    std::getline(is, line);
    int expected = 0;
    while (std::getline(is, line)) CHECK(std::stoi(line.substr(0, line.find(','))) == expected++);
    CHECK(expected == 6);
    fs::remove_all(full);
    fs::remove_all(part);
}

TEST_CASE("corrupt checkpoints are reported") {
    ScenarioConfig c = tiny_config();
    c.training.episodes = 3;
    const fs::path out = scratch("train_corrupt");
    train(c, {out, false, {}});
    std::ofstream(out / "checkpoint" / "state.json") << "{not json";
    c.training.episodes = 4;
    CHECK_THROWS_AS(train(c, {out, true, {}}), CheckpointError);
    fs::remove_all(out);
}
