#include <chrono>
#include <cmath>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include "bp/errors.hpp"
#include "bp/livebridge.hpp"
#include "bp/learner/observation.hpp"
#include "doctest.h"

using namespace bp;
using namespace bp::live;
using nlohmann::json;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = boost::asio::ip::tcp;

namespace {

// Pursuers parked in the corners with motionless policies; the evader starts in open space.
ScenarioConfig quiet_config() {
    ScenarioConfig c;
    c.team[0].pose = std::array<double, 3>{2.0, 2.0, 0.0};
    c.team[1].pose = std::array<double, 3>{2.0, -2.0, 0.0};
    c.team[2].pose = std::array<double, 3>{-2.0, 2.0, 0.0};
    c.evader.start = Vec2(-1.5, -0.5);
    return c;
}

std::vector<policy::DenseNet> still_actors(std::size_t n) {
    std::mt19937_64 rng(1);
    std::vector<policy::DenseNet> out;
    for (std::size_t i = 0; i < n; ++i) {
        auto net = policy::make_dense_net({learner::Observation::size(n), 8, 3}, policy::Head::Tanh,
                                          Eigen::Vector3d(2, 1, 1), rng);
        for (auto& l : net.layers) {
            l.W.setZero();
            l.b.setZero();
        }
        out.push_back(net);
    }
    return out;
}

std::string command(double vx, double vy) {
    return json{{"schema_version", 1}, {"v_cmd", {vx, vy}}, {"client_time", 0.0}}.dump();
}

class Client {
public:
    explicit Client(unsigned short port) : ws_(ioc_) {
        tcp::resolver resolver(ioc_);
        boost::asio::connect(ws_.next_layer(), resolver.resolve("127.0.0.1", std::to_string(port)));
        ws_.handshake("127.0.0.1", "/");
    }
    json read() {
        beast::flat_buffer buf;
        ws_.read(buf);
        last_size = buf.size();
        return json::parse(beast::buffers_to_string(buf.data()));
    }
    /// Next message of type "frame".
    json frame() {
        for (;;) {
            json j = read();
            if (j["type"] == "frame") return j;
        }
    }
    void send(const std::string& s) { ws_.write(boost::asio::buffer(s)); }
    beast::error_code read_error() {
        beast::flat_buffer buf;
        beast::error_code ec;
        ws_.read(buf, ec);
        return ec;
    }
    std::size_t last_size = 0;

private:
    boost::asio::io_context ioc_;
    websocket::stream<tcp::socket> ws_;
};

}  // namespace

TEST_CASE("command messages are validated") {
    const CommandMessage c = parse_command(command(0.3, -0.1));
    CHECK(c.v_cmd == Vec2(0.3, -0.1));
    CHECK_THROWS_AS(parse_command("not json"), ParseError);
    CHECK_THROWS_AS(parse_command("[1, 2]"), ValidationError);
    CHECK_THROWS_AS(parse_command(R"({"schema_version": 2, "v_cmd": [0, 0], "client_time": 0})"), ValidationError);
    CHECK_THROWS_AS(parse_command(R"({"schema_version": 1, "v_cmd": [0], "client_time": 0})"), ValidationError);
    CHECK_THROWS_AS(parse_command(R"({"schema_version": 1, "v_cmd": [0, "x"], "client_time": 0})"), ValidationError);
    CHECK_THROWS_AS(parse_command(R"({"schema_version": 1, "v_cmd": [0, 0]})"), ValidationError);
    CHECK((clip_velocity(Vec2(3, 4), 1.0) - Vec2(0.6, 0.8)).norm() < 1e-15);
    CHECK(clip_velocity(Vec2(0.3, 0.4), 1.0) == Vec2(0.3, 0.4));
}

TEST_CASE("without a command the evader stays put") {
    LiveWorld w(quiet_config(), still_actors(3), 1);
    auto now = Clock::now();
    for (int k = 0; k < 20; ++k) {
        w.step(now);
        now += std::chrono::milliseconds(100);
    }
    CHECK(w.env().world().target.v.norm() < 1e-12);
    CHECK((w.env().world().target.p - Vec2(-1.5, -0.5)).norm() < 1e-12);
}

TEST_CASE("a held command produces the first-order velocity rise") {
    LiveWorld w(quiet_config(), still_actors(3), 1);
    auto now = Clock::now();
    double t = 0.0;
    for (int k = 0; k < 15; ++k) {
        w.set_command({Vec2(0.5, 0.0), 0.0}, now);
        w.step(now);
        t += 0.1;
        now += std::chrono::milliseconds(100);
        const double expected = 0.5 * (1.0 - std::exp(-5.0 * t));
        CHECK(w.env().world().target.v.x() == doctest::Approx(expected).epsilon(0.02));
    }
}

TEST_CASE("stale commands are replaced by a stop") {
    LiveWorld w(quiet_config(), still_actors(3), 1);
    const auto t0 = Clock::now();
    w.set_command({Vec2(2.0, 0.0), 0.0}, t0);
    CHECK(w.active_command(t0 + std::chrono::milliseconds(100)).norm() == doctest::Approx(1.0));  // clipped
    CHECK(w.active_command(t0 + std::chrono::milliseconds(600)).norm() == 0.0);
}

TEST_CASE("frames carry the documented fields") {
    LiveWorld w(quiet_config(), still_actors(3), 1);
    const json f = w.step(Clock::now());
    CHECK(f["schema_version"] == 1);
    CHECK(f["pursuers"].size() == 3);
    CHECK(f["pursuers"][0].contains("detect_flag"));
    CHECK(f["target"]["p"].size() == 2);
    CHECK(f.contains("estimate"));
    CHECK(f["metrics"].contains("range_error"));
    CHECK(f["metrics"].contains("observability"));
    CHECK(f.dump().size() < 16 * 1024);
    const json h = w.handshake(Role::Spectator);
    CHECK(h["role"] == "spectator");
    CHECK(h["arena"]["x_max"] == 2.5);
    CHECK(h["team"][0]["mode"] == "unicycle");
}

TEST_CASE("server: one driver, spectators ignored, malformed clients dropped") {
    ServeOptions opts;
    opts.port = 0;
    opts.max_ticks = 60;
    Server server(quiet_config(), still_actors(3), opts);
    const unsigned short port = server.port();
    CHECK_THROWS_AS(Server(quiet_config(), still_actors(3), ServeOptions{port, 1, 1}), PortInUse);
    std::thread th([&] { server.run(); });

    Client driver(port);
    json h = driver.read();
    CHECK(h["type"] == "handshake");
    CHECK(h["role"] == "driver");
    Client spectator(port);
    CHECK(spectator.read()["role"] == "spectator");

    // Spectator commands never reach the evader.
    double last_t = -1.0;
    for (int k = 0; k < 8; ++k) {
        spectator.send(command(1.0, 0.0));
        const json f = driver.frame();
        spectator.frame();
        CHECK(f["t"].get<double>() > last_t);
        last_t = f["t"].get<double>();
        CHECK(std::abs(f["target"]["v"][0].get<double>()) < 1e-9);
    }
    // The driver's do.
    json f;
    for (int k = 0; k < 15; ++k) {
        driver.send(command(0.5, 0.0));
        f = driver.frame();
        CHECK(driver.last_size < 16 * 1024);
        CHECK(f["t"].get<double>() > last_t);
        last_t = f["t"].get<double>();
    }
    CHECK(f["target"]["v"][0].get<double>() > 0.4);

    Client bad(port);
    CHECK(bad.read()["role"] == "spectator");
    bad.send("{definitely not json");
    json err;
    do {
        err = bad.read();
    } while (err["type"] == "frame");
    CHECK(err["type"] == "error");
    CHECK(bad.read_error() == websocket::error::closed);

    server.stop();
    th.join();
}
