#include "bp/livebridge.hpp"

#include <cmath>
#include <deque>
#include <set>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>
#include <spdlog/spdlog.h>

#include "bp/errors.hpp"
#include "bp/learner/observation.hpp"

namespace bp::live {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;
using nlohmann::json;

namespace {

constexpr std::size_t kMaxQueuedFrames = 32;

json vec(const Vec2& v) { return json::array({v.x(), v.y()}); }

}  // namespace

CommandMessage parse_command(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("command: ") + e.what(), 1);
    }
    if (!j.is_object()) {
        throw ValidationError("command", "expected a JSON object");
    }
    if (!j.contains("schema_version") || !j["schema_version"].is_number_integer() ||
        j["schema_version"].get<int>() != kSchemaVersion) {
        throw ValidationError("schema_version", "must be 1");
    }
    const json& v = j.value("v_cmd", json());
    if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
        throw ValidationError("v_cmd", "expected [vx, vy]");
    }
    CommandMessage cmd;
    cmd.v_cmd = Vec2(v[0].get<double>(), v[1].get<double>());
    if (!cmd.v_cmd.allFinite()) {
        throw ValidationError("v_cmd", "must be finite");
    }
    const json& ct = j.value("client_time", json());
    if (!ct.is_number() || !std::isfinite(ct.get<double>())) {
        throw ValidationError("client_time", "expected a finite number");
    }
    cmd.client_time = ct.get<double>();
    return cmd;
}

Vec2 clip_velocity(const Vec2& v, double v_max) {
    const double n = v.norm();
    return n > v_max ? Vec2(v * (v_max / n)) : v;
}

json error_frame(const std::string& message) {
    return {{"type", "error"}, {"schema_version", kSchemaVersion}, {"message", message}};
}

LiveWorld::LiveWorld(const ScenarioConfig& config, std::vector<policy::DenseNet> actors, std::uint64_t seed)
    : config_(config), actors_(std::move(actors)), env_(config, TargetSource::Deploy) {
    if (actors_.size() != config_.team.size()) {
        throw ShapeMismatch("LiveWorld: one actor per pursuer required");
    }
    const int obs_dim = learner::Observation::size(actors_.size());
    for (const auto& a : actors_) {
        policy::validate(a);
        if (a.input_dim() != obs_dim || a.output_dim() != 3) {
            throw ShapeMismatch("LiveWorld: actor shape does not match the team");
        }
    }
    env_.reset(seed);
}

void LiveWorld::set_command(const CommandMessage& cmd, Clock::time_point received) {
    mailbox_ = {clip_velocity(cmd.v_cmd, config_.physics.target_bounds.v_max), received};
}

void LiveWorld::clear_command() { mailbox_.reset(); }

Vec2 LiveWorld::active_command(Clock::time_point now) const {
    if (!mailbox_ || now - mailbox_->second > kStaleAfter) {
        return Vec2::Zero();
    }
    return mailbox_->first;
}

json LiveWorld::step(Clock::time_point now) {
    const std::vector<learner::Observation> obs = env_.observations();
    std::vector<sim::Command> cmds;
    cmds.reserve(actors_.size());
    for (std::size_t i = 0; i < actors_.size(); ++i) {
        const Eigen::VectorXd a = policy::forward(actors_[i], obs[i].values);
        cmds.push_back({a(0), a(1), a(2)});
    }
    env_.step(cmds, active_command(now));
    return frame();
}

json LiveWorld::frame() const {
    const sim::WorldState& w = env_.world();
    const std::vector<bool>& det = env_.detections();
    json pursuers = json::array();
    int count = 0;
    for (std::size_t i = 0; i < w.pursuers.size(); ++i) {
        const auto& a = w.pursuers[i];
        pursuers.push_back({{"p", vec(a.p)}, {"v", vec(a.v)}, {"theta", a.theta}, {"detect_flag", det[i] ? 1 : 0}});
        count += det[i] ? 1 : 0;
    }
    json estimate = nullptr;
    if (const auto est = env_.estimate()) {
        const Mat6 P = *env_.estimate_covariance();
        estimate = {{"p", vec(est->head<2>())},
                    {"v", vec(est->segment<2>(3))},
                    {"cov_diag", json::array({P(0, 0), P(1, 1), P(3, 3), P(4, 4)})}};
    }
    const double range_error = learner::closest_range(w) - config_.desired_range;
    const double obsv = learner::observability(learner::detecting_bearings(w, det));
    return {{"type", "frame"},
            {"schema_version", kSchemaVersion},
            {"t", w.t},
            {"pursuers", pursuers},
            {"target", {{"p", vec(w.target.p)}, {"v", vec(w.target.v)}}},
            {"estimate", estimate},
            {"metrics", {{"range_error", range_error}, {"observability", obsv}, {"detection_count", count}}}};
}

json LiveWorld::handshake(Role role) const {
    json team = json::array();
    for (std::size_t i = 0; i < config_.team.size(); ++i) {
        team.push_back({{"index", i}, {"mode", std::string(sim::to_string(config_.team[i].mode))}});
    }
    const auto& a = config_.arena;
    return {{"type", "handshake"},
            {"schema_version", kSchemaVersion},
            {"role", role == Role::Driver ? "driver" : "spectator"},
            {"arena", {{"x_min", a.x_min}, {"x_max", a.x_max}, {"y_min", a.y_min}, {"y_max", a.y_max}}},
            {"team", team},
            {"fov", config_.sensor.fov},
            {"desired_range", config_.desired_range},
            {"evader_v_max", config_.physics.target_bounds.v_max},
            {"decision_hz", config_.decision_hz}};
}

// --- networking -------------------------------------------------------------

class Connection;

struct Server::Impl {
    Impl(const ScenarioConfig& config, std::vector<policy::DenseNet> actors, const ServeOptions& opts)
        : options(opts),
          world(config, std::move(actors), opts.seed),
          acceptor(ioc),
          timer(ioc),
          period(std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(config.decision_dt()))) {
        boost::system::error_code ec;
        const tcp::endpoint ep(asio::ip::make_address("0.0.0.0"), opts.port);
        acceptor.open(ep.protocol(), ec);
        if (!ec) acceptor.set_option(asio::socket_base::reuse_address(true), ec);
        if (!ec) acceptor.bind(ep, ec);
        if (!ec) acceptor.listen(asio::socket_base::max_listen_connections, ec);
        if (ec == asio::error::address_in_use || ec == asio::error::access_denied) {
            throw PortInUse("port " + std::to_string(opts.port) + ": " + ec.message());
        }
        if (ec) {
            throw IoError("cannot listen on port " + std::to_string(opts.port) + ": " + ec.message());
        }
    }

    void accept();
    void schedule();
    void on_tick();
    Role join(const std::shared_ptr<Connection>& c);
    void leave(const std::shared_ptr<Connection>& c);
    void on_message(const std::shared_ptr<Connection>& c, const std::string& text);
    void shutdown();

    ServeOptions options;
    LiveWorld world;
    asio::io_context ioc;
    tcp::acceptor acceptor;
    asio::steady_timer timer;
    Clock::duration period;
    Clock::time_point next_tick;
    long ticks = 0;
    std::set<std::shared_ptr<Connection>> connections;
    std::shared_ptr<Connection> driver;
};

class Connection : public std::enable_shared_from_this<Connection> {
public:
    Connection(tcp::socket socket, Server::Impl& server) : ws_(std::move(socket)), server_(server) {}

    void start() {
        ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
        ws_.text(true);
        ws_.async_accept([self = shared_from_this()](beast::error_code ec) {
            if (ec) return;
            self->open_ = true;
            const Role role = self->server_.join(self);
            self->send(self->server_.world.handshake(role).dump());
            self->send(self->server_.world.frame().dump());
            self->read();
        });
    }

    void send(std::string msg) {
        if (closing_ || !open_) return;
        // Drop the oldest frames for a client that cannot keep up.
        if (queue_.size() >= kMaxQueuedFrames) queue_.erase(queue_.begin() + 1);
        queue_.push_back(std::move(msg));
        if (queue_.size() == 1) write();
    }

    /// Sends an error frame, then closes.
    void fail(const std::string& message) {
        if (closing_) return;
        send(error_frame(message).dump());
        closing_ = true;
    }

    void close() {
        if (!open_ || closed_) return;
        closing_ = true;
        if (queue_.empty()) do_close(websocket::close_code::going_away);
    }

private:
    void read() {
        ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
            if (ec) {
                self->closed_ = true;
                self->server_.leave(self);
                return;
            }
            const std::string text = beast::buffers_to_string(self->buffer_.data());
            self->buffer_.consume(self->buffer_.size());
            self->server_.on_message(self, text);
            if (!self->closing_) self->read();
        });
    }

    void write() {
        ws_.async_write(asio::buffer(queue_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
            if (ec) {
                self->queue_.clear();
                return;
            }
            self->queue_.pop_front();
            if (!self->queue_.empty()) {
                self->write();
            } else if (self->closing_) {
                self->do_close(websocket::close_code::policy_error);
            }
        });
    }

    void do_close(websocket::close_code code) {
        if (closed_) return;
        closed_ = true;
        ws_.async_close(code, [self = shared_from_this()](beast::error_code) { self->server_.leave(self); });
    }

    websocket::stream<beast::tcp_stream> ws_;
    beast::flat_buffer buffer_;
    std::deque<std::string> queue_;
    Server::Impl& server_;
    bool open_ = false;
    bool closing_ = false;
    bool closed_ = false;
};

void Server::Impl::accept() {
    acceptor.async_accept([this](beast::error_code ec, tcp::socket socket) {
        if (ec) return;  // acceptor closed
        std::make_shared<Connection>(std::move(socket), *this)->start();
        accept();
    });
}

void Server::Impl::schedule() {
    timer.expires_at(next_tick);
    timer.async_wait([this](beast::error_code ec) {
        if (!ec) on_tick();
    });
}

void Server::Impl::on_tick() {
    const Clock::time_point now = Clock::now();
    const std::string msg = world.step(now).dump();
    for (const auto& c : connections) {
        c->send(msg);
    }
    ++ticks;
    if (options.max_ticks && ticks >= *options.max_ticks) {
        shutdown();
        return;
    }
    next_tick += period;
    if (now - next_tick > std::chrono::milliseconds(100)) {
        spdlog::warn("live: host stalled, pausing simulated time");
        next_tick = now + period;
    }
    schedule();
}

Role Server::Impl::join(const std::shared_ptr<Connection>& c) {
    connections.insert(c);
    if (!driver) {
        driver = c;
        world.clear_command();
        spdlog::info("live: driver connected");
        return Role::Driver;
    }
    spdlog::info("live: spectator connected ({} clients)", connections.size());
    return Role::Spectator;
}

void Server::Impl::leave(const std::shared_ptr<Connection>& c) {
    connections.erase(c);
    if (driver == c) {
        driver.reset();
        world.clear_command();  // evader coasts to a stop
        spdlog::info("live: driver disconnected");
    }
}

void Server::Impl::on_message(const std::shared_ptr<Connection>& c, const std::string& text) {
    CommandMessage cmd;
    try {
        cmd = parse_command(text);
    } catch (const Error& e) {
        spdlog::warn("live: malformed message, closing connection: {}", e.what());
        if (driver == c) {
            driver.reset();
            world.clear_command();
        }
        c->fail(e.what());
        return;
    }
    if (driver == c) {
        world.set_command(cmd, Clock::now());
    }
}

void Server::Impl::shutdown() {
    boost::system::error_code ec;
    acceptor.close(ec);
    timer.cancel();
    for (const auto& c : std::set<std::shared_ptr<Connection>>(connections)) {
        c->close();
    }
    // Give close handshakes a moment, then stop regardless.
    auto grace = std::make_shared<asio::steady_timer>(ioc, std::chrono::milliseconds(200));
    grace->async_wait([this, grace](beast::error_code) { ioc.stop(); });
}

Server::Server(const ScenarioConfig& config, std::vector<policy::DenseNet> actors, const ServeOptions& options)
    : impl_(std::make_unique<Impl>(config, std::move(actors), options)) {}

Server::~Server() = default;

unsigned short Server::port() const { return impl_->acceptor.local_endpoint().port(); }

void Server::run() {
    impl_->accept();
    impl_->next_tick = Clock::now() + impl_->period;
    impl_->schedule();
    impl_->ioc.run();
}

void Server::stop() {
    asio::post(impl_->ioc, [impl = impl_.get()] { impl->shutdown(); });
}

void serve(const ScenarioConfig& config, std::vector<policy::DenseNet> actors, const ServeOptions& options) {
    Server server(config, std::move(actors), options);
    spdlog::info("live: listening on ws://0.0.0.0:{}", server.port());
    asio::io_context signals_ctx;
    asio::signal_set signals(signals_ctx, SIGINT, SIGTERM);
    signals.async_wait([&server](beast::error_code ec, int) {
        if (!ec) server.stop();
    });
    std::thread signal_thread([&signals_ctx] { signals_ctx.run(); });
    server.run();
    signals_ctx.stop();
    signal_thread.join();
}

}  // namespace bp::live
