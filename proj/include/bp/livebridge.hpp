#ifndef BP_LIVEBRIDGE_HPP_
#define BP_LIVEBRIDGE_HPP_

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "bp/config.hpp"
#include "bp/learner/env.hpp"
#include "bp/policy.hpp"
#include "json.hpp"

namespace bp::live {

constexpr int kSchemaVersion = 1;

using Clock = std::chrono::steady_clock;

enum class Role { Driver, Spectator };

/// Evader velocity request sent by the driving client.
struct CommandMessage {
    Vec2 v_cmd = Vec2::Zero();
    double client_time = 0.0;
};

/// Parses and validates a client text message. Throws ParseError or ValidationError.
CommandMessage parse_command(const std::string& text);

/// Scales @p v down to norm @p v_max when it exceeds it.
Vec2 clip_velocity(const Vec2& v, double v_max);

/**
 * @brief The deploy-mode world behind the server, without any networking.
 *
 * Keeps a latest-wins command mailbox. step() runs one decision tick with the
 * mailbox command as the evader's desired velocity unless it is older than the
 * staleness cutoff, in which case the evader is commanded to stop.
 */
class LiveWorld {
public:
    static constexpr std::chrono::milliseconds kStaleAfter{500};

    LiveWorld(const ScenarioConfig& config, std::vector<policy::DenseNet> actors, std::uint64_t seed);

    void set_command(const CommandMessage& cmd, Clock::time_point received);
    void clear_command();
    /// Velocity that a tick at @p now would apply (already clipped).
    Vec2 active_command(Clock::time_point now) const;

    /// Advances one decision tick and returns the resulting frame.
    nlohmann::json step(Clock::time_point now);
    nlohmann::json frame() const;
    nlohmann::json handshake(Role role) const;

    const learner::PursuitEnv& env() const { return env_; }

private:
    ScenarioConfig config_;
    std::vector<policy::DenseNet> actors_;
    learner::PursuitEnv env_;
    std::optional<std::pair<Vec2, Clock::time_point>> mailbox_;
};

nlohmann::json error_frame(const std::string& message);

struct ServeOptions {
    unsigned short port = 8765;  ///< 0 picks a free port
    std::uint64_t seed = 1;
    /// Stop after this many decision ticks (tests); runs until stop() otherwise.
    std::optional<long> max_ticks;
};

/**
 * @brief Websocket server streaming frames at the decision rate.
 *
 * The first client becomes the driver; later clients are spectators whose
 * commands are ignored. A malformed message gets an error frame and the
 * connection is closed. Everything runs on one reactor thread, so the world
 * has a single owner. If the host stalls for more than 100 ms, the schedule is
 * re-anchored and simulated time pauses instead of jumping.
 */
class Server {
public:
    /// Binds the port immediately; throws PortInUse when it is taken.
    Server(const ScenarioConfig& config, std::vector<policy::DenseNet> actors, const ServeOptions& options);
    ~Server();
    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    unsigned short port() const;
    /// Blocks until stop() or max_ticks.
    void run();
    /// Thread-safe.
    void stop();

    struct Impl;

private:
    std::unique_ptr<Impl> impl_;
};

/// Runs a server until SIGINT / SIGTERM.
void serve(const ScenarioConfig& config, std::vector<policy::DenseNet> actors, const ServeOptions& options);

}  // namespace bp::live

#endif  // BP_LIVEBRIDGE_HPP_
