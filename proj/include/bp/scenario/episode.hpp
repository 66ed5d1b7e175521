#ifndef BP_SCENARIO_EPISODE_HPP_
#define BP_SCENARIO_EPISODE_HPP_

#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "bp/config.hpp"
#include "json.hpp"
#include "bp/policy.hpp"
#include "bp/simworld.hpp"

namespace bp::scenario {

constexpr int kFormatVersion = 1;

enum class RunMode { Deploy, GroundTruth };

RunMode parse_run_mode(const std::string& s);  ///< "deploy" | "ground-truth"
std::string to_string(RunMode mode);

/**
 * @brief Per-tick series of one closed-loop run. All vectors have one entry per tick.
 *
 * Estimate errors are NaN on ticks where the filter is not yet observable.
 */
struct RunMetrics {
    std::vector<double> t;
    std::vector<int> detection_count;
    std::vector<double> range_error;     ///< min_i |p_T - p_i| - r_d (true positions)
    std::vector<double> observability;   ///< det of the detecting team's observability matrix
    std::vector<double> position_error;  ///< |p_hat - p_T|
    std::vector<double> velocity_error;  ///< |v_hat - v_T|
    std::vector<std::vector<sim::Command>> commands;

    std::size_t ticks() const { return t.size(); }
};

struct EpisodeOptions {
    RunMode mode = RunMode::Deploy;
    std::uint64_t seed = 1;
    std::optional<int> ticks;            ///< defaults to the configured duration
    std::ostream* trajectory = nullptr;  ///< CSV, one row per tick
    std::ostream* filter_trace = nullptr;
};

/**
 * @brief One closed-loop episode: sense, fuse, observe, act, integrate.
 *
 * Deploy mode feeds the policies from the filter estimate only; ground-truth
 * mode uses the true relative target state. The trajectory bytes depend only
 * on (config, seed, policies). Throws NumericalFailure naming the tick if the
 * world or the filter turns non-finite.
 */
RunMetrics run_episode(const ScenarioConfig& config, std::span<const policy::DenseNet> policies,
                       const EpisodeOptions& options);

void write_trajectory_header(std::ostream& os, std::size_t pursuers);

/// Steady-state aggregates over the last half of the run.
struct Summary {
    std::size_t ticks = 0;
    std::size_t window = 0;
    double position_error_mean = 0.0;
    double position_error_max = 0.0;
    double velocity_error_mean = 0.0;
    double velocity_error_max = 0.0;
    double range_error_mean = 0.0;  ///< mean |range error|
    double range_error_max = 0.0;
    double detection_count_mean = 0.0;
    double observability_mean = 0.0;
    double observability_max = 0.0;
};

/// Throws EmptyRun on an empty run. NaN estimate errors are skipped.
Summary summarize(const RunMetrics& metrics);

/// Summary record with format_version, as written to summary.json.
nlohmann::json to_json(const Summary& s);

}  // namespace bp::scenario

#endif  // BP_SCENARIO_EPISODE_HPP_
