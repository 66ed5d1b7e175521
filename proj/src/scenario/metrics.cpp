#include <algorithm>
#include <cmath>

#include "bp/errors.hpp"
#include "bp/scenario/episode.hpp"

namespace bp::scenario {

namespace {

struct Agg {
    double sum = 0.0;
    double max = 0.0;
    std::size_t n = 0;

    void add(double v) {
        if (std::isnan(v)) return;
        sum += v;
        max = n == 0 ? v : std::max(max, v);
        ++n;
    }
    double mean() const { return n ? sum / static_cast<double>(n) : std::nan(""); }
    double maximum() const { return n ? max : std::nan(""); }
};

// NaN has no JSON spelling; it becomes null.
nlohmann::json number(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

}  // namespace

Summary summarize(const RunMetrics& metrics) {
    const std::size_t ticks = metrics.ticks();
    if (ticks == 0) {
        throw EmptyRun("summarize: run has no ticks");
    }
    const std::size_t start = ticks / 2;
    Agg pos, vel, range, det, obs;
    for (std::size_t k = start; k < ticks; ++k) {
        pos.add(metrics.position_error[k]);
        vel.add(metrics.velocity_error[k]);
        range.add(std::abs(metrics.range_error[k]));
        det.add(metrics.detection_count[k]);
        obs.add(metrics.observability[k]);
    }
    Summary s;
    s.ticks = ticks;
    s.window = ticks - start;
    s.position_error_mean = pos.mean();
    s.position_error_max = pos.maximum();
    s.velocity_error_mean = vel.mean();
    s.velocity_error_max = vel.maximum();
    s.range_error_mean = range.mean();
    s.range_error_max = range.maximum();
    s.detection_count_mean = det.mean();
    s.observability_mean = obs.mean();
    s.observability_max = obs.maximum();
    return s;
}

nlohmann::json to_json(const Summary& s) {
    return {
        {"format_version", kFormatVersion},
        {"ticks", s.ticks},
        {"window", s.window},
        {"position_error_mean", number(s.position_error_mean)},
        {"position_error_max", number(s.position_error_max)},
        {"velocity_error_mean", number(s.velocity_error_mean)},
        {"velocity_error_max", number(s.velocity_error_max)},
        {"range_error_mean", number(s.range_error_mean)},
        {"range_error_max", number(s.range_error_max)},
        {"detection_count_mean", number(s.detection_count_mean)},
        {"observability_mean", number(s.observability_mean)},
        {"observability_max", number(s.observability_max)},
    };
}

}  // namespace bp::scenario
