#pragma once

#include <cmath>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "flowad/metrics/trajectory.hpp"

namespace flowad::metrics {

struct L2Report {
    std::map<int, double> per_horizon; // meters, keyed by horizon seconds
    double avg = 0.0;
};

// Mean Euclidean displacement between prediction and ground truth over all
// frames of all clips, per requested horizon.
inline L2Report l2_error(const TrajectoryLog& log, const std::vector<int>& horizons = {1, 2, 3}) {
    if (horizons.empty()) throw ConfigError("l2_error needs at least one horizon");
    if (log.clips.empty()) throw InvalidInputError("trajectory log has no clips");
    L2Report report;
    for (int h : horizons) {
        double total = 0.0;
        long n = 0;
        for (std::size_t i = 0; i < log.clips.size(); ++i) {
            for (const TrajFrame& f : log.clips[i].frames) {
                if (!f.pred(h) || !f.gt(h))
                    throw InvalidInputError("missing " + std::to_string(h) +
                                            "s prediction or ground truth in clip " +
                                            std::to_string(i));
                const double dx = (*f.pred(h))[0] - (*f.gt(h))[0];
                const double dy = (*f.pred(h))[1] - (*f.gt(h))[1];
                total += std::hypot(dx, dy);
                ++n;
            }
        }
        report.per_horizon[h] = total / n;
    }
    double s = 0.0;
    for (const auto& [h, v] : report.per_horizon) s += v;
    report.avg = s / report.per_horizon.size();
    return report;
}

struct MetricRow {
    std::string metric;
    std::string threshold_or_q; // empty when not applicable
    double value = 0.0;
};

// CSV with a fixed header; doubles carry full precision so reruns compare
// byte for byte.
inline std::string format_metrics_csv(const std::vector<MetricRow>& rows) {
    std::string out = "metric,threshold_or_q,value\n";
    char buf[64];
    for (const MetricRow& r : rows) {
        std::snprintf(buf, sizeof(buf), "%.17g", r.value);
        out += r.metric + "," + r.threshold_or_q + "," + buf + "\n";
    }
    return out;
}

} // namespace flowad::metrics
