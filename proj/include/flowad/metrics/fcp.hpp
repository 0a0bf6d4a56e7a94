#pragma once

#include <cmath>
#include <vector>

#include "flowad/metrics/trajectory.hpp"

namespace flowad::metrics {

// Per-command compliance on the 3s lateral displacement. Only the
// turning-right rule is grounded; the other two mirror it.
struct ComplianceRules {
    double lateral_threshold = 2.0;

    bool compliant(Command cmd, double lateral) const {
        switch (cmd) {
            case Command::TurnRight: return lateral > lateral_threshold;
            case Command::TurnLeft: return lateral < -lateral_threshold;
            case Command::GoStraight: return std::abs(lateral) < lateral_threshold;
        }
        throw InvalidInputError("unknown command value");
    }
};

// Frames elapsed before the first 3s prediction lands within the threshold:
// sum over frames f of the product over h <= f of 1{error_h >= threshold}.
// The product kills every term after the first hit, so this counts the
// leading run of misses.
inline int fcp_clip(const TrajClip& clip, double threshold, int clip_index = -1) {
    auto where = [&] {
        return clip_index >= 0 ? " in clip " + std::to_string(clip_index) : std::string();
    };
    int count = 0;
    int run_product = 1;
    for (const TrajFrame& f : clip.frames) {
        if (!f.pred_3s) throw InvalidInputError("missing pred_3s" + where());
        if (!f.gt_3s) throw InvalidInputError("missing gt_3s" + where());
        const double dx = (*f.pred_3s)[0] - (*f.gt_3s)[0];
        const double dy = (*f.pred_3s)[1] - (*f.gt_3s)[1];
        run_product *= (std::hypot(dx, dy) >= threshold) ? 1 : 0;
        count += run_product;
    }
    return count;
}

inline double fcp(const TrajectoryLog& log, double threshold = 0.5) {
    if (threshold <= 0.0) throw InvalidInputError("fcp threshold must be positive");
    if (log.clips.empty()) throw InvalidInputError("trajectory log has no clips");
    double total = 0.0;
    for (std::size_t i = 0; i < log.clips.size(); ++i)
        total += fcp_clip(log.clips[i], threshold, static_cast<int>(i));
    return total / log.clips.size();
}

inline double fcp_avg(const TrajectoryLog& log,
                      const std::vector<double>& thresholds = {0.25, 0.5, 0.75}) {
    if (thresholds.empty()) throw ConfigError("fcp_avg needs at least one threshold");
    double total = 0.0;
    for (double t : thresholds) total += fcp(log, t);
    return total / thresholds.size();
}

// GT-free variant: counts the leading run of command-non-compliant frames,
// then forgives the first q of them.
inline int fcp_extended_clip(const TrajClip& clip, int q, const ComplianceRules& rules,
                             int clip_index = -1) {
    int run = 0;
    int run_product = 1;
    for (const TrajFrame& f : clip.frames) {
        if (!f.lateral_3s)
            throw InvalidInputError(
                "missing lateral_3s" +
                (clip_index >= 0 ? " in clip " + std::to_string(clip_index) : std::string()));
        run_product *= rules.compliant(clip.command, *f.lateral_3s) ? 0 : 1;
        run += run_product;
    }
    return std::max(0, run - q);
}

inline double fcp_extended(const TrajectoryLog& log, int q,
                           const ComplianceRules& rules = ComplianceRules{}) {
    if (q < 1) throw ConfigError("fcp_extended needs q >= 1");
    if (log.clips.empty()) throw InvalidInputError("trajectory log has no clips");
    double total = 0.0;
    for (std::size_t i = 0; i < log.clips.size(); ++i)
        total += fcp_extended_clip(log.clips[i], q, rules, static_cast<int>(i));
    return total / log.clips.size();
}

} // namespace flowad::metrics
