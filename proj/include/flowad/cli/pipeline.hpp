#pragma once

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include <json.hpp>

#include "flowad/cli/run_config.hpp"
#include "flowad/error.hpp"
#include "flowad/flow/model.hpp"
#include "flowad/geometry/layout.hpp"
#include "flowad/geometry/pose.hpp"
#include "flowad/geometry/rig.hpp"
#include "flowad/geometry/units.hpp"
#include "flowad/metrics/fcp.hpp"
#include "flowad/metrics/l2.hpp"
#include "flowad/synth/generate.hpp"
#include "flowad/tensor/optim.hpp"

namespace flowad::cli {

/// Forward direction in the ring frame at pose `now`. The body orientation is
/// recovered from the steering-circle tangent, so under a turn the chord
/// acquires a small lateral component toward the inside of the turn; on a
/// straight fit the chord is its own tangent and the forward direction is the
/// ring's front axis.
inline geom::Vec2 ring_forward(const geom::SteeringCircle& circle, const geom::EgoPose& prev,
                               const geom::EgoPose& now) {
    const geom::Vec2 chord = geom::forward_direction(prev, now);
    if (circle.is_straight) return {1.0, 0.0};
    const double rx = (now.x - circle.cx) / circle.r;
    const double ry = (now.y - circle.cy) / circle.r;
    geom::Vec2 tang{-ry, rx};
    if (tang.x * chord.x + tang.y * chord.y < 0.0) {
        tang.x = -tang.x;
        tang.y = -tang.y;
    }
    const geom::Vec2 left{-tang.y, tang.x};
    geom::Vec2 fwd{chord.x * tang.x + chord.y * tang.y, chord.x * left.x + chord.y * left.y};
    const double n = std::hypot(fwd.x, fwd.y);
    return {fwd.x / n, fwd.y / n};
}

struct FramePartition {
    geom::SteeringCircle circle;
    geom::Vec2 forward{1.0, 0.0};
    double start_s = 0.0;
};

/// Partition geometry for frame t of a pose history. The first two frames of
/// a sequence lack circle-fit history and fall back to straight driving.
inline FramePartition frame_partition(const geom::PanoramicRig& rig,
                                      const std::vector<geom::EgoPose>& poses, int t) {
    if (t < 0 || t >= static_cast<int>(poses.size()))
        throw InvalidInputError("frame index " + std::to_string(t) + " outside the pose history");
    FramePartition fp;
    if (t >= 2) {
        fp.circle = geom::fit_steering_circle(poses[t - 2], poses[t - 1], poses[t]);
        fp.forward = ring_forward(fp.circle, poses[t - 1], poses[t]);
    }
    fp.start_s = rig.partition_start(fp.forward);
    return fp;
}

/// Flow units for every frame of a dataset at one level, each frame
/// partitioned by its own fitted steering geometry. The first two frames
/// have no circle-fit history; they inherit the earliest fitted geometry so
/// that a steady drive partitions into the same unit counts on every frame,
/// which cross-frame prediction requires.
inline std::vector<geom::FlowUnitSet> partition_sequence(
    const std::vector<synth::FrameRecord>& frames, const geom::PanoramicRig& rig, double w_ego,
    int level_p) {
    std::vector<geom::EgoPose> poses;
    poses.reserve(frames.size());
    for (const synth::FrameRecord& fr : frames) poses.push_back(fr.pose);
    std::vector<FramePartition> fps;
    fps.reserve(frames.size());
    for (int t = 0; t < static_cast<int>(frames.size()); ++t)
        fps.push_back(frame_partition(rig, poses, t));
    if (fps.size() >= 3) fps[0] = fps[1] = fps[2];
    std::vector<geom::FlowUnitSet> out;
    out.reserve(frames.size());
    for (std::size_t t = 0; t < frames.size(); ++t) {
        const auto [pl, pr] = geom::adjust_sizes(level_p, fps[t].circle, w_ego);
        const geom::PartitionLayout lay =
            geom::build_layout(rig, fps[t].start_s, pl, pr, level_p);
        out.push_back(geom::partition_features(frames[t].f_img, rig, lay));
    }
    return out;
}

/// One optimizer step where neighbor aggregation runs inside the recorded
/// graph, so its parameters train alongside the flow modules.
inline flow::FlowStepResult train_step(ParamSet& params, Adam& opt,
                                       const std::vector<geom::FlowUnitSet>& clip,
                                       const flow::TrainConfig& tc) {
    Tape tape;
    flow::FlowLosses losses;
    {
        Tape::Scope scope(tape);
        params.track_all(tape);
        std::vector<geom::FlowUnitSet> frames;
        frames.reserve(clip.size());
        for (const geom::FlowUnitSet& u : clip)
            frames.push_back(geom::local_aggregate(u, tc.agg_range, params));
        losses = flow::flow_sequence_loss(frames, params, tc);
        tape.backward(losses.total);
    }
    GradMap grads = collect_grads(params);
    params = opt.step(params, grads);
    return {losses.total.value(), losses.spatial.value(), losses.temporal.value()};
}

struct TrainRow {
    int step = 0;
    double spatial = 0.0, temporal = 0.0, total = 0.0;
};

struct TrainResult {
    ParamSet params;
    std::vector<TrainRow> rows;
};

/// Full training pipeline on a stored sequence: per-frame partition, model
/// init from the training seed, then `steps` optimizer steps cycling over the
/// clip windows of the sequence.
inline TrainResult train_on_dataset(const std::vector<synth::FrameRecord>& frames,
                                    const geom::RigConfig& rig_cfg, double w_ego,
                                    const flow::TrainConfig& tc) {
    if (static_cast<int>(frames.size()) < tc.horizon)
        throw InvalidInputError("dataset has " + std::to_string(frames.size()) +
                                " frames but the clip horizon is " + std::to_string(tc.horizon));
    const geom::PanoramicRig rig(rig_cfg);
    const Tensor& f0 = frames[0].f_img;
    if (f0.rank() != 4 || f0.dim(0) != rig_cfg.num_cameras || f0.dim(1) != rig_cfg.height ||
        f0.dim(2) != rig_cfg.width || f0.dim(3) != rig_cfg.channels)
        throw DimensionError("dataset frames " + shape_str(f0.shape()) +
                             " do not match the configured rig");
    std::vector<geom::FlowUnitSet> units = partition_sequence(frames, rig, w_ego, tc.level);

    ParamSet params;
    Rng rng(tc.seed);
    flow::init_flow_model(params, rig_cfg, tc, rng);
    Adam opt(tc.lr);

    const int num_windows = static_cast<int>(frames.size()) - tc.horizon + 1;
    TrainResult out;
    out.rows.reserve(tc.steps);
    for (int k = 0; k < tc.steps; ++k) {
        const int w = k % num_windows;
        std::vector<geom::FlowUnitSet> clip(units.begin() + w, units.begin() + w + tc.horizon);
        const flow::FlowStepResult r = train_step(params, opt, clip, tc);
        if (!std::isfinite(r.total))
            throw DomainError("loss is not finite at step " + std::to_string(k));
        out.rows.push_back({k, r.spatial, r.temporal, r.total});
    }
    out.params = std::move(params);
    return out;
}

/// Headerless rows "step,spatial,temporal,total", one per optimizer step.
inline std::string format_loss_csv(const std::vector<TrainRow>& rows) {
    std::string out;
    char buf[128];
    for (const TrainRow& r : rows) {
        std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g\n", r.step, r.spatial, r.temporal,
                      r.total);
        out += buf;
    }
    return out;
}

/// Partition geometry report for one frame: fitted circle, ring-frame forward
/// direction, and per-level unit sizes with boundaries for every level whose
/// units stay wider than one column.
inline nlohmann::json partition_report(const geom::PanoramicRig& rig,
                                       const std::vector<geom::EgoPose>& poses, int t,
                                       double w_ego) {
    if (t < 2)
        throw InvalidInputError("frame " + std::to_string(t) + " has only " +
                                std::to_string(t + 1) +
                                " poses of history; the steering-circle fit needs three");
    const FramePartition fp = frame_partition(rig, poses, t);
    nlohmann::json j;
    j["frame"] = t;
    j["start_s"] = fp.start_s;
    j["forward"] = {{"x", fp.forward.x}, {"y", fp.forward.y}};
    if (fp.circle.is_straight) {
        j["circle"] = {{"straight", true}};
    } else {
        j["circle"] = {{"straight", false},
                       {"cx", fp.circle.cx},
                       {"cy", fp.circle.cy},
                       {"r", fp.circle.r},
                       {"turn", fp.circle.turn == geom::TurnDirection::Right ? "right" : "left"}};
    }
    nlohmann::json levels = nlohmann::json::array();
    for (int p : rig.cfg.levels) {
        const auto [pl, pr] = geom::adjust_sizes(p, fp.circle, w_ego);
        nlohmann::json lv{{"p", p}, {"p_left", pl}, {"p_right", pr}};
        try {
            lv["layout"] = geom::layout_json(geom::build_layout(rig, fp.start_s, pl, pr, p));
            lv["feasible"] = true;
        } catch (const ConfigError&) {
            lv["feasible"] = false;
        }
        levels.push_back(std::move(lv));
    }
    j["levels"] = std::move(levels);
    return j;
}

/// Schema check used by consumers of partition reports.
inline void validate_partition_report(const nlohmann::json& j) {
    try {
        j.at("frame").get<int>();
        j.at("start_s").get<double>();
        j.at("forward").at("x").get<double>();
        j.at("forward").at("y").get<double>();
        const auto& c = j.at("circle");
        if (!c.at("straight").get<bool>()) {
            c.at("cx").get<double>();
            c.at("cy").get<double>();
            c.at("r").get<double>();
            const std::string turn = c.at("turn").get<std::string>();
            if (turn != "right" && turn != "left")
                throw FormatError("partition report turn must be 'right' or 'left'");
        }
        for (const auto& lv : j.at("levels")) {
            lv.at("p").get<int>();
            lv.at("p_left").get<double>();
            lv.at("p_right").get<double>();
            if (lv.at("feasible").get<bool>()) {
                const auto& lay = lv.at("layout");
                lay.at("boundaries_right").get<std::vector<int>>();
                lay.at("boundaries_left").get<std::vector<int>>();
                lay.at("start_s").get<double>();
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("partition report does not match the schema: ") + e.what());
    }
}

/// Metric table for one trajectory log under the configured options.
inline std::vector<metrics::MetricRow> eval_rows(const metrics::TrajectoryLog& log,
                                                 const MetricsConfig& mc) {
    std::vector<metrics::MetricRow> rows;
    char buf[64];
    for (double thr : mc.thresholds) {
        std::snprintf(buf, sizeof buf, "%g", thr);
        rows.push_back({"fcp", buf, metrics::fcp(log, thr)});
    }
    rows.push_back({"fcp_avg", "avg", metrics::fcp_avg(log, mc.thresholds)});
    for (int q : mc.q_values)
        rows.push_back({"fcp_extended", std::to_string(q), metrics::fcp_extended(log, q)});
    const metrics::L2Report l2 = metrics::l2_error(log, mc.horizons);
    for (int h : mc.horizons)
        rows.push_back({"l2", std::to_string(h) + "s", l2.per_horizon.at(h)});
    rows.push_back({"l2", "avg", l2.avg});
    return rows;
}

} // namespace flowad::cli
