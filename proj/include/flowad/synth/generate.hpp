#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "flowad/error.hpp"
#include "flowad/geometry/pose.hpp"
#include "flowad/geometry/rig.hpp"
#include "flowad/metrics/trajectory.hpp"
#include "flowad/rng.hpp"
#include "flowad/synth/scenario.hpp"
#include "flowad/tensor/tensor.hpp"

namespace flowad::synth {

struct FrameRecord {
    Tensor f_img; // [cameras, H, W, C]
    geom::EgoPose pose;
    int shift_right = 0, shift_left = 0; // realized columns since the previous frame
};

struct SynthResult {
    std::vector<FrameRecord> frames;
    metrics::TrajectoryLog log;
};

namespace detail {

struct PathPoint {
    double x = 0.0, y = 0.0;   // world position
    double hx = 1.0, hy = 0.0; // unit heading
};

/// World-frame pose tau seconds after the start of the drive.
inline PathPoint path_at(const SynthScenario& s, double tau) {
    if (s.kind == PathKind::Straight) return {s.speed * tau, 0.0, 1.0, 0.0};
    const double a = s.omega * tau;
    if (s.direction == geom::TurnDirection::Right)
        return {s.r * std::sin(a), s.r * (std::cos(a) - 1.0), std::cos(a), -std::sin(a)};
    return {s.r * std::sin(a), s.r * (1.0 - std::cos(a)), std::cos(a), std::sin(a)};
}

/// World point expressed in the frame of `at`: x forward, y to the right.
inline metrics::Point2 ego_point(const PathPoint& at, double gx, double gy) {
    const double dx = gx - at.x, dy = gy - at.y;
    return {dx * at.hx + dy * at.hy, dx * at.hy - dy * at.hx};
}

/// One half of the ring as columns indexed by offset from the partition
/// start; offset grows away from the ego's heading.
struct SideTexture {
    std::vector<std::vector<double>> cols;
};

inline void fill_blocks(SideTexture& side, int block_w, int channels, Rng& rng) {
    const int span = static_cast<int>(side.cols.size());
    for (int o = 0; o < span; o += block_w) {
        std::vector<double> sig(channels);
        for (double& v : sig) v = rng.uniform(-1.0, 1.0);
        for (int k = o; k < std::min(o + block_w, span); ++k) side.cols[k] = sig;
    }
}

/// Moves every column k offsets outward, wrapping within the side.
inline void shift_side(SideTexture& side, int k) {
    const int span = static_cast<int>(side.cols.size());
    const int r = ((k % span) + span) % span;
    if (r > 0) std::rotate(side.cols.begin(), side.cols.end() - r, side.cols.end());
}

inline Tensor assemble_frame(const SynthScenario& s, int b0, const SideTexture& right,
                             const SideTexture& left) {
    const int n = s.rig.num_cameras, h = s.rig.height, w = s.rig.width, c = s.rig.channels;
    const int ring_cols = n * w;
    std::vector<double> ring(static_cast<std::size_t>(h) * ring_cols * c);
    auto put = [&](int col, const std::vector<double>& v) {
        for (int row = 0; row < h; ++row)
            std::copy(v.begin(), v.end(),
                      ring.begin() + (static_cast<std::size_t>(row) * ring_cols + col) * c);
    };
    const int sr = static_cast<int>(right.cols.size());
    for (int o = 0; o < sr; ++o) put((b0 + o) % ring_cols, right.cols[o]);
    const int sl = static_cast<int>(left.cols.size());
    for (int o = 0; o < sl; ++o)
        put(((b0 - 1 - o) % ring_cols + ring_cols) % ring_cols, left.cols[o]);
    Tensor as_ring(Shape{h, ring_cols, c}, std::move(ring));
    return permute(as_ring.reshape({h, n, w, c}), {1, 0, 2, 3});
}

} // namespace detail

/// Trajectory log for the scenario: ground truth follows the path, the
/// prediction extrapolates the frame's velocity, and the lateral field scores
/// the prediction. Only frames whose 3 s horizon stays inside the drive
/// contribute.
inline metrics::TrajectoryLog derive_log(const SynthScenario& s) {
    metrics::TrajectoryLog log;
    metrics::TrajClip clip;
    clip.command = s.kind == PathKind::Straight ? metrics::Command::GoStraight
                   : s.direction == geom::TurnDirection::Right ? metrics::Command::TurnRight
                                                               : metrics::Command::TurnLeft;
    const double v = s.ground_speed();
    const double t_end = (s.horizon - 1) * s.dt;
    for (int t = 1; t <= s.horizon; ++t) {
        const double tau = (t - 1) * s.dt;
        if (tau + 3.0 > t_end + 1e-12) break;
        const detail::PathPoint at = detail::path_at(s, tau);
        metrics::TrajFrame f;
        auto fill = [&](std::optional<metrics::Point2>& pred, std::optional<metrics::Point2>& gt,
                        double h) {
            const detail::PathPoint g = detail::path_at(s, tau + h);
            gt = detail::ego_point(at, g.x, g.y);
            pred = metrics::Point2{v * h, 0.0};
        };
        fill(f.pred_1s, f.gt_1s, 1.0);
        fill(f.pred_2s, f.gt_2s, 2.0);
        fill(f.pred_3s, f.gt_3s, 3.0);
        f.lateral_3s = (*f.pred_3s)[1];
        clip.frames.push_back(f);
    }
    if (!clip.frames.empty()) log.clips.push_back(std::move(clip));
    return log;
}

/// Rolls the seeded ring texture through the drive. The texture is drawn once
/// and each frame translates it outward from the partition start by the
/// realized integer column count per side; translation wraps within the side,
/// so no column content is created or destroyed.
inline SynthResult generate_sequence(const SynthScenario& s) {
    validate_scenario(s);
    const geom::PanoramicRig rig(s.rig);
    const int ring_cols = rig.ring_cols();
    const int b0 = static_cast<int>(std::floor(rig.partition_start(geom::Vec2{1.0, 0.0})));
    const int span_right = (ring_cols + 1) / 2;
    const int span_left = ring_cols - span_right;

    Rng rng(s.seed);
    detail::SideTexture right{std::vector<std::vector<double>>(span_right)};
    detail::SideTexture left{std::vector<std::vector<double>>(span_left)};
    const int bw = s.texture_block();
    detail::fill_blocks(right, bw, s.rig.channels, rng);
    detail::fill_blocks(left, bw, s.rig.channels, rng);

    for (const PlantedObject& obj : s.objects) {
        std::vector<double> sig = obj.signature;
        if (sig.empty()) {
            sig.resize(s.rig.channels);
            for (double& v : sig) v = rng.uniform(-1.0, 1.0);
        }
        const int col = static_cast<int>(std::floor(obj.position));
        const int rel = ((col - b0) % ring_cols + ring_cols) % ring_cols;
        if (rel < span_right) right.cols[rel] = sig;
        else left.cols[ring_cols - rel - 1] = sig;
    }

    const SideShift ideal = ideal_shifts(s);
    double acc_r = 0.0, acc_l = 0.0;
    long done_r = 0, done_l = 0;

    SynthResult out;
    out.frames.reserve(s.horizon);
    for (int t = 1; t <= s.horizon; ++t) {
        FrameRecord fr;
        if (t > 1) {
            acc_r += ideal.right;
            acc_l += ideal.left;
            const long kr = std::lround(acc_r) - done_r;
            const long kl = std::lround(acc_l) - done_l;
            done_r += kr;
            done_l += kl;
            detail::shift_side(right, static_cast<int>(kr));
            detail::shift_side(left, static_cast<int>(kl));
            fr.shift_right = static_cast<int>(kr);
            fr.shift_left = static_cast<int>(kl);
        }
        const detail::PathPoint at = detail::path_at(s, (t - 1) * s.dt);
        fr.pose = geom::EgoPose{at.x, at.y, t};
        fr.f_img = detail::assemble_frame(s, b0, right, left);
        out.frames.push_back(std::move(fr));
    }
    out.log = derive_log(s);
    return out;
}

} // namespace flowad::synth
