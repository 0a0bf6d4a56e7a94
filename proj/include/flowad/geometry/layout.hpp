#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "flowad/error.hpp"
#include "flowad/geometry/pose.hpp"
#include "flowad/geometry/rig.hpp"

namespace flowad::geom {

enum class PowerCoeff { Linear = 1, Quadratic = 2, Cubic = 3 };

/// Left/right target unit widths for a base width and steering state. The
/// side on the outside of the turn is stretched, the inside compressed, by
/// the ratio of their turning radii raised to the chosen power.
inline std::pair<double, double> adjust_sizes(double base_p, const SteeringCircle& circle,
                                              double w_ego,
                                              PowerCoeff power = PowerCoeff::Quadratic) {
    if (circle.is_straight) return {base_p, base_p};
    if (circle.r <= 0.5 * w_ego)
        throw KinematicError("turn radius " + std::to_string(circle.r) +
                             " m is not drivable for ego width " + std::to_string(w_ego) + " m");
    const double outer = (circle.r + 0.5 * w_ego) / circle.r;
    const double inner = (circle.r - 0.5 * w_ego) / circle.r;
    const int k = static_cast<int>(power);
    double po = 1.0, pi = 1.0;
    for (int i = 0; i < k; ++i) {
        po *= outer;
        pi *= inner;
    }
    if (circle.turn == TurnDirection::Right) return {base_p * po, base_p * pi};
    return {base_p * pi, base_p * po};
}

/// Integer unit boundaries for one ring at one level. Offsets are cumulative
/// column counts measured from the ring column b0 that contains the partition
/// start: right-side offsets run clockwise, left-side offsets counter-
/// clockwise. Each side's last offset equals its span, so the two sides tile
/// the ring exactly.
struct PartitionLayout {
    double start_s = 0.0;
    int b0 = 0;
    double p_left = 0.0, p_right = 0.0;
    int level_p = 0;
    int ring_cols = 0;
    std::vector<int> right_off, left_off; // strictly increasing, front of side first

    int num_right() const { return static_cast<int>(right_off.size()) - 1; }
    int num_left() const { return static_cast<int>(left_off.size()) - 1; }
    int num_units() const { return num_right() + num_left(); }
    int span_right() const { return right_off.back(); }
    int span_left() const { return left_off.back(); }

    int right_col_begin(int j) const { return mod_ring(b0 + right_off[j]); }
    int right_width(int j) const { return right_off[j + 1] - right_off[j]; }
    int left_col_begin(int j) const { return mod_ring(b0 - left_off[j + 1]); }
    int left_width(int j) const { return left_off[j + 1] - left_off[j]; }

    /// Ring-order position of a unit: right units count up from the start,
    /// then left units continue clockwise back toward it.
    int global_of_right(int j) const { return j; }
    int global_of_left(int j) const { return num_units() - 1 - j; }
    bool global_is_right(int g) const { return g < num_right(); }
    int side_index(int g) const {
        return global_is_right(g) ? g : num_units() - 1 - g;
    }

    int unit_of_column(int col) const {
        if (col < 0 || col >= ring_cols)
            throw InvalidInputError("ring column " + std::to_string(col) + " outside [0, " +
                                    std::to_string(ring_cols) + ")");
        const int rel = mod_ring(col - b0);
        if (rel < span_right()) {
            const auto it = std::upper_bound(right_off.begin(), right_off.end(), rel);
            return global_of_right(static_cast<int>(it - right_off.begin()) - 1);
        }
        const int back = ring_cols - rel;
        const auto it = std::lower_bound(left_off.begin(), left_off.end(), back);
        return global_of_left(static_cast<int>(it - left_off.begin()) - 1);
    }

    int mod_ring(int v) const { return ((v % ring_cols) + ring_cols) % ring_cols; }
};

namespace detail {

inline std::vector<int> side_offsets(double p, int span) {
    if (!(p > 1.0))
        throw ConfigError("unit width " + std::to_string(p) + " px must exceed 1 px");
    if (span < 1) throw ConfigError("partition side would contain zero units");
    std::vector<int> off{0};
    for (int j = 1; j * p < span; ++j) {
        const int o = static_cast<int>(std::floor(j * p + 0.5));
        if (o > off.back() && o < span) off.push_back(o);
    }
    off.push_back(span);
    return off;
}

} // namespace detail

/// Lays fractional boundaries outward from the start until each side covers
/// half the ring, rounding to whole columns; the last unit of each side
/// absorbs the remainder. The column containing the start belongs to the
/// right side.
inline PartitionLayout build_layout(const PanoramicRig& rig, double start_s, double p_left,
                                    double p_right, int level_p) {
    const int r = rig.ring_cols();
    if (!(start_s >= 0.0 && start_s < r))
        throw InvalidInputError("partition start " + std::to_string(start_s) +
                                " outside [0, " + std::to_string(r) + ")");
    if (level_p < 1 || rig.cfg.width % level_p != 0)
        throw ConfigError("level width " + std::to_string(level_p) +
                          " does not divide camera width");
    PartitionLayout lay;
    lay.start_s = start_s;
    lay.b0 = static_cast<int>(std::floor(start_s));
    lay.p_left = p_left;
    lay.p_right = p_right;
    lay.level_p = level_p;
    lay.ring_cols = r;
    const int span_right = (r + 1) / 2;
    lay.right_off = detail::side_offsets(p_right, span_right);
    lay.left_off = detail::side_offsets(p_left, r - span_right);
    return lay;
}

inline nlohmann::json layout_json(const PartitionLayout& lay) {
    nlohmann::json j;
    j["start_s"] = lay.start_s;
    j["b0"] = lay.b0;
    j["p_left"] = lay.p_left;
    j["p_right"] = lay.p_right;
    j["level_p"] = lay.level_p;
    j["ring_cols"] = lay.ring_cols;
    j["units_left"] = lay.num_left();
    j["units_right"] = lay.num_right();
    std::vector<int> bl, br;
    for (int o : lay.right_off) br.push_back(lay.mod_ring(lay.b0 + o));
    for (int o : lay.left_off) bl.push_back(lay.mod_ring(lay.b0 - o));
    j["boundaries_right"] = br;
    j["boundaries_left"] = bl;
    return j;
}

} // namespace flowad::geom
