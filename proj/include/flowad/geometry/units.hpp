#pragma once

#include <string>
#include <vector>

#include "flowad/error.hpp"
#include "flowad/geometry/layout.hpp"
#include "flowad/geometry/rig.hpp"
#include "flowad/tensor/nn.hpp"
#include "flowad/tensor/tensor.hpp"

namespace flowad::geom {

/// Partitioned multi-view features: two side-ordered unit sequences, each
/// unit an [H x P x C] tensor. Side order runs from the partition start
/// outward, so index 0 is the unit nearest the ego's heading on that side.
struct FlowUnitSet {
    std::vector<Tensor> left, right;

    int num_units() const { return static_cast<int>(left.size() + right.size()); }

    /// Units in ring order: right side clockwise from the start, then the
    /// left side continuing clockwise back toward it.
    const Tensor& global_unit(int g) const {
        const int nr = static_cast<int>(right.size());
        if (g < 0 || g >= num_units())
            throw InvalidInputError("unit index " + std::to_string(g) + " out of range");
        if (g < nr) return right[g];
        return left[left.size() - 1 - (g - nr)];
    }

    Tensor& global_unit(int g) {
        return const_cast<Tensor&>(static_cast<const FlowUnitSet*>(this)->global_unit(g));
    }
};

namespace detail {

inline std::vector<int> resample_columns(int width, int target) {
    std::vector<int> idx(target);
    for (int q = 0; q < target; ++q)
        idx[q] = std::min(width - 1, static_cast<int>((q + 0.5) * width / target));
    return idx;
}

} // namespace detail

/// View features [N x H x W x C] flattened to ring order [H x N*W x C].
inline Tensor ring_view(const Tensor& f_img, const PanoramicRig& rig) {
    if (f_img.rank() != 4 || f_img.dim(0) != rig.cfg.num_cameras ||
        f_img.dim(2) != rig.cfg.width)
        throw DimensionError("feature tensor " + shape_str(f_img.shape()) +
                             " does not match the rig (cameras x H x width x C)");
    Tensor byrow = permute(f_img, {1, 0, 2, 3});
    return byrow.reshape({f_img.dim(1), rig.cfg.num_cameras * rig.cfg.width, f_img.dim(3)});
}

/// Slices ring columns into units per the layout and resamples every unit to
/// the level's canonical width by nearest-column pick.
inline FlowUnitSet partition_features(const Tensor& f_img, const PanoramicRig& rig,
                                      const PartitionLayout& layout) {
    if (rig.ring_cols() != layout.ring_cols)
        throw DimensionError("layout was built for a different ring size");
    Tensor ring = ring_view(f_img, rig);
    const int p = layout.level_p;

    auto cut = [&](int col_begin, int width) {
        std::vector<int> cols(p);
        const auto pick = detail::resample_columns(width, p);
        for (int q = 0; q < p; ++q) cols[q] = layout.mod_ring(col_begin + pick[q]);
        return gather(ring, 1, cols);
    };

    FlowUnitSet out;
    out.right.reserve(layout.num_right());
    for (int j = 0; j < layout.num_right(); ++j)
        out.right.push_back(cut(layout.right_col_begin(j), layout.right_width(j)));
    out.left.reserve(layout.num_left());
    for (int j = 0; j < layout.num_left(); ++j)
        out.left.push_back(cut(layout.left_col_begin(j), layout.left_width(j)));
    return out;
}

namespace detail {

/// Self-attention across width tokens of each feature row, then an affine map
/// that takes the width axis from in_w back down to out_w.
inline Tensor attend_reduce_width(const Tensor& unit, const ParamSet& params,
                                  const std::string& prefix, int out_w) {
    const int h = unit.dim(0), w = unit.dim(1), c = unit.dim(2);
    std::vector<Tensor> rows;
    rows.reserve(h);
    for (int i = 0; i < h; ++i) {
        Tensor row = slice(unit, 0, i, i + 1).reshape({w, c});
        rows.push_back(self_attention(row).reshape({1, w, c}));
    }
    Tensor attended = concat(0, rows);
    Tensor wide = permute(attended, {0, 2, 1}).reshape({h * c, w});
    Tensor reduced = mlp(wide, params, prefix);
    if (reduced.dim(1) != out_w)
        throw DimensionError("width-reduction output " + std::to_string(reduced.dim(1)) +
                             " does not match expected width " + std::to_string(out_w));
    return permute(reduced.reshape({h, c, out_w}), {0, 2, 1});
}

} // namespace detail

inline void init_local_aggregate(ParamSet& ps, int range, int level_p, Rng& rng) {
    init_mlp(ps, "agg", {range * level_p, level_p}, rng);
}

/// Fuses each unit with its ring neighbors: concatenate `range` consecutive
/// units along width, self-attend over the widened token row, map back to the
/// unit width. range 1 is the no-neighbor passthrough.
inline FlowUnitSet local_aggregate(const FlowUnitSet& units, int range, const ParamSet& params) {
    if (range < 1 || range % 2 == 0)
        throw ConfigError("aggregation range must be odd and positive, got " +
                          std::to_string(range));
    if (range == 1) return units;
    const int total = units.num_units();
    if (total == 0) throw InvalidInputError("local_aggregate on an empty unit set");
    if (range > total)
        throw ConfigError("aggregation range " + std::to_string(range) + " exceeds the " +
                          std::to_string(total) + " units on the ring");
    const int half = range / 2;
    const int p = units.global_unit(0).dim(1);

    auto aggregated = [&](int g) {
        std::vector<Tensor> window;
        window.reserve(range);
        for (int d = -half; d <= half; ++d)
            window.push_back(units.global_unit(((g + d) % total + total) % total));
        Tensor wide = concat(1, window);
        return detail::attend_reduce_width(wide, params, "agg", p);
    };

    FlowUnitSet out;
    const int nr = static_cast<int>(units.right.size());
    out.right.reserve(units.right.size());
    for (int j = 0; j < nr; ++j) out.right.push_back(aggregated(j));
    out.left.resize(units.left.size());
    for (int j = 0; j < static_cast<int>(units.left.size()); ++j)
        out.left[units.left.size() - 1 - j] = aggregated(nr + j);
    return out;
}

} // namespace flowad::geom
