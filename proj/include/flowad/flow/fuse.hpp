#pragma once

#include "flowad/flow/state.hpp"

namespace flowad::flow {

inline void init_fuse(ParamSet& ps, int level_p, Rng& rng) {
    init_mlp(ps, "fuse", {2 * level_p, level_p}, rng);
}

// Joins the spatial and temporal predictions of each unit: widths are
// concatenated, self-attention mixes the 2P width tokens, and an MLP brings
// the width back to P. Purely per-unit, no cross-unit mixing.
inline FlowUnitSet fuse_flow(const FlowUnitSet& f_spat, const FlowUnitSet& f_tem,
                             const ParamSet& params) {
    if (f_spat.num_units() != f_tem.num_units())
        throw DimensionError("fusion inputs differ in unit count");
    if (f_spat.right.size() != f_tem.right.size())
        throw DimensionError("fusion inputs differ in side split");
    auto fuse_one = [&](const Tensor& a, const Tensor& b) {
        if (a.shape() != b.shape())
            throw DimensionError("fusion inputs differ in shape: " + shape_str(a.shape()) + " vs " +
                                 shape_str(b.shape()));
        const int p = a.shape()[1];
        Tensor cat = concat(1, {a, b});
        return geom::detail::attend_reduce_width(cat, params, "fuse", p);
    };
    FlowUnitSet out;
    for (std::size_t j = 0; j < f_spat.right.size(); ++j)
        out.right.push_back(fuse_one(f_spat.right[j], f_tem.right[j]));
    for (std::size_t j = 0; j < f_spat.left.size(); ++j)
        out.left.push_back(fuse_one(f_spat.left[j], f_tem.left[j]));
    return out;
}

} // namespace flowad::flow
