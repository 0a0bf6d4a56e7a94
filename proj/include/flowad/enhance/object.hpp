#pragma once

#include <cmath>
#include <set>
#include <vector>

#include "flowad/flow/spatial.hpp"
#include "flowad/geometry/layout.hpp"

namespace flowad::enhance {

using flowad::geom::FlowUnitSet;
using flowad::geom::PartitionLayout;

// An object hypothesis: its query embedding and the ring coordinates of its
// sampling points. In this planar world the image projection of a 3D point
// collapses to a position on the camera ring.
struct ObjectQuery {
    Tensor embedding;           // [C]
    std::vector<double> points; // ring coordinates
};

// Units whose column interval contains at least one sampling point.
// Sorted and deduplicated; every in-range point maps to exactly one unit.
inline std::vector<int> covering_units(const std::vector<double>& points,
                                       const PartitionLayout& layout) {
    std::set<int> found;
    for (double p : points) {
        if (!(p >= 0.0) || p >= layout.ring_cols)
            throw InvalidInputError("sampling point " + std::to_string(p) +
                                    " outside ring range [0," +
                                    std::to_string(layout.ring_cols) + ")");
        found.insert(layout.unit_of_column(static_cast<int>(std::floor(p))));
    }
    return {found.begin(), found.end()};
}

inline void init_object_enhance(ParamSet& ps, int channels, Rng& rng) {
    ps.add("obj.wv", Tensor::uniform({channels, channels},
                                     -1.0 / std::sqrt(channels), 1.0 / std::sqrt(channels), rng));
}

// Injects flow dynamics into a query embedding: the covering units are
// pooled into tokens, passed through the value projection, and attended by
// the embedding; the result is added residually. Units outside the covering
// set are never touched.
inline Tensor object_enhance(const ObjectQuery& q, const FlowUnitSet& units,
                             const PartitionLayout& layout, const ParamSet& params) {
    if (q.embedding.rank() != 1)
        throw DimensionError("query embedding must be rank 1, got " + shape_str(q.embedding.shape()));
    std::vector<int> cover = covering_units(q.points, layout);
    if (cover.empty()) throw InvalidInputError("object query has no sampling points");
    std::vector<Tensor> tokens;
    tokens.reserve(cover.size());
    for (int g : cover) {
        Tensor pooled = flow::pool_unit(units.global_unit(g));
        if (pooled.dim(0) != q.embedding.dim(0))
            throw DimensionError("unit channels do not match the embedding width");
        tokens.push_back(pooled.reshape({1, pooled.dim(0)}));
    }
    Tensor keys = (tokens.size() == 1) ? tokens[0] : concat(0, tokens);
    Tensor values = matmul(keys, params.at("obj.wv"));
    Tensor emb_row = q.embedding.reshape({1, q.embedding.dim(0)});
    Tensor attended = attention(emb_row, keys, values);
    return add(emb_row, attended).reshape({q.embedding.dim(0)});
}

} // namespace flowad::enhance
