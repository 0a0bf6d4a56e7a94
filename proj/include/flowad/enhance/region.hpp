#pragma once

#include "flowad/flow/state.hpp"

namespace flowad::enhance {

inline void init_region_enhance(ParamSet& ps, int channels, Rng& rng) {
    const double b = 1.0 / std::sqrt(2.0 * channels);
    ps.add("region.w", Tensor::uniform({2 * channels, channels}, -b, b, rng));
    ps.add("region.b", Tensor::zeros({channels}));
}

// Concatenates a region feature map with its flow unit along channels and
// mixes back down to C with a per-position linear map (a 1x1 convolution).
inline Tensor region_enhance(const Tensor& region, const Tensor& unit, const ParamSet& params) {
    if (region.rank() != 3 || unit.rank() != 3)
        throw DimensionError("region and unit must be rank 3");
    if (region.shape() != unit.shape())
        throw DimensionError("region shape " + shape_str(region.shape()) +
                             " does not match unit shape " + shape_str(unit.shape()));
    const int h = region.shape()[0], p = region.shape()[1], c = region.shape()[2];
    Tensor cat = concat(2, {region, unit}).reshape({h * p, 2 * c});
    Tensor mixed = linear(cat, params.at("region.w"), params.at("region.b"));
    return mixed.reshape({h, p, c});
}

} // namespace flowad::enhance
