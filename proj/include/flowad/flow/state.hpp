#pragma once

#include <string>

#include "flowad/geometry/units.hpp"
#include "flowad/tensor/nn.hpp"

namespace flowad::flow {

using geom::FlowUnitSet;

// Diagonal Gaussian over latent state channels, one per unit position.
struct LatentGaussian {
    Tensor mu;    // [H, P, C']
    Tensor sigma; // [H, P, C'], strictly positive
};

inline void init_state_head(ParamSet& ps, const std::string& prefix, int c_in, int c_latent,
                            Rng& rng) {
    if (c_latent < 1) throw ConfigError("latent channel count must be positive");
    init_mlp(ps, prefix, {c_in, c_in, 2 * c_latent}, rng);
}

// Maps a flow unit to a per-position latent Gaussian. The head emits
// (mu, raw); log-sigma is 4*tanh(raw) so sigma stays inside [e^-4, e^4].
inline LatentGaussian unit_to_state(const Tensor& unit, const ParamSet& params,
                                    const std::string& prefix) {
    if (unit.rank() != 3) throw DimensionError("flow unit must be rank 3, got " + shape_str(unit.shape()));
    const int h = unit.shape()[0], p = unit.shape()[1], c = unit.shape()[2];
    Tensor flat = unit.reshape({h * p, c});
    Tensor out = mlp(flat, params, prefix);
    const int twoc = out.shape()[1];
    if (twoc % 2 != 0) throw DimensionError("state head output width must be even");
    const int cl = twoc / 2;
    Tensor mu = slice(out, 1, 0, cl).reshape({h, p, cl});
    Tensor raw = slice(out, 1, cl, twoc);
    Tensor sigma = exp_op(scale(tanh_op(raw), 4.0)).reshape({h, p, cl});
    return {mu, sigma};
}

inline Tensor kl_gaussian_pair(const LatentGaussian& pred, const LatentGaussian& gt) {
    return kl_diag_gaussian(pred.mu, pred.sigma, gt.mu, gt.sigma);
}

// Mean KL over paired units. The ground-truth branch runs without gradient
// tracking: targets act as constants, exactly as a stopped gradient.
inline Tensor unit_set_kl(const FlowUnitSet& pred, const FlowUnitSet& gt, const ParamSet& params,
                          const std::string& pred_prefix, const std::string& gt_prefix) {
    if (pred.num_units() != gt.num_units())
        throw DimensionError("predicted and observed unit sets differ in size");
    if (pred.num_units() == 0) throw InvalidInputError("empty unit set");
    Tensor acc = Tensor::scalar(0.0);
    for (int g = 0; g < pred.num_units(); ++g) {
        if (pred.global_unit(g).shape() != gt.global_unit(g).shape())
            throw DimensionError("unit shape mismatch at index " + std::to_string(g));
        LatentGaussian ps = unit_to_state(pred.global_unit(g), params, pred_prefix);
        LatentGaussian gs;
        {
            Tape::NoGradScope ng;
            gs = unit_to_state(gt.global_unit(g), params, gt_prefix);
        }
        acc = add(acc, kl_gaussian_pair(ps, gs));
    }
    return scale(acc, 1.0 / pred.num_units());
}

} // namespace flowad::flow
