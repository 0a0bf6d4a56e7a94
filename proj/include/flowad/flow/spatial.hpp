#pragma once

#include <string>
#include <utility>

#include "flowad/flow/state.hpp"

namespace flowad::flow {

// Mean feature over all H*P positions of a unit.
inline Tensor pool_unit(const Tensor& unit) {
    if (unit.rank() != 3) throw DimensionError("flow unit must be rank 3, got " + shape_str(unit.shape()));
    const int h = unit.shape()[0], p = unit.shape()[1], c = unit.shape()[2];
    return mean_rows(unit.reshape({h * p, c}));
}

namespace detail {

// Reconstructs an observation from the updated state. The default path is a
// cross-attention with the previous unit's positions as queries and the state
// as the sole key/value token; the fused variant broadcasts the state
// directly. With a single key the softmax row is identically 1, so the two
// paths coincide numerically and the flag only switches the mechanism.
inline Tensor state_to_observation(const Tensor& h_state, const Tensor& f_prev, bool fused) {
    const int h = f_prev.shape()[0], p = f_prev.shape()[1], c = f_prev.shape()[2];
    Tensor state_row = h_state.reshape({1, c});
    if (fused) {
        Tensor tiled = matmul(Tensor::full({h * p, 1}, 1.0), state_row);
        return tiled.reshape({h, p, c});
    }
    Tensor q = f_prev.reshape({h * p, c});
    return attention(q, state_row, state_row).reshape({h, p, c});
}

} // namespace detail

// One auto-regressive step: the pooled predecessor unit drives a GRU update
// of the per-unit query, then the predecessor's positions attend into the
// updated state to form the predicted unit.
inline std::pair<Tensor, Tensor> spatial_flow_step(const Tensor& q_j, const Tensor& f_prev,
                                                   const ParamSet& params, bool fused = false) {
    if (q_j.rank() != 1) throw DimensionError("spatial query must be rank 1, got " + shape_str(q_j.shape()));
    if (f_prev.rank() != 3)
        throw DimensionError("predecessor unit must be rank 3, got " + shape_str(f_prev.shape()));
    if (q_j.shape()[0] != f_prev.shape()[2])
        throw DimensionError("query width " + shape_str(q_j.shape()) + " does not match unit channels " +
                             shape_str(f_prev.shape()));
    Tensor h_state = gru_cell(pool_unit(f_prev), q_j, params, "gru_spat");
    Tensor f_hat = detail::state_to_observation(h_state, f_prev, fused);
    return {h_state, f_hat};
}

// Predicts every unit of the current frame from its ring predecessor on the
// same side. The first unit of each side has no predecessor and uses the
// substitute (first unit of the previous frame; zeros on the first frame).
// Predecessors are the observed units, not earlier predictions.
inline FlowUnitSet spatial_flow_predict(const FlowUnitSet& units, const Tensor& q_spat,
                                        const Tensor& substitute, const ParamSet& params,
                                        bool fused = false) {
    if (q_spat.rank() != 3 || q_spat.shape()[0] != 2)
        throw DimensionError("spatial queries must be [2 x NQ x C], got " + shape_str(q_spat.shape()));
    if (units.num_units() == 0) throw InvalidInputError("empty unit set");
    const int nq = q_spat.shape()[1];
    const int c = q_spat.shape()[2];
    FlowUnitSet out;
    const std::vector<Tensor>* sides[2] = {&units.right, &units.left};
    std::vector<Tensor>* outs[2] = {&out.right, &out.left};
    for (int s = 0; s < 2; ++s) {
        const std::vector<Tensor>& side = *sides[s];
        for (std::size_t j = 0; j < side.size(); ++j) {
            const Tensor& f_prev = (j == 0) ? substitute : side[j - 1];
            if (f_prev.shape() != side[j].shape())
                throw DimensionError("predecessor shape " + shape_str(f_prev.shape()) +
                                     " does not match unit shape " + shape_str(side[j].shape()));
            const int row = std::min<int>(static_cast<int>(j), nq - 1);
            Tensor q_row = slice(slice(q_spat, 0, s, s + 1), 1, row, row + 1).reshape({c});
            outs[s]->push_back(spatial_flow_step(q_row, f_prev, params, fused).second);
        }
    }
    return out;
}

// World-model objective for the spatial direction: predicted units against
// the observed frame, through separate (or shared) state heads.
inline Tensor spatial_loss(const FlowUnitSet& pred, const FlowUnitSet& gt, const ParamSet& params,
                           bool share_heads = false) {
    return unit_set_kl(pred, gt, params, "head_pred", share_heads ? "head_pred" : "head_gt");
}

} // namespace flowad::flow
