#pragma once

#include <string>
#include <vector>

#include "flowad/flow/spatial.hpp"

namespace flowad::flow {

inline std::string temporal_query_name(int t) { return "q_tem.t" + std::to_string(t); }

// One temporal step for a single unit: the pooled unit from the previous
// frame updates that unit's per-frame query, then the previous unit's
// positions attend into the state to predict the current frame's unit.
inline Tensor temporal_flow_step(const Tensor& q_gt, const Tensor& f_prev, const ParamSet& params,
                                 bool fused = false) {
    if (q_gt.rank() != 1)
        throw DimensionError("temporal query must be rank 1, got " + shape_str(q_gt.shape()));
    if (f_prev.rank() != 3)
        throw DimensionError("previous unit must be rank 3, got " + shape_str(f_prev.shape()));
    if (q_gt.shape()[0] != f_prev.shape()[2])
        throw DimensionError("query width " + shape_str(q_gt.shape()) + " does not match unit channels " +
                             shape_str(f_prev.shape()));
    Tensor h_state = gru_cell(pool_unit(f_prev), q_gt, params, "gru_tem");
    return detail::state_to_observation(h_state, f_prev, fused);
}

// Rolls the temporal predictor over an observed sequence. Frame indices are
// 1-based in the query naming; the first frame has no predecessor, so
// predictions exist for frames 2..T. Element i of the result predicts
// seq[i + 1].
inline std::vector<FlowUnitSet> temporal_flow_predict(const std::vector<FlowUnitSet>& seq,
                                                      const ParamSet& params, bool fused = false) {
    if (seq.size() < 2) throw ConfigError("temporal prediction needs a horizon of at least 2 frames");
    std::vector<FlowUnitSet> preds;
    for (std::size_t t = 1; t < seq.size(); ++t) {
        const FlowUnitSet& prev = seq[t - 1];
        if (prev.num_units() != seq[t].num_units())
            throw DimensionError("unit count changed between frames " + std::to_string(t) +
                                 " and " + std::to_string(t + 1));
        const Tensor& q_block = params.at(temporal_query_name(static_cast<int>(t) + 1));
        if (q_block.rank() != 2)
            throw DimensionError("temporal query block must be rank 2, got " + shape_str(q_block.shape()));
        const int nq = q_block.shape()[0], c = q_block.shape()[1];
        FlowUnitSet out;
        out.right.reserve(prev.right.size());
        out.left.reserve(prev.left.size());
        for (int g = 0; g < prev.num_units(); ++g) {
            const int row = std::min(g, nq - 1);
            Tensor q_row = slice(q_block, 0, row, row + 1).reshape({c});
            Tensor f_hat = temporal_flow_step(q_row, prev.global_unit(g), params, fused);
            if (g < static_cast<int>(prev.right.size()))
                out.right.push_back(f_hat);
            else
                out.left.insert(out.left.begin(), f_hat);
        }
        preds.push_back(std::move(out));
    }
    return preds;
}

// Mean world-model objective over predicted frames 2..T.
inline Tensor temporal_loss(const std::vector<FlowUnitSet>& preds,
                            const std::vector<FlowUnitSet>& gts, const ParamSet& params,
                            bool share_heads = false) {
    if (preds.empty()) throw ConfigError("temporal loss needs at least one predicted frame");
    if (preds.size() != gts.size())
        throw DimensionError("prediction and target frame counts differ");
    Tensor acc = Tensor::scalar(0.0);
    for (std::size_t t = 0; t < preds.size(); ++t)
        acc = add(acc, unit_set_kl(preds[t], gts[t], params, "head_pred",
                                   share_heads ? "head_pred" : "head_gt"));
    return scale(acc, 1.0 / preds.size());
}

} // namespace flowad::flow
