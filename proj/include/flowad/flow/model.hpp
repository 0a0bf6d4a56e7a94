#pragma once

#include <json.hpp>
#include <string>
#include <vector>

#include "flowad/flow/fuse.hpp"
#include "flowad/flow/spatial.hpp"
#include "flowad/flow/temporal.hpp"
#include "flowad/geometry/layout.hpp"
#include "flowad/tensor/optim.hpp"

namespace flowad::flow {

struct TrainConfig {
    int horizon = 4;       // frames per clip, T
    int level = 8;         // base unit width P of the active level
    double lambda_spat = 1.0;
    double lambda_tem = 1.0;
    double lr = 3e-3;
    int steps = 200;
    std::uint64_t seed = 1;
    int c_latent = 0;      // latent state channels; 0 derives C/2
    int agg_range = 3;     // neighbors mixed per unit before prediction
    bool share_heads = false;
    bool fused_observation = false;

    int latent_channels(int c) const {
        if (c_latent > 0) return c_latent;
        return std::max(1, c / 2);
    }
};

inline TrainConfig parse_train_config(const nlohmann::json& j) {
    TrainConfig tc;
    try {
        for (const auto& [key, val] : j.items()) {
            if (key == "T")
                tc.horizon = val.get<int>();
            else if (key == "level")
                tc.level = val.get<int>();
            else if (key == "lambda_spat")
                tc.lambda_spat = val.get<double>();
            else if (key == "lambda_tem")
                tc.lambda_tem = val.get<double>();
            else if (key == "lr")
                tc.lr = val.get<double>();
            else if (key == "steps")
                tc.steps = val.get<int>();
            else if (key == "seed")
                tc.seed = val.get<std::uint64_t>();
            else if (key == "c_latent")
                tc.c_latent = val.get<int>();
            else if (key == "agg_range")
                tc.agg_range = val.get<int>();
            else if (key == "share_heads")
                tc.share_heads = val.get<bool>();
            else if (key == "fused_observation")
                tc.fused_observation = val.get<bool>();
            else
                throw ConfigError("unknown training config key: " + key);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad training config: ") + e.what());
    }
    if (tc.horizon < 2) throw ConfigError("training horizon must be at least 2 frames");
    if (tc.steps < 0) throw ConfigError("step count must be nonnegative");
    if (tc.lr <= 0.0) throw ConfigError("learning rate must be positive");
    if (tc.lambda_spat < 0.0 || tc.lambda_tem < 0.0)
        throw ConfigError("loss weights must be nonnegative");
    return tc;
}

inline nlohmann::json train_config_json(const TrainConfig& tc) {
    return nlohmann::json{
        {"T", tc.horizon},
        {"level", tc.level},
        {"lambda_spat", tc.lambda_spat},
        {"lambda_tem", tc.lambda_tem},
        {"lr", tc.lr},
        {"steps", tc.steps},
        {"seed", tc.seed},
        {"c_latent", tc.c_latent},
        {"agg_range", tc.agg_range},
        {"share_heads", tc.share_heads},
        {"fused_observation", tc.fused_observation},
    };
}

// Allocates every trainable tensor of the flow model for one rig and level.
// Query counts follow the straight-driving layout; when steering changes the
// per-side unit count, the last query row is reused for the overflow.
inline void init_flow_model(ParamSet& ps, const geom::RigConfig& rig, const TrainConfig& tc,
                            Rng& rng) {
    geom::PanoramicRig prig(rig);
    geom::PartitionLayout base =
        geom::build_layout(prig, 0.0, tc.level, tc.level, tc.level);
    const int nq = std::max(base.num_right(), base.num_left());
    const int nk = base.num_units();
    const int c = rig.channels;
    ps.add("q_spat", Tensor::uniform({2, nq, c}, -0.1, 0.1, rng));
    for (int t = 1; t <= tc.horizon; ++t)
        ps.add(temporal_query_name(t), Tensor::uniform({nk, c}, -0.1, 0.1, rng));
    init_gru(ps, "gru_spat", c, rng);
    init_gru(ps, "gru_tem", c, rng);
    init_state_head(ps, "head_pred", c, tc.latent_channels(c), rng);
    if (!tc.share_heads) init_state_head(ps, "head_gt", c, tc.latent_channels(c), rng);
    init_fuse(ps, tc.level, rng);
    if (tc.agg_range > 1) geom::init_local_aggregate(ps, tc.agg_range, tc.level, rng);
}

struct FlowLosses {
    Tensor total;
    Tensor spatial;
    Tensor temporal;
};

// Spatial and temporal world-model objectives over one observed clip.
// Spatial prediction runs on every frame (zero substitute on the first);
// temporal prediction starts at the second frame.
inline FlowLosses flow_sequence_loss(const std::vector<FlowUnitSet>& frames,
                                     const ParamSet& params, const TrainConfig& tc) {
    if (frames.size() < 2) throw ConfigError("clip must contain at least 2 frames");
    const Tensor& q_spat = params.at("q_spat");

    Tensor spat = Tensor::scalar(0.0);
    for (std::size_t t = 0; t < frames.size(); ++t) {
        if (frames[t].right.empty()) throw InvalidInputError("frame has no right-side units");
        Tensor substitute = (t == 0) ? Tensor::zeros(frames[0].right[0].shape())
                                     : frames[t - 1].right[0];
        FlowUnitSet pred =
            spatial_flow_predict(frames[t], q_spat, substitute, params, tc.fused_observation);
        spat = add(spat, spatial_loss(pred, frames[t], params, tc.share_heads));
    }
    spat = scale(spat, 1.0 / frames.size());

    std::vector<FlowUnitSet> preds = temporal_flow_predict(frames, params, tc.fused_observation);
    std::vector<FlowUnitSet> gts(frames.begin() + 1, frames.end());
    Tensor tem = temporal_loss(preds, gts, params, tc.share_heads);

    Tensor total = add(scale(spat, tc.lambda_spat), scale(tem, tc.lambda_tem));
    return {total, spat, tem};
}

struct FlowStepResult {
    double total;
    double spatial;
    double temporal;
};

// One full optimizer step on a clip: forward, backward, Adam update.
// Parameters are replaced in place with the updated set.
inline FlowStepResult flow_train_step(ParamSet& params, Adam& opt,
                                      const std::vector<FlowUnitSet>& frames,
                                      const TrainConfig& tc) {
    Tape tape;
    FlowLosses losses;
    {
        Tape::Scope scope(tape);
        params.track_all(tape);
        losses = flow_sequence_loss(frames, params, tc);
        tape.backward(losses.total);
    }
    GradMap grads = collect_grads(params);
    params = opt.step(params, grads);
    return {losses.total.value(), losses.spatial.value(), losses.temporal.value()};
}

} // namespace flowad::flow
