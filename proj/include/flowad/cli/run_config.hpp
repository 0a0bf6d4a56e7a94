#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "flowad/error.hpp"
#include "flowad/flow/model.hpp"
#include "flowad/synth/scenario.hpp"

namespace flowad::cli {

struct MetricsConfig {
    std::vector<double> thresholds{0.25, 0.5, 0.75};
    std::vector<int> q_values{1, 2, 3};
    std::vector<int> horizons{1, 2, 3};
};

inline MetricsConfig parse_metrics_config(const nlohmann::json& j) {
    MetricsConfig mc;
    try {
        for (const auto& [key, val] : j.items()) {
            if (key == "thresholds") mc.thresholds = val.get<std::vector<double>>();
            else if (key == "q") mc.q_values = val.get<std::vector<int>>();
            else if (key == "horizons") mc.horizons = val.get<std::vector<int>>();
            else throw ConfigError("unknown metrics config key: " + key);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad metrics config: ") + e.what());
    }
    if (mc.thresholds.empty()) throw ConfigError("metric thresholds must be nonempty");
    for (double t : mc.thresholds)
        if (t <= 0.0) throw ConfigError("metric thresholds must be positive");
    if (mc.q_values.empty()) throw ConfigError("compliance window list must be nonempty");
    for (int q : mc.q_values)
        if (q < 1) throw ConfigError("compliance windows must be at least 1 frame");
    if (mc.horizons.empty()) throw ConfigError("horizon list must be nonempty");
    for (int h : mc.horizons)
        if (h < 1 || h > 3) throw ConfigError("trajectory horizons are 1, 2, or 3 seconds");
    return mc;
}

inline nlohmann::json metrics_config_json(const MetricsConfig& mc) {
    return nlohmann::json{
        {"thresholds", mc.thresholds}, {"q", mc.q_values}, {"horizons", mc.horizons}};
}

/// Everything one invocation needs: the world to synthesize, the training
/// hyperparameters, and the metric options. Missing sections keep defaults.
struct RunConfig {
    synth::SynthScenario scenario;
    flow::TrainConfig train;
    MetricsConfig metrics;
};

inline RunConfig parse_run_config(const nlohmann::json& j) {
    RunConfig rc;
    try {
        for (const auto& [key, val] : j.items()) {
            if (key == "scenario") rc.scenario = synth::parse_scenario(val);
            else if (key == "train") rc.train = flow::parse_train_config(val);
            else if (key == "metrics") rc.metrics = parse_metrics_config(val);
            else throw ConfigError("unknown config section: " + key);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad run config: ") + e.what());
    }
    return rc;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config: " + path.string());
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
    }
    return parse_run_config(j);
}

inline nlohmann::json run_config_json(const RunConfig& rc) {
    return nlohmann::json{{"scenario", synth::scenario_json(rc.scenario)},
                          {"train", flow::train_config_json(rc.train)},
                          {"metrics", metrics_config_json(rc.metrics)}};
}

/// Each output directory records the fully resolved config that produced it.
inline void write_resolved_config(const RunConfig& rc, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::ofstream os(dir / "config.json");
    if (!os) throw IoError("cannot write resolved config in " + dir.string());
    os << run_config_json(rc).dump(2) << "\n";
}

} // namespace flowad::cli
