#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "flowad/error.hpp"
#include "flowad/geometry/pose.hpp"
#include "flowad/geometry/rig.hpp"

namespace flowad::synth {

enum class PathKind { Straight, Arc };

/// Content stamped into the ring texture on the first frame and carried by
/// the scene motion afterwards.
struct PlantedObject {
    double position = 0.0;         // ring coordinate at the first frame
    std::vector<double> signature; // per channel; empty draws one from the seed
};

/// Fully seeded description of a synthetic drive. One scenario yields one
/// feature sequence plus the matching trajectory log.
struct SynthScenario {
    PathKind kind = PathKind::Arc;
    double speed = 8.0; // m/s along a straight path
    double r = 10.0;    // m, arc radius
    double omega = 0.1; // rad/s, arc angular speed
    geom::TurnDirection direction = geom::TurnDirection::Right;
    int horizon = 8; // frames
    std::uint64_t seed = 42;
    geom::RigConfig rig;
    double dt = 1.0;       // seconds per frame
    double w_ego = 2.0;    // m
    double px_per_m = 1.0; // ring columns per meter of travel
    int block_w = 0;       // texture wavelength in columns; 0 means rig.levels[0]
    std::vector<PlantedObject> objects;

    double ground_speed() const { return kind == PathKind::Straight ? speed : omega * r; }
    int texture_block() const { return block_w > 0 ? block_w : rig.levels.front(); }
};

inline void validate_scenario(const SynthScenario& s) {
    geom::validate_rig(s.rig);
    if (s.horizon < 1) throw ConfigError("scenario horizon must be at least 1 frame");
    if (s.dt <= 0.0) throw ConfigError("frame interval must be positive");
    if (s.w_ego <= 0.0) throw ConfigError("ego width must be positive");
    if (s.px_per_m <= 0.0) throw ConfigError("pixels-per-meter must be positive");
    if (s.block_w < 0) throw ConfigError("texture block width must be nonnegative");
    if (s.kind == PathKind::Straight) {
        if (s.speed < 0.0) throw ConfigError("speed must be nonnegative");
    } else {
        if (s.omega < 0.0) throw ConfigError("angular speed must be nonnegative");
        if (s.r <= 0.5 * s.w_ego)
            throw KinematicError("arc radius " + std::to_string(s.r) +
                                 " m is not drivable for ego width " + std::to_string(s.w_ego) +
                                 " m");
    }
    const int ring = s.rig.num_cameras * s.rig.width;
    for (const PlantedObject& o : s.objects) {
        if (!(o.position >= 0.0 && o.position < ring))
            throw ConfigError("object position " + std::to_string(o.position) +
                              " outside the ring [0, " + std::to_string(ring) + ")");
        if (!o.signature.empty() && static_cast<int>(o.signature.size()) != s.rig.channels)
            throw ConfigError("object signature length does not match the channel count");
    }
}

inline SynthScenario parse_scenario(const nlohmann::json& j) {
    SynthScenario s;
    try {
        for (const auto& [key, val] : j.items()) {
            if (key == "path") {
                const std::string type = val.at("type").get<std::string>();
                if (type == "straight") {
                    s.kind = PathKind::Straight;
                    for (const auto& [k, v] : val.items()) {
                        if (k == "type") continue;
                        if (k == "speed") s.speed = v.get<double>();
                        else throw ConfigError("unknown straight-path key '" + k + "'");
                    }
                } else if (type == "arc") {
                    s.kind = PathKind::Arc;
                    for (const auto& [k, v] : val.items()) {
                        if (k == "type") continue;
                        if (k == "r") s.r = v.get<double>();
                        else if (k == "omega") s.omega = v.get<double>();
                        else if (k == "direction") {
                            const std::string d = v.get<std::string>();
                            if (d == "right") s.direction = geom::TurnDirection::Right;
                            else if (d == "left") s.direction = geom::TurnDirection::Left;
                            else throw ConfigError("path direction must be 'right' or 'left'");
                        } else {
                            throw ConfigError("unknown arc-path key '" + k + "'");
                        }
                    }
                } else {
                    throw ConfigError("unknown path type '" + type + "'");
                }
            } else if (key == "T") {
                s.horizon = val.get<int>();
            } else if (key == "seed") {
                s.seed = val.get<std::uint64_t>();
            } else if (key == "rig") {
                s.rig = geom::parse_rig_config(val);
            } else if (key == "dt") {
                s.dt = val.get<double>();
            } else if (key == "w_ego") {
                s.w_ego = val.get<double>();
            } else if (key == "px_per_m") {
                s.px_per_m = val.get<double>();
            } else if (key == "block_w") {
                s.block_w = val.get<int>();
            } else if (key == "objects") {
                for (const auto& e : val) {
                    PlantedObject o;
                    for (const auto& [k, v] : e.items()) {
                        if (k == "position") o.position = v.get<double>();
                        else if (k == "signature") o.signature = v.get<std::vector<double>>();
                        else throw ConfigError("unknown object key '" + k + "'");
                    }
                    s.objects.push_back(std::move(o));
                }
            } else {
                throw ConfigError("unknown scenario key '" + key + "'");
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad scenario: ") + e.what());
    }
    validate_scenario(s);
    return s;
}

inline nlohmann::json scenario_json(const SynthScenario& s) {
    nlohmann::json path;
    if (s.kind == PathKind::Straight) {
        path = {{"type", "straight"}, {"speed", s.speed}};
    } else {
        path = {{"type", "arc"},
                {"r", s.r},
                {"omega", s.omega},
                {"direction", s.direction == geom::TurnDirection::Right ? "right" : "left"}};
    }
    nlohmann::json j{{"path", path},          {"T", s.horizon},
                     {"seed", s.seed},        {"rig", geom::rig_config_json(s.rig)},
                     {"dt", s.dt},            {"w_ego", s.w_ego},
                     {"px_per_m", s.px_per_m}, {"block_w", s.texture_block()}};
    if (!s.objects.empty()) {
        nlohmann::json arr = nlohmann::json::array();
        for (const PlantedObject& o : s.objects) {
            nlohmann::json e{{"position", o.position}};
            if (!o.signature.empty()) e["signature"] = o.signature;
            arr.push_back(e);
        }
        j["objects"] = arr;
    }
    return j;
}

/// Ideal fractional columns the scene moves per frame on each side. Under an
/// arc the two sides scale by the same quadratic radius factors as the unit
/// widths, so realized scene motion and partition stretching stay consistent.
struct SideShift {
    double right = 0.0, left = 0.0;
};

inline SideShift ideal_shifts(const SynthScenario& s) {
    const double base = s.ground_speed() * s.dt * s.px_per_m;
    if (s.kind == PathKind::Straight) return {base, base};
    const double outer = (s.r + 0.5 * s.w_ego) / s.r;
    const double inner = (s.r - 0.5 * s.w_ego) / s.r;
    if (s.direction == geom::TurnDirection::Right)
        return {base * inner * inner, base * outer * outer};
    return {base * outer * outer, base * inner * inner};
}

} // namespace flowad::synth
