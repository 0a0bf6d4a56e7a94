#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <json.hpp>

#include "flowad/error.hpp"
#include "flowad/geometry/pose.hpp"

namespace flowad::geom {

/// Camera ring: N identical image planes forming the chords of a regular
/// N-gon around the ego, ordered clockwise from the front camera. The ring
/// coordinate s runs over [0, N*W) with camera i owning [i*W, (i+1)*W); s
/// increases clockwise, so columns to the ego's right of the forward axis
/// carry larger s.
struct RigConfig {
    int num_cameras = 6;
    int width = 64;
    int height = 8;
    int channels = 16;
    std::vector<int> levels = {8, 4, 2, 1}; // unit widths, coarse to fine
};

inline void validate_rig(const RigConfig& r) {
    if (r.num_cameras < 3) throw ConfigError("rig needs at least 3 cameras");
    if (r.width < 2 || r.height < 1 || r.channels < 1)
        throw ConfigError("rig dimensions must be positive (width >= 2)");
    if (r.levels.empty()) throw ConfigError("rig needs at least one partition level");
    for (int p : r.levels) {
        if (p < 1) throw ConfigError("partition level width must be >= 1");
        if (r.width % p != 0)
            throw ConfigError("camera width " + std::to_string(r.width) +
                              " is not a multiple of level width " + std::to_string(p));
    }
}

inline RigConfig parse_rig_config(const nlohmann::json& j) {
    RigConfig r;
    try {
        if (j.contains("num_cameras")) r.num_cameras = j.at("num_cameras").get<int>();
        if (j.contains("width")) r.width = j.at("width").get<int>();
        if (j.contains("height")) r.height = j.at("height").get<int>();
        if (j.contains("channels")) r.channels = j.at("channels").get<int>();
        if (j.contains("levels")) r.levels = j.at("levels").get<std::vector<int>>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad rig config: ") + e.what());
    }
    validate_rig(r);
    return r;
}

inline nlohmann::json rig_config_json(const RigConfig& r) {
    return nlohmann::json{{"num_cameras", r.num_cameras},
                          {"width", r.width},
                          {"height", r.height},
                          {"channels", r.channels},
                          {"levels", r.levels}};
}

struct PanoramicRig {
    RigConfig cfg;

    explicit PanoramicRig(RigConfig c) : cfg(std::move(c)) { validate_rig(cfg); }

    int ring_cols() const { return cfg.num_cameras * cfg.width; }
    double half_span() const { return M_PI / cfg.num_cameras; }

    /// Outward normal angle of camera i's plane; clockwise camera order means
    /// the angle decreases with i.
    double camera_angle(int i) const { return -2.0 * M_PI * i / cfg.num_cameras; }

    /// Ring coordinate where a ray from the center along dir crosses the
    /// camera planes. Corner hits resolve to the clockwise-next plane.
    double partition_start(const Vec2& dir) const {
        const double n = std::hypot(dir.x, dir.y);
        if (std::abs(n - 1.0) > 1e-6)
            throw InvalidInputError("partition_start: direction is not normalized");
        const double theta = std::atan2(dir.y, dir.x);
        const double d = half_span();
        const int n_cam = cfg.num_cameras;
        int i = static_cast<int>(std::floor((-theta + d) / (2.0 * d)));
        i = ((i % n_cam) + n_cam) % n_cam;
        // offset of the hit from the plane center, as a fraction of the half chord
        const double off = std::remainder(camera_angle(i) - theta, 2.0 * M_PI);
        double c = 0.5 * cfg.width * (1.0 + std::tan(off) / std::tan(d));
        double s = i * cfg.width + c;
        if (s >= ring_cols()) s -= ring_cols();
        if (s < 0.0) s = 0.0;
        return s;
    }

    /// Inverse of partition_start: world direction whose ray crosses the ring
    /// at coordinate s.
    Vec2 ring_to_direction(double s) const {
        const int r = ring_cols();
        if (!(s >= 0.0 && s < r))
            throw InvalidInputError("ring coordinate " + std::to_string(s) + " outside [0, " +
                                    std::to_string(r) + ")");
        const int i = static_cast<int>(std::floor(s / cfg.width));
        const double c = s - i * cfg.width;
        const double t = (2.0 * c / cfg.width - 1.0) * std::tan(half_span());
        const double theta = camera_angle(i) - std::atan(t);
        return Vec2{std::cos(theta), std::sin(theta)};
    }
};

} // namespace flowad::geom
