#pragma once

#include <array>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "flowad/error.hpp"

namespace flowad::metrics {

enum class Command { GoStraight, TurnLeft, TurnRight };

inline std::string command_name(Command c) {
    switch (c) {
        case Command::GoStraight: return "GoStraight";
        case Command::TurnLeft: return "TurnLeft";
        case Command::TurnRight: return "TurnRight";
    }
    throw InvalidInputError("unknown command value");
}

inline Command parse_command(const std::string& s) {
    if (s == "GoStraight") return Command::GoStraight;
    if (s == "TurnLeft") return Command::TurnLeft;
    if (s == "TurnRight") return Command::TurnRight;
    throw FormatError("unknown command: " + s);
}

using Point2 = std::array<double, 2>;

// One frame of a clip. Predictions and ground truth are per planning
// horizon (1, 2, 3 seconds); absent fields stay unset and are validated by
// the metric that needs them.
struct TrajFrame {
    std::optional<Point2> pred_1s, pred_2s, pred_3s;
    std::optional<Point2> gt_1s, gt_2s, gt_3s;
    std::optional<double> lateral_3s;

    const std::optional<Point2>& pred(int horizon) const {
        switch (horizon) {
            case 1: return pred_1s;
            case 2: return pred_2s;
            case 3: return pred_3s;
        }
        throw InvalidInputError("horizon must be 1, 2, or 3 seconds");
    }
    const std::optional<Point2>& gt(int horizon) const {
        switch (horizon) {
            case 1: return gt_1s;
            case 2: return gt_2s;
            case 3: return gt_3s;
        }
        throw InvalidInputError("horizon must be 1, 2, or 3 seconds");
    }
};

struct TrajClip {
    Command command = Command::GoStraight;
    std::vector<TrajFrame> frames;
};

struct TrajectoryLog {
    std::vector<TrajClip> clips;
};

namespace detail {

inline nlohmann::json point_json(const Point2& p) { return nlohmann::json::array({p[0], p[1]}); }

inline Point2 parse_point(const nlohmann::json& j) {
    if (!j.is_array() || j.size() != 2) throw FormatError("point must be a 2-element array");
    return {j[0].get<double>(), j[1].get<double>()};
}

} // namespace detail

inline nlohmann::json clip_json(const TrajClip& clip) {
    nlohmann::json frames = nlohmann::json::array();
    for (const TrajFrame& f : clip.frames) {
        nlohmann::json jf = nlohmann::json::object();
        if (f.pred_1s) jf["pred_1s"] = detail::point_json(*f.pred_1s);
        if (f.pred_2s) jf["pred_2s"] = detail::point_json(*f.pred_2s);
        if (f.pred_3s) jf["pred_3s"] = detail::point_json(*f.pred_3s);
        if (f.gt_1s) jf["gt_1s"] = detail::point_json(*f.gt_1s);
        if (f.gt_2s) jf["gt_2s"] = detail::point_json(*f.gt_2s);
        if (f.gt_3s) jf["gt_3s"] = detail::point_json(*f.gt_3s);
        if (f.lateral_3s) jf["lateral_3s"] = *f.lateral_3s;
        frames.push_back(jf);
    }
    return nlohmann::json{{"command", command_name(clip.command)}, {"frames", frames}};
}

inline TrajClip parse_clip(const nlohmann::json& j) {
    TrajClip clip;
    clip.command = parse_command(j.at("command").get<std::string>());
    const nlohmann::json& frames = j.at("frames");
    if (!frames.is_array() || frames.empty())
        throw FormatError("clip must contain a non-empty frames array");
    for (const nlohmann::json& jf : frames) {
        TrajFrame f;
        if (jf.contains("pred_1s")) f.pred_1s = detail::parse_point(jf["pred_1s"]);
        if (jf.contains("pred_2s")) f.pred_2s = detail::parse_point(jf["pred_2s"]);
        if (jf.contains("pred_3s")) f.pred_3s = detail::parse_point(jf["pred_3s"]);
        if (jf.contains("gt_1s")) f.gt_1s = detail::parse_point(jf["gt_1s"]);
        if (jf.contains("gt_2s")) f.gt_2s = detail::parse_point(jf["gt_2s"]);
        if (jf.contains("gt_3s")) f.gt_3s = detail::parse_point(jf["gt_3s"]);
        if (jf.contains("lateral_3s")) f.lateral_3s = jf["lateral_3s"].get<double>();
        clip.frames.push_back(f);
    }
    return clip;
}

// JSON lines, one clip per line.
inline void write_trajectory_log(const TrajectoryLog& log, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    for (const TrajClip& clip : log.clips) out << clip_json(clip).dump() << "\n";
    if (!out) throw IoError("failed writing " + path.string());
}

inline TrajectoryLog read_trajectory_log(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    TrajectoryLog log;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            log.clips.push_back(parse_clip(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(path.string() + " line " + std::to_string(lineno) + ": " + e.what());
        } catch (const FormatError& e) {
            throw FormatError(path.string() + " line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return log;
}

} // namespace flowad::metrics
