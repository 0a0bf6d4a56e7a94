#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "flowad/error.hpp"
#include "flowad/synth/generate.hpp"
#include "flowad/tensor/tensor_io.hpp"

namespace flowad::synth {

namespace detail {

inline std::uint64_t fnv1a_file(const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    if (!is) throw IoError("cannot open for hashing: " + p.string());
    std::uint64_t h = 1469598103934665603ull;
    char buf[4096];
    while (is.read(buf, sizeof buf) || is.gcount() > 0) {
        const std::streamsize n = is.gcount();
        for (std::streamsize i = 0; i < n; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 1099511628211ull;
        }
        if (!is) break;
    }
    return h;
}

inline std::string frame_file_name(std::size_t i) {
    char name[32];
    std::snprintf(name, sizeof name, "frame_%05llu.flt1",
                  static_cast<unsigned long long>(i + 1));
    return name;
}

} // namespace detail

// Dataset directory layout: frames/frame_#####.flt1 plus index.json carrying
// per-frame pose, realized shifts, and a checksum of each frame file.

inline void write_dataset(const std::vector<FrameRecord>& frames,
                          const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir / "frames");
    nlohmann::json index;
    index["format"] = "flowad-dataset-v1";
    index["num_frames"] = frames.size();
    nlohmann::json list = nlohmann::json::array();
    for (std::size_t i = 0; i < frames.size(); ++i) {
        const std::filesystem::path rel =
            std::filesystem::path("frames") / detail::frame_file_name(i);
        write_tensor_file(frames[i].f_img, dir / rel);
        nlohmann::json e;
        e["file"] = rel.generic_string();
        e["fnv64"] = detail::fnv1a_file(dir / rel);
        e["pose"] = {{"x", frames[i].pose.x}, {"y", frames[i].pose.y}, {"t", frames[i].pose.t}};
        e["shift_right"] = frames[i].shift_right;
        e["shift_left"] = frames[i].shift_left;
        list.push_back(std::move(e));
    }
    index["frames"] = std::move(list);
    std::ofstream os(dir / "index.json");
    if (!os) throw IoError("cannot write dataset index in " + dir.string());
    os << index.dump(2) << "\n";
    if (!os) throw IoError("dataset index write failed in " + dir.string());
}

inline std::vector<FrameRecord> read_dataset(const std::filesystem::path& dir) {
    std::ifstream is(dir / "index.json");
    if (!is) throw IoError("cannot open dataset index in " + dir.string());
    nlohmann::json index;
    try {
        is >> index;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("bad dataset index: " + std::string(e.what()));
    }
    std::vector<FrameRecord> frames;
    try {
        if (index.at("format").get<std::string>() != "flowad-dataset-v1")
            throw FormatError("unrecognized dataset format tag");
        const auto& list = index.at("frames");
        if (list.size() != index.at("num_frames").get<std::size_t>())
            throw FormatError("dataset index frame count mismatch");
        frames.reserve(list.size());
        for (const auto& e : list) {
            FrameRecord fr;
            const std::filesystem::path file = dir / e.at("file").get<std::string>();
            if (!std::filesystem::exists(file))
                throw IoError("dataset frame missing: " + file.string());
            if (detail::fnv1a_file(file) != e.at("fnv64").get<std::uint64_t>())
                throw FormatError("dataset frame corrupt, checksum mismatch: " + file.string());
            fr.f_img = read_tensor_file(file);
            fr.pose.x = e.at("pose").at("x").get<double>();
            fr.pose.y = e.at("pose").at("y").get<double>();
            fr.pose.t = e.at("pose").at("t").get<int>();
            fr.shift_right = e.at("shift_right").get<int>();
            fr.shift_left = e.at("shift_left").get<int>();
            frames.push_back(std::move(fr));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("bad dataset index: " + std::string(e.what()));
    }
    return frames;
}

} // namespace flowad::synth
