#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "flowad/error.hpp"
#include "flowad/tensor/tensor.hpp"
#include "flowad/tensor/tensor_io.hpp"

namespace flowad {

/// Named collection of learnable tensors. Iteration order is the name sort,
/// so parameter order is stable across runs.
class ParamSet {
public:
    using Map = std::map<std::string, Tensor>;

    void add(const std::string& name, Tensor t) {
        t.set_requires_grad(true);
        auto [it, inserted] = params_.emplace(name, std::move(t));
        if (!inserted) throw ConfigError("duplicate parameter: " + name);
    }

    bool contains(const std::string& name) const { return params_.count(name) > 0; }

    const Tensor& at(const std::string& name) const {
        auto it = params_.find(name);
        if (it == params_.end()) throw ConfigError("missing parameter: " + name);
        return it->second;
    }

    Tensor& at(const std::string& name) {
        auto it = params_.find(name);
        if (it == params_.end()) throw ConfigError("missing parameter: " + name);
        return it->second;
    }

    void replace(const std::string& name, Tensor t) {
        auto it = params_.find(name);
        if (it == params_.end()) throw ConfigError("missing parameter: " + name);
        t.set_requires_grad(true);
        it->second = std::move(t);
    }

    std::size_t size() const { return params_.size(); }
    Map::const_iterator begin() const { return params_.begin(); }
    Map::const_iterator end() const { return params_.end(); }

    std::vector<std::string> names() const {
        std::vector<std::string> out;
        out.reserve(params_.size());
        for (const auto& [k, v] : params_) out.push_back(k);
        return out;
    }

    /// Registers every parameter's gradient buffer with the tape, so a later
    /// backward() zeroes and then accumulates into all of them.
    void track_all(Tape& tape) {
        for (auto& [k, v] : params_) tape.track(v);
    }

private:
    Map params_;
};

using GradMap = std::map<std::string, std::vector<double>>;

/// Snapshot of the gradients currently held by a ParamSet's tensors.
inline GradMap collect_grads(const ParamSet& params) {
    GradMap out;
    for (const auto& [name, t] : params) out[name] = t.grad();
    return out;
}

// --------------------------------------------------------------------------
// Checkpointing: one tensor file per parameter plus a JSON manifest.
// --------------------------------------------------------------------------

inline void save_checkpoint(const ParamSet& params, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create checkpoint dir: " + dir.string());
    nlohmann::json manifest;
    manifest["format"] = "flowad-checkpoint-v1";
    nlohmann::json files = nlohmann::json::object();
    for (const auto& [name, t] : params) {
        const std::string file = name + ".flt1";
        write_tensor_file(t, dir / file);
        files[name] = file;
    }
    manifest["params"] = files;
    std::ofstream os(dir / "manifest.json");
    if (!os) throw IoError("cannot write manifest in " + dir.string());
    os << manifest.dump(2) << "\n";
}

inline ParamSet load_checkpoint(const std::filesystem::path& dir) {
    std::ifstream is(dir / "manifest.json");
    if (!is) throw IoError("cannot read manifest in " + dir.string());
    nlohmann::json manifest;
    try {
        is >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("bad checkpoint manifest in " + dir.string() + ": " + e.what());
    }
    if (!manifest.contains("params") || !manifest["params"].is_object())
        throw FormatError("checkpoint manifest lacks params map: " + dir.string());
    ParamSet out;
    for (const auto& [name, file] : manifest["params"].items())
        out.add(name, read_tensor_file(dir / file.get<std::string>()));
    return out;
}

} // namespace flowad
