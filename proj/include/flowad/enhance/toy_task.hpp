#pragma once

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <string>
#include <vector>

#include "flowad/enhance/object.hpp"
#include "flowad/geometry/rig.hpp"
#include "flowad/tensor/optim.hpp"
#include "flowad/tensor/tensor_io.hpp"

namespace flowad::enhance {

// What the object embeddings and unit contents reveal about position.
//   Separable: embeddings alone identify the unit (control case).
//   FlowOnly:  embeddings are noise; only the covering unit's content tells.
//   Null:      nothing identifies the unit anywhere.
enum class ToyRegime { Separable, FlowOnly, Null };

struct ToyObject {
    int object_id = 0;
    double ring_position = 0.0;
    int frame = 0;
    Tensor embedding;
    int true_unit = -1;
};

struct ToyDataset {
    geom::RigConfig rig;
    geom::PartitionLayout layout;
    std::vector<geom::FlowUnitSet> frames;
    std::vector<ToyObject> objects;
};

// Builds a localization dataset on the uniform layout: each object sits at a
// random ring position and must be assigned to the unit covering it.
inline ToyDataset generate_toy_dataset(const geom::RigConfig& rig, int level_p, int num_objects,
                                       ToyRegime regime, std::uint64_t seed) {
    if (num_objects < 50)
        throw ConfigError("toy dataset needs at least 50 objects, got " +
                          std::to_string(num_objects));
    Rng rng(seed);
    geom::PanoramicRig prig(rig);
    ToyDataset ds;
    ds.rig = rig;
    ds.layout = geom::build_layout(prig, 0.0, level_p, level_p, level_p);
    const int nk = ds.layout.num_units();
    const int c = rig.channels;

    // one frame; every unit is a constant block carrying its signature
    std::vector<Tensor> sigs;
    Tensor shared = Tensor::uniform({c}, -1.0, 1.0, rng);
    for (int j = 0; j < nk; ++j)
        sigs.push_back(regime == ToyRegime::Null ? shared : Tensor::uniform({c}, -1.0, 1.0, rng));
    geom::FlowUnitSet frame;
    auto block = [&](const Tensor& sig) {
        Tensor u = Tensor::zeros({rig.height, level_p, c});
        for (int i = 0; i < rig.height; ++i)
            for (int j = 0; j < level_p; ++j)
                for (int k = 0; k < c; ++k)
                    u.mutable_data()[(std::size_t(i) * level_p + j) * c + k] = sig.at({k});
        return u;
    };
    for (int j = 0; j < ds.layout.num_right(); ++j)
        frame.right.push_back(block(sigs[ds.layout.global_of_right(j)]));
    for (int j = 0; j < ds.layout.num_left(); ++j)
        frame.left.push_back(block(sigs[ds.layout.global_of_left(j)]));
    ds.frames.push_back(frame);

    std::vector<Tensor> emb_sigs;
    for (int j = 0; j < nk; ++j) emb_sigs.push_back(Tensor::uniform({c}, -1.0, 1.0, rng));
    for (int i = 0; i < num_objects; ++i) {
        ToyObject obj;
        obj.object_id = i;
        obj.ring_position = rng.uniform(0.0, ds.layout.ring_cols - 1e-9);
        obj.frame = 0;
        obj.true_unit =
            ds.layout.unit_of_column(static_cast<int>(std::floor(obj.ring_position)));
        Tensor noise = Tensor::uniform({c}, -1.0, 1.0, rng);
        if (regime == ToyRegime::Separable)
            obj.embedding = add(emb_sigs[obj.true_unit], scale(noise, 0.1));
        else
            obj.embedding = noise;
        ds.objects.push_back(obj);
    }
    return ds;
}

struct ToyReport {
    double accuracy_enhanced = 0.0;
    double accuracy_baseline = 0.0;
};

namespace detail {

// Trains a linear localizer on the training split and scores the held-out
// quarter. With enhancement on, each embedding first attends its covering
// units; the value projection trains jointly with the classifier.
inline double toy_accuracy(const ToyDataset& ds, bool enhanced, std::uint64_t seed, int epochs,
                           double lr) {
    const int c = ds.rig.channels;
    const int nk = ds.layout.num_units();
    Rng rng(seed);
    ParamSet ps;
    ps.add("cls.w", Tensor::uniform({c, nk}, -1.0 / std::sqrt(c), 1.0 / std::sqrt(c), rng));
    ps.add("cls.b", Tensor::zeros({nk}));
    if (enhanced) init_object_enhance(ps, c, rng);

    std::vector<int> train_idx, eval_idx;
    for (std::size_t i = 0; i < ds.objects.size(); ++i)
        (i % 4 == 3 ? eval_idx : train_idx).push_back(static_cast<int>(i));

    auto forward = [&](const std::vector<int>& idx, const ParamSet& prm) {
        std::vector<Tensor> rows;
        rows.reserve(idx.size());
        for (int i : idx) {
            const ToyObject& o = ds.objects[i];
            Tensor e = o.embedding;
            if (enhanced) {
                ObjectQuery q{o.embedding, {o.ring_position}};
                e = object_enhance(q, ds.frames[o.frame], ds.layout, prm);
            }
            rows.push_back(e.reshape({1, c}));
        }
        return linear(concat(0, rows), prm.at("cls.w"), prm.at("cls.b"));
    };

    std::vector<int> train_labels, eval_labels;
    for (int i : train_idx) train_labels.push_back(ds.objects[i].true_unit);
    for (int i : eval_idx) eval_labels.push_back(ds.objects[i].true_unit);

    Adam opt(lr);
    for (int e = 0; e < epochs; ++e) {
        Tape tape;
        {
            Tape::Scope scope(tape);
            ps.track_all(tape);
            Tensor loss = cross_entropy_mean(forward(train_idx, ps), train_labels);
            tape.backward(loss);
        }
        ps = opt.step(ps, collect_grads(ps));
    }

    Tape::NoGradScope ng;
    Tensor logits = forward(eval_idx, ps);
    int hits = 0;
    for (std::size_t r = 0; r < eval_idx.size(); ++r) {
        int best = 0;
        for (int k = 1; k < nk; ++k)
            if (logits.at({static_cast<int>(r), k}) > logits.at({static_cast<int>(r), best}))
                best = k;
        if (best == eval_labels[r]) ++hits;
    }
    return static_cast<double>(hits) / eval_idx.size();
}

} // namespace detail

// Paired comparison: identical dataset, seed, and schedule; only the
// enhancement differs.
inline ToyReport run_toy_experiment(const ToyDataset& ds, std::uint64_t seed, int epochs = 300,
                                    double lr = 5e-2) {
    ToyReport r;
    r.accuracy_enhanced = detail::toy_accuracy(ds, true, seed, epochs, lr);
    r.accuracy_baseline = detail::toy_accuracy(ds, false, seed, epochs, lr);
    return r;
}

// JSON-lines object table plus one tensor file per embedding.
inline void write_toy_objects(const ToyDataset& ds, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir / "embeddings", ec);
    if (ec) throw IoError("cannot create " + (dir / "embeddings").string() + ": " + ec.message());
    std::ofstream out(dir / "objects.jsonl");
    if (!out) throw IoError("cannot open " + (dir / "objects.jsonl").string() + " for writing");
    for (const ToyObject& o : ds.objects) {
        std::string rel = "embeddings/obj_" + std::to_string(o.object_id) + ".flt1";
        write_tensor_file(o.embedding, dir / rel);
        nlohmann::json line = {{"object_id", o.object_id},
                               {"ring_position", o.ring_position},
                               {"embedding_file", rel},
                               {"frame", o.frame}};
        out << line.dump() << "\n";
    }
    if (!out) throw IoError("failed writing " + (dir / "objects.jsonl").string());
}

inline std::vector<ToyObject> read_toy_objects(const std::filesystem::path& dir) {
    std::ifstream in(dir / "objects.jsonl");
    if (!in) throw IoError("cannot open " + (dir / "objects.jsonl").string());
    std::vector<ToyObject> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
            ToyObject o;
            o.object_id = j.at("object_id").get<int>();
            o.ring_position = j.at("ring_position").get<double>();
            o.frame = j.at("frame").get<int>();
            o.embedding = read_tensor_file(dir / j.at("embedding_file").get<std::string>());
            out.push_back(std::move(o));
        } catch (const nlohmann::json::exception& e) {
            throw FormatError("objects.jsonl line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

} // namespace flowad::enhance
