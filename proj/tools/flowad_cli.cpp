#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "flowad/cli/pipeline.hpp"
#include "flowad/cli/run_config.hpp"
#include "flowad/error.hpp"
#include "flowad/metrics/fcp.hpp"
#include "flowad/metrics/l2.hpp"
#include "flowad/metrics/trajectory.hpp"
#include "flowad/rng.hpp"
#include "flowad/synth/dataset_io.hpp"
#include "flowad/synth/generate.hpp"
#include "flowad/tensor/finite_diff.hpp"

namespace {

using namespace flowad;

struct CommonArgs {
    std::string config_path;
    std::string out_dir;
    long long seed = -1; // negative keeps the config's seeds
};

cli::RunConfig resolve_config(const CommonArgs& a) {
    cli::RunConfig rc;
    if (!a.config_path.empty()) rc = cli::load_run_config(a.config_path);
    if (a.seed >= 0) {
        rc.scenario.seed = static_cast<std::uint64_t>(a.seed);
        rc.train.seed = static_cast<std::uint64_t>(a.seed);
    }
    return rc;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open for writing: " + path.string());
    os << text;
    if (!os) throw IoError("write failed: " + path.string());
}

int cmd_synth(const CommonArgs& a) {
    cli::RunConfig rc = resolve_config(a);
    synth::SynthResult res = synth::generate_sequence(rc.scenario);
    const std::filesystem::path out(a.out_dir);
    synth::write_dataset(res.frames, out);
    metrics::write_trajectory_log(res.log, out / "log.jsonl");
    cli::write_resolved_config(rc, out);
    std::printf("wrote %zu frames and the trajectory log to %s\n", res.frames.size(),
                out.string().c_str());
    return 0;
}

int cmd_partition(const CommonArgs& a, const std::string& data_dir, int frame) {
    cli::RunConfig rc = resolve_config(a);
    std::vector<synth::FrameRecord> frames = synth::read_dataset(data_dir);
    const int t = frame < 0 ? static_cast<int>(frames.size()) - 1 : frame;
    if (t < 0 || t >= static_cast<int>(frames.size()))
        throw InvalidInputError("frame " + std::to_string(frame) + " outside the dataset of " +
                                std::to_string(frames.size()) + " frames");
    std::vector<geom::EgoPose> poses;
    for (const synth::FrameRecord& fr : frames) poses.push_back(fr.pose);

    const geom::PanoramicRig rig(rc.scenario.rig);
    nlohmann::json report = cli::partition_report(rig, poses, t, rc.scenario.w_ego);
    cli::validate_partition_report(report);

    const std::filesystem::path out(a.out_dir);
    std::filesystem::create_directories(out);
    write_text(out / "partition.json", report.dump(2) + "\n");

    // unit dump at the training level, one stacked tensor per side
    const cli::FramePartition fp = cli::frame_partition(rig, poses, t);
    const auto [pl, pr] = geom::adjust_sizes(rc.train.level, fp.circle, rc.scenario.w_ego);
    bool dumped = false;
    try {
        const geom::PartitionLayout lay =
            geom::build_layout(rig, fp.start_s, pl, pr, rc.train.level);
        const geom::FlowUnitSet units = geom::partition_features(frames[t].f_img, rig, lay);
        auto stack = [](const std::vector<Tensor>& side) {
            std::vector<Tensor> rows;
            rows.reserve(side.size());
            for (const Tensor& u : side)
                rows.push_back(u.reshape({1, u.dim(0), u.dim(1), u.dim(2)}));
            return concat(0, rows);
        };
        write_tensor_file(stack(units.right), out / "units_right.flt1");
        write_tensor_file(stack(units.left), out / "units_left.flt1");
        dumped = true;
    } catch (const ConfigError&) {
        // level not feasible for this steering state; the report says so
    }
    cli::write_resolved_config(rc, out);
    std::printf("%s\n", report.dump(2).c_str());
    if (!dumped)
        std::printf("units not dumped: level %d is not feasible for this frame\n",
                    rc.train.level);
    return 0;
}

int cmd_train(const CommonArgs& a, const std::string& data_dir) {
    cli::RunConfig rc = resolve_config(a);
    std::vector<synth::FrameRecord> frames = synth::read_dataset(data_dir);
    cli::TrainResult tr =
        cli::train_on_dataset(frames, rc.scenario.rig, rc.scenario.w_ego, rc.train);
    const std::filesystem::path out(a.out_dir);
    std::filesystem::create_directories(out);
    write_text(out / "loss.csv", cli::format_loss_csv(tr.rows));
    save_checkpoint(tr.params, out / "checkpoint");
    cli::write_resolved_config(rc, out);
    if (tr.rows.empty())
        std::printf("wrote the untrained checkpoint to %s\n", out.string().c_str());
    else
        std::printf("step %d total loss %.6g; outputs in %s\n", tr.rows.back().step,
                    tr.rows.back().total, out.string().c_str());
    return 0;
}

int cmd_eval(const CommonArgs& a, const std::string& log_file) {
    cli::RunConfig rc = resolve_config(a);
    metrics::TrajectoryLog log = metrics::read_trajectory_log(log_file);
    const std::string csv = metrics::format_metrics_csv(cli::eval_rows(log, rc.metrics));
    const std::filesystem::path out(a.out_dir);
    std::filesystem::create_directories(out);
    write_text(out / "metrics.csv", csv);
    cli::write_resolved_config(rc, out);
    std::printf("%s", csv.c_str());
    return 0;
}

int cmd_selfcheck() {
    int failures = 0;
    auto check = [&](const char* name, const std::function<void()>& fn) {
        try {
            fn();
            std::printf("ok %s\n", name);
        } catch (const std::exception& e) {
            std::printf("FAIL %s: %s\n", name, e.what());
            ++failures;
        }
        std::fflush(stdout);
    };
    auto expect = [](bool cond, const std::string& what) {
        if (!cond) throw DomainError(what);
    };

    check("steering circle recovery", [&] {
        Rng rng(11);
        for (int it = 0; it < 200; ++it) {
            const double cx = rng.uniform(-50.0, 50.0), cy = rng.uniform(-50.0, 50.0);
            const double r = rng.uniform(0.5, 80.0);
            const double a0 = rng.uniform(0.0, 6.28);
            geom::EgoPose p[3];
            for (int i = 0; i < 3; ++i)
                p[i] = {cx + r * std::cos(a0 + 0.4 * i), cy + r * std::sin(a0 + 0.4 * i), i};
            const geom::SteeringCircle c = geom::fit_steering_circle(p[0], p[1], p[2]);
            expect(!c.is_straight, "fit degraded to straight");
            expect(std::abs(c.r - r) <= 1e-9 * r, "recovered radius off");
            expect(std::hypot(c.cx - cx, c.cy - cy) <= 1e-9 * r, "recovered center off");
        }
        expect(geom::fit_steering_circle({0, 0, 0}, {1, 0, 1}, {2, 0, 2}).is_straight,
               "collinear poses must fit straight");
    });

    check("turn-scaled unit sizes", [&] {
        const geom::SteeringCircle arc = geom::SteeringCircle::arc(0, -10, 10, geom::TurnDirection::Right);
        const auto [pl, pr] = geom::adjust_sizes(8.0, arc, 2.0);
        expect(std::abs(pl - 9.68) < 1e-12 && std::abs(pr - 6.48) < 1e-12,
               "arc sizes off the closed form");
        const auto [sl, sr] = geom::adjust_sizes(8.0, geom::SteeringCircle::straight(), 2.0);
        expect(sl == 8.0 && sr == 8.0, "straight sizes must be the base width");
    });

    check("ring tiling", [&] {
        const geom::PanoramicRig rig{geom::RigConfig{}};
        Rng rng(13);
        for (int it = 0; it < 100; ++it) {
            const double start = rng.uniform(0.0, rig.ring_cols() - 1e-9);
            const double pl = rng.uniform(1.5, 40.0), pr = rng.uniform(1.5, 40.0);
            const geom::PartitionLayout lay = geom::build_layout(rig, start, pl, pr, 8);
            expect(lay.span_right() + lay.span_left() == rig.ring_cols(),
                   "side spans must tile the ring");
            for (const auto* off : {&lay.right_off, &lay.left_off})
                for (std::size_t j = 1; j < off->size(); ++j)
                    expect((*off)[j] > (*off)[j - 1], "boundaries must strictly increase");
            for (int j = 0; j < lay.num_right(); ++j)
                expect(lay.unit_of_column(lay.right_col_begin(j)) == lay.global_of_right(j),
                       "column lookup disagrees with the layout");
            for (int j = 0; j < lay.num_left(); ++j)
                expect(lay.unit_of_column(lay.left_col_begin(j)) == lay.global_of_left(j),
                       "column lookup disagrees with the layout");
        }
    });

    check("gradients of the attention stack", [&] {
        Rng rng(17);
        std::vector<Tensor> inputs = {Tensor::uniform({2, 3}, -1, 1, rng),
                                      Tensor::uniform({3, 4}, -1, 1, rng),
                                      Tensor::uniform({5, 4}, -1, 1, rng)};
        auto f = [](const std::vector<Tensor>& in) {
            return sum_all(attention(tanh_op(matmul(in[0], in[1])), in[2], in[2]));
        };
        const GradCheckReport rep = finite_diff_grad(f, inputs, 1e-5);
        expect(rep.ok(1e-4), "attention gradient error " + std::to_string(rep.max_rel_err));
    });

    check("state divergence", [&] {
        Rng rng(19);
        Tensor mu = Tensor::uniform({4, 3}, -2, 2, rng);
        Tensor sg = exp_op(Tensor::uniform({4, 3}, -1, 1, rng));
        expect(kl_diag_gaussian(mu, sg, mu, sg).value() == 0.0,
               "divergence of a state against itself must be exactly zero");
        for (int it = 0; it < 200; ++it) {
            Tensor mp = Tensor::uniform({2, 3}, -2, 2, rng);
            Tensor sp = exp_op(Tensor::uniform({2, 3}, -1, 1, rng));
            Tensor mq = Tensor::uniform({2, 3}, -2, 2, rng);
            Tensor sq = exp_op(Tensor::uniform({2, 3}, -1, 1, rng));
            expect(kl_diag_gaussian(mp, sp, mq, sq).value() >= 0.0,
                   "divergence must be nonnegative");
        }
    });

    check("planning metric worked examples", [&] {
        auto clip_errs = [](const std::vector<double>& errs) {
            metrics::TrajClip clip;
            for (double e : errs) {
                metrics::TrajFrame f;
                f.gt_3s = metrics::Point2{0.0, 0.0};
                f.pred_3s = metrics::Point2{e, 0.0};
                clip.frames.push_back(f);
            }
            return clip;
        };
        metrics::TrajectoryLog log;
        log.clips.push_back(clip_errs({0.1, 0.2, 0.3}));
        expect(metrics::fcp(log, 0.5) == 0.0, "all-correct clip must count zero");
        log.clips = {clip_errs({0.9, 0.7, 0.6, 0.2, 0.8})};
        expect(metrics::fcp(log, 0.5) == 3.0, "three late frames must count three");
        log.clips = {clip_errs(std::vector<double>(10, 2.0))};
        expect(metrics::fcp(log, 0.5) == 10.0, "never-correct clip must saturate");

        auto clip_lat = [](const std::vector<double>& lats) {
            metrics::TrajClip clip;
            clip.command = metrics::Command::TurnRight;
            for (double v : lats) {
                metrics::TrajFrame f;
                f.lateral_3s = v;
                clip.frames.push_back(f);
            }
            return clip;
        };
        log.clips = {clip_lat({2.5, 2.6, 2.7})};
        expect(metrics::fcp_extended(log, 2) == 0.0, "compliant clip must count zero");
        log.clips = {clip_lat({0, 0, 0, 0, 0, 2.5, 2.6})};
        expect(metrics::fcp_extended(log, 2) == 3.0, "five misses with q=2 must count three");
        log.clips = {clip_lat(std::vector<double>(10, 0.0))};
        expect(metrics::fcp_extended(log, 3) == 7.0, "ten misses with q=3 must count seven");
    });

    check("dataset round-trip and manifest determinism", [&] {
        synth::SynthScenario s;
        s.kind = synth::PathKind::Straight;
        s.speed = 4.0;
        s.horizon = 3;
        s.rig.num_cameras = 4;
        s.rig.width = 8;
        s.rig.height = 2;
        s.rig.channels = 3;
        s.rig.levels = {4};
        const std::vector<synth::FrameRecord> frames = synth::generate_sequence(s).frames;
        const auto base = std::filesystem::temp_directory_path() / "flowad_selfcheck";
        std::filesystem::remove_all(base);
        synth::write_dataset(frames, base / "a");
        synth::write_dataset(frames, base / "b");
        const std::vector<synth::FrameRecord> back = synth::read_dataset(base / "a");
        expect(back.size() == frames.size(), "frame count changed in round-trip");
        for (std::size_t i = 0; i < frames.size(); ++i)
            expect(back[i].f_img.data() == frames[i].f_img.data(),
                   "frame payload changed in round-trip");
        auto slurp = [](const std::filesystem::path& p) {
            std::ifstream is(p, std::ios::binary);
            return std::string(std::istreambuf_iterator<char>(is), {});
        };
        expect(slurp(base / "a" / "index.json") == slurp(base / "b" / "index.json"),
               "same frames must produce identical manifests");
        std::filesystem::remove_all(base);
    });

    check("displacement error unit offset", [&] {
        metrics::TrajectoryLog log;
        metrics::TrajClip clip;
        for (int i = 0; i < 3; ++i) {
            metrics::TrajFrame f;
            f.gt_1s = f.gt_2s = f.gt_3s = metrics::Point2{1.0 * i, 0.0};
            f.pred_1s = f.pred_2s = f.pred_3s = metrics::Point2{1.0 * i, 1.0};
            clip.frames.push_back(f);
        }
        log.clips.push_back(clip);
        const metrics::L2Report r = metrics::l2_error(log);
        expect(r.per_horizon.at(1) == 1.0 && r.per_horizon.at(2) == 1.0 &&
                   r.per_horizon.at(3) == 1.0 && r.avg == 1.0,
               "constant one-meter offset must score one meter");
    });

    if (failures > 0) {
        std::printf("%d selfcheck failure(s)\n", failures);
        return 3;
    }
    std::printf("all selfchecks passed\n");
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"panoramic scene-flow toolkit: synthesize drives, inspect partitions, "
                 "train flow modules, and score trajectory logs"};
    app.require_subcommand(1);

    CommonArgs synth_args, part_args, train_args, eval_args;
    std::string part_data, train_data, eval_log;
    int part_frame = -1;

    CLI::App* s_synth = app.add_subcommand("synth", "generate a seeded synthetic drive dataset");
    s_synth->add_option("--config", synth_args.config_path, "run config JSON");
    s_synth->add_option("--seed", synth_args.seed, "override every seed in the config");
    s_synth->add_option("--out", synth_args.out_dir, "output directory")->required();

    CLI::App* s_part = app.add_subcommand("partition", "report the partition geometry of a frame");
    s_part->add_option("--config", part_args.config_path, "run config JSON");
    s_part->add_option("--seed", part_args.seed, "override every seed in the config");
    s_part->add_option("--out", part_args.out_dir, "output directory")->required();
    s_part->add_option("--data", part_data, "dataset directory")->required();
    s_part->add_option("--frame", part_frame, "frame index, default last");

    CLI::App* s_train = app.add_subcommand("train", "train the flow modules on a dataset");
    s_train->add_option("--config", train_args.config_path, "run config JSON");
    s_train->add_option("--seed", train_args.seed, "override every seed in the config");
    s_train->add_option("--out", train_args.out_dir, "output directory")->required();
    s_train->add_option("--data", train_data, "dataset directory")->required();

    CLI::App* s_eval = app.add_subcommand("eval", "score a trajectory log");
    s_eval->add_option("--config", eval_args.config_path, "run config JSON");
    s_eval->add_option("--seed", eval_args.seed, "override every seed in the config");
    s_eval->add_option("--out", eval_args.out_dir, "output directory")->required();
    s_eval->add_option("--log", eval_log, "trajectory log JSONL file")->required();

    app.add_subcommand("selfcheck", "run the built-in invariant suite");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (s_synth->parsed()) return cmd_synth(synth_args);
        if (s_part->parsed()) return cmd_partition(part_args, part_data, part_frame);
        if (s_train->parsed()) return cmd_train(train_args, train_data);
        if (s_eval->parsed()) return cmd_eval(eval_args, eval_log);
        return cmd_selfcheck();
    } catch (const DomainError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const KinematicError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::filesystem::filesystem_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "internal error: %s\n", e.what());
        return 3;
    }
}
