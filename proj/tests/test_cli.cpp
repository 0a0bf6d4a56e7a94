#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <sys/wait.h>

#include <json.hpp>

#include "flowad/cli/pipeline.hpp"
#include "flowad/cli/run_config.hpp"
#include "flowad/synth/dataset_io.hpp"
#include "flowad/tensor/param_set.hpp"

namespace fs = std::filesystem;
using namespace flowad;

namespace {

const fs::path& work_root() {
    static const fs::path root = [] {
        const fs::path p = fs::temp_directory_path() / "flowad_cli_tests";
        fs::remove_all(p);
        fs::create_directories(p);
        return p;
    }();
    return root;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    REQUIRE(is.good());
    return std::string(std::istreambuf_iterator<char>(is), {});
}

void spit(const fs::path& p, const std::string& text) {
    std::ofstream os(p, std::ios::binary);
    os << text;
    REQUIRE(os.good());
}

int run_cli(const std::string& args, std::string* out = nullptr, std::string* err = nullptr) {
    static int call = 0;
    const fs::path outf = work_root() / ("out_" + std::to_string(call) + ".txt");
    const fs::path errf = work_root() / ("err_" + std::to_string(call) + ".txt");
    ++call;
    const std::string cmd = std::string(CLI_BIN) + " " + args + " > " + outf.string() + " 2> " +
                            errf.string();
    const int st = std::system(cmd.c_str());
    if (out) *out = slurp(outf);
    if (err) *err = slurp(errf);
    REQUIRE(WIFEXITED(st));
    return WEXITSTATUS(st);
}

// straight drive on a small rig; one ring shift per frame equals the top level
const char* kStraightCfg = R"({
  "scenario": {
    "path": {"type": "straight", "speed": 4},
    "T": 8,
    "seed": 7,
    "rig": {"num_cameras": 4, "width": 8, "height": 2, "channels": 3, "levels": [4, 2]}
  },
  "train": {"level": 4, "steps": 3, "T": 3, "lr": 0.003, "seed": 7}
})";

const char* kArcCfg = R"({
  "scenario": {
    "path": {"type": "arc", "r": 10, "omega": 0.1, "direction": "right"},
    "T": 8,
    "seed": 9,
    "rig": {"num_cameras": 4, "width": 16, "height": 2, "channels": 3, "levels": [4]}
  },
  "train": {"level": 4, "steps": 2, "T": 3, "seed": 5}
})";

fs::path straight_cfg() {
    const fs::path p = work_root() / "straight.json";
    if (!fs::exists(p)) spit(p, kStraightCfg);
    return p;
}

fs::path arc_cfg() {
    const fs::path p = work_root() / "arc.json";
    if (!fs::exists(p)) spit(p, kArcCfg);
    return p;
}

fs::path straight_dataset() {
    const fs::path d = work_root() / "data_straight";
    if (!fs::exists(d))
        REQUIRE(run_cli("synth --config " + straight_cfg().string() + " --out " + d.string()) ==
                0);
    return d;
}

fs::path arc_dataset() {
    const fs::path d = work_root() / "data_arc";
    if (!fs::exists(d))
        REQUIRE(run_cli("synth --config " + arc_cfg().string() + " --out " + d.string()) == 0);
    return d;
}

} // namespace

TEST_CASE("synth writes a complete, reproducible dataset") {
    const fs::path d1 = straight_dataset();
    REQUIRE(fs::exists(d1 / "index.json"));
    REQUIRE(fs::exists(d1 / "log.jsonl"));
    REQUIRE(fs::exists(d1 / "config.json"));
    for (int t = 1; t <= 8; ++t) {
        char name[32];
        std::snprintf(name, sizeof name, "frame_%05d.flt1", t);
        REQUIRE(fs::exists(d1 / "frames" / name));
    }

    const fs::path d2 = work_root() / "data_straight_again";
    REQUIRE(run_cli("synth --config " + straight_cfg().string() + " --out " + d2.string()) == 0);
    CHECK(slurp(d1 / "index.json") == slurp(d2 / "index.json"));
    CHECK(slurp(d1 / "log.jsonl") == slurp(d2 / "log.jsonl"));
    CHECK(slurp(d1 / "config.json") == slurp(d2 / "config.json"));

    // the emitted resolved config regenerates the identical world
    const fs::path d3 = work_root() / "data_from_resolved";
    REQUIRE(run_cli("synth --config " + (d1 / "config.json").string() + " --out " + d3.string()) ==
            0);
    CHECK(slurp(d1 / "index.json") == slurp(d3 / "index.json"));

    // a seed override changes the content but keeps the manifest well-formed
    const fs::path d4 = work_root() / "data_reseeded";
    REQUIRE(run_cli("synth --config " + straight_cfg().string() + " --seed 99 --out " +
                    d4.string()) == 0);
    CHECK(slurp(d1 / "index.json") != slurp(d4 / "index.json"));
    CHECK(synth::read_dataset(d4).size() == 8);
}

TEST_CASE("synth reports unwritable output paths") {
    std::string err;
    CHECK(run_cli("synth --out /proc/none/nested", nullptr, &err) == 2);
    CHECK(err.find("/proc/none/nested") != std::string::npos);
}

TEST_CASE("partition reports straight geometry with equal sides") {
    const fs::path d = straight_dataset();
    const fs::path out = work_root() / "part_straight";
    REQUIRE(run_cli("partition --config " + straight_cfg().string() + " --data " + d.string() +
                    " --out " + out.string()) == 0);

    const nlohmann::json rep = nlohmann::json::parse(slurp(out / "partition.json"));
    REQUIRE_NOTHROW(cli::validate_partition_report(rep));
    CHECK(rep.at("frame").get<int>() == 7);
    CHECK(rep.at("circle").at("straight").get<bool>());
    CHECK(rep.at("forward").at("x").get<double>() == 1.0);
    CHECK(rep.at("forward").at("y").get<double>() == 0.0);
    for (const auto& lv : rep.at("levels")) {
        REQUIRE(lv.at("feasible").get<bool>());
        CHECK(lv.at("p_left").get<double>() == lv.at("p_right").get<double>());
    }

    // dumped units: [num_units_side, H, P, C] at the training level
    const Tensor right = read_tensor_file(out / "units_right.flt1");
    REQUIRE(right.rank() == 4);
    CHECK(right.dim(0) == 4);
    CHECK(right.dim(1) == 2);
    CHECK(right.dim(2) == 4);
    CHECK(right.dim(3) == 3);
    const Tensor left = read_tensor_file(out / "units_left.flt1");
    CHECK(left.dim(0) == 4);
}

TEST_CASE("partition reports arc geometry with the turn-scaled side ratio") {
    const fs::path d = arc_dataset();
    const fs::path out = work_root() / "part_arc";
    REQUIRE(run_cli("partition --config " + arc_cfg().string() + " --data " + d.string() +
                    " --out " + out.string()) == 0);

    const nlohmann::json rep = nlohmann::json::parse(slurp(out / "partition.json"));
    REQUIRE_NOTHROW(cli::validate_partition_report(rep));
    const auto& circle = rep.at("circle");
    REQUIRE_FALSE(circle.at("straight").get<bool>());
    CHECK(circle.at("turn").get<std::string>() == "right");
    CHECK(circle.at("r").get<double>() == Catch::Approx(10.0).epsilon(1e-6));

    const double expected = (11.0 / 9.0) * (11.0 / 9.0); // ((r + w/2) / (r - w/2))^2
    for (const auto& lv : rep.at("levels")) {
        const double ratio = lv.at("p_left").get<double>() / lv.at("p_right").get<double>();
        CHECK(ratio == Catch::Approx(expected).epsilon(1e-9));
    }
}

TEST_CASE("partition refuses frames without circle-fit history") {
    const fs::path d = straight_dataset();
    std::string err;
    CHECK(run_cli("partition --config " + straight_cfg().string() + " --data " + d.string() +
                      " --frame 1 --out " + (work_root() / "part_early").string(),
                  nullptr, &err) == 2);
    CHECK(err.find("three") != std::string::npos);

    CHECK(run_cli("partition --config " + straight_cfg().string() + " --data " + d.string() +
                      " --frame 42 --out " + (work_root() / "part_oob").string(),
                  nullptr, &err) == 2);
    CHECK(err.find("42") != std::string::npos);
}

TEST_CASE("train writes the loss curve and checkpoint deterministically") {
    const fs::path d = straight_dataset();
    const fs::path r1 = work_root() / "run1";
    const fs::path r2 = work_root() / "run2";
    REQUIRE(run_cli("train --config " + straight_cfg().string() + " --data " + d.string() +
                    " --out " + r1.string()) == 0);
    REQUIRE(run_cli("train --config " + straight_cfg().string() + " --data " + d.string() +
                    " --out " + r2.string()) == 0);

    const std::string csv = slurp(r1 / "loss.csv");
    CHECK(csv == slurp(r2 / "loss.csv"));
    int lines = 0;
    for (char c : csv) lines += c == '\n';
    CHECK(lines == 3);
    CHECK(csv.rfind("0,", 0) == 0);

    REQUIRE(fs::exists(r1 / "checkpoint" / "manifest.json"));
    for (const auto& entry : fs::directory_iterator(r1 / "checkpoint"))
        CHECK(slurp(entry.path()) == slurp(r2 / "checkpoint" / entry.path().filename()));
}

TEST_CASE("a zero-step run checkpoints the fresh seeded initialization") {
    const fs::path d = straight_dataset();
    const fs::path cfgp = work_root() / "straight_zero.json";
    nlohmann::json cfg = nlohmann::json::parse(kStraightCfg);
    cfg["train"]["steps"] = 0;
    spit(cfgp, cfg.dump());

    const fs::path out = work_root() / "run_zero";
    REQUIRE(run_cli("train --config " + cfgp.string() + " --data " + d.string() + " --out " +
                    out.string()) == 0);
    CHECK(slurp(out / "loss.csv").empty());

    const cli::RunConfig rc = cli::load_run_config(cfgp);
    const cli::TrainResult fresh =
        cli::train_on_dataset(synth::read_dataset(d), rc.scenario.rig, rc.scenario.w_ego,
                              rc.train);
    const ParamSet stored = load_checkpoint(out / "checkpoint");
    REQUIRE(stored.size() == fresh.params.size());
    for (const auto& [name, t] : fresh.params) {
        REQUIRE(stored.contains(name));
        CHECK(stored.at(name).data() == t.data());
    }
}

TEST_CASE("train accepts turning drives despite the early straight fallback") {
    const fs::path d = arc_dataset();
    const fs::path out = work_root() / "run_arc";
    REQUIRE(run_cli("train --config " + arc_cfg().string() + " --data " + d.string() +
                    " --out " + out.string()) == 0);
    const std::string csv = slurp(out / "loss.csv");
    int lines = 0;
    for (char c : csv) lines += c == '\n';
    CHECK(lines == 2);
}

TEST_CASE("train rejects a dataset shorter than the clip horizon") {
    const fs::path cfgp = work_root() / "straight_long_clip.json";
    nlohmann::json cfg = nlohmann::json::parse(kStraightCfg);
    cfg["train"]["T"] = 20;
    spit(cfgp, cfg.dump());
    std::string err;
    CHECK(run_cli("train --config " + cfgp.string() + " --data " +
                      straight_dataset().string() + " --out " +
                      (work_root() / "run_short").string(),
                  nullptr, &err) == 2);
    CHECK(err.find("horizon") != std::string::npos);
}

TEST_CASE("eval scores a synthetic arc drive with the known closed-form rows") {
    const fs::path d = arc_dataset();
    const fs::path out = work_root() / "eval_arc";
    std::string stdout_text;
    REQUIRE(run_cli("eval --log " + (d / "log.jsonl").string() + " --out " + out.string(),
                    &stdout_text) == 0);

    const std::string csv = slurp(out / "metrics.csv");
    CHECK(csv == stdout_text);
    CHECK(csv.rfind("metric,threshold_or_q,value\n", 0) == 0);
    // constant-speed arc: the 3 s chord shortfall sits between 0.25 m and 0.5 m
    CHECK(csv.find("\nfcp,0.25,5\n") != std::string::npos);
    CHECK(csv.find("\nfcp,0.5,0\n") != std::string::npos);
    CHECK(csv.find("\nfcp,0.75,0\n") != std::string::npos);
    CHECK(csv.find("\nfcp_extended,1,4\n") != std::string::npos);
    CHECK(csv.find("\nl2,1s,") != std::string::npos);
    CHECK(csv.find("\nl2,avg,") != std::string::npos);

    const fs::path out2 = work_root() / "eval_arc_again";
    REQUIRE(run_cli("eval --log " + (d / "log.jsonl").string() + " --out " + out2.string()) == 0);
    CHECK(slurp(out2 / "metrics.csv") == csv);
}

TEST_CASE("eval counts the frames before a late-converging clip turns correct") {
    const fs::path logp = work_root() / "late.jsonl";
    nlohmann::json frames = nlohmann::json::array();
    for (double e : {0.9, 0.7, 0.6, 0.2, 0.8}) {
        nlohmann::json f;
        for (const char* k : {"gt_1s", "gt_2s", "gt_3s"}) f[k] = {0.0, 0.0};
        for (const char* k : {"pred_1s", "pred_2s"}) f[k] = {0.0, 0.0};
        f["pred_3s"] = {e, 0.0};
        f["lateral_3s"] = 0.0;
        frames.push_back(f);
    }
    spit(logp, nlohmann::json{{"command", "GoStraight"}, {"frames", frames}}.dump() + "\n");

    const fs::path out = work_root() / "eval_late";
    std::string stdout_text;
    REQUIRE(run_cli("eval --log " + logp.string() + " --out " + out.string(), &stdout_text) == 0);
    CHECK(stdout_text.find("\nfcp,0.5,3\n") != std::string::npos);
    CHECK(stdout_text.find("\nfcp,0.25,3\n") != std::string::npos);
    CHECK(stdout_text.find("\nfcp,0.75,1\n") != std::string::npos);
    CHECK(stdout_text.find("\nfcp_extended,1,0\n") != std::string::npos);
}

TEST_CASE("eval reports malformed or incomplete logs as data errors") {
    const fs::path bad = work_root() / "bad.jsonl";
    spit(bad, "{\"command\":\"GoStraight\",\"frames\":[{\"gt_3s\":[1,0]}]}\nnot json\n");
    std::string err;
    CHECK(run_cli("eval --log " + bad.string() + " --out " + (work_root() / "eb").string(),
                  nullptr, &err) == 2);
    CHECK(err.find("line 2") != std::string::npos);

    const fs::path gap = work_root() / "gap.jsonl";
    nlohmann::json f;
    for (const char* k : {"gt_1s", "gt_3s", "pred_1s", "pred_2s", "pred_3s"}) f[k] = {0.0, 0.0};
    spit(gap, nlohmann::json{{"command", "GoStraight"},
                             {"frames", nlohmann::json::array({f})}}
                      .dump() +
                  "\n");
    CHECK(run_cli("eval --log " + gap.string() + " --out " + (work_root() / "eg").string(),
                  nullptr, &err) == 2);
    CHECK(err.find("clip 0") != std::string::npos);

    CHECK(run_cli("eval --log " + (work_root() / "nowhere.jsonl").string() + " --out " +
                      (work_root() / "en").string(),
                  nullptr, &err) == 2);
    CHECK(err.find("nowhere.jsonl") != std::string::npos);
}

TEST_CASE("usage errors exit with the usage code") {
    std::string err;
    CHECK(run_cli("", nullptr, &err) == 1);
    CHECK(run_cli("synth --out x --bogus", nullptr, &err) == 1);
    CHECK(run_cli("synth", nullptr, &err) == 1); // --out is required
    CHECK(run_cli("frobnicate", nullptr, &err) == 1);
    CHECK(run_cli("--help") == 0);
    CHECK(run_cli("eval --help") == 0);
}

TEST_CASE("selfcheck passes end to end") {
    std::string out;
    CHECK(run_cli("selfcheck", &out) == 0);
    CHECK(out.find("FAIL") == std::string::npos);
    CHECK(out.find("ok steering circle recovery") != std::string::npos);
    CHECK(out.find("all selfchecks passed") != std::string::npos);
}
