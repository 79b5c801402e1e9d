#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include <unistd.h>

#include "json.hpp"

#include "rffkit/cli.hpp"
#include "rffkit/experiment.hpp"

using namespace rffkit;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("rffkit_cli_" + std::to_string(::getpid()) + "_" +
                                            std::to_string(counter()));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    static int counter() {
        static int c = 0;
        return ++c;
    }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

int run(std::vector<std::string> args) {
    std::vector<const char*> argv{"rffkit"};
    for (const auto& a : args) argv.push_back(a.c_str());
    return run_cli(static_cast<int>(argv.size()), argv.data());
}

std::string write_config(const TempDir& dir, const std::string& name, const std::string& body) {
    const std::string path = dir.file(name);
    std::ofstream(path) << body;
    return path;
}

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(f.good());
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

const char* kTinyCommon = R"({
  "seed": 5,
  "data": {"population": "four-emitters-easy", "bursts_per_emitter": 30, "burst_len": 64},
  "task": {"kind": "SEI", "epochs": 4, "batch_size": 16},
  "model": {"kind": "FCN", "embed_dim": 16, "widths": [32, 16]},
  "train": {"p_v": 0.15, "p_t": 0.15}
})";

}  // namespace

TEST_CASE("config defaults are filled and echoed") {
    ExperimentConfig cfg = parse_config("{}");
    CHECK(cfg.seed == 1);
    CHECK(cfg.task.kind == TaskKind::SEI);
    CHECK(cfg.task.batch_size == 512);  // SEI default
    CHECK(cfg.task.epochs == 200);
    CHECK(cfg.task.weight_decay == 0.0005);
    CHECK(cfg.p_v == 0.1);
    CHECK(cfg.p_t == 0.1);

    ExperimentConfig eda = parse_config(R"({"task": {"kind": "EDA"}})");
    CHECK(eda.task.batch_size == 128);
    ExperimentConfig rfec = parse_config(R"({"task": {"kind": "RFEC"}})");
    CHECK(rfec.task.batch_size == 128);
    CHECK(rfec.model.kind == ModelKind::simpleAE);

    const std::string echo = config_echo(cfg);
    json j = json::parse(echo);
    CHECK(j["task"]["batch_size"] == 512);
    CHECK(j["train"]["p_v"] == 0.1);
    CHECK(j["data"]["population"] == "four-emitters-easy");
}

TEST_CASE("unknown config keys are rejected") {
    CHECK_THROWS_AS(parse_config(R"({"sead": 3})"), ValidationError);
    CHECK_THROWS_AS(parse_config(R"({"data": {"snrdb": 3}})"), ValidationError);
    CHECK_THROWS_AS(parse_config(R"({"task": {"kind": "SEI", "lr": 0.1}})"), ValidationError);
    CHECK_THROWS_AS(parse_config(R"({"task": {"kind": "XYZ"}})"), ValidationError);
    CHECK_THROWS_AS(parse_config("not json"), ValidationError);
}

TEST_CASE("population presets are well formed") {
    for (const auto& name : population_preset_names()) {
        const auto specs = population_preset(name);
        CHECK(specs.size() >= 4);
        std::set<int> ids;
        for (const auto& s : specs) ids.insert(s.emitter_id);
        CHECK(ids.size() == specs.size());
    }
    CHECK_THROWS_AS(population_preset("no-such-preset"), ValidationError);
}

TEST_CASE("synth is reproducible byte for byte") {
    TempDir dir;
    const std::string cfg = write_config(dir, "cfg.json", kTinyCommon);
    const std::string out1 = dir.file("a.rffd");
    const std::string out2 = dir.file("b.rffd");
    CHECK(run({"synth", "--config", cfg, "--out", out1, "--quiet"}) == 0);
    CHECK(run({"synth", "--config", cfg, "--out", out2, "--quiet"}) == 0);
    CHECK(slurp(out1) == slurp(out2));
    CHECK(fs::exists(out1 + ".meta.json"));
}

TEST_CASE("synth rejects duplicate emitter ids with exit code 2") {
    TempDir dir;
    const std::string cfg = write_config(dir, "dup.json", R"({
      "data": {"population": [
        {"emitter_id": 1, "cfo_norm": 0.01},
        {"emitter_id": 1, "cfo_norm": 0.02}
      ]}
    })");
    CHECK(run({"synth", "--config", cfg, "--out", dir.file("x.rffd"), "--quiet"}) == 2);
}

TEST_CASE("missing data file exits with code 3") {
    TempDir dir;
    const std::string cfg = write_config(dir, "cfg.json", kTinyCommon);
    CHECK(run({"train", "--config", cfg, "--data", dir.file("absent.rffd"),
               "--out", dir.file("out"), "--quiet"}) == 3);
}

TEST_CASE("train produces checkpoint, history, and manifest") {
    TempDir dir;
    const std::string cfg = write_config(dir, "cfg.json", kTinyCommon);
    const std::string data = dir.file("ds.rffd");
    REQUIRE(run({"synth", "--config", cfg, "--out", data, "--quiet"}) == 0);
    REQUIRE(run({"train", "--config", cfg, "--data", data, "--out", dir.file("run"),
                 "--quiet"}) == 0);

    std::string manifest_path;
    for (const auto& entry : fs::directory_iterator(dir.file("run")))
        if (entry.path().string().ends_with(".manifest.json")) manifest_path = entry.path();
    REQUIRE(!manifest_path.empty());
    json manifest = json::parse(slurp(manifest_path));
    CHECK(manifest["command"] == "train");
    CHECK(manifest.contains("config_hash"));
    CHECK(manifest.contains("dataset_hash"));
    CHECK(manifest["best_epoch"].get<std::size_t>() >= 1);
    CHECK(manifest["config"]["task"]["kind"] == "SEI");

    // Checkpoint loads and matches the model kind.
    std::string ckpt;
    for (const auto& a : manifest["artifacts"])
        if (a.get<std::string>().ends_with("checkpoint.json"))
            ckpt = dir.file("run/" + a.get<std::string>());
    REQUIRE(!ckpt.empty());
    Model m = load_checkpoint(ckpt);
    CHECK(m.spec.kind == ModelKind::FCN);
    CHECK(m.spec.n_classes == 4);
}

TEST_CASE("eval emits the SEI artifact set and rejects incompatible artifacts") {
    TempDir dir;
    const std::string cfg = write_config(dir, "cfg.json", kTinyCommon);
    const std::string data = dir.file("ds.rffd");
    REQUIRE(run({"synth", "--config", cfg, "--out", data, "--quiet"}) == 0);
    REQUIRE(run({"train", "--config", cfg, "--data", data, "--out", dir.file("run"),
                 "--quiet"}) == 0);
    std::string ckpt;
    for (const auto& entry : fs::directory_iterator(dir.file("run")))
        if (entry.path().string().ends_with(".checkpoint.json")) ckpt = entry.path();
    REQUIRE(!ckpt.empty());

    REQUIRE(run({"eval", "--config", cfg, "--checkpoint", ckpt, "--data", data, "--out",
                 dir.file("eval"), "--quiet"}) == 0);
    bool saw_metrics = false, saw_confusion_svg = false, saw_embeddings = false;
    for (const auto& entry : fs::directory_iterator(dir.file("eval"))) {
        const std::string name = entry.path().filename().string();
        saw_metrics |= name.ends_with(".metrics.csv");
        saw_confusion_svg |= name.ends_with(".confusion.svg");
        saw_embeddings |= name.ends_with(".embeddings.csv");
    }
    CHECK(saw_metrics);
    CHECK(saw_confusion_svg);
    CHECK(saw_embeddings);

    // Silhouette is an RFEC artifact, not SEI.
    CHECK(run({"eval", "--config", cfg, "--checkpoint", ckpt, "--data", data, "--out",
               dir.file("eval2"), "--artifacts", "silhouette", "--quiet"}) == 2);
}

TEST_CASE("metrics csv carries the four headline columns") {
    TempDir dir;
    const std::string cfg = write_config(dir, "cfg.json", kTinyCommon);
    const std::string data = dir.file("ds.rffd");
    REQUIRE(run({"synth", "--config", cfg, "--out", data, "--quiet"}) == 0);
    REQUIRE(run({"train", "--config", cfg, "--data", data, "--out", dir.file("run"),
                 "--quiet"}) == 0);
    std::string ckpt;
    for (const auto& entry : fs::directory_iterator(dir.file("run")))
        if (entry.path().string().ends_with(".checkpoint.json")) ckpt = entry.path();
    REQUIRE(run({"eval", "--config", cfg, "--checkpoint", ckpt, "--data", data, "--out",
                 dir.file("eval"), "--artifacts", "metrics", "--quiet"}) == 0);
    for (const auto& entry : fs::directory_iterator(dir.file("eval")))
        if (entry.path().string().ends_with(".metrics.csv"))
            CHECK(slurp(entry.path()).starts_with("accuracy,f1,precision,recall"));
}

TEST_CASE("sweep-snr writes one row per SNR and is rerun-stable") {
    TempDir dir;
    const std::string cfg = write_config(dir, "cfg.json", kTinyCommon);
    const std::string data = dir.file("ds.rffd");
    REQUIRE(run({"synth", "--config", cfg, "--out", data, "--quiet"}) == 0);
    REQUIRE(run({"train", "--config", cfg, "--data", data, "--out", dir.file("run"),
                 "--quiet"}) == 0);
    std::string ckpt;
    for (const auto& entry : fs::directory_iterator(dir.file("run")))
        if (entry.path().string().ends_with(".checkpoint.json")) ckpt = entry.path();

    REQUIRE(run({"sweep-snr", "--config", cfg, "--checkpoint", ckpt, "--snr", "0,10,20", "--out",
                 dir.file("sweep"), "--quiet"}) == 0);
    std::string csv;
    for (const auto& entry : fs::directory_iterator(dir.file("sweep")))
        if (entry.path().string().ends_with(".snr_sweep.csv")) csv = entry.path();
    REQUIRE(!csv.empty());
    const std::string first = slurp(csv);
    CHECK(std::count(first.begin(), first.end(), '\n') == 4);  // header + 3 rows

    REQUIRE(run({"sweep-snr", "--config", cfg, "--checkpoint", ckpt, "--snr", "0,10,20", "--out",
                 dir.file("sweep"), "--quiet"}) == 0);
    CHECK(slurp(csv) == first);

    // Single-SNR sweep: one row.
    REQUIRE(run({"sweep-snr", "--config", cfg, "--checkpoint", ckpt, "--snr", "15", "--out",
                 dir.file("sweep1"), "--quiet"}) == 0);
    for (const auto& entry : fs::directory_iterator(dir.file("sweep1")))
        if (entry.path().string().ends_with(".snr_sweep.csv")) {
            const std::string body = slurp(entry.path());
            CHECK(std::count(body.begin(), body.end(), '\n') == 2);
        }
}

TEST_CASE("osr validates proportions and id sets") {
    TempDir dir;
    const std::string cfg = write_config(dir, "eda.json", R"({
      "seed": 5,
      "data": {"population": "four-emitters-easy", "bursts_per_emitter": 24, "burst_len": 64},
      "task": {"kind": "EDA", "epochs": 2, "batch_size": 16, "gamma": 300},
      "model": {"kind": "FCN", "embed_dim": 16, "widths": [32, 16]},
      "train": {"p_v": 0.15, "p_t": 0.15},
      "eval": {"pair_budget": 200}
    })");
    CHECK(run({"osr", "--config", cfg, "--heldout", "4", "--proportions", "0", "--out",
               dir.file("osr"), "--quiet"}) == 2);
    CHECK(run({"osr", "--config", cfg, "--heldout", "9", "--proportions", "1.0", "--out",
               dir.file("osr"), "--quiet"}) == 2);
}

TEST_CASE("osr runs the held-out protocol per proportion") {
    TempDir dir;
    const std::string cfg = write_config(dir, "eda.json", R"({
      "seed": 5,
      "data": {"population": "four-emitters-easy", "bursts_per_emitter": 24, "burst_len": 64},
      "task": {"kind": "EDA", "epochs": 2, "batch_size": 16, "gamma": 300},
      "model": {"kind": "FCN", "embed_dim": 16, "widths": [32, 16]},
      "train": {"p_v": 0.15, "p_t": 0.15},
      "eval": {"pair_budget": 200}
    })");
    REQUIRE(run({"osr", "--config", cfg, "--heldout", "4", "--proportions", "1.0,0.5", "--out",
                 dir.file("osr"), "--quiet"}) == 0);
    CHECK(fs::exists(dir.file("osr/p_1/heldout.metrics.csv")));
    CHECK(fs::exists(dir.file("osr/p_0.5/heldout.metrics.csv")));
    CHECK(fs::exists(dir.file("osr/p_0.5/heldout.distances.csv")));
    CHECK(fs::exists(dir.file("osr/p_0.5/heldout.silhouette.csv")));
    CHECK(fs::exists(dir.file("osr/p_0.5/heldout.embeddings.svg")));
}

TEST_CASE("pairs subcommand is deterministic and respects gamma") {
    TempDir dir;
    const std::string cfg = write_config(dir, "cfg.json", kTinyCommon);
    const std::string data = dir.file("ds.rffd");
    REQUIRE(run({"synth", "--config", cfg, "--out", data, "--quiet"}) == 0);
    const std::string p1 = dir.file("p1.json");
    const std::string p2 = dir.file("p2.json");
    REQUIRE(run({"pairs", "--config", cfg, "--data", data, "--out", p1, "--gamma", "140",
                 "--quiet"}) == 0);
    REQUIRE(run({"pairs", "--config", cfg, "--data", data, "--out", p2, "--gamma", "140",
                 "--quiet"}) == 0);
    CHECK(slurp(p1) == slurp(p2));
    PairDataset pd = load_pairs(p1);
    CHECK(pd.entries.size() == 140);
}

TEST_CASE("cli rejects bad invocations with exit code 2") {
    CHECK(run({"no-such-command"}) == 2);
    CHECK(run({"train"}) == 2);             // missing --data
    CHECK(run({"sweep-snr", "--snr", "5"}) == 2);  // missing --checkpoint
}
