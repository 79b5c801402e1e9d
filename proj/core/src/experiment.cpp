#include "rffkit/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "json.hpp"

#include "rffkit/common.hpp"
#include "rffkit/rng.hpp"
#include "rffkit/svg.hpp"

namespace rffkit {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& allowed,
                    const std::string& where) {
    if (!j.is_object()) throw ValidationError("config section '" + where + "' must be an object");
    for (const auto& [key, _] : j.items())
        if (!allowed.count(key))
            throw ValidationError("unknown key '" + key + "' in config section '" + where + "'");
}

EmitterSpec emitter_from_json(const json& j) {
    reject_unknown(j,
                   {"emitter_id", "iq_gain_imbalance_db", "quadrature_skew_rad", "dc_offset_i",
                    "dc_offset_q", "cfo_norm", "phase_noise_std_rad", "pa_cubic_coeff",
                    "rise_time_samples"},
                   "population spec");
    EmitterSpec s;
    s.emitter_id = j.at("emitter_id").get<int>();
    s.iq_gain_imbalance_db = j.value("iq_gain_imbalance_db", 0.0);
    s.quadrature_skew_rad = j.value("quadrature_skew_rad", 0.0);
    s.dc_offset_i = j.value("dc_offset_i", 0.0);
    s.dc_offset_q = j.value("dc_offset_q", 0.0);
    s.cfo_norm = j.value("cfo_norm", 0.0);
    s.phase_noise_std_rad = j.value("phase_noise_std_rad", 0.0);
    s.pa_cubic_coeff = j.value("pa_cubic_coeff", 0.0);
    s.rise_time_samples = j.value("rise_time_samples", std::size_t{0});
    return s;
}

json emitter_to_json(const EmitterSpec& s) {
    return json{{"emitter_id", s.emitter_id},
                {"iq_gain_imbalance_db", s.iq_gain_imbalance_db},
                {"quadrature_skew_rad", s.quadrature_skew_rad},
                {"dc_offset_i", s.dc_offset_i},
                {"dc_offset_q", s.dc_offset_q},
                {"cfo_norm", s.cfo_norm},
                {"phase_noise_std_rad", s.phase_noise_std_rad},
                {"pa_cubic_coeff", s.pa_cubic_coeff},
                {"rise_time_samples", s.rise_time_samples}};
}

DistanceMetric metric_from_name(const std::string& name) {
    if (name == "euclidean") return DistanceMetric::euclidean;
    if (name == "cosine") return DistanceMetric::cosine;
    throw ValidationError("unknown distance metric '" + name + "'");
}

std::string metric_name(DistanceMetric m) {
    return m == DistanceMetric::euclidean ? "euclidean" : "cosine";
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw DataError("cannot create directory " + dir + ": " + ec.message());
}

std::ofstream open_out(const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw DataError("cannot open " + path + " for writing");
    return f;
}

}  // namespace

ExperimentConfig parse_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("config is not valid JSON: ") + e.what());
    }
    reject_unknown(j, {"seed", "data", "task", "model", "train", "eval"}, "top level");

    ExperimentConfig cfg;
    cfg.seed = j.value("seed", std::uint64_t{1});

    if (j.contains("data")) {
        const json& d = j["data"];
        reject_unknown(d, {"population", "snr_db", "bursts_per_emitter", "burst_len", "oversample"},
                       "data");
        if (d.contains("population")) {
            if (d["population"].is_string()) {
                cfg.data.preset = d["population"].get<std::string>();
            } else if (d["population"].is_array()) {
                for (const auto& e : d["population"]) cfg.data.specs.push_back(emitter_from_json(e));
            } else {
                throw ValidationError("population must be a preset name or an array of specs");
            }
        } else {
            cfg.data.preset = "four-emitters-easy";
        }
        cfg.data.snr_db = d.value("snr_db", 20.0);
        cfg.data.bursts_per_emitter = d.value("bursts_per_emitter", std::size_t{400});
        cfg.data.burst_len = d.value("burst_len", std::size_t{256});
        cfg.data.oversample = d.value("oversample", std::size_t{4});
        if (cfg.data.burst_len % cfg.data.oversample != 0)
            throw ValidationError("burst_len must be a multiple of oversample");
    } else {
        cfg.data.preset = "four-emitters-easy";
    }

    TaskKind kind = TaskKind::SEI;
    if (j.contains("task")) {
        const json& t = j["task"];
        reject_unknown(t,
                       {"kind", "margin", "distance", "learning_rate", "epochs", "batch_size",
                        "weight_decay", "alpha_weight", "alpha", "gamma"},
                       "task");
        kind = task_kind_from_name(t.value("kind", std::string("SEI")));
        cfg.task = default_task_spec(kind);
        cfg.task.margin = t.value("margin", cfg.task.margin);
        if (cfg.task.margin <= 0.0) throw ValidationError("margin must be > 0");
        cfg.task.distance = metric_from_name(t.value("distance", std::string("euclidean")));
        cfg.task.learning_rate = t.value("learning_rate", cfg.task.learning_rate);
        cfg.task.epochs = t.value("epochs", cfg.task.epochs);
        cfg.task.batch_size = t.value("batch_size", cfg.task.batch_size);
        cfg.task.weight_decay = t.value("weight_decay", cfg.task.weight_decay);
        cfg.task.alpha_weight = t.value("alpha_weight", 1.0);
        cfg.pair_alpha = t.value("alpha", 0.5);
        cfg.pair_gamma = t.value("gamma", std::size_t{20000});
        if (!(cfg.pair_alpha > 0.0 && cfg.pair_alpha <= 1.0))
            throw ValidationError("pair alpha must be in (0, 1]");
    } else {
        cfg.task = default_task_spec(kind);
    }

    if (j.contains("model")) {
        const json& m = j["model"];
        reject_unknown(m, {"kind", "embed_dim", "n_classes", "widths"}, "model");
        cfg.model.kind = model_kind_from_name(
            m.value("kind", std::string(kind == TaskKind::RFEC ? "simpleAE" : "FCN")));
        cfg.model.embed_dim = m.value("embed_dim", std::size_t{64});
        cfg.model.n_classes = m.value("n_classes", std::size_t{0});
        cfg.model.widths = m.value("widths", std::vector<std::size_t>{});
    } else {
        cfg.model.kind = kind == TaskKind::RFEC ? ModelKind::simpleAE : ModelKind::FCN;
        cfg.model.embed_dim = 64;
    }
    cfg.model.input_len = cfg.data.burst_len;

    if (j.contains("train")) {
        const json& t = j["train"];
        reject_unknown(t, {"p_v", "p_t", "proportion"}, "train");
        cfg.p_v = t.value("p_v", 0.1);
        cfg.p_t = t.value("p_t", 0.1);
        cfg.proportion = t.value("proportion", 1.0);
        if (!(cfg.proportion > 0.0 && cfg.proportion <= 1.0))
            throw ValidationError("proportion must be in (0, 1]");
    }

    if (j.contains("eval")) {
        const json& e = j["eval"];
        reject_unknown(e, {"artifacts", "k_min", "k_max", "snr_list", "msp_thresholds",
                           "pair_budget"},
                       "eval");
        cfg.eval.artifacts = e.value("artifacts", std::vector<std::string>{});
        cfg.eval.k_min = e.value("k_min", std::size_t{2});
        cfg.eval.k_max = e.value("k_max", std::size_t{9});
        cfg.eval.snr_list = e.value("snr_list", cfg.eval.snr_list);
        cfg.eval.msp_thresholds = e.value("msp_thresholds", cfg.eval.msp_thresholds);
        cfg.eval.pair_budget = e.value("pair_budget", std::size_t{4000});
        if (cfg.eval.k_min < 2 || cfg.eval.k_max < cfg.eval.k_min)
            throw ValidationError("silhouette K range must satisfy 2 <= k_min <= k_max");
    }
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw DataError("cannot open config " + path);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return parse_config(text);
}

std::string config_echo(const ExperimentConfig& cfg) {
    json population;
    if (!cfg.data.preset.empty()) {
        population = cfg.data.preset;
    } else {
        population = json::array();
        for (const auto& s : cfg.data.specs) population.push_back(emitter_to_json(s));
    }
    json j{
        {"seed", cfg.seed},
        {"data",
         {{"population", population},
          {"snr_db", cfg.data.snr_db},
          {"bursts_per_emitter", cfg.data.bursts_per_emitter},
          {"burst_len", cfg.data.burst_len},
          {"oversample", cfg.data.oversample}}},
        {"task",
         {{"kind", task_kind_name(cfg.task.kind)},
          {"margin", cfg.task.margin},
          {"distance", metric_name(cfg.task.distance)},
          {"learning_rate", cfg.task.learning_rate},
          {"epochs", cfg.task.epochs},
          {"batch_size", cfg.task.batch_size},
          {"weight_decay", cfg.task.weight_decay},
          {"alpha_weight", cfg.task.alpha_weight},
          {"alpha", cfg.pair_alpha},
          {"gamma", cfg.pair_gamma}}},
        {"model",
         {{"kind", model_kind_name(cfg.model.kind)},
          {"input_len", cfg.model.input_len},
          {"embed_dim", cfg.model.embed_dim},
          {"n_classes", cfg.model.n_classes},
          {"widths", cfg.model.widths}}},
        {"train", {{"p_v", cfg.p_v}, {"p_t", cfg.p_t}, {"proportion", cfg.proportion}}},
        {"eval",
         {{"artifacts", cfg.eval.artifacts},
          {"k_min", cfg.eval.k_min},
          {"k_max", cfg.eval.k_max},
          {"snr_list", cfg.eval.snr_list},
          {"msp_thresholds", cfg.eval.msp_thresholds},
          {"pair_budget", cfg.eval.pair_budget}}},
    };
    return j.dump(1);
}

std::vector<std::string> population_preset_names() {
    return {"four-emitters-easy", "eight-emitters-dmr-like"};
}

std::vector<EmitterSpec> population_preset(const std::string& name) {
    auto mk = [](int id, double gain_db, double skew, double dci, double dcq, double cfo,
                 double pn, double pa, std::size_t rise) {
        EmitterSpec s;
        s.emitter_id = id;
        s.iq_gain_imbalance_db = gain_db;
        s.quadrature_skew_rad = skew;
        s.dc_offset_i = dci;
        s.dc_offset_q = dcq;
        s.cfo_norm = cfo;
        s.phase_noise_std_rad = pn;
        s.pa_cubic_coeff = pa;
        s.rise_time_samples = rise;
        return s;
    };
    if (name == "four-emitters-easy") {
        // Widely separated impairments; every knob differs between emitters.
        return {
            mk(1, 0.0, 0.00, 0.00, 0.00, 0.000, 0.001, 0.00, 0),
            mk(2, 3.0, 0.06, 0.06, 0.00, 0.012, 0.002, 0.06, 8),
            mk(3, -3.0, -0.06, 0.00, 0.06, -0.012, 0.002, -0.06, 16),
            mk(4, 1.5, 0.12, -0.06, -0.06, 0.024, 0.004, 0.12, 24),
        };
    }
    if (name == "eight-emitters-dmr-like") {
        // Three same-model pairs (2,3), (4,5), (6,7) with small intra-pair
        // deltas; emitters 1 and 8 are distinct units.
        return {
            mk(1, 0.0, 0.00, 0.00, 0.00, 0.000, 0.001, 0.00, 0),
            mk(2, 2.0, 0.04, 0.04, 0.00, 0.008, 0.002, 0.05, 8),
            mk(3, 2.2, 0.045, 0.045, 0.005, 0.0085, 0.002, 0.055, 8),
            mk(4, -2.0, -0.04, 0.00, 0.04, -0.008, 0.002, -0.05, 16),
            mk(5, -2.2, -0.045, 0.005, 0.045, -0.0085, 0.002, -0.055, 16),
            mk(6, 1.0, 0.08, -0.04, -0.04, 0.016, 0.003, 0.09, 24),
            mk(7, 1.2, 0.085, -0.045, -0.045, 0.0165, 0.003, 0.095, 24),
            mk(8, 4.0, -0.10, 0.08, -0.04, -0.020, 0.004, 0.12, 32),
        };
    }
    throw ValidationError("unknown population preset '" + name + "'");
}

std::vector<EmitterSpec> population_of(const DataConfig& data) {
    if (!data.preset.empty()) return population_preset(data.preset);
    if (data.specs.size() < 2) throw ValidationError("population needs at least 2 emitters");
    return data.specs;
}

std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t basis) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = basis;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t hash_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open " + path + " for hashing");
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[65536];
    while (f.read(buf, sizeof(buf)) || f.gcount() > 0)
        h = fnv1a(buf, static_cast<std::size_t>(f.gcount()), h);
    return h;
}

std::string hex16(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string run_id_for(const std::string& command, const ExperimentConfig& cfg) {
    const std::string echo = command + "\n" + config_echo(cfg);
    return hex16(fnv1a(echo.data(), echo.size())).substr(0, 12);
}

namespace {

std::size_t symbols_for(const DataConfig& d) { return d.burst_len / d.oversample; }

LabeledDataset synth_from_config(const ExperimentConfig& cfg, bool clean) {
    const auto specs = population_of(cfg.data);
    if (clean)
        return synth_dataset_clean(specs, cfg.data.bursts_per_emitter, cfg.seed,
                                   symbols_for(cfg.data), cfg.data.oversample);
    return synth_dataset(specs, cfg.data.bursts_per_emitter, cfg.data.snr_db, cfg.seed,
                         symbols_for(cfg.data), cfg.data.oversample);
}

void write_meta_sidecar(const ExperimentConfig& cfg, const std::string& data_path) {
    json meta;
    meta["seed"] = cfg.seed;
    meta["snr_db"] = cfg.data.snr_db;
    meta["bursts_per_emitter"] = cfg.data.bursts_per_emitter;
    meta["burst_len"] = cfg.data.burst_len;
    meta["oversample"] = cfg.data.oversample;
    json specs = json::array();
    for (const auto& s : population_of(cfg.data)) specs.push_back(emitter_to_json(s));
    meta["specs"] = std::move(specs);
    auto f = open_out(data_path + ".meta.json");
    f << meta.dump(1) << "\n";
}

void write_manifest(const std::string& out_dir, const std::string& run_id,
                    const std::string& command, const ExperimentConfig& cfg,
                    const json& extra) {
    json m;
    m["run_id"] = run_id;
    m["command"] = command;
    const std::string echo = config_echo(cfg);
    m["config"] = json::parse(echo);
    m["config_hash"] = hex16(fnv1a(echo.data(), echo.size()));
    for (const auto& [k, v] : extra.items()) m[k] = v;
    auto f = open_out(out_dir + "/" + run_id + ".manifest.json");
    f << m.dump(1) << "\n";
}

void write_csv(const std::string& path, const std::string& header,
               const std::vector<std::string>& rows) {
    auto f = open_out(path);
    f << header << "\n";
    for (const auto& r : rows) f << r << "\n";
}

std::string fmt_row(const char* fmt, ...) {
    char buf[512];
    va_list args;
    va_start(args, fmt);
    std::vsnprintf(buf, sizeof(buf), fmt, args);
    va_end(args);
    return buf;
}

bool wants_artifact(const EvalConfig& e, const std::string& name) {
    if (e.artifacts.empty()) return true;
    return std::find(e.artifacts.begin(), e.artifacts.end(), name) != e.artifacts.end();
}

// Training data assembled for one task from a dataset file.
struct PreparedTask {
    DatasetSplit split;
    PairDataset pairs;
    PairSplit pair_split;
    TaskData data;
};

PreparedTask prepare_task(const ExperimentConfig& cfg, const LabeledDataset& ds,
                          const std::string& pair_file, const std::string& source_id,
                          std::string* pair_file_used, const std::string& out_dir,
                          const std::string& run_id) {
    PreparedTask prep;
    if (cfg.task.kind == TaskKind::EDA) {
        if (!pair_file.empty()) {
            prep.pairs = load_pairs(pair_file);
            if (pair_file_used) *pair_file_used = pair_file;
        } else {
            prep.pairs = build_pair_dataset(ds, cfg.pair_alpha, cfg.pair_gamma,
                                            derive_seed(cfg.seed, 0x70616972));
            prep.pairs.source_id = source_id;
            const std::string path = out_dir + "/" + run_id + ".pairs.json";
            save_pairs(prep.pairs, path);
            if (pair_file_used) *pair_file_used = path;
        }
        prep.pair_split = split_pairs(prep.pairs, cfg.p_v, cfg.p_t, cfg.seed);
        if (cfg.proportion < 1.0) {
            // Drop training pairs at random, stratified by match label.
            PairDataset reduced = prep.pair_split.train;
            reduced.entries.clear();
            for (int cls = 0; cls <= 1; ++cls) {
                std::vector<std::size_t> idx;
                for (std::size_t i = 0; i < prep.pair_split.train.entries.size(); ++i)
                    if (prep.pair_split.train.entries[i].y == cls) idx.push_back(i);
                Rng rng(derive_seed(cfg.seed, 0x70737562, static_cast<std::uint64_t>(cls)));
                rng.shuffle(idx);
                const auto keep = static_cast<std::size_t>(
                    std::llround(cfg.proportion * static_cast<double>(idx.size())));
                if (keep == 0) throw ValidationError("proportion empties a pair class");
                for (std::size_t k = 0; k < keep; ++k)
                    reduced.entries.push_back(prep.pair_split.train.entries[idx[k]]);
            }
            prep.pair_split.train = std::move(reduced);
        }
    } else {
        prep.split = split_dataset(ds, cfg.p_v, cfg.p_t, cfg.seed);
        if (cfg.proportion < 1.0)
            prep.split.train = subsample_train(prep.split.train, cfg.proportion,
                                               derive_seed(cfg.seed, 0x70737562));
    }
    return prep;
}

TaskData task_data_of(PreparedTask& prep, const LabeledDataset& ds, TaskKind kind) {
    TaskData d;
    if (kind == TaskKind::EDA) {
        d.pair_train = &prep.pair_split.train;
        d.pair_valid = &prep.pair_split.valid;
        d.pair_source = &ds;
    } else {
        d.train = &prep.split.train;
        d.valid = &prep.split.valid;
    }
    return d;
}

}  // namespace

void cmd_synth(const ExperimentConfig& cfg, const std::string& out_path, bool quiet) {
    LabeledDataset ds = synth_from_config(cfg, /*clean=*/false);
    if (const auto dir = fs::path(out_path).parent_path(); !dir.empty())
        ensure_dir(dir.string());
    save_rffd(ds, out_path);
    write_meta_sidecar(cfg, out_path);
    if (!quiet) {
        std::vector<std::size_t> census(ds.V + 1, 0);
        for (const auto& b : ds.bursts) census[static_cast<std::size_t>(b.label.value_or(0))] += 1;
        std::printf("wrote %s: %zu bursts, %zu emitters, burst_len %zu, snr %.1f dB\n",
                    out_path.c_str(), ds.bursts.size(), ds.V, ds.burst_len, cfg.data.snr_db);
        for (std::size_t v = 1; v <= ds.V; ++v)
            std::printf("  emitter %zu: %zu bursts\n", v, census[v]);
    }
}

void cmd_pairs(const ExperimentConfig& cfg, const std::string& data_path,
               const std::string& out_path, bool quiet) {
    LabeledDataset ds = load_rffd(data_path);
    PairDataset pairs =
        build_pair_dataset(ds, cfg.pair_alpha, cfg.pair_gamma, derive_seed(cfg.seed, 0x70616972));
    pairs.source_id = hex16(hash_file(data_path));
    if (const auto dir = fs::path(out_path).parent_path(); !dir.empty())
        ensure_dir(dir.string());
    save_pairs(pairs, out_path);
    if (!quiet) {
        std::size_t matched = 0;
        for (const auto& e : pairs.entries) matched += e.y == 1 ? 1 : 0;
        std::printf("wrote %s: %zu pairs (%zu matched, %zu unmatched) from %s\n", out_path.c_str(),
                    pairs.entries.size(), matched, pairs.entries.size() - matched,
                    data_path.c_str());
    }
}

void cmd_train(const ExperimentConfig& cfg, const std::string& data_path,
               const std::string& out_dir, const std::string& pair_file, bool quiet) {
    ensure_dir(out_dir);
    const std::string run_id = run_id_for("train", cfg);
    LabeledDataset ds = load_rffd(data_path);
    const std::string ds_hash = hex16(hash_file(data_path));

    ExperimentConfig effective = cfg;
    if (cfg.task.kind == TaskKind::SEI) {
        if (effective.model.n_classes == 0) effective.model.n_classes = ds.V;
        if (effective.model.n_classes != ds.V)
            throw ValidationError("model n_classes does not match dataset emitter count");
    }
    if (cfg.task.kind == TaskKind::RFEC && !is_autoencoder(effective.model.kind))
        throw ValidationError("RFEC training needs an autoencoder model kind");
    if (cfg.task.kind == TaskKind::EDA && effective.model.n_classes != 0)
        throw ValidationError("EDA training needs a headless model (n_classes = 0)");
    if (effective.model.input_len != ds.burst_len)
        throw ValidationError("model input_len does not match dataset burst length");

    std::string pair_file_used;
    PreparedTask prep =
        prepare_task(effective, ds, pair_file, ds_hash, &pair_file_used, out_dir, run_id);
    TaskData data = task_data_of(prep, ds, effective.task.kind);

    TrainConfig tc;
    tc.learning_rate = effective.task.learning_rate;
    tc.epochs = effective.task.epochs;
    tc.batch_size = effective.task.batch_size;
    tc.weight_decay = effective.task.weight_decay;
    tc.seed = effective.seed;
    tc.verbose = !quiet;

    Model model = build_model(effective.model, effective.seed);
    TrainResult result = train_single_task(effective.task, data, std::move(model), tc);

    const std::string ckpt_path = out_dir + "/" + run_id + ".checkpoint.json";
    save_checkpoint(result.model, ckpt_path, config_echo(effective), effective.seed);
    save_history_csv(result.history, out_dir + "/" + run_id + ".history.csv");

    double total_secs = 0.0;
    for (const auto& e : result.history.epochs) total_secs += e.seconds;
    json extra;
    extra["dataset"] = data_path;
    extra["dataset_hash"] = ds_hash;
    extra["best_epoch"] = result.history.best_epoch;
    extra["best_valid_loss"] = result.history.epochs[result.history.best_epoch - 1].valid_loss;
    extra["final_train_loss"] = result.history.epochs.back().train_loss;
    extra["epochs_run"] = result.history.epochs.size();
    extra["seconds_total"] = total_secs;
    if (!pair_file_used.empty()) extra["pair_file"] = pair_file_used;
    extra["artifacts"] = json::array({run_id + ".checkpoint.json", run_id + ".history.csv"});
    write_manifest(out_dir, run_id, "train", effective, extra);
    if (!quiet)
        std::printf("train done: best epoch %zu, checkpoint %s\n", result.history.best_epoch,
                    ckpt_path.c_str());
}

namespace {

void eval_sei(const ExperimentConfig& cfg, Model& model, const LabeledDataset& test,
              const std::string& out_dir, const std::string& run_id, json& artifacts) {
    std::vector<int> labels;
    for (const auto& b : test.bursts) labels.push_back(b.label.value());
    const auto preds = predict_classes(model, test);
    const MetricsReport rep = classification_metrics(preds, labels, test.V);

    if (wants_artifact(cfg.eval, "metrics")) {
        write_csv(out_dir + "/" + run_id + ".metrics.csv", "accuracy,f1,precision,recall",
                  {fmt_row("%.6f,%.6f,%.6f,%.6f", rep.accuracy, rep.macro_f1, rep.macro_precision,
                           rep.macro_recall)});
        artifacts.push_back(run_id + ".metrics.csv");
    }
    if (wants_artifact(cfg.eval, "confusion")) {
        std::vector<std::string> rows;
        for (const auto& row : rep.confusion) {
            std::string line;
            for (std::size_t c = 0; c < row.size(); ++c)
                line += (c ? "," : "") + std::to_string(row[c]);
            rows.push_back(line);
        }
        write_csv(out_dir + "/" + run_id + ".confusion.csv", "counts (rows=truth)", rows);
        svg_heatmap(out_dir + "/" + run_id + ".confusion.svg", rep.confusion,
                    "SEI confusion matrix");
        artifacts.push_back(run_id + ".confusion.csv");
        artifacts.push_back(run_id + ".confusion.svg");
    }
    if (wants_artifact(cfg.eval, "pca")) {
        Tensor z = embed_dataset(model, test);
        PcaResult pca = pca_project(z, 2);
        std::vector<std::string> rows;
        for (std::size_t i = 0; i < pca.projected.dim(0); ++i)
            rows.push_back(fmt_row("%.8g,%.8g,%d", pca.projected.at2(i, 0),
                                   pca.projected.at2(i, 1), labels[i]));
        write_csv(out_dir + "/" + run_id + ".embeddings.csv", "pc1,pc2,label", rows);
        svg_scatter(out_dir + "/" + run_id + ".embeddings.svg", pca.projected, labels,
                    "SEI test embeddings (PCA)");
        artifacts.push_back(run_id + ".embeddings.csv");
        artifacts.push_back(run_id + ".embeddings.svg");
    }
    if (wants_artifact(cfg.eval, "osr-msp")) {
        const auto rows = osr_msp_table(model, test, cfg.eval.msp_thresholds);
        std::vector<std::string> lines;
        for (const auto& r : rows)
            lines.push_back(
                fmt_row("%.4f,%.6f,%.6f", r.threshold, r.flagged_unknown, r.known_accuracy));
        write_csv(out_dir + "/" + run_id + ".osr_msp.csv",
                  "threshold,flagged_unknown,known_accuracy", lines);
        artifacts.push_back(run_id + ".osr_msp.csv");
    }
}

void eval_eda(const ExperimentConfig& cfg, Model& model, const LabeledDataset& ds,
              const PairDataset& test_pairs, const std::string& out_dir,
              const std::string& run_id, json& artifacts) {
    PairEvalReport rep = pair_distance_report(model, test_pairs, ds, cfg.task.distance);

    if (wants_artifact(cfg.eval, "metrics")) {
        // 2x2 confusion at the best threshold (rows = truth: match, no-match).
        std::size_t tp = 0, fn = 0, fp = 0, tn = 0;
        for (double d : rep.matched) (d < rep.best_threshold ? tp : fn) += 1;
        for (double d : rep.unmatched) (d < rep.best_threshold ? fp : tn) += 1;
        const double total = static_cast<double>(tp + fn + fp + tn);
        const double acc = static_cast<double>(tp + tn) / total;
        const double prec = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
        const double rec = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
        const double f1 = prec + rec > 0 ? 2.0 * prec * rec / (prec + rec) : 0.0;
        write_csv(out_dir + "/" + run_id + ".metrics.csv",
                  "accuracy,f1,precision,recall,auc,threshold",
                  {fmt_row("%.6f,%.6f,%.6f,%.6f,%.6f,%.8g", acc, f1, prec, rec, rep.auc,
                           rep.best_threshold)});
        std::vector<std::vector<std::size_t>> cm{{tp, fn}, {fp, tn}};
        write_csv(out_dir + "/" + run_id + ".confusion.csv", "counts (rows=truth: match/no-match)",
                  {fmt_row("%zu,%zu", tp, fn), fmt_row("%zu,%zu", fp, tn)});
        svg_heatmap(out_dir + "/" + run_id + ".confusion.svg", cm, "EDA confusion (best threshold)");
        artifacts.push_back(run_id + ".metrics.csv");
        artifacts.push_back(run_id + ".confusion.csv");
        artifacts.push_back(run_id + ".confusion.svg");
    }
    if (wants_artifact(cfg.eval, "histograms")) {
        std::vector<std::string> rows;
        for (double d : rep.matched) rows.push_back(fmt_row("%.8g,1", d));
        for (double d : rep.unmatched) rows.push_back(fmt_row("%.8g,0", d));
        write_csv(out_dir + "/" + run_id + ".distances.csv", "distance,matched", rows);
        svg_histogram_pair(out_dir + "/" + run_id + ".distances.svg", rep.matched, "matched",
                           rep.unmatched, "unmatched", "EDA pair distance distributions");
        artifacts.push_back(run_id + ".distances.csv");
        artifacts.push_back(run_id + ".distances.svg");
    }
    if (wants_artifact(cfg.eval, "pca")) {
        Tensor z = embed_dataset(model, ds);
        std::vector<int> labels;
        for (const auto& b : ds.bursts) labels.push_back(b.label.value_or(0));
        PcaResult pca = pca_project(z, 2);
        std::vector<std::string> rows;
        for (std::size_t i = 0; i < pca.projected.dim(0); ++i)
            rows.push_back(fmt_row("%.8g,%.8g,%d", pca.projected.at2(i, 0),
                                   pca.projected.at2(i, 1), labels[i]));
        write_csv(out_dir + "/" + run_id + ".embeddings.csv", "pc1,pc2,label", rows);
        svg_scatter(out_dir + "/" + run_id + ".embeddings.svg", pca.projected, labels,
                    "EDA embeddings (PCA)");
        artifacts.push_back(run_id + ".embeddings.csv");
        artifacts.push_back(run_id + ".embeddings.svg");
    }
}

void eval_rfec(const ExperimentConfig& cfg, Model& model, const LabeledDataset& train,
               const LabeledDataset& test, const std::string& out_dir, const std::string& run_id,
               json& artifacts) {
    if (wants_artifact(cfg.eval, "metrics")) {
        TaskData d;
        d.train = &train;
        d.valid = &test;
        const double loss = evaluate_loss(cfg.task, d, model);
        write_csv(out_dir + "/" + run_id + ".metrics.csv", "reconstruction_mse",
                  {fmt_row("%.8g", loss)});
        artifacts.push_back(run_id + ".metrics.csv");
    }
    // Silhouette over K on the training-data embeddings.
    if (wants_artifact(cfg.eval, "silhouette")) {
        Tensor z = embed_dataset(model, train);
        std::vector<std::string> rows;
        LineSeries series{"silhouette", {}, {}};
        for (std::size_t k = cfg.eval.k_min; k <= cfg.eval.k_max && k <= z.dim(0); ++k) {
            KMeansResult km = kmeans(z, k, derive_seed(cfg.seed, 0x6b6d65616e, k));
            const double s = silhouette(z, km.assignments).mean;
            rows.push_back(fmt_row("%zu,%.6f", k, s));
            series.x.push_back(static_cast<double>(k));
            series.y.push_back(s);
        }
        write_csv(out_dir + "/" + run_id + ".silhouette.csv", "k,silhouette", rows);
        svg_lines(out_dir + "/" + run_id + ".silhouette.svg", {series},
                  "K-means silhouette vs K (train embeddings)", "K", "mean silhouette");
        artifacts.push_back(run_id + ".silhouette.csv");
        artifacts.push_back(run_id + ".silhouette.svg");
    }
    if (wants_artifact(cfg.eval, "pca")) {
        Tensor z = embed_dataset(model, train);
        std::vector<int> labels;
        for (const auto& b : train.bursts) labels.push_back(b.label.value_or(0));
        PcaResult pca = pca_project(z, 2);
        std::vector<std::string> rows;
        for (std::size_t i = 0; i < pca.projected.dim(0); ++i)
            rows.push_back(fmt_row("%.8g,%.8g,%d", pca.projected.at2(i, 0),
                                   pca.projected.at2(i, 1), labels[i]));
        write_csv(out_dir + "/" + run_id + ".embeddings.csv", "pc1,pc2,label", rows);
        svg_scatter(out_dir + "/" + run_id + ".embeddings.svg", pca.projected, labels,
                    "RFEC train embeddings (PCA)");
        artifacts.push_back(run_id + ".embeddings.csv");
        artifacts.push_back(run_id + ".embeddings.svg");
    }
}

void check_artifact_compatibility(const ExperimentConfig& cfg) {
    static const std::set<std::string> sei{"metrics", "confusion", "pca", "osr-msp"};
    static const std::set<std::string> eda{"metrics", "confusion", "pca", "histograms"};
    static const std::set<std::string> rfec{"metrics", "silhouette", "pca"};
    const auto* allowed = cfg.task.kind == TaskKind::SEI   ? &sei
                          : cfg.task.kind == TaskKind::EDA ? &eda
                                                           : &rfec;
    for (const auto& a : cfg.eval.artifacts)
        if (!allowed->count(a))
            throw ValidationError("artifact '" + a + "' is incompatible with task " +
                                  task_kind_name(cfg.task.kind));
}

}  // namespace

void cmd_eval(const ExperimentConfig& cfg, const std::string& checkpoint_path,
              const std::string& data_path, const std::string& out_dir, bool quiet) {
    ensure_dir(out_dir);
    check_artifact_compatibility(cfg);
    const std::string run_id = run_id_for("eval", cfg);
    LabeledDataset ds = load_rffd(data_path);
    Model model = load_checkpoint(checkpoint_path);
    if (model.spec.input_len != ds.burst_len)
        throw ValidationError("checkpoint input_len does not match dataset");
    switch (cfg.task.kind) {
        case TaskKind::SEI:
            if (model.spec.n_classes == 0)
                throw ValidationError("SEI evaluation needs a classifier checkpoint");
            break;
        case TaskKind::EDA:
            if (model.spec.n_classes != 0 || is_autoencoder(model.spec.kind))
                throw ValidationError("EDA evaluation needs a headless embedding checkpoint");
            break;
        case TaskKind::RFEC:
            if (!is_autoencoder(model.spec.kind))
                throw ValidationError("RFEC evaluation needs an autoencoder checkpoint");
            break;
    }

    json artifacts = json::array();
    if (cfg.task.kind == TaskKind::EDA) {
        PairDataset pairs = build_pair_dataset(ds, cfg.pair_alpha, cfg.pair_gamma,
                                               derive_seed(cfg.seed, 0x70616972));
        PairSplit split = split_pairs(pairs, cfg.p_v, cfg.p_t, cfg.seed);
        eval_eda(cfg, model, ds, split.test, out_dir, run_id, artifacts);
    } else {
        DatasetSplit split = split_dataset(ds, cfg.p_v, cfg.p_t, cfg.seed);
        if (cfg.task.kind == TaskKind::SEI)
            eval_sei(cfg, model, split.test, out_dir, run_id, artifacts);
        else
            eval_rfec(cfg, model, split.train, split.test, out_dir, run_id, artifacts);
    }

    json extra;
    extra["dataset"] = data_path;
    extra["dataset_hash"] = hex16(hash_file(data_path));
    extra["checkpoint"] = checkpoint_path;
    extra["artifacts"] = artifacts;
    write_manifest(out_dir, run_id, "eval", cfg, extra);
    if (!quiet)
        std::printf("eval done: %zu artifacts in %s (run %s)\n", artifacts.size(), out_dir.c_str(),
                    run_id.c_str());
}

void cmd_sweep_snr(const ExperimentConfig& cfg, const std::string& checkpoint_path,
                   const std::vector<double>& snr_list, const std::string& out_dir, bool quiet) {
    if (snr_list.empty()) throw ValidationError("SNR list is empty");
    ensure_dir(out_dir);
    const std::string run_id = run_id_for("sweep-snr", cfg);
    Model model = load_checkpoint(checkpoint_path);

    // Regenerate the clean evaluation split from the config population.
    LabeledDataset clean = synth_from_config(cfg, /*clean=*/true);
    DatasetSplit split = split_dataset(clean, cfg.p_v, cfg.p_t, cfg.seed);

    std::vector<std::pair<double, double>> rows;
    if (cfg.task.kind == TaskKind::EDA) {
        PairDataset eval_pairs = build_pair_dataset(split.test, cfg.pair_alpha,
                                                    cfg.eval.pair_budget,
                                                    derive_seed(cfg.seed, 0x73776565));
        rows = snr_sweep_eda(model, split.test, eval_pairs, snr_list, cfg.task.distance,
                             derive_seed(cfg.seed, 0x736e7277));
    } else if (cfg.task.kind == TaskKind::SEI) {
        rows = snr_sweep_sei(model, split.test, snr_list, derive_seed(cfg.seed, 0x736e7277));
    } else {
        throw ValidationError("SNR sweep applies to SEI or EDA checkpoints");
    }

    std::vector<std::string> lines;
    LineSeries series{"accuracy", {}, {}};
    for (const auto& [snr, acc] : rows) {
        lines.push_back(fmt_row("%.4f,%.6f", snr, acc));
        series.x.push_back(snr);
        series.y.push_back(acc);
    }
    write_csv(out_dir + "/" + run_id + ".snr_sweep.csv", "snr_db,accuracy", lines);
    svg_lines(out_dir + "/" + run_id + ".snr_sweep.svg", {series}, "Accuracy vs SNR", "SNR (dB)",
              "accuracy");

    json extra;
    extra["checkpoint"] = checkpoint_path;
    extra["artifacts"] = json::array({run_id + ".snr_sweep.csv", run_id + ".snr_sweep.svg"});
    write_manifest(out_dir, run_id, "sweep-snr", cfg, extra);
    if (!quiet)
        for (const auto& [snr, acc] : rows) std::printf("snr %6.1f dB -> accuracy %.4f\n", snr, acc);
}

void cmd_osr(const ExperimentConfig& cfg, const std::vector<int>& heldout_ids,
             const std::vector<double>& proportions, const std::string& out_dir, bool quiet) {
    if (cfg.task.kind != TaskKind::EDA)
        throw ValidationError("the held-out protocol trains an EDA model");
    if (heldout_ids.empty()) throw ValidationError("no held-out emitter ids");
    for (double p : proportions)
        if (!(p > 0.0 && p <= 1.0))
            throw ValidationError("proportions must lie in (0, 1]");
    ensure_dir(out_dir);

    const auto specs = population_of(cfg.data);
    std::set<int> all_ids;
    for (const auto& s : specs) all_ids.insert(s.emitter_id);
    std::vector<int> known_ids;
    for (int id : all_ids)
        if (std::find(heldout_ids.begin(), heldout_ids.end(), id) == heldout_ids.end())
            known_ids.push_back(id);
    for (int h : heldout_ids)
        if (!all_ids.count(h))
            throw ValidationError("held-out emitter " + std::to_string(h) +
                                  " is not in the population");
    if (known_ids.size() < 2) throw ValidationError("need at least 2 known emitters");

    LabeledDataset full = synth_from_config(cfg, /*clean=*/false);

    // Known-only training dataset with dense labels 1..K.
    LabeledDataset known_ds;
    known_ds.V = known_ids.size();
    known_ds.burst_len = full.burst_len;
    std::vector<int> remap(full.V + 1, 0);
    for (std::size_t k = 0; k < known_ids.size(); ++k)
        remap[static_cast<std::size_t>(known_ids[k])] = static_cast<int>(k + 1);
    for (const auto& b : full.bursts) {
        const int lbl = b.label.value_or(0);
        if (remap[static_cast<std::size_t>(lbl)] == 0) continue;
        IQBurst copy = b;
        copy.label = remap[static_cast<std::size_t>(lbl)];
        known_ds.bursts.push_back(std::move(copy));
    }

    // Evaluation set: every held-out burst plus the known test split
    // (original labels).
    DatasetSplit known_split_full = split_dataset(full, cfg.p_v, cfg.p_t, cfg.seed);
    LabeledDataset eval_ds;
    eval_ds.V = full.V;
    eval_ds.burst_len = full.burst_len;
    std::set<int> heldout_set(heldout_ids.begin(), heldout_ids.end());
    for (const auto& b : full.bursts)
        if (heldout_set.count(b.label.value_or(0))) eval_ds.bursts.push_back(b);
    for (const auto& b : known_split_full.test.bursts)
        if (!heldout_set.count(b.label.value_or(0))) eval_ds.bursts.push_back(b);

    json runs = json::array();
    for (double p : proportions) {
        LabeledDataset train_base = subsample_train(known_ds, p, derive_seed(cfg.seed, 0x6f737270));
        PairDataset pairs = build_pair_dataset(train_base, cfg.pair_alpha, cfg.pair_gamma,
                                               derive_seed(cfg.seed, 0x70616972));
        PairSplit pair_split = split_pairs(pairs, cfg.p_v, cfg.p_t, cfg.seed);
        TaskData data;
        data.pair_train = &pair_split.train;
        data.pair_valid = &pair_split.valid;
        data.pair_source = &train_base;

        TrainConfig tc;
        tc.learning_rate = cfg.task.learning_rate;
        tc.epochs = cfg.task.epochs;
        tc.batch_size = cfg.task.batch_size;
        tc.weight_decay = cfg.task.weight_decay;
        tc.seed = cfg.seed;
        tc.verbose = !quiet;

        ModelSpec mspec = cfg.model;
        mspec.n_classes = 0;
        Model model = build_model(mspec, cfg.seed);
        TrainResult result = train_single_task(cfg.task, data, std::move(model), tc);

        OsrHeldoutReport rep =
            osr_heldout_eval(result.model, eval_ds, known_ids, heldout_ids, cfg.eval.pair_budget,
                             cfg.task.distance, derive_seed(cfg.seed, 0x6f737265));

        char pdir[64];
        std::snprintf(pdir, sizeof(pdir), "%s/p_%.4g", out_dir.c_str(), p);
        ensure_dir(pdir);
        const std::string prefix = std::string(pdir) + "/heldout";

        save_checkpoint(result.model, prefix + ".checkpoint.json", config_echo(cfg), cfg.seed);
        save_history_csv(result.history, prefix + ".history.csv");
        write_csv(prefix + ".metrics.csv", "auc,best_accuracy,best_threshold",
                  {fmt_row("%.6f,%.6f,%.8g", rep.pairs.auc, rep.pairs.best_accuracy,
                           rep.pairs.best_threshold)});
        {
            std::vector<std::string> rows;
            for (double d : rep.pairs.matched) rows.push_back(fmt_row("%.8g,1", d));
            for (double d : rep.pairs.unmatched) rows.push_back(fmt_row("%.8g,0", d));
            write_csv(prefix + ".distances.csv", "distance,matched", rows);
            svg_histogram_pair(prefix + ".distances.svg", rep.pairs.matched, "matched",
                               rep.pairs.unmatched, "unmatched",
                               "Held-out pair distance distributions");
        }
        {
            std::vector<std::string> rows;
            LineSeries series{"silhouette", {}, {}};
            for (const auto& [k, s] : rep.silhouette_by_k) {
                rows.push_back(fmt_row("%zu,%.6f", k, s));
                series.x.push_back(static_cast<double>(k));
                series.y.push_back(s);
            }
            write_csv(prefix + ".silhouette.csv", "k,silhouette", rows);
            if (!series.x.empty())
                svg_lines(prefix + ".silhouette.svg", {series}, "Held-out silhouette vs K", "K",
                          "mean silhouette");
        }
        {
            std::vector<std::string> rows;
            for (std::size_t i = 0; i < rep.pca.projected.dim(0); ++i)
                rows.push_back(fmt_row("%.8g,%.8g,%d", rep.pca.projected.at2(i, 0),
                                       rep.pca.projected.at2(i, 1), rep.heldout_labels[i]));
            write_csv(prefix + ".embeddings.csv", "pc1,pc2,label", rows);
            svg_scatter(prefix + ".embeddings.svg", rep.pca.projected, rep.heldout_labels,
                        "Held-out embeddings (PCA)");
        }
        json run;
        run["proportion"] = p;
        run["auc"] = rep.pairs.auc;
        run["best_accuracy"] = rep.pairs.best_accuracy;
        run["best_epoch"] = result.history.best_epoch;
        runs.push_back(run);
        if (!quiet)
            std::printf("osr p=%.4g: auc %.4f accuracy %.4f\n", p, rep.pairs.auc,
                        rep.pairs.best_accuracy);
    }

    const std::string run_id = run_id_for("osr", cfg);
    json extra;
    extra["heldout_ids"] = heldout_ids;
    extra["known_ids"] = known_ids;
    extra["runs"] = runs;
    write_manifest(out_dir, run_id, "osr", cfg, extra);
}

}  // namespace rffkit
