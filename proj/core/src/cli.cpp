#include "rffkit/cli.hpp"

#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "rffkit/common.hpp"
#include "rffkit/experiment.hpp"

namespace rffkit {

namespace {

ExperimentConfig config_for(const std::string& config_path, std::uint64_t seed_override,
                            bool seed_given) {
    ExperimentConfig cfg =
        config_path.empty() ? parse_config("{}") : load_config(config_path);
    if (seed_given) cfg.seed = seed_override;
    return cfg;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"rffkit: synthetic RF fingerprinting experiments "
                 "(SEI / EDA / RFEC / open-set evaluation)"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    std::uint64_t seed_override = 0;
    bool quiet = false;
    std::string out = ".";
    app.add_option("--config", config_path, "experiment config JSON");
    auto* seed_opt = app.add_option("--seed", seed_override, "override the config seed");
    app.add_flag("--quiet", quiet, "suppress progress output");
    app.add_option("--out", out, "output file or directory");

    auto* synth = app.add_subcommand("synth", "generate a labeled RFFD dataset");
    auto* pairs = app.add_subcommand("pairs", "build an EDA pair dataset from an RFFD file");
    auto* train = app.add_subcommand("train", "train a task model on an RFFD file");
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint and emit reports");
    auto* sweep = app.add_subcommand("sweep-snr", "accuracy vs SNR for a frozen checkpoint");
    auto* osr = app.add_subcommand("osr", "held-out emitter (open-set) EDA evaluation");

    std::string data_path, checkpoint_path, pair_file;
    std::vector<double> snr_list, proportions{1.0};
    std::vector<int> heldout_ids;
    double alpha = -1.0;
    long long gamma = -1;
    double proportion = -1.0;
    std::vector<std::string> artifacts;
    std::string k_range;

    pairs->add_option("--data", data_path, "RFFD dataset path")->required();
    pairs->add_option("--alpha", alpha, "matched-pair proportion");
    pairs->add_option("--gamma", gamma, "total pair count");

    train->add_option("--data", data_path, "RFFD dataset path")->required();
    train->add_option("--pairs", pair_file, "existing pair file (EDA)");
    train->add_option("--alpha", alpha, "matched-pair proportion (EDA)");
    train->add_option("--gamma", gamma, "total pair count (EDA)");
    train->add_option("--proportion", proportion, "training-data proportion");

    eval_cmd->add_option("--checkpoint", checkpoint_path, "checkpoint path")->required();
    eval_cmd->add_option("--data", data_path, "RFFD dataset path")->required();
    eval_cmd->add_option("--artifacts", artifacts, "artifact subset to emit")->delimiter(',');
    eval_cmd->add_option("--k", k_range, "silhouette K range, e.g. 2..9");

    sweep->add_option("--checkpoint", checkpoint_path, "checkpoint path")->required();
    sweep->add_option("--snr", snr_list, "SNR list in dB")->delimiter(',')->required();

    osr->add_option("--heldout", heldout_ids, "held-out emitter ids")->delimiter(',')->required();
    osr->add_option("--proportions", proportions, "training proportions")->delimiter(',');
    osr->add_option("--alpha", alpha, "matched-pair proportion (EDA)");
    osr->add_option("--gamma", gamma, "total pair count (EDA)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        ExperimentConfig cfg = config_for(config_path, seed_override, !seed_opt->empty());
        if (alpha > 0.0) cfg.pair_alpha = alpha;
        if (gamma > 0) cfg.pair_gamma = static_cast<std::size_t>(gamma);
        if (proportion > 0.0) cfg.proportion = proportion;
        if (!artifacts.empty()) cfg.eval.artifacts = artifacts;
        if (!k_range.empty()) {
            const auto dots = k_range.find("..");
            if (dots == std::string::npos)
                throw ValidationError("K range must look like 2..9");
            cfg.eval.k_min = std::stoul(k_range.substr(0, dots));
            cfg.eval.k_max = std::stoul(k_range.substr(dots + 2));
        }

        if (synth->parsed()) {
            cmd_synth(cfg, out == "." ? "dataset.rffd" : out, quiet);
        } else if (pairs->parsed()) {
            cmd_pairs(cfg, data_path, out == "." ? "pairs.json" : out, quiet);
        } else if (train->parsed()) {
            cmd_train(cfg, data_path, out, pair_file, quiet);
        } else if (eval_cmd->parsed()) {
            cmd_eval(cfg, checkpoint_path, data_path, out, quiet);
        } else if (sweep->parsed()) {
            cmd_sweep_snr(cfg, checkpoint_path, snr_list, out, quiet);
        } else if (osr->parsed()) {
            cmd_osr(cfg, heldout_ids, proportions, out, quiet);
        }
        return 0;
    } catch (const ValidationError& e) {
        std::fprintf(stderr, "validation error: %s\n", e.what());
        return 2;
    } catch (const DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 3;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "numeric error: %s\n", e.what());
        return 4;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}

}  // namespace rffkit
