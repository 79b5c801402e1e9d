#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rffkit/eval.hpp"
#include "rffkit/losses.hpp"
#include "rffkit/model.hpp"
#include "rffkit/signal.hpp"
#include "rffkit/train.hpp"

namespace rffkit {

struct DataConfig {
    std::string preset;              // population preset name, or
    std::vector<EmitterSpec> specs;  // explicit emitter specs
    double snr_db = 20.0;
    std::size_t bursts_per_emitter = 400;
    std::size_t burst_len = 256;
    std::size_t oversample = 4;
};

struct EvalConfig {
    std::vector<std::string> artifacts;  // empty = all artifacts for the task kind
    std::size_t k_min = 2;
    std::size_t k_max = 9;
    std::vector<double> snr_list = {0.0, 5.0, 10.0, 15.0, 20.0};
    std::vector<double> msp_thresholds = {0.5, 0.6, 0.7, 0.8, 0.9, 0.95};
    std::size_t pair_budget = 4000;  // evaluation pairs (sweeps, OSR)
};

// One experiment: population + task + model + training + evaluation choices.
// Parsed strictly from JSON; unknown keys are rejected and defaults are
// echoed back into the run manifest.
struct ExperimentConfig {
    std::uint64_t seed = 1;
    DataConfig data;
    TaskSpec task;
    double pair_alpha = 0.5;       // EDA pair sampling
    std::size_t pair_gamma = 20000;
    ModelSpec model;
    double p_v = 0.1;
    double p_t = 0.1;
    double proportion = 1.0;  // training-data proportion
    EvalConfig eval;
};

ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);

// Canonical JSON echo with all defaults filled; hashing this defines the run id.
std::string config_echo(const ExperimentConfig& cfg);

// Shipped emitter populations.
std::vector<std::string> population_preset_names();
std::vector<EmitterSpec> population_preset(const std::string& name);
std::vector<EmitterSpec> population_of(const DataConfig& data);

// FNV-1a 64-bit content hashes used in manifests and run ids.
std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t basis = 0xcbf29ce484222325ULL);
std::uint64_t hash_file(const std::string& path);
std::string hex16(std::uint64_t v);

// Deterministic run id: hash of (command, canonical config echo).
std::string run_id_for(const std::string& command, const ExperimentConfig& cfg);

// Subcommand bodies. Paths are created as needed; every artifact written is
// recorded in the run manifest. Throws Validation/Data/NumericError.
void cmd_synth(const ExperimentConfig& cfg, const std::string& out_path, bool quiet);
void cmd_pairs(const ExperimentConfig& cfg, const std::string& data_path,
               const std::string& out_path, bool quiet);
void cmd_train(const ExperimentConfig& cfg, const std::string& data_path,
               const std::string& out_dir, const std::string& pair_file, bool quiet);
void cmd_eval(const ExperimentConfig& cfg, const std::string& checkpoint_path,
              const std::string& data_path, const std::string& out_dir, bool quiet);
void cmd_sweep_snr(const ExperimentConfig& cfg, const std::string& checkpoint_path,
                   const std::vector<double>& snr_list, const std::string& out_dir, bool quiet);
void cmd_osr(const ExperimentConfig& cfg, const std::vector<int>& heldout_ids,
             const std::vector<double>& proportions, const std::string& out_dir, bool quiet);

}  // namespace rffkit
