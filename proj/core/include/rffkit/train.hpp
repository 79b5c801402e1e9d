#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rffkit/losses.hpp"
#include "rffkit/model.hpp"
#include "rffkit/pairs.hpp"
#include "rffkit/signal.hpp"

namespace rffkit {

struct TrainConfig {
    double learning_rate = 1e-3;
    std::size_t epochs = 200;
    std::size_t batch_size = 512;
    double weight_decay = 0.0005;
    std::uint64_t seed = 0;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    bool verbose = true;  // one progress line per epoch
};

struct EpochStats {
    double train_loss = 0.0;
    double valid_loss = 0.0;
    double seconds = 0.0;
};

struct TrainHistory {
    std::vector<EpochStats> epochs;
    std::size_t best_epoch = 0;  // 1-based, first argmin of validation loss
};

// First argmin, 1-based.
std::size_t pick_best_epoch(const std::vector<double>& valid_losses);

// Mini-batch index ranges covering [0, n): ceil(n / b) batches, except that a
// trailing batch of one sample is merged into the previous batch (batchnorm
// needs >= 2 samples in train mode).
std::vector<std::pair<std::size_t, std::size_t>> batch_ranges(std::size_t n, std::size_t b);

// Adam with bias correction and coupled L2 weight decay (g += wd * p before
// the moment update). Gradients are zeroed after the step.
struct AdamOptimizer {
    double lr;
    double beta1;
    double beta2;
    double eps;
    double weight_decay;
    std::size_t step_count = 0;

    void step(const std::vector<Parameter*>& params);
};

std::vector<Parameter*> collect_parameters(Model& model);

// Data a task trains on. SEI and RFEC use the burst splits; EDA uses pair
// splits over a shared source dataset.
struct TaskData {
    const LabeledDataset* train = nullptr;
    const LabeledDataset* valid = nullptr;
    const PairDataset* pair_train = nullptr;
    const PairDataset* pair_valid = nullptr;
    const LabeledDataset* pair_source = nullptr;
};

struct TrainResult {
    Model model;  // parameters and running stats from the best epoch
    TrainHistory history;
};

// Gathers bursts into a model-shaped batch: B x 2 x L for conv-input models,
// interleaved B x 2L otherwise.
Tensor bursts_to_batch(const LabeledDataset& ds, const std::vector<std::size_t>& indices,
                       const ModelSpec& spec);

// Mini-batch single-task training: per epoch, shuffle the training set,
// iterate ceil(n/b) batches, Adam step each; evaluate validation loss in eval
// mode; return the parameter snapshot from the best epoch.
TrainResult train_single_task(const TaskSpec& task, const TaskData& data, Model model,
                              const TrainConfig& config);

struct JointResult {
    std::vector<Model> per_task;  // shared fingerprint, task-specific head
    TrainHistory history;
};

// Joint optimization of a shared fingerprint head: each step draws one
// mini-batch per task, accumulates the alpha-weighted gradients, and applies
// a single Adam step. Early stopping on the alpha-weighted validation loss.
// models[0].fingerprint is the shared theta; every model must agree on the
// embedding dimension. Tasks with alpha = 0 are skipped entirely.
JointResult train_joint(const std::vector<TaskSpec>& tasks, const std::vector<TaskData>& data,
                        std::vector<Model> models, const std::vector<double>& alpha,
                        const TrainConfig& config);

// Independent per-task training with seeds derived from the task kind, so
// results do not depend on task ordering. With report_and_skip, a failing
// task is recorded and the remaining tasks still run.
struct IndependentResult {
    std::vector<std::optional<TrainResult>> results;
    std::vector<std::string> errors;  // empty string = task succeeded
};
IndependentResult train_independent(const std::vector<TaskSpec>& tasks,
                                    const std::vector<TaskData>& data,
                                    const std::vector<ModelSpec>& specs,
                                    const TrainConfig& config, bool report_and_skip = false);

// Elementwise mean of parameter sets (and running statistics) across models
// with identical specs.
Model aggregate_params(const std::vector<Model>& models);

// Label-stratified uniform subset of round(p * n_k) bursts per class.
LabeledDataset subsample_train(const LabeledDataset& ds, double p, std::uint64_t seed);

// Sample-weighted mean task loss over a dataset in eval mode.
double evaluate_loss(const TaskSpec& task, const TaskData& data, Model& model);

void save_history_csv(const TrainHistory& history, const std::string& path);

}  // namespace rffkit
