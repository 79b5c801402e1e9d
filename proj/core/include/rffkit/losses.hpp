#pragma once

#include <string>
#include <vector>

#include "rffkit/tensor.hpp"

namespace rffkit {

enum class TaskKind { SEI, EDA, RFEC };

std::string task_kind_name(TaskKind k);
TaskKind task_kind_from_name(const std::string& name);

enum class DistanceMetric { euclidean, cosine };

// Per-task hyperparameters. Loss identity follows the kind: cross-entropy
// for SEI, contrastive for EDA, mean-squared error for RFEC.
struct TaskSpec {
    TaskKind kind = TaskKind::SEI;
    double margin = 1.0;  // EDA hinge margin
    DistanceMetric distance = DistanceMetric::euclidean;
    double learning_rate = 1e-3;
    std::size_t epochs = 200;
    std::size_t batch_size = 512;  // defaults 512 / 128 / 128 for SEI / EDA / RFEC
    double weight_decay = 0.0005;
    double alpha_weight = 1.0;  // multi-task weight
};

TaskSpec default_task_spec(TaskKind kind);

// A mini-batch of EDA pairs. y = 1 means match.
struct PairBatch {
    Tensor x1;
    Tensor x2;
    std::vector<int> y;
};

struct LossResult {
    double value = 0.0;
    Tensor grad;  // d loss / d first argument
};

struct PairLossResult {
    double value = 0.0;
    Tensor grad1;
    Tensor grad2;
};

// Mean over the batch of -log softmax(logits)[label]; labels in {1..V}.
// Gradient is (softmax - onehot) / B.
LossResult loss_cross_entropy(const Tensor& logits, const std::vector<int>& labels);

// Mean over pairs of y*d^2 + (1-y)*max(0, m - d^2) with d = ||z1 - z2||_2:
// matched pairs are attracted, unmatched pairs repelled up to the margin.
// Subgradient 0 at the hinge kink.
PairLossResult loss_contrastive(const Tensor& z1, const Tensor& z2, const std::vector<int>& y,
                                double margin);

// Mean over the batch of the squared L2 error (sum over feature dims).
LossResult loss_mse(const Tensor& x_hat, const Tensor& x);

double eda_distance(const std::vector<double>& z1, const std::vector<double>& z2,
                    DistanceMetric metric);

// Per-pair distances between rows of two B x d embeddings.
std::vector<double> pair_distances(const Tensor& z1, const Tensor& z2, DistanceMetric metric);

// 1 (match) iff distance < threshold, strictly.
int eda_predict(double distance, double threshold);

// Open-set score from maximum softmax probability: 0 = known (max prob >=
// threshold), 1 = unknown.
int osr_score_msp(const std::vector<double>& logits, double threshold);

}  // namespace rffkit
