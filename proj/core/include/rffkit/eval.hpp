#pragma once

#include <cstdint>
#include <vector>

#include "rffkit/losses.hpp"
#include "rffkit/model.hpp"
#include "rffkit/pairs.hpp"
#include "rffkit/signal.hpp"

namespace rffkit {

struct MetricsReport {
    double accuracy = 0.0;
    double macro_precision = 0.0;
    double macro_recall = 0.0;
    double macro_f1 = 0.0;
    std::vector<std::vector<std::size_t>> confusion;  // rows = truth, cols = prediction
    std::vector<int> absent_classes;                  // classes with no true samples
};

// Macro-averaged precision/recall/F1 over classes 1..V. Classes absent from
// the truth contribute zero and are flagged.
MetricsReport classification_metrics(const std::vector<int>& preds, const std::vector<int>& labels,
                                     std::size_t V);

struct KMeansResult {
    std::vector<std::size_t> assignments;
    Tensor centers;  // K x d
    double inertia = 0.0;
};

// Lloyd's algorithm with k-means++ seeding; `restarts` seeded runs keep the
// lowest inertia. Empty clusters are repaired by stealing the point farthest
// from its center.
KMeansResult kmeans(const Tensor& points, std::size_t k, std::uint64_t seed,
                    std::size_t max_iter = 100, std::size_t restarts = 4);

// Single seeded run reporting the inertia after every Lloyd iteration
// (non-increasing while no empty-cluster repair fires).
std::vector<double> kmeans_inertia_trace(const Tensor& points, std::size_t k, std::uint64_t seed,
                                         std::size_t max_iter = 100);

struct SilhouetteResult {
    double mean = 0.0;
    std::vector<double> per_point;
};

// Rousseeuw silhouette: s_i = (b_i - a_i) / max(a_i, b_i); singleton clusters
// and all-coincident points score 0.
SilhouetteResult silhouette(const Tensor& points, const std::vector<std::size_t>& assignments);

struct PcaResult {
    Tensor projected;                        // n x out_dim
    std::vector<std::vector<double>> axes;   // principal directions, descending
    std::vector<double> eigenvalues;
    bool rank_deficient = false;
};

// Mean-centered projection onto the top principal directions, eigenvalues
// descending, sign fixed so each direction's largest-magnitude coordinate is
// positive. Rank below out_dim pads with zero components and sets the flag.
PcaResult pca_project(const Tensor& points, std::size_t out_dim = 2);

// Probability that a random unmatched distance exceeds a random matched one
// (rank statistic, ties count half).
double auc_from_distances(const std::vector<double>& matched, const std::vector<double>& unmatched);

struct ThresholdSweep {
    double best_threshold = 0.0;
    double best_accuracy = 0.0;
    std::vector<std::pair<double, double>> curve;  // (threshold, accuracy)
};

// Exhaustive sweep over thresholds between consecutive distance values;
// predicts match iff distance < threshold.
ThresholdSweep threshold_sweep(const std::vector<double>& matched,
                               const std::vector<double>& unmatched);

struct PairEvalReport {
    std::vector<double> matched;
    std::vector<double> unmatched;
    double auc = 0.0;
    double best_threshold = 0.0;
    double best_accuracy = 0.0;
    std::vector<std::pair<double, double>> sweep;
};

// Embeds every pair in eval mode and splits the distances by label.
PairEvalReport pair_distance_report(Model& model, const PairDataset& pairs,
                                    const LabeledDataset& source, DistanceMetric metric);

// Eval-mode embeddings of the listed bursts (all bursts when empty).
Tensor embed_dataset(Model& model, const LabeledDataset& ds,
                     const std::vector<std::size_t>& indices = {});

// Argmax class predictions for a classifier model.
std::vector<int> predict_classes(Model& model, const LabeledDataset& ds);

// Fixed model evaluated against regenerated noise at each SNR; returns
// (snr_db, accuracy) rows. SEI accuracy is classification accuracy; EDA
// accuracy is best-threshold pair accuracy.
std::vector<std::pair<double, double>> snr_sweep_sei(Model& model, const LabeledDataset& clean_eval,
                                                     const std::vector<double>& snr_list,
                                                     std::uint64_t noise_seed);
std::vector<std::pair<double, double>> snr_sweep_eda(Model& model, const LabeledDataset& clean_eval,
                                                     const PairDataset& eval_pairs,
                                                     const std::vector<double>& snr_list,
                                                     DistanceMetric metric,
                                                     std::uint64_t noise_seed);

// Pair set for held-out evaluation: every pair touches a held-out emitter.
// Matched pairs come from held-out diagonal cells, unmatched from held-out
// vs known (or held-out vs held-out) cells; quotas apportioned like
// plan_counts. The pair budget gamma is met exactly.
PairDataset build_heldout_pairs(const LabeledDataset& ds, const std::vector<int>& known_ids,
                                const std::vector<int>& heldout_ids, double alpha,
                                std::size_t gamma, std::uint64_t seed);

struct OsrHeldoutReport {
    PairEvalReport pairs;
    Tensor heldout_embeddings;            // held-out bursts only
    std::vector<int> heldout_labels;
    PcaResult pca;                        // of the held-out embeddings
    std::vector<std::pair<std::size_t, double>> silhouette_by_k;  // K = 2..9
};

// Frozen-model open-set evaluation per the held-out protocol: embeds the
// held-out emitters, reports pair distance distributions / AUC / best
// accuracy against the knowns, PCA projection, and silhouette over K.
OsrHeldoutReport osr_heldout_eval(Model& model, const LabeledDataset& ds,
                                  const std::vector<int>& known_ids,
                                  const std::vector<int>& heldout_ids, std::size_t pair_budget,
                                  DistanceMetric metric, std::uint64_t seed);

struct OsrMspRow {
    double threshold = 0.0;
    double flagged_unknown = 0.0;  // fraction scored unknown
    double known_accuracy = 0.0;   // accuracy over samples scored known
};

// MSP open-set table for a classifier across a threshold grid.
std::vector<OsrMspRow> osr_msp_table(Model& model, const LabeledDataset& test,
                                     const std::vector<double>& thresholds);

}  // namespace rffkit
