#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rffkit/signal.hpp"

namespace rffkit {

// Integer pair quota per unordered class cell (i <= j), summing to gamma.
struct PairCountPlan {
    std::size_t V = 0;
    double alpha = 0.0;
    std::size_t gamma = 0;
    // counts[i][j] valid for i <= j, 0-based class indices.
    std::vector<std::vector<std::size_t>> counts;

    std::size_t matched_total() const;
    std::size_t unmatched_total() const;
};

// An EDA pair dataset: index views into a source LabeledDataset.
struct PairEntry {
    std::size_t i1 = 0;
    std::size_t i2 = 0;
    int y = 0;  // 1 = match
};

struct PairDataset {
    std::vector<PairEntry> entries;
    std::string source_id;  // hash of the source dataset, when known
    double alpha = 0.0;
    std::size_t gamma = 0;
    std::uint64_t seed = 0;
};

// Match indicator: 1 iff the labels agree.
int pair_label(int y_i, int y_j);

// Integer apportionment of `total` over real-valued targets: floor plus
// largest-remainder distribution, ties broken by position. Sums to `total`.
std::vector<std::size_t> apportion(const std::vector<double>& targets, std::size_t total);

// Natural matched:unmatched class-pairing ratio 2 / (V - 1).
double matched_ratio(std::size_t V);

// Real-valued quotas alpha*gamma/V per diagonal cell and
// 2*(1-alpha)*gamma/(V*(V-1)) per unordered off-diagonal cell, floored, with
// the remainder distributed one-by-one in descending fractional-part order
// (ties by (i, j) lexicographic). Totals sum to gamma exactly.
PairCountPlan plan_counts(std::size_t V, double alpha, std::size_t gamma);

// Draws the planned number of pairs per cell: first element from class i,
// second from class j excluding the first burst. Sampling is with
// replacement across pairs, never within a pair. Deterministic given seed.
PairDataset build_pair_dataset(const LabeledDataset& ds, double alpha, std::size_t gamma,
                               std::uint64_t seed);

// Label-stratified split of a pair dataset (stratified over y).
struct PairSplit {
    PairDataset train;
    PairDataset valid;
    PairDataset test;
};
PairSplit split_pairs(const PairDataset& pd, double p_v, double p_t, std::uint64_t seed);

// JSON persistence; entries stored as [i1, i2, y] triples.
void save_pairs(const PairDataset& pd, const std::string& path);
PairDataset load_pairs(const std::string& path);

}  // namespace rffkit
