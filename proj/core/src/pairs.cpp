#include "rffkit/pairs.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"

#include "rffkit/common.hpp"
#include "rffkit/rng.hpp"

namespace rffkit {

using nlohmann::json;

std::size_t PairCountPlan::matched_total() const {
    std::size_t n = 0;
    for (std::size_t i = 0; i < V; ++i) n += counts[i][i];
    return n;
}

std::size_t PairCountPlan::unmatched_total() const {
    std::size_t n = 0;
    for (std::size_t i = 0; i < V; ++i)
        for (std::size_t j = i + 1; j < V; ++j) n += counts[i][j];
    return n;
}

int pair_label(int y_i, int y_j) { return y_i == y_j ? 1 : 0; }

double matched_ratio(std::size_t V) {
    if (V < 2) throw ValidationError("matched_ratio needs V >= 2");
    return 2.0 / static_cast<double>(V - 1);
}

// Floor the real targets, then hand out the remaining count one-by-one in
// descending fractional-part order, ties broken by position.
std::vector<std::size_t> apportion(const std::vector<double>& targets, std::size_t total) {
    std::vector<std::size_t> counts(targets.size(), 0);
    std::vector<double> fracs(targets.size());
    std::size_t assigned = 0;
    for (std::size_t c = 0; c < targets.size(); ++c) {
        if (targets[c] < 0.0) throw ValidationError("negative apportionment target");
        const double fl = std::floor(targets[c]);
        counts[c] = static_cast<std::size_t>(fl);
        assigned += counts[c];
        fracs[c] = targets[c] - fl;
    }
    if (assigned > total) throw NumericError("apportionment overflow");
    std::vector<std::size_t> order(targets.size());
    for (std::size_t c = 0; c < order.size(); ++c) order[c] = c;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return fracs[a] > fracs[b]; });
    std::size_t remainder = total - assigned;
    for (std::size_t k = 0; remainder > 0; ++k, --remainder) counts[order[k % order.size()]] += 1;
    return counts;
}

PairCountPlan plan_counts(std::size_t V, double alpha, std::size_t gamma) {
    if (V < 2) throw ValidationError("plan_counts needs V >= 2");
    if (!(alpha > 0.0 && alpha <= 1.0)) throw ValidationError("alpha must be in (0, 1]");
    if (gamma == 0) throw ValidationError("gamma must be positive");

    PairCountPlan plan;
    plan.V = V;
    plan.alpha = alpha;
    plan.gamma = gamma;
    plan.counts.assign(V, std::vector<std::size_t>(V, 0));

    const double g = static_cast<double>(gamma);
    const double n = static_cast<double>(V);
    const double diag_target = alpha * g / n;
    const double off_target = 2.0 * (1.0 - alpha) * g / (n * (n - 1.0));

    // Unordered cells in (i, j) lexicographic order; apportion() breaks
    // fractional ties by this order.
    std::vector<std::pair<std::size_t, std::size_t>> cells;
    std::vector<double> targets;
    for (std::size_t i = 0; i < V; ++i)
        for (std::size_t j = i; j < V; ++j) {
            cells.emplace_back(i, j);
            targets.push_back(i == j ? diag_target : off_target);
        }
    const auto counts = apportion(targets, gamma);
    for (std::size_t c = 0; c < cells.size(); ++c)
        plan.counts[cells[c].first][cells[c].second] = counts[c];
    return plan;
}

PairDataset build_pair_dataset(const LabeledDataset& ds, double alpha, std::size_t gamma,
                               std::uint64_t seed) {
    const PairCountPlan plan = plan_counts(ds.V, alpha, gamma);

    std::vector<std::vector<std::size_t>> by_class(ds.V);
    for (std::size_t i = 0; i < ds.bursts.size(); ++i) {
        const int lbl = ds.bursts[i].label.value_or(0);
        if (lbl < 1 || static_cast<std::size_t>(lbl) > ds.V)
            throw DataError("burst label out of range");
        by_class[static_cast<std::size_t>(lbl - 1)].push_back(i);
    }
    for (std::size_t c = 0; c < ds.V; ++c) {
        if (by_class[c].empty()) throw DataError("class " + std::to_string(c + 1) + " is empty");
        if (plan.counts[c][c] > 0 && by_class[c].size() < 2)
            throw DataError("class " + std::to_string(c + 1) +
                            " needs >= 2 bursts for matched pairs");
    }

    PairDataset out;
    out.alpha = alpha;
    out.gamma = gamma;
    out.seed = seed;
    out.entries.reserve(gamma);
    for (std::size_t i = 0; i < ds.V; ++i) {
        for (std::size_t j = i; j < ds.V; ++j) {
            const std::size_t quota = plan.counts[i][j];
            if (quota == 0) continue;
            Rng rng(derive_seed(seed, 0x70616972 + i, j));
            const auto& ci = by_class[i];
            const auto& cj = by_class[j];
            for (std::size_t v = 0; v < quota; ++v) {
                const std::size_t i1 = ci[rng.uniform_index(ci.size())];
                std::size_t i2 = cj[rng.uniform_index(cj.size())];
                while (i2 == i1) i2 = cj[rng.uniform_index(cj.size())];
                out.entries.push_back({i1, i2,
                                       pair_label(ds.bursts[i1].label.value(),
                                                  ds.bursts[i2].label.value())});
            }
        }
    }
    return out;
}

PairSplit split_pairs(const PairDataset& pd, double p_v, double p_t, std::uint64_t seed) {
    if (p_v <= 0.0) throw ValidationError("validation fraction must be > 0");
    if (p_t < 0.0 || p_v + p_t >= 1.0) throw ValidationError("invalid pair split fractions");
    if (pd.entries.empty()) throw ValidationError("empty pair dataset");

    PairSplit out;
    for (auto* part : {&out.train, &out.valid, &out.test}) {
        part->source_id = pd.source_id;
        part->alpha = pd.alpha;
        part->gamma = pd.gamma;
        part->seed = pd.seed;
    }
    for (int cls = 0; cls <= 1; ++cls) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < pd.entries.size(); ++i)
            if (pd.entries[i].y == cls) idx.push_back(i);
        if (idx.empty()) continue;
        Rng rng(derive_seed(seed, 0x7073706c, static_cast<std::uint64_t>(cls)));
        rng.shuffle(idx);
        const auto n = static_cast<double>(idx.size());
        const auto n_v = static_cast<std::size_t>(std::llround(p_v * n));
        const auto n_t = static_cast<std::size_t>(std::llround(p_t * n));
        if (n_v + n_t >= idx.size()) throw ValidationError("pair split leaves no training pairs");
        for (std::size_t k = 0; k < idx.size(); ++k) {
            const auto& e = pd.entries[idx[k]];
            if (k < n_v)
                out.valid.entries.push_back(e);
            else if (k < n_v + n_t)
                out.test.entries.push_back(e);
            else
                out.train.entries.push_back(e);
        }
    }
    return out;
}

void save_pairs(const PairDataset& pd, const std::string& path) {
    json j;
    j["source"] = pd.source_id;
    j["alpha"] = pd.alpha;
    j["gamma"] = pd.gamma;
    j["seed"] = pd.seed;
    json entries = json::array();
    for (const auto& e : pd.entries) entries.push_back(json::array({e.i1, e.i2, e.y}));
    j["entries"] = std::move(entries);
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw DataError("cannot open " + path + " for writing");
    f << j.dump() << "\n";
    if (!f) throw DataError("write failure on " + path);
}

PairDataset load_pairs(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw DataError("cannot open " + path);
    json j;
    try {
        f >> j;
        PairDataset pd;
        pd.source_id = j.at("source").get<std::string>();
        pd.alpha = j.at("alpha").get<double>();
        pd.gamma = j.at("gamma").get<std::size_t>();
        pd.seed = j.at("seed").get<std::uint64_t>();
        for (const auto& e : j.at("entries")) {
            if (!e.is_array() || e.size() != 3) throw DataError("malformed pair entry");
            pd.entries.push_back({e[0].get<std::size_t>(), e[1].get<std::size_t>(),
                                  e[2].get<int>()});
        }
        return pd;
    } catch (const json::exception& ex) {
        throw DataError("malformed pair file " + path + ": " + ex.what());
    }
}

}  // namespace rffkit
