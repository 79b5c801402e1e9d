#include "rffkit/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "rffkit/common.hpp"
#include "rffkit/rng.hpp"
#include "rffkit/train.hpp"

namespace rffkit {

MetricsReport classification_metrics(const std::vector<int>& preds, const std::vector<int>& labels,
                                     std::size_t V) {
    if (preds.empty() || preds.size() != labels.size())
        throw ValidationError("metrics need equal-length, nonempty predictions and labels");
    MetricsReport r;
    r.confusion.assign(V, std::vector<std::size_t>(V, 0));
    std::size_t correct = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const int t = labels[i], p = preds[i];
        if (t < 1 || static_cast<std::size_t>(t) > V || p < 1 || static_cast<std::size_t>(p) > V)
            throw ValidationError("class label out of range 1..V");
        r.confusion[static_cast<std::size_t>(t - 1)][static_cast<std::size_t>(p - 1)] += 1;
        if (t == p) ++correct;
    }
    r.accuracy = static_cast<double>(correct) / static_cast<double>(preds.size());

    double prec_sum = 0.0, rec_sum = 0.0, f1_sum = 0.0;
    for (std::size_t c = 0; c < V; ++c) {
        std::size_t tp = r.confusion[c][c], row = 0, col = 0;
        for (std::size_t k = 0; k < V; ++k) {
            row += r.confusion[c][k];
            col += r.confusion[k][c];
        }
        if (row == 0) r.absent_classes.push_back(static_cast<int>(c + 1));
        const double prec = col > 0 ? static_cast<double>(tp) / static_cast<double>(col) : 0.0;
        const double rec = row > 0 ? static_cast<double>(tp) / static_cast<double>(row) : 0.0;
        const double f1 = prec + rec > 0.0 ? 2.0 * prec * rec / (prec + rec) : 0.0;
        prec_sum += prec;
        rec_sum += rec;
        f1_sum += f1;
    }
    r.macro_precision = prec_sum / static_cast<double>(V);
    r.macro_recall = rec_sum / static_cast<double>(V);
    r.macro_f1 = f1_sum / static_cast<double>(V);
    return r;
}

namespace {

double sq_dist(const double* a, const double* b, std::size_t d) {
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        const double diff = a[i] - b[i];
        s += diff * diff;
    }
    return s;
}

KMeansResult kmeans_once(const Tensor& points, std::size_t k, std::uint64_t seed,
                         std::size_t max_iter, std::vector<double>* inertia_trace = nullptr) {
    const std::size_t n = points.dim(0);
    const std::size_t d = points.dim(1);
    Rng rng(seed);

    // k-means++ seeding.
    Tensor centers = Tensor::zeros({k, d});
    std::vector<double> min_d2(n, std::numeric_limits<double>::infinity());
    std::size_t first = static_cast<std::size_t>(rng.uniform_index(n));
    for (std::size_t j = 0; j < d; ++j) centers.at2(0, j) = points.at2(first, j);
    for (std::size_t c = 1; c < k; ++c) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double d2 =
                sq_dist(points.data.data() + i * d, centers.data.data() + (c - 1) * d, d);
            min_d2[i] = std::min(min_d2[i], d2);
            total += min_d2[i];
        }
        std::size_t pick = 0;
        if (total > 0.0) {
            const double target = rng.uniform() * total;
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                acc += min_d2[i];
                if (acc >= target) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = static_cast<std::size_t>(rng.uniform_index(n));
        }
        for (std::size_t j = 0; j < d; ++j) centers.at2(c, j) = points.at2(pick, j);
    }

    KMeansResult res;
    res.assignments.assign(n, 0);
    for (std::size_t iter = 0; iter < max_iter; ++iter) {
        bool changed = false;
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (std::size_t c = 0; c < k; ++c) {
                const double d2 = sq_dist(points.data.data() + i * d, centers.data.data() + c * d, d);
                if (d2 < best_d) {
                    best_d = d2;
                    best = c;
                }
            }
            if (res.assignments[i] != best) {
                res.assignments[i] = best;
                changed = true;
            }
        }

        // Recompute centers; repair empties with the farthest point.
        std::vector<std::size_t> counts(k, 0);
        Tensor sums = Tensor::zeros({k, d});
        for (std::size_t i = 0; i < n; ++i) {
            counts[res.assignments[i]] += 1;
            for (std::size_t j = 0; j < d; ++j)
                sums.at2(res.assignments[i], j) += points.at2(i, j);
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] == 0) {
                std::size_t far = 0;
                double far_d = -1.0;
                for (std::size_t i = 0; i < n; ++i) {
                    const double d2 = sq_dist(points.data.data() + i * d,
                                              centers.data.data() + res.assignments[i] * d, d);
                    if (d2 > far_d) {
                        far_d = d2;
                        far = i;
                    }
                }
                for (std::size_t j = 0; j < d; ++j) centers.at2(c, j) = points.at2(far, j);
                res.assignments[far] = c;
                changed = true;
                continue;
            }
            for (std::size_t j = 0; j < d; ++j)
                centers.at2(c, j) = sums.at2(c, j) / static_cast<double>(counts[c]);
        }
        if (inertia_trace) {
            double inertia = 0.0;
            for (std::size_t i = 0; i < n; ++i)
                inertia += sq_dist(points.data.data() + i * d,
                                   centers.data.data() + res.assignments[i] * d, d);
            inertia_trace->push_back(inertia);
        }
        if (!changed && iter > 0) break;
    }

    res.inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        res.inertia +=
            sq_dist(points.data.data() + i * d, centers.data.data() + res.assignments[i] * d, d);
    res.centers = std::move(centers);
    return res;
}

}  // namespace

KMeansResult kmeans(const Tensor& points, std::size_t k, std::uint64_t seed, std::size_t max_iter,
                    std::size_t restarts) {
    if (points.rank() != 2) throw ValidationError("kmeans expects n x d points");
    const std::size_t n = points.dim(0);
    if (k < 1) throw ValidationError("k must be >= 1");
    if (k > n) throw ValidationError("k exceeds point count");
    KMeansResult best;
    best.inertia = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < std::max<std::size_t>(1, restarts); ++r) {
        KMeansResult cand = kmeans_once(points, k, derive_seed(seed, 0x6b6d6e73, r), max_iter);
        if (cand.inertia < best.inertia) best = std::move(cand);
    }
    return best;
}

std::vector<double> kmeans_inertia_trace(const Tensor& points, std::size_t k, std::uint64_t seed,
                                         std::size_t max_iter) {
    if (points.rank() != 2) throw ValidationError("kmeans expects n x d points");
    if (k < 1 || k > points.dim(0)) throw ValidationError("invalid k");
    std::vector<double> trace;
    kmeans_once(points, k, derive_seed(seed, 0x6b6d6e73, 0), max_iter, &trace);
    return trace;
}

SilhouetteResult silhouette(const Tensor& points, const std::vector<std::size_t>& assignments) {
    if (points.rank() != 2 || points.dim(0) != assignments.size())
        throw ValidationError("silhouette shape mismatch");
    const std::size_t n = points.dim(0);
    const std::size_t d = points.dim(1);
    std::size_t k = 0;
    for (auto a : assignments) k = std::max(k, a + 1);
    std::vector<std::size_t> counts(k, 0);
    for (auto a : assignments) counts[a] += 1;
    std::size_t nonempty = 0;
    for (auto c : counts) nonempty += c > 0 ? 1 : 0;
    if (nonempty < 2) throw ValidationError("silhouette needs at least 2 clusters");

    SilhouetteResult res;
    res.per_point.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> mean_dist(k, 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            mean_dist[assignments[j]] +=
                std::sqrt(sq_dist(points.data.data() + i * d, points.data.data() + j * d, d));
        }
        const std::size_t own = assignments[i];
        if (counts[own] <= 1) {
            res.per_point[i] = 0.0;  // singleton convention
            continue;
        }
        const double a = mean_dist[own] / static_cast<double>(counts[own] - 1);
        double b = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < k; ++c) {
            if (c == own || counts[c] == 0) continue;
            b = std::min(b, mean_dist[c] / static_cast<double>(counts[c]));
        }
        const double denom = std::max(a, b);
        res.per_point[i] = denom > 0.0 ? (b - a) / denom : 0.0;
    }
    double sum = 0.0;
    for (double s : res.per_point) sum += s;
    res.mean = sum / static_cast<double>(n);
    return res;
}

namespace {

// Jacobi eigenvalue iteration for a symmetric matrix (row-major d x d).
void jacobi_eigen(std::vector<double>& a, std::size_t d, std::vector<double>& eigvals,
                  std::vector<double>& eigvecs) {
    eigvecs.assign(d * d, 0.0);
    for (std::size_t i = 0; i < d; ++i) eigvecs[i * d + i] = 1.0;
    for (std::size_t sweep = 0; sweep < 128; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < d; ++p)
            for (std::size_t q = p + 1; q < d; ++q) off += a[p * d + q] * a[p * d + q];
        if (off < 1e-30) break;
        for (std::size_t p = 0; p < d; ++p) {
            for (std::size_t q = p + 1; q < d; ++q) {
                const double apq = a[p * d + q];
                if (std::abs(apq) < 1e-300) continue;
                const double app = a[p * d + p];
                const double aqq = a[q * d + q];
                const double tau = (aqq - app) / (2.0 * apq);
                const double t = (tau >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(tau) + std::sqrt(1.0 + tau * tau));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = t * c;
                for (std::size_t i = 0; i < d; ++i) {
                    const double aip = a[i * d + p];
                    const double aiq = a[i * d + q];
                    a[i * d + p] = c * aip - s * aiq;
                    a[i * d + q] = s * aip + c * aiq;
                }
                for (std::size_t i = 0; i < d; ++i) {
                    const double api = a[p * d + i];
                    const double aqi = a[q * d + i];
                    a[p * d + i] = c * api - s * aqi;
                    a[q * d + i] = s * api + c * aqi;
                }
                for (std::size_t i = 0; i < d; ++i) {
                    const double vip = eigvecs[i * d + p];
                    const double viq = eigvecs[i * d + q];
                    eigvecs[i * d + p] = c * vip - s * viq;
                    eigvecs[i * d + q] = s * vip + c * viq;
                }
            }
        }
    }
    eigvals.assign(d, 0.0);
    for (std::size_t i = 0; i < d; ++i) eigvals[i] = a[i * d + i];
}

}  // namespace

PcaResult pca_project(const Tensor& points, std::size_t out_dim) {
    if (points.rank() != 2) throw ValidationError("pca expects n x d points");
    const std::size_t n = points.dim(0);
    const std::size_t d = points.dim(1);
    if (n <= out_dim) throw ValidationError("pca needs more points than output dimensions");

    std::vector<double> mean(d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) mean[j] += points.at2(i, j);
    for (auto& m : mean) m /= static_cast<double>(n);

    std::vector<double> cov(d * d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = 0; p < d; ++p) {
            const double xp = points.at2(i, p) - mean[p];
            for (std::size_t q = p; q < d; ++q)
                cov[p * d + q] += xp * (points.at2(i, q) - mean[q]);
        }
    for (std::size_t p = 0; p < d; ++p)
        for (std::size_t q = p; q < d; ++q) {
            cov[p * d + q] /= static_cast<double>(n);
            cov[q * d + p] = cov[p * d + q];
        }

    std::vector<double> eigvals, eigvecs;
    jacobi_eigen(cov, d, eigvals, eigvecs);

    std::vector<std::size_t> order(d);
    for (std::size_t i = 0; i < d; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return eigvals[a] > eigvals[b]; });

    PcaResult res;
    res.projected = Tensor::zeros({n, out_dim});
    const double top = std::max(std::abs(eigvals[order[0]]), 1e-300);
    for (std::size_t c = 0; c < out_dim; ++c) {
        std::vector<double> axis(d, 0.0);
        double eig = 0.0;
        if (c < d) {
            eig = eigvals[order[c]];
            for (std::size_t j = 0; j < d; ++j) axis[j] = eigvecs[j * d + order[c]];
            // Fix sign: the largest-magnitude coordinate points positive.
            std::size_t arg = 0;
            for (std::size_t j = 1; j < d; ++j)
                if (std::abs(axis[j]) > std::abs(axis[arg])) arg = j;
            if (axis[arg] < 0.0)
                for (auto& v : axis) v = -v;
        }
        if (c >= d || eig / top < 1e-12) res.rank_deficient = true;
        res.eigenvalues.push_back(eig);
        for (std::size_t i = 0; i < n; ++i) {
            double proj = 0.0;
            for (std::size_t j = 0; j < d; ++j) proj += (points.at2(i, j) - mean[j]) * axis[j];
            res.projected.at2(i, c) = proj;
        }
        res.axes.push_back(std::move(axis));
    }
    return res;
}

double auc_from_distances(const std::vector<double>& matched, const std::vector<double>& unmatched) {
    if (matched.empty() || unmatched.empty())
        throw ValidationError("AUC needs both matched and unmatched distances");
    // Average ranks over the pooled sample; ties share the mean rank.
    struct Item {
        double v;
        bool unmatched;
    };
    std::vector<Item> all;
    all.reserve(matched.size() + unmatched.size());
    for (double v : matched) all.push_back({v, false});
    for (double v : unmatched) all.push_back({v, true});
    std::sort(all.begin(), all.end(), [](const Item& a, const Item& b) { return a.v < b.v; });
    double rank_sum_u = 0.0;
    std::size_t i = 0;
    while (i < all.size()) {
        std::size_t j = i;
        while (j < all.size() && all[j].v == all[i].v) ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // 1-based mean rank
        for (std::size_t k = i; k < j; ++k)
            if (all[k].unmatched) rank_sum_u += avg_rank;
        i = j;
    }
    const double n_u = static_cast<double>(unmatched.size());
    const double n_m = static_cast<double>(matched.size());
    const double u_stat = rank_sum_u - n_u * (n_u + 1.0) / 2.0;
    return u_stat / (n_u * n_m);
}

ThresholdSweep threshold_sweep(const std::vector<double>& matched,
                               const std::vector<double>& unmatched) {
    if (matched.empty() && unmatched.empty()) throw ValidationError("no distances to sweep");
    std::vector<double> values;
    values.reserve(matched.size() + unmatched.size());
    values.insert(values.end(), matched.begin(), matched.end());
    values.insert(values.end(), unmatched.begin(), unmatched.end());
    std::sort(values.begin(), values.end());
    values.erase(std::unique(values.begin(), values.end()), values.end());

    std::vector<double> candidates;
    if (values.front() > 0.0) candidates.push_back(values.front() / 2.0);
    for (std::size_t i = 0; i + 1 < values.size(); ++i)
        candidates.push_back(0.5 * (values[i] + values[i + 1]));
    candidates.push_back(values.back() + 1.0);

    std::vector<double> sm = matched, su = unmatched;
    std::sort(sm.begin(), sm.end());
    std::sort(su.begin(), su.end());
    const double n = static_cast<double>(sm.size() + su.size());

    ThresholdSweep out;
    out.best_accuracy = -1.0;
    for (double t : candidates) {
        // match iff distance < t
        const auto m_ok = static_cast<double>(std::lower_bound(sm.begin(), sm.end(), t) - sm.begin());
        const auto u_ok = static_cast<double>(su.end() - std::lower_bound(su.begin(), su.end(), t));
        const double acc = (m_ok + u_ok) / n;
        out.curve.emplace_back(t, acc);
        if (acc > out.best_accuracy) {
            out.best_accuracy = acc;
            out.best_threshold = t;
        }
    }
    return out;
}

Tensor embed_dataset(Model& model, const LabeledDataset& ds,
                     const std::vector<std::size_t>& indices) {
    std::vector<std::size_t> idx = indices;
    if (idx.empty()) {
        idx.resize(ds.bursts.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    }
    Tensor out = Tensor::zeros({idx.size(), model.spec.embed_dim});
    const auto ranges = batch_ranges(idx.size(), 256);
    for (const auto& [lo, hi] : ranges) {
        std::vector<std::size_t> part(idx.begin() + static_cast<std::ptrdiff_t>(lo),
                                      idx.begin() + static_cast<std::ptrdiff_t>(hi));
        Tensor z = embed(model, bursts_to_batch(ds, part, model.spec), Mode::eval);
        for (std::size_t b = 0; b < part.size(); ++b)
            for (std::size_t j = 0; j < model.spec.embed_dim; ++j)
                out.at2(lo + b, j) = z.at2(b, j);
    }
    return out;
}

std::vector<int> predict_classes(Model& model, const LabeledDataset& ds) {
    std::vector<int> preds;
    preds.reserve(ds.bursts.size());
    const auto ranges = batch_ranges(ds.bursts.size(), 256);
    for (const auto& [lo, hi] : ranges) {
        std::vector<std::size_t> idx;
        for (std::size_t i = lo; i < hi; ++i) idx.push_back(i);
        Tensor logits = predict_logits(model, bursts_to_batch(ds, idx, model.spec), Mode::eval);
        for (std::size_t b = 0; b < idx.size(); ++b) {
            std::size_t arg = 0;
            for (std::size_t c = 1; c < logits.dim(1); ++c)
                if (logits.at2(b, c) > logits.at2(b, arg)) arg = c;
            preds.push_back(static_cast<int>(arg + 1));
        }
    }
    return preds;
}

PairEvalReport pair_distance_report(Model& model, const PairDataset& pairs,
                                    const LabeledDataset& source, DistanceMetric metric) {
    PairEvalReport rep;
    const auto ranges = batch_ranges(pairs.entries.size(), 256);
    for (const auto& [lo, hi] : ranges) {
        std::vector<std::size_t> i1, i2;
        std::vector<int> y;
        for (std::size_t i = lo; i < hi; ++i) {
            i1.push_back(pairs.entries[i].i1);
            i2.push_back(pairs.entries[i].i2);
            y.push_back(pairs.entries[i].y);
        }
        Tensor z1 = embed(model, bursts_to_batch(source, i1, model.spec), Mode::eval);
        Tensor z2 = embed(model, bursts_to_batch(source, i2, model.spec), Mode::eval);
        const auto dists = pair_distances(z1, z2, metric);
        for (std::size_t i = 0; i < dists.size(); ++i)
            (y[i] == 1 ? rep.matched : rep.unmatched).push_back(dists[i]);
    }
    if (rep.matched.empty() || rep.unmatched.empty())
        throw ValidationError("pair set lacks a matched or unmatched class");
    rep.auc = auc_from_distances(rep.matched, rep.unmatched);
    ThresholdSweep sweep = threshold_sweep(rep.matched, rep.unmatched);
    rep.best_threshold = sweep.best_threshold;
    rep.best_accuracy = sweep.best_accuracy;
    rep.sweep = std::move(sweep.curve);
    return rep;
}

std::vector<std::pair<double, double>> snr_sweep_sei(Model& model, const LabeledDataset& clean_eval,
                                                     const std::vector<double>& snr_list,
                                                     std::uint64_t noise_seed) {
    if (snr_list.empty()) throw ValidationError("empty SNR list");
    std::vector<std::pair<double, double>> out;
    std::vector<int> labels;
    for (const auto& b : clean_eval.bursts) labels.push_back(b.label.value());
    for (double snr : snr_list) {
        if (!std::isfinite(snr)) throw ValidationError("non-finite SNR");
        LabeledDataset noisy = noise_dataset(clean_eval, snr, noise_seed);
        const auto preds = predict_classes(model, noisy);
        std::size_t ok = 0;
        for (std::size_t i = 0; i < preds.size(); ++i) ok += preds[i] == labels[i] ? 1 : 0;
        out.emplace_back(snr, static_cast<double>(ok) / static_cast<double>(preds.size()));
    }
    return out;
}

std::vector<std::pair<double, double>> snr_sweep_eda(Model& model, const LabeledDataset& clean_eval,
                                                     const PairDataset& eval_pairs,
                                                     const std::vector<double>& snr_list,
                                                     DistanceMetric metric,
                                                     std::uint64_t noise_seed) {
    if (snr_list.empty()) throw ValidationError("empty SNR list");
    std::vector<std::pair<double, double>> out;
    for (double snr : snr_list) {
        if (!std::isfinite(snr)) throw ValidationError("non-finite SNR");
        LabeledDataset noisy = noise_dataset(clean_eval, snr, noise_seed);
        PairEvalReport rep = pair_distance_report(model, eval_pairs, noisy, metric);
        out.emplace_back(snr, rep.best_accuracy);
    }
    return out;
}

PairDataset build_heldout_pairs(const LabeledDataset& ds, const std::vector<int>& known_ids,
                                const std::vector<int>& heldout_ids, double alpha,
                                std::size_t gamma, std::uint64_t seed) {
    if (heldout_ids.empty()) throw ValidationError("no held-out emitters");
    std::set<int> known(known_ids.begin(), known_ids.end());
    std::set<int> heldout(heldout_ids.begin(), heldout_ids.end());
    for (int h : heldout)
        if (known.count(h))
            throw ValidationError("emitter " + std::to_string(h) + " is both known and held out");
    if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("alpha must be in (0, 1)");

    std::vector<std::vector<std::size_t>> by_class(ds.V + 1);
    for (std::size_t i = 0; i < ds.bursts.size(); ++i)
        by_class[static_cast<std::size_t>(ds.bursts[i].label.value_or(0))].push_back(i);
    for (int h : heldout)
        if (by_class[static_cast<std::size_t>(h)].size() < 2)
            throw DataError("held-out emitter " + std::to_string(h) + " needs >= 2 bursts");

    // Cells: held-out diagonals (matched) and every unordered off-diagonal
    // cell touching a held-out emitter (unmatched).
    std::vector<std::pair<int, int>> cells;
    std::vector<double> targets;
    std::vector<int> members(known.begin(), known.end());
    members.insert(members.end(), heldout.begin(), heldout.end());
    std::sort(members.begin(), members.end());
    std::size_t n_off = 0;
    for (std::size_t a = 0; a < members.size(); ++a)
        for (std::size_t b = a + 1; b < members.size(); ++b)
            if (heldout.count(members[a]) || heldout.count(members[b])) ++n_off;
    for (int h : heldout) cells.emplace_back(h, h);
    for (std::size_t i = 0; i < heldout.size(); ++i)
        targets.push_back(alpha * static_cast<double>(gamma) / static_cast<double>(heldout.size()));
    for (std::size_t a = 0; a < members.size(); ++a)
        for (std::size_t b = a + 1; b < members.size(); ++b) {
            if (!heldout.count(members[a]) && !heldout.count(members[b])) continue;
            cells.emplace_back(members[a], members[b]);
            targets.push_back((1.0 - alpha) * static_cast<double>(gamma) /
                              static_cast<double>(n_off));
        }
    const auto counts = apportion(targets, gamma);

    PairDataset out;
    out.alpha = alpha;
    out.gamma = gamma;
    out.seed = seed;
    out.entries.reserve(gamma);
    for (std::size_t c = 0; c < cells.size(); ++c) {
        if (counts[c] == 0) continue;
        const auto& ci = by_class[static_cast<std::size_t>(cells[c].first)];
        const auto& cj = by_class[static_cast<std::size_t>(cells[c].second)];
        if (ci.empty() || cj.empty())
            throw DataError("emitter " + std::to_string(cells[c].first) + " or " +
                            std::to_string(cells[c].second) + " has no bursts");
        Rng rng(derive_seed(seed, 0x686f7574 + static_cast<std::uint64_t>(cells[c].first),
                            static_cast<std::uint64_t>(cells[c].second)));
        for (std::size_t v = 0; v < counts[c]; ++v) {
            const std::size_t i1 = ci[rng.uniform_index(ci.size())];
            std::size_t i2 = cj[rng.uniform_index(cj.size())];
            while (i2 == i1) i2 = cj[rng.uniform_index(cj.size())];
            out.entries.push_back(
                {i1, i2, pair_label(cells[c].first, cells[c].second)});
        }
    }
    return out;
}

OsrHeldoutReport osr_heldout_eval(Model& model, const LabeledDataset& ds,
                                  const std::vector<int>& known_ids,
                                  const std::vector<int>& heldout_ids, std::size_t pair_budget,
                                  DistanceMetric metric, std::uint64_t seed) {
    OsrHeldoutReport rep;
    PairDataset pairs = build_heldout_pairs(ds, known_ids, heldout_ids, 0.5, pair_budget, seed);
    rep.pairs = pair_distance_report(model, pairs, ds, metric);

    std::vector<std::size_t> heldout_idx;
    std::set<int> heldout(heldout_ids.begin(), heldout_ids.end());
    for (std::size_t i = 0; i < ds.bursts.size(); ++i)
        if (heldout.count(ds.bursts[i].label.value_or(0))) {
            heldout_idx.push_back(i);
            rep.heldout_labels.push_back(*ds.bursts[i].label);
        }
    rep.heldout_embeddings = embed_dataset(model, ds, heldout_idx);
    rep.pca = pca_project(rep.heldout_embeddings, 2);
    for (std::size_t k = 2; k <= 9 && k <= heldout_idx.size(); ++k) {
        KMeansResult km = kmeans(rep.heldout_embeddings, k, derive_seed(seed, 0x6b73696c, k));
        rep.silhouette_by_k.emplace_back(k, silhouette(rep.heldout_embeddings, km.assignments).mean);
    }
    return rep;
}

std::vector<OsrMspRow> osr_msp_table(Model& model, const LabeledDataset& test,
                                     const std::vector<double>& thresholds) {
    std::vector<OsrMspRow> rows;
    const auto ranges = batch_ranges(test.bursts.size(), 256);
    std::vector<double> max_prob;
    std::vector<int> preds, labels;
    for (const auto& [lo, hi] : ranges) {
        std::vector<std::size_t> idx;
        for (std::size_t i = lo; i < hi; ++i) idx.push_back(i);
        Tensor logits = predict_logits(model, bursts_to_batch(test, idx, model.spec), Mode::eval);
        Tensor probs = softmax(logits, -1);
        for (std::size_t b = 0; b < idx.size(); ++b) {
            std::size_t arg = 0;
            for (std::size_t c = 1; c < probs.dim(1); ++c)
                if (probs.at2(b, c) > probs.at2(b, arg)) arg = c;
            max_prob.push_back(probs.at2(b, arg));
            preds.push_back(static_cast<int>(arg + 1));
            labels.push_back(test.bursts[idx[b]].label.value_or(0));
        }
    }
    for (double thr : thresholds) {
        OsrMspRow row;
        row.threshold = thr;
        std::size_t unknown = 0, known_ok = 0, known_n = 0;
        for (std::size_t i = 0; i < max_prob.size(); ++i) {
            if (max_prob[i] >= thr) {
                ++known_n;
                known_ok += preds[i] == labels[i] ? 1 : 0;
            } else {
                ++unknown;
            }
        }
        row.flagged_unknown = static_cast<double>(unknown) / static_cast<double>(max_prob.size());
        row.known_accuracy =
            known_n > 0 ? static_cast<double>(known_ok) / static_cast<double>(known_n) : 0.0;
        rows.push_back(row);
    }
    return rows;
}

}  // namespace rffkit
