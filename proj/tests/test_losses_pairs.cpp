#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <map>

#include "rffkit/experiment.hpp"
#include "rffkit/layers.hpp"
#include "rffkit/losses.hpp"
#include "rffkit/pairs.hpp"
#include "rffkit/rng.hpp"

using namespace rffkit;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double scale = 1.0) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (auto& v : t.data) v = rng.normal(0.0, scale);
    return t;
}

}  // namespace

TEST_CASE("cross entropy hits its documented values") {
    // Forced one-hot prediction: loss 0.
    Tensor sure{{1, 3}, {1000.0, 0.0, 0.0}};
    CHECK(loss_cross_entropy(sure, {1}).value == doctest::Approx(0.0).epsilon(1e-12));

    // Uniform over 8 classes: ln 8.
    Tensor uniform = Tensor::zeros({1, 8});
    CHECK(std::abs(loss_cross_entropy(uniform, {5}).value - std::log(8.0)) < 1e-12);

    // [ln 2, 0] with label 1: -ln(2/3).
    Tensor two{{1, 2}, {std::log(2.0), 0.0}};
    CHECK(std::abs(loss_cross_entropy(two, {1}).value + std::log(2.0 / 3.0)) < 1e-12);

    CHECK_THROWS_AS(loss_cross_entropy(two, {3}), ValidationError);
    CHECK_THROWS_AS(loss_cross_entropy(two, {0}), ValidationError);
}

TEST_CASE("cross entropy gradient matches finite differences") {
    Rng rng(5);
    Tensor logits = random_tensor({4, 5}, rng);
    std::vector<int> labels{2, 1, 5, 3};
    LossResult base = loss_cross_entropy(logits, labels);
    const double eps = 1e-6;
    for (std::size_t i = 0; i < logits.numel(); ++i) {
        Tensor up = logits, dn = logits;
        up.data[i] += eps;
        dn.data[i] -= eps;
        const double numeric =
            (loss_cross_entropy(up, labels).value - loss_cross_entropy(dn, labels).value) /
            (2 * eps);
        CHECK(base.grad.data[i] == doctest::Approx(numeric).epsilon(1e-5));
    }
}

TEST_CASE("contrastive loss branches") {
    // Matched coincident pair: zero.
    Tensor z{{1, 3}, {0.4, -0.2, 1.0}};
    CHECK(loss_contrastive(z, z, {1}, 1.0).value == 0.0);

    // Unmatched pair beyond the margin: zero (d^2 = 4 >= m = 1).
    Tensor a{{1, 1}, {0.0}};
    Tensor b{{1, 1}, {2.0}};
    CHECK(loss_contrastive(a, b, {0}, 1.0).value == 0.0);

    // d^2 = 0.25: matched pays 0.25, unmatched pays 0.75 at m = 1.
    Tensor c{{1, 1}, {0.5}};
    CHECK(loss_contrastive(a, c, {1}, 1.0).value == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(loss_contrastive(a, c, {0}, 1.0).value == doctest::Approx(0.75).epsilon(1e-12));

    CHECK_THROWS_AS(loss_contrastive(a, c, {1}, 0.0), ValidationError);
    CHECK_THROWS_AS(loss_contrastive(a, c, {2}, 1.0), ValidationError);
}

TEST_CASE("contrastive gradients match finite differences away from the kink") {
    Rng rng(8);
    const double m = 1.0;
    for (int trial = 0; trial < 4; ++trial) {
        Tensor z1 = random_tensor({3, 4}, rng);
        Tensor z2 = random_tensor({3, 4}, rng);
        std::vector<int> y{trial % 2, 1 - trial % 2, 1};
        // Skip configurations too close to the hinge.
        bool near_kink = false;
        for (std::size_t p = 0; p < 3; ++p) {
            double d2 = 0.0;
            for (std::size_t j = 0; j < 4; ++j) {
                const double d = z1.at2(p, j) - z2.at2(p, j);
                d2 += d * d;
            }
            if (std::abs(m - d2) < 1e-4) near_kink = true;
        }
        if (near_kink) continue;
        PairLossResult base = loss_contrastive(z1, z2, y, m);
        const double eps = 1e-6;
        for (std::size_t i = 0; i < z1.numel(); ++i) {
            Tensor up = z1, dn = z1;
            up.data[i] += eps;
            dn.data[i] -= eps;
            const double numeric = (loss_contrastive(up, z2, y, m).value -
                                    loss_contrastive(dn, z2, y, m).value) /
                                   (2 * eps);
            CHECK(base.grad1.data[i] == doctest::Approx(numeric).epsilon(1e-5));
        }
        for (std::size_t i = 0; i < z2.numel(); ++i) {
            Tensor up = z2, dn = z2;
            up.data[i] += eps;
            dn.data[i] -= eps;
            const double numeric = (loss_contrastive(z1, up, y, m).value -
                                    loss_contrastive(z1, dn, y, m).value) /
                                   (2 * eps);
            CHECK(base.grad2.data[i] == doctest::Approx(numeric).epsilon(1e-5));
        }
    }
}

TEST_CASE("mse values and gradient") {
    Tensor x{{2, 3}, {1, 2, 3, 4, 5, 6}};
    CHECK(loss_mse(x, x).value == 0.0);

    Tensor shifted = x;
    for (auto& v : shifted.data) v += 1.0;
    CHECK(loss_mse(shifted, x).value == doctest::Approx(3.0).epsilon(1e-12));  // d = 3 per sample

    Tensor a{{1, 1}, {3.0}};
    Tensor b{{1, 1}, {1.0}};
    CHECK(loss_mse(a, b).value == doctest::Approx(4.0).epsilon(1e-12));

    Rng rng(2);
    Tensor xh = random_tensor({3, 4}, rng);
    Tensor xt = random_tensor({3, 4}, rng);
    LossResult base = loss_mse(xh, xt);
    const double eps = 1e-6;
    for (std::size_t i = 0; i < xh.numel(); ++i) {
        Tensor up = xh, dn = xh;
        up.data[i] += eps;
        dn.data[i] -= eps;
        const double numeric = (loss_mse(up, xt).value - loss_mse(dn, xt).value) / (2 * eps);
        CHECK(base.grad.data[i] == doctest::Approx(numeric).epsilon(1e-5));
    }
    CHECK_THROWS_AS(loss_mse(a, x), ValidationError);
}

TEST_CASE("eda distances") {
    std::vector<double> z{0.3, -0.7};
    CHECK(eda_distance(z, z, DistanceMetric::euclidean) == 0.0);
    CHECK(eda_distance(z, z, DistanceMetric::cosine) == doctest::Approx(0.0).epsilon(1e-12));

    std::vector<double> e1{1.0, 0.0}, e2{0.0, 1.0};
    CHECK(eda_distance(e1, e2, DistanceMetric::euclidean) ==
          doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
    CHECK(eda_distance(e1, e2, DistanceMetric::cosine) == doctest::Approx(1.0).epsilon(1e-12));

    std::vector<double> v1{1.0, 0.0}, v2{1.0, 1.0};
    CHECK(eda_distance(v1, v2, DistanceMetric::cosine) ==
          doctest::Approx(1.0 - 1.0 / std::sqrt(2.0)).epsilon(1e-12));

    std::vector<double> zero{0.0, 0.0};
    CHECK_THROWS_AS(eda_distance(v1, zero, DistanceMetric::cosine), NumericError);
}

TEST_CASE("eda_predict boundary and monotone-transform invariance") {
    CHECK(eda_predict(0.0, 0.5) == 1);
    CHECK(eda_predict(0.5, 0.5) == 0);  // strict inequality at the boundary
    CHECK(eda_predict(0.49, 0.5) == 1);
    CHECK_THROWS_AS(eda_predict(0.1, 0.0), ValidationError);

    Rng rng(3);
    for (int i = 0; i < 200; ++i) {
        const double d = rng.uniform(0.0, 3.0);
        const double t = rng.uniform(0.1, 3.0);
        if (d == t) continue;
        CHECK(eda_predict(d, t) == eda_predict(std::exp(d), std::exp(t)));
    }
}

TEST_CASE("msp open-set scoring") {
    // Log-probabilities make the softmax output exact.
    std::vector<double> sure{std::log(0.9), std::log(0.05), std::log(0.05)};
    CHECK(osr_score_msp(sure, 0.5) == 0);
    std::vector<double> flat{std::log(0.4), std::log(0.3), std::log(0.3)};
    CHECK(osr_score_msp(flat, 0.5) == 1);
    std::vector<double> edge{std::log(0.5), std::log(0.25), std::log(0.25)};
    CHECK(osr_score_msp(edge, 0.5) == 0);  // >= keeps the boundary known

    // Shift invariance.
    Rng rng(5);
    for (int i = 0; i < 50; ++i) {
        std::vector<double> logits{rng.normal(), rng.normal(), rng.normal(), rng.normal()};
        std::vector<double> shifted = logits;
        const double c = rng.normal(0.0, 10.0);
        for (auto& v : shifted) v += c;
        CHECK(osr_score_msp(logits, 0.6) == osr_score_msp(shifted, 0.6));
    }
    CHECK_THROWS_AS(osr_score_msp(sure, 0.0), ValidationError);
    CHECK_THROWS_AS(osr_score_msp(sure, 1.0), ValidationError);
}

TEST_CASE("contrastive descent pulls matched pairs together on a toy problem") {
    // Shared linear encoder, two fixed inputs, all-matched batch.
    Rng rng(7);
    Layer enc = make_layer(LayerSpec::make_linear(2, 2), rng);
    Tensor x1{{1, 2}, {1.0, 0.5}};
    Tensor x2{{1, 2}, {-0.5, 1.0}};
    std::vector<int> y{1};
    double prev = std::numeric_limits<double>::infinity();
    for (int step = 0; step < 100; ++step) {
        for (auto& p : enc.params) p.zero_grad();
        LayerCache c1, c2;
        Tensor z1 = layer_forward(enc, x1, Mode::train, &c1);
        Tensor z2 = layer_forward(enc, x2, Mode::train, &c2);
        PairLossResult loss = loss_contrastive(z1, z2, y, 1.0);
        CHECK(loss.value < prev);
        prev = loss.value;
        layer_backward(enc, c1, loss.grad1);
        layer_backward(enc, c2, loss.grad2);
        for (auto& p : enc.params)
            for (std::size_t i = 0; i < p.value.numel(); ++i)
                p.value.data[i] -= 0.05 * p.grad.data[i];
    }
    CHECK(prev < 1e-3);
}

TEST_CASE("pair_label equation and symmetry") {
    CHECK(pair_label(3, 3) == 1);
    CHECK(pair_label(1, 2) == 0);
    for (int a = 1; a <= 10; ++a)
        for (int b = 1; b <= 10; ++b) CHECK(pair_label(a, b) == pair_label(b, a));
}

TEST_CASE("matched_ratio equals the direct class-pairing count ratio") {
    CHECK(matched_ratio(3) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(matched_ratio(9) == doctest::Approx(0.25).epsilon(1e-15));
    for (std::size_t v = 2; v <= 20; ++v) {
        const double matched = static_cast<double>(v);
        const double unmatched = static_cast<double>(v * (v - 1)) / 2.0;
        CHECK(matched_ratio(v) == doctest::Approx(matched / unmatched).epsilon(1e-15));
    }
    CHECK_THROWS_AS(matched_ratio(1), ValidationError);
}

TEST_CASE("plan_counts V=4 alpha=0.5 gamma=96") {
    PairCountPlan plan = plan_counts(4, 0.5, 96);
    for (std::size_t i = 0; i < 4; ++i) CHECK(plan.counts[i][i] == 12);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = i + 1; j < 4; ++j) CHECK(plan.counts[i][j] == 8);
    CHECK(plan.matched_total() == 48);
    CHECK(plan.unmatched_total() == 48);
}

TEST_CASE("plan_counts alpha=1 sends everything to the diagonal") {
    PairCountPlan plan = plan_counts(5, 1.0, 100);
    CHECK(plan.matched_total() == 100);
    CHECK(plan.unmatched_total() == 0);
}

TEST_CASE("plan_counts remainder distribution matches an independent script") {
    // Independent reimplementation of the documented rounding rule.
    auto reference = [](std::size_t V, double alpha, std::size_t gamma) {
        struct Cell {
            std::size_t i, j;
            long double target;
        };
        std::vector<Cell> cells;
        for (std::size_t i = 0; i < V; ++i)
            for (std::size_t j = i; j < V; ++j) {
                const long double t =
                    i == j ? static_cast<long double>(alpha) * gamma / V
                           : 2.0L * (1.0L - static_cast<long double>(alpha)) * gamma /
                                 (static_cast<long double>(V) * (V - 1));
                cells.push_back({i, j, t});
            }
        std::map<std::pair<std::size_t, std::size_t>, std::size_t> counts;
        std::size_t assigned = 0;
        std::vector<long double> fracs;
        for (const auto& c : cells) {
            const auto fl = static_cast<std::size_t>(std::floor(static_cast<double>(c.target)));
            counts[{c.i, c.j}] = fl;
            assigned += fl;
            fracs.push_back(c.target - fl);
        }
        std::vector<std::size_t> order(cells.size());
        for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            if (fracs[a] != fracs[b]) return fracs[a] > fracs[b];
            if (cells[a].i != cells[b].i) return cells[a].i < cells[b].i;
            return cells[a].j < cells[b].j;
        });
        for (std::size_t k = 0; assigned < gamma; ++k, ++assigned)
            counts[{cells[order[k % order.size()]].i, cells[order[k % order.size()]].j}] += 1;
        return counts;
    };

    for (const auto& [v, alpha, gamma] :
         std::vector<std::tuple<std::size_t, double, std::size_t>>{
             {3, 0.5, 10}, {4, 0.3, 97}, {5, 0.7, 123}, {2, 0.5, 7}, {6, 0.25, 1000}}) {
        PairCountPlan plan = plan_counts(v, alpha, gamma);
        auto want = reference(v, alpha, gamma);
        std::size_t total = 0;
        for (std::size_t i = 0; i < v; ++i)
            for (std::size_t j = i; j < v; ++j) {
                CHECK(plan.counts[i][j] == want[{i, j}]);
                total += plan.counts[i][j];
            }
        CHECK(total == gamma);
    }
}

TEST_CASE("natural-ratio alpha reproduces the class-pairing ratio exactly") {
    for (std::size_t v = 2; v <= 12; ++v) {
        const double nr = matched_ratio(v);
        const double alpha = nr / (1.0 + nr);  // = 2 / (V + 1)
        const std::size_t gamma = v * (v + 1);
        PairCountPlan plan = plan_counts(v, alpha, gamma);
        const double ratio = static_cast<double>(plan.matched_total()) /
                             static_cast<double>(plan.unmatched_total());
        CHECK(ratio == doctest::Approx(nr).epsilon(1e-12));
    }
}

TEST_CASE("build_pair_dataset audits: counts, self-pairs, labels, marginals") {
    const auto specs = population_preset("four-emitters-easy");
    LabeledDataset ds = synth_dataset(specs, 100, 20.0, 4);
    PairDataset pd = build_pair_dataset(ds, 0.5, 96, 99);
    REQUIRE(pd.entries.size() == 96);

    std::size_t matched = 0;
    for (const auto& e : pd.entries) {
        CHECK(e.i1 != e.i2);  // no self-pairs
        const int want = pair_label(*ds.bursts[e.i1].label, *ds.bursts[e.i2].label);
        CHECK(e.y == want);
        matched += e.y;
    }
    CHECK(matched == 48);

    // Per-class appearance marginals match the plan.
    PairCountPlan plan = plan_counts(4, 0.5, 96);
    std::vector<std::size_t> appearances(5, 0);
    for (const auto& e : pd.entries) {
        appearances[static_cast<std::size_t>(*ds.bursts[e.i1].label)] += 1;
        appearances[static_cast<std::size_t>(*ds.bursts[e.i2].label)] += 1;
    }
    for (std::size_t c = 0; c < 4; ++c) {
        std::size_t want = 2 * plan.counts[c][c];
        for (std::size_t o = 0; o < 4; ++o) {
            if (o == c) continue;
            want += plan.counts[std::min(c, o)][std::max(c, o)];
        }
        CHECK(appearances[c + 1] == want);
    }

    // Reproducibility.
    PairDataset pd2 = build_pair_dataset(ds, 0.5, 96, 99);
    REQUIRE(pd2.entries.size() == pd.entries.size());
    for (std::size_t i = 0; i < pd.entries.size(); ++i) {
        CHECK(pd.entries[i].i1 == pd2.entries[i].i1);
        CHECK(pd.entries[i].i2 == pd2.entries[i].i2);
    }
}

TEST_CASE("build_pair_dataset rejects undersized classes") {
    const auto specs = population_preset("four-emitters-easy");
    LabeledDataset ds = synth_dataset(specs, 2, 20.0, 4);
    // Remove all but one burst of class 1.
    LabeledDataset small;
    small.V = ds.V;
    small.burst_len = ds.burst_len;
    bool dropped = false;
    for (const auto& b : ds.bursts) {
        if (*b.label == 1 && !dropped) {
            dropped = true;
            continue;
        }
        small.bursts.push_back(b);
    }
    CHECK_THROWS_AS(build_pair_dataset(small, 0.5, 40, 1), DataError);
}

TEST_CASE("pair json round trip") {
    const auto specs = population_preset("four-emitters-easy");
    LabeledDataset ds = synth_dataset(specs, 10, 20.0, 4);
    PairDataset pd = build_pair_dataset(ds, 0.5, 50, 3);
    pd.source_id = "deadbeef";
    const auto path =
        (std::filesystem::temp_directory_path() / "rffkit_pairs_test.json").string();
    save_pairs(pd, path);
    PairDataset back = load_pairs(path);
    CHECK(back.source_id == pd.source_id);
    CHECK(back.alpha == pd.alpha);
    CHECK(back.gamma == pd.gamma);
    REQUIRE(back.entries.size() == pd.entries.size());
    for (std::size_t i = 0; i < pd.entries.size(); ++i) {
        CHECK(back.entries[i].i1 == pd.entries[i].i1);
        CHECK(back.entries[i].i2 == pd.entries[i].i2);
        CHECK(back.entries[i].y == pd.entries[i].y);
    }
    std::filesystem::remove(path);
}

TEST_CASE("split_pairs stratifies over the match label") {
    const auto specs = population_preset("four-emitters-easy");
    LabeledDataset ds = synth_dataset(specs, 50, 20.0, 4);
    PairDataset pd = build_pair_dataset(ds, 0.5, 400, 3);
    PairSplit split = split_pairs(pd, 0.1, 0.1, 9);
    auto count_matched = [](const PairDataset& p) {
        std::size_t m = 0;
        for (const auto& e : p.entries) m += e.y;
        return m;
    };
    CHECK(split.train.entries.size() == 320);
    CHECK(split.valid.entries.size() == 40);
    CHECK(split.test.entries.size() == 40);
    CHECK(count_matched(split.valid) == 20);
    CHECK(count_matched(split.test) == 20);
}
