#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "rffkit/model.hpp"
#include "rffkit/rng.hpp"
#include "rffkit/train.hpp"

using namespace rffkit;

namespace {

Tensor random_input(const ModelSpec& spec, std::size_t batch, std::uint64_t seed) {
    Rng rng(seed);
    Tensor t = Tensor::zeros(input_shape(spec, batch));
    for (auto& v : t.data) v = rng.normal(0.0, 1.0);
    return t;
}

bool params_equal(const Model& a, const Model& b) {
    auto& am = const_cast<Model&>(a);
    auto& bm = const_cast<Model&>(b);
    auto pa = collect_parameters(am);
    auto pb = collect_parameters(bm);
    if (pa.size() != pb.size()) return false;
    for (std::size_t i = 0; i < pa.size(); ++i)
        if (pa[i]->value.data != pb[i]->value.data) return false;
    return true;
}

std::string temp_file(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("fcn parameter count equals the closed-form width arithmetic") {
    ModelSpec spec;
    spec.kind = ModelKind::FCN;
    spec.input_len = 256;
    spec.embed_dim = 64;
    spec.n_classes = 4;
    Model m = build_model(spec, 1);
    // Documented widths: 2L -> 512 -> 256 -> embed, classifier embed -> V.
    const std::size_t flat = 2 * 256;
    const std::size_t expect = (flat * 512 + 512) + (512 * 256 + 256) + (256 * 64 + 64) +
                               (64 * 4 + 4);
    CHECK(parameter_count(m) == expect);
}

TEST_CASE("bcnn temporal chain halves to input_len / 32") {
    ModelSpec spec;
    spec.kind = ModelKind::BCNN;
    spec.input_len = 256;
    spec.embed_dim = 64;
    Model m = build_model(spec, 3);
    // Final linear consumes channels * (input_len / 2^5).
    const Layer& final_linear = m.fingerprint.back();
    REQUIRE(final_linear.spec.kind == LayerKind::linear);
    CHECK(final_linear.spec.in_features == 64 * (256 / 32));

    // Walk the declared shape chain block by block.
    std::vector<std::size_t> shape{2, 2, 256};
    for (const auto& layer : m.fingerprint) shape = layer_output_shape(layer.spec, shape);
    CHECK(shape == std::vector<std::size_t>{2, 64});

    ModelSpec bad = spec;
    bad.input_len = 100;  // not divisible by 32
    CHECK_THROWS_AS(build_model(bad, 3), ValidationError);
}

TEST_CASE("same spec and seed build identical parameters") {
    ModelSpec spec;
    spec.kind = ModelKind::BCNN;
    spec.input_len = 64;
    spec.embed_dim = 16;
    spec.n_classes = 3;
    Model a = build_model(spec, 42);
    Model b = build_model(spec, 42);
    CHECK(params_equal(a, b));
    Model c = build_model(spec, 43);
    CHECK(!params_equal(a, c));
}

TEST_CASE("embed determinism and pairwise stacking") {
    ModelSpec spec;
    spec.kind = ModelKind::FCN;
    spec.input_len = 32;
    spec.embed_dim = 8;
    Model m = build_model(spec, 5);

    Tensor one = random_input(spec, 1, 7);
    Tensor two = Tensor::zeros(input_shape(spec, 2));
    for (std::size_t j = 0; j < one.numel(); ++j) {
        two.data[j] = one.data[j];
        two.data[one.numel() + j] = one.data[j];
    }
    Tensor z = embed(m, two, Mode::eval);
    for (std::size_t j = 0; j < 8; ++j) CHECK(z.at2(0, j) == z.at2(1, j));

    // F_theta with l = 2: stacking separate embeds equals the pair embed.
    Tensor x1 = random_input(spec, 3, 11);
    Tensor x2 = random_input(spec, 3, 13);
    Tensor z1 = embed(m, x1, Mode::eval);
    Tensor z2 = embed(m, x2, Mode::eval);
    Tensor z1_again = embed(m, x1, Mode::eval);
    CHECK(z1.data == z1_again.data);
    CHECK(z1.data != z2.data);
}

TEST_CASE("embed of a batch equals its halves concatenated (eval mode)") {
    ModelSpec spec;
    spec.kind = ModelKind::BCNN;  // includes batchnorm: eval stats make rows independent
    spec.input_len = 64;
    spec.embed_dim = 8;
    Model m = build_model(spec, 9);
    Tensor full = random_input(spec, 6, 3);
    const std::size_t half_elems = full.numel() / 2;
    Tensor lo = Tensor::zeros(input_shape(spec, 3));
    Tensor hi = Tensor::zeros(input_shape(spec, 3));
    std::memcpy(lo.data.data(), full.data.data(), half_elems * sizeof(double));
    std::memcpy(hi.data.data(), full.data.data() + half_elems, half_elems * sizeof(double));
    Tensor z_full = embed(m, full, Mode::eval);
    Tensor z_lo = embed(m, lo, Mode::eval);
    Tensor z_hi = embed(m, hi, Mode::eval);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 8; ++j) {
            CHECK(z_full.at2(i, j) == z_lo.at2(i, j));
            CHECK(z_full.at2(3 + i, j) == z_hi.at2(i, j));
        }
}

TEST_CASE("embed is permutation-equivariant over the batch (eval mode)") {
    ModelSpec spec;
    spec.kind = ModelKind::FCN;
    spec.input_len = 32;
    spec.embed_dim = 8;
    Model m = build_model(spec, 15);
    Tensor batch = random_input(spec, 5, 2);
    Tensor permuted = Tensor::zeros(batch.shape);
    const std::size_t row = 2 * spec.input_len;
    const std::size_t perm[5] = {3, 0, 4, 1, 2};
    for (std::size_t i = 0; i < 5; ++i)
        std::memcpy(permuted.data.data() + i * row, batch.data.data() + perm[i] * row,
                    row * sizeof(double));
    Tensor z = embed(m, batch, Mode::eval);
    Tensor zp = embed(m, permuted, Mode::eval);
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 8; ++j) CHECK(zp.at2(i, j) == z.at2(perm[i], j));
}

TEST_CASE("predict_logits on degenerate and batched inputs") {
    ModelSpec spec;
    spec.kind = ModelKind::FCN;
    spec.input_len = 32;
    spec.embed_dim = 8;
    spec.n_classes = 3;
    Model m = build_model(spec, 21);

    // Zero classifier weights, fixed bias -> every row equals the bias.
    for (auto& v : m.head[0].params[0].value.data) v = 0.0;
    m.head[0].params[1].value.data = {0.5, -1.0, 2.0};
    Tensor batch = random_input(spec, 4, 5);
    Tensor logits = predict_logits(m, batch, Mode::eval);
    for (std::size_t b = 0; b < 4; ++b) {
        CHECK(logits.at2(b, 0) == 0.5);
        CHECK(logits.at2(b, 1) == -1.0);
        CHECK(logits.at2(b, 2) == 2.0);
    }

    // argmax(softmax) == argmax(logits)
    Model m2 = build_model(spec, 22);
    Tensor l2 = predict_logits(m2, batch, Mode::eval);
    Tensor p2 = softmax(l2, -1);
    for (std::size_t b = 0; b < 4; ++b) {
        std::size_t al = 0, ap = 0;
        for (std::size_t c = 1; c < 3; ++c) {
            if (l2.at2(b, c) > l2.at2(b, al)) al = c;
            if (p2.at2(b, c) > p2.at2(b, ap)) ap = c;
        }
        CHECK(al == ap);
    }

    // Single-row batch equals the matching row of a larger batch.
    Tensor eight = random_input(spec, 8, 77);
    Tensor one = Tensor::zeros(input_shape(spec, 1));
    const std::size_t row = 2 * spec.input_len;
    std::memcpy(one.data.data(), eight.data.data() + 5 * row, row * sizeof(double));
    Tensor l8 = predict_logits(m2, eight, Mode::eval);
    Tensor l1 = predict_logits(m2, one, Mode::eval);
    for (std::size_t c = 0; c < 3; ++c) CHECK(l1.at2(0, c) == l8.at2(5, c));

    // Headless model rejects logits.
    ModelSpec headless = spec;
    headless.n_classes = 0;
    Model mh = build_model(headless, 1);
    CHECK_THROWS_AS(predict_logits(mh, batch, Mode::eval), ValidationError);
}

TEST_CASE("autoencoders reconstruct shapes and explicit projections") {
    ModelSpec spec;
    spec.kind = ModelKind::verysimpleAE;
    spec.input_len = 8;
    spec.embed_dim = 4;
    Model m = build_model(spec, 2);

    Tensor batch = random_input(spec, 3, 9);
    Tensor rec = autoencode(m, batch, Mode::eval);
    CHECK(rec.shape == batch.shape);

    // Encoder = [I_4 | 0], decoder = its transpose, zero biases:
    // reconstruction equals the input restricted to the embedding rank.
    for (auto& v : m.fingerprint[0].params[0].value.data) v = 0.0;
    for (auto& v : m.head[0].params[0].value.data) v = 0.0;
    for (std::size_t k = 0; k < 4; ++k) {
        m.fingerprint[0].params[0].value.at2(k, k) = 1.0;  // 4 x 16 encoder
        m.head[0].params[0].value.at2(k, k) = 1.0;         // 16 x 4 decoder
    }
    for (auto& v : m.fingerprint[0].params[1].value.data) v = 0.0;
    for (auto& v : m.head[0].params[1].value.data) v = 0.0;
    Tensor proj = autoencode(m, batch, Mode::eval);
    for (std::size_t b = 0; b < 3; ++b)
        for (std::size_t j = 0; j < 16; ++j) {
            const double expect = j < 4 ? batch.at2(b, j) : 0.0;
            CHECK(proj.at2(b, j) == doctest::Approx(expect).epsilon(1e-12));
        }

    // Zero input with zero biases reconstructs to zero on a fresh model.
    for (auto kind : {ModelKind::simpleAE, ModelKind::vanillaAE, ModelKind::simpleconv1DAE}) {
        ModelSpec s2;
        s2.kind = kind;
        s2.input_len = 16;
        s2.embed_dim = 4;
        if (kind == ModelKind::simpleAE) s2.widths = {16, 8, 8};
        if (kind == ModelKind::vanillaAE) s2.widths = {16, 8};
        if (kind == ModelKind::simpleconv1DAE) s2.widths = {32, 16};
        Model ae = build_model(s2, 31);
        Tensor zero = Tensor::zeros(input_shape(s2, 2));
        Tensor rec0 = autoencode(ae, zero, Mode::eval);
        for (double v : rec0.data) CHECK(v == doctest::Approx(0.0).epsilon(1e-12));
    }

    // Non-AE models reject autoencode.
    ModelSpec fcn;
    fcn.kind = ModelKind::FCN;
    fcn.input_len = 8;
    fcn.embed_dim = 4;
    Model mf = build_model(fcn, 3);
    CHECK_THROWS_AS(autoencode(mf, batch, Mode::eval), ValidationError);
}

TEST_CASE("checkpoint round trip is bitwise on forward outputs") {
    ModelSpec spec;
    spec.kind = ModelKind::BCNN;
    spec.input_len = 64;
    spec.embed_dim = 8;
    spec.n_classes = 4;
    Model m = build_model(spec, 17);
    // Move running stats away from init so they participate in the trip.
    Tensor warm = random_input(spec, 4, 3);
    std::vector<LayerCache> caches;
    stack_forward(m.fingerprint, warm, Mode::train, &caches);

    const std::string path = temp_file("rffkit_ckpt_test.json");
    save_checkpoint(m, path, "{}", 17);
    Model loaded = load_checkpoint(path);

    Tensor probe = random_input(spec, 3, 23);
    Tensor a = predict_logits(m, probe, Mode::eval);
    Tensor b = predict_logits(loaded, probe, Mode::eval);
    REQUIRE(a.numel() == b.numel());
    CHECK(std::memcmp(a.data.data(), b.data.data(), a.numel() * sizeof(double)) == 0);

    // Truncated file is a structured error, not a partial model.
    std::ifstream in(path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const std::string trunc = temp_file("rffkit_ckpt_trunc.json");
    std::ofstream(trunc) << text.substr(0, text.size() / 2);
    CHECK_THROWS_AS(load_checkpoint(trunc), DataError);

    std::filesystem::remove(path);
    std::filesystem::remove(trunc);
}

TEST_CASE("every buildable model kind passes an end-to-end grad check") {
    // Probed at a healthy parameter point (unit layer gain, offset biases) so
    // deep pre-activations stay clear of the activation kink; minimum over a
    // few input draws guards the remaining near-kink coincidences. A wrong
    // gradient formula fails every draw at any parameter point.
    auto check_model = [](const ModelSpec& spec, std::size_t batch, double tol) {
        Model m = build_model(spec, 5);
        std::vector<Layer> stack = m.fingerprint;
        for (auto& l : m.head) stack.push_back(l);
        Rng prng(0xb1a5);
        for (auto& l : stack)
            for (auto& p : l.params) {
                if (p.name == "weight")
                    for (auto& v : p.value.data) v *= 2.5;
                else if (p.name == "bias")
                    for (auto& v : p.value.data) v = prng.uniform(-0.2, 0.2);
            }
        Rng rng(3);
        double err = std::numeric_limits<double>::infinity();
        for (int try_i = 0; try_i < 3; ++try_i) {
            Tensor in = Tensor::zeros(input_shape(spec, batch));
            for (auto& v : in.data) v = rng.normal(0.0, 1.0);
            err = std::min(err, grad_check(stack, in, 1e-5, Mode::train));
        }
        INFO(model_kind_name(spec.kind), " grad error ", err);
        CHECK(err < tol);
    };

    ModelSpec fcn;
    fcn.kind = ModelKind::FCN;
    fcn.input_len = 8;
    fcn.embed_dim = 4;
    fcn.n_classes = 3;
    fcn.widths = {8, 8};
    check_model(fcn, 3, 1e-5);

    ModelSpec bcnn;
    bcnn.kind = ModelKind::BCNN;
    bcnn.input_len = 32;
    bcnn.embed_dim = 4;
    bcnn.n_classes = 3;
    bcnn.widths = {3, 3, 3, 3, 3};
    check_model(bcnn, 2, 1e-5);

    ModelSpec sae;
    sae.kind = ModelKind::simpleAE;
    sae.input_len = 8;
    sae.embed_dim = 4;
    sae.widths = {12, 8, 6};
    check_model(sae, 6, 1e-5);

    ModelSpec vsae;
    vsae.kind = ModelKind::verysimpleAE;
    vsae.input_len = 8;
    vsae.embed_dim = 4;
    check_model(vsae, 6, 1e-5);

    ModelSpec cae;
    cae.kind = ModelKind::simpleconv1DAE;
    cae.input_len = 8;
    cae.embed_dim = 4;
    cae.widths = {16, 8};
    check_model(cae, 4, 1e-5);

    ModelSpec vae;
    vae.kind = ModelKind::vanillaAE;
    vae.input_len = 8;
    vae.embed_dim = 4;
    vae.widths = {12, 8};
    check_model(vae, 6, 1e-5);
}

TEST_CASE("model spec validation") {
    ModelSpec spec;
    spec.kind = ModelKind::FCN;
    spec.input_len = 8;
    spec.embed_dim = 1;  // too small
    CHECK_THROWS_AS(build_model(spec, 1), ValidationError);
    spec.embed_dim = 4;
    spec.kind = ModelKind::simpleAE;
    spec.n_classes = 3;  // AEs take no classifier
    CHECK_THROWS_AS(build_model(spec, 1), ValidationError);
}
