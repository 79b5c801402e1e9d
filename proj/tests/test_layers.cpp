#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "rffkit/layers.hpp"
#include "rffkit/rng.hpp"

using namespace rffkit;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double scale = 1.0) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (auto& v : t.data) v = rng.normal(0.0, scale);
    return t;
}

// Independent brute-force conv1d used as the forward oracle.
Tensor conv1d_reference(const Tensor& in, const Tensor& w, const Tensor& bias, std::size_t stride,
                        std::size_t padding) {
    const std::size_t batch = in.dim(0), ic = in.dim(1), len = in.dim(2);
    const std::size_t oc = w.dim(0), kernel = w.dim(2);
    const std::size_t out_len = (len + 2 * padding - kernel) / stride + 1;
    Tensor out = Tensor::zeros({batch, oc, out_len});
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t o = 0; o < oc; ++o)
            for (std::size_t t = 0; t < out_len; ++t) {
                double acc = bias.data[o];
                for (std::size_t c = 0; c < ic; ++c)
                    for (std::size_t k = 0; k < kernel; ++k) {
                        const auto src = static_cast<std::ptrdiff_t>(t * stride + k) -
                                         static_cast<std::ptrdiff_t>(padding);
                        if (src >= 0 && src < static_cast<std::ptrdiff_t>(len))
                            acc += w.at3(o, c, k) * in.at3(b, c, static_cast<std::size_t>(src));
                    }
                out.at3(b, o, t) = acc;
            }
    return out;
}

}  // namespace

TEST_CASE("linear identity map") {
    Rng rng(1);
    Layer lin = make_layer(LayerSpec::make_linear(3, 3), rng);
    for (auto& v : lin.params[0].value.data) v = 0.0;
    for (std::size_t i = 0; i < 3; ++i) lin.params[0].value.at2(i, i) = 1.0;
    Tensor in{{1, 3}, {1.0, 2.0, 3.0}};
    Tensor out = layer_forward(lin, in, Mode::eval, nullptr);
    CHECK(out.data == std::vector<double>{1.0, 2.0, 3.0});
}

TEST_CASE("conv1d box filter") {
    Rng rng(1);
    Layer conv = make_layer(LayerSpec::make_conv1d(1, 1, 3), rng);
    for (auto& v : conv.params[0].value.data) v = 1.0;
    conv.params[1].value.data[0] = 0.0;
    Tensor in = Tensor::full({1, 1, 8}, 1.0);
    Tensor out = layer_forward(conv, in, Mode::eval, nullptr);
    REQUIRE(out.shape == std::vector<std::size_t>{1, 1, 6});
    for (double v : out.data) CHECK(v == 3.0);
}

TEST_CASE("maxpool window 2 stride 2") {
    Rng rng(1);
    Layer pool = make_layer(LayerSpec::make_maxpool1d(2, 2), rng);
    Tensor in{{1, 1, 4}, {1.0, 3.0, 2.0, 5.0}};
    Tensor out = layer_forward(pool, in, Mode::eval, nullptr);
    CHECK(out.data == std::vector<double>{3.0, 5.0});
}

TEST_CASE("batchnorm train mode on a two-sample batch") {
    Rng rng(1);
    Layer bn = make_layer(LayerSpec::make_batchnorm1d(1), rng);
    Tensor in{{2, 1}, {1.0, 3.0}};
    Tensor out = layer_forward(bn, in, Mode::train, nullptr);
    // mu = 2, biased var = 1: outputs (x - mu) / sqrt(1 + 1e-5)
    CHECK(out.data[0] == doctest::Approx(-1.0).epsilon(1e-4));
    CHECK(out.data[1] == doctest::Approx(1.0).epsilon(1e-4));
    CHECK_THROWS_AS(layer_forward(bn, Tensor{{1, 1}, {2.0}}, Mode::train, nullptr),
                    ValidationError);
}

TEST_CASE("leaky relu backward piecewise derivative") {
    Rng rng(1);
    Layer lr = make_layer(LayerSpec::make_leaky_relu(0.01), rng);
    Tensor in{{1, 2}, {-2.0, 3.0}};
    LayerCache cache;
    layer_forward(lr, in, Mode::train, &cache);
    Tensor gin = layer_backward(lr, cache, Tensor{{1, 2}, {1.0, 1.0}});
    CHECK(gin.data[0] == 0.01);
    CHECK(gin.data[1] == 1.0);
}

TEST_CASE("linear weight gradient matches the hand-computed 2x2 case") {
    Rng rng(1);
    Layer lin = make_layer(LayerSpec::make_linear(2, 2), rng);
    Tensor in{{2, 2}, {1.0, 2.0, 3.0, 4.0}};
    Tensor g{{2, 2}, {0.5, -1.0, 2.0, 0.25}};
    LayerCache cache;
    layer_forward(lin, in, Mode::train, &cache);
    layer_backward(lin, cache, g);
    // dW[o][i] = sum_b g[b][o] * x[b][i]
    CHECK(lin.params[0].grad.at2(0, 0) == doctest::Approx(0.5 * 1 + 2.0 * 3).epsilon(1e-12));
    CHECK(lin.params[0].grad.at2(0, 1) == doctest::Approx(0.5 * 2 + 2.0 * 4).epsilon(1e-12));
    CHECK(lin.params[0].grad.at2(1, 0) == doctest::Approx(-1.0 * 1 + 0.25 * 3).epsilon(1e-12));
    CHECK(lin.params[0].grad.at2(1, 1) == doctest::Approx(-1.0 * 2 + 0.25 * 4).epsilon(1e-12));
    CHECK(lin.params[1].grad.data == std::vector<double>{2.5, -0.75});
}

TEST_CASE("zero upstream produces zero gradients") {
    Rng rng(3);
    Layer lin = make_layer(LayerSpec::make_linear(4, 3), rng);
    Tensor in = random_tensor({2, 4}, rng);
    LayerCache cache;
    layer_forward(lin, in, Mode::train, &cache);
    Tensor gin = layer_backward(lin, cache, Tensor::zeros({2, 3}));
    for (double v : gin.data) CHECK(v == 0.0);
    for (const auto& p : lin.params)
        for (double v : p.grad.data) CHECK(v == 0.0);
}

TEST_CASE("grad_check per layer kind") {
    Rng rng(7);

    SUBCASE("linear") {
        std::vector<Layer> stack{make_layer(LayerSpec::make_linear(3, 5), rng)};
        CHECK(grad_check(stack, random_tensor({4, 3}, rng), 1e-5) < 1e-6);
    }
    SUBCASE("conv1d with padding and stride") {
        std::vector<Layer> stack{make_layer(LayerSpec::make_conv1d(2, 3, 3, 1, 1), rng)};
        CHECK(grad_check(stack, random_tensor({2, 2, 8}, rng), 1e-5) < 1e-5);
    }
    SUBCASE("maxpool") {
        std::vector<Layer> stack{make_layer(LayerSpec::make_maxpool1d(2, 2), rng)};
        CHECK(grad_check(stack, random_tensor({2, 2, 8}, rng), 1e-5) < 1e-5);
    }
    SUBCASE("batchnorm train mode") {
        std::vector<Layer> stack{make_layer(LayerSpec::make_batchnorm1d(3), rng)};
        CHECK(grad_check(stack, random_tensor({5, 3}, rng), 1e-5, Mode::train) < 1e-5);
    }
    SUBCASE("batchnorm rank 3 train mode") {
        std::vector<Layer> stack{make_layer(LayerSpec::make_batchnorm1d(2), rng)};
        CHECK(grad_check(stack, random_tensor({3, 2, 4}, rng), 1e-5, Mode::train) < 1e-5);
    }
    SUBCASE("leaky relu") {
        std::vector<Layer> stack{make_layer(LayerSpec::make_leaky_relu(), rng)};
        CHECK(grad_check(stack, random_tensor({3, 6}, rng), 1e-5) < 1e-5);
    }
    SUBCASE("flatten") {
        std::vector<Layer> stack{make_layer(LayerSpec::make_flatten(), rng)};
        CHECK(grad_check(stack, random_tensor({2, 3, 4}, rng), 1e-5) < 1e-6);
    }
    SUBCASE("softmax") {
        std::vector<Layer> stack{make_layer(LayerSpec::make_softmax(), rng)};
        CHECK(grad_check(stack, random_tensor({3, 4}, rng), 1e-5) < 1e-5);
    }
    SUBCASE("composition conv -> leaky_relu -> flatten -> linear") {
        std::vector<Layer> stack;
        stack.push_back(make_layer(LayerSpec::make_conv1d(2, 3, 3), rng));
        stack.push_back(make_layer(LayerSpec::make_leaky_relu(), rng));
        stack.push_back(make_layer(LayerSpec::make_flatten(), rng));
        stack.push_back(make_layer(LayerSpec::make_linear(3 * 6, 4), rng));
        CHECK(grad_check(stack, random_tensor({2, 2, 8}, rng), 1e-5) < 1e-5);
    }
}

TEST_CASE("grad_check of a frozen linear layer on zero input is roundoff-exact") {
    // All derivatives are constant, so central differences are exact up to
    // the rounding of the weighted loss sum.
    Rng rng(9);
    Layer lin = make_layer(LayerSpec::make_linear(3, 3), rng);
    for (auto& p : lin.params)
        for (auto& v : p.value.data) v = 0.0;
    std::vector<Layer> stack{std::move(lin)};
    CHECK(grad_check(stack, Tensor::zeros({2, 3}), 1e-5) < 1e-12);
}

TEST_CASE("conv1d equals the brute-force reference on random tensors") {
    Rng rng(11);
    for (int trial = 0; trial < 6; ++trial) {
        const std::size_t stride = 1 + static_cast<std::size_t>(trial % 2);
        const std::size_t padding = static_cast<std::size_t>(trial % 3);
        const std::size_t kernel = 3 + 2 * static_cast<std::size_t>(trial % 2);
        std::size_t len = 16;
        while ((len + 2 * padding - kernel) % stride != 0) ++len;
        Layer conv = make_layer(LayerSpec::make_conv1d(2, 3, kernel, stride, padding), rng);
        Tensor in = random_tensor({2, 2, len}, rng);
        Tensor got = layer_forward(conv, in, Mode::eval, nullptr);
        Tensor want = conv1d_reference(in, conv.params[0].value, conv.params[1].value, stride,
                                       padding);
        REQUIRE(got.shape == want.shape);
        for (std::size_t i = 0; i < got.numel(); ++i)
            CHECK(std::abs(got.data[i] - want.data[i]) <= 1e-12);
    }
}

TEST_CASE("batchnorm eval mode is affine (superposition)") {
    Rng rng(13);
    Layer bn = make_layer(LayerSpec::make_batchnorm1d(3), rng);
    // Move the running stats off their init values first.
    layer_forward(bn, random_tensor({8, 3}, rng), Mode::train, nullptr);
    for (auto& v : bn.params[0].value.data) v = rng.normal(1.0, 0.2);
    for (auto& v : bn.params[1].value.data) v = rng.normal(0.0, 0.2);

    Tensor x1 = random_tensor({2, 3}, rng);
    Tensor x2 = random_tensor({2, 3}, rng);
    Tensor sum = x1;
    for (std::size_t i = 0; i < sum.numel(); ++i) sum.data[i] += x2.data[i];
    Tensor f1 = layer_forward(bn, x1, Mode::eval, nullptr);
    Tensor f2 = layer_forward(bn, x2, Mode::eval, nullptr);
    Tensor f0 = layer_forward(bn, Tensor::zeros({2, 3}), Mode::eval, nullptr);
    Tensor fsum = layer_forward(bn, sum, Mode::eval, nullptr);
    for (std::size_t i = 0; i < fsum.numel(); ++i)
        CHECK(f1.data[i] + f2.data[i] - f0.data[i] ==
              doctest::Approx(fsum.data[i]).epsilon(1e-12));
}

TEST_CASE("softmax examples and stability") {
    Tensor t1{{1, 3}, {0.0, 0.0, 0.0}};
    Tensor s1 = softmax(t1, -1);
    for (double v : s1.data) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

    Tensor t2{{1, 2}, {1000.0, 0.0}};
    Tensor s2 = softmax(t2, -1);
    CHECK(s2.data[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(s2.data[1] == doctest::Approx(0.0).epsilon(1e-12));

    Tensor t3{{1, 2}, {std::log(2.0), 0.0}};
    Tensor s3 = softmax(t3, -1);
    CHECK(std::abs(s3.data[0] - 2.0 / 3.0) < 1e-12);
    CHECK(std::abs(s3.data[1] - 1.0 / 3.0) < 1e-12);

    Rng rng(4);
    Tensor t4 = random_tensor({3, 7}, rng, 5.0);
    Tensor s4 = softmax(t4, -1);
    for (std::size_t r = 0; r < 3; ++r) {
        double sum = 0.0;
        for (std::size_t c = 0; c < 7; ++c) sum += s4.at2(r, c);
        CHECK(std::abs(sum - 1.0) <= 1e-12);
    }
}

TEST_CASE("forward determinism is bitwise") {
    Rng rng(21);
    std::vector<Layer> stack;
    stack.push_back(make_layer(LayerSpec::make_conv1d(2, 4, 3, 1, 1), rng));
    stack.push_back(make_layer(LayerSpec::make_batchnorm1d(4), rng));
    stack.push_back(make_layer(LayerSpec::make_leaky_relu(), rng));
    stack.push_back(make_layer(LayerSpec::make_flatten(), rng));
    Tensor in = random_tensor({3, 2, 8}, rng);
    Tensor a = stack_forward(stack, in, Mode::eval, nullptr);
    Tensor b = stack_forward(stack, in, Mode::eval, nullptr);
    CHECK(a.data == b.data);
}

TEST_CASE("shape validation errors") {
    Rng rng(2);
    Layer lin = make_layer(LayerSpec::make_linear(4, 2), rng);
    CHECK_THROWS_AS(layer_forward(lin, Tensor::zeros({2, 5}), Mode::eval, nullptr),
                    ValidationError);
    CHECK_THROWS_AS(layer_output_shape(LayerSpec::make_conv1d(1, 1, 3, 2, 0), {1, 1, 8}),
                    ValidationError);  // (8-3) not divisible by 2
    LayerCache cache;
    layer_forward(lin, Tensor::zeros({2, 4}), Mode::train, &cache);
    CHECK_THROWS_AS(layer_backward(lin, cache, Tensor::zeros({2, 3})), ValidationError);
}
