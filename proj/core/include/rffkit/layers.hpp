#pragma once

#include <cstdint>
#include <vector>

#include "rffkit/rng.hpp"
#include "rffkit/tensor.hpp"

namespace rffkit {

enum class LayerKind { linear, conv1d, maxpool1d, batchnorm1d, leaky_relu, flatten, softmax };

enum class Mode { train, eval };

struct LayerSpec {
    LayerKind kind;

    // linear
    std::size_t in_features = 0;
    std::size_t out_features = 0;

    // conv1d: valid convolution plus optional symmetric zero padding
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    std::size_t kernel = 0;
    std::size_t stride = 1;
    std::size_t padding = 0;

    // linear/conv1d: a bias feeding straight into batchnorm is redundant
    // (the mean subtraction cancels it exactly), so such layers are built
    // without one.
    bool has_bias = true;

    // maxpool1d
    std::size_t pool_window = 0;
    std::size_t pool_stride = 0;

    // batchnorm1d (channels = features for rank-2 input)
    std::size_t channels = 0;

    // leaky_relu
    double negative_slope = 0.01;

    static LayerSpec make_linear(std::size_t in, std::size_t out, bool bias = true) {
        LayerSpec s;
        s.kind = LayerKind::linear;
        s.in_features = in;
        s.out_features = out;
        s.has_bias = bias;
        return s;
    }
    static LayerSpec make_conv1d(std::size_t in_ch, std::size_t out_ch, std::size_t kernel,
                                 std::size_t stride = 1, std::size_t padding = 0,
                                 bool bias = true) {
        LayerSpec s;
        s.kind = LayerKind::conv1d;
        s.in_channels = in_ch;
        s.out_channels = out_ch;
        s.kernel = kernel;
        s.stride = stride;
        s.padding = padding;
        s.has_bias = bias;
        return s;
    }
    static LayerSpec make_maxpool1d(std::size_t window, std::size_t stride) {
        LayerSpec s;
        s.kind = LayerKind::maxpool1d;
        s.pool_window = window;
        s.pool_stride = stride;
        return s;
    }
    static LayerSpec make_batchnorm1d(std::size_t channels) {
        LayerSpec s;
        s.kind = LayerKind::batchnorm1d;
        s.channels = channels;
        return s;
    }
    static LayerSpec make_leaky_relu(double slope = 0.01) {
        LayerSpec s;
        s.kind = LayerKind::leaky_relu;
        s.negative_slope = slope;
        return s;
    }
    static LayerSpec make_flatten() {
        LayerSpec s;
        s.kind = LayerKind::flatten;
        return s;
    }
    static LayerSpec make_softmax() {
        LayerSpec s;
        s.kind = LayerKind::softmax;
        return s;
    }
};

// A layer owns its parameters; batchnorm also owns running statistics.
struct Layer {
    LayerSpec spec;
    std::vector<Parameter> params;  // linear/conv: {weight, bias}; batchnorm: {gamma, beta}
    Tensor running_mean;
    Tensor running_var;
    double bn_momentum = 0.1;
    double bn_eps = 1e-5;
};

// Initialized layer: weights uniform in +-sqrt(1/fan_in), biases zero,
// gamma = 1, beta = 0, running stats (0, 1).
Layer make_layer(const LayerSpec& spec, Rng& rng);

// What forward keeps around so backward can run.
struct LayerCache {
    Mode mode = Mode::train;
    Tensor input;
    Tensor xhat;                      // batchnorm
    Tensor inv_std;                   // batchnorm, per channel
    Tensor mean;                      // batchnorm, per channel (train)
    Tensor output;                    // softmax
    std::vector<std::size_t> argmax;  // maxpool winners (flat input index)
};

// Output shape for an input shape; throws ValidationError on mismatch.
std::vector<std::size_t> layer_output_shape(const LayerSpec& spec,
                                            const std::vector<std::size_t>& in_shape);

// Forward pass. In train mode batchnorm uses batch statistics and updates the
// running ones; in eval mode it uses the running statistics. `cache` may be
// null for inference-only calls.
Tensor layer_forward(Layer& layer, const Tensor& input, Mode mode, LayerCache* cache);

// Backward pass for a matching forward call. Returns the input gradient and
// accumulates parameter gradients into Parameter::grad.
Tensor layer_backward(Layer& layer, const LayerCache& cache, const Tensor& upstream);

// Sequential stack helpers.
Tensor stack_forward(std::vector<Layer>& stack, const Tensor& input, Mode mode,
                     std::vector<LayerCache>* caches);
Tensor stack_backward(std::vector<Layer>& stack, const std::vector<LayerCache>& caches,
                      const Tensor& upstream);

// Max-shifted softmax along `axis` (negative counts from the back).
Tensor softmax(const Tensor& logits, int axis = -1);

// Central finite differences of a summed-output loss against the analytic
// gradients, over every parameter and input coordinate. Returns the max of
// |a - n| / max(|a|, |n|, 1e-12). Running statistics are restored afterwards.
double grad_check(std::vector<Layer>& stack, const Tensor& input, double eps,
                  Mode mode = Mode::train);

}  // namespace rffkit
