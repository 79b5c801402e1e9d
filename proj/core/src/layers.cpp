#include "rffkit/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "rffkit/common.hpp"
#include "rffkit/parallel.hpp"

namespace rffkit {

namespace {

void require(bool cond, const std::string& msg) {
    if (!cond) throw ValidationError(msg);
}

std::size_t conv_out_len(std::size_t len, std::size_t kernel, std::size_t stride,
                         std::size_t padding) {
    const std::size_t padded = len + 2 * padding;
    require(padded >= kernel, "conv1d kernel longer than padded input");
    require((padded - kernel) % stride == 0, "conv1d output length is not an integer");
    return (padded - kernel) / stride + 1;
}

std::size_t pool_out_len(std::size_t len, std::size_t window, std::size_t stride) {
    require(len >= window, "maxpool1d window longer than input");
    require((len - window) % stride == 0, "maxpool1d output length is not an integer");
    return (len - window) / stride + 1;
}

// Batchnorm views rank-2 input as (B, C) and rank-3 as (B, C, L); statistics
// are per channel over the remaining axes.
struct BnLayout {
    std::size_t batch, channels, inner;
    std::size_t index(std::size_t b, std::size_t c, std::size_t l) const {
        return (b * channels + c) * inner + l;
    }
};

BnLayout bn_layout(const Tensor& x, std::size_t channels) {
    require(x.rank() == 2 || x.rank() == 3, "batchnorm1d expects rank-2 or rank-3 input");
    BnLayout lo{};
    lo.batch = x.dim(0);
    lo.channels = x.dim(1);
    lo.inner = x.rank() == 3 ? x.dim(2) : 1;
    require(lo.channels == channels, "batchnorm1d channel mismatch");
    return lo;
}

}  // namespace

Layer make_layer(const LayerSpec& spec, Rng& rng) {
    Layer layer;
    layer.spec = spec;
    auto init_uniform = [&rng](Tensor& t, double bound) {
        for (auto& v : t.data) v = rng.uniform(-bound, bound);
    };
    switch (spec.kind) {
        case LayerKind::linear: {
            require(spec.in_features > 0 && spec.out_features > 0, "linear sizes must be positive");
            Tensor w = Tensor::zeros({spec.out_features, spec.in_features});
            init_uniform(w, std::sqrt(1.0 / static_cast<double>(spec.in_features)));
            layer.params.emplace_back("weight", std::move(w));
            if (spec.has_bias) layer.params.emplace_back("bias", Tensor::zeros({spec.out_features}));
            break;
        }
        case LayerKind::conv1d: {
            require(spec.in_channels > 0 && spec.out_channels > 0 && spec.kernel > 0 &&
                        spec.stride > 0,
                    "conv1d sizes must be positive");
            Tensor w = Tensor::zeros({spec.out_channels, spec.in_channels, spec.kernel});
            init_uniform(w, std::sqrt(1.0 / static_cast<double>(spec.in_channels * spec.kernel)));
            layer.params.emplace_back("weight", std::move(w));
            if (spec.has_bias) layer.params.emplace_back("bias", Tensor::zeros({spec.out_channels}));
            break;
        }
        case LayerKind::batchnorm1d: {
            require(spec.channels > 0, "batchnorm1d channel count must be positive");
            layer.params.emplace_back("gamma", Tensor::full({spec.channels}, 1.0));
            layer.params.emplace_back("beta", Tensor::zeros({spec.channels}));
            layer.running_mean = Tensor::zeros({spec.channels});
            layer.running_var = Tensor::full({spec.channels}, 1.0);
            break;
        }
        case LayerKind::maxpool1d:
            require(spec.pool_window > 0 && spec.pool_stride > 0, "maxpool sizes must be positive");
            break;
        case LayerKind::leaky_relu:
        case LayerKind::flatten:
        case LayerKind::softmax:
            break;
    }
    return layer;
}

std::vector<std::size_t> layer_output_shape(const LayerSpec& spec,
                                            const std::vector<std::size_t>& in) {
    switch (spec.kind) {
        case LayerKind::linear:
            require(in.size() == 2 && in[1] == spec.in_features, "linear input shape mismatch");
            return {in[0], spec.out_features};
        case LayerKind::conv1d:
            require(in.size() == 3 && in[1] == spec.in_channels, "conv1d input shape mismatch");
            return {in[0], spec.out_channels, conv_out_len(in[2], spec.kernel, spec.stride, spec.padding)};
        case LayerKind::maxpool1d:
            require(in.size() == 3, "maxpool1d expects rank-3 input");
            return {in[0], in[1], pool_out_len(in[2], spec.pool_window, spec.pool_stride)};
        case LayerKind::batchnorm1d:
            require((in.size() == 2 || in.size() == 3) && in[1] == spec.channels,
                    "batchnorm1d input shape mismatch");
            return in;
        case LayerKind::leaky_relu:
        case LayerKind::softmax:
            return in;
        case LayerKind::flatten: {
            require(in.size() >= 2, "flatten expects a batch dimension");
            std::size_t flat = 1;
            for (std::size_t i = 1; i < in.size(); ++i) flat *= in[i];
            return {in[0], flat};
        }
    }
    throw ValidationError("unknown layer kind");
}

namespace {

Tensor linear_forward(const Layer& layer, const Tensor& in) {
    const std::size_t batch = in.dim(0);
    const std::size_t nin = layer.spec.in_features;
    const std::size_t nout = layer.spec.out_features;
    Tensor out = Tensor::zeros({batch, nout});
    const double* w = layer.params[0].value.data.data();
    const double* bias = layer.spec.has_bias ? layer.params[1].value.data.data() : nullptr;
    const double* x = in.data.data();
    double* y = out.data.data();
    parallel_for(batch, [&](std::size_t b0, std::size_t b1) {
        for (std::size_t b = b0; b < b1; ++b) {
            const double* xb = x + b * nin;
            double* yb = y + b * nout;
            for (std::size_t o = 0; o < nout; ++o) {
                const double* wo = w + o * nin;
                double acc = bias ? bias[o] : 0.0;
                for (std::size_t i = 0; i < nin; ++i) acc += wo[i] * xb[i];
                yb[o] = acc;
            }
        }
    });
    return out;
}

Tensor linear_backward(Layer& layer, const LayerCache& cache, const Tensor& gout) {
    const Tensor& in = cache.input;
    const std::size_t batch = in.dim(0);
    const std::size_t nin = layer.spec.in_features;
    const std::size_t nout = layer.spec.out_features;
    Tensor gin = Tensor::zeros(in.shape);
    const double* w = layer.params[0].value.data.data();
    const double* x = in.data.data();
    const double* g = gout.data.data();

    parallel_for(batch, [&](std::size_t b0, std::size_t b1) {
        for (std::size_t b = b0; b < b1; ++b) {
            const double* gb = g + b * nout;
            double* gib = gin.data.data() + b * nin;
            for (std::size_t o = 0; o < nout; ++o) {
                const double go = gb[o];
                if (go == 0.0) continue;
                const double* wo = w + o * nin;
                for (std::size_t i = 0; i < nin; ++i) gib[i] += go * wo[i];
            }
        }
    });

    double* gw = layer.params[0].grad.data.data();
    double* gbias = layer.spec.has_bias ? layer.params[1].grad.data.data() : nullptr;
    parallel_for(nout, [&](std::size_t o0, std::size_t o1) {
        for (std::size_t o = o0; o < o1; ++o) {
            double* gwo = gw + o * nin;
            double acc_bias = 0.0;
            for (std::size_t b = 0; b < batch; ++b) {
                const double go = g[b * nout + o];
                acc_bias += go;
                if (go == 0.0) continue;
                const double* xb = x + b * nin;
                for (std::size_t i = 0; i < nin; ++i) gwo[i] += go * xb[i];
            }
            if (gbias) gbias[o] += acc_bias;
        }
    });
    return gin;
}

Tensor conv1d_forward(const Layer& layer, const Tensor& in) {
    const auto& s = layer.spec;
    const std::size_t batch = in.dim(0);
    const std::size_t len = in.dim(2);
    const std::size_t out_len = conv_out_len(len, s.kernel, s.stride, s.padding);
    Tensor out = Tensor::zeros({batch, s.out_channels, out_len});
    const double* w = layer.params[0].value.data.data();
    const double* bias = layer.spec.has_bias ? layer.params[1].value.data.data() : nullptr;

    parallel_for(batch, [&](std::size_t b0, std::size_t b1) {
        for (std::size_t b = b0; b < b1; ++b) {
            for (std::size_t oc = 0; oc < s.out_channels; ++oc) {
                double* yo = out.data.data() + (b * s.out_channels + oc) * out_len;
                for (std::size_t t = 0; t < out_len; ++t) yo[t] = bias ? bias[oc] : 0.0;
                for (std::size_t ic = 0; ic < s.in_channels; ++ic) {
                    const double* xi = in.data.data() + (b * s.in_channels + ic) * len;
                    const double* wk = w + (oc * s.in_channels + ic) * s.kernel;
                    for (std::size_t t = 0; t < out_len; ++t) {
                        const std::ptrdiff_t base =
                            static_cast<std::ptrdiff_t>(t * s.stride) -
                            static_cast<std::ptrdiff_t>(s.padding);
                        double acc = 0.0;
                        for (std::size_t k = 0; k < s.kernel; ++k) {
                            const std::ptrdiff_t src = base + static_cast<std::ptrdiff_t>(k);
                            if (src >= 0 && src < static_cast<std::ptrdiff_t>(len))
                                acc += wk[k] * xi[src];
                        }
                        yo[t] += acc;
                    }
                }
            }
        }
    });
    return out;
}

Tensor conv1d_backward(Layer& layer, const LayerCache& cache, const Tensor& gout) {
    const auto& s = layer.spec;
    const Tensor& in = cache.input;
    const std::size_t batch = in.dim(0);
    const std::size_t len = in.dim(2);
    const std::size_t out_len = gout.dim(2);
    Tensor gin = Tensor::zeros(in.shape);
    const double* w = layer.params[0].value.data.data();

    parallel_for(batch, [&](std::size_t b0, std::size_t b1) {
        for (std::size_t b = b0; b < b1; ++b) {
            for (std::size_t oc = 0; oc < s.out_channels; ++oc) {
                const double* go = gout.data.data() + (b * s.out_channels + oc) * out_len;
                for (std::size_t ic = 0; ic < s.in_channels; ++ic) {
                    double* gi = gin.data.data() + (b * s.in_channels + ic) * len;
                    const double* wk = w + (oc * s.in_channels + ic) * s.kernel;
                    for (std::size_t t = 0; t < out_len; ++t) {
                        const double g = go[t];
                        if (g == 0.0) continue;
                        const std::ptrdiff_t base =
                            static_cast<std::ptrdiff_t>(t * s.stride) -
                            static_cast<std::ptrdiff_t>(s.padding);
                        for (std::size_t k = 0; k < s.kernel; ++k) {
                            const std::ptrdiff_t src = base + static_cast<std::ptrdiff_t>(k);
                            if (src >= 0 && src < static_cast<std::ptrdiff_t>(len))
                                gi[src] += g * wk[k];
                        }
                    }
                }
            }
        }
    });

    double* gw = layer.params[0].grad.data.data();
    double* gbias = layer.spec.has_bias ? layer.params[1].grad.data.data() : nullptr;
    parallel_for(s.out_channels, [&](std::size_t oc0, std::size_t oc1) {
        for (std::size_t oc = oc0; oc < oc1; ++oc) {
            double acc_bias = 0.0;
            for (std::size_t b = 0; b < batch; ++b) {
                const double* go = gout.data.data() + (b * s.out_channels + oc) * out_len;
                for (std::size_t t = 0; t < out_len; ++t) acc_bias += go[t];
                for (std::size_t ic = 0; ic < s.in_channels; ++ic) {
                    const double* xi = cache.input.data.data() + (b * s.in_channels + ic) * len;
                    double* gwk = gw + (oc * s.in_channels + ic) * s.kernel;
                    for (std::size_t t = 0; t < out_len; ++t) {
                        const double g = go[t];
                        if (g == 0.0) continue;
                        const std::ptrdiff_t base =
                            static_cast<std::ptrdiff_t>(t * s.stride) -
                            static_cast<std::ptrdiff_t>(s.padding);
                        for (std::size_t k = 0; k < s.kernel; ++k) {
                            const std::ptrdiff_t src = base + static_cast<std::ptrdiff_t>(k);
                            if (src >= 0 && src < static_cast<std::ptrdiff_t>(len))
                                gwk[k] += g * xi[src];
                        }
                    }
                }
            }
            if (gbias) gbias[oc] += acc_bias;
        }
    });
    return gin;
}

Tensor maxpool_forward(const Layer& layer, const Tensor& in, LayerCache* cache) {
    const auto& s = layer.spec;
    const std::size_t batch = in.dim(0);
    const std::size_t ch = in.dim(1);
    const std::size_t len = in.dim(2);
    const std::size_t out_len = pool_out_len(len, s.pool_window, s.pool_stride);
    Tensor out = Tensor::zeros({batch, ch, out_len});
    if (cache) cache->argmax.assign(out.numel(), 0);
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t c = 0; c < ch; ++c) {
            const double* xi = in.data.data() + (b * ch + c) * len;
            double* yo = out.data.data() + (b * ch + c) * out_len;
            for (std::size_t t = 0; t < out_len; ++t) {
                const std::size_t start = t * s.pool_stride;
                std::size_t best = start;
                double best_v = xi[start];
                for (std::size_t k = 1; k < s.pool_window; ++k) {
                    if (xi[start + k] > best_v) {  // first max wins ties
                        best_v = xi[start + k];
                        best = start + k;
                    }
                }
                yo[t] = best_v;
                if (cache) cache->argmax[(b * ch + c) * out_len + t] = (b * ch + c) * len + best;
            }
        }
    }
    return out;
}

Tensor maxpool_backward(const LayerCache& cache, const Tensor& gout) {
    Tensor gin = Tensor::zeros(cache.input.shape);
    for (std::size_t i = 0; i < gout.numel(); ++i) gin.data[cache.argmax[i]] += gout.data[i];
    return gin;
}

Tensor batchnorm_forward(Layer& layer, const Tensor& in, Mode mode, LayerCache* cache) {
    const BnLayout lo = bn_layout(in, layer.spec.channels);
    const std::size_t n = lo.batch * lo.inner;
    if (mode == Mode::train && lo.batch < 2)
        throw ValidationError("batchnorm1d train mode needs batch size >= 2");

    const double* gamma = layer.params[0].value.data.data();
    const double* beta = layer.params[1].value.data.data();
    Tensor out = Tensor::zeros(in.shape);
    Tensor xhat = Tensor::zeros(in.shape);
    Tensor inv_std = Tensor::zeros({lo.channels});
    Tensor mean = Tensor::zeros({lo.channels});

    for (std::size_t c = 0; c < lo.channels; ++c) {
        double mu, var;
        if (mode == Mode::train) {
            double sum = 0.0;
            for (std::size_t b = 0; b < lo.batch; ++b)
                for (std::size_t l = 0; l < lo.inner; ++l) sum += in.data[lo.index(b, c, l)];
            mu = sum / static_cast<double>(n);
            double ss = 0.0;
            for (std::size_t b = 0; b < lo.batch; ++b)
                for (std::size_t l = 0; l < lo.inner; ++l) {
                    const double d = in.data[lo.index(b, c, l)] - mu;
                    ss += d * d;
                }
            var = ss / static_cast<double>(n);  // biased
            layer.running_mean.data[c] =
                (1.0 - layer.bn_momentum) * layer.running_mean.data[c] + layer.bn_momentum * mu;
            layer.running_var.data[c] =
                (1.0 - layer.bn_momentum) * layer.running_var.data[c] + layer.bn_momentum * var;
        } else {
            mu = layer.running_mean.data[c];
            var = layer.running_var.data[c];
        }
        const double istd = 1.0 / std::sqrt(var + layer.bn_eps);
        inv_std.data[c] = istd;
        mean.data[c] = mu;
        for (std::size_t b = 0; b < lo.batch; ++b)
            for (std::size_t l = 0; l < lo.inner; ++l) {
                const std::size_t i = lo.index(b, c, l);
                const double xh = (in.data[i] - mu) * istd;
                xhat.data[i] = xh;
                out.data[i] = gamma[c] * xh + beta[c];
            }
    }
    if (cache) {
        cache->xhat = std::move(xhat);
        cache->inv_std = std::move(inv_std);
        cache->mean = std::move(mean);
    }
    return out;
}

Tensor batchnorm_backward(Layer& layer, const LayerCache& cache, const Tensor& gout) {
    const BnLayout lo = bn_layout(cache.input, layer.spec.channels);
    const double n = static_cast<double>(lo.batch * lo.inner);
    const double* gamma = layer.params[0].value.data.data();
    double* dgamma = layer.params[0].grad.data.data();
    double* dbeta = layer.params[1].grad.data.data();
    Tensor gin = Tensor::zeros(cache.input.shape);

    for (std::size_t c = 0; c < lo.channels; ++c) {
        const double istd = cache.inv_std.data[c];
        double sum_g = 0.0, sum_gx = 0.0;
        for (std::size_t b = 0; b < lo.batch; ++b)
            for (std::size_t l = 0; l < lo.inner; ++l) {
                const std::size_t i = lo.index(b, c, l);
                sum_g += gout.data[i];
                sum_gx += gout.data[i] * cache.xhat.data[i];
            }
        dgamma[c] += sum_gx;
        dbeta[c] += sum_g;

        if (cache.mode == Mode::eval) {
            // Affine map with frozen statistics.
            const double scale = gamma[c] * istd;
            for (std::size_t b = 0; b < lo.batch; ++b)
                for (std::size_t l = 0; l < lo.inner; ++l) {
                    const std::size_t i = lo.index(b, c, l);
                    gin.data[i] = gout.data[i] * scale;
                }
        } else {
            // dL/dx = (gamma * istd / n) * (n * g - sum_g - xhat * sum_gx)
            const double scale = gamma[c] * istd / n;
            for (std::size_t b = 0; b < lo.batch; ++b)
                for (std::size_t l = 0; l < lo.inner; ++l) {
                    const std::size_t i = lo.index(b, c, l);
                    gin.data[i] =
                        scale * (n * gout.data[i] - sum_g - cache.xhat.data[i] * sum_gx);
                }
        }
    }
    return gin;
}

}  // namespace

Tensor layer_forward(Layer& layer, const Tensor& input, Mode mode, LayerCache* cache) {
    layer_output_shape(layer.spec, input.shape);  // shape validation
    if (cache) {
        cache->mode = mode;
        cache->input = input;
    }
    switch (layer.spec.kind) {
        case LayerKind::linear:
            return linear_forward(layer, input);
        case LayerKind::conv1d:
            return conv1d_forward(layer, input);
        case LayerKind::maxpool1d:
            return maxpool_forward(layer, input, cache);
        case LayerKind::batchnorm1d:
            return batchnorm_forward(layer, input, mode, cache);
        case LayerKind::leaky_relu: {
            Tensor out = input;
            const double slope = layer.spec.negative_slope;
            for (auto& v : out.data)
                if (v <= 0.0) v *= slope;
            return out;
        }
        case LayerKind::flatten: {
            Tensor out = input;
            out.shape = layer_output_shape(layer.spec, input.shape);
            return out;
        }
        case LayerKind::softmax: {
            Tensor out = softmax(input, -1);
            if (cache) cache->output = out;
            return out;
        }
    }
    throw ValidationError("unknown layer kind");
}

Tensor layer_backward(Layer& layer, const LayerCache& cache, const Tensor& upstream) {
    const auto expected = layer_output_shape(layer.spec, cache.input.shape);
    if (upstream.shape != expected)
        throw ValidationError("upstream gradient shape mismatch: got " + shape_str(upstream));
    switch (layer.spec.kind) {
        case LayerKind::linear:
            return linear_backward(layer, cache, upstream);
        case LayerKind::conv1d:
            return conv1d_backward(layer, cache, upstream);
        case LayerKind::maxpool1d:
            return maxpool_backward(cache, upstream);
        case LayerKind::batchnorm1d:
            return batchnorm_backward(layer, cache, upstream);
        case LayerKind::leaky_relu: {
            Tensor gin = upstream;
            const double slope = layer.spec.negative_slope;
            for (std::size_t i = 0; i < gin.numel(); ++i)
                if (cache.input.data[i] <= 0.0) gin.data[i] *= slope;
            return gin;
        }
        case LayerKind::flatten: {
            Tensor gin = upstream;
            gin.shape = cache.input.shape;
            return gin;
        }
        case LayerKind::softmax: {
            // J^T g = y * (g - <g, y>) per row
            const Tensor& y = cache.output;
            Tensor gin = Tensor::zeros(y.shape);
            const std::size_t cols = y.shape.back();
            const std::size_t rows = y.numel() / cols;
            for (std::size_t r = 0; r < rows; ++r) {
                const double* yr = y.data.data() + r * cols;
                const double* gr = upstream.data.data() + r * cols;
                double dot = 0.0;
                for (std::size_t j = 0; j < cols; ++j) dot += yr[j] * gr[j];
                double* out = gin.data.data() + r * cols;
                for (std::size_t j = 0; j < cols; ++j) out[j] = yr[j] * (gr[j] - dot);
            }
            return gin;
        }
    }
    throw ValidationError("unknown layer kind");
}

Tensor stack_forward(std::vector<Layer>& stack, const Tensor& input, Mode mode,
                     std::vector<LayerCache>* caches) {
    if (caches) caches->assign(stack.size(), LayerCache{});
    Tensor x = input;
    for (std::size_t i = 0; i < stack.size(); ++i)
        x = layer_forward(stack[i], x, mode, caches ? &(*caches)[i] : nullptr);
    return x;
}

Tensor stack_backward(std::vector<Layer>& stack, const std::vector<LayerCache>& caches,
                      const Tensor& upstream) {
    Tensor g = upstream;
    for (std::size_t i = stack.size(); i-- > 0;) g = layer_backward(stack[i], caches[i], g);
    return g;
}

Tensor softmax(const Tensor& logits, int axis) {
    for (double v : logits.data)
        if (!std::isfinite(v)) throw NumericError("softmax input not finite");
    const int rank = static_cast<int>(logits.rank());
    int ax = axis < 0 ? rank + axis : axis;
    if (ax < 0 || ax >= rank) throw ValidationError("softmax axis out of range");

    std::size_t inner = 1, outer = 1;
    for (int i = 0; i < ax; ++i) outer *= logits.dim(i);
    for (int i = ax + 1; i < rank; ++i) inner *= logits.dim(i);
    const std::size_t n = logits.dim(static_cast<std::size_t>(ax));

    Tensor out = Tensor::zeros(logits.shape);
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in_i = 0; in_i < inner; ++in_i) {
            const std::size_t base = o * n * inner + in_i;
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t k = 0; k < n; ++k) mx = std::max(mx, logits.data[base + k * inner]);
            double sum = 0.0;
            for (std::size_t k = 0; k < n; ++k) {
                const double e = std::exp(logits.data[base + k * inner] - mx);
                out.data[base + k * inner] = e;
                sum += e;
            }
            for (std::size_t k = 0; k < n; ++k) out.data[base + k * inner] /= sum;
        }
    }
    return out;
}

double grad_check(std::vector<Layer>& stack, const Tensor& input, double eps, Mode mode) {
    if (eps < 1e-7 || eps > 1e-3) throw ValidationError("grad_check eps outside [1e-7, 1e-3]");

    // Snapshot running stats so repeated train-mode forwards leave no trace.
    std::vector<std::pair<Tensor, Tensor>> saved_stats;
    for (auto& l : stack) saved_stats.emplace_back(l.running_mean, l.running_var);
    for (auto& l : stack)
        for (auto& p : l.params) p.zero_grad();

    std::vector<LayerCache> caches;
    Tensor out = stack_forward(stack, input, mode, &caches);

    // Scalar loss = fixed-weight sum of outputs. A plain sum is degenerate
    // for layers whose outputs sum to a constant (batchnorm over the batch,
    // softmax over a row), where it has an identically zero gradient.
    Tensor weights = Tensor::zeros(out.shape);
    Rng wrng(0x67726164);
    for (auto& w : weights.data) w = wrng.uniform(0.25, 1.75) * (wrng.uniform() < 0.5 ? -1.0 : 1.0);
    Tensor gin = stack_backward(stack, caches, weights);

    // Kahan-compensated accumulation: the check differences nearly equal
    // losses, so summation rounding must stay below the FD signal.
    auto loss_of = [&stack, &weights, mode](const Tensor& x) {
        Tensor y = stack_forward(stack, x, mode, nullptr);
        double s = 0.0, c = 0.0;
        for (std::size_t i = 0; i < y.numel(); ++i) {
            const double term = weights.data[i] * y.data[i] - c;
            const double t = s + term;
            c = (t - s) - term;
            s = t;
        }
        if (!std::isfinite(s)) throw NumericError("non-finite loss in grad_check");
        return s;
    };

    // Denominator floor scaled to the dominant gradient: double-precision
    // central differences resolve at best ~1e-10 of the loss scale, so a
    // coordinate 1e4x smaller than the largest gradient only measures that
    // noise. A wrong formula shows up at the scale of the gradients it
    // breaks and still fails the check.
    double gmax = 0.0;
    for (double g : gin.data) gmax = std::max(gmax, std::abs(g));
    for (auto& l : stack)
        for (auto& p : l.params)
            for (double g : p.grad.data) gmax = std::max(gmax, std::abs(g));
    const double kFloor = std::max(1e-7, 1e-4 * gmax);
    double max_err = 0.0;
    auto check_coord = [&](double& coord, double analytic) {
        const double orig = coord;
        coord = orig + eps;
        const double lp = loss_of(input);
        coord = orig - eps;
        const double lm = loss_of(input);
        coord = orig;
        const double numeric = (lp - lm) / (2.0 * eps);
        const double err =
            std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), kFloor});
        max_err = std::max(max_err, err);
    };

    Tensor probe = input;
    for (std::size_t i = 0; i < probe.numel(); ++i) {
        const double analytic = gin.data[i];
        const double orig = probe.data[i];
        probe.data[i] = orig + eps;
        const double lp = loss_of(probe);
        probe.data[i] = orig - eps;
        const double lm = loss_of(probe);
        probe.data[i] = orig;
        const double numeric = (lp - lm) / (2.0 * eps);
        const double err =
            std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), kFloor});
        max_err = std::max(max_err, err);
    }
    for (auto& l : stack)
        for (auto& p : l.params)
            for (std::size_t i = 0; i < p.value.numel(); ++i)
                check_coord(p.value.data[i], p.grad.data[i]);

    for (std::size_t i = 0; i < stack.size(); ++i) {
        stack[i].running_mean = saved_stats[i].first;
        stack[i].running_var = saved_stats[i].second;
    }
    for (auto& l : stack)
        for (auto& p : l.params) p.zero_grad();
    return max_err;
}

}  // namespace rffkit
