#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rffkit/layers.hpp"
#include "rffkit/tensor.hpp"

namespace rffkit {

enum class ModelKind { FCN, BCNN, simpleAE, verysimpleAE, simpleconv1DAE, vanillaAE };

std::string model_kind_name(ModelKind k);
ModelKind model_kind_from_name(const std::string& name);

bool is_autoencoder(ModelKind k);
bool is_conv_input(ModelKind k);  // true -> batch shaped B x 2 x L, else B x 2L interleaved

// kind, input length (complex samples), embedding width, optional classifier
// width, and optional kind-specific width overrides:
//   FCN            hidden widths                (default 512, 256)
//   BCNN           block channel counts         (default 16, 32, 32, 64, 64)
//   simpleAE       encoder hidden widths        (default 256, 128, 64)
//   verysimpleAE   none
//   simpleconv1DAE encoder FC hidden widths     (default 512, 128)
//   vanillaAE      encoder hidden widths        (default 256, 128)
struct ModelSpec {
    ModelKind kind = ModelKind::FCN;
    std::size_t input_len = 256;  // complex samples per burst
    std::size_t embed_dim = 64;
    std::size_t n_classes = 0;  // 0 = no classifier head
    std::vector<std::size_t> widths;
};

// Fingerprint head (encoder) plus optional task head (classifier or decoder).
struct Model {
    ModelSpec spec;
    std::vector<Layer> fingerprint;
    std::vector<Layer> head;

    bool has_head() const { return !head.empty(); }
};

// Deterministic construction from (spec, seed).
Model build_model(const ModelSpec& spec, std::uint64_t seed);

// Expected batch shape for the model kind.
std::vector<std::size_t> input_shape(const ModelSpec& spec, std::size_t batch);

// Rows are z = f_theta(x). For EDA the two pair sides go through this same
// map; stacking two calls is F_theta with l = 2.
Tensor embed(Model& model, const Tensor& batch, Mode mode);

// g_phi(f_theta(x)); requires a classifier head. Softmax is applied
// downstream, not here.
Tensor predict_logits(Model& model, const Tensor& batch, Mode mode);

// Encoder then decoder; output reshaped to the input shape. AE kinds only.
Tensor autoencode(Model& model, const Tensor& batch, Mode mode);

std::size_t parameter_count(const Model& model);

// JSON checkpoint: {version, spec, params, running_stats, train_config, seed}.
// Round-trips bitwise (decimal serialization is value-exact for doubles).
void save_checkpoint(const Model& model, const std::string& path,
                     const std::string& train_config_echo = "", std::uint64_t seed = 0);
Model load_checkpoint(const std::string& path);
Model load_checkpoint(const std::string& path, std::string* train_config_echo,
                      std::uint64_t* seed);

}  // namespace rffkit
