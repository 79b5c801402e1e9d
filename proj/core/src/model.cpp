#include "rffkit/model.hpp"

#include <fstream>
#include <functional>
#include <map>

#include "json.hpp"

#include "rffkit/common.hpp"
#include "rffkit/rng.hpp"

namespace rffkit {

using nlohmann::json;

std::string model_kind_name(ModelKind k) {
    switch (k) {
        case ModelKind::FCN: return "FCN";
        case ModelKind::BCNN: return "BCNN";
        case ModelKind::simpleAE: return "simpleAE";
        case ModelKind::verysimpleAE: return "verysimpleAE";
        case ModelKind::simpleconv1DAE: return "simpleconv1DAE";
        case ModelKind::vanillaAE: return "vanillaAE";
    }
    throw ValidationError("unknown model kind");
}

ModelKind model_kind_from_name(const std::string& name) {
    if (name == "FCN") return ModelKind::FCN;
    if (name == "BCNN") return ModelKind::BCNN;
    if (name == "simpleAE") return ModelKind::simpleAE;
    if (name == "verysimpleAE") return ModelKind::verysimpleAE;
    if (name == "simpleconv1DAE") return ModelKind::simpleconv1DAE;
    if (name == "vanillaAE") return ModelKind::vanillaAE;
    throw ValidationError("unknown model kind '" + name + "'");
}

bool is_autoencoder(ModelKind k) {
    return k == ModelKind::simpleAE || k == ModelKind::verysimpleAE ||
           k == ModelKind::simpleconv1DAE || k == ModelKind::vanillaAE;
}

bool is_conv_input(ModelKind k) { return k == ModelKind::BCNN || k == ModelKind::simpleconv1DAE; }

std::vector<std::size_t> input_shape(const ModelSpec& spec, std::size_t batch) {
    if (is_conv_input(spec.kind)) return {batch, 2, spec.input_len};
    return {batch, 2 * spec.input_len};
}

namespace {

void validate_spec(const ModelSpec& spec) {
    if (spec.embed_dim < 2) throw ValidationError("embed_dim must be >= 2");
    if (spec.input_len == 0) throw ValidationError("input_len must be positive");
    if (is_autoencoder(spec.kind) && spec.n_classes > 0)
        throw ValidationError("autoencoders do not take a classifier head");
}

std::vector<std::size_t> widths_or(const ModelSpec& spec, std::vector<std::size_t> defaults) {
    return spec.widths.empty() ? defaults : spec.widths;
}

void push_fc(std::vector<Layer>& stack, std::size_t in, std::size_t out, bool act, Rng& rng,
             bool bn = false) {
    stack.push_back(make_layer(LayerSpec::make_linear(in, out, /*bias=*/!bn), rng));
    if (bn) stack.push_back(make_layer(LayerSpec::make_batchnorm1d(out), rng));
    if (act) stack.push_back(make_layer(LayerSpec::make_leaky_relu(), rng));
}

}  // namespace

Model build_model(const ModelSpec& spec, std::uint64_t seed) {
    validate_spec(spec);
    Rng rng(derive_seed(seed, 0x6d6f64656c));
    Model m;
    m.spec = spec;
    const std::size_t flat_in = 2 * spec.input_len;

    switch (spec.kind) {
        case ModelKind::FCN: {
            const auto widths = widths_or(spec, {512, 256});
            std::size_t prev = flat_in;
            for (std::size_t w : widths) {
                push_fc(m.fingerprint, prev, w, true, rng);
                prev = w;
            }
            push_fc(m.fingerprint, prev, spec.embed_dim, true, rng);
            if (spec.n_classes > 0)
                m.head.push_back(make_layer(LayerSpec::make_linear(spec.embed_dim, spec.n_classes), rng));
            break;
        }
        case ModelKind::BCNN: {
            // Five conv blocks (conv -> BN -> leaky ReLU -> pool/2). Convs keep
            // the temporal length (odd kernel, symmetric zero padding), so the
            // input length must be divisible by 2^5.
            const auto channels = widths_or(spec, {16, 32, 32, 64, 64});
            if (channels.size() != 5) throw ValidationError("BCNN needs 5 channel counts");
            constexpr std::size_t kKernel = 5;
            std::size_t len = spec.input_len;
            std::size_t prev_ch = 2;
            for (std::size_t ch : channels) {
                if (len < 2 || len % 2 != 0)
                    throw ValidationError("BCNN input_len not divisible through the pooling chain");
                m.fingerprint.push_back(make_layer(
                    LayerSpec::make_conv1d(prev_ch, ch, kKernel, 1, (kKernel - 1) / 2,
                                           /*bias=*/false),
                    rng));
                m.fingerprint.push_back(make_layer(LayerSpec::make_batchnorm1d(ch), rng));
                m.fingerprint.push_back(make_layer(LayerSpec::make_leaky_relu(), rng));
                m.fingerprint.push_back(make_layer(LayerSpec::make_maxpool1d(2, 2), rng));
                len /= 2;
                prev_ch = ch;
            }
            m.fingerprint.push_back(make_layer(LayerSpec::make_flatten(), rng));
            m.fingerprint.push_back(
                make_layer(LayerSpec::make_linear(prev_ch * len, spec.embed_dim), rng));
            if (spec.n_classes > 0)
                m.head.push_back(make_layer(LayerSpec::make_linear(spec.embed_dim, spec.n_classes), rng));
            break;
        }
        case ModelKind::simpleAE: {
            // Four FC layers each side; hidden layers carry the activation,
            // the embedding and reconstruction outputs stay linear.
            const auto hidden = widths_or(spec, {256, 128, 64});
            if (hidden.size() != 3) throw ValidationError("simpleAE needs 3 hidden widths");
            std::size_t prev = flat_in;
            for (std::size_t w : hidden) {
                push_fc(m.fingerprint, prev, w, true, rng);
                prev = w;
            }
            push_fc(m.fingerprint, prev, spec.embed_dim, false, rng);
            prev = spec.embed_dim;
            for (auto it = hidden.rbegin(); it != hidden.rend(); ++it) {
                push_fc(m.head, prev, *it, true, rng);
                prev = *it;
            }
            push_fc(m.head, prev, flat_in, false, rng);
            break;
        }
        case ModelKind::verysimpleAE: {
            push_fc(m.fingerprint, flat_in, spec.embed_dim, false, rng);
            push_fc(m.head, spec.embed_dim, flat_in, false, rng);
            break;
        }
        case ModelKind::simpleconv1DAE: {
            // Encoder: 3 x (conv -> BN -> leaky ReLU), then 3 FC down to the
            // embedding; decoder mirrors the FC part up to the flat input.
            constexpr std::size_t kKernel = 5;
            const std::size_t conv_ch[3] = {8, 16, 16};
            std::size_t prev_ch = 2;
            for (std::size_t ch : conv_ch) {
                m.fingerprint.push_back(make_layer(
                    LayerSpec::make_conv1d(prev_ch, ch, kKernel, 1, (kKernel - 1) / 2,
                                           /*bias=*/false),
                    rng));
                m.fingerprint.push_back(make_layer(LayerSpec::make_batchnorm1d(ch), rng));
                m.fingerprint.push_back(make_layer(LayerSpec::make_leaky_relu(), rng));
                prev_ch = ch;
            }
            m.fingerprint.push_back(make_layer(LayerSpec::make_flatten(), rng));
            const auto fc = widths_or(spec, {512, 128});
            if (fc.size() != 2) throw ValidationError("simpleconv1DAE needs 2 FC hidden widths");
            std::size_t prev = prev_ch * spec.input_len;
            for (std::size_t w : fc) {
                push_fc(m.fingerprint, prev, w, true, rng);
                prev = w;
            }
            push_fc(m.fingerprint, prev, spec.embed_dim, false, rng);
            prev = spec.embed_dim;
            for (auto it = fc.rbegin(); it != fc.rend(); ++it) {
                push_fc(m.head, prev, *it, true, rng);
                prev = *it;
            }
            push_fc(m.head, prev, flat_in, false, rng);
            break;
        }
        case ModelKind::vanillaAE: {
            const auto hidden = widths_or(spec, {256, 128});
            if (hidden.size() != 2) throw ValidationError("vanillaAE needs 2 hidden widths");
            std::size_t prev = flat_in;
            for (std::size_t w : hidden) {
                push_fc(m.fingerprint, prev, w, true, rng, /*bn=*/true);
                prev = w;
            }
            push_fc(m.fingerprint, prev, spec.embed_dim, false, rng);
            prev = spec.embed_dim;
            for (auto it = hidden.rbegin(); it != hidden.rend(); ++it) {
                push_fc(m.head, prev, *it, true, rng, /*bn=*/true);
                prev = *it;
            }
            push_fc(m.head, prev, flat_in, false, rng);
            break;
        }
    }
    return m;
}

Tensor embed(Model& model, const Tensor& batch, Mode mode) {
    if (batch.shape != input_shape(model.spec, batch.dim(0)))
        throw ValidationError("embed: batch shape " + shape_str(batch) + " does not match model");
    return stack_forward(model.fingerprint, batch, mode, nullptr);
}

Tensor predict_logits(Model& model, const Tensor& batch, Mode mode) {
    if (is_autoencoder(model.spec.kind) || !model.has_head())
        throw ValidationError("predict_logits requires a classifier head");
    Tensor z = embed(model, batch, mode);
    return stack_forward(model.head, z, mode, nullptr);
}

Tensor autoencode(Model& model, const Tensor& batch, Mode mode) {
    if (!is_autoencoder(model.spec.kind)) throw ValidationError("autoencode requires an AE model");
    Tensor z = embed(model, batch, mode);
    Tensor rec = stack_forward(model.head, z, mode, nullptr);
    rec.shape = batch.shape;  // conv AEs reconstruct the flattened input
    return rec;
}

std::size_t parameter_count(const Model& model) {
    std::size_t n = 0;
    for (const auto* stack : {&model.fingerprint, &model.head})
        for (const auto& l : *stack)
            for (const auto& p : l.params) n += p.value.numel();
    return n;
}

namespace {

json spec_to_json(const ModelSpec& s) {
    return json{{"kind", model_kind_name(s.kind)},
                {"input_len", s.input_len},
                {"embed_dim", s.embed_dim},
                {"n_classes", s.n_classes},
                {"widths", s.widths}};
}

ModelSpec spec_from_json(const json& j) {
    ModelSpec s;
    s.kind = model_kind_from_name(j.at("kind").get<std::string>());
    s.input_len = j.at("input_len").get<std::size_t>();
    s.embed_dim = j.at("embed_dim").get<std::size_t>();
    s.n_classes = j.at("n_classes").get<std::size_t>();
    s.widths = j.at("widths").get<std::vector<std::size_t>>();
    return s;
}

void collect_named(const Model& m,
                   const std::function<void(const std::string&, const Layer&)>& fn) {
    for (std::size_t i = 0; i < m.fingerprint.size(); ++i)
        fn("fp." + std::to_string(i), m.fingerprint[i]);
    for (std::size_t i = 0; i < m.head.size(); ++i) fn("head." + std::to_string(i), m.head[i]);
}

}  // namespace

void save_checkpoint(const Model& model, const std::string& path,
                     const std::string& train_config_echo, std::uint64_t seed) {
    json j;
    j["version"] = 1;
    j["spec"] = spec_to_json(model.spec);
    j["seed"] = seed;
    if (!train_config_echo.empty()) j["train_config"] = train_config_echo;
    json params = json::array();
    json stats = json::array();
    collect_named(model, [&](const std::string& prefix, const Layer& l) {
        for (const auto& p : l.params) {
            params.push_back(json{{"name", prefix + "." + p.name},
                                  {"shape", p.value.shape},
                                  {"data", p.value.data}});
        }
        if (l.spec.kind == LayerKind::batchnorm1d) {
            stats.push_back(json{{"name", prefix},
                                 {"mean", l.running_mean.data},
                                 {"var", l.running_var.data}});
        }
    });
    j["params"] = std::move(params);
    j["running_stats"] = std::move(stats);

    std::ofstream f(path, std::ios::trunc);
    if (!f) throw DataError("cannot open " + path + " for writing");
    f << j.dump(1) << "\n";
    if (!f) throw DataError("write failure on " + path);
}

Model load_checkpoint(const std::string& path, std::string* train_config_echo,
                      std::uint64_t* seed) {
    std::ifstream f(path);
    if (!f) throw DataError("cannot open " + path);
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw DataError("malformed checkpoint " + path + ": " + e.what());
    }
    try {
        if (j.at("version").get<int>() != 1) throw DataError("unsupported checkpoint version");
        Model m = build_model(spec_from_json(j.at("spec")), j.at("seed").get<std::uint64_t>());
        if (seed) *seed = j.at("seed").get<std::uint64_t>();
        if (train_config_echo)
            *train_config_echo = j.contains("train_config") ? j["train_config"].get<std::string>() : "";

        std::map<std::string, Parameter*> by_name;
        std::map<std::string, Layer*> bn_by_name;
        collect_named(m, [&](const std::string& prefix, const Layer& l) {
            auto& layer = const_cast<Layer&>(l);
            for (auto& p : layer.params) by_name[prefix + "." + p.name] = &p;
            if (l.spec.kind == LayerKind::batchnorm1d) bn_by_name[prefix] = &layer;
        });

        std::size_t seen = 0;
        for (const auto& pj : j.at("params")) {
            const auto name = pj.at("name").get<std::string>();
            auto it = by_name.find(name);
            if (it == by_name.end()) throw DataError("unknown parameter '" + name + "'");
            const auto shape = pj.at("shape").get<std::vector<std::size_t>>();
            if (shape != it->second->value.shape)
                throw DataError("shape mismatch for parameter '" + name + "'");
            const auto data = pj.at("data").get<std::vector<double>>();
            if (data.size() != it->second->value.numel())
                throw DataError("data size mismatch for parameter '" + name + "'");
            it->second->value.data = data;
            ++seen;
        }
        if (seen != by_name.size()) throw DataError("checkpoint is missing parameters");
        for (const auto& sj : j.at("running_stats")) {
            const auto name = sj.at("name").get<std::string>();
            auto it = bn_by_name.find(name);
            if (it == bn_by_name.end()) throw DataError("unknown batchnorm layer '" + name + "'");
            const auto mean = sj.at("mean").get<std::vector<double>>();
            const auto var = sj.at("var").get<std::vector<double>>();
            if (mean.size() != it->second->running_mean.numel() ||
                var.size() != it->second->running_var.numel())
                throw DataError("running-stat size mismatch for '" + name + "'");
            it->second->running_mean.data = mean;
            it->second->running_var.data = var;
        }
        return m;
    } catch (const json::exception& e) {
        throw DataError("malformed checkpoint " + path + ": " + e.what());
    }
}

Model load_checkpoint(const std::string& path) { return load_checkpoint(path, nullptr, nullptr); }

}  // namespace rffkit
