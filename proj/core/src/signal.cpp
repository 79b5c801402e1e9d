#include "rffkit/signal.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <numbers>
#include <set>

#include "rffkit/parallel.hpp"
#include "rffkit/rng.hpp"

namespace rffkit {

namespace {

constexpr std::size_t kPreambleSymbols = 8;

void check_spec_finite(const EmitterSpec& spec) {
    const double fields[] = {spec.iq_gain_imbalance_db, spec.quadrature_skew_rad,
                             spec.dc_offset_i,          spec.dc_offset_q,
                             spec.cfo_norm,             spec.phase_noise_std_rad,
                             spec.pa_cubic_coeff};
    for (double f : fields) {
        if (!std::isfinite(f)) throw ValidationError("emitter spec has non-finite field");
    }
    if (std::abs(spec.pa_cubic_coeff) >= 1.0)
        throw ValidationError("pa_cubic_coeff must satisfy |c| < 1");
}

double burst_power(const IQBurst& b) {
    double p = 0.0;
    for (const auto& s : b.samples) p += std::norm(s);
    return p / static_cast<double>(b.samples.size());
}

}  // namespace

IQBurst synth_burst(const EmitterSpec& spec, std::size_t n_symbols, std::size_t oversample,
                    std::uint64_t seed) {
    check_spec_finite(spec);
    if (n_symbols < kPreambleSymbols) throw ValidationError("burst needs at least 8 symbols");
    if (oversample < 2) throw ValidationError("oversample must be >= 2");
    const std::size_t n = n_symbols * oversample;
    if (spec.rise_time_samples >= n) throw ValidationError("rise_time_samples >= burst length");

    // QPSK alphabet on the unit circle.
    const double a = 1.0 / std::numbers::sqrt2;
    const std::complex<double> alphabet[4] = {{a, a}, {-a, a}, {-a, -a}, {a, -a}};

    // Fixed preamble (content identical for all emitters), then seeded payload.
    static constexpr int kPreamble[kPreambleSymbols] = {0, 2, 1, 3, 0, 1, 2, 3};
    Rng payload_rng(derive_seed(seed, 0x706c6f61));
    std::vector<std::complex<double>> x(n);
    for (std::size_t s = 0; s < n_symbols; ++s) {
        const int idx = s < kPreambleSymbols ? kPreamble[s]
                                             : static_cast<int>(payload_rng.uniform_index(4));
        for (std::size_t k = 0; k < oversample; ++k) x[s * oversample + k] = alphabet[idx];
    }

    // Rise-time amplitude ramp over the first rise_time_samples.
    if (spec.rise_time_samples > 0) {
        const double rise = static_cast<double>(spec.rise_time_samples);
        for (std::size_t i = 0; i < spec.rise_time_samples; ++i)
            x[i] *= static_cast<double>(i + 1) / rise;
    }

    // IQ gain imbalance, split evenly across the two rails.
    if (spec.iq_gain_imbalance_db != 0.0) {
        const double gi = std::pow(10.0, spec.iq_gain_imbalance_db / 40.0);
        const double gq = 1.0 / gi;
        for (auto& s : x) s = {s.real() * gi, s.imag() * gq};
    }

    // Quadrature skew: Q axis rotated towards I by the skew angle.
    if (spec.quadrature_skew_rad != 0.0) {
        const double sp = std::sin(spec.quadrature_skew_rad);
        const double cp = std::cos(spec.quadrature_skew_rad);
        for (auto& s : x) s = {s.real() + sp * s.imag(), cp * s.imag()};
    }

    // Cubic PA nonlinearity y = x + c * x * |x|^2.
    if (spec.pa_cubic_coeff != 0.0) {
        for (auto& s : x) s += spec.pa_cubic_coeff * s * std::norm(s);
    }

    // CFO rotation.
    if (spec.cfo_norm != 0.0) {
        for (std::size_t i = 0; i < n; ++i) {
            const double ang = 2.0 * std::numbers::pi * spec.cfo_norm * static_cast<double>(i);
            x[i] *= std::complex<double>(std::cos(ang), std::sin(ang));
        }
    }

    // Phase-noise random walk.
    if (spec.phase_noise_std_rad != 0.0) {
        Rng pn_rng(derive_seed(seed, 0x7068617365));
        double theta = 0.0;
        for (auto& s : x) {
            theta += pn_rng.normal(0.0, spec.phase_noise_std_rad);
            s *= std::complex<double>(std::cos(theta), std::sin(theta));
        }
    }

    // Normalize RMS of the pre-offset signal to 1, then add the DC offset.
    // A burst already at unit RMS to machine precision is left untouched;
    // dividing by 1 + O(eps) would only inject rounding noise.
    double p = 0.0;
    for (const auto& s : x) p += std::norm(s);
    const double rms = std::sqrt(p / static_cast<double>(n));
    if (!(rms > 0.0) || !std::isfinite(rms)) throw NumericError("degenerate burst power");
    const std::complex<double> dc{spec.dc_offset_i, spec.dc_offset_q};
    if (std::abs(rms - 1.0) <= 16.0 * std::numeric_limits<double>::epsilon()) {
        for (auto& s : x) s += dc;
    } else {
        for (auto& s : x) s = s / rms + dc;
    }

    IQBurst out;
    out.samples = std::move(x);
    if (spec.emitter_id > 0) out.label = spec.emitter_id;
    return out;
}

IQBurst add_awgn(const IQBurst& burst, double snr_db, std::uint64_t seed) {
    if (burst.snr_db.has_value()) throw ValidationError("burst already carries noise");
    if (!std::isfinite(snr_db)) throw ValidationError("snr_db must be finite");
    if (burst.samples.empty()) throw ValidationError("empty burst");

    const double p_signal = burst_power(burst);
    const double sigma2 = p_signal / std::pow(10.0, snr_db / 10.0);
    const double sigma_dim = std::sqrt(sigma2 / 2.0);  // split across I and Q

    Rng rng(derive_seed(seed, 0x6177676e));
    IQBurst out = burst;
    for (auto& s : out.samples)
        s += std::complex<double>(rng.normal(0.0, sigma_dim), rng.normal(0.0, sigma_dim));
    out.snr_db = snr_db;
    return out;
}

LabeledDataset synth_dataset_clean(const std::vector<EmitterSpec>& specs,
                                   std::size_t bursts_per_emitter, std::uint64_t seed,
                                   std::size_t n_symbols, std::size_t oversample) {
    if (specs.size() < 2) throw ValidationError("need at least 2 emitter specs");
    std::set<int> ids;
    for (const auto& s : specs) {
        if (!ids.insert(s.emitter_id).second)
            throw ValidationError("duplicate emitter id " + std::to_string(s.emitter_id));
    }
    if (bursts_per_emitter == 0) throw ValidationError("bursts_per_emitter must be >= 1");

    LabeledDataset ds;
    ds.V = specs.size();
    ds.burst_len = n_symbols * oversample;
    ds.bursts.resize(specs.size() * bursts_per_emitter);
    // Sub-seeds are derived per (emitter, index), so generation parallelizes
    // without affecting the result.
    parallel_for(ds.bursts.size(), [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            const std::size_t e = i / bursts_per_emitter;
            const std::size_t b = i % bursts_per_emitter;
            const std::uint64_t sub =
                derive_seed(seed, static_cast<std::uint64_t>(specs[e].emitter_id), b);
            IQBurst burst = synth_burst(specs[e], n_symbols, oversample, sub);
            burst.label = specs[e].emitter_id;
            ds.bursts[i] = std::move(burst);
        }
    });
    return ds;
}

LabeledDataset noise_dataset(const LabeledDataset& clean, double snr_db, std::uint64_t seed) {
    LabeledDataset out = clean;
    parallel_for(out.bursts.size(), [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i)
            out.bursts[i] = add_awgn(clean.bursts[i], snr_db, derive_seed(seed, 0x6e6f697365, i));
    });
    return out;
}

LabeledDataset synth_dataset(const std::vector<EmitterSpec>& specs, std::size_t bursts_per_emitter,
                             double snr_db, std::uint64_t seed, std::size_t n_symbols,
                             std::size_t oversample) {
    return noise_dataset(synth_dataset_clean(specs, bursts_per_emitter, seed, n_symbols, oversample),
                         snr_db, seed);
}

DatasetSplit split_dataset(const LabeledDataset& ds, double p_v, double p_t, std::uint64_t seed) {
    if (p_v <= 0.0) throw ValidationError("validation fraction must be > 0 (early stopping)");
    if (p_t < 0.0) throw ValidationError("test fraction must be >= 0");
    if (p_v + p_t >= 1.0) throw ValidationError("p_v + p_t must be < 1");
    if (ds.bursts.empty()) throw ValidationError("empty dataset");

    // Collect indices per label.
    std::vector<std::vector<std::size_t>> by_label(ds.V + 1);
    for (std::size_t i = 0; i < ds.bursts.size(); ++i) {
        const int lbl = ds.bursts[i].label.value_or(0);
        if (lbl < 1 || static_cast<std::size_t>(lbl) > ds.V)
            throw DataError("burst label out of range");
        by_label[static_cast<std::size_t>(lbl)].push_back(i);
    }

    DatasetSplit out;
    for (auto* part : {&out.train, &out.valid, &out.test}) {
        part->V = ds.V;
        part->burst_len = ds.burst_len;
    }

    for (std::size_t lbl = 1; lbl <= ds.V; ++lbl) {
        auto& idx = by_label[lbl];
        if (idx.empty()) throw DataError("emitter " + std::to_string(lbl) + " has no bursts");
        Rng rng(derive_seed(seed, 0x73706c6974, lbl));
        rng.shuffle(idx);
        const auto n = static_cast<double>(idx.size());
        const auto n_v = static_cast<std::size_t>(std::llround(p_v * n));
        const auto n_t = static_cast<std::size_t>(std::llround(p_t * n));
        if (n_v + n_t >= idx.size())
            throw ValidationError("split leaves emitter " + std::to_string(lbl) +
                                  " with no training samples");
        for (std::size_t k = 0; k < idx.size(); ++k) {
            const IQBurst& b = ds.bursts[idx[k]];
            if (k < n_v)
                out.valid.bursts.push_back(b);
            else if (k < n_v + n_t)
                out.test.bursts.push_back(b);
            else
                out.train.bursts.push_back(b);
        }
    }
    return out;
}

double empirical_snr_db(const IQBurst& clean, const IQBurst& noisy) {
    if (clean.samples.size() != noisy.samples.size())
        throw ValidationError("burst length mismatch");
    double p_sig = 0.0, p_noise = 0.0;
    for (std::size_t i = 0; i < clean.samples.size(); ++i) {
        p_sig += std::norm(clean.samples[i]);
        p_noise += std::norm(noisy.samples[i] - clean.samples[i]);
    }
    if (p_noise == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(p_sig / p_noise);
}

namespace {

void put_u32(std::ofstream& f, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    f.write(reinterpret_cast<const char*>(b), 4);
}

void put_f32(std::ofstream& f, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(f, bits);
}

std::uint32_t get_u32(std::ifstream& f) {
    unsigned char b[4];
    f.read(reinterpret_cast<char*>(b), 4);
    if (!f) throw DataError("truncated RFFD file");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

float get_f32(std::ifstream& f) {
    const std::uint32_t bits = get_u32(f);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

}  // namespace

void save_rffd(const LabeledDataset& ds, const std::string& path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot open " + path + " for writing");
    f.write("RFFD", 4);
    put_u32(f, 1);
    put_u32(f, static_cast<std::uint32_t>(ds.bursts.size()));
    put_u32(f, static_cast<std::uint32_t>(ds.burst_len));
    put_u32(f, static_cast<std::uint32_t>(ds.V));
    for (const auto& b : ds.bursts) {
        if (b.samples.size() != ds.burst_len) throw DataError("inconsistent burst length");
        put_u32(f, static_cast<std::uint32_t>(b.label.value_or(0)));
        put_f32(f, b.snr_db ? static_cast<float>(*b.snr_db)
                            : std::numeric_limits<float>::quiet_NaN());
        for (const auto& s : b.samples) {
            put_f32(f, static_cast<float>(s.real()));
            put_f32(f, static_cast<float>(s.imag()));
        }
    }
    if (!f) throw DataError("write failure on " + path);
}

LabeledDataset load_rffd(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, "RFFD", 4) != 0) throw DataError("bad RFFD magic in " + path);
    const std::uint32_t version = get_u32(f);
    if (version != 1) throw DataError("unsupported RFFD version " + std::to_string(version));
    const std::uint32_t n_bursts = get_u32(f);
    const std::uint32_t burst_len = get_u32(f);
    const std::uint32_t v_classes = get_u32(f);
    if (burst_len == 0 || n_bursts == 0) throw DataError("empty RFFD file");

    LabeledDataset ds;
    ds.burst_len = burst_len;
    ds.V = v_classes;
    ds.bursts.reserve(n_bursts);
    for (std::uint32_t i = 0; i < n_bursts; ++i) {
        IQBurst b;
        const std::uint32_t label = get_u32(f);
        const float snr = get_f32(f);
        if (label > 0) b.label = static_cast<int>(label);
        if (!std::isnan(snr)) b.snr_db = static_cast<double>(snr);
        b.samples.resize(burst_len);
        for (std::uint32_t k = 0; k < burst_len; ++k) {
            const double re = static_cast<double>(get_f32(f));
            const double im = static_cast<double>(get_f32(f));
            if (!std::isfinite(re) || !std::isfinite(im))
                throw DataError("non-finite sample in " + path);
            b.samples[k] = {re, im};
        }
        ds.bursts.push_back(std::move(b));
    }
    return ds;
}

}  // namespace rffkit
