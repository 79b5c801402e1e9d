#pragma once

#include <complex>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rffkit/common.hpp"

namespace rffkit {

// Hardware-impairment parameter set; the ground-truth fingerprint of one emitter.
struct EmitterSpec {
    int emitter_id = 0;                 // label in {1..V}
    double iq_gain_imbalance_db = 0.0;  // I vs Q gain split, dB
    double quadrature_skew_rad = 0.0;   // quadrature axis error, rad
    double dc_offset_i = 0.0;           // additive offsets, normalized amplitude
    double dc_offset_q = 0.0;
    double cfo_norm = 0.0;              // carrier frequency offset, cycles/sample
    double phase_noise_std_rad = 0.0;   // per-sample random-walk std, rad
    double pa_cubic_coeff = 0.0;        // third-order nonlinearity, |c| < 1
    std::size_t rise_time_samples = 0;  // transient amplitude ramp length
};

// One complex baseband capture.
struct IQBurst {
    std::vector<std::complex<double>> samples;
    std::optional<int> label;
    std::optional<double> snr_db;  // absent = clean
};

struct LabeledDataset {
    std::vector<IQBurst> bursts;  // every burst labeled, labels in {1..V}
    std::size_t V = 0;
    std::size_t burst_len = 0;
};

// QPSK burst with the impairments of `spec` applied. `n_symbols` counts all
// symbols including the fixed 8-symbol preamble; payload symbols are drawn
// from a generator seeded by `seed`. Impairment order: rise-time ramp, IQ
// gain imbalance, quadrature skew, cubic PA nonlinearity, CFO rotation,
// phase-noise random walk, RMS normalization, DC offset.
IQBurst synth_burst(const EmitterSpec& spec, std::size_t n_symbols, std::size_t oversample,
                    std::uint64_t seed);

// Complex AWGN at the requested SNR relative to the burst's measured power.
// Rejects bursts that already carry noise.
IQBurst add_awgn(const IQBurst& burst, double snr_db, std::uint64_t seed);

// V * bursts_per_emitter labeled bursts, one derived sub-seed per burst.
LabeledDataset synth_dataset(const std::vector<EmitterSpec>& specs, std::size_t bursts_per_emitter,
                             double snr_db, std::uint64_t seed, std::size_t n_symbols = 64,
                             std::size_t oversample = 4);

// Clean variant (no AWGN stage); same sub-seed schedule as synth_dataset, so
// the noisy dataset at any SNR can be regenerated from the same seed.
LabeledDataset synth_dataset_clean(const std::vector<EmitterSpec>& specs,
                                   std::size_t bursts_per_emitter, std::uint64_t seed,
                                   std::size_t n_symbols = 64, std::size_t oversample = 4);

// AWGN over every burst of a clean dataset, per-burst derived seeds.
LabeledDataset noise_dataset(const LabeledDataset& clean, double snr_db, std::uint64_t seed);

struct DatasetSplit {
    LabeledDataset train;
    LabeledDataset valid;
    LabeledDataset test;
};

// Label-stratified disjoint random split. Sizes round to nearest per class,
// remainder to train. Validation is required (early stopping), so p_v = 0 is
// rejected; p_t = 0 leaves the test set empty.
DatasetSplit split_dataset(const LabeledDataset& ds, double p_v, double p_t, std::uint64_t seed);

// Measured SNR in dB of a (clean, noisy) pair of equal length.
double empirical_snr_db(const IQBurst& clean, const IQBurst& noisy);

// "RFFD" container: little-endian, magic "RFFD", u32 version=1, u32 n_bursts,
// u32 burst_len, u32 V; per burst u32 label, f32 snr_db (NaN = clean),
// burst_len x (f32 i, f32 q).
void save_rffd(const LabeledDataset& ds, const std::string& path);
LabeledDataset load_rffd(const std::string& path);

}  // namespace rffkit
