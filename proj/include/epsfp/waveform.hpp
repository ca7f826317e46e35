#pragma once

#include "epsfp/dsp.hpp"

#include <complex>
#include <cstdint>
#include <optional>
#include <vector>

namespace epsfp::sim {

enum class ChannelKind : std::uint8_t { wired = 0, wireless = 1 };

struct DomainLabel {
    std::uint8_t day = 0;
    std::uint8_t location = 0;
    ChannelKind channel_kind = ChannelKind::wireless;
    bool operator==(const DomainLabel&) const = default;
};

struct IQFrame {
    std::vector<std::complex<double>> samples;
    double sample_rate_hz = 20e6;
    std::optional<std::uint16_t> device_id;
    std::optional<DomainLabel> domain;
};

struct DeviceProfile {
    std::uint16_t device_id = 0;
    double cfo_hz = 0.0;
    double iq_gain_imbalance_db = 0.0;
    double iq_phase_imbalance_rad = 0.0;
    std::complex<double> dc_offset{0.0, 0.0};
    double phase_noise_std_rad = 0.0;   // per-sample random-walk step
    bool stabilized = true;             // warmed up; false adds a CFO settle ramp
};

struct ChannelProfile {
    std::optional<double> snr_db;   // nullopt = noiseless
    double amplitude_scale = 1.0;
    std::uint32_t delay_samples = 0;
    std::uint64_t seed = 0;
};

inline constexpr int kBarker11[11] = {+1, -1, +1, +1, -1, +1, +1, +1, -1, -1, -1};
inline constexpr std::size_t kFrameLen = 25170;

// DBPSK bits spread by Barker-11, rectangular chips (optionally edge-smoothed
// with a short dsp-core lowpass), repeated/truncated to target_len, unit mean
// power. The seed draws the frame's carrier start phase; start_phase overrides
// it for controlled experiments.
IQFrame generate_dsss_baseband(const std::vector<int>& payload_bits, unsigned samples_per_chip,
                               std::size_t target_len, std::uint64_t seed,
                               bool smooth_chips = false,
                               std::optional<double> start_phase = {});

std::vector<int> random_payload(std::size_t n_bits, std::uint64_t seed);

// r(n) = G_iq(s(n) e^{j(2 pi cfo n / fs + pn(n))}) + dc
IQFrame apply_impairments(const IQFrame& s, const DeviceProfile& d, std::uint64_t seed);

// scale, integer delay (zero-prefixed, tail-trimmed), then AWGN at the
// requested per-sample SNR measured against the scaled signal
IQFrame apply_channel(const IQFrame& r, const ChannelProfile& c);

// Humps = lobes of the Hilbert envelope: moving-average smoothing at the
// assumed minimum lobe separation, then hysteresis counting of threshold
// crossings (0.6/0.4 of the global max). Estimates round(2 |cfo| T).
unsigned count_envelope_humps(const dsp::RealSequence& component, const dsp::FirFilter& hilbert,
                              double max_cfo_hz_assumed = 25e3);

// The default synthetic population: CFO magnitudes on a 1.5 kHz grid from
// 2 kHz with alternating signs, skipping the 14.5-16 kHz band where the
// decimated chip pattern aliases onto the beat line. Small per-device IQ
// imbalance, DC offset and phase noise drawn from the seed.
std::vector<DeviceProfile> default_population(std::size_t n_devices, std::uint64_t seed);

// held-out transmitters for open-set tests; CFOs >= 3 kHz away from every
// default-population CFO
std::vector<DeviceProfile> rogue_population(std::uint64_t seed);

std::vector<double> i_rail(const IQFrame& f);
std::vector<double> q_rail(const IQFrame& f);

} // namespace epsfp::sim
