#include "epsfp/waveform.hpp"
#include "epsfp/kernels.hpp"
#include "epsfp/rng.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace epsfp::sim {

namespace {

constexpr double kTwoPi = 6.28318530717958647692;

// short edge-softening lowpass for the chip stream, designed by dsp-core
dsp::FirFilter chip_smoother(unsigned samples_per_chip) {
    dsp::FirDesignSpec s;
    s.kind = dsp::FilterKind::lowpass;
    s.length = static_cast<int>(2 * samples_per_chip + 1);
    s.bands = {{0.0, 0.35, 1.0, 1.0}, {0.8, 1.0, 0.0, 1.0}};
    return dsp::design_fir_remez(s);
}

} // namespace

std::vector<int> random_payload(std::size_t n_bits, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<int> bits(n_bits);
    for (auto& b : bits) b = static_cast<int>(rng.next_u64() & 1u);
    return bits;
}

IQFrame generate_dsss_baseband(const std::vector<int>& payload_bits, unsigned samples_per_chip,
                               std::size_t target_len, std::uint64_t seed,
                               bool smooth_chips, std::optional<double> start_phase) {
    if (payload_bits.empty())
        throw std::invalid_argument("empty payload");
    if (samples_per_chip == 0 || target_len < 11ull * samples_per_chip)
        throw std::invalid_argument("target_len must cover at least one spread symbol");

    // DBPSK: bit 0 keeps the phase, bit 1 flips it
    std::vector<double> symbols(payload_bits.size());
    double d = 1.0;
    for (std::size_t i = 0; i < payload_bits.size(); ++i) {
        d *= payload_bits[i] ? -1.0 : 1.0;
        symbols[i] = d;
    }

    const std::size_t chips_per_frame = symbols.size() * 11;
    const std::size_t period = chips_per_frame * samples_per_chip;

    // chip stream long enough for target_len plus smoothing margin
    const unsigned L = smooth_chips ? 2 * samples_per_chip + 1 : 1;
    const std::size_t need = target_len + (L - 1);
    std::vector<double> stream(need);
    for (std::size_t n = 0; n < need; ++n) {
        const std::size_t pos = n % period;
        const std::size_t chip = pos / samples_per_chip;
        stream[n] = symbols[chip / 11] * kBarker11[chip % 11];
    }

    std::vector<double> shaped;
    if (smooth_chips) {
        auto lp = chip_smoother(samples_per_chip);
        double dc = 0.0;
        for (double t : lp.taps) dc += t;
        for (auto& t : lp.taps) t /= dc;
        shaped.resize(need - L + 1);
        kernels::fir_valid(stream.data(), need, lp.taps.data(), L, shaped.data());
    } else {
        shaped = std::move(stream);
    }
    shaped.resize(target_len);

    double power = 0.0;
    for (double v : shaped) power += v * v;
    const double norm = 1.0 / std::sqrt(power / static_cast<double>(target_len));

    Rng rng(seed);
    const double phase = start_phase.value_or(rng.uniform(0.0, kTwoPi));
    const std::complex<double> rot(std::cos(phase), std::sin(phase));

    IQFrame f;
    f.samples.resize(target_len);
    for (std::size_t n = 0; n < target_len; ++n)
        f.samples[n] = shaped[n] * norm * rot;
    return f;
}

IQFrame apply_impairments(const IQFrame& s, const DeviceProfile& d, std::uint64_t seed) {
    if (std::abs(d.cfo_hz) >= s.sample_rate_hz / 4.0)
        throw std::invalid_argument("|cfo| must be below sample_rate / 4");

    IQFrame r = s;
    r.device_id = d.device_id;
    const std::size_t n = s.samples.size();
    const double w = kTwoPi * d.cfo_hz / s.sample_rate_hz;

    const bool has_pn = d.phase_noise_std_rad > 0.0;
    Rng rng(seed);

    const double g = std::pow(10.0, d.iq_gain_imbalance_db / 20.0);
    const double eps = 2.0 * (g - 1.0) / (g + 1.0);
    const double ct = std::cos(d.iq_phase_imbalance_rad);
    const double st = std::sin(d.iq_phase_imbalance_rad);
    const bool has_iq = d.iq_gain_imbalance_db != 0.0 || d.iq_phase_imbalance_rad != 0.0;
    const bool has_dc = d.dc_offset != std::complex<double>(0.0, 0.0);

    double pn = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double phase;
        if (d.stabilized) {
            phase = w * static_cast<double>(i);
        } else {
            // warm-up: instantaneous cfo settles linearly from 95% to 100%
            const double t = n > 1 ? static_cast<double>(i) / static_cast<double>(n - 1) : 1.0;
            phase = w * static_cast<double>(i) * (0.95 + 0.025 * t);
        }
        if (has_pn) {
            pn += rng.normal(0.0, d.phase_noise_std_rad);
            phase += pn;
        }
        std::complex<double> v = s.samples[i];
        if (phase != 0.0)
            v *= std::complex<double>(std::cos(phase), std::sin(phase));
        if (has_iq) {
            const double I = v.real(), Q = v.imag();
            v = {(1.0 + eps / 2.0) * I, (1.0 - eps / 2.0) * (Q * ct + I * st)};
        }
        if (has_dc)
            v += d.dc_offset;
        r.samples[i] = v;
    }
    return r;
}

IQFrame apply_channel(const IQFrame& r, const ChannelProfile& c) {
    if (c.amplitude_scale <= 0.0)
        throw std::invalid_argument("amplitude_scale must be positive");
    IQFrame out = r;
    const std::size_t n = r.samples.size();
    const std::size_t d = std::min<std::size_t>(c.delay_samples, n);
    for (std::size_t i = 0; i < d; ++i)
        out.samples[i] = {0.0, 0.0};
    for (std::size_t i = d; i < n; ++i)
        out.samples[i] = r.samples[i - d] * c.amplitude_scale;

    if (c.snr_db) {
        double power = 0.0;
        for (const auto& v : out.samples) power += std::norm(v);
        power /= static_cast<double>(n);
        const double noise_power = power / std::pow(10.0, *c.snr_db / 10.0);
        const double sigma = std::sqrt(noise_power / 2.0);
        Rng rng(c.seed);
        for (auto& v : out.samples)
            v += std::complex<double>(rng.normal(0.0, sigma), rng.normal(0.0, sigma));
    }
    return out;
}

unsigned count_envelope_humps(const dsp::RealSequence& component, const dsp::FirFilter& hilbert,
                              double max_cfo_hz_assumed) {
    if (max_cfo_hz_assumed <= 0.0)
        throw std::invalid_argument("max_cfo_hz_assumed must be positive");
    auto env = dsp::envelope(component, hilbert);

    const std::size_t min_sep = std::max<std::size_t>(
        2, static_cast<std::size_t>(component.sample_rate_hz / (4.0 * max_cfo_hz_assumed)));
    if (env.samples.size() <= min_sep)
        throw std::invalid_argument("envelope shorter than smoothing window");

    // moving average of width min_sep
    std::vector<double> sm(env.samples.size() - min_sep + 1);
    double acc = 0.0;
    for (std::size_t i = 0; i < min_sep; ++i) acc += env.samples[i];
    sm[0] = acc / static_cast<double>(min_sep);
    for (std::size_t i = 1; i < sm.size(); ++i) {
        acc += env.samples[i + min_sep - 1] - env.samples[i - 1];
        sm[i] = acc / static_cast<double>(min_sep);
    }

    double mx = 0.0, mn = sm[0];
    for (double v : sm) {
        mx = std::max(mx, v);
        mn = std::min(mn, v);
    }
    if (mx <= 0.0 || mn > 0.5 * mx)
        return 0;   // no modulation depth, envelope is flat

    const double hi = 0.6 * mx, lo = 0.4 * mx;
    unsigned count = sm[0] >= lo ? 1u : 0u;   // inside a lobe at the start
    bool armed = sm[0] < lo;
    for (double v : sm) {
        if (armed && v > hi) {
            ++count;
            armed = false;
        } else if (!armed && v < lo) {
            armed = true;
        }
    }
    return count;
}

std::vector<DeviceProfile> default_population(std::size_t n_devices, std::uint64_t seed) {
    // magnitudes >= 2 kHz on a >= 1.5 kHz grid inside +-25 kHz; the 15.0 and
    // 15.5 kHz slots are skipped (aliased Barker comb sits within a bin of
    // their beat line, which costs intra-device EPS stability)
    static const double mags[15] = {2000,  3500,  5000,  6500,  8000,
                                    9500,  11000, 12500, 14000, 16500,
                                    18000, 19500, 21000, 22500, 24000};
    if (n_devices > 15)
        throw std::invalid_argument("default population supports at most 15 devices");
    Rng rng(mix_seed(seed, 0x706f70));
    std::vector<DeviceProfile> pop(n_devices);
    for (std::size_t i = 0; i < n_devices; ++i) {
        auto& d = pop[i];
        d.device_id = static_cast<std::uint16_t>(i);
        d.cfo_hz = (i % 2 == 0 ? 1.0 : -1.0) * mags[i];
        d.iq_gain_imbalance_db = rng.uniform(-0.5, 0.5);
        d.iq_phase_imbalance_rad = rng.uniform(-2.0, 2.0) * M_PI / 180.0;
        d.dc_offset = {rng.uniform(-0.007, 0.007), rng.uniform(-0.007, 0.007)};
        d.phase_noise_std_rad = 1e-4;
        d.stabilized = true;
    }
    return pop;
}

std::vector<DeviceProfile> rogue_population(std::uint64_t seed) {
    static const double cfos[5] = {0.0, 27000.0, -27000.0, 30000.0, -30000.0};
    Rng rng(mix_seed(seed, 0x726f67));
    std::vector<DeviceProfile> pop(5);
    for (std::size_t i = 0; i < 5; ++i) {
        auto& d = pop[i];
        d.device_id = static_cast<std::uint16_t>(100 + i);
        d.cfo_hz = cfos[i];
        d.iq_gain_imbalance_db = rng.uniform(-0.5, 0.5);
        d.iq_phase_imbalance_rad = rng.uniform(-2.0, 2.0) * M_PI / 180.0;
        d.dc_offset = {rng.uniform(-0.007, 0.007), rng.uniform(-0.007, 0.007)};
        d.phase_noise_std_rad = 1e-4;
        d.stabilized = true;
    }
    return pop;
}

std::vector<double> i_rail(const IQFrame& f) {
    std::vector<double> v(f.samples.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = f.samples[i].real();
    return v;
}

std::vector<double> q_rail(const IQFrame& f) {
    std::vector<double> v(f.samples.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = f.samples[i].imag();
    return v;
}

} // namespace epsfp::sim
