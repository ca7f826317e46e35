#pragma once

#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

namespace epsfp::dsp {

struct RealSequence {
    std::vector<double> samples;
    double sample_rate_hz = 1.0;
};

struct EnvelopeSignal {
    std::vector<double> samples;   // >= 0
    double sample_rate_hz = 1.0;
};

struct PowerSpectrum {
    std::vector<double> bins;          // normalized, sum == 1
    std::vector<double> freq_axis_hz;  // zero frequency at index n/2
    double resolution_hz = 0.0;
};

enum class FilterKind { hilbert, lowpass };

struct BandSpec {
    double lo = 0.0;       // band edges, normalized to Nyquist in [0, 1]
    double hi = 0.0;
    double desired = 0.0;  // desired magnitude over the band
    double weight = 1.0;
};

struct FirDesignSpec {
    std::vector<BandSpec> bands;
    int length = 0;        // odd
    FilterKind kind = FilterKind::lowpass;
};

struct FirFilter {
    std::vector<double> taps;
    FilterKind kind = FilterKind::lowpass;
    int group_delay_samples = 0;
    FirDesignSpec design_spec;
    double achieved_ripple = 0.0;  // delta from the converged exchange
};

struct RemezNoConverge : std::runtime_error {
    double last_delta;
    explicit RemezNoConverge(double d)
        : std::runtime_error("remez did not converge (last delta = " + std::to_string(d) + ")"),
          last_delta(d) {}
};

// Equiripple linear-phase FIR design by Remez exchange (type I for lowpass,
// type III for hilbert). Throws std::invalid_argument on an infeasible spec
// and RemezNoConverge after max_iters exchanges without convergence.
FirFilter design_fir_remez(const FirDesignSpec& spec, int max_iters = 100);

// Zero-phase amplitude response A(f) at normalized frequency f in [0, 1]
// (sign-carrying for type III). Direct summation; used as the test oracle
// but also by filter serialization.
double amplitude_response(const FirFilter& h, double f_normalized);

// a(n) = x(n - D) + j (h * x)(n), trimmed to full overlap; length n - 2D
std::vector<std::complex<double>> analytic_signal(const RealSequence& x, const FirFilter& h);

EnvelopeSignal envelope(const RealSequence& x, const FirFilter& h);

// keep every factor-th sample from index 0; length floor(n / factor)
EnvelopeSignal decimate(const EnvelopeSignal& e, unsigned factor);

// zero-phase smoothing with a symmetric lowpass, trimmed to full overlap;
// taps are rescaled to exactly unit DC gain at application time
EnvelopeSignal lowpass_smooth(const EnvelopeSignal& e, const FirFilter& h);

// mean-removed, Hann-windowed, zero-padded periodogram; double-sided
// (fftshifted) and normalized to unit total power. n_fft must be a power of
// two and >= length(e).
PowerSpectrum power_spectrum(const EnvelopeSignal& e, std::size_t n_fft);

// in-place iterative radix-2 FFT, n a power of two
void fft_radix2(std::vector<std::complex<double>>& a, bool inverse = false);

std::vector<double> hann_window(std::size_t n);

void save_filter(const FirFilter& h, const std::string& path);
FirFilter load_filter(const std::string& path);

// the two pipeline filters with the project defaults
FirFilter default_hilbert();    // L=101, band [0.03, 0.97] x Nyquist
FirFilter default_lowpass();    // L=31, pass [0, 0.2], stop [0.3, 1], weights 1:10

} // namespace epsfp::dsp
