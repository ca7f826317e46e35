#include "epsfp/dsp.hpp"
#include "epsfp/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

namespace epsfp::dsp {

namespace {

constexpr double kPi = 3.14159265358979323846;

// ---------------- Remez exchange ----------------
//
// The design problem is reduced to a weighted Chebyshev approximation by a
// cosine polynomial P(x), x = cos(pi f):
//   type I  : A(f) = P(x),              r = (L+1)/2 coefficients
//   type III: A(f) = sin(pi f) P(x),    r = (L-1)/2, with
//             D'(f) = D(f)/sin(pi f), W'(f) = W(f) sin(pi f)

struct GridPoint {
    double f;   // normalized [0, 1]
    double x;   // cos(pi f)
    double d;   // transformed desired
    double w;   // transformed weight
};

struct Exchange {
    std::vector<GridPoint> grid;
    int r = 0;
    std::vector<int> ext;   // r+1 extremal grid indices
    double delta = 0.0;
    // barycentric data for the current extremal set
    std::vector<double> bary_w;   // gamma_k over all r+1 points
    std::vector<double> cvals;    // interpolated values at extremal points
};

double compute_delta(Exchange& e) {
    const int m = e.r + 1;
    e.bary_w.assign(m, 0.0);
    for (int k = 0; k < m; ++k) {
        double prod = 1.0;
        const double xk = e.grid[e.ext[k]].x;
        for (int j = 0; j < m; ++j) {
            if (j == k) continue;
            prod *= (xk - e.grid[e.ext[j]].x);
        }
        e.bary_w[k] = 1.0 / prod;
    }
    double num = 0.0, den = 0.0, sign = 1.0;
    for (int k = 0; k < m; ++k) {
        num += e.bary_w[k] * e.grid[e.ext[k]].d;
        den += sign * e.bary_w[k] / e.grid[e.ext[k]].w;
        sign = -sign;
    }
    e.delta = num / den;
    e.cvals.assign(m, 0.0);
    sign = 1.0;
    for (int k = 0; k < m; ++k) {
        e.cvals[k] = e.grid[e.ext[k]].d - sign * e.delta / e.grid[e.ext[k]].w;
        sign = -sign;
    }
    return e.delta;
}

// barycentric interpolation through the first r extremal points
double interp_at(const Exchange& e, double x) {
    const int r = e.r;
    double num = 0.0, den = 0.0;
    for (int k = 0; k < r; ++k) {
        const double xk = e.grid[e.ext[k]].x;
        const double dx = x - xk;
        if (std::abs(dx) < 1e-14) return e.cvals[k];
        // weights over the r-point subset: gamma_k * (x_k - x_r)
        const double wk = e.bary_w[k] * (xk - e.grid[e.ext[r]].x);
        num += wk * e.cvals[k] / dx;
        den += wk / dx;
    }
    return num / den;
}

// pick a new alternating extremal set from the weighted error on the grid
bool reselect_extrema(Exchange& e, const std::vector<double>& err) {
    const int n = static_cast<int>(e.grid.size());
    std::vector<int> cand;
    for (int i = 0; i < n; ++i) {
        const bool band_edge =
            (i == 0 || e.grid[i].f - e.grid[i - 1].f > 1.5 * (e.grid[1].f - e.grid[0].f)) ||
            (i == n - 1 || e.grid[i + 1].f - e.grid[i].f > 1.5 * (e.grid[1].f - e.grid[0].f));
        const bool lmax = (i == 0 || std::abs(err[i]) >= std::abs(err[i - 1])) &&
                          (i == n - 1 || std::abs(err[i]) > std::abs(err[i + 1]));
        if (lmax || band_edge) cand.push_back(i);
    }
    // enforce sign alternation: within a same-sign run keep the largest |err|
    std::vector<int> alt;
    for (int i : cand) {
        if (!alt.empty() && ((err[alt.back()] >= 0) == (err[i] >= 0))) {
            if (std::abs(err[i]) > std::abs(err[alt.back()])) alt.back() = i;
        } else {
            alt.push_back(i);
        }
    }
    const int m = e.r + 1;
    if (static_cast<int>(alt.size()) < m) return false;
    // trim extras from whichever end has the smaller error magnitude
    while (static_cast<int>(alt.size()) > m) {
        if (std::abs(err[alt.front()]) < std::abs(err[alt.back()]))
            alt.erase(alt.begin());
        else
            alt.pop_back();
    }
    e.ext = std::move(alt);
    return true;
}

std::vector<double> cheb_coeffs_from_interp(const Exchange& e) {
    // sample P at Chebyshev-Lobatto nodes, then DCT-I to coefficients of
    // P(x) = sum a_k T_k(x) = sum a_k cos(k pi f)
    const int r = e.r;
    const int m = r - 1;
    std::vector<double> p(r);
    if (m == 0) {
        p[0] = interp_at(e, 1.0);
        return {p[0]};
    }
    for (int j = 0; j <= m; ++j)
        p[j] = interp_at(e, std::cos(kPi * j / m));
    std::vector<double> a(r, 0.0);
    for (int k = 0; k <= m; ++k) {
        double acc = 0.5 * (p[0] + (k % 2 == 0 ? p[m] : -p[m]));
        for (int j = 1; j < m; ++j)
            acc += p[j] * std::cos(kPi * j * k / m);
        const double scale = (k == 0 || k == m) ? 1.0 : 2.0;
        a[k] = scale * acc / m;
    }
    return a;
}

std::vector<double> taps_from_cheb(const std::vector<double>& a, int length, FilterKind kind) {
    const int M = (length - 1) / 2;
    std::vector<double> h(length, 0.0);
    if (kind == FilterKind::lowpass) {
        h[M] = a[0];
        for (int k = 1; k <= M; ++k) {
            h[M + k] = a[k] / 2.0;
            h[M - k] = a[k] / 2.0;
        }
    } else {
        // A(f) = sin(pi f) P = sum_m b_m sin(m pi f); tap signs follow the
        // Hilbert-transformer convention H ~ -j sgn(w), so cos -> +sin
        auto A = [&](int idx) { return idx < static_cast<int>(a.size()) ? a[idx] : 0.0; };
        for (int m = 1; m <= M; ++m) {
            const double bm = (m == 1) ? A(0) - A(2) / 2.0
                                       : (A(m - 1) - A(m + 1)) / 2.0;
            h[M + m] = bm / 2.0;
            h[M - m] = -bm / 2.0;
        }
        h[M] = 0.0;
    }
    return h;
}

void validate_spec(const FirDesignSpec& spec) {
    if (spec.length < 3 || spec.length % 2 == 0)
        throw std::invalid_argument("filter length must be odd and >= 3");
    if (spec.bands.empty())
        throw std::invalid_argument("no bands given");
    double prev_hi = -1.0;
    for (const auto& b : spec.bands) {
        if (b.lo < 0.0 || b.hi > 1.0 || b.lo >= b.hi)
            throw std::invalid_argument("band edges must satisfy 0 <= lo < hi <= 1");
        if (b.lo < prev_hi)
            throw std::invalid_argument("bands overlap");
        if (b.lo == prev_hi)
            throw std::invalid_argument("empty transition band");
        if (b.weight <= 0.0)
            throw std::invalid_argument("band weight must be positive");
        prev_hi = b.hi;
    }
    if (spec.kind == FilterKind::hilbert) {
        if (spec.bands.front().lo <= 0.0 || spec.bands.back().hi >= 1.0)
            throw std::invalid_argument("hilbert bands must exclude f = 0 and f = 1");
    }
}

} // namespace

FirFilter design_fir_remez(const FirDesignSpec& spec, int max_iters) {
    validate_spec(spec);
    const int M = (spec.length - 1) / 2;
    const int r = (spec.kind == FilterKind::lowpass) ? M + 1 : M;

    // dense design grid, ~32 points per basis function spread over the bands
    double total_width = 0.0;
    for (const auto& b : spec.bands) total_width += b.hi - b.lo;
    const int n_grid_target = std::max(32 * r, 64);

    Exchange e;
    e.r = r;
    for (const auto& b : spec.bands) {
        int npts = std::max(8, static_cast<int>(n_grid_target * (b.hi - b.lo) / total_width));
        for (int i = 0; i < npts; ++i) {
            GridPoint g;
            g.f = b.lo + (b.hi - b.lo) * i / (npts - 1);
            if (spec.kind == FilterKind::hilbert) {
                const double s = std::sin(kPi * g.f);
                g.d = b.desired / s;
                g.w = b.weight * s;
            } else {
                g.d = b.desired;
                g.w = b.weight;
            }
            g.x = std::cos(kPi * g.f);
            e.grid.push_back(g);
        }
    }
    if (static_cast<int>(e.grid.size()) < r + 1)
        throw std::invalid_argument("grid too small for requested length");

    // initial extremal set: evenly spaced over the grid
    e.ext.resize(r + 1);
    const int n = static_cast<int>(e.grid.size());
    for (int k = 0; k <= r; ++k)
        e.ext[k] = static_cast<int>(static_cast<long long>(k) * (n - 1) / r);

    std::vector<double> err(n);
    double delta = 0.0;
    bool converged = false;
    for (int iter = 0; iter < max_iters; ++iter) {
        delta = compute_delta(e);
        double emax = 0.0;
        for (int i = 0; i < n; ++i) {
            const double p = interp_at(e, e.grid[i].x);
            err[i] = e.grid[i].w * (e.grid[i].d - p);
            emax = std::max(emax, std::abs(err[i]));
        }
        if (emax - std::abs(delta) <= 1e-6 * std::abs(delta)) {
            converged = true;
            break;
        }
        if (!reselect_extrema(e, err))
            throw RemezNoConverge(std::abs(delta));
    }
    if (!converged)
        throw RemezNoConverge(std::abs(delta));

    FirFilter out;
    out.design_spec = spec;
    out.kind = spec.kind;
    out.group_delay_samples = M;
    out.taps = taps_from_cheb(cheb_coeffs_from_interp(e), spec.length, spec.kind);
    // clean structural zeros of the symmetric-band hilbert design
    if (spec.kind == FilterKind::hilbert) {
        for (int k = 0; k < spec.length; k += 2)
            if (std::abs(out.taps[k]) < 1e-12) out.taps[k] = 0.0;
    }
    for (double t : out.taps)
        if (!std::isfinite(t)) throw RemezNoConverge(std::abs(delta));

    // report the realized band deviation of the final taps, measured on a
    // much finer grid than the exchange used (covers between-grid overshoot)
    double realized = 0.0;
    for (const auto& b : spec.bands) {
        const int npts = 256 * r;
        for (int i = 0; i <= npts; ++i) {
            const double f = b.lo + (b.hi - b.lo) * i / npts;
            realized = std::max(realized,
                                b.weight * std::abs(amplitude_response(out, f) - b.desired));
        }
    }
    out.achieved_ripple = realized;
    return out;
}

double amplitude_response(const FirFilter& h, double f) {
    const int L = static_cast<int>(h.taps.size());
    const int M = (L - 1) / 2;
    double acc = 0.0;
    if (h.kind == FilterKind::lowpass) {
        acc = h.taps[M];
        for (int k = 1; k <= M; ++k)
            acc += 2.0 * h.taps[M - k] * std::cos(kPi * f * k);
    } else {
        for (int k = 1; k <= M; ++k)
            acc += 2.0 * h.taps[M + k] * std::sin(kPi * f * k);
    }
    return acc;
}

std::vector<std::complex<double>> analytic_signal(const RealSequence& x, const FirFilter& h) {
    if (h.kind != FilterKind::hilbert)
        throw std::invalid_argument("analytic_signal needs a hilbert filter");
    const std::size_t L = h.taps.size();
    if (x.samples.size() <= L)
        throw std::invalid_argument("input shorter than filter");
    const std::size_t D = static_cast<std::size_t>(h.group_delay_samples);
    const std::size_t out_len = x.samples.size() - 2 * D;
    std::vector<double> im(out_len);
    kernels::fir_valid(x.samples.data(), x.samples.size(), h.taps.data(), L, im.data());
    std::vector<std::complex<double>> a(out_len);
    for (std::size_t i = 0; i < out_len; ++i)
        a[i] = {x.samples[i + D], im[i]};
    return a;
}

EnvelopeSignal envelope(const RealSequence& x, const FirFilter& h) {
    auto a = analytic_signal(x, h);
    EnvelopeSignal e;
    e.sample_rate_hz = x.sample_rate_hz;
    e.samples.resize(a.size());
    for (std::size_t i = 0; i < a.size(); ++i)
        e.samples[i] = std::abs(a[i]);
    return e;
}

EnvelopeSignal decimate(const EnvelopeSignal& e, unsigned factor) {
    if (factor == 0)
        throw std::invalid_argument("decimation factor must be >= 1");
    if (e.samples.size() < factor)
        throw std::invalid_argument("input shorter than decimation factor");
    EnvelopeSignal out;
    out.sample_rate_hz = e.sample_rate_hz / factor;
    const std::size_t m = e.samples.size() / factor;
    out.samples.resize(m);
    for (std::size_t i = 0; i < m; ++i)
        out.samples[i] = e.samples[i * factor];
    return out;
}

EnvelopeSignal lowpass_smooth(const EnvelopeSignal& e, const FirFilter& h) {
    if (h.kind != FilterKind::lowpass)
        throw std::invalid_argument("lowpass_smooth needs a lowpass filter");
    const std::size_t L = h.taps.size();
    if (e.samples.size() <= L)
        throw std::invalid_argument("input shorter than filter");
    const double dc = std::accumulate(h.taps.begin(), h.taps.end(), 0.0);
    if (std::abs(dc) < 1e-9)
        throw std::invalid_argument("lowpass filter has no DC gain");
    std::vector<double> taps(h.taps);
    for (double& t : taps) t /= dc;   // exact unit DC gain at application
    EnvelopeSignal out;
    out.sample_rate_hz = e.sample_rate_hz;
    out.samples.resize(e.samples.size() - L + 1);
    kernels::fir_valid(e.samples.data(), e.samples.size(), taps.data(), L, out.samples.data());
    return out;
}

void fft_radix2(std::vector<std::complex<double>>& a, bool inverse) {
    const std::size_t n = a.size();
    if (n == 0 || (n & (n - 1)) != 0)
        throw std::invalid_argument("fft size must be a power of two");
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = (inverse ? 2.0 : -2.0) * kPi / static_cast<double>(len);
        const std::complex<double> wl(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const auto u = a[i + k];
                const auto v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wl;
            }
        }
    }
    if (inverse)
        for (auto& v : a) v /= static_cast<double>(n);
}

std::vector<double> hann_window(std::size_t n) {
    std::vector<double> w(n, 1.0);
    if (n < 2) return w;
    for (std::size_t i = 0; i < n; ++i)
        w[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * i / (n - 1));
    return w;
}

PowerSpectrum power_spectrum(const EnvelopeSignal& e, std::size_t n_fft) {
    if (n_fft == 0 || (n_fft & (n_fft - 1)) != 0)
        throw std::invalid_argument("n_fft must be a power of two");
    const std::size_t m = e.samples.size();
    if (m == 0)
        throw std::invalid_argument("empty input");
    if (m > n_fft)
        throw std::invalid_argument("input longer than n_fft; decimate or trim first");
    for (double v : e.samples)
        if (!std::isfinite(v)) throw std::invalid_argument("non-finite sample");

    double mean = std::accumulate(e.samples.begin(), e.samples.end(), 0.0) / static_cast<double>(m);
    const auto win = hann_window(m);
    std::vector<std::complex<double>> buf(n_fft, {0.0, 0.0});
    for (std::size_t i = 0; i < m; ++i)
        buf[i] = {(e.samples[i] - mean) * win[i], 0.0};
    fft_radix2(buf);

    std::vector<double> p(n_fft);
    double total = 0.0;
    for (std::size_t k = 0; k < n_fft; ++k) {
        p[k] = std::norm(buf[k]);
        total += p[k];
    }
    if (total <= 0.0)
        throw std::invalid_argument("spectrum undefined: input is constant after centering");

    PowerSpectrum out;
    out.resolution_hz = e.sample_rate_hz / static_cast<double>(n_fft);
    out.bins.resize(n_fft);
    out.freq_axis_hz.resize(n_fft);
    const std::size_t half = n_fft / 2;
    for (std::size_t k = 0; k < n_fft; ++k) {
        out.bins[k] = p[(k + half) % n_fft] / total;   // zero frequency at n/2
        out.freq_axis_hz[k] =
            (static_cast<double>(k) - static_cast<double>(half)) * out.resolution_hz;
    }
    return out;
}

void save_filter(const FirFilter& h, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path);
    f << "kind " << (h.kind == FilterKind::hilbert ? "hilbert" : "lowpass") << "\n";
    f << "length " << h.taps.size() << "\n";
    f << "ripple " << std::scientific << h.achieved_ripple << "\n";
    f << "bands " << h.design_spec.bands.size() << "\n";
    f.precision(17);
    for (const auto& b : h.design_spec.bands)
        f << b.lo << " " << b.hi << " " << b.desired << " " << b.weight << "\n";
    f << "taps\n";
    for (double t : h.taps) f << t << "\n";
    if (!f) throw std::runtime_error("write failed: " + path);
}

FirFilter load_filter(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path);
    FirFilter h;
    std::string key, kind;
    std::size_t length = 0, nbands = 0;
    f >> key >> kind;
    if (key != "kind" || (kind != "hilbert" && kind != "lowpass"))
        throw std::runtime_error("bad filter file: " + path);
    h.kind = kind == "hilbert" ? FilterKind::hilbert : FilterKind::lowpass;
    f >> key >> length;
    f >> key >> h.achieved_ripple;
    f >> key >> nbands;
    h.design_spec.kind = h.kind;
    h.design_spec.length = static_cast<int>(length);
    for (std::size_t i = 0; i < nbands; ++i) {
        BandSpec b;
        f >> b.lo >> b.hi >> b.desired >> b.weight;
        h.design_spec.bands.push_back(b);
    }
    f >> key;
    if (key != "taps") throw std::runtime_error("bad filter file: " + path);
    h.taps.resize(length);
    for (std::size_t i = 0; i < length; ++i) f >> h.taps[i];
    if (!f) throw std::runtime_error("truncated filter file: " + path);
    h.group_delay_samples = (static_cast<int>(length) - 1) / 2;
    return h;
}

FirFilter default_hilbert() {
    FirDesignSpec s;
    s.kind = FilterKind::hilbert;
    s.length = 101;
    s.bands = {{0.03, 0.97, 1.0, 1.0}};
    return design_fir_remez(s);
}

FirFilter default_lowpass() {
    FirDesignSpec s;
    s.kind = FilterKind::lowpass;
    s.length = 31;
    s.bands = {{0.0, 0.2, 1.0, 1.0}, {0.3, 1.0, 0.0, 10.0}};
    return design_fir_remez(s);
}

} // namespace epsfp::dsp
