#include "epsfp/eps.hpp"

#include <cmath>
#include <stdexcept>

namespace epsfp::eps {

PipelineConfig PipelineConfig::defaults() {
    PipelineConfig cfg;
    cfg.hilbert = dsp::default_hilbert();
    cfg.smoothing_lowpass = dsp::default_lowpass();
    return cfg;
}

namespace {

std::vector<double> eps_rail(const std::vector<double>& rail, double fs,
                             const PipelineConfig& cfg, double& resolution_hz) {
    dsp::RealSequence x{rail, fs};
    auto env = dsp::envelope(x, cfg.hilbert);
    auto dec = dsp::decimate(env, cfg.decimation);
    auto sm = dsp::lowpass_smooth(dec, cfg.smoothing_lowpass);
    auto ps = dsp::power_spectrum(sm, cfg.n_fft);
    resolution_hz = ps.resolution_hz;
    return std::move(ps.bins);
}

} // namespace

EpsTensor eps_of_frame(const sim::IQFrame& r, const PipelineConfig& cfg) {
    if (r.samples.size() != cfg.frame_len)
        throw std::invalid_argument("frame length mismatch: expected " +
                                    std::to_string(cfg.frame_len) + ", got " +
                                    std::to_string(r.samples.size()));
    for (const auto& v : r.samples)
        if (!std::isfinite(v.real()) || !std::isfinite(v.imag()))
            throw std::invalid_argument("non-finite sample in frame");

    EpsTensor t;
    t.source_device = r.device_id;
    t.source_domain = r.domain;
    t.eps_i = eps_rail(sim::i_rail(r), r.sample_rate_hz, cfg, t.resolution_hz);
    t.eps_q = eps_rail(sim::q_rail(r), r.sample_rate_hz, cfg, t.resolution_hz);
    return t;
}

std::vector<double> flatten(const EpsTensor& t) {
    std::vector<double> v;
    v.reserve(t.eps_i.size() + t.eps_q.size());
    v.insert(v.end(), t.eps_i.begin(), t.eps_i.end());
    v.insert(v.end(), t.eps_q.begin(), t.eps_q.end());
    return v;
}

double eps_similarity(const EpsTensor& a, const EpsTensor& b) {
    if (a.eps_i.size() != b.eps_i.size() || a.eps_q.size() != b.eps_q.size())
        throw std::invalid_argument("shape mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    auto acc = [&](const std::vector<double>& x, const std::vector<double>& y) {
        for (std::size_t i = 0; i < x.size(); ++i) {
            dot += x[i] * y[i];
            na += x[i] * x[i];
            nb += y[i] * y[i];
        }
    };
    acc(a.eps_i, b.eps_i);
    acc(a.eps_q, b.eps_q);
    if (na == 0.0 || nb == 0.0)
        throw std::invalid_argument("zero vector in similarity");
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

RawIQTensor raw_iq_representation(const sim::IQFrame& r, std::size_t window_len,
                                  std::size_t offset) {
    if (offset + window_len > r.samples.size())
        throw std::invalid_argument("window exceeds frame");
    RawIQTensor t;
    t.i_row.resize(window_len);
    t.q_row.resize(window_len);
    for (std::size_t i = 0; i < window_len; ++i) {
        t.i_row[i] = r.samples[offset + i].real();
        t.q_row[i] = r.samples[offset + i].imag();
    }
    for (auto* row : {&t.i_row, &t.q_row}) {
        double mean = 0.0;
        for (double v : *row) mean += v;
        mean /= static_cast<double>(window_len);
        double var = 0.0;
        for (double v : *row) var += (v - mean) * (v - mean);
        var /= static_cast<double>(window_len);
        if (var <= 0.0)
            throw std::invalid_argument("constant rail cannot be standardized");
        const double inv = 1.0 / std::sqrt(var);
        for (double& v : *row) v = (v - mean) * inv;
    }
    return t;
}

std::vector<EpsTensor> eps_of_frames(const std::vector<sim::IQFrame>& frames,
                                     const PipelineConfig& cfg) {
    std::vector<EpsTensor> out(frames.size());
    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(frames.size());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < n; ++i)
        out[static_cast<std::size_t>(i)] = eps_of_frame(frames[static_cast<std::size_t>(i)], cfg);
    return out;
}

} // namespace epsfp::eps
