#pragma once

#include "epsfp/dsp.hpp"
#include "epsfp/waveform.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

namespace epsfp::eps {

struct EpsTensor {
    std::vector<double> eps_i;   // 4096 bins, sum 1
    std::vector<double> eps_q;
    double resolution_hz = 0.0;
    std::optional<std::uint16_t> source_device;
    std::optional<sim::DomainLabel> source_domain;
};

struct PipelineConfig {
    dsp::FirFilter hilbert;
    dsp::FirFilter smoothing_lowpass;
    unsigned decimation = 15;
    std::size_t n_fft = 4096;
    std::size_t frame_len = sim::kFrameLen;

    static PipelineConfig defaults();
};

// IQFrame -> (EPS(I), EPS(Q)): per rail, Hilbert envelope -> decimate ->
// lowpass smooth -> normalized double-sided periodogram
EpsTensor eps_of_frame(const sim::IQFrame& r, const PipelineConfig& cfg);

// cosine similarity of the concatenated 2 x n_fft tensors, in [-1, 1]
double eps_similarity(const EpsTensor& a, const EpsTensor& b);

// flattened copy [eps_i | eps_q]
std::vector<double> flatten(const EpsTensor& t);

// raw-IQ baseline input: a contiguous window per rail, each rail
// standardized to zero mean / unit variance
struct RawIQTensor {
    std::vector<double> i_row;
    std::vector<double> q_row;
};
RawIQTensor raw_iq_representation(const sim::IQFrame& r, std::size_t window_len,
                                  std::size_t offset = 0);

// batch helper, parallel over frames
std::vector<EpsTensor> eps_of_frames(const std::vector<sim::IQFrame>& frames,
                                     const PipelineConfig& cfg);

} // namespace epsfp::eps
