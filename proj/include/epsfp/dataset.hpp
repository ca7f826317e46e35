#pragma once

#include "epsfp/eps.hpp"
#include "epsfp/waveform.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace epsfp::io {

enum class PayloadKind : std::uint8_t { iq = 0, eps = 1 };

// Binary layout (all little-endian):
//   header: "EPSF" | version u32 | sample_rate_hz f64 | frame_len u32 |
//           record_count u32 | payload_kind u8            (25 bytes)
//   record: device_id u16 | day u8 | location u8 | channel_kind u8 |
//           payload f32 x (2 * frame_len)                 (5 + 8*frame_len bytes)
// payload: iq  -> interleaved I0,Q0,I1,Q1,...
//          eps -> EPS(I) row then EPS(Q) row; sample_rate_hz stores the
//                 post-decimation rate, so resolution = rate / frame_len
struct DatasetHeader {
    std::uint32_t version = 1;
    double sample_rate_hz = 0.0;
    std::uint32_t frame_len = 0;
    std::uint32_t record_count = 0;
    PayloadKind payload_kind = PayloadKind::iq;
};

struct Record {
    std::uint16_t device_id = 0;
    sim::DomainLabel domain;
    std::vector<float> payload;   // 2 * frame_len
};

struct Dataset {
    DatasetHeader header;
    std::vector<Record> records;
};

struct ParseError : std::runtime_error {
    std::size_t byte_offset;
    ParseError(const std::string& what, std::size_t offset)
        : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"),
          byte_offset(offset) {}
};

void write_dataset(const std::string& path, const Dataset& ds);
Dataset read_dataset(const std::string& path);

Record frame_to_record(const sim::IQFrame& f);
sim::IQFrame record_to_frame(const DatasetHeader& h, const Record& r);
Record eps_to_record(const eps::EpsTensor& t);
eps::EpsTensor record_to_eps(const DatasetHeader& h, const Record& r);

// full-dataset EPS extraction (iq kind in, eps kind out), parallel over frames
Dataset eps_dataset(const Dataset& iq, const eps::PipelineConfig& cfg);

// ---- scenario synthesis ----

enum class ScenarioKind { fixed_location, random_location, cross_day };

ScenarioKind scenario_from_name(const std::string& name);   // throws on unknown

struct ScenarioSpec {
    ScenarioKind kind = ScenarioKind::fixed_location;
    double sample_rate_hz = 20e6;
    std::uint32_t frame_len = sim::kFrameLen;
    unsigned samples_per_chip = 2;
    bool smooth_chips = true;

    // receiver noise floor model: requested SNR = snr_ref_db at effective
    // scale 1.0, shifting by 20 log10(scale) as the placement changes
    double snr_ref_db = 30.0;
    std::vector<double> location_scales = {1.0, 0.6, 0.35};   // Loc A/B/C
    double session_scale_jitter_lo = 0.8;    // per-(device, domain) placement
    double session_scale_jitter_hi = 1.25;
    std::uint32_t session_delay_max = 200;

    double random_scale_lo = 0.3;            // random-location, per frame
    double random_scale_hi = 1.0;
    std::uint32_t random_delay_max = 200;

    int days = 3;
    double day_cfo_jitter = 0.01;            // +-1% of each device's CFO

    bool multipath = false;                  // 3-tap FIR, off by default
    std::vector<double> multipath_mags = {1.0, 0.3, 0.1};
};

// Labeled frames for every device x domain of the scenario; deterministic
// given seed. Domains: fixed-location -> locations 0..2; random-location ->
// location 3; cross-day -> days 0..2 at location 0.
Dataset build_scenario(const std::vector<sim::DeviceProfile>& population,
                       const ScenarioSpec& spec, std::uint32_t frames_per_device_per_domain,
                       std::uint64_t seed);

// frames for one device in one explicit domain (used for enrollment, rogue
// and figure reproductions); same deterministic derivation as build_scenario
std::vector<sim::IQFrame> synth_frames(const sim::DeviceProfile& device, const ScenarioSpec& spec,
                                       const sim::DomainLabel& domain, double nominal_scale,
                                       bool per_frame_random_placement, std::uint32_t n_frames,
                                       std::uint64_t seed);

// human-readable sidecar with everything needed to regenerate the dataset
void write_manifest(const std::string& path, const std::vector<sim::DeviceProfile>& population,
                    const ScenarioSpec& spec, std::uint32_t frames_per_device_per_domain,
                    std::uint64_t seed);

} // namespace epsfp::io
