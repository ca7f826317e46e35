#include "epsfp/dataset.hpp"
#include "epsfp/rng.hpp"

#include "json.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace epsfp::io {

namespace {

// explicit little-endian encoding, independent of host byte order
template <typename T>
void put(std::string& out, T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    std::uint64_t bits = 0;
    if constexpr (sizeof(T) == 2) bits = std::bit_cast<std::uint16_t>(v);
    else if constexpr (sizeof(T) == 4) bits = std::bit_cast<std::uint32_t>(v);
    else bits = std::bit_cast<std::uint64_t>(v);
    for (std::size_t i = 0; i < sizeof(T); ++i)
        out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

struct Cursor {
    const unsigned char* p;
    std::size_t size;
    std::size_t off = 0;

    void need(std::size_t n, const char* what) const {
        if (off + n > size) throw ParseError(std::string("truncated file while reading ") + what, off);
    }
    template <typename T>
    T get(const char* what) {
        need(sizeof(T), what);
        std::uint64_t bits = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i)
            bits |= static_cast<std::uint64_t>(p[off + i]) << (8 * i);
        off += sizeof(T);
        if constexpr (sizeof(T) == 2) return std::bit_cast<T>(static_cast<std::uint16_t>(bits));
        else if constexpr (sizeof(T) == 4) return std::bit_cast<T>(static_cast<std::uint32_t>(bits));
        else return std::bit_cast<T>(bits);
    }
};

constexpr char kMagic[4] = {'E', 'P', 'S', 'F'};

} // namespace

void write_dataset(const std::string& path, const Dataset& ds) {
    if (ds.records.size() != ds.header.record_count)
        throw std::invalid_argument("record_count does not match records");
    std::string buf;
    buf.reserve(25 + ds.records.size() * (5 + 8ull * ds.header.frame_len));
    buf.append(kMagic, 4);
    put<std::uint32_t>(buf, ds.header.version);
    put<double>(buf, ds.header.sample_rate_hz);
    put<std::uint32_t>(buf, ds.header.frame_len);
    put<std::uint32_t>(buf, ds.header.record_count);
    buf.push_back(static_cast<char>(ds.header.payload_kind));
    for (const auto& r : ds.records) {
        if (r.payload.size() != 2ull * ds.header.frame_len)
            throw std::invalid_argument("record payload length does not match header frame_len");
        put<std::uint16_t>(buf, r.device_id);
        buf.push_back(static_cast<char>(r.domain.day));
        buf.push_back(static_cast<char>(r.domain.location));
        buf.push_back(static_cast<char>(r.domain.channel_kind));
        for (float v : r.payload) put<float>(buf, v);
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open " + path);
    f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!f) throw std::runtime_error("write failed: " + path);
}

Dataset read_dataset(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path);
    std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    Cursor c{reinterpret_cast<const unsigned char*>(buf.data()), buf.size()};

    c.need(4, "magic");
    if (std::memcmp(buf.data(), kMagic, 4) != 0)
        throw ParseError("bad magic, expected EPSF", 0);
    c.off = 4;

    Dataset ds;
    ds.header.version = c.get<std::uint32_t>("version");
    if (ds.header.version != 1)
        throw ParseError("unsupported version " + std::to_string(ds.header.version), 4);
    ds.header.sample_rate_hz = c.get<double>("sample_rate_hz");
    ds.header.frame_len = c.get<std::uint32_t>("frame_len");
    ds.header.record_count = c.get<std::uint32_t>("record_count");
    c.need(1, "payload_kind");
    const auto kind = static_cast<std::uint8_t>(c.p[c.off++]);
    if (kind > 1) throw ParseError("bad payload kind " + std::to_string(kind), c.off - 1);
    ds.header.payload_kind = static_cast<PayloadKind>(kind);

    const std::size_t record_bytes = 5 + 8ull * ds.header.frame_len;
    const std::size_t expect = 25 + record_bytes * ds.header.record_count;
    if (buf.size() != expect)
        throw ParseError("file size " + std::to_string(buf.size()) + " does not match declared record_count (expected " +
                             std::to_string(expect) + " bytes)",
                         buf.size() < expect ? buf.size() : expect);

    ds.records.resize(ds.header.record_count);
    for (auto& r : ds.records) {
        r.device_id = c.get<std::uint16_t>("device_id");
        c.need(3, "domain");
        r.domain.day = c.p[c.off++];
        r.domain.location = c.p[c.off++];
        r.domain.channel_kind = static_cast<sim::ChannelKind>(c.p[c.off++]);
        r.payload.resize(2ull * ds.header.frame_len);
        for (auto& v : r.payload) v = c.get<float>("payload");
    }
    return ds;
}

Record frame_to_record(const sim::IQFrame& f) {
    Record r;
    r.device_id = f.device_id.value_or(0);
    r.domain = f.domain.value_or(sim::DomainLabel{});
    r.payload.resize(2 * f.samples.size());
    for (std::size_t i = 0; i < f.samples.size(); ++i) {
        r.payload[2 * i] = static_cast<float>(f.samples[i].real());
        r.payload[2 * i + 1] = static_cast<float>(f.samples[i].imag());
    }
    return r;
}

sim::IQFrame record_to_frame(const DatasetHeader& h, const Record& r) {
    sim::IQFrame f;
    f.sample_rate_hz = h.sample_rate_hz;
    f.device_id = r.device_id;
    f.domain = r.domain;
    f.samples.resize(h.frame_len);
    for (std::size_t i = 0; i < f.samples.size(); ++i)
        f.samples[i] = {static_cast<double>(r.payload[2 * i]),
                        static_cast<double>(r.payload[2 * i + 1])};
    return f;
}

Record eps_to_record(const eps::EpsTensor& t) {
    Record r;
    r.device_id = t.source_device.value_or(0);
    r.domain = t.source_domain.value_or(sim::DomainLabel{});
    r.payload.resize(t.eps_i.size() + t.eps_q.size());
    for (std::size_t i = 0; i < t.eps_i.size(); ++i)
        r.payload[i] = static_cast<float>(t.eps_i[i]);
    for (std::size_t i = 0; i < t.eps_q.size(); ++i)
        r.payload[t.eps_i.size() + i] = static_cast<float>(t.eps_q[i]);
    return r;
}

eps::EpsTensor record_to_eps(const DatasetHeader& h, const Record& r) {
    eps::EpsTensor t;
    t.source_device = r.device_id;
    t.source_domain = r.domain;
    t.resolution_hz = h.sample_rate_hz / static_cast<double>(h.frame_len);
    t.eps_i.assign(r.payload.begin(), r.payload.begin() + h.frame_len);
    t.eps_q.assign(r.payload.begin() + h.frame_len, r.payload.end());
    return t;
}

Dataset eps_dataset(const Dataset& iq, const eps::PipelineConfig& cfg) {
    if (iq.header.payload_kind != PayloadKind::iq)
        throw std::invalid_argument("eps_dataset needs an iq dataset");
    Dataset out;
    out.header.sample_rate_hz = iq.header.sample_rate_hz / cfg.decimation;
    out.header.frame_len = static_cast<std::uint32_t>(cfg.n_fft);
    out.header.record_count = iq.header.record_count;
    out.header.payload_kind = PayloadKind::eps;
    out.records.resize(iq.records.size());
    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(iq.records.size());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        auto frame = record_to_frame(iq.header, iq.records[static_cast<std::size_t>(i)]);
        out.records[static_cast<std::size_t>(i)] = eps_to_record(eps::eps_of_frame(frame, cfg));
    }
    return out;
}

// ---- scenarios ----

ScenarioKind scenario_from_name(const std::string& name) {
    if (name == "fixed-location") return ScenarioKind::fixed_location;
    if (name == "random-location") return ScenarioKind::random_location;
    if (name == "cross-day") return ScenarioKind::cross_day;
    throw std::invalid_argument("unknown scenario: " + name);
}

namespace {

struct SessionState {
    double scale_jitter = 1.0;
    std::uint32_t delay = 0;
    double cfo_factor = 1.0;
    std::array<std::complex<double>, 3> mp_taps{};   // multipath, when enabled
};

SessionState session_state(const sim::DeviceProfile& dev, const sim::DomainLabel& dom,
                           const ScenarioSpec& spec, std::uint64_t seed) {
    const std::uint64_t sid = (static_cast<std::uint64_t>(dev.device_id) << 24) |
                              (static_cast<std::uint64_t>(dom.day) << 16) |
                              (static_cast<std::uint64_t>(dom.location) << 8) | 0x5e;
    Rng rng(mix_seed(seed, sid));
    SessionState s;
    s.scale_jitter = rng.uniform(spec.session_scale_jitter_lo, spec.session_scale_jitter_hi);
    s.delay = static_cast<std::uint32_t>(rng.below(spec.session_delay_max + 1));
    if (spec.kind == ScenarioKind::cross_day && dom.day > 0)
        s.cfo_factor = 1.0 + rng.uniform(-spec.day_cfo_jitter, spec.day_cfo_jitter);
    if (spec.multipath) {
        for (std::size_t k = 0; k < 3; ++k) {
            const double ph = rng.uniform(0.0, 2.0 * M_PI);
            const double mag = k < spec.multipath_mags.size() ? spec.multipath_mags[k] : 0.0;
            s.mp_taps[k] = std::polar(mag, k == 0 ? 0.0 : ph);
        }
    }
    return s;
}

sim::IQFrame one_frame(const sim::DeviceProfile& dev, const ScenarioSpec& spec,
                       const sim::DomainLabel& dom, double nominal_scale,
                       bool per_frame_random_placement, const SessionState& sess,
                       std::uint32_t t, std::uint64_t seed) {
    const std::uint64_t fid = (static_cast<std::uint64_t>(dev.device_id) << 40) |
                              (static_cast<std::uint64_t>(dom.day) << 32) |
                              (static_cast<std::uint64_t>(dom.location) << 24) | t;
    Rng rng(mix_seed(seed, fid));

    const std::size_t n_bits =
        (spec.frame_len + 11ull * spec.samples_per_chip - 1) / (11ull * spec.samples_per_chip) + 1;
    auto s = sim::generate_dsss_baseband(sim::random_payload(n_bits, rng.next_u64()),
                                         spec.samples_per_chip, spec.frame_len, rng.next_u64(),
                                         spec.smooth_chips);
    s.sample_rate_hz = spec.sample_rate_hz;

    sim::DeviceProfile d = dev;
    d.cfo_hz *= sess.cfo_factor;
    auto r = sim::apply_impairments(s, d, rng.next_u64());

    if (spec.multipath) {
        auto conv = r.samples;
        for (std::size_t i = 0; i < conv.size(); ++i) {
            std::complex<double> acc = r.samples[i] * sess.mp_taps[0];
            if (i >= 1) acc += r.samples[i - 1] * sess.mp_taps[1];
            if (i >= 2) acc += r.samples[i - 2] * sess.mp_taps[2];
            conv[i] = acc;
        }
        r.samples = std::move(conv);
    }

    double scale;
    std::uint32_t delay;
    if (per_frame_random_placement) {
        scale = rng.uniform(spec.random_scale_lo, spec.random_scale_hi);
        delay = static_cast<std::uint32_t>(rng.below(spec.random_delay_max + 1));
    } else {
        scale = nominal_scale * sess.scale_jitter;
        delay = sess.delay;
    }
    sim::ChannelProfile ch;
    ch.amplitude_scale = scale;
    ch.delay_samples = delay;
    ch.snr_db = spec.snr_ref_db + 20.0 * std::log10(scale);
    ch.seed = rng.next_u64();
    auto out = sim::apply_channel(r, ch);
    out.domain = dom;
    return out;
}

} // namespace

std::vector<sim::IQFrame> synth_frames(const sim::DeviceProfile& device, const ScenarioSpec& spec,
                                       const sim::DomainLabel& domain, double nominal_scale,
                                       bool per_frame_random_placement, std::uint32_t n_frames,
                                       std::uint64_t seed) {
    const auto sess = session_state(device, domain, spec, seed);
    std::vector<sim::IQFrame> frames(n_frames);
    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(n_frames);
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t t = 0; t < n; ++t)
        frames[static_cast<std::size_t>(t)] =
            one_frame(device, spec, domain, nominal_scale, per_frame_random_placement, sess,
                      static_cast<std::uint32_t>(t), seed);
    return frames;
}

Dataset build_scenario(const std::vector<sim::DeviceProfile>& population, const ScenarioSpec& spec,
                       std::uint32_t frames_per_device_per_domain, std::uint64_t seed) {
    if (population.empty())
        throw std::invalid_argument("population must not be empty");

    struct Domain {
        sim::DomainLabel label;
        double nominal_scale;
        bool random_placement;
    };
    std::vector<Domain> domains;
    switch (spec.kind) {
        case ScenarioKind::fixed_location:
            for (std::size_t l = 0; l < spec.location_scales.size(); ++l)
                domains.push_back({{0, static_cast<std::uint8_t>(l), sim::ChannelKind::wireless},
                                   spec.location_scales[l], false});
            break;
        case ScenarioKind::random_location:
            domains.push_back({{0, 3, sim::ChannelKind::wireless}, 1.0, true});
            break;
        case ScenarioKind::cross_day:
            for (int day = 0; day < spec.days; ++day)
                domains.push_back({{static_cast<std::uint8_t>(day), 0, sim::ChannelKind::wireless},
                                   spec.location_scales.empty() ? 1.0 : spec.location_scales[0],
                                   false});
            break;
    }

    Dataset ds;
    ds.header.sample_rate_hz = spec.sample_rate_hz;
    ds.header.frame_len = spec.frame_len;
    ds.header.payload_kind = PayloadKind::iq;
    for (const auto& dev : population) {
        for (const auto& dom : domains) {
            auto frames = synth_frames(dev, spec, dom.label, dom.nominal_scale,
                                       dom.random_placement, frames_per_device_per_domain, seed);
            for (auto& f : frames) {
                f.device_id = dev.device_id;
                ds.records.push_back(frame_to_record(f));
            }
        }
    }
    ds.header.record_count = static_cast<std::uint32_t>(ds.records.size());
    return ds;
}

void write_manifest(const std::string& path, const std::vector<sim::DeviceProfile>& population,
                    const ScenarioSpec& spec, std::uint32_t frames_per_device_per_domain,
                    std::uint64_t seed) {
    nlohmann::ordered_json j;
    j["seed"] = seed;
    j["frames_per_device_per_domain"] = frames_per_device_per_domain;
    const char* names[] = {"fixed-location", "random-location", "cross-day"};
    j["scenario"] = {{"kind", names[static_cast<int>(spec.kind)]},
                     {"sample_rate_hz", spec.sample_rate_hz},
                     {"frame_len", spec.frame_len},
                     {"samples_per_chip", spec.samples_per_chip},
                     {"smooth_chips", spec.smooth_chips},
                     {"snr_ref_db", spec.snr_ref_db},
                     {"location_scales", spec.location_scales},
                     {"session_scale_jitter", {spec.session_scale_jitter_lo, spec.session_scale_jitter_hi}},
                     {"session_delay_max", spec.session_delay_max},
                     {"random_scale", {spec.random_scale_lo, spec.random_scale_hi}},
                     {"random_delay_max", spec.random_delay_max},
                     {"days", spec.days},
                     {"day_cfo_jitter", spec.day_cfo_jitter},
                     {"multipath", spec.multipath}};
    j["population"] = nlohmann::ordered_json::array();
    for (const auto& d : population) {
        j["population"].push_back({{"device_id", d.device_id},
                                   {"cfo_hz", d.cfo_hz},
                                   {"iq_gain_imbalance_db", d.iq_gain_imbalance_db},
                                   {"iq_phase_imbalance_rad", d.iq_phase_imbalance_rad},
                                   {"dc_offset", {d.dc_offset.real(), d.dc_offset.imag()}},
                                   {"phase_noise_std_rad", d.phase_noise_std_rad},
                                   {"stabilized", d.stabilized}});
    }
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path);
    f << j.dump(2) << "\n";
}

} // namespace epsfp::io
