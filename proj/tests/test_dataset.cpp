#include "doctest.h"
#include "epsfp/dataset.hpp"

#include <cstdio>
#include <fstream>
#include <map>

using namespace epsfp;
using namespace epsfp::io;

namespace {

Dataset tiny_iq_dataset(std::uint32_t frame_len = 64, std::uint32_t n = 3) {
    Dataset ds;
    ds.header.sample_rate_hz = 20e6;
    ds.header.frame_len = frame_len;
    ds.header.record_count = n;
    ds.header.payload_kind = PayloadKind::iq;
    for (std::uint32_t i = 0; i < n; ++i) {
        Record r;
        r.device_id = static_cast<std::uint16_t>(i);
        r.domain = {static_cast<std::uint8_t>(i % 3), 1, sim::ChannelKind::wireless};
        r.payload.resize(2 * frame_len);
        for (std::size_t k = 0; k < r.payload.size(); ++k)
            r.payload[k] = static_cast<float>(0.25 * k - i);
        ds.records.push_back(std::move(r));
    }
    return ds;
}

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

} // namespace

TEST_CASE("dataset round-trip is bit-identical") {
    auto ds = tiny_iq_dataset();
    write_dataset("ds_a.bin", ds);
    auto back = read_dataset("ds_a.bin");
    write_dataset("ds_b.bin", back);
    CHECK(slurp("ds_a.bin") == slurp("ds_b.bin"));
    CHECK(back.header.record_count == 3);
    CHECK(back.records[1].payload == ds.records[1].payload);
    CHECK(back.records[2].domain.day == 2);
    std::remove("ds_a.bin");
    std::remove("ds_b.bin");
}

TEST_CASE("empty dataset round-trips") {
    Dataset ds;
    ds.header.sample_rate_hz = 1.0;
    ds.header.frame_len = 16;
    ds.header.record_count = 0;
    write_dataset("ds_empty.bin", ds);
    auto back = read_dataset("ds_empty.bin");
    CHECK(back.records.empty());
    std::remove("ds_empty.bin");
}

TEST_CASE("file size arithmetic") {
    Dataset ds = tiny_iq_dataset(25170, 1);
    write_dataset("ds_sz.bin", ds);
    CHECK(slurp("ds_sz.bin").size() == 25u + 5u + 25170u * 8u);
    std::remove("ds_sz.bin");
}

TEST_CASE("parse errors name the byte offset") {
    auto ds = tiny_iq_dataset();
    write_dataset("ds_bad.bin", ds);

    SUBCASE("corrupted magic reports offset 0") {
        auto buf = slurp("ds_bad.bin");
        buf[0] = 'X';
        std::ofstream("ds_bad.bin", std::ios::binary) << buf;
        try {
            (void)read_dataset("ds_bad.bin");
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            CHECK(e.byte_offset == 0);
        }
    }

    SUBCASE("truncated file rejected") {
        auto buf = slurp("ds_bad.bin");
        buf.resize(buf.size() - 7);
        std::ofstream("ds_bad.bin", std::ios::binary | std::ios::trunc) << buf;
        CHECK_THROWS_AS((void)read_dataset("ds_bad.bin"), ParseError);
    }

    SUBCASE("record_count disagreeing with byte length rejected") {
        auto buf = slurp("ds_bad.bin");
        buf[20] = 9;   // record_count field low byte
        std::ofstream("ds_bad.bin", std::ios::binary | std::ios::trunc) << buf;
        CHECK_THROWS_AS((void)read_dataset("ds_bad.bin"), ParseError);
    }

    std::remove("ds_bad.bin");
}

TEST_CASE("scenario builder") {
    auto pop = sim::default_population(4, 99);
    ScenarioSpec spec;
    spec.kind = ScenarioKind::fixed_location;

    SUBCASE("label histogram is devices x locations x frames") {
        auto ds = build_scenario(pop, spec, 3, 7);
        CHECK(ds.records.size() == 4u * 3u * 3u);
        std::map<std::pair<int, int>, int> hist;
        for (const auto& r : ds.records)
            hist[{r.device_id, r.domain.location}]++;
        CHECK(hist.size() == 12);
        for (const auto& [k, v] : hist) CHECK(v == 3);
    }

    SUBCASE("same seed twice gives byte-identical datasets") {
        auto a = build_scenario(pop, spec, 2, 7);
        auto b = build_scenario(pop, spec, 2, 7);
        write_dataset("sc_a.bin", a);
        write_dataset("sc_b.bin", b);
        CHECK(slurp("sc_a.bin") == slurp("sc_b.bin"));
        std::remove("sc_a.bin");
        std::remove("sc_b.bin");
    }

    SUBCASE("different seeds differ") {
        auto a = build_scenario(pop, spec, 1, 7);
        auto b = build_scenario(pop, spec, 1, 8);
        CHECK(a.records[0].payload != b.records[0].payload);
    }

    SUBCASE("random-location uses per-frame placements in range") {
        ScenarioSpec rspec;
        rspec.kind = ScenarioKind::random_location;
        auto ds = build_scenario(pop, rspec, 5, 7);
        CHECK(ds.records.size() == 20);
        for (const auto& r : ds.records) CHECK(r.domain.location == 3);
        // per-frame scale within [0.3, 1.0]: peak |sample| differs across
        // frames of one device and stays below the unscaled peak
        double peak0 = 0.0, peak1 = 0.0;
        for (std::size_t k = 0; k < ds.records[0].payload.size(); ++k) {
            peak0 = std::max(peak0, std::abs(static_cast<double>(ds.records[0].payload[k])));
            peak1 = std::max(peak1, std::abs(static_cast<double>(ds.records[1].payload[k])));
        }
        CHECK(peak0 != peak1);
    }

    SUBCASE("unknown scenario name rejected") {
        CHECK_THROWS_AS((void)scenario_from_name("warehouse"), std::invalid_argument);
        CHECK(scenario_from_name("cross-day") == ScenarioKind::cross_day);
    }
}

TEST_CASE("iq record converts back to a frame") {
    auto pop = sim::default_population(1, 5);
    ScenarioSpec spec;
    spec.kind = ScenarioKind::fixed_location;
    auto ds = build_scenario(pop, spec, 1, 3);
    auto f = record_to_frame(ds.header, ds.records[0]);
    CHECK(f.samples.size() == sim::kFrameLen);
    CHECK(f.device_id == 0);
    CHECK(f.sample_rate_hz == 20e6);
}

TEST_CASE("eps dataset conversion keeps labels and shapes") {
    auto pop = sim::default_population(2, 5);
    ScenarioSpec spec;
    spec.kind = ScenarioKind::fixed_location;
    spec.location_scales = {1.0};
    auto iq = build_scenario(pop, spec, 2, 3);
    auto cfg = eps::PipelineConfig::defaults();
    auto ds = eps_dataset(iq, cfg);
    CHECK(ds.header.payload_kind == PayloadKind::eps);
    CHECK(ds.header.frame_len == 4096);
    CHECK(ds.records.size() == iq.records.size());
    for (std::size_t i = 0; i < ds.records.size(); ++i) {
        CHECK(ds.records[i].device_id == iq.records[i].device_id);
        auto t = record_to_eps(ds.header, ds.records[i]);
        CHECK(t.eps_i.size() == 4096);
        CHECK(t.resolution_hz == doctest::Approx((20e6 / 15) / 4096));
    }
}
