#include "doctest.h"
#include "epsfp/waveform.hpp"
#include "epsfp/dsp.hpp"

#include <cmath>
#include <complex>
#include <vector>

using namespace epsfp;
using namespace epsfp::sim;

namespace {

const dsp::FirFilter& hilb() {
    static dsp::FirFilter h = dsp::default_hilbert();
    return h;
}

IQFrame cfo_frame(double cfo_hz, double fs, std::size_t len, double phase,
                  unsigned spc = 2, std::uint64_t seed = 1) {
    auto s = generate_dsss_baseband(random_payload(1200, seed), spc, len, seed, false, phase);
    s.sample_rate_hz = fs;
    DeviceProfile d;
    d.cfo_hz = cfo_hz;
    return apply_impairments(s, d, seed);
}

} // namespace

TEST_CASE("barker-11 autocorrelation has 11:1 peak to sidelobe") {
    // direct autocorrelation oracle of the published sequence
    for (int lag = 1; lag < 11; ++lag) {
        int acc = 0;
        for (int i = 0; i < 11; ++i)
            acc += kBarker11[i] * kBarker11[(i + lag) % 11];
        CHECK(std::abs(acc) <= 1);   // periodic sidelobes of Barker-11 are -1
    }
    int peak = 0;
    for (int i = 0; i < 11; ++i) peak += kBarker11[i] * kBarker11[i];
    CHECK(peak == 11);
}

TEST_CASE("dsss baseband basics") {
    SUBCASE("all-zeros payload keeps differential phase, unit modulus chips") {
        auto f = generate_dsss_baseband(std::vector<int>(100, 0), 2, 4400, 7, false, 0.55);
        for (const auto& v : f.samples)
            CHECK(std::abs(v) == doctest::Approx(1.0).epsilon(1e-9));
        // constant differential phase: every sample is +-(the same rotation)
        const std::complex<double> ref = f.samples[0];
        for (const auto& v : f.samples) {
            const double along = std::abs((v / ref).imag());
            CHECK(along <= 1e-9);
        }
    }

    SUBCASE("exact frame length and unit mean power") {
        auto f = generate_dsss_baseband(random_payload(1200, 3), 2, kFrameLen, 3);
        CHECK(f.samples.size() == 25170);
        double p = 0.0;
        for (const auto& v : f.samples) p += std::norm(v);
        CHECK(p / 25170.0 == doctest::Approx(1.0).epsilon(1e-6));
    }

    SUBCASE("smoothed chips also normalize to unit power") {
        auto f = generate_dsss_baseband(random_payload(600, 4), 2, 10000, 4, true);
        double p = 0.0;
        for (const auto& v : f.samples) p += std::norm(v);
        CHECK(p / 10000.0 == doctest::Approx(1.0).epsilon(1e-6));
    }

    SUBCASE("empty payload rejected") {
        CHECK_THROWS_AS((void)generate_dsss_baseband({}, 2, 1000, 0), std::invalid_argument);
    }

    SUBCASE("deterministic given seed") {
        auto a = generate_dsss_baseband(random_payload(100, 9), 2, 3000, 42);
        auto b = generate_dsss_baseband(random_payload(100, 9), 2, 3000, 42);
        REQUIRE(a.samples.size() == b.samples.size());
        for (std::size_t i = 0; i < a.samples.size(); ++i)
            CHECK(a.samples[i] == b.samples[i]);
    }
}

TEST_CASE("impairments") {
    auto s = generate_dsss_baseband(random_payload(400, 5), 2, 9000, 5, false, 1.2);
    s.sample_rate_hz = 20e6;

    SUBCASE("identity device is bit-exact") {
        DeviceProfile d;
        auto r = apply_impairments(s, d, 99);
        for (std::size_t i = 0; i < s.samples.size(); ++i)
            CHECK(r.samples[i] == s.samples[i]);
    }

    SUBCASE("pure CFO preserves modulus") {
        DeviceProfile d;
        d.cfo_hz = 12500.0;
        auto r = apply_impairments(s, d, 0);
        for (std::size_t i = 0; i < s.samples.size(); ++i)
            CHECK(std::abs(std::abs(r.samples[i]) - std::abs(s.samples[i])) <= 1e-12);
    }

    SUBCASE("cfo >= fs/4 rejected") {
        DeviceProfile d;
        d.cfo_hz = 5.1e6;
        CHECK_THROWS_AS((void)apply_impairments(s, d, 0), std::invalid_argument);
    }

    SUBCASE("deterministic given seed, distinct across seeds") {
        DeviceProfile d;
        d.cfo_hz = 4000.0;
        d.phase_noise_std_rad = 1e-3;
        auto a = apply_impairments(s, d, 7), b = apply_impairments(s, d, 7);
        auto c = apply_impairments(s, d, 8);
        bool same = true, differs = false;
        for (std::size_t i = 0; i < s.samples.size(); ++i) {
            same = same && a.samples[i] == b.samples[i];
            differs = differs || a.samples[i] != c.samples[i];
        }
        CHECK(same);
        CHECK(differs);
    }

    SUBCASE("warm-up ramp shifts the beat but stays bounded") {
        DeviceProfile d;
        d.cfo_hz = 10000.0;
        d.stabilized = false;
        auto r = apply_impairments(s, d, 0);
        for (std::size_t i = 0; i < s.samples.size(); ++i)
            CHECK(std::abs(std::abs(r.samples[i]) - std::abs(s.samples[i])) <= 1e-12);
    }
}

TEST_CASE("channel") {
    auto s = cfo_frame(5000.0, 20e6, 25170, 0.8);

    SUBCASE("noiseless identity") {
        ChannelProfile c;
        auto r = apply_channel(s, c);
        for (std::size_t i = 0; i < s.samples.size(); ++i)
            CHECK(r.samples[i] == s.samples[i]);
    }

    SUBCASE("scale exactly halves samples") {
        ChannelProfile c;
        c.amplitude_scale = 0.5;
        auto r = apply_channel(s, c);
        for (std::size_t i = 0; i < s.samples.size(); ++i)
            CHECK(r.samples[i] == s.samples[i] * 0.5);
    }

    SUBCASE("delay zero-prefixes and preserves length") {
        ChannelProfile c;
        c.delay_samples = 100;
        auto r = apply_channel(s, c);
        CHECK(r.samples.size() == s.samples.size());
        for (int i = 0; i < 100; ++i) CHECK(r.samples[i] == std::complex<double>(0.0, 0.0));
        for (std::size_t i = 100; i < r.samples.size(); ++i)
            CHECK(r.samples[i] == s.samples[i - 100]);
    }

    SUBCASE("empirical snr within half a dB of requested") {
        ChannelProfile c;
        c.snr_db = 20.0;
        c.seed = 77;
        auto r = apply_channel(s, c);
        // sample-variance oracle: noise = output - clean signal
        double ps = 0.0, pn = 0.0;
        for (std::size_t i = 0; i < s.samples.size(); ++i) {
            ps += std::norm(s.samples[i]);
            pn += std::norm(r.samples[i] - s.samples[i]);
        }
        const double snr = 10.0 * std::log10(ps / pn);
        CHECK(snr == doctest::Approx(20.0).epsilon(0.025));
    }
}

TEST_CASE("hump counting follows 2|cfo|T") {
    const double fs = 20e6;
    const double T = 25170.0 / fs;

    SUBCASE("zero cfo is flat") {
        auto r = cfo_frame(0.0, fs, 25170, 0.8);
        dsp::RealSequence x{i_rail(r), fs};
        CHECK(count_envelope_humps(x, hilb()) == 0);
    }

    SUBCASE("hump-count law over the cfo sweep") {
        for (double cfo : {2e3, 5e3, 10e3, 20e3}) {
            auto r = cfo_frame(cfo, fs, 25170, 0.8);
            dsp::RealSequence x{i_rail(r), fs};
            const int expect = static_cast<int>(std::lround(2.0 * cfo * T));
            const int got = static_cast<int>(count_envelope_humps(x, hilb()));
            CHECK(std::abs(got - expect) <= 1);
        }
    }

    SUBCASE("5 kHz at 20 MS/s gives 13 +- 1") {
        auto r = cfo_frame(5000.0, fs, 25170, 0.3);
        dsp::RealSequence x{i_rail(r), fs};
        const int got = static_cast<int>(count_envelope_humps(x, hilb()));
        CHECK(std::abs(got - 13) <= 1);
    }

    SUBCASE("awgn at 15 dB moves the count by at most one") {
        for (double cfo : {5e3, 20e3}) {
            auto clean = cfo_frame(cfo, fs, 25170, 1.1);
            dsp::RealSequence xc{i_rail(clean), fs};
            const int base = static_cast<int>(count_envelope_humps(xc, hilb()));
            ChannelProfile c;
            c.snr_db = 15.0;
            c.seed = 5;
            auto noisy = apply_channel(clean, c);
            dsp::RealSequence xn{i_rail(noisy), fs};
            const int got = static_cast<int>(count_envelope_humps(xn, hilb()));
            CHECK(std::abs(got - base) <= 1);
        }
    }

    SUBCASE("non-CFO impairments alone produce no humps") {
        auto s = generate_dsss_baseband(random_payload(1200, 2), 2, 25170, 2, false, 0.7);
        s.sample_rate_hz = fs;

        DeviceProfile imb;
        imb.iq_gain_imbalance_db = 0.5;
        imb.iq_phase_imbalance_rad = 2.0 * M_PI / 180.0;
        DeviceProfile dc;
        dc.dc_offset = {0.01, 0.005};
        DeviceProfile pn;
        pn.phase_noise_std_rad = 1e-4;

        for (const auto& d : {imb, dc, pn}) {
            auto r = apply_impairments(s, d, 55);
            dsp::RealSequence x{i_rail(r), fs};
            CHECK(count_envelope_humps(x, hilb()) == 0);
        }
    }

    SUBCASE("figure-3 style long frames at 2 MS/s") {
        const double fs3 = 2e6;
        const std::size_t n3 = 20000;   // 10 ms
        const int expect[4] = {0, 1, 2, 4};
        const double cfos[4] = {0.0, 50.0, 100.0, 200.0};
        for (int i = 0; i < 4; ++i) {
            auto s = generate_dsss_baseband(random_payload(2000, 3), 20, n3, 3, false, -M_PI / 2.0);
            s.sample_rate_hz = fs3;
            DeviceProfile d;
            d.cfo_hz = cfos[i];
            auto r = apply_impairments(s, d, 9);
            ChannelProfile c;
            c.snr_db = 25.0;
            c.seed = 31;
            r = apply_channel(r, c);
            dsp::RealSequence x{i_rail(r), fs3};
            const int got = static_cast<int>(count_envelope_humps(x, hilb(), 250.0));
            if (i == 0)
                CHECK(got == 0);
            else
                CHECK(std::abs(got - expect[i]) <= 1);
        }
    }
}

TEST_CASE("default population layout") {
    auto pop = default_population(15, 1234);
    REQUIRE(pop.size() == 15);
    for (std::size_t i = 0; i < pop.size(); ++i) {
        CHECK(std::abs(pop[i].cfo_hz) >= 2000.0);
        CHECK(std::abs(pop[i].cfo_hz) <= 25000.0);
        CHECK(std::abs(pop[i].iq_gain_imbalance_db) <= 0.5);
        CHECK(std::abs(pop[i].iq_phase_imbalance_rad) <= 2.1 * M_PI / 180.0);
        CHECK(std::abs(pop[i].dc_offset) <= 0.01);
        for (std::size_t j = i + 1; j < pop.size(); ++j) {
            CHECK(std::abs(pop[i].cfo_hz - pop[j].cfo_hz) >= 1500.0);
            CHECK(std::abs(std::abs(pop[i].cfo_hz) - std::abs(pop[j].cfo_hz)) >= 1500.0);
        }
    }
    auto rogues = rogue_population(1234);
    for (const auto& r : rogues)
        for (const auto& d : pop)
            if (r.cfo_hz != 0.0)
                CHECK(std::abs(r.cfo_hz - d.cfo_hz) >= 3000.0);
}
