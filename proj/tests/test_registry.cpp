#include "doctest.h"
#include "epsfp/registry.hpp"
#include "epsfp/rng.hpp"

#include <cstdio>
#include <fstream>

using namespace epsfp;
using namespace epsfp::zt;

namespace {

// compact synthetic EPS: a dominant line per device plus a noise floor
eps::EpsTensor fake_eps(int line_bin, std::uint64_t seed, std::uint16_t device_id,
                        double noise = 0.02) {
    eps::EpsTensor t;
    t.source_device = device_id;
    t.resolution_hz = 100.0;
    Rng rng(seed);
    t.eps_i.assign(128, 0.0);
    t.eps_q.assign(128, 0.0);
    for (auto* row : {&t.eps_i, &t.eps_q}) {
        for (auto& v : *row) v = noise * rng.uniform(0.0, 1.0);
        (*row)[line_bin] = 1.0;
        (*row)[line_bin / 2] = 0.3;
        double s = 0.0;
        for (double v : *row) s += v;
        for (auto& v : *row) v /= s;
    }
    return t;
}

std::vector<eps::EpsTensor> fake_batch(int line_bin, std::uint16_t id, int n,
                                       std::uint64_t seed0) {
    std::vector<eps::EpsTensor> out;
    for (int i = 0; i < n; ++i) out.push_back(fake_eps(line_bin, seed0 + i, id));
    return out;
}

} // namespace

TEST_CASE("enrollment") {
    Registry reg;
    reg.min_enroll_frames = 5;

    SUBCASE("identical frames give zero dispersion") {
        auto t = fake_eps(40, 1, 3);
        std::vector<eps::EpsTensor> same(6, t);
        const auto& tpl = reg.enroll_from_eps(3, same);
        CHECK(tpl.dispersion <= 1e-12);
        CHECK(tpl.n_enroll_frames == 6);
        double norm = 0.0;
        for (double v : tpl.centroid_eps) norm += v * v;
        CHECK(norm == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(tpl.tau == doctest::Approx(0.999));   // clipped upper bound
    }

    SUBCASE("too few frames rejected") {
        CHECK_THROWS_AS((void)reg.enroll_from_eps(1, fake_batch(40, 1, 4, 10)),
                        std::invalid_argument);
    }

    SUBCASE("inconsistent labels rejected") {
        auto batch = fake_batch(40, 1, 5, 10);
        batch[2].source_device = 9;
        CHECK_THROWS_AS((void)reg.enroll_from_eps(1, batch), std::invalid_argument);
    }

    SUBCASE("re-enrollment replaces, registry size unchanged") {
        reg.enroll_from_eps(7, fake_batch(40, 7, 6, 20));
        CHECK(reg.size() == 1);
        const double tau0 = reg.find(7)->tau;
        reg.enroll_from_eps(7, fake_batch(44, 7, 8, 50));
        CHECK(reg.size() == 1);
        CHECK(reg.find(7)->n_enroll_frames == 8);
        (void)tau0;
    }
}

TEST_CASE("verification and rogue screening") {
    Registry reg;
    reg.min_enroll_frames = 5;
    reg.enroll_from_eps(0, fake_batch(20, 0, 8, 100));
    reg.enroll_from_eps(1, fake_batch(60, 1, 8, 200));
    reg.enroll_from_eps(2, fake_batch(100, 2, 8, 300));

    SUBCASE("genuine frame accepted") {
        auto d = reg.verify(fake_eps(20, 999, 0), 0);
        CHECK(d.verdict == Verdict::accepted);
        CHECK(*d.matched_id == 0);
        CHECK(d.score >= d.threshold_used);
    }

    SUBCASE("impersonation rejected with the true matched id") {
        auto d = reg.verify(fake_eps(60, 999, 1), 0);   // device 1 claims id 0
        CHECK(d.verdict == Verdict::rejected);
        CHECK(*d.matched_id == 1);
    }

    SUBCASE("unknown claimed id is a rejection, not an exception") {
        auto d = reg.verify(fake_eps(20, 999, 0), 42);
        CHECK(d.verdict == Verdict::rejected);
        CHECK(!d.matched_id.has_value());
    }

    SUBCASE("raising tau never converts rejected to accepted") {
        auto t = fake_eps(20, 999, 0);
        bool was_accepted = true;
        for (double tau = 0.5; tau <= 1.0001; tau += 0.01) {
            auto d = reg.verify(t, 0, tau);
            const bool acc = d.verdict == Verdict::accepted;
            CHECK((was_accepted || !acc));   // once rejected, stays rejected
            was_accepted = acc;
        }
    }

    SUBCASE("verdict is a pure threshold comparison") {
        auto t = fake_eps(20, 999, 0);
        auto d = reg.verify(t, 0, 0.97);
        CHECK((d.verdict == Verdict::accepted) == (d.score >= 0.97 && *d.matched_id == 0));
    }

    SUBCASE("rogue screening") {
        CHECK(reg.screen_rogue_is_legit(fake_eps(20, 5, 0), 0.95));
        CHECK_FALSE(reg.screen_rogue_is_legit(fake_eps(90, 5, 9), 0.95));
        // degenerate threshold accepts everything
        CHECK(reg.screen_rogue_is_legit(fake_eps(90, 5, 9), -1.0));
    }

    SUBCASE("empty registry errors") {
        Registry empty;
        CHECK_THROWS_AS((void)empty.screen_rogue_is_legit(fake_eps(20, 5, 0), 0.9),
                        std::invalid_argument);
    }
}

TEST_CASE("continuous authentication") {
    Registry reg;
    reg.min_enroll_frames = 5;
    reg.enroll_from_eps(0, fake_batch(20, 0, 8, 100));
    reg.enroll_from_eps(1, fake_batch(60, 1, 8, 200));

    SUBCASE("all-genuine stream raises no alert") {
        auto stream = fake_batch(20, 0, 30, 1000);
        auto decisions = reg.continuous_auth(stream, 0, 8);
        REQUIRE(decisions.size() == 30);
        for (const auto& d : decisions) CHECK(d.verdict == Verdict::accepted);
    }

    SUBCASE("device swap is caught within one window") {
        auto stream = fake_batch(20, 0, 20, 1000);
        auto tail = fake_batch(60, 0, 20, 2000);   // impostor frames mid-stream
        stream.insert(stream.end(), tail.begin(), tail.end());
        const std::size_t window = 6;
        auto decisions = reg.continuous_auth(stream, 0, window);
        std::size_t first_alert = decisions.size();
        for (std::size_t i = 0; i < decisions.size(); ++i)
            if (decisions[i].verdict == Verdict::alert) {
                first_alert = i;
                break;
            }
        CHECK(first_alert >= 20);
        CHECK(first_alert < 20 + window);
    }

    SUBCASE("window of one equals per-frame thresholding") {
        auto stream = fake_batch(20, 0, 5, 1000);
        stream.push_back(fake_eps(60, 77, 0));
        auto w1 = reg.continuous_auth(stream, 0, 1, 0.95);
        for (std::size_t i = 0; i < stream.size(); ++i) {
            const double s = cosine(eps::flatten(stream[i]), reg.find(0)->centroid_eps);
            CHECK((w1[i].verdict == Verdict::alert) == (s < 0.95));
        }
    }

    SUBCASE("window zero rejected") {
        CHECK_THROWS_AS((void)reg.continuous_auth({}, 0, 0), std::invalid_argument);
    }
}

TEST_CASE("threshold sweep emits a monotone ROC") {
    Registry reg;
    reg.min_enroll_frames = 5;
    reg.enroll_from_eps(0, fake_batch(20, 0, 8, 100));
    auto genuine = fake_batch(20, 0, 20, 500);
    auto rogue = fake_batch(90, 9, 20, 600);
    auto roc = threshold_sweep(reg, genuine, rogue);
    REQUIRE(roc.size() == 101);
    CHECK(roc.front().tau == doctest::Approx(0.5));
    CHECK(roc.back().tau == doctest::Approx(1.0));
    for (std::size_t i = 1; i < roc.size(); ++i) {
        CHECK(roc[i].genuine_accept <= roc[i - 1].genuine_accept + 1e-12);
        CHECK(roc[i].rogue_accept <= roc[i - 1].rogue_accept + 1e-12);
    }
    write_roc(roc, "roc_test.tsv");
    std::ifstream f("roc_test.tsv");
    std::string first;
    std::getline(f, first);
    CHECK(first == "tau\tgenuine_accept\trogue_accept");
    std::remove("roc_test.tsv");
}

TEST_CASE("registry persistence round-trips atomically") {
    Registry reg;
    reg.min_enroll_frames = 5;
    reg.enroll_from_eps(3, fake_batch(20, 3, 8, 100));
    reg.enroll_from_eps(5, fake_batch(60, 5, 8, 200));
    reg.save("registry_test.bin");
    CHECK(!std::ifstream("registry_test.bin.tmp").good());   // temp renamed away

    auto back = Registry::load("registry_test.bin");
    REQUIRE(back.size() == 2);
    CHECK(back.find(3)->centroid_eps == reg.find(3)->centroid_eps);
    CHECK(back.find(5)->tau == reg.find(5)->tau);
    CHECK(back.find(5)->dispersion == reg.find(5)->dispersion);
    back.save("registry_test2.bin");
    auto slurp = [](const char* p) {
        std::ifstream f(p, std::ios::binary);
        return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    };
    CHECK(slurp("registry_test.bin") == slurp("registry_test2.bin"));

    // corrupted magic rejected
    auto buf = slurp("registry_test.bin");
    buf[0] = 'X';
    std::ofstream("registry_bad.bin", std::ios::binary) << buf;
    CHECK_THROWS_AS((void)Registry::load("registry_bad.bin"), std::runtime_error);

    std::remove("registry_test.bin");
    std::remove("registry_test2.bin");
    std::remove("registry_bad.bin");
}

TEST_CASE("audit log is append-only and grows per event") {
    std::remove("audit_test.jsonl");
    Registry reg;
    reg.min_enroll_frames = 5;
    reg.attach_audit_log("audit_test.jsonl");
    reg.enroll_from_eps(0, fake_batch(20, 0, 8, 100));
    (void)reg.verify(fake_eps(20, 9, 0), 0);
    (void)reg.verify(fake_eps(90, 9, 0), 0);
    std::ifstream f("audit_test.jsonl");
    std::string line;
    int lines = 0;
    bool has_enroll = false, has_reject = false;
    while (std::getline(f, line)) {
        ++lines;
        has_enroll = has_enroll || line.find("\"enroll\"") != std::string::npos;
        has_reject = has_reject || line.find("verify-reject") != std::string::npos;
        CHECK(line.find("input_hash") != std::string::npos);
    }
    CHECK(lines == 3);
    CHECK(has_enroll);
    CHECK(has_reject);
    std::remove("audit_test.jsonl");
}
