#include "epsfp/accept.hpp"
#include "epsfp/registry.hpp"
#include "epsfp/rng.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

namespace epsfp::accept {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::complex<double> freq_response(const std::vector<double>& taps, double f) {
    std::complex<double> acc{0.0, 0.0};
    for (std::size_t n = 0; n < taps.size(); ++n) {
        const double ang = -kPi * f * static_cast<double>(n);
        acc += taps[n] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    return acc;
}

double signed_amplitude(const dsp::FirFilter& h, double f) {
    const double M = (static_cast<double>(h.taps.size()) - 1.0) / 2.0;
    const std::complex<double> rot(std::cos(kPi * f * M), std::sin(kPi * f * M));
    const std::complex<double> z = freq_response(h.taps, f) * rot;
    return h.kind == dsp::FilterKind::hilbert ? -z.imag() : z.real();
}

int count_alternations(const dsp::FirFilter& h) {
    const int npts = 16 * static_cast<int>(h.taps.size()) + 1;
    int count = 0;
    double last_sign = 0.0;
    for (const auto& b : h.design_spec.bands) {
        for (int i = 0; i < npts; ++i) {
            const double f = b.lo + (b.hi - b.lo) * i / (npts - 1);
            const double err = b.weight * (signed_amplitude(h, f) - b.desired);
            if (std::abs(err) >= 0.95 * h.achieved_ripple) {
                const double s = err >= 0 ? 1.0 : -1.0;
                if (s != last_sign) {
                    ++count;
                    last_sign = s;
                }
            }
        }
    }
    return count;
}

struct Ctx {
    const cfg::AppConfig& config;
    std::string out_dir;
    eps::PipelineConfig pipe = eps::PipelineConfig::defaults();
    std::vector<sim::DeviceProfile> population;
    std::vector<sim::DeviceProfile> rogues;

    // shared datasets (EPS features), built once
    io::Dataset loc_a, loc_c, loc_rand, day1, day2;   // eps kind
    io::Dataset loc_a_iq;                              // iq kind for the IQ-CNN

    explicit Ctx(const cfg::AppConfig& c, std::string out)
        : config(c), out_dir(std::move(out)) {
        population = c.population();
        rogues = sim::rogue_population(c.population_seed);
    }

    io::Dataset synth_domain(const std::vector<sim::DeviceProfile>& devs,
                             const sim::DomainLabel& label, double nominal_scale,
                             bool random_placement, std::uint32_t n_frames,
                             std::uint64_t seed) const {
        io::Dataset ds;
        ds.header.sample_rate_hz = config.scenario.sample_rate_hz;
        ds.header.frame_len = config.scenario.frame_len;
        ds.header.payload_kind = io::PayloadKind::iq;
        for (const auto& dev : devs) {
            auto frames = io::synth_frames(dev, config.scenario, label, nominal_scale,
                                           random_placement, n_frames, seed);
            for (auto& f : frames) {
                f.device_id = dev.device_id;
                ds.records.push_back(io::frame_to_record(f));
            }
        }
        ds.header.record_count = static_cast<std::uint32_t>(ds.records.size());
        return ds;
    }
};

std::string pct(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f%%", 100.0 * v);
    return buf;
}

// ---- criteria ----

CriterionResult a1_remez(Ctx& ctx) {
    CriterionResult r{"A1", "Remez equiripple designs meet their specs", false, ""};
    const auto& hb = ctx.pipe.hilbert;
    const auto& lp = ctx.pipe.smoothing_lowpass;

    const int alt_h = count_alternations(hb);
    const int alt_l = count_alternations(lp);

    double h_dev = 0.0;
    for (int i = 0; i <= 1616; ++i) {
        const double f = 0.03 + (0.97 - 0.03) * i / 1616.0;
        h_dev = std::max(h_dev, std::abs(std::abs(freq_response(hb.taps, f)) - 1.0));
    }
    double lp_stop = 0.0;
    for (int i = 0; i <= 496; ++i) {
        const double f = 0.3 + 0.7 * i / 496.0;
        lp_stop = std::max(lp_stop, std::abs(freq_response(lp.taps, f)));
    }
    const double atten_db = -20.0 * std::log10(lp_stop);

    // mid-band tone through the Hilbert pair: constant modulus within 1%
    const int n = 8192;
    dsp::RealSequence x{std::vector<double>(n), 2.0};
    for (int i = 0; i < n; ++i) x.samples[i] = std::cos(kPi * 0.5 * i);
    auto a = dsp::analytic_signal(x, hb);
    double mod_err = 0.0;
    for (const auto& v : a) mod_err = std::max(mod_err, std::abs(std::abs(v) - 1.0));

    r.pass = alt_h >= 51 && alt_l >= 17 && h_dev <= hb.achieved_ripple * 1.001 &&
             atten_db >= 40.0 && mod_err <= 0.01;
    std::ostringstream d;
    d << "hilbert delta=" << hb.achieved_ripple << " alternations=" << alt_h
      << "; lowpass atten=" << atten_db << " dB alternations=" << alt_l
      << "; tone modulus err=" << mod_err;
    r.detail = d.str();
    return r;
}

CriterionResult a2_spectrum(Ctx&) {
    CriterionResult r{"A2", "Spectrum estimator: Parseval, symmetry, normalization", false, ""};
    const std::size_t m = 1571, n = 4096;
    dsp::EnvelopeSignal e{std::vector<double>(m), 2.0};
    Rng rng(4242);
    for (std::size_t i = 0; i < m; ++i)
        e.samples[i] = 1.0 + 0.4 * std::cos(0.071 * i) + 0.2 * std::sin(0.9 * i) +
                       0.05 * rng.uniform(-1.0, 1.0);
    auto ps = dsp::power_spectrum(e, n);

    const double sum = std::accumulate(ps.bins.begin(), ps.bins.end(), 0.0);
    const double norm_err = std::abs(sum - 1.0);

    double sym_err = 0.0;
    for (std::size_t k = 1; k < n / 2; ++k) {
        const double a = ps.bins[n / 2 + k], b = ps.bins[n / 2 - k];
        sym_err = std::max(sym_err, std::abs(a - b) / std::max(1e-300, std::max(a, b)));
    }

    // Parseval vs direct time-domain energy of the windowed centered signal
    double mean = std::accumulate(e.samples.begin(), e.samples.end(), 0.0) / m;
    auto w = dsp::hann_window(m);
    double energy = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const double t = (e.samples[i] - mean) * w[i];
        energy += t * t;
    }
    std::vector<std::complex<double>> buf(n, {0.0, 0.0});
    for (std::size_t i = 0; i < m; ++i) buf[i] = {(e.samples[i] - mean) * w[i], 0.0};
    dsp::fft_radix2(buf);
    double spec_energy = 0.0;
    for (const auto& v : buf) spec_energy += std::norm(v);
    spec_energy /= static_cast<double>(n);
    const double parseval_rel = std::abs(spec_energy - energy) / energy;

    r.pass = norm_err <= 1e-12 && sym_err <= 1e-9 && parseval_rel <= 1e-9;
    std::ostringstream d;
    d << "norm err=" << norm_err << " sym err=" << sym_err << " parseval rel=" << parseval_rel;
    r.detail = d.str();
    return r;
}

sim::IQFrame one_device_frame(Ctx& ctx, double cfo, std::uint64_t seed, double snr, double scale,
                              std::uint32_t delay) {
    Rng rng(seed);
    auto s = sim::generate_dsss_baseband(
        sim::random_payload(1200, rng.next_u64()), ctx.config.scenario.samples_per_chip,
        ctx.config.scenario.frame_len, rng.next_u64(), ctx.config.scenario.smooth_chips);
    s.sample_rate_hz = ctx.config.scenario.sample_rate_hz;
    sim::DeviceProfile d;
    d.cfo_hz = cfo;
    d.phase_noise_std_rad = 1e-4;
    auto r = sim::apply_impairments(s, d, rng.next_u64());
    sim::ChannelProfile ch;
    ch.snr_db = snr;
    ch.amplitude_scale = scale;
    ch.delay_samples = delay;
    ch.seed = rng.next_u64();
    return sim::apply_channel(r, ch);
}

CriterionResult a3_shape(Ctx& ctx) {
    CriterionResult r{"A3", "25170-sample frame maps to a 2x4096 tensor", false, ""};
    auto f = one_device_frame(ctx, 8000.0, 33, 20.0, 1.0, 0);
    auto t = eps::eps_of_frame(f, ctx.pipe);
    const double want_res = (ctx.config.scenario.sample_rate_hz / 15.0) / 4096.0;
    r.pass = f.samples.size() == 25170 && t.eps_i.size() == 4096 && t.eps_q.size() == 4096 &&
             std::abs(t.resolution_hz - want_res) < 1e-9;
    std::ostringstream d;
    d << "rows 2x" << t.eps_i.size() << " resolution=" << t.resolution_hz << " Hz";
    r.detail = d.str();
    return r;
}

CriterionResult a4_scale_invariance(Ctx& ctx) {
    CriterionResult r{"A4", "EPS invariant to amplitude scaling", false, ""};
    auto f = one_device_frame(ctx, 12500.0, 44, 20.0, 1.0, 0);
    auto base = eps::eps_of_frame(f, ctx.pipe);
    double worst = 0.0;
    for (double alpha : {0.1, 0.35, 3.0}) {
        auto g = f;
        for (auto& v : g.samples) v *= alpha;
        auto t = eps::eps_of_frame(g, ctx.pipe);
        for (std::size_t k = 0; k < t.eps_i.size(); ++k) {
            worst = std::max(worst, std::abs(t.eps_i[k] - base.eps_i[k]));
            worst = std::max(worst, std::abs(t.eps_q[k] - base.eps_q[k]));
        }
    }
    r.pass = worst <= 1e-9;
    r.detail = "max elementwise deviation " + std::to_string(worst);
    return r;
}

CriterionResult a5_figure3(Ctx& ctx) {
    CriterionResult r{"A5", "Hump counts for 0/50/100/200 Hz at 10 ms; non-CFO flat", false, ""};
    const double fs3 = 2e6;
    const std::size_t n3 = 20000;
    const int expect[4] = {0, 1, 2, 4};
    const double cfos[4] = {0.0, 50.0, 100.0, 200.0};
    std::ostringstream d;
    bool ok = true;
    for (int i = 0; i < 4; ++i) {
        auto s = sim::generate_dsss_baseband(sim::random_payload(2000, 3), 20, n3, 3, false,
                                             -kPi / 2.0);
        s.sample_rate_hz = fs3;
        sim::DeviceProfile dev;
        dev.cfo_hz = cfos[i];
        auto f = sim::apply_impairments(s, dev, 9);
        sim::ChannelProfile ch;
        ch.snr_db = 25.0;
        ch.seed = 31;
        f = sim::apply_channel(f, ch);
        dsp::RealSequence x{sim::i_rail(f), fs3};
        const int got = static_cast<int>(sim::count_envelope_humps(x, ctx.pipe.hilbert, 250.0));
        const int tol = i == 0 ? 0 : 1;
        ok = ok && std::abs(got - expect[i]) <= tol;
        d << cfos[i] << "Hz->" << got << " ";
    }
    // non-CFO impairments alone: no humps
    auto s = sim::generate_dsss_baseband(sim::random_payload(1200, 2), 2, 25170, 2, false, 0.7);
    s.sample_rate_hz = ctx.config.scenario.sample_rate_hz;
    sim::DeviceProfile imb;
    imb.iq_gain_imbalance_db = 0.5;
    imb.iq_phase_imbalance_rad = 2.0 * kPi / 180.0;
    sim::DeviceProfile dc;
    dc.dc_offset = {0.01, 0.005};
    sim::DeviceProfile pn;
    pn.phase_noise_std_rad = 1e-4;
    for (const auto& dev : {imb, dc, pn}) {
        auto f = sim::apply_impairments(s, dev, 55);
        dsp::RealSequence x{sim::i_rail(f), s.sample_rate_hz};
        const unsigned got = sim::count_envelope_humps(x, ctx.pipe.hilbert);
        ok = ok && got == 0;
        d << "nonCFO->" << got << " ";
    }
    r.pass = ok;
    r.detail = d.str();
    return r;
}

CriterionResult a6_peak_law(Ctx& ctx) {
    CriterionResult r{"A6", "Dominant EPS peak at 2|cfo| on >= 95/100 frames per device", false, ""};
    const double res = (ctx.config.scenario.sample_rate_hz / 15.0) / 4096.0;
    std::ostringstream d;
    bool ok = true;
    for (const auto& dev : ctx.population) {
        // pinned 20 dB SNR for this criterion
        std::vector<sim::IQFrame> frames(100);
        for (std::uint32_t t = 0; t < 100; ++t)
            frames[t] = one_device_frame(ctx, dev.cfo_hz, mix_seed(0xa6f00d + dev.device_id, t),
                                         20.0, 1.0, t % 200);
        auto tensors = eps::eps_of_frames(frames, ctx.pipe);
        int hits = 0;
        for (const auto& tens : tensors) {
            std::size_t best = 0;
            double best_v = -1.0;
            for (std::size_t k = 0; k < 4096; ++k) {
                const double fr = (static_cast<double>(k) - 2048.0) * res;
                if (std::abs(fr) < res) continue;
                if (tens.eps_i[k] > best_v) {
                    best_v = tens.eps_i[k];
                    best = k;
                }
            }
            const double peak = std::abs((static_cast<double>(best) - 2048.0) * res);
            hits += std::abs(peak - 2.0 * std::abs(dev.cfo_hz)) <= res + 1e-9;
        }
        ok = ok && hits >= 95;
        d << hits << " ";
    }
    r.pass = ok;
    r.detail = "per-device hits/100: " + d.str();
    return r;
}

CriterionResult a7_robustness(Ctx& ctx) {
    CriterionResult r{"A7", "Intra-device cosine >= 0.99, inter-device <= 0.8", false, ""};
    const int per_dev = 12;
    std::vector<std::vector<eps::EpsTensor>> tensors(ctx.population.size());
    for (std::size_t i = 0; i < ctx.population.size(); ++i) {
        Rng rng(mix_seed(0xa7, i));
        std::vector<sim::IQFrame> frames;
        for (int t = 0; t < per_dev; ++t)
            frames.push_back(one_device_frame(
                ctx, ctx.population[i].cfo_hz, rng.next_u64(), rng.uniform(15.0, 30.0),
                rng.uniform(0.3, 1.0), static_cast<std::uint32_t>(rng.below(201))));
        tensors[i] = eps::eps_of_frames(frames, ctx.pipe);
    }
    double intra_min = 1.0, inter_max = -1.0;
    for (std::size_t i = 0; i < tensors.size(); ++i)
        for (int a = 0; a < per_dev; ++a)
            for (int b = a + 1; b < per_dev; ++b)
                intra_min = std::min(intra_min, eps::eps_similarity(tensors[i][a], tensors[i][b]));
    for (std::size_t i = 0; i < tensors.size(); ++i)
        for (std::size_t j = i + 1; j < tensors.size(); ++j) {
            if (std::abs(ctx.population[i].cfo_hz - ctx.population[j].cfo_hz) < 2000.0) continue;
            for (int a = 0; a < per_dev; a += 3)
                for (int b = 0; b < per_dev; b += 3)
                    inter_max =
                        std::max(inter_max, eps::eps_similarity(tensors[i][a], tensors[j][b]));
        }
    r.pass = intra_min >= 0.99 && inter_max <= 0.8;
    std::ostringstream d;
    d << "intra min=" << intra_min << " inter max=" << inter_max;
    r.detail = d.str();
    return r;
}

void build_shared_datasets(Ctx& ctx, std::ostream& log) {
    const auto seed = ctx.config.population_seed;
    const std::uint32_t n = 100;
    log << "  [data] synthesizing domains (15 devices x 100 frames each)...\n";
    auto iq_a = ctx.synth_domain(ctx.population, {0, 0, sim::ChannelKind::wireless}, 1.0, false, n,
                                 seed);
    auto iq_c = ctx.synth_domain(ctx.population, {0, 2, sim::ChannelKind::wireless}, 0.35, false, n,
                                 seed);
    auto iq_r = ctx.synth_domain(ctx.population, {0, 3, sim::ChannelKind::wireless}, 1.0, true, n,
                                 seed);
    auto iq_d1 = ctx.synth_domain(ctx.population, {1, 0, sim::ChannelKind::wireless}, 1.0, false, n,
                                  seed);
    auto iq_d2 = ctx.synth_domain(ctx.population, {2, 0, sim::ChannelKind::wireless}, 1.0, false, n,
                                  seed);
    log << "  [data] extracting EPS tensors...\n";
    ctx.loc_a = io::eps_dataset(iq_a, ctx.pipe);
    ctx.loc_c = io::eps_dataset(iq_c, ctx.pipe);
    ctx.loc_rand = io::eps_dataset(iq_r, ctx.pipe);
    ctx.day1 = io::eps_dataset(iq_d1, ctx.pipe);
    ctx.day2 = io::eps_dataset(iq_d2, ctx.pipe);
    ctx.loc_a_iq = std::move(iq_a);
}

CriterionResult a8_same_domain(Ctx& ctx, std::ostream& log) {
    CriterionResult r{"A8", "Same-domain 5-fold CV: centroid and EPS-CNN >= 99%", false, ""};
    auto data = eval::make_features(ctx.loc_a, eval::ModelKind::nearest_centroid, "locA");
    eval::EvalConfig ecfg = ctx.config.eval;
    ecfg.folds = 5;
    auto cen = eval::evaluate_same_domain(data, eval::ModelKind::nearest_centroid, ecfg);
    log << "  [A8] nearest-centroid 5-fold mean " << pct(cen.mean_accuracy) << "\n";
    log << "  [A8] training EPS-CNN over 5 folds...\n";
    auto net = eval::evaluate_same_domain(data, eval::ModelKind::eps_cnn, ecfg);
    log << "  [A8] EPS-CNN 5-fold mean " << pct(net.mean_accuracy) << "\n";
    if (!ctx.out_dir.empty()) {
        eval::emit_report(cen, ctx.out_dir + "/a8_centroid_locA.tsv");
        eval::emit_report(net, ctx.out_dir + "/a8_epscnn_locA.tsv");
    }
    r.pass = cen.mean_accuracy >= 0.99 && net.mean_accuracy >= 0.99;
    r.detail = "centroid " + pct(cen.mean_accuracy) + ", eps-cnn " + pct(net.mean_accuracy);
    return r;
}

CriterionResult a9_cross_domain(Ctx& ctx, std::ostream& log) {
    CriterionResult r{"A9", "Cross-domain: EPS-CNN holds where IQ-CNN degrades", false, ""};
    eval::EvalConfig ecfg = ctx.config.eval;

    auto eps_a = eval::make_features(ctx.loc_a, eval::ModelKind::eps_cnn, "locA");
    auto eps_c = eval::make_features(ctx.loc_c, eval::ModelKind::eps_cnn, "locC");
    auto eps_r = eval::make_features(ctx.loc_rand, eval::ModelKind::eps_cnn, "random-location");
    auto eps_d1 = eval::make_features(ctx.day1, eval::ModelKind::eps_cnn, "day2");
    auto eps_d2 = eval::make_features(ctx.day2, eval::ModelKind::eps_cnn, "day3");

    log << "  [A9] training EPS-CNN on locA...\n";
    auto e_ac = eval::evaluate_cross_domain(eps_a, eps_c, eval::ModelKind::eps_cnn, ecfg);
    // one locA model serves both cross-location tests; rebuilt here for the
    // random-location pair to keep the harness stateless
    auto e_ar = eval::evaluate_cross_domain(eps_a, eps_r, eval::ModelKind::eps_cnn, ecfg);
    log << "  [A9] EPS-CNN locA->locC " << pct(e_ac.mean_accuracy) << ", locA->random "
        << pct(e_ar.mean_accuracy) << "\n";

    auto iq_a = eval::make_features(ctx.loc_a_iq, eval::ModelKind::iq_cnn, "locA",
                                    ctx.config.iq_window);
    // rebuild iq test domains from the stored eps context is not possible;
    // regenerate the iq test sets
    const auto seed = ctx.config.population_seed;
    auto iq_c_ds = ctx.synth_domain(ctx.population, {0, 2, sim::ChannelKind::wireless}, 0.35,
                                    false, 100, seed);
    auto iq_r_ds = ctx.synth_domain(ctx.population, {0, 3, sim::ChannelKind::wireless}, 1.0, true,
                                    100, seed);
    auto iq_c = eval::make_features(iq_c_ds, eval::ModelKind::iq_cnn, "locC", ctx.config.iq_window);
    auto iq_r = eval::make_features(iq_r_ds, eval::ModelKind::iq_cnn, "random-location",
                                    ctx.config.iq_window);
    log << "  [A9] training IQ-CNN on locA...\n";
    auto i_ac = eval::evaluate_cross_domain(iq_a, iq_c, eval::ModelKind::iq_cnn, ecfg);
    auto i_ar = eval::evaluate_cross_domain(iq_a, iq_r, eval::ModelKind::iq_cnn, ecfg);
    log << "  [A9] IQ-CNN locA->locC " << pct(i_ac.mean_accuracy) << ", locA->random "
        << pct(i_ar.mean_accuracy) << "\n";

    log << "  [A9] training EPS-CNN for the cross-day pair...\n";
    auto e_d1 = eval::evaluate_cross_domain(eps_a, eps_d1, eval::ModelKind::eps_cnn, ecfg);
    auto e_d2 = eval::evaluate_cross_domain(eps_a, eps_d2, eval::ModelKind::eps_cnn, ecfg);
    log << "  [A9] EPS-CNN day1->day2 " << pct(e_d1.mean_accuracy) << ", day1->day3 "
        << pct(e_d2.mean_accuracy) << "\n";

    if (!ctx.out_dir.empty()) {
        eval::emit_report(e_ac, ctx.out_dir + "/a9_epscnn_locA_locC.tsv");
        eval::emit_report(e_ar, ctx.out_dir + "/a9_epscnn_locA_random.tsv");
        eval::emit_report(i_ac, ctx.out_dir + "/a9_iqcnn_locA_locC.tsv");
        eval::emit_report(i_ar, ctx.out_dir + "/a9_iqcnn_locA_random.tsv");
        eval::emit_report(e_d1, ctx.out_dir + "/a9_epscnn_day1_day2.tsv");
        eval::emit_report(e_d2, ctx.out_dir + "/a9_epscnn_day1_day3.tsv");
    }

    const bool loc_ok = e_ac.mean_accuracy >= 0.93 &&
                        e_ac.mean_accuracy - i_ac.mean_accuracy >= 0.20 &&
                        e_ar.mean_accuracy >= 0.93 &&
                        e_ar.mean_accuracy - i_ar.mean_accuracy >= 0.20;
    const bool rand_ok = i_ar.mean_accuracy <= 0.70;
    const bool day_ok = e_d1.mean_accuracy >= 0.90 && e_d2.mean_accuracy >= 0.90;
    r.pass = loc_ok && rand_ok && day_ok;
    std::ostringstream d;
    d << "eps locC " << pct(e_ac.mean_accuracy) << " rand " << pct(e_ar.mean_accuracy) << "; iq locC "
      << pct(i_ac.mean_accuracy) << " rand " << pct(i_ar.mean_accuracy) << "; eps day2 "
      << pct(e_d1.mean_accuracy) << " day3 " << pct(e_d2.mean_accuracy);
    r.detail = d.str();
    return r;
}

CriterionResult a10_zt(Ctx& ctx, std::ostream& log) {
    CriterionResult r{"A10", "Zero-trust flows: verify, rogue screen, impersonation, swap", false,
                      ""};
    zt::Registry reg;
    reg.min_enroll_frames = ctx.config.min_enroll_frames;
    if (!ctx.out_dir.empty()) reg.attach_audit_log(ctx.out_dir + "/audit.jsonl");

    // enrollment: first 20 locA tensors per device; verification: the rest
    std::map<std::uint16_t, std::vector<eps::EpsTensor>> by_dev;
    for (const auto& rec : ctx.loc_a.records)
        by_dev[rec.device_id].push_back(io::record_to_eps(ctx.loc_a.header, rec));
    std::vector<eps::EpsTensor> genuine;
    for (auto& [id, tensors] : by_dev) {
        std::vector<eps::EpsTensor> enroll(tensors.begin(), tensors.begin() + 20);
        reg.enroll_from_eps(id, enroll);
        genuine.insert(genuine.end(), tensors.begin() + 20, tensors.end());
    }

    long ok_genuine = 0;
    for (const auto& t : genuine)
        ok_genuine += reg.verify(t, *t.source_device).verdict == zt::Verdict::accepted;
    const double genuine_accept = static_cast<double>(ok_genuine) / genuine.size();

    // rogue transmitters, never enrolled
    std::vector<eps::EpsTensor> rogue_tensors;
    for (const auto& rogue : ctx.rogues) {
        Rng rng(mix_seed(0xa10, rogue.device_id));
        std::vector<sim::IQFrame> frames;
        for (int t = 0; t < 40; ++t)
            frames.push_back(one_device_frame(ctx, rogue.cfo_hz, rng.next_u64(),
                                              rng.uniform(15.0, 30.0), rng.uniform(0.3, 1.0),
                                              static_cast<std::uint32_t>(rng.below(201))));
        auto ts = eps::eps_of_frames(frames, ctx.pipe);
        rogue_tensors.insert(rogue_tensors.end(), ts.begin(), ts.end());
    }
    long rogue_accepted = 0;
    for (const auto& t : rogue_tensors)
        rogue_accepted += reg.screen_rogue_is_legit(t, ctx.config.tau_rogue);
    const double rogue_accept = static_cast<double>(rogue_accepted) / rogue_tensors.size();

    // impersonation: device b claims the next enrolled id
    long imp_trials = 0, imp_ok = 0;
    const auto ids = [&] {
        std::vector<std::uint16_t> v;
        for (const auto& [id, _] : by_dev) v.push_back(id);
        return v;
    }();
    for (std::size_t bi = 0; bi < ids.size(); ++bi) {
        const auto claim = ids[(bi + 1) % ids.size()];
        const auto& pool = by_dev[ids[bi]];
        for (std::size_t t = 20; t < 30; ++t) {
            auto d = reg.verify(pool[t], claim);
            ++imp_trials;
            imp_ok += d.verdict == zt::Verdict::rejected && d.matched_id &&
                      *d.matched_id == ids[bi];
        }
    }
    const double imp_rate = static_cast<double>(imp_ok) / imp_trials;

    // continuous authentication with a device swap mid-stream
    std::vector<eps::EpsTensor> stream(by_dev[ids[0]].begin() + 20, by_dev[ids[0]].begin() + 70);
    stream.insert(stream.end(), by_dev[ids[1]].begin() + 20, by_dev[ids[1]].begin() + 70);
    auto decisions = reg.continuous_auth(stream, ids[0], ctx.config.auth_window);
    std::size_t first_alert = decisions.size();
    for (std::size_t i = 0; i < decisions.size(); ++i)
        if (decisions[i].verdict == zt::Verdict::alert) {
            first_alert = i;
            break;
        }
    const bool swap_ok = first_alert >= 50 && first_alert < 50 + ctx.config.auth_window;

    if (!ctx.out_dir.empty()) {
        auto roc = zt::threshold_sweep(reg, genuine, rogue_tensors);
        zt::write_roc(roc, ctx.out_dir + "/a10_roc.tsv");
        reg.save(ctx.out_dir + "/registry.bin");
    }

    log << "  [A10] genuine-accept " << pct(genuine_accept) << ", rogue-accept "
        << pct(rogue_accept) << ", impersonation-reject " << pct(imp_rate) << ", swap alert at "
        << first_alert << "\n";
    r.pass = genuine_accept >= 0.98 && rogue_accept <= 0.02 && imp_rate >= 0.98 && swap_ok;
    std::ostringstream d;
    d << "genuine " << pct(genuine_accept) << ", rogue " << pct(rogue_accept) << ", impersonation "
      << pct(imp_rate) << ", swap alert idx " << first_alert;
    r.detail = d.str();
    return r;
}

CriterionResult a11_numerics(Ctx&) {
    CriterionResult r{"A11", "Gradient check and single-sample overfit", false, ""};
    auto arch = cnn::CnnArchitecture::miniature(2);
    auto p = cnn::ModelParams::init(arch, 21);
    const int B = 4;
    Rng rng(22);
    std::vector<double> x(static_cast<std::size_t>(B) * arch.input_h * arch.input_w);
    for (auto& v : x) v = rng.uniform(-1.0, 1.0);
    std::vector<int> y = {0, 1, 1, 0};

    cnn::ForwardCache cache;
    cnn::ModelParams pt = p;
    cnn::forward_batch(pt, x.data(), B, true, &cache);
    auto g = cnn::Gradients::zeros_like(p);
    (void)cnn::backward(p, cache, y.data(), g);

    auto loss_of = [&](cnn::ModelParams params) {
        cnn::ForwardCache c;
        cnn::forward_batch(params, x.data(), B, true, &c);
        double loss = 0.0;
        for (int b = 0; b < B; ++b) loss -= std::log(c.probs[b * 2 + y[b]]);
        return loss / B;
    };

    double worst = 0.0;
    auto check_block = [&](auto get, const std::vector<double>& analytic) {
        double num = 0.0, da = 0.0, df = 0.0;
        for (std::size_t i = 0; i < analytic.size(); ++i) {
            double fd = 0.0;
            for (double h : {1e-4, 1e-6}) {
                cnn::ModelParams pp = p, pm = p;
                get(pp)[i] += h;
                get(pm)[i] -= h;
                fd = (loss_of(pp) - loss_of(pm)) / (2.0 * h);
                const double scale = std::max({std::abs(fd), std::abs(analytic[i]), 1e-8});
                if (std::abs(fd - analytic[i]) / scale <= 1e-4) break;
            }
            num += (analytic[i] - fd) * (analytic[i] - fd);
            da += analytic[i] * analytic[i];
            df += fd * fd;
        }
        const double rel = std::sqrt(num) / std::max({std::sqrt(da), std::sqrt(df), 1e-12});
        worst = std::max(worst, rel);
    };
    for (std::size_t bi = 0; bi < 6; ++bi) {
        check_block([bi](cnn::ModelParams& m) -> std::vector<double>& { return m.blocks[bi].w; },
                    g.blocks[bi].w);
        check_block(
            [bi](cnn::ModelParams& m) -> std::vector<double>& { return m.blocks[bi].gamma; },
            g.blocks[bi].gamma);
        check_block(
            [bi](cnn::ModelParams& m) -> std::vector<double>& { return m.blocks[bi].beta; },
            g.blocks[bi].beta);
    }
    for (std::size_t fi = 0; fi < 3; ++fi) {
        check_block([fi](cnn::ModelParams& m) -> std::vector<double>& { return m.fcs[fi].w; },
                    g.fcs[fi].w);
        check_block([fi](cnn::ModelParams& m) -> std::vector<double>& { return m.fcs[fi].b; },
                    g.fcs[fi].b);
    }

    // single-sample-per-class overfit
    Rng orng(41);
    std::vector<double> X(2 * static_cast<std::size_t>(arch.input_h) * arch.input_w);
    for (auto& v : X) v = orng.uniform(-1.0, 1.0);
    std::vector<int> oy = {0, 1};
    cnn::TrainConfig tc;
    tc.epochs = 200;
    tc.batch_size = 2;
    tc.seed = 5;
    tc.early_stop_patience = 1000;
    auto res = cnn::train(arch, X, oy, tc);
    const std::size_t D = static_cast<std::size_t>(arch.input_h) * arch.input_w;
    bool overfit = true;
    for (int i = 0; i < 2; ++i) {
        std::vector<double> in(X.begin() + i * D, X.begin() + (i + 1) * D);
        overfit = overfit && cnn::predict_vec(res.params, in).device_id == oy[i];
    }

    r.pass = worst <= 1e-4 && overfit;
    std::ostringstream d;
    d << "worst block rel err=" << worst << ", overfit=" << (overfit ? "yes" : "no");
    r.detail = d.str();
    return r;
}

CriterionResult a12_plumbing(Ctx& ctx) {
    CriterionResult r{"A12", "Round-trips, fold invariants, leakage guard", false, ""};
    namespace fs = std::filesystem;
    const std::string dir = ctx.out_dir.empty() ? "." : ctx.out_dir;

    // dataset round-trip, bit identical
    io::Dataset small;
    small.header.sample_rate_hz = ctx.config.scenario.sample_rate_hz;
    small.header.frame_len = 64;
    small.header.payload_kind = io::PayloadKind::iq;
    Rng rng(0xa12);
    for (int i = 0; i < 5; ++i) {
        io::Record rec;
        rec.device_id = static_cast<std::uint16_t>(i);
        rec.payload.resize(128);
        for (auto& v : rec.payload) v = static_cast<float>(rng.uniform(-1.0, 1.0));
        small.records.push_back(std::move(rec));
    }
    small.header.record_count = 5;
    const std::string p1 = dir + "/a12_ds.bin", p2 = dir + "/a12_ds2.bin";
    io::write_dataset(p1, small);
    io::write_dataset(p2, io::read_dataset(p1));
    auto slurp = [](const std::string& p) {
        std::ifstream f(p, std::ios::binary);
        return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    };
    const bool ds_ok = slurp(p1) == slurp(p2);

    // checkpoint round-trip, bit identical
    auto params = cnn::ModelParams::init(cnn::CnnArchitecture::miniature(3), 7);
    const std::string c1 = dir + "/a12_ckpt.bin", c2 = dir + "/a12_ckpt2.bin";
    cnn::save_checkpoint(params, c1);
    cnn::save_checkpoint(cnn::load_checkpoint(c1), c2);
    const bool ck_ok = slurp(c1) == slurp(c2);
    for (const auto& p : {p1, p2, c1, c2}) fs::remove(p);

    // fold invariants on the locA labels
    std::vector<int> labels;
    for (const auto& rec : ctx.loc_a.records) labels.push_back(rec.device_id);
    auto split = eval::kfold_split(labels, 5, ctx.config.eval.seed);
    std::set<std::size_t> seen;
    bool folds_ok = split.folds.size() == 5;
    for (const auto& f : split.folds)
        for (auto i : f) folds_ok = folds_ok && seen.insert(i).second;
    folds_ok = folds_ok && seen.size() == labels.size();
    for (int cls = 0; cls < 15 && folds_ok; ++cls) {
        std::vector<int> counts(5, 0);
        for (int f = 0; f < 5; ++f)
            for (auto i : split.folds[f]) counts[f] += labels[i] == cls;
        const auto [mn, mx] = std::minmax_element(counts.begin(), counts.end());
        folds_ok = folds_ok && *mx - *mn <= 1;
    }

    // leakage guard: shuffled labels land at chance
    auto data = eval::make_features(ctx.loc_a, eval::ModelKind::nearest_centroid, "locA");
    Rng srng(0x5f);
    srng.shuffle(data.y);
    eval::EvalConfig ecfg = ctx.config.eval;
    ecfg.folds = 5;
    auto rep = eval::evaluate_same_domain(data, eval::ModelKind::nearest_centroid, ecfg);
    const double chance = 1.0 / 15.0;
    const bool chance_ok = std::abs(rep.mean_accuracy - chance) <= 0.05;

    r.pass = ds_ok && ck_ok && folds_ok && chance_ok;
    std::ostringstream d;
    d << "dataset rt=" << ds_ok << " ckpt rt=" << ck_ok << " folds=" << folds_ok
      << " shuffled acc=" << pct(rep.mean_accuracy);
    r.detail = d.str();
    return r;
}

} // namespace

std::vector<CriterionResult> run_acceptance(const cfg::AppConfig& config,
                                            const std::string& out_dir, std::ostream& log) {
    if (!out_dir.empty()) std::filesystem::create_directories(out_dir);
    Ctx ctx(config, out_dir);

    std::vector<CriterionResult> results;
    auto run = [&](CriterionResult r) {
        log << (r.pass ? "[PASS] " : "[FAIL] ") << r.id << " " << r.summary << " -- " << r.detail
            << "\n";
        log.flush();
        results.push_back(std::move(r));
    };

    run(a1_remez(ctx));
    run(a2_spectrum(ctx));
    run(a3_shape(ctx));
    run(a4_scale_invariance(ctx));
    run(a5_figure3(ctx));
    run(a6_peak_law(ctx));
    run(a7_robustness(ctx));
    build_shared_datasets(ctx, log);
    run(a8_same_domain(ctx, log));
    run(a9_cross_domain(ctx, log));
    run(a10_zt(ctx, log));
    run(a11_numerics(ctx));
    run(a12_plumbing(ctx));
    return results;
}

} // namespace epsfp::accept
