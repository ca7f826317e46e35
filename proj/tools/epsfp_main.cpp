// epsfp - synthetic RF fingerprinting experiments end to end: simulate
// impaired 802.11b-like transmitters, extract EPS fingerprints, train and
// evaluate identifiers, and run the enrollment/verification flows.

#include "epsfp/accept.hpp"
#include "epsfp/registry.hpp"
#include "epsfp/rng.hpp"

#include "CLI11.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#ifdef _OPENMP
#include <omp.h>
#endif

namespace fs = std::filesystem;
using namespace epsfp;

namespace {

// exit codes: 0 ok, 1 acceptance/eval failure, 2 usage, 3 data error
constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitData = 3;

cfg::AppConfig load_config(const std::string& path) {
    if (path.empty()) {
        if (const char* env = std::getenv("EPSFP_CONFIG_DIR")) {
            const fs::path p = fs::path(env) / "default.json";
            if (fs::exists(p)) return cfg::AppConfig::from_file(p.string());
        }
        return cfg::AppConfig::defaults();
    }
    return cfg::AppConfig::from_file(path);
}

void write_run_manifest(const std::string& out_dir, const std::string& command,
                        const cfg::AppConfig& config, std::uint64_t seed) {
    std::ofstream f(fs::path(out_dir) / "run_manifest.json");
    f << "{\n  \"tool\": \"epsfp 1.0\",\n  \"command\": \"" << command << "\",\n  \"seed\": "
      << seed << ",\n  \"devices\": " << config.devices << ",\n  \"frame_len\": "
      << config.scenario.frame_len << ",\n  \"sample_rate_hz\": "
      << config.scenario.sample_rate_hz << "\n}\n";
}

int cmd_simulate(const std::string& config_path, const std::string& scenario_name,
                 std::uint32_t frames, std::uint64_t seed, const std::string& out_dir) {
    auto config = load_config(config_path);
    auto spec = config.scenario;
    spec.kind = io::scenario_from_name(scenario_name);
    auto pop = config.population();

    fs::create_directories(out_dir);
    auto ds = io::build_scenario(pop, spec, frames, seed);
    const auto bin = (fs::path(out_dir) / (scenario_name + ".bin")).string();
    io::write_dataset(bin, ds);
    io::write_manifest((fs::path(out_dir) / (scenario_name + ".manifest.json")).string(), pop,
                       spec, frames, seed);
    write_run_manifest(out_dir, "simulate " + scenario_name, config, seed);
    std::cout << "wrote " << ds.records.size() << " frames to " << bin << "\n";
    return kExitOk;
}

int cmd_eps(const std::string& config_path, const std::string& in, const std::string& out,
            const std::string& plot_dir) {
    auto config = load_config(config_path);
    auto iq = io::read_dataset(in);
    auto pipe = eps::PipelineConfig::defaults();
    pipe.frame_len = iq.header.frame_len;
    auto ds = io::eps_dataset(iq, pipe);
    io::write_dataset(out, ds);
    std::cout << "wrote " << ds.records.size() << " EPS tensors to " << out << "\n";

    if (!plot_dir.empty()) {
        // per-device mean EPS tables: freq_hz, eps_i, eps_q
        fs::create_directories(plot_dir);
        std::map<std::uint16_t, std::pair<std::vector<double>, long>> acc;
        for (const auto& rec : ds.records) {
            auto& [sum, count] = acc[rec.device_id];
            if (sum.empty()) sum.assign(rec.payload.size(), 0.0);
            for (std::size_t i = 0; i < rec.payload.size(); ++i) sum[i] += rec.payload[i];
            ++count;
        }
        const std::size_t n = ds.header.frame_len;
        for (const auto& [id, sc] : acc) {
            std::ofstream f(fs::path(plot_dir) / ("eps_device_" + std::to_string(id) + ".tsv"));
            f << "freq_hz\teps_i\teps_q\n";
            for (std::size_t k = 0; k < n; ++k) {
                const double freq = (static_cast<double>(k) - static_cast<double>(n / 2)) *
                                    ds.header.sample_rate_hz / static_cast<double>(n);
                f << freq << "\t" << sc.first[k] / sc.second << "\t"
                  << sc.first[n + k] / sc.second << "\n";
            }
        }
        std::cout << "wrote per-device EPS tables to " << plot_dir << "\n";
    }
    (void)config;
    return kExitOk;
}

int cmd_figure3(const std::string& out_dir) {
    fs::create_directories(out_dir);
    const double fs3 = 2e6;
    const std::size_t n3 = 20000;   // 10 ms
    auto hilbert = dsp::default_hilbert();
    std::ofstream counts(fs::path(out_dir) / "figure3_hump_counts.tsv");
    counts << "cfo_hz\texpected\tcounted\n";
    for (double cfo : {0.0, 50.0, 100.0, 200.0}) {
        auto s = sim::generate_dsss_baseband(sim::random_payload(2000, 3), 20, n3, 3, false,
                                             -M_PI / 2.0);
        s.sample_rate_hz = fs3;
        sim::DeviceProfile dev;
        dev.cfo_hz = cfo;
        auto r = sim::apply_impairments(s, dev, 9);
        sim::ChannelProfile ch;
        ch.snr_db = 25.0;
        ch.seed = 31;
        r = sim::apply_channel(r, ch);

        dsp::RealSequence x{sim::i_rail(r), fs3};
        const unsigned got = sim::count_envelope_humps(x, hilbert, 250.0);
        counts << cfo << "\t" << std::lround(2.0 * cfo * 0.010) << "\t" << got << "\n";

        auto env = dsp::envelope(x, hilbert);
        std::ofstream trace(fs::path(out_dir) /
                            ("figure3_cfo" + std::to_string(static_cast<int>(cfo)) + ".tsv"));
        trace << "time_s\ti_component\tenvelope\n";
        const int D = hilbert.group_delay_samples;
        for (std::size_t i = 0; i < env.samples.size(); i += 4)
            trace << (i + D) / fs3 << "\t" << x.samples[i + D] << "\t" << env.samples[i] << "\n";
        std::cout << "cfo " << cfo << " Hz -> " << got << " humps\n";
    }
    std::cout << "wrote figure-3 tables to " << out_dir << "\n";
    return kExitOk;
}

int cmd_train(const std::string& config_path, const std::string& in, const std::string& model,
              const std::string& out, std::uint64_t seed) {
    auto config = load_config(config_path);
    auto kind = eval::model_kind_from_name(model);
    auto ds = io::read_dataset(in);
    auto data = eval::make_features(ds, kind, "train", config.iq_window);

    if (kind == eval::ModelKind::nearest_centroid) {
        std::cerr << "nearest_centroid has no checkpoint; use evaluate directly\n";
        return 2;
    }
    auto arch = cnn::CnnArchitecture::eps_default(static_cast<int>(data.class_ids.size()));
    arch.input_w = data.input_w;
    const std::size_t D = static_cast<std::size_t>(arch.input_h) * arch.input_w;
    std::vector<double> X;
    X.reserve(data.x.size() * D);
    std::vector<int> Y;
    for (std::size_t i = 0; i < data.x.size(); ++i) {
        X.insert(X.end(), data.x[i].begin(), data.x[i].end());
        Y.push_back(data.y[i]);
    }
    cnn::TrainConfig tc = config.train;
    tc.seed = seed ? seed : tc.seed;
    std::cout << "training " << model << " on " << data.x.size() << " samples...\n";
    auto res = cnn::train(arch, X, Y, tc);
    cnn::save_checkpoint(res.params, out);
    std::cout << "epoch losses:";
    for (double l : res.loss_curve) std::cout << " " << l;
    std::cout << "\nwrote checkpoint to " << out << "\n";
    return kExitOk;
}

int cmd_evaluate(const std::string& config_path, const std::string& train_in,
                 const std::string& test_in, const std::string& model, const std::string& out,
                 const std::string& mode) {
    auto config = load_config(config_path);
    auto kind = eval::model_kind_from_name(model);
    eval::EvalConfig ecfg = config.eval;

    eval::EvalReport report;
    if (mode == "same") {
        auto ds = io::read_dataset(train_in);
        auto data = eval::make_features(ds, kind, "same-domain", config.iq_window);
        report = eval::evaluate_same_domain(data, kind, ecfg);
    } else if (mode == "cross") {
        auto train_ds = io::read_dataset(train_in);
        auto test_ds = io::read_dataset(test_in);
        auto train_data = eval::make_features(train_ds, kind, "train-domain", config.iq_window);
        auto test_data = eval::make_features(test_ds, kind, "test-domain", config.iq_window);
        report = eval::evaluate_cross_domain(train_data, test_data, kind, ecfg);
    } else {
        std::cerr << "mode must be same or cross\n";
        return 2;
    }
    eval::emit_report(report, out);
    std::cout << model << " " << mode << "-domain mean accuracy "
              << 100.0 * report.mean_accuracy << "% -> " << out << "\n";
    return kExitOk;
}

int cmd_enroll(const std::string& config_path, const std::string& in,
               const std::string& registry_path, std::int64_t timestamp) {
    auto config = load_config(config_path);
    auto ds = io::read_dataset(in);
    if (ds.header.payload_kind != io::PayloadKind::eps) {
        std::cerr << "enroll expects an eps dataset (run `epsfp eps` first)\n";
        return kExitData;
    }
    zt::Registry reg;
    if (fs::exists(registry_path)) reg = zt::Registry::load(registry_path);
    reg.min_enroll_frames = config.min_enroll_frames;
    reg.attach_audit_log(registry_path + ".audit.jsonl");

    std::map<std::uint16_t, std::vector<eps::EpsTensor>> by_dev;
    for (const auto& rec : ds.records)
        by_dev[rec.device_id].push_back(io::record_to_eps(ds.header, rec));
    for (auto& [id, tensors] : by_dev) {
        const auto& tpl = reg.enroll_from_eps(id, tensors, timestamp);
        std::cout << "enrolled device " << id << " (n=" << tpl.n_enroll_frames
                  << ", dispersion=" << tpl.dispersion << ", tau=" << tpl.tau << ")\n";
    }
    reg.save(registry_path);
    std::cout << "registry " << registry_path << " now holds " << reg.size() << " templates\n";
    return kExitOk;
}

int cmd_verify(const std::string& config_path, const std::string& in,
               const std::string& registry_path, int claim) {
    auto config = load_config(config_path);
    auto ds = io::read_dataset(in);
    auto reg = zt::Registry::load(registry_path);
    reg.attach_audit_log(registry_path + ".audit.jsonl");

    long accepted = 0, total = 0;
    for (const auto& rec : ds.records) {
        auto t = io::record_to_eps(ds.header, rec);
        const std::uint16_t claimed =
            claim >= 0 ? static_cast<std::uint16_t>(claim) : rec.device_id;
        auto d = reg.verify(t, claimed);
        ++total;
        accepted += d.verdict == zt::Verdict::accepted;
    }
    std::cout << "accepted " << accepted << "/" << total << " verification attempts\n";
    (void)config;
    return kExitOk;
}

int cmd_auth(const std::string& config_path, const std::string& in,
             const std::string& registry_path, int session_id, std::size_t window) {
    auto config = load_config(config_path);
    auto ds = io::read_dataset(in);
    auto reg = zt::Registry::load(registry_path);
    std::vector<eps::EpsTensor> stream;
    for (const auto& rec : ds.records) stream.push_back(io::record_to_eps(ds.header, rec));
    const std::size_t w = window ? window : config.auth_window;
    auto decisions = reg.continuous_auth(stream, static_cast<std::uint16_t>(session_id), w);
    long alerts = 0;
    for (std::size_t i = 0; i < decisions.size(); ++i) {
        if (decisions[i].verdict == zt::Verdict::alert) {
            if (alerts == 0) std::cout << "first alert at frame " << i << "\n";
            ++alerts;
        }
    }
    std::cout << alerts << " alerts over " << decisions.size() << " frames (window " << w << ")\n";
    return alerts == 0 ? kExitOk : kExitFailure;
}

int cmd_accept(const std::string& config_path, const std::string& out_dir) {
    auto config = load_config(config_path);
    auto results = accept::run_acceptance(config, out_dir, std::cout);
    int failures = 0;
    for (const auto& r : results) failures += !r.pass;
    std::cout << (failures == 0 ? "ACCEPTANCE: all criteria passed\n"
                                : "ACCEPTANCE: " + std::to_string(failures) +
                                      " criteria FAILED\n");
    return failures == 0 ? kExitOk : kExitFailure;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"epsfp: envelope-power-spectrum device fingerprinting toolkit"};
    app.require_subcommand(1);

    std::string config_path, out_dir = "out", in, out, model = "nearest_centroid";
    std::string scenario = "fixed-location", test_in, mode = "same", registry_path = "registry.bin";
    std::string plot_dir;
    std::uint32_t frames = 100;
    std::uint64_t seed = 1;
    std::int64_t timestamp = 0;
    int claim = -1, session = 0;
    std::size_t window = 0;
    unsigned jobs = 0;

    app.add_option("--config", config_path, "JSON config file (strict keys)");
    app.add_option("--jobs", jobs, "cap worker threads (default: all cores)");

    auto* sim_cmd = app.add_subcommand("simulate", "synthesize a labeled IQ dataset");
    sim_cmd->add_option("--scenario", scenario, "fixed-location | random-location | cross-day");
    sim_cmd->add_option("--frames", frames, "frames per device per domain");
    sim_cmd->add_option("--seed", seed, "master seed");
    sim_cmd->add_option("--out", out_dir, "output directory");

    auto* eps_cmd = app.add_subcommand("eps", "extract EPS tensors from an IQ dataset");
    eps_cmd->add_option("--in", in, "input iq dataset")->required();
    eps_cmd->add_option("--out", out, "output eps dataset")->required();
    eps_cmd->add_option("--plot-dir", plot_dir, "also emit per-device freq/eps tables");

    auto* fig_cmd = app.add_subcommand("figure3", "CFO hump study at 10 ms frames");
    fig_cmd->add_option("--out", out_dir, "output directory");

    auto* train_cmd = app.add_subcommand("train", "train a CNN and write a checkpoint");
    train_cmd->add_option("--in", in, "training dataset")->required();
    train_cmd->add_option("--model", model, "eps_cnn | iq_cnn")->required();
    train_cmd->add_option("--out", out, "checkpoint path")->required();
    train_cmd->add_option("--seed", seed, "training seed");

    auto* eval_cmd = app.add_subcommand("evaluate", "same- or cross-domain evaluation");
    eval_cmd->add_option("--mode", mode, "same | cross");
    eval_cmd->add_option("--train-in", in, "training dataset")->required();
    eval_cmd->add_option("--test-in", test_in, "test dataset (cross mode)");
    eval_cmd->add_option("--model", model, "eps_cnn | iq_cnn | nearest_centroid");
    eval_cmd->add_option("--out", out, "report path")->required();

    auto* enroll_cmd = app.add_subcommand("enroll", "enroll all devices of an eps dataset");
    enroll_cmd->add_option("--in", in, "eps dataset")->required();
    enroll_cmd->add_option("--registry", registry_path, "registry file");
    enroll_cmd->add_option("--timestamp", timestamp, "enrollment unix time (0 = deterministic)");

    auto* verify_cmd = app.add_subcommand("verify", "verify frames against the registry");
    verify_cmd->add_option("--in", in, "eps dataset")->required();
    verify_cmd->add_option("--registry", registry_path, "registry file");
    verify_cmd->add_option("--claim", claim, "claimed device id (default: record label)");

    auto* auth_cmd = app.add_subcommand("auth", "continuous authentication over a stream");
    auth_cmd->add_option("--in", in, "eps dataset, in stream order")->required();
    auth_cmd->add_option("--registry", registry_path, "registry file");
    auth_cmd->add_option("--session", session, "verified session identity")->required();
    auth_cmd->add_option("--window", window, "sliding window (default from config)");

    auto* acc_cmd = app.add_subcommand("accept", "run the acceptance criteria suite");
    acc_cmd->add_option("--out", out_dir, "artifact directory");

    CLI11_PARSE(app, argc, argv);

#ifdef _OPENMP
    if (jobs > 0) omp_set_num_threads(static_cast<int>(jobs));
#endif

    try {
        if (sim_cmd->parsed()) return cmd_simulate(config_path, scenario, frames, seed, out_dir);
        if (eps_cmd->parsed()) return cmd_eps(config_path, in, out, plot_dir);
        if (fig_cmd->parsed()) return cmd_figure3(out_dir);
        if (train_cmd->parsed()) return cmd_train(config_path, in, model, out, seed);
        if (eval_cmd->parsed()) return cmd_evaluate(config_path, in, test_in, model, out, mode);
        if (enroll_cmd->parsed()) return cmd_enroll(config_path, in, registry_path, timestamp);
        if (verify_cmd->parsed()) return cmd_verify(config_path, in, registry_path, claim);
        if (auth_cmd->parsed()) return cmd_auth(config_path, in, registry_path, session, window);
        if (acc_cmd->parsed()) return cmd_accept(config_path, out_dir);
    } catch (const io::ParseError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    return 2;
}
