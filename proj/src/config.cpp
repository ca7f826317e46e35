#include "epsfp/config.hpp"

#include "json.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

namespace epsfp::cfg {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!known.count(it.key()))
            throw std::invalid_argument("unknown config key \"" + it.key() + "\" in " + where);
}

template <typename T>
void take(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

void take_pair(const json& j, const char* key, double& lo, double& hi) {
    if (j.contains(key)) {
        auto v = j.at(key).get<std::vector<double>>();
        if (v.size() != 2) throw std::invalid_argument(std::string(key) + " needs [lo, hi]");
        lo = v[0];
        hi = v[1];
    }
}

} // namespace

std::vector<sim::DeviceProfile> AppConfig::population() const {
    auto pop = sim::default_population(devices, population_seed);
    if (explicit_cfos) {
        if (explicit_cfos->size() != pop.size())
            throw std::invalid_argument("explicit cfo list length must match device count");
        for (std::size_t i = 0; i < pop.size(); ++i) pop[i].cfo_hz = (*explicit_cfos)[i];
    }
    return pop;
}

AppConfig AppConfig::defaults() {
    AppConfig c;
    c.train.epochs = 4;
    c.train.early_stop_patience = 2;
    c.eval.train = c.train;
    return c;
}

void AppConfig::apply_json_text(const std::string& text) {
    json j = json::parse(text);
    reject_unknown(j, {"population", "waveform", "channel", "train", "eval", "zt"}, "config root");

    if (j.contains("population")) {
        const auto& p = j["population"];
        reject_unknown(p, {"devices", "seed", "cfo_hz"}, "population");
        take(p, "devices", devices);
        take(p, "seed", population_seed);
        if (p.contains("cfo_hz")) explicit_cfos = p["cfo_hz"].get<std::vector<double>>();
    }
    if (j.contains("waveform")) {
        const auto& w = j["waveform"];
        reject_unknown(w, {"sample_rate_hz", "frame_len", "samples_per_chip", "smooth_chips"},
                       "waveform");
        take(w, "sample_rate_hz", scenario.sample_rate_hz);
        take(w, "frame_len", scenario.frame_len);
        take(w, "samples_per_chip", scenario.samples_per_chip);
        take(w, "smooth_chips", scenario.smooth_chips);
    }
    if (j.contains("channel")) {
        const auto& c = j["channel"];
        reject_unknown(c,
                       {"snr_ref_db", "session_scale_jitter", "session_delay_max",
                        "location_scales", "random_scale", "random_delay_max", "days",
                        "day_cfo_jitter", "multipath", "multipath_mags"},
                       "channel");
        take(c, "snr_ref_db", scenario.snr_ref_db);
        take_pair(c, "session_scale_jitter", scenario.session_scale_jitter_lo,
                  scenario.session_scale_jitter_hi);
        take(c, "session_delay_max", scenario.session_delay_max);
        take(c, "location_scales", scenario.location_scales);
        take_pair(c, "random_scale", scenario.random_scale_lo, scenario.random_scale_hi);
        take(c, "random_delay_max", scenario.random_delay_max);
        take(c, "days", scenario.days);
        take(c, "day_cfo_jitter", scenario.day_cfo_jitter);
        take(c, "multipath", scenario.multipath);
        take(c, "multipath_mags", scenario.multipath_mags);
    }
    if (j.contains("train")) {
        const auto& t = j["train"];
        reject_unknown(t,
                       {"learning_rate", "batch_size", "epochs", "adam_beta1", "adam_beta2",
                        "adam_eps", "seed", "early_stop_patience"},
                       "train");
        take(t, "learning_rate", train.learning_rate);
        take(t, "batch_size", train.batch_size);
        take(t, "epochs", train.epochs);
        take(t, "adam_beta1", train.adam_beta1);
        take(t, "adam_beta2", train.adam_beta2);
        take(t, "adam_eps", train.adam_eps);
        take(t, "seed", train.seed);
        take(t, "early_stop_patience", train.early_stop_patience);
    }
    if (j.contains("eval")) {
        const auto& e = j["eval"];
        reject_unknown(e, {"folds", "seed", "cross_models", "iq_window"}, "eval");
        take(e, "folds", eval.folds);
        take(e, "seed", eval.seed);
        take(e, "cross_models", eval.cross_models);
        take(e, "iq_window", iq_window);
    }
    if (j.contains("zt")) {
        const auto& z = j["zt"];
        reject_unknown(z, {"min_enroll_frames", "tau_rogue", "auth_window"}, "zt");
        take(z, "min_enroll_frames", min_enroll_frames);
        take(z, "tau_rogue", tau_rogue);
        take(z, "auth_window", auth_window);
    }
    eval.train = train;
}

AppConfig AppConfig::from_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config " + path);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    AppConfig cfg;
    cfg.apply_json_text(text);
    return cfg;
}

} // namespace epsfp::cfg
