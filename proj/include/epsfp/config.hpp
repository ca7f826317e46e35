#pragma once

#include "epsfp/dataset.hpp"
#include "epsfp/eval.hpp"

#include <cstdint>
#include <optional>
#include <string>

namespace epsfp::cfg {

struct AppConfig {
    std::size_t devices = 15;
    std::uint64_t population_seed = 20240;
    std::optional<std::vector<double>> explicit_cfos;   // overrides the built-in grid

    io::ScenarioSpec scenario;       // waveform + channel model defaults
    cnn::TrainConfig train;
    eval::EvalConfig eval;

    std::uint32_t min_enroll_frames = 20;
    double tau_rogue = 0.95;
    std::size_t auth_window = 8;
    std::size_t iq_window = 4096;

    std::vector<sim::DeviceProfile> population() const;

    static AppConfig defaults();
    // strict: unknown keys anywhere in the file are an error
    static AppConfig from_file(const std::string& path);
    void apply_json_text(const std::string& text);   // overlay onto *this
};

} // namespace epsfp::cfg
