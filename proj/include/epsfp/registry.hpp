#pragma once

#include "epsfp/cnn.hpp"
#include "epsfp/eps.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace epsfp::zt {

struct FingerprintTemplate {
    std::uint16_t device_id = 0;
    std::vector<double> centroid_eps;   // unit L2, length 2 * n_fft
    double dispersion = 0.0;            // mean intra-class cosine distance
    std::int64_t enrolled_at = 0;       // unix seconds; 0 in deterministic runs
    std::uint32_t n_enroll_frames = 0;
    double tau = 0.0;                   // calibrated verify threshold
};

enum class Verdict { accepted, rejected, alert };

struct AuthDecision {
    Verdict verdict = Verdict::rejected;
    std::optional<std::uint16_t> claimed_id;
    std::optional<std::uint16_t> matched_id;
    double score = -1.0;
    double threshold_used = 0.0;
};

// append-only audit log, line-delimited JSON records
class AuditLog {
public:
    AuditLog() = default;
    explicit AuditLog(std::string path) : path_(std::move(path)) {}
    void append(const std::string& event, std::optional<std::uint16_t> device_id,
                std::uint64_t input_hash, const std::string& detail);

private:
    std::string path_;
};

class Registry {
public:
    std::uint32_t min_enroll_frames = 20;

    // centroid + dispersion from the frames' EPS tensors; re-enrolling an id
    // replaces its template (and is logged)
    const FingerprintTemplate& enroll(std::uint16_t device_id,
                                      const std::vector<sim::IQFrame>& frames,
                                      const eps::PipelineConfig& cfg,
                                      std::int64_t enrolled_at = 0);
    const FingerprintTemplate& enroll_from_eps(std::uint16_t device_id,
                                               const std::vector<eps::EpsTensor>& tensors,
                                               std::int64_t enrolled_at = 0);

    bool screen_rogue_is_legit(const eps::EpsTensor& t, double tau_rogue) const;

    AuthDecision verify(const eps::EpsTensor& t, std::uint16_t claimed_id,
                        std::optional<double> tau_verify = {}) const;

    // per-frame score against the session's verified identity; sliding mean
    // over `window` scores, alert while the mean is below tau
    std::vector<AuthDecision> continuous_auth(const std::vector<eps::EpsTensor>& stream,
                                              std::uint16_t session_id, std::size_t window,
                                              std::optional<double> tau = {}) const;

    const std::vector<FingerprintTemplate>& templates() const { return templates_; }
    const FingerprintTemplate* find(std::uint16_t device_id) const;
    std::size_t size() const { return templates_.size(); }

    void attach_audit_log(const std::string& path) { log_ = AuditLog(path); }

    // versioned binary registry file, written atomically (temp + rename)
    void save(const std::string& path) const;
    static Registry load(const std::string& path);

private:
    std::vector<FingerprintTemplate> templates_;
    mutable AuditLog log_;
};

struct RocRow {
    double tau = 0.0;
    double genuine_accept = 0.0;
    double rogue_accept = 0.0;
};

// genuine-accept vs rogue-accept over tau in [0.5, 1.0] step 0.005, scored
// with max-cosine against the registry
std::vector<RocRow> threshold_sweep(const Registry& reg,
                                    const std::vector<eps::EpsTensor>& genuine,
                                    const std::vector<eps::EpsTensor>& rogue);

void write_roc(const std::vector<RocRow>& roc, const std::string& path);

double cosine(const std::vector<double>& a, const std::vector<double>& b);

} // namespace epsfp::zt
