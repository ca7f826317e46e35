#include "epsfp/registry.hpp"

#include "json.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace epsfp::zt {

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw std::invalid_argument("cosine shape mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) throw std::invalid_argument("zero vector");
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

namespace {

std::uint64_t fnv1a(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = 1469598103934665603ull;
    for (std::size_t i = 0; i < n; ++i) h = (h ^ p[i]) * 1099511628211ull;
    return h;
}

std::uint64_t tensor_hash(const eps::EpsTensor& t) {
    std::uint64_t h = fnv1a(t.eps_i.data(), t.eps_i.size() * sizeof(double));
    const std::uint64_t h2 = fnv1a(t.eps_q.data(), t.eps_q.size() * sizeof(double));
    return h ^ (h2 * 0x9e3779b97f4a7c15ull);
}

} // namespace

void AuditLog::append(const std::string& event, std::optional<std::uint16_t> device_id,
                      std::uint64_t input_hash, const std::string& detail) {
    if (path_.empty()) return;
    nlohmann::ordered_json j;
    j["ts"] = std::chrono::duration_cast<std::chrono::milliseconds>(
                  std::chrono::system_clock::now().time_since_epoch())
                  .count();
    j["event"] = event;
    if (device_id) j["device_id"] = *device_id;
    char hex[19];
    std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(input_hash));
    j["input_hash"] = hex;
    if (!detail.empty()) j["detail"] = detail;
    std::ofstream f(path_, std::ios::app);
    if (f) f << j.dump() << "\n";
}

const FingerprintTemplate& Registry::enroll_from_eps(std::uint16_t device_id,
                                                     const std::vector<eps::EpsTensor>& tensors,
                                                     std::int64_t enrolled_at) {
    if (tensors.size() < min_enroll_frames)
        throw std::invalid_argument("enrollment needs at least " +
                                    std::to_string(min_enroll_frames) + " frames, got " +
                                    std::to_string(tensors.size()));
    for (const auto& t : tensors)
        if (t.source_device && *t.source_device != device_id)
            throw std::invalid_argument("frame labeled for another device in enrollment batch");

    FingerprintTemplate tpl;
    tpl.device_id = device_id;
    tpl.n_enroll_frames = static_cast<std::uint32_t>(tensors.size());
    tpl.enrolled_at = enrolled_at;

    const std::size_t dim = tensors[0].eps_i.size() + tensors[0].eps_q.size();
    tpl.centroid_eps.assign(dim, 0.0);
    for (const auto& t : tensors) {
        auto v = eps::flatten(t);
        for (std::size_t i = 0; i < dim; ++i) tpl.centroid_eps[i] += v[i];
    }
    double norm = 0.0;
    for (double v : tpl.centroid_eps) norm += v * v;
    norm = std::sqrt(norm);
    if (norm == 0.0) throw std::invalid_argument("degenerate enrollment centroid");
    for (double& v : tpl.centroid_eps) v /= norm;

    double mean_cos = 0.0;
    for (const auto& t : tensors) mean_cos += cosine(eps::flatten(t), tpl.centroid_eps);
    mean_cos /= static_cast<double>(tensors.size());
    tpl.dispersion = 1.0 - mean_cos;
    tpl.tau = std::clamp(mean_cos - 3.0 * tpl.dispersion, 0.9, 0.999);

    std::uint64_t h = 0;
    for (const auto& t : tensors) h ^= tensor_hash(t);
    auto it = std::find_if(templates_.begin(), templates_.end(),
                           [&](const auto& t) { return t.device_id == device_id; });
    if (it != templates_.end()) {
        *it = std::move(tpl);
        log_.append("re-enroll", device_id, h, "template replaced");
        return *it;
    }
    templates_.push_back(std::move(tpl));
    log_.append("enroll", device_id, h,
                "n=" + std::to_string(templates_.back().n_enroll_frames));
    return templates_.back();
}

const FingerprintTemplate& Registry::enroll(std::uint16_t device_id,
                                            const std::vector<sim::IQFrame>& frames,
                                            const eps::PipelineConfig& cfg,
                                            std::int64_t enrolled_at) {
    auto tensors = eps::eps_of_frames(frames, cfg);
    return enroll_from_eps(device_id, tensors, enrolled_at);
}

const FingerprintTemplate* Registry::find(std::uint16_t device_id) const {
    for (const auto& t : templates_)
        if (t.device_id == device_id) return &t;
    return nullptr;
}

bool Registry::screen_rogue_is_legit(const eps::EpsTensor& t, double tau_rogue) const {
    if (templates_.empty()) throw std::invalid_argument("registry is empty");
    const auto v = eps::flatten(t);
    double best = -1.0;
    for (const auto& tpl : templates_) best = std::max(best, cosine(v, tpl.centroid_eps));
    const bool legit = best >= tau_rogue;
    log_.append(legit ? "screen-legit" : "screen-rogue", std::nullopt, tensor_hash(t),
                "score=" + std::to_string(best));
    return legit;
}

AuthDecision Registry::verify(const eps::EpsTensor& t, std::uint16_t claimed_id,
                              std::optional<double> tau_verify) const {
    AuthDecision d;
    d.claimed_id = claimed_id;
    const auto* tpl = find(claimed_id);
    if (!tpl) {
        // unknown identity is a security signal, not an exception
        d.verdict = Verdict::rejected;
        d.threshold_used = tau_verify.value_or(1.0);
        log_.append("verify-unknown-id", claimed_id, tensor_hash(t), "");
        return d;
    }
    const auto v = eps::flatten(t);
    double best = -1.0;
    std::uint16_t best_id = claimed_id;
    for (const auto& other : templates_) {
        const double c = cosine(v, other.centroid_eps);
        if (c > best) {
            best = c;
            best_id = other.device_id;
        }
        if (other.device_id == claimed_id) d.score = c;
    }
    d.matched_id = best_id;
    d.threshold_used = tau_verify.value_or(tpl->tau);
    d.verdict = (d.score >= d.threshold_used && best_id == claimed_id) ? Verdict::accepted
                                                                       : Verdict::rejected;
    log_.append(d.verdict == Verdict::accepted ? "verify-accept" : "verify-reject", claimed_id,
                tensor_hash(t), "score=" + std::to_string(d.score));
    return d;
}

std::vector<AuthDecision> Registry::continuous_auth(const std::vector<eps::EpsTensor>& stream,
                                                    std::uint16_t session_id, std::size_t window,
                                                    std::optional<double> tau) const {
    if (window == 0) throw std::invalid_argument("window must be >= 1");
    const auto* tpl = find(session_id);
    if (!tpl) throw std::invalid_argument("session identity not enrolled");
    const double threshold = tau.value_or(tpl->tau);

    std::vector<AuthDecision> out;
    out.reserve(stream.size());
    std::vector<double> scores;
    scores.reserve(stream.size());
    for (const auto& t : stream) {
        const double s = cosine(eps::flatten(t), tpl->centroid_eps);
        scores.push_back(s);
        const std::size_t n = std::min(window, scores.size());
        double mean = 0.0;
        for (std::size_t i = scores.size() - n; i < scores.size(); ++i) mean += scores[i];
        mean /= static_cast<double>(n);

        AuthDecision d;
        d.claimed_id = session_id;
        d.matched_id = session_id;
        d.score = mean;
        d.threshold_used = threshold;
        d.verdict = mean < threshold ? Verdict::alert : Verdict::accepted;
        if (d.verdict == Verdict::alert)
            log_.append("auth-alert", session_id, tensor_hash(t), "sliding=" + std::to_string(mean));
        out.push_back(d);
    }
    return out;
}

std::vector<RocRow> threshold_sweep(const Registry& reg, const std::vector<eps::EpsTensor>& genuine,
                                    const std::vector<eps::EpsTensor>& rogue) {
    auto max_score = [&](const eps::EpsTensor& t) {
        const auto v = eps::flatten(t);
        double best = -1.0;
        for (const auto& tpl : reg.templates()) best = std::max(best, cosine(v, tpl.centroid_eps));
        return best;
    };
    std::vector<double> gs, rs;
    for (const auto& t : genuine) gs.push_back(max_score(t));
    for (const auto& t : rogue) rs.push_back(max_score(t));

    std::vector<RocRow> roc;
    for (int i = 0; i <= 100; ++i) {
        RocRow row;
        row.tau = 0.5 + 0.005 * i;
        long ga = 0, ra = 0;
        for (double s : gs) ga += s >= row.tau;
        for (double s : rs) ra += s >= row.tau;
        row.genuine_accept = gs.empty() ? 0.0 : static_cast<double>(ga) / gs.size();
        row.rogue_accept = rs.empty() ? 0.0 : static_cast<double>(ra) / rs.size();
        roc.push_back(row);
    }
    return roc;
}

void write_roc(const std::vector<RocRow>& roc, const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open " + path);
    f << "tau\tgenuine_accept\trogue_accept\n";
    char buf[96];
    for (const auto& r : roc) {
        std::snprintf(buf, sizeof buf, "%.3f\t%.17g\t%.17g\n", r.tau, r.genuine_accept,
                      r.rogue_accept);
        f << buf;
    }
}

// ---- persistence ----

namespace {

constexpr char kRegMagic[4] = {'E', 'P', 'S', 'R'};

void put_u32(std::ofstream& f, std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    f.write(b, 4);
}

void put_u64(std::ofstream& f, std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    f.write(b, 8);
}

std::uint32_t get_u32(std::ifstream& f) {
    unsigned char b[4];
    f.read(reinterpret_cast<char*>(b), 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

std::uint64_t get_u64(std::ifstream& f) {
    unsigned char b[8];
    f.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

} // namespace

void Registry::save(const std::string& path) const {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw std::runtime_error("cannot open " + tmp);
        f.write(kRegMagic, 4);
        put_u32(f, 1);
        put_u32(f, min_enroll_frames);
        put_u32(f, static_cast<std::uint32_t>(templates_.size()));
        for (const auto& t : templates_) {
            put_u32(f, t.device_id);
            put_u32(f, t.n_enroll_frames);
            put_u64(f, std::bit_cast<std::uint64_t>(static_cast<std::int64_t>(t.enrolled_at)));
            put_u64(f, std::bit_cast<std::uint64_t>(t.dispersion));
            put_u64(f, std::bit_cast<std::uint64_t>(t.tau));
            put_u32(f, static_cast<std::uint32_t>(t.centroid_eps.size()));
            for (double v : t.centroid_eps) put_u64(f, std::bit_cast<std::uint64_t>(v));
        }
        if (!f) throw std::runtime_error("write failed: " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw std::runtime_error("atomic rename to " + path + " failed");
}

Registry Registry::load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, kRegMagic, 4) != 0)
        throw std::runtime_error("bad registry magic in " + path);
    if (get_u32(f) != 1) throw std::runtime_error("unsupported registry version");
    Registry reg;
    reg.min_enroll_frames = get_u32(f);
    const std::uint32_t n = get_u32(f);
    for (std::uint32_t i = 0; i < n; ++i) {
        FingerprintTemplate t;
        t.device_id = static_cast<std::uint16_t>(get_u32(f));
        t.n_enroll_frames = get_u32(f);
        t.enrolled_at = std::bit_cast<std::int64_t>(get_u64(f));
        t.dispersion = std::bit_cast<double>(get_u64(f));
        t.tau = std::bit_cast<double>(get_u64(f));
        const std::uint32_t dim = get_u32(f);
        t.centroid_eps.resize(dim);
        for (auto& v : t.centroid_eps) v = std::bit_cast<double>(get_u64(f));
        reg.templates_.push_back(std::move(t));
    }
    if (!f) throw std::runtime_error("truncated registry: " + path);
    return reg;
}

} // namespace epsfp::zt
