#include "epsfp/eval.hpp"
#include "epsfp/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

namespace epsfp::eval {

std::string model_kind_name(ModelKind k) {
    switch (k) {
        case ModelKind::eps_cnn: return "eps_cnn";
        case ModelKind::iq_cnn: return "iq_cnn";
        case ModelKind::nearest_centroid: return "nearest_centroid";
    }
    return "?";
}

ModelKind model_kind_from_name(const std::string& s) {
    if (s == "eps_cnn") return ModelKind::eps_cnn;
    if (s == "iq_cnn") return ModelKind::iq_cnn;
    if (s == "nearest_centroid") return ModelKind::nearest_centroid;
    throw std::invalid_argument("unknown model kind: " + s);
}

FoldSplit kfold_split(const std::vector<int>& labels, int k, std::uint64_t seed) {
    if (k < 1) throw std::invalid_argument("k must be >= 1");
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
    for (const auto& [cls, idxs] : by_class)
        if (static_cast<int>(idxs.size()) < k)
            throw std::invalid_argument("device class " + std::to_string(cls) + " has only " +
                                        std::to_string(idxs.size()) + " records for " +
                                        std::to_string(k) + "-fold split");
    FoldSplit split;
    split.folds.assign(k, {});
    for (auto& [cls, idxs] : by_class) {
        Rng rng(mix_seed(seed, 0xf01d ^ static_cast<std::uint64_t>(cls)));
        rng.shuffle(idxs);
        for (std::size_t j = 0; j < idxs.size(); ++j)
            split.folds[j % k].push_back(idxs[j]);
    }
    for (auto& f : split.folds) std::sort(f.begin(), f.end());
    return split;
}

FeatureSet make_features(const io::Dataset& ds, ModelKind kind, const std::string& domain_name,
                         std::size_t iq_window) {
    FeatureSet fs;
    fs.domain_name = domain_name;
    std::set<std::uint16_t> ids;
    for (const auto& r : ds.records) ids.insert(r.device_id);
    fs.class_ids.assign(ids.begin(), ids.end());
    std::map<std::uint16_t, int> to_class;
    for (std::size_t c = 0; c < fs.class_ids.size(); ++c) to_class[fs.class_ids[c]] = static_cast<int>(c);

    const bool want_iq = kind == ModelKind::iq_cnn;
    if (want_iq && ds.header.payload_kind != io::PayloadKind::iq)
        throw std::invalid_argument("iq_cnn needs an iq dataset");
    if (!want_iq && ds.header.payload_kind != io::PayloadKind::eps)
        throw std::invalid_argument(model_kind_name(kind) + " needs an eps dataset");

    fs.x.reserve(ds.records.size());
    fs.y.reserve(ds.records.size());
    for (const auto& r : ds.records) {
        if (want_iq) {
            auto frame = io::record_to_frame(ds.header, r);
            auto t = eps::raw_iq_representation(frame, iq_window);
            std::vector<double> v;
            v.reserve(2 * iq_window);
            v.insert(v.end(), t.i_row.begin(), t.i_row.end());
            v.insert(v.end(), t.q_row.begin(), t.q_row.end());
            fs.x.push_back(std::move(v));
            fs.input_w = static_cast<int>(iq_window);
        } else {
            std::vector<double> v(r.payload.begin(), r.payload.end());
            fs.x.push_back(std::move(v));
            fs.input_w = static_cast<int>(ds.header.frame_len);
        }
        fs.y.push_back(to_class.at(r.device_id));
    }
    return fs;
}

namespace {

TrainedModel fit_model(const FeatureSet& data, const std::vector<std::size_t>& train_idx,
                       ModelKind kind, const EvalConfig& cfg, std::uint64_t model_seed) {
    TrainedModel fit;
    fit.kind = kind;
    fit.class_ids = data.class_ids;
    fit.train_domain = data.domain_name;
    const int n_classes = static_cast<int>(data.class_ids.size());
    if (kind == ModelKind::nearest_centroid) {
        std::vector<std::vector<double>> xs;
        std::vector<int> ys;
        for (auto i : train_idx) {
            xs.push_back(data.x[i]);
            ys.push_back(data.y[i]);
        }
        fit.centroid = cnn::nearest_centroid_fit(xs, ys, n_classes);
        return fit;
    }
    fit.is_cnn = true;
    auto arch = cnn::CnnArchitecture::eps_default(n_classes);
    arch.input_w = data.input_w;
    const std::size_t D = static_cast<std::size_t>(arch.input_h) * arch.input_w;
    std::vector<double> X;
    X.reserve(train_idx.size() * D);
    std::vector<int> Y;
    for (auto i : train_idx) {
        X.insert(X.end(), data.x[i].begin(), data.x[i].end());
        Y.push_back(data.y[i]);
    }
    cnn::TrainConfig tc = cfg.train;
    tc.seed = model_seed;
    auto res = cnn::train(arch, X, Y, tc);
    fit.cnn_params = std::move(res.params);
    fit.loss_curve = std::move(res.loss_curve);
    return fit;
}

int predict_one(const TrainedModel& fit, const std::vector<double>& x) {
    if (fit.is_cnn) return cnn::predict_vec(fit.cnn_params, x).device_id;
    return cnn::nearest_centroid_predict(fit.centroid, x).device_id;
}

void score(const TrainedModel& fit, const FeatureSet& data,
           const std::vector<std::size_t>& test_idx, EvalReport& report, double& accuracy) {
    long correct = 0;
    for (auto i : test_idx) {
        const int pred = predict_one(fit, data.x[i]);
        report.confusion[data.y[i]][pred] += 1;
        correct += pred == data.y[i];
    }
    accuracy = static_cast<double>(correct) / static_cast<double>(test_idx.size());
}

} // namespace

TrainedModel fit_full(const FeatureSet& data, ModelKind kind, const EvalConfig& cfg,
                      std::uint64_t model_seed) {
    std::vector<std::size_t> all(data.x.size());
    std::iota(all.begin(), all.end(), 0);
    return fit_model(data, all, kind, cfg, model_seed);
}

EvalReport score_model(const TrainedModel& model, const FeatureSet& test) {
    if (model.class_ids != test.class_ids)
        throw std::invalid_argument("device sets of train and test domains differ");
    EvalReport report;
    report.train_domain = model.train_domain;
    report.test_domain = test.domain_name;
    report.model = model_kind_name(model.kind);
    report.class_ids = model.class_ids;
    const int n_classes = static_cast<int>(model.class_ids.size());
    report.confusion.assign(n_classes, std::vector<long>(n_classes, 0));
    std::vector<std::size_t> all(test.x.size());
    std::iota(all.begin(), all.end(), 0);
    double acc = 0.0;
    score(model, test, all, report, acc);
    report.fold_accuracies.push_back(acc);
    report.mean_accuracy = acc;
    return report;
}

EvalReport evaluate_same_domain(const FeatureSet& data, ModelKind kind, const EvalConfig& cfg) {
    if (data.x.empty()) throw std::invalid_argument("empty dataset");
    EvalReport report;
    report.train_domain = data.domain_name;
    report.test_domain = data.domain_name;
    report.model = model_kind_name(kind);
    report.class_ids = data.class_ids;
    const int n_classes = static_cast<int>(data.class_ids.size());
    report.confusion.assign(n_classes, std::vector<long>(n_classes, 0));

    auto split = kfold_split(data.y, cfg.folds, cfg.seed);
    for (int f = 0; f < cfg.folds; ++f) {
        std::vector<std::size_t> train_idx;
        for (int g = 0; g < cfg.folds; ++g)
            if (g != f || cfg.folds == 1)
                train_idx.insert(train_idx.end(), split.folds[g].begin(), split.folds[g].end());
        const auto& test_idx = split.folds[f];

        // leakage guard: checked at runtime, not by convention
        if (cfg.folds > 1) {
            std::set<std::size_t> tr(train_idx.begin(), train_idx.end());
            for (auto i : test_idx)
                if (tr.count(i)) throw std::logic_error("train/test overlap in fold split");
        }

        TrainedModel fit = fit_model(data, train_idx, kind, cfg, mix_seed(cfg.seed, 0xcf + f));
        double acc = 0.0;
        score(fit, data, test_idx, report, acc);
        report.fold_accuracies.push_back(acc);
    }
    report.mean_accuracy =
        std::accumulate(report.fold_accuracies.begin(), report.fold_accuracies.end(), 0.0) /
        static_cast<double>(report.fold_accuracies.size());
    return report;
}

EvalReport evaluate_cross_domain(const FeatureSet& train_data, const FeatureSet& test_data,
                                 ModelKind kind, const EvalConfig& cfg) {
    if (train_data.class_ids != test_data.class_ids)
        throw std::invalid_argument("device sets of train and test domains differ");
    EvalReport report;
    report.train_domain = train_data.domain_name;
    report.test_domain = test_data.domain_name;
    report.model = model_kind_name(kind);
    report.class_ids = train_data.class_ids;
    const int n_classes = static_cast<int>(train_data.class_ids.size());
    report.confusion.assign(n_classes, std::vector<long>(n_classes, 0));

    std::vector<std::size_t> all_train(train_data.x.size());
    std::iota(all_train.begin(), all_train.end(), 0);
    std::vector<std::size_t> all_test(test_data.x.size());
    std::iota(all_test.begin(), all_test.end(), 0);

    // the paper reports one number per train/test pair; models differ only by
    // seed to expose run-to-run variance (1 for the deterministic baseline)
    const int n_models = kind == ModelKind::nearest_centroid ? 1 : std::max(1, cfg.cross_models);
    for (int m = 0; m < n_models; ++m) {
        TrainedModel fit = fit_model(train_data, all_train, kind, cfg, mix_seed(cfg.seed, 0xcd + m));
        double acc = 0.0;
        score(fit, test_data, all_test, report, acc);
        report.fold_accuracies.push_back(acc);
    }
    report.mean_accuracy =
        std::accumulate(report.fold_accuracies.begin(), report.fold_accuracies.end(), 0.0) /
        static_cast<double>(report.fold_accuracies.size());
    return report;
}

void emit_report(const EvalReport& report, const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open " + path);
    f << "# epsfp evaluation report\n";
    f << "train_domain\ttest_domain\tmodel\tfold\taccuracy\n";
    char buf[64];
    for (std::size_t i = 0; i < report.fold_accuracies.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g", report.fold_accuracies[i]);
        f << report.train_domain << "\t" << report.test_domain << "\t" << report.model << "\t"
          << i << "\t" << buf << "\n";
    }
    std::snprintf(buf, sizeof buf, "%.17g", report.mean_accuracy);
    f << "mean\t" << buf << "\n";
    f << "confusion\t" << report.confusion.size() << "\n";
    f << "# rows: true device, columns: predicted device\n";
    f << "#";
    for (auto id : report.class_ids) f << "\t" << id;
    f << "\n";
    for (const auto& row : report.confusion) {
        for (std::size_t j = 0; j < row.size(); ++j) f << (j ? "\t" : "") << row[j];
        f << "\n";
    }
    if (!f) throw std::runtime_error("write failed: " + path);
}

EvalReport parse_report(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path);
    EvalReport r;
    std::string line;
    std::getline(f, line);   // banner
    std::getline(f, line);   // column header
    while (std::getline(f, line)) {
        if (line.rfind("mean\t", 0) == 0) {
            r.mean_accuracy = std::stod(line.substr(5));
            break;
        }
        std::istringstream ss(line);
        std::string fold;
        double acc;
        ss >> r.train_domain >> r.test_domain >> r.model >> fold >> acc;
        r.fold_accuracies.push_back(acc);
    }
    std::getline(f, line);   // confusion <n>
    const std::size_t n = std::stoul(line.substr(line.find('\t') + 1));
    std::getline(f, line);   // comment
    std::getline(f, line);   // class ids
    {
        std::istringstream ss(line);
        std::string hash;
        ss >> hash;
        std::uint16_t id;
        while (ss >> id) r.class_ids.push_back(id);
    }
    r.confusion.assign(n, std::vector<long>(n, 0));
    for (std::size_t i = 0; i < n; ++i) {
        std::getline(f, line);
        std::istringstream ss(line);
        for (std::size_t j = 0; j < n; ++j) ss >> r.confusion[i][j];
    }
    return r;
}

} // namespace epsfp::eval
