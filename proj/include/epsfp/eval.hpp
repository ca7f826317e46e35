#pragma once

#include "epsfp/cnn.hpp"
#include "epsfp/dataset.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace epsfp::eval {

enum class ModelKind { eps_cnn, iq_cnn, nearest_centroid };

std::string model_kind_name(ModelKind k);
ModelKind model_kind_from_name(const std::string& s);

// per-device partition of record indices into k disjoint folds
struct FoldSplit {
    std::vector<std::vector<std::size_t>> folds;
};

FoldSplit kfold_split(const std::vector<int>& labels, int k, std::uint64_t seed);

// features + class labels extracted from a dataset for one model kind
struct FeatureSet {
    std::vector<std::vector<double>> x;
    std::vector<int> y;                     // class indices 0..n_classes-1
    std::vector<std::uint16_t> class_ids;   // class index -> device id
    int input_h = 2;
    int input_w = 4096;
    std::string domain_name;
};

// eps datasets feed eps_cnn / nearest_centroid; iq datasets feed iq_cnn
// (window standardized per rail, offset 0)
FeatureSet make_features(const io::Dataset& ds, ModelKind kind, const std::string& domain_name,
                         std::size_t iq_window = 4096);

struct EvalConfig {
    int folds = 5;
    std::uint64_t seed = 11;
    cnn::TrainConfig train;
    int cross_models = 1;   // fold-wise model seeds for cross-domain CNN runs
};

struct EvalReport {
    std::string train_domain;
    std::string test_domain;
    std::string model;
    std::vector<double> fold_accuracies;
    double mean_accuracy = 0.0;
    std::vector<std::vector<long>> confusion;   // [true][predicted]
    std::vector<std::uint16_t> class_ids;
};

EvalReport evaluate_same_domain(const FeatureSet& data, ModelKind kind, const EvalConfig& cfg);

EvalReport evaluate_cross_domain(const FeatureSet& train_data, const FeatureSet& test_data,
                                 ModelKind kind, const EvalConfig& cfg);

// fit-once / score-many path used for cross-domain matrices: one trained
// model can be scored against several test domains
struct TrainedModel {
    ModelKind kind = ModelKind::nearest_centroid;
    bool is_cnn = false;
    cnn::ModelParams cnn_params;
    cnn::CentroidModel centroid;
    std::vector<std::uint16_t> class_ids;
    std::string train_domain;
    std::vector<double> loss_curve;
};

TrainedModel fit_full(const FeatureSet& data, ModelKind kind, const EvalConfig& cfg,
                      std::uint64_t model_seed);
EvalReport score_model(const TrainedModel& model, const FeatureSet& test);

// structured text table + confusion matrix; re-emission is byte-identical
void emit_report(const EvalReport& report, const std::string& path);
EvalReport parse_report(const std::string& path);

} // namespace epsfp::eval
