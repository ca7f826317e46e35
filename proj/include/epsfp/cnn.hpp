#pragma once

#include "epsfp/eps.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace epsfp::cnn {

struct ConvBlockSpec {
    int in_ch = 1;
    int out_ch = 1;
    int kh = 1;
    int kw = 5;   // odd, same-padded on width
};

// six conv blocks {conv2d, batch_norm, leaky_relu, max_pool 1x2}, flatten,
// three fully-connected layers with leaky_relu between, softmax
struct CnnArchitecture {
    int input_h = 2;
    int input_w = 4096;
    std::vector<ConvBlockSpec> blocks;
    std::vector<int> fc_hidden;   // widths of the two hidden FC layers
    int n_classes = 15;
    double leaky_slope = 0.01;
    double bn_eps = 1e-5;
    double bn_momentum = 0.1;

    // 1->8->16->32->64->64->128, block-1 kernel 2x7, then 1x5; width 4096->64
    static CnnArchitecture eps_default(int n_classes);
    // same block structure at width 64 for the finite-difference check
    static CnnArchitecture miniature(int n_classes = 2);

    int pooled_width() const;    // input_w / 2^blocks
    int flatten_size() const;
    std::size_t parameter_count() const;
};

struct ConvBlockParams {
    std::vector<double> w, b;           // conv weights [out][in][kh][kw], bias
    std::vector<double> gamma, beta;    // batch-norm affine
    std::vector<double> run_mean, run_var;
};

struct FcParams {
    std::vector<double> w, b;
};

struct ModelParams {
    CnnArchitecture arch;
    std::vector<ConvBlockParams> blocks;
    std::vector<FcParams> fcs;

    static ModelParams init(const CnnArchitecture& arch, std::uint64_t seed);
    void check_finite() const;   // throws with the offending layer name
};

// gradients in the same layout
struct Gradients {
    std::vector<ConvBlockParams> blocks;
    std::vector<FcParams> fcs;
    static Gradients zeros_like(const ModelParams& p);
};

struct BlockCache {
    std::vector<double> xhat;        // normalized pre-activations
    std::vector<double> bn_out;      // pre-activation (gamma xhat + beta)
    std::vector<std::uint8_t> pool_argmax;
    std::vector<double> pool_out;
    std::vector<double> batch_mean, batch_var;
};

struct ForwardCache {
    std::vector<double> input;       // [B][1][h][w]
    std::vector<BlockCache> blocks;
    std::vector<std::vector<double>> fc_in;    // input to each FC layer
    std::vector<std::vector<double>> fc_pre;   // pre-activations
    std::vector<double> logits;
    std::vector<double> probs;       // [B][n_classes]
    int batch = 0;
};

// batched forward; train_mode selects batch statistics and updates running
// stats in params. Returns probabilities [B][n_classes].
std::vector<double> forward_batch(ModelParams& params, const double* x, int batch,
                                  bool train_mode, ForwardCache* cache = nullptr);

// eval-mode single input (2 x input_w), probabilities summing to 1
std::vector<double> forward(const ModelParams& params, const std::vector<double>& input);

// mean cross-entropy over the batch plus full parameter gradients; the
// forward pass is taken from `cache` as produced by forward_batch(train)
double backward(const ModelParams& params, const ForwardCache& cache, const int* labels,
                Gradients& grads);

struct TrainConfig {
    double learning_rate = 1e-3;
    int batch_size = 32;
    int epochs = 30;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 7;
    int early_stop_patience = 3;    // epochs without train-loss improvement
    double early_stop_min_delta = 1e-4;
    double early_stop_loss = 1e-3;  // converged-loss floor; 0 disables
};

struct TrainResult {
    ModelParams params;
    std::vector<double> loss_curve;   // per-epoch mean cross-entropy
};

// X: row-major [n][2 * input_w]; labels in [0, n_classes)
TrainResult train(const CnnArchitecture& arch, const std::vector<double>& X,
                  const std::vector<int>& labels, const TrainConfig& cfg);

struct Prediction {
    std::uint16_t device_id = 0;
    double confidence = 0.0;
};

Prediction predict(const ModelParams& params, const eps::EpsTensor& t);
Prediction predict_vec(const ModelParams& params, const std::vector<double>& input);

// ---- nearest-centroid baseline ----

struct CentroidModel {
    std::vector<std::vector<double>> centroids;   // per class, unnormalized mean
};

CentroidModel nearest_centroid_fit(const std::vector<std::vector<double>>& vecs,
                                   const std::vector<int>& labels, int n_classes);
Prediction nearest_centroid_predict(const CentroidModel& m, const std::vector<double>& v);

// versioned f64 little-endian checkpoint; loader validates shapes
void save_checkpoint(const ModelParams& p, const std::string& path);
ModelParams load_checkpoint(const std::string& path);

} // namespace epsfp::cnn
