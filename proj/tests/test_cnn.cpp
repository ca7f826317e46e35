#include "doctest.h"
#include "epsfp/cnn.hpp"
#include "epsfp/rng.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

using namespace epsfp;
using namespace epsfp::cnn;

namespace {

std::vector<double> random_input(const CnnArchitecture& a, int batch, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> x(static_cast<std::size_t>(batch) * a.input_h * a.input_w);
    for (auto& v : x) v = rng.uniform(-1.0, 1.0);
    return x;
}

// loss as a pure function of params, for central finite differences
double loss_of(ModelParams params, const std::vector<double>& x, const std::vector<int>& y) {
    ForwardCache cache;
    forward_batch(params, x.data(), static_cast<int>(y.size()), true, &cache);
    double loss = 0.0;
    for (std::size_t b = 0; b < y.size(); ++b)
        loss -= std::log(cache.probs[b * params.arch.n_classes + y[b]]);
    return loss / static_cast<double>(y.size());
}

double block_rel_err(const std::vector<double>& analytic, const std::vector<double>& fd) {
    double num = 0.0, da = 0.0, df = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        num += (analytic[i] - fd[i]) * (analytic[i] - fd[i]);
        da += analytic[i] * analytic[i];
        df += fd[i] * fd[i];
    }
    return std::sqrt(num) / std::max({std::sqrt(da), std::sqrt(df), 1e-12});
}

} // namespace

TEST_CASE("architecture structure") {
    auto a = CnnArchitecture::eps_default(15);
    CHECK(a.blocks.size() == 6);
    CHECK(a.fc_hidden.size() == 2);   // plus the class layer = 3 FC layers
    CHECK(a.pooled_width() == 64);
    CHECK(a.flatten_size() == 8192);
    // published parameter-count formula: conv + bn + fc
    CHECK(a.parameter_count() ==
          (8 * 1 * 2 * 7 + 8) + (16 * 8 * 5 + 16) + (32 * 16 * 5 + 32) + (64 * 32 * 5 + 64) +
              (64 * 64 * 5 + 64) + (128 * 64 * 5 + 128) + 2 * (8 + 16 + 32 + 64 + 64 + 128) +
              (8192 * 512 + 512) + (512 * 128 + 128) + (128 * 15 + 15));
}

TEST_CASE("forward yields a probability simplex; eval is deterministic") {
    auto a = CnnArchitecture::miniature(5);
    auto p = ModelParams::init(a, 3);
    auto x = random_input(a, 1, 4);
    std::vector<double> in(x.begin(), x.end());

    auto probs = forward(p, in);
    REQUIRE(probs.size() == 5);
    double sum = std::accumulate(probs.begin(), probs.end(), 0.0);
    CHECK(std::abs(sum - 1.0) <= 1e-9);
    for (double v : probs) CHECK(v >= 0.0);

    auto probs2 = forward(p, in);
    for (std::size_t i = 0; i < probs.size(); ++i) CHECK(probs[i] == probs2[i]);
}

TEST_CASE("fresh params give near-uniform probabilities on a small input") {
    auto a = CnnArchitecture::eps_default(15);
    auto p = ModelParams::init(a, 1);
    // an EPS-like input: nonnegative, rows summing to 1 over 4096 bins
    Rng rng(9);
    std::vector<double> in(static_cast<std::size_t>(2) * 4096);
    for (auto& v : in) v = rng.uniform(0.0, 1.0);
    for (int r = 0; r < 2; ++r) {
        double s = 0.0;
        for (int k = 0; k < 4096; ++k) s += in[r * 4096 + k];
        for (int k = 0; k < 4096; ++k) in[r * 4096 + k] /= s;
    }
    auto probs = forward(p, in);
    const auto [mn, mx] = std::minmax_element(probs.begin(), probs.end());
    CHECK(*mx - *mn <= 0.2);
}

TEST_CASE("adding a constant to all logits leaves softmax unchanged") {
    // checked at the softmax level through two inputs engineered to have
    // shifted logits is brittle; assert the algebraic property directly
    auto a = CnnArchitecture::miniature(4);
    auto p = ModelParams::init(a, 5);
    auto x = random_input(a, 1, 6);
    ForwardCache cache;
    ModelParams pc = p;
    auto probs = forward_batch(pc, x.data(), 1, false, &cache);
    // recompute softmax from logits + 42
    std::vector<double> shifted(cache.logits);
    for (auto& v : shifted) v += 42.0;
    double mx = *std::max_element(shifted.begin(), shifted.end());
    double sum = 0.0;
    for (double v : shifted) sum += std::exp(v - mx);
    for (std::size_t k = 0; k < probs.size(); ++k)
        CHECK(std::abs(std::exp(shifted[k] - mx) / sum - probs[k]) <= 1e-9);
}

TEST_CASE("batch-norm train statistics are exact per channel") {
    auto a = CnnArchitecture::miniature(3);
    auto p = ModelParams::init(a, 11);
    const int B = 8;
    auto x = random_input(a, B, 12);
    ForwardCache cache;
    forward_batch(p, x.data(), B, true, &cache);

    for (std::size_t bi = 0; bi < a.blocks.size(); ++bi) {
        const int C = a.blocks[bi].out_ch;
        const int plane = static_cast<int>(cache.blocks[bi].xhat.size()) / (B * C);
        for (int c = 0; c < C; ++c) {
            double mean = 0.0, var = 0.0;
            for (int b = 0; b < B; ++b) {
                const double* h =
                    cache.blocks[bi].xhat.data() + (static_cast<std::size_t>(b) * C + c) * plane;
                for (int i = 0; i < plane; ++i) mean += h[i];
            }
            mean /= static_cast<double>(B) * plane;
            for (int b = 0; b < B; ++b) {
                const double* h =
                    cache.blocks[bi].xhat.data() + (static_cast<std::size_t>(b) * C + c) * plane;
                for (int i = 0; i < plane; ++i) var += (h[i] - mean) * (h[i] - mean);
            }
            var /= static_cast<double>(B) * plane;
            CHECK(std::abs(mean) <= 1e-6);
            CHECK(std::abs(var - 1.0) <= 1e-3);
        }
    }
}

TEST_CASE("analytic gradients match central finite differences per block") {
    auto a = CnnArchitecture::miniature(2);
    auto p = ModelParams::init(a, 21);
    const int B = 4;
    auto x = random_input(a, B, 22);
    std::vector<int> y = {0, 1, 1, 0};

    ForwardCache cache;
    ModelParams ptrain = p;
    forward_batch(ptrain, x.data(), B, true, &cache);
    Gradients g = Gradients::zeros_like(p);
    (void)backward(p, cache, y.data(), g);

    // h = 1e-4 primary step; entries that disagree get re-estimated at
    // h = 1e-6: with leaky/maxpool kinks, a large step can straddle an
    // activation switch where the difference quotient stops being a
    // derivative estimate. Central differences in f64 at 1e-6 still carry
    // ~1e-10 rounding error, far below the 1e-4 gate.
    auto fd_block_refined = [&](auto get_param, const std::vector<double>& analytic) {
        std::vector<double>& w = get_param(p);
        std::vector<double> fd(w.size());
        for (std::size_t i = 0; i < w.size(); ++i) {
            for (double h : {1e-4, 1e-6}) {
                ModelParams pp = p, pm = p;
                get_param(pp)[i] += h;
                get_param(pm)[i] -= h;
                fd[i] = (loss_of(pp, x, y) - loss_of(pm, x, y)) / (2.0 * h);
                const double scale = std::max({std::abs(fd[i]), std::abs(analytic[i]), 1e-8});
                if (std::abs(fd[i] - analytic[i]) / scale <= 1e-4) break;
            }
        }
        return fd;
    };

    for (std::size_t bi = 0; bi < 6; ++bi) {
        auto fw = fd_block_refined(
            [bi](ModelParams& m) -> std::vector<double>& { return m.blocks[bi].w; },
            g.blocks[bi].w);
        CHECK(block_rel_err(g.blocks[bi].w, fw) <= 1e-4);
        auto fb = fd_block_refined(
            [bi](ModelParams& m) -> std::vector<double>& { return m.blocks[bi].b; },
            g.blocks[bi].b);
        // conv bias gradients vanish identically under batch norm (the mean
        // shift is removed); compare absolutely
        double mx = 0.0;
        for (std::size_t i = 0; i < fb.size(); ++i)
            mx = std::max(mx, std::abs(fb[i] - g.blocks[bi].b[i]));
        CHECK(mx <= 1e-6);
        auto fg = fd_block_refined(
            [bi](ModelParams& m) -> std::vector<double>& { return m.blocks[bi].gamma; },
            g.blocks[bi].gamma);
        CHECK(block_rel_err(g.blocks[bi].gamma, fg) <= 1e-4);
        auto fbe = fd_block_refined(
            [bi](ModelParams& m) -> std::vector<double>& { return m.blocks[bi].beta; },
            g.blocks[bi].beta);
        CHECK(block_rel_err(g.blocks[bi].beta, fbe) <= 1e-4);
    }
    for (std::size_t fi = 0; fi < 3; ++fi) {
        auto fw = fd_block_refined(
            [fi](ModelParams& m) -> std::vector<double>& { return m.fcs[fi].w; }, g.fcs[fi].w);
        CHECK(block_rel_err(g.fcs[fi].w, fw) <= 1e-4);
        auto fb = fd_block_refined(
            [fi](ModelParams& m) -> std::vector<double>& { return m.fcs[fi].b; }, g.fcs[fi].b);
        CHECK(block_rel_err(g.fcs[fi].b, fb) <= 1e-4);
    }
}

TEST_CASE("conv bias is a no-op under batch norm") {
    // the BN mean subtraction makes the loss exactly invariant to conv bias,
    // so its gradient must be ~0; this pins the behavior explicitly
    auto a = CnnArchitecture::miniature(2);
    auto p = ModelParams::init(a, 31);
    auto x = random_input(a, 2, 32);
    std::vector<int> y = {0, 1};
    ModelParams shifted = p;
    for (auto& b : shifted.blocks[2].b) b += 0.37;
    CHECK(std::abs(loss_of(p, x, y) - loss_of(shifted, x, y)) <= 1e-12);
}

TEST_CASE("single-sample overfit reaches 100% train accuracy") {
    auto a = CnnArchitecture::miniature(2);
    Rng rng(41);
    std::vector<double> X(2 * static_cast<std::size_t>(a.input_h) * a.input_w);
    for (auto& v : X) v = rng.uniform(-1.0, 1.0);
    std::vector<int> y = {0, 1};
    TrainConfig cfg;
    cfg.epochs = 200;
    cfg.batch_size = 2;
    cfg.seed = 5;
    cfg.early_stop_patience = 1000;
    auto res = train(a, X, y, cfg);
    const std::size_t D = static_cast<std::size_t>(a.input_h) * a.input_w;
    for (int i = 0; i < 2; ++i) {
        std::vector<double> in(X.begin() + i * D, X.begin() + (i + 1) * D);
        CHECK(predict_vec(res.params, in).device_id == y[i]);
    }
}

TEST_CASE("zero learning rate leaves parameters at their initialization") {
    auto a = CnnArchitecture::miniature(2);
    Rng rng(51);
    std::vector<double> X(4 * static_cast<std::size_t>(a.input_h) * a.input_w);
    for (auto& v : X) v = rng.uniform(-1.0, 1.0);
    std::vector<int> y = {0, 1, 0, 1};
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.learning_rate = 0.0;
    cfg.seed = 6;
    auto res = train(a, X, y, cfg);
    auto fresh = ModelParams::init(a, 6);
    for (std::size_t i = 0; i < fresh.fcs.size(); ++i)
        CHECK(res.params.fcs[i].w == fresh.fcs[i].w);
    for (std::size_t i = 0; i < fresh.blocks.size(); ++i)
        CHECK(res.params.blocks[i].w == fresh.blocks[i].w);
    CHECK_THROWS_AS((void)train(a, X, y, [] {
                        TrainConfig c;
                        c.learning_rate = -1.0;
                        return c;
                    }()),
                    std::invalid_argument);
}

TEST_CASE("training is bit-deterministic given the seed") {
    auto a = CnnArchitecture::miniature(2);
    Rng rng(61);
    std::vector<double> X(8 * static_cast<std::size_t>(a.input_h) * a.input_w);
    for (auto& v : X) v = rng.uniform(-1.0, 1.0);
    std::vector<int> y = {0, 1, 0, 1, 0, 1, 0, 1};
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 4;
    cfg.seed = 77;
    auto r1 = train(a, X, y, cfg);
    auto r2 = train(a, X, y, cfg);
    CHECK(r1.loss_curve == r2.loss_curve);
    for (std::size_t i = 0; i < r1.params.fcs.size(); ++i)
        CHECK(r1.params.fcs[i].w == r2.params.fcs[i].w);
    for (std::size_t i = 0; i < r1.params.blocks.size(); ++i) {
        CHECK(r1.params.blocks[i].w == r2.params.blocks[i].w);
        CHECK(r1.params.blocks[i].run_mean == r2.params.blocks[i].run_mean);
    }
}

TEST_CASE("empty dataset and bad labels rejected") {
    auto a = CnnArchitecture::miniature(2);
    CHECK_THROWS_AS((void)train(a, {}, {}, TrainConfig{}), std::invalid_argument);
}

TEST_CASE("predict argmax and tie-breaking") {
    // argmax of [0.1, 0.7, 0.2] -> class 1 with confidence 0.7; a tie goes to
    // the lowest index. Checked on the shared argmax helper via a crafted
    // centroid model.
    CentroidModel m;
    m.centroids = {{1.0, 0.0}, {1.0, 0.0}, {0.0, 1.0}};
    auto p = nearest_centroid_predict(m, {2.0, 0.0});
    CHECK(p.device_id == 0);   // exact tie between classes 0 and 1
    CHECK(p.confidence == doctest::Approx(1.0));
}

TEST_CASE("nearest centroid basics") {
    std::vector<std::vector<double>> vecs = {{1, 0, 0}, {0.9, 0.1, 0}, {0, 0, 1}, {0, 0.1, 0.9}};
    std::vector<int> labels = {0, 0, 1, 1};
    auto m = nearest_centroid_fit(vecs, labels, 2);
    CHECK(nearest_centroid_predict(m, {1, 0, 0}).device_id == 0);
    CHECK(nearest_centroid_predict(m, {0, 0, 1}).device_id == 1);
    // training vector equal to its centroid scores similarity 1
    auto c0 = m.centroids[0];
    CHECK(nearest_centroid_predict(m, c0).confidence == doctest::Approx(1.0).epsilon(1e-12));
    CHECK_THROWS_AS((void)nearest_centroid_fit(vecs, {0, 0, 0, 0}, 2), std::invalid_argument);
    // single class is always predicted
    auto single = nearest_centroid_fit({{1, 2}, {2, 1}}, {0, 0}, 1);
    CHECK(nearest_centroid_predict(single, {5, 5}).device_id == 0);
}

TEST_CASE("checkpoint roundtrip is bit-identical") {
    auto a = CnnArchitecture::miniature(3);
    auto p = ModelParams::init(a, 71);
    save_checkpoint(p, "ckpt_test.bin");
    auto q = load_checkpoint("ckpt_test.bin");
    CHECK(q.arch.n_classes == 3);
    for (std::size_t i = 0; i < p.blocks.size(); ++i) {
        CHECK(p.blocks[i].w == q.blocks[i].w);
        CHECK(p.blocks[i].run_var == q.blocks[i].run_var);
    }
    for (std::size_t i = 0; i < p.fcs.size(); ++i) CHECK(p.fcs[i].w == q.fcs[i].w);
    save_checkpoint(q, "ckpt_test2.bin");
    std::ifstream f1("ckpt_test.bin", std::ios::binary), f2("ckpt_test2.bin", std::ios::binary);
    std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(s1 == s2);

    // corrupting the architecture header is rejected (block-0 channel count)
    s1[48] ^= 0x04;
    std::ofstream("ckpt_bad.bin", std::ios::binary) << s1;
    CHECK_THROWS_AS((void)load_checkpoint("ckpt_bad.bin"), std::runtime_error);
    std::remove("ckpt_test.bin");
    std::remove("ckpt_test2.bin");
    std::remove("ckpt_bad.bin");
}
