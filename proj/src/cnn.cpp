#include "epsfp/cnn.hpp"
#include "epsfp/kernels.hpp"
#include "epsfp/rng.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace epsfp::cnn {

namespace {

using kernels::Conv2dShape;

Conv2dShape block_shape(const CnnArchitecture& arch, std::size_t i) {
    Conv2dShape s;
    const auto& b = arch.blocks[i];
    s.cin = b.in_ch;
    s.cout = b.out_ch;
    s.kh = b.kh;
    s.kw = b.kw;
    s.h = i == 0 ? arch.input_h : 1;
    s.w = arch.input_w >> i;   // width halves per block via the 1x2 pool
    return s;
}

void leaky_forward(const double* x, double* y, std::size_t n, double slope) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i)
        y[i] = x[i] >= 0.0 ? x[i] : slope * x[i];
}

// max-pool 1x2 over width; argmax bit for backward, ties to the left
void pool_forward(const double* x, double* y, std::uint8_t* arg, std::size_t pairs) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(pairs); ++i) {
        const double a = x[2 * i], b = x[2 * i + 1];
        const bool right = b > a;
        y[i] = right ? b : a;
        arg[i] = right ? 1 : 0;
    }
}

void bn_forward(bool train_mode, const double* x, int batch, int channels, int plane,
                const CnnArchitecture& arch, ConvBlockParams& p, BlockCache* cache, double* out) {
    const std::size_t chan_stride = static_cast<std::size_t>(plane);
    const std::size_t batch_stride = static_cast<std::size_t>(channels) * plane;
    const double N = static_cast<double>(batch) * plane;
#pragma omp parallel for schedule(static)
    for (int c = 0; c < channels; ++c) {
        double mean, var;
        if (train_mode) {
            double acc = 0.0;
            for (int b = 0; b < batch; ++b) {
                const double* xc = x + b * batch_stride + c * chan_stride;
                for (int i = 0; i < plane; ++i) acc += xc[i];
            }
            mean = acc / N;
            double vacc = 0.0;
            for (int b = 0; b < batch; ++b) {
                const double* xc = x + b * batch_stride + c * chan_stride;
                for (int i = 0; i < plane; ++i) vacc += (xc[i] - mean) * (xc[i] - mean);
            }
            var = vacc / N;
            p.run_mean[c] = (1.0 - arch.bn_momentum) * p.run_mean[c] + arch.bn_momentum * mean;
            p.run_var[c] = (1.0 - arch.bn_momentum) * p.run_var[c] + arch.bn_momentum * var;
        } else {
            mean = p.run_mean[c];
            var = p.run_var[c];
        }
        const double inv = 1.0 / std::sqrt(var + arch.bn_eps);
        const double g = p.gamma[c], be = p.beta[c];
        for (int b = 0; b < batch; ++b) {
            const double* xc = x + b * batch_stride + c * chan_stride;
            double* oc = out + b * batch_stride + c * chan_stride;
            double* hc = cache ? cache->xhat.data() + b * batch_stride + c * chan_stride : nullptr;
            for (int i = 0; i < plane; ++i) {
                const double xh = (xc[i] - mean) * inv;
                if (hc) hc[i] = xh;
                oc[i] = g * xh + be;
            }
        }
        if (cache) {
            cache->batch_mean[c] = mean;
            cache->batch_var[c] = var;
        }
    }
}

void bn_backward(const double* dy, const BlockCache& cache, const ConvBlockParams& p,
                 const CnnArchitecture& arch, int batch, int channels, int plane, double* dx,
                 double* dgamma, double* dbeta) {
    const std::size_t chan_stride = static_cast<std::size_t>(plane);
    const std::size_t batch_stride = static_cast<std::size_t>(channels) * plane;
    const double N = static_cast<double>(batch) * plane;
#pragma omp parallel for schedule(static)
    for (int c = 0; c < channels; ++c) {
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (int b = 0; b < batch; ++b) {
            const double* dyc = dy + b * batch_stride + c * chan_stride;
            const double* hc = cache.xhat.data() + b * batch_stride + c * chan_stride;
            for (int i = 0; i < plane; ++i) {
                sum_dy += dyc[i];
                sum_dy_xhat += dyc[i] * hc[i];
            }
        }
        dgamma[c] = sum_dy_xhat;
        dbeta[c] = sum_dy;
        const double inv = 1.0 / std::sqrt(cache.batch_var[c] + arch.bn_eps);
        const double g = p.gamma[c];
        const double mean_dy = sum_dy / N, mean_dy_xhat = sum_dy_xhat / N;
        for (int b = 0; b < batch; ++b) {
            const double* dyc = dy + b * batch_stride + c * chan_stride;
            const double* hc = cache.xhat.data() + b * batch_stride + c * chan_stride;
            double* dxc = dx + b * batch_stride + c * chan_stride;
            for (int i = 0; i < plane; ++i)
                dxc[i] = g * inv * (dyc[i] - mean_dy - hc[i] * mean_dy_xhat);
        }
    }
}

void kaiming_uniform(std::vector<double>& w, int fan_in, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (auto& v : w) v = rng.uniform(-bound, bound);
}

} // namespace

CnnArchitecture CnnArchitecture::eps_default(int n_classes) {
    CnnArchitecture a;
    a.input_h = 2;
    a.input_w = 4096;
    a.blocks = {{1, 8, 2, 7},   {8, 16, 1, 5},  {16, 32, 1, 5},
                {32, 64, 1, 5}, {64, 64, 1, 5}, {64, 128, 1, 5}};
    a.fc_hidden = {512, 128};
    a.n_classes = n_classes;
    return a;
}

CnnArchitecture CnnArchitecture::miniature(int n_classes) {
    CnnArchitecture a;
    a.input_h = 2;
    a.input_w = 64;
    a.blocks = {{1, 2, 2, 7}, {2, 4, 1, 5}, {4, 4, 1, 5},
                {4, 8, 1, 5}, {8, 8, 1, 5}, {8, 8, 1, 5}};
    a.fc_hidden = {8, 4};
    a.n_classes = n_classes;
    return a;
}

int CnnArchitecture::pooled_width() const {
    return input_w >> static_cast<int>(blocks.size());
}

int CnnArchitecture::flatten_size() const {
    return blocks.back().out_ch * pooled_width();
}

std::size_t CnnArchitecture::parameter_count() const {
    std::size_t n = 0;
    for (const auto& b : blocks)
        n += static_cast<std::size_t>(b.out_ch) * b.in_ch * b.kh * b.kw + b.out_ch + 2ull * b.out_ch;
    int in = flatten_size();
    for (int w : fc_hidden) {
        n += static_cast<std::size_t>(w) * in + w;
        in = w;
    }
    n += static_cast<std::size_t>(n_classes) * in + n_classes;
    return n;
}

ModelParams ModelParams::init(const CnnArchitecture& arch, std::uint64_t seed) {
    if (arch.blocks.size() != 6 || arch.fc_hidden.size() != 2)
        throw std::invalid_argument("architecture must have 6 conv blocks and 3 FC layers");
    if ((arch.input_w >> arch.blocks.size()) << arch.blocks.size() != arch.input_w)
        throw std::invalid_argument("input width must divide by 2^6");
    ModelParams p;
    p.arch = arch;
    Rng rng(seed);
    for (const auto& bs : arch.blocks) {
        ConvBlockParams bp;
        const int fan_in = bs.in_ch * bs.kh * bs.kw;
        bp.w.resize(static_cast<std::size_t>(bs.out_ch) * bs.in_ch * bs.kh * bs.kw);
        kaiming_uniform(bp.w, fan_in, rng);
        bp.b.resize(bs.out_ch);
        const double bb = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (auto& v : bp.b) v = rng.uniform(-bb, bb);
        bp.gamma.assign(bs.out_ch, 1.0);
        bp.beta.assign(bs.out_ch, 0.0);
        bp.run_mean.assign(bs.out_ch, 0.0);
        bp.run_var.assign(bs.out_ch, 1.0);
        p.blocks.push_back(std::move(bp));
    }
    int in = arch.flatten_size();
    std::vector<int> widths = arch.fc_hidden;
    widths.push_back(arch.n_classes);
    for (int w : widths) {
        FcParams fp;
        fp.w.resize(static_cast<std::size_t>(w) * in);
        kaiming_uniform(fp.w, in, rng);
        fp.b.resize(w);
        const double bb = 1.0 / std::sqrt(static_cast<double>(in));
        for (auto& v : fp.b) v = rng.uniform(-bb, bb);
        p.fcs.push_back(std::move(fp));
        in = w;
    }
    return p;
}

void ModelParams::check_finite() const {
    auto scan = [](const std::vector<double>& v, const std::string& name) {
        for (double x : v)
            if (!std::isfinite(x)) throw std::runtime_error("non-finite parameter in " + name);
    };
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        const std::string n = "conv block " + std::to_string(i + 1);
        scan(blocks[i].w, n);
        scan(blocks[i].b, n);
        scan(blocks[i].gamma, n);
        scan(blocks[i].beta, n);
        scan(blocks[i].run_mean, n);
        scan(blocks[i].run_var, n);
    }
    for (std::size_t i = 0; i < fcs.size(); ++i) {
        const std::string n = "fc layer " + std::to_string(i + 1);
        scan(fcs[i].w, n);
        scan(fcs[i].b, n);
    }
}

Gradients Gradients::zeros_like(const ModelParams& p) {
    Gradients g;
    for (const auto& b : p.blocks) {
        ConvBlockParams z;
        z.w.assign(b.w.size(), 0.0);
        z.b.assign(b.b.size(), 0.0);
        z.gamma.assign(b.gamma.size(), 0.0);
        z.beta.assign(b.beta.size(), 0.0);
        g.blocks.push_back(std::move(z));
    }
    for (const auto& f : p.fcs) {
        FcParams z;
        z.w.assign(f.w.size(), 0.0);
        z.b.assign(f.b.size(), 0.0);
        g.fcs.push_back(std::move(z));
    }
    return g;
}

std::vector<double> forward_batch(ModelParams& params, const double* x, int batch,
                                  bool train_mode, ForwardCache* cache) {
    const auto& arch = params.arch;
    const std::size_t in_len = static_cast<std::size_t>(arch.input_h) * arch.input_w;
    for (std::size_t i = 0; i < in_len * batch; ++i)
        if (!std::isfinite(x[i])) throw std::invalid_argument("non-finite input");

    if (cache) {
        cache->batch = batch;
        cache->input.assign(x, x + in_len * batch);
        cache->blocks.assign(arch.blocks.size(), {});
        cache->fc_in.assign(3, {});
        cache->fc_pre.assign(3, {});
    }

    std::vector<double> cur(x, x + in_len * batch);
    std::vector<double> conv_out, bn_out, act;
    for (std::size_t i = 0; i < arch.blocks.size(); ++i) {
        const auto s = block_shape(arch, i);
        const int plane = s.out_h() * s.w;
        conv_out.resize(static_cast<std::size_t>(batch) * s.cout * plane);
        kernels::conv2d_forward(cur.data(), params.blocks[i].w.data(), params.blocks[i].b.data(),
                                conv_out.data(), batch, s);

        BlockCache local;
        BlockCache* bc = cache ? &cache->blocks[i] : &local;
        bc->xhat.resize(conv_out.size());
        bc->batch_mean.resize(s.cout);
        bc->batch_var.resize(s.cout);
        bn_out.resize(conv_out.size());
        bn_forward(train_mode, conv_out.data(), batch, s.cout, plane, arch, params.blocks[i],
                   cache ? bc : nullptr, bn_out.data());
        if (!cache) {
            bc->xhat.clear();
        } else {
            bc->bn_out = bn_out;
        }

        act.resize(bn_out.size());
        leaky_forward(bn_out.data(), act.data(), act.size(), arch.leaky_slope);

        const std::size_t pairs = act.size() / 2;
        std::vector<double> pooled(pairs);
        std::vector<std::uint8_t> argm(pairs);
        pool_forward(act.data(), pooled.data(), argm.data(), pairs);
        if (cache) {
            bc->pool_argmax = std::move(argm);
            bc->pool_out = pooled;
        }
        cur = std::move(pooled);
    }

    // fully connected head
    int in = arch.flatten_size();
    std::vector<int> widths = arch.fc_hidden;
    widths.push_back(arch.n_classes);
    for (int li = 0; li < 3; ++li) {
        if (cache) cache->fc_in[li] = cur;
        std::vector<double> out(static_cast<std::size_t>(batch) * widths[li]);
        kernels::fc_forward(cur.data(), params.fcs[li].w.data(), params.fcs[li].b.data(),
                            out.data(), batch, in, widths[li]);
        if (cache) cache->fc_pre[li] = out;
        if (li < 2)
            leaky_forward(out.data(), out.data(), out.size(), arch.leaky_slope);
        cur = std::move(out);
        in = widths[li];
    }
    if (cache) cache->logits = cur;

    // softmax (stable)
    const int K = arch.n_classes;
    std::vector<double> probs(static_cast<std::size_t>(batch) * K);
    for (int b = 0; b < batch; ++b) {
        const double* z = cur.data() + static_cast<std::size_t>(b) * K;
        double mx = z[0];
        for (int k = 1; k < K; ++k) mx = std::max(mx, z[k]);
        double sum = 0.0;
        for (int k = 0; k < K; ++k) sum += std::exp(z[k] - mx);
        for (int k = 0; k < K; ++k)
            probs[static_cast<std::size_t>(b) * K + k] = std::exp(z[k] - mx) / sum;
    }
    for (double p : probs)
        if (!std::isfinite(p)) throw std::runtime_error("non-finite activation in softmax");
    if (cache) cache->probs = probs;
    return probs;
}

std::vector<double> forward(const ModelParams& params, const std::vector<double>& input) {
    const auto& arch = params.arch;
    if (input.size() != static_cast<std::size_t>(arch.input_h) * arch.input_w)
        throw std::invalid_argument("input shape mismatch");
    ModelParams copy_free = params;    // eval mode leaves params untouched
    return forward_batch(copy_free, input.data(), 1, false, nullptr);
}

double backward(const ModelParams& params, const ForwardCache& cache, const int* labels,
                Gradients& grads) {
    const auto& arch = params.arch;
    const int B = cache.batch;
    const int K = arch.n_classes;

    double loss = 0.0;
    std::vector<double> dlogits(static_cast<std::size_t>(B) * K);
    for (int b = 0; b < B; ++b) {
        const int y = labels[b];
        if (y < 0 || y >= K) throw std::invalid_argument("label out of range");
        const double p = cache.probs[static_cast<std::size_t>(b) * K + y];
        loss -= std::log(std::max(p, 1e-300));
        for (int k = 0; k < K; ++k) {
            const double pk = cache.probs[static_cast<std::size_t>(b) * K + k];
            dlogits[static_cast<std::size_t>(b) * K + k] = (pk - (k == y ? 1.0 : 0.0)) / B;
        }
    }
    loss /= B;
    if (!std::isfinite(loss)) throw std::runtime_error("NaN loss");

    // FC head backward
    std::vector<int> widths = arch.fc_hidden;
    widths.push_back(arch.n_classes);
    std::vector<double> dcur = std::move(dlogits);
    for (int li = 2; li >= 0; --li) {
        const int in = li == 0 ? arch.flatten_size() : widths[li - 1];
        const int out = widths[li];
        // activation input to this layer: leaky(fc_pre[li-1]) == fc_in[li]
        kernels::fc_grad_params(dcur.data(), cache.fc_in[li].data(), grads.fcs[li].w.data(),
                                grads.fcs[li].b.data(), B, in, out);
        std::vector<double> dx(static_cast<std::size_t>(B) * in);
        kernels::fc_grad_input(dcur.data(), params.fcs[li].w.data(), dx.data(), B, in, out);
        if (li > 0) {
            const auto& pre = cache.fc_pre[li - 1];
#pragma omp parallel for schedule(static)
            for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(dx.size()); ++i)
                dx[i] *= pre[i] >= 0.0 ? 1.0 : arch.leaky_slope;
        }
        dcur = std::move(dx);
    }

    // conv blocks backward
    for (int i = static_cast<int>(arch.blocks.size()) - 1; i >= 0; --i) {
        const auto s = block_shape(arch, i);
        const int plane = s.out_h() * s.w;
        const auto& bc = cache.blocks[i];

        // un-pool: route gradient to the argmax element
        std::vector<double> dact(static_cast<std::size_t>(B) * s.cout * plane, 0.0);
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t j = 0; j < static_cast<std::ptrdiff_t>(dcur.size()); ++j)
            dact[2 * j + bc.pool_argmax[j]] = dcur[j];

        // leaky backward on the stored pre-activations
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t j = 0; j < static_cast<std::ptrdiff_t>(dact.size()); ++j)
            dact[j] *= bc.bn_out[j] >= 0.0 ? 1.0 : arch.leaky_slope;

        std::vector<double> dconv(dact.size());
        bn_backward(dact.data(), bc, params.blocks[i], arch, B, s.cout, plane, dconv.data(),
                    grads.blocks[i].gamma.data(), grads.blocks[i].beta.data());

        const double* block_in = i == 0 ? cache.input.data() : cache.blocks[i - 1].pool_out.data();
        kernels::conv2d_grad_params(dconv.data(), block_in, grads.blocks[i].w.data(),
                                    grads.blocks[i].b.data(), B, s);
        if (i > 0) {
            std::vector<double> dprev(static_cast<std::size_t>(B) * s.cin * s.h * s.w);
            kernels::conv2d_grad_input(dconv.data(), params.blocks[i].w.data(), dprev.data(), B, s);
            dcur = std::move(dprev);
        }
    }
    return loss;
}

namespace {

struct AdamState {
    std::vector<std::vector<double>> m, v;
    long t = 0;
};

void adam_init(AdamState& st, const ModelParams& p) {
    auto add = [&](const std::vector<double>& w) {
        st.m.emplace_back(w.size(), 0.0);
        st.v.emplace_back(w.size(), 0.0);
    };
    for (const auto& b : p.blocks) {
        add(b.w);
        add(b.b);
        add(b.gamma);
        add(b.beta);
    }
    for (const auto& f : p.fcs) {
        add(f.w);
        add(f.b);
    }
}

void adam_step(AdamState& st, ModelParams& p, const Gradients& g, const TrainConfig& cfg) {
    ++st.t;
    const double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(st.t));
    const double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(st.t));
    std::size_t slot = 0;
    auto upd = [&](std::vector<double>& w, const std::vector<double>& grad) {
        auto& m = st.m[slot];
        auto& v = st.v[slot];
        ++slot;
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(w.size()); ++i) {
            m[i] = cfg.adam_beta1 * m[i] + (1.0 - cfg.adam_beta1) * grad[i];
            v[i] = cfg.adam_beta2 * v[i] + (1.0 - cfg.adam_beta2) * grad[i] * grad[i];
            const double mh = m[i] / bc1, vh = v[i] / bc2;
            w[i] -= cfg.learning_rate * mh / (std::sqrt(vh) + cfg.adam_eps);
        }
    };
    for (std::size_t i = 0; i < p.blocks.size(); ++i) {
        upd(p.blocks[i].w, g.blocks[i].w);
        upd(p.blocks[i].b, g.blocks[i].b);
        upd(p.blocks[i].gamma, g.blocks[i].gamma);
        upd(p.blocks[i].beta, g.blocks[i].beta);
    }
    for (std::size_t i = 0; i < p.fcs.size(); ++i) {
        upd(p.fcs[i].w, g.fcs[i].w);
        upd(p.fcs[i].b, g.fcs[i].b);
    }
}

} // namespace

TrainResult train(const CnnArchitecture& arch, const std::vector<double>& X,
                  const std::vector<int>& labels, const TrainConfig& cfg) {
    const std::size_t D = static_cast<std::size_t>(arch.input_h) * arch.input_w;
    if (labels.empty() || X.size() != labels.size() * D)
        throw std::invalid_argument("empty dataset or shape mismatch");
    if (cfg.batch_size < 1 || cfg.learning_rate < 0.0)
        throw std::invalid_argument("bad train config");

    TrainResult res;
    res.params = ModelParams::init(arch, cfg.seed);
    AdamState adam;
    adam_init(adam, res.params);
    Gradients grads = Gradients::zeros_like(res.params);

    const int n = static_cast<int>(labels.size());
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(mix_seed(cfg.seed, 0x73687566));

    std::vector<double> batch_x;
    std::vector<int> batch_y;
    ForwardCache cache;
    double best = std::numeric_limits<double>::infinity();
    int stale = 0;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double epoch_loss = 0.0;
        for (int start = 0; start < n; start += cfg.batch_size) {
            const int bs = std::min(cfg.batch_size, n - start);
            batch_x.resize(static_cast<std::size_t>(bs) * D);
            batch_y.resize(bs);
            for (int j = 0; j < bs; ++j) {
                const int idx = order[start + j];
                std::copy_n(X.data() + static_cast<std::size_t>(idx) * D, D,
                            batch_x.data() + static_cast<std::size_t>(j) * D);
                batch_y[j] = labels[idx];
            }
            forward_batch(res.params, batch_x.data(), bs, true, &cache);
            const double loss = backward(res.params, cache, batch_y.data(), grads);
            adam_step(adam, res.params, grads, cfg);
            epoch_loss += loss * bs;
        }
        epoch_loss /= n;
        res.loss_curve.push_back(epoch_loss);
        res.params.check_finite();
        if (cfg.early_stop_loss > 0.0 && epoch_loss < cfg.early_stop_loss) break;
        if (epoch_loss < best - cfg.early_stop_min_delta) {
            best = epoch_loss;
            stale = 0;
        } else if (++stale >= cfg.early_stop_patience) {
            break;
        }
    }
    return res;
}

Prediction predict_vec(const ModelParams& params, const std::vector<double>& input) {
    auto probs = forward(params, input);
    Prediction p;
    p.device_id = 0;
    p.confidence = probs[0];
    for (std::size_t k = 1; k < probs.size(); ++k)
        if (probs[k] > p.confidence) {   // strict: ties break to the lowest index
            p.confidence = probs[k];
            p.device_id = static_cast<std::uint16_t>(k);
        }
    return p;
}

Prediction predict(const ModelParams& params, const eps::EpsTensor& t) {
    return predict_vec(params, eps::flatten(t));
}

CentroidModel nearest_centroid_fit(const std::vector<std::vector<double>>& vecs,
                                   const std::vector<int>& labels, int n_classes) {
    if (vecs.empty() || vecs.size() != labels.size())
        throw std::invalid_argument("empty or mismatched training set");
    CentroidModel m;
    m.centroids.assign(n_classes, std::vector<double>(vecs[0].size(), 0.0));
    std::vector<int> counts(n_classes, 0);
    for (std::size_t i = 0; i < vecs.size(); ++i) {
        const int y = labels[i];
        if (y < 0 || y >= n_classes) throw std::invalid_argument("label out of range");
        for (std::size_t k = 0; k < vecs[i].size(); ++k) m.centroids[y][k] += vecs[i][k];
        ++counts[y];
    }
    for (int c = 0; c < n_classes; ++c) {
        if (counts[c] == 0)
            throw std::invalid_argument("class " + std::to_string(c) + " has no training samples");
        for (auto& v : m.centroids[c]) v /= counts[c];
    }
    return m;
}

Prediction nearest_centroid_predict(const CentroidModel& m, const std::vector<double>& v) {
    double vnorm = 0.0;
    for (double x : v) vnorm += x * x;
    vnorm = std::sqrt(vnorm);
    if (vnorm == 0.0) throw std::invalid_argument("zero vector");
    Prediction best;
    best.confidence = -2.0;
    for (std::size_t c = 0; c < m.centroids.size(); ++c) {
        double dot = 0.0, cn = 0.0;
        for (std::size_t k = 0; k < v.size(); ++k) {
            dot += v[k] * m.centroids[c][k];
            cn += m.centroids[c][k] * m.centroids[c][k];
        }
        const double cosv = dot / (vnorm * std::sqrt(cn));
        if (cosv > best.confidence) {
            best.confidence = cosv;
            best.device_id = static_cast<std::uint16_t>(c);
        }
    }
    return best;
}

// ---- checkpoint io ----

namespace {

constexpr char kCkptMagic[4] = {'E', 'P', 'S', 'M'};

void put_u32(std::ofstream& f, std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    f.write(b, 4);
}

void put_f64(std::ofstream& f, double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
    f.write(b, 8);
}

std::uint32_t get_u32(std::ifstream& f) {
    unsigned char b[4];
    f.read(reinterpret_cast<char*>(b), 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

double get_f64(std::ifstream& f) {
    unsigned char b[8];
    f.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return std::bit_cast<double>(v);
}

void put_arr(std::ofstream& f, const std::vector<double>& v) {
    put_u32(f, static_cast<std::uint32_t>(v.size()));
    for (double x : v) put_f64(f, x);
}

std::vector<double> get_arr(std::ifstream& f, std::size_t expect) {
    const std::uint32_t n = get_u32(f);
    if (n != expect)
        throw std::runtime_error("checkpoint tensor length " + std::to_string(n) +
                                 " does not match architecture (expected " +
                                 std::to_string(expect) + ")");
    std::vector<double> v(n);
    for (auto& x : v) x = get_f64(f);
    return v;
}

} // namespace

void save_checkpoint(const ModelParams& p, const std::string& path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open " + path);
    f.write(kCkptMagic, 4);
    put_u32(f, 1);   // version
    const auto& a = p.arch;
    put_u32(f, static_cast<std::uint32_t>(a.input_h));
    put_u32(f, static_cast<std::uint32_t>(a.input_w));
    put_u32(f, static_cast<std::uint32_t>(a.n_classes));
    put_f64(f, a.leaky_slope);
    put_f64(f, a.bn_eps);
    put_f64(f, a.bn_momentum);
    put_u32(f, static_cast<std::uint32_t>(a.blocks.size()));
    for (const auto& b : a.blocks) {
        put_u32(f, static_cast<std::uint32_t>(b.in_ch));
        put_u32(f, static_cast<std::uint32_t>(b.out_ch));
        put_u32(f, static_cast<std::uint32_t>(b.kh));
        put_u32(f, static_cast<std::uint32_t>(b.kw));
    }
    put_u32(f, static_cast<std::uint32_t>(a.fc_hidden.size()));
    for (int w : a.fc_hidden) put_u32(f, static_cast<std::uint32_t>(w));
    for (const auto& b : p.blocks) {
        put_arr(f, b.w);
        put_arr(f, b.b);
        put_arr(f, b.gamma);
        put_arr(f, b.beta);
        put_arr(f, b.run_mean);
        put_arr(f, b.run_var);
    }
    for (const auto& fc : p.fcs) {
        put_arr(f, fc.w);
        put_arr(f, fc.b);
    }
    if (!f) throw std::runtime_error("write failed: " + path);
}

ModelParams load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, kCkptMagic, 4) != 0)
        throw std::runtime_error("bad checkpoint magic in " + path);
    if (get_u32(f) != 1) throw std::runtime_error("unsupported checkpoint version");

    CnnArchitecture a;
    a.input_h = static_cast<int>(get_u32(f));
    a.input_w = static_cast<int>(get_u32(f));
    a.n_classes = static_cast<int>(get_u32(f));
    a.leaky_slope = get_f64(f);
    a.bn_eps = get_f64(f);
    a.bn_momentum = get_f64(f);
    const std::uint32_t nb = get_u32(f);
    if (nb != 6) throw std::runtime_error("checkpoint must carry 6 conv blocks");
    for (std::uint32_t i = 0; i < nb; ++i) {
        ConvBlockSpec b;
        b.in_ch = static_cast<int>(get_u32(f));
        b.out_ch = static_cast<int>(get_u32(f));
        b.kh = static_cast<int>(get_u32(f));
        b.kw = static_cast<int>(get_u32(f));
        a.blocks.push_back(b);
    }
    const std::uint32_t nfc = get_u32(f);
    if (nfc != 2) throw std::runtime_error("checkpoint must carry 3 FC layers");
    for (std::uint32_t i = 0; i < nfc; ++i) a.fc_hidden.push_back(static_cast<int>(get_u32(f)));

    ModelParams p;
    p.arch = a;
    for (const auto& bs : a.blocks) {
        ConvBlockParams bp;
        const std::size_t nw = static_cast<std::size_t>(bs.out_ch) * bs.in_ch * bs.kh * bs.kw;
        bp.w = get_arr(f, nw);
        bp.b = get_arr(f, bs.out_ch);
        bp.gamma = get_arr(f, bs.out_ch);
        bp.beta = get_arr(f, bs.out_ch);
        bp.run_mean = get_arr(f, bs.out_ch);
        bp.run_var = get_arr(f, bs.out_ch);
        p.blocks.push_back(std::move(bp));
    }
    int in = a.flatten_size();
    std::vector<int> widths = a.fc_hidden;
    widths.push_back(a.n_classes);
    for (int w : widths) {
        FcParams fp;
        fp.w = get_arr(f, static_cast<std::size_t>(w) * in);
        fp.b = get_arr(f, w);
        p.fcs.push_back(std::move(fp));
        in = w;
    }
    if (!f) throw std::runtime_error("truncated checkpoint: " + path);
    return p;
}

} // namespace epsfp::cnn
