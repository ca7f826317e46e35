#include "epsfp/kernels.hpp"

#include <algorithm>
#include <vector>

namespace epsfp::kernels {

namespace {

// Per-output-element bodies shared by the parallel and serial variants so the
// two are bit-identical by construction.

// four fixed-order partial accumulators break the FP dependency chain while
// keeping the summation order independent of thread count and data
inline double dot4(const double* x, const double* y, std::size_t n) {
    double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) {
        a0 += y[j] * x[j];
        a1 += y[j + 1] * x[j + 1];
        a2 += y[j + 2] * x[j + 2];
        a3 += y[j + 3] * x[j + 3];
    }
    for (; j < n; ++j) a0 += y[j] * x[j];
    return (a0 + a1) + (a2 + a3);
}

inline void fir_valid_one(const double* x, const double* taps_rev, std::size_t ntaps,
                          std::size_t m, double* y) {
    y[m] = dot4(x + m, taps_rev, ntaps);
}

// one (b, co) output plane, accumulated in fixed (ci, dh, dk) order
inline void conv2d_forward_plane(const double* x, const double* wt, const double* bias,
                                 double* y, int b, int co, const Conv2dShape& s) {
    const int oh = s.out_h(), W = s.w, pad = s.kw / 2;
    double* yp = y + ((static_cast<std::size_t>(b) * s.cout + co) * oh) * W;
    for (int i = 0; i < oh * W; ++i) yp[i] = bias[co];
    for (int ci = 0; ci < s.cin; ++ci) {
        for (int dh = 0; dh < s.kh; ++dh) {
            for (int r = 0; r < oh; ++r) {
                const double* xrow = x + ((static_cast<std::size_t>(b) * s.cin + ci) * s.h + r + dh) * W;
                double* yrow = yp + static_cast<std::size_t>(r) * W;
                for (int dk = 0; dk < s.kw; ++dk) {
                    const double wk = wt[((static_cast<std::size_t>(co) * s.cin + ci) * s.kh + dh) * s.kw + dk];
                    const int off = dk - pad;
                    const int w0 = off < 0 ? -off : 0;
                    const int w1 = off > 0 ? W - off : W;
                    for (int w = w0; w < w1; ++w)
                        yrow[w] += wk * xrow[w + off];
                }
            }
        }
    }
}

// one (b, ci) input-gradient plane, accumulated in fixed (co, dh, dk) order
inline void conv2d_grad_input_plane(const double* dy, const double* wt, double* dx,
                                    int b, int ci, const Conv2dShape& s) {
    const int oh = s.out_h(), W = s.w, pad = s.kw / 2;
    double* dxp = dx + ((static_cast<std::size_t>(b) * s.cin + ci) * s.h) * W;
    for (int i = 0; i < s.h * W; ++i) dxp[i] = 0.0;
    for (int co = 0; co < s.cout; ++co) {
        for (int dh = 0; dh < s.kh; ++dh) {
            for (int r = 0; r < oh; ++r) {
                const double* dyrow = dy + ((static_cast<std::size_t>(b) * s.cout + co) * oh + r) * W;
                double* dxrow = dxp + static_cast<std::size_t>(r + dh) * W;
                for (int dk = 0; dk < s.kw; ++dk) {
                    const double wk = wt[((static_cast<std::size_t>(co) * s.cin + ci) * s.kh + dh) * s.kw + dk];
                    const int off = dk - pad;
                    // dy[w] pulls from x[w + off]  =>  dx[w + off] += wk * dy[w]
                    const int w0 = off < 0 ? -off : 0;
                    const int w1 = off > 0 ? W - off : W;
                    for (int w = w0; w < w1; ++w)
                        dxrow[w + off] += wk * dyrow[w];
                }
            }
        }
    }
}

// all kw taps of one (co, ci, dh) slice in a single streaming pass over
// (b, r, w); each slice is owned by one task, so the accumulation order per
// weight is fixed regardless of thread count
inline void conv2d_grad_weight_slice(const double* dy, const double* x, double* dwt,
                                     int batch, int slice, const Conv2dShape& s) {
    const int kw = s.kw, kh = s.kh;
    const int dh = slice % kh;
    const int ci = (slice / kh) % s.cin;
    const int co = slice / (kh * s.cin);
    const int oh = s.out_h(), W = s.w, pad = s.kw / 2;

    double acc[16] = {0.0};   // kw <= 16 in this project
    for (int b = 0; b < batch; ++b) {
        for (int r = 0; r < oh; ++r) {
            const double* dyrow = dy + ((static_cast<std::size_t>(b) * s.cout + co) * oh + r) * W;
            const double* xrow = x + ((static_cast<std::size_t>(b) * s.cin + ci) * s.h + r + dh) * W;
            for (int dk = 0; dk < kw; ++dk) {
                const int off = dk - pad;
                const int w0 = off < 0 ? -off : 0;
                const int w1 = off > 0 ? W - off : W;
                acc[dk] += dot4(xrow + w0 + off, dyrow + w0, static_cast<std::size_t>(w1 - w0));
            }
        }
    }
    double* out = dwt + (static_cast<std::size_t>(co) * s.cin + ci) * (kh * kw) +
                  static_cast<std::size_t>(dh) * kw;
    for (int dk = 0; dk < kw; ++dk) out[dk] = acc[dk];
}

inline void conv2d_grad_bias_one(const double* dy, double* dbias, int batch, int co,
                                 const Conv2dShape& s) {
    const int n = s.out_h() * s.w;
    double acc = 0.0;
    for (int b = 0; b < batch; ++b) {
        const double* p = dy + (static_cast<std::size_t>(b) * s.cout + co) * n;
        for (int i = 0; i < n; ++i) acc += p[i];
    }
    dbias[co] = acc;
}

inline void fc_forward_out(const double* x, const double* wt, const double* bias,
                           double* y, int batch, int o, int in, int out) {
    const double* wr = wt + static_cast<std::size_t>(o) * in;
    for (int b = 0; b < batch; ++b)
        y[static_cast<std::size_t>(b) * out + o] =
            bias[o] + dot4(x + static_cast<std::size_t>(b) * in, wr, static_cast<std::size_t>(in));
}

inline void fc_grad_input_row(const double* dy, const double* wt, double* dx,
                              int b, int in, int out) {
    const double* dyr = dy + static_cast<std::size_t>(b) * out;
    double* dxr = dx + static_cast<std::size_t>(b) * in;
    for (int i = 0; i < in; ++i) dxr[i] = 0.0;
    for (int o = 0; o < out; ++o) {
        const double a = dyr[o];
        const double* wr = wt + static_cast<std::size_t>(o) * in;
        for (int i = 0; i < in; ++i) dxr[i] += a * wr[i];
    }
}

inline void fc_grad_params_row(const double* dy, const double* x, double* dwt, double* dbias,
                               int batch, int o, int in, int out) {
    double* dwr = dwt + static_cast<std::size_t>(o) * in;
    for (int i = 0; i < in; ++i) dwr[i] = 0.0;
    double db = 0.0;
    for (int b = 0; b < batch; ++b) {
        const double a = dy[static_cast<std::size_t>(b) * out + o];
        const double* xr = x + static_cast<std::size_t>(b) * in;
        for (int i = 0; i < in; ++i) dwr[i] += a * xr[i];
        db += a;
    }
    dbias[o] = db;
}

} // namespace

void fir_valid(const double* x, std::size_t n, const double* taps, std::size_t ntaps, double* y) {
    std::vector<double> rev(taps, taps + ntaps);
    std::reverse(rev.begin(), rev.end());
    const double* tr = rev.data();
    const std::ptrdiff_t m_end = static_cast<std::ptrdiff_t>(n - ntaps + 1);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t m = 0; m < m_end; ++m)
        fir_valid_one(x, tr, ntaps, static_cast<std::size_t>(m), y);
}

void conv2d_forward(const double* x, const double* wt, const double* bias, double* y,
                    int batch, const Conv2dShape& s) {
#pragma omp parallel for collapse(2) schedule(static)
    for (int b = 0; b < batch; ++b)
        for (int co = 0; co < s.cout; ++co)
            conv2d_forward_plane(x, wt, bias, y, b, co, s);
}

void conv2d_grad_input(const double* dy, const double* wt, double* dx,
                       int batch, const Conv2dShape& s) {
#pragma omp parallel for collapse(2) schedule(static)
    for (int b = 0; b < batch; ++b)
        for (int ci = 0; ci < s.cin; ++ci)
            conv2d_grad_input_plane(dy, wt, dx, b, ci, s);
}

void conv2d_grad_params(const double* dy, const double* x, double* dwt, double* dbias,
                        int batch, const Conv2dShape& s) {
    const int nslices = s.cout * s.cin * s.kh;
#pragma omp parallel for schedule(static)
    for (int slice = 0; slice < nslices; ++slice)
        conv2d_grad_weight_slice(dy, x, dwt, batch, slice, s);
#pragma omp parallel for schedule(static)
    for (int co = 0; co < s.cout; ++co)
        conv2d_grad_bias_one(dy, dbias, batch, co, s);
}

void fc_forward(const double* x, const double* wt, const double* bias, double* y,
                int batch, int in, int out) {
#pragma omp parallel for schedule(static)
    for (int o = 0; o < out; ++o)
        fc_forward_out(x, wt, bias, y, batch, o, in, out);
}

void fc_grad_input(const double* dy, const double* wt, double* dx,
                   int batch, int in, int out) {
#pragma omp parallel for schedule(static)
    for (int b = 0; b < batch; ++b)
        fc_grad_input_row(dy, wt, dx, b, in, out);
}

void fc_grad_params(const double* dy, const double* x, double* dwt, double* dbias,
                    int batch, int in, int out) {
#pragma omp parallel for schedule(static)
    for (int o = 0; o < out; ++o)
        fc_grad_params_row(dy, x, dwt, dbias, batch, o, in, out);
}

namespace serial {

void fir_valid(const double* x, std::size_t n, const double* taps, std::size_t ntaps, double* y) {
    std::vector<double> rev(taps, taps + ntaps);
    std::reverse(rev.begin(), rev.end());
    for (std::size_t m = 0; m + ntaps <= n; ++m)
        fir_valid_one(x, rev.data(), ntaps, m, y);
}

void conv2d_forward(const double* x, const double* wt, const double* bias, double* y,
                    int batch, const Conv2dShape& s) {
    for (int b = 0; b < batch; ++b)
        for (int co = 0; co < s.cout; ++co)
            conv2d_forward_plane(x, wt, bias, y, b, co, s);
}

void conv2d_grad_input(const double* dy, const double* wt, double* dx,
                       int batch, const Conv2dShape& s) {
    for (int b = 0; b < batch; ++b)
        for (int ci = 0; ci < s.cin; ++ci)
            conv2d_grad_input_plane(dy, wt, dx, b, ci, s);
}

void conv2d_grad_params(const double* dy, const double* x, double* dwt, double* dbias,
                        int batch, const Conv2dShape& s) {
    const int nslices = s.cout * s.cin * s.kh;
    for (int slice = 0; slice < nslices; ++slice)
        conv2d_grad_weight_slice(dy, x, dwt, batch, slice, s);
    for (int co = 0; co < s.cout; ++co)
        conv2d_grad_bias_one(dy, dbias, batch, co, s);
}

void fc_forward(const double* x, const double* wt, const double* bias, double* y,
                int batch, int in, int out) {
    for (int o = 0; o < out; ++o)
        fc_forward_out(x, wt, bias, y, batch, o, in, out);
}

void fc_grad_input(const double* dy, const double* wt, double* dx,
                   int batch, int in, int out) {
    for (int b = 0; b < batch; ++b)
        fc_grad_input_row(dy, wt, dx, b, in, out);
}

void fc_grad_params(const double* dy, const double* x, double* dwt, double* dbias,
                    int batch, int in, int out) {
    for (int o = 0; o < out; ++o)
        fc_grad_params_row(dy, x, dwt, dbias, batch, o, in, out);
}

} // namespace serial

} // namespace epsfp::kernels
