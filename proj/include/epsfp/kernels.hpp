#pragma once

#include <cstddef>

// Hot numeric kernels. The default entry points parallelize with OpenMP over
// disjoint output indices only -- every output element is computed by the same
// serial instruction sequence regardless of thread count, so results are
// bit-identical to the serial reference for any OMP_NUM_THREADS. The serial
// twins in kernels::serial are kept as the reference implementation for tests
// and for the kernel benchmark.

namespace epsfp::kernels {

struct Conv2dShape {
    int cin = 0;
    int cout = 0;
    int kh = 0;   // kernel height, no height padding: out_h = h - kh + 1
    int kw = 0;   // kernel width, odd; same-padding on width (pad = kw/2)
    int h = 0;
    int w = 0;
    int out_h() const { return h - kh + 1; }
};

// y[m] = sum_k taps[k] * x[m + ntaps-1 - k], m in [0, n-ntaps]
void fir_valid(const double* x, std::size_t n, const double* taps, std::size_t ntaps, double* y);

// x: [batch][cin][h][w], wt: [cout][cin][kh][kw], y: [batch][cout][out_h][w]
void conv2d_forward(const double* x, const double* wt, const double* bias, double* y,
                    int batch, const Conv2dShape& s);
void conv2d_grad_input(const double* dy, const double* wt, double* dx,
                       int batch, const Conv2dShape& s);
void conv2d_grad_params(const double* dy, const double* x, double* dwt, double* dbias,
                        int batch, const Conv2dShape& s);

// x: [batch][in], wt: [out][in], y: [batch][out]
void fc_forward(const double* x, const double* wt, const double* bias, double* y,
                int batch, int in, int out);
void fc_grad_input(const double* dy, const double* wt, double* dx,
                   int batch, int in, int out);
void fc_grad_params(const double* dy, const double* x, double* dwt, double* dbias,
                    int batch, int in, int out);

namespace serial {

void fir_valid(const double* x, std::size_t n, const double* taps, std::size_t ntaps, double* y);
void conv2d_forward(const double* x, const double* wt, const double* bias, double* y,
                    int batch, const Conv2dShape& s);
void conv2d_grad_input(const double* dy, const double* wt, double* dx,
                       int batch, const Conv2dShape& s);
void conv2d_grad_params(const double* dy, const double* x, double* dwt, double* dbias,
                        int batch, const Conv2dShape& s);
void fc_forward(const double* x, const double* wt, const double* bias, double* y,
                int batch, int in, int out);
void fc_grad_input(const double* dy, const double* wt, double* dx,
                   int batch, int in, int out);
void fc_grad_params(const double* dy, const double* x, double* dwt, double* dbias,
                    int batch, int in, int out);

} // namespace serial

} // namespace epsfp::kernels
