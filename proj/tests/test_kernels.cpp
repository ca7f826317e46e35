#include "doctest.h"
#include "epsfp/kernels.hpp"
#include "epsfp/rng.hpp"

#include <vector>

using namespace epsfp;
using kernels::Conv2dShape;

namespace {

std::vector<double> randv(std::size_t n, Rng& rng) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(-1.0, 1.0);
    return v;
}

} // namespace

// The OpenMP kernels must equal the serial reference bit for bit: every
// output element is produced by an identical accumulation sequence.

TEST_CASE("fir_valid parallel == serial, bitwise") {
    Rng rng(7);
    auto x = randv(4099, rng);
    auto t = randv(101, rng);
    std::vector<double> a(x.size() - t.size() + 1), b(a.size());
    kernels::fir_valid(x.data(), x.size(), t.data(), t.size(), a.data());
    kernels::serial::fir_valid(x.data(), x.size(), t.data(), t.size(), b.data());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("conv2d kernels parallel == serial, bitwise") {
    Rng rng(11);
    Conv2dShape s;
    s.cin = 3; s.cout = 5; s.kh = 2; s.kw = 5; s.h = 2; s.w = 64;
    const int batch = 4;
    auto x = randv(static_cast<std::size_t>(batch) * s.cin * s.h * s.w, rng);
    auto wt = randv(static_cast<std::size_t>(s.cout) * s.cin * s.kh * s.kw, rng);
    auto bias = randv(s.cout, rng);
    const std::size_t ylen = static_cast<std::size_t>(batch) * s.cout * s.out_h() * s.w;
    std::vector<double> y1(ylen), y2(ylen);
    kernels::conv2d_forward(x.data(), wt.data(), bias.data(), y1.data(), batch, s);
    kernels::serial::conv2d_forward(x.data(), wt.data(), bias.data(), y2.data(), batch, s);
    for (std::size_t i = 0; i < ylen; ++i) CHECK(y1[i] == y2[i]);

    auto dy = randv(ylen, rng);
    std::vector<double> dx1(x.size()), dx2(x.size());
    kernels::conv2d_grad_input(dy.data(), wt.data(), dx1.data(), batch, s);
    kernels::serial::conv2d_grad_input(dy.data(), wt.data(), dx2.data(), batch, s);
    for (std::size_t i = 0; i < dx1.size(); ++i) CHECK(dx1[i] == dx2[i]);

    std::vector<double> dw1(wt.size()), dw2(wt.size()), db1(s.cout), db2(s.cout);
    kernels::conv2d_grad_params(dy.data(), x.data(), dw1.data(), db1.data(), batch, s);
    kernels::serial::conv2d_grad_params(dy.data(), x.data(), dw2.data(), db2.data(), batch, s);
    for (std::size_t i = 0; i < dw1.size(); ++i) CHECK(dw1[i] == dw2[i]);
    for (int i = 0; i < s.cout; ++i) CHECK(db1[i] == db2[i]);
}

TEST_CASE("fc kernels parallel == serial, bitwise") {
    Rng rng(13);
    const int batch = 6, in = 37, out = 19;
    auto x = randv(static_cast<std::size_t>(batch) * in, rng);
    auto wt = randv(static_cast<std::size_t>(out) * in, rng);
    auto bias = randv(out, rng);
    std::vector<double> y1(static_cast<std::size_t>(batch) * out), y2(y1.size());
    kernels::fc_forward(x.data(), wt.data(), bias.data(), y1.data(), batch, in, out);
    kernels::serial::fc_forward(x.data(), wt.data(), bias.data(), y2.data(), batch, in, out);
    for (std::size_t i = 0; i < y1.size(); ++i) CHECK(y1[i] == y2[i]);

    auto dy = randv(y1.size(), rng);
    std::vector<double> dx1(x.size()), dx2(x.size());
    kernels::fc_grad_input(dy.data(), wt.data(), dx1.data(), batch, in, out);
    kernels::serial::fc_grad_input(dy.data(), wt.data(), dx2.data(), batch, in, out);
    for (std::size_t i = 0; i < dx1.size(); ++i) CHECK(dx1[i] == dx2[i]);

    std::vector<double> dw1(wt.size()), dw2(wt.size()), db1(out), db2(out);
    kernels::fc_grad_params(dy.data(), x.data(), dw1.data(), db1.data(), batch, in, out);
    kernels::serial::fc_grad_params(dy.data(), x.data(), dw2.data(), db2.data(), batch, in, out);
    for (std::size_t i = 0; i < dw1.size(); ++i) CHECK(dw1[i] == dw2[i]);
    for (int i = 0; i < out; ++i) CHECK(db1[i] == db2[i]);
}

TEST_CASE("conv2d forward computes the reference dot product") {
    // tiny case checked against a hand-expanded convolution
    Conv2dShape s;
    s.cin = 1; s.cout = 1; s.kh = 1; s.kw = 3; s.h = 1; s.w = 5;
    std::vector<double> x = {1, 2, 3, 4, 5};
    std::vector<double> wt = {10, 100, 1000};   // pad 1
    std::vector<double> bias = {0.5};
    std::vector<double> y(5);
    kernels::conv2d_forward(x.data(), wt.data(), bias.data(), y.data(), 1, s);
    // y[w] = 10*x[w-1] + 100*x[w] + 1000*x[w+1] (+bias), zeros outside
    CHECK(y[0] == doctest::Approx(0.5 + 100 * 1 + 1000 * 2));
    CHECK(y[1] == doctest::Approx(0.5 + 10 * 1 + 100 * 2 + 1000 * 3));
    CHECK(y[4] == doctest::Approx(0.5 + 10 * 4 + 100 * 5));
}

TEST_CASE("fir_valid matches a naive convolution") {
    Rng rng(3);
    auto x = randv(64, rng);
    auto t = randv(9, rng);
    std::vector<double> y(x.size() - t.size() + 1);
    kernels::fir_valid(x.data(), x.size(), t.data(), t.size(), y.data());
    for (std::size_t m = 0; m < y.size(); ++m) {
        double acc = 0.0;
        for (std::size_t k = 0; k < t.size(); ++k)
            acc += t[k] * x[m + t.size() - 1 - k];
        CHECK(y[m] == doctest::Approx(acc).epsilon(1e-12));
    }
}
