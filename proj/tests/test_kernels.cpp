// Parallel kernels against the serial reference loops.
#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "vimu/kernels.hpp"
#include "vimu/rng.hpp"

using namespace vimu;

namespace {

template <typename T>
std::vector<T> randv(Rng& r, std::size_t n) {
    std::vector<T> v(n);
    for (auto& x : v) x = static_cast<T>(r.normal());
    return v;
}

template <typename T>
void expect_close(const std::vector<T>& a, const std::vector<T>& b, double tol) {
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double scale = std::max(1.0, std::abs(static_cast<double>(b[i])));
        ASSERT_NEAR(a[i], b[i], tol * scale) << "at " << i;
    }
}

ConvGeom conv_geom(Rng& r) {
    ConvGeom g;
    g.batch = 1 + r.below(4);
    g.in_c = 1 + r.below(5);
    g.out_c = 1 + r.below(6);
    g.in_h = 3 + r.below(8);
    g.in_w = 3 + r.below(8);
    g.kh = 1 + r.below(3);
    g.kw = 1 + r.below(3);
    g.sh = 1 + r.below(3);
    g.sw = 1 + r.below(3);
    g.ph = r.below(g.kh);
    g.pw = r.below(g.kw);
    g.out_h = conv_out_extent(g.in_h, g.kh, g.sh, g.ph);
    g.out_w = conv_out_extent(g.in_w, g.kw, g.sw, g.pw);
    return g;
}

ConvGeom tconv_geom(Rng& r) {
    ConvGeom g;
    g.batch = 1 + r.below(4);
    g.in_c = 1 + r.below(5);
    g.out_c = 1 + r.below(6);
    g.in_h = 2 + r.below(6);
    g.in_w = 2 + r.below(6);
    g.kh = 1 + r.below(3);
    g.kw = 1 + r.below(3);
    g.sh = 1 + r.below(3);
    g.sw = 1 + r.below(3);
    g.ph = r.below(g.kh);
    g.pw = r.below(g.kw);
    const std::size_t oph = r.below(g.sh), opw = r.below(g.sw);
    g.out_h = tconv_out_extent(g.in_h, g.kh, g.sh, g.ph, oph);
    g.out_w = tconv_out_extent(g.in_w, g.kw, g.sw, g.pw, opw);
    return g;
}

template <typename T>
class KernelEquivalence : public ::testing::Test {};
using Types = ::testing::Types<float, double>;
TYPED_TEST_SUITE(KernelEquivalence, Types);

template <typename T>
double tol() {
    return std::is_same_v<T, float> ? 2e-4 : 1e-11;
}

}  // namespace

TYPED_TEST(KernelEquivalence, Conv2d) {
    using T = TypeParam;
    Rng r(11);
    for (int trial = 0; trial < 40; ++trial) {
        const ConvGeom g = conv_geom(r);
        if (g.out_h == 0 || g.out_w == 0) continue;
        const auto x = randv<T>(r, g.batch * g.in_c * g.in_h * g.in_w);
        const auto w = randv<T>(r, g.out_c * g.in_c * g.kh * g.kw);
        const auto b = randv<T>(r, g.out_c);
        const auto dy = randv<T>(r, g.batch * g.out_c * g.out_h * g.out_w);
        std::vector<T> y1(dy.size()), y2(dy.size());
        kernels::conv2d_forward(g, x.data(), w.data(), b.data(), y1.data());
        kernels::ref::conv2d_forward(g, x.data(), w.data(), b.data(), y2.data());
        expect_close(y1, y2, tol<T>());

        std::vector<T> dx1(x.size()), dx2(x.size()), dw1(w.size(), T(1)), dw2(w.size(), T(1)), db1(b.size()),
            db2(b.size());
        kernels::conv2d_backward(g, x.data(), w.data(), dy.data(), dx1.data(), dw1.data(), db1.data());
        kernels::ref::conv2d_backward(g, x.data(), w.data(), dy.data(), dx2.data(), dw2.data(), db2.data());
        expect_close(dx1, dx2, tol<T>());
        expect_close(dw1, dw2, tol<T>());
        expect_close(db1, db2, tol<T>());
    }
}

TYPED_TEST(KernelEquivalence, Tconv2d) {
    using T = TypeParam;
    Rng r(12);
    for (int trial = 0; trial < 40; ++trial) {
        const ConvGeom g = tconv_geom(r);
        if (g.out_h == 0 || g.out_w == 0) continue;
        const auto x = randv<T>(r, g.batch * g.in_c * g.in_h * g.in_w);
        const auto w = randv<T>(r, g.in_c * g.out_c * g.kh * g.kw);
        const auto b = randv<T>(r, g.out_c);
        const auto dy = randv<T>(r, g.batch * g.out_c * g.out_h * g.out_w);
        std::vector<T> y1(dy.size()), y2(dy.size());
        kernels::tconv2d_forward(g, x.data(), w.data(), b.data(), y1.data());
        kernels::ref::tconv2d_forward(g, x.data(), w.data(), b.data(), y2.data());
        expect_close(y1, y2, tol<T>());

        std::vector<T> dx1(x.size()), dx2(x.size()), dw1(w.size()), dw2(w.size()), db1(b.size()), db2(b.size());
        kernels::tconv2d_backward(g, x.data(), w.data(), dy.data(), dx1.data(), dw1.data(), db1.data());
        kernels::ref::tconv2d_backward(g, x.data(), w.data(), dy.data(), dx2.data(), dw2.data(), db2.data());
        expect_close(dx1, dx2, tol<T>());
        expect_close(dw1, dw2, tol<T>());
        expect_close(db1, db2, tol<T>());
    }
}

TYPED_TEST(KernelEquivalence, Local1x1) {
    using T = TypeParam;
    Rng r(13);
    for (int trial = 0; trial < 30; ++trial) {
        ConvGeom g;
        g.batch = 1 + r.below(5);
        g.in_c = 1 + r.below(6);
        g.out_c = 1 + r.below(6);
        g.in_h = g.out_h = 1 + r.below(6);
        g.in_w = g.out_w = 1 + r.below(6);
        const std::size_t hw = g.in_h * g.in_w;
        const auto x = randv<T>(r, g.batch * g.in_c * hw);
        const auto w = randv<T>(r, hw * g.out_c * g.in_c);
        const auto b = randv<T>(r, hw * g.out_c);
        const auto dy = randv<T>(r, g.batch * g.out_c * hw);
        std::vector<T> y1(dy.size()), y2(dy.size());
        kernels::local1x1_forward(g, x.data(), w.data(), b.data(), y1.data());
        kernels::ref::local1x1_forward(g, x.data(), w.data(), b.data(), y2.data());
        expect_close(y1, y2, tol<T>());

        std::vector<T> dx1(x.size()), dx2(x.size()), dw1(w.size()), dw2(w.size()), db1(b.size()), db2(b.size());
        kernels::local1x1_backward(g, x.data(), w.data(), dy.data(), dx1.data(), dw1.data(), db1.data());
        kernels::ref::local1x1_backward(g, x.data(), w.data(), dy.data(), dx2.data(), dw2.data(), db2.data());
        expect_close(dx1, dx2, tol<T>());
        expect_close(dw1, dw2, tol<T>());
        expect_close(db1, db2, tol<T>());
    }
}

TYPED_TEST(KernelEquivalence, Dense) {
    using T = TypeParam;
    Rng r(14);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t n = 1 + r.below(70), in = 1 + r.below(40), out = 1 + r.below(40);
        const auto x = randv<T>(r, n * in);
        const auto w = randv<T>(r, out * in);
        const auto b = randv<T>(r, out);
        const auto dy = randv<T>(r, n * out);
        std::vector<T> y1(n * out), y2(n * out);
        kernels::dense_forward(n, in, out, x.data(), w.data(), b.data(), y1.data());
        kernels::ref::dense_forward(n, in, out, x.data(), w.data(), b.data(), y2.data());
        expect_close(y1, y2, tol<T>());

        std::vector<T> dx1(x.size()), dx2(x.size()), dw1(w.size()), dw2(w.size()), db1(b.size()), db2(b.size());
        kernels::dense_backward(n, in, out, x.data(), w.data(), dy.data(), dx1.data(), dw1.data(), db1.data());
        kernels::ref::dense_backward(n, in, out, x.data(), w.data(), dy.data(), dx2.data(), dw2.data(), db2.data());
        expect_close(dx1, dx2, tol<T>());
        expect_close(dw1, dw2, tol<T>());
        expect_close(db1, db2, tol<T>());
    }
}

TEST(KernelRef, ConvIdentityKernel) {
    // centred delta, same padding: output equals input
    ConvGeom g;
    g.in_h = g.out_h = 5;
    g.in_w = g.out_w = 4;
    g.kh = g.kw = 3;
    g.ph = g.pw = 1;
    std::vector<double> x(20), w(9, 0.0), b(1, 0.0), y(20);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<double>(i) - 7.5;
    w[4] = 1.0;
    kernels::ref::conv2d_forward(g, x.data(), w.data(), b.data(), y.data());
    EXPECT_EQ(x, y);
}

TEST(KernelRef, GradientsAccumulate) {
    const std::size_t n = 2, in = 3, out = 2;
    std::vector<double> x{1, 2, 3, 4, 5, 6}, w{1, 0, 0, 0, 1, 0}, dy{1, 1, 1, 1};
    std::vector<double> dx(6), dw(6, 10.0), db(2, 1.0);
    kernels::ref::dense_backward(n, in, out, x.data(), w.data(), dy.data(), dx.data(), dw.data(), db.data());
    // dW = dy^T x = column sums of x for both outputs, added onto 10
    EXPECT_DOUBLE_EQ(dw[0], 15.0);
    EXPECT_DOUBLE_EQ(dw[2], 19.0);
    EXPECT_DOUBLE_EQ(db[1], 3.0);
}

TEST(KernelShapes, Extents) {
    EXPECT_EQ(conv_out_extent(20, 3, 3, 0), 6u);
    EXPECT_EQ(conv_out_extent(3, 3, 3, 0), 1u);
    EXPECT_EQ(conv_out_extent(2, 3, 3, 0), 0u);
    EXPECT_EQ(tconv_out_extent(12, 3, 2, 1, 1), 24u);
    EXPECT_EQ(tconv_out_extent(20, 3, 1, 1, 0), 20u);
}
