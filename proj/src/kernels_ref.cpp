// Serial reference kernels. Direct loops straight from the layer
// definitions; no blocking, no GEMM, no threads.

#include <cstring>

#include "vimu/kernels.hpp"

namespace vimu::kernels::ref {

namespace {

// Source index of kernel tap (i, j) for output position (oh, ow); returns
// false when the tap falls into padding.
inline bool tap(const ConvGeom& g, std::size_t oh, std::size_t ow, std::size_t i, std::size_t j,
                std::size_t img_h, std::size_t img_w, std::size_t& ih, std::size_t& iw) {
    const std::ptrdiff_t h = static_cast<std::ptrdiff_t>(oh * g.sh + i) - static_cast<std::ptrdiff_t>(g.ph);
    const std::ptrdiff_t w = static_cast<std::ptrdiff_t>(ow * g.sw + j) - static_cast<std::ptrdiff_t>(g.pw);
    if (h < 0 || w < 0 || h >= static_cast<std::ptrdiff_t>(img_h) || w >= static_cast<std::ptrdiff_t>(img_w)) return false;
    ih = static_cast<std::size_t>(h);
    iw = static_cast<std::size_t>(w);
    return true;
}

}  // namespace

template <typename T>
void conv2d_forward(const ConvGeom& g, const T* x, const T* w, const T* b, T* y) {
    for (std::size_t n = 0; n < g.batch; ++n)
        for (std::size_t co = 0; co < g.out_c; ++co)
            for (std::size_t oh = 0; oh < g.out_h; ++oh)
                for (std::size_t ow = 0; ow < g.out_w; ++ow) {
                    T acc = b[co];
                    for (std::size_t ci = 0; ci < g.in_c; ++ci)
                        for (std::size_t i = 0; i < g.kh; ++i)
                            for (std::size_t j = 0; j < g.kw; ++j) {
                                std::size_t ih, iw;
                                if (!tap(g, oh, ow, i, j, g.in_h, g.in_w, ih, iw)) continue;
                                acc += w[((co * g.in_c + ci) * g.kh + i) * g.kw + j] *
                                       x[((n * g.in_c + ci) * g.in_h + ih) * g.in_w + iw];
                            }
                    y[((n * g.out_c + co) * g.out_h + oh) * g.out_w + ow] = acc;
                }
}

template <typename T>
void conv2d_backward(const ConvGeom& g, const T* x, const T* w, const T* dy, T* dx, T* dw, T* db) {
    std::memset(dx, 0, sizeof(T) * g.batch * g.in_c * g.in_h * g.in_w);
    for (std::size_t n = 0; n < g.batch; ++n)
        for (std::size_t co = 0; co < g.out_c; ++co)
            for (std::size_t oh = 0; oh < g.out_h; ++oh)
                for (std::size_t ow = 0; ow < g.out_w; ++ow) {
                    const T d = dy[((n * g.out_c + co) * g.out_h + oh) * g.out_w + ow];
                    db[co] += d;
                    for (std::size_t ci = 0; ci < g.in_c; ++ci)
                        for (std::size_t i = 0; i < g.kh; ++i)
                            for (std::size_t j = 0; j < g.kw; ++j) {
                                std::size_t ih, iw;
                                if (!tap(g, oh, ow, i, j, g.in_h, g.in_w, ih, iw)) continue;
                                const std::size_t wi = ((co * g.in_c + ci) * g.kh + i) * g.kw + j;
                                const std::size_t xi = ((n * g.in_c + ci) * g.in_h + ih) * g.in_w + iw;
                                dw[wi] += d * x[xi];
                                dx[xi] += d * w[wi];
                            }
                }
}

// A transposed convolution scatters each input pixel through the kernel;
// output (oh, ow) receives x(ih, iw) * w(i, j) when oh = ih*sh - ph + i.
template <typename T>
void tconv2d_forward(const ConvGeom& g, const T* x, const T* w, const T* b, T* y) {
    for (std::size_t n = 0; n < g.batch; ++n)
        for (std::size_t co = 0; co < g.out_c; ++co)
            for (std::size_t p = 0; p < g.out_h * g.out_w; ++p) y[(n * g.out_c + co) * g.out_h * g.out_w + p] = b[co];
    for (std::size_t n = 0; n < g.batch; ++n)
        for (std::size_t ci = 0; ci < g.in_c; ++ci)
            for (std::size_t ih = 0; ih < g.in_h; ++ih)
                for (std::size_t iw = 0; iw < g.in_w; ++iw) {
                    const T v = x[((n * g.in_c + ci) * g.in_h + ih) * g.in_w + iw];
                    for (std::size_t co = 0; co < g.out_c; ++co)
                        for (std::size_t i = 0; i < g.kh; ++i)
                            for (std::size_t j = 0; j < g.kw; ++j) {
                                std::size_t oh, ow;
                                if (!tap(g, ih, iw, i, j, g.out_h, g.out_w, oh, ow)) continue;
                                y[((n * g.out_c + co) * g.out_h + oh) * g.out_w + ow] +=
                                    v * w[((ci * g.out_c + co) * g.kh + i) * g.kw + j];
                            }
                }
}

template <typename T>
void tconv2d_backward(const ConvGeom& g, const T* x, const T* w, const T* dy, T* dx, T* dw, T* db) {
    for (std::size_t n = 0; n < g.batch; ++n)
        for (std::size_t co = 0; co < g.out_c; ++co)
            for (std::size_t p = 0; p < g.out_h * g.out_w; ++p) db[co] += dy[(n * g.out_c + co) * g.out_h * g.out_w + p];
    for (std::size_t n = 0; n < g.batch; ++n)
        for (std::size_t ci = 0; ci < g.in_c; ++ci)
            for (std::size_t ih = 0; ih < g.in_h; ++ih)
                for (std::size_t iw = 0; iw < g.in_w; ++iw) {
                    const std::size_t xi = ((n * g.in_c + ci) * g.in_h + ih) * g.in_w + iw;
                    T acc = 0;
                    for (std::size_t co = 0; co < g.out_c; ++co)
                        for (std::size_t i = 0; i < g.kh; ++i)
                            for (std::size_t j = 0; j < g.kw; ++j) {
                                std::size_t oh, ow;
                                if (!tap(g, ih, iw, i, j, g.out_h, g.out_w, oh, ow)) continue;
                                const std::size_t wi = ((ci * g.out_c + co) * g.kh + i) * g.kw + j;
                                const T d = dy[((n * g.out_c + co) * g.out_h + oh) * g.out_w + ow];
                                acc += d * w[wi];
                                dw[wi] += d * x[xi];
                            }
                    dx[xi] = acc;
                }
}

template <typename T>
void local1x1_forward(const ConvGeom& g, const T* x, const T* w, const T* b, T* y) {
    const std::size_t positions = g.in_h * g.in_w;
    for (std::size_t n = 0; n < g.batch; ++n)
        for (std::size_t p = 0; p < positions; ++p)
            for (std::size_t co = 0; co < g.out_c; ++co) {
                T acc = b[p * g.out_c + co];
                for (std::size_t ci = 0; ci < g.in_c; ++ci)
                    acc += w[(p * g.out_c + co) * g.in_c + ci] * x[(n * g.in_c + ci) * positions + p];
                y[(n * g.out_c + co) * positions + p] = acc;
            }
}

template <typename T>
void local1x1_backward(const ConvGeom& g, const T* x, const T* w, const T* dy, T* dx, T* dw, T* db) {
    const std::size_t positions = g.in_h * g.in_w;
    std::memset(dx, 0, sizeof(T) * g.batch * g.in_c * positions);
    for (std::size_t n = 0; n < g.batch; ++n)
        for (std::size_t p = 0; p < positions; ++p)
            for (std::size_t co = 0; co < g.out_c; ++co) {
                const T d = dy[(n * g.out_c + co) * positions + p];
                db[p * g.out_c + co] += d;
                for (std::size_t ci = 0; ci < g.in_c; ++ci) {
                    const std::size_t wi = (p * g.out_c + co) * g.in_c + ci;
                    const std::size_t xi = (n * g.in_c + ci) * positions + p;
                    dw[wi] += d * x[xi];
                    dx[xi] += d * w[wi];
                }
            }
}

template <typename T>
void dense_forward(std::size_t n, std::size_t in, std::size_t out, const T* x, const T* w, const T* b, T* y) {
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t o = 0; o < out; ++o) {
            T acc = b[o];
            for (std::size_t i = 0; i < in; ++i) acc += w[o * in + i] * x[r * in + i];
            y[r * out + o] = acc;
        }
}

template <typename T>
void dense_backward(std::size_t n, std::size_t in, std::size_t out, const T* x, const T* w, const T* dy, T* dx,
                    T* dw, T* db) {
    std::memset(dx, 0, sizeof(T) * n * in);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t o = 0; o < out; ++o) {
            const T d = dy[r * out + o];
            db[o] += d;
            for (std::size_t i = 0; i < in; ++i) {
                dw[o * in + i] += d * x[r * in + i];
                dx[r * in + i] += d * w[o * in + i];
            }
        }
}

#define VIMU_INSTANTIATE(T)                                                                                   \
    template void conv2d_forward<T>(const ConvGeom&, const T*, const T*, const T*, T*);                        \
    template void conv2d_backward<T>(const ConvGeom&, const T*, const T*, const T*, T*, T*, T*);               \
    template void tconv2d_forward<T>(const ConvGeom&, const T*, const T*, const T*, T*);                       \
    template void tconv2d_backward<T>(const ConvGeom&, const T*, const T*, const T*, T*, T*, T*);              \
    template void local1x1_forward<T>(const ConvGeom&, const T*, const T*, const T*, T*);                      \
    template void local1x1_backward<T>(const ConvGeom&, const T*, const T*, const T*, T*, T*, T*);             \
    template void dense_forward<T>(std::size_t, std::size_t, std::size_t, const T*, const T*, const T*, T*);   \
    template void dense_backward<T>(std::size_t, std::size_t, std::size_t, const T*, const T*, const T*, T*, T*, T*);

VIMU_INSTANTIATE(float)
VIMU_INSTANTIATE(double)

}  // namespace vimu::kernels::ref
