#include "vimu/kernels.hpp"

#include <algorithm>
#include <cstring>
#include <vector>

#include <Eigen/Core>

namespace vimu::kernels {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using CMapMat = Eigen::Map<const RowMat<T>>;

// Row blocks used for reductions split over an output axis. The block size
// is fixed so the per-row summation order is the same for any thread count.
constexpr std::ptrdiff_t kRowBlock = 16;
// Dense layers repack the full weight matrix per GEMM call, so batch rows
// are split more coarsely.
constexpr std::ptrdiff_t kBatchBlock = 64;

inline std::ptrdiff_t blocks(std::size_t rows, std::ptrdiff_t block = kRowBlock) {
    return static_cast<std::ptrdiff_t>((rows + static_cast<std::size_t>(block) - 1) / static_cast<std::size_t>(block));
}

// Unfold one image [C, img_h, img_w] into col [C*kh*kw, out_h*out_w].
template <typename T>
void im2col(const ConvGeom& g, std::size_t channels, std::size_t img_h, std::size_t img_w, std::size_t out_h,
            std::size_t out_w, const T* img, T* col) {
    const std::size_t plane = out_h * out_w;
    for (std::size_t c = 0; c < channels; ++c)
        for (std::size_t i = 0; i < g.kh; ++i)
            for (std::size_t j = 0; j < g.kw; ++j) {
                T* row = col + ((c * g.kh + i) * g.kw + j) * plane;
                for (std::size_t oh = 0; oh < out_h; ++oh) {
                    const std::ptrdiff_t h = static_cast<std::ptrdiff_t>(oh * g.sh + i) - static_cast<std::ptrdiff_t>(g.ph);
                    T* dst = row + oh * out_w;
                    if (h < 0 || h >= static_cast<std::ptrdiff_t>(img_h)) {
                        std::fill(dst, dst + out_w, T(0));
                        continue;
                    }
                    const T* src = img + (c * img_h + static_cast<std::size_t>(h)) * img_w;
                    for (std::size_t ow = 0; ow < out_w; ++ow) {
                        const std::ptrdiff_t w = static_cast<std::ptrdiff_t>(ow * g.sw + j) - static_cast<std::ptrdiff_t>(g.pw);
                        dst[ow] = (w < 0 || w >= static_cast<std::ptrdiff_t>(img_w)) ? T(0) : src[w];
                    }
                }
            }
}

// Adjoint of im2col: accumulate col back onto a zeroed image.
template <typename T>
void col2im(const ConvGeom& g, std::size_t channels, std::size_t img_h, std::size_t img_w, std::size_t out_h,
            std::size_t out_w, const T* col, T* img) {
    std::memset(img, 0, sizeof(T) * channels * img_h * img_w);
    const std::size_t plane = out_h * out_w;
    for (std::size_t c = 0; c < channels; ++c)
        for (std::size_t i = 0; i < g.kh; ++i)
            for (std::size_t j = 0; j < g.kw; ++j) {
                const T* row = col + ((c * g.kh + i) * g.kw + j) * plane;
                for (std::size_t oh = 0; oh < out_h; ++oh) {
                    const std::ptrdiff_t h = static_cast<std::ptrdiff_t>(oh * g.sh + i) - static_cast<std::ptrdiff_t>(g.ph);
                    if (h < 0 || h >= static_cast<std::ptrdiff_t>(img_h)) continue;
                    T* dst = img + (c * img_h + static_cast<std::size_t>(h)) * img_w;
                    const T* src = row + oh * out_w;
                    for (std::size_t ow = 0; ow < out_w; ++ow) {
                        const std::ptrdiff_t w = static_cast<std::ptrdiff_t>(ow * g.sw + j) - static_cast<std::ptrdiff_t>(g.pw);
                        if (w >= 0 && w < static_cast<std::ptrdiff_t>(img_w)) dst[w] += src[ow];
                    }
                }
            }
}

}  // namespace

template <typename T>
void conv2d_forward(const ConvGeom& g, const T* x, const T* w, const T* b, T* y) {
    const std::size_t k = g.in_c * g.kh * g.kw;
    const std::size_t plane = g.out_h * g.out_w;
    const std::size_t in_sz = g.in_c * g.in_h * g.in_w;
    CMapMat<T> W(w, g.out_c, k);
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> B(b, g.out_c);
#pragma omp parallel
    {
        std::vector<T> col(k * plane);
#pragma omp for schedule(static)
        for (std::ptrdiff_t n = 0; n < static_cast<std::ptrdiff_t>(g.batch); ++n) {
            im2col(g, g.in_c, g.in_h, g.in_w, g.out_h, g.out_w, x + n * in_sz, col.data());
            MapMat<T> Y(y + n * g.out_c * plane, g.out_c, plane);
            Y.noalias() = W * CMapMat<T>(col.data(), k, plane);
            Y.colwise() += B;
        }
    }
}

template <typename T>
void conv2d_backward(const ConvGeom& g, const T* x, const T* w, const T* dy, T* dx, T* dw, T* db) {
    const std::size_t k = g.in_c * g.kh * g.kw;
    const std::size_t plane = g.out_h * g.out_w;
    const std::size_t in_sz = g.in_c * g.in_h * g.in_w;
    const std::size_t out_sz = g.out_c * plane;
    CMapMat<T> W(w, g.out_c, k);
    std::vector<T> cols(g.batch * k * plane);

#pragma omp parallel
    {
        std::vector<T> dcol(k * plane);
#pragma omp for schedule(static)
        for (std::ptrdiff_t n = 0; n < static_cast<std::ptrdiff_t>(g.batch); ++n) {
            T* col = cols.data() + n * k * plane;
            im2col(g, g.in_c, g.in_h, g.in_w, g.out_h, g.out_w, x + n * in_sz, col);
            MapMat<T>(dcol.data(), k, plane).noalias() = W.transpose() * CMapMat<T>(dy + n * out_sz, g.out_c, plane);
            col2im(g, g.in_c, g.in_h, g.in_w, g.out_h, g.out_w, dcol.data(), dx + n * in_sz);
        }

#pragma omp for schedule(static)
        for (std::ptrdiff_t blk = 0; blk < blocks(g.out_c); ++blk) {
            const std::ptrdiff_t r0 = blk * kRowBlock;
            const std::ptrdiff_t rows = std::min<std::ptrdiff_t>(kRowBlock, static_cast<std::ptrdiff_t>(g.out_c) - r0);
            MapMat<T> dW(dw + r0 * k, rows, k);
            for (std::size_t n = 0; n < g.batch; ++n) {
                CMapMat<T> dY(dy + n * out_sz + r0 * plane, rows, plane);
                dW.noalias() += dY * CMapMat<T>(cols.data() + n * k * plane, k, plane).transpose();
                for (std::ptrdiff_t r = 0; r < rows; ++r) db[r0 + r] += dY.row(r).sum();
            }
        }
    }
}

template <typename T>
void tconv2d_forward(const ConvGeom& g, const T* x, const T* w, const T* b, T* y) {
    const std::size_t k = g.out_c * g.kh * g.kw;
    const std::size_t in_plane = g.in_h * g.in_w;
    const std::size_t in_sz = g.in_c * in_plane;
    const std::size_t out_plane = g.out_h * g.out_w;
    CMapMat<T> W(w, g.in_c, k);
#pragma omp parallel
    {
        std::vector<T> col(k * in_plane);
#pragma omp for schedule(static)
        for (std::ptrdiff_t n = 0; n < static_cast<std::ptrdiff_t>(g.batch); ++n) {
            MapMat<T>(col.data(), k, in_plane).noalias() = W.transpose() * CMapMat<T>(x + n * in_sz, g.in_c, in_plane);
            T* yn = y + n * g.out_c * out_plane;
            col2im(g, g.out_c, g.out_h, g.out_w, g.in_h, g.in_w, col.data(), yn);
            for (std::size_t c = 0; c < g.out_c; ++c) {
                T* p = yn + c * out_plane;
                for (std::size_t i = 0; i < out_plane; ++i) p[i] += b[c];
            }
        }
    }
}

template <typename T>
void tconv2d_backward(const ConvGeom& g, const T* x, const T* w, const T* dy, T* dx, T* dw, T* db) {
    const std::size_t k = g.out_c * g.kh * g.kw;
    const std::size_t in_plane = g.in_h * g.in_w;
    const std::size_t in_sz = g.in_c * in_plane;
    const std::size_t out_plane = g.out_h * g.out_w;
    const std::size_t out_sz = g.out_c * out_plane;
    CMapMat<T> W(w, g.in_c, k);
    std::vector<T> cols(g.batch * k * in_plane);

#pragma omp parallel
    {
#pragma omp for schedule(static)
        for (std::ptrdiff_t n = 0; n < static_cast<std::ptrdiff_t>(g.batch); ++n) {
            T* col = cols.data() + n * k * in_plane;
            im2col(g, g.out_c, g.out_h, g.out_w, g.in_h, g.in_w, dy + n * out_sz, col);
            MapMat<T>(dx + n * in_sz, g.in_c, in_plane).noalias() = W * CMapMat<T>(col, k, in_plane);
        }

#pragma omp for schedule(static)
        for (std::ptrdiff_t blk = 0; blk < blocks(g.in_c); ++blk) {
            const std::ptrdiff_t r0 = blk * kRowBlock;
            const std::ptrdiff_t rows = std::min<std::ptrdiff_t>(kRowBlock, static_cast<std::ptrdiff_t>(g.in_c) - r0);
            MapMat<T> dW(dw + r0 * k, rows, k);
            for (std::size_t n = 0; n < g.batch; ++n) {
                dW.noalias() += CMapMat<T>(x + n * in_sz + r0 * in_plane, rows, in_plane) *
                                CMapMat<T>(cols.data() + n * k * in_plane, k, in_plane).transpose();
            }
        }

#pragma omp for schedule(static)
        for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(g.out_c); ++c) {
            T acc = 0;
            for (std::size_t n = 0; n < g.batch; ++n) {
                const T* p = dy + n * out_sz + c * out_plane;
                for (std::size_t i = 0; i < out_plane; ++i) acc += p[i];
            }
            db[c] += acc;
        }
    }
}

template <typename T>
void local1x1_forward(const ConvGeom& g, const T* x, const T* w, const T* b, T* y) {
    const std::size_t positions = g.in_h * g.in_w;
#pragma omp parallel
    {
        RowMat<T> xp(g.in_c, g.batch);
        RowMat<T> yp(g.out_c, g.batch);
#pragma omp for schedule(static)
        for (std::ptrdiff_t p = 0; p < static_cast<std::ptrdiff_t>(positions); ++p) {
            for (std::size_t n = 0; n < g.batch; ++n)
                for (std::size_t c = 0; c < g.in_c; ++c) xp(c, n) = x[(n * g.in_c + c) * positions + p];
            yp.noalias() = CMapMat<T>(w + p * g.out_c * g.in_c, g.out_c, g.in_c) * xp;
            for (std::size_t n = 0; n < g.batch; ++n)
                for (std::size_t c = 0; c < g.out_c; ++c)
                    y[(n * g.out_c + c) * positions + p] = yp(c, n) + b[p * g.out_c + c];
        }
    }
}

template <typename T>
void local1x1_backward(const ConvGeom& g, const T* x, const T* w, const T* dy, T* dx, T* dw, T* db) {
    const std::size_t positions = g.in_h * g.in_w;
#pragma omp parallel
    {
        RowMat<T> xp(g.in_c, g.batch);
        RowMat<T> dyp(g.out_c, g.batch);
        RowMat<T> dxp(g.in_c, g.batch);
#pragma omp for schedule(static)
        for (std::ptrdiff_t p = 0; p < static_cast<std::ptrdiff_t>(positions); ++p) {
            for (std::size_t n = 0; n < g.batch; ++n) {
                for (std::size_t c = 0; c < g.in_c; ++c) xp(c, n) = x[(n * g.in_c + c) * positions + p];
                for (std::size_t c = 0; c < g.out_c; ++c) dyp(c, n) = dy[(n * g.out_c + c) * positions + p];
            }
            CMapMat<T> W(w + p * g.out_c * g.in_c, g.out_c, g.in_c);
            MapMat<T>(dw + p * g.out_c * g.in_c, g.out_c, g.in_c).noalias() += dyp * xp.transpose();
            for (std::size_t c = 0; c < g.out_c; ++c) db[p * g.out_c + c] += dyp.row(c).sum();
            dxp.noalias() = W.transpose() * dyp;
            for (std::size_t n = 0; n < g.batch; ++n)
                for (std::size_t c = 0; c < g.in_c; ++c) dx[(n * g.in_c + c) * positions + p] = dxp(c, n);
        }
    }
}

template <typename T>
void dense_forward(std::size_t n, std::size_t in, std::size_t out, const T* x, const T* w, const T* b, T* y) {
    CMapMat<T> W(w, out, in);
    Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> B(b, out);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t blk = 0; blk < blocks(n, kBatchBlock); ++blk) {
        const std::ptrdiff_t r0 = blk * kBatchBlock;
        const std::ptrdiff_t rows = std::min<std::ptrdiff_t>(kBatchBlock, static_cast<std::ptrdiff_t>(n) - r0);
        MapMat<T> Y(y + r0 * out, rows, out);
        Y.noalias() = CMapMat<T>(x + r0 * in, rows, in) * W.transpose();
        Y.rowwise() += B;
    }
}

template <typename T>
void dense_backward(std::size_t n, std::size_t in, std::size_t out, const T* x, const T* w, const T* dy, T* dx,
                    T* dw, T* db) {
    CMapMat<T> W(w, out, in);
    CMapMat<T> X(x, n, in);
    CMapMat<T> dY(dy, n, out);
#pragma omp parallel
    {
#pragma omp for schedule(static)
        for (std::ptrdiff_t blk = 0; blk < blocks(n, kBatchBlock); ++blk) {
            const std::ptrdiff_t r0 = blk * kBatchBlock;
            const std::ptrdiff_t rows = std::min<std::ptrdiff_t>(kBatchBlock, static_cast<std::ptrdiff_t>(n) - r0);
            MapMat<T>(dx + r0 * in, rows, in).noalias() = dY.middleRows(r0, rows) * W;
        }
#pragma omp for schedule(static)
        for (std::ptrdiff_t blk = 0; blk < blocks(out); ++blk) {
            const std::ptrdiff_t r0 = blk * kRowBlock;
            const std::ptrdiff_t rows = std::min<std::ptrdiff_t>(kRowBlock, static_cast<std::ptrdiff_t>(out) - r0);
            MapMat<T>(dw + r0 * in, rows, in).noalias() += dY.middleCols(r0, rows).transpose() * X;
            for (std::ptrdiff_t o = r0; o < r0 + rows; ++o) db[o] += dY.col(o).sum();
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

}  // namespace vimu::kernels
