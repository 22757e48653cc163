#pragma once

// Compute kernels for the layers with heavy inner loops. Two versions of
// each kernel exist:
//
//   vimu::kernels       OpenMP-parallel, GEMM-backed (Eigen) production path
//   vimu::kernels::ref  plain serial loops, kept as the test oracle
//
// Parallel kernels partition work over independent outputs (samples,
// spatial positions, or fixed-size row blocks), never over a reduction
// axis, so results do not depend on the thread count.
//
// Conventions: activations are NCHW row-major. Backward kernels overwrite
// the input gradient and accumulate (+=) into weight and bias gradients.

#include <cstddef>

namespace vimu {

struct ConvGeom {
    std::size_t batch = 1;
    std::size_t in_c = 1, in_h = 1, in_w = 1;
    std::size_t out_c = 1, out_h = 1, out_w = 1;
    std::size_t kh = 1, kw = 1;
    std::size_t sh = 1, sw = 1;
    std::size_t ph = 0, pw = 0;
};

/// Output extent of a strided convolution along one axis.
inline std::size_t conv_out_extent(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad) {
    if (in + 2 * pad < k) return 0;
    return (in + 2 * pad - k) / stride + 1;
}

/// Output extent of a transposed convolution along one axis.
inline std::size_t tconv_out_extent(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad,
                                    std::size_t out_pad) {
    const std::ptrdiff_t v = static_cast<std::ptrdiff_t>((in - 1) * stride + k + out_pad) -
                             static_cast<std::ptrdiff_t>(2 * pad);
    return v > 0 ? static_cast<std::size_t>(v) : 0;
}

#define VIMU_KERNEL_DECLS                                                                                   \
    /* x[N,Cin,H,W] w[Cout,Cin,kh,kw] b[Cout] -> y[N,Cout,Ho,Wo] */                                          \
    template <typename T>                                                                                    \
    void conv2d_forward(const ConvGeom& g, const T* x, const T* w, const T* b, T* y);                        \
    template <typename T>                                                                                    \
    void conv2d_backward(const ConvGeom& g, const T* x, const T* w, const T* dy, T* dx, T* dw, T* db);       \
    /* geometry is that of the adjoint convolution: in_* describe the tconv input,                         \
       out_* the tconv output. x[N,Cin,H,W] w[Cin,Cout,kh,kw] b[Cout] -> y[N,Cout,Ho,Wo] */                 \
    template <typename T>                                                                                    \
    void tconv2d_forward(const ConvGeom& g, const T* x, const T* w, const T* b, T* y);                       \
    template <typename T>                                                                                    \
    void tconv2d_backward(const ConvGeom& g, const T* x, const T* w, const T* dy, T* dx, T* dw, T* db);      \
    /* unshared 1x1: x[N,Cin,H,W] w[H*W,Cout,Cin] b[H*W,Cout] -> y[N,Cout,H,W] */                            \
    template <typename T>                                                                                    \
    void local1x1_forward(const ConvGeom& g, const T* x, const T* w, const T* b, T* y);                      \
    template <typename T>                                                                                    \
    void local1x1_backward(const ConvGeom& g, const T* x, const T* w, const T* dy, T* dx, T* dw, T* db);     \
    /* x[N,I] w[O,I] b[O] -> y[N,O] */                                                                       \
    template <typename T>                                                                                    \
    void dense_forward(std::size_t n, std::size_t in, std::size_t out, const T* x, const T* w, const T* b,  \
                       T* y);                                                                                \
    template <typename T>                                                                                    \
    void dense_backward(std::size_t n, std::size_t in, std::size_t out, const T* x, const T* w, const T* dy, \
                        T* dx, T* dw, T* db);

namespace kernels {
VIMU_KERNEL_DECLS
namespace ref {
VIMU_KERNEL_DECLS
}  // namespace ref
}  // namespace kernels

#undef VIMU_KERNEL_DECLS

}  // namespace vimu
