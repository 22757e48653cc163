// Parallel kernels against the serial reference, at the layer sizes the
// classifier streams and the generator actually run.
#include <benchmark/benchmark.h>

#include <vector>

#include "vimu/kernels.hpp"
#include "vimu/rng.hpp"

using namespace vimu;

namespace {

std::vector<float> filled(std::size_t n, std::uint64_t seed) {
    Rng r(seed);
    std::vector<float> v(n);
    for (auto& x : v) x = static_cast<float>(r.normal());
    return v;
}

// stream conv: 64 maps, 3x3 same, on a 20x12 window
ConvGeom stream_conv(std::size_t batch) {
    ConvGeom g;
    g.batch = batch;
    g.in_c = 64, g.in_h = 20, g.in_w = 12;
    g.out_c = 64, g.out_h = 20, g.out_w = 12;
    g.kh = g.kw = 3;
    g.ph = g.pw = 1;
    return g;
}

// first generator layer: 1 -> 32 maps, width 12 -> 24
ConvGeom gen_tconv(std::size_t batch) {
    ConvGeom g;
    g.batch = batch;
    g.in_c = 1, g.in_h = 20, g.in_w = 12;
    g.out_c = 32, g.out_h = 20, g.out_w = 24;
    g.kh = g.kw = 3;
    g.sh = 1, g.sw = 2;
    g.ph = g.pw = 1;
    return g;
}

ConvGeom stream_local(std::size_t batch) {
    ConvGeom g = stream_conv(batch);
    g.kh = g.kw = 1;
    g.ph = g.pw = 0;
    return g;
}

std::size_t in_size(const ConvGeom& g) { return g.batch * g.in_c * g.in_h * g.in_w; }
std::size_t out_size(const ConvGeom& g) { return g.batch * g.out_c * g.out_h * g.out_w; }

template <auto Fwd>
void conv_fwd(benchmark::State& st) {
    const ConvGeom g = stream_conv(static_cast<std::size_t>(st.range(0)));
    const auto x = filled(in_size(g), 1), w = filled(g.out_c * g.in_c * 9, 2), b = filled(g.out_c, 3);
    std::vector<float> y(out_size(g));
    for (auto _ : st) {
        Fwd(g, x.data(), w.data(), b.data(), y.data());
        benchmark::DoNotOptimize(y.data());
    }
    st.SetItemsProcessed(st.iterations() * static_cast<std::int64_t>(g.batch));
}

template <auto Bwd>
void conv_bwd(benchmark::State& st) {
    const ConvGeom g = stream_conv(static_cast<std::size_t>(st.range(0)));
    const auto x = filled(in_size(g), 1), w = filled(g.out_c * g.in_c * 9, 2), dy = filled(out_size(g), 3);
    std::vector<float> dx(in_size(g)), dw(w.size()), db(g.out_c);
    for (auto _ : st) {
        Bwd(g, x.data(), w.data(), dy.data(), dx.data(), dw.data(), db.data());
        benchmark::DoNotOptimize(dw.data());
    }
    st.SetItemsProcessed(st.iterations() * static_cast<std::int64_t>(g.batch));
}

template <auto Fwd>
void tconv_fwd(benchmark::State& st) {
    const ConvGeom g = gen_tconv(static_cast<std::size_t>(st.range(0)));
    const auto x = filled(in_size(g), 1), w = filled(g.in_c * g.out_c * 9, 2), b = filled(g.out_c, 3);
    std::vector<float> y(out_size(g));
    for (auto _ : st) {
        Fwd(g, x.data(), w.data(), b.data(), y.data());
        benchmark::DoNotOptimize(y.data());
    }
    st.SetItemsProcessed(st.iterations() * static_cast<std::int64_t>(g.batch));
}

template <auto Fwd>
void local_fwd(benchmark::State& st) {
    const ConvGeom g = stream_local(static_cast<std::size_t>(st.range(0)));
    const std::size_t hw = g.in_h * g.in_w;
    const auto x = filled(in_size(g), 1), w = filled(hw * g.out_c * g.in_c, 2), b = filled(hw * g.out_c, 3);
    std::vector<float> y(out_size(g));
    for (auto _ : st) {
        Fwd(g, x.data(), w.data(), b.data(), y.data());
        benchmark::DoNotOptimize(y.data());
    }
    st.SetItemsProcessed(st.iterations() * static_cast<std::int64_t>(g.batch));
}

// stream dense: flatten 15360 -> 512
template <auto Fwd>
void dense_fwd(benchmark::State& st) {
    const std::size_t n = static_cast<std::size_t>(st.range(0)), in = 15360, out = 512;
    const auto x = filled(n * in, 1), w = filled(out * in, 2), b = filled(out, 3);
    std::vector<float> y(n * out);
    for (auto _ : st) {
        Fwd(n, in, out, x.data(), w.data(), b.data(), y.data());
        benchmark::DoNotOptimize(y.data());
    }
    st.SetItemsProcessed(st.iterations() * static_cast<std::int64_t>(n));
}

}  // namespace

BENCHMARK(conv_fwd<kernels::conv2d_forward<float>>)->Name("conv2d_forward/parallel")->Arg(16)->Arg(64);
BENCHMARK(conv_fwd<kernels::ref::conv2d_forward<float>>)->Name("conv2d_forward/ref")->Arg(16)->Arg(64);
BENCHMARK(conv_bwd<kernels::conv2d_backward<float>>)->Name("conv2d_backward/parallel")->Arg(16)->Arg(64);
BENCHMARK(conv_bwd<kernels::ref::conv2d_backward<float>>)->Name("conv2d_backward/ref")->Arg(16)->Arg(64);
BENCHMARK(tconv_fwd<kernels::tconv2d_forward<float>>)->Name("tconv2d_forward/parallel")->Arg(64);
BENCHMARK(tconv_fwd<kernels::ref::tconv2d_forward<float>>)->Name("tconv2d_forward/ref")->Arg(64);
BENCHMARK(local_fwd<kernels::local1x1_forward<float>>)->Name("local1x1_forward/parallel")->Arg(64);
BENCHMARK(local_fwd<kernels::ref::local1x1_forward<float>>)->Name("local1x1_forward/ref")->Arg(64);
BENCHMARK(dense_fwd<kernels::dense_forward<float>>)->Name("dense_forward/parallel")->Arg(64);
BENCHMARK(dense_fwd<kernels::ref::dense_forward<float>>)->Name("dense_forward/ref")->Arg(64);

BENCHMARK_MAIN();
