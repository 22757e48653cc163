#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "vimu/rng.hpp"
#include "vimu/sigproc.hpp"

using namespace vimu;

namespace {

MultichannelSeries series(std::size_t frames, std::size_t ch, std::vector<double> v, double rate = 1000.0,
                          Modality m = Modality::semg) {
    return MultichannelSeries::make(frames, ch, rate, m, std::move(v));
}

MultichannelSeries noise(std::size_t frames, std::size_t ch, std::uint64_t seed, double rate = 1000.0) {
    Rng r(seed);
    std::vector<double> v(frames * ch);
    for (auto& x : v) x = r.normal();
    return series(frames, ch, std::move(v), rate);
}

}  // namespace

TEST(Series, RejectsBadInput) {
    EXPECT_THROW(series(2, 1, {1.0, NAN}), InvalidArgument);
    EXPECT_THROW(series(2, 2, {1.0, 2.0, 3.0}), DimensionError);
    EXPECT_THROW(series(1, 1, {1.0}, 0.0), InvalidArgument);
}

TEST(Rectify, AbsoluteValue) {
    const auto y = rectify(series(2, 2, {-1, 2, 3, -4}));
    EXPECT_EQ(y.data, (std::vector<double>{1, 2, 3, 4}));
}

TEST(Rectify, RejectsImu) {
    EXPECT_THROW(rectify(series(1, 1, {1.0}, 100.0, Modality::acc)), ModalityError);
}

TEST(Smoothing, RmsOfConstantIsConstant) {
    const auto y = moving_rms(series(50, 1, std::vector<double>(50, 5.0)), 7.0);
    for (double v : y.data) EXPECT_DOUBLE_EQ(v, 5.0);
}

TEST(Smoothing, RmsTwoSampleWindow) {
    // W = 2 at 1 kHz
    const auto y = moving_rms(series(2, 1, {3.0, -4.0}), 2.0);
    EXPECT_DOUBLE_EQ(y.data[0], 3.0);
    EXPECT_NEAR(y.data[1], std::sqrt(12.5), 1e-15);
}

TEST(Smoothing, UnitWindowIsAbs) {
    const auto s = noise(30, 2, 4);
    const auto y = moving_rms(s, 1.0);
    for (std::size_t i = 0; i < s.data.size(); ++i) EXPECT_DOUBLE_EQ(y.data[i], std::abs(s.data[i]));
    EXPECT_EQ(moving_average(s, 1.0).data, s.data);
}

TEST(Smoothing, RmsIgnoresSign) {
    auto s = noise(40, 3, 5);
    const auto a = moving_rms(s, 9.0);
    const auto b = moving_rms(rectify(s), 9.0);
    EXPECT_EQ(a.data, b.data);
    for (double v : a.data) EXPECT_GE(v, 0.0);
}

TEST(Smoothing, MeanTwoPoints) {
    const auto y = moving_average(series(2, 1, {0.0, 10.0}), 2.0);
    EXPECT_DOUBLE_EQ(y.data[1], 5.0);
}

TEST(Smoothing, ZeroLengthWindowRejected) {
    EXPECT_THROW(moving_rms(noise(10, 1, 1), 0.5), InvalidArgument);
}

TEST(Butterworth, Coefficients) {
    const auto c = butter1_coeffs(1.0, 200.0);
    const double K = std::tan(std::numbers::pi / 200.0);
    EXPECT_NEAR(c.b0, K / (K + 1.0), 1e-15);
    EXPECT_NEAR(c.b1, K / (K + 1.0), 1e-15);
    EXPECT_NEAR(c.a1, (K - 1.0) / (K + 1.0), 1e-15);
}

TEST(Butterworth, ImpulseResponseStartsAtB0) {
    std::vector<double> v(20, 0.0);
    v[0] = 1.0;
    const auto y = butter_lowpass1(series(20, 1, v, 200.0), 1.0);
    const double K = std::tan(std::numbers::pi / 200.0);
    EXPECT_NEAR(y.data[0], K / (K + 1.0), 1e-15);
}

TEST(Butterworth, UnityDcGain) {
    const auto y = butter_lowpass1(series(4000, 1, std::vector<double>(4000, 1.0), 200.0), 1.0);
    EXPECT_NEAR(y.data.back(), 1.0, 1e-6);
}

TEST(Butterworth, Linear) {
    const auto x = noise(300, 2, 1, 200.0), z = noise(300, 2, 2, 200.0);
    std::vector<double> mix(x.data.size());
    for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = 2.0 * x.data[i] - 0.5 * z.data[i];
    const auto fx = butter_lowpass1(x, 5.0), fz = butter_lowpass1(z, 5.0);
    const auto fm = butter_lowpass1(series(300, 2, mix, 200.0), 5.0);
    for (std::size_t i = 0; i < mix.size(); ++i) {
        const double expect = 2.0 * fx.data[i] - 0.5 * fz.data[i];
        EXPECT_NEAR(fm.data[i], expect, 1e-9 * std::max(1.0, std::abs(expect)));
    }
}

TEST(Butterworth, CutoffAboveNyquistRejected) {
    EXPECT_THROW(butter_lowpass1(noise(10, 1, 1, 200.0), 100.0), InvalidArgument);
}

TEST(Decimate, Arithmetic) {
    const auto y = decimate(noise(2040, 1, 3, 2040.0), 20);
    EXPECT_EQ(y.frames, 102u);
    EXPECT_DOUBLE_EQ(y.sample_rate_hz, 102.0);
}

TEST(Decimate, IndexSelection) {
    std::vector<double> v(10);
    for (std::size_t i = 0; i < 10; ++i) v[i] = static_cast<double>(i);
    const auto y = decimate(series(10, 1, v), 3);
    EXPECT_EQ(y.data, (std::vector<double>{0, 3, 6, 9}));
    EXPECT_EQ(decimate(series(10, 1, v), 1).data, v);
    EXPECT_THROW(decimate(series(10, 1, v), 0), InvalidArgument);
}

TEST(Segment, WindowCount) {
    const auto s = noise(600, 2, 1, 100.0);
    const auto w = segment(s, 200.0, 10.0);
    ASSERT_EQ(w.size(), 581u);
    EXPECT_EQ(w.front().k, 20u);
    EXPECT_EQ(w[7].origin_frame, 7u);
}

TEST(Segment, MillisecondsToSamples) {
    EXPECT_EQ(ms_to_samples(200.0, 100.0), 20u);
    EXPECT_EQ(ms_to_samples(10.0, 100.0), 1u);
    EXPECT_EQ(ms_to_samples(200.0, 102.0), 20u);
}

TEST(Segment, BoundaryAndOrigins) {
    const auto s = noise(20, 3, 9, 100.0);
    const auto one = segment(s, 200.0, 10.0);
    ASSERT_EQ(one.size(), 1u);
    EXPECT_EQ(one[0].origin_frame, 0u);
    const auto many = segment_samples(noise(50, 3, 9), 7, 4);
    const auto src = noise(50, 3, 9);
    for (const auto& w : many)
        for (std::size_t f = 0; f < w.k; ++f)
            for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(w.at(f, c), src.at(w.origin_frame + f, c));
    EXPECT_THROW(segment(noise(19, 1, 1, 100.0), 200.0, 10.0), InvalidArgument);
}

TEST(Normalize, MinmaxMidpoint) {
    const auto s = series(2, 1, {2.0, 6.0});
    const auto st = fit_stats(std::span(&s, 1));
    EXPECT_DOUBLE_EQ(apply_norm(series(1, 1, {4.0}), st, NormMode::minmax_pm1).data[0], 0.0);
}

TEST(Normalize, ZscorePopulationStd) {
    const auto s = series(2, 1, {1.0, 3.0});
    const auto st = fit_stats(std::span(&s, 1));
    const auto y = apply_norm(s, st, NormMode::zscore);
    EXPECT_DOUBLE_EQ(y.data[0], -1.0);
    EXPECT_DOUBLE_EQ(y.data[1], 1.0);
}

TEST(Normalize, ConstantChannelMapsToZero) {
    const auto s = series(3, 1, {7.0, 7.0, 7.0});
    const auto st = fit_stats(std::span(&s, 1));
    for (auto mode : {NormMode::minmax_pm1, NormMode::zscore})
        for (double v : apply_norm(s, st, mode).data) EXPECT_EQ(v, 0.0);
}

TEST(Normalize, TrainingDataStaysInRange) {
    const std::vector<MultichannelSeries> train{noise(100, 3, 1), noise(80, 3, 2)};
    const auto st = fit_stats(train);
    for (const auto& s : train)
        for (double v : apply_norm(s, st, NormMode::minmax_pm1).data) {
            EXPECT_GE(v, -1.0);
            EXPECT_LE(v, 1.0);
        }
}

TEST(Normalize, InverseRoundTrip) {
    const auto s = noise(40, 2, 6);
    const auto st = fit_stats(std::span(&s, 1));
    for (auto mode : {NormMode::minmax_pm1, NormMode::zscore}) {
        auto v = apply_norm(s, st, mode).data;
        invert_norm_inplace(v, st, mode);
        for (std::size_t i = 0; i < v.size(); ++i) EXPECT_NEAR(v[i], s.data[i], 1e-12);
    }
}

TEST(Normalize, ChannelMismatch) {
    const auto s = noise(10, 2, 1);
    const auto st = fit_stats(std::span(&s, 1));
    EXPECT_THROW(apply_norm(noise(10, 3, 1), st, NormMode::zscore), StatsMismatch);
}

TEST(Chains, PreserveChannelsAndDecimate) {
    PreprocessParams p;
    p.decimation = 20;
    const auto s = noise(2040, 8, 1, 2040.0);
    const auto g = gan_chain(s, p), h = hgr_chain(s, p);
    EXPECT_EQ(g.channels, 8u);
    EXPECT_EQ(g.frames, 102u);
    EXPECT_EQ(h.frames, 102u);
    EXPECT_DOUBLE_EQ(h.sample_rate_hz, 102.0);
    const auto imu = MultichannelSeries::make(2040, 3, 2040.0, Modality::euler, std::vector<double>(2040 * 3, 0.5));
    for (double v : imu_chain(imu, p).data) EXPECT_DOUBLE_EQ(v, 0.5);
    EXPECT_THROW(imu_chain(s, p), ModalityError);
}

TEST(Chains, Deterministic) {
    PreprocessParams p;
    const auto s = noise(400, 4, 3, 2000.0);
    EXPECT_EQ(hgr_chain(s, p), hgr_chain(s, p));
    EXPECT_EQ(gan_chain(s, p), gan_chain(s, p));
}
