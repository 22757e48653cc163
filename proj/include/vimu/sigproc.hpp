#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "vimu/errors.hpp"

namespace vimu {

enum class Modality { semg, acc, euler };
std::string to_string(Modality m);
Modality modality_from_string(const std::string& s);

/// Uniformly sampled frames x channels signal, row-major.
struct MultichannelSeries {
    std::size_t frames = 0;
    std::size_t channels = 0;
    std::vector<double> data;
    double sample_rate_hz = 0.0;
    Modality modality = Modality::semg;

    /// Builds and validates (shape, positive rate, finite samples).
    static MultichannelSeries make(std::size_t frames, std::size_t channels, double rate, Modality m,
                                   std::vector<double> data);
    void validate() const;

    double& at(std::size_t frame, std::size_t ch) { return data[frame * channels + ch]; }
    double at(std::size_t frame, std::size_t ch) const { return data[frame * channels + ch]; }

    /// Frames [begin, begin+count).
    MultichannelSeries slice(std::size_t begin, std::size_t count) const;

    bool operator==(const MultichannelSeries&) const = default;
};

/// k x C segment cut from a series at origin_frame.
struct SignalWindow {
    std::size_t k = 0;
    std::size_t channels = 0;
    std::vector<double> data;
    std::size_t origin_frame = 0;
    Modality modality = Modality::semg;

    double at(std::size_t frame, std::size_t ch) const { return data[frame * channels + ch]; }
};

/// Per-channel statistics, fitted on training data only.
struct ChannelStats {
    std::vector<double> min, max, mean, stddev;
    std::size_t channels() const { return min.size(); }
    bool operator==(const ChannelStats&) const = default;
};

enum class NormMode { minmax_pm1, zscore };

/// Converts a duration to whole samples (floor).
std::size_t ms_to_samples(double ms, double rate_hz);

MultichannelSeries rectify(const MultichannelSeries& s);
/// Causal trailing-window RMS; the first W-1 outputs use the shorter prefix.
MultichannelSeries moving_rms(const MultichannelSeries& s, double window_ms);
/// Causal trailing-window mean with the same prefix rule as moving_rms.
MultichannelSeries moving_average(const MultichannelSeries& s, double window_ms);

struct FirstOrderCoeffs {
    double b0, b1, a1;
};
/// Bilinear-transform coefficients of H(s) = wc / (s + wc).
FirstOrderCoeffs butter1_coeffs(double cutoff_hz, double rate_hz);
/// Single-pass causal first-order Butterworth low-pass, zero initial state.
MultichannelSeries butter_lowpass1(const MultichannelSeries& s, double cutoff_hz);

/// Keeps frames 0, f, 2f, ...; the rate is divided by f.
MultichannelSeries decimate(const MultichannelSeries& s, std::size_t factor);

std::vector<SignalWindow> segment(const MultichannelSeries& s, double window_ms, double step_ms);
/// Segmentation in samples; used when window/step are already known.
std::vector<SignalWindow> segment_samples(const MultichannelSeries& s, std::size_t k, std::size_t step);

ChannelStats fit_stats(std::span<const MultichannelSeries> train);
MultichannelSeries apply_norm(const MultichannelSeries& s, const ChannelStats& stats, NormMode mode);
/// In-place normalization of raw frame-major values with `stats.channels()` columns.
void apply_norm_inplace(std::span<double> values, const ChannelStats& stats, NormMode mode);
/// Inverse of minmax_pm1 / zscore for denormalizing generated signals.
void invert_norm_inplace(std::span<double> values, const ChannelStats& stats, NormMode mode);

/// Parameters shared by the preprocessing presets.
struct PreprocessParams {
    double smoothing_ms = 100.0;  // RMS / moving-average length
    double cutoff_hz = 1.0;       // Butterworth cut-off
    std::size_t decimation = 20;
    double window_ms = 200.0;
    double step_ms = 10.0;
};

/// sEMG for generator training: moving RMS, then decimation.
MultichannelSeries gan_chain(const MultichannelSeries& semg, const PreprocessParams& p);
/// sEMG for recognition: rectify, Butterworth, then decimation.
MultichannelSeries hgr_chain(const MultichannelSeries& semg, const PreprocessParams& p);
/// IMU (either path): moving average, then decimation.
MultichannelSeries imu_chain(const MultichannelSeries& imu, const PreprocessParams& p);

}  // namespace vimu
