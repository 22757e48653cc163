#include "vimu/sigproc.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace vimu {

std::string to_string(Modality m) {
    switch (m) {
        case Modality::semg: return "semg";
        case Modality::acc: return "acc";
        case Modality::euler: return "euler";
    }
    return "?";
}

Modality modality_from_string(const std::string& s) {
    if (s == "semg") return Modality::semg;
    if (s == "acc") return Modality::acc;
    if (s == "euler") return Modality::euler;
    throw ConfigError("unknown modality '" + s + "'");
}

MultichannelSeries MultichannelSeries::make(std::size_t frames, std::size_t channels, double rate, Modality m,
                                            std::vector<double> data) {
    MultichannelSeries s{frames, channels, std::move(data), rate, m};
    s.validate();
    return s;
}

void MultichannelSeries::validate() const {
    if (frames < 1 || channels < 1) throw DimensionError("series needs at least one frame and one channel");
    if (data.size() != frames * channels) throw DimensionError("series data size does not match frames x channels");
    if (!(sample_rate_hz > 0.0) || !std::isfinite(sample_rate_hz)) throw InvalidArgument("sample rate must be positive");
    for (double v : data)
        if (!std::isfinite(v)) throw InvalidArgument("series contains non-finite samples");
}

MultichannelSeries MultichannelSeries::slice(std::size_t begin, std::size_t count) const {
    if (count == 0 || begin + count > frames) throw DimensionError("slice out of range");
    MultichannelSeries out = *this;
    out.frames = count;
    out.data.assign(data.begin() + static_cast<std::ptrdiff_t>(begin * channels),
                    data.begin() + static_cast<std::ptrdiff_t>((begin + count) * channels));
    return out;
}

std::size_t ms_to_samples(double ms, double rate_hz) {
    // guard against 199.99999 from binary rounding of exact products
    return static_cast<std::size_t>(std::floor(ms * rate_hz / 1000.0 + 1e-9));
}

MultichannelSeries rectify(const MultichannelSeries& s) {
    if (s.modality != Modality::semg) throw ModalityError("rectify expects sEMG, got " + to_string(s.modality));
    MultichannelSeries out = s;
    for (auto& v : out.data) v = std::abs(v);
    return out;
}

namespace {

template <typename Reduce>
MultichannelSeries trailing_window(const MultichannelSeries& s, double window_ms, Reduce reduce) {
    const std::size_t w = ms_to_samples(window_ms, s.sample_rate_hz);
    if (w < 1) throw InvalidArgument("smoothing window of " + std::to_string(window_ms) + " ms is shorter than one sample");
    MultichannelSeries out = s;
    for (std::size_t c = 0; c < s.channels; ++c) {
        for (std::size_t i = 0; i < s.frames; ++i) {
            const std::size_t lo = i + 1 >= w ? i + 1 - w : 0;
            double acc = 0.0;
            for (std::size_t j = lo; j <= i; ++j) acc += reduce(s.at(j, c));
            out.at(i, c) = acc / static_cast<double>(i - lo + 1);
        }
    }
    return out;
}

}  // namespace

MultichannelSeries moving_rms(const MultichannelSeries& s, double window_ms) {
    MultichannelSeries out = trailing_window(s, window_ms, [](double v) { return v * v; });
    for (auto& v : out.data) v = std::sqrt(v);
    return out;
}

MultichannelSeries moving_average(const MultichannelSeries& s, double window_ms) {
    return trailing_window(s, window_ms, [](double v) { return v; });
}

FirstOrderCoeffs butter1_coeffs(double cutoff_hz, double rate_hz) {
    if (!(cutoff_hz > 0.0) || !(cutoff_hz < rate_hz / 2.0)) {
        throw InvalidArgument("cut-off " + std::to_string(cutoff_hz) + " Hz must lie in (0, Nyquist)");
    }
    const double k = std::tan(std::numbers::pi * cutoff_hz / rate_hz);
    return {k / (k + 1.0), k / (k + 1.0), (k - 1.0) / (k + 1.0)};
}

MultichannelSeries butter_lowpass1(const MultichannelSeries& s, double cutoff_hz) {
    const auto co = butter1_coeffs(cutoff_hz, s.sample_rate_hz);
    MultichannelSeries out = s;
    for (std::size_t c = 0; c < s.channels; ++c) {
        double x_prev = 0.0, y_prev = 0.0;
        for (std::size_t i = 0; i < s.frames; ++i) {
            const double x = s.at(i, c);
            const double y = co.b0 * x + co.b1 * x_prev - co.a1 * y_prev;
            out.at(i, c) = y;
            x_prev = x;
            y_prev = y;
        }
    }
    return out;
}

MultichannelSeries decimate(const MultichannelSeries& s, std::size_t factor) {
    if (factor == 0) throw InvalidArgument("decimation factor must be >= 1");
    if (s.frames < factor) throw InvalidArgument("series shorter than decimation factor");
    MultichannelSeries out = s;
    out.frames = (s.frames + factor - 1) / factor;
    out.sample_rate_hz = s.sample_rate_hz / static_cast<double>(factor);
    out.data.clear();
    out.data.reserve(out.frames * s.channels);
    for (std::size_t i = 0; i < s.frames; i += factor)
        out.data.insert(out.data.end(), s.data.begin() + static_cast<std::ptrdiff_t>(i * s.channels),
                        s.data.begin() + static_cast<std::ptrdiff_t>((i + 1) * s.channels));
    return out;
}

std::vector<SignalWindow> segment_samples(const MultichannelSeries& s, std::size_t k, std::size_t step) {
    if (k < 1 || step < 1) throw InvalidArgument("window and step must be at least one sample");
    if (s.frames < k) {
        throw InvalidArgument("empty segmentation: " + std::to_string(s.frames) + " frames < window " + std::to_string(k));
    }
    const std::size_t count = (s.frames - k) / step + 1;
    std::vector<SignalWindow> out;
    out.reserve(count);
    for (std::size_t w = 0; w < count; ++w) {
        const std::size_t o = w * step;
        SignalWindow win{k, s.channels, {}, o, s.modality};
        win.data.assign(s.data.begin() + static_cast<std::ptrdiff_t>(o * s.channels),
                        s.data.begin() + static_cast<std::ptrdiff_t>((o + k) * s.channels));
        out.push_back(std::move(win));
    }
    return out;
}

std::vector<SignalWindow> segment(const MultichannelSeries& s, double window_ms, double step_ms) {
    return segment_samples(s, ms_to_samples(window_ms, s.sample_rate_hz), ms_to_samples(step_ms, s.sample_rate_hz));
}

ChannelStats fit_stats(std::span<const MultichannelSeries> train) {
    if (train.empty()) throw InvalidArgument("fit_stats needs at least one series");
    const std::size_t ch = train.front().channels;
    ChannelStats st;
    st.min.assign(ch, INFINITY);
    st.max.assign(ch, -INFINITY);
    st.mean.assign(ch, 0.0);
    st.stddev.assign(ch, 0.0);
    double n = 0.0;
    for (const auto& s : train) {
        if (s.channels != ch) throw StatsMismatch("fit_stats: inconsistent channel counts");
        for (std::size_t i = 0; i < s.frames; ++i)
            for (std::size_t c = 0; c < ch; ++c) {
                const double v = s.at(i, c);
                st.min[c] = std::min(st.min[c], v);
                st.max[c] = std::max(st.max[c], v);
                st.mean[c] += v;
            }
        n += static_cast<double>(s.frames);
    }
    for (auto& m : st.mean) m /= n;
    for (const auto& s : train)
        for (std::size_t i = 0; i < s.frames; ++i)
            for (std::size_t c = 0; c < ch; ++c) {
                const double d = s.at(i, c) - st.mean[c];
                st.stddev[c] += d * d;
            }
    for (auto& v : st.stddev) v = std::sqrt(v / n);
    return st;
}

void apply_norm_inplace(std::span<double> values, const ChannelStats& stats, NormMode mode) {
    const std::size_t ch = stats.channels();
    if (ch == 0 || values.size() % ch != 0) throw StatsMismatch("normalization stats do not match channel count");
    for (std::size_t i = 0; i < values.size(); ++i) {
        const std::size_t c = i % ch;
        double& v = values[i];
        if (mode == NormMode::minmax_pm1) {
            const double span = stats.max[c] - stats.min[c];
            v = span > 0.0 ? 2.0 * (v - stats.min[c]) / span - 1.0 : 0.0;
        } else {
            v = stats.stddev[c] > 0.0 ? (v - stats.mean[c]) / stats.stddev[c] : 0.0;
        }
    }
}

void invert_norm_inplace(std::span<double> values, const ChannelStats& stats, NormMode mode) {
    const std::size_t ch = stats.channels();
    if (ch == 0 || values.size() % ch != 0) throw StatsMismatch("normalization stats do not match channel count");
    for (std::size_t i = 0; i < values.size(); ++i) {
        const std::size_t c = i % ch;
        double& v = values[i];
        if (mode == NormMode::minmax_pm1) {
            v = stats.min[c] + (v + 1.0) * 0.5 * (stats.max[c] - stats.min[c]);
        } else {
            v = stats.mean[c] + v * stats.stddev[c];
        }
    }
}

MultichannelSeries apply_norm(const MultichannelSeries& s, const ChannelStats& stats, NormMode mode) {
    if (stats.channels() != s.channels) {
        throw StatsMismatch("stats have " + std::to_string(stats.channels()) + " channels, series has " +
                            std::to_string(s.channels));
    }
    MultichannelSeries out = s;
    apply_norm_inplace(out.data, stats, mode);
    return out;
}

MultichannelSeries gan_chain(const MultichannelSeries& semg, const PreprocessParams& p) {
    if (semg.modality != Modality::semg) throw ModalityError("gan_chain expects sEMG");
    return decimate(moving_rms(semg, p.smoothing_ms), p.decimation);
}

MultichannelSeries hgr_chain(const MultichannelSeries& semg, const PreprocessParams& p) {
    return decimate(butter_lowpass1(rectify(semg), p.cutoff_hz), p.decimation);
}

MultichannelSeries imu_chain(const MultichannelSeries& imu, const PreprocessParams& p) {
    if (imu.modality == Modality::semg) throw ModalityError("imu_chain expects an IMU modality");
    return decimate(moving_average(imu, p.smoothing_ms), p.decimation);
}

}  // namespace vimu
