#include <algorithm>
#include <cmath>

#include "vimu/kernels.hpp"
#include "vimu/network.hpp"

namespace vimu {

namespace {

[[noreturn]] void dim_fail(const LayerSpec& s, const std::string& what) {
    throw DimensionError("layer '" + s.name + "' (" + to_string(s.kind) + "): " + what);
}

Shape with_batch(std::size_t n, const Shape& s) {
    Shape out{n};
    out.insert(out.end(), s.begin(), s.end());
    return out;
}

template <typename T>
Tensor<T> normal_tensor(Shape s, Rng& rng, double stddev) {
    Tensor<T> t(std::move(s));
    for (auto& v : t.storage()) v = static_cast<T>(rng.normal(0.0, stddev));
    return t;
}

double init_std(InitScheme scheme, std::size_t fan_in) {
    return scheme == InitScheme::dcgan_normal ? 0.02 : std::sqrt(2.0 / static_cast<double>(fan_in));
}

void require_rank(const LayerSpec& s, const Shape& in, std::size_t rank) {
    if (in.size() != rank) dim_fail(s, "expected rank-" + std::to_string(rank) + " input, got " + shape_str(in));
}

// ---------------------------------------------------------------------------

template <typename T>
class Conv2d : public Layer<T> {
public:
    using Layer<T>::Layer;
    using Layer<T>::spec_;

    std::array<std::size_t, 2> pads() const {
        if (!spec_.same_padding) return spec_.padding;
        return {(spec_.kernel[0] - 1) / 2, (spec_.kernel[1] - 1) / 2};
    }

    Shape output_shape(const Shape& in) const override {
        require_rank(spec_, in, 3);
        const auto p = pads();
        const auto h = conv_out_extent(in[1], spec_.kernel[0], spec_.stride[0], p[0]);
        const auto w = conv_out_extent(in[2], spec_.kernel[1], spec_.stride[1], p[1]);
        if (h == 0 || w == 0) dim_fail(spec_, "input " + shape_str(in) + " too small for kernel");
        return {spec_.filters, h, w};
    }

    void init_params(const Shape& in, ParamSet<T>& ps, Rng& rng, InitScheme scheme) const override {
        const std::size_t fan_in = in[0] * spec_.kernel[0] * spec_.kernel[1];
        ps.add(this->pname("weight"),
               normal_tensor<T>({spec_.filters, in[0], spec_.kernel[0], spec_.kernel[1]}, rng, init_std(scheme, fan_in)));
        ps.add(this->pname("bias"), Tensor<T>({spec_.filters}));
    }

    ConvGeom geom(const Shape& xs) const {
        const auto p = pads();
        ConvGeom g;
        g.batch = xs[0];
        g.in_c = xs[1], g.in_h = xs[2], g.in_w = xs[3];
        const Shape o = output_shape({xs[1], xs[2], xs[3]});
        g.out_c = o[0], g.out_h = o[1], g.out_w = o[2];
        g.kh = spec_.kernel[0], g.kw = spec_.kernel[1];
        g.sh = spec_.stride[0], g.sw = spec_.stride[1];
        g.ph = p[0], g.pw = p[1];
        return g;
    }

    Tensor<T> forward(const Tensor<T>& x, ParamSet<T>& ps, Mode, Rng&) override {
        x_ = x;
        const ConvGeom g = geom(x.shape());
        Tensor<T> y({g.batch, g.out_c, g.out_h, g.out_w});
        kernels::conv2d_forward(g, x.data(), ps.at(this->pname("weight")).value.data(),
                                ps.at(this->pname("bias")).value.data(), y.data());
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy, ParamSet<T>& ps) override {
        const ConvGeom g = geom(x_.shape());
        Tensor<T> dx(x_.shape());
        auto& w = ps.at(this->pname("weight"));
        auto& b = ps.at(this->pname("bias"));
        kernels::conv2d_backward(g, x_.data(), w.value.data(), dy.data(), dx.data(), w.grad.data(), b.grad.data());
        return dx;
    }

private:
    Tensor<T> x_;
};

template <typename T>
class TConv2d : public Layer<T> {
public:
    using Layer<T>::Layer;
    using Layer<T>::spec_;

    Shape output_shape(const Shape& in) const override {
        require_rank(spec_, in, 3);
        const auto h = tconv_out_extent(in[1], spec_.kernel[0], spec_.stride[0], spec_.padding[0], spec_.output_padding[0]);
        const auto w = tconv_out_extent(in[2], spec_.kernel[1], spec_.stride[1], spec_.padding[1], spec_.output_padding[1]);
        if (h == 0 || w == 0) dim_fail(spec_, "input " + shape_str(in) + " yields empty output");
        return {spec_.filters, h, w};
    }

    void init_params(const Shape& in, ParamSet<T>& ps, Rng& rng, InitScheme scheme) const override {
        const std::size_t fan_in = in[0] * spec_.kernel[0] * spec_.kernel[1];
        ps.add(this->pname("weight"),
               normal_tensor<T>({in[0], spec_.filters, spec_.kernel[0], spec_.kernel[1]}, rng, init_std(scheme, fan_in)));
        ps.add(this->pname("bias"), Tensor<T>({spec_.filters}));
    }

    ConvGeom geom(const Shape& xs) const {
        ConvGeom g;
        g.batch = xs[0];
        g.in_c = xs[1], g.in_h = xs[2], g.in_w = xs[3];
        const Shape o = output_shape({xs[1], xs[2], xs[3]});
        g.out_c = o[0], g.out_h = o[1], g.out_w = o[2];
        g.kh = spec_.kernel[0], g.kw = spec_.kernel[1];
        g.sh = spec_.stride[0], g.sw = spec_.stride[1];
        g.ph = spec_.padding[0], g.pw = spec_.padding[1];
        return g;
    }

    Tensor<T> forward(const Tensor<T>& x, ParamSet<T>& ps, Mode, Rng&) override {
        x_ = x;
        const ConvGeom g = geom(x.shape());
        Tensor<T> y({g.batch, g.out_c, g.out_h, g.out_w});
        kernels::tconv2d_forward(g, x.data(), ps.at(this->pname("weight")).value.data(),
                                 ps.at(this->pname("bias")).value.data(), y.data());
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy, ParamSet<T>& ps) override {
        const ConvGeom g = geom(x_.shape());
        Tensor<T> dx(x_.shape());
        auto& w = ps.at(this->pname("weight"));
        auto& b = ps.at(this->pname("bias"));
        kernels::tconv2d_backward(g, x_.data(), w.value.data(), dy.data(), dx.data(), w.grad.data(), b.grad.data());
        return dx;
    }

private:
    Tensor<T> x_;
};

// 1x1 filters that are not shared across spatial positions.
template <typename T>
class LocallyConnected : public Layer<T> {
public:
    using Layer<T>::Layer;
    using Layer<T>::spec_;

    Shape output_shape(const Shape& in) const override {
        require_rank(spec_, in, 3);
        return {spec_.filters, in[1], in[2]};
    }

    void init_params(const Shape& in, ParamSet<T>& ps, Rng& rng, InitScheme scheme) const override {
        const std::size_t positions = in[1] * in[2];
        ps.add(this->pname("weight"), normal_tensor<T>({positions, spec_.filters, in[0]}, rng, init_std(scheme, in[0])));
        ps.add(this->pname("bias"), Tensor<T>({positions, spec_.filters}));
    }

    ConvGeom geom(const Shape& xs) const {
        ConvGeom g;
        g.batch = xs[0];
        g.in_c = xs[1], g.in_h = xs[2], g.in_w = xs[3];
        g.out_c = spec_.filters, g.out_h = xs[2], g.out_w = xs[3];
        return g;
    }

    Tensor<T> forward(const Tensor<T>& x, ParamSet<T>& ps, Mode, Rng&) override {
        x_ = x;
        const ConvGeom g = geom(x.shape());
        Tensor<T> y({g.batch, g.out_c, g.out_h, g.out_w});
        kernels::local1x1_forward(g, x.data(), ps.at(this->pname("weight")).value.data(),
                                  ps.at(this->pname("bias")).value.data(), y.data());
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy, ParamSet<T>& ps) override {
        const ConvGeom g = geom(x_.shape());
        Tensor<T> dx(x_.shape());
        auto& w = ps.at(this->pname("weight"));
        auto& b = ps.at(this->pname("bias"));
        kernels::local1x1_backward(g, x_.data(), w.value.data(), dy.data(), dx.data(), w.grad.data(), b.grad.data());
        return dx;
    }

private:
    Tensor<T> x_;
};

template <typename T>
class Dense : public Layer<T> {
public:
    using Layer<T>::Layer;
    using Layer<T>::spec_;

    Shape output_shape(const Shape& in) const override {
        require_rank(spec_, in, 1);
        return {spec_.filters};
    }

    void init_params(const Shape& in, ParamSet<T>& ps, Rng& rng, InitScheme scheme) const override {
        ps.add(this->pname("weight"), normal_tensor<T>({spec_.filters, in[0]}, rng, init_std(scheme, in[0])));
        ps.add(this->pname("bias"), Tensor<T>({spec_.filters}));
    }

    Tensor<T> forward(const Tensor<T>& x, ParamSet<T>& ps, Mode, Rng&) override {
        x_ = x;
        const std::size_t n = x.dim(0), in = x.dim(1);
        Tensor<T> y({n, spec_.filters});
        kernels::dense_forward(n, in, spec_.filters, x.data(), ps.at(this->pname("weight")).value.data(),
                               ps.at(this->pname("bias")).value.data(), y.data());
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy, ParamSet<T>& ps) override {
        const std::size_t n = x_.dim(0), in = x_.dim(1);
        Tensor<T> dx(x_.shape());
        auto& w = ps.at(this->pname("weight"));
        auto& b = ps.at(this->pname("bias"));
        kernels::dense_backward(n, in, spec_.filters, x_.data(), w.value.data(), dy.data(), dx.data(), w.grad.data(),
                                b.grad.data());
        return dx;
    }

private:
    Tensor<T> x_;
};

// Normalizes per channel (rank-3 per-sample input) or per feature (rank 1).
template <typename T>
class BatchNorm : public Layer<T> {
public:
    using Layer<T>::Layer;
    using Layer<T>::spec_;

    Shape output_shape(const Shape& in) const override {
        if (in.size() != 1 && in.size() != 3) dim_fail(spec_, "expected rank 1 or 3 input, got " + shape_str(in));
        return in;
    }

    void init_params(const Shape& in, ParamSet<T>& ps, Rng&, InitScheme) const override {
        const std::size_t c = in[0];
        ps.add(this->pname("gamma"), Tensor<T>({c}, T(1)));
        ps.add(this->pname("beta"), Tensor<T>({c}, T(0)));
        ps.add(this->pname("running_mean"), Tensor<T>({c}, T(0)), false);
        ps.add(this->pname("running_var"), Tensor<T>({c}, T(1)), false);
    }

    Tensor<T> forward(const Tensor<T>& x, ParamSet<T>& ps, Mode mode, Rng&) override {
        n_ = x.dim(0);
        channels_ = x.dim(1);
        inner_ = x.size() / (n_ * channels_);
        mode_ = mode;
        const T* gamma = ps.at(this->pname("gamma")).value.data();
        const T* beta = ps.at(this->pname("beta")).value.data();
        T* rmean = ps.at(this->pname("running_mean")).value.data();
        T* rvar = ps.at(this->pname("running_var")).value.data();
        const double eps = spec_.bn_eps;
        const double mom = spec_.bn_momentum;
        if (mode == Mode::train && n_ * inner_ < 2) dim_fail(spec_, "batch statistics need at least 2 values per channel");

        xhat_ = Tensor<T>(x.shape());
        inv_std_.assign(channels_, T(0));
        Tensor<T> y(x.shape());
        const T* xd = x.data();
        T* xh = xhat_.data();
        T* yd = y.data();
        const std::size_t stride = channels_ * inner_;
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t cc = 0; cc < static_cast<std::ptrdiff_t>(channels_); ++cc) {
            const std::size_t c = static_cast<std::size_t>(cc);
            double mean, var;
            if (mode == Mode::train) {
                double s = 0.0;
                for (std::size_t n = 0; n < n_; ++n)
                    for (std::size_t i = 0; i < inner_; ++i) s += xd[n * stride + c * inner_ + i];
                const double m = static_cast<double>(n_ * inner_);
                mean = s / m;
                double ss = 0.0;
                for (std::size_t n = 0; n < n_; ++n)
                    for (std::size_t i = 0; i < inner_; ++i) {
                        const double d = xd[n * stride + c * inner_ + i] - mean;
                        ss += d * d;
                    }
                var = ss / m;
                rmean[c] = static_cast<T>(mom * rmean[c] + (1.0 - mom) * mean);
                rvar[c] = static_cast<T>(mom * rvar[c] + (1.0 - mom) * var);
            } else {
                mean = rmean[c];
                var = rvar[c];
            }
            const double inv = 1.0 / std::sqrt(var + eps);
            inv_std_[c] = static_cast<T>(inv);
            for (std::size_t n = 0; n < n_; ++n)
                for (std::size_t i = 0; i < inner_; ++i) {
                    const std::size_t idx = n * stride + c * inner_ + i;
                    const T h = static_cast<T>((xd[idx] - mean) * inv);
                    xh[idx] = h;
                    yd[idx] = gamma[c] * h + beta[c];
                }
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy, ParamSet<T>& ps) override {
        const T* gamma = ps.at(this->pname("gamma")).value.data();
        T* dgamma = ps.at(this->pname("gamma")).grad.data();
        T* dbeta = ps.at(this->pname("beta")).grad.data();
        Tensor<T> dx(dy.shape());
        const T* dyd = dy.data();
        const T* xh = xhat_.data();
        T* dxd = dx.data();
        const std::size_t stride = channels_ * inner_;
        const double m = static_cast<double>(n_ * inner_);
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t cc = 0; cc < static_cast<std::ptrdiff_t>(channels_); ++cc) {
            const std::size_t c = static_cast<std::size_t>(cc);
            double sum_dy = 0.0, sum_dy_xh = 0.0;
            for (std::size_t n = 0; n < n_; ++n)
                for (std::size_t i = 0; i < inner_; ++i) {
                    const std::size_t idx = n * stride + c * inner_ + i;
                    sum_dy += dyd[idx];
                    sum_dy_xh += static_cast<double>(dyd[idx]) * xh[idx];
                }
            dgamma[c] += static_cast<T>(sum_dy_xh);
            dbeta[c] += static_cast<T>(sum_dy);
            const double g = gamma[c];
            const double inv = inv_std_[c];
            for (std::size_t n = 0; n < n_; ++n)
                for (std::size_t i = 0; i < inner_; ++i) {
                    const std::size_t idx = n * stride + c * inner_ + i;
                    if (mode_ == Mode::train) {
                        dxd[idx] = static_cast<T>(g * inv / m * (m * dyd[idx] - sum_dy - xh[idx] * sum_dy_xh));
                    } else {
                        dxd[idx] = static_cast<T>(g * inv * dyd[idx]);
                    }
                }
        }
        return dx;
    }

private:
    std::size_t n_ = 0, channels_ = 0, inner_ = 0;
    Mode mode_ = Mode::train;
    Tensor<T> xhat_;
    std::vector<T> inv_std_;
};

template <typename T>
class Elementwise : public Layer<T> {
public:
    using Layer<T>::Layer;
    using Layer<T>::spec_;

    Shape output_shape(const Shape& in) const override { return in; }

    Tensor<T> forward(const Tensor<T>& x, ParamSet<T>&, Mode, Rng&) override {
        Tensor<T> y(x.shape());
        const T* xd = x.data();
        T* yd = y.data();
        const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(x.size());
        const T slope = static_cast<T>(spec_.slope);
        switch (spec_.kind) {
            case LayerKind::relu:
#pragma omp parallel for simd schedule(static)
                for (std::ptrdiff_t i = 0; i < n; ++i) yd[i] = xd[i] > T(0) ? xd[i] : T(0);
                break;
            case LayerKind::leaky_relu:
#pragma omp parallel for simd schedule(static)
                for (std::ptrdiff_t i = 0; i < n; ++i) yd[i] = xd[i] > T(0) ? xd[i] : slope * xd[i];
                break;
            case LayerKind::tanh:
#pragma omp parallel for schedule(static)
                for (std::ptrdiff_t i = 0; i < n; ++i) yd[i] = std::tanh(xd[i]);
                break;
            case LayerKind::sigmoid:
#pragma omp parallel for schedule(static)
                for (std::ptrdiff_t i = 0; i < n; ++i) yd[i] = T(1) / (T(1) + std::exp(-xd[i]));
                break;
            default:
                dim_fail(spec_, "not an elementwise activation");
        }
        x_ = x;
        y_ = y;
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy, ParamSet<T>&) override {
        Tensor<T> dx(dy.shape());
        const T* xd = x_.data();
        const T* yd = y_.data();
        const T* g = dy.data();
        T* out = dx.data();
        const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(dy.size());
        const T slope = static_cast<T>(spec_.slope);
        switch (spec_.kind) {
            case LayerKind::relu:
#pragma omp parallel for simd schedule(static)
                for (std::ptrdiff_t i = 0; i < n; ++i) out[i] = xd[i] > T(0) ? g[i] : T(0);
                break;
            case LayerKind::leaky_relu:
#pragma omp parallel for simd schedule(static)
                for (std::ptrdiff_t i = 0; i < n; ++i) out[i] = xd[i] > T(0) ? g[i] : slope * g[i];
                break;
            case LayerKind::tanh:
#pragma omp parallel for simd schedule(static)
                for (std::ptrdiff_t i = 0; i < n; ++i) out[i] = g[i] * (T(1) - yd[i] * yd[i]);
                break;
            case LayerKind::sigmoid:
#pragma omp parallel for simd schedule(static)
                for (std::ptrdiff_t i = 0; i < n; ++i) out[i] = g[i] * yd[i] * (T(1) - yd[i]);
                break;
            default:
                dim_fail(spec_, "not an elementwise activation");
        }
        return dx;
    }

private:
    Tensor<T> x_, y_;
};

template <typename T>
class Softmax : public Layer<T> {
public:
    using Layer<T>::Layer;
    using Layer<T>::spec_;

    Shape output_shape(const Shape& in) const override {
        require_rank(spec_, in, 1);
        return in;
    }

    Tensor<T> forward(const Tensor<T>& x, ParamSet<T>&, Mode, Rng&) override {
        const std::size_t n = x.dim(0), k = x.dim(1);
        Tensor<T> y(x.shape());
        for (std::size_t r = 0; r < n; ++r) {
            const T* xr = x.data() + r * k;
            T* yr = y.data() + r * k;
            const T mx = *std::max_element(xr, xr + k);
            T s = 0;
            for (std::size_t j = 0; j < k; ++j) s += (yr[j] = std::exp(xr[j] - mx));
            for (std::size_t j = 0; j < k; ++j) yr[j] /= s;
        }
        y_ = y;
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy, ParamSet<T>&) override {
        const std::size_t n = dy.dim(0), k = dy.dim(1);
        Tensor<T> dx(dy.shape());
        for (std::size_t r = 0; r < n; ++r) {
            const T* yr = y_.data() + r * k;
            const T* gr = dy.data() + r * k;
            T dot = 0;
            for (std::size_t j = 0; j < k; ++j) dot += gr[j] * yr[j];
            for (std::size_t j = 0; j < k; ++j) dx[r * k + j] = yr[j] * (gr[j] - dot);
        }
        return dx;
    }

private:
    Tensor<T> y_;
};

// Inverted dropout: kept units are scaled by 1/(1-rate) in train mode.
template <typename T>
class Dropout : public Layer<T> {
public:
    using Layer<T>::Layer;
    using Layer<T>::spec_;

    Shape output_shape(const Shape& in) const override { return in; }

    void freeze_mask(bool f) override { frozen_ = f; }

    Tensor<T> forward(const Tensor<T>& x, ParamSet<T>&, Mode mode, Rng& rng) override {
        mode_ = mode;
        if (mode == Mode::eval || spec_.rate == 0.0) return x;
        if (!frozen_ || mask_.shape() != x.shape()) {
            mask_ = Tensor<T>(x.shape());
            const T keep = static_cast<T>(1.0 / (1.0 - spec_.rate));
            for (auto& m : mask_.storage()) m = rng.uniform() < spec_.rate ? T(0) : keep;
        }
        Tensor<T> y(x.shape());
        for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * mask_[i];
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy, ParamSet<T>&) override {
        if (mode_ == Mode::eval || spec_.rate == 0.0) return dy;
        Tensor<T> dx(dy.shape());
        for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = dy[i] * mask_[i];
        return dx;
    }

private:
    Tensor<T> mask_;
    Mode mode_ = Mode::train;
    bool frozen_ = false;
};

template <typename T>
class Reshape : public Layer<T> {
public:
    using Layer<T>::Layer;
    using Layer<T>::spec_;

    Shape output_shape(const Shape& in) const override {
        if (spec_.kind == LayerKind::flatten) return {shape_size(in)};
        if (shape_size(spec_.target) != shape_size(in))
            dim_fail(spec_, "cannot reshape " + shape_str(in) + " to " + shape_str(spec_.target));
        return spec_.target;
    }

    Tensor<T> forward(const Tensor<T>& x, ParamSet<T>&, Mode, Rng&) override {
        in_shape_ = x.shape();
        Shape per(in_shape_.begin() + 1, in_shape_.end());
        return x.reshaped(with_batch(x.dim(0), output_shape(per)));
    }

    Tensor<T> backward(const Tensor<T>& dy, ParamSet<T>&) override { return dy.reshaped(in_shape_); }

private:
    Shape in_shape_;
};

}  // namespace

template <typename T>
std::unique_ptr<Layer<T>> make_layer(const LayerSpec& spec) {
    spec.validate();
    switch (spec.kind) {
        case LayerKind::conv2d: return std::make_unique<Conv2d<T>>(spec);
        case LayerKind::tconv2d: return std::make_unique<TConv2d<T>>(spec);
        case LayerKind::locally_connected: return std::make_unique<LocallyConnected<T>>(spec);
        case LayerKind::dense: return std::make_unique<Dense<T>>(spec);
        case LayerKind::batchnorm: return std::make_unique<BatchNorm<T>>(spec);
        case LayerKind::relu:
        case LayerKind::leaky_relu:
        case LayerKind::tanh:
        case LayerKind::sigmoid: return std::make_unique<Elementwise<T>>(spec);
        case LayerKind::softmax: return std::make_unique<Softmax<T>>(spec);
        case LayerKind::dropout: return std::make_unique<Dropout<T>>(spec);
        case LayerKind::flatten:
        case LayerKind::reshape: return std::make_unique<Reshape<T>>(spec);
    }
    throw ConfigError("unknown layer kind");
}

template std::unique_ptr<Layer<float>> make_layer<float>(const LayerSpec&);
template std::unique_ptr<Layer<double>> make_layer<double>(const LayerSpec&);

}  // namespace vimu
