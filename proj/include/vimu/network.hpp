#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "vimu/rng.hpp"
#include "vimu/tensor.hpp"

namespace vimu {

enum class Mode { train, eval };

enum class LayerKind {
    conv2d,
    tconv2d,
    locally_connected,
    dense,
    batchnorm,
    relu,
    leaky_relu,
    tanh,
    sigmoid,
    softmax,
    dropout,
    flatten,
    reshape,
};

std::string to_string(LayerKind k);

/// Declarative description of one layer. Only the fields relevant to the
/// kind are read.
struct LayerSpec {
    LayerKind kind = LayerKind::relu;
    std::string name;
    std::size_t filters = 0;  // conv maps or dense units
    std::array<std::size_t, 2> kernel{1, 1};
    std::array<std::size_t, 2> stride{1, 1};
    std::array<std::size_t, 2> padding{0, 0};
    std::array<std::size_t, 2> output_padding{0, 0};
    bool same_padding = false;  // conv2d only; odd kernels, stride 1
    double rate = 0.0;          // dropout
    double slope = 0.2;         // leaky relu
    double bn_eps = 1e-5;
    double bn_momentum = 0.9;
    Shape target;  // reshape, per sample

    static LayerSpec conv2d(std::string name, std::size_t maps, std::size_t k, std::size_t stride, bool same);
    static LayerSpec tconv2d(std::string name, std::size_t maps, std::array<std::size_t, 2> k,
                             std::array<std::size_t, 2> stride, std::array<std::size_t, 2> pad,
                             std::array<std::size_t, 2> out_pad);
    static LayerSpec local1x1(std::string name, std::size_t maps);
    static LayerSpec dense(std::string name, std::size_t units);
    static LayerSpec batchnorm(std::string name);
    static LayerSpec dropout(std::string name, double rate);
    static LayerSpec leaky_relu(std::string name, double slope);
    static LayerSpec reshape(std::string name, Shape target);
    static LayerSpec simple(LayerKind kind, std::string name);

    /// Throws ConfigError when hyperparameters are illegal for the kind.
    void validate() const;
};

enum class InitScheme { dcgan_normal, he_normal };
std::string to_string(InitScheme s);

struct InitRecord {
    std::string scheme;
    std::uint64_t seed = 0;
};

template <typename T>
struct ParamEntry {
    Tensor<T> value;
    Tensor<T> grad;
    bool trainable = true;
};

/// Named parameter tensors. Non-trainable entries hold batchnorm running
/// statistics. Iteration is in name order.
template <typename T>
class ParamSet {
public:
    void add(const std::string& name, Tensor<T> value, bool trainable = true);
    bool contains(const std::string& name) const { return entries_.count(name) != 0; }
    ParamEntry<T>& at(const std::string& name);
    const ParamEntry<T>& at(const std::string& name) const;

    std::map<std::string, ParamEntry<T>>& entries() { return entries_; }
    const std::map<std::string, ParamEntry<T>>& entries() const { return entries_; }

    void zero_grad();
    std::size_t trainable_count() const;
    std::size_t count() const;

    /// Copy entries whose name starts with prefix into another set.
    void merge_from(const ParamSet& other, const std::string& prefix = "");

    InitRecord init;

    template <typename U>
    ParamSet<U> cast() const {
        ParamSet<U> out;
        for (const auto& [n, e] : entries_) out.add(n, e.value.template cast<U>(), e.trainable);
        out.init = init;
        return out;
    }

    bool operator==(const ParamSet& o) const;

private:
    std::map<std::string, ParamEntry<T>> entries_;
};

/// One differentiable layer. Forward caches what backward needs, so a layer
/// instance is confined to one thread.
template <typename T>
class Layer {
public:
    explicit Layer(LayerSpec spec) : spec_(std::move(spec)) {}
    virtual ~Layer() = default;
    const LayerSpec& spec() const { return spec_; }

    /// Per-sample output shape; throws DimensionError naming the layer.
    virtual Shape output_shape(const Shape& in) const = 0;
    virtual void init_params(const Shape& /*in*/, ParamSet<T>& /*ps*/, Rng& /*rng*/, InitScheme /*scheme*/) const {}
    virtual Tensor<T> forward(const Tensor<T>& x, ParamSet<T>& ps, Mode mode, Rng& rng) = 0;
    virtual Tensor<T> backward(const Tensor<T>& dy, ParamSet<T>& ps) = 0;

    /// Dropout only: reuse the last mask on subsequent forwards.
    virtual void freeze_mask(bool) {}

protected:
    std::string pname(const char* suffix) const { return spec_.name + "." + suffix; }
    LayerSpec spec_;
};

template <typename T>
std::unique_ptr<Layer<T>> make_layer(const LayerSpec& spec);

/// A chain of layers over a fixed per-sample input shape.
template <typename T>
class Sequential {
public:
    Sequential(std::vector<LayerSpec> specs, Shape input_shape, std::uint64_t dropout_seed = 0);

    const Shape& input_shape() const { return input_shape_; }
    const Shape& output_shape() const { return shapes_.back(); }
    /// Per-sample output shape of every layer, in order.
    const std::vector<Shape>& layer_shapes() const { return shapes_; }
    const std::vector<LayerSpec>& specs() const { return specs_; }

    void init_params(ParamSet<T>& ps, Rng& rng, InitScheme scheme) const;

    /// x has shape [N, input_shape...].
    Tensor<T> forward(ParamSet<T>& ps, const Tensor<T>& x, Mode mode);
    /// Accumulates into parameter gradients and returns d(loss)/d(input).
    Tensor<T> backward(ParamSet<T>& ps, const Tensor<T>& dy);

    void freeze_dropout(bool frozen);
    void reseed_dropout(std::uint64_t seed) { rng_ = Rng(seed); }

private:
    std::vector<LayerSpec> specs_;
    Shape input_shape_;
    std::vector<Shape> shapes_;
    std::vector<std::unique_ptr<Layer<T>>> layers_;
    Rng rng_;
    bool forward_done_ = false;
};

extern template class ParamSet<float>;
extern template class ParamSet<double>;
extern template class Sequential<float>;
extern template class Sequential<double>;

}  // namespace vimu
