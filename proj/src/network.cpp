#include "vimu/network.hpp"

namespace vimu {

std::string to_string(LayerKind k) {
    switch (k) {
        case LayerKind::conv2d: return "conv2d";
        case LayerKind::tconv2d: return "tconv2d";
        case LayerKind::locally_connected: return "locally_connected";
        case LayerKind::dense: return "dense";
        case LayerKind::batchnorm: return "batchnorm";
        case LayerKind::relu: return "relu";
        case LayerKind::leaky_relu: return "leaky_relu";
        case LayerKind::tanh: return "tanh";
        case LayerKind::sigmoid: return "sigmoid";
        case LayerKind::softmax: return "softmax";
        case LayerKind::dropout: return "dropout";
        case LayerKind::flatten: return "flatten";
        case LayerKind::reshape: return "reshape";
    }
    return "?";
}

std::string to_string(InitScheme s) { return s == InitScheme::dcgan_normal ? "normal(0,0.02)" : "he_normal"; }

LayerSpec LayerSpec::conv2d(std::string name, std::size_t maps, std::size_t k, std::size_t stride, bool same) {
    LayerSpec s;
    s.kind = LayerKind::conv2d;
    s.name = std::move(name);
    s.filters = maps;
    s.kernel = {k, k};
    s.stride = {stride, stride};
    s.same_padding = same;
    return s;
}

LayerSpec LayerSpec::tconv2d(std::string name, std::size_t maps, std::array<std::size_t, 2> k,
                             std::array<std::size_t, 2> stride, std::array<std::size_t, 2> pad,
                             std::array<std::size_t, 2> out_pad) {
    LayerSpec s;
    s.kind = LayerKind::tconv2d;
    s.name = std::move(name);
    s.filters = maps;
    s.kernel = k;
    s.stride = stride;
    s.padding = pad;
    s.output_padding = out_pad;
    return s;
}

LayerSpec LayerSpec::local1x1(std::string name, std::size_t maps) {
    LayerSpec s;
    s.kind = LayerKind::locally_connected;
    s.name = std::move(name);
    s.filters = maps;
    return s;
}

LayerSpec LayerSpec::dense(std::string name, std::size_t units) {
    LayerSpec s;
    s.kind = LayerKind::dense;
    s.name = std::move(name);
    s.filters = units;
    return s;
}

LayerSpec LayerSpec::batchnorm(std::string name) { return simple(LayerKind::batchnorm, std::move(name)); }

LayerSpec LayerSpec::dropout(std::string name, double rate) {
    LayerSpec s = simple(LayerKind::dropout, std::move(name));
    s.rate = rate;
    return s;
}

LayerSpec LayerSpec::leaky_relu(std::string name, double slope) {
    LayerSpec s = simple(LayerKind::leaky_relu, std::move(name));
    s.slope = slope;
    return s;
}

LayerSpec LayerSpec::reshape(std::string name, Shape target) {
    LayerSpec s = simple(LayerKind::reshape, std::move(name));
    s.target = std::move(target);
    return s;
}

LayerSpec LayerSpec::simple(LayerKind kind, std::string name) {
    LayerSpec s;
    s.kind = kind;
    s.name = std::move(name);
    return s;
}

void LayerSpec::validate() const {
    auto fail = [&](const std::string& w) { throw ConfigError("layer '" + name + "': " + w); };
    switch (kind) {
        case LayerKind::conv2d:
        case LayerKind::tconv2d:
            if (filters == 0) fail("filter count must be positive");
            if (kernel[0] == 0 || kernel[1] == 0) fail("kernel must be positive");
            if (stride[0] == 0 || stride[1] == 0) fail("stride components must be >= 1");
            if (kind == LayerKind::conv2d && same_padding && (kernel[0] % 2 == 0 || kernel[1] % 2 == 0 || stride[0] != 1 || stride[1] != 1))
                fail("same padding needs odd kernels and stride 1");
            if (kind == LayerKind::tconv2d && (output_padding[0] >= stride[0] || output_padding[1] >= stride[1]))
                fail("output padding must be smaller than stride");
            break;
        case LayerKind::locally_connected:
        case LayerKind::dense:
            if (filters == 0) fail("unit count must be positive");
            break;
        case LayerKind::dropout:
            if (!(rate >= 0.0 && rate < 1.0)) fail("dropout rate must lie in [0,1)");
            break;
        case LayerKind::batchnorm:
            if (!(bn_eps > 0.0) || !(bn_momentum >= 0.0 && bn_momentum < 1.0)) fail("bad batchnorm eps/momentum");
            break;
        case LayerKind::reshape:
            if (target.empty()) fail("reshape target missing");
            break;
        default:
            break;
    }
}

// ---------------------------------------------------------------------------

template <typename T>
void ParamSet<T>::add(const std::string& name, Tensor<T> value, bool trainable) {
    Tensor<T> grad(value.shape());
    entries_.insert_or_assign(name, ParamEntry<T>{std::move(value), std::move(grad), trainable});
}

template <typename T>
ParamEntry<T>& ParamSet<T>::at(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw StateError("unknown parameter '" + name + "'");
    return it->second;
}

template <typename T>
const ParamEntry<T>& ParamSet<T>::at(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw StateError("unknown parameter '" + name + "'");
    return it->second;
}

template <typename T>
void ParamSet<T>::zero_grad() {
    for (auto& [n, e] : entries_) e.grad.fill(T(0));
}

template <typename T>
std::size_t ParamSet<T>::trainable_count() const {
    std::size_t c = 0;
    for (const auto& [n, e] : entries_)
        if (e.trainable) c += e.value.size();
    return c;
}

template <typename T>
std::size_t ParamSet<T>::count() const {
    std::size_t c = 0;
    for (const auto& [n, e] : entries_) c += e.value.size();
    return c;
}

template <typename T>
void ParamSet<T>::merge_from(const ParamSet& other, const std::string& prefix) {
    for (const auto& [n, e] : other.entries_) {
        if (n.rfind(prefix, 0) == 0) entries_.insert_or_assign(n, e);
    }
}

template <typename T>
bool ParamSet<T>::operator==(const ParamSet& o) const {
    if (entries_.size() != o.entries_.size()) return false;
    for (auto a = entries_.begin(), b = o.entries_.begin(); a != entries_.end(); ++a, ++b) {
        if (a->first != b->first || !(a->second.value == b->second.value) || a->second.trainable != b->second.trainable)
            return false;
    }
    return true;
}

// ---------------------------------------------------------------------------

template <typename T>
Sequential<T>::Sequential(std::vector<LayerSpec> specs, Shape input_shape, std::uint64_t dropout_seed)
    : specs_(std::move(specs)), input_shape_(std::move(input_shape)), rng_(dropout_seed) {
    if (specs_.empty()) throw ConfigError("network needs at least one layer");
    Shape cur = input_shape_;
    for (const auto& s : specs_) {
        layers_.push_back(make_layer<T>(s));
        cur = layers_.back()->output_shape(cur);
        shapes_.push_back(cur);
    }
}

template <typename T>
void Sequential<T>::init_params(ParamSet<T>& ps, Rng& rng, InitScheme scheme) const {
    Shape cur = input_shape_;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        layers_[i]->init_params(cur, ps, rng, scheme);
        cur = shapes_[i];
    }
}

template <typename T>
Tensor<T> Sequential<T>::forward(ParamSet<T>& ps, const Tensor<T>& x, Mode mode) {
    Shape per(x.shape().begin() + (x.rank() ? 1 : 0), x.shape().end());
    if (x.rank() == 0 || per != input_shape_) {
        throw DimensionError("layer '" + specs_.front().name + "' (" + to_string(specs_.front().kind) +
                             "): expected per-sample input " + shape_str(input_shape_) + ", got " + shape_str(x.shape()));
    }
    Tensor<T> cur = x;
    for (auto& l : layers_) cur = l->forward(cur, ps, mode, rng_);
    forward_done_ = true;
    return cur;
}

template <typename T>
Tensor<T> Sequential<T>::backward(ParamSet<T>& ps, const Tensor<T>& dy) {
    if (!forward_done_) throw StateError("backward called before forward");
    Tensor<T> cur = dy;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) cur = (*it)->backward(cur, ps);
    return cur;
}

template <typename T>
void Sequential<T>::freeze_dropout(bool frozen) {
    for (auto& l : layers_) l->freeze_mask(frozen);
}

template class ParamSet<float>;
template class ParamSet<double>;
template class Sequential<float>;
template class Sequential<double>;

}  // namespace vimu
