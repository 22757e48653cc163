#include "vimu/fusionclf.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "vimu/losses.hpp"

namespace vimu {

namespace {

constexpr std::uint64_t kShuffleTag = 0xC1F5;
constexpr std::size_t kPredictChunk = 256;

std::uint64_t name_key(const std::string& s) {
    // FNV-1a; keys the init stream by parameter prefix
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) h = (h ^ c) * 0x100000001b3ull;
    return h;
}

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& src, std::span<const std::size_t> idx) {
    Shape s = src.shape();
    s[0] = idx.size();
    const std::size_t row = src.size() / src.dim(0);
    std::vector<T> v(idx.size() * row);
    for (std::size_t i = 0; i < idx.size(); ++i) std::copy_n(src.data() + idx[i] * row, row, v.data() + i * row);
    return Tensor<T>(std::move(s), std::move(v));
}

std::vector<Sequential<float>> make_streams(const std::vector<StreamConfig>& cfgs, std::uint64_t seed) {
    std::vector<Sequential<float>> out;
    for (const auto& c : cfgs) out.emplace_back(stream_layers(c), Shape{1, c.k, c.channels}, seed ^ name_key(c.name));
    return out;
}

std::size_t concat_width(const std::vector<StreamConfig>& cfgs) {
    std::size_t w = 0;
    for (const auto& c : cfgs) w += c.dense_units;
    return w;
}

}  // namespace

void StreamConfig::validate() const {
    if (name.empty() || name == "head") throw ConfigError("stream needs a distinct name");
    if (k < 1 || channels < 1 || maps < 1 || dense_units < 1) throw ConfigError("stream dimensions must be >= 1");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("stream dropout must lie in [0,1)");
}

void FusionConfig::validate() const {
    if (classes < 2) throw ConfigError("classifier needs at least two classes");
    if (hidden < 1) throw ConfigError("fusion hidden width must be >= 1");
}

void ClfTrainConfig::validate() const {
    if (batch_size < 2) throw ConfigError("classifier batch size must be >= 2");
    if (epochs < 0) throw ConfigError("classifier epochs must be non-negative");
    for (int e : schedule.decay_epochs)
        if (e < 0 || (epochs > 0 && e >= epochs)) throw ConfigError("decay epochs must lie before the last epoch");
}

std::vector<LayerSpec> stream_layers(const StreamConfig& c) {
    c.validate();
    const std::string& p = c.name;
    std::vector<LayerSpec> l;
    l.push_back(LayerSpec::batchnorm(p + ".bn_in"));
    for (int i = 0; i < 2; ++i) {
        const std::string n = std::to_string(i);
        l.push_back(LayerSpec::conv2d(p + ".conv" + n, c.maps, 3, 1, true));
        l.push_back(LayerSpec::batchnorm(p + ".conv" + n + "_bn"));
        l.push_back(LayerSpec::simple(LayerKind::relu, p + ".conv" + n + "_relu"));
    }
    for (int i = 0; i < 2; ++i) {
        const std::string n = std::to_string(i);
        l.push_back(LayerSpec::local1x1(p + ".lc" + n, c.maps));
        l.push_back(LayerSpec::batchnorm(p + ".lc" + n + "_bn"));
        l.push_back(LayerSpec::simple(LayerKind::relu, p + ".lc" + n + "_relu"));
    }
    l.push_back(LayerSpec::simple(LayerKind::flatten, p + ".flatten"));
    l.push_back(LayerSpec::dense(p + ".dense", c.dense_units));
    l.push_back(LayerSpec::dropout(p + ".dropout", c.dropout));
    return l;
}

std::vector<LayerSpec> fusion_layers(const FusionConfig& c) {
    c.validate();
    return {
        LayerSpec::simple(LayerKind::relu, "head.relu_in"),
        LayerSpec::dense("head.dense", c.hidden),
        LayerSpec::batchnorm("head.bn"),
        LayerSpec::simple(LayerKind::relu, "head.relu"),
        LayerSpec::dense("head.out", c.classes),
        LayerSpec::simple(LayerKind::softmax, "head.softmax"),
    };
}

// ---------------------------------------------------------------------------

ClfData ClfData::subset(std::span<const std::size_t> idx) const {
    ClfData out;
    for (const auto& t : inputs) out.inputs.push_back(gather_rows(t, idx));
    for (std::size_t i : idx) out.labels.push_back(labels.at(i));
    return out;
}

ClfData ClfData::concat(std::span<const ClfData> parts) {
    ClfData out;
    std::vector<std::vector<float>> buf;
    std::vector<Shape> shapes;
    for (const auto& p : parts) {
        if (p.size() == 0) continue;
        if (buf.empty()) {
            buf.resize(p.inputs.size());
            for (const auto& t : p.inputs) shapes.push_back(t.shape());
            for (auto& s : shapes) s[0] = 0;
        }
        if (p.inputs.size() != buf.size()) throw DimensionError("cannot concatenate datasets with different streams");
        for (std::size_t s = 0; s < buf.size(); ++s) {
            const auto& t = p.inputs[s];
            if (!std::equal(t.shape().begin() + 1, t.shape().end(), shapes[s].begin() + 1, shapes[s].end())) {
                throw DimensionError("cannot concatenate windows of different geometry");
            }
            buf[s].insert(buf[s].end(), t.storage().begin(), t.storage().end());
            shapes[s][0] += t.dim(0);
        }
        out.labels.insert(out.labels.end(), p.labels.begin(), p.labels.end());
    }
    for (std::size_t s = 0; s < buf.size(); ++s) out.inputs.emplace_back(shapes[s], std::move(buf[s]));
    return out;
}

// ---------------------------------------------------------------------------

Classifier::Classifier(std::vector<StreamConfig> streams, FusionConfig fusion, std::uint64_t dropout_seed)
    : stream_cfgs_(std::move(streams)),
      fusion_cfg_(fusion),
      streams_(make_streams(stream_cfgs_, dropout_seed)),
      head_(fusion_layers(fusion_cfg_), Shape{concat_width(stream_cfgs_)}, dropout_seed ^ name_key("head")) {
    if (stream_cfgs_.empty() || stream_cfgs_.size() > 2) throw ConfigError("classifier takes one or two streams");
    for (std::size_t i = 1; i < stream_cfgs_.size(); ++i) {
        if (stream_cfgs_[i].k != stream_cfgs_[0].k) throw ConfigError("streams must share the window length k");
        if (stream_cfgs_[i].name == stream_cfgs_[0].name) throw ConfigError("stream names must differ");
    }
    for (std::size_t i = 0; i < streams_.size(); ++i) {
        // conv same-padding and 1x1 LC keep the k x C grid
        const auto& shapes = streams_[i].layer_shapes();
        const Shape grid{stream_cfgs_[i].maps, stream_cfgs_[i].k, stream_cfgs_[i].channels};
        for (std::size_t j = 1; j + 3 < shapes.size(); ++j) {
            if (shapes[j] != grid) throw DimensionError("stream " + stream_cfgs_[i].name + " does not preserve k x C");
        }
    }
}

ParamSet<float> Classifier::init_params(std::uint64_t seed) const {
    ParamSet<float> ps;
    for (std::size_t i = 0; i < streams_.size(); ++i) {
        Rng rng(seed ^ name_key(stream_cfgs_[i].name));
        streams_[i].init_params(ps, rng, InitScheme::he_normal);
    }
    Rng rng(seed ^ name_key("head"));
    head_.init_params(ps, rng, InitScheme::he_normal);
    ps.init = {to_string(InitScheme::he_normal), seed};
    return ps;
}

Tensor<float> Classifier::stream_forward(std::size_t s, ParamSet<float>& ps, const Tensor<float>& x, Mode mode) {
    return streams_.at(s).forward(ps, x, mode);
}

Tensor<float> Classifier::forward(ParamSet<float>& ps, std::span<const Tensor<float>> inputs, Mode mode) {
    if (inputs.size() != streams_.size()) {
        throw DimensionError("classifier expects " + std::to_string(streams_.size()) + " input streams, got " +
                             std::to_string(inputs.size()));
    }
    const std::size_t n = inputs[0].dim(0);
    for (const auto& x : inputs)
        if (x.rank() == 0 || x.dim(0) != n) throw DimensionError("streams disagree on batch size");
    if (streams_.size() == 1) return head_.forward(ps, streams_[0].forward(ps, inputs[0], mode), mode);

    const std::size_t width = concat_width(stream_cfgs_);
    Tensor<float> cat({n, width});
    std::size_t col = 0;
    for (std::size_t s = 0; s < streams_.size(); ++s) {
        const Tensor<float> f = streams_[s].forward(ps, inputs[s], mode);
        const std::size_t d = stream_cfgs_[s].dense_units;
        for (std::size_t i = 0; i < n; ++i) std::copy_n(f.data() + i * d, d, cat.data() + i * width + col);
        col += d;
    }
    return head_.forward(ps, cat, mode);
}

void Classifier::backward(ParamSet<float>& ps, const Tensor<float>& dprobs) {
    const Tensor<float> dcat = head_.backward(ps, dprobs);
    if (streams_.size() == 1) {
        streams_[0].backward(ps, dcat);
        return;
    }
    const std::size_t n = dcat.dim(0), width = dcat.dim(1);
    std::size_t col = 0;
    for (std::size_t s = 0; s < streams_.size(); ++s) {
        const std::size_t d = stream_cfgs_[s].dense_units;
        Tensor<float> part({n, d});
        for (std::size_t i = 0; i < n; ++i) std::copy_n(dcat.data() + i * width + col, d, part.data() + i * d);
        streams_[s].backward(ps, part);
        col += d;
    }
}

void Classifier::reseed_dropout(std::uint64_t seed) {
    for (std::size_t i = 0; i < streams_.size(); ++i) streams_[i].reseed_dropout(seed ^ name_key(stream_cfgs_[i].name));
    head_.reseed_dropout(seed ^ name_key("head"));
}

ParamSet<float> build_multimodal(const StreamConfig& semg, const StreamConfig& imu, const FusionConfig& fusion,
                                 std::uint64_t seed) {
    return Classifier({semg, imu}, fusion).init_params(seed);
}

ParamSet<float> build_unimodal(const StreamConfig& semg, const FusionConfig& fusion, std::uint64_t seed) {
    return Classifier({semg}, fusion).init_params(seed);
}

// ---------------------------------------------------------------------------

std::size_t argmax_lowest(std::span<const float> row) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < row.size(); ++i)
        if (row[i] > row[best]) best = i;
    return best;
}

ClfResult train_classifier(Classifier& model, ParamSet<float> params, const ClfData& train, const ClfTrainConfig& cfg,
                           const ClfProgress& progress) {
    cfg.validate();
    if (train.size() == 0) throw InsufficientData("empty classifier training set");
    if (train.size() < 2) throw InsufficientData("classifier training needs at least two windows");
    for (std::size_t l : train.labels)
        if (l >= model.fusion().classes) throw LabelError("label " + std::to_string(l) + " out of range");

    model.reseed_dropout(cfg.seed);
    Rng shuffle(cfg.seed ^ kShuffleTag);
    Sgd<float> sgd(cfg.schedule);
    const std::size_t n = train.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    // batch boundaries; a lone trailing example joins the previous batch
    std::vector<std::size_t> bounds;
    for (std::size_t b = 0; b < n; b += cfg.batch_size) bounds.push_back(b);
    if (bounds.size() > 1 && n - bounds.back() < 2) bounds.pop_back();
    bounds.push_back(n);

    ClfResult res;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle.shuffle(order);
        double loss_sum = 0.0;
        std::size_t correct = 0;
        for (std::size_t b = 0; b + 1 < bounds.size(); ++b) {
            const std::span<const std::size_t> idx(order.data() + bounds[b], bounds[b + 1] - bounds[b]);
            const ClfData batch = train.subset(idx);
            params.zero_grad();
            const Tensor<float> probs = model.forward(params, batch.inputs, Mode::train);
            const auto loss = loss_xent(probs, batch.labels);
            if (!std::isfinite(loss.value)) {
                throw DivergenceError("classifier loss became non-finite at epoch " + std::to_string(epoch), epoch);
            }
            model.backward(params, loss.grad);
            sgd.step(params, epoch);
            loss_sum += loss.value * static_cast<double>(idx.size());
            const std::size_t g = model.fusion().classes;
            for (std::size_t i = 0; i < idx.size(); ++i)
                correct += argmax_lowest(std::span(probs.data() + i * g, g)) == batch.labels[i];
        }
        ClfEpoch e{epoch, cfg.schedule.rate(epoch), loss_sum / static_cast<double>(n),
                   static_cast<double>(correct) / static_cast<double>(n)};
        res.history.push_back(e);
        if (progress) progress(e);
    }
    params.zero_grad();
    res.params = std::move(params);
    return res;
}

ClfResult pretrain_then_finetune(Classifier& model, ParamSet<float> params, const ClfData& all_train,
                                 const ClfData& subject_train, const ClfTrainConfig& cfg) {
    if (!cfg.pretrain) return train_classifier(model, std::move(params), subject_train, cfg);
    ClfResult pre = train_classifier(model, std::move(params), all_train, cfg);
    ClfResult fine = train_classifier(model, std::move(pre.params), subject_train, cfg);
    pre.history.insert(pre.history.end(), fine.history.begin(), fine.history.end());
    fine.history = std::move(pre.history);
    return fine;
}

Prediction predict(Classifier& model, ParamSet<float>& params, std::span<const Tensor<float>> inputs) {
    if (inputs.empty() || inputs[0].rank() == 0) throw DimensionError("predict needs at least one input stream");
    const std::size_t n = inputs[0].dim(0), g = model.fusion().classes;
    Prediction p;
    std::vector<float> all;
    all.reserve(n * g);
    for (std::size_t i = 0; i < n; i += kPredictChunk) {
        const std::size_t m = std::min(kPredictChunk, n - i);
        std::vector<Tensor<float>> chunk;
        for (const auto& x : inputs) chunk.push_back(x.slice_rows(i, m));
        const Tensor<float> probs = model.forward(params, chunk, Mode::eval);
        all.insert(all.end(), probs.storage().begin(), probs.storage().end());
    }
    p.probs = Tensor<float>({n, g}, std::move(all));
    for (std::size_t i = 0; i < n; ++i) {
        const std::span<const float> row(p.probs.data() + i * g, g);
        const std::size_t c = argmax_lowest(row);
        p.classes.push_back(c);
        p.max_prob.push_back(row[c]);
    }
    return p;
}

}  // namespace vimu
