#include "vimu/genmodel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "vimu/losses.hpp"

namespace vimu {

namespace {

// Seed tags so generator and discriminator draw from unrelated streams.
constexpr std::uint64_t kGenTag = 0x47454E00;
constexpr std::uint64_t kDiscTag = 0x44495343;
constexpr std::uint64_t kShuffleTag = 0x53485546;
constexpr std::uint64_t kDropTag = 0x44524F50;

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& src, std::span<const std::size_t> idx) {
    Shape s = src.shape();
    s[0] = idx.size();
    const std::size_t row = src.size() / src.dim(0);
    std::vector<T> v(idx.size() * row);
    for (std::size_t i = 0; i < idx.size(); ++i)
        std::copy_n(src.data() + idx[i] * row, row, v.data() + i * row);
    return Tensor<T>(std::move(s), std::move(v));
}

std::vector<double> to_probs(const Tensor<float>& p) { return std::vector<double>(p.storage().begin(), p.storage().end()); }

double mean_of(const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Running statistics are restored around forwards that must not mutate them.
class RunningStatsGuard {
public:
    explicit RunningStatsGuard(ParamSet<float>& ps) : ps_(ps) {
        for (const auto& [n, e] : ps.entries())
            if (!e.trainable) saved_.emplace_back(n, e.value);
    }
    ~RunningStatsGuard() {
        for (auto& [n, v] : saved_) ps_.at(n).value = std::move(v);
    }
    RunningStatsGuard(const RunningStatsGuard&) = delete;
    RunningStatsGuard& operator=(const RunningStatsGuard&) = delete;

private:
    ParamSet<float>& ps_;
    std::vector<std::pair<std::string, Tensor<float>>> saved_;
};

}  // namespace

void GeneratorConfig::validate() const {
    if (k < 1 || c1 < 1 || c2 < 1) throw ConfigError("generator geometry must be positive");
}

void DiscriminatorConfig::validate() const {
    if (k < 3 || c2 < 3) {
        throw ConfigError("discriminator needs k >= 3 and c2 >= 3 for a 3x3 stride-3 valid convolution (got k=" +
                          std::to_string(k) + ", c2=" + std::to_string(c2) + ")");
    }
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("discriminator dropout must lie in [0,1)");
}

void GanTrainConfig::validate() const {
    if (epochs < 0) throw ConfigError("epochs must be non-negative");  // 0 = initialization only
    if (batch_size < 2) throw ConfigError("GAN batch size must be >= 2 for batch statistics");
    if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
}

Shape generator_input_shape(const GeneratorConfig& cfg) { return {1, cfg.k, cfg.c1}; }
Shape imu_window_shape(std::size_t k, std::size_t c2) { return {1, k, c2}; }

std::vector<LayerSpec> generator_layers(const GeneratorConfig& cfg) {
    cfg.validate();
    std::vector<LayerSpec> l;
    const std::size_t maps[3] = {32, 16, 1};
    for (int i = 0; i < 3; ++i) {
        const std::string p = "gen.tconv" + std::to_string(i);
        // height preserved, width doubled
        l.push_back(LayerSpec::tconv2d(p, maps[i], {3, 3}, {1, 2}, {1, 1}, {0, 1}));
        if (i < 2 || cfg.final_bn) l.push_back(LayerSpec::batchnorm("gen.bn" + std::to_string(i)));
        l.push_back(LayerSpec::simple(LayerKind::relu, "gen.relu" + std::to_string(i)));
    }
    l.push_back(LayerSpec::simple(LayerKind::flatten, "gen.flatten"));
    l.push_back(LayerSpec::dense("gen.dense", cfg.dense_units()));
    l.push_back(LayerSpec::simple(LayerKind::tanh, "gen.tanh"));
    l.push_back(LayerSpec::reshape("gen.reshape", imu_window_shape(cfg.k, cfg.c2)));
    return l;
}

std::vector<LayerSpec> discriminator_layers(const DiscriminatorConfig& cfg) {
    cfg.validate();
    std::vector<LayerSpec> l;
    l.push_back(LayerSpec::conv2d("disc.conv", 16, 3, 3, false));
    l.push_back(LayerSpec::batchnorm("disc.bn"));
    l.push_back(LayerSpec::leaky_relu("disc.lrelu", cfg.leaky_slope));
    l.push_back(LayerSpec::dropout("disc.dropout", cfg.dropout));
    l.push_back(LayerSpec::simple(LayerKind::flatten, "disc.flatten"));
    l.push_back(LayerSpec::dense("disc.dense", 1));
    l.push_back(LayerSpec::simple(LayerKind::sigmoid, "disc.sigmoid"));
    return l;
}

ParamSet<float> build_generator(const GeneratorConfig& cfg, std::uint64_t seed) {
    Sequential<float> net(generator_layers(cfg), generator_input_shape(cfg));
    ParamSet<float> ps;
    Rng rng(seed ^ kGenTag);
    net.init_params(ps, rng, InitScheme::dcgan_normal);
    ps.init = {to_string(InitScheme::dcgan_normal), seed};
    return ps;
}

ParamSet<float> build_discriminator(const DiscriminatorConfig& cfg, std::uint64_t seed) {
    Sequential<float> net(discriminator_layers(cfg), imu_window_shape(cfg.k, cfg.c2));
    ParamSet<float> ps;
    Rng rng(seed ^ kDiscTag);
    net.init_params(ps, rng, InitScheme::dcgan_normal);
    ps.init = {to_string(InitScheme::dcgan_normal), seed};
    return ps;
}

double gan_value(std::span<const double> d_real, std::span<const double> d_fake) {
    if (d_real.empty() || d_fake.empty()) throw InvalidArgument("gan_value needs non-empty batches");
    auto mean_log = [](std::span<const double> v, bool complement) {
        double s = 0.0;
        for (double p : v) {
            const double q = std::clamp(p, kProbClamp, 1.0 - kProbClamp);
            s += std::log(complement ? 1.0 - q : q);
        }
        return s / static_cast<double>(v.size());
    };
    return mean_log(d_real, false) + mean_log(d_fake, true);
}

// ---------------------------------------------------------------------------

Gan::Gan(const GeneratorConfig& gcfg, const GanTrainConfig& tcfg)
    : gcfg_(gcfg),
      dcfg_{gcfg.k, gcfg.c2, tcfg.dropout, 0.2},
      tcfg_(tcfg),
      gen_net_(generator_layers(gcfg), generator_input_shape(gcfg)),
      disc_net_(discriminator_layers(dcfg_), imu_window_shape(gcfg.k, gcfg.c2), tcfg.seed ^ kDropTag),
      gen_(build_generator(gcfg, tcfg.seed)),
      disc_(build_discriminator(dcfg_, tcfg.seed)),
      gen_opt_({tcfg.learning_rate, tcfg.beta1, tcfg.beta2, 1e-8}),
      disc_opt_({tcfg.learning_rate, tcfg.beta1, tcfg.beta2, 1e-8}) {
    tcfg.validate();
}

Tensor<float> Gan::generate_train(const Tensor<float>& semg) { return gen_net_.forward(gen_, semg, Mode::train); }

Tensor<float> Gan::generate(const Tensor<float>& semg) { return gen_net_.forward(gen_, semg, Mode::eval); }

namespace {

// real rows first, then fake rows
Tensor<float> stack_rows(const Tensor<float>& a, const Tensor<float>& b) {
    Shape shape = a.shape();
    shape[0] += b.dim(0);
    std::vector<float> v(a.storage().begin(), a.storage().end());
    v.insert(v.end(), b.storage().begin(), b.storage().end());
    return Tensor<float>(shape, std::move(v));
}

}  // namespace

// Real and fake go through the discriminator as one batch so its batchnorm
// sees both populations; separate batches would normalise away the offset
// between them.
GanEpochStats Gan::discriminator_step(const Tensor<float>& real, const Tensor<float>& fake) {
    disc_.zero_grad();
    const std::size_t nr = real.dim(0);
    const Tensor<float> p = disc_net_.forward(disc_, stack_rows(real, fake), Mode::train);
    std::vector<double> target(p.dim(0), 0.0);
    std::fill_n(target.begin(), nr, 1.0);
    auto loss = loss_bce(p, target);
    disc_net_.backward(disc_, loss.grad);
    disc_opt_.step(disc_);

    const auto probs = to_probs(p);
    const std::vector<double> pr(probs.begin(), probs.begin() + static_cast<std::ptrdiff_t>(nr));
    const std::vector<double> pf(probs.begin() + static_cast<std::ptrdiff_t>(nr), probs.end());
    GanEpochStats s;
    s.d_real = mean_of(pr);
    s.d_fake = mean_of(pf);
    s.value = gan_value(pr, pf);
    s.d_loss = -s.value;
    return s;
}

double Gan::generator_step(const Tensor<float>& real, const Tensor<float>& fake) {
    RunningStatsGuard keep(disc_);
    disc_.zero_grad();
    gen_.zero_grad();
    const std::size_t nr = real.dim(0), nf = fake.dim(0);
    const Tensor<float> p = disc_net_.forward(disc_, stack_rows(real, fake), Mode::train);
    const std::vector<float> pv(p.storage().begin() + static_cast<std::ptrdiff_t>(nr), p.storage().end());
    Shape fs = p.shape();
    fs[0] = nf;
    const Tensor<float> p_fake(fs, pv);
    LossResult<float> loss;
    if (tcfg_.generator_loss == GeneratorLoss::nonsaturating) {
        const std::vector<double> ones(nf, 1.0);
        loss = loss_bce(p_fake, ones);
    } else {
        // minimise mean log(1 - D(G(y))) = -bce(p, 0)
        const std::vector<double> zeros(nf, 0.0);
        loss = loss_bce(p_fake, zeros);
        loss.value = -loss.value;
        for (auto& g : loss.grad.storage()) g = -g;
    }
    // real rows carry no loss
    Tensor<float> grad(p.shape());
    std::copy(loss.grad.storage().begin(), loss.grad.storage().end(), grad.storage().begin() + static_cast<std::ptrdiff_t>(nr));
    const Tensor<float> dx = disc_net_.backward(disc_, grad);
    gen_net_.backward(gen_, dx.slice_rows(nr, nf));
    gen_opt_.step(gen_);
    disc_.zero_grad();
    return loss.value;
}

std::vector<double> Gan::discriminate(const Tensor<float>& x, Mode mode) {
    RunningStatsGuard keep(disc_);
    return to_probs(disc_net_.forward(disc_, x, mode));
}

GanResult train_gan(const PairedWindows& pairs, const GeneratorConfig& gcfg, const GanTrainConfig& cfg,
                    const GanProgress& progress) {
    cfg.validate();
    gcfg.validate();
    const std::size_t n = pairs.count();
    if (n < cfg.batch_size) {
        throw InsufficientData("GAN training needs at least " + std::to_string(cfg.batch_size) + " pairs, got " +
                               std::to_string(n));
    }
    if (pairs.semg.shape() != Shape{n, 1, gcfg.k, gcfg.c1} || pairs.imu.shape() != Shape{n, 1, gcfg.k, gcfg.c2}) {
        throw DimensionError("GAN pairs " + shape_str(pairs.semg.shape()) + " / " + shape_str(pairs.imu.shape()) +
                             " do not match generator geometry");
    }

    Gan gan(gcfg, cfg);
    Rng shuffle(cfg.seed ^ kShuffleTag);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    const std::size_t batches = n / cfg.batch_size;

    GanResult res;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle.shuffle(order);
        GanEpochStats acc;
        acc.epoch = epoch;
        for (std::size_t b = 0; b < batches; ++b) {
            const std::span<const std::size_t> idx(order.data() + b * cfg.batch_size, cfg.batch_size);
            const Tensor<float> semg = gather_rows(pairs.semg, idx);
            const Tensor<float> real = gather_rows(pairs.imu, idx);
            const Tensor<float> fake = gan.generate_train(semg);
            const GanEpochStats d = gan.discriminator_step(real, fake);
            const double g = gan.generator_step(real, fake);
            if (!std::isfinite(d.d_loss) || !std::isfinite(g)) {
                throw DivergenceError("GAN loss became non-finite at epoch " + std::to_string(epoch), epoch);
            }
            acc.d_loss += d.d_loss;
            acc.g_loss += g;
            acc.d_real += d.d_real;
            acc.d_fake += d.d_fake;
            acc.value += d.value;
        }
        const double inv = 1.0 / static_cast<double>(batches);
        acc.d_loss *= inv;
        acc.g_loss *= inv;
        acc.d_real *= inv;
        acc.d_fake *= inv;
        acc.value *= inv;
        res.history.push_back(acc);
        if (progress) progress(acc);
    }
    res.generator = gan.generator();
    res.discriminator = gan.discriminator();
    res.generator.zero_grad();
    res.discriminator.zero_grad();
    return res;
}

Tensor<float> generate_normalized(const TrainedGenerator& gen, const Tensor<float>& semg) {
    Sequential<float> net(generator_layers(gen.config), generator_input_shape(gen.config));
    ParamSet<float> ps = gen.params;
    const std::size_t n = semg.dim(0);
    constexpr std::size_t kChunk = 256;
    std::vector<float> out;
    out.reserve(n * gen.config.k * gen.config.c2);
    for (std::size_t i = 0; i < n; i += kChunk) {
        const std::size_t m = std::min(kChunk, n - i);
        const Tensor<float> y = net.forward(ps, semg.slice_rows(i, m), Mode::eval);
        out.insert(out.end(), y.storage().begin(), y.storage().end());
    }
    return Tensor<float>({n, 1, gen.config.k, gen.config.c2}, std::move(out));
}

std::vector<SignalWindow> generate_virtual(const TrainedGenerator& gen, std::span<const SignalWindow> semg,
                                           Modality imu_modality) {
    const auto& cfg = gen.config;
    if (gen.semg_stats.channels() != cfg.c1 || gen.imu_stats.channels() != cfg.c2) {
        throw StatsMismatch("generator normalization stats do not match its channel geometry");
    }
    if (semg.empty()) return {};
    std::vector<float> in;
    in.reserve(semg.size() * cfg.k * cfg.c1);
    std::vector<double> buf;
    for (const auto& w : semg) {
        if (w.k != cfg.k || w.channels != cfg.c1) {
            throw StatsMismatch("sEMG window " + std::to_string(w.k) + "x" + std::to_string(w.channels) +
                                " does not match generator input " + std::to_string(cfg.k) + "x" + std::to_string(cfg.c1));
        }
        buf = w.data;
        apply_norm_inplace(buf, gen.semg_stats, NormMode::zscore);
        in.insert(in.end(), buf.begin(), buf.end());
    }
    const Tensor<float> y = generate_normalized(gen, Tensor<float>({semg.size(), 1, cfg.k, cfg.c1}, std::move(in)));

    std::vector<SignalWindow> out;
    out.reserve(semg.size());
    const std::size_t per = cfg.k * cfg.c2;
    for (std::size_t i = 0; i < semg.size(); ++i) {
        SignalWindow w{cfg.k, cfg.c2, std::vector<double>(y.data() + i * per, y.data() + (i + 1) * per),
                       semg[i].origin_frame, imu_modality};
        invert_norm_inplace(w.data, gen.imu_stats, NormMode::minmax_pm1);
        out.push_back(std::move(w));
    }
    return out;
}

std::vector<double> per_channel_correlation(std::span<const SignalWindow> a, std::span<const SignalWindow> b) {
    if (a.size() != b.size() || a.empty()) throw DimensionError("correlation needs equally sized, non-empty window sets");
    const std::size_t ch = a.front().channels;
    std::vector<double> sa(ch), sb(ch), saa(ch), sbb(ch), sab(ch);
    double n = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].channels != ch || b[i].channels != ch || a[i].k != b[i].k) throw DimensionError("window shape mismatch");
        for (std::size_t f = 0; f < a[i].k; ++f) {
            for (std::size_t c = 0; c < ch; ++c) {
                const double x = a[i].at(f, c), y = b[i].at(f, c);
                sa[c] += x;
                sb[c] += y;
                saa[c] += x * x;
                sbb[c] += y * y;
                sab[c] += x * y;
            }
        }
        n += static_cast<double>(a[i].k);
    }
    std::vector<double> r(ch);
    for (std::size_t c = 0; c < ch; ++c) {
        const double cov = sab[c] / n - (sa[c] / n) * (sb[c] / n);
        const double va = saa[c] / n - (sa[c] / n) * (sa[c] / n);
        const double vb = sbb[c] / n - (sb[c] / n) * (sb[c] / n);
        r[c] = (va > 0.0 && vb > 0.0) ? cov / std::sqrt(va * vb) : 0.0;
    }
    return r;
}

}  // namespace vimu
