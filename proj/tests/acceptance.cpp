// Acceptance checks. One line per criterion: PASS/FAIL, name, measured values.
// Usage: acceptance [--only name[,name...]] [--vimu path/to/vimu] [--desk config.json]
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "vimu/checkpoint.hpp"
#include "vimu/gradcheck.hpp"
#include "vimu/harness.hpp"
#include "vimu/losses.hpp"

using namespace vimu;
namespace fs = std::filesystem;

namespace {

// pinned tolerances
constexpr double kGradTol = 1e-4;
constexpr double kGradStep = 1e-5;
constexpr int kGradConfigs = 20;
constexpr double kGradBudgetS = 120.0;
constexpr double kGanValueTol = 1e-9;
constexpr int kDiscSteps = 10;
constexpr double kDcGainTol = 1e-6;
constexpr double kSignalBudgetS = 10.0;
constexpr int kSeeds = 5;
constexpr double kVirtualGainPp = 2.0;
constexpr double kRealSlackPp = 2.0;
constexpr double kEndToEndBudgetS = 600.0;
constexpr int kMaxGanEpochs = 2000;
constexpr int kClfEpochs = 28;
constexpr double kMinCorrelation = 0.5;
constexpr std::size_t kMaxPairs = 2048;

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Context {
    std::string vimu;
    std::string desk;
    fs::path scratch;
};

std::string fmt(const char* f, double a) {
    char buf[128];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Tensor<double> random_tensor(const Shape& s, Rng& r, double lo = -1.0, double hi = 1.0) {
    Tensor<double> t(s);
    for (auto& v : t.storage()) v = r.uniform(lo, hi);
    return t;
}

// ---------------------------------------------------------------------------
// gradients

struct GradCase {
    std::vector<LayerSpec> layers;
    Shape in;
    LossFn loss;
    std::size_t batch = 3;
};

std::size_t pick(Rng& r, std::size_t lo, std::size_t hi) {
    return lo + static_cast<std::size_t>(r.uniform() * static_cast<double>(hi - lo + 1)) % (hi - lo + 1);
}

GradCase random_case(const std::string& kind, Rng& r) {
    GradCase c;
    const std::size_t ch = pick(r, 1, 3), h = pick(r, 3, 6), w = pick(r, 3, 6);
    c.in = {ch, h, w};
    auto flat_in = [&] { c.in = {pick(r, 2, 7)}; };
    if (kind == "conv2d") {
        const std::size_t k = pick(r, 1, 3), stride = pick(r, 1, 2);
        const bool same = k % 2 == 1 && stride == 1 && r.uniform() < 0.5;
        c.layers = {LayerSpec::conv2d("l", pick(r, 1, 4), k, stride, same)};
    } else if (kind == "tconv2d") {
        const std::array<std::size_t, 2> k{pick(r, 1, 3), pick(r, 1, 3)}, s{pick(r, 1, 2), pick(r, 1, 2)};
        const std::array<std::size_t, 2> p{pick(r, 0, k[0] - 1), pick(r, 0, k[1] - 1)};
        const std::array<std::size_t, 2> op{pick(r, 0, s[0] - 1), pick(r, 0, s[1] - 1)};
        c.layers = {LayerSpec::tconv2d("l", pick(r, 1, 3), k, s, p, op)};
    } else if (kind == "locally_connected") {
        c.layers = {LayerSpec::local1x1("l", pick(r, 1, 4))};
    } else if (kind == "dense") {
        flat_in();
        c.layers = {LayerSpec::dense("l", pick(r, 1, 5))};
    } else if (kind == "batchnorm") {
        c.batch = pick(r, 2, 5);
        c.layers = {LayerSpec::batchnorm("l")};
    } else if (kind == "dropout") {
        c.layers = {LayerSpec::dropout("l", r.uniform(0.1, 0.6))};
    } else if (kind == "relu") {
        c.layers = {LayerSpec::simple(LayerKind::relu, "l")};
    } else if (kind == "leaky_relu") {
        c.layers = {LayerSpec::leaky_relu("l", r.uniform(0.05, 0.5))};
    } else if (kind == "tanh") {
        c.layers = {LayerSpec::simple(LayerKind::tanh, "l")};
    } else if (kind == "sigmoid") {
        c.layers = {LayerSpec::simple(LayerKind::sigmoid, "l")};
    } else if (kind == "softmax") {
        flat_in();
        c.layers = {LayerSpec::simple(LayerKind::softmax, "l")};
    } else if (kind == "flatten") {
        c.layers = {LayerSpec::simple(LayerKind::flatten, "l")};
    } else if (kind == "reshape") {
        c.layers = {LayerSpec::reshape("l", {h * w * ch})};
    } else if (kind == "bce") {
        flat_in();
        c.layers = {LayerSpec::dense("l", 1), LayerSpec::simple(LayerKind::sigmoid, "s")};
        std::vector<double> targets(c.batch);
        for (auto& t : targets) t = r.uniform() < 0.5 ? 0.0 : 1.0;
        c.loss = [targets](const Tensor<double>& out, Tensor<double>& grad) {
            auto l = loss_bce(out, std::span<const double>(targets));
            grad = l.grad;
            return l.value;
        };
    } else if (kind == "xent") {
        flat_in();
        const std::size_t g = pick(r, 2, 5);
        c.layers = {LayerSpec::dense("l", g), LayerSpec::simple(LayerKind::softmax, "s")};
        std::vector<std::size_t> labels(c.batch);
        for (auto& l : labels) l = pick(r, 0, g - 1);
        c.loss = [labels](const Tensor<double>& out, Tensor<double>& grad) {
            auto l = loss_xent(out, std::span<const std::size_t>(labels));
            grad = l.grad;
            return l.value;
        };
    }
    return c;
}

Outcome gradients(const Context&) {
    const std::vector<std::string> kinds{"conv2d", "tconv2d", "locally_connected", "dense",   "batchnorm",
                                         "dropout", "relu",    "leaky_relu",        "tanh",    "sigmoid",
                                         "softmax", "flatten", "reshape",           "bce",     "xent"};
    const auto t0 = std::chrono::steady_clock::now();
    Rng r(20240601);
    double worst = 0.0;
    std::string worst_kind, failed;
    std::size_t checked = 0;
    for (const auto& kind : kinds) {
        int done = 0;
        while (done < kGradConfigs) {
            GradCase c = random_case(kind, r);
            std::unique_ptr<Sequential<double>> net;
            try {
                net = std::make_unique<Sequential<double>>(c.layers, c.in);
            } catch (const Error&) {
                continue;  // geometry too small for this draw
            }
            ParamSet<double> ps;
            Rng init(r.next_u64());
            net->init_params(ps, init, InitScheme::he_normal);
            // move batchnorm affine params off their identity init
            for (auto& [n, e] : ps.entries())
                if (e.trainable)
                    for (auto& v : e.value.storage()) v += r.uniform(-0.3, 0.3);
            Shape xs{c.batch};
            xs.insert(xs.end(), c.in.begin(), c.in.end());
            Tensor<double> x = random_tensor(xs, r);
            if (kind == "relu" || kind == "leaky_relu") {
                // the derivative does not exist at 0; keep probes clear of the kink
                for (auto& v : x.storage())
                    if (std::abs(v) < 10.0 * kGradStep) v = v < 0.0 ? -0.5 : 0.5;
            }
            const auto rep = grad_check(c.layers, c.in, ps, x, kGradTol, c.loss, kGradStep);
            ++checked;
            if (rep.worst > worst) worst = rep.worst, worst_kind = kind;
            if (!rep.passed && failed.find(kind) == std::string::npos) failed += " " + kind;
            ++done;
        }
    }
    const double t = seconds_since(t0);
    Outcome o;
    o.pass = failed.empty() && t < kGradBudgetS;
    o.detail = std::to_string(kinds.size()) + " kinds x " + std::to_string(kGradConfigs) + " configs (" +
               std::to_string(checked) + " checks), worst rel err " + fmt("%.3g", worst) + " (" + worst_kind + "), " +
               fmt("%.1f s", t) + (failed.empty() ? "" : ", failing:" + failed);
    return o;
}

// ---------------------------------------------------------------------------
// shapes

Shape shape_of(const Sequential<float>& net, const std::string& name) {
    for (std::size_t i = 0; i < net.specs().size(); ++i)
        if (net.specs()[i].name == name) return net.layer_shapes()[i];
    return {};
}

Outcome shapes(const Context&) {
    std::vector<std::string> bad;
    std::size_t geometries = 0;
    for (const auto& p : builtin_profiles()) {
        if (p.name == "synthetic") continue;
        ++geometries;
        const std::size_t k = 20, c1 = p.semg_channels, c2 = p.imu_channels;
        auto expect = [&](bool ok, const std::string& what) {
            if (!ok) bad.push_back(p.name + ":" + what);
        };
        const GeneratorConfig g{k, c1, c2, true};
        Sequential<float> gen(generator_layers(g), generator_input_shape(g));
        expect(shape_of(gen, "gen.tconv0") == Shape{32, k, 2 * c1}, "tconv0");
        expect(shape_of(gen, "gen.tconv1") == Shape{16, k, 4 * c1}, "tconv1");
        expect(shape_of(gen, "gen.tconv2") == Shape{1, k, 8 * c1}, "tconv2");
        expect(shape_of(gen, "gen.flatten") == Shape{k * 8 * c1}, "gen.flatten");
        expect(shape_of(gen, "gen.dense") == Shape{k * c2}, "gen.dense");
        expect(gen.output_shape() == Shape{1, k, c2}, "gen.out");
        const ParamSet<float> gp = build_generator(g, 1);
        expect(gp.at("gen.dense.weight").value.size() + gp.at("gen.dense.bias").value.size() ==
                   k * 8 * c1 * k * c2 + k * c2,
               "gen.dense params");

        const std::size_t dh = (k - 3) / 3 + 1, dw = (c2 - 3) / 3 + 1;
        Sequential<float> disc(discriminator_layers({k, c2}), imu_window_shape(k, c2));
        expect(shape_of(disc, "disc.conv") == Shape{16, dh, dw}, "disc.conv");
        expect(shape_of(disc, "disc.flatten") == Shape{16 * dh * dw}, "disc.flatten");
        expect(disc.output_shape() == Shape{1}, "disc.out");

        for (std::size_t c : {c1, c2}) {
            StreamConfig s;
            s.k = k;
            s.channels = c;
            Sequential<float> st(stream_layers(s), {1, k, c});
            for (std::size_t i = 0; i < st.specs().size(); ++i) {
                const auto kind = st.specs()[i].kind;
                if (kind == LayerKind::conv2d || kind == LayerKind::locally_connected || kind == LayerKind::batchnorm)
                    expect(st.layer_shapes()[i][1] == k && st.layer_shapes()[i][2] == c, st.specs()[i].name);
            }
        }
    }
    // DB2 worked example
    const GeneratorConfig db2{20, 12, 36, true};
    Sequential<float> gen(generator_layers(db2), generator_input_shape(db2));
    if (shape_of(gen, "gen.flatten") != Shape{1920} || shape_of(gen, "gen.dense") != Shape{720}) bad.push_back("db2");
    Outcome o;
    o.pass = bad.empty() && geometries == 6;
    o.detail = std::to_string(geometries) + " geometries";
    for (const auto& b : bad) o.detail += ", mismatch " + b;
    return o;
}

// ---------------------------------------------------------------------------
// GAN objective

Outcome gan_sanity(const Context&) {
    const std::vector<double> half{0.5};
    const double v = gan_value(half, half);
    const double err = std::abs(v + 2.0 * std::numbers::ln2);

    const GeneratorConfig g{9, 4, 6, true};
    GanTrainConfig tc;
    tc.seed = 11;
    Gan gan(g, tc);
    gan.freeze_dropout(true);
    Rng r(5);
    Tensor<float> real({16, 1, 9, 6}), fake({16, 1, 9, 6});
    for (auto& x : real.storage()) x = static_cast<float>(r.uniform(0.2, 1.0));
    for (auto& x : fake.storage()) x = static_cast<float>(r.uniform(-1.0, -0.2));
    std::vector<double> values;
    for (int s = 0; s <= kDiscSteps; ++s) values.push_back(gan.discriminator_step(real, fake).value);
    bool monotone = true;
    for (int s = 1; s <= kDiscSteps; ++s) monotone = monotone && values[s] > values[s - 1];
    Outcome o;
    o.pass = err < kGanValueTol && monotone;
    o.detail = "V(0.5,0.5) error " + fmt("%.2g", err) + ", V " + fmt("%.4f", values.front()) + " -> " +
               fmt("%.4f", values.back()) + (monotone ? " monotone" : " NOT monotone") + " over " +
               std::to_string(kDiscSteps) + " steps";
    return o;
}

// ---------------------------------------------------------------------------
// signal chain

MultichannelSeries constant(std::size_t frames, double v, double rate) {
    return MultichannelSeries::make(frames, 2, rate, Modality::semg, std::vector<double>(frames * 2, v));
}

Outcome signal_identities(const Context&) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<std::string> bad;
    for (double v : {0.0, 1.0, 3.5}) {
        for (double x : moving_rms(constant(100, v, 1000.0), 25.0).data)
            if (x != v) bad.push_back("rms");
        for (double x : moving_average(constant(100, v, 1000.0), 25.0).data)
            if (std::abs(x - v) > 1e-12 * std::max(1.0, v)) bad.push_back("mean");
    }
    const auto dc = butter_lowpass1(constant(20000, 1.0, 2000.0), 1.0);
    const double dc_err = std::abs(dc.data.back() - 1.0);
    if (dc_err > kDcGainTol) bad.push_back("dc gain");
    const auto d = decimate(constant(2040, 1.0, 2040.0), 20);
    if (d.frames != 102 || d.sample_rate_hz != 102.0) bad.push_back("decimation");
    for (std::size_t n : {20u, 21u, 57u, 600u})
        for (std::size_t k : {5u, 20u})
            for (std::size_t step : {1u, 3u}) {
                if (n < k) continue;
                const auto w = segment_samples(constant(n, 0.0, 100.0), k, step);
                if (w.size() != (n - k) / step + 1) bad.push_back("window count");
            }
    if (segment(constant(600, 0.0, 100.0), 200.0, 10.0).size() != 581) bad.push_back("581 windows");
    const double t = seconds_since(t0);
    std::sort(bad.begin(), bad.end());
    bad.erase(std::unique(bad.begin(), bad.end()), bad.end());
    Outcome o;
    o.pass = bad.empty() && t < kSignalBudgetS;
    o.detail = "DC gain error " + fmt("%.2g", dc_err) + ", " + fmt("%.2f s", t);
    for (const auto& b : bad) o.detail += ", broken " + b;
    return o;
}

// ---------------------------------------------------------------------------
// splits

struct TableRow {
    std::string profile;
    std::size_t gan_subjects_exp1;
    std::vector<int> train, test;
    std::size_t all_subjects;
};

std::vector<int> range1(std::size_t n) {
    std::vector<int> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<int>(i + 1);
    return v;
}

Outcome splits(const Context&) {
    const std::vector<int> nina_train{1, 3, 4, 6}, nina_test{2, 5};
    const std::vector<TableRow> table{{"femg_vpf", 14, {1, 3}, {2, 4}, 28}, {"db2", 20, nina_train, nina_test, 40},
                                      {"db3", 3, nina_train, nina_test, 6},  {"db5", 5, nina_train, nina_test, 10},
                                      {"db7", 10, nina_train, nina_test, 20}, {"siem", 10, nina_train, nina_test, 20}};
    std::vector<std::string> bad;
    for (const auto& row : table) {
        const DatabaseProfile& p = profile_by_name(row.profile);
        const std::vector<int> subjects = range1(row.all_subjects);
        const std::vector<int> gan_trials = row.profile == "femg_vpf" ? range1(4) : range1(6);
        const std::vector<int> stored = p.trials_used;
        const SplitPlan e1 = make_split(subjects, stored, Experiment::exp1, p);
        const SplitPlan e2 = make_split(subjects, stored, Experiment::exp2, p);
        auto expect = [&](bool ok, const std::string& what) {
            if (!ok) bad.push_back(row.profile + ":" + what);
        };
        expect(e1.gan_subjects.size() == row.gan_subjects_exp1, "exp1 gan subjects");
        expect(e1.recognition_subjects.size() == row.all_subjects - row.gan_subjects_exp1, "exp1 recognition subjects");
        expect(e1.gan_train_trials == gan_trials, "exp1 gan trials");
        expect(e1.clf_train_trials == row.train && e1.clf_test_trials == row.test, "exp1 trials");
        for (int s : e1.gan_subjects)
            expect(std::find(e1.recognition_subjects.begin(), e1.recognition_subjects.end(), s) ==
                       e1.recognition_subjects.end(),
                   "exp1 cohorts overlap");
        expect(e2.gan_subjects == subjects && e2.recognition_subjects == subjects, "exp2 subjects");
        expect(e2.gan_train_trials == row.train, "exp2 gan trials");
        expect(e2.clf_train_trials == row.train && e2.clf_test_trials == row.test, "exp2 trials");
        for (const SplitPlan* plan : {&e1, &e2})
            for (int t : plan->clf_train_trials)
                expect(std::find(plan->clf_test_trials.begin(), plan->clf_test_trials.end(), t) ==
                           plan->clf_test_trials.end(),
                       "train/test overlap");

        // corrupted plan: a test trial slipped into training
        SplitPlan corrupt = e2;
        corrupt.clf_train_trials.push_back(row.test.front());
        LabeledWindow w;
        w.subject = 1;
        w.trial = row.test.front();
        const LabeledWindow* ptr = &w;
        bool caught = false;
        try {
            leakage_guard(corrupt, Role::clf_training, std::span(&ptr, 1));
        } catch (const LeakageError&) {
            caught = true;
        }
        expect(caught, "leakage guard silent");
        caught = false;
        try {
            leakage_guard(corrupt, Role::gan_training, std::span(&ptr, 1));
        } catch (const LeakageError&) {
            caught = true;
        }
        expect(caught, "gan leakage guard silent");
    }
    Outcome o;
    o.pass = bad.empty();
    o.detail = std::to_string(table.size()) + " profiles x 2 experiments";
    for (const auto& b : bad) o.detail += ", " + b;
    return o;
}

// ---------------------------------------------------------------------------
// end to end and cross-modal fidelity share one set of runs

struct SeedRun {
    MetricsReport report;
    double correlation = 0.0;
    double seconds = 0.0;
};

struct DeskRuns {
    ExperimentConfig cfg;
    std::vector<SeedRun> runs;
    std::size_t pairs = 0;
    double seconds = 0.0;
    std::string error;
};

double held_out_correlation(const ExperimentConfig& cfg, const PreparedData& data) {
    const fs::path out(cfg.output_dir);
    const TrainedGenerator gen = load_generator(out / "generator.ckpt", out / "generator.json");
    const auto virt = synthesize_virtual(data, gen);
    std::vector<SignalWindow> fake, real;
    for (std::size_t i = 0; i < data.windows.size(); ++i) {
        const auto& w = data.windows[i];
        if (!virt[i] || !w.imu) continue;
        if (std::find(data.plan.clf_test_trials.begin(), data.plan.clf_test_trials.end(), w.trial) ==
            data.plan.clf_test_trials.end())
            continue;
        fake.push_back(*virt[i]);
        real.push_back(*w.imu);
    }
    const auto r = per_channel_correlation(fake, real);
    double m = 0.0;
    for (double x : r) m += x;
    return m / static_cast<double>(r.size());
}

std::size_t gan_pairs(const PreparedData& data) {
    std::size_t n = 0;
    for (const auto& w : data.windows)
        if (std::find(data.plan.gan_subjects.begin(), data.plan.gan_subjects.end(), w.subject) !=
                data.plan.gan_subjects.end() &&
            std::find(data.plan.gan_train_trials.begin(), data.plan.gan_train_trials.end(), w.trial) !=
                data.plan.gan_train_trials.end())
            ++n;
    return n;
}

DeskRuns& desk_runs(const Context& ctx) {
    static DeskRuns runs;
    static bool done = false;
    if (done) return runs;
    done = true;
    const auto t0 = std::chrono::steady_clock::now();
    try {
        runs.cfg = load_config(ctx.desk);
        const fs::path ds = ctx.scratch / "desk_data";
        fs::remove_all(ds);
        synth_generate(SynthConfig{}, ds);
        runs.cfg.dataset = ds.string();
        for (int seed = 1; seed <= kSeeds; ++seed) {
            const auto ts = std::chrono::steady_clock::now();
            ExperimentConfig c = runs.cfg;
            c.seed = static_cast<std::uint64_t>(seed);
            c.output_dir = (ctx.scratch / ("desk_seed" + std::to_string(seed))).string();
            SeedRun sr;
            sr.report = run_experiment(c, true);
            const PreparedData data = prepare_data(c);
            runs.pairs = gan_pairs(data);
            sr.correlation = held_out_correlation(c, data);
            sr.seconds = seconds_since(ts);
            std::cerr << "  seed " << seed << ": " << fmt("%.1f s", sr.seconds) << ", corr "
                      << fmt("%.3f", sr.correlation);
            for (const auto& a : sr.report.arms) std::cerr << ", " << to_string(a.arm) << fmt(" %.4f", a.mean);
            std::cerr << '\n';
            runs.runs.push_back(std::move(sr));
        }
    } catch (const std::exception& e) {
        runs.error = e.what();
    }
    runs.seconds = seconds_since(t0);
    return runs;
}

double arm_mean(const DeskRuns& d, Arm a) {
    double s = 0.0;
    for (const auto& r : d.runs) s += r.report.find(a)->mean;
    return s / static_cast<double>(d.runs.size());
}

Outcome end_to_end(const Context& ctx) {
    const DeskRuns& d = desk_runs(ctx);
    Outcome o;
    if (!d.error.empty() || d.runs.size() != kSeeds) {
        o.detail = "run failed: " + d.error;
        return o;
    }
    const double uni = 100.0 * arm_mean(d, Arm::unimodal), virt = 100.0 * arm_mean(d, Arm::virtual_multimodal),
                 real = 100.0 * arm_mean(d, Arm::real_multimodal);
    const bool scale = d.cfg.gan.epochs <= kMaxGanEpochs && d.cfg.clf.epochs == kClfEpochs;
    const bool gain = virt - uni >= kVirtualGainPp, close = real >= virt - kRealSlackPp,
               fast = d.seconds < kEndToEndBudgetS;
    o.pass = scale && gain && close && fast;
    o.detail = std::to_string(kSeeds) + " seeds, unimodal " + fmt("%.2f%%", uni) + ", virtual " + fmt("%.2f%%", virt) +
               ", real " + fmt("%.2f%%", real) + "; virtual-unimodal " + fmt("%+.2f pp", virt - uni) +
               " (need >= 2), real-virtual " + fmt("%+.2f pp", real - virt) + " (need >= -2); " +
               std::to_string(d.cfg.gan.epochs) + " GAN epochs, " + std::to_string(d.cfg.clf.epochs) +
               " classifier epochs, " + fmt("%.0f s", d.seconds);
    return o;
}

Outcome fidelity(const Context& ctx) {
    const DeskRuns& d = desk_runs(ctx);
    Outcome o;
    if (!d.error.empty() || d.runs.empty()) {
        o.detail = "run failed: " + d.error;
        return o;
    }
    double m = 0.0, lo = INFINITY;
    for (const auto& r : d.runs) m += r.correlation, lo = std::min(lo, r.correlation);
    m /= static_cast<double>(d.runs.size());
    o.pass = m > kMinCorrelation && d.pairs <= kMaxPairs && d.cfg.gan.epochs <= kMaxGanEpochs;
    o.detail = "mean held-out per-channel correlation " + fmt("%.3f", m) + " (worst seed " + fmt("%.3f", lo) +
               ") over " + std::to_string(d.runs.size()) + " seeds, " + std::to_string(d.pairs) + " training pairs, " +
               std::to_string(d.cfg.gan.epochs) + " GAN epochs";
    return o;
}

// ---------------------------------------------------------------------------
// determinism through the CLI

std::string shell_quote(const std::string& s) { return "'" + s + "'"; }

Outcome determinism(const Context& ctx) {
    Outcome o;
    if (ctx.vimu.empty()) {
        o.detail = "no vimu binary given";
        return o;
    }
    const fs::path root = ctx.scratch / "determinism";
    fs::remove_all(root);
    fs::create_directories(root);
    SynthConfig sc;
    sc.subjects = 2;
    synth_generate(sc, root / "data");
    ExperimentConfig c;
    c.dataset = (root / "data").string();
    c.preprocess.step_ms = 100;
    c.gan.epochs = 3;
    c.gan.batch_size = 16;
    c.clf.epochs = 4;
    c.clf.schedule.decay_epochs = {2, 3};
    c.stream_maps = 8;
    c.stream_dense = 16;
    c.fusion_hidden = 16;
    c.seed = 7;
    {
        std::ofstream f(root / "cfg.json");
        f << config_to_json(c);
    }
    for (const char* run : {"a", "b"}) {
        const std::string cmd = shell_quote(ctx.vimu) + " run -c " + shell_quote((root / "cfg.json").string()) +
                                " -o " + shell_quote((root / run).string()) + " > /dev/null 2>&1";
        if (std::system(cmd.c_str()) != 0) {
            o.detail = "vimu run failed";
            return o;
        }
    }
    std::size_t compared = 0;
    std::vector<std::string> differ;
    bool saw_report = false, saw_ckpt = false;
    for (const auto& e : fs::directory_iterator(root / "a")) {
        const std::string name = e.path().filename().string();
        const fs::path other = root / "b" / name;
        if (!fs::exists(other) || read_file_bytes(e.path()) != read_file_bytes(other)) differ.push_back(name);
        saw_report = saw_report || name == "report.json";
        saw_ckpt = saw_ckpt || e.path().extension() == ".ckpt";
        ++compared;
    }
    o.pass = differ.empty() && saw_report && saw_ckpt;
    o.detail = std::to_string(compared) + " artifacts compared byte for byte";
    for (const auto& d : differ) o.detail += ", differs: " + d;
    fs::remove_all(root);
    return o;
}

// ---------------------------------------------------------------------------
// persistence

template <typename Decode>
bool rejects_all_truncations(const std::vector<std::uint8_t>& bytes, Decode decode) {
    for (std::size_t n = 0; n < bytes.size(); ++n) {
        try {
            decode(std::span(bytes).first(n));
            return false;
        } catch (const FormatError&) {
        }
    }
    return true;
}

template <typename Decode>
bool detects_every_bit_flip(std::vector<std::uint8_t> bytes, Decode decode, std::size_t from) {
    // one flipped bit per byte position past the header
    for (std::size_t i = from; i + 4 < bytes.size(); ++i) {
        bytes[i] ^= 0x10;
        bool caught = false;
        try {
            decode(std::span<const std::uint8_t>(bytes));
        } catch (const ChecksumError&) {
            caught = true;
        } catch (const FormatError&) {
            caught = true;  // structural damage surfaces first
        }
        bytes[i] ^= 0x10;
        if (!caught) return false;
    }
    return true;
}

Outcome persistence(const Context&) {
    std::vector<std::string> bad;
    Rng r(31);
    // trial file
    TrialRecord t;
    std::vector<double> s(50 * 4), m(50 * 3);
    for (auto& v : s) v = static_cast<float>(r.normal());
    for (auto& v : m) v = static_cast<float>(r.normal());
    t.semg = MultichannelSeries::make(50, 4, 200.0, Modality::semg, s);
    t.imu = MultichannelSeries::make(50, 3, 200.0, Modality::euler, m);
    t.subject = 2;
    t.gesture = 1;
    t.trial = 3;
    const TrialMeta meta{2, 1, 3, 200.0, Modality::euler};
    const auto tb = encode_trial(t);
    const TrialRecord back = decode_trial(tb, meta);
    if (back.semg.data != t.semg.data || !back.imu || back.imu->data != t.imu->data || encode_trial(back) != tb)
        bad.push_back("trial round trip");
    auto dtrial = [&](std::span<const std::uint8_t> b) { decode_trial(b, meta); };
    if (!rejects_all_truncations(tb, dtrial)) bad.push_back("trial truncation");
    if (!detects_every_bit_flip(tb, dtrial, 17)) bad.push_back("trial crc");

    // checkpoint
    ParamSet<float> ps;
    Tensor<float> w({3, 2, 2});
    for (auto& v : w.storage()) v = static_cast<float>(r.normal());
    ps.add("a.weight", w);
    ps.add("a.running_mean", Tensor<float>({3}, 0.5f), false);
    const auto cb = encode_checkpoint(ps);
    const ParamSet<float> pb = decode_checkpoint(cb);
    if (!(pb == ps) || encode_checkpoint(pb) != cb) bad.push_back("checkpoint round trip");
    auto dckpt = [](std::span<const std::uint8_t> b) { decode_checkpoint(b); };
    if (!rejects_all_truncations(cb, dckpt)) bad.push_back("checkpoint truncation");
    if (!detects_every_bit_flip(cb, dckpt, 10)) bad.push_back("checkpoint crc");
    const std::string probe = "123456789";
    if (crc32_of(std::span(reinterpret_cast<const std::uint8_t*>(probe.data()), probe.size())) != 0xCBF43926u)
        bad.push_back("crc32 check value");

    Outcome o;
    o.pass = bad.empty();
    o.detail = "trial " + std::to_string(tb.size()) + " B, checkpoint " + std::to_string(cb.size()) +
               " B; every truncation and bit flip rejected";
    if (!bad.empty()) {
        o.detail = "broken:";
        for (const auto& b : bad) o.detail += " " + b;
    }
    return o;
}

// ---------------------------------------------------------------------------
// SGD schedule

Outcome sgd_schedule(const Context&) {
    StreamConfig s;
    s.k = 4;
    s.channels = 3;
    s.maps = 4;
    s.dense_units = 8;
    Classifier m({s}, {8, 2});
    ClfData d;
    Rng r(2);
    Tensor<float> x({16, 1, 4, 3});
    for (auto& v : x.storage()) v = static_cast<float>(r.normal());
    d.inputs.push_back(x);
    for (std::size_t i = 0; i < 16; ++i) d.labels.push_back(i % 2);
    ClfTrainConfig c;
    c.batch_size = 8;
    const ClfResult res = train_classifier(m, m.init_params(1), d, c);
    std::vector<double> expected;
    expected.insert(expected.end(), 16, 0.1);
    expected.insert(expected.end(), 8, 0.1 / 10.0);
    expected.insert(expected.end(), 4, 0.1 / 10.0 / 10.0);
    std::vector<double> got;
    for (const auto& e : res.history) got.push_back(e.learning_rate);
    Outcome o;
    o.pass = got == expected;
    std::ostringstream os;
    os << got.size() << " epochs; rates";
    double last = -1.0;
    int run = 0;
    auto flush = [&] {
        if (run) os << ' ' << run << "x" << last;
    };
    for (double v : got) {
        if (v != last) {
            flush();
            last = v;
            run = 0;
        }
        ++run;
    }
    flush();
    o.detail = os.str();
    return o;
}

struct Criterion {
    const char* name;
    std::function<Outcome(const Context&)> run;
};

}  // namespace

int main(int argc, char** argv) {
    Context ctx;
    std::vector<std::string> only;
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--only" && i + 1 < argc) {
            std::stringstream ss(argv[++i]);
            for (std::string part; std::getline(ss, part, ',');) only.push_back(part);
        } else if (a == "--vimu" && i + 1 < argc) {
            ctx.vimu = argv[++i];
        } else if (a == "--desk" && i + 1 < argc) {
            ctx.desk = argv[++i];
        } else {
            std::cerr << "usage: acceptance [--only names] [--vimu path] [--desk config.json]\n";
            return 1;
        }
    }
    ctx.scratch = fs::temp_directory_path() / ("vimu_acceptance_" + std::to_string(::getpid()));
    fs::create_directories(ctx.scratch);

    const std::vector<Criterion> criteria{
        {"gradients", gradients},       {"shapes", shapes},
        {"gan_objective", gan_sanity},  {"signal_chain", signal_identities},
        {"splits", splits},             {"end_to_end_ordering", end_to_end},
        {"cross_modal_fidelity", fidelity}, {"determinism", determinism},
        {"persistence", persistence},   {"sgd_schedule", sgd_schedule},
    };
    int failed = 0;
    for (const auto& c : criteria) {
        if (!only.empty() && std::find(only.begin(), only.end(), c.name) == only.end()) continue;
        Outcome o;
        try {
            o = c.run(ctx);
        } catch (const std::exception& e) {
            o.detail = std::string("exception: ") + e.what();
        }
        std::cout << (o.pass ? "PASS " : "FAIL ") << c.name << ": " << o.detail << std::endl;
        failed += !o.pass;
    }
    fs::remove_all(ctx.scratch);
    return failed == 0 ? 0 : 1;
}
