#include "vimu/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "vimu/checkpoint.hpp"

namespace vimu {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string to_string(Arm a) {
    switch (a) {
        case Arm::unimodal: return "unimodal";
        case Arm::virtual_multimodal: return "virtual_multimodal";
        case Arm::real_multimodal: return "real_multimodal";
    }
    return "?";
}

Arm arm_from_string(const std::string& s) {
    if (s == "unimodal") return Arm::unimodal;
    if (s == "virtual_multimodal" || s == "virtual") return Arm::virtual_multimodal;
    if (s == "real_multimodal" || s == "real") return Arm::real_multimodal;
    throw ConfigError("unknown arm '" + s + "'");
}

namespace {

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) h = (h ^ c) * 0x100000001b3ull;
    return h;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

// Per-purpose seeds derived from the experiment seed.
std::uint64_t derive(std::uint64_t seed, std::uint64_t tag, std::uint64_t extra = 0) {
    std::uint64_t z = seed * 0x9E3779B97F4A7C15ull + tag * 0xBF58476D1CE4E5B9ull + extra;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

bool contains(const std::vector<int>& v, int x) { return std::find(v.begin(), v.end(), x) != v.end(); }

void reject_unknown(const json& j, std::initializer_list<const char*> keys, const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : keys) ok = ok || it.key() == k;
        if (!ok) throw ConfigError("unknown config key '" + where + it.key() + "'");
    }
}

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

json stats_to_json(const ChannelStats& s) {
    return {{"min", s.min}, {"max", s.max}, {"mean", s.mean}, {"stddev", s.stddev}};
}

ChannelStats stats_from_json(const json& j) {
    ChannelStats s;
    s.min = j.at("min").get<std::vector<double>>();
    s.max = j.at("max").get<std::vector<double>>();
    s.mean = j.at("mean").get<std::vector<double>>();
    s.stddev = j.at("stddev").get<std::vector<double>>();
    return s;
}

}  // namespace

// ---------------------------------------------------------------------------
// config

void ExperimentConfig::validate() const {
    if (dataset.empty()) throw ConfigError("config needs a dataset path");
    if (arms.empty()) throw ConfigError("config needs at least one arm");
    if (!profile.empty()) profile_by_name(profile);
    if (decimation && *decimation == 0) throw ConfigError("decimation must be >= 1");
    gan.validate();
    clf.validate();
    if (stream_maps < 1 || stream_dense < 1 || fusion_hidden < 1) throw ConfigError("layer widths must be >= 1");
}

std::string config_to_json(const ExperimentConfig& c) {
    json j;
    j["dataset"] = c.dataset;
    j["profile"] = c.profile;
    j["experiment"] = to_string(c.experiment);
    json pre = {{"smoothing_ms", c.preprocess.smoothing_ms},
                {"cutoff_hz", c.preprocess.cutoff_hz},
                {"window_ms", c.preprocess.window_ms},
                {"step_ms", c.preprocess.step_ms}};
    if (c.decimation) pre["decimation"] = *c.decimation;
    j["preprocess"] = pre;
    j["trim"] = {{"enabled", c.trim},
                 {"rest_lead_s", c.trim_params.rest_lead_s},
                 {"action_s", c.trim_params.action_s},
                 {"rest_keep_s", c.trim_params.rest_keep_s},
                 {"rest_offset_s", c.trim_params.rest_offset_s}};
    j["gan"] = {{"epochs", c.gan.epochs},
                {"batch_size", c.gan.batch_size},
                {"learning_rate", c.gan.learning_rate},
                {"beta1", c.gan.beta1},
                {"beta2", c.gan.beta2},
                {"dropout", c.gan.dropout},
                {"generator_loss", c.gan.generator_loss == GeneratorLoss::minimax ? "minimax" : "nonsaturating"},
                {"final_bn", c.generator_final_bn}};
    j["clf"] = {{"epochs", c.clf.epochs},
                {"batch_size", c.clf.batch_size},
                {"learning_rate", c.clf.schedule.initial},
                {"decay_epochs", c.clf.schedule.decay_epochs},
                {"divisor", c.clf.schedule.divisor},
                {"pretrain", c.clf.pretrain},
                {"stream_maps", c.stream_maps},
                {"stream_dense", c.stream_dense},
                {"fusion_hidden", c.fusion_hidden},
                {"dropout", c.stream_dropout}};
    json arms = json::array();
    for (Arm a : c.arms) arms.push_back(to_string(a));
    j["arms"] = arms;
    j["seed"] = c.seed;
    j["output_dir"] = c.output_dir;
    return j.dump(2) + "\n";
}

ExperimentConfig config_from_json(const std::string& text) {
    ExperimentConfig c;
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    try {
        reject_unknown(j, {"dataset", "profile", "experiment", "preprocess", "trim", "gan", "clf", "arms", "seed", "output_dir"},
                       "");
        read_opt(j, "dataset", c.dataset);
        read_opt(j, "profile", c.profile);
        if (j.contains("experiment")) c.experiment = experiment_from_string(j["experiment"].get<std::string>());
        if (j.contains("preprocess")) {
            const json& p = j["preprocess"];
            reject_unknown(p, {"smoothing_ms", "cutoff_hz", "window_ms", "step_ms", "decimation"}, "preprocess.");
            read_opt(p, "smoothing_ms", c.preprocess.smoothing_ms);
            read_opt(p, "cutoff_hz", c.preprocess.cutoff_hz);
            read_opt(p, "window_ms", c.preprocess.window_ms);
            read_opt(p, "step_ms", c.preprocess.step_ms);
            if (p.contains("decimation") && !p["decimation"].is_null()) c.decimation = p["decimation"].get<std::size_t>();
        }
        if (j.contains("trim")) {
            const json& t = j["trim"];
            reject_unknown(t, {"enabled", "rest_lead_s", "action_s", "rest_keep_s", "rest_offset_s"}, "trim.");
            read_opt(t, "enabled", c.trim);
            read_opt(t, "rest_lead_s", c.trim_params.rest_lead_s);
            read_opt(t, "action_s", c.trim_params.action_s);
            read_opt(t, "rest_keep_s", c.trim_params.rest_keep_s);
            read_opt(t, "rest_offset_s", c.trim_params.rest_offset_s);
        }
        if (j.contains("gan")) {
            const json& g = j["gan"];
            reject_unknown(g, {"epochs", "batch_size", "learning_rate", "beta1", "beta2", "dropout", "generator_loss", "final_bn"},
                           "gan.");
            read_opt(g, "epochs", c.gan.epochs);
            read_opt(g, "batch_size", c.gan.batch_size);
            read_opt(g, "learning_rate", c.gan.learning_rate);
            read_opt(g, "beta1", c.gan.beta1);
            read_opt(g, "beta2", c.gan.beta2);
            read_opt(g, "dropout", c.gan.dropout);
            read_opt(g, "final_bn", c.generator_final_bn);
            if (g.contains("generator_loss")) {
                const auto s = g["generator_loss"].get<std::string>();
                if (s == "minimax") c.gan.generator_loss = GeneratorLoss::minimax;
                else if (s == "nonsaturating") c.gan.generator_loss = GeneratorLoss::nonsaturating;
                else throw ConfigError("unknown generator_loss '" + s + "'");
            }
        }
        if (j.contains("clf")) {
            const json& k = j["clf"];
            reject_unknown(k, {"epochs", "batch_size", "learning_rate", "decay_epochs", "divisor", "pretrain", "stream_maps",
                               "stream_dense", "fusion_hidden", "dropout"},
                           "clf.");
            read_opt(k, "epochs", c.clf.epochs);
            read_opt(k, "batch_size", c.clf.batch_size);
            read_opt(k, "learning_rate", c.clf.schedule.initial);
            read_opt(k, "decay_epochs", c.clf.schedule.decay_epochs);
            read_opt(k, "divisor", c.clf.schedule.divisor);
            read_opt(k, "pretrain", c.clf.pretrain);
            read_opt(k, "stream_maps", c.stream_maps);
            read_opt(k, "stream_dense", c.stream_dense);
            read_opt(k, "fusion_hidden", c.fusion_hidden);
            read_opt(k, "dropout", c.stream_dropout);
        }
        if (j.contains("arms")) {
            c.arms.clear();
            for (const auto& a : j["arms"]) c.arms.push_back(arm_from_string(a.get<std::string>()));
        }
        read_opt(j, "seed", c.seed);
        read_opt(j, "output_dir", c.output_dir);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad config value: ") + e.what());
    }
    c.validate();
    return c;
}

ExperimentConfig load_config(const fs::path& path) {
    std::vector<std::uint8_t> bytes;
    try {
        bytes = read_file_bytes(path);
    } catch (const Error& e) {
        throw ConfigError(std::string("cannot read config: ") + e.what());
    }
    return config_from_json(std::string(bytes.begin(), bytes.end()));
}

void apply_overrides(ExperimentConfig& cfg, std::span<const std::string> overrides) {
    if (overrides.empty()) return;
    json j = json::parse(config_to_json(cfg));
    for (const auto& o : overrides) {
        const auto eq = o.find('=');
        if (eq == std::string::npos || eq == 0) throw ConfigError("override must look like key=value: '" + o + "'");
        const std::string key = o.substr(0, eq), raw = o.substr(eq + 1);
        json value;
        try {
            value = json::parse(raw);
        } catch (const json::exception&) {
            value = raw;  // bare strings
        }
        json* node = &j;
        std::size_t pos = 0;
        while (true) {
            const auto dot = key.find('.', pos);
            const std::string part = key.substr(pos, dot == std::string::npos ? std::string::npos : dot - pos);
            if (dot == std::string::npos) {
                (*node)[part] = value;
                break;
            }
            node = &(*node)[part];
            pos = dot + 1;
        }
    }
    cfg = config_from_json(j.dump());
}

void apply_env_seed(ExperimentConfig& cfg) {
    const char* s = std::getenv("VIMU_SEED");
    if (!s || !*s) return;
    char* end = nullptr;
    const unsigned long long v = std::strtoull(s, &end, 10);
    if (*end != '\0') throw ConfigError(std::string("VIMU_SEED is not an unsigned integer: ") + s);
    cfg.seed = v;
}

std::string config_fingerprint(const ExperimentConfig& cfg) {
    json j = json::parse(config_to_json(cfg));
    // where things live does not change what is computed
    j.erase("output_dir");
    j.erase("dataset");
    return hex64(fnv1a(j.dump()));
}

// ---------------------------------------------------------------------------
// data preparation

namespace {

struct Segment {
    MultichannelSeries gan, hgr;
    std::optional<MultichannelSeries> imu;
    std::size_t label;
    int subject, trial;
};

MultichannelSeries trim_series(const MultichannelSeries& s, const TrimParams& p, bool rest) {
    TrialRecord t;
    t.semg = s;
    auto parts = trim_trial(t, p, 0);
    return rest ? parts.rest.semg : parts.action.semg;
}

MultichannelSeries concat_series(std::span<const MultichannelSeries> parts) {
    std::vector<TrialRecord> recs;
    for (const auto& p : parts) {
        TrialRecord t;
        t.semg = p;
        recs.push_back(std::move(t));
    }
    return splice_rest(recs).semg;
}

}  // namespace

PreparedData prepare_data(const ExperimentConfig& cfg) {
    cfg.validate();
    PreparedData d;
    const fs::path dir(cfg.dataset);
    d.manifest = load_manifest(dir);
    check_dataset_files(dir, d.manifest);
    d.profile = profile_by_name(cfg.profile.empty() ? d.manifest.profile : cfg.profile);
    d.plan = make_split(d.manifest, cfg.experiment, d.profile);

    PreprocessParams p = cfg.preprocess;
    p.decimation = cfg.decimation.value_or(d.profile.decimation);
    d.effective_rate_hz = d.manifest.sample_rate_hz / static_cast<double>(p.decimation);
    d.k = ms_to_samples(p.window_ms, d.effective_rate_hz);
    d.step = ms_to_samples(p.step_ms, d.effective_rate_hz);
    if (d.k < 1 || d.step < 1) {
        throw ConfigError("window " + std::to_string(p.window_ms) + " ms / step " + std::to_string(p.step_ms) +
                          " ms is below one sample at " + std::to_string(d.effective_rate_hz) + " Hz");
    }
    const std::size_t rest_label = d.manifest.gestures();
    d.classes = d.manifest.gestures() + (d.profile.rest_class ? 1 : 0);

    const auto trials = load_trials(dir, d.manifest);
    std::vector<Segment> segments;
    std::map<std::pair<int, int>, std::vector<Segment>> rests;  // (subject, trial) -> slices in gesture order
    for (const auto& t : trials) {
        Segment full{gan_chain(t.semg, p), hgr_chain(t.semg, p), std::nullopt, static_cast<std::size_t>(t.gesture),
                     t.subject, t.trial};
        if (t.imu) full.imu = imu_chain(*t.imu, p);
        if (!cfg.trim) {
            segments.push_back(std::move(full));
            continue;
        }
        Segment action = full;
        action.gan = trim_series(full.gan, cfg.trim_params, false);
        action.hgr = trim_series(full.hgr, cfg.trim_params, false);
        if (full.imu) action.imu = trim_series(*full.imu, cfg.trim_params, false);
        segments.push_back(std::move(action));
        if (d.profile.rest_class) {
            Segment rest = full;
            rest.gan = trim_series(full.gan, cfg.trim_params, true);
            rest.hgr = trim_series(full.hgr, cfg.trim_params, true);
            if (full.imu) rest.imu = trim_series(*full.imu, cfg.trim_params, true);
            rest.label = rest_label;
            rests[{t.subject, t.trial}].push_back(std::move(rest));
        }
    }
    for (auto& [key, parts] : rests) {
        std::vector<MultichannelSeries> g, h, m;
        for (const auto& s : parts) {
            g.push_back(s.gan);
            h.push_back(s.hgr);
            if (s.imu) m.push_back(*s.imu);
        }
        Segment r{concat_series(g), concat_series(h), std::nullopt, rest_label, key.first, key.second};
        if (!m.empty()) r.imu = concat_series(m);
        segments.push_back(std::move(r));
    }

    for (const auto& s : segments) {
        const auto gw = segment_samples(s.gan, d.k, d.step);
        const auto hw = segment_samples(s.hgr, d.k, d.step);
        std::vector<SignalWindow> iw;
        if (s.imu) iw = segment_samples(*s.imu, d.k, d.step);
        for (std::size_t w = 0; w < gw.size(); ++w) {
            LabeledWindow lw{gw[w], hw[w], std::nullopt, s.label, s.subject, s.trial};
            if (s.imu) lw.imu = iw[w];
            d.windows.push_back(std::move(lw));
        }
        if (contains(d.plan.gan_subjects, s.subject) && contains(d.plan.gan_train_trials, s.trial)) {
            d.gan_train_semg.push_back(s.gan);
            if (s.imu) d.gan_train_imu.push_back(*s.imu);
        }
    }
    return d;
}

void leakage_guard(const SplitPlan& plan, Role role, std::span<const LabeledWindow* const> windows) {
    for (const LabeledWindow* w : windows) {
        bool ok;
        if (role == Role::gan_training) {
            ok = contains(plan.gan_subjects, w->subject) && contains(plan.gan_train_trials, w->trial);
            if (plan.experiment == Experiment::exp2) ok = ok && !contains(plan.clf_test_trials, w->trial);
        } else {
            ok = contains(plan.recognition_subjects, w->subject) && contains(plan.clf_train_trials, w->trial) &&
                 !contains(plan.clf_test_trials, w->trial);
        }
        if (!ok) {
            throw LeakageError(std::string(role == Role::gan_training ? "GAN" : "classifier") +
                               " training received a window of subject " + std::to_string(w->subject) + ", trial " +
                               std::to_string(w->trial) + " outside its split");
        }
    }
}

// ---------------------------------------------------------------------------
// generator stage

namespace {

Tensor<float> windows_to_tensor(std::span<const SignalWindow* const> ws, const ChannelStats* stats, NormMode mode) {
    const std::size_t k = ws.front()->k, c = ws.front()->channels;
    std::vector<float> v;
    v.reserve(ws.size() * k * c);
    std::vector<double> buf;
    for (const SignalWindow* w : ws) {
        if (w->k != k || w->channels != c) throw DimensionError("windows differ in shape");
        buf = w->data;
        if (stats) apply_norm_inplace(buf, *stats, mode);
        for (double x : buf) v.push_back(static_cast<float>(x));
    }
    return Tensor<float>({ws.size(), 1, k, c}, std::move(v));
}

ChannelStats stats_of_windows(std::span<const SignalWindow* const> ws) {
    MultichannelSeries s;
    s.channels = ws.front()->channels;
    s.sample_rate_hz = 1.0;
    for (const SignalWindow* w : ws) {
        s.data.insert(s.data.end(), w->data.begin(), w->data.end());
        s.frames += w->k;
    }
    return fit_stats(std::span(&s, 1));
}

}  // namespace

GeneratorStage train_generator_stage(const PreparedData& data, const ExperimentConfig& cfg, const GanProgress& progress) {
    std::vector<const LabeledWindow*> chosen;
    for (const auto& w : data.windows)
        if (contains(data.plan.gan_subjects, w.subject) && contains(data.plan.gan_train_trials, w.trial)) {
            if (!w.imu) throw DataError("GAN training needs real IMU windows, dataset has none");
            chosen.push_back(&w);
        }
    if (chosen.empty()) throw InsufficientData("no windows for GAN training");
    leakage_guard(data.plan, Role::gan_training, chosen);

    TrainedGenerator gen;
    gen.config = {data.k, data.manifest.semg_channels, data.manifest.imu_channels, cfg.generator_final_bn};
    gen.semg_stats = fit_stats(data.gan_train_semg);
    gen.imu_stats = fit_stats(data.gan_train_imu);

    std::vector<const SignalWindow*> semg, imu;
    for (const auto* w : chosen) {
        semg.push_back(&w->gan_semg);
        imu.push_back(&*w->imu);
    }
    PairedWindows pairs{windows_to_tensor(semg, &gen.semg_stats, NormMode::zscore),
                        windows_to_tensor(imu, &gen.imu_stats, NormMode::minmax_pm1)};
    GanTrainConfig gcfg = cfg.gan;
    gcfg.seed = derive(cfg.seed, 0x6A4);
    GanResult r = train_gan(pairs, gen.config, gcfg, progress);
    gen.params = std::move(r.generator);
    return {std::move(gen), std::move(r.discriminator), std::move(r.history)};
}

std::vector<std::optional<SignalWindow>> synthesize_virtual(const PreparedData& data, const TrainedGenerator& gen) {
    std::vector<std::optional<SignalWindow>> out(data.windows.size());
    std::vector<SignalWindow> in;
    std::vector<std::size_t> where;
    for (std::size_t i = 0; i < data.windows.size(); ++i)
        if (contains(data.plan.recognition_subjects, data.windows[i].subject)) {
            in.push_back(data.windows[i].gan_semg);
            where.push_back(i);
        }
    if (in.empty()) return out;
    auto v = generate_virtual(gen, in, data.manifest.imu_kind);
    for (std::size_t j = 0; j < where.size(); ++j) out[where[j]] = std::move(v[j]);
    return out;
}

// ---------------------------------------------------------------------------
// classifier arms

ArmData build_arm_data(const PreparedData& data, Arm arm, int subject,
                       const std::vector<std::optional<SignalWindow>>& virtual_imu) {
    std::vector<std::size_t> train_idx, test_idx;
    for (std::size_t i = 0; i < data.windows.size(); ++i) {
        const auto& w = data.windows[i];
        if (w.subject != subject) continue;
        if (contains(data.plan.clf_train_trials, w.trial)) train_idx.push_back(i);
        else if (contains(data.plan.clf_test_trials, w.trial)) test_idx.push_back(i);
    }
    if (train_idx.empty() || test_idx.empty()) {
        throw InsufficientData("subject " + std::to_string(subject) + " lacks training or test windows");
    }
    std::vector<const LabeledWindow*> train_ptrs;
    for (std::size_t i : train_idx) train_ptrs.push_back(&data.windows[i]);
    leakage_guard(data.plan, Role::clf_training, train_ptrs);

    auto second = [&](std::size_t i) -> const SignalWindow* {
        if (arm == Arm::real_multimodal) {
            if (!data.windows[i].imu) throw DataError("real_multimodal arm needs real IMU, dataset has none");
            return &*data.windows[i].imu;
        }
        if (i >= virtual_imu.size() || !virtual_imu[i]) throw StateError("virtual IMU missing for a recognition window");
        return &*virtual_imu[i];
    };

    ArmData out;
    const std::size_t streams = arm == Arm::unimodal ? 1 : 2;
    for (std::size_t s = 0; s < streams; ++s) {
        std::vector<const SignalWindow*> tr, te;
        for (std::size_t i : train_idx) tr.push_back(s == 0 ? &data.windows[i].hgr_semg : second(i));
        for (std::size_t i : test_idx) te.push_back(s == 0 ? &data.windows[i].hgr_semg : second(i));
        const ChannelStats st = stats_of_windows(tr);
        out.train.inputs.push_back(windows_to_tensor(tr, &st, NormMode::zscore));
        out.test.inputs.push_back(windows_to_tensor(te, &st, NormMode::zscore));
    }
    for (std::size_t i : train_idx) out.train.labels.push_back(data.windows[i].label);
    for (std::size_t i : test_idx) {
        out.test.labels.push_back(data.windows[i].label);
        out.test_trials.push_back(data.windows[i].trial);
    }
    return out;
}

Classifier make_classifier(const PreparedData& data, Arm arm, const ExperimentConfig& cfg) {
    std::vector<StreamConfig> s;
    s.push_back({"semg", data.k, data.manifest.semg_channels, cfg.stream_maps, cfg.stream_dense, cfg.stream_dropout});
    if (arm != Arm::unimodal) {
        s.push_back({"imu", data.k, data.manifest.imu_channels, cfg.stream_maps, cfg.stream_dense, cfg.stream_dropout});
    }
    return Classifier(std::move(s), FusionConfig{cfg.fusion_hidden, data.classes}, derive(cfg.seed, 0xD50));
}

// ---------------------------------------------------------------------------
// metrics

double compute_accuracy(std::span<const std::size_t> predictions, std::span<const std::size_t> labels) {
    if (predictions.empty() || predictions.size() != labels.size()) {
        throw InvalidArgument("accuracy needs equally long, non-empty prediction and label lists");
    }
    std::size_t hit = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) hit += predictions[i] == labels[i];
    return static_cast<double>(hit) / static_cast<double>(labels.size());
}

std::pair<double, double> aggregate(std::span<const double> v) {
    if (v.empty()) throw InvalidArgument("aggregate needs at least one value");
    const double n = static_cast<double>(v.size());
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
    if (v.size() == 1) return {mean, 0.0};
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return {mean, std::sqrt(ss / (n - 1.0))};
}

double trial_vote_accuracy(std::span<const std::size_t> predictions, std::span<const std::size_t> labels,
                           std::span<const int> trials) {
    if (predictions.size() != labels.size() || labels.size() != trials.size() || labels.empty()) {
        throw InvalidArgument("trial vote needs equally long, non-empty inputs");
    }
    // a recording is one (gesture, trial) pair
    std::map<std::pair<std::size_t, int>, std::map<std::size_t, std::size_t>> votes;
    for (std::size_t i = 0; i < labels.size(); ++i) ++votes[{labels[i], trials[i]}][predictions[i]];
    std::size_t hit = 0;
    for (const auto& [key, counts] : votes) {
        std::size_t best = counts.begin()->first, best_n = 0;
        for (const auto& [cls, n] : counts)
            if (n > best_n) best = cls, best_n = n;
        hit += best == key.first;
    }
    return static_cast<double>(hit) / static_cast<double>(votes.size());
}

const ArmResult* MetricsReport::find(Arm a) const {
    for (const auto& r : arms)
        if (r.arm == a) return &r;
    return nullptr;
}

void MetricsReport::validate() const {
    for (const auto& a : arms)
        for (const auto& s : a.subjects)
            if (!(s.accuracy >= 0.0 && s.accuracy <= 1.0)) throw InvalidArgument("accuracy outside [0,1]");
    auto check = [&](const char* key, Arm hi, Arm lo) {
        const ArmResult *h = find(hi), *l = find(lo);
        if (h && l) {
            auto it = deltas.find(key);
            if (it == deltas.end() || std::abs(it->second - (h->mean - l->mean)) > 1e-12) {
                throw InvalidArgument(std::string("report delta ") + key + " disagrees with arm means");
            }
        }
    };
    check("virtual_minus_unimodal", Arm::virtual_multimodal, Arm::unimodal);
    check("real_minus_virtual", Arm::real_multimodal, Arm::virtual_multimodal);
}

namespace {

void fill_summary(MetricsReport& r) {
    for (auto& a : r.arms) {
        std::vector<double> acc;
        for (const auto& s : a.subjects) acc.push_back(s.accuracy);
        std::tie(a.mean, a.std) = aggregate(acc);
    }
    r.deltas.clear();
    const ArmResult *u = r.find(Arm::unimodal), *v = r.find(Arm::virtual_multimodal), *re = r.find(Arm::real_multimodal);
    if (u && v) r.deltas["virtual_minus_unimodal"] = v->mean - u->mean;
    if (v && re) r.deltas["real_minus_virtual"] = re->mean - v->mean;
}

}  // namespace

// ---------------------------------------------------------------------------
// pipeline

std::string generator_sidecar_json(const TrainedGenerator& gen, const GanTrainConfig& cfg,
                                   const std::string& data_fingerprint) {
    json j;
    j["generator"] = {{"k", gen.config.k}, {"c1", gen.config.c1}, {"c2", gen.config.c2}, {"final_bn", gen.config.final_bn}};
    j["training"] = {{"epochs", cfg.epochs},
                     {"batch_size", cfg.batch_size},
                     {"learning_rate", cfg.learning_rate},
                     {"beta1", cfg.beta1},
                     {"beta2", cfg.beta2},
                     {"dropout", cfg.dropout},
                     {"generator_loss", cfg.generator_loss == GeneratorLoss::minimax ? "minimax" : "nonsaturating"}};
    j["seed"] = cfg.seed;
    j["init"] = {{"scheme", gen.params.init.scheme}, {"seed", gen.params.init.seed}};
    j["semg_stats"] = stats_to_json(gen.semg_stats);
    j["imu_stats"] = stats_to_json(gen.imu_stats);
    j["data_fingerprint"] = data_fingerprint;
    return j.dump(2) + "\n";
}

TrainedGenerator load_generator(const fs::path& ckpt, const fs::path& sidecar) {
    TrainedGenerator g;
    const auto bytes = read_file_bytes(sidecar);
    try {
        const json j = json::parse(bytes.begin(), bytes.end());
        const json& c = j.at("generator");
        g.config = {c.at("k").get<std::size_t>(), c.at("c1").get<std::size_t>(), c.at("c2").get<std::size_t>(),
                    c.at("final_bn").get<bool>()};
        g.semg_stats = stats_from_json(j.at("semg_stats"));
        g.imu_stats = stats_from_json(j.at("imu_stats"));
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed generator sidecar: ") + e.what());
    }
    g.params = load_checkpoint(ckpt);
    // every tensor the generator expects must be present with its shape
    const ParamSet<float> fresh = build_generator(g.config, 0);
    for (const auto& [name, e] : fresh.entries()) {
        if (!g.params.contains(name) || g.params.at(name).value.shape() != e.value.shape()) {
            throw FormatError("generator checkpoint lacks or misshapes '" + name + "'");
        }
    }
    return g;
}

namespace {

std::string data_fingerprint(const PreparedData& d) { return hex64(fnv1a(manifest_to_json(d.manifest))); }

void write_text(const fs::path& p, const std::string& s) {
    write_file_bytes(p, std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
}

std::string gan_history_csv(const std::vector<GanEpochStats>& h) {
    std::ostringstream o;
    o.precision(9);
    o << "epoch,d_loss,g_loss,d_real,d_fake,value\n";
    for (const auto& e : h) o << e.epoch << ',' << e.d_loss << ',' << e.g_loss << ',' << e.d_real << ',' << e.d_fake << ',' << e.value << '\n';
    return o.str();
}

}  // namespace

std::string classifier_checkpoint_name(Arm arm, int subject) {
    return "clf_" + to_string(arm) + "_s" + std::to_string(subject) + ".ckpt";
}

TrainedArm train_arm(const PreparedData& data, Arm arm, const ExperimentConfig& cfg,
                     const std::vector<std::optional<SignalWindow>>& virtual_imu, const Progress& progress) {
    std::vector<int> subjects = data.plan.recognition_subjects;
    std::sort(subjects.begin(), subjects.end());
    std::vector<ArmData> per_subject;
    for (int s : subjects) per_subject.push_back(build_arm_data(data, arm, s, virtual_imu));

    Classifier model = make_classifier(data, arm, cfg);
    ClfTrainConfig ccfg = cfg.clf;
    std::optional<ParamSet<float>> pretrained;
    if (cfg.clf.pretrain) {
        std::vector<ClfData> parts;
        for (const auto& a : per_subject) parts.push_back(a.train);
        ccfg.seed = derive(cfg.seed, 0x9E7);
        pretrained =
            train_classifier(model, model.init_params(derive(cfg.seed, 0x1A1)), ClfData::concat(parts), ccfg).params;
        if (progress.log) progress.log(to_string(arm) + ": pretrained on " + std::to_string(subjects.size()) + " subjects");
    }
    TrainedArm ta{arm, subjects, {}};
    for (std::size_t i = 0; i < subjects.size(); ++i) {
        // same init seed across arms keeps the sEMG stream start identical
        ccfg.seed = derive(cfg.seed, 0xC1F, static_cast<std::uint64_t>(subjects[i]));
        ParamSet<float> init =
            pretrained ? *pretrained : model.init_params(derive(cfg.seed, 0x1A1, static_cast<std::uint64_t>(subjects[i])));
        ta.params.push_back(train_classifier(model, std::move(init), per_subject[i].train, ccfg).params);
    }
    return ta;
}

ArmResult evaluate_arm(const PreparedData& data, const TrainedArm& trained, const ExperimentConfig& cfg,
                       const std::vector<std::optional<SignalWindow>>& virtual_imu, std::vector<Prediction>* predictions) {
    ArmResult ar;
    ar.arm = trained.arm;
    Classifier model = make_classifier(data, trained.arm, cfg);
    for (std::size_t i = 0; i < trained.subjects.size(); ++i) {
        const ArmData ad = build_arm_data(data, trained.arm, trained.subjects[i], virtual_imu);
        ParamSet<float> ps = trained.params.at(i);
        Prediction p = predict(model, ps, ad.test.inputs);
        ar.subjects.push_back({trained.subjects[i], compute_accuracy(p.classes, ad.test.labels),
                               trial_vote_accuracy(p.classes, ad.test.labels, ad.test_trials), ad.test.size()});
        if (predictions) predictions->push_back(std::move(p));
    }
    std::vector<double> acc;
    for (const auto& s : ar.subjects) acc.push_back(s.accuracy);
    std::tie(ar.mean, ar.std) = aggregate(acc);
    return ar;
}

MetricsReport run_experiment(const ExperimentConfig& cfg, bool write_artifacts, const Progress& progress) {
    auto log = [&](const std::string& s) {
        if (progress.log) progress.log(s);
    };
    const PreparedData data = prepare_data(cfg);
    log("prepared " + std::to_string(data.windows.size()) + " windows (k=" + std::to_string(data.k) +
        ", step=" + std::to_string(data.step) + ")");
    const fs::path out(cfg.output_dir);
    const bool wants_virtual = std::find(cfg.arms.begin(), cfg.arms.end(), Arm::virtual_multimodal) != cfg.arms.end();
    const bool wants_real = std::find(cfg.arms.begin(), cfg.arms.end(), Arm::real_multimodal) != cfg.arms.end();
    if ((wants_virtual || wants_real) && data.manifest.imu_channels == 0) {
        throw DataError("requested arms need IMU data but the dataset is sEMG-only");
    }

    std::vector<std::optional<SignalWindow>> virtual_imu;
    if (wants_virtual) {
        GeneratorStage g = train_generator_stage(data, cfg, [&](const GanEpochStats& e) {
            if ((e.epoch + 1) % 50 == 0) {
                log("gan epoch " + std::to_string(e.epoch + 1) + " D=" + std::to_string(e.d_loss) +
                    " G=" + std::to_string(e.g_loss));
            }
        });
        if (write_artifacts) {
            save_checkpoint(out / "generator.ckpt", g.generator.params);
            save_checkpoint(out / "discriminator.ckpt", g.discriminator);
            GanTrainConfig gc = cfg.gan;
            gc.seed = derive(cfg.seed, 0x6A4);
            write_text(out / "generator.json", generator_sidecar_json(g.generator, gc, data_fingerprint(data)));
            write_text(out / "gan_history.csv", gan_history_csv(g.history));
        }
        virtual_imu = synthesize_virtual(data, g.generator);
    }

    MetricsReport rep;
    rep.dataset = data.manifest.name;
    rep.profile = data.profile.name;
    rep.experiment = cfg.experiment;
    rep.fingerprint = config_fingerprint(cfg) + "-" + data_fingerprint(data);
    rep.seed = cfg.seed;

    for (Arm arm : cfg.arms) {
        TrainedArm ta = train_arm(data, arm, cfg, virtual_imu, progress);
        if (write_artifacts) {
            for (std::size_t i = 0; i < ta.subjects.size(); ++i)
                save_checkpoint(out / classifier_checkpoint_name(arm, ta.subjects[i]), ta.params[i]);
        }
        rep.arms.push_back(evaluate_arm(data, ta, cfg, virtual_imu));
        for (const auto& s : rep.arms.back().subjects)
            log(to_string(arm) + " subject " + std::to_string(s.subject) + ": accuracy " + std::to_string(s.accuracy));
    }
    fill_summary(rep);
    rep.validate();
    if (write_artifacts) {
        const std::vector<std::string> formats{"json", "csv", "svg"};
        emit_report(rep, formats, out);
    }
    return rep;
}

// ---------------------------------------------------------------------------
// report emission

std::string report_to_json(const MetricsReport& r) {
    json j;
    j["vimu_report"] = 1;
    j["dataset"] = r.dataset;
    j["profile"] = r.profile;
    j["experiment"] = to_string(r.experiment);
    j["fingerprint"] = r.fingerprint;
    j["seed"] = r.seed;
    json arms = json::array();
    for (const auto& a : r.arms) {
        json subs = json::array();
        for (const auto& s : a.subjects)
            subs.push_back({{"subject", s.subject},
                            {"accuracy", s.accuracy},
                            {"trial_vote_accuracy", s.trial_vote_accuracy},
                            {"test_windows", s.test_windows}});
        arms.push_back({{"arm", to_string(a.arm)}, {"mean", a.mean}, {"std", a.std}, {"subjects", subs}});
    }
    j["arms"] = arms;
    j["deltas"] = r.deltas;
    return j.dump(2) + "\n";
}

MetricsReport report_from_json(const std::string& text) {
    MetricsReport r;
    try {
        const json j = json::parse(text);
        if (j.value("vimu_report", 0) != 1) throw FormatError("unsupported report version");
        r.dataset = j.at("dataset").get<std::string>();
        r.profile = j.at("profile").get<std::string>();
        r.experiment = experiment_from_string(j.at("experiment").get<std::string>());
        r.fingerprint = j.at("fingerprint").get<std::string>();
        r.seed = j.at("seed").get<std::uint64_t>();
        for (const auto& a : j.at("arms")) {
            ArmResult ar;
            ar.arm = arm_from_string(a.at("arm").get<std::string>());
            ar.mean = a.at("mean").get<double>();
            ar.std = a.at("std").get<double>();
            for (const auto& s : a.at("subjects"))
                ar.subjects.push_back({s.at("subject").get<int>(), s.at("accuracy").get<double>(),
                                       s.at("trial_vote_accuracy").get<double>(), s.at("test_windows").get<std::size_t>()});
            r.arms.push_back(std::move(ar));
        }
        r.deltas = j.at("deltas").get<std::map<std::string, double>>();
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed report: ") + e.what());
    } catch (const UsageError& e) {
        throw FormatError(std::string("malformed report: ") + e.what());
    }
    r.validate();
    return r;
}

std::string report_to_csv(const MetricsReport& r) {
    std::ostringstream o;
    o.precision(17);
    o << "arm,subject,accuracy,trial_vote_accuracy,test_windows\n";
    for (const auto& a : r.arms)
        for (const auto& s : a.subjects)
            o << to_string(a.arm) << ',' << s.subject << ',' << s.accuracy << ',' << s.trial_vote_accuracy << ','
              << s.test_windows << '\n';
    return o.str();
}

std::string report_to_svg(const MetricsReport& r) {
    // grouped bars per subject plus a mean group; the real-IMU arm is drawn
    // as a red reference line over each group
    std::vector<const ArmResult*> bars;
    for (const auto& a : r.arms)
        if (a.arm != Arm::real_multimodal) bars.push_back(&a);
    const ArmResult* real = r.find(Arm::real_multimodal);
    const ArmResult* any = r.arms.empty() ? nullptr : &r.arms.front();
    const std::size_t groups = any ? any->subjects.size() + 1 : 0;

    const double W = 120.0 + 90.0 * static_cast<double>(groups), H = 360.0, left = 60.0, top = 40.0, plot_h = 260.0;
    const double group_w = 90.0, bar_w = bars.empty() ? 0.0 : 60.0 / static_cast<double>(bars.size());
    const char* colors[] = {"#7f7f7f", "#1f77b4"};
    auto y_of = [&](double acc) { return top + plot_h * (1.0 - std::clamp(acc, 0.0, 1.0)); };

    std::ostringstream o;
    o.setf(std::ios::fixed);
    o.precision(2);
    o << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W << ' '
      << H << "\">\n"
      << "<title>" << r.dataset << " " << to_string(r.experiment) << " accuracy</title>\n"
      << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + plot_h
      << "\" stroke=\"black\"/>\n"
      << "<line x1=\"" << left << "\" y1=\"" << top + plot_h << "\" x2=\"" << W - 20 << "\" y2=\"" << top + plot_h
      << "\" stroke=\"black\"/>\n";
    for (int t = 0; t <= 4; ++t) {
        const double y = y_of(t * 0.25);
        o << "<text x=\"" << left - 8 << "\" y=\"" << y + 4 << "\" font-size=\"10\" text-anchor=\"end\">" << t * 25
          << "%</text>\n";
    }
    for (std::size_t g = 0; g < groups; ++g) {
        const bool mean_group = g + 1 == groups;
        const double x0 = left + 15.0 + group_w * static_cast<double>(g);
        const std::string label = mean_group ? "mean" : "S" + std::to_string(any->subjects[g].subject);
        o << "<g class=\"group\" data-label=\"" << label << "\">\n";
        for (std::size_t b = 0; b < bars.size(); ++b) {
            const double acc = mean_group ? bars[b]->mean : bars[b]->subjects[g].accuracy;
            const double x = x0 + bar_w * static_cast<double>(b);
            o << "<rect class=\"bar\" data-arm=\"" << to_string(bars[b]->arm) << "\" x=\"" << x << "\" y=\"" << y_of(acc)
              << "\" width=\"" << bar_w - 2 << "\" height=\"" << top + plot_h - y_of(acc) << "\" fill=\""
              << colors[std::min<std::size_t>(b, 1)] << "\"/>\n";
            if (mean_group) {
                const double cx = x + (bar_w - 2) / 2;
                o << "<line class=\"whisker\" x1=\"" << cx << "\" y1=\"" << y_of(acc - bars[b]->std) << "\" x2=\"" << cx
                  << "\" y2=\"" << y_of(acc + bars[b]->std) << "\" stroke=\"black\"/>\n";
            }
        }
        if (real) {
            const double acc = mean_group ? real->mean : real->subjects[g].accuracy;
            o << "<line class=\"reference\" x1=\"" << x0 - 4 << "\" y1=\"" << y_of(acc) << "\" x2=\"" << x0 + 64
              << "\" y2=\"" << y_of(acc) << "\" stroke=\"red\" stroke-width=\"2\"/>\n";
        }
        o << "<text x=\"" << x0 + 30 << "\" y=\"" << top + plot_h + 16 << "\" font-size=\"11\" text-anchor=\"middle\">"
          << label << "</text>\n</g>\n";
    }
    double ly = top - 20;
    for (std::size_t b = 0; b < bars.size(); ++b) {
        const double lx = left + 160.0 * static_cast<double>(b);
        o << "<rect x=\"" << lx << "\" y=\"" << ly << "\" width=\"10\" height=\"10\" fill=\"" << colors[std::min<std::size_t>(b, 1)]
          << "\"/><text x=\"" << lx + 14 << "\" y=\"" << ly + 9 << "\" font-size=\"11\">" << to_string(bars[b]->arm)
          << "</text>\n";
    }
    if (real) {
        const double lx = left + 160.0 * static_cast<double>(bars.size());
        o << "<line x1=\"" << lx << "\" y1=\"" << ly + 5 << "\" x2=\"" << lx + 12 << "\" y2=\"" << ly + 5
          << "\" stroke=\"red\" stroke-width=\"2\"/><text x=\"" << lx + 16 << "\" y=\"" << ly + 9
          << "\" font-size=\"11\">real_multimodal</text>\n";
    }
    o << "</svg>\n";
    return o.str();
}

void emit_report(const MetricsReport& r, std::span<const std::string> formats, const fs::path& dir) {
    r.validate();
    for (const auto& f : formats) {
        if (f == "json") write_text(dir / "report.json", report_to_json(r));
        else if (f == "csv") write_text(dir / "report.csv", report_to_csv(r));
        else if (f == "svg") write_text(dir / "report.svg", report_to_svg(r));
        else throw ConfigError("unknown report format '" + f + "'");
    }
}

}  // namespace vimu
