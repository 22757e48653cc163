#include "vimu/datasets.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fcntl.h>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>
#include <tuple>
#include <unistd.h>

#include <json.hpp>

#include "vimu/checkpoint.hpp"
#include "vimu/rng.hpp"

namespace vimu {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string to_string(Experiment e) { return e == Experiment::exp1 ? "exp1" : "exp2"; }

Experiment experiment_from_string(const std::string& s) {
    if (s == "exp1") return Experiment::exp1;
    if (s == "exp2") return Experiment::exp2;
    throw ConfigError("unknown experiment '" + s + "' (expected exp1 or exp2)");
}

// ---------------------------------------------------------------------------
// profiles

const std::vector<DatabaseProfile>& builtin_profiles() {
    static const std::vector<DatabaseProfile> profiles = [] {
        const std::vector<int> six{1, 2, 3, 4, 5, 6};
        const std::vector<int> ninapro_train{1, 3, 4, 6}, ninapro_test{2, 5};
        auto ninapro = [&](std::string name, std::size_t subjects, std::size_t gestures, std::size_t c1,
                           std::size_t c2, double rate, std::size_t decim) {
            return DatabaseProfile{std::move(name), subjects, gestures,  c1,   c2,           Modality::acc,
                                   6,               six,      rate,      decim, false,       ninapro_train,
                                   ninapro_test};
        };
        std::vector<DatabaseProfile> p;
        p.push_back({"femg_vpf", 28, 38, 8, 3, Modality::euler, 6, {1, 2, 3, 4}, 2040.0, 20, true, {1, 3}, {2, 4}});
        p.push_back(ninapro("db2", 40, 50, 12, 36, 2000.0, 20));
        p.push_back(ninapro("db3", 6, 50, 12, 36, 2000.0, 20));
        p.push_back(ninapro("db5", 10, 53, 16, 3, 200.0, 1));
        p.push_back(ninapro("db7", 20, 41, 12, 36, 2000.0, 20));
        // SIEM: 18 recorded trials, six from one session are used
        p.push_back({"siem", 20, 12, 8, 3, Modality::euler, 18, six, 2040.0, 20, false, ninapro_train, ninapro_test});
        p.push_back({"synthetic", 4, 4, 8, 3, Modality::euler, 4, {1, 2, 3, 4}, 200.0, 10, false, {1, 3}, {2, 4}});
        return p;
    }();
    return profiles;
}

const DatabaseProfile& profile_by_name(const std::string& name) {
    for (const auto& p : builtin_profiles())
        if (p.name == name) return p;
    throw ConfigError("unknown database profile '" + name + "'");
}

// ---------------------------------------------------------------------------
// manifest

void DatasetManifest::validate() const {
    if (semg_channels < 1) throw DimensionError("manifest needs at least one sEMG channel");
    if (subjects.empty() || gesture_labels.empty() || trials.empty()) throw InvalidArgument("manifest is empty");
    if (!(sample_rate_hz > 0.0)) throw InvalidArgument("manifest sample rate must be positive");
    std::set<std::tuple<int, int, int>> seen;
    for (const auto& f : files) {
        if (!seen.emplace(f.subject, f.gesture, f.trial).second) {
            throw FormatError("duplicate trial entry s" + std::to_string(f.subject) + " g" + std::to_string(f.gesture) +
                              " t" + std::to_string(f.trial));
        }
        if (f.gesture < 0 || static_cast<std::size_t>(f.gesture) >= gestures()) throw LabelError("gesture id out of range");
    }
}

const TrialFile* DatasetManifest::find(int subject, int gesture, int trial) const {
    for (const auto& f : files)
        if (f.subject == subject && f.gesture == gesture && f.trial == trial) return &f;
    return nullptr;
}

std::string manifest_to_json(const DatasetManifest& m) {
    json j;
    j["gst_version"] = 1;
    j["name"] = m.name;
    j["profile"] = m.profile;
    j["subjects"] = m.subjects;
    j["gestures"] = m.gesture_labels;
    j["trials"] = m.trials;
    j["sample_rate_hz"] = m.sample_rate_hz;
    j["semg_channels"] = m.semg_channels;
    j["imu_channels"] = m.imu_channels;
    j["imu_kind"] = to_string(m.imu_kind);
    json files = json::array();
    for (const auto& f : m.files)
        files.push_back({{"subject", f.subject}, {"gesture", f.gesture}, {"trial", f.trial}, {"path", f.path}});
    j["files"] = std::move(files);
    return j.dump(2) + "\n";
}

DatasetManifest manifest_from_json(const std::string& text) {
    DatasetManifest m;
    try {
        const json j = json::parse(text);
        if (j.value("gst_version", 0) != 1) throw FormatError("unsupported manifest version");
        m.name = j.at("name").get<std::string>();
        m.profile = j.value("profile", std::string{});
        m.subjects = j.at("subjects").get<std::vector<int>>();
        m.gesture_labels = j.at("gestures").get<std::vector<std::string>>();
        m.trials = j.at("trials").get<std::vector<int>>();
        m.sample_rate_hz = j.at("sample_rate_hz").get<double>();
        m.semg_channels = j.at("semg_channels").get<std::size_t>();
        m.imu_channels = j.value("imu_channels", std::size_t{0});
        m.imu_kind = modality_from_string(j.value("imu_kind", std::string{"acc"}));
        for (const auto& f : j.at("files"))
            m.files.push_back({f.at("subject").get<int>(), f.at("gesture").get<int>(), f.at("trial").get<int>(),
                               f.at("path").get<std::string>()});
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed manifest: ") + e.what());
    } catch (const ConfigError& e) {
        throw FormatError(std::string("malformed manifest: ") + e.what());
    }
    m.validate();
    return m;
}

void save_manifest(const fs::path& dir, const DatasetManifest& m) {
    m.validate();
    const std::string s = manifest_to_json(m);
    write_file_bytes(dir / "manifest.json", std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
}

DatasetManifest load_manifest(const fs::path& dir) {
    const auto bytes = read_file_bytes(dir / "manifest.json");
    return manifest_from_json(std::string(bytes.begin(), bytes.end()));
}

// ---------------------------------------------------------------------------
// trial binary

namespace {

constexpr std::uint8_t kFlagSemg = 1, kFlagImu = 2, kFlagEuler = 4;
constexpr std::uint32_t kMaxFrames = 1u << 28;
constexpr std::uint32_t kMaxChannels = 4096;
const std::uint8_t kTrialMagic[4] = {'G', 'S', 'T', '1'};

void put_series(ByteWriter& w, const MultichannelSeries& s) {
    for (double v : s.data) w.f32(static_cast<float>(v));
}

}  // namespace

std::vector<std::uint8_t> encode_trial(const TrialRecord& t) {
    t.semg.validate();
    if (t.imu) {
        t.imu->validate();
        if (t.imu->frames != t.semg.frames) throw DimensionError("sEMG and IMU must span the same frames");
    }
    if (t.semg.frames > kMaxFrames || t.semg.channels > kMaxChannels) throw DimensionError("trial too large to store");
    ByteWriter w;
    w.bytes(kTrialMagic);
    std::uint8_t flags = kFlagSemg;
    if (t.imu) flags |= kFlagImu | (t.imu->modality == Modality::euler ? kFlagEuler : 0);
    w.u8(flags);
    w.u32(static_cast<std::uint32_t>(t.semg.frames));
    w.u32(static_cast<std::uint32_t>(t.semg.channels));
    if (t.imu) w.u32(static_cast<std::uint32_t>(t.imu->channels));
    put_series(w, t.semg);
    if (t.imu) put_series(w, *t.imu);
    const std::uint32_t crc = crc32_of(w.buffer());
    w.u32(crc);
    return std::move(w.buffer());
}

TrialRecord decode_trial(std::span<const std::uint8_t> bytes, const TrialMeta& meta) {
    ByteReader r(bytes);
    r.expect_bytes(kTrialMagic, "trial");
    const std::uint8_t flags = r.u8();
    if (!(flags & kFlagSemg) || (flags & ~(kFlagSemg | kFlagImu | kFlagEuler))) throw FormatError("bad trial flags");
    const std::uint32_t frames = r.u32();
    const std::uint32_t c1 = r.u32();
    const std::uint32_t c2 = (flags & kFlagImu) ? r.u32() : 0;
    if (frames == 0 || c1 == 0 || ((flags & kFlagImu) && c2 == 0)) throw FormatError("zero-sized trial dimension");
    if (frames > kMaxFrames || c1 > kMaxChannels || c2 > kMaxChannels) throw FormatError("trial dimension overflow");
    const std::size_t payload = (static_cast<std::size_t>(frames) * (c1 + c2)) * 4;
    if (r.remaining() < payload + 4) throw TruncatedError("trial payload truncated");
    if (r.remaining() > payload + 4) throw FormatError("trailing bytes after trial payload");
    const std::uint32_t expect = crc32_of(bytes.first(bytes.size() - 4));

    auto read_series = [&](std::uint32_t ch, Modality m) {
        std::vector<double> v(static_cast<std::size_t>(frames) * ch);
        for (auto& x : v) x = r.f32();
        return MultichannelSeries::make(frames, ch, meta.sample_rate_hz, m, std::move(v));
    };
    TrialRecord t;
    t.semg = read_series(c1, Modality::semg);
    if (flags & kFlagImu) t.imu = read_series(c2, (flags & kFlagEuler) ? Modality::euler : Modality::acc);
    if (r.u32() != expect) throw ChecksumError("trial CRC mismatch");
    t.subject = meta.subject;
    t.gesture = meta.gesture;
    t.trial = meta.trial;
    return t;
}

void write_trial(const fs::path& path, const TrialRecord& t) { write_file_bytes(path, encode_trial(t)); }

TrialRecord read_trial(const fs::path& path, const TrialMeta& meta) { return decode_trial(read_file_bytes(path), meta); }

std::vector<TrialRecord> load_trials(const fs::path& dir, const DatasetManifest& m) {
    std::vector<TrialRecord> out;
    out.reserve(m.files.size());
    for (const auto& f : m.files) {
        TrialRecord t = read_trial(dir / f.path, {f.subject, f.gesture, f.trial, m.sample_rate_hz, m.imu_kind});
        if (t.semg.channels != m.semg_channels || (t.imu && t.imu->channels != m.imu_channels)) {
            throw DimensionError("trial " + f.path + " does not match manifest channel counts");
        }
        out.push_back(std::move(t));
    }
    return out;
}

void check_dataset_files(const fs::path& dir, const DatasetManifest& m) {
    std::set<fs::path> indexed;
    for (const auto& f : m.files) {
        const fs::path p = fs::weakly_canonical(dir / f.path);
        if (!fs::is_regular_file(p)) throw FormatError("indexed trial missing: " + f.path);
        indexed.insert(p);
    }
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().extension() == ".gst" && !indexed.count(fs::weakly_canonical(e.path()))) {
            throw FormatError("unindexed trial file: " + e.path().string());
        }
    }
}

// ---------------------------------------------------------------------------
// CSV

std::vector<double> parse_csv_matrix(const std::string& text, std::size_t& rows, std::size_t& cols) {
    std::vector<double> out;
    rows = cols = 0;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<double> row;
        bool numeric = true;
        std::size_t pos = 0;
        while (true) {
            const std::size_t comma = line.find(',', pos);
            std::string_view cell(line.data() + pos, (comma == std::string::npos ? line.size() : comma) - pos);
            while (!cell.empty() && cell.front() == ' ') cell.remove_prefix(1);
            while (!cell.empty() && cell.back() == ' ') cell.remove_suffix(1);
            if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
            double v = 0.0;
            const auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
            if (cell.empty() || ec != std::errc{} || p != cell.data() + cell.size() || !std::isfinite(v)) {
                numeric = false;
            }
            row.push_back(v);
            if (comma == std::string::npos) break;
            pos = comma + 1;
        }
        if (!numeric) {
            if (rows == 0 && out.empty() && cols == 0) {
                cols = row.size();  // header fixes the column count
                continue;
            }
            throw FormatError("non-numeric cell on CSV line " + std::to_string(line_no));
        }
        if (cols == 0) cols = row.size();
        if (row.size() != cols) {
            throw FormatError("ragged CSV: line " + std::to_string(line_no) + " has " + std::to_string(row.size()) +
                              " cells, expected " + std::to_string(cols));
        }
        out.insert(out.end(), row.begin(), row.end());
        ++rows;
    }
    if (rows == 0) throw FormatError("CSV contains no data rows");
    return out;
}

TrialRecord import_csv(const fs::path& semg_csv, const fs::path& imu_csv, const DatasetManifest& manifest,
                       const TrialMeta& meta) {
    auto load = [](const fs::path& p, std::size_t& r, std::size_t& c) {
        const auto bytes = read_file_bytes(p);
        return parse_csv_matrix(std::string(bytes.begin(), bytes.end()), r, c);
    };
    std::size_t r1 = 0, c1 = 0;
    auto semg = load(semg_csv, r1, c1);
    if (c1 != manifest.semg_channels) {
        throw DimensionError("sEMG CSV has " + std::to_string(c1) + " channels, manifest expects " +
                             std::to_string(manifest.semg_channels));
    }
    TrialRecord t;
    t.semg = MultichannelSeries::make(r1, c1, manifest.sample_rate_hz, Modality::semg, std::move(semg));
    if (!imu_csv.empty()) {
        std::size_t r2 = 0, c2 = 0;
        auto imu = load(imu_csv, r2, c2);
        if (c2 != manifest.imu_channels) {
            throw DimensionError("IMU CSV has " + std::to_string(c2) + " channels, manifest expects " +
                                 std::to_string(manifest.imu_channels));
        }
        if (r2 != r1) throw DimensionError("sEMG and IMU CSVs differ in frame count");
        t.imu = MultichannelSeries::make(r2, c2, manifest.sample_rate_hz, manifest.imu_kind, std::move(imu));
    }
    t.subject = meta.subject;
    t.gesture = meta.gesture;
    t.trial = meta.trial;
    return t;
}

// ---------------------------------------------------------------------------
// trimming

namespace {

std::size_t seconds_to_frames(double s, double rate) { return static_cast<std::size_t>(std::llround(s * rate)); }

TrialRecord slice_trial(const TrialRecord& t, std::size_t begin, std::size_t count) {
    TrialRecord out;
    out.semg = t.semg.slice(begin, count);
    if (t.imu) out.imu = t.imu->slice(begin, count);
    out.subject = t.subject;
    out.gesture = t.gesture;
    out.trial = t.trial;
    return out;
}

}  // namespace

TrimmedTrial trim_trial(const TrialRecord& t, const TrimParams& p, int rest_gesture) {
    const double rate = t.semg.sample_rate_hz;
    const std::size_t lead = seconds_to_frames(p.rest_lead_s, rate);
    const std::size_t action = seconds_to_frames(p.action_s, rate);
    const std::size_t keep = seconds_to_frames(p.rest_keep_s, rate);
    const std::size_t offset = seconds_to_frames(p.rest_offset_s, rate);
    if (action == 0 || keep == 0) throw InvalidArgument("trim durations must cover at least one frame");
    if (t.semg.frames < lead + action) {
        throw InvalidArgument("trial of " + std::to_string(t.semg.frames) + " frames is shorter than rest lead + action (" +
                              std::to_string(lead + action) + ")");
    }
    if (offset + keep > lead) throw InvalidArgument("rest slice does not fit inside the rest lead");
    TrimmedTrial out{slice_trial(t, lead, action), slice_trial(t, offset, keep)};
    out.rest.gesture = rest_gesture;
    return out;
}

TrialRecord splice_rest(std::span<const TrialRecord> rests) {
    if (rests.empty()) throw InvalidArgument("nothing to splice");
    TrialRecord out = rests.front();
    for (std::size_t i = 1; i < rests.size(); ++i) {
        const auto& r = rests[i];
        if (r.semg.channels != out.semg.channels || r.imu.has_value() != out.imu.has_value() ||
            r.semg.sample_rate_hz != out.semg.sample_rate_hz) {
            throw DimensionError("rest slices differ in geometry");
        }
        out.semg.data.insert(out.semg.data.end(), r.semg.data.begin(), r.semg.data.end());
        out.semg.frames += r.semg.frames;
        if (out.imu) {
            out.imu->data.insert(out.imu->data.end(), r.imu->data.begin(), r.imu->data.end());
            out.imu->frames += r.imu->frames;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// splits

void SplitPlan::validate() const {
    for (int t : clf_train_trials)
        if (std::find(clf_test_trials.begin(), clf_test_trials.end(), t) != clf_test_trials.end()) {
            throw LeakageError("trial " + std::to_string(t) + " is both a training and a test trial");
        }
    if (experiment == Experiment::exp2) {
        for (int t : gan_train_trials)
            if (std::find(clf_test_trials.begin(), clf_test_trials.end(), t) != clf_test_trials.end()) {
                throw LeakageError("GAN training uses test trial " + std::to_string(t));
            }
    } else {
        for (int s : gan_subjects)
            if (std::find(recognition_subjects.begin(), recognition_subjects.end(), s) != recognition_subjects.end()) {
                throw LeakageError("subject " + std::to_string(s) + " is in both cohorts");
            }
    }
}

SplitPlan make_split(std::span<const int> subjects, std::span<const int> trials, Experiment e,
                     const DatabaseProfile& profile) {
    if (subjects.empty()) throw InvalidArgument("no subjects to split");
    std::vector<int> trial_ids(trials.begin(), trials.end());
    std::sort(trial_ids.begin(), trial_ids.end());
    std::vector<int> used = profile.trials_used;
    std::sort(used.begin(), used.end());
    if (trial_ids != used) {
        throw InvalidArgument("dataset trials do not match the " + profile.name + " protocol (" +
                              std::to_string(trial_ids.size()) + " trials vs " + std::to_string(used.size()) + ")");
    }
    std::vector<int> sorted(subjects.begin(), subjects.end());
    std::sort(sorted.begin(), sorted.end());
    SplitPlan p;
    p.experiment = e;
    p.clf_train_trials = profile.train_trials;
    p.clf_test_trials = profile.test_trials;
    if (e == Experiment::exp1) {
        const std::size_t half = (sorted.size() + 1) / 2;
        p.gan_subjects.assign(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(half));
        p.recognition_subjects.assign(sorted.begin() + static_cast<std::ptrdiff_t>(half), sorted.end());
        p.gan_train_trials = used;
    } else {
        p.gan_subjects = sorted;
        p.recognition_subjects = sorted;
        p.gan_train_trials = profile.train_trials;
    }
    p.validate();
    return p;
}

SplitPlan make_split(const DatasetManifest& m, Experiment e, const DatabaseProfile& profile) {
    return make_split(m.subjects, m.trials, e, profile);
}

// ---------------------------------------------------------------------------
// lock

DatasetLock::DatasetLock(const fs::path& dir) : path_(dir / ".vimu.lock") {
    fs::create_directories(dir);
    const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd < 0) throw StateError("dataset directory is locked by another writer: " + path_.string());
    const std::string pid = std::to_string(::getpid()) + "\n";
    [[maybe_unused]] auto n = ::write(fd, pid.data(), pid.size());
    ::close(fd);
}

DatasetLock::~DatasetLock() {
    std::error_code ec;
    fs::remove(path_, ec);
}

// ---------------------------------------------------------------------------
// synthetic data

void SynthConfig::validate() const {
    if (subjects < 1 || gestures < 1 || trials < 1 || semg_channels < 1 || imu_channels < 1 || latent_dim < 1) {
        throw ConfigError("synthetic dataset counts must be >= 1");
    }
    if (!(sample_rate_hz > 0.0)) throw ConfigError("synthetic sample rate must be positive");
    if (trial_s < rest_lead_s + action_s) throw ConfigError("trial_s must cover rest lead + action");
    if (imu_kind == Modality::semg) throw ConfigError("imu_kind must be acc or euler");
}

namespace {

std::uint64_t mix_ids(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) {
    // splitmix64 finaliser over a simple combination
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (a + 1) + 0xBF58476D1CE4E5B9ull * (b + 1) + 0x94D049BB133111EBull * (c + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

double smoothstep(double x) {
    x = std::clamp(x, 0.0, 1.0);
    return x * x * (3.0 - 2.0 * x);
}

constexpr double kRamp = 0.25;       // seconds
constexpr double kEnvFloor = 0.05;   // resting muscle tone
constexpr double kModDepth = 0.25;   // within-gesture envelope modulation

}  // namespace

SynthMaps synth_maps(const SynthConfig& cfg) {
    cfg.validate();
    Rng rng(mix_ids(cfg.seed, 0xA11));
    const std::size_t L = cfg.latent_dim;
    SynthMaps m;
    m.mix.resize(cfg.semg_channels * L);
    for (auto& v : m.mix) v = rng.uniform(0.0, 1.0);
    m.imu.resize(cfg.imu_channels * L);
    for (auto& v : m.imu) v = rng.normal();
    // redraw gesture amplitudes until every pair is clearly apart
    m.latent.resize(cfg.gestures * L);
    for (int attempt = 0;; ++attempt) {
        for (auto& v : m.latent) v = rng.uniform(0.1, 1.0);
        double closest = INFINITY;
        for (std::size_t a = 0; a < cfg.gestures; ++a)
            for (std::size_t b = a + 1; b < cfg.gestures; ++b) {
                double d = 0.0;
                for (std::size_t l = 0; l < L; ++l) d += std::pow(m.latent[a * L + l] - m.latent[b * L + l], 2);
                closest = std::min(closest, std::sqrt(d));
            }
        if (closest > 0.25 || attempt > 1000) break;
    }
    m.freq.resize(cfg.gestures * L);
    for (auto& v : m.freq) v = rng.uniform(0.3, 1.2);
    return m;
}

std::vector<double> synth_latent(const SynthConfig& cfg, const SynthMaps& maps, int gesture, int subject, int trial) {
    const std::size_t L = cfg.latent_dim;
    const std::size_t frames = static_cast<std::size_t>(std::llround(cfg.trial_s * cfg.sample_rate_hz));
    Rng rng(mix_ids(cfg.seed, 0x7A1, static_cast<std::uint64_t>(subject) << 20 | static_cast<std::uint64_t>(gesture),
                    static_cast<std::uint64_t>(trial)));
    std::vector<double> amp(L), phase(L);
    for (std::size_t l = 0; l < L; ++l) {
        amp[l] = maps.latent[gesture * L + l] * std::max(0.1, 1.0 + cfg.trial_amp_jitter * rng.normal());
        phase[l] = rng.uniform(0.0, 2.0 * std::numbers::pi);
    }
    const double on = cfg.rest_lead_s, off = cfg.rest_lead_s + cfg.action_s;
    std::vector<double> e(frames * L);
    for (std::size_t i = 0; i < frames; ++i) {
        const double t = static_cast<double>(i) / cfg.sample_rate_hz;
        const double gate = smoothstep((t - on) / kRamp) * (1.0 - smoothstep((t - off) / kRamp));
        for (std::size_t l = 0; l < L; ++l) {
            const double mod = 1.0 + kModDepth * std::sin(2.0 * std::numbers::pi * maps.freq[gesture * L + l] * t + phase[l]);
            e[i * L + l] = gate * amp[l] * mod;
        }
    }
    return e;
}

TrialRecord synth_trial(const SynthConfig& cfg, const SynthMaps& maps, int subject, int gesture, int trial) {
    const std::size_t L = cfg.latent_dim, c1 = cfg.semg_channels, c2 = cfg.imu_channels;
    const std::vector<double> e = synth_latent(cfg, maps, gesture, subject, trial);
    const std::size_t frames = e.size() / L;

    Rng subj_rng(mix_ids(cfg.seed, 0x5B1, static_cast<std::uint64_t>(subject)));
    std::vector<double> subj_gain(c1);
    for (auto& g : subj_gain) g = std::max(0.2, 1.0 + cfg.subject_gain_jitter * subj_rng.normal());

    Rng rng(mix_ids(cfg.seed, 0x3E7, static_cast<std::uint64_t>(subject) << 20 | static_cast<std::uint64_t>(gesture),
                    static_cast<std::uint64_t>(trial)));
    std::vector<double> gain(c1), offset(c2);
    for (std::size_t c = 0; c < c1; ++c) gain[c] = subj_gain[c] * std::max(0.2, 1.0 + cfg.trial_gain_jitter * rng.normal());
    for (auto& o : offset) o = cfg.orientation_jitter * rng.normal();

    // stored values are float-representable so files round-trip exactly
    auto q = [](double v) { return static_cast<double>(static_cast<float>(v)); };
    std::vector<double> semg(frames * c1), imu(frames * c2);
    for (std::size_t i = 0; i < frames; ++i) {
        const double* ei = &e[i * L];
        for (std::size_t c = 0; c < c1; ++c) {
            double env = kEnvFloor;
            for (std::size_t l = 0; l < L; ++l) env += maps.mix[c * L + l] * ei[l];
            semg[i * c1 + c] = q(gain[c] * env * rng.normal() + cfg.emg_noise * rng.normal());
        }
        for (std::size_t j = 0; j < c2; ++j) {
            double v = offset[j];
            for (std::size_t l = 0; l < L; ++l) v += maps.imu[j * L + l] * ei[l];
            imu[i * c2 + j] = q(v + cfg.imu_noise * rng.normal());
        }
    }
    TrialRecord t;
    t.semg = MultichannelSeries::make(frames, c1, cfg.sample_rate_hz, Modality::semg, std::move(semg));
    t.imu = MultichannelSeries::make(frames, c2, cfg.sample_rate_hz, cfg.imu_kind, std::move(imu));
    t.subject = subject;
    t.gesture = gesture;
    t.trial = trial;
    return t;
}

DatasetManifest synth_generate(const SynthConfig& cfg, const fs::path& dir) {
    cfg.validate();
    DatasetLock lock(dir);
    const SynthMaps maps = synth_maps(cfg);
    DatasetManifest m;
    m.name = "synthetic";
    m.profile = "synthetic";
    for (std::size_t s = 1; s <= cfg.subjects; ++s) m.subjects.push_back(static_cast<int>(s));
    for (std::size_t g = 0; g < cfg.gestures; ++g) m.gesture_labels.push_back("g" + std::to_string(g));
    for (std::size_t t = 1; t <= cfg.trials; ++t) m.trials.push_back(static_cast<int>(t));
    m.sample_rate_hz = cfg.sample_rate_hz;
    m.semg_channels = cfg.semg_channels;
    m.imu_channels = cfg.imu_channels;
    m.imu_kind = cfg.imu_kind;
    for (int s : m.subjects)
        for (std::size_t g = 0; g < cfg.gestures; ++g)
            for (int t : m.trials) {
                const std::string rel = "s" + std::to_string(s) + "/g" + std::to_string(g) + "_t" + std::to_string(t) + ".gst";
                write_trial(dir / rel, synth_trial(cfg, maps, s, static_cast<int>(g), t));
                m.files.push_back({s, static_cast<int>(g), t, rel});
            }
    save_manifest(dir, m);
    return m;
}

}  // namespace vimu
