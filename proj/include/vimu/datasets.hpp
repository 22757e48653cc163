#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vimu/sigproc.hpp"

namespace vimu {

enum class Experiment { exp1, exp2 };
std::string to_string(Experiment e);
Experiment experiment_from_string(const std::string& s);

/// Geometry and trial protocol of one database.
struct DatabaseProfile {
    std::string name;
    std::size_t subjects = 0;  // subjects to be classified
    std::size_t gestures = 0;  // classes, including rest when rest_class is set
    std::size_t semg_channels = 0;
    std::size_t imu_channels = 0;
    Modality imu_kind = Modality::acc;
    std::size_t trials_total = 0;
    std::vector<int> trials_used;  // 1-based
    double sample_rate_hz = 0.0;
    std::size_t decimation = 1;
    bool rest_class = false;
    std::vector<int> train_trials;
    std::vector<int> test_trials;
};

/// Built-in profiles: femg_vpf, db2, db3, db5, db7, siem, synthetic.
const std::vector<DatabaseProfile>& builtin_profiles();
const DatabaseProfile& profile_by_name(const std::string& name);

struct TrialFile {
    int subject = 0;
    int gesture = 0;
    int trial = 0;
    std::string path;  // relative to the dataset directory
    bool operator==(const TrialFile&) const = default;
};

struct DatasetManifest {
    std::string name;
    std::string profile;
    std::vector<int> subjects;
    std::vector<std::string> gesture_labels;
    std::vector<int> trials;
    double sample_rate_hz = 0.0;
    std::size_t semg_channels = 0;
    std::size_t imu_channels = 0;  // 0 for sEMG-only sets
    Modality imu_kind = Modality::acc;
    std::vector<TrialFile> files;

    std::size_t gestures() const { return gesture_labels.size(); }
    void validate() const;
    const TrialFile* find(int subject, int gesture, int trial) const;
    bool operator==(const DatasetManifest&) const = default;
};

std::string manifest_to_json(const DatasetManifest& m);
DatasetManifest manifest_from_json(const std::string& text);
void save_manifest(const std::filesystem::path& dir, const DatasetManifest& m);
DatasetManifest load_manifest(const std::filesystem::path& dir);

struct TrialRecord {
    MultichannelSeries semg;
    std::optional<MultichannelSeries> imu;
    int gesture = 0;
    int subject = 0;
    int trial = 0;
};

/// Identity and rate of a stored trial; these live in the manifest.
struct TrialMeta {
    int subject = 0;
    int gesture = 0;
    int trial = 0;
    double sample_rate_hz = 0.0;
    Modality imu_kind = Modality::acc;
};

// Trial binary (little-endian):
//   "GST1" | u8 flags (bit0 sEMG, bit1 IMU, bit2 IMU is Euler) | u32 frames |
//   u32 channels per present modality | f32 payloads, row-major, sEMG first |
//   u32 CRC-32 of all preceding bytes
std::vector<std::uint8_t> encode_trial(const TrialRecord& t);
TrialRecord decode_trial(std::span<const std::uint8_t> bytes, const TrialMeta& meta);
void write_trial(const std::filesystem::path& path, const TrialRecord& t);
TrialRecord read_trial(const std::filesystem::path& path, const TrialMeta& meta);

/// Reads every indexed trial of a dataset directory.
std::vector<TrialRecord> load_trials(const std::filesystem::path& dir, const DatasetManifest& m);
/// Verifies every index entry resolves and no .gst file is unindexed.
void check_dataset_files(const std::filesystem::path& dir, const DatasetManifest& m);

/// Parses one CSV matrix: one row per frame, comma separated, optional
/// single header line.
std::vector<double> parse_csv_matrix(const std::string& text, std::size_t& rows, std::size_t& cols);
TrialRecord import_csv(const std::filesystem::path& semg_csv, const std::filesystem::path& imu_csv,
                       const DatasetManifest& manifest, const TrialMeta& meta);

struct TrimParams {
    double rest_lead_s = 1.0;
    double action_s = 3.0;
    double rest_keep_s = 0.5;
    double rest_offset_s = 0.0;  // where the kept rest slice starts inside the lead
};

struct TrimmedTrial {
    TrialRecord action;
    TrialRecord rest;
};

/// Splits a trial into its action segment and a rest slice labelled rest_gesture.
TrimmedTrial trim_trial(const TrialRecord& t, const TrimParams& p, int rest_gesture);
/// Concatenates rest slices (same subject, same geometry) in the given order.
TrialRecord splice_rest(std::span<const TrialRecord> rests);

struct SplitPlan {
    Experiment experiment = Experiment::exp2;
    std::vector<int> gan_subjects;
    std::vector<int> recognition_subjects;
    std::vector<int> gan_train_trials;
    std::vector<int> clf_train_trials;
    std::vector<int> clf_test_trials;

    void validate() const;
    bool operator==(const SplitPlan&) const = default;
};

/// Subject cohorts and trial roles. Exp1 halves the sorted subject list
/// (GAN cohort gets the larger half); Exp2 uses everyone for both roles.
SplitPlan make_split(const DatasetManifest& m, Experiment e, const DatabaseProfile& profile);
/// Profile-free variant for manifests whose trials match a profile's protocol.
SplitPlan make_split(std::span<const int> subjects, std::span<const int> trials, Experiment e,
                     const DatabaseProfile& profile);

/// Exclusive writer lock on a dataset directory; released on destruction.
class DatasetLock {
public:
    explicit DatasetLock(const std::filesystem::path& dir);
    ~DatasetLock();
    DatasetLock(const DatasetLock&) = delete;
    DatasetLock& operator=(const DatasetLock&) = delete;

private:
    std::filesystem::path path_;
};

struct SynthConfig {
    std::size_t subjects = 4;
    std::size_t gestures = 4;
    std::size_t trials = 4;
    double sample_rate_hz = 200.0;
    std::size_t semg_channels = 8;
    std::size_t imu_channels = 3;
    Modality imu_kind = Modality::euler;
    double trial_s = 6.0;
    double rest_lead_s = 1.0;
    double action_s = 3.0;
    std::size_t latent_dim = 3;
    double emg_noise = 0.05;        // additive baseline noise
    double imu_noise = 0.05;
    double subject_gain_jitter = 0.3;
    double trial_gain_jitter = 0.05;
    double trial_amp_jitter = 0.05;  // per-trial latent amplitude wobble
    double orientation_jitter = 0.1;
    std::uint64_t seed = 1;

    void validate() const;
};

/// The linear maps behind a synthetic dataset: sEMG envelope = M e + floor,
/// IMU = A e + offset, with e the gesture's latent activation.
struct SynthMaps {
    std::vector<double> mix;     // C1 x L, non-negative
    std::vector<double> imu;     // C2 x L
    std::vector<double> latent;  // G x L gesture amplitudes
    std::vector<double> freq;    // G x L modulation frequencies, Hz
};
SynthMaps synth_maps(const SynthConfig& cfg);

/// Noise-free latent activation of a gesture trial, frames x L.
std::vector<double> synth_latent(const SynthConfig& cfg, const SynthMaps& maps, int gesture, int subject, int trial);

/// Generates one trial in memory (deterministic in cfg.seed and the ids).
TrialRecord synth_trial(const SynthConfig& cfg, const SynthMaps& maps, int subject, int gesture, int trial);
/// Writes a full synthetic dataset (manifest + trial files) into dir.
DatasetManifest synth_generate(const SynthConfig& cfg, const std::filesystem::path& dir);

}  // namespace vimu
