#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vimu/datasets.hpp"
#include "vimu/fusionclf.hpp"
#include "vimu/genmodel.hpp"

namespace vimu {

enum class Arm { unimodal, virtual_multimodal, real_multimodal };
std::string to_string(Arm a);
Arm arm_from_string(const std::string& s);

struct ExperimentConfig {
    std::string dataset;
    std::string profile;  // empty: taken from the manifest
    Experiment experiment = Experiment::exp2;
    PreprocessParams preprocess;
    std::optional<std::size_t> decimation;  // unset: the profile's factor
    bool trim = true;
    TrimParams trim_params;
    GanTrainConfig gan;
    bool generator_final_bn = true;
    ClfTrainConfig clf;
    std::size_t stream_maps = 64;
    std::size_t stream_dense = 512;
    std::size_t fusion_hidden = 512;
    double stream_dropout = 0.5;
    std::vector<Arm> arms{Arm::unimodal, Arm::virtual_multimodal, Arm::real_multimodal};
    std::uint64_t seed = 1;
    std::string output_dir = "out";

    void validate() const;
};

/// JSON round trip. Unknown keys are rejected so typos surface as usage errors.
std::string config_to_json(const ExperimentConfig& cfg);
ExperimentConfig config_from_json(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);
/// Applies "key=value" overrides (dotted keys, e.g. gan.epochs=200), then VIMU_SEED.
void apply_overrides(ExperimentConfig& cfg, std::span<const std::string> overrides);
void apply_env_seed(ExperimentConfig& cfg);
std::string config_fingerprint(const ExperimentConfig& cfg);

/// One window position of a preprocessed segment, in every representation.
struct LabeledWindow {
    SignalWindow gan_semg;             // RMS chain
    SignalWindow hgr_semg;             // rectify + low-pass chain
    std::optional<SignalWindow> imu;   // moving-average chain
    std::size_t label = 0;
    int subject = 0;
    int trial = 0;
};

/// Preprocessed, windowed dataset with its split plan.
struct PreparedData {
    DatasetManifest manifest;
    DatabaseProfile profile;
    SplitPlan plan;
    std::size_t classes = 0;
    std::size_t k = 0;
    std::size_t step = 0;
    double effective_rate_hz = 0.0;
    std::vector<LabeledWindow> windows;
    /// Series behind the windows, keyed by (subject, trial), for fitting stats.
    std::vector<MultichannelSeries> gan_train_semg;
    std::vector<MultichannelSeries> gan_train_imu;
};

PreparedData prepare_data(const ExperimentConfig& cfg);

/// Which role a set of windows is about to be used for.
enum class Role { gan_training, clf_training };
/// Throws LeakageError if any window falls outside what the plan allows for role.
void leakage_guard(const SplitPlan& plan, Role role, std::span<const LabeledWindow* const> windows);

/// GAN stage: pairs from the GAN cohort's training trials.
struct GeneratorStage {
    TrainedGenerator generator;
    ParamSet<float> discriminator;
    std::vector<GanEpochStats> history;
};
GeneratorStage train_generator_stage(const PreparedData& data, const ExperimentConfig& cfg,
                                     const GanProgress& progress = {});

/// Virtual IMU for every window of the recognition subjects, index-aligned
/// with data.windows (entries outside the cohort stay empty).
std::vector<std::optional<SignalWindow>> synthesize_virtual(const PreparedData& data, const TrainedGenerator& gen);

struct SubjectResult {
    int subject = 0;
    double accuracy = 0.0;
    double trial_vote_accuracy = 0.0;  // auxiliary
    std::size_t test_windows = 0;
    bool operator==(const SubjectResult&) const = default;
};

struct ArmResult {
    Arm arm = Arm::unimodal;
    std::vector<SubjectResult> subjects;
    double mean = 0.0;
    double std = 0.0;
    bool operator==(const ArmResult&) const = default;
};

struct MetricsReport {
    std::string dataset;
    std::string profile;
    Experiment experiment = Experiment::exp2;
    std::string fingerprint;
    std::uint64_t seed = 0;
    std::vector<ArmResult> arms;
    std::map<std::string, double> deltas;  // virtual_minus_unimodal, real_minus_virtual

    const ArmResult* find(Arm a) const;
    void validate() const;
    bool operator==(const MetricsReport&) const = default;
};

/// Per-arm classifier inputs for one subject.
struct ArmData {
    ClfData train;
    ClfData test;
    std::vector<int> test_trials;  // per test window, for the trial vote
};
ArmData build_arm_data(const PreparedData& data, Arm arm, int subject,
                       const std::vector<std::optional<SignalWindow>>& virtual_imu);

Classifier make_classifier(const PreparedData& data, Arm arm, const ExperimentConfig& cfg);

struct Progress {
    std::function<void(const std::string&)> log;
};

/// Per-subject classifiers of one arm, subjects ascending.
struct TrainedArm {
    Arm arm = Arm::unimodal;
    std::vector<int> subjects;
    std::vector<ParamSet<float>> params;
};

std::string classifier_checkpoint_name(Arm arm, int subject);

/// Optional pretraining on all recognition subjects, then one schedule per subject.
TrainedArm train_arm(const PreparedData& data, Arm arm, const ExperimentConfig& cfg,
                     const std::vector<std::optional<SignalWindow>>& virtual_imu, const Progress& progress = {});
/// Test-window accuracy per subject; predictions (if given) receive one entry per subject.
ArmResult evaluate_arm(const PreparedData& data, const TrainedArm& trained, const ExperimentConfig& cfg,
                       const std::vector<std::optional<SignalWindow>>& virtual_imu,
                       std::vector<Prediction>* predictions = nullptr);

/// Full pipeline; checkpoints go to cfg.output_dir when write_artifacts is set.
MetricsReport run_experiment(const ExperimentConfig& cfg, bool write_artifacts = true, const Progress& progress = {});

double compute_accuracy(std::span<const std::size_t> predictions, std::span<const std::size_t> labels);
/// Mean and sample standard deviation (n-1); std = 0 for a single value.
std::pair<double, double> aggregate(std::span<const double> values);
/// Majority vote per trial, ties to the lowest class; accuracy over trials.
double trial_vote_accuracy(std::span<const std::size_t> predictions, std::span<const std::size_t> labels,
                           std::span<const int> trials);

std::string report_to_json(const MetricsReport& r);
MetricsReport report_from_json(const std::string& text);
std::string report_to_csv(const MetricsReport& r);
std::string report_to_svg(const MetricsReport& r);
/// formats from {"json","csv","svg"}; files report.json / report.csv / report.svg.
void emit_report(const MetricsReport& r, std::span<const std::string> formats, const std::filesystem::path& dir);

/// Sidecar written next to generator checkpoints.
std::string generator_sidecar_json(const TrainedGenerator& gen, const GanTrainConfig& cfg,
                                   const std::string& data_fingerprint);
TrainedGenerator load_generator(const std::filesystem::path& ckpt, const std::filesystem::path& sidecar);

}  // namespace vimu
