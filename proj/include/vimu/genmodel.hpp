#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "vimu/network.hpp"
#include "vimu/optim.hpp"
#include "vimu/sigproc.hpp"

namespace vimu {

/// sEMG window (k x c1) to IMU window (k x c2) generator geometry.
struct GeneratorConfig {
    std::size_t k = 20;
    std::size_t c1 = 8;
    std::size_t c2 = 3;
    /// Batchnorm on the last (single-map) transposed convolution.
    bool final_bn = true;

    void validate() const;
    std::size_t dense_units() const { return k * c2; }
};

struct DiscriminatorConfig {
    std::size_t k = 20;
    std::size_t c2 = 3;
    double dropout = 0.2;
    double leaky_slope = 0.2;

    void validate() const;
};

enum class GeneratorLoss { nonsaturating, minimax };

struct GanTrainConfig {
    int epochs = 10000;
    std::size_t batch_size = 64;
    double learning_rate = 2e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double dropout = 0.2;
    GeneratorLoss generator_loss = GeneratorLoss::nonsaturating;
    std::uint64_t seed = 0;

    void validate() const;
};

std::vector<LayerSpec> generator_layers(const GeneratorConfig& cfg);
std::vector<LayerSpec> discriminator_layers(const DiscriminatorConfig& cfg);

/// Per-sample input/output shapes: sEMG [1,k,c1] -> IMU [1,k,c2].
Shape generator_input_shape(const GeneratorConfig& cfg);
Shape imu_window_shape(std::size_t k, std::size_t c2);

ParamSet<float> build_generator(const GeneratorConfig& cfg, std::uint64_t seed);
ParamSet<float> build_discriminator(const DiscriminatorConfig& cfg, std::uint64_t seed);

/// Value of the adversarial objective: mean log D(real) + mean log(1 - D(fake)),
/// probabilities clamped to the BCE clamp range.
double gan_value(std::span<const double> d_real, std::span<const double> d_fake);

/// Normalized training pairs: semg [N,1,k,c1] (z-scored), imu [N,1,k,c2] in [-1,1].
struct PairedWindows {
    Tensor<float> semg;
    Tensor<float> imu;
    std::size_t count() const { return semg.empty() ? 0 : semg.dim(0); }
};

struct GanEpochStats {
    int epoch = 0;
    double d_loss = 0.0;
    double g_loss = 0.0;
    double d_real = 0.0;
    double d_fake = 0.0;
    double value = 0.0;
};

/// Generator, discriminator and their optimizers. Exposes the two
/// alternating steps so they can be driven and inspected individually.
class Gan {
public:
    Gan(const GeneratorConfig& gcfg, const GanTrainConfig& tcfg);

    /// Generator forward in train mode; caches activations for generator_step.
    Tensor<float> generate_train(const Tensor<float>& semg);
    /// One discriminator update on real (target 1) and fake (target 0),
    /// stacked into a single batch. Touches only discriminator parameters.
    GanEpochStats discriminator_step(const Tensor<float>& real, const Tensor<float>& fake);
    /// One generator update through the current discriminator using the
    /// activations from the last generate_train. The real batch rides along
    /// for batch statistics only. Touches only generator parameters.
    double generator_step(const Tensor<float>& real, const Tensor<float>& fake);

    /// D(x) per sample. Train mode uses batch statistics and leaves running
    /// statistics untouched.
    std::vector<double> discriminate(const Tensor<float>& x, Mode mode);
    Tensor<float> generate(const Tensor<float>& semg);  // eval mode

    void freeze_dropout(bool frozen) { disc_net_.freeze_dropout(frozen); }

    ParamSet<float>& generator() { return gen_; }
    ParamSet<float>& discriminator() { return disc_; }
    const GeneratorConfig& generator_config() const { return gcfg_; }
    const GanTrainConfig& train_config() const { return tcfg_; }

private:
    GeneratorConfig gcfg_;
    DiscriminatorConfig dcfg_;
    GanTrainConfig tcfg_;
    Sequential<float> gen_net_;
    Sequential<float> disc_net_;
    ParamSet<float> gen_;
    ParamSet<float> disc_;
    Adam<float> gen_opt_;
    Adam<float> disc_opt_;
};

struct GanResult {
    ParamSet<float> generator;
    ParamSet<float> discriminator;
    std::vector<GanEpochStats> history;
};

using GanProgress = std::function<void(const GanEpochStats&)>;

/// Alternating 1:1 discriminator/generator updates over shuffled batches.
GanResult train_gan(const PairedWindows& pairs, const GeneratorConfig& gcfg, const GanTrainConfig& cfg,
                    const GanProgress& progress = {});

/// A trained generator together with the normalization it was trained under.
struct TrainedGenerator {
    GeneratorConfig config;
    ParamSet<float> params;
    ChannelStats semg_stats;  // z-score stats of generator inputs
    ChannelStats imu_stats;   // min-max stats of IMU targets
};

/// Runs the generator in eval mode on already-normalized sEMG [N,1,k,c1];
/// output [N,1,k,c2] in [-1,1].
Tensor<float> generate_normalized(const TrainedGenerator& gen, const Tensor<float>& semg);

/// Normalizes raw sEMG windows, generates, and denormalizes to IMU units.
std::vector<SignalWindow> generate_virtual(const TrainedGenerator& gen, std::span<const SignalWindow> semg,
                                           Modality imu_modality);

/// Pearson correlation per channel between two equally shaped window sets,
/// pooled over windows and frames.
std::vector<double> per_channel_correlation(std::span<const SignalWindow> a, std::span<const SignalWindow> b);

}  // namespace vimu
