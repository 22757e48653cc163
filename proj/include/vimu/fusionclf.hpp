#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "vimu/network.hpp"
#include "vimu/optim.hpp"

namespace vimu {

/// One modality stream: BN -> 2x (conv 3x3 same + BN + ReLU) ->
/// 2x (locally connected 1x1 + BN + ReLU) -> flatten -> dense -> dropout.
struct StreamConfig {
    std::string name = "semg";  // parameter prefix
    std::size_t k = 20;
    std::size_t channels = 8;
    std::size_t maps = 64;
    std::size_t dense_units = 512;
    double dropout = 0.5;

    void validate() const;
};

/// concat -> ReLU -> dense -> BN -> ReLU -> dense(classes) -> softmax.
struct FusionConfig {
    std::size_t hidden = 512;
    std::size_t classes = 2;

    void validate() const;
};

struct ClfTrainConfig {
    std::size_t batch_size = 64;
    int epochs = 28;
    StepSchedule schedule;
    bool pretrain = false;
    std::uint64_t seed = 0;

    void validate() const;
};

std::vector<LayerSpec> stream_layers(const StreamConfig& cfg);
std::vector<LayerSpec> fusion_layers(const FusionConfig& cfg);

/// One example per row; inputs[s] has shape [N,1,k,C_s] for stream s.
struct ClfData {
    std::vector<Tensor<float>> inputs;
    std::vector<std::size_t> labels;

    std::size_t size() const { return labels.size(); }
    /// Rows idx of every stream.
    ClfData subset(std::span<const std::size_t> idx) const;
    /// Row-wise concatenation of datasets with identical stream geometry.
    static ClfData concat(std::span<const ClfData> parts);
};

/// Layer graph of a single- or dual-stream classifier. Holds forward caches,
/// so one instance serves one thread.
class Classifier {
public:
    Classifier(std::vector<StreamConfig> streams, FusionConfig fusion, std::uint64_t dropout_seed = 0);

    const std::vector<StreamConfig>& streams() const { return stream_cfgs_; }
    const FusionConfig& fusion() const { return fusion_cfg_; }

    /// He-normal initialization; each stream and the head draw from a stream
    /// keyed by (seed, prefix), so equally named streams initialize equally.
    ParamSet<float> init_params(std::uint64_t seed) const;

    /// Class probabilities [N, classes].
    Tensor<float> forward(ParamSet<float>& ps, std::span<const Tensor<float>> inputs, Mode mode);
    /// Accumulates gradients of every stream and the head.
    void backward(ParamSet<float>& ps, const Tensor<float>& dprobs);

    /// Stream s on its own: [N, dense_units].
    Tensor<float> stream_forward(std::size_t s, ParamSet<float>& ps, const Tensor<float>& x, Mode mode);

    void reseed_dropout(std::uint64_t seed);

private:
    std::vector<StreamConfig> stream_cfgs_;
    FusionConfig fusion_cfg_;
    std::vector<Sequential<float>> streams_;
    Sequential<float> head_;
};

/// Parameter sets for the dual-stream and the sEMG-only variants.
ParamSet<float> build_multimodal(const StreamConfig& semg, const StreamConfig& imu, const FusionConfig& fusion,
                                 std::uint64_t seed);
ParamSet<float> build_unimodal(const StreamConfig& semg, const FusionConfig& fusion, std::uint64_t seed);

struct ClfEpoch {
    int epoch = 0;
    double learning_rate = 0.0;
    double loss = 0.0;
    double accuracy = 0.0;
};

struct ClfResult {
    ParamSet<float> params;
    std::vector<ClfEpoch> history;
};

using ClfProgress = std::function<void(const ClfEpoch&)>;

/// SGD over shuffled batches with the step schedule. A trailing batch of
/// one example is folded into the previous one (batchnorm needs two rows).
ClfResult train_classifier(Classifier& model, ParamSet<float> params, const ClfData& train, const ClfTrainConfig& cfg,
                           const ClfProgress& progress = {});

/// With cfg.pretrain: full schedule on all_train, then a full schedule on
/// subject_train from the pretrained weights. Without: subject_train only.
ClfResult pretrain_then_finetune(Classifier& model, ParamSet<float> params, const ClfData& all_train,
                                 const ClfData& subject_train, const ClfTrainConfig& cfg);

struct Prediction {
    std::vector<std::size_t> classes;
    std::vector<double> max_prob;
    Tensor<float> probs;
};

/// Eval-mode prediction; argmax ties go to the lowest class index.
Prediction predict(Classifier& model, ParamSet<float>& params, std::span<const Tensor<float>> inputs);
std::size_t argmax_lowest(std::span<const float> row);

}  // namespace vimu
