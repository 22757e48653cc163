#include <gtest/gtest.h>

#include <cmath>

#include "vimu/checkpoint.hpp"
#include "vimu/fusionclf.hpp"
#include "vimu/losses.hpp"

using namespace vimu;

namespace {

StreamConfig small_stream(std::string name, std::size_t k, std::size_t c) {
    StreamConfig s;
    s.name = std::move(name);
    s.k = k;
    s.channels = c;
    s.maps = 8;
    s.dense_units = 16;
    return s;
}

Tensor<float> random_input(std::size_t n, std::size_t k, std::size_t c, std::uint64_t seed) {
    Rng r(seed);
    Tensor<float> t({n, 1, k, c});
    for (auto& v : t.storage()) v = static_cast<float>(r.normal());
    return t;
}

// labels recoverable from the input mean, so a small net can memorise them
ClfData separable(std::size_t n, std::size_t k, std::size_t c, std::size_t classes, std::uint64_t seed) {
    Rng r(seed);
    ClfData d;
    Tensor<float> x({n, 1, k, c});
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t label = i % classes;
        d.labels.push_back(label);
        for (std::size_t j = 0; j < k * c; ++j)
            x[i * k * c + j] = static_cast<float>(r.normal(0.0, 0.5) + (j % classes == label ? 2.0 : 0.0));
    }
    d.inputs.push_back(x);
    return d;
}

}  // namespace

TEST(Streams, PreserveGridForAllGeometries) {
    const std::size_t geoms[][2] = {{20, 8}, {20, 12}, {20, 16}, {20, 3}, {20, 36}};
    for (const auto& g : geoms) {
        StreamConfig s;
        s.k = g[0];
        s.channels = g[1];
        Sequential<float> net(stream_layers(s), {1, g[0], g[1]});
        for (std::size_t i = 0; i < net.specs().size(); ++i) {
            const auto kind = net.specs()[i].kind;
            if (kind == LayerKind::conv2d || kind == LayerKind::locally_connected)
                EXPECT_EQ(net.layer_shapes()[i], (Shape{64, g[0], g[1]}));
        }
        EXPECT_EQ(net.output_shape(), (Shape{512}));
    }
}

TEST(Streams, Db2FlattenWidth) {
    StreamConfig s;
    s.k = 20;
    s.channels = 12;
    Sequential<float> net(stream_layers(s), {1, 20, 12});
    for (std::size_t i = 0; i < net.specs().size(); ++i)
        if (net.specs()[i].kind == LayerKind::flatten) EXPECT_EQ(net.layer_shapes()[i], (Shape{15360}));
}

TEST(Classifier, MismatchedWindowLengthRejected) {
    EXPECT_THROW(Classifier({small_stream("semg", 6, 4), small_stream("imu", 5, 3)}, {16, 4}), ConfigError);
}

TEST(Classifier, ParameterCountDifference) {
    const StreamConfig s = small_stream("semg", 6, 4), i = small_stream("imu", 6, 3);
    const FusionConfig f{32, 4};
    const auto multi = build_multimodal(s, i, f, 1), uni = build_unimodal(s, f, 1);
    std::size_t imu_stream = 0;
    for (const auto& [n, e] : multi.entries())
        if (e.trainable && n.rfind("imu.", 0) == 0) imu_stream += e.value.size();
    EXPECT_EQ(multi.trainable_count() - uni.trainable_count(), imu_stream + f.hidden * i.dense_units);
}

TEST(Classifier, SharedSeedSharesSemgInit) {
    const StreamConfig s = small_stream("semg", 6, 4), i = small_stream("imu", 6, 3);
    const auto multi = build_multimodal(s, i, {32, 4}, 7), uni = build_unimodal(s, {32, 4}, 7);
    for (const auto& [n, e] : uni.entries())
        if (n.rfind("semg.", 0) == 0) EXPECT_EQ(multi.at(n).value, e.value) << n;
}

TEST(Classifier, ForwardShapeAndSoftmax) {
    Classifier m({small_stream("semg", 6, 4), small_stream("imu", 6, 3)}, {32, 5});
    ParamSet<float> ps = m.init_params(3);
    const std::vector<Tensor<float>> in{random_input(7, 6, 4, 1), random_input(7, 6, 3, 2)};
    const Tensor<float> p = m.forward(ps, in, Mode::eval);
    ASSERT_EQ(p.shape(), (Shape{7, 5}));
    for (std::size_t n = 0; n < 7; ++n) {
        double s = 0.0;
        for (std::size_t j = 0; j < 5; ++j) {
            EXPECT_GT(p[n * 5 + j], 0.0f);
            s += p[n * 5 + j];
        }
        EXPECT_NEAR(s, 1.0, 1e-6);
    }
}

TEST(Classifier, ImuParamsDoNotAffectSemgStream) {
    Classifier m({small_stream("semg", 6, 4), small_stream("imu", 6, 3)}, {32, 3});
    ParamSet<float> ps = m.init_params(3);
    const Tensor<float> x = random_input(4, 6, 4, 1);
    const Tensor<float> before = m.stream_forward(0, ps, x, Mode::eval);
    for (auto& [n, e] : ps.entries())
        if (n.rfind("imu.", 0) == 0)
            for (auto& v : e.value.storage()) v += 0.5f;
    EXPECT_EQ(m.stream_forward(0, ps, x, Mode::eval), before);
}

TEST(Training, LearningRateTrace) {
    Classifier m({small_stream("semg", 4, 3)}, {16, 2});
    ClfTrainConfig c;
    c.batch_size = 8;
    const ClfResult r = train_classifier(m, m.init_params(1), separable(16, 4, 3, 2, 1), c);
    ASSERT_EQ(r.history.size(), 28u);
    for (int e = 0; e < 28; ++e) {
        const double want = e < 16 ? 0.1 : e < 24 ? 0.1 / 10.0 : 0.1 / 10.0 / 10.0;
        EXPECT_EQ(r.history[e].learning_rate, want) << e;
    }
}

TEST(Training, ZeroEpochsUnchanged) {
    Classifier m({small_stream("semg", 4, 3)}, {16, 2});
    ClfTrainConfig c;
    c.epochs = 0;
    c.schedule.decay_epochs = {};
    const ParamSet<float> p0 = m.init_params(1);
    EXPECT_EQ(train_classifier(m, p0, separable(16, 4, 3, 2, 1), c).params, p0);
}

TEST(Training, MemorisesSmallSet) {
    Classifier m({small_stream("semg", 4, 4)}, {32, 4});
    ClfTrainConfig c;
    c.seed = 2;
    const ClfData d = separable(64, 4, 4, 4, 5);
    ClfResult r = train_classifier(m, m.init_params(2), d, c);
    const Prediction p = predict(m, r.params, d.inputs);
    EXPECT_EQ(p.classes, d.labels);
}

TEST(Training, LossDecreasesOnFixedBatch) {
    Classifier m({small_stream("semg", 4, 3)}, {16, 3});
    ParamSet<float> ps = m.init_params(4);
    const ClfData d = separable(12, 4, 3, 3, 8);
    Sgd<float> sgd(StepSchedule{0.001, {}, 10.0});
    double prev = INFINITY;
    m.reseed_dropout(1);
    for (int step = 0; step < 5; ++step) {
        m.reseed_dropout(1);  // same masks every step
        ps.zero_grad();
        const Tensor<float> p = m.forward(ps, d.inputs, Mode::train);
        auto loss = loss_xent(p, d.labels);
        EXPECT_LT(loss.value, prev);
        prev = loss.value;
        m.backward(ps, loss.grad);
        sgd.step(ps, 0);
    }
}

TEST(Training, BadLabelsAndEmptySet) {
    Classifier m({small_stream("semg", 4, 3)}, {16, 2});
    ClfData d = separable(8, 4, 3, 2, 1);
    d.labels[3] = 2;
    EXPECT_THROW(train_classifier(m, m.init_params(1), d, {}), LabelError);
    ClfData empty;
    empty.inputs.push_back(Tensor<float>());
    EXPECT_THROW(train_classifier(m, m.init_params(1), empty, {}), InsufficientData);
}

TEST(Training, Reproducible) {
    Classifier a({small_stream("semg", 4, 3)}, {16, 2}, 9), b({small_stream("semg", 4, 3)}, {16, 2}, 9);
    ClfTrainConfig c;
    c.epochs = 3;
    c.schedule.decay_epochs = {1};
    c.seed = 3;
    const ClfData d = separable(20, 4, 3, 2, 1);
    EXPECT_EQ(encode_checkpoint(train_classifier(a, a.init_params(1), d, c).params),
              encode_checkpoint(train_classifier(b, b.init_params(1), d, c).params));
}

TEST(Training, PretrainFlagOffEqualsPlainTraining) {
    Classifier a({small_stream("semg", 4, 3)}, {16, 2}, 9), b({small_stream("semg", 4, 3)}, {16, 2}, 9);
    ClfTrainConfig c;
    c.epochs = 2;
    c.schedule.decay_epochs = {1};
    const ClfData subj = separable(10, 4, 3, 2, 1), all = separable(30, 4, 3, 2, 2);
    EXPECT_EQ(pretrain_then_finetune(a, a.init_params(1), all, subj, c).params,
              train_classifier(b, b.init_params(1), subj, c).params);
}

TEST(Predict, TiesGoToLowestClass) {
    const std::vector<float> row{0.25f, 0.25f, 0.25f, 0.25f};
    EXPECT_EQ(argmax_lowest(row), 0u);
    const std::vector<float> row2{0.1f, 0.45f, 0.45f};
    EXPECT_EQ(argmax_lowest(row2), 1u);
}

TEST(Predict, Deterministic) {
    Classifier m({small_stream("semg", 4, 3)}, {16, 3});
    ParamSet<float> ps = m.init_params(1);
    const std::vector<Tensor<float>> in{random_input(300, 4, 3, 2)};
    const Prediction a = predict(m, ps, in), b = predict(m, ps, in);
    EXPECT_EQ(a.classes, b.classes);
    EXPECT_EQ(a.probs, b.probs);
    EXPECT_EQ(a.classes.size(), 300u);
}

TEST(Data, SubsetAndConcat) {
    const ClfData d = separable(6, 2, 2, 3, 1);
    const std::vector<std::size_t> idx{4, 1};
    const ClfData s = d.subset(idx);
    EXPECT_EQ(s.labels, (std::vector<std::size_t>{1, 1}));
    EXPECT_EQ(s.inputs[0].dim(0), 2u);
    const std::vector<ClfData> parts{s, d};
    const ClfData c = ClfData::concat(parts);
    EXPECT_EQ(c.size(), 8u);
    EXPECT_EQ(c.inputs[0][0], d.inputs[0][16]);
}
