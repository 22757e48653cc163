#include "vimu/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace vimu {

namespace {

LossFn projection_loss(const Shape& out_shape, std::uint64_t seed) {
    Rng rng(seed);
    auto weights = std::make_shared<std::vector<double>>(shape_size(out_shape));
    for (auto& w : *weights) w = rng.normal();
    return [weights](const Tensor<double>& out, Tensor<double>& grad) {
        double s = 0.0;
        for (std::size_t i = 0; i < out.size(); ++i) {
            s += (*weights)[i] * out[i];
            grad[i] = (*weights)[i];
        }
        return s;
    };
}

double rel_error(double a, double n, double floor) {
    return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
}

}  // namespace

GradCheckReport grad_check(const std::vector<LayerSpec>& layers, const Shape& input_shape, ParamSet<double> params,
                           const Tensor<double>& input, double tolerance, LossFn loss, double h, double abs_floor) {
    Sequential<double> net(layers, input_shape, 0x5EED);
    Shape out_shape{input.dim(0)};
    out_shape.insert(out_shape.end(), net.output_shape().begin(), net.output_shape().end());
    if (!loss) loss = projection_loss(out_shape, 0xC0FFEE);

    // first pass draws the dropout masks, which then stay fixed
    net.freeze_dropout(true);
    auto eval = [&](const Tensor<double>& x) {
        Tensor<double> out = net.forward(params, x, Mode::train);
        Tensor<double> g(out.shape());
        return std::make_pair(loss(out, g), std::move(g));
    };

    params.zero_grad();
    auto [l0, gout] = eval(input);
    (void)l0;
    Tensor<double> gin = net.backward(params, gout);

    GradCheckReport rep;
    rep.tolerance = tolerance;
    auto analytic = params;  // snapshot of gradients

    for (auto& [name, entry] : params.entries()) {
        if (!entry.trainable) continue;
        double worst = 0.0;
        const auto& ga = analytic.at(name).grad;
        for (std::size_t i = 0; i < entry.value.size(); ++i) {
            const double orig = entry.value[i];
            entry.value[i] = orig + h;
            const double lp = eval(input).first;
            entry.value[i] = orig - h;
            const double lm = eval(input).first;
            entry.value[i] = orig;
            const double num = (lp - lm) / (2.0 * h);
            worst = std::max(worst, rel_error(ga[i], num, abs_floor));
        }
        rep.max_rel_error[name] = worst;
    }

    Tensor<double> x = input;
    double worst_in = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = x[i];
        x[i] = orig + h;
        const double lp = eval(x).first;
        x[i] = orig - h;
        const double lm = eval(x).first;
        x[i] = orig;
        worst_in = std::max(worst_in, rel_error(gin[i], (lp - lm) / (2.0 * h), abs_floor));
    }
    rep.max_rel_error["input"] = worst_in;

    for (const auto& [n, e] : rep.max_rel_error) rep.worst = std::max(rep.worst, e);
    rep.passed = rep.worst < tolerance;
    return rep;
}

}  // namespace vimu
