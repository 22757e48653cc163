#include "vimu/losses.hpp"

#include <algorithm>
#include <cmath>

namespace vimu {

double bce(double p, double target) {
    const double q = std::clamp(p, kProbClamp, 1.0 - kProbClamp);
    return -(target * std::log(q) + (1.0 - target) * std::log(1.0 - q));
}

double xent(double prob_true_class) { return -std::log(std::clamp(prob_true_class, kProbClamp, 1.0)); }

template <typename T>
LossResult<T> loss_bce(const Tensor<T>& p, std::span<const double> targets) {
    const std::size_t n = p.dim(0);
    if (p.size() != n || targets.size() != n) {
        throw DimensionError("bce expects one probability per target, got " + shape_str(p.shape()) + " and " +
                             std::to_string(targets.size()) + " targets");
    }
    LossResult<T> r{0.0, Tensor<T>(p.shape())};
    for (std::size_t i = 0; i < n; ++i) {
        const double pi = p[i];
        const double t = targets[i];
        r.value += bce(pi, t);
        if (pi > kProbClamp && pi < 1.0 - kProbClamp) {
            r.grad[i] = static_cast<T>((-t / pi + (1.0 - t) / (1.0 - pi)) / static_cast<double>(n));
        }
    }
    r.value /= static_cast<double>(n);
    return r;
}

template <typename T>
LossResult<T> loss_xent(const Tensor<T>& probs, std::span<const std::size_t> labels) {
    if (probs.rank() != 2 || probs.dim(0) != labels.size()) {
        throw DimensionError("xent expects [N,G] probabilities and N labels, got " + shape_str(probs.shape()));
    }
    const std::size_t n = probs.dim(0), g = probs.dim(1);
    LossResult<T> r{0.0, Tensor<T>(probs.shape())};
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] >= g) {
            throw LabelError("label " + std::to_string(labels[i]) + " out of range for " + std::to_string(g) + " classes");
        }
        const double pt = probs[i * g + labels[i]];
        r.value += xent(pt);
        if (pt > kProbClamp) r.grad[i * g + labels[i]] = static_cast<T>(-1.0 / (pt * static_cast<double>(n)));
    }
    r.value /= static_cast<double>(n);
    return r;
}

template LossResult<float> loss_bce(const Tensor<float>&, std::span<const double>);
template LossResult<double> loss_bce(const Tensor<double>&, std::span<const double>);
template LossResult<float> loss_xent(const Tensor<float>&, std::span<const std::size_t>);
template LossResult<double> loss_xent(const Tensor<double>&, std::span<const std::size_t>);

}  // namespace vimu
