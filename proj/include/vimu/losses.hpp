#pragma once

#include <span>

#include "vimu/tensor.hpp"

namespace vimu {

/// Probabilities are clamped to [kProbClamp, 1 - kProbClamp] before logs.
inline constexpr double kProbClamp = 1e-7;

double bce(double p, double target);
double xent(double prob_true_class);

template <typename T>
struct LossResult {
    double value = 0.0;
    Tensor<T> grad;  // d(value)/d(prediction)
};

/// Mean binary cross-entropy of predictions p[N,1] (or [N]) against 0/1
/// targets. The gradient is zero where p sits outside the clamp range.
template <typename T>
LossResult<T> loss_bce(const Tensor<T>& p, std::span<const double> targets);

/// Mean negative log-probability of the true class for softmax rows [N,G].
template <typename T>
LossResult<T> loss_xent(const Tensor<T>& probs, std::span<const std::size_t> labels);

}  // namespace vimu
