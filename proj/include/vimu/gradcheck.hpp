#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "vimu/network.hpp"

namespace vimu {

/// Scalar loss on the network output; fills d(loss)/d(output).
using LossFn = std::function<double(const Tensor<double>& out, Tensor<double>& grad)>;

struct GradCheckReport {
    /// Max relative error per trainable tensor, plus "input" for the input gradient.
    std::map<std::string, double> max_rel_error;
    double worst = 0.0;
    double tolerance = 0.0;
    bool passed = false;
};

/// Compares reverse-mode gradients against central finite differences in
/// 64-bit arithmetic. Dropout masks are frozen for the duration. When loss
/// is empty, a fixed random projection of the output is used.
/// Relative error is |a - n| / max(|a|, |n|, abs_floor).
GradCheckReport grad_check(const std::vector<LayerSpec>& layers, const Shape& input_shape, ParamSet<double> params,
                           const Tensor<double>& input, double tolerance, LossFn loss = {}, double h = 1e-5,
                           double abs_floor = 1e-6);

}  // namespace vimu
