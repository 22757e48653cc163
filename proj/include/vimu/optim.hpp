#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "vimu/network.hpp"

namespace vimu {

struct AdamConfig {
    double learning_rate = 2e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adam with bias correction; moments are created lazily per parameter.
template <typename T>
class Adam {
public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}
    void step(ParamSet<T>& ps);
    std::uint64_t steps() const { return steps_; }
    const AdamConfig& config() const { return cfg_; }

private:
    struct Moments {
        std::vector<double> m, v;
    };
    AdamConfig cfg_;
    std::map<std::string, Moments> moments_;
    std::uint64_t steps_ = 0;
};

/// Piecewise-constant step decay: the rate is divided by `divisor` once
/// for every decay epoch that has been reached.
struct StepSchedule {
    double initial = 0.1;
    std::vector<int> decay_epochs{16, 24};
    double divisor = 10.0;

    double rate(int epoch) const;
};

/// Plain stochastic gradient descent.
template <typename T>
class Sgd {
public:
    explicit Sgd(StepSchedule schedule = {}) : schedule_(std::move(schedule)) {}
    void step(ParamSet<T>& ps, int epoch);
    const StepSchedule& schedule() const { return schedule_; }

private:
    StepSchedule schedule_;
};

extern template class Adam<float>;
extern template class Adam<double>;
extern template class Sgd<float>;
extern template class Sgd<double>;

}  // namespace vimu
