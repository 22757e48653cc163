#include "vimu/optim.hpp"

#include <cmath>

namespace vimu {

template <typename T>
void Adam<T>::step(ParamSet<T>& ps) {
    ++steps_;
    const double b1 = cfg_.beta1, b2 = cfg_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
    for (auto& [name, e] : ps.entries()) {
        if (!e.trainable) continue;
        auto& mom = moments_[name];
        if (mom.m.size() != e.value.size()) {
            mom.m.assign(e.value.size(), 0.0);
            mom.v.assign(e.value.size(), 0.0);
        }
        T* w = e.value.data();
        const T* g = e.grad.data();
        const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(e.value.size());
        double* m = mom.m.data();
        double* v = mom.v.data();
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t i = 0; i < n; ++i) {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * static_cast<double>(g[i]) * g[i];
            const double mhat = m[i] / c1;
            const double vhat = v[i] / c2;
            w[i] = static_cast<T>(w[i] - cfg_.learning_rate * mhat / (std::sqrt(vhat) + cfg_.eps));
        }
    }
}

double StepSchedule::rate(int epoch) const {
    double lr = initial;
    for (int e : decay_epochs)
        if (epoch >= e) lr /= divisor;
    return lr;
}

template <typename T>
void Sgd<T>::step(ParamSet<T>& ps, int epoch) {
    const T lr = static_cast<T>(schedule_.rate(epoch));
    for (auto& [name, e] : ps.entries()) {
        if (!e.trainable) continue;
        T* w = e.value.data();
        const T* g = e.grad.data();
        const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(e.value.size());
#pragma omp parallel for simd schedule(static)
        for (std::ptrdiff_t i = 0; i < n; ++i) w[i] -= lr * g[i];
    }
}

template class Adam<float>;
template class Adam<double>;
template class Sgd<float>;
template class Sgd<double>;

}  // namespace vimu
