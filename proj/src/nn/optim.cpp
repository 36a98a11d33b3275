#include "deepfeat/nn/optim.hpp"

#include <cmath>
#include <string>

namespace deepfeat::nn {

double lr_at(const LrSchedule& schedule, std::size_t step) {
  const std::size_t period = schedule.decay_steps == 0 ? 1 : schedule.decay_steps;
  const double stairs = static_cast<double>(step / period);
  return schedule.lr0 / (1.0 + schedule.decay_rate * stairs);
}

namespace {

template <typename T>
void check_finite_grad(const Parameter<T>& param) {
  const T* g = param.grad.data();
  const std::size_t n = param.grad.size();
  // x * 0 is NaN exactly when x is not finite; the sum vectorizes.
  T probe{0};
#pragma omp simd reduction(+ : probe)
  for (std::size_t i = 0; i < n; ++i) probe += g[i] * T{0};
  if (probe == T{0}) return;
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(g[i])) {
      throw DivergenceError("non-finite gradient in " + param.name + " at index " + std::to_string(i));
    }
  }
}

}  // namespace

template <typename T>
void adam_update(Parameter<T>& param, AdamState<T>& state, double lr);

template <typename T>
void adam_step(Parameter<T>& param, AdamState<T>& state, double lr) {
  check_finite_grad(param);
  adam_update(param, state, lr);
}

template <typename T>
void adam_update(Parameter<T>& param, AdamState<T>& state, double lr) {
  if (state.m.shape() != param.value.shape()) state = AdamState<T>::for_param(param);
  state.t += 1;
  const double t = static_cast<double>(state.t);
  const T b1 = static_cast<T>(state.beta1);
  const T b2 = static_cast<T>(state.beta2);
  const T c1 = static_cast<T>(1.0 / (1.0 - std::pow(state.beta1, t)));
  const T c2 = static_cast<T>(1.0 / (1.0 - std::pow(state.beta2, t)));
  const T step = static_cast<T>(lr);
  const T eps = static_cast<T>(state.epsilon);
  T* w = param.value.data();
  const T* g = param.grad.data();
  T* m = state.m.data();
  T* v = state.v.data();
  const std::size_t n = param.value.size();
#pragma omp parallel for simd schedule(static) if (n > 65536)
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = b1 * m[i] + (T{1} - b1) * g[i];
    v[i] = b2 * v[i] + (T{1} - b2) * g[i] * g[i];
    const T mhat = m[i] * c1;
    const T vhat = v[i] * c2;
    w[i] -= step * mhat / (std::sqrt(vhat) + eps);
  }
}

template <typename T>
Adam<T>::Adam(ParamRefs<T> params, double beta1, double beta2, double epsilon) : params_(std::move(params)) {
  states_.reserve(params_.size());
  for (auto* p : params_) {
    auto s = AdamState<T>::for_param(*p);
    s.beta1 = beta1;
    s.beta2 = beta2;
    s.epsilon = epsilon;
    states_.push_back(std::move(s));
  }
}

template <typename T>
void Adam<T>::zero_grad() {
  for (auto* p : params_) p->zero_grad();
}

template <typename T>
void Adam<T>::step(double lr) {
  // Check everything first so a bad gradient leaves all parameters untouched.
  for (auto* p : params_) check_finite_grad(*p);
  for (std::size_t i = 0; i < params_.size(); ++i) adam_update(*params_[i], states_[i], lr);
}

template void adam_step<float>(Parameter<float>&, AdamState<float>&, double);
template void adam_step<double>(Parameter<double>&, AdamState<double>&, double);
template class Adam<float>;
template class Adam<double>;

}  // namespace deepfeat::nn
