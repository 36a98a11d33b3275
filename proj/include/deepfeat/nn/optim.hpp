#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "deepfeat/nn/tensor.hpp"

namespace deepfeat::nn {

/// Staircase inverse-time decay: lr0 / (1 + decay_rate * floor(step / decay_steps)).
struct LrSchedule {
  double lr0 = 1e-3;
  std::size_t decay_steps = 100;
  double decay_rate = 0.5;
};

double lr_at(const LrSchedule& schedule, std::size_t step);

template <typename T>
struct AdamState {
  Tensor<T> m;
  Tensor<T> v;
  std::uint64_t t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState for_param(const Parameter<T>& p) { return {Tensor<T>(p.value.shape()), Tensor<T>(p.value.shape())}; }
};

/// One bias-corrected Adam update. Throws DivergenceError if the gradient
/// holds a non-finite value; the parameter is left untouched in that case.
template <typename T>
void adam_step(Parameter<T>& param, AdamState<T>& state, double lr);

/// Adam over a fixed list of parameters.
template <typename T>
class Adam {
 public:
  explicit Adam(ParamRefs<T> params, double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8);

  void zero_grad();
  void step(double lr);
  std::uint64_t steps() const noexcept { return states_.empty() ? 0 : states_.front().t; }

 private:
  ParamRefs<T> params_;
  std::vector<AdamState<T>> states_;
};

}  // namespace deepfeat::nn
