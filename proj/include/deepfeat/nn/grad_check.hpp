#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "deepfeat/common/rng.hpp"
#include "deepfeat/nn/tensor.hpp"

namespace deepfeat::nn {

struct GradCheckOptions {
  double step = 1e-5;
  /// Coordinates sampled per parameter; 0 checks every coordinate.
  std::size_t max_coords = 0;
  /// Denominator floor so that gradients that are zero analytically and
  /// ~1e-11 numerically do not register as large relative errors.
  double scale_floor = 1e-6;
  std::uint64_t seed = 7;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t coords_checked = 0;
  std::string worst;  // "param[index]: analytic vs numeric"
};

/// Compares analytic gradients with central differences (f(x+h) - f(x-h)) / 2h.
///
/// `loss` evaluates the scalar objective at the current parameter values;
/// `backprop` must leave dL/dparam in every Parameter::grad (it is called
/// once, after grads are zeroed). Relative error per coordinate is
/// |a - n| / max(|a|, |n|, scale_floor).
inline GradCheckResult grad_check(const std::function<double()>& loss, const std::function<void()>& backprop,
                                  const ParamRefs<double>& params, const GradCheckOptions& opt = {}) {
  for (auto* p : params) p->zero_grad();
  backprop();
  std::vector<Tensor<double>> analytic;
  analytic.reserve(params.size());
  for (auto* p : params) analytic.push_back(p->grad);

  Rng rng(opt.seed);
  GradCheckResult result;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Parameter<double>& p = *params[pi];
    std::vector<std::size_t> coords(p.value.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (opt.max_coords != 0 && coords.size() > opt.max_coords) {
      rng.shuffle(std::span<std::size_t>(coords));
      coords.resize(opt.max_coords);
    }
    for (std::size_t i : coords) {
      const double orig = p.value[i];
      p.value[i] = orig + opt.step;
      const double plus = loss();
      p.value[i] = orig - opt.step;
      const double minus = loss();
      p.value[i] = orig;
      const double numeric = (plus - minus) / (2.0 * opt.step);
      const double a = analytic[pi][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), opt.scale_floor});
      const double rel = std::abs(a - numeric) / denom;
      ++result.coords_checked;
      if (rel >= result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst = p.name + "[" + std::to_string(i) + "]: " + std::to_string(a) + " vs " + std::to_string(numeric);
      }
    }
  }
  return result;
}

}  // namespace deepfeat::nn
