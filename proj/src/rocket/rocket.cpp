#include "deepfeat/rocket/rocket.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "deepfeat/common/error.hpp"
#include "deepfeat/common/rng.hpp"

namespace deepfeat::rocket {

KernelBank generate_bank(std::uint64_t seed, std::size_t count) {
  KernelBank bank;
  bank.seed = seed;
  bank.kernels.resize(count);
  Rng rng(seed);
  for (auto& k : bank.kernels) {
    for (float& w : k.weights) w = static_cast<float>(rng.normal(0.0, kWeightStd));
  }
  return bank;
}

double ppv(std::span<const float> values) {
  if (values.empty()) throw ArgumentError("ppv: empty vector");
  const auto positive = std::count_if(values.begin(), values.end(), [](float v) { return v > 0.0f; });
  return static_cast<double>(positive) / static_cast<double>(values.size());
}

namespace {

std::size_t checked_output_length(std::size_t t, const RandomKernel& k) {
  const std::size_t field = (kKernelLength - 1) * k.dilation + 1;
  if (t == 0) throw ArgumentError("rocket: empty series");
  if (t + 2 * k.padding < field) throw DimensionError("rocket: series shorter than the kernel receptive field");
  return t + 2 * k.padding - (kKernelLength - 1) * k.dilation;
}

// acc[t] = bias, then tap-ascending fused multiply-adds over in-range inputs.
std::array<float, 2> apply_kernel_into(std::span<const float> x, const RandomKernel& k, std::vector<float>& acc) {
  const std::size_t n = x.size();
  const std::size_t out_len = checked_output_length(n, k);
  acc.assign(out_len, k.bias);
  const auto pad = static_cast<std::ptrdiff_t>(k.padding);
  for (std::size_t j = 0; j < kKernelLength; ++j) {
    const float w = k.weights[j];
    const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(j * k.dilation) - pad;
    // valid t: 0 <= t + shift < n
    const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -shift);
    const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(out_len),
                                                       static_cast<std::ptrdiff_t>(n) - shift);
    float* a = acc.data();
    const float* src = x.data() + shift;
#pragma omp simd
    for (std::ptrdiff_t t = lo; t < hi; ++t) a[t] = std::fma(w, src[t], a[t]);
  }
  float mx = -std::numeric_limits<float>::infinity();
  std::size_t positive = 0;
  for (float v : acc) {
    mx = std::max(mx, v);
    positive += v > 0.0f ? 1 : 0;
  }
  return {mx, static_cast<float>(static_cast<double>(positive) / static_cast<double>(out_len))};
}

}  // namespace

std::array<float, 2> apply_kernel(std::span<const float> series, const RandomKernel& kernel) {
  std::vector<float> acc;
  return apply_kernel_into(series, kernel, acc);
}

nn::Tensor<float> extract(std::span<const float> series, const KernelBank& bank) {
  if (series.empty()) throw ArgumentError("rocket: empty series");
  checked_output_length(series.size(), RandomKernel{});
  nn::Tensor<float> out({bank.feature_width()});
  const std::size_t count = bank.size();
#pragma omp parallel
  {
    std::vector<float> acc;
#pragma omp for schedule(static)
    for (std::size_t i = 0; i < count; ++i) {
      const auto f = apply_kernel_into(series, bank.kernels[i], acc);
      out[2 * i] = f[0];
      out[2 * i + 1] = f[1];
    }
  }
  return out;
}

nn::Tensor<float> extract_batch(const std::vector<std::vector<float>>& series, const KernelBank& bank) {
  const std::size_t width = bank.feature_width();
  for (const auto& s : series) {
    if (s.empty()) throw ArgumentError("rocket: empty series");
  }
  nn::Tensor<float> out({series.size(), width});
#pragma omp parallel
  {
    std::vector<float> acc;
#pragma omp for schedule(dynamic)
    for (std::size_t n = 0; n < series.size(); ++n) {
      float* row = out.data() + n * width;
      for (std::size_t i = 0; i < bank.size(); ++i) {
        const auto f = apply_kernel_into(series[n], bank.kernels[i], acc);
        row[2 * i] = f[0];
        row[2 * i + 1] = f[1];
      }
    }
  }
  return out;
}

namespace reference {

nn::Tensor<float> extract(std::span<const float> series, const KernelBank& bank) {
  if (series.empty()) throw ArgumentError("rocket: empty series");
  nn::Tensor<float> out({bank.feature_width()});
  const auto n = static_cast<std::ptrdiff_t>(series.size());
  for (std::size_t i = 0; i < bank.size(); ++i) {
    const RandomKernel& k = bank.kernels[i];
    const auto out_len = static_cast<std::ptrdiff_t>(checked_output_length(series.size(), k));
    float mx = -std::numeric_limits<float>::infinity();
    std::size_t positive = 0;
    for (std::ptrdiff_t t = 0; t < out_len; ++t) {
      float acc = k.bias;
      for (std::size_t j = 0; j < kKernelLength; ++j) {
        const std::ptrdiff_t idx = t + static_cast<std::ptrdiff_t>(j * k.dilation) - static_cast<std::ptrdiff_t>(k.padding);
        if (idx >= 0 && idx < n) acc = std::fma(k.weights[j], series[static_cast<std::size_t>(idx)], acc);
      }
      mx = std::max(mx, acc);
      if (acc > 0.0f) ++positive;
    }
    out[2 * i] = mx;
    out[2 * i + 1] = static_cast<float>(static_cast<double>(positive) / static_cast<double>(out_len));
  }
  return out;
}

}  // namespace reference

}  // namespace deepfeat::rocket
