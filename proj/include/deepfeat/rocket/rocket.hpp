#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "deepfeat/nn/tensor.hpp"

namespace deepfeat::rocket {

inline constexpr std::size_t kKernelLength = 9;
inline constexpr std::size_t kDilation = 4;
/// (9 - 1) * 4 / 2: output length equals input length.
inline constexpr std::size_t kPadding = 16;
inline constexpr std::size_t kBankSize = 10'000;
inline constexpr double kWeightStd = 0.05;
inline constexpr std::size_t kFeaturesPerKernel = 2;

struct RandomKernel {
  std::array<float, kKernelLength> weights{};
  std::size_t dilation = kDilation;
  float bias = 0.0f;
  std::size_t padding = kPadding;
};

/// Immutable after generation.
struct KernelBank {
  std::vector<RandomKernel> kernels;
  std::uint64_t seed = 0;

  std::size_t size() const noexcept { return kernels.size(); }
  std::size_t feature_width() const noexcept { return kFeaturesPerKernel * kernels.size(); }
};

/// Kernels with i.i.d. N(0, 0.05) weights, dilation 4, bias 0, padding 16.
/// Deviates come from Rng(seed) via Box-Muller, kernel-major, tap-minor.
KernelBank generate_bank(std::uint64_t seed, std::size_t count = kBankSize);

/// Proportion of strictly positive values.
double ppv(std::span<const float> values);

/// Pooled [max, ppv] of one kernel applied to one series.
std::array<float, 2> apply_kernel(std::span<const float> series, const RandomKernel& kernel);

/// Kernel-major interleaved features [max_0, ppv_0, max_1, ppv_1, ...].
/// Parallel over kernels.
nn::Tensor<float> extract(std::span<const float> series, const KernelBank& bank);

/// Row-per-series feature matrix [N x 2*|bank|]. Parallel over series.
nn::Tensor<float> extract_batch(const std::vector<std::vector<float>>& series, const KernelBank& bank);

namespace reference {

/// Serial textbook version of extract() kept for tests and benchmarks.
nn::Tensor<float> extract(std::span<const float> series, const KernelBank& bank);

}  // namespace reference

}  // namespace deepfeat::rocket
