#pragma once

#include <cstddef>
#include <string>

#include "deepfeat/common/rng.hpp"
#include "deepfeat/nn/tensor.hpp"

namespace deepfeat::nn {

struct ConvGeometry {
  std::size_t kernel = 1;
  std::size_t dilation = 1;
  std::size_t padding = 0;

  /// Output length for an input of length `t`; throws DimensionError when
  /// the padded input is shorter than the receptive field.
  std::size_t output_length(std::size_t t) const;
};

/// Single-sample dilated convolution with zero padding.
///   input [T x Cin], weights [k x Cin x Cout], bias [Cout] -> [T' x Cout]
///   y[t, o] = bias[o] + sum_{j,c} w[j, c, o] * x[t + j*d - p, c]
template <typename T>
Tensor<T> conv1d(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias, std::size_t dilation,
                 std::size_t padding);

/// Batched learned convolution over [B x T x Cin] (stride 1).
template <typename T>
class Conv1d {
 public:
  Conv1d() = default;
  Conv1d(const std::string& name, std::size_t in_channels, std::size_t out_channels, ConvGeometry geometry);

  /// Same-padding convolution for odd kernels (padding = (k-1)/2 * d).
  static Conv1d same(const std::string& name, std::size_t in_channels, std::size_t out_channels, std::size_t kernel);

  void init(Rng& rng);
  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& dy, bool need_input_grad = true);
  ParamRefs<T> params() { return {&weight, &bias}; }

  const ConvGeometry& geometry() const noexcept { return geom_; }

  Parameter<T> weight;  // [k x Cin x Cout]
  Parameter<T> bias;    // [Cout]

 private:
  std::size_t cin_ = 0;
  std::size_t cout_ = 0;
  ConvGeometry geom_;
  std::size_t t_in_ = 0;
  std::size_t t_out_ = 0;
  std::size_t batch_ = 0;
  Tensor<T> cols_;  // [B*T' x k*Cin]
};

}  // namespace deepfeat::nn
