#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "deepfeat/common/rng.hpp"
#include "deepfeat/nn/tensor.hpp"

namespace deepfeat::nn {

enum class Mode { Train, Eval };

// ---------------------------------------------------------------------------
// Stateless single-sample operations.

/// y = W x + b with W [m x n], x [n], b [m].
template <typename T>
Tensor<T> dense(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

template <typename T>
Tensor<T> relu(const Tensor<T>& x);

/// Normalizes over the whole (last) axis with population variance.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps = T(1e-5));

/// Numerically stable softmax; writes into `out` (may alias `logits`).
template <typename T>
void softmax_row(std::span<const T> logits, std::span<T> out);

template <typename T>
Tensor<T> softmax(const Tensor<T>& logits);

/// Focal loss -alpha (1 - p_t)^gamma log p_t on a probability vector,
/// with p_t clamped to [1e-12, 1].
template <typename T>
T focal_loss(std::span<const T> probs, std::size_t target, T gamma, T alpha);

/// Inverted dropout. In Train mode each element is zeroed with probability
/// `rate` and survivors are scaled by 1 / (1 - rate); Eval mode is identity.
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double rate, Mode mode, Rng& rng);

/// Glorot/Xavier uniform initialization for a [fan_out x fan_in] weight.
template <typename T>
void glorot_uniform(Tensor<T>& w, std::size_t fan_in, std::size_t fan_out, Rng& rng);

// ---------------------------------------------------------------------------
// Batched layers. Inputs are [B x features]; forward caches what backward
// needs, backward accumulates into parameter gradients and returns dL/dx.

template <typename T>
class Dense {
 public:
  Dense() = default;
  Dense(const std::string& name, std::size_t in, std::size_t out);

  void init(Rng& rng);
  Tensor<T> forward(const Tensor<T>& x);
  /// With need_input_grad == false the returned tensor is empty.
  Tensor<T> backward(const Tensor<T>& dy, bool need_input_grad = true);
  ParamRefs<T> params() { return {&weight, &bias}; }

  std::size_t in_features() const noexcept { return in_; }
  std::size_t out_features() const noexcept { return out_; }

  Parameter<T> weight;  // [out x in]
  Parameter<T> bias;    // [out]

 private:
  std::size_t in_ = 0;
  std::size_t out_ = 0;
  Tensor<T> x_;
};

template <typename T>
class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(const std::string& name, std::size_t features, T eps = T(1e-5));

  void init();
  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& dy);
  ParamRefs<T> params() { return {&gamma, &beta}; }

  Parameter<T> gamma;
  Parameter<T> beta;

 private:
  std::size_t n_ = 0;
  T eps_ = T(1e-5);
  Tensor<T> xhat_;
  std::vector<T> inv_std_;
};

template <typename T>
class Relu {
 public:
  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& dy) const;

 private:
  Tensor<T> y_;
};

template <typename T>
class Dropout {
 public:
  explicit Dropout(double rate = 0.5);

  Tensor<T> forward(const Tensor<T>& x, Mode mode, Rng& rng);
  Tensor<T> backward(const Tensor<T>& dy) const;
  double rate() const noexcept { return rate_; }

 private:
  double rate_;
  Tensor<T> mask_;  // empty when the last forward ran in Eval mode
};

/// Softmax followed by mean focal loss over a batch of logits [B x C].
template <typename T>
class SoftmaxFocalLoss {
 public:
  SoftmaxFocalLoss(T gamma = T(2), T alpha = T(0.25)) : gamma_(gamma), alpha_(alpha) {}

  /// Returns the batch-mean loss; probabilities are kept for backward.
  T forward(const Tensor<T>& logits, std::span<const std::size_t> targets);
  /// dL/dlogits for the batch-mean loss.
  Tensor<T> backward() const;
  const Tensor<T>& probabilities() const noexcept { return probs_; }

 private:
  T gamma_;
  T alpha_;
  Tensor<T> probs_;
  std::vector<std::size_t> targets_;
};

}  // namespace deepfeat::nn
