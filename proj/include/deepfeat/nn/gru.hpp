#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "deepfeat/common/rng.hpp"
#include "deepfeat/nn/tensor.hpp"

namespace deepfeat::nn {

/// Weights of one GRU direction. Gate rows are stacked as [z; r; candidate].
///   z  = sigmoid(Wz x + Uz h + bz)
///   r  = sigmoid(Wr x + Ur h + br)
///   hc = tanh(Wh x + Uh (r * h) + bh)
///   h' = z * h + (1 - z) * hc
template <typename T>
struct GruWeights {
  Tensor<T> w;  // [3H x in]
  Tensor<T> u;  // [3H x H]
  Tensor<T> b;  // [3H]

  std::size_t hidden() const { return u.dim(1); }
  std::size_t input() const { return w.dim(1); }
};

/// One GRU step for a single sample.
template <typename T>
Tensor<T> gru_cell(const Tensor<T>& x, const Tensor<T>& h_prev, const GruWeights<T>& p);

/// One GRU direction over a batch of sequences [B x T x in]. The output keeps
/// the original time order: out[b, t] is the state after consuming x[b, t]
/// (for the reverse direction, after consuming x[b, T-1..t]).
template <typename T>
class GruLayer {
 public:
  GruLayer() = default;
  GruLayer(const std::string& name, std::size_t input, std::size_t hidden, bool reverse);

  void init(Rng& rng);
  Tensor<T> forward(const Tensor<T>& x);
  /// `dh` is dL/d(out) [B x T x H]; returns dL/dx.
  Tensor<T> backward(const Tensor<T>& dh, bool need_input_grad = true);
  ParamRefs<T> params() { return {&w, &u, &b}; }

  GruWeights<T> weights() const { return {w.value, u.value, b.value}; }
  void set_weights(const GruWeights<T>& g);

  std::size_t hidden() const noexcept { return hidden_; }
  bool reverse() const noexcept { return reverse_; }

  Parameter<T> w;
  Parameter<T> u;
  Parameter<T> b;

 private:
  std::size_t input_ = 0;
  std::size_t hidden_ = 0;
  bool reverse_ = false;
  std::size_t batch_ = 0;
  std::size_t steps_ = 0;
  Tensor<T> x_;      // [B x T x in]
  Tensor<T> z_;      // [B x T x H]
  Tensor<T> r_;
  Tensor<T> hc_;
  Tensor<T> hprev_;  // state fed into step t
  Tensor<T> out_;
};

/// Bidirectional GRU layer: forward and backward directions side by side.
template <typename T>
class BiGruLayer {
 public:
  BiGruLayer() = default;
  BiGruLayer(const std::string& name, std::size_t input, std::size_t hidden, bool return_sequences);

  void init(Rng& rng);
  /// [B x T x in] -> [B x T x 2H] when returning sequences, else [B x 2H]
  /// holding the final forward state (t = T-1) and final backward state (t = 0).
  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& dy, bool need_input_grad = true);
  ParamRefs<T> params();

  std::size_t output_width() const noexcept { return 2 * fwd.hidden(); }
  bool returns_sequences() const noexcept { return return_sequences_; }

  GruLayer<T> fwd;
  GruLayer<T> bwd;

 private:
  bool return_sequences_ = false;
  std::size_t batch_ = 0;
  std::size_t steps_ = 0;
};

/// Stack of bidirectional layers; all but the last return sequences.
template <typename T>
class BiGruStack {
 public:
  BiGruStack() = default;
  BiGruStack(const std::string& name, std::size_t input, std::size_t hidden, std::size_t layers);

  void init(Rng& rng);
  Tensor<T> forward(const Tensor<T>& x);  // [B x T x in] -> [B x 2H]
  Tensor<T> backward(const Tensor<T>& dy, bool need_input_grad = true);
  ParamRefs<T> params();

  std::vector<BiGruLayer<T>> layers;
};

/// Single-sequence convenience: [T x Cin] -> [2H] through a stack.
template <typename T>
Tensor<T> bigru_forward(const Tensor<T>& sequence, BiGruStack<T>& stack);

}  // namespace deepfeat::nn
