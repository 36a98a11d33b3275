#include "deepfeat/nn/layers.hpp"

#include <algorithm>
#include <cmath>

#include "deepfeat/nn/kernels.hpp"

namespace deepfeat::nn {

using kernels::Trans;

template <typename T>
Tensor<T> dense(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  if (weight.rank() != 2 || x.rank() != 1 || bias.rank() != 1 || weight.dim(1) != x.dim(0) ||
      weight.dim(0) != bias.dim(0)) {
    throw DimensionError("dense: W " + shape_str(weight.shape()) + ", x " + shape_str(x.shape()) + ", b " +
                         shape_str(bias.shape()));
  }
  const std::size_t m = weight.dim(0);
  const std::size_t n = weight.dim(1);
  Tensor<T> y = bias;
  kernels::gemm<T>(Trans::No, Trans::Yes, 1, m, n, T{1}, x.data(), n, weight.data(), n, T{1}, y.data(), m);
  return y;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> y = x;
  for (T& v : y.values()) v = v > T{0} ? v : T{0};
  return y;
}

namespace {

template <typename T>
void normalize_row(std::span<const T> x, std::span<T> xhat, T eps, T& inv_std) {
  const std::size_t n = x.size();
  T mean{0};
  for (T v : x) mean += v;
  mean /= static_cast<T>(n);
  T var{0};
  for (T v : x) var += (v - mean) * (v - mean);
  var /= static_cast<T>(n);
  inv_std = T{1} / std::sqrt(var + eps);
  for (std::size_t i = 0; i < n; ++i) xhat[i] = (x[i] - mean) * inv_std;
}

}  // namespace

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
  if (!(eps > T{0})) throw ArgumentError("layer_norm: eps must be > 0");
  if (x.rank() != 1 || x.size() < 2) throw DimensionError("layer_norm: need a vector of length >= 2");
  expect_shape(gamma, x.shape(), "layer_norm gamma");
  expect_shape(beta, x.shape(), "layer_norm beta");
  Tensor<T> y(x.shape());
  T inv_std;
  normalize_row<T>(x.span(), y.span(), eps, inv_std);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = gamma[i] * y[i] + beta[i];
  return y;
}

template <typename T>
void softmax_row(std::span<const T> logits, std::span<T> out) {
  const T mx = *std::max_element(logits.begin(), logits.end());
  T sum{0};
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    sum += out[i];
  }
  for (T& v : out) v /= sum;
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
  if (logits.empty()) throw DimensionError("softmax: empty input");
  Tensor<T> y(logits.shape());
  softmax_row<T>(logits.span(), y.span());
  return y;
}

namespace {

constexpr double kProbFloor = 1e-12;

template <typename T>
T clamp_prob(T p) {
  return std::clamp(p, static_cast<T>(kProbFloor), T{1});
}

}  // namespace

template <typename T>
T focal_loss(std::span<const T> probs, std::size_t target, T gamma, T alpha) {
  if (target >= probs.size()) {
    throw ArgumentError("focal_loss: target " + std::to_string(target) + " out of range for " +
                        std::to_string(probs.size()) + " classes");
  }
  const T p = clamp_prob(probs[target]);
  return -alpha * std::pow(T{1} - p, gamma) * std::log(p);
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double rate, Mode mode, Rng& rng) {
  Dropout<T> layer(rate);
  return layer.forward(x, mode, rng);
}

template <typename T>
void glorot_uniform(Tensor<T>& w, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (T& v : w.values()) v = static_cast<T>(rng.uniform(-limit, limit));
}

// --- Dense -----------------------------------------------------------------

template <typename T>
Dense<T>::Dense(const std::string& name, std::size_t in, std::size_t out)
    : weight(name + ".w", {out, in}), bias(name + ".b", {out}), in_(in), out_(out) {}

template <typename T>
void Dense<T>::init(Rng& rng) {
  glorot_uniform(weight.value, in_, out_, rng);
  bias.value.zero();
}

template <typename T>
Tensor<T> Dense<T>::forward(const Tensor<T>& x) {
  if (x.rank() != 2 || x.dim(1) != in_) {
    throw DimensionError(weight.name + ": expected [B x " + std::to_string(in_) + "], got " + shape_str(x.shape()));
  }
  const std::size_t batch = x.dim(0);
  x_ = x;
  Tensor<T> y({batch, out_});
  for (std::size_t r = 0; r < batch; ++r) std::copy(bias.value.values().begin(), bias.value.values().end(), y.row(r).begin());
  kernels::gemm<T>(Trans::No, Trans::Yes, batch, out_, in_, T{1}, x.data(), in_, weight.value.data(), in_, T{1},
                   y.data(), out_);
  return y;
}

template <typename T>
Tensor<T> Dense<T>::backward(const Tensor<T>& dy, bool need_input_grad) {
  const std::size_t batch = x_.dim(0);
  expect_shape(dy, {batch, out_}, "Dense::backward");
  // dW += dy^T x ; db += sum_rows(dy)
  kernels::gemm<T>(Trans::Yes, Trans::No, out_, in_, batch, T{1}, dy.data(), out_, x_.data(), in_, T{1},
                   weight.grad.data(), in_);
  for (std::size_t r = 0; r < batch; ++r) {
    const auto row = dy.row(r);
    for (std::size_t o = 0; o < out_; ++o) bias.grad[o] += row[o];
  }
  if (!need_input_grad) return {};
  Tensor<T> dx({batch, in_});
  kernels::gemm<T>(Trans::No, Trans::No, batch, in_, out_, T{1}, dy.data(), out_, weight.value.data(), in_, T{0},
                   dx.data(), in_);
  return dx;
}

// --- LayerNorm ---------------------------------------------------------------

template <typename T>
LayerNorm<T>::LayerNorm(const std::string& name, std::size_t features, T eps)
    : gamma(name + ".g", {features}), beta(name + ".b", {features}), n_(features), eps_(eps) {
  if (features < 2) throw DimensionError(name + ": layer norm needs >= 2 features");
  if (!(eps > T{0})) throw ArgumentError(name + ": eps must be > 0");
  init();
}

template <typename T>
void LayerNorm<T>::init() {
  gamma.value.fill(T{1});
  beta.value.zero();
}

template <typename T>
Tensor<T> LayerNorm<T>::forward(const Tensor<T>& x) {
  if (x.rank() != 2 || x.dim(1) != n_) {
    throw DimensionError(gamma.name + ": expected [B x " + std::to_string(n_) + "], got " + shape_str(x.shape()));
  }
  const std::size_t batch = x.dim(0);
  xhat_ = Tensor<T>(x.shape());
  inv_std_.assign(batch, T{0});
  Tensor<T> y(x.shape());
  for (std::size_t r = 0; r < batch; ++r) {
    normalize_row<T>(x.row(r), xhat_.row(r), eps_, inv_std_[r]);
    auto xh = xhat_.row(r);
    auto yr = y.row(r);
    for (std::size_t i = 0; i < n_; ++i) yr[i] = gamma.value[i] * xh[i] + beta.value[i];
  }
  return y;
}

template <typename T>
Tensor<T> LayerNorm<T>::backward(const Tensor<T>& dy) {
  const std::size_t batch = xhat_.dim(0);
  expect_shape(dy, xhat_.shape(), "LayerNorm::backward");
  Tensor<T> dx(dy.shape());
  std::vector<T> dxhat(n_);
  const T inv_n = T{1} / static_cast<T>(n_);
  for (std::size_t r = 0; r < batch; ++r) {
    const auto g = dy.row(r);
    const auto xh = xhat_.row(r);
    T mean_d{0};
    T mean_dx{0};
    for (std::size_t i = 0; i < n_; ++i) {
      gamma.grad[i] += g[i] * xh[i];
      beta.grad[i] += g[i];
      dxhat[i] = g[i] * gamma.value[i];
      mean_d += dxhat[i];
      mean_dx += dxhat[i] * xh[i];
    }
    mean_d *= inv_n;
    mean_dx *= inv_n;
    auto out = dx.row(r);
    for (std::size_t i = 0; i < n_; ++i) out[i] = inv_std_[r] * (dxhat[i] - mean_d - xh[i] * mean_dx);
  }
  return dx;
}

// --- Relu ------------------------------------------------------------------

template <typename T>
Tensor<T> Relu<T>::forward(const Tensor<T>& x) {
  y_ = relu(x);
  return y_;
}

template <typename T>
Tensor<T> Relu<T>::backward(const Tensor<T>& dy) const {
  expect_shape(dy, y_.shape(), "Relu::backward");
  Tensor<T> dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i) {
    if (!(y_[i] > T{0})) dx[i] = T{0};
  }
  return dx;
}

// --- Dropout ---------------------------------------------------------------

template <typename T>
Dropout<T>::Dropout(double rate) : rate_(rate) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ArgumentError("dropout rate must be in [0, 1), got " + std::to_string(rate));
}

template <typename T>
Tensor<T> Dropout<T>::forward(const Tensor<T>& x, Mode mode, Rng& rng) {
  if (mode == Mode::Eval || rate_ == 0.0) {
    mask_ = Tensor<T>();
    return x;
  }
  mask_ = Tensor<T>(x.shape());
  const T scale = static_cast<T>(1.0 / (1.0 - rate_));
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    mask_[i] = rng.uniform() < rate_ ? T{0} : scale;
    y[i] = x[i] * mask_[i];
  }
  return y;
}

template <typename T>
Tensor<T> Dropout<T>::backward(const Tensor<T>& dy) const {
  if (mask_.empty()) return dy;
  expect_shape(dy, mask_.shape(), "Dropout::backward");
  Tensor<T> dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= mask_[i];
  return dx;
}

// --- SoftmaxFocalLoss --------------------------------------------------------

template <typename T>
T SoftmaxFocalLoss<T>::forward(const Tensor<T>& logits, std::span<const std::size_t> targets) {
  if (logits.rank() != 2 || logits.dim(0) != targets.size()) {
    throw DimensionError("focal loss: logits " + shape_str(logits.shape()) + " vs " + std::to_string(targets.size()) +
                         " targets");
  }
  probs_ = Tensor<T>(logits.shape());
  targets_.assign(targets.begin(), targets.end());
  T total{0};
  for (std::size_t r = 0; r < logits.dim(0); ++r) {
    softmax_row<T>(logits.row(r), probs_.row(r));
    total += focal_loss<T>(probs_.row(r), targets[r], gamma_, alpha_);
  }
  return total / static_cast<T>(logits.dim(0));
}

template <typename T>
Tensor<T> SoftmaxFocalLoss<T>::backward() const {
  const std::size_t batch = probs_.dim(0);
  const std::size_t classes = probs_.dim(1);
  Tensor<T> dz(probs_.shape());
  const T inv_b = T{1} / static_cast<T>(batch);
  for (std::size_t r = 0; r < batch; ++r) {
    const auto p = probs_.row(r);
    const std::size_t t = targets_[r];
    const T pt = p[t];
    if (pt < static_cast<T>(kProbFloor)) continue;  // clamped: flat
    const T one_minus = T{1} - pt;
    // dL/dp_t = alpha*gamma*(1-p)^(gamma-1)*log p - alpha*(1-p)^gamma / p
    T dldp = -alpha_ * std::pow(one_minus, gamma_) / pt;
    if (gamma_ != T{0} && one_minus > T{0}) {
      dldp += alpha_ * gamma_ * std::pow(one_minus, gamma_ - T{1}) * std::log(pt);
    }
    auto out = dz.row(r);
    for (std::size_t j = 0; j < classes; ++j) {
      const T dp_dz = pt * ((j == t ? T{1} : T{0}) - p[j]);
      out[j] = inv_b * dldp * dp_dz;
    }
  }
  return dz;
}

#define DEEPFEAT_INSTANTIATE(T)                                                                    \
  template Tensor<T> dense<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);               \
  template Tensor<T> relu<T>(const Tensor<T>&);                                                    \
  template Tensor<T> layer_norm<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);       \
  template void softmax_row<T>(std::span<const T>, std::span<T>);                                  \
  template Tensor<T> softmax<T>(const Tensor<T>&);                                                 \
  template T focal_loss<T>(std::span<const T>, std::size_t, T, T);                                 \
  template Tensor<T> dropout<T>(const Tensor<T>&, double, Mode, Rng&);                             \
  template void glorot_uniform<T>(Tensor<T>&, std::size_t, std::size_t, Rng&);                     \
  template class Dense<T>;                                                                         \
  template class LayerNorm<T>;                                                                     \
  template class Relu<T>;                                                                          \
  template class Dropout<T>;                                                                       \
  template class SoftmaxFocalLoss<T>;

DEEPFEAT_INSTANTIATE(float)
DEEPFEAT_INSTANTIATE(double)

#undef DEEPFEAT_INSTANTIATE

}  // namespace deepfeat::nn
