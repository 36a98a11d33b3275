#include "deepfeat/nn/gru.hpp"

#include <cmath>

#include "deepfeat/nn/kernels.hpp"
#include "deepfeat/nn/layers.hpp"

namespace deepfeat::nn {

using kernels::Trans;

namespace {

template <typename T>
T sigmoid(T v) {
  return T{1} / (T{1} + std::exp(-v));
}

}  // namespace

template <typename T>
Tensor<T> gru_cell(const Tensor<T>& x, const Tensor<T>& h_prev, const GruWeights<T>& p) {
  const std::size_t hidden = h_prev.size();
  const std::size_t in = x.size();
  if (p.w.rank() != 2 || p.u.rank() != 2 || p.w.dim(0) != 3 * hidden || p.w.dim(1) != in ||
      p.u.dim(0) != 3 * hidden || p.u.dim(1) != hidden || p.b.size() != 3 * hidden) {
    throw DimensionError("gru_cell: W " + shape_str(p.w.shape()) + ", U " + shape_str(p.u.shape()) + ", b " +
                         shape_str(p.b.shape()) + " for x " + shape_str(x.shape()) + ", h " +
                         shape_str(h_prev.shape()));
  }
  auto gate_in = [&](std::size_t row) {
    T acc = p.b[row];
    for (std::size_t c = 0; c < in; ++c) acc += p.w(row, c) * x[c];
    return acc;
  };
  std::vector<T> z(hidden);
  std::vector<T> rh(hidden);
  for (std::size_t j = 0; j < hidden; ++j) {
    T az = gate_in(j);
    T ar = gate_in(hidden + j);
    for (std::size_t c = 0; c < hidden; ++c) {
      az += p.u(j, c) * h_prev[c];
      ar += p.u(hidden + j, c) * h_prev[c];
    }
    z[j] = sigmoid(az);
    rh[j] = sigmoid(ar) * h_prev[j];
  }
  Tensor<T> h({hidden});
  for (std::size_t j = 0; j < hidden; ++j) {
    T ah = gate_in(2 * hidden + j);
    for (std::size_t c = 0; c < hidden; ++c) ah += p.u(2 * hidden + j, c) * rh[c];
    const T hc = std::tanh(ah);
    h[j] = z[j] * h_prev[j] + (T{1} - z[j]) * hc;
  }
  return h;
}

// --- GruLayer ----------------------------------------------------------------

template <typename T>
GruLayer<T>::GruLayer(const std::string& name, std::size_t input, std::size_t hidden, bool reverse)
    : w(name + ".w", {3 * hidden, input}),
      u(name + ".u", {3 * hidden, hidden}),
      b(name + ".b", {3 * hidden}),
      input_(input),
      hidden_(hidden),
      reverse_(reverse) {}

template <typename T>
void GruLayer<T>::init(Rng& rng) {
  glorot_uniform(w.value, input_, 3 * hidden_, rng);
  glorot_uniform(u.value, hidden_, 3 * hidden_, rng);
  b.value.zero();
}

template <typename T>
void GruLayer<T>::set_weights(const GruWeights<T>& g) {
  expect_shape(g.w, w.value.shape(), "GruLayer W");
  expect_shape(g.u, u.value.shape(), "GruLayer U");
  expect_shape(g.b, b.value.shape(), "GruLayer b");
  w.value = g.w;
  u.value = g.u;
  b.value = g.b;
}

template <typename T>
Tensor<T> GruLayer<T>::forward(const Tensor<T>& x) {
  if (x.rank() != 3 || x.dim(2) != input_) {
    throw DimensionError(w.name + ": expected [B x T x " + std::to_string(input_) + "], got " + shape_str(x.shape()));
  }
  if (x.dim(1) == 0) throw DimensionError(w.name + ": empty sequence");
  const std::size_t bsz = x.dim(0);
  const std::size_t steps = x.dim(1);
  const std::size_t H = hidden_;
  batch_ = bsz;
  steps_ = steps;
  x_ = x;

  Tensor<T> gx({bsz * steps, 3 * H});
  for (std::size_t r = 0; r < bsz * steps; ++r) std::copy(b.value.values().begin(), b.value.values().end(), gx.row(r).begin());
  kernels::gemm<T>(Trans::No, Trans::Yes, bsz * steps, 3 * H, input_, T{1}, x.data(), input_, w.value.data(), input_,
                   T{1}, gx.data(), 3 * H);

  const Shape seq{bsz, steps, H};
  z_ = Tensor<T>(seq);
  r_ = Tensor<T>(seq);
  hc_ = Tensor<T>(seq);
  hprev_ = Tensor<T>(seq);
  out_ = Tensor<T>(seq);
  Tensor<T> gh({bsz, 2 * H});
  Tensor<T> rh({bsz, H});
  Tensor<T> ghh({bsz, H});
  const T* u_cand = u.value.data() + 2 * H * H;

  for (std::size_t s = 0; s < steps; ++s) {
    const std::size_t t = reverse_ ? steps - 1 - s : s;
    const std::size_t prev_t = reverse_ ? t + 1 : t - 1;
    for (std::size_t bi = 0; bi < bsz; ++bi) {
      T* hp = hprev_.data() + (bi * steps + t) * H;
      if (s == 0) {
        std::fill(hp, hp + H, T{0});
      } else {
        const T* src = out_.data() + (bi * steps + prev_t) * H;
        std::copy(src, src + H, hp);
      }
    }
    const T* hp0 = hprev_.data() + t * H;
    kernels::gemm<T>(Trans::No, Trans::Yes, bsz, 2 * H, H, T{1}, hp0, steps * H, u.value.data(), H, T{0}, gh.data(),
                     2 * H);
    for (std::size_t bi = 0; bi < bsz; ++bi) {
      const std::size_t off = (bi * steps + t) * H;
      const T* g = gx.data() + (bi * steps + t) * 3 * H;
      for (std::size_t j = 0; j < H; ++j) {
        const T zv = sigmoid(g[j] + gh(bi, j));
        const T rv = sigmoid(g[H + j] + gh(bi, H + j));
        z_[off + j] = zv;
        r_[off + j] = rv;
        rh(bi, j) = rv * hprev_[off + j];
      }
    }
    kernels::gemm<T>(Trans::No, Trans::Yes, bsz, H, H, T{1}, rh.data(), H, u_cand, H, T{0}, ghh.data(), H);
    for (std::size_t bi = 0; bi < bsz; ++bi) {
      const std::size_t off = (bi * steps + t) * H;
      const T* g = gx.data() + (bi * steps + t) * 3 * H;
      for (std::size_t j = 0; j < H; ++j) {
        const T hc = std::tanh(g[2 * H + j] + ghh(bi, j));
        hc_[off + j] = hc;
        const T zv = z_[off + j];
        out_[off + j] = zv * hprev_[off + j] + (T{1} - zv) * hc;
      }
    }
  }
  return out_;
}

template <typename T>
Tensor<T> GruLayer<T>::backward(const Tensor<T>& dh, bool need_input_grad) {
  const std::size_t bsz = batch_;
  const std::size_t steps = steps_;
  const std::size_t H = hidden_;
  expect_shape(dh, {bsz, steps, H}, "GruLayer::backward");

  Tensor<T> dgates({bsz * steps, 3 * H});
  Tensor<T> dnext({bsz, H});
  Tensor<T> dzr({bsz, 2 * H});
  Tensor<T> dah({bsz, H});
  Tensor<T> drh({bsz, H});
  Tensor<T> rh({bsz, H});
  const T* u_cand = u.value.data() + 2 * H * H;
  T* du_cand = u.grad.data() + 2 * H * H;

  for (std::size_t s = steps; s-- > 0;) {
    const std::size_t t = reverse_ ? steps - 1 - s : s;
    for (std::size_t bi = 0; bi < bsz; ++bi) {
      const std::size_t off = (bi * steps + t) * H;
      for (std::size_t j = 0; j < H; ++j) {
        const T g = dh[off + j] + dnext(bi, j);
        const T zv = z_[off + j];
        const T hc = hc_[off + j];
        const T hp = hprev_[off + j];
        dzr(bi, j) = g * (hp - hc) * zv * (T{1} - zv);
        dah(bi, j) = g * (T{1} - zv) * (T{1} - hc * hc);
        rh(bi, j) = r_[off + j] * hp;
        dnext(bi, j) = g * zv;
      }
    }
    kernels::gemm<T>(Trans::No, Trans::No, bsz, H, H, T{1}, dah.data(), H, u_cand, H, T{0}, drh.data(), H);
    for (std::size_t bi = 0; bi < bsz; ++bi) {
      const std::size_t off = (bi * steps + t) * H;
      for (std::size_t j = 0; j < H; ++j) {
        const T rv = r_[off + j];
        dzr(bi, H + j) = drh(bi, j) * hprev_[off + j] * rv * (T{1} - rv);
        dnext(bi, j) += drh(bi, j) * rv;
      }
    }
    const T* hp0 = hprev_.data() + t * H;
    kernels::gemm<T>(Trans::No, Trans::No, bsz, H, 2 * H, T{1}, dzr.data(), 2 * H, u.value.data(), H, T{1},
                     dnext.data(), H);
    kernels::gemm<T>(Trans::Yes, Trans::No, 2 * H, H, bsz, T{1}, dzr.data(), 2 * H, hp0, steps * H, T{1},
                     u.grad.data(), H);
    kernels::gemm<T>(Trans::Yes, Trans::No, H, H, bsz, T{1}, dah.data(), H, rh.data(), H, T{1}, du_cand, H);
    for (std::size_t bi = 0; bi < bsz; ++bi) {
      T* row = dgates.data() + (bi * steps + t) * 3 * H;
      std::copy(dzr.row(bi).begin(), dzr.row(bi).end(), row);
      std::copy(dah.row(bi).begin(), dah.row(bi).end(), row + 2 * H);
    }
  }

  kernels::gemm<T>(Trans::Yes, Trans::No, 3 * H, input_, bsz * steps, T{1}, dgates.data(), 3 * H, x_.data(), input_,
                   T{1}, w.grad.data(), input_);
  for (std::size_t r = 0; r < bsz * steps; ++r) {
    const auto row = dgates.row(r);
    for (std::size_t j = 0; j < 3 * H; ++j) b.grad[j] += row[j];
  }
  if (!need_input_grad) return {};
  Tensor<T> dx({bsz, steps, input_});
  kernels::gemm<T>(Trans::No, Trans::No, bsz * steps, input_, 3 * H, T{1}, dgates.data(), 3 * H, w.value.data(),
                   input_, T{0}, dx.data(), input_);
  return dx;
}

// --- BiGruLayer --------------------------------------------------------------

template <typename T>
BiGruLayer<T>::BiGruLayer(const std::string& name, std::size_t input, std::size_t hidden, bool return_sequences)
    : fwd(name + ".fwd", input, hidden, false),
      bwd(name + ".bwd", input, hidden, true),
      return_sequences_(return_sequences) {}

template <typename T>
void BiGruLayer<T>::init(Rng& rng) {
  fwd.init(rng);
  bwd.init(rng);
}

template <typename T>
ParamRefs<T> BiGruLayer<T>::params() {
  ParamRefs<T> out = fwd.params();
  for (auto* p : bwd.params()) out.push_back(p);
  return out;
}

template <typename T>
Tensor<T> BiGruLayer<T>::forward(const Tensor<T>& x) {
  const Tensor<T> f = fwd.forward(x);
  const Tensor<T> r = bwd.forward(x);
  batch_ = x.dim(0);
  steps_ = x.dim(1);
  const std::size_t H = fwd.hidden();
  if (return_sequences_) {
    Tensor<T> y({batch_, steps_, 2 * H});
    for (std::size_t i = 0; i < batch_ * steps_; ++i) {
      std::copy(f.data() + i * H, f.data() + (i + 1) * H, y.data() + i * 2 * H);
      std::copy(r.data() + i * H, r.data() + (i + 1) * H, y.data() + i * 2 * H + H);
    }
    return y;
  }
  Tensor<T> y({batch_, 2 * H});
  for (std::size_t bi = 0; bi < batch_; ++bi) {
    const T* last_f = f.data() + (bi * steps_ + steps_ - 1) * H;
    const T* last_r = r.data() + (bi * steps_) * H;
    std::copy(last_f, last_f + H, y.data() + bi * 2 * H);
    std::copy(last_r, last_r + H, y.data() + bi * 2 * H + H);
  }
  return y;
}

template <typename T>
Tensor<T> BiGruLayer<T>::backward(const Tensor<T>& dy, bool need_input_grad) {
  const std::size_t H = fwd.hidden();
  Tensor<T> df({batch_, steps_, H});
  Tensor<T> dr({batch_, steps_, H});
  if (return_sequences_) {
    expect_shape(dy, {batch_, steps_, 2 * H}, "BiGruLayer::backward");
    for (std::size_t i = 0; i < batch_ * steps_; ++i) {
      std::copy(dy.data() + i * 2 * H, dy.data() + i * 2 * H + H, df.data() + i * H);
      std::copy(dy.data() + i * 2 * H + H, dy.data() + (i + 1) * 2 * H, dr.data() + i * H);
    }
  } else {
    expect_shape(dy, {batch_, 2 * H}, "BiGruLayer::backward");
    for (std::size_t bi = 0; bi < batch_; ++bi) {
      std::copy(dy.data() + bi * 2 * H, dy.data() + bi * 2 * H + H, df.data() + (bi * steps_ + steps_ - 1) * H);
      std::copy(dy.data() + bi * 2 * H + H, dy.data() + (bi + 1) * 2 * H, dr.data() + (bi * steps_) * H);
    }
  }
  Tensor<T> dx = fwd.backward(df, need_input_grad);
  Tensor<T> dx_r = bwd.backward(dr, need_input_grad);
  if (!need_input_grad) return {};
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dx_r[i];
  return dx;
}

// --- BiGruStack --------------------------------------------------------------

template <typename T>
BiGruStack<T>::BiGruStack(const std::string& name, std::size_t input, std::size_t hidden, std::size_t depth) {
  if (depth == 0) throw ArgumentError(name + ": need at least one layer");
  for (std::size_t l = 0; l < depth; ++l) {
    layers.emplace_back(name + ".l" + std::to_string(l), l == 0 ? input : 2 * hidden, hidden, l + 1 < depth);
  }
}

template <typename T>
void BiGruStack<T>::init(Rng& rng) {
  for (auto& l : layers) l.init(rng);
}

template <typename T>
ParamRefs<T> BiGruStack<T>::params() {
  ParamRefs<T> out;
  for (auto& l : layers) {
    for (auto* p : l.params()) out.push_back(p);
  }
  return out;
}

template <typename T>
Tensor<T> BiGruStack<T>::forward(const Tensor<T>& x) {
  Tensor<T> h = layers.front().forward(x);
  for (std::size_t l = 1; l < layers.size(); ++l) h = layers[l].forward(h);
  return h;
}

template <typename T>
Tensor<T> BiGruStack<T>::backward(const Tensor<T>& dy, bool need_input_grad) {
  Tensor<T> g = dy;
  for (std::size_t l = layers.size(); l-- > 0;) g = layers[l].backward(g, l > 0 || need_input_grad);
  return g;
}

template <typename T>
Tensor<T> bigru_forward(const Tensor<T>& sequence, BiGruStack<T>& stack) {
  if (sequence.rank() != 2 || sequence.dim(0) == 0) throw DimensionError("bigru_forward: need a nonempty [T x Cin] sequence");
  Tensor<T> x = sequence;
  x.reshape({1, sequence.dim(0), sequence.dim(1)});
  Tensor<T> y = stack.forward(x);
  y.reshape({y.size()});
  return y;
}

template Tensor<float> gru_cell<float>(const Tensor<float>&, const Tensor<float>&, const GruWeights<float>&);
template Tensor<double> gru_cell<double>(const Tensor<double>&, const Tensor<double>&, const GruWeights<double>&);
template class GruLayer<float>;
template class GruLayer<double>;
template class BiGruLayer<float>;
template class BiGruLayer<double>;
template class BiGruStack<float>;
template class BiGruStack<double>;
template Tensor<float> bigru_forward<float>(const Tensor<float>&, BiGruStack<float>&);
template Tensor<double> bigru_forward<double>(const Tensor<double>&, BiGruStack<double>&);

}  // namespace deepfeat::nn
