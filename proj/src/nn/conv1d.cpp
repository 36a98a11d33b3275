#include "deepfeat/nn/conv1d.hpp"

#include <algorithm>

#include "deepfeat/nn/kernels.hpp"
#include "deepfeat/nn/layers.hpp"

namespace deepfeat::nn {

using kernels::Trans;

std::size_t ConvGeometry::output_length(std::size_t t) const {
  const std::size_t field = (kernel - 1) * dilation + 1;
  if (kernel == 0 || t + 2 * padding < field) {
    throw DimensionError("conv1d: series of length " + std::to_string(t) + " with padding " + std::to_string(padding) +
                         " is shorter than the receptive field " + std::to_string(field));
  }
  return t + 2 * padding - (kernel - 1) * dilation;
}

namespace {

// cols[(b*T' + t) , j*Cin + c] = x[b, t + j*d - p, c] (zero outside).
template <typename T>
void im2col(const T* x, std::size_t batch, std::size_t t_in, std::size_t cin, const ConvGeometry& g,
            std::size_t t_out, T* cols) {
  const std::size_t width = g.kernel * cin;
#pragma omp parallel for collapse(2) schedule(static)
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < t_out; ++t) {
      T* row = cols + (b * t_out + t) * width;
      for (std::size_t j = 0; j < g.kernel; ++j) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + j * g.dilation) - static_cast<std::ptrdiff_t>(g.padding);
        T* dst = row + j * cin;
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(t_in)) {
          std::fill(dst, dst + cin, T{0});
        } else {
          const T* s = x + (b * t_in + static_cast<std::size_t>(src)) * cin;
          std::copy(s, s + cin, dst);
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* cols, std::size_t batch, std::size_t t_in, std::size_t cin, const ConvGeometry& g,
            std::size_t t_out, T* dx) {
  const std::size_t width = g.kernel * cin;
  std::fill(dx, dx + batch * t_in * cin, T{0});
#pragma omp parallel for schedule(static)
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < t_out; ++t) {
      const T* row = cols + (b * t_out + t) * width;
      for (std::size_t j = 0; j < g.kernel; ++j) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + j * g.dilation) - static_cast<std::ptrdiff_t>(g.padding);
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(t_in)) continue;
        T* d = dx + (b * t_in + static_cast<std::size_t>(src)) * cin;
        const T* s = row + j * cin;
        for (std::size_t c = 0; c < cin; ++c) d[c] += s[c];
      }
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> conv1d(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias, std::size_t dilation,
                 std::size_t padding) {
  if (input.rank() != 2 || weights.rank() != 3 || bias.rank() != 1 || weights.dim(1) != input.dim(1) ||
      weights.dim(2) != bias.dim(0)) {
    throw DimensionError("conv1d: input " + shape_str(input.shape()) + ", weights " + shape_str(weights.shape()) +
                         ", bias " + shape_str(bias.shape()));
  }
  Conv1d<T> layer("conv1d", input.dim(1), weights.dim(2), ConvGeometry{weights.dim(0), dilation, padding});
  layer.weight.value = weights;
  layer.bias.value = bias;
  Tensor<T> x = input;
  x.reshape({1, input.dim(0), input.dim(1)});
  Tensor<T> y = layer.forward(x);
  y.reshape({y.dim(1), y.dim(2)});
  return y;
}

template <typename T>
Conv1d<T>::Conv1d(const std::string& name, std::size_t in_channels, std::size_t out_channels, ConvGeometry geometry)
    : weight(name + ".w", {geometry.kernel, in_channels, out_channels}),
      bias(name + ".b", {out_channels}),
      cin_(in_channels),
      cout_(out_channels),
      geom_(geometry) {
  if (geometry.kernel == 0 || geometry.dilation == 0) throw ArgumentError(name + ": kernel and dilation must be >= 1");
}

template <typename T>
Conv1d<T> Conv1d<T>::same(const std::string& name, std::size_t in_channels, std::size_t out_channels,
                          std::size_t kernel) {
  if (kernel % 2 == 0) throw ArgumentError(name + ": same padding needs an odd kernel");
  return Conv1d(name, in_channels, out_channels, ConvGeometry{kernel, 1, (kernel - 1) / 2});
}

template <typename T>
void Conv1d<T>::init(Rng& rng) {
  glorot_uniform(weight.value, geom_.kernel * cin_, geom_.kernel * cout_, rng);
  bias.value.zero();
}

template <typename T>
Tensor<T> Conv1d<T>::forward(const Tensor<T>& x) {
  if (x.rank() != 3 || x.dim(2) != cin_) {
    throw DimensionError(weight.name + ": expected [B x T x " + std::to_string(cin_) + "], got " + shape_str(x.shape()));
  }
  batch_ = x.dim(0);
  t_in_ = x.dim(1);
  t_out_ = geom_.output_length(t_in_);
  const std::size_t width = geom_.kernel * cin_;
  cols_ = Tensor<T>({batch_ * t_out_, width});
  im2col(x.data(), batch_, t_in_, cin_, geom_, t_out_, cols_.data());

  Tensor<T> y({batch_, t_out_, cout_});
  for (std::size_t r = 0; r < batch_ * t_out_; ++r) {
    std::copy(bias.value.values().begin(), bias.value.values().end(), y.data() + r * cout_);
  }
  kernels::gemm<T>(Trans::No, Trans::No, batch_ * t_out_, cout_, width, T{1}, cols_.data(), width,
                   weight.value.data(), cout_, T{1}, y.data(), cout_);
  return y;
}

template <typename T>
Tensor<T> Conv1d<T>::backward(const Tensor<T>& dy, bool need_input_grad) {
  expect_shape(dy, {batch_, t_out_, cout_}, "Conv1d::backward");
  const std::size_t rows = batch_ * t_out_;
  const std::size_t width = geom_.kernel * cin_;
  kernels::gemm<T>(Trans::Yes, Trans::No, width, cout_, rows, T{1}, cols_.data(), width, dy.data(), cout_, T{1},
                   weight.grad.data(), cout_);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* g = dy.data() + r * cout_;
    for (std::size_t o = 0; o < cout_; ++o) bias.grad[o] += g[o];
  }
  if (!need_input_grad) return {};
  Tensor<T> dcols({rows, width});
  kernels::gemm<T>(Trans::No, Trans::Yes, rows, width, cout_, T{1}, dy.data(), cout_, weight.value.data(), cout_,
                   T{0}, dcols.data(), width);
  Tensor<T> dx({batch_, t_in_, cin_});
  col2im(dcols.data(), batch_, t_in_, cin_, geom_, t_out_, dx.data());
  return dx;
}

template Tensor<float> conv1d<float>(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&, std::size_t,
                                     std::size_t);
template Tensor<double> conv1d<double>(const Tensor<double>&, const Tensor<double>&, const Tensor<double>&,
                                       std::size_t, std::size_t);
template class Conv1d<float>;
template class Conv1d<double>;

}  // namespace deepfeat::nn
