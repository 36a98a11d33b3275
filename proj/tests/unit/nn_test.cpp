#include <cmath>
#include <numeric>

#include "doctest.h"
#include "support.hpp"

#include "deepfeat/common/error.hpp"
#include "deepfeat/nn/conv1d.hpp"
#include "deepfeat/nn/gru.hpp"
#include "deepfeat/nn/kernels.hpp"
#include "deepfeat/nn/layers.hpp"
#include "deepfeat/nn/optim.hpp"

using namespace deepfeat;
using namespace deepfeat::nn;
using deepfeat::testing::random_tensor;

namespace {

// Direct-summation oracle for the single-sample convolution.
Tensor<double> conv_oracle(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>& b, std::size_t d,
                           std::size_t p) {
  const std::size_t t_in = x.dim(0), cin = x.dim(1), k = w.dim(0), cout = w.dim(2);
  const std::size_t t_out = t_in + 2 * p - (k - 1) * d;
  Tensor<double> y({t_out, cout});
  for (std::size_t t = 0; t < t_out; ++t) {
    for (std::size_t o = 0; o < cout; ++o) {
      double acc = b[o];
      for (std::size_t j = 0; j < k; ++j) {
        const long src = static_cast<long>(t + j * d) - static_cast<long>(p);
        if (src < 0 || src >= static_cast<long>(t_in)) continue;
        for (std::size_t c = 0; c < cin; ++c) acc += w[(j * cin + c) * cout + o] * x[src * cin + c];
      }
      y[t * cout + o] = acc;
    }
  }
  return y;
}

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

}  // namespace

TEST_CASE("conv1d examples") {
  SUBCASE("identity kernel") {
    const Tensor<double> x({3, 1}, {1, 2, 3});
    const auto y = conv1d(x, Tensor<double>({1, 1, 1}, {1}), Tensor<double>({1}), 1, 0);
    CHECK(y.values() == std::vector<double>{1, 2, 3});
  }
  SUBCASE("dilated pair of ones") {
    const Tensor<double> x({4, 1}, {1, 1, 1, 1});
    const auto y = conv1d(x, Tensor<double>({2, 1, 1}, {1, 1}), Tensor<double>({1}), 2, 0);
    CHECK(y.values() == std::vector<double>{2, 2});
  }
  SUBCASE("random k=9 d=4 p=16 against direct summation") {
    Rng rng(3);
    const auto x = random_tensor<double>({20, 1}, rng);
    const auto w = random_tensor<double>({9, 1, 1}, rng);
    const auto b = random_tensor<double>({1}, rng);
    const auto y = conv1d(x, w, b, 4, 16);
    const auto want = conv_oracle(x, w, b, 4, 16);
    REQUIRE(y.shape() == want.shape());
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == doctest::Approx(want[i]).epsilon(1e-12));
  }
  SUBCASE("multi-channel against direct summation") {
    Rng rng(4);
    const auto x = random_tensor<double>({12, 3}, rng);
    const auto w = random_tensor<double>({5, 3, 4}, rng);
    const auto b = random_tensor<double>({4}, rng);
    const auto y = conv1d(x, w, b, 2, 3);
    const auto ref = conv_oracle(x, w, b, 2, 3);
    REQUIRE(y.shape() == ref.shape());
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == doctest::Approx(ref[i]).epsilon(1e-12));
  }
  SUBCASE("receptive field longer than padded input") {
    const Tensor<double> x({2, 1}, {1, 1});
    CHECK_THROWS_AS(conv1d(x, Tensor<double>({5, 1, 1}), Tensor<double>({1}), 1, 0), DimensionError);
  }
}

TEST_CASE("batched Conv1d matches the single-sample oracle") {
  Rng rng(5);
  auto conv = Conv1d<double>::same("c", 2, 3, 5);
  conv.init(rng);
  conv.bias.value = random_tensor<double>({3}, rng);
  const auto x = random_tensor<double>({2, 9, 2}, rng);
  const auto y = conv.forward(x);
  REQUIRE(y.shape() == Shape{2, 9, 3});
  for (std::size_t b = 0; b < 2; ++b) {
    Tensor<double> xb({9, 2}, std::vector<double>(x.data() + b * 18, x.data() + (b + 1) * 18));
    const auto ref = conv_oracle(xb, conv.weight.value, conv.bias.value, 1, 2);
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(y[b * 27 + i] == doctest::Approx(ref[i]).epsilon(1e-12));
  }
}

TEST_CASE("dense examples") {
  SUBCASE("identity") {
    const auto x = Tensor<double>::vector({1, -2, 3});
    Tensor<double> eye({3, 3});
    for (std::size_t i = 0; i < 3; ++i) eye(i, i) = 1;
    CHECK(dense(x, eye, Tensor<double>({3})) == x);
  }
  SUBCASE("zero weights give the bias") {
    const auto b = Tensor<double>::vector({0.5, -1});
    CHECK(dense(Tensor<double>::vector({1, 2, 3}), Tensor<double>({2, 3}), b) == b);
  }
  SUBCASE("random 5x3 against hand multiply") {
    Rng rng(6);
    const auto w = random_tensor<double>({5, 3}, rng);
    const auto x = random_tensor<double>({3}, rng);
    const auto b = random_tensor<double>({5}, rng);
    const auto y = dense(x, w, b);
    for (std::size_t i = 0; i < 5; ++i) {
      const double want = b[i] + w(i, 0) * x[0] + w(i, 1) * x[1] + w(i, 2) * x[2];
      CHECK(y[i] == doctest::Approx(want).epsilon(1e-14));
    }
  }
}

TEST_CASE("relu") {
  CHECK(relu(Tensor<double>::vector({-1, 0, 2})).values() == std::vector<double>{0, 0, 2});
  CHECK(relu(Tensor<double>::vector({-3, -0.5})).values() == std::vector<double>{0, 0});
  Rng rng(7);
  const auto x = random_tensor<double>({50}, rng);
  CHECK(relu(relu(x)) == relu(x));
}

TEST_CASE("layer_norm") {
  const auto ones = Tensor<double>::vector({1, 1});
  const auto zeros = Tensor<double>({2});
  SUBCASE("constant input normalizes to zeros") {
    const auto y = layer_norm(Tensor<double>::vector({4, 4, 4, 4}), Tensor<double>({4}, 1.0), Tensor<double>({4}),
                              1e-5);
    for (double v : y.values()) CHECK(std::abs(v) < 1e-12);
  }
  SUBCASE("already standardized input is unchanged") {
    const auto y = layer_norm(Tensor<double>::vector({1, -1}), ones, zeros, 1e-12);
    CHECK(y[0] == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(y[1] == doctest::Approx(-1.0).epsilon(1e-9));
  }
  SUBCASE("random inputs give zero mean and unit variance") {
    Rng rng(8);
    for (int trial = 0; trial < 20; ++trial) {
      const std::size_t n = 8 + trial;
      const auto x = random_tensor<double>({n}, rng, -5, 5);
      const auto y = layer_norm(x, Tensor<double>({n}, 1.0), Tensor<double>({n}), 1e-5);
      const double mean = std::accumulate(y.values().begin(), y.values().end(), 0.0) / n;
      double var = 0;
      for (double v : y.values()) var += (v - mean) * (v - mean);
      var /= n;
      CHECK(std::abs(mean) < 1e-6);
      CHECK(std::abs(var - 1.0) < 1e-4);
    }
  }
}

TEST_CASE("gru_cell") {
  const std::size_t in = 3, h = 4;
  SUBCASE("all-zero parameters halve the state") {
    GruWeights<double> p{Tensor<double>({3 * h, in}), Tensor<double>({3 * h, h}), Tensor<double>({3 * h})};
    const auto h0 = Tensor<double>::vector({1, -2, 0.5, 4});
    const auto h1 = gru_cell(Tensor<double>::vector({7, 8, 9}), h0, p);
    for (std::size_t i = 0; i < h; ++i) CHECK(h1[i] == 0.5 * h0[i]);
  }
  SUBCASE("zero input and state with zero biases stay zero") {
    Rng rng(9);
    GruWeights<double> p{random_tensor<double>({3 * h, in}, rng), random_tensor<double>({3 * h, h}, rng),
                         Tensor<double>({3 * h})};
    const auto h1 = gru_cell(Tensor<double>({in}), Tensor<double>({h}), p);
    for (double v : h1.values()) CHECK(v == 0.0);
  }
  SUBCASE("random cell against a scalar oracle") {
    Rng rng(10);
    GruWeights<double> p{random_tensor<double>({3 * h, in}, rng), random_tensor<double>({3 * h, h}, rng),
                         random_tensor<double>({3 * h}, rng)};
    const auto x = random_tensor<double>({in}, rng);
    const auto hp = random_tensor<double>({h}, rng);
    const auto got = gru_cell(x, hp, p);
    std::vector<double> z(h), r(h);
    for (std::size_t i = 0; i < h; ++i) {
      double az = p.b[i], ar = p.b[h + i];
      for (std::size_t j = 0; j < in; ++j) {
        az += p.w[i * in + j] * x[j];
        ar += p.w[(h + i) * in + j] * x[j];
      }
      for (std::size_t j = 0; j < h; ++j) {
        az += p.u[i * h + j] * hp[j];
        ar += p.u[(h + i) * h + j] * hp[j];
      }
      z[i] = sigmoid(az);
      r[i] = sigmoid(ar);
    }
    for (std::size_t i = 0; i < h; ++i) {
      double ac = p.b[2 * h + i];
      for (std::size_t j = 0; j < in; ++j) ac += p.w[(2 * h + i) * in + j] * x[j];
      for (std::size_t j = 0; j < h; ++j) ac += p.u[(2 * h + i) * h + j] * (r[j] * hp[j]);
      const double want = z[i] * hp[i] + (1 - z[i]) * std::tanh(ac);
      CHECK(std::abs(got[i] - want) < 1e-6);
    }
  }
}

TEST_CASE("bigru_forward") {
  Rng rng(11);
  SUBCASE("width is 2H and T=1 gives equal halves with shared weights") {
    BiGruStack<double> stack("g", 1, 5, 1);
    stack.init(rng);
    stack.layers[0].bwd.set_weights(stack.layers[0].fwd.weights());
    const auto y = bigru_forward(Tensor<double>({1, 1}, {0.7}), stack);
    REQUIRE(y.size() == 10);
    for (std::size_t i = 0; i < 5; ++i) CHECK(y[i] == y[5 + i]);
  }
  SUBCASE("reversing the input swaps the halves when directions share weights") {
    BiGruStack<double> stack("g", 1, 4, 1);
    stack.init(rng);
    stack.layers[0].bwd.set_weights(stack.layers[0].fwd.weights());
    const auto seq = random_tensor<double>({9, 1}, rng);
    Tensor<double> rev({9, 1});
    for (std::size_t t = 0; t < 9; ++t) rev[t] = seq[8 - t];
    const auto a = bigru_forward(seq, stack);
    const auto b = bigru_forward(rev, stack);
    for (std::size_t i = 0; i < 4; ++i) {
      CHECK(a[i] == doctest::Approx(b[4 + i]).epsilon(1e-14));
      CHECK(a[4 + i] == doctest::Approx(b[i]).epsilon(1e-14));
    }
  }
  SUBCASE("two-layer stack emits 2H") {
    BiGruStack<double> stack("g", 1, 64, 2);
    stack.init(rng);
    CHECK(bigru_forward(random_tensor<double>({13, 1}, rng), stack).size() == 128);
  }
}

TEST_CASE("softmax") {
  const auto u = softmax(Tensor<double>::vector({0.3, 0.3, 0.3, 0.3}));
  for (double v : u.values()) CHECK(v == doctest::Approx(0.25));
  const auto p = softmax(Tensor<double>::vector({0, std::log(3.0)}));
  CHECK(p[0] == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(p[1] == doctest::Approx(0.75).epsilon(1e-14));

  Rng rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    const auto x = random_tensor<double>({7}, rng, -30, 30);
    const auto y = softmax(x);
    double sum = 0;
    for (double v : y.values()) sum += v;
    CHECK(std::abs(sum - 1.0) < 1e-6);
    auto shifted = x;
    for (double& v : shifted.values()) v += 123.25;
    const auto ys = softmax(shifted);
    for (std::size_t i = 0; i < 7; ++i) CHECK(std::abs(ys[i] - y[i]) < 1e-12);
  }
}

TEST_CASE("focal_loss") {
  const std::vector<double> half{0.5, 0.5};
  CHECK(focal_loss<double>(half, 0, 2.0, 0.25) == doctest::Approx(0.25 * 0.25 * std::log(2.0)).epsilon(1e-12));
  CHECK(std::abs(focal_loss<double>(half, 0, 2.0, 0.25) - 0.043322) < 1e-6);
  const std::vector<double> sure{1.0, 0.0};
  CHECK(focal_loss<double>(sure, 0, 2.0, 0.25) == 0.0);
  // p_t = 0 is clamped rather than producing infinity.
  CHECK(std::isfinite(focal_loss<double>(sure, 1, 2.0, 0.25)));

  Rng rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    const auto p = softmax(random_tensor<double>({5}, rng, -4, 4));
    const std::size_t target = rng.below(5);
    CHECK(std::abs(focal_loss<double>(p.span(), target, 0.0, 1.0) + std::log(p[target])) < 1e-12);
  }
}

TEST_CASE("dropout") {
  Rng rng(14);
  const auto x = random_tensor<double>({100}, rng);
  CHECK(dropout(x, 0.0, Mode::Train, rng) == x);
  CHECK(dropout(x, 0.5, Mode::Eval, rng) == x);
  const Tensor<double> ones({100000}, 1.0);
  const auto y = dropout(ones, 0.5, Mode::Train, rng);
  const double mean = std::accumulate(y.values().begin(), y.values().end(), 0.0) / 100000.0;
  CHECK(std::abs(mean - 1.0) < 0.02);
  for (double v : y.values()) CHECK((v == 0.0 || v == 2.0));
}

TEST_CASE("adam_step") {
  SUBCASE("zero gradient leaves parameters bit-identical") {
    Rng rng(15);
    Parameter<double> p("p", {6});
    p.value = random_tensor<double>({6}, rng);
    const auto before = p.value;
    auto state = AdamState<double>::for_param(p);
    for (int i = 0; i < 5; ++i) adam_step(p, state, 1e-3);
    CHECK(p.value == before);
  }
  SUBCASE("first step moves by about lr") {
    Parameter<double> p("p", {1});
    p.value[0] = 2.0;
    p.grad[0] = 0.37;
    auto state = AdamState<double>::for_param(p);
    adam_step(p, state, 1e-3);
    CHECK(std::abs((2.0 - p.value[0]) - 1e-3 * 0.37 / (0.37 + 1e-8)) < 1e-15);
  }
  SUBCASE("three steps on w^2 match a scalar reference") {
    Parameter<double> p("p", {1});
    p.value[0] = 1.5;
    auto state = AdamState<double>::for_param(p);
    double w = 1.5, m = 0, v = 0;
    const double lr = 0.1, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    for (int t = 1; t <= 3; ++t) {
      p.grad[0] = 2 * p.value[0];
      adam_step(p, state, lr);
      const double g = 2 * w;
      m = b1 * m + (1 - b1) * g;
      v = b2 * v + (1 - b2) * g * g;
      const double mh = m / (1 - std::pow(b1, t));
      const double vh = v / (1 - std::pow(b2, t));
      w -= lr * mh / (std::sqrt(vh) + eps);
      CHECK(std::abs(p.value[0] - w) < 1e-10);
    }
  }
  SUBCASE("non-finite gradient aborts without touching the parameter") {
    Parameter<double> p("p", {3});
    p.grad[1] = std::nan("");
    auto state = AdamState<double>::for_param(p);
    CHECK_THROWS_AS(adam_step(p, state, 1e-3), DivergenceError);
    CHECK(p.value.values() == std::vector<double>{0, 0, 0});
  }
  SUBCASE("optimizer checks every gradient before any update") {
    Parameter<float> a("a", {2}), b("b", {2});
    a.grad[0] = 1.0f;
    b.grad[1] = INFINITY;
    Adam<float> opt({&a, &b});
    CHECK_THROWS_AS(opt.step(1e-3), DivergenceError);
    CHECK(a.value.values() == std::vector<float>{0, 0});
  }
}

TEST_CASE("lr_at") {
  const LrSchedule s{0.001, 100, 0.5};
  for (std::size_t step = 0; step < 100; ++step) CHECK(lr_at(s, step) == 0.001);
  CHECK(lr_at(s, 100) == doctest::Approx(0.001 / 1.5).epsilon(1e-15));
  CHECK(std::abs(lr_at(s, 100) - 0.000667) < 5e-7);
  CHECK(lr_at(s, 250) == doctest::Approx(0.0005).epsilon(1e-15));
  double prev = lr_at(s, 0);
  for (std::size_t step = 1; step < 5000; ++step) {
    const double cur = lr_at(s, step);
    CHECK(cur <= prev);
    prev = cur;
  }
}

TEST_CASE("gemm matches the serial reference") {
  Rng rng(16);
  using kernels::Trans;
  for (const Trans ta : {Trans::No, Trans::Yes}) {
    for (const Trans tb : {Trans::No, Trans::Yes}) {
      const std::size_t m = 37, n = 53, k = 300;
      const auto a = random_tensor<double>({m * k}, rng);
      const auto b = random_tensor<double>({k * n}, rng);
      auto c = random_tensor<double>({m * n}, rng);
      auto ref = c;
      const std::size_t lda = ta == Trans::No ? k : m;
      const std::size_t ldb = tb == Trans::No ? n : k;
      kernels::gemm<double>(ta, tb, m, n, k, 0.5, a.data(), lda, b.data(), ldb, 0.25, c.data(), n);
      kernels::reference::gemm<double>(ta, tb, m, n, k, 0.5, a.data(), lda, b.data(), ldb, 0.25, ref.data(), n);
      for (std::size_t i = 0; i < c.size(); ++i) CHECK(c[i] == doctest::Approx(ref[i]).epsilon(1e-12));
    }
  }
}
