#pragma once

// Finite-difference checks of every differentiable block, in double precision,
// shared by the unit tests and the acceptance binary.
#include <functional>
#include <string>
#include <vector>

#include "support.hpp"

#include "deepfeat/model/deepfeat.hpp"
#include "deepfeat/nn/conv1d.hpp"
#include "deepfeat/nn/grad_check.hpp"
#include "deepfeat/nn/gru.hpp"
#include "deepfeat/nn/layers.hpp"

namespace deepfeat::testing {

struct GradCase {
  std::string name;
  double tolerance;
  std::function<nn::GradCheckResult()> run;
};

namespace grad_detail {

using nn::Tensor;

inline double dot(const Tensor<double>& a, const Tensor<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

/// Checks L = <coef, f(x)> with respect to the parameters and, when
/// `check_input`, the input x. `backward` receives dL/dy and returns dL/dx
/// (ignored when the input is not checked).
template <typename Fwd, typename Bwd>
nn::GradCheckResult check_block(nn::ParamRefs<double> params, nn::Parameter<double>& input, Fwd forward,
                                Bwd backward, std::uint64_t seed, bool check_input = true) {
  Rng rng(seed);
  const Tensor<double> coef = random_tensor<double>(forward(input.value).shape(), rng);
  if (check_input) params.push_back(&input);
  nn::GradCheckOptions opt;
  opt.step = 1e-6;
  return nn::grad_check([&] { return dot(coef, forward(input.value)); },
                        [&] {
                          forward(input.value);
                          Tensor<double> dx = backward(coef);
                          if (check_input) input.grad = std::move(dx);
                        },
                        params, opt);
}

inline nn::Parameter<double> input_param(const nn::Shape& shape, std::uint64_t seed, double lo = -1, double hi = 1) {
  Rng rng(seed);
  nn::Parameter<double> p("input", shape);
  p.value = random_tensor<double>(shape, rng, lo, hi);
  return p;
}

}  // namespace grad_detail

inline std::vector<GradCase> grad_suite() {
  using namespace nn;
  using namespace grad_detail;
  std::vector<GradCase> cases;

  cases.push_back({"dense", 1e-6, [] {
                     Rng rng(1);
                     Dense<double> d("d", 7, 5);
                     d.init(rng);
                     d.bias.value = random_tensor<double>({5}, rng);
                     auto x = input_param({3, 7}, 2);
                     return check_block(
                         d.params(), x, [&](const Tensor<double>& v) { return d.forward(v); },
                         [&](const Tensor<double>& dy) { return d.backward(dy); }, 3);
                   }});
  cases.push_back({"layer norm", 1e-4, [] {
                     Rng rng(4);
                     LayerNorm<double> ln("ln", 9);
                     ln.gamma.value = random_tensor<double>({9}, rng, 0.5, 1.5);
                     ln.beta.value = random_tensor<double>({9}, rng);
                     auto x = input_param({4, 9}, 5, -3, 3);
                     return check_block(
                         ln.params(), x, [&](const Tensor<double>& v) { return ln.forward(v); },
                         [&](const Tensor<double>& dy) { return ln.backward(dy); }, 6);
                   }});
  cases.push_back({"relu", 1e-4, [] {
                     Relu<double> relu;
                     // Keep inputs away from the kink.
                     auto x = input_param({2, 10}, 7);
                     for (double& v : x.value.values()) v += v >= 0 ? 0.1 : -0.1;
                     return check_block(
                         {}, x, [&](const Tensor<double>& v) { return relu.forward(v); },
                         [&](const Tensor<double>& dy) { return relu.backward(dy); }, 8);
                   }});
  cases.push_back({"softmax focal loss", 1e-4, [] {
                     SoftmaxFocalLoss<double> loss(2.0, 0.25);
                     const std::vector<std::size_t> targets{0, 2, 1, 2};
                     auto logits = input_param({4, 3}, 9, -2, 2);
                     return grad_check([&] { return loss.forward(logits.value, targets); },
                                       [&] {
                                         loss.forward(logits.value, targets);
                                         logits.grad = loss.backward();
                                       },
                                       {&logits}, GradCheckOptions{});
                   }});
  cases.push_back({"conv1d", 1e-4, [] {
                     Rng rng(10);
                     auto conv = Conv1d<double>::same("c", 2, 3, 5);
                     conv.init(rng);
                     conv.bias.value = random_tensor<double>({3}, rng);
                     auto x = input_param({2, 11, 2}, 11);
                     return check_block(
                         conv.params(), x, [&](const Tensor<double>& v) { return conv.forward(v); },
                         [&](const Tensor<double>& dy) { return conv.backward(dy); }, 12);
                   }});
  cases.push_back({"dilated conv1d", 1e-4, [] {
                     Rng rng(13);
                     Conv1d<double> conv("c", 1, 2, ConvGeometry{3, 2, 1});
                     conv.init(rng);
                     auto x = input_param({2, 9, 1}, 14);
                     return check_block(
                         conv.params(), x, [&](const Tensor<double>& v) { return conv.forward(v); },
                         [&](const Tensor<double>& dy) { return conv.backward(dy); }, 15);
                   }});
  for (const bool reverse : {false, true}) {
    cases.push_back({reverse ? "gru layer (reverse)" : "gru layer", 1e-5, [reverse] {
                       Rng rng(16);
                       GruLayer<double> gru("g", 3, 4, reverse);
                       gru.init(rng);
                       gru.b.value = random_tensor<double>({12}, rng, -0.5, 0.5);
                       auto x = input_param({2, 6, 3}, 17);
                       return check_block(
                           gru.params(), x, [&](const Tensor<double>& v) { return gru.forward(v); },
                           [&](const Tensor<double>& dy) { return gru.backward(dy); }, 18);
                     }});
  }
  cases.push_back({"bidirectional gru stack", 1e-4, [] {
                     Rng rng(19);
                     BiGruStack<double> stack("s", 1, 3, 2);
                     stack.init(rng);
                     auto x = input_param({2, 5, 1}, 20);
                     return check_block(
                         stack.params(), x, [&](const Tensor<double>& v) { return stack.forward(v); },
                         [&](const Tensor<double>& dy) { return stack.backward(dy); }, 21);
                   }});
  cases.push_back({"global branch", 1e-4, [] {
                     Rng rng(22);
                     model::GlobalBranch<double> g("global", 4, 2);
                     g.init(rng);
                     auto x = input_param({3, 7, 1}, 23);
                     return check_block(
                         g.params(), x, [&](const Tensor<double>& v) { return g.forward(v); },
                         [&](const Tensor<double>& dy) {
                           g.backward(dy);
                           return Tensor<double>();
                         },
                         24, false);
                   }});
  cases.push_back({"local branch", 1e-4, [] {
                     Rng rng(25);
                     model::LocalBranch<double> c("local", 3, {3, 5});
                     c.init(rng);
                     for (auto* p : c.params()) {
                       if (p->value.rank() == 1) p->value = random_tensor<double>(p->value.shape(), rng, -0.2, 0.2);
                     }
                     auto x = input_param({2, 8, 1}, 26);
                     return check_block(
                         c.params(), x, [&](const Tensor<double>& v) { return c.forward(v); },
                         [&](const Tensor<double>& dy) {
                           c.backward(dy);
                           return Tensor<double>();
                         },
                         27, false);
                   }});
  cases.push_back({"projection stack", 1e-4, [] {
                     Rng rng(28);
                     model::Projection<double> proj("p", {12, 8, 5});
                     proj.init(rng);
                     auto x = input_param({3, 12}, 29);
                     return check_block(
                         proj.params(), x, [&](const Tensor<double>& v) { return proj.forward(v); },
                         [&](const Tensor<double>& dy) { return proj.backward(dy, true); }, 30);
                   }});
  cases.push_back({"mlp head with focal loss", 1e-4, [] {
                     Rng rng(31);
                     model::MlpHead<double> head("head", 10, 8, 6, 3, 0.5);
                     head.init(rng);
                     auto x = input_param({4, 10}, 32);
                     Rng drop(0);
                     SoftmaxFocalLoss<double> loss;
                     const std::vector<std::size_t> targets{0, 1, 2, 1};
                     auto params = head.params();
                     params.push_back(&x);
                     return grad_check(
                         [&] { return loss.forward(head.forward(x.value, Mode::Eval, drop), targets); },
                         [&] {
                           loss.forward(head.forward(x.value, Mode::Eval, drop), targets);
                           x.grad = head.backward(loss.backward());
                         },
                         params, GradCheckOptions{});
                   }});
  for (const auto mode : model::all_ablation_modes()) {
    cases.push_back({"whole model, " + model::to_string(mode), 1e-4, [mode] {
                       model::ModelConfig cfg;
                       cfg.mode = mode;
                       cfg.classes = 3;
                       cfg.gru_hidden = 3;
                       cfg.gru_layers = 2;
                       cfg.conv_filters = 2;
                       cfg.conv_kernels = {3, 5};
                       cfg.rocket_width = 10;
                       cfg.rocket_hidden = 6;
                       cfg.llm_width = 7;
                       cfg.projection_width = 4;
                       cfg.head_hidden1 = 6;
                       cfg.head_hidden2 = 5;
                       model::DeepFeatModel<double> net(cfg);
                       net.init(33);
                       Rng rng(34);
                       model::BranchInputs<double> in;
                       in.series = random_tensor<double>({3, 8, 1}, rng);
                       in.rocket = random_tensor<double>({3, 10}, rng);
                       in.llm = random_tensor<double>({3, 7}, rng);
                       SoftmaxFocalLoss<double> loss;
                       const std::vector<std::size_t> targets{2, 0, 1};
                       Rng drop(0);
                       GradCheckOptions opt;
                       opt.max_coords = 40;
                       return grad_check([&] { return loss.forward(net.forward(in, Mode::Eval, drop), targets); },
                                         [&] {
                                           loss.forward(net.forward(in, Mode::Eval, drop), targets);
                                           net.backward(loss.backward());
                                         },
                                         net.params(), opt);
                     }});
  }
  return cases;
}

}  // namespace deepfeat::testing
