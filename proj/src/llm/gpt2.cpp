#include "deepfeat/llm/gpt2.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "deepfeat/common/error.hpp"
#include "deepfeat/common/rng.hpp"
#include "deepfeat/nn/kernels.hpp"

namespace deepfeat::llm {

using nn::Tensor;
using nn::kernels::Trans;

namespace {

std::string block_name(std::size_t i, const char* leaf) { return "h" + std::to_string(i) + "." + leaf; }

Tensor<float> take_checked(io::TensorArchive& ar, const std::string& name, const nn::Shape& shape) {
  if (!ar.contains(name)) throw FormatError("GPT-2 archive is missing tensor " + name);
  Tensor<float> t = ar.take(name);
  if (t.shape() != shape) {
    throw FormatError("GPT-2 tensor " + name + " has shape " + nn::shape_str(t.shape()) + ", expected " +
                      nn::shape_str(shape));
  }
  return t;
}

struct SyntheticKind {
  double center;
  double scale;
};

// Centers/scales of the synthetic weights; keep in sync with scripts/make_fixtures.py.
SyntheticKind synthetic_kind(const std::string& name) {
  auto ends_with = [&](const char* suffix) {
    const std::string s(suffix);
    return name.size() >= s.size() && name.compare(name.size() - s.size(), s.size(), s) == 0;
  };
  const bool is_ln = name.find("ln_") != std::string::npos;
  if (is_ln && (ends_with(".w") || ends_with(".g"))) return {1.0, 0.1};
  if (is_ln) return {0.0, 0.02};
  if (name == "wte") return {0.0, 0.035};
  if (name == "wpe") return {0.0, 0.02};
  if (ends_with(".b")) return {0.0, 0.02};
  return {0.0, 0.035};
}

Tensor<float> synthetic_tensor(std::uint64_t seed, const std::string& name, const nn::Shape& shape) {
  Tensor<float> t(shape);
  const auto kind = synthetic_kind(name);
  const std::uint64_t key = fnv1a64(name) ^ splitmix64_mix(seed);
  const auto center = static_cast<float>(kind.center);
  const std::size_t n = t.size();
  float* out = t.data();
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint64_t x = splitmix64_mix(key + (static_cast<std::uint64_t>(i) + 1) * kGoldenGamma);
    const double u = static_cast<double>(x >> 40) * 0x1.0p-24;
    const double v = 2.0 * u - 1.0;
    out[i] = static_cast<float>(kind.scale * v) + center;
  }
  return t;
}

// Layer norm over rows of x [rows x width] into y.
void layer_norm_rows(const float* x, std::size_t rows, std::size_t width, const Tensor<float>& gamma,
                     const Tensor<float>& beta, float eps, float* y, ForwardTrace* trace) {
  double worst = 0.0;
#pragma omp parallel for schedule(static) reduction(max : worst)
  for (std::size_t r = 0; r < rows; ++r) {
    const float* xr = x + r * width;
    float* yr = y + r * width;
    double mean = 0.0;
    for (std::size_t i = 0; i < width; ++i) mean += xr[i];
    mean /= static_cast<double>(width);
    double var = 0.0;
    for (std::size_t i = 0; i < width; ++i) var += (xr[i] - mean) * (xr[i] - mean);
    var /= static_cast<double>(width);
    const double inv = 1.0 / std::sqrt(var + static_cast<double>(eps));
    double norm_mean = 0.0;
    for (std::size_t i = 0; i < width; ++i) {
      const float xh = static_cast<float>((xr[i] - mean) * inv);
      norm_mean += xh;
      yr[i] = gamma[i] * xh + beta[i];
    }
    worst = std::max(worst, std::abs(norm_mean / static_cast<double>(width)));
  }
  if (trace != nullptr) trace->max_abs_ln_mean = std::max(trace->max_abs_ln_mean, worst);
}

void add_bias_rows(float* y, std::size_t rows, const Tensor<float>& bias) {
  const std::size_t w = bias.size();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t i = 0; i < w; ++i) y[r * w + i] = bias[i];
  }
}

float gelu_tanh(float x) {
  constexpr float k = 0.7978845608028654f;  // sqrt(2 / pi)
  return 0.5f * x * (1.0f + std::tanh(k * (x + 0.044715f * x * x * x)));
}

}  // namespace

Gpt2Weights Gpt2Weights::from_archive(io::TensorArchive archive, const Gpt2Config& config) {
  Gpt2Weights w;
  w.config = config;
  const std::size_t d = config.width;
  w.wte = take_checked(archive, "wte", {config.vocab, d});
  w.wpe = take_checked(archive, "wpe", {config.context, d});
  for (std::size_t i = 0; i < config.layers; ++i) {
    Gpt2Block b;
    b.ln1_gamma = take_checked(archive, block_name(i, "ln_1.w"), {d});
    b.ln1_beta = take_checked(archive, block_name(i, "ln_1.b"), {d});
    b.qkv_w = take_checked(archive, block_name(i, "attn.qkv.w"), {d, 3 * d});
    b.qkv_b = take_checked(archive, block_name(i, "attn.qkv.b"), {3 * d});
    b.proj_w = take_checked(archive, block_name(i, "attn.proj.w"), {d, d});
    b.proj_b = take_checked(archive, block_name(i, "attn.proj.b"), {d});
    b.ln2_gamma = take_checked(archive, block_name(i, "ln_2.w"), {d});
    b.ln2_beta = take_checked(archive, block_name(i, "ln_2.b"), {d});
    b.fc_w = take_checked(archive, block_name(i, "mlp.fc.w"), {d, 4 * d});
    b.fc_b = take_checked(archive, block_name(i, "mlp.fc.b"), {4 * d});
    b.fc_proj_w = take_checked(archive, block_name(i, "mlp.proj.w"), {4 * d, d});
    b.fc_proj_b = take_checked(archive, block_name(i, "mlp.proj.b"), {d});
    w.blocks.push_back(std::move(b));
  }
  w.lnf_gamma = take_checked(archive, "ln_f.g", {d});
  w.lnf_beta = take_checked(archive, "ln_f.b", {d});
  if (archive.size() != 0) throw FormatError("GPT-2 archive has unexpected tensor " + archive.names().front());
  w.validate();
  return w;
}

Gpt2Weights Gpt2Weights::load(const std::filesystem::path& tsar, const Gpt2Config& config) {
  return from_archive(io::TensorArchive::read(tsar), config);
}

io::TensorArchive Gpt2Weights::to_archive() const {
  io::TensorArchive ar;
  ar.add("wte", wte);
  ar.add("wpe", wpe);
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto& b = blocks[i];
    ar.add(block_name(i, "ln_1.w"), b.ln1_gamma);
    ar.add(block_name(i, "ln_1.b"), b.ln1_beta);
    ar.add(block_name(i, "attn.qkv.w"), b.qkv_w);
    ar.add(block_name(i, "attn.qkv.b"), b.qkv_b);
    ar.add(block_name(i, "attn.proj.w"), b.proj_w);
    ar.add(block_name(i, "attn.proj.b"), b.proj_b);
    ar.add(block_name(i, "ln_2.w"), b.ln2_gamma);
    ar.add(block_name(i, "ln_2.b"), b.ln2_beta);
    ar.add(block_name(i, "mlp.fc.w"), b.fc_w);
    ar.add(block_name(i, "mlp.fc.b"), b.fc_b);
    ar.add(block_name(i, "mlp.proj.w"), b.fc_proj_w);
    ar.add(block_name(i, "mlp.proj.b"), b.fc_proj_b);
  }
  ar.add("ln_f.g", lnf_gamma);
  ar.add("ln_f.b", lnf_beta);
  return ar;
}

void Gpt2Weights::validate() const {
  const std::size_t d = config.width;
  if (config.heads == 0 || d % config.heads != 0) throw FormatError("GPT-2 width must divide evenly into heads");
  if (blocks.size() != config.layers) {
    throw FormatError("GPT-2 weights have " + std::to_string(blocks.size()) + " blocks, expected " +
                      std::to_string(config.layers));
  }
  auto check = [](const Tensor<float>& t, const nn::Shape& shape, const std::string& name) {
    if (t.shape() != shape) throw FormatError("GPT-2 tensor " + name + " has shape " + nn::shape_str(t.shape()));
    if (!t.all_finite()) throw FormatError("GPT-2 tensor " + name + " holds non-finite values");
  };
  check(wte, {config.vocab, d}, "wte");
  check(wpe, {config.context, d}, "wpe");
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto& b = blocks[i];
    const std::string p = "h" + std::to_string(i);
    check(b.ln1_gamma, {d}, p + ".ln_1.w");
    check(b.ln1_beta, {d}, p + ".ln_1.b");
    check(b.qkv_w, {d, 3 * d}, p + ".attn.qkv.w");
    check(b.qkv_b, {3 * d}, p + ".attn.qkv.b");
    check(b.proj_w, {d, d}, p + ".attn.proj.w");
    check(b.proj_b, {d}, p + ".attn.proj.b");
    check(b.ln2_gamma, {d}, p + ".ln_2.w");
    check(b.ln2_beta, {d}, p + ".ln_2.b");
    check(b.fc_w, {d, 4 * d}, p + ".mlp.fc.w");
    check(b.fc_b, {4 * d}, p + ".mlp.fc.b");
    check(b.fc_proj_w, {4 * d, d}, p + ".mlp.proj.w");
    check(b.fc_proj_b, {d}, p + ".mlp.proj.b");
  }
  check(lnf_gamma, {d}, "ln_f.g");
  check(lnf_beta, {d}, "ln_f.b");
}

Gpt2Weights synthetic_gpt2_weights(std::uint64_t seed, const Gpt2Config& config) {
  const std::size_t d = config.width;
  io::TensorArchive ar;
  ar.add("wte", synthetic_tensor(seed, "wte", {config.vocab, d}));
  ar.add("wpe", synthetic_tensor(seed, "wpe", {config.context, d}));
  const std::pair<const char*, nn::Shape> leaves[] = {
      {"ln_1.w", {d}},          {"ln_1.b", {d}},         {"attn.qkv.w", {d, 3 * d}}, {"attn.qkv.b", {3 * d}},
      {"attn.proj.w", {d, d}},  {"attn.proj.b", {d}},    {"ln_2.w", {d}},            {"ln_2.b", {d}},
      {"mlp.fc.w", {d, 4 * d}}, {"mlp.fc.b", {4 * d}},   {"mlp.proj.w", {4 * d, d}}, {"mlp.proj.b", {d}},
  };
  for (std::size_t i = 0; i < config.layers; ++i) {
    for (const auto& [leaf, shape] : leaves) {
      const std::string name = block_name(i, leaf);
      ar.add(name, synthetic_tensor(seed, name, shape));
    }
  }
  ar.add("ln_f.g", synthetic_tensor(seed, "ln_f.g", {d}));
  ar.add("ln_f.b", synthetic_tensor(seed, "ln_f.b", {d}));
  return Gpt2Weights::from_archive(std::move(ar), config);
}

Gpt2Weights load_weights_spec(const std::string& spec) {
  constexpr std::string_view prefix = "synthetic:";
  if (spec.rfind(prefix, 0) == 0) {
    const std::string seed_text = spec.substr(prefix.size());
    std::size_t used = 0;
    unsigned long long seed = 0;
    try {
      seed = std::stoull(seed_text, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (seed_text.empty() || used != seed_text.size()) throw ArgumentError("bad synthetic weights spec: " + spec);
    return synthetic_gpt2_weights(seed);
  }
  return Gpt2Weights::load(spec);
}

Gpt2Model::Gpt2Model(Gpt2Weights weights) : weights_(std::move(weights)) { weights_.validate(); }

Tensor<float> Gpt2Model::forward(std::span<const TokenId> ids, ForwardTrace* trace) const {
  const auto& cfg = weights_.config;
  const std::size_t steps = ids.size();
  if (steps == 0) throw ArgumentError("gpt2_forward: empty token sequence");
  if (steps > cfg.context) {
    throw ArgumentError("gpt2_forward: " + std::to_string(steps) + " tokens exceed the context of " +
                        std::to_string(cfg.context));
  }
  const std::size_t d = cfg.width;
  const std::size_t hw = cfg.head_width();
  Tensor<float> x({steps, d});
  for (std::size_t t = 0; t < steps; ++t) {
    if (ids[t] >= cfg.vocab) throw ArgumentError("gpt2_forward: token id " + std::to_string(ids[t]) + " out of range");
    const float* te = weights_.wte.data() + static_cast<std::size_t>(ids[t]) * d;
    const float* pe = weights_.wpe.data() + t * d;
    float* row = x.data() + t * d;
    for (std::size_t i = 0; i < d; ++i) row[i] = te[i] + pe[i];
  }

  Tensor<float> h({steps, d});
  Tensor<float> qkv({steps, 3 * d});
  Tensor<float> att({steps, d});
  Tensor<float> scores({steps, steps});
  Tensor<float> mlp({steps, 4 * d});
  const float scale = 1.0f / std::sqrt(static_cast<float>(hw));

  for (const auto& blk : weights_.blocks) {
    layer_norm_rows(x.data(), steps, d, blk.ln1_gamma, blk.ln1_beta, cfg.ln_eps, h.data(), trace);
    add_bias_rows(qkv.data(), steps, blk.qkv_b);
    nn::kernels::gemm<float>(Trans::No, Trans::No, steps, 3 * d, d, 1.0f, h.data(), d, blk.qkv_w.data(), 3 * d, 1.0f,
                             qkv.data(), 3 * d);
    for (std::size_t head = 0; head < cfg.heads; ++head) {
      const float* q = qkv.data() + head * hw;
      const float* k = qkv.data() + d + head * hw;
      const float* v = qkv.data() + 2 * d + head * hw;
      nn::kernels::gemm<float>(Trans::No, Trans::Yes, steps, steps, hw, scale, q, 3 * d, k, 3 * d, 0.0f,
                               scores.data(), steps);
#pragma omp parallel for schedule(static)
      for (std::size_t i = 0; i < steps; ++i) {
        float* row = scores.data() + i * steps;
        float mx = -std::numeric_limits<float>::infinity();
        for (std::size_t j = 0; j <= i; ++j) mx = std::max(mx, row[j]);
        float sum = 0.0f;
        for (std::size_t j = 0; j <= i; ++j) {
          row[j] = std::exp(row[j] - mx);
          sum += row[j];
        }
        const float inv = 1.0f / sum;
        for (std::size_t j = 0; j <= i; ++j) row[j] *= inv;
        for (std::size_t j = i + 1; j < steps; ++j) row[j] = 0.0f;
      }
      nn::kernels::gemm<float>(Trans::No, Trans::No, steps, hw, steps, 1.0f, scores.data(), steps, v, 3 * d, 0.0f,
                               att.data() + head * hw, d);
    }
    // residual: x += att W_proj + b_proj
    for (std::size_t t = 0; t < steps; ++t) {
      float* row = x.data() + t * d;
      for (std::size_t i = 0; i < d; ++i) row[i] += blk.proj_b[i];
    }
    nn::kernels::gemm<float>(Trans::No, Trans::No, steps, d, d, 1.0f, att.data(), d, blk.proj_w.data(), d, 1.0f,
                             x.data(), d);

    layer_norm_rows(x.data(), steps, d, blk.ln2_gamma, blk.ln2_beta, cfg.ln_eps, h.data(), trace);
    add_bias_rows(mlp.data(), steps, blk.fc_b);
    nn::kernels::gemm<float>(Trans::No, Trans::No, steps, 4 * d, d, 1.0f, h.data(), d, blk.fc_w.data(), 4 * d, 1.0f,
                             mlp.data(), 4 * d);
    float* m = mlp.data();
    const std::size_t mn = mlp.size();
#pragma omp parallel for schedule(static)
    for (std::size_t i = 0; i < mn; ++i) m[i] = gelu_tanh(m[i]);
    for (std::size_t t = 0; t < steps; ++t) {
      float* row = x.data() + t * d;
      for (std::size_t i = 0; i < d; ++i) row[i] += blk.fc_proj_b[i];
    }
    nn::kernels::gemm<float>(Trans::No, Trans::No, steps, d, 4 * d, 1.0f, mlp.data(), 4 * d, blk.fc_proj_w.data(), d,
                             1.0f, x.data(), d);
  }
  Tensor<float> out({steps, d});
  layer_norm_rows(x.data(), steps, d, weights_.lnf_gamma, weights_.lnf_beta, cfg.ln_eps, out.data(), trace);
  return out;
}

}  // namespace deepfeat::llm
