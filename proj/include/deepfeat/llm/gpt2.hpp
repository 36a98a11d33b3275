#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "deepfeat/io/tsar.hpp"
#include "deepfeat/llm/bpe.hpp"
#include "deepfeat/nn/tensor.hpp"

namespace deepfeat::llm {

/// GPT-2 small.
struct Gpt2Config {
  std::size_t vocab = 50257;
  std::size_t context = 1024;
  std::size_t width = 768;
  std::size_t layers = 12;
  std::size_t heads = 12;
  float ln_eps = 1e-5f;

  std::size_t head_width() const noexcept { return width / heads; }
};

/// Linear weights are stored [in x out] (y = x W + b).
struct Gpt2Block {
  nn::Tensor<float> ln1_gamma, ln1_beta;
  nn::Tensor<float> qkv_w, qkv_b;    // [768 x 2304], [2304]
  nn::Tensor<float> proj_w, proj_b;  // [768 x 768], [768]
  nn::Tensor<float> ln2_gamma, ln2_beta;
  nn::Tensor<float> fc_w, fc_b;          // [768 x 3072], [3072]
  nn::Tensor<float> fc_proj_w, fc_proj_b;  // [3072 x 768], [768]
};

struct Gpt2Weights {
  Gpt2Config config;
  nn::Tensor<float> wte;  // [vocab x width]
  nn::Tensor<float> wpe;  // [context x width]
  std::vector<Gpt2Block> blocks;
  nn::Tensor<float> lnf_gamma, lnf_beta;

  /// Archive naming: wte, wpe, h{i}.{ln_1,attn.qkv,attn.proj,ln_2,mlp.fc,mlp.proj}.{w,b}, ln_f.{g,b}.
  /// Throws FormatError naming the first missing or mis-shaped tensor.
  static Gpt2Weights from_archive(io::TensorArchive archive, const Gpt2Config& config = {});
  static Gpt2Weights load(const std::filesystem::path& tsar, const Gpt2Config& config = {});
  io::TensorArchive to_archive() const;

  /// Shape and finiteness checks.
  void validate() const;
};

/// Deterministic stand-in weights with the GPT-2 small layout, for tests and
/// offline runs. Element i of tensor `name` is
///   float(scale * (2u - 1)) + float(center),  u = (mix(key + (i+1)*golden) >> 40) / 2^24,
///   key = fnv1a64(name) ^ mix(seed)
/// where mix is the SplitMix64 finalizer; centers/scales per tensor kind are
/// listed in gpt2.cpp and mirrored by scripts/make_fixtures.py.
Gpt2Weights synthetic_gpt2_weights(std::uint64_t seed, const Gpt2Config& config = {});

/// Resolves a weights spec: a TSAR path, or "synthetic:<seed>".
Gpt2Weights load_weights_spec(const std::string& spec);

struct ForwardTrace {
  /// Largest |row mean| of any normalized (pre scale/shift) layer-norm row.
  double max_abs_ln_mean = 0.0;
};

/// Frozen inference-only GPT-2 stack.
class Gpt2Model {
 public:
  explicit Gpt2Model(Gpt2Weights weights);

  /// Final hidden states [T x width] after the final layer norm.
  /// Throws ArgumentError for T == 0 or T > context, or an id >= vocab.
  nn::Tensor<float> forward(std::span<const TokenId> ids, ForwardTrace* trace = nullptr) const;

  const Gpt2Config& config() const noexcept { return weights_.config; }
  const Gpt2Weights& weights() const noexcept { return weights_; }

 private:
  Gpt2Weights weights_;
};

}  // namespace deepfeat::llm
