#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "deepfeat/llm/bpe.hpp"
#include "deepfeat/llm/gpt2.hpp"
#include "deepfeat/llm/serialize.hpp"
#include "deepfeat/nn/tensor.hpp"

namespace deepfeat::llm {

struct LlmFeatureConfig {
  SerializationConfig serialization;
  /// GPT-2 stays frozen; enabling this is rejected.
  bool fine_tune = false;

  void validate() const;
};

/// Half-open token ranges [begin, end) covering a token stream.
struct TokenWindow {
  std::size_t begin;
  std::size_t end;
};

/// Splits `token_ends` (cumulative byte end of each token) into consecutive
/// windows of at most `max_tokens`. A window may only end where a value
/// rendering ends; if no such point fits, the window is cut at max_tokens.
std::vector<TokenWindow> plan_windows(std::span<const std::size_t> token_ends, std::span<const std::size_t> value_ends,
                                      std::size_t max_tokens);

/// Mean over the row-concatenation of several [T_i x D] blocks.
nn::Tensor<float> pool_rows(std::span<const nn::Tensor<float>> blocks);

/// Frozen pipeline: serialize -> BPE -> windowed GPT-2 -> mean pooling.
class LlmFeatureExtractor {
 public:
  LlmFeatureExtractor(const BpeTokenizer& tokenizer, const Gpt2Model& model, LlmFeatureConfig cfg = {});

  /// Pooled [width] feature of one series.
  nn::Tensor<float> features(std::span<const double> series) const;
  /// Row-per-series matrix [N x width].
  nn::Tensor<float> features_batch(const std::vector<std::vector<double>>& series) const;

  /// Token ids and window plan for a series (exposed for tests).
  std::vector<TokenId> tokens(std::span<const double> series, std::vector<TokenWindow>* windows = nullptr) const;

  const LlmFeatureConfig& config() const noexcept { return cfg_; }

 private:
  const BpeTokenizer& tokenizer_;
  const Gpt2Model& model_;
  LlmFeatureConfig cfg_;
};

/// Cheap content fingerprint of a weight set (strided sample of every tensor).
std::uint64_t weights_fingerprint(const Gpt2Weights& weights);

/// Cache key over (series values, serialization config, weights fingerprint).
std::string feature_cache_key(const std::vector<std::vector<double>>& series, const SerializationConfig& cfg,
                              std::uint64_t weights_fp);

/// DEEPFEAT_CACHE_DIR, else $XDG_CACHE_HOME/deepfeat, else $HOME/.cache/deepfeat.
std::filesystem::path default_cache_dir();

/// Binary feature cache: "FLC1" | u32 count | u32 dim | row-major f32 LE.
void write_feature_cache(const std::filesystem::path& path, const nn::Tensor<float>& features);
nn::Tensor<float> read_feature_cache(const std::filesystem::path& path);

/// Returns cached features for `key` if present and well-formed, else
/// computes them with `extractor` and writes the cache.
nn::Tensor<float> cached_features(const LlmFeatureExtractor& extractor, const std::vector<std::vector<double>>& series,
                                  const std::string& key, const std::filesystem::path& cache_dir,
                                  bool* hit = nullptr);

}  // namespace deepfeat::llm
