#include "deepfeat/llm/features.hpp"

#include <algorithm>
#include <bit>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <unordered_set>

#include "deepfeat/common/error.hpp"
#include "deepfeat/common/rng.hpp"

namespace deepfeat::llm {

using nn::Tensor;

void LlmFeatureConfig::validate() const {
  serialization.validate();
  if (fine_tune) throw ArgumentError("GPT-2 fine-tuning is not supported; the language-model branch is frozen");
}

std::vector<TokenWindow> plan_windows(std::span<const std::size_t> token_ends, std::span<const std::size_t> value_ends,
                                      std::size_t max_tokens) {
  if (max_tokens == 0) throw ArgumentError("plan_windows: max_tokens must be positive");
  const std::unordered_set<std::size_t> boundaries(value_ends.begin(), value_ends.end());
  std::vector<TokenWindow> windows;
  const std::size_t n = token_ends.size();
  std::size_t begin = 0;
  while (begin < n) {
    std::size_t end = std::min(n, begin + max_tokens);
    if (end < n) {
      std::size_t cut = end;
      while (cut > begin && boundaries.count(token_ends[cut - 1]) == 0) --cut;
      if (cut > begin) end = cut;
    }
    windows.push_back({begin, end});
    begin = end;
  }
  return windows;
}

Tensor<float> pool_rows(std::span<const Tensor<float>> blocks) {
  if (blocks.empty()) throw ArgumentError("pool_rows: nothing to pool");
  const std::size_t width = blocks.front().dim(1);
  std::vector<double> acc(width, 0.0);
  std::size_t rows = 0;
  for (const auto& b : blocks) {
    if (b.rank() != 2 || b.dim(1) != width) throw DimensionError("pool_rows: blocks disagree in width");
    for (std::size_t r = 0; r < b.dim(0); ++r) {
      const float* row = b.data() + r * width;
      for (std::size_t i = 0; i < width; ++i) acc[i] += row[i];
    }
    rows += b.dim(0);
  }
  if (rows == 0) throw ArgumentError("pool_rows: no rows");
  Tensor<float> out({width});
  for (std::size_t i = 0; i < width; ++i) out[i] = static_cast<float>(acc[i] / static_cast<double>(rows));
  return out;
}

LlmFeatureExtractor::LlmFeatureExtractor(const BpeTokenizer& tokenizer, const Gpt2Model& model, LlmFeatureConfig cfg)
    : tokenizer_(tokenizer), model_(model), cfg_(std::move(cfg)) {
  cfg_.validate();
  if (tokenizer_.vocab_size() > model_.config().vocab) {
    throw ArgumentError("tokenizer vocabulary is larger than the model's embedding table");
  }
}

std::vector<TokenId> LlmFeatureExtractor::tokens(std::span<const double> series,
                                                 std::vector<TokenWindow>* windows) const {
  const SerializedSeries text = serialize_series_with_offsets(series, cfg_.serialization);
  std::vector<TokenId> ids = tokenizer_.encode(text.text);
  if (windows != nullptr) {
    std::vector<std::size_t> ends;
    ends.reserve(ids.size());
    std::size_t offset = 0;
    for (TokenId id : ids) {
      offset += tokenizer_.token_bytes(id).size();
      ends.push_back(offset);
    }
    *windows = plan_windows(ends, text.value_ends, model_.config().context);
  }
  return ids;
}

Tensor<float> LlmFeatureExtractor::features(std::span<const double> series) const {
  std::vector<TokenWindow> windows;
  const std::vector<TokenId> ids = tokens(series, &windows);
  std::vector<Tensor<float>> hidden;
  hidden.reserve(windows.size());
  for (const auto& w : windows) {
    hidden.push_back(model_.forward(std::span<const TokenId>(ids).subspan(w.begin, w.end - w.begin)));
  }
  return pool_rows(hidden);
}

Tensor<float> LlmFeatureExtractor::features_batch(const std::vector<std::vector<double>>& series) const {
  const std::size_t width = model_.config().width;
  Tensor<float> out({series.size(), width});
  // Each forward pass is itself parallel, so samples are processed in turn.
  for (std::size_t i = 0; i < series.size(); ++i) {
    const Tensor<float> f = features(series[i]);
    std::copy(f.data(), f.data() + width, out.data() + i * width);
  }
  return out;
}

std::uint64_t weights_fingerprint(const Gpt2Weights& weights) {
  std::uint64_t h = fnv1a64("gpt2");
  auto mix_in = [&h](const Tensor<float>& t) {
    h = splitmix64_mix(h ^ t.size());
    for (std::size_t i = 0; i < t.size(); i += 997) {
      h = splitmix64_mix(h ^ std::bit_cast<std::uint32_t>(t[i]));
    }
  };
  mix_in(weights.wte);
  mix_in(weights.wpe);
  for (const auto& b : weights.blocks) {
    for (const auto* t : {&b.ln1_gamma, &b.ln1_beta, &b.qkv_w, &b.qkv_b, &b.proj_w, &b.proj_b, &b.ln2_gamma,
                          &b.ln2_beta, &b.fc_w, &b.fc_b, &b.fc_proj_w, &b.fc_proj_b}) {
      mix_in(*t);
    }
  }
  mix_in(weights.lnf_gamma);
  mix_in(weights.lnf_beta);
  return h;
}

std::string feature_cache_key(const std::vector<std::vector<double>>& series, const SerializationConfig& cfg,
                              std::uint64_t weights_fp) {
  std::uint64_t h = fnv1a64("FLC1");
  h = splitmix64_mix(h ^ series.size());
  for (const auto& s : series) {
    h = splitmix64_mix(h ^ s.size());
    for (double v : s) h = splitmix64_mix(h ^ std::bit_cast<std::uint64_t>(v));
  }
  h = splitmix64_mix(h ^ static_cast<std::uint64_t>(cfg.fractional_digits));
  h = splitmix64_mix(h ^ fnv1a64(cfg.separator));
  h = splitmix64_mix(h ^ weights_fp);
  std::ostringstream os;
  os << "flc-" << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

std::filesystem::path default_cache_dir() {
  if (const char* dir = std::getenv("DEEPFEAT_CACHE_DIR"); dir != nullptr && *dir != '\0') return dir;
  if (const char* xdg = std::getenv("XDG_CACHE_HOME"); xdg != nullptr && *xdg != '\0') {
    return std::filesystem::path(xdg) / "deepfeat";
  }
  if (const char* home = std::getenv("HOME"); home != nullptr && *home != '\0') {
    return std::filesystem::path(home) / ".cache" / "deepfeat";
  }
  return std::filesystem::temp_directory_path() / "deepfeat-cache";
}

void write_feature_cache(const std::filesystem::path& path, const Tensor<float>& features) {
  if (features.rank() != 2) throw DimensionError("feature cache expects a [count x dim] matrix");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  // Write to a sibling temp file and rename so readers never see a partial cache.
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write " + tmp.string());
    const auto count = static_cast<std::uint32_t>(features.dim(0));
    const auto dim = static_cast<std::uint32_t>(features.dim(1));
    out.write("FLC1", 4);
    out.write(reinterpret_cast<const char*>(&count), 4);
    out.write(reinterpret_cast<const char*>(&dim), 4);
    out.write(reinterpret_cast<const char*>(features.data()),
              static_cast<std::streamsize>(features.size() * sizeof(float)));
    if (!out) throw FormatError("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Tensor<float> read_feature_cache(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  char magic[4];
  std::uint32_t count = 0;
  std::uint32_t dim = 0;
  if (!in.read(magic, 4) || std::memcmp(magic, "FLC1", 4) != 0) throw FormatError(path.string() + ": bad FLC1 magic");
  if (!in.read(reinterpret_cast<char*>(&count), 4) || !in.read(reinterpret_cast<char*>(&dim), 4)) {
    throw FormatError(path.string() + ": truncated FLC1 header");
  }
  Tensor<float> out({count, dim});
  if (!in.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(out.size() * sizeof(float)))) {
    throw FormatError(path.string() + ": truncated FLC1 payload");
  }
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError(path.string() + ": trailing bytes after FLC1 payload");
  return out;
}

Tensor<float> cached_features(const LlmFeatureExtractor& extractor, const std::vector<std::vector<double>>& series,
                              const std::string& key, const std::filesystem::path& cache_dir, bool* hit) {
  const std::filesystem::path path = cache_dir / (key + ".flc");
  if (std::filesystem::exists(path)) {
    try {
      Tensor<float> cached = read_feature_cache(path);
      if (cached.dim(0) == series.size()) {
        if (hit != nullptr) *hit = true;
        return cached;
      }
    } catch (const FormatError&) {
      // fall through and rebuild a corrupt cache
    }
  }
  if (hit != nullptr) *hit = false;
  Tensor<float> features = extractor.features_batch(series);
  write_feature_cache(path, features);
  return features;
}

}  // namespace deepfeat::llm
