#include <algorithm>
#include <fstream>

#include "doctest.h"
#include "support.hpp"

#include "deepfeat/common/error.hpp"
#include "deepfeat/llm/features.hpp"
#include "deepfeat/train/trainer.hpp"

using namespace deepfeat;
using namespace deepfeat::llm;
using deepfeat::testing::tiny_gpt2_config;

namespace {

const BpeTokenizer& tokenizer() {
  static const BpeTokenizer tok = BpeTokenizer::load_dir(train::bundled_vocab_dir());
  return tok;
}

const Gpt2Model& tiny_model() {
  static const Gpt2Model model(synthetic_gpt2_weights(4, tiny_gpt2_config(64)));
  return model;
}

}  // namespace

TEST_CASE("plan_windows") {
  SUBCASE("everything fits in one window") {
    const std::vector<std::size_t> ends{1, 2, 3};
    const auto w = plan_windows(ends, std::vector<std::size_t>{3}, 10);
    REQUIRE(w.size() == 1);
    CHECK(w[0].begin == 0);
    CHECK(w[0].end == 3);
  }
  SUBCASE("cuts fall on value boundaries") {
    // Tokens end at bytes 1..10; values end at 3, 6, 10.
    const std::vector<std::size_t> ends{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    const auto w = plan_windows(ends, std::vector<std::size_t>{3, 6, 10}, 5);
    REQUIRE(w.size() == 3);
    CHECK(w[0].end == 3);
    CHECK(w[1].begin == 3);
    CHECK(w[1].end == 6);
    CHECK(w[2].end == 10);
  }
  SUBCASE("hard cut when no boundary fits") {
    const std::vector<std::size_t> ends{1, 2, 3, 4, 5, 6};
    const auto w = plan_windows(ends, std::vector<std::size_t>{6}, 4);
    REQUIRE(w.size() == 2);
    CHECK(w[0].end == 4);
    CHECK(w[1].end == 6);
  }
  CHECK_THROWS_AS(plan_windows(std::vector<std::size_t>{1}, std::vector<std::size_t>{1}, 0), ArgumentError);
}

TEST_CASE("pool_rows is the mean over the concatenation") {
  const nn::Tensor<float> a({2, 2}, {1, 2, 3, 4});
  const nn::Tensor<float> b({1, 2}, {8, 0});
  const std::vector<nn::Tensor<float>> blocks{a, b};
  const auto p = pool_rows(blocks);
  CHECK(p[0] == doctest::Approx(4.0));
  CHECK(p[1] == doctest::Approx(2.0));
  CHECK_THROWS_AS(pool_rows(std::vector<nn::Tensor<float>>{}), ArgumentError);
}

TEST_CASE("single-token series gives that token's hidden state") {
  LlmFeatureConfig cfg;
  cfg.serialization.fractional_digits = 0;
  const LlmFeatureExtractor ex(tokenizer(), tiny_model(), cfg);
  const std::vector<double> series{7.0};
  const auto ids = ex.tokens(series);
  REQUIRE(ids.size() == 1);
  const auto f = ex.features(series);
  const auto h = tiny_model().forward(ids);
  REQUIRE(f.size() == 64);
  for (std::size_t i = 0; i < 64; ++i) CHECK(f[i] == h[i]);
}

TEST_CASE("windowed pooling equals the row-weighted mean of window means") {
  const LlmFeatureExtractor ex(tokenizer(), tiny_model());
  Rng rng(6);
  std::vector<double> series(40);
  for (double& v : series) v = rng.uniform(-50, 50);
  std::vector<TokenWindow> windows;
  const auto ids = ex.tokens(series, &windows);
  REQUIRE(ids.size() > 128);
  REQUIRE(windows.size() >= 3);

  const auto text = serialize_series_with_offsets(series, ex.config().serialization);
  std::size_t covered = 0, offset = 0;
  std::vector<double> acc(64, 0.0);
  for (std::size_t w = 0; w < windows.size(); ++w) {
    CHECK(windows[w].begin == covered);
    CHECK(windows[w].end - windows[w].begin <= 64);
    for (std::size_t t = windows[w].begin; t < windows[w].end; ++t) offset += tokenizer().token_bytes(ids[t]).size();
    if (w + 1 < windows.size()) {
      CHECK(std::find(text.value_ends.begin(), text.value_ends.end(), offset) != text.value_ends.end());
    }
    covered = windows[w].end;
    const auto h = tiny_model().forward(std::span<const TokenId>(ids).subspan(windows[w].begin, windows[w].end - windows[w].begin));
    // mean of the window, weighted by its row count
    for (std::size_t j = 0; j < 64; ++j) {
      double m = 0;
      for (std::size_t r = 0; r < h.dim(0); ++r) m += h(r, j);
      acc[j] += m;
    }
  }
  CHECK(covered == ids.size());
  const auto f = ex.features(series);
  for (std::size_t j = 0; j < 64; ++j) CHECK(std::abs(f[j] - acc[j] / static_cast<double>(ids.size())) < 1e-6);
}

TEST_CASE("features are finite and deterministic") {
  const LlmFeatureExtractor ex(tokenizer(), tiny_model());
  const std::vector<std::vector<double>> rows{{1, 1, 1, 1}, {0.5, -2, 3}, {100}};
  const auto m = ex.features_batch(rows);
  CHECK(m.shape() == nn::Shape{3, 64});
  CHECK(m.all_finite());
  CHECK(ex.features_batch(rows) == m);
}

TEST_CASE("fine-tuning flag is rejected") {
  LlmFeatureConfig cfg;
  cfg.fine_tune = true;
  CHECK_THROWS_AS(LlmFeatureExtractor(tokenizer(), tiny_model(), cfg), ArgumentError);
}

TEST_CASE("feature cache") {
  testing::TempDir dir("flc");
  const nn::Tensor<float> m({2, 3}, {1, 2, 3, 4, 5, 6});
  write_feature_cache(dir / "a.flc", m);
  CHECK(read_feature_cache(dir / "a.flc") == m);
  CHECK(std::filesystem::file_size(dir / "a.flc") == 12 + 6 * 4);

  SUBCASE("corrupt files are rejected") {
    std::ofstream(dir / "bad.flc", std::ios::binary) << "FLC2xxxxxxxx";
    CHECK_THROWS_AS(read_feature_cache(dir / "bad.flc"), FormatError);
    std::filesystem::resize_file(dir / "a.flc", 20);
    CHECK_THROWS_AS(read_feature_cache(dir / "a.flc"), FormatError);
  }
  SUBCASE("keys depend on values, config and weights") {
    const std::vector<std::vector<double>> s{{1, 2}, {3}};
    const std::vector<std::vector<double>> t{{1, 2}, {3.0000001}};
    const auto k = feature_cache_key(s, {}, 1);
    CHECK(k.rfind("flc-", 0) == 0);
    CHECK(k == feature_cache_key(s, {}, 1));
    CHECK(k != feature_cache_key(t, {}, 1));
    CHECK(k != feature_cache_key(s, {2, ", "}, 1));
    CHECK(k != feature_cache_key(s, {}, 2));
  }
  SUBCASE("cached_features computes once then hits") {
    const LlmFeatureExtractor ex(tokenizer(), tiny_model());
    const std::vector<std::vector<double>> rows{{1.5, 2.5}, {3}};
    bool hit = true;
    const auto first = cached_features(ex, rows, "k1", dir.path(), &hit);
    CHECK_FALSE(hit);
    const auto second = cached_features(ex, rows, "k1", dir.path(), &hit);
    CHECK(hit);
    CHECK(first == second);
  }
}

TEST_CASE("weights fingerprint separates seeds") {
  const auto a = synthetic_gpt2_weights(1, tiny_gpt2_config());
  const auto b = synthetic_gpt2_weights(2, tiny_gpt2_config());
  CHECK(weights_fingerprint(a) == weights_fingerprint(a));
  CHECK(weights_fingerprint(a) != weights_fingerprint(b));
}
