#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "deepfeat/common/rng.hpp"
#include "deepfeat/llm/gpt2.hpp"
#include "deepfeat/nn/tensor.hpp"

namespace deepfeat::testing {

inline std::filesystem::path fixture_dir() { return DEEPFEAT_FIXTURE_DIR; }

/// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("deepfeat-" + tag + "-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const noexcept { return path_; }
  std::filesystem::path operator/(const std::string& leaf) const { return path_ / leaf; }

 private:
  std::filesystem::path path_;
};

template <typename T>
nn::Tensor<T> random_tensor(const nn::Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  nn::Tensor<T> t(shape);
  for (T& v : t.values()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

/// A tiny transformer with the GPT-2 layout, for fast structural tests.
inline llm::Gpt2Config tiny_gpt2_config(std::size_t context = 64) {
  llm::Gpt2Config c;
  c.layers = 2;
  c.width = 64;
  c.heads = 4;
  c.context = context;
  return c;
}

}  // namespace deepfeat::testing
