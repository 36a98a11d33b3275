#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "deepfeat/nn/tensor.hpp"

namespace deepfeat::io {

/// Flat little-endian tensor container:
///   "TSAR" | u32 version (1) | u32 count |
///   count x { u32 name_len | name (UTF-8) | u8 dtype (1 = f32) | u32 rank | rank x u64 dim | f32 payload }
class TensorArchive {
 public:
  static constexpr std::uint32_t kVersion = 1;
  static constexpr std::uint8_t kDtypeF32 = 1;

  /// Throws FormatError on a malformed or truncated file.
  static TensorArchive read(const std::filesystem::path& path);
  void write(const std::filesystem::path& path) const;

  /// Throws ArgumentError if `name` already exists.
  void add(const std::string& name, nn::Tensor<float> tensor);
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  /// Throws FormatError if absent.
  const nn::Tensor<float>& get(const std::string& name) const;
  /// Moves a tensor out of the archive and drops its name.
  nn::Tensor<float> take(const std::string& name);

  /// Names in insertion (file) order.
  const std::vector<std::string>& names() const noexcept { return names_; }
  std::size_t size() const noexcept { return names_.size(); }

 private:
  std::vector<std::string> names_;
  std::vector<nn::Tensor<float>> tensors_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace deepfeat::io
