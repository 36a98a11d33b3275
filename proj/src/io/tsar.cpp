#include "deepfeat/io/tsar.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "deepfeat/common/error.hpp"

namespace deepfeat::io {

static_assert(std::endian::native == std::endian::little, "TSAR I/O assumes a little-endian host");

namespace {

template <typename U>
void put(std::ofstream& out, U v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(U));
}

template <typename U>
U get_pod(std::ifstream& in, const std::filesystem::path& path) {
  U v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(U))) throw FormatError(path.string() + ": truncated TSAR file");
  return v;
}

}  // namespace

TensorArchive TensorArchive::read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "TSAR", 4) != 0) throw FormatError(path.string() + ": bad TSAR magic");
  const auto version = get_pod<std::uint32_t>(in, path);
  if (version != kVersion) throw FormatError(path.string() + ": unsupported TSAR version " + std::to_string(version));
  const auto count = get_pod<std::uint32_t>(in, path);

  TensorArchive ar;
  for (std::uint32_t t = 0; t < count; ++t) {
    const auto name_len = get_pod<std::uint32_t>(in, path);
    if (name_len > (1u << 16)) throw FormatError(path.string() + ": implausible tensor name length");
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) throw FormatError(path.string() + ": truncated tensor name");
    const auto dtype = get_pod<std::uint8_t>(in, path);
    if (dtype != kDtypeF32) throw FormatError(path.string() + ": tensor " + name + " has unsupported dtype");
    const auto rank = get_pod<std::uint32_t>(in, path);
    if (rank > 16) throw FormatError(path.string() + ": tensor " + name + " has implausible rank");
    nn::Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(get_pod<std::uint64_t>(in, path));
    nn::Tensor<float> tensor(shape);
    if (!in.read(reinterpret_cast<char*>(tensor.data()), static_cast<std::streamsize>(tensor.size() * sizeof(float)))) {
      throw FormatError(path.string() + ": truncated payload for " + name);
    }
    if (ar.contains(name)) throw FormatError(path.string() + ": duplicate tensor name " + name);
    ar.add(name, std::move(tensor));
  }
  return ar;
}

void TensorArchive::write(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write("TSAR", 4);
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(names_.size()));
  for (std::size_t i = 0; i < names_.size(); ++i) {
    const auto& name = names_[i];
    const auto& t = tensors_[i];
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint8_t>(out, kDtypeF32);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) put<std::uint64_t>(out, d);
    out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float)));
  }
  if (!out) throw FormatError("failed writing " + path.string());
}

void TensorArchive::add(const std::string& name, nn::Tensor<float> tensor) {
  if (contains(name)) throw ArgumentError("duplicate tensor name " + name);
  index_.emplace(name, names_.size());
  names_.push_back(name);
  tensors_.push_back(std::move(tensor));
}

const nn::Tensor<float>& TensorArchive::get(const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw FormatError("tensor archive has no tensor named " + name);
  return tensors_[it->second];
}

nn::Tensor<float> TensorArchive::take(const std::string& name) {
  const auto it = index_.find(name);
  if (it == index_.end()) throw FormatError("tensor archive has no tensor named " + name);
  const std::size_t pos = it->second;
  nn::Tensor<float> out = std::move(tensors_[pos]);
  tensors_.erase(tensors_.begin() + static_cast<std::ptrdiff_t>(pos));
  names_.erase(names_.begin() + static_cast<std::ptrdiff_t>(pos));
  index_.clear();
  for (std::size_t i = 0; i < names_.size(); ++i) index_.emplace(names_[i], i);
  return out;
}

}  // namespace deepfeat::io
