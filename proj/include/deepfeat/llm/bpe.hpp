#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace deepfeat::llm {

using TokenId = std::uint32_t;

/// GPT-2 byte-to-unicode table: printable Latin-1 bytes map to themselves,
/// the remaining 68 bytes to U+0100 onwards. Entries are UTF-8 encoded.
const std::array<std::string, 256>& byte_to_unicode();

/// Pre-tokenizer equivalent to the GPT-2 pattern
///   's|'t|'re|'ve|'m|'ll|'d| ?\p{L}+| ?\p{N}+| ?[^\s\p{L}\p{N}]+|\s+(?!\S)|\s+
/// Returns the pieces as views into `text`.
std::vector<std::string_view> pretokenize(std::string_view text);

/// Byte-level BPE over a published vocab.json / merges.txt pair.
class BpeTokenizer {
 public:
  static BpeTokenizer load(const std::filesystem::path& vocab_json, const std::filesystem::path& merges_txt);
  /// Loads vocab.json and merges.txt from one directory.
  static BpeTokenizer load_dir(const std::filesystem::path& dir);

  std::vector<TokenId> encode(std::string_view text) const;
  /// Throws ArgumentError on an id outside the vocabulary.
  std::string decode(const std::vector<TokenId>& ids) const;
  /// Raw bytes of a single token.
  const std::string& token_bytes(TokenId id) const;

  std::size_t vocab_size() const noexcept { return id_to_bytes_.size(); }
  std::size_t merge_count() const noexcept { return merge_ranks_.size(); }

 private:
  void bpe(std::string_view piece, std::vector<TokenId>& out) const;

  std::unordered_map<std::string, TokenId> token_to_id_;  // byte-to-unicode encoded token text
  std::vector<std::string> id_to_bytes_;                  // decoded raw bytes
  std::unordered_map<std::string, std::uint32_t> merge_ranks_;  // "left right" -> rank
};

}  // namespace deepfeat::llm
