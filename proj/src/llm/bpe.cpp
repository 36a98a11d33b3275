#include "deepfeat/llm/bpe.hpp"

#include <unicode/uchar.h>

#include <fstream>
#include <limits>
#include <sstream>

#include "json.hpp"

#include "deepfeat/common/error.hpp"

namespace deepfeat::llm {

namespace {

void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out += static_cast<char>(cp);
  } else if (cp < 0x800) {
    out += static_cast<char>(0xC0 | (cp >> 6));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else if (cp < 0x10000) {
    out += static_cast<char>(0xE0 | (cp >> 12));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else {
    out += static_cast<char>(0xF0 | (cp >> 18));
    out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  }
}

struct CodePoint {
  char32_t value;
  std::size_t offset;
  std::size_t length;
};

// Malformed sequences decode byte-by-byte to U+FFFD so that no input byte is lost.
std::vector<CodePoint> decode_utf8(std::string_view s) {
  std::vector<CodePoint> out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    std::size_t len = 0;
    char32_t cp = 0;
    if (b0 < 0x80) {
      len = 1;
      cp = b0;
    } else if ((b0 & 0xE0) == 0xC0) {
      len = 2;
      cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
      len = 3;
      cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
      len = 4;
      cp = b0 & 0x07;
    }
    bool ok = len > 0 && i + len <= s.size();
    for (std::size_t k = 1; ok && k < len; ++k) {
      const auto b = static_cast<unsigned char>(s[i + k]);
      if ((b & 0xC0) != 0x80) ok = false;
      cp = (cp << 6) | (b & 0x3F);
    }
    if (!ok) {
      out.push_back({0xFFFD, i, 1});
      ++i;
    } else {
      out.push_back({cp, i, len});
      i += len;
    }
  }
  return out;
}

bool is_letter(char32_t c) { return (U_GET_GC_MASK(static_cast<UChar32>(c)) & U_GC_L_MASK) != 0; }
bool is_number(char32_t c) { return (U_GET_GC_MASK(static_cast<UChar32>(c)) & U_GC_N_MASK) != 0; }
bool is_space(char32_t c) {
  return (c >= 0x09 && c <= 0x0D) || (c >= 0x1C && c <= 0x1F) || u_isUWhiteSpace(static_cast<UChar32>(c));
}

enum class CharClass { Letter, Number, Space, Other };

CharClass classify(char32_t c) {
  if (is_space(c)) return CharClass::Space;
  if (is_letter(c)) return CharClass::Letter;
  if (is_number(c)) return CharClass::Number;
  return CharClass::Other;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

const std::array<std::string, 256>& byte_to_unicode() {
  static const std::array<std::string, 256> table = [] {
    std::array<std::string, 256> t;
    char32_t next = 256;
    for (int b = 0; b < 256; ++b) {
      const bool printable = (b >= '!' && b <= '~') || (b >= 0xA1 && b <= 0xAC) || (b >= 0xAE && b <= 0xFF);
      append_utf8(t[static_cast<std::size_t>(b)], printable ? static_cast<char32_t>(b) : next++);
    }
    return t;
  }();
  return table;
}

std::vector<std::string_view> pretokenize(std::string_view text) {
  const std::vector<CodePoint> cps = decode_utf8(text);
  const std::size_t n = cps.size();
  std::vector<std::string_view> pieces;
  auto emit = [&](std::size_t from, std::size_t to) {
    const std::size_t begin = cps[from].offset;
    const std::size_t end = to < n ? cps[to].offset : text.size();
    pieces.push_back(text.substr(begin, end - begin));
  };
  auto ascii_at = [&](std::size_t k) -> char32_t { return k < n ? cps[k].value : 0; };

  std::size_t i = 0;
  while (i < n) {
    const char32_t c = cps[i].value;

    if (c == U'\'') {
      static constexpr std::u32string_view kSuffixes[] = {U"s", U"t", U"re", U"ve", U"m", U"ll", U"d"};
      bool matched = false;
      for (auto suffix : kSuffixes) {
        bool ok = true;
        for (std::size_t k = 0; k < suffix.size() && ok; ++k) ok = ascii_at(i + 1 + k) == suffix[k];
        if (ok) {
          emit(i, i + 1 + suffix.size());
          i += 1 + suffix.size();
          matched = true;
          break;
        }
      }
      if (matched) continue;
    }

    // ` ?\p{L}+`, ` ?\p{N}+`, ` ?[^\s\p{L}\p{N}]+`
    std::size_t run_start = i;
    if (c == U' ' && i + 1 < n && classify(cps[i + 1].value) != CharClass::Space) run_start = i + 1;
    const CharClass cls = classify(cps[run_start].value);
    if (cls != CharClass::Space) {
      std::size_t j = run_start + 1;
      while (j < n && classify(cps[j].value) == cls) ++j;
      emit(i, j);
      i = j;
      continue;
    }

    // `\s+(?!\S)` then `\s+`
    std::size_t j = i;
    while (j < n && is_space(cps[j].value)) ++j;
    if (j < n && j - i > 1) j -= 1;
    emit(i, j);
    i = j;
  }
  return pieces;
}

BpeTokenizer BpeTokenizer::load(const std::filesystem::path& vocab_json, const std::filesystem::path& merges_txt) {
  BpeTokenizer tok;

  std::unordered_map<std::string, unsigned char> unicode_to_byte;
  const auto& table = byte_to_unicode();
  for (int b = 0; b < 256; ++b) unicode_to_byte.emplace(table[static_cast<std::size_t>(b)], static_cast<unsigned char>(b));

  nlohmann::json vocab;
  try {
    vocab = nlohmann::json::parse(read_file(vocab_json));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(vocab_json.string() + ": " + e.what());
  }
  if (!vocab.is_object()) throw FormatError(vocab_json.string() + ": expected a JSON object");
  tok.id_to_bytes_.assign(vocab.size(), std::string());
  std::vector<bool> seen(vocab.size(), false);
  for (auto it = vocab.begin(); it != vocab.end(); ++it) {
    const auto id = it.value().get<std::int64_t>();
    if (id < 0 || static_cast<std::size_t>(id) >= vocab.size() || seen[static_cast<std::size_t>(id)]) {
      throw FormatError(vocab_json.string() + ": ids are not a bijection onto [0, " + std::to_string(vocab.size()) + ")");
    }
    seen[static_cast<std::size_t>(id)] = true;
    const std::string& key = it.key();
    std::string bytes;
    for (const auto& cp : decode_utf8(key)) {
      std::string ch = key.substr(cp.offset, cp.length);
      const auto found = unicode_to_byte.find(ch);
      if (found == unicode_to_byte.end()) throw FormatError(vocab_json.string() + ": token outside the byte alphabet");
      bytes += static_cast<char>(found->second);
    }
    tok.id_to_bytes_[static_cast<std::size_t>(id)] = std::move(bytes);
    tok.token_to_id_.emplace(key, static_cast<TokenId>(id));
  }

  std::istringstream merges(read_file(merges_txt));
  std::string line;
  std::uint32_t rank = 0;
  while (std::getline(merges, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.rfind("#version", 0) == 0) continue;
    const auto space = line.find(' ');
    if (space == std::string::npos || space == 0 || space + 1 == line.size()) {
      throw FormatError(merges_txt.string() + ": malformed merge '" + line + "'");
    }
    tok.merge_ranks_.emplace(line, rank++);
  }
  return tok;
}

BpeTokenizer BpeTokenizer::load_dir(const std::filesystem::path& dir) {
  return load(dir / "vocab.json", dir / "merges.txt");
}

void BpeTokenizer::bpe(std::string_view piece, std::vector<TokenId>& out) const {
  const auto& table = byte_to_unicode();
  std::vector<std::string> word;
  word.reserve(piece.size());
  for (unsigned char b : piece) word.push_back(table[b]);

  std::string key;
  while (word.size() > 1) {
    std::uint32_t best = std::numeric_limits<std::uint32_t>::max();
    std::size_t best_at = 0;
    for (std::size_t i = 0; i + 1 < word.size(); ++i) {
      key.assign(word[i]).append(" ").append(word[i + 1]);
      const auto it = merge_ranks_.find(key);
      if (it != merge_ranks_.end() && it->second < best) {
        best = it->second;
        best_at = i;
      }
    }
    if (best == std::numeric_limits<std::uint32_t>::max()) break;
    const std::string first = word[best_at];
    const std::string second = word[best_at + 1];
    std::vector<std::string> merged;
    merged.reserve(word.size());
    for (std::size_t i = 0; i < word.size();) {
      if (i + 1 < word.size() && word[i] == first && word[i + 1] == second) {
        merged.push_back(first + second);
        i += 2;
      } else {
        merged.push_back(std::move(word[i]));
        ++i;
      }
    }
    word = std::move(merged);
  }
  for (const auto& sym : word) {
    const auto it = token_to_id_.find(sym);
    if (it == token_to_id_.end()) throw FormatError("BPE produced a symbol missing from the vocabulary");
    out.push_back(it->second);
  }
}

std::vector<TokenId> BpeTokenizer::encode(std::string_view text) const {
  std::vector<TokenId> ids;
  std::unordered_map<std::string_view, std::vector<TokenId>> cache;
  for (std::string_view piece : pretokenize(text)) {
    auto it = cache.find(piece);
    if (it == cache.end()) {
      std::vector<TokenId> part;
      bpe(piece, part);
      it = cache.emplace(piece, std::move(part)).first;
    }
    ids.insert(ids.end(), it->second.begin(), it->second.end());
  }
  return ids;
}

const std::string& BpeTokenizer::token_bytes(TokenId id) const {
  if (id >= id_to_bytes_.size()) {
    throw ArgumentError("token id " + std::to_string(id) + " outside vocabulary of " +
                        std::to_string(id_to_bytes_.size()));
  }
  return id_to_bytes_[id];
}

std::string BpeTokenizer::decode(const std::vector<TokenId>& ids) const {
  std::string out;
  for (TokenId id : ids) out += token_bytes(id);
  return out;
}

}  // namespace deepfeat::llm
