#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "verifuse/common.hpp"

namespace verifuse {

enum class TokenizeMode { wordpiece, char_level };

/// Token vocabulary. Files are one token per line, id = line index (the
/// BERT vocab.txt layout). Vocabularies whose pieces mark word starts with
/// U+2581 (SentencePiece exports, e.g. ALBERT) are matched the same greedy
/// way with that marker instead of the "##" continuation prefix.
class Vocabulary {
 public:
  Vocabulary() = default;

  explicit Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    for (std::size_t i = 0; i < tokens_.size(); ++i) index_.emplace(tokens_[i], static_cast<std::int32_t>(i));
    pad_ = find_any({"[PAD]", "<pad>"});
    unk_ = find_any({"[UNK]", "<unk>"});
    cls_ = find_any({"[CLS]", "<cls>"});
    sep_ = find_any({"[SEP]", "<sep>"});
    if (pad_ < 0 || unk_ < 0 || cls_ < 0 || sep_ < 0) {
      throw DataError("vocabulary lacks one of the special tokens [PAD] [UNK] [CLS] [SEP]");
    }
    for (const auto& t : tokens_) {
      if (t.rfind(kWordStart, 0) == 0) {
        sentencepiece_ = true;
        break;
      }
    }
  }

  static Vocabulary load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open vocabulary " + path.string());
    std::vector<std::string> tokens;
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      tokens.push_back(line);
    }
    return Vocabulary(std::move(tokens));
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    for (const auto& t : tokens_) out << t << '\n';
  }

  std::int32_t id(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? unk_ : it->second;
  }
  bool contains(const std::string& token) const { return index_.count(token) != 0; }
  const std::string& token(std::int32_t id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::int32_t pad_id() const { return pad_; }
  std::int32_t unk_id() const { return unk_; }
  std::int32_t cls_id() const { return cls_; }
  std::int32_t sep_id() const { return sep_; }
  bool sentencepiece() const { return sentencepiece_; }
  bool is_special(std::int32_t id) const { return id == pad_ || id == unk_ || id == cls_ || id == sep_; }

  static constexpr const char* kWordStart = "\xE2\x96\x81";  // U+2581

 private:
  std::int32_t find_any(std::initializer_list<const char*> names) const {
    for (const char* n : names) {
      auto it = index_.find(n);
      if (it != index_.end()) return it->second;
    }
    return -1;
  }

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::int32_t> index_;
  std::int32_t pad_ = -1, unk_ = -1, cls_ = -1, sep_ = -1;
  bool sentencepiece_ = false;
};

/// input_ids / input_mask / segment_ids triplet at a fixed length.
struct TokenizedText {
  std::vector<std::int32_t> input_ids;
  std::vector<std::int32_t> input_mask;
  std::vector<std::int32_t> segment_ids;

  std::size_t max_len() const { return input_ids.size(); }
  std::size_t length() const {
    return static_cast<std::size_t>(std::count(input_mask.begin(), input_mask.end(), 1));
  }
  bool operator==(const TokenizedText&) const = default;
};

namespace detail {

inline bool is_cjk(char32_t c) {
  return (c >= 0x4E00 && c <= 0x9FFF) || (c >= 0x3400 && c <= 0x4DBF) || (c >= 0x20000 && c <= 0x2A6DF) ||
         (c >= 0x2A700 && c <= 0x2B73F) || (c >= 0x2B740 && c <= 0x2B81F) || (c >= 0x2B820 && c <= 0x2CEAF) ||
         (c >= 0xF900 && c <= 0xFAFF) || (c >= 0x2F800 && c <= 0x2FA1F);
}

inline bool is_punct(char32_t c) {
  if ((c >= 33 && c <= 47) || (c >= 58 && c <= 64) || (c >= 91 && c <= 96) || (c >= 123 && c <= 126)) return true;
  return (c >= 0x2000 && c <= 0x206F)     // General Punctuation
         || (c >= 0x3000 && c <= 0x303F)  // CJK Symbols and Punctuation
         || (c >= 0xFF00 && c <= 0xFF0F) || (c >= 0xFF1A && c <= 0xFF20);
}

inline bool is_space(char32_t c) { return utf8::is_ascii_space(c) || c == 0x00A0 || c == 0x3000; }

inline char32_t ascii_lower(char32_t c) { return (c >= 'A' && c <= 'Z') ? c - 'A' + 'a' : c; }

}  // namespace detail

/// Whitespace split, ASCII lower-casing, punctuation and CJK characters
/// isolated as their own words.
inline std::vector<std::string> basic_tokenize(std::string_view text) {
  std::vector<std::string> words;
  std::u32string cur;
  auto flush = [&] {
    if (!cur.empty()) words.push_back(utf8::encode(cur));
    cur.clear();
  };
  for (char32_t c : utf8::decode(text)) {
    if (c == 0 || (c < 0x20 && !detail::is_space(c))) continue;
    if (detail::is_space(c)) {
      flush();
    } else if (detail::is_punct(c) || detail::is_cjk(c)) {
      flush();
      words.push_back(utf8::encode(std::u32string(1, detail::ascii_lower(c))));
    } else {
      cur.push_back(detail::ascii_lower(c));
    }
  }
  flush();
  return words;
}

/// Greedy longest-match-first sub-word split of one word; a word with no
/// complete cover becomes a single [UNK].
inline std::vector<std::int32_t> wordpiece(const std::string& word, const Vocabulary& vocab) {
  constexpr std::size_t kMaxChars = 100;
  const std::u32string cps = utf8::decode(word);
  if (cps.size() > kMaxChars) return {vocab.unk_id()};
  std::vector<std::int32_t> out;
  std::size_t start = 0;
  while (start < cps.size()) {
    std::size_t end = cps.size();
    std::int32_t found = -1;
    while (start < end) {
      std::string piece = utf8::encode(cps.substr(start, end - start));
      if (vocab.sentencepiece()) {
        if (start == 0) piece = Vocabulary::kWordStart + piece;
      } else if (start > 0) {
        piece = "##" + piece;
      }
      if (vocab.contains(piece)) {
        found = vocab.id(piece);
        break;
      }
      --end;
    }
    if (found < 0) return {vocab.unk_id()};
    out.push_back(found);
    start = end;
  }
  return out;
}

/// Body ids of `text` without framing or padding.
inline std::vector<std::int32_t> tokenize_body(std::string_view text, TokenizeMode mode, const Vocabulary& vocab) {
  std::vector<std::int32_t> body;
  if (mode == TokenizeMode::char_level) {
    for (char32_t c : utf8::decode(text)) {
      if (detail::is_space(c) || c == 0 || c < 0x20) continue;
      body.push_back(vocab.id(utf8::encode(std::u32string(1, detail::ascii_lower(c)))));
    }
    return body;
  }
  for (const auto& w : basic_tokenize(text)) {
    auto pieces = wordpiece(w, vocab);
    body.insert(body.end(), pieces.begin(), pieces.end());
  }
  return body;
}

/// [CLS] body [SEP] [PAD]...; the body keeps its head when longer than
/// max_len - 2. Segment ids are all zero (single segment).
inline TokenizedText tokenize_text(std::string_view text, std::size_t max_len, TokenizeMode mode,
                                   const Vocabulary& vocab) {
  if (max_len < 3) throw InvalidArgument("tokenize_text: max_len must be >= 3");
  auto body = tokenize_body(text, mode, vocab);
  if (body.size() > max_len - 2) body.resize(max_len - 2);
  TokenizedText t;
  t.input_ids.assign(max_len, vocab.pad_id());
  t.input_mask.assign(max_len, 0);
  t.segment_ids.assign(max_len, 0);
  t.input_ids[0] = vocab.cls_id();
  std::copy(body.begin(), body.end(), t.input_ids.begin() + 1);
  t.input_ids[body.size() + 1] = vocab.sep_id();
  std::fill(t.input_mask.begin(), t.input_mask.begin() + static_cast<std::ptrdiff_t>(body.size() + 2), 1);
  return t;
}

/// Reassembles body ids (specials and padding skipped) into text that
/// tokenizes back to the same ids for in-vocabulary input.
inline std::string detokenize(const std::vector<std::int32_t>& ids, TokenizeMode mode, const Vocabulary& vocab) {
  std::string out;
  for (auto id : ids) {
    if (vocab.is_special(id)) continue;
    const std::string& tok = vocab.token(id);
    if (mode == TokenizeMode::char_level) {
      if (!out.empty()) out.push_back(' ');
      out += tok;
    } else if (vocab.sentencepiece()) {
      if (tok.rfind(Vocabulary::kWordStart, 0) == 0) {
        if (!out.empty()) out.push_back(' ');
        out += tok.substr(3);
      } else {
        out += tok;
      }
    } else if (tok.rfind("##", 0) == 0) {
      out += tok.substr(2);
    } else {
      if (!out.empty()) out.push_back(' ');
      out += tok;
    }
  }
  return out;
}

/// Builds a whole-word (or per-character) vocabulary from a corpus, most
/// frequent first with ties broken lexicographically, special tokens at ids
/// 0..4. Used when no pretrained vocabulary file is configured.
inline Vocabulary build_vocabulary(const std::vector<std::string>& texts, TokenizeMode mode,
                                   std::size_t max_size = 30000) {
  std::map<std::string, std::size_t> freq;
  for (const auto& t : texts) {
    if (mode == TokenizeMode::char_level) {
      for (char32_t c : utf8::decode(t)) {
        if (detail::is_space(c) || c < 0x20) continue;
        ++freq[utf8::encode(std::u32string(1, detail::ascii_lower(c)))];
      }
    } else {
      for (const auto& w : basic_tokenize(t)) {
        if (utf8::decode(w).size() <= 100) ++freq[w];
      }
    }
  }
  std::vector<std::string> specials{"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"};
  std::vector<std::pair<std::string, std::size_t>> entries;
  for (auto& [w, n] : freq) {
    if (std::find(specials.begin(), specials.end(), w) == specials.end()) entries.emplace_back(w, n);
  }
  std::stable_sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> tokens = specials;
  for (const auto& [w, n] : entries) {
    if (tokens.size() >= max_size) break;
    tokens.push_back(w);
  }
  return Vocabulary(std::move(tokens));
}

}  // namespace verifuse
