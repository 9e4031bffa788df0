#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "verifuse/common.hpp"
#include "verifuse/csv.hpp"

namespace verifuse {

enum class FetchStatus { pending, ok, failed };

/// One news item: title, body, image reference and label. Raw records coming
/// out of load_manifest may have null fields; clean_dataset drops those.
struct NewsRecord {
  std::string id;
  std::optional<std::string> title;
  std::optional<std::string> body;
  std::optional<std::string> image_ref;
  std::optional<Label> label;
  Dataset dataset = Dataset::synthetic;

  // Filled by cleaning: title + ' ' + body (or the cleaned tweet).
  std::string text;

  // Filled by the fetch stage.
  FetchStatus fetch_status = FetchStatus::pending;
  std::string image_path;

  bool operator==(const NewsRecord&) const = default;
};

struct RowIssue {
  std::size_t line = 0;
  std::string message;
};

struct ManifestLoad {
  std::vector<NewsRecord> records;
  std::vector<RowIssue> issues;  // rows that will not survive cleaning
};

namespace detail {

struct ManifestSchema {
  std::string id, title, body, image, label;  // empty title => dataset has no title column
};

inline ManifestSchema schema_for(Dataset d) {
  if (d == Dataset::mediaeval) return {"post_id", "", "post_text", "image_id", "label"};
  return {"id", "title", "text", "image_url", "label"};
}

inline std::optional<std::string> non_empty(const std::string& s) {
  if (s.find_first_not_of(" \t\r\n") == std::string::npos) return std::nullopt;
  return s;
}

}  // namespace detail

/// Reads a dataset manifest CSV. One record per data row; cells that are
/// empty become null. Rows with the wrong field count or an unknown label are
/// kept (with the affected fields null) and reported in `issues`.
inline ManifestLoad load_manifest(const std::filesystem::path& path, Dataset dataset) {
  if (!std::filesystem::exists(path)) throw DataError("manifest not found: " + path.string());
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open manifest: " + path.string());
  auto rows = csv::parse(in);
  if (rows.empty()) throw DataError("manifest has no header row: " + path.string());

  const auto schema = detail::schema_for(dataset);
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < rows[0].fields.size(); ++i) {
    std::string name = rows[0].fields[i];
    name.erase(0, name.find_first_not_of(" \t"));
    name.erase(name.find_last_not_of(" \t") + 1);
    col.emplace(name, i);
  }
  auto require = [&](const std::string& name) -> std::size_t {
    if (name.empty()) return static_cast<std::size_t>(-1);
    auto it = col.find(name);
    if (it == col.end()) {
      throw DataError("manifest " + path.string() + " is missing required column '" + name + "' for dataset " +
                      std::string(to_string(dataset)));
    }
    return it->second;
  };
  const std::size_t c_id = require(schema.id);
  const std::size_t c_title = require(schema.title);
  const std::size_t c_body = require(schema.body);
  const std::size_t c_image = require(schema.image);
  const std::size_t c_label = require(schema.label);
  const std::size_t width = rows[0].fields.size();

  ManifestLoad out;
  out.records.reserve(rows.size() - 1);
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    NewsRecord rec;
    rec.dataset = dataset;
    if (row.fields.size() != width) {
      out.issues.push_back({row.line, "expected " + std::to_string(width) + " fields, found " +
                                          std::to_string(row.fields.size())});
    }
    auto cell = [&](std::size_t c) -> std::optional<std::string> {
      if (c == static_cast<std::size_t>(-1) || c >= row.fields.size()) return std::nullopt;
      return detail::non_empty(row.fields[c]);
    };
    rec.id = cell(c_id).value_or("");
    rec.title = dataset == Dataset::mediaeval ? std::optional<std::string>{""} : cell(c_title);
    rec.body = cell(c_body);
    rec.image_ref = cell(c_image);
    if (auto raw = cell(c_label)) {
      rec.label = parse_label(*raw);
      if (!rec.label) out.issues.push_back({row.line, "unrecognised label '" + *raw + "'"});
    } else {
      out.issues.push_back({row.line, "missing label"});
    }
    if (rec.id.empty()) out.issues.push_back({row.line, "missing id"});
    if (!rec.body) out.issues.push_back({row.line, "missing " + schema.body});
    if (!rec.image_ref) out.issues.push_back({row.line, "missing " + schema.image});
    if (!rec.title) out.issues.push_back({row.line, "missing " + schema.title});
    out.records.push_back(std::move(rec));
  }
  return out;
}

namespace detail {

inline bool is_emoji(char32_t c) {
  return (c >= 0x1F600 && c <= 0x1F64F)     // Emoticons
         || (c >= 0x1F300 && c <= 0x1F5FF)  // Misc Symbols and Pictographs
         || (c >= 0x1F680 && c <= 0x1F6FF)  // Transport and Map Symbols
         || (c >= 0x1F900 && c <= 0x1F9FF)  // Supplemental Symbols and Pictographs
         || (c >= 0x1F1E6 && c <= 0x1F1FF);  // Regional indicators (flags)
}

inline bool is_word_char(char32_t c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_';
}

inline bool starts_with_at(const std::u32string& s, std::size_t i, std::u32string_view prefix) {
  return s.compare(i, prefix.size(), prefix) == 0;
}

inline std::u32string strip_tweet_noise_once(const std::u32string& in) {
  std::u32string out;
  out.reserve(in.size());
  std::size_t i = 0;
  while (i < in.size()) {
    if (starts_with_at(in, i, U"http://") || starts_with_at(in, i, U"https://")) {
      while (i < in.size() && !utf8::is_ascii_space(in[i])) ++i;
      continue;
    }
    if (in[i] == U'@' && i + 1 < in.size() && is_word_char(in[i + 1])) {
      ++i;
      while (i < in.size() && is_word_char(in[i])) ++i;
      continue;
    }
    if (is_emoji(in[i])) {
      ++i;
      continue;
    }
    out.push_back(in[i++]);
  }
  return out;
}

inline std::u32string collapse_whitespace(const std::u32string& in) {
  std::u32string out;
  out.reserve(in.size());
  bool pending_space = false;
  for (char32_t c : in) {
    if (utf8::is_ascii_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(U' ');
    pending_space = false;
    out.push_back(c);
  }
  return out;
}

}  // namespace detail

/// Removes hyperlinks, @-mentions and emoji, collapses whitespace and trims.
/// Removal repeats until nothing changes, so e.g. a mention splitting a URL
/// ("http@x://...") cannot leave a URL behind.
inline std::string clean_tweet_text(std::string_view text) {
  std::u32string cur = utf8::decode(text);
  for (;;) {
    std::u32string next = detail::strip_tweet_noise_once(cur);
    if (next == cur) break;
    cur = std::move(next);
  }
  return utf8::encode(detail::collapse_whitespace(cur));
}

/// Drops records with null required fields, failed image fetches or a repeated
/// id; builds the text field. Input order is preserved.
inline std::vector<NewsRecord> clean_dataset(const std::vector<NewsRecord>& records) {
  std::vector<NewsRecord> out;
  out.reserve(records.size());
  std::unordered_set<std::string> seen;
  for (const auto& r : records) {
    if (r.id.empty() || !r.title || !r.body || !r.image_ref || !r.label) continue;
    if (r.fetch_status == FetchStatus::failed) continue;
    NewsRecord c = r;
    if (c.dataset == Dataset::mediaeval) {
      c.title = "";
      c.body = clean_tweet_text(*c.body);
      c.text = *c.body;
    } else {
      c.text = c.title->empty() ? *c.body : *c.title + " " + *c.body;
    }
    if (!seen.insert(c.id).second) continue;
    out.push_back(std::move(c));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

struct SplitManifest {
  std::uint64_t seed = 0;
  double train_ratio = 0.7, val_ratio = 0.1, test_ratio = 0.2;
  std::vector<std::string> train_ids, val_ids, test_ids;

  bool operator==(const SplitManifest&) const = default;
};

struct SplitSizes {
  std::size_t train, val, test;
};

/// floor(0.2n) test, floor(0.1n) validation, the remainder trains.
inline SplitSizes split_sizes(std::size_t n) {
  const std::size_t test = n / 5;
  const std::size_t val = n / 10;
  return {n - val - test, val, test};
}

inline SplitManifest split_dataset(const std::vector<NewsRecord>& records, std::uint64_t seed) {
  const std::size_t n = records.size();
  if (n < 10) throw InvalidArgument("split_dataset needs at least 10 records, got " + std::to_string(n));
  std::vector<std::string> ids;
  ids.reserve(n);
  for (const auto& r : records) ids.push_back(r.id);
  Rng rng(seed);
  rng.shuffle(ids);
  const auto sizes = split_sizes(n);
  SplitManifest m;
  m.seed = seed;
  m.test_ids.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(sizes.test));
  m.val_ids.assign(ids.begin() + static_cast<std::ptrdiff_t>(sizes.test),
                   ids.begin() + static_cast<std::ptrdiff_t>(sizes.test + sizes.val));
  m.train_ids.assign(ids.begin() + static_cast<std::ptrdiff_t>(sizes.test + sizes.val), ids.end());
  return m;
}

// ---------------------------------------------------------------------------
// Persistence: corpus.jsonl and splits.json
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json to_json(const NewsRecord& r) {
  nlohmann::ordered_json j;
  j["id"] = r.id;
  j["dataset"] = std::string(to_string(r.dataset));
  j["title"] = r.title ? nlohmann::ordered_json(*r.title) : nlohmann::ordered_json(nullptr);
  j["body"] = r.body ? nlohmann::ordered_json(*r.body) : nlohmann::ordered_json(nullptr);
  j["text"] = r.text;
  j["image_ref"] = r.image_ref ? nlohmann::ordered_json(*r.image_ref) : nlohmann::ordered_json(nullptr);
  j["image_path"] = r.image_path;
  j["label"] = r.label ? nlohmann::ordered_json(std::string(to_string(*r.label))) : nlohmann::ordered_json(nullptr);
  return j;
}

inline NewsRecord record_from_json(const nlohmann::json& j) {
  NewsRecord r;
  auto opt = [&](const char* key) -> std::optional<std::string> {
    if (!j.contains(key) || j[key].is_null()) return std::nullopt;
    return j[key].get<std::string>();
  };
  r.id = j.at("id").get<std::string>();
  r.dataset = parse_dataset(j.at("dataset").get<std::string>());
  r.title = opt("title");
  r.body = opt("body");
  r.text = j.value("text", "");
  r.image_ref = opt("image_ref");
  r.image_path = j.value("image_path", "");
  if (auto l = opt("label")) r.label = parse_label(*l);
  r.fetch_status = r.image_path.empty() ? FetchStatus::pending : FetchStatus::ok;
  return r;
}

/// One JSON object per line. An optional first line {"config_hash": ...}
/// tags the file with the run that produced it.
inline void write_corpus_jsonl(const std::filesystem::path& path, const std::vector<NewsRecord>& records,
                               const std::string& config_hash = {}) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  if (!config_hash.empty()) out << nlohmann::json{{"config_hash", config_hash}}.dump() << '\n';
  for (const auto& r : records) out << to_json(r).dump() << '\n';
}

inline std::vector<NewsRecord> read_corpus_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<NewsRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      if (j.contains("config_hash") && !j.contains("id")) continue;
      out.push_back(record_from_json(j));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

inline nlohmann::ordered_json to_json(const SplitManifest& m) {
  nlohmann::ordered_json j;
  j["seed"] = m.seed;
  j["ratios"] = {m.train_ratio, m.val_ratio, m.test_ratio};
  j["train_ids"] = m.train_ids;
  j["val_ids"] = m.val_ids;
  j["test_ids"] = m.test_ids;
  return j;
}

inline SplitManifest split_from_json(const nlohmann::json& j) {
  SplitManifest m;
  m.seed = j.at("seed").get<std::uint64_t>();
  const auto& r = j.at("ratios");
  m.train_ratio = r.at(0).get<double>();
  m.val_ratio = r.at(1).get<double>();
  m.test_ratio = r.at(2).get<double>();
  m.train_ids = j.at("train_ids").get<std::vector<std::string>>();
  m.val_ids = j.at("val_ids").get<std::vector<std::string>>();
  m.test_ids = j.at("test_ids").get<std::vector<std::string>>();
  return m;
}

}  // namespace verifuse
