#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "verifuse/common.hpp"
#include "verifuse/encoder_hub.hpp"
#include "verifuse/fetch.hpp"
#include "verifuse/fusion.hpp"
#include "verifuse/tokenizer.hpp"
#include "verifuse/training.hpp"

namespace verifuse {

inline constexpr const char* kCacheDirEnv = "VERIFUSE_CACHE_DIR";
inline constexpr const char* kModelDirEnv = "VERIFUSE_MODEL_DIR";

/// Every key a run configuration may carry, with its default. Config files
/// and `--key value` overrides are validated against this object.
inline nlohmann::ordered_json default_config_json() {
  using nlohmann::ordered_json;
  return ordered_json{
      {"dataset", "synthetic"},
      {"manifest", ""},
      {"image_root", ""},
      {"cache_dir", ""},
      {"output_dir", "verifuse_run"},
      {"model_dir", ""},
      {"vocab", ""},
      {"text_encoder", "stub_text"},
      {"image_encoder", "stub_image"},
      {"fusion", "early"},
      {"seed", 42},
      {"max_seq_len", 0},
      {"learning_rate", 1e-4},
      {"beta1", 0.9},
      {"beta2", 0.980},
      {"epochs", 30},
      {"batch_size", 128},
      {"dropout", 0.4},
      {"late_weights", ordered_json::array({0.5, 0.5})},
      {"sweep_weights", ordered_json::array({ordered_json::array({0.4, 0.6}), ordered_json::array({0.5, 0.5}),
                                             ordered_json::array({0.6, 0.4}), ordered_json::array({0.7, 0.3})})},
      {"fetch_workers", 4},
      {"fetch_timeout_s", 10.0},
      {"fetch_retries", 2},
      {"extract_batch_size", 32},
      {"stub_text", {{"seed", 7}, {"vocab_size", 0}, {"d_model", 64}, {"h", 4}, {"layers", 2}, {"out_dim", 768}}},
      {"stub_image", {{"seed", 11}, {"out_dim", 1536}, {"range", ordered_json::array({-1.0, 1.0})}}},
  };
}

// Locations, not semantics: left out of the config hash.
inline const std::vector<std::string>& path_keys() {
  static const std::vector<std::string> k{"manifest", "image_root", "cache_dir", "output_dir",
                                          "model_dir", "vocab", "fetch_workers"};
  return k;
}

struct RunConfig {
  nlohmann::ordered_json raw;

  Dataset dataset = Dataset::synthetic;
  std::filesystem::path manifest, image_root, cache_dir, output_dir, model_dir, vocab;
  Backend text_backend = Backend::stub_text;
  Backend image_backend = Backend::stub_image;
  FusionKind fusion = FusionKind::early;
  std::uint64_t seed = 42;
  std::size_t max_seq_len = 0;
  TrainConfig train;
  FusionWeights late_weights{0.5, 0.5};
  std::vector<FusionWeights> sweep_weights;
  int fetch_workers = 4;
  FetchPolicy fetch;
  std::size_t extract_batch_size = 32;
  StubTextSpec stub_text;
  StubImageSpec stub_image;

  /// Maximum sequence length actually used: the configured one, or the
  /// per-dataset default.
  std::size_t seq_len() const {
    if (max_seq_len > 0) return max_seq_len;
    switch (dataset) {
      case Dataset::all_data: return 512;
      case Dataset::weibo: return 400;
      case Dataset::mediaeval: return 20;
      case Dataset::synthetic: return 64;
    }
    return 64;
  }
  TokenizeMode tokenize_mode() const {
    return dataset == Dataset::weibo ? TokenizeMode::char_level : TokenizeMode::wordpiece;
  }

  EncoderSpec text_spec() const {
    EncoderSpec s = make_encoder_spec(text_backend, model_dir);
    s.stub_text = stub_text;
    if (text_backend == Backend::stub_text) s.out_dim = stub_text.out_dim;
    return s;
  }
  EncoderSpec image_spec() const {
    EncoderSpec s = make_encoder_spec(image_backend, model_dir);
    s.stub_image = stub_image;
    if (image_backend == Backend::stub_image) {
      s.out_dim = stub_image.out_dim;
      s.input_norm = stub_image.input_range;
    }
    return s;
  }

  /// SHA-256 over the canonical dump of every non-path key, first 16 hex digits.
  std::string hash() const {
    nlohmann::json j = raw;
    for (const auto& k : path_keys()) j.erase(k);
    return sha256_hex(j.dump()).substr(0, 16);
  }
};

namespace detail {

inline void merge_checked(nlohmann::ordered_json& base, const nlohmann::json& over, const std::string& prefix) {
  if (!over.is_object()) throw ConfigError("config " + (prefix.empty() ? std::string("root") : prefix) + " must be an object");
  for (auto it = over.begin(); it != over.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!base.contains(it.key())) throw ConfigError("unknown config key '" + key + "'");
    auto& slot = base[it.key()];
    if (slot.is_object()) {
      merge_checked(slot, it.value(), key);
    } else {
      const bool num_ok = slot.is_number() && it.value().is_number();
      if (!num_ok && slot.type() != it.value().type())
        throw ConfigError("config key '" + key + "' has the wrong type (expected " + slot.type_name() + ")");
      slot = it.value();
    }
  }
}

template <typename T>
T get_checked(const nlohmann::ordered_json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

inline FusionWeights weights_from(const nlohmann::json& j, const std::string& key) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
    throw ConfigError("config key '" + key + "' must be a pair [w_text, w_image]");
  FusionWeights w{j[0].get<double>(), j[1].get<double>()};
  try {
    validate_weights(w);
  } catch (const InvalidArgument& e) {
    throw ConfigError("config key '" + key + "': " + e.what());
  }
  return w;
}

}  // namespace detail

/// Typed view of a merged JSON config. Throws ConfigError on any violation.
inline RunConfig interpret_config(const nlohmann::ordered_json& j) {
  using detail::get_checked;
  RunConfig c;
  c.raw = j;
  try {
    c.dataset = parse_dataset(get_checked<std::string>(j, "dataset"));
    c.text_backend = parse_backend(get_checked<std::string>(j, "text_encoder"));
    c.image_backend = parse_backend(get_checked<std::string>(j, "image_encoder"));
    c.fusion = parse_fusion(get_checked<std::string>(j, "fusion"));
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  if (modality_of(c.text_backend) != Modality::text)
    throw ConfigError("text_encoder '" + std::string(to_string(c.text_backend)) + "' is an image backend");
  if (modality_of(c.image_backend) != Modality::image)
    throw ConfigError("image_encoder '" + std::string(to_string(c.image_backend)) + "' is a text backend");

  c.manifest = get_checked<std::string>(j, "manifest");
  c.image_root = get_checked<std::string>(j, "image_root");
  c.output_dir = get_checked<std::string>(j, "output_dir");
  c.cache_dir = get_checked<std::string>(j, "cache_dir");
  c.model_dir = get_checked<std::string>(j, "model_dir");
  c.vocab = get_checked<std::string>(j, "vocab");
  if (c.output_dir.empty()) throw ConfigError("output_dir must not be empty");
  if (c.cache_dir.empty()) c.cache_dir = c.output_dir / "cache";

  const auto seed = get_checked<long long>(j, "seed");
  if (seed < 0) throw ConfigError("seed must be non-negative");
  c.seed = static_cast<std::uint64_t>(seed);
  const auto msl = get_checked<long long>(j, "max_seq_len");
  if (msl != 0 && msl < 3) throw ConfigError("max_seq_len must be 0 (dataset default) or >= 3");
  c.max_seq_len = static_cast<std::size_t>(msl);

  c.train.learning_rate = get_checked<double>(j, "learning_rate");
  c.train.beta1 = get_checked<double>(j, "beta1");
  c.train.beta2 = get_checked<double>(j, "beta2");
  c.train.epochs = get_checked<int>(j, "epochs");
  c.train.batch_size = get_checked<int>(j, "batch_size");
  c.train.dropout = get_checked<double>(j, "dropout");
  c.train.seed = c.seed;
  try {
    c.train.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }

  c.late_weights = detail::weights_from(j.at("late_weights"), "late_weights");
  const auto& sw = j.at("sweep_weights");
  if (!sw.is_array() || sw.empty()) throw ConfigError("sweep_weights must be a non-empty list of pairs");
  for (const auto& p : sw) c.sweep_weights.push_back(detail::weights_from(p, "sweep_weights"));

  c.fetch_workers = get_checked<int>(j, "fetch_workers");
  if (c.fetch_workers < 1) throw ConfigError("fetch_workers must be >= 1");
  c.fetch.timeout_s = get_checked<double>(j, "fetch_timeout_s");
  c.fetch.retries = get_checked<int>(j, "fetch_retries");
  if (!(c.fetch.timeout_s > 0) || c.fetch.retries < 0) throw ConfigError("fetch_timeout_s must be > 0, fetch_retries >= 0");
  const auto ebs = get_checked<long long>(j, "extract_batch_size");
  if (ebs < 1) throw ConfigError("extract_batch_size must be >= 1");
  c.extract_batch_size = static_cast<std::size_t>(ebs);

  const auto& st = j.at("stub_text");
  c.stub_text.seed = get_checked<std::uint64_t>(st, "seed");
  c.stub_text.vocab_size = get_checked<int>(st, "vocab_size");
  c.stub_text.d_model = get_checked<int>(st, "d_model");
  c.stub_text.heads = get_checked<int>(st, "h");
  c.stub_text.layers = get_checked<int>(st, "layers");
  c.stub_text.out_dim = get_checked<int>(st, "out_dim");
  if (c.stub_text.vocab_size < 0 || c.stub_text.d_model < 1 || c.stub_text.heads < 1 || c.stub_text.out_dim < 1 ||
      c.stub_text.layers < 1 || c.stub_text.layers > 2 || c.stub_text.d_model % c.stub_text.heads != 0)
    throw ConfigError("stub_text: need d_model divisible by h, 1-2 layers, positive sizes");

  const auto& si = j.at("stub_image");
  c.stub_image.seed = get_checked<std::uint64_t>(si, "seed");
  c.stub_image.out_dim = get_checked<int>(si, "out_dim");
  const auto& r = si.at("range");
  if (!r.is_array() || r.size() != 2 || !(r[1].get<double>() > r[0].get<double>()))
    throw ConfigError("stub_image.range must be [lo, hi] with lo < hi");
  c.stub_image.input_range = {r[0].get<double>(), r[1].get<double>()};
  if (c.stub_image.out_dim < 1) throw ConfigError("stub_image.out_dim must be positive");
  return c;
}

/// Parses a flag value: JSON literal when the default is not a string,
/// verbatim otherwise.
inline nlohmann::json parse_override_value(const nlohmann::ordered_json& slot, const std::string& key,
                                           const std::string& value) {
  if (slot.is_string()) return value;
  try {
    return nlohmann::json::parse(value);
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("flag --" + key + ": cannot parse '" + value + "' as " + slot.type_name());
  }
}

/// Sets one (possibly dotted) key. Dashes in flag names map to underscores.
inline void apply_override(nlohmann::ordered_json& cfg, std::string key, const std::string& value) {
  for (char& ch : key)
    if (ch == '-') ch = '_';
  nlohmann::ordered_json* node = &cfg;
  std::string path = key;
  std::size_t dot;
  while ((dot = path.find('.')) != std::string::npos) {
    const std::string head = path.substr(0, dot);
    if (!node->contains(head) || !(*node)[head].is_object()) throw ConfigError("unknown config key '" + key + "'");
    node = &(*node)[head];
    path = path.substr(dot + 1);
  }
  if (!node->contains(path) || (*node)[path].is_object()) throw ConfigError("unknown config key '" + key + "'");
  nlohmann::json patch = nlohmann::json::object();
  patch[path] = parse_override_value((*node)[path], key, value);
  detail::merge_checked(*node, patch, key.substr(0, key.size() - path.size() - (key.size() > path.size() ? 1 : 0)));
}

/// defaults, then the config file, then VERIFUSE_CACHE_DIR, then flags.
inline RunConfig load_run_config(const std::filesystem::path& config_file,
                                 const std::vector<std::pair<std::string, std::string>>& overrides) {
  auto cfg = default_config_json();
  if (!config_file.empty()) {
    std::ifstream in(config_file);
    if (!in) throw ConfigError("cannot open config file " + config_file.string());
    nlohmann::json file;
    try {
      file = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("config file " + config_file.string() + " is not valid JSON: " + e.what());
    }
    detail::merge_checked(cfg, file, "");
    // Relative paths in a config file are taken relative to the file.
    const auto base = config_file.parent_path();
    for (const char* k : {"manifest", "image_root", "cache_dir", "output_dir", "model_dir", "vocab"}) {
      if (!file.contains(k)) continue;
      const std::filesystem::path p = cfg[k].get<std::string>();
      if (!p.empty() && p.is_relative()) cfg[k] = (base / p).lexically_normal().string();
    }
  }
  if (const char* env = std::getenv(kCacheDirEnv); env && *env) cfg["cache_dir"] = env;
  if (cfg["model_dir"].get<std::string>().empty()) {
    if (const char* env = std::getenv(kModelDirEnv); env && *env) cfg["model_dir"] = env;
  }
  for (const auto& [k, v] : overrides) apply_override(cfg, k, v);
  return interpret_config(cfg);
}

}  // namespace verifuse
