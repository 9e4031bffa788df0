#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "verifuse/common.hpp"
#include "verifuse/features.hpp"
#include "verifuse/image.hpp"
#include "verifuse/stub_text_encoder.hpp"
#include "verifuse/tokenizer.hpp"

#ifndef VERIFUSE_BRIDGE_SCRIPT
#define VERIFUSE_BRIDGE_SCRIPT "tools/encoder_bridge.py"
#endif

namespace verifuse {

enum class Backend { bert_base, albert_base, inception_resnet_v2, stub_text, stub_image };

inline constexpr int kTextFeatureDim = 768;
inline constexpr int kImageFeatureDim = 1536;

inline std::string_view to_string(Backend b) {
  switch (b) {
    case Backend::bert_base: return "bert_base";
    case Backend::albert_base: return "albert_base";
    case Backend::inception_resnet_v2: return "inception_resnet_v2";
    case Backend::stub_text: return "stub_text";
    case Backend::stub_image: return "stub_image";
  }
  return "unknown";
}

inline Backend parse_backend(std::string_view s) {
  for (auto b : {Backend::bert_base, Backend::albert_base, Backend::inception_resnet_v2, Backend::stub_text,
                 Backend::stub_image}) {
    if (to_string(b) == s) return b;
  }
  throw InvalidArgument("unknown encoder backend '" + std::string(s) + "'");
}

inline Modality modality_of(Backend b) {
  return (b == Backend::inception_resnet_v2 || b == Backend::stub_image) ? Modality::image : Modality::text;
}

inline bool is_pretrained(Backend b) { return b != Backend::stub_text && b != Backend::stub_image; }

struct StubImageSpec {
  std::uint64_t seed = 11;
  int out_dim = kImageFeatureDim;
  ValueRange input_range{-1.0, 1.0};
  bool operator==(const StubImageSpec&) const = default;
};

/// Encoder selection. Encoders are always frozen: nothing in this library
/// updates encoder parameters.
struct EncoderSpec {
  Backend backend = Backend::stub_text;
  int out_dim = kTextFeatureDim;
  ValueRange input_norm{-1.0, 1.0};  // image encoders only
  std::filesystem::path model_dir;   // pretrained checkpoints live in model_dir/<backend>
  StubTextSpec stub_text;
  StubImageSpec stub_image;

  Modality modality() const { return modality_of(backend); }
  static constexpr bool frozen() { return true; }
};

/// Builds a spec honouring each backend's dimensional contract.
inline EncoderSpec make_encoder_spec(Backend backend, std::filesystem::path model_dir = {}) {
  EncoderSpec s;
  s.backend = backend;
  s.model_dir = std::move(model_dir);
  switch (backend) {
    case Backend::bert_base:
    case Backend::albert_base: s.out_dim = kTextFeatureDim; break;
    case Backend::inception_resnet_v2: s.out_dim = kImageFeatureDim; break;
    case Backend::stub_text: s.out_dim = s.stub_text.out_dim; break;
    case Backend::stub_image:
      s.out_dim = s.stub_image.out_dim;
      s.input_norm = s.stub_image.input_range;
      break;
  }
  return s;
}

// ---------------------------------------------------------------------------
// Encoder interfaces
// ---------------------------------------------------------------------------

class TextEncoder {
 public:
  virtual ~TextEncoder() = default;
  virtual std::vector<std::vector<float>> encode(std::span<const TokenizedText> batch) const = 0;
  virtual int out_dim() const = 0;
  virtual std::string fingerprint() const = 0;
};

class ImageEncoder {
 public:
  virtual ~ImageEncoder() = default;
  virtual std::vector<std::vector<float>> encode(std::span<const ImageArray> batch) const = 0;
  virtual int out_dim() const = 0;
  virtual ValueRange input_range() const = 0;
  virtual std::string fingerprint() const = 0;
};

class StubTextAdapter final : public TextEncoder {
 public:
  explicit StubTextAdapter(const StubTextSpec& spec) : enc_(spec) {}
  std::vector<std::vector<float>> encode(std::span<const TokenizedText> batch) const override {
    std::vector<std::vector<float>> out;
    out.reserve(batch.size());
    for (const auto& t : batch) out.push_back(enc_.encode(t));
    return out;
  }
  int out_dim() const override { return enc_.out_dim(); }
  std::string fingerprint() const override { return "stub_text/v1/" + to_json(enc_.spec()).dump(); }

 private:
  StubTextEncoder enc_;
};

/// Image stub: per-channel mean and std, a 16-bin histogram per channel over
/// the declared input range and 2x2 quadrant channel means (66 statistics),
/// followed by a seeded Gaussian projection to out_dim. Images whose channel
/// means differ map to different vectors.
class StubImageEncoder final : public ImageEncoder {
 public:
  static constexpr int kBins = 16;
  static constexpr int kStats = 3 + 3 + 3 * kBins + 12;

  explicit StubImageEncoder(const StubImageSpec& spec) : spec_(spec) {
    if (spec.out_dim < 1) throw InvalidArgument("stub image encoder: out_dim must be positive");
    if (!(spec.input_range.hi > spec.input_range.lo)) throw InvalidArgument("stub image encoder: empty input range");
    Rng rng(derive_seed(spec.seed, 3));
    projection_.resize(kStats, spec.out_dim);
    const double scale = 1.0 / std::sqrt(static_cast<double>(kStats));
    for (Eigen::Index i = 0; i < projection_.rows(); ++i)
      for (Eigen::Index j = 0; j < projection_.cols(); ++j) projection_(i, j) = rng.normal() * scale;
  }

  Eigen::RowVectorXd statistics(const ImageArray& img) const {
    check_shape(img);
    Eigen::RowVectorXd s = Eigen::RowVectorXd::Zero(kStats);
    const double lo = spec_.input_range.lo, hi = spec_.input_range.hi;
    const double n = static_cast<double>(img.height) * img.width;
    const int half_h = img.height / 2, half_w = img.width / 2;
    double quad_count[4] = {0, 0, 0, 0};
    for (int y = 0; y < img.height; ++y) {
      for (int x = 0; x < img.width; ++x) {
        const int q = (y < half_h ? 0 : 2) + (x < half_w ? 0 : 1);
        quad_count[q] += 1;
        for (int c = 0; c < 3; ++c) {
          const double v = img.at(y, x, c);
          s(c) += v;
          s(3 + c) += v * v;
          int bin = static_cast<int>((v - lo) / (hi - lo) * kBins);
          bin = std::clamp(bin, 0, kBins - 1);
          s(6 + c * kBins + bin) += 1.0 / n;
          s(6 + 3 * kBins + q * 3 + c) += v;
        }
      }
    }
    for (int c = 0; c < 3; ++c) {
      const double mean = s(c) / n;
      s(c) = mean;
      s(3 + c) = std::sqrt(std::max(0.0, s(3 + c) / n - mean * mean));
    }
    for (int q = 0; q < 4; ++q)
      for (int c = 0; c < 3; ++c) s(6 + 3 * kBins + q * 3 + c) /= quad_count[q];
    return s;
  }

  std::vector<std::vector<float>> encode(std::span<const ImageArray> batch) const override {
    std::vector<std::vector<float>> out;
    out.reserve(batch.size());
    for (const auto& img : batch) {
      const Eigen::RowVectorXd f = statistics(img) * projection_;
      std::vector<float> v(static_cast<std::size_t>(f.size()));
      for (Eigen::Index j = 0; j < f.size(); ++j) v[static_cast<std::size_t>(j)] = static_cast<float>(f(j));
      out.push_back(std::move(v));
    }
    return out;
  }
  int out_dim() const override { return spec_.out_dim; }
  ValueRange input_range() const override { return spec_.input_range; }
  std::string fingerprint() const override {
    std::ostringstream ss;
    ss << "stub_image/v1/{\"seed\":" << spec_.seed << ",\"out_dim\":" << spec_.out_dim << ",\"range\":["
       << spec_.input_range.lo << "," << spec_.input_range.hi << "]}";
    return ss.str();
  }

 private:
  void check_shape(const ImageArray& img) const {
    if (img.height != kImageSide || img.width != kImageSide ||
        img.pixels.size() != static_cast<std::size_t>(kImageSide) * kImageSide * 3) {
      throw ShapeError("image encoder expects 299x299x3 input");
    }
    if (img.range != spec_.input_range) throw ShapeError("image array range differs from the encoder's declared range");
  }

  StubImageSpec spec_;
  Matrix projection_;
};

// ---------------------------------------------------------------------------
// Feature cache file
//
//   {"count":N,"dim":D,"fingerprint":"...","modality":"text"}\n
//   N x ( u32 LE id length | id bytes (UTF-8) | D x f32 LE )
// ---------------------------------------------------------------------------

namespace detail {

inline void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_f32(std::ostream& out, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  put_u32(out, bits);
}

inline std::mutex& cache_write_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace detail

inline void cache_features(const std::vector<FeatureVector>& features, const std::filesystem::path& path,
                           Modality modality, const std::string& fingerprint, std::size_t dim) {
  for (const auto& f : features) {
    if (f.dim() != dim) throw ShapeError("cache_features: vector " + f.record_id + " has wrong dimension");
    if (!f.all_finite()) throw DataError("cache_features: vector " + f.record_id + " has non-finite values");
  }
  std::lock_guard lock(detail::cache_write_mutex());
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    nlohmann::ordered_json header;
    header["count"] = features.size();
    header["dim"] = dim;
    header["fingerprint"] = fingerprint;
    header["modality"] = std::string(to_string(modality));
    out << header.dump() << '\n';
    for (const auto& f : features) {
      detail::put_u32(out, static_cast<std::uint32_t>(f.record_id.size()));
      out.write(f.record_id.data(), static_cast<std::streamsize>(f.record_id.size()));
      for (float v : f.values) detail::put_f32(out, v);
    }
    if (!out) throw Error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

struct FeatureCacheHeader {
  std::size_t count = 0;
  std::size_t dim = 0;
  std::string fingerprint;
  Modality modality = Modality::text;
};

inline FeatureCacheHeader read_feature_cache_header(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CacheError("feature cache not found: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw CacheError(path.string() + ": empty feature cache (byte offset 0)");
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw CacheError(path.string() + ": bad header at byte offset 0: " + e.what());
  }
  return {h.at("count").get<std::size_t>(), h.at("dim").get<std::size_t>(), h.at("fingerprint").get<std::string>(),
          parse_modality(h.at("modality").get<std::string>())};
}

/// Loads a feature cache, refusing a different producer (fingerprint) or
/// dimension. Truncation is reported with the byte offset where data ran out.
inline std::vector<FeatureVector> load_features(const std::filesystem::path& path,
                                                const std::string& expected_fingerprint,
                                                std::optional<std::size_t> expected_dim = std::nullopt) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CacheError("feature cache not found: " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto nl = bytes.find('\n');
  if (nl == std::string::npos) throw CacheError(path.string() + ": truncated header at byte offset " + std::to_string(bytes.size()));
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(bytes.substr(0, nl));
  } catch (const nlohmann::json::exception& e) {
    throw CacheError(path.string() + ": bad header at byte offset 0: " + e.what());
  }
  const auto count = h.at("count").get<std::size_t>();
  const auto dim = h.at("dim").get<std::size_t>();
  const auto fingerprint = h.at("fingerprint").get<std::string>();
  const auto modality = parse_modality(h.at("modality").get<std::string>());
  if (fingerprint != expected_fingerprint) {
    throw CacheError(path.string() + ": stale feature cache (fingerprint '" + fingerprint + "', expected '" +
                     expected_fingerprint + "')");
  }
  if (expected_dim && *expected_dim != dim) {
    throw CacheError(path.string() + ": dimension " + std::to_string(dim) + " != expected " +
                     std::to_string(*expected_dim));
  }
  std::size_t off = nl + 1;
  auto need = [&](std::size_t n, const char* what) {
    if (bytes.size() - off < n) {
      throw CacheError(path.string() + ": truncated feature cache at byte offset " + std::to_string(bytes.size()) +
                       " while reading " + what + " starting at byte offset " + std::to_string(off));
    }
  };
  auto get_u32 = [&] {
    need(4, "a length");
    std::uint32_t v = 0;
    for (int k = 3; k >= 0; --k) v = (v << 8) | static_cast<unsigned char>(bytes[off + static_cast<std::size_t>(k)]);
    off += 4;
    return v;
  };
  std::vector<FeatureVector> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    FeatureVector f;
    f.modality = modality;
    f.fingerprint = fingerprint;
    const auto len = get_u32();
    need(len, "a record id");
    f.record_id = bytes.substr(off, len);
    off += len;
    need(4 * dim, "a feature vector");
    f.values.resize(dim);
    for (std::size_t j = 0; j < dim; ++j) {
      std::uint32_t bits = 0;
      for (int k = 3; k >= 0; --k) bits = (bits << 8) | static_cast<unsigned char>(bytes[off + static_cast<std::size_t>(k)]);
      std::memcpy(&f.values[j], &bits, 4);
      off += 4;
    }
    out.push_back(std::move(f));
  }
  if (off != bytes.size()) {
    throw CacheError(path.string() + ": " + std::to_string(bytes.size() - off) + " trailing bytes at byte offset " +
                     std::to_string(off));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Pretrained backends. Inference runs in an external Python process
// (tools/encoder_bridge.py) that loads the checkpoint from
// <model_dir>/<backend>; requests and responses travel through temp files.
// ---------------------------------------------------------------------------

namespace detail {

inline std::filesystem::path checkpoint_dir(const EncoderSpec& spec) {
  const auto dir = spec.model_dir / std::string(to_string(spec.backend));
  if (spec.model_dir.empty() || !std::filesystem::is_directory(dir)) {
    const bool text = spec.modality() == Modality::text;
    throw BackendUnavailable(std::string(to_string(spec.backend)) + " checkpoint not found at '" + dir.string() +
                             "'; set VERIFUSE_MODEL_DIR (or model_dir) to a directory containing it, or fall back to "
                             "the offline stub with --" +
                             (text ? "text-encoder stub_text" : "image-encoder stub_image"));
  }
  return dir;
}

inline std::string bridge_python() {
  const char* p = std::getenv("VERIFUSE_PYTHON");
  return p ? p : "python3";
}

inline std::string bridge_script() {
  const char* p = std::getenv("VERIFUSE_BRIDGE");
  return p ? p : VERIFUSE_BRIDGE_SCRIPT;
}

inline std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') out += "'\\''";
    else out.push_back(c);
  }
  return out + "'";
}

class TempDir {
 public:
  TempDir() {
    auto base = std::filesystem::temp_directory_path();
    Rng rng(static_cast<std::uint64_t>(std::chrono::steady_clock::now().time_since_epoch().count()) ^
            reinterpret_cast<std::uintptr_t>(this));
    for (int i = 0; i < 100; ++i) {
      auto p = base / ("verifuse-" + std::to_string(rng.next_u64()));
      if (std::filesystem::create_directory(p)) {
        path_ = p;
        return;
      }
    }
    throw Error("cannot create temporary directory");
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline std::vector<std::vector<float>> run_bridge(const std::string& command, const std::filesystem::path& request,
                                                  const std::filesystem::path& response, const EncoderSpec& spec,
                                                  const std::filesystem::path& ckpt, std::size_t expected_count) {
  const std::string cmd = shell_quote(bridge_python()) + " " + shell_quote(bridge_script()) + " " + command +
                          " --backend " + std::string(to_string(spec.backend)) + " --model " +
                          shell_quote(ckpt.string()) + " --input " + shell_quote(request.string()) + " --output " +
                          shell_quote(response.string());
  if (std::system(cmd.c_str()) != 0) {
    throw BackendUnavailable(std::string(to_string(spec.backend)) + " bridge failed (" + cmd + ")");
  }
  const auto header = read_feature_cache_header(response);
  auto features = load_features(response, header.fingerprint);
  if (features.size() != expected_count) throw DataError("bridge returned the wrong number of vectors");
  if (header.dim != static_cast<std::size_t>(spec.out_dim)) {
    throw ShapeError(std::string(to_string(spec.backend)) + " produced " + std::to_string(header.dim) +
                     "-d features, contract is " + std::to_string(spec.out_dim));
  }
  std::vector<std::vector<float>> out;
  out.reserve(features.size());
  for (auto& f : features) out.push_back(std::move(f.values));
  return out;
}

}  // namespace detail

class PretrainedTextAdapter final : public TextEncoder {
 public:
  explicit PretrainedTextAdapter(EncoderSpec spec) : spec_(std::move(spec)) {
    if (spec_.backend != Backend::bert_base && spec_.backend != Backend::albert_base) {
      throw InvalidArgument("not a pretrained text backend");
    }
    if (spec_.out_dim != kTextFeatureDim) throw ShapeError("pretrained text encoders produce 768-d pooled output");
    ckpt_ = detail::checkpoint_dir(spec_);
  }

  std::vector<std::vector<float>> encode(std::span<const TokenizedText> batch) const override {
    if (batch.empty()) return {};
    detail::TempDir tmp;
    const auto request = tmp.path() / "tokens.bin";
    {
      std::ofstream out(request, std::ios::binary);
      nlohmann::ordered_json h{{"count", batch.size()}, {"max_len", batch[0].max_len()}};
      out << h.dump() << '\n';
      for (const auto& t : batch) {
        if (t.max_len() != batch[0].max_len()) throw ShapeError("encode_text_batch: inputs differ in max length");
        for (const auto* seq : {&t.input_ids, &t.input_mask, &t.segment_ids})
          for (auto v : *seq) detail::put_u32(out, static_cast<std::uint32_t>(v));
      }
    }
    return detail::run_bridge("encode-text", request, tmp.path() / "features.bin", spec_, ckpt_, batch.size());
  }
  int out_dim() const override { return spec_.out_dim; }
  std::string fingerprint() const override {
    return std::string(to_string(spec_.backend)) + "/pooled/" + std::filesystem::absolute(ckpt_).string();
  }
  const std::filesystem::path& checkpoint() const { return ckpt_; }

 private:
  EncoderSpec spec_;
  std::filesystem::path ckpt_;
};

class PretrainedImageAdapter final : public ImageEncoder {
 public:
  explicit PretrainedImageAdapter(EncoderSpec spec) : spec_(std::move(spec)) {
    if (spec_.backend != Backend::inception_resnet_v2) throw InvalidArgument("not a pretrained image backend");
    if (spec_.out_dim != kImageFeatureDim) throw ShapeError("inception_resnet_v2 produces 1536-d features");
    ckpt_ = detail::checkpoint_dir(spec_);
  }

  std::vector<std::vector<float>> encode(std::span<const ImageArray> batch) const override {
    if (batch.empty()) return {};
    detail::TempDir tmp;
    const auto request = tmp.path() / "images.bin";
    {
      std::ofstream out(request, std::ios::binary);
      nlohmann::ordered_json h{{"count", batch.size()},
                               {"height", kImageSide},
                               {"width", kImageSide},
                               {"channels", 3},
                               {"range", {spec_.input_norm.lo, spec_.input_norm.hi}}};
      out << h.dump() << '\n';
      for (const auto& img : batch) {
        if (img.pixels.size() != static_cast<std::size_t>(kImageSide) * kImageSide * 3) {
          throw ShapeError("image encoder expects 299x299x3 input");
        }
        for (float v : img.pixels) detail::put_f32(out, v);
      }
    }
    return detail::run_bridge("encode-image", request, tmp.path() / "features.bin", spec_, ckpt_, batch.size());
  }
  int out_dim() const override { return spec_.out_dim; }
  ValueRange input_range() const override { return spec_.input_norm; }
  std::string fingerprint() const override {
    return "inception_resnet_v2/penultimate/" + std::filesystem::absolute(ckpt_).string();
  }

 private:
  EncoderSpec spec_;
  std::filesystem::path ckpt_;
};

inline std::unique_ptr<TextEncoder> make_text_encoder(const EncoderSpec& spec) {
  switch (spec.backend) {
    case Backend::stub_text: {
      if (spec.out_dim != spec.stub_text.out_dim) throw ShapeError("stub_text out_dim disagrees with its spec");
      return std::make_unique<StubTextAdapter>(spec.stub_text);
    }
    case Backend::bert_base:
    case Backend::albert_base: return std::make_unique<PretrainedTextAdapter>(spec);
    default: throw InvalidArgument(std::string(to_string(spec.backend)) + " is not a text encoder");
  }
}

inline std::unique_ptr<ImageEncoder> make_image_encoder(const EncoderSpec& spec) {
  switch (spec.backend) {
    case Backend::stub_image: {
      if (spec.out_dim != spec.stub_image.out_dim) throw ShapeError("stub_image out_dim disagrees with its spec");
      return std::make_unique<StubImageEncoder>(spec.stub_image);
    }
    case Backend::inception_resnet_v2: return std::make_unique<PretrainedImageAdapter>(spec);
    default: throw InvalidArgument(std::string(to_string(spec.backend)) + " is not an image encoder");
  }
}

/// One FeatureVector per input, input order preserved.
inline std::vector<FeatureVector> encode_text_batch(const TextEncoder& enc, std::span<const TokenizedText> batch,
                                                    std::span<const std::string> ids = {}) {
  if (!ids.empty() && ids.size() != batch.size()) throw ShapeError("encode_text_batch: ids and batch differ in size");
  for (const auto& t : batch) {
    if (t.max_len() != batch[0].max_len()) throw ShapeError("encode_text_batch: inputs differ in max length");
  }
  auto raw = enc.encode(batch);
  std::vector<FeatureVector> out(raw.size());
  const auto fp = enc.fingerprint();
  for (std::size_t i = 0; i < raw.size(); ++i) {
    out[i] = {ids.empty() ? std::to_string(i) : ids[i], Modality::text, fp, std::move(raw[i])};
    if (out[i].dim() != static_cast<std::size_t>(enc.out_dim()) || !out[i].all_finite()) {
      throw DataError("text encoder produced an invalid vector for input " + out[i].record_id);
    }
  }
  return out;
}

inline std::vector<FeatureVector> encode_image_batch(const ImageEncoder& enc, std::span<const ImageArray> batch,
                                                     std::span<const std::string> ids = {}) {
  if (!ids.empty() && ids.size() != batch.size()) throw ShapeError("encode_image_batch: ids and batch differ in size");
  for (const auto& img : batch) {
    if (img.height != kImageSide || img.width != kImageSide ||
        img.pixels.size() != static_cast<std::size_t>(kImageSide) * kImageSide * 3) {
      throw ShapeError("encode_image_batch: arrays must be 299x299x3");
    }
  }
  auto raw = enc.encode(batch);
  std::vector<FeatureVector> out(raw.size());
  const auto fp = enc.fingerprint();
  for (std::size_t i = 0; i < raw.size(); ++i) {
    out[i] = {ids.empty() ? std::to_string(i) : ids[i], Modality::image, fp, std::move(raw[i])};
    if (out[i].dim() != static_cast<std::size_t>(enc.out_dim()) || !out[i].all_finite()) {
      throw DataError("image encoder produced an invalid vector for input " + out[i].record_id);
    }
  }
  return out;
}

}  // namespace verifuse
