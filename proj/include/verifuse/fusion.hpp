#pragma once

#include <algorithm>
#include <array>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "verifuse/common.hpp"
#include "verifuse/dense_stack.hpp"
#include "verifuse/encoder_hub.hpp"
#include "verifuse/features.hpp"

namespace verifuse {

inline const std::vector<int> kEarlyFusionWidths{1024, 512, 128, 64, 2};
inline const std::vector<int> kTextHeadWidths{512, 128, 64, 2};
inline const std::vector<int> kImageHeadWidths{1024, 512, 128, 64, 2};
inline constexpr double kHeadDropout = 0.4;

enum class FusionKind { early, late };

inline std::string_view to_string(FusionKind k) { return k == FusionKind::early ? "early" : "late"; }

inline FusionKind parse_fusion(std::string_view s) {
  if (s == "early") return FusionKind::early;
  if (s == "late") return FusionKind::late;
  throw InvalidArgument("unknown fusion kind '" + std::string(s) + "' (expected early|late)");
}

/// Single classifier over [text | image] concatenated features.
struct EarlyFusionModel {
  int text_dim = kTextFeatureDim;
  int image_dim = kImageFeatureDim;
  DenseStack head;

  EarlyFusionModel(int text_dim_ = kTextFeatureDim, int image_dim_ = kImageFeatureDim, double dropout = kHeadDropout)
      : text_dim(text_dim_), image_dim(image_dim_), head(text_dim_ + image_dim_, kEarlyFusionWidths, dropout) {}

  int input_dim() const { return text_dim + image_dim; }
};

struct FusionWeights {
  double text = 0.5;
  double image = 0.5;
  bool operator==(const FusionWeights&) const = default;
};

inline void validate_weights(const FusionWeights& w) {
  if (!(w.text >= 0.0) || !(w.image >= 0.0)) throw InvalidArgument("fusion weights must be non-negative");
  if (!(w.text + w.image > 0.0)) throw InvalidArgument("fusion weights must not both be zero");
  if (!std::isfinite(w.text) || !std::isfinite(w.image)) throw InvalidArgument("fusion weights must be finite");
}

/// Independent text and image classifiers combined by weighted averaging.
struct LateFusionModel {
  int text_dim = kTextFeatureDim;
  int image_dim = kImageFeatureDim;
  DenseStack text_head;
  DenseStack image_head;
  FusionWeights weights;

  LateFusionModel(int text_dim_ = kTextFeatureDim, int image_dim_ = kImageFeatureDim, FusionWeights w = {},
                  double dropout = kHeadDropout)
      : text_dim(text_dim_),
        image_dim(image_dim_),
        text_head(text_dim_, kTextHeadWidths, dropout),
        image_head(image_dim_, kImageHeadWidths, dropout),
        weights(w) {
    validate_weights(w);
  }
};

using FusionModel = std::variant<EarlyFusionModel, LateFusionModel>;

inline FusionKind kind_of(const FusionModel& m) {
  return std::holds_alternative<EarlyFusionModel>(m) ? FusionKind::early : FusionKind::late;
}

/// [text | image]; dimensions are checked against the configured encoders.
inline FeatureVector concat_features(const FeatureVector& text, const FeatureVector& image,
                                     std::size_t text_dim = kTextFeatureDim, std::size_t image_dim = kImageFeatureDim) {
  if (text.dim() != text_dim) {
    throw ShapeError("concat_features: text vector has dim " + std::to_string(text.dim()) + ", expected " +
                     std::to_string(text_dim));
  }
  if (image.dim() != image_dim) {
    throw ShapeError("concat_features: image vector has dim " + std::to_string(image.dim()) + ", expected " +
                     std::to_string(image_dim));
  }
  if (!text.all_finite() || !image.all_finite()) throw DataError("concat_features: non-finite input");
  FeatureVector out;
  out.record_id = text.record_id;
  out.modality = Modality::text;
  out.fingerprint = text.fingerprint + "+" + image.fingerprint;
  out.values.reserve(text_dim + image_dim);
  out.values.insert(out.values.end(), text.values.begin(), text.values.end());
  out.values.insert(out.values.end(), image.values.begin(), image.values.end());
  return out;
}

/// Weighted average of the two heads' probabilities,
/// (w_text p_text + w_image p_image) / (w_text + w_image), evaluated as
/// p_text + a (p_image - p_text) with a = w_image / (w_text + w_image): a zero
/// image weight returns p_text exactly, and the result is clamped to the
/// interval spanned by the inputs.
inline ProbabilityPair late_fuse(const ProbabilityPair& p_text, const ProbabilityPair& p_image,
                                 const FusionWeights& w) {
  validate_weights(w);
  const double a = w.image / (w.text + w.image);
  auto mix = [a](double x, double y) {
    const double v = x + a * (y - x);
    return std::clamp(v, std::min(x, y), std::max(x, y));
  };
  return {mix(p_text.fake, p_image.fake), mix(p_text.real, p_image.real)};
}

inline ProbabilityPair late_fuse(const ProbabilityPair& p_text, const ProbabilityPair& p_image, double w_text,
                                 double w_image) {
  return late_fuse(p_text, p_image, FusionWeights{w_text, w_image});
}

/// fake when p_fake > threshold; a tie goes to real.
inline Label predict_label(const ProbabilityPair& p, double threshold = 0.5) {
  return p.fake > threshold ? Label::fake : Label::real;
}

// ---------------------------------------------------------------------------
// Checkpoint: <dir>/arch.json plus one little-endian float32 blob per layer.
// Blob layout: W (in x out, row-major), b (out), then for batch-norm layers
// gamma, beta, running_mean, running_var (out each).
// ---------------------------------------------------------------------------

namespace detail {

inline void write_f32_blob(const std::filesystem::path& path, const DenseLayer& l) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  for (Eigen::Index i = 0; i < l.weight.rows(); ++i)
    for (Eigen::Index j = 0; j < l.weight.cols(); ++j) put_f32(out, static_cast<float>(l.weight(i, j)));
  auto row = [&](const Matrix& m) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) put_f32(out, static_cast<float>(m(0, j)));
  };
  row(l.bias);
  if (l.batch_norm) {
    row(l.gamma);
    row(l.beta);
    row(l.running_mean);
    row(l.running_var);
  }
  if (!out) throw Error("write failed: " + path.string());
}

inline void read_f32_blob(const std::filesystem::path& path, DenseLayer& l) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("checkpoint blob missing: " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::size_t per_row = l.batch_norm ? 5 : 1;
  const std::size_t expected = 4 * static_cast<std::size_t>(l.weight.size() + per_row * l.bias.size());
  if (bytes.size() != expected) {
    throw DataError("checkpoint blob " + path.string() + " has " + std::to_string(bytes.size()) + " bytes, expected " +
                    std::to_string(expected));
  }
  std::size_t off = 0;
  auto next = [&] {
    std::uint32_t bits = 0;
    for (int k = 3; k >= 0; --k) bits = (bits << 8) | static_cast<unsigned char>(bytes[off + static_cast<std::size_t>(k)]);
    off += 4;
    float f;
    std::memcpy(&f, &bits, 4);
    return static_cast<double>(f);
  };
  for (Eigen::Index i = 0; i < l.weight.rows(); ++i)
    for (Eigen::Index j = 0; j < l.weight.cols(); ++j) l.weight(i, j) = next();
  auto row = [&](Matrix& m) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(0, j) = next();
  };
  row(l.bias);
  if (l.batch_norm) {
    row(l.gamma);
    row(l.beta);
    row(l.running_mean);
    row(l.running_var);
  }
}

inline nlohmann::ordered_json save_stack(const DenseStack& s, const std::string& name, const std::filesystem::path& dir) {
  nlohmann::ordered_json j;
  j["name"] = name;
  j["input_dim"] = s.input_dim();
  j["widths"] = s.widths();
  j["dropout"] = s.dropout();
  j["bn_epsilon"] = s.bn_epsilon();
  j["activation"] = "relu";
  j["output"] = "softmax2";
  auto files = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < s.layers().size(); ++i) {
    const std::string file = name + "_layer" + std::to_string(i) + ".f32";
    write_f32_blob(dir / file, s.layers()[i]);
    files.push_back({{"file", file},
                     {"in", s.layers()[i].in()},
                     {"out", s.layers()[i].out()},
                     {"batch_norm", s.layers()[i].batch_norm}});
  }
  j["layers"] = files;
  return j;
}

inline DenseStack load_stack(const nlohmann::json& j, const std::filesystem::path& dir) {
  DenseStack s(j.at("input_dim").get<int>(), j.at("widths").get<std::vector<int>>(), j.at("dropout").get<double>(),
               j.at("bn_epsilon").get<double>());
  const auto& files = j.at("layers");
  if (files.size() != s.layers().size()) throw DataError("arch.json: layer list does not match widths");
  for (std::size_t i = 0; i < files.size(); ++i) read_f32_blob(dir / files[i].at("file").get<std::string>(), s.layers()[i]);
  return s;
}

}  // namespace detail

inline void save_checkpoint(const FusionModel& model, const std::filesystem::path& dir,
                            const nlohmann::ordered_json& extra = {}) {
  std::filesystem::create_directories(dir);
  nlohmann::ordered_json arch;
  arch["fusion"] = std::string(to_string(kind_of(model)));
  if (const auto* e = std::get_if<EarlyFusionModel>(&model)) {
    arch["text_dim"] = e->text_dim;
    arch["image_dim"] = e->image_dim;
    arch["dropout"] = e->head.dropout();
    arch["weights"] = nullptr;
    arch["heads"] = {detail::save_stack(e->head, "early", dir)};
  } else {
    const auto& l = std::get<LateFusionModel>(model);
    arch["text_dim"] = l.text_dim;
    arch["image_dim"] = l.image_dim;
    arch["dropout"] = l.text_head.dropout();
    arch["weights"] = {l.weights.text, l.weights.image};
    arch["heads"] = {detail::save_stack(l.text_head, "text", dir), detail::save_stack(l.image_head, "image", dir)};
  }
  for (auto it = extra.begin(); it != extra.end(); ++it) arch[it.key()] = it.value();
  std::ofstream out(dir / "arch.json", std::ios::trunc);
  out << arch.dump(2) << '\n';
}

inline nlohmann::json read_arch(const std::filesystem::path& dir) {
  std::ifstream in(dir / "arch.json");
  if (!in) throw DataError("checkpoint has no arch.json: " + dir.string());
  return nlohmann::json::parse(in);
}

inline FusionModel load_checkpoint(const std::filesystem::path& dir) {
  const auto arch = read_arch(dir);
  const auto kind = parse_fusion(arch.at("fusion").get<std::string>());
  const int td = arch.at("text_dim").get<int>(), id = arch.at("image_dim").get<int>();
  const double dropout = arch.at("dropout").get<double>();
  const auto& heads = arch.at("heads");
  if (kind == FusionKind::early) {
    EarlyFusionModel m(td, id, dropout);
    m.head = detail::load_stack(heads.at(0), dir);
    if (m.head.input_dim() != td + id) throw DataError("arch.json: early head input != text_dim + image_dim");
    return m;
  }
  const auto w = arch.at("weights");
  LateFusionModel m(td, id, {w.at(0).get<double>(), w.at(1).get<double>()}, dropout);
  m.text_head = detail::load_stack(heads.at(0), dir);
  m.image_head = detail::load_stack(heads.at(1), dir);
  if (m.text_head.input_dim() != td || m.image_head.input_dim() != id) {
    throw DataError("arch.json: head inputs disagree with text_dim/image_dim");
  }
  return m;
}

}  // namespace verifuse
