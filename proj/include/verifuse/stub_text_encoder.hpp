#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "verifuse/attention.hpp"
#include "verifuse/common.hpp"
#include "verifuse/tokenizer.hpp"

namespace verifuse {

/// Seeded description of the stub text encoder; the whole parameter set is
/// regenerated from it, so this JSON is all a test needs to reproduce outputs.
struct StubTextSpec {
  std::uint64_t seed = 7;
  int vocab_size = 30000;
  int d_model = 64;
  int heads = 4;
  int layers = 2;
  int out_dim = 768;

  bool operator==(const StubTextSpec&) const = default;
};

inline nlohmann::ordered_json to_json(const StubTextSpec& s) {
  return {{"seed", s.seed},       {"vocab_size", s.vocab_size}, {"d_model", s.d_model},
          {"h", s.heads},         {"layers", s.layers},         {"out_dim", s.out_dim}};
}

inline StubTextSpec stub_text_spec_from_json(const nlohmann::json& j) {
  StubTextSpec s;
  s.seed = j.value("seed", s.seed);
  s.vocab_size = j.value("vocab_size", s.vocab_size);
  s.d_model = j.value("d_model", s.d_model);
  s.heads = j.value("h", s.heads);
  s.layers = j.value("layers", s.layers);
  s.out_dim = j.value("out_dim", s.out_dim);
  return s;
}

/// Frozen desk-scale stand-in for a pretrained text encoder: token embedding
/// plus sinusoidal positions, `layers` residual multi-head self-attention
/// blocks restricted to unmasked positions, mean pooling over those
/// positions, then a tanh projection to out_dim. No feed-forward sublayers.
class StubTextEncoder {
 public:
  explicit StubTextEncoder(const StubTextSpec& spec) : spec_(spec) {
    if (spec.vocab_size < 1 || spec.d_model < 1 || spec.heads < 1 || spec.layers < 0 || spec.out_dim < 1) {
      throw InvalidArgument("stub text encoder: all sizes must be positive");
    }
    if (spec.d_model % spec.heads != 0) throw InvalidArgument("stub text encoder: d_model must be divisible by h");
    Rng rng(derive_seed(spec.seed, 1));
    embedding_.resize(spec.vocab_size, spec.d_model);
    for (Eigen::Index i = 0; i < embedding_.rows(); ++i)
      for (Eigen::Index j = 0; j < embedding_.cols(); ++j) embedding_(i, j) = rng.normal();
    const int head_dim = spec.d_model / spec.heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(spec.d_model));
    for (int l = 0; l < spec.layers; ++l) {
      Rng layer_rng(derive_seed(spec.seed, 100 + static_cast<std::uint64_t>(l)));
      layers_.push_back(MultiHeadParams::random(spec.heads, spec.d_model, head_dim, head_dim, layer_rng, scale));
    }
    Rng pool_rng(derive_seed(spec.seed, 2));
    pool_.resize(spec.d_model, spec.out_dim);
    for (Eigen::Index i = 0; i < pool_.rows(); ++i)
      for (Eigen::Index j = 0; j < pool_.cols(); ++j) pool_(i, j) = pool_rng.normal() * scale;
  }

  const StubTextSpec& spec() const { return spec_; }
  int out_dim() const { return spec_.out_dim; }

  std::vector<float> encode(const TokenizedText& t) const {
    if (t.input_mask.size() != t.input_ids.size() || t.segment_ids.size() != t.input_ids.size()) {
      throw ShapeError("stub text encoder: id/mask/segment lengths differ");
    }
    std::vector<Eigen::Index> positions;
    for (std::size_t i = 0; i < t.input_ids.size(); ++i) {
      if (t.input_mask[i] == 0) continue;
      const auto id = t.input_ids[i];
      if (id < 0 || id >= spec_.vocab_size) {
        throw ShapeError("stub text encoder: token id " + std::to_string(id) + " outside vocabulary of " +
                         std::to_string(spec_.vocab_size));
      }
      positions.push_back(static_cast<Eigen::Index>(i));
    }
    if (positions.empty()) throw ShapeError("stub text encoder: input has no unmasked positions");

    Matrix x(static_cast<Eigen::Index>(positions.size()), spec_.d_model);
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      const auto pos = positions[static_cast<std::size_t>(r)];
      x.row(r) = embedding_.row(t.input_ids[static_cast<std::size_t>(pos)]);
      for (int c = 0; c < spec_.d_model; ++c) {
        const double freq = std::pow(10000.0, -static_cast<double>(c - c % 2) / spec_.d_model);
        x(r, c) += (c % 2 == 0) ? std::sin(pos * freq) : std::cos(pos * freq);
      }
    }
    for (const auto& layer : layers_) x += multi_head_attention(x, x, x, layer);

    const Eigen::RowVectorXd pooled = x.colwise().mean();
    const Eigen::RowVectorXd out = (pooled * pool_).array().tanh();
    std::vector<float> v(static_cast<std::size_t>(spec_.out_dim));
    for (int j = 0; j < spec_.out_dim; ++j) v[static_cast<std::size_t>(j)] = static_cast<float>(out(j));
    return v;
  }

 private:
  StubTextSpec spec_;
  Matrix embedding_;
  std::vector<MultiHeadParams> layers_;
  Matrix pool_;
};

}  // namespace verifuse
