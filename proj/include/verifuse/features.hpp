#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "verifuse/common.hpp"

namespace verifuse {

enum class Modality { text, image };

inline std::string_view to_string(Modality m) { return m == Modality::text ? "text" : "image"; }

inline Modality parse_modality(std::string_view s) {
  if (s == "text") return Modality::text;
  if (s == "image") return Modality::image;
  throw InvalidArgument("unknown modality '" + std::string(s) + "'");
}

/// One encoder output. Values are float32, which is also the on-disk width,
/// so cache round trips are exact.
struct FeatureVector {
  std::string record_id;
  Modality modality = Modality::text;
  std::string fingerprint;
  std::vector<float> values;

  std::size_t dim() const { return values.size(); }
  bool all_finite() const {
    for (float v : values)
      if (!std::isfinite(v)) return false;
    return true;
  }
  bool operator==(const FeatureVector&) const = default;
};

}  // namespace verifuse
