#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "verifuse/common.hpp"
#include "verifuse/features.hpp"

namespace verifuse {

/// Per-dimension standardisation fitted on the training split.
struct ScalerState {
  std::vector<double> mean;
  std::vector<double> std;
  std::string fitted_on = "train";

  std::size_t dim() const { return mean.size(); }
  bool operator==(const ScalerState&) const = default;
};

inline constexpr double kMinScalerStd = 1e-12;

/// Population moments (divide by N); std below 1e-12 is replaced by 1.
inline ScalerState fit_scaler(std::span<const FeatureVector> features) {
  if (features.size() < 2) throw InvalidArgument("fit_scaler needs at least 2 vectors");
  const std::size_t d = features[0].dim();
  for (const auto& f : features) {
    if (f.dim() != d) throw ShapeError("fit_scaler: vectors have unequal dimensions");
  }
  ScalerState s;
  s.mean.assign(d, 0.0);
  s.std.assign(d, 0.0);
  const double n = static_cast<double>(features.size());
  for (const auto& f : features)
    for (std::size_t j = 0; j < d; ++j) s.mean[j] += f.values[j];
  for (auto& m : s.mean) m /= n;
  for (const auto& f : features) {
    for (std::size_t j = 0; j < d; ++j) {
      const double c = f.values[j] - s.mean[j];
      s.std[j] += c * c;
    }
  }
  for (auto& v : s.std) {
    v = std::sqrt(v / n);
    if (v < kMinScalerStd) v = 1.0;
  }
  s.fitted_on = "train";
  return s;
}

/// (v - mean) / std. Only scalers fitted on the training split are accepted.
inline FeatureVector apply_scaler(const ScalerState& s, const FeatureVector& v) {
  if (s.fitted_on != "train") {
    throw InvalidArgument("refusing to apply a scaler fitted on '" + s.fitted_on + "'; scalers must be fitted on train");
  }
  if (v.dim() != s.dim()) {
    throw ShapeError("apply_scaler: vector has dim " + std::to_string(v.dim()) + ", scaler has " +
                     std::to_string(s.dim()));
  }
  FeatureVector out = v;
  for (std::size_t j = 0; j < v.dim(); ++j) {
    out.values[j] = static_cast<float>((static_cast<double>(v.values[j]) - s.mean[j]) / s.std[j]);
  }
  return out;
}

inline nlohmann::ordered_json to_json(const ScalerState& s) {
  nlohmann::ordered_json j;
  j["dim"] = s.dim();
  j["mean"] = s.mean;
  j["std"] = s.std;
  j["fitted_on"] = s.fitted_on;
  return j;
}

inline ScalerState scaler_from_json(const nlohmann::json& j) {
  ScalerState s;
  s.mean = j.at("mean").get<std::vector<double>>();
  s.std = j.at("std").get<std::vector<double>>();
  s.fitted_on = j.at("fitted_on").get<std::string>();
  const auto dim = j.at("dim").get<std::size_t>();
  if (s.mean.size() != dim || s.std.size() != dim) throw DataError("scaler JSON: dim does not match mean/std lengths");
  for (double v : s.std) {
    if (!(v > 0)) throw DataError("scaler JSON: std entries must be positive");
  }
  return s;
}

inline ScalerState load_scaler(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return scaler_from_json(nlohmann::json::parse(in));
}

}  // namespace verifuse
