#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include <json.hpp>

#include "verifuse/common.hpp"
#include "verifuse/dense_stack.hpp"

namespace verifuse {

inline constexpr double kLossEpsilon = 1e-7;

/// Mean of -log(p_true) with probabilities clamped to [eps, 1 - eps].
inline double bce_loss(std::span<const ProbabilityPair> p, std::span<const Label> y, double eps = kLossEpsilon) {
  if (p.empty()) throw InvalidArgument("bce_loss: empty batch");
  if (p.size() != y.size()) throw ShapeError("bce_loss: prediction and label counts differ");
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double pt = y[i] == Label::fake ? p[i].fake : p[i].real;
    sum -= std::log(std::clamp(pt, eps, 1.0 - eps));
  }
  return sum / static_cast<double>(p.size());
}

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = 0.0;  // predict fake when score >= threshold; +inf for the origin
};

struct RocCurve {
  std::vector<RocPoint> points;
  double auc = 0.0;
};

struct MetricsReport {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  double accuracy = 0.0, precision = 0.0, recall = 0.0, f1 = 0.0;
  RocCurve roc;  // filled by callers that have scores

  std::size_t total() const { return tp + fp + fn + tn; }
};

/// Confusion counts and derived scores with fake as the positive class.
/// Ratios with a zero denominator are 0.
inline MetricsReport compute_metrics(std::span<const Label> predictions, std::span<const Label> truths) {
  if (predictions.size() != truths.size()) throw ShapeError("compute_metrics: length mismatch");
  if (predictions.empty()) throw InvalidArgument("compute_metrics: empty input");
  MetricsReport m;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const bool pred = predictions[i] == Label::fake, truth = truths[i] == Label::fake;
    if (pred && truth) ++m.tp;
    else if (pred && !truth) ++m.fp;
    else if (!pred && truth) ++m.fn;
    else ++m.tn;
  }
  const auto n = static_cast<double>(m.total());
  m.accuracy = static_cast<double>(m.tp + m.tn) / n;
  m.precision = (m.tp + m.fp) ? static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fp) : 0.0;
  m.recall = (m.tp + m.fn) ? static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn) : 0.0;
  m.f1 = (m.precision + m.recall) > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  return m;
}

/// ROC over p_fake scores: one point per distinct score (descending), plus
/// the origin; AUC by the trapezoidal rule.
inline RocCurve roc_curve(std::span<const double> scores, std::span<const Label> truths) {
  if (scores.size() != truths.size()) throw ShapeError("roc_curve: length mismatch");
  if (scores.empty()) throw InvalidArgument("roc_curve: empty input");
  const auto pos = static_cast<std::size_t>(std::count(truths.begin(), truths.end(), Label::fake));
  const std::size_t neg = truths.size() - pos;
  if (pos == 0 || neg == 0) throw InvalidArgument("roc_curve: both classes must be present");
  for (double s : scores)
    if (!std::isfinite(s)) throw InvalidArgument("roc_curve: non-finite score");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  RocCurve roc;
  roc.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  std::size_t tp = 0, fp = 0;
  double auc = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    const double t = scores[order[i]];
    const std::size_t tp0 = tp, fp0 = fp;
    while (i < order.size() && scores[order[i]] == t) {
      if (truths[order[i]] == Label::fake) ++tp;
      else ++fp;
      ++i;
    }
    auc += static_cast<double>(fp - fp0) * static_cast<double>(tp + tp0) / 2.0;
    roc.points.push_back({static_cast<double>(fp) / static_cast<double>(neg),
                          static_cast<double>(tp) / static_cast<double>(pos), t});
  }
  roc.auc = auc / (static_cast<double>(pos) * static_cast<double>(neg));
  return roc;
}

inline nlohmann::ordered_json to_json(const MetricsReport& m) {
  nlohmann::ordered_json j;
  j["tp"] = m.tp;
  j["fp"] = m.fp;
  j["fn"] = m.fn;
  j["tn"] = m.tn;
  j["accuracy"] = m.accuracy;
  j["precision"] = m.precision;
  j["recall"] = m.recall;
  j["f1"] = m.f1;
  if (!m.roc.points.empty()) {
    j["auc"] = m.roc.auc;
    auto pts = nlohmann::ordered_json::array();
    for (const auto& p : m.roc.points) {
      pts.push_back({p.fpr, p.tpr, std::isinf(p.threshold) ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(p.threshold)});
    }
    j["roc_points"] = pts;
  }
  return j;
}

}  // namespace verifuse
