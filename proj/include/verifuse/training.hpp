#pragma once

#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "verifuse/common.hpp"
#include "verifuse/dense_stack.hpp"
#include "verifuse/fusion.hpp"
#include "verifuse/metrics.hpp"

namespace verifuse {

/// Optimisation settings; defaults are the published ones.
struct TrainConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.980;
  int epochs = 30;
  int batch_size = 128;
  double dropout = 0.4;
  std::uint64_t seed = 42;

  void validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw InvalidArgument("learning_rate must be >= 0");
    if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) throw InvalidArgument("betas must lie in (0,1)");
    if (epochs < 1) throw InvalidArgument("epochs must be >= 1");
    if (batch_size < 1) throw InvalidArgument("batch_size must be >= 1");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw InvalidArgument("dropout must lie in [0,1)");
  }
};

/// Feature rows of one split, aligned with labels.
struct FeatureSet {
  std::vector<std::string> ids;
  Matrix text;   // n x text_dim
  Matrix image;  // n x image_dim
  std::vector<Label> labels;

  std::size_t size() const { return labels.size(); }
  Matrix concatenated() const {
    Matrix x(text.rows(), text.cols() + image.cols());
    x << text, image;
    return x;
  }
};

struct EpochRecord {
  int epoch = 0;
  long steps = 0;
  double train_loss = 0.0, train_accuracy = 0.0;
  double val_loss = 0.0, val_accuracy = 0.0;
  bool operator==(const EpochRecord&) const = default;
};

struct EpochHistory {
  std::vector<EpochRecord> epochs;
  int best_val_epoch = 0;  // informational; the final-epoch model is the one kept

  long total_steps() const {
    long s = 0;
    for (const auto& e : epochs) s += e.steps;
    return s;
  }
  bool operator==(const EpochHistory&) const = default;
};

/// Late fusion records the fused stream plus each head.
struct TrainReport {
  FusionKind kind = FusionKind::early;
  EpochHistory history;  // early head, or the fused late prediction
  EpochHistory text_head, image_head;  // late only
};

namespace detail {

inline std::vector<ProbabilityPair> to_pairs(const Matrix& p) {
  std::vector<ProbabilityPair> out(static_cast<std::size_t>(p.rows()));
  for (Eigen::Index i = 0; i < p.rows(); ++i) out[static_cast<std::size_t>(i)] = {p(i, 0), p(i, 1)};
  return out;
}

inline std::vector<int> fake_indicator(const std::vector<Label>& labels, const std::vector<std::size_t>& rows) {
  std::vector<int> y(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) y[i] = labels[rows[i]] == Label::fake ? 1 : 0;
  return y;
}

inline double accuracy_of(const std::vector<ProbabilityPair>& p, const std::vector<Label>& y) {
  std::size_t ok = 0;
  for (std::size_t i = 0; i < p.size(); ++i) ok += predict_label(p[i]) == y[i];
  return static_cast<double>(ok) / static_cast<double>(p.size());
}

/// Minibatch Adam training of one head over a shared batch schedule.
class HeadTrainer {
 public:
  HeadTrainer(DenseStack& stack, const TrainConfig& cfg, std::uint64_t dropout_seed, std::string name)
      : stack_(stack), adam_({cfg.learning_rate, cfg.beta1, cfg.beta2, 1e-7}), rng_(dropout_seed), name_(std::move(name)) {}

  long run_epoch(const Matrix& x, const std::vector<Label>& labels, const std::vector<std::size_t>& order,
                 int batch_size, int epoch) {
    long steps = 0;
    for (std::size_t start = 0, b = 0; start < order.size(); start += static_cast<std::size_t>(batch_size), ++b) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(batch_size));
      std::vector<std::size_t> rows(order.begin() + static_cast<std::ptrdiff_t>(start),
                                    order.begin() + static_cast<std::ptrdiff_t>(end));
      Matrix xb(static_cast<Eigen::Index>(rows.size()), x.cols());
      for (std::size_t i = 0; i < rows.size(); ++i) xb.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(rows[i]));
      const auto y = fake_indicator(labels, rows);

      ForwardCache cache;
      stack_.forward(xb, Mode::train, &rng_, &cache);
      std::vector<Label> yl(rows.size());
      for (std::size_t i = 0; i < rows.size(); ++i) yl[i] = labels[rows[i]];
      const double loss = bce_loss(to_pairs(cache.probabilities), yl);
      if (!std::isfinite(loss) || !cache.probabilities.allFinite()) {
        throw TrainingDiverged(name_ + ": non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                               std::to_string(b));
      }
      adam_.step(stack_.parameters(), stack_.backward(cache, y));
      ++steps;
    }
    stack_.recompute_batch_norm_statistics(x);
    return steps;
  }

 private:
  DenseStack& stack_;
  Adam adam_;
  Rng rng_;
  std::string name_;
};

inline std::vector<std::size_t> epoch_order(std::size_t n, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);
  return order;
}

inline EpochRecord score_epoch(int epoch, long steps, const std::vector<ProbabilityPair>& train_p,
                               const std::vector<Label>& train_y, const std::vector<ProbabilityPair>& val_p,
                               const std::vector<Label>& val_y) {
  EpochRecord r;
  r.epoch = epoch;
  r.steps = steps;
  r.train_loss = bce_loss(train_p, train_y);
  r.train_accuracy = accuracy_of(train_p, train_y);
  r.val_loss = bce_loss(val_p, val_y);
  r.val_accuracy = accuracy_of(val_p, val_y);
  return r;
}

inline void mark_best(EpochHistory& h) {
  double best = -1.0;
  for (const auto& e : h.epochs) {
    if (e.val_accuracy > best) {
      best = e.val_accuracy;
      h.best_val_epoch = e.epoch;
    }
  }
}

inline void check_sets(const FeatureSet& train, const FeatureSet& val) {
  if (train.size() == 0 || val.size() == 0) throw InvalidArgument("train: train and validation sets must be non-empty");
  for (const auto* s : {&train, &val}) {
    if (static_cast<std::size_t>(s->text.rows()) != s->size() || static_cast<std::size_t>(s->image.rows()) != s->size()) {
      throw ShapeError("train: feature rows and labels disagree");
    }
  }
}

}  // namespace detail

/// Seeded initialisation of every head.
inline void initialize_model(FusionModel& model, std::uint64_t seed) {
  if (auto* e = std::get_if<EarlyFusionModel>(&model)) {
    Rng rng(derive_seed(seed, 10));
    e->head.initialize(rng);
  } else {
    auto& l = std::get<LateFusionModel>(model);
    Rng rt(derive_seed(seed, 11)), ri(derive_seed(seed, 12));
    l.text_head.initialize(rt);
    l.image_head.initialize(ri);
  }
}

/// Probability pairs for every row; late fusion combines with `weights`.
inline std::vector<ProbabilityPair> predict_probabilities(const FusionModel& model, const FeatureSet& data) {
  if (const auto* e = std::get_if<EarlyFusionModel>(&model)) {
    return detail::to_pairs(e->head.forward(data.concatenated(), Mode::infer));
  }
  const auto& l = std::get<LateFusionModel>(model);
  const auto pt = detail::to_pairs(l.text_head.forward(data.text, Mode::infer));
  const auto pi = detail::to_pairs(l.image_head.forward(data.image, Mode::infer));
  std::vector<ProbabilityPair> out(pt.size());
  for (std::size_t i = 0; i < pt.size(); ++i) out[i] = late_fuse(pt[i], pi[i], l.weights);
  return out;
}

/// Runs cfg.epochs epochs of seeded-shuffled minibatches (final partial batch
/// included). Late fusion trains its two heads independently on the same
/// batch schedule. After every epoch the batch-norm running statistics are
/// recomputed over the training split and both splits are scored in
/// inference mode.
inline TrainReport train(FusionModel& model, const FeatureSet& train_set, const FeatureSet& val_set,
                         const TrainConfig& cfg) {
  cfg.validate();
  detail::check_sets(train_set, val_set);
  TrainReport report;
  report.kind = kind_of(model);
  Rng schedule(derive_seed(cfg.seed, 20));

  if (auto* e = std::get_if<EarlyFusionModel>(&model)) {
    const Matrix xt = train_set.concatenated(), xv = val_set.concatenated();
    detail::HeadTrainer trainer(e->head, cfg, derive_seed(cfg.seed, 21), "early head");
    for (int ep = 1; ep <= cfg.epochs; ++ep) {
      const auto order = detail::epoch_order(train_set.size(), schedule);
      const long steps = trainer.run_epoch(xt, train_set.labels, order, cfg.batch_size, ep);
      report.history.epochs.push_back(detail::score_epoch(
          ep, steps, detail::to_pairs(e->head.forward(xt, Mode::infer)), train_set.labels,
          detail::to_pairs(e->head.forward(xv, Mode::infer)), val_set.labels));
    }
    detail::mark_best(report.history);
    return report;
  }

  auto& l = std::get<LateFusionModel>(model);
  detail::HeadTrainer text(l.text_head, cfg, derive_seed(cfg.seed, 22), "text head");
  detail::HeadTrainer image(l.image_head, cfg, derive_seed(cfg.seed, 23), "image head");
  for (int ep = 1; ep <= cfg.epochs; ++ep) {
    const auto order = detail::epoch_order(train_set.size(), schedule);
    const long st = text.run_epoch(train_set.text, train_set.labels, order, cfg.batch_size, ep);
    const long si = image.run_epoch(train_set.image, train_set.labels, order, cfg.batch_size, ep);

    const auto tt = detail::to_pairs(l.text_head.forward(train_set.text, Mode::infer));
    const auto tv = detail::to_pairs(l.text_head.forward(val_set.text, Mode::infer));
    const auto it = detail::to_pairs(l.image_head.forward(train_set.image, Mode::infer));
    const auto iv = detail::to_pairs(l.image_head.forward(val_set.image, Mode::infer));
    report.text_head.epochs.push_back(detail::score_epoch(ep, st, tt, train_set.labels, tv, val_set.labels));
    report.image_head.epochs.push_back(detail::score_epoch(ep, si, it, train_set.labels, iv, val_set.labels));

    std::vector<ProbabilityPair> ft(tt.size()), fv(tv.size());
    for (std::size_t i = 0; i < tt.size(); ++i) ft[i] = late_fuse(tt[i], it[i], l.weights);
    for (std::size_t i = 0; i < tv.size(); ++i) fv[i] = late_fuse(tv[i], iv[i], l.weights);
    report.history.epochs.push_back(detail::score_epoch(ep, st + si, ft, train_set.labels, fv, val_set.labels));
  }
  detail::mark_best(report.history);
  detail::mark_best(report.text_head);
  detail::mark_best(report.image_head);
  return report;
}

/// Confusion metrics plus ROC for a set of predictions.
inline MetricsReport evaluate_predictions(const std::vector<ProbabilityPair>& p, const std::vector<Label>& truths) {
  std::vector<Label> pred(p.size());
  std::vector<double> scores(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    pred[i] = predict_label(p[i]);
    scores[i] = p[i].fake;
  }
  MetricsReport m = compute_metrics(pred, truths);
  const auto fakes = std::count(truths.begin(), truths.end(), Label::fake);
  if (fakes > 0 && static_cast<std::size_t>(fakes) < truths.size()) m.roc = roc_curve(scores, truths);
  return m;
}

struct SweepRow {
  FusionWeights weights;
  MetricsReport metrics;
};

inline const std::vector<FusionWeights> kDefaultSweep{{0.4, 0.6}, {0.5, 0.5}, {0.6, 0.4}, {0.7, 0.3}};

/// Evaluates each head once, then re-fuses the cached probabilities for
/// every weight pair; nothing is retrained.
inline std::vector<SweepRow> weight_sweep(const LateFusionModel& model, const FeatureSet& data,
                                          const std::vector<FusionWeights>& weights = kDefaultSweep) {
  if (weights.empty()) throw InvalidArgument("weight_sweep: empty weight list");
  for (const auto& w : weights) validate_weights(w);
  const auto pt = detail::to_pairs(model.text_head.forward(data.text, Mode::infer));
  const auto pi = detail::to_pairs(model.image_head.forward(data.image, Mode::infer));
  std::vector<SweepRow> rows;
  for (const auto& w : weights) {
    std::vector<ProbabilityPair> fused(pt.size());
    for (std::size_t i = 0; i < pt.size(); ++i) fused[i] = late_fuse(pt[i], pi[i], w);
    rows.push_back({w, evaluate_predictions(fused, data.labels)});
  }
  return rows;
}

inline nlohmann::ordered_json to_json(const EpochHistory& h) {
  nlohmann::ordered_json j;
  auto arr = nlohmann::ordered_json::array();
  for (const auto& e : h.epochs) {
    arr.push_back({{"epoch", e.epoch},
                   {"steps", e.steps},
                   {"train_loss", e.train_loss},
                   {"train_accuracy", e.train_accuracy},
                   {"val_loss", e.val_loss},
                   {"val_accuracy", e.val_accuracy}});
  }
  j["epochs"] = arr;
  j["best_val_epoch"] = h.best_val_epoch;
  return j;
}

inline EpochHistory history_from_json(const nlohmann::json& j) {
  EpochHistory h;
  for (const auto& e : j.at("epochs")) {
    h.epochs.push_back({e.at("epoch").get<int>(), e.at("steps").get<long>(), e.at("train_loss").get<double>(),
                        e.at("train_accuracy").get<double>(), e.at("val_loss").get<double>(),
                        e.at("val_accuracy").get<double>()});
  }
  h.best_val_epoch = j.value("best_val_epoch", 0);
  return h;
}

}  // namespace verifuse
