#include <gtest/gtest.h>

#include "oracles.hpp"
#include "test_util.hpp"
#include "verifuse/corpus.hpp"
#include "verifuse/encoder_hub.hpp"
#include "verifuse/metrics.hpp"
#include "verifuse/scaler.hpp"
#include "verifuse/synthetic.hpp"
#include "verifuse/training.hpp"

using namespace verifuse;

namespace {

std::vector<Label> random_labels(std::size_t n, Rng& rng) {
  std::vector<Label> y(n);
  for (auto& l : y) l = rng.bernoulli(0.5) ? Label::fake : Label::real;
  return y;
}

/// Two Gaussian blobs split by a random direction in the text block.
FeatureSet blobs(std::size_t n, int td, int id, Rng& rng) {
  FeatureSet s;
  s.labels = random_labels(n, rng);
  s.text = oracle::random_matrix(static_cast<Eigen::Index>(n), td, rng);
  s.image = oracle::random_matrix(static_cast<Eigen::Index>(n), id, rng);
  for (std::size_t i = 0; i < n; ++i) {
    s.ids.push_back("r" + std::to_string(i));
    const double shift = s.labels[i] == Label::fake ? 1.5 : -1.5;
    s.text(static_cast<Eigen::Index>(i), 0) += shift;
    s.image(static_cast<Eigen::Index>(i), 0) += shift;
  }
  return s;
}

TrainConfig quick_config(int epochs = 3) {
  TrainConfig c;
  c.epochs = epochs;
  c.batch_size = 16;
  c.learning_rate = 1e-3;
  return c;
}

}  // namespace

// ---------------------------------------------------------------- loss

TEST(BceLoss, Examples) {
  const std::vector<Label> y{Label::fake, Label::real};
  EXPECT_LE(bce_loss(std::vector<ProbabilityPair>{{1.0, 0.0}, {0.0, 1.0}}, y), -std::log(1 - 1e-7) + 1e-15);
  EXPECT_NEAR(bce_loss(std::vector<ProbabilityPair>{{0.5, 0.5}, {0.5, 0.5}}, y), std::log(2.0), 1e-15);
  const double wrong = bce_loss(std::vector<ProbabilityPair>{{0.0, 1.0}, {1.0, 0.0}}, y);
  EXPECT_TRUE(std::isfinite(wrong));
  EXPECT_NEAR(wrong, -std::log(1e-7), 1e-9);
  EXPECT_THROW(bce_loss(std::vector<ProbabilityPair>{}, std::vector<Label>{}), InvalidArgument);
  EXPECT_THROW(bce_loss(std::vector<ProbabilityPair>{{0.5, 0.5}}, y), ShapeError);
}

TEST(BceLoss, MatchesScalarLoop) {
  Rng rng(1);
  std::vector<ProbabilityPair> p(50);
  const auto y = random_labels(50, rng);
  double sum = 0;
  for (std::size_t i = 0; i < 50; ++i) {
    const double f = rng.uniform(0, 1);
    p[i] = {f, 1 - f};
    sum += -std::log(y[i] == Label::fake ? f : 1 - f);
  }
  EXPECT_NEAR(bce_loss(p, y), sum / 50, 1e-9);
}

// ---------------------------------------------------------------- metrics

TEST(Metrics, HandCase) {
  std::vector<Label> pred, truth;
  auto add = [&](Label p, Label t, int n) {
    for (int i = 0; i < n; ++i) {
      pred.push_back(p);
      truth.push_back(t);
    }
  };
  add(Label::fake, Label::fake, 3);
  add(Label::fake, Label::real, 1);
  add(Label::real, Label::fake, 2);
  add(Label::real, Label::real, 4);
  const auto m = compute_metrics(pred, truth);
  EXPECT_EQ(m.tp, 3u);
  EXPECT_EQ(m.fp, 1u);
  EXPECT_EQ(m.fn, 2u);
  EXPECT_EQ(m.tn, 4u);
  EXPECT_DOUBLE_EQ(m.accuracy, 0.7);
  EXPECT_DOUBLE_EQ(m.precision, 0.75);
  EXPECT_DOUBLE_EQ(m.recall, 0.6);
  EXPECT_NEAR(m.f1, 2.0 * 0.75 * 0.6 / 1.35, 1e-15);
  EXPECT_NEAR(m.f1, 0.6667, 1e-4);
}

TEST(Metrics, PerfectAndDegenerate) {
  const std::vector<Label> y{Label::fake, Label::real, Label::fake};
  const auto m = compute_metrics(y, y);
  EXPECT_EQ(m.accuracy, 1.0);
  EXPECT_EQ(m.precision, 1.0);
  EXPECT_EQ(m.recall, 1.0);
  EXPECT_EQ(m.f1, 1.0);
  const std::vector<Label> reals(3, Label::real);
  const auto z = compute_metrics(reals, y);
  EXPECT_EQ(z.precision, 0.0);
  EXPECT_EQ(z.f1, 0.0);
  EXPECT_THROW(compute_metrics(reals, std::vector<Label>{Label::real}), ShapeError);
  EXPECT_THROW(compute_metrics(std::vector<Label>{}, std::vector<Label>{}), InvalidArgument);
}

TEST(Metrics, MatchCountingOracle) {
  Rng rng(2);
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = 1 + rng.below(60);
    const auto pred = random_labels(n, rng), truth = random_labels(n, rng);
    const auto m = compute_metrics(pred, truth);
    const auto c = oracle::confusion(pred, truth);
    ASSERT_EQ(m.tp, c.tp);
    ASSERT_EQ(m.fp, c.fp);
    ASSERT_EQ(m.fn, c.fn);
    ASSERT_EQ(m.tn, c.tn);
    ASSERT_EQ(m.accuracy, static_cast<double>(c.tp + c.tn) / static_cast<double>(n));
  }
}

// ---------------------------------------------------------------- ROC

TEST(Roc, Examples) {
  const std::vector<Label> y{Label::fake, Label::fake, Label::real, Label::real};
  EXPECT_EQ(roc_curve(std::vector<double>{0.9, 0.8, 0.2, 0.1}, y).auc, 1.0);
  EXPECT_EQ(roc_curve(std::vector<double>{0.1, 0.2, 0.8, 0.9}, y).auc, 0.0);
  const auto flat = roc_curve(std::vector<double>(4, 0.3), y);
  EXPECT_EQ(flat.auc, 0.5);
  ASSERT_EQ(flat.points.size(), 2u);
  EXPECT_EQ(flat.points.back().fpr, 1.0);
  EXPECT_EQ(flat.points.back().tpr, 1.0);
  EXPECT_THROW(roc_curve(std::vector<double>{0.1, 0.2}, std::vector<Label>(2, Label::fake)), InvalidArgument);
}

TEST(Roc, AucEqualsWilcoxon) {
  Rng rng(3);
  for (int t = 0; t < 50; ++t) {
    const std::size_t n = 2 + rng.below(200);
    auto y = random_labels(n, rng);
    y[0] = Label::fake;
    y[1] = Label::real;
    std::vector<double> s(n);
    for (auto& v : s) v = std::round(rng.uniform(0, 1) * 20) / 20;  // plenty of ties
    const auto roc = roc_curve(s, y);
    EXPECT_NEAR(roc.auc, oracle::wilcoxon_auc(s, y), 1e-9);
    for (std::size_t i = 1; i < roc.points.size(); ++i) {
      EXPECT_GE(roc.points[i].fpr, roc.points[i - 1].fpr);
      EXPECT_GE(roc.points[i].tpr, roc.points[i - 1].tpr);
      EXPECT_LT(roc.points[i].threshold, roc.points[i - 1].threshold);
    }
  }
}

// ---------------------------------------------------------------- training

TEST(TrainConfig, PublishedDefaults) {
  const TrainConfig c;
  EXPECT_EQ(c.learning_rate, 1e-4);
  EXPECT_EQ(c.beta1, 0.9);
  EXPECT_EQ(c.beta2, 0.980);
  EXPECT_EQ(c.epochs, 30);
  EXPECT_EQ(c.batch_size, 128);
  EXPECT_EQ(c.dropout, 0.4);
  auto bad = c;
  bad.epochs = 0;
  EXPECT_THROW(bad.validate(), InvalidArgument);
}

TEST(Train, StepCountIncludesPartialBatch) {
  Rng rng(4);
  const auto tr = blobs(300, 4, 4, rng), va = blobs(20, 4, 4, rng);
  TrainConfig cfg;
  cfg.epochs = 1;
  FusionModel early = EarlyFusionModel(4, 4);
  initialize_model(early, 1);
  const auto r = train(early, tr, va, cfg);
  ASSERT_EQ(r.history.epochs.size(), 1u);
  EXPECT_EQ(r.history.epochs[0].steps, 3);
  FusionModel late = LateFusionModel(4, 4);
  initialize_model(late, 1);
  const auto rl = train(late, tr, va, cfg);
  EXPECT_EQ(rl.text_head.epochs[0].steps, 3);
  EXPECT_EQ(rl.image_head.epochs[0].steps, 3);
}

TEST(Train, SameSeedGivesIdenticalHistory) {
  Rng rng(5);
  const auto tr = blobs(90, 5, 6, rng), va = blobs(30, 5, 6, rng);
  auto run = [&](std::uint64_t seed) {
    FusionModel m = LateFusionModel(5, 6);
    initialize_model(m, seed);
    auto cfg = quick_config();
    cfg.seed = seed;
    return train(m, tr, va, cfg);
  };
  const auto a = run(3), b = run(3), c = run(4);
  EXPECT_EQ(a.history, b.history);
  EXPECT_EQ(to_json(a.history).dump(), to_json(b.history).dump());
  EXPECT_EQ(a.text_head, b.text_head);
  EXPECT_NE(a.history, c.history);
  EXPECT_EQ(a.history.epochs.size(), 3u);
}

TEST(Train, ZeroLearningRateLeavesParametersUnchanged) {
  Rng rng(6);
  const auto tr = blobs(50, 3, 3, rng), va = blobs(10, 3, 3, rng);
  FusionModel m = EarlyFusionModel(3, 3);
  initialize_model(m, 2);
  std::vector<Matrix> before;
  for (auto* p : std::get<EarlyFusionModel>(m).head.parameters()) before.push_back(*p);
  auto cfg = quick_config(4);
  cfg.learning_rate = 0.0;
  const auto r = train(m, tr, va, cfg);
  const auto after = std::get<EarlyFusionModel>(m).head.parameters();
  for (std::size_t i = 0; i < before.size(); ++i) EXPECT_EQ(*after[i], before[i]);
  for (const auto& e : r.history.epochs) {
    EXPECT_EQ(e.train_loss, r.history.epochs[0].train_loss);
    EXPECT_EQ(e.val_accuracy, r.history.epochs[0].val_accuracy);
  }
}

TEST(Train, DivergenceIsReportedWithCoordinates) {
  Rng rng(7);
  auto tr = blobs(64, 3, 3, rng);
  tr.text *= 1e150;
  const auto va = blobs(10, 3, 3, rng);
  FusionModel m = EarlyFusionModel(3, 3);
  initialize_model(m, 1);
  auto cfg = quick_config(5);
  cfg.learning_rate = 1e200;
  try {
    train(m, tr, va, cfg);
    FAIL() << "expected divergence";
  } catch (const TrainingDiverged& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("epoch"), std::string::npos);
    EXPECT_NE(msg.find("batch"), std::string::npos);
  }
}

TEST(Train, RejectsEmptyOrMisalignedSets) {
  Rng rng(8);
  auto tr = blobs(20, 3, 3, rng);
  FeatureSet empty;
  FusionModel m = EarlyFusionModel(3, 3);
  EXPECT_THROW(train(m, tr, empty, quick_config()), InvalidArgument);
  tr.labels.pop_back();
  EXPECT_THROW(train(m, tr, blobs(5, 3, 3, rng), quick_config()), ShapeError);
}

// ---------------------------------------------------------------- sweep

TEST(Sweep, DefaultPairsAndBoundaryRow) {
  Rng rng(9);
  const auto tr = blobs(80, 4, 4, rng), te = blobs(40, 4, 4, rng);
  FusionModel m = LateFusionModel(4, 4);
  initialize_model(m, 3);
  train(m, tr, te, quick_config(2));
  const auto& late = std::get<LateFusionModel>(m);
  const auto rows = weight_sweep(late, te);
  ASSERT_EQ(rows.size(), 4u);
  const std::vector<FusionWeights> expected{{0.4, 0.6}, {0.5, 0.5}, {0.6, 0.4}, {0.7, 0.3}};
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(rows[i].weights, expected[i]);

  const auto text_only = weight_sweep(late, te, {{1.0, 0.0}})[0].metrics;
  const auto direct = evaluate_predictions(detail::to_pairs(late.text_head.forward(te.text, Mode::infer)), te.labels);
  EXPECT_EQ(text_only.tp, direct.tp);
  EXPECT_EQ(text_only.fp, direct.fp);
  EXPECT_EQ(text_only.accuracy, direct.accuracy);
  EXPECT_EQ(text_only.roc.auc, direct.roc.auc);

  const auto again = weight_sweep(late, te);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(to_json(rows[i].metrics).dump(), to_json(again[i].metrics).dump());
  EXPECT_THROW(weight_sweep(late, te, {}), InvalidArgument);
  EXPECT_THROW(weight_sweep(late, te, {{-1.0, 2.0}}), InvalidArgument);
}

// ---------------------------------------------------------------- separable corpus

namespace {

/// Synthetic corpus pushed through the stub encoders and a train-fitted scaler.
struct EncodedCorpus {
  FeatureSet train, val;
};

EncodedCorpus encode_synthetic(const std::filesystem::path& dir, SyntheticKind kind, std::size_t n, std::uint64_t seed) {
  const auto items = write_synthetic_corpus(dir, kind, n, seed);
  std::vector<NewsRecord> recs;
  for (const auto& it : items) {
    NewsRecord r;
    r.id = it.id;
    r.title = it.title;
    r.body = it.body;
    r.image_ref = it.image_file;
    r.image_path = (dir / it.image_file).string();
    r.label = it.label;
    r.dataset = Dataset::synthetic;
    r.fetch_status = FetchStatus::ok;
    recs.push_back(r);
  }
  recs = clean_dataset(recs);
  const auto split = split_dataset(recs, seed);
  std::map<std::string, const NewsRecord*> by_id;
  for (const auto& r : recs) by_id[r.id] = &r;
  std::vector<std::string> train_texts;
  for (const auto& id : split.train_ids) train_texts.push_back(by_id[id]->text);
  const auto vocab = build_vocabulary(train_texts, TokenizeMode::wordpiece);

  auto tspec = make_encoder_spec(Backend::stub_text);
  tspec.stub_text.vocab_size = static_cast<int>(vocab.size());
  const auto tenc = make_text_encoder(tspec);
  const auto ienc = make_image_encoder(make_encoder_spec(Backend::stub_image));

  auto encode = [&](const std::vector<std::string>& ids) {
    std::vector<TokenizedText> toks;
    std::vector<ImageArray> imgs;
    for (const auto& id : ids) {
      toks.push_back(tokenize_text(by_id[id]->text, 64, TokenizeMode::wordpiece, vocab));
      imgs.push_back(prepare_image(testutil::read_file(by_id[id]->image_path)));
    }
    return std::make_pair(encode_text_batch(*tenc, toks, ids), encode_image_batch(*ienc, imgs, ids));
  };
  const auto [tt, ti] = encode(split.train_ids);
  const auto [vt, vi] = encode(split.val_ids);
  const auto st = fit_scaler(tt), si = fit_scaler(ti);

  auto assemble = [&](const std::vector<std::string>& ids, const std::vector<FeatureVector>& t,
                      const std::vector<FeatureVector>& im) {
    FeatureSet s;
    s.ids = ids;
    s.text.resize(static_cast<Eigen::Index>(ids.size()), t[0].dim());
    s.image.resize(static_cast<Eigen::Index>(ids.size()), im[0].dim());
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const auto a = apply_scaler(st, t[i]), b = apply_scaler(si, im[i]);
      for (std::size_t j = 0; j < a.dim(); ++j) s.text(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = a.values[j];
      for (std::size_t j = 0; j < b.dim(); ++j) s.image(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = b.values[j];
      s.labels.push_back(*by_id[ids[i]]->label);
    }
    return s;
  };
  return {assemble(split.train_ids, tt, ti), assemble(split.val_ids, vt, vi)};
}

}  // namespace

TEST(Train, SeparableCorpusReachesHighValidationAccuracy) {
  testutil::TempDir tmp;
  const auto data = encode_synthetic(tmp.path(), SyntheticKind::separable, 200, 1);
  // The labels must first be shown to be linearly separable from the features.
  ASSERT_EQ(oracle::logistic_fit_accuracy(data.train.concatenated(), data.train.labels, 300, 0.1), 1.0);

  FusionModel m = EarlyFusionModel(768, 1536);
  initialize_model(m, 42);
  const auto r = train(m, data.train, data.val, TrainConfig{});
  ASSERT_EQ(r.history.epochs.size(), 30u);
  EXPECT_GE(r.history.epochs.back().val_accuracy, 0.95);
}
