// Acceptance harness: one PASS/FAIL/SKIP line per headline criterion.
#include <chrono>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <sstream>

#include <boost/math/distributions/binomial.hpp>

#include "oracles.hpp"
#include "test_util.hpp"
#include "verifuse/attention.hpp"
#include "verifuse/config.hpp"
#include "verifuse/fusion.hpp"
#include "verifuse/metrics.hpp"
#include "verifuse/pipeline.hpp"
#include "verifuse/training.hpp"

using namespace verifuse;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void report(const std::string& name, bool ok, const std::string& detail) {
  std::cout << (ok ? "PASS " : "FAIL ") << name << ": " << detail << std::endl;
  if (!ok) ++failures;
}

void skip(const std::string& name, const std::string& why) { std::cout << "SKIP " << name << ": " << why << std::endl; }

/// Runs a criterion; an exception counts as a failure with its message.
void criterion(const std::string& name, const std::function<std::pair<bool, std::string>()>& body) {
  try {
    const auto [ok, detail] = body();
    report(name, ok, detail);
  } catch (const std::exception& e) {
    report(name, false, std::string("exception: ") + e.what());
  }
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double x) {
  std::ostringstream s;
  s << x;
  return s.str();
}

// ---------------------------------------------------------------- pure criteria

std::pair<bool, std::string> attention_oracle() {
  const auto t0 = Clock::now();
  Rng rng(1001);
  double worst = 0, worst_row = 0;
  for (int t = 0; t < 500; ++t) {
    const auto nq = 1 + rng.below(8), nk = 1 + rng.below(8), dk = 1 + rng.below(8), dv = 1 + rng.below(8);
    const Matrix q = oracle::random_matrix(nq, dk, rng, 2.0), k = oracle::random_matrix(nk, dk, rng, 2.0),
                 v = oracle::random_matrix(nk, dv, rng, 2.0);
    worst = std::max(worst, (scaled_dot_product_attention(q, k, v) - oracle::attention(q, k, v)).cwiseAbs().maxCoeff());
    const Matrix w = attention_weights(q, k);
    for (Eigen::Index i = 0; i < w.rows(); ++i) worst_row = std::max(worst_row, std::abs(w.row(i).sum() - 1.0));
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-6 && worst_row <= 1e-9 && secs < 10.0,
          "500 instances, max |diff| " + fmt(worst) + ", max |row sum - 1| " + fmt(worst_row) + ", " + fmt(secs) + " s"};
}

std::pair<bool, std::string> multi_head_oracle() {
  Rng rng(1002);
  const Matrix q = oracle::random_matrix(5, 6, rng), k = oracle::random_matrix(7, 6, rng),
               v = oracle::random_matrix(7, 6, rng);
  const bool identity_exact = multi_head_attention(q, k, v, MultiHeadParams::identity(6)) ==
                              scaled_dot_product_attention(q, k, v);
  double worst = 0;
  for (int t = 0; t < 200; ++t) {
    const int heads = 1 + static_cast<int>(rng.below(4));
    const int d_model = heads * (1 + static_cast<int>(rng.below(4)));
    const int d_k = 1 + static_cast<int>(rng.below(6)), d_v = 1 + static_cast<int>(rng.below(6));
    const auto p = MultiHeadParams::random(heads, d_model, d_k, d_v, rng, 0.5);
    const auto nq = 1 + rng.below(8), nk = 1 + rng.below(8);
    const Matrix qi = oracle::random_matrix(nq, d_model, rng), ki = oracle::random_matrix(nk, d_model, rng),
                 vi = oracle::random_matrix(nk, d_model, rng);
    worst = std::max(worst, (multi_head_attention(qi, ki, vi, p) - oracle::multi_head(qi, ki, vi, p)).cwiseAbs().maxCoeff());
  }
  return {identity_exact && worst <= 1e-6,
          std::string("identity collapse ") + (identity_exact ? "exact" : "NOT exact") + ", 200 instances max |diff| " +
              fmt(worst)};
}

std::pair<bool, std::string> late_fusion_grid() {
  Rng rng(1003);
  double worst = 0;
  bool scale_ok = true, convex_ok = true;
  std::size_t checked = 0;
  for (int t = 0; t < 100; ++t) {
    const double a = rng.uniform(), b = rng.uniform();
    const ProbabilityPair pt{a, 1 - a}, pi{b, 1 - b};
    for (int i = 0; i <= 10; ++i) {
      for (int j = 0; j <= 10; ++j) {
        if (i == 0 && j == 0) continue;
        const double w1 = i / 10.0, w2 = j / 10.0;
        const auto f = late_fuse(pt, pi, w1, w2);
        worst = std::max({worst, std::abs(f.fake - oracle::late_fuse_direct(a, b, w1, w2)),
                          std::abs(f.real - oracle::late_fuse_direct(1 - a, 1 - b, w1, w2))});
        for (double c : {0.5, 3.0, 17.0}) {
          const auto g = late_fuse(pt, pi, c * w1, c * w2);
          if (std::abs(g.fake - f.fake) > 1e-12 || std::abs(g.real - f.real) > 1e-12) scale_ok = false;
        }
        if (f.fake < std::min(a, b) - 1e-12 || f.fake > std::max(a, b) + 1e-12 ||
            std::abs(f.fake + f.real - 1.0) > 1e-12) {
          convex_ok = false;
        }
        ++checked;
      }
    }
  }
  return {worst <= 1e-12 && scale_ok && convex_ok,
          std::to_string(checked) + " cases, max |diff| " + fmt(worst) + ", scale invariance " +
              (scale_ok ? "holds" : "violated") + ", convexity " + (convex_ok ? "holds" : "violated")};
}

std::pair<bool, std::string> structural_fidelity() {
  const EarlyFusionModel early;
  const LateFusionModel late;
  const TrainConfig tc;
  const std::vector<int> ew{1024, 512, 128, 64, 2}, tw{512, 128, 64, 2}, iw{1024, 512, 128, 64, 2};
  std::vector<std::string> bad;
  if (early.head.input_dim() != 2304) bad.push_back("early input dim");
  if (early.head.widths() != ew) bad.push_back("early widths");
  if (late.text_head.input_dim() != 768 || late.text_head.widths() != tw) bad.push_back("text head");
  if (late.image_head.input_dim() != 1536 || late.image_head.widths() != iw) bad.push_back("image head");
  for (double d : {early.head.dropout(), late.text_head.dropout(), late.image_head.dropout(), tc.dropout})
    if (d != 0.4) bad.push_back("dropout");
  if (tc.learning_rate != 1e-4) bad.push_back("learning rate");
  if (tc.beta1 != 0.9 || tc.beta2 != 0.980) bad.push_back("betas");
  if (tc.epochs != 30) bad.push_back("epochs");
  if (tc.batch_size != 128) bad.push_back("batch size");
  const auto cfg = load_run_config({}, {});
  if (cfg.train.learning_rate != 1e-4 || cfg.train.beta2 != 0.980 || cfg.train.epochs != 30 ||
      cfg.train.batch_size != 128 || cfg.train.dropout != 0.4) {
    bad.push_back("CLI defaults");
  }
  std::string detail = "2304 -> [1024,512,128,64,2]; 768 -> [512,128,64,2]; 1536 -> [1024,512,128,64,2]; "
                       "dropout 0.4; lr 1e-4, betas (0.9, 0.980), 30 epochs, batch 128";
  for (const auto& b : bad) detail += "; mismatch: " + b;
  return {bad.empty(), detail};
}

std::pair<bool, std::string> metrics_oracle() {
  std::vector<Label> pred, truth;
  for (int i = 0; i < 3; ++i) pred.push_back(Label::fake), truth.push_back(Label::fake);
  pred.push_back(Label::fake), truth.push_back(Label::real);
  for (int i = 0; i < 2; ++i) pred.push_back(Label::real), truth.push_back(Label::fake);
  for (int i = 0; i < 4; ++i) pred.push_back(Label::real), truth.push_back(Label::real);
  const auto hand = compute_metrics(pred, truth);
  const bool hand_ok = hand.tp == 3 && hand.fp == 1 && hand.fn == 2 && hand.tn == 4 &&
                       std::abs(hand.accuracy - 0.7) < 1e-15 && std::abs(hand.precision - 0.75) < 1e-15 &&
                       std::abs(hand.recall - 0.6) < 1e-15 && std::abs(hand.f1 - 2.0 / 3.0) < 1e-15;
  Rng rng(1004);
  int mismatches = 0;
  for (int t = 0; t < 1000; ++t) {
    const auto n = 1 + rng.below(60);
    std::vector<Label> p(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = rng.below(2) ? Label::fake : Label::real;
      y[i] = rng.below(2) ? Label::fake : Label::real;
    }
    const auto m = compute_metrics(p, y);
    const auto c = oracle::confusion(p, y);
    const double nn = static_cast<double>(n);
    const double prec = c.tp + c.fp ? double(c.tp) / double(c.tp + c.fp) : 0.0;
    const double rec = c.tp + c.fn ? double(c.tp) / double(c.tp + c.fn) : 0.0;
    const double f1 = prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
    if (m.tp != c.tp || m.fp != c.fp || m.fn != c.fn || m.tn != c.tn || m.accuracy != double(c.tp + c.tn) / nn ||
        m.precision != prec || m.recall != rec || m.f1 != f1) {
      ++mismatches;
    }
  }
  return {hand_ok && mismatches == 0, "hand case (" + fmt(hand.accuracy) + ", " + fmt(hand.precision) + ", " +
                                          fmt(hand.recall) + ", " + fmt(hand.f1) + "), 1000 random sets, " +
                                          std::to_string(mismatches) + " mismatches"};
}

std::pair<bool, std::string> roc_oracle() {
  Rng rng(1005);
  double worst = 0;
  for (int t = 0; t < 50; ++t) {
    const auto n = 2 + rng.below(80);
    std::vector<double> s(n);
    std::vector<Label> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng.below(12)) / 11.0;  // coarse scores force ties
      y[i] = i == 0 ? Label::fake : i == 1 ? Label::real : (rng.below(2) ? Label::fake : Label::real);
    }
    worst = std::max(worst, std::abs(roc_curve(s, y).auc - oracle::wilcoxon_auc(s, y)));
  }
  return {worst <= 1e-9, "50 instances, max |AUC - Wilcoxon| " + fmt(worst)};
}

std::pair<bool, std::string> gradient_check() {
  double worst = 0, worst_zero = 0;
  int tensors = 0, zero_tensors = 0;
  auto run = [&](int in, std::vector<int> widths, double dropout, Mode mode, std::uint64_t seed) {
    Rng rng(seed);
    DenseStack s(in, std::move(widths), dropout);
    s.initialize(rng);
    for (auto& l : s.layers()) {
      l.bias = oracle::random_matrix(1, l.out(), rng, 0.1);
      if (l.batch_norm) {
        l.gamma = (oracle::random_matrix(1, l.out(), rng, 0.2).array() + 1.0).matrix();
        l.beta = oracle::random_matrix(1, l.out(), rng, 0.3);
        l.running_mean = oracle::random_matrix(1, l.out(), rng, 0.1);
        l.running_var = (oracle::random_matrix(1, l.out(), rng, 0.1).array().abs() + 0.5).matrix();
      }
    }
    const Matrix x = oracle::random_matrix(8, in, rng);
    std::vector<int> fake(8);
    for (auto& f : fake) f = static_cast<int>(rng.below(2));
    auto loss = [&] {
      Rng r(seed + 1);
      return oracle::mean_nll(s.forward(x, mode, &r), fake);
    };
    ForwardCache cache;
    Rng r(seed + 1);
    s.forward(x, mode, &r, &cache);
    const auto grads = s.backward(cache, fake);
    const auto params = s.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) {
      const Matrix numeric = oracle::numeric_gradient(*params[i], loss);
      // Biases feeding batch norm in train mode have an exactly zero gradient;
      // a ratio of rounding noise is meaningless there, so compare absolutely.
      if (grads.tensors[i].norm() + numeric.norm() < 1e-6) {
        ++zero_tensors;
        worst_zero = std::max(worst_zero, (grads.tensors[i] - numeric).cwiseAbs().maxCoeff());
        continue;
      }
      ++tensors;
      worst = std::max(worst, oracle::relative_error(grads.tensors[i], numeric));
    }
  };
  run(5, {6, 4, 2}, 0.4, Mode::infer, 11);
  run(5, {6, 4, 2}, 0.3, Mode::train, 12);
  run(4, {7, 5, 3, 2}, 0.0, Mode::train, 13);
  return {worst <= 1e-4 && worst_zero <= 1e-8,
          std::to_string(tensors) + " tensors, max relative error " + fmt(worst) + "; " +
              std::to_string(zero_tensors) + " zero-gradient tensors, max |diff| " + fmt(worst_zero)};
}

// ---------------------------------------------------------------- end to end

struct Chain {
  bool ok = true;
  std::string failure;
  nlohmann::json history, metrics;
};

Chain run_chain(const fs::path& config, const fs::path& out, const std::string& extra, bool with_sweep) {
  Chain c;
  std::vector<std::string> cmds{"ingest", "extract", "train", "evaluate"};
  if (with_sweep) cmds.push_back("sweep");
  for (const auto& cmd : cmds) {
    const auto r = testutil::run(testutil::quote(VERIFUSE_EXE) + " " + cmd + " --config " + testutil::quote(config) +
                                 " --output-dir " + testutil::quote(out) + " " + extra);
    if (r.code != 0) {
      c.ok = false;
      c.failure = cmd + " exited " + std::to_string(r.code) + ": " + r.err.substr(0, 300);
      return c;
    }
  }
  c.history = detail::read_json(RunPaths{out}.history());
  c.metrics = detail::read_json(RunPaths{out}.metrics());
  return c;
}

double final_val(const nlohmann::json& h) { return h.at("epochs").back().at("val_accuracy").get<double>(); }

fs::path make_corpus(const fs::path& root, const std::string& kind) {
  const auto dir = root / kind;
  const auto r = testutil::run(testutil::quote(VERIFUSE_SYNTH_EXE) + " --kind " + kind + " --n 200 --seed 1 --out " +
                               testutil::quote(dir / "corpus"));
  if (r.code != 0) throw std::runtime_error("verifuse-synth failed: " + r.err);
  testutil::write_file(dir / "config.json",
                       R"({"dataset": "synthetic", "manifest": "corpus/manifest.csv", "seed": 42})");
  return dir / "config.json";
}

void end_to_end_and_determinism(const fs::path& root) {
  const auto t0 = Clock::now();
  fs::path sep_cfg, xor_cfg;
  Chain sep, xor_early, xor_late;
  try {
    sep_cfg = make_corpus(root, "separable");
    xor_cfg = make_corpus(root, "xor");
    sep = run_chain(sep_cfg, root / "separable/early", "--fusion early", false);
    xor_early = run_chain(xor_cfg, root / "xor/early", "--fusion early", false);
    xor_late = run_chain(xor_cfg, root / "xor/late", "--fusion late", true);
  } catch (const std::exception& e) {
    report("end-to-end desk-scale run", false, e.what());
    report("determinism", false, "end-to-end setup failed");
    return;
  }
  const double secs = seconds_since(t0);

  criterion("end-to-end desk-scale run", [&]() -> std::pair<bool, std::string> {
    for (const auto* c : {&sep, &xor_early, &xor_late})
      if (!c->ok) return {false, c->failure};
    const double sep_val = final_val(sep.history), fused = final_val(xor_early.history);
    const double text = final_val(xor_late.history.at("text_head")), image = final_val(xor_late.history.at("image_head"));
    const bool ok = sep_val >= 0.95 && fused >= 0.9 && text <= 0.6 && image <= 0.6 && secs < 300.0;
    return {ok, "separable val acc " + fmt(sep_val) + " (>= 0.95); xor fused val acc " + fmt(fused) +
                    " (>= 0.9), text-only " + fmt(text) + ", image-only " + fmt(image) + " (<= 0.6); " + fmt(secs) +
                    " s for three full chains"};
  });

  criterion("determinism", [&]() -> std::pair<bool, std::string> {
    if (!xor_late.ok) return {false, "first run failed"};
    const auto second = run_chain(xor_cfg, root / "xor/late_again", "--fusion late", true);
    if (!second.ok) return {false, second.failure};
    std::vector<std::string> differing;
    for (const char* f : {"history.json", "metrics.json", "sweep.csv"}) {
      if (testutil::read_file(root / "xor/late" / f) != testutil::read_file(root / "xor/late_again" / f))
        differing.push_back(f);
    }
    std::string detail = "history.json, metrics.json, sweep.csv compared across two seeded late-fusion runs";
    for (const auto& d : differing) detail += "; differs: " + d;
    return {differing.empty(), detail};
  });
}

// ---------------------------------------------------------------- optional online

void optional_online(const fs::path& root) {
  const char* models = std::getenv("VERIFUSE_MODEL_DIR");
  const char* manifest = std::getenv("VERIFUSE_ALL_DATA_MANIFEST");
  const std::string name = "pretrained encoders on an All Data subsample";
  if (!models || !manifest) {
    skip(name, "set VERIFUSE_MODEL_DIR and VERIFUSE_ALL_DATA_MANIFEST to run");
    return;
  }
  criterion(name, [&]() -> std::pair<bool, std::string> {
    const auto cfg = root / "online.json";
    nlohmann::json j{{"dataset", "all_data"},
                     {"manifest", fs::absolute(manifest).string()},
                     {"text_encoder", "bert_base"},
                     {"image_encoder", "inception_resnet_v2"}};
    testutil::write_file(cfg, j.dump());
    const auto out = root / "online";
    const auto c = run_chain(cfg, out, "--fusion early", false);
    if (!c.ok) return {false, c.failure};
    const auto ext = detail::read_json(RunPaths{out}.extract_report());
    const int td = ext.at("text").at("dim"), id = ext.at("image").at("dim");
    const std::size_t records = ext.at("records");
    const auto& m = c.metrics.at("metrics");
    const std::size_t tp = m.at("tp"), tn = m.at("tn"), n = c.metrics.at("n");
    const std::size_t fake = tp + m.at("fn").get<std::size_t>();
    const double base = static_cast<double>(std::max(fake, n - fake)) / static_cast<double>(n);
    // One-sided P(X >= correct) under the majority-class rate.
    const boost::math::binomial_distribution<double> null_dist(static_cast<double>(n), base);
    const double p = tp + tn == 0 ? 1.0 : boost::math::cdf(boost::math::complement(null_dist, double(tp + tn - 1)));
    const bool ok = td == 768 && id == 1536 && records >= 500 && p < 0.05;
    return {ok, "dims " + std::to_string(td) + "/" + std::to_string(id) + ", " + std::to_string(records) +
                    " records, test accuracy " + fmt(double(tp + tn) / double(n)) + " vs majority " + fmt(base) +
                    ", binomial p " + fmt(p)};
  });
}

}  // namespace

int main() {
  std::cout << std::setprecision(6);
  criterion("attention oracle equivalence", attention_oracle);
  criterion("multi-head attention oracle", multi_head_oracle);
  criterion("late fusion weighted average", late_fusion_grid);
  criterion("structural fidelity and defaults", structural_fidelity);
  criterion("metrics oracle", metrics_oracle);
  criterion("ROC AUC oracle", roc_oracle);
  criterion("gradient check", gradient_check);
  testutil::TempDir tmp;
  end_to_end_and_determinism(tmp.path());
  optional_online(tmp.path());
  std::cout << (failures == 0 ? "ALL CRITERIA PASS" : std::to_string(failures) + " CRITERIA FAILED")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
