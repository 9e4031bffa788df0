#pragma once

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "verifuse/config.hpp"
#include "verifuse/corpus.hpp"
#include "verifuse/encoder_hub.hpp"
#include "verifuse/fetch.hpp"
#include "verifuse/fusion.hpp"
#include "verifuse/image.hpp"
#include "verifuse/metrics.hpp"
#include "verifuse/plot.hpp"
#include "verifuse/scaler.hpp"
#include "verifuse/tokenizer.hpp"
#include "verifuse/training.hpp"

namespace verifuse {

namespace fs = std::filesystem;

/// Another command holds the output directory.
class LockBusy : public Error {
 public:
  using Error::Error;
};

enum ExitCode : int { kExitOk = 0, kExitError = 1, kExitMissing = 2, kExitConfig = 3, kExitLocked = 4 };

/// Artifact locations inside the output directory.
struct RunPaths {
  fs::path root;
  fs::path corpus() const { return root / "corpus.jsonl"; }
  fs::path splits() const { return root / "splits.json"; }
  fs::path ingest_report() const { return root / "ingest_report.json"; }
  fs::path vocab() const { return root / "vocab.txt"; }
  fs::path text_features() const { return root / "features" / "text.fvc"; }
  fs::path image_features() const { return root / "features" / "image.fvc"; }
  fs::path text_scaler() const { return root / "scaler_text.json"; }
  fs::path image_scaler() const { return root / "scaler_image.json"; }
  fs::path extract_report() const { return root / "extract.json"; }
  fs::path model() const { return root / "model"; }
  fs::path history() const { return root / "history.json"; }
  fs::path metrics() const { return root / "metrics.json"; }
  fs::path acc_plot() const { return root / "acc_epoch.png"; }
  fs::path loss_plot() const { return root / "loss_epoch.png"; }
  fs::path roc_plot() const { return root / "roc.png"; }
  fs::path sweep_csv() const { return root / "sweep.csv"; }
  fs::path sweep_json() const { return root / "sweep.json"; }
  fs::path lock() const { return root / ".verifuse.lock"; }
};

/// Exclusive advisory lock on the output directory for the command's lifetime.
class DirectoryLock {
 public:
  explicit DirectoryLock(const fs::path& file) {
    fd_ = ::open(file.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
    if (fd_ < 0) throw Error("cannot open lock file " + file.string());
    if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
      ::close(fd_);
      throw LockBusy("output directory is in use by another verifuse command (" + file.string() + ")");
    }
  }
  ~DirectoryLock() {
    if (fd_ >= 0) {
      ::flock(fd_, LOCK_UN);
      ::close(fd_);
    }
  }
  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;

 private:
  int fd_ = -1;
};

namespace detail {

inline void write_text_atomic(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << text;
    if (!out) throw Error("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

inline void write_json(const fs::path& path, const nlohmann::ordered_json& j) { write_text_atomic(path, j.dump(2) + "\n"); }

inline nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

inline void require(const fs::path& p, const std::string& stage) {
  if (!fs::exists(p)) {
    throw MissingArtifact("missing " + p.string() + "; run `verifuse " + stage + "` first", stage);
  }
}

inline std::string fmt_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

struct Corpus {
  std::vector<NewsRecord> records;
  SplitManifest splits;
  std::map<std::string, std::size_t> index;
};

inline Corpus load_corpus(const RunPaths& p) {
  require(p.corpus(), "ingest");
  require(p.splits(), "ingest");
  Corpus c;
  c.records = read_corpus_jsonl(p.corpus());
  c.splits = split_from_json(read_json(p.splits()));
  for (std::size_t i = 0; i < c.records.size(); ++i) c.index[c.records[i].id] = i;
  return c;
}

inline std::string extract_fingerprint(const nlohmann::json& report, const char* modality) {
  return report.at(modality).at("fingerprint").get<std::string>();
}

/// Loaded, scaled features of the whole corpus plus split views.
struct ScaledFeatures {
  std::map<std::string, std::size_t> row;  // record id -> feature row
  std::vector<FeatureVector> text, image;
  std::string text_fp, image_fp;
  int text_dim = 0, image_dim = 0;
};

inline ScaledFeatures load_scaled_features(const RunConfig& cfg, const RunPaths& p) {
  for (const auto& f : {p.extract_report(), p.text_features(), p.image_features(), p.text_scaler(), p.image_scaler()})
    require(f, "extract");
  const auto report = read_json(p.extract_report());
  const auto t_backend = report.at("text").at("backend").get<std::string>();
  const auto i_backend = report.at("image").at("backend").get<std::string>();
  if (t_backend != to_string(cfg.text_backend) || i_backend != to_string(cfg.image_backend)) {
    throw MissingArtifact("features were extracted with " + t_backend + "/" + i_backend + " but the config selects " +
                              std::string(to_string(cfg.text_backend)) + "/" +
                              std::string(to_string(cfg.image_backend)) + "; run `verifuse extract` first",
                          "extract");
  }
  ScaledFeatures s;
  s.text_fp = extract_fingerprint(report, "text");
  s.image_fp = extract_fingerprint(report, "image");
  s.text = load_features(p.text_features(), s.text_fp);
  s.image = load_features(p.image_features(), s.image_fp);
  if (s.text.size() != s.image.size()) throw CacheError("text and image caches hold different record counts");
  const auto ts = load_scaler(p.text_scaler()), is = load_scaler(p.image_scaler());
  for (std::size_t i = 0; i < s.text.size(); ++i) {
    if (s.text[i].record_id != s.image[i].record_id) throw CacheError("text and image caches disagree on record order");
    s.text[i] = apply_scaler(ts, s.text[i]);
    s.image[i] = apply_scaler(is, s.image[i]);
    s.row[s.text[i].record_id] = i;
  }
  s.text_dim = s.text.empty() ? 0 : static_cast<int>(s.text[0].dim());
  s.image_dim = s.image.empty() ? 0 : static_cast<int>(s.image[0].dim());
  const auto expect_t = cfg.text_spec().out_dim, expect_i = cfg.image_spec().out_dim;
  if (s.text_dim != expect_t || s.image_dim != expect_i) {
    throw ConfigError("cached feature dims " + std::to_string(s.text_dim) + "/" + std::to_string(s.image_dim) +
                      " disagree with the configured encoders (" + std::to_string(expect_t) + "/" +
                      std::to_string(expect_i) + ")");
  }
  return s;
}

inline FeatureSet feature_set(const ScaledFeatures& f, const Corpus& c, const std::vector<std::string>& ids) {
  FeatureSet fs_;
  fs_.ids = ids;
  fs_.text.resize(static_cast<Eigen::Index>(ids.size()), f.text_dim);
  fs_.image.resize(static_cast<Eigen::Index>(ids.size()), f.image_dim);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto it = f.row.find(ids[i]);
    const auto rec = c.index.find(ids[i]);
    if (it == f.row.end() || rec == c.index.end())
      throw MissingArtifact("record " + ids[i] + " has no cached features; run `verifuse extract` first", "extract");
    const auto& t = f.text[it->second].values;
    const auto& im = f.image[it->second].values;
    for (int j = 0; j < f.text_dim; ++j) fs_.text(static_cast<Eigen::Index>(i), j) = t[static_cast<std::size_t>(j)];
    for (int j = 0; j < f.image_dim; ++j) fs_.image(static_cast<Eigen::Index>(i), j) = im[static_cast<std::size_t>(j)];
    fs_.labels.push_back(*c.records[rec->second].label);
  }
  return fs_;
}

inline Vocabulary resolve_vocabulary(const RunConfig& cfg, const RunPaths& p, const Corpus* corpus) {
  if (is_pretrained(cfg.text_backend)) {
    const auto v = checkpoint_dir(cfg.text_spec()) / "vocab.txt";
    if (!fs::exists(v))
      throw BackendUnavailable("checkpoint " + v.parent_path().string() +
                               " has no vocab.txt; create it with `encoder_bridge.py export-vocab`");
    return Vocabulary::load(v);
  }
  if (!cfg.vocab.empty()) {
    if (!fs::exists(cfg.vocab)) throw ConfigError("vocab file " + cfg.vocab.string() + " does not exist");
    return Vocabulary::load(cfg.vocab);
  }
  if (!corpus) return Vocabulary::load(p.vocab());
  std::vector<std::string> texts;
  for (const auto& id : corpus->splits.train_ids) texts.push_back(corpus->records.at(corpus->index.at(id)).text);
  return build_vocabulary(texts, cfg.tokenize_mode());
}

inline StubTextSpec resolved_stub_text(const RunConfig& cfg, const Vocabulary& vocab) {
  StubTextSpec s = cfg.stub_text;
  if (s.vocab_size == 0) s.vocab_size = static_cast<int>(vocab.size());
  return s;
}

inline std::unique_ptr<TextEncoder> text_encoder_for(const RunConfig& cfg, const Vocabulary& vocab) {
  EncoderSpec spec = cfg.text_spec();
  spec.stub_text = resolved_stub_text(cfg, vocab);
  return make_text_encoder(spec);
}

// Cache is reusable when its producer, dimension and record list all match.
inline bool cache_matches(const fs::path& path, const std::string& fp, std::size_t dim,
                          const std::vector<std::string>& ids) {
  if (!fs::exists(path)) return false;
  try {
    const auto h = read_feature_cache_header(path);
    if (h.fingerprint != fp || h.dim != dim || h.count != ids.size()) return false;
    const auto f = load_features(path, fp, dim);
    for (std::size_t i = 0; i < ids.size(); ++i)
      if (f[i].record_id != ids[i]) return false;
    return true;
  } catch (const Error&) {
    return false;
  }
}

inline nlohmann::ordered_json history_json(const TrainReport& r) {
  nlohmann::ordered_json j = to_json(r.history);
  if (r.kind == FusionKind::late) {
    j["text_head"] = to_json(r.text_head);
    j["image_head"] = to_json(r.image_head);
  }
  return j;
}

inline nlohmann::ordered_json weights_json(const FusionModel& m) {
  if (const auto* l = std::get_if<LateFusionModel>(&m)) return {l->weights.text, l->weights.image};
  return nullptr;
}

}  // namespace detail

/// Downloads or copies images, cleans records and writes the seeded split.
inline void cmd_ingest(const RunConfig& cfg, const Transport& transport = http_get, std::ostream& log = std::cerr) {
  const RunPaths p{cfg.output_dir};
  if (cfg.manifest.empty()) throw ConfigError("ingest needs a manifest (set \"manifest\" or pass --manifest)");
  if (!fs::exists(cfg.manifest)) throw ConfigError("manifest " + cfg.manifest.string() + " does not exist");
  const auto hash = cfg.hash();

  auto loaded = load_manifest(cfg.manifest, cfg.dataset);
  const fs::path base = cfg.image_root.empty() ? cfg.manifest.parent_path() : cfg.image_root;
  ImageCache cache(cfg.cache_dir);
  std::vector<std::string> fetch_errors;
  log << "ingest: " << loaded.records.size() << " rows, fetching images with " << cfg.fetch_workers << " workers\n";
  fetch_all(loaded.records, cache, transport, cfg.fetch, base, static_cast<unsigned>(cfg.fetch_workers),
            &fetch_errors);
  const auto clean = clean_dataset(loaded.records);
  if (clean.size() < 10)
    throw DataError("only " + std::to_string(clean.size()) + " usable records after cleaning; need at least 10");
  const auto split = split_dataset(clean, cfg.seed);

  std::size_t fetched = 0, fakes = 0;
  auto errs = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < loaded.records.size(); ++i) {
    if (loaded.records[i].fetch_status == FetchStatus::ok) ++fetched;
    else errs.push_back({{"id", loaded.records[i].id}, {"error", fetch_errors[i]}});
  }
  for (const auto& r : clean) fakes += (*r.label == Label::fake);
  auto issues = nlohmann::ordered_json::array();
  for (const auto& is : loaded.issues) issues.push_back({{"line", is.line}, {"message", is.message}});

  fs::create_directories(p.root);
  write_corpus_jsonl(p.corpus(), clean, hash);
  auto sj = to_json(split);
  sj["config_hash"] = hash;
  detail::write_json(p.splits(), sj);
  nlohmann::ordered_json rep;
  rep["config_hash"] = hash;
  rep["dataset"] = std::string(to_string(cfg.dataset));
  rep["rows"] = loaded.records.size();
  rep["images_ok"] = fetched;
  rep["records_kept"] = clean.size();
  rep["records_dropped"] = loaded.records.size() - clean.size();
  rep["class_counts"] = {{"fake", fakes}, {"real", clean.size() - fakes}};
  rep["splits"] = {{"train", split.train_ids.size()}, {"val", split.val_ids.size()}, {"test", split.test_ids.size()}};
  rep["row_issues"] = issues;
  rep["fetch_errors"] = errs;
  detail::write_json(p.ingest_report(), rep);
  log << "ingest: kept " << clean.size() << " of " << loaded.records.size() << " records (train "
      << split.train_ids.size() << ", val " << split.val_ids.size() << ", test " << split.test_ids.size() << ")\n";
}

/// Tokenizes, encodes both modalities, caches features and fits the scalers.
inline void cmd_extract(const RunConfig& cfg, std::ostream& log = std::cerr) {
  const RunPaths p{cfg.output_dir};
  const auto corpus = detail::load_corpus(p);
  const auto hash = cfg.hash();
  const auto vocab = detail::resolve_vocabulary(cfg, p, &corpus);
  vocab.save(p.vocab());

  const auto text_enc = detail::text_encoder_for(cfg, vocab);
  const auto image_enc = make_image_encoder(cfg.image_spec());
  std::vector<std::string> ids;
  for (const auto& r : corpus.records) ids.push_back(r.id);
  const std::size_t bs = cfg.extract_batch_size;

  if (detail::cache_matches(p.text_features(), text_enc->fingerprint(), static_cast<std::size_t>(text_enc->out_dim()), ids)) {
    log << "extract: text features up to date\n";
  } else {
    std::vector<FeatureVector> feats;
    for (std::size_t s = 0; s < ids.size(); s += bs) {
      const std::size_t e = std::min(ids.size(), s + bs);
      std::vector<TokenizedText> batch;
      for (std::size_t i = s; i < e; ++i)
        batch.push_back(tokenize_text(corpus.records[i].text, cfg.seq_len(), cfg.tokenize_mode(), vocab));
      auto out = encode_text_batch(*text_enc, batch, std::span<const std::string>(ids).subspan(s, e - s));
      for (auto& f : out) feats.push_back(std::move(f));
    }
    cache_features(feats, p.text_features(), Modality::text, text_enc->fingerprint(),
                   static_cast<std::size_t>(text_enc->out_dim()));
    log << "extract: encoded " << feats.size() << " texts\n";
  }

  if (detail::cache_matches(p.image_features(), image_enc->fingerprint(), static_cast<std::size_t>(image_enc->out_dim()), ids)) {
    log << "extract: image features up to date\n";
  } else {
    std::vector<FeatureVector> feats;
    for (std::size_t s = 0; s < ids.size(); s += bs) {
      const std::size_t e = std::min(ids.size(), s + bs);
      std::vector<ImageArray> batch;
      for (std::size_t i = s; i < e; ++i) {
        const auto& r = corpus.records[i];
        if (r.image_path.empty() || !fs::exists(r.image_path))
          throw MissingArtifact("cached image for " + r.id + " is missing; run `verifuse ingest` first", "ingest");
        batch.push_back(prepare_image(read_file_bytes(r.image_path), image_enc->input_range()));
      }
      auto out = encode_image_batch(*image_enc, batch, std::span<const std::string>(ids).subspan(s, e - s));
      for (auto& f : out) feats.push_back(std::move(f));
    }
    cache_features(feats, p.image_features(), Modality::image, image_enc->fingerprint(),
                   static_cast<std::size_t>(image_enc->out_dim()));
    log << "extract: encoded " << feats.size() << " images\n";
  }

  // Scalers see the training split only.
  const auto tf = load_features(p.text_features(), text_enc->fingerprint());
  const auto imf = load_features(p.image_features(), image_enc->fingerprint());
  std::vector<FeatureVector> ttrain, itrain;
  for (const auto& id : corpus.splits.train_ids) {
    const auto i = corpus.index.at(id);
    ttrain.push_back(tf[i]);
    itrain.push_back(imf[i]);
  }
  auto tsj = to_json(fit_scaler(ttrain));
  tsj["config_hash"] = hash;
  detail::write_json(p.text_scaler(), tsj);
  auto isj = to_json(fit_scaler(itrain));
  isj["config_hash"] = hash;
  detail::write_json(p.image_scaler(), isj);

  nlohmann::ordered_json rep;
  rep["config_hash"] = hash;
  rep["records"] = ids.size();
  rep["tokenizer"] = {{"mode", cfg.tokenize_mode() == TokenizeMode::char_level ? "char_level" : "wordpiece"},
                      {"max_seq_len", cfg.seq_len()},
                      {"vocab_size", vocab.size()},
                      {"vocab_sha256", sha256_hex(read_file_bytes(p.vocab()))}};
  rep["text"] = {{"backend", std::string(to_string(cfg.text_backend))},
                 {"dim", text_enc->out_dim()},
                 {"fingerprint", text_enc->fingerprint()}};
  rep["image"] = {{"backend", std::string(to_string(cfg.image_backend))},
                  {"dim", image_enc->out_dim()},
                  {"fingerprint", image_enc->fingerprint()},
                  {"input_range", {image_enc->input_range().lo, image_enc->input_range().hi}}};
  rep["frozen"] = EncoderSpec::frozen();
  detail::write_json(p.extract_report(), rep);
}

/// Trains the configured fusion model from cached features.
inline TrainReport cmd_train(const RunConfig& cfg, std::ostream& log = std::cerr) {
  const RunPaths p{cfg.output_dir};
  const auto corpus = detail::load_corpus(p);
  const auto feats = detail::load_scaled_features(cfg, p);
  const auto train_set = detail::feature_set(feats, corpus, corpus.splits.train_ids);
  const auto val_set = detail::feature_set(feats, corpus, corpus.splits.val_ids);
  const auto hash = cfg.hash();

  FusionModel model = cfg.fusion == FusionKind::early
                          ? FusionModel(EarlyFusionModel(feats.text_dim, feats.image_dim, cfg.train.dropout))
                          : FusionModel(LateFusionModel(feats.text_dim, feats.image_dim, cfg.late_weights,
                                                        cfg.train.dropout));
  initialize_model(model, cfg.seed);
  log << "train: " << to_string(cfg.fusion) << " fusion, " << train_set.size() << " train / " << val_set.size()
      << " val, " << cfg.train.epochs << " epochs\n";
  const auto report = train(model, train_set, val_set, cfg.train);

  save_checkpoint(model, p.model(),
                  {{"config_hash", hash}, {"text_fingerprint", feats.text_fp}, {"image_fingerprint", feats.image_fp}});
  auto hj = detail::history_json(report);
  nlohmann::ordered_json out;
  out["config_hash"] = hash;
  out["fusion"] = std::string(to_string(cfg.fusion));
  out["weights"] = detail::weights_json(model);
  out["total_steps"] = report.history.total_steps();
  for (auto it = hj.begin(); it != hj.end(); ++it) out[it.key()] = it.value();
  detail::write_json(p.history(), out);
  const auto& last = report.history.epochs.back();
  log << "train: final val accuracy " << last.val_accuracy << ", val loss " << last.val_loss << "\n";
  return report;
}

namespace detail {

struct LoadedModel {
  FusionModel model;
  nlohmann::json arch;
};

inline LoadedModel load_trained(const RunPaths& p, const ScaledFeatures& f) {
  require(p.model() / "arch.json", "train");
  require(p.history(), "train");
  LoadedModel m{load_checkpoint(p.model()), read_arch(p.model())};
  if (m.arch.value("text_fingerprint", "") != f.text_fp || m.arch.value("image_fingerprint", "") != f.image_fp) {
    throw MissingArtifact("model was trained on different features; run `verifuse train` first", "train");
  }
  return m;
}

inline void plot_history(const nlohmann::json& history, const std::string& hash, const RunPaths& p) {
  const auto h = history_from_json(history);
  plot::Series ta{"train", {}, {}, {200, 80, 30}}, va{"validation", {}, {}, {40, 40, 220}, true};
  plot::Series tl = ta, vl = va;
  for (const auto& e : h.epochs) {
    for (auto* s : {&ta, &va, &tl, &vl}) s->x.push_back(e.epoch);
    ta.y.push_back(e.train_accuracy);
    va.y.push_back(e.val_accuracy);
    tl.y.push_back(e.train_loss);
    vl.y.push_back(e.val_loss);
  }
  const std::string footer = "config " + hash;
  plot::render({"Accuracy per epoch", "epoch", "accuracy", footer, {ta, va}, std::nullopt, std::pair{0.0, 1.0}},
               p.acc_plot());
  plot::render({"Loss per epoch", "epoch", "loss", footer, {tl, vl}, std::nullopt, std::nullopt}, p.loss_plot());
}

inline void plot_roc(const RocCurve& roc, double auc, const std::string& hash, const RunPaths& p) {
  plot::Series curve{"ROC (AUC " + fmt_num(std::round(auc * 10000) / 10000) + ")", {}, {}, {200, 80, 30}};
  for (const auto& pt : roc.points) {
    curve.x.push_back(pt.fpr);
    curve.y.push_back(pt.tpr);
  }
  plot::Series chance{"chance", {0, 1}, {0, 1}, {150, 150, 150}, true};
  plot::render({"ROC curve", "false positive rate", "true positive rate", "config " + hash, {curve, chance},
                std::pair{0.0, 1.0}, std::pair{0.0, 1.0}},
               p.roc_plot());
}

}  // namespace detail

/// Scores the trained model on the test split; writes metrics.json and plots.
inline MetricsReport cmd_evaluate(const RunConfig& cfg, std::ostream& log = std::cerr) {
  const RunPaths p{cfg.output_dir};
  const auto corpus = detail::load_corpus(p);
  const auto feats = detail::load_scaled_features(cfg, p);
  const auto loaded = detail::load_trained(p, feats);
  const auto test = detail::feature_set(feats, corpus, corpus.splits.test_ids);
  const auto hash = cfg.hash();
  const auto history = detail::read_json(p.history());

  const auto probs = predict_probabilities(loaded.model, test);
  const auto m = evaluate_predictions(probs, test.labels);
  nlohmann::ordered_json j;
  j["config_hash"] = hash;
  j["split"] = "test";
  j["n"] = test.size();
  j["fusion"] = std::string(to_string(kind_of(loaded.model)));
  j["weights"] = detail::weights_json(loaded.model);
  j["positive_class"] = "fake";
  j["label_encoding"] = {{"fake", 1}, {"real", 0}};
  j["threshold"] = 0.5;
  j["metrics"] = to_json(m);
  const auto& last = history.at("epochs").back();
  j["final_val_accuracy"] = last.at("val_accuracy");
  if (const auto* l = std::get_if<LateFusionModel>(&loaded.model)) {
    const auto pt = detail::to_pairs(l->text_head.forward(test.text, Mode::infer));
    const auto pi = detail::to_pairs(l->image_head.forward(test.image, Mode::infer));
    j["heads"] = {{"text", to_json(evaluate_predictions(pt, test.labels))},
                  {"image", to_json(evaluate_predictions(pi, test.labels))}};
  }
  detail::write_json(p.metrics(), j);
  detail::plot_history(history, hash, p);
  if (!m.roc.points.empty()) {
    detail::plot_roc(m.roc, m.roc.auc, hash, p);
  } else {
    log << "evaluate: test split holds a single class; roc.png shows only the chance line\n";
    detail::plot_roc({}, 0.5, hash, p);
  }
  log << "evaluate: test accuracy " << m.accuracy << ", precision " << m.precision << ", recall " << m.recall
      << ", f1 " << m.f1 << "\n";
  return m;
}

/// Re-fuses the late-fusion heads under each configured weight pair.
inline std::vector<SweepRow> cmd_sweep(const RunConfig& cfg, std::ostream& log = std::cerr) {
  const RunPaths p{cfg.output_dir};
  detail::require(p.model() / "arch.json", "train");
  if (parse_fusion(read_arch(p.model()).at("fusion").get<std::string>()) != FusionKind::late) {
    throw ConfigError("sweep requires a late-fusion checkpoint; retrain with --fusion late");
  }
  const auto corpus = detail::load_corpus(p);
  const auto feats = detail::load_scaled_features(cfg, p);
  const auto loaded = detail::load_trained(p, feats);
  const auto test = detail::feature_set(feats, corpus, corpus.splits.test_ids);
  const auto hash = cfg.hash();
  const auto rows = weight_sweep(std::get<LateFusionModel>(loaded.model), test, cfg.sweep_weights);

  std::string csv = "# config_hash: " + hash + "\nfusion,w1,w2,accuracy,precision,recall,f1\n";
  auto arr = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    csv += "late," + detail::fmt_num(r.weights.text) + "," + detail::fmt_num(r.weights.image) + "," +
           detail::fmt_num(r.metrics.accuracy) + "," + detail::fmt_num(r.metrics.precision) + "," +
           detail::fmt_num(r.metrics.recall) + "," + detail::fmt_num(r.metrics.f1) + "\n";
    arr.push_back({{"w1", r.weights.text}, {"w2", r.weights.image}, {"metrics", to_json(r.metrics)}});
  }
  detail::write_text_atomic(p.sweep_csv(), csv);
  detail::write_json(p.sweep_json(), {{"config_hash", hash}, {"split", "test"}, {"fusion", "late"}, {"rows", arr}});
  log << "sweep: " << rows.size() << " weight pairs written to " << p.sweep_csv().string() << "\n";
  return rows;
}

/// Classifies one text and one image with the trained model.
inline nlohmann::ordered_json cmd_predict(const RunConfig& cfg, const std::string& text, const fs::path& image) {
  const RunPaths p{cfg.output_dir};
  if (!fs::exists(image)) throw ConfigError("image " + image.string() + " does not exist");
  for (const auto& f : {p.vocab(), p.extract_report(), p.text_scaler(), p.image_scaler()}) detail::require(f, "extract");
  detail::require(p.model() / "arch.json", "train");
  const auto report = detail::read_json(p.extract_report());
  const auto vocab = Vocabulary::load(p.vocab());
  const auto text_enc = detail::text_encoder_for(cfg, vocab);
  const auto image_enc = make_image_encoder(cfg.image_spec());
  if (text_enc->fingerprint() != detail::extract_fingerprint(report, "text") ||
      image_enc->fingerprint() != detail::extract_fingerprint(report, "image")) {
    throw MissingArtifact("configured encoders differ from the ones used at extraction; run `verifuse extract` first",
                          "extract");
  }
  const auto model = load_checkpoint(p.model());
  const auto arch = read_arch(p.model());
  if (arch.value("text_fingerprint", "") != text_enc->fingerprint() ||
      arch.value("image_fingerprint", "") != image_enc->fingerprint())
    throw MissingArtifact("model was trained on different features; run `verifuse train` first", "train");

  const std::string cleaned = cfg.dataset == Dataset::mediaeval ? clean_tweet_text(text) : text;
  const std::vector<TokenizedText> tok{tokenize_text(cleaned, cfg.seq_len(), cfg.tokenize_mode(), vocab)};
  const std::vector<ImageArray> img{prepare_image(read_file_bytes(image), image_enc->input_range())};
  const auto tv = apply_scaler(load_scaler(p.text_scaler()), encode_text_batch(*text_enc, tok)[0]);
  const auto iv = apply_scaler(load_scaler(p.image_scaler()), encode_image_batch(*image_enc, img)[0]);

  FeatureSet one;
  one.ids = {"input"};
  one.labels = {Label::real};
  one.text.resize(1, static_cast<Eigen::Index>(tv.dim()));
  one.image.resize(1, static_cast<Eigen::Index>(iv.dim()));
  for (std::size_t j = 0; j < tv.dim(); ++j) one.text(0, static_cast<Eigen::Index>(j)) = tv.values[j];
  for (std::size_t j = 0; j < iv.dim(); ++j) one.image(0, static_cast<Eigen::Index>(j)) = iv.values[j];
  const auto pr = predict_probabilities(model, one)[0];

  nlohmann::ordered_json j;
  j["config_hash"] = cfg.hash();
  j["fusion"] = std::string(to_string(kind_of(model)));
  j["p_fake"] = pr.fake;
  j["p_real"] = pr.real;
  j["label"] = std::string(to_string(predict_label(pr)));
  return j;
}

/// Extra inputs of the predict subcommand.
struct PredictInput {
  std::string text;
  std::string image;
};

/// Runs one subcommand under the directory lock and maps errors to exit codes.
inline int run_command(const std::string& command, const RunConfig& cfg, const PredictInput& predict = {},
                       std::ostream& out = std::cout, std::ostream& err = std::cerr,
                       const Transport& transport = http_get) {
  try {
    fs::create_directories(cfg.output_dir);
    DirectoryLock lock(RunPaths{cfg.output_dir}.lock());
    if (command == "ingest") cmd_ingest(cfg, transport, err);
    else if (command == "extract") cmd_extract(cfg, err);
    else if (command == "train") cmd_train(cfg, err);
    else if (command == "evaluate") cmd_evaluate(cfg, err);
    else if (command == "sweep") cmd_sweep(cfg, err);
    else if (command == "predict") out << cmd_predict(cfg, predict.text, predict.image).dump(2) << "\n";
    else throw ConfigError("unknown command '" + command + "'");
    return kExitOk;
  } catch (const MissingArtifact& e) {
    err << "error: " << e.what() << "\n";
    return kExitMissing;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const LockBusy& e) {
    err << "error: " << e.what() << "\n";
    return kExitLocked;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitError;
  }
}

}  // namespace verifuse
