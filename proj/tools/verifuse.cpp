#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "verifuse/pipeline.hpp"

namespace {

// Turns leftover "--key value" / "--key=value" tokens into config overrides.
std::vector<std::pair<std::string, std::string>> parse_extras(const std::vector<std::string>& extra) {
  std::vector<std::pair<std::string, std::string>> out;
  for (std::size_t i = 0; i < extra.size(); ++i) {
    const std::string& tok = extra[i];
    if (tok.rfind("--", 0) != 0 || tok.size() < 3)
      throw verifuse::ConfigError("unexpected argument '" + tok + "' (overrides take the form --key value)");
    const auto eq = tok.find('=');
    if (eq != std::string::npos) {
      out.emplace_back(tok.substr(2, eq - 2), tok.substr(eq + 1));
    } else {
      if (i + 1 >= extra.size()) throw verifuse::ConfigError("flag " + tok + " needs a value");
      out.emplace_back(tok.substr(2), extra[++i]);
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"verifuse: multimodal fake-news detection pipeline"};
  app.require_subcommand(1, 1);
  app.fallthrough();
  app.allow_extras();

  std::string config_path, seed, dataset, fusion, text_encoder, image_encoder;
  app.add_option("--config", config_path, "JSON run configuration");
  app.add_option("--seed", seed, "Seed for splits, initialisation and batching");
  app.add_option("--dataset", dataset, "all_data | weibo | mediaeval | synthetic");
  app.add_option("--fusion", fusion, "early | late");
  app.add_option("--text-encoder", text_encoder, "bert_base | albert_base | stub_text");
  app.add_option("--image-encoder", image_encoder, "inception_resnet_v2 | stub_image");

  verifuse::PredictInput predict;
  const std::vector<std::pair<const char*, const char*>> commands{
      {"ingest", "Load the manifest, fetch images, clean and split"},
      {"extract", "Tokenize, encode both modalities, cache features and fit scalers"},
      {"train", "Train the configured fusion model"},
      {"evaluate", "Score the test split; write metrics.json and plots"},
      {"sweep", "Late-fusion weight sweep on the test split"},
      {"predict", "Classify one text and one image"}};
  std::vector<CLI::App*> subs;
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->allow_extras();
    if (std::string(name) == "predict") {
      sub->add_option("--text", predict.text, "News text")->required();
      sub->add_option("--image", predict.image, "Image file")->required();
    }
    subs.push_back(sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : verifuse::kExitConfig;
  }

  CLI::App* chosen = nullptr;
  for (auto* s : subs)
    if (s->parsed()) chosen = s;

  try {
    auto extras = app.remaining();
    for (auto& e : chosen->remaining()) extras.push_back(e);
    auto overrides = parse_extras(extras);
    auto add = [&](const char* key, const std::string& v) {
      if (!v.empty()) overrides.emplace_back(key, v);
    };
    add("seed", seed);
    add("dataset", dataset);
    add("fusion", fusion);
    add("text_encoder", text_encoder);
    add("image_encoder", image_encoder);
    const auto cfg = verifuse::load_run_config(config_path, overrides);
    return verifuse::run_command(chosen->get_name(), cfg, predict);
  } catch (const verifuse::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return verifuse::kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return verifuse::kExitError;
  }
}
