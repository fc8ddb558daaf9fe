// Command-line driver for the digit recognizer experiments.

#include "uqasr/pipeline.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitArtifact = 2;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Uncertainty-aware hybrid HMM-DNN digit recognizer: training, attacks and detection"};
  app.require_subcommand(1, 1);

  std::string config_path;
  std::string model_name;
  std::optional<uint64_t> seed;
  std::optional<int> workers;
  bool force = false;

  const std::vector<std::pair<std::string, std::string>> commands{
      {"synth-data", "Synthesize the train/heldout/eval digit corpus"},
      {"train", "Train acoustic models (flat start, CE epochs, Viterbi epochs)"},
      {"align", "Forced-align every split with a trained model"},
      {"attack", "Run targeted PGD attacks over the epsilon grid"},
      {"measure", "Compute uncertainty measures for benign and adversarial audio"},
      {"detect", "Fit one-class detectors and report AUROC"},
      {"evaluate", "Decode the benign eval split and report word accuracy"},
      {"report", "Collect accuracy curves, histograms and ROC data"},
  };
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "Experiment config (INI)")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "Override the master seed");
    sub->add_option("--workers", workers, "Worker threads")->check(CLI::PositiveNumber);
    sub->add_flag("--force", force, "Overwrite existing outputs");
    if (name != "synth-data" && name != "report") {
      sub->add_option("--model", model_name, "Model kind (default: every model in the config)")
          ->check(CLI::IsMember({"fnn", "ensemble", "dropout", "bnn"}));
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitUsage;
  }

  try {
    uqasr::ExperimentConfig cfg = uqasr::load_config(config_path);
    if (seed) cfg.seed = *seed;
    if (workers) cfg.workers = *workers;
    std::vector<uqasr::ModelKind> kinds = cfg.models;
    if (!model_name.empty()) kinds = {uqasr::parse_model_kind(model_name)};

    uqasr::PipelineOptions opts;
    opts.force = force;
    opts.log = [](const std::string& msg) { std::cerr << msg << std::endl; };
    uqasr::Pipeline pipeline(cfg, opts);

    const std::string cmd = app.get_subcommands().front()->get_name();
    if (cmd == "synth-data") {
      pipeline.synth_data();
    } else if (cmd == "report") {
      pipeline.report();
    } else {
      for (uqasr::ModelKind kind : kinds) {
        if (cmd == "train") pipeline.train(kind);
        else if (cmd == "align") pipeline.align(kind);
        else if (cmd == "attack") pipeline.attack(kind);
        else if (cmd == "measure") pipeline.measure(kind);
        else if (cmd == "detect") pipeline.detect(kind);
        else if (cmd == "evaluate") pipeline.evaluate(kind);
      }
    }
  } catch (const uqasr::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitArtifact;
  }
  return 0;
}
