#pragma once

#include "uqasr/acoustic_model.hpp"
#include "uqasr/pgd.hpp"
#include "uqasr/training.hpp"
#include "uqasr/uncertainty.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace uqasr {

// Invalid configuration file or value; maps to a usage error on the CLI.
class ConfigError : public Error {
 public:
  using Error::Error;
};

struct DataConfig {
  int train_size = 8000;
  int heldout_size = 1000;
  int eval_size = 1000;
  int min_digits = 1;
  int max_digits = 5;
};

struct HmmConfig {
  double self_loop = 0.6;
  bool use_priors = true;
};

struct AttackGridConfig {
  std::vector<double> epsilons;  // accuracy sweep
  int num_utterances = 100;      // attacked per sweep epsilon
  int iterations = 100;
  double step_fraction = 0.05;   // step = step_fraction * epsilon
  GradientMode gradient_mode = GradientMode::SingleSample;
};

struct MeasureConfig {
  Aggregation aggregation = Aggregation::Max;
  int samples = 0;  // 0: each model's own sample count
};

struct DetectConfig {
  std::vector<double> epsilons{0.05, 0.02};
  int num_adversarial = 1000;  // attacked per detection epsilon
  int histogram_bins = 30;
};

struct ExperimentConfig {
  uint64_t seed = 1;
  std::filesystem::path output_dir = "out";
  int workers = 1;
  std::vector<ModelKind> models{kAllModelKinds.begin(), kAllModelKinds.end()};

  DataConfig data;
  TrainConfig train;
  HmmConfig hmm;
  AttackGridConfig attack;
  MeasureConfig measure;
  DetectConfig detect;

  ExperimentConfig();

  void validate() const;

  // Every epsilon that gets attacked: sweep grid plus detection epsilons.
  std::vector<double> attack_epsilons() const;
  // Utterances attacked at `epsilon` (a prefix of the eval split).
  int attack_count(double epsilon) const;

  // Stage fingerprints; each one covers everything upstream of it.
  uint64_t data_hash() const;
  uint64_t model_hash(ModelKind kind) const;
  uint64_t attack_hash(ModelKind kind) const;
  uint64_t measure_hash(ModelKind kind) const;

  nlohmann::json to_json() const;
};

// Flat INI file with [experiment], [data], [train], [hmm], [attack],
// [measure] and [detect] sections. Unknown sections or keys are rejected.
ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig parse_config(const std::string& text);

std::vector<double> parse_double_list(const std::string& text);
std::string hash_hex(uint64_t h);
std::string format_epsilon(double eps);

}  // namespace uqasr
