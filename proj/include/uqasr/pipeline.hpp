#pragma once

#include "uqasr/config.hpp"
#include "uqasr/dataset.hpp"
#include "uqasr/detector.hpp"
#include "uqasr/topology.hpp"

#include <json.hpp>

#include <filesystem>
#include <functional>
#include <string>

namespace uqasr {

struct PipelineOptions {
  bool force = false;
  std::function<void(const std::string&)> log;  // progress messages; may be empty
};

// A checkpoint together with the HMM it was trained with.
struct TrainedRecognizer {
  AcousticModel model;
  HmmTopology topology;
  StatePriors priors;
  bool use_priors = true;
  nlohmann::json meta;

  Recognizer recognizer(uint64_t predict_seed) const;
};

// One line of an attack results file.
struct AttackRecord {
  std::string id;
  double epsilon = 0.0;
  Transcript original;
  Transcript target;
  Transcript decoded;
  double acc_target = 0.0;
  double acc_original = 0.0;
  double linf = 0.0;
  int best_iteration = 0;
  double final_loss = 0.0;
  std::string status = "ok";  // "ok" or a failure reason
};

void write_attack_records(const std::filesystem::path& path, const std::vector<AttackRecord>& rows);
std::vector<AttackRecord> read_attack_records(const std::filesystem::path& path);

void write_score_rows(const std::filesystem::path& path, const std::vector<std::pair<std::string, ScoreRow>>& rows);
// (split, row) pairs; split is heldout, eval or adversarial.
std::vector<std::pair<std::string, ScoreRow>> read_score_rows(const std::filesystem::path& path);

// Runs `fn(i)` for i in [0, n) on up to `workers` threads. Results must be
// written by index; the first exception (lowest index) is rethrown.
void parallel_for(int n, int workers, const std::function<void(int)>& fn);

class Pipeline {
 public:
  explicit Pipeline(ExperimentConfig cfg, PipelineOptions opts = {});

  void synth_data();
  void train(ModelKind kind);
  void align(ModelKind kind);
  void evaluate(ModelKind kind);
  void attack(ModelKind kind);
  void measure(ModelKind kind);
  void detect(ModelKind kind);
  void report();

  // Every stage for every configured model, then the report. A dataset whose
  // stamp matches the configuration is reused unless `force` is set.
  void run_all();

  const ExperimentConfig& config() const { return cfg_; }

  std::filesystem::path data_dir() const { return cfg_.output_dir / "data"; }
  std::filesystem::path model_dir(ModelKind kind) const;
  std::filesystem::path align_dir(ModelKind kind) const;
  std::filesystem::path eval_path(ModelKind kind) const;
  std::filesystem::path attack_dir(ModelKind kind) const;
  std::filesystem::path scores_path(ModelKind kind) const;
  std::filesystem::path detect_dir(ModelKind kind) const;
  std::filesystem::path report_dir() const { return cfg_.output_dir / "report"; }
  std::filesystem::path manifest_path() const { return cfg_.output_dir / "manifest.json"; }

  TrainedRecognizer load_recognizer(ModelKind kind) const;

 private:
  void log(const std::string& msg) const;
  std::vector<UtteranceRecord> split(std::string_view name) const;
  void record_stage(const std::string& stage, uint64_t hash, const std::vector<std::filesystem::path>& artifacts,
                    const std::string& started) const;

  ExperimentConfig cfg_;
  PipelineOptions opts_;
};

}  // namespace uqasr
