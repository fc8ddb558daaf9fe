#pragma once

#include "uqasr/uncertainty.hpp"

#include <json.hpp>

#include <array>
#include <map>
#include <optional>
#include <span>
#include <string>

namespace uqasr {

// One-class Gaussian fitted to benign values of a single measure.
struct DetectorModel {
  std::string measure;
  double mean = 0.0;
  double stddev = 1.0;  // unbiased (n - 1)
  size_t training_size = 0;

  nlohmann::json to_json() const;
  static DetectorModel from_json(const nlohmann::json& j);
};

DetectorModel fit_detector(std::span<const double> benign_values, const std::string& measure);

// |value - mean| / stddev; larger is more anomalous.
double anomaly_score(const DetectorModel& detector, double value);

struct RocPoint {
  double threshold = 0.0;
  double fpr = 0.0;
  double tpr = 0.0;
};

struct RocResult {
  std::vector<RocPoint> points;  // from (0, 0) to (1, 1), FPR nondecreasing
  double auroc = 0.0;
};

// Adversarial = positive class; a sample is flagged when score >= threshold.
// Trapezoidal AUROC, so ties count one half.
RocResult roc_auroc(std::span<const double> benign_scores, std::span<const double> adversarial_scores);

struct Histogram {
  double lo = 0.0;
  double width = 1.0;
  std::vector<size_t> benign;
  std::vector<size_t> adversarial;
};

Histogram make_histogram(std::span<const double> benign, std::span<const double> adversarial, int bins);

// Measure values of one utterance (benign or adversarial).
struct ScoreRow {
  std::string id;
  std::string source_id;  // the benign utterance an adversarial row came from
  double epsilon = 0.0;
  std::array<std::optional<double>, 4> values{};  // indexed by Measure

  std::optional<double> get(Measure m) const { return values[static_cast<size_t>(m)]; }
  void set(Measure m, std::optional<double> v) { values[static_cast<size_t>(m)] = v; }
  static ScoreRow from_scores(std::string id, std::string source_id, double epsilon, const UncertaintyScores& s);
};

struct AttackOutcome {
  std::string source_id;
  double epsilon = 0.0;
  double acc_target = 0.0;
  double acc_original = 0.0;
};

struct ExperimentData {
  std::vector<ScoreRow> heldout;      // detector fitting set
  std::vector<ScoreRow> benign;       // evaluation benign set
  std::vector<ScoreRow> adversarial;  // any epsilon
  std::vector<AttackOutcome> attacks;
  std::vector<Measure> measures{kAllMeasures.begin(), kAllMeasures.end()};
  std::vector<double> epsilons;
  int histogram_bins = 30;
};

struct ReportRow {
  Measure measure = Measure::Entropy;
  double epsilon = 0.0;
  std::optional<double> auroc;  // absent when the model lacks the measure
  std::optional<double> acc_target;
  std::optional<double> acc_original;
  size_t n_benign = 0;
  size_t n_adversarial = 0;
};

struct ExperimentReport {
  std::vector<ReportRow> rows;  // measures x epsilons
  std::vector<DetectorModel> detectors;
  std::map<std::pair<Measure, double>, Histogram> histograms;
  std::map<std::pair<Measure, double>, RocResult> rocs;
};

// Fits one detector per available measure on the held-out rows and scores
// the benign/adversarial sets at every epsilon. Throws if held-out ids
// overlap the evaluation ids.
ExperimentReport evaluate_experiment(const ExperimentData& data);

bool same_epsilon(double a, double b);

}  // namespace uqasr
