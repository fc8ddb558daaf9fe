#pragma once

#include "uqasr/acoustic_model.hpp"

#include <optional>

namespace uqasr {

using DistributionRef = Eigen::Ref<const RowVector>;

// -sum p ln p with 0 ln 0 = 0. Throws if p is not normalized within 1e-6.
double frame_entropy(const DistributionRef& p);

// Max over frames of the entropy of each row.
double utterance_entropy(const Matrix& posteriors);

// Rows of `samples` are the T sampled distributions of one frame (T >= 2).
double frame_mutual_information(const Matrix& samples);
// sum_c [ mean_t p_tc^2 - (mean_t p_tc)^2 ]
double frame_variance(const Matrix& samples);
// Mean KL between consecutive draws, in drawing order; probabilities floored at 1e-12.
double frame_akld(const Matrix& samples);

enum class Aggregation { Max, Mean };

std::string_view to_string(Aggregation a);
Aggregation parse_aggregation(std::string_view name);

enum class Measure { Entropy, MutualInformation, Variance, Akld };

inline constexpr std::array<Measure, 4> kAllMeasures{Measure::Variance, Measure::Akld, Measure::MutualInformation,
                                                     Measure::Entropy};
std::string_view to_string(Measure m);
Measure parse_measure(std::string_view name);

struct UncertaintyScores {
  double entropy = 0.0;
  std::optional<double> mutual_information;  // sampled models only
  std::optional<double> variance;
  std::optional<double> akld;

  std::vector<double> entropy_trace;
  std::vector<double> mi_trace;
  std::vector<double> variance_trace;
  std::vector<double> akld_trace;

  std::optional<double> get(Measure m) const;
};

// Scores from an already sampled T x (frames x classes) tensor.
UncertaintyScores scores_from_samples(const std::vector<Matrix>& samples, Aggregation agg = Aggregation::Max);
// Entropy-only scores for a single deterministic prediction.
UncertaintyScores scores_from_posteriors(const Matrix& posteriors, Aggregation agg = Aggregation::Max);

// fNN -> entropy only; sampled models -> all four measures from T samples
// drawn with `seed` (T <= 0 uses the model's own count).
UncertaintyScores measure_utterance(const AcousticModel& model, const Matrix& feats, int T, uint64_t seed,
                                    Aggregation agg = Aggregation::Max);

}  // namespace uqasr
