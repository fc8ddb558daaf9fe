#include "uqasr/uncertainty.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace uqasr {
namespace {

constexpr double kKlFloor = 1e-12;

void check_distribution(const DistributionRef& p) {
  if ((p.array() < 0.0).any() || std::abs(p.sum() - 1.0) > 1e-6) {
    throw PreconditionError("distribution is not normalized");
  }
}

void check_samples(const Matrix& samples) {
  if (samples.rows() < 2) throw PreconditionError("need T >= 2 samples");
}

double entropy_unchecked(const DistributionRef& p) {
  double h = 0.0;
  for (Eigen::Index c = 0; c < p.size(); ++c) {
    if (p(c) > 0.0) h -= p(c) * std::log(p(c));
  }
  return h;
}

double aggregate(const std::vector<double>& trace, Aggregation agg) {
  if (agg == Aggregation::Max) return *std::max_element(trace.begin(), trace.end());
  return std::accumulate(trace.begin(), trace.end(), 0.0) / static_cast<double>(trace.size());
}

}  // namespace

double frame_entropy(const DistributionRef& p) {
  check_distribution(p);
  return entropy_unchecked(p);
}

double utterance_entropy(const Matrix& posteriors) {
  if (posteriors.rows() == 0) throw PreconditionError("need at least one frame");
  double best = 0.0;
  for (Eigen::Index t = 0; t < posteriors.rows(); ++t) best = std::max(best, frame_entropy(posteriors.row(t)));
  return best;
}

double frame_mutual_information(const Matrix& samples) {
  check_samples(samples);
  double mean_h = 0.0;
  for (Eigen::Index t = 0; t < samples.rows(); ++t) mean_h += frame_entropy(samples.row(t));
  mean_h /= static_cast<double>(samples.rows());
  const RowVector mean = samples.colwise().mean();
  // Nonnegative in exact arithmetic; rounding can leave -1e-17 or so.
  return std::max(0.0, entropy_unchecked(mean) - mean_h);
}

double frame_variance(const Matrix& samples) {
  check_samples(samples);
  // Mean squared deviation per class, which cannot go negative the way
  // E[p^2] - E[p]^2 can.
  const RowVector mean = samples.colwise().mean();
  return (samples.rowwise() - mean).array().square().sum() / static_cast<double>(samples.rows());
}

double frame_akld(const Matrix& samples) {
  check_samples(samples);
  double total = 0.0;
  for (Eigen::Index t = 0; t + 1 < samples.rows(); ++t) {
    double kl = 0.0;
    for (Eigen::Index c = 0; c < samples.cols(); ++c) {
      const double p = samples(t, c);
      if (p <= 0.0) continue;
      const double q = samples(t + 1, c);
      kl += p * std::log(std::max(p, kKlFloor) / std::max(q, kKlFloor));
    }
    // The floor can push a near-zero divergence slightly below zero.
    total += std::max(0.0, kl);
  }
  return total / static_cast<double>(samples.rows() - 1);
}

std::string_view to_string(Aggregation a) { return a == Aggregation::Max ? "max" : "mean"; }

Aggregation parse_aggregation(std::string_view name) {
  if (name == "max") return Aggregation::Max;
  if (name == "mean") return Aggregation::Mean;
  throw PreconditionError("unknown aggregation '" + std::string(name) + "'");
}

std::string_view to_string(Measure m) {
  switch (m) {
    case Measure::Entropy: return "entropy";
    case Measure::MutualInformation: return "mutual_information";
    case Measure::Variance: return "variance";
    case Measure::Akld: return "akld";
  }
  return "unknown";
}

Measure parse_measure(std::string_view name) {
  for (Measure m : kAllMeasures)
    if (to_string(m) == name) return m;
  throw PreconditionError("unknown measure '" + std::string(name) + "'");
}

std::optional<double> UncertaintyScores::get(Measure m) const {
  switch (m) {
    case Measure::Entropy: return entropy;
    case Measure::MutualInformation: return mutual_information;
    case Measure::Variance: return variance;
    case Measure::Akld: return akld;
  }
  return std::nullopt;
}

UncertaintyScores scores_from_posteriors(const Matrix& posteriors, Aggregation agg) {
  if (posteriors.rows() == 0) throw PreconditionError("need at least one frame");
  UncertaintyScores s;
  for (Eigen::Index t = 0; t < posteriors.rows(); ++t) s.entropy_trace.push_back(frame_entropy(posteriors.row(t)));
  s.entropy = aggregate(s.entropy_trace, agg);
  return s;
}

UncertaintyScores scores_from_samples(const std::vector<Matrix>& samples, Aggregation agg) {
  if (samples.size() < 2) throw PreconditionError("need T >= 2 samples");
  const Eigen::Index frames = samples.front().rows();
  const Eigen::Index classes = samples.front().cols();
  Matrix mean = Matrix::Zero(frames, classes);
  for (const Matrix& s : samples) mean += s;
  mean /= static_cast<double>(samples.size());

  UncertaintyScores out = scores_from_posteriors(mean, agg);
  Matrix frame(static_cast<Eigen::Index>(samples.size()), classes);
  for (Eigen::Index t = 0; t < frames; ++t) {
    for (size_t k = 0; k < samples.size(); ++k) frame.row(static_cast<Eigen::Index>(k)) = samples[k].row(t);
    out.mi_trace.push_back(frame_mutual_information(frame));
    out.variance_trace.push_back(frame_variance(frame));
    out.akld_trace.push_back(frame_akld(frame));
  }
  out.mutual_information = aggregate(out.mi_trace, agg);
  out.variance = aggregate(out.variance_trace, agg);
  out.akld = aggregate(out.akld_trace, agg);
  return out;
}

UncertaintyScores measure_utterance(const AcousticModel& model, const Matrix& feats, int T, uint64_t seed,
                                    Aggregation agg) {
  if (model.kind() == ModelKind::Fnn) return scores_from_posteriors(forward(model, feats), agg);
  return scores_from_samples(sample_predictions(model, feats, T, seed), agg);
}

}  // namespace uqasr
