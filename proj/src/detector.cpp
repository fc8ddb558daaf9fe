#include "uqasr/detector.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace uqasr {

nlohmann::json DetectorModel::to_json() const {
  return {{"measure", measure}, {"mean", mean}, {"stddev", stddev}, {"training_size", training_size}};
}

DetectorModel DetectorModel::from_json(const nlohmann::json& j) {
  return {j.at("measure").get<std::string>(), j.at("mean").get<double>(), j.at("stddev").get<double>(),
          j.at("training_size").get<size_t>()};
}

DetectorModel fit_detector(std::span<const double> values, const std::string& measure) {
  if (values.size() < 2) throw PreconditionError("need at least two benign values");
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  if (!(sd > 0.0)) throw PreconditionError("zero variance in benign values for " + measure);
  return {measure, mean, sd, values.size()};
}

double anomaly_score(const DetectorModel& d, double value) { return std::abs(value - d.mean) / d.stddev; }

RocResult roc_auroc(std::span<const double> benign, std::span<const double> adversarial) {
  if (benign.empty() || adversarial.empty()) throw PreconditionError("ROC needs both classes");
  struct Item {
    double score;
    bool positive;
  };
  std::vector<Item> items;
  items.reserve(benign.size() + adversarial.size());
  for (double s : benign) items.push_back({s, false});
  for (double s : adversarial) items.push_back({s, true});
  std::sort(items.begin(), items.end(), [](const Item& a, const Item& b) { return a.score > b.score; });

  const double pos = static_cast<double>(adversarial.size());
  const double neg = static_cast<double>(benign.size());
  RocResult r;
  r.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  double tp = 0.0, fp = 0.0;
  for (size_t i = 0; i < items.size();) {
    const double threshold = items[i].score;
    for (; i < items.size() && items[i].score == threshold; ++i) (items[i].positive ? tp : fp) += 1.0;
    const RocPoint& prev = r.points.back();
    const RocPoint next{threshold, fp / neg, tp / pos};
    r.auroc += (next.fpr - prev.fpr) * (next.tpr + prev.tpr) / 2.0;
    r.points.push_back(next);
  }
  return r;
}

Histogram make_histogram(std::span<const double> benign, std::span<const double> adversarial, int bins) {
  if (bins <= 0) throw PreconditionError("histogram needs at least one bin");
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (auto set : {benign, adversarial}) {
    for (double v : set) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  Histogram h;
  h.benign.assign(static_cast<size_t>(bins), 0);
  h.adversarial.assign(static_cast<size_t>(bins), 0);
  if (!std::isfinite(lo)) return h;
  h.lo = lo;
  h.width = hi > lo ? (hi - lo) / bins : 1.0;
  const auto bin_of = [&](double v) {
    return static_cast<size_t>(std::clamp(static_cast<int>((v - lo) / h.width), 0, bins - 1));
  };
  for (double v : benign) ++h.benign[bin_of(v)];
  for (double v : adversarial) ++h.adversarial[bin_of(v)];
  return h;
}

ScoreRow ScoreRow::from_scores(std::string id, std::string source_id, double epsilon, const UncertaintyScores& s) {
  ScoreRow row;
  row.id = std::move(id);
  row.source_id = std::move(source_id);
  row.epsilon = epsilon;
  for (Measure m : kAllMeasures) row.set(m, s.get(m));
  return row;
}

bool same_epsilon(double a, double b) { return std::abs(a - b) < 1e-9; }

ExperimentReport evaluate_experiment(const ExperimentData& data) {
  std::set<std::string> heldout_ids;
  for (const auto& r : data.heldout) heldout_ids.insert(r.source_id.empty() ? r.id : r.source_id);
  const auto check = [&](const ScoreRow& r) {
    if (heldout_ids.count(r.id) || heldout_ids.count(r.source_id)) {
      throw PreconditionError("held-out id '" + r.id + "' also appears in the evaluation sets");
    }
  };
  std::for_each(data.benign.begin(), data.benign.end(), check);
  std::for_each(data.adversarial.begin(), data.adversarial.end(), check);

  ExperimentReport report;
  for (Measure m : data.measures) {
    std::vector<double> fit_values;
    for (const auto& r : data.heldout)
      if (auto v = r.get(m)) fit_values.push_back(*v);
    std::optional<DetectorModel> detector;
    if (!fit_values.empty()) {
      detector = fit_detector(fit_values, std::string(to_string(m)));
      report.detectors.push_back(*detector);
    }

    for (double eps : data.epsilons) {
      ReportRow row;
      row.measure = m;
      row.epsilon = eps;
      std::vector<double> benign_values, adv_values, benign_scores, adv_scores;
      for (const auto& r : data.benign)
        if (auto v = r.get(m)) benign_values.push_back(*v);
      for (const auto& r : data.adversarial)
        if (same_epsilon(r.epsilon, eps))
          if (auto v = r.get(m)) adv_values.push_back(*v);
      row.n_benign = benign_values.size();
      row.n_adversarial = adv_values.size();

      double sum_t = 0.0, sum_o = 0.0;
      size_t n_att = 0;
      for (const auto& a : data.attacks) {
        if (!same_epsilon(a.epsilon, eps)) continue;
        sum_t += a.acc_target;
        sum_o += a.acc_original;
        ++n_att;
      }
      if (n_att) {
        row.acc_target = sum_t / static_cast<double>(n_att);
        row.acc_original = sum_o / static_cast<double>(n_att);
      }

      if (detector && !benign_values.empty() && !adv_values.empty()) {
        for (double v : benign_values) benign_scores.push_back(anomaly_score(*detector, v));
        for (double v : adv_values) adv_scores.push_back(anomaly_score(*detector, v));
        RocResult roc = roc_auroc(benign_scores, adv_scores);
        row.auroc = roc.auroc;
        report.rocs.emplace(std::make_pair(m, eps), std::move(roc));
        report.histograms.emplace(std::make_pair(m, eps),
                                  make_histogram(benign_values, adv_values, data.histogram_bins));
      }
      report.rows.push_back(row);
    }
  }
  return report;
}

}  // namespace uqasr
