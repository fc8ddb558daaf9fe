#include "uqasr/detector.hpp"
#include "uqasr/word_accuracy.hpp"

#include "oracles.hpp"

#include <doctest.h>

using namespace uqasr;

namespace {

std::vector<double> draws(int n, double mu, double sd, uint64_t seed, bool rounded = false) {
  Rng rng(seed);
  std::normal_distribution<double> g(mu, sd);
  std::vector<double> out;
  for (int i = 0; i < n; ++i) out.push_back(rounded ? std::round(g(rng) * 4.0) / 4.0 : g(rng));
  return out;
}

ScoreRow row(std::string id, std::string source, double eps, double entropy, std::optional<double> mi = {}) {
  ScoreRow r;
  r.id = std::move(id);
  r.source_id = std::move(source);
  r.epsilon = eps;
  r.set(Measure::Entropy, entropy);
  r.set(Measure::MutualInformation, mi);
  return r;
}

}  // namespace

TEST_CASE("AUROC agrees with the pairwise oracle") {
  for (uint64_t trial = 0; trial < 30; ++trial) {
    CAPTURE(trial);
    const bool ties = trial % 2 == 0;
    const auto neg = draws(40 + static_cast<int>(trial), 0.0, 1.0, trial, ties);
    const auto pos = draws(25 + static_cast<int>(trial), 0.7, 1.2, trial + 1000, ties);
    const RocResult r = roc_auroc(neg, pos);
    CHECK(r.auroc == doctest::Approx(oracle::pairwise_auroc(neg, pos)).epsilon(1e-12));
    REQUIRE(r.points.size() >= 2);
    CHECK(r.points.front().fpr == 0.0);
    CHECK(r.points.front().tpr == 0.0);
    CHECK(r.points.back().fpr == 1.0);
    CHECK(r.points.back().tpr == 1.0);
    for (size_t i = 1; i < r.points.size(); ++i) {
      CHECK(r.points[i].fpr >= r.points[i - 1].fpr);
      CHECK(r.points[i].tpr >= r.points[i - 1].tpr);
      CHECK(r.points[i].threshold < r.points[i - 1].threshold);
    }
  }
}

TEST_CASE("AUROC edge cases") {
  const std::vector<double> lo{0.0, 1.0}, hi{2.0, 3.0};
  CHECK(roc_auroc(lo, hi).auroc == 1.0);
  CHECK(roc_auroc(hi, lo).auroc == 0.0);
  CHECK(roc_auroc(std::vector<double>{1.0, 1.0}, std::vector<double>{1.0}).auroc == 0.5);
  CHECK_THROWS_AS(roc_auroc({}, hi), PreconditionError);
}

TEST_CASE("detector scores are invariant to affine maps of the measure") {
  const auto heldout = draws(200, 2.0, 0.3, 1);
  const auto benign = draws(100, 2.0, 0.3, 2);
  const auto adversarial = draws(100, 1.4, 0.6, 3);
  const auto auroc_for = [&](double a, double b) {
    std::vector<double> h, bs, as;
    for (double v : heldout) h.push_back(a * v + b);
    const DetectorModel d = fit_detector(h, "entropy");
    for (double v : benign) bs.push_back(anomaly_score(d, a * v + b));
    for (double v : adversarial) as.push_back(anomaly_score(d, a * v + b));
    return roc_auroc(bs, as).auroc;
  };
  const double base = auroc_for(1.0, 0.0);
  CHECK(base > 0.7);
  CHECK(auroc_for(3.5, -2.0) == doctest::Approx(base).epsilon(1e-12));
  CHECK(auroc_for(-0.25, 10.0) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("Gaussian fit uses the unbiased deviation") {
  const std::vector<double> v{1.0, 2.0, 3.0, 4.0};
  const DetectorModel d = fit_detector(v, "variance");
  CHECK(d.mean == doctest::Approx(2.5));
  CHECK(d.stddev == doctest::Approx(std::sqrt(5.0 / 3.0)));
  CHECK(d.training_size == 4);
  CHECK(anomaly_score(d, 2.5) == 0.0);
  CHECK(anomaly_score(d, 2.5 - d.stddev) == doctest::Approx(1.0));

  const DetectorModel back = DetectorModel::from_json(d.to_json());
  CHECK(back.mean == d.mean);
  CHECK(back.stddev == d.stddev);
  CHECK(back.measure == "variance");

  CHECK_THROWS_AS(fit_detector(std::vector<double>{1.0}, "x"), PreconditionError);
  CHECK_THROWS_AS(fit_detector(std::vector<double>{2.0, 2.0, 2.0}, "x"), PreconditionError);
}

TEST_CASE("histograms cover both sets") {
  const std::vector<double> b{0.0, 0.1, 0.5}, a{1.0, 0.95};
  const Histogram h = make_histogram(b, a, 10);
  CHECK(h.lo == 0.0);
  CHECK(h.width == doctest::Approx(0.1));
  CHECK(h.benign[0] == 1);
  CHECK(h.benign[5] == 1);
  CHECK(h.adversarial[9] == 2);
  size_t total = 0;
  for (size_t c : h.benign) total += c;
  CHECK(total == 3);
}

TEST_CASE("experiment evaluation") {
  ExperimentData data;
  data.measures = {Measure::Entropy, Measure::MutualInformation};
  data.epsilons = {0.02, 0.05};
  for (int i = 0; i < 20; ++i) data.heldout.push_back(row("h" + std::to_string(i), "", 0.0, 2.0 + 0.01 * i));
  for (int i = 0; i < 10; ++i) data.benign.push_back(row("e" + std::to_string(i), "", 0.0, 2.0 + 0.02 * i));
  for (int i = 0; i < 10; ++i) {
    data.adversarial.push_back(row("e" + std::to_string(i) + "@0.05", "e" + std::to_string(i), 0.05, 5.0 + i));
    data.attacks.push_back({"e" + std::to_string(i), 0.05, i < 5 ? 1.0 : 0.0, 0.5});
  }
  data.attacks.push_back({"e0", 0.02, 0.25, 0.75});

  const ExperimentReport rep = evaluate_experiment(data);
  REQUIRE(rep.rows.size() == 4);
  CHECK(rep.detectors.size() == 1);
  for (const ReportRow& r : rep.rows) {
    CAPTURE(to_string(r.measure));
    CAPTURE(r.epsilon);
    if (r.measure == Measure::MutualInformation) {
      CHECK_FALSE(r.auroc.has_value());
    } else if (same_epsilon(r.epsilon, 0.05)) {
      REQUIRE(r.auroc.has_value());
      CHECK(*r.auroc == 1.0);
      CHECK(*r.acc_target == doctest::Approx(0.5));
      CHECK(r.n_adversarial == 10);
      CHECK(r.n_benign == 10);
    } else {
      CHECK_FALSE(r.auroc.has_value());
      CHECK(*r.acc_target == doctest::Approx(0.25));
      CHECK(*r.acc_original == doctest::Approx(0.75));
    }
  }
  CHECK(rep.rocs.count({Measure::Entropy, 0.05}) == 1);
  CHECK(rep.histograms.count({Measure::Entropy, 0.05}) == 1);

  SUBCASE("held-out ids must not reach the evaluation sets") {
    data.benign.push_back(row("h3", "", 0.0, 2.0));
    CHECK_THROWS_AS(evaluate_experiment(data), PreconditionError);
  }
  SUBCASE("adversarial rows built from held-out audio are rejected") {
    data.adversarial.push_back(row("h4@0.05", "h4", 0.05, 3.0));
    CHECK_THROWS_AS(evaluate_experiment(data), PreconditionError);
  }
}

TEST_CASE("word accuracy") {
  CHECK(word_accuracy({1, 2, 3}, {1, 2, 3}) == 1.0);
  CHECK(word_accuracy({1, 2, 3}, {1, 3}) == doctest::Approx(2.0 / 3.0));
  CHECK(word_accuracy({1, 2, 3}, {1, 5, 3}) == doctest::Approx(2.0 / 3.0));
  CHECK(word_accuracy({1, 2, 3}, {1, 2, 3, 4, 5, 6, 7}) == doctest::Approx(-1.0 / 3.0));
  CHECK(word_accuracy({4}, {}) == 0.0);

  const EditCounts c = edit_counts({1, 2, 3, 4}, {2, 3, 9, 4, 4});
  CHECK(c.reference_words == 4);
  CHECK(c.errors() == 3);
  CHECK_THROWS(word_accuracy({}, {1}));
}
