#include "uqasr/training.hpp"
#include "uqasr/uncertainty.hpp"

#include <doctest.h>

using namespace uqasr;

namespace {

double naive_entropy(const std::vector<double>& p) {
  double h = 0.0;
  for (double v : p) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return h;
}

std::vector<double> row(const Matrix& m, Eigen::Index r) {
  std::vector<double> out;
  for (Eigen::Index c = 0; c < m.cols(); ++c) out.push_back(m(r, c));
  return out;
}

// T x C matrix of random distributions; some entries are exact zeros.
Matrix random_samples(Rng& rng) {
  std::uniform_int_distribution<int> t_dist(2, 6), c_dist(2, 8), zero(0, 5);
  std::gamma_distribution<double> g(0.3, 1.0);
  const int T = t_dist(rng);
  const int C = c_dist(rng);
  Matrix m(T, C);
  for (int t = 0; t < T; ++t) {
    for (int c = 0; c < C; ++c) m(t, c) = zero(rng) == 0 ? 0.0 : g(rng) + 1e-300;
    if (m.row(t).sum() == 0.0) m(t, 0) = 1.0;
    m.row(t) /= m.row(t).sum();
  }
  return m;
}

}  // namespace

TEST_CASE("measure properties over random sample sets") {
  Rng rng(2024);
  for (int trial = 0; trial < 10000; ++trial) {
    const Matrix s = random_samples(rng);
    const auto T = s.rows();
    const auto C = s.cols();
    std::vector<double> mean(static_cast<size_t>(C), 0.0);
    double mean_h = 0.0;
    for (Eigen::Index t = 0; t < T; ++t) {
      mean_h += naive_entropy(row(s, t)) / static_cast<double>(T);
      for (Eigen::Index c = 0; c < C; ++c) mean[static_cast<size_t>(c)] += s(t, c) / static_cast<double>(T);
    }
    const double h_mean = naive_entropy(mean);

    const double h0 = frame_entropy(s.row(0));
    REQUIRE(h0 >= 0.0);
    REQUIRE(h0 <= std::log(static_cast<double>(C)) + 1e-12);
    REQUIRE(h0 == doctest::Approx(naive_entropy(row(s, 0))).epsilon(1e-12));

    const double mi = frame_mutual_information(s);
    REQUIRE(mi >= -1e-12);
    REQUIRE(mi <= h_mean + 1e-12);
    REQUIRE(mi == doctest::Approx(h_mean - mean_h).epsilon(1e-10));

    double var = 0.0;
    for (Eigen::Index c = 0; c < C; ++c) {
      double m2 = 0.0;
      for (Eigen::Index t = 0; t < T; ++t) m2 += (s(t, c) - mean[static_cast<size_t>(c)]) * (s(t, c) - mean[static_cast<size_t>(c)]);
      var += m2 / static_cast<double>(T);
    }
    const double v = frame_variance(s);
    REQUIRE(v >= -1e-15);
    REQUIRE(v <= 1.0);
    REQUIRE(std::abs(v - var) <= 1e-14 + 1e-10 * var);

    double kl = 0.0;
    for (Eigen::Index t = 0; t + 1 < T; ++t) {
      for (Eigen::Index c = 0; c < C; ++c) {
        const double p = s(t, c);
        if (p > 0.0) kl += p * (std::log(std::max(p, 1e-12)) - std::log(std::max(s(t + 1, c), 1e-12)));
      }
    }
    const double a = frame_akld(s);
    REQUIRE(a >= -1e-12);
    REQUIRE(std::abs(a - kl / static_cast<double>(T - 1)) <= 1e-12 + 1e-10 * a);
  }
}

TEST_CASE("hand-computed examples") {
  RowVector uniform = RowVector::Constant(4, 0.25);
  CHECK(frame_entropy(uniform) == doctest::Approx(std::log(4.0)));
  RowVector one_hot = RowVector::Zero(4);
  one_hot(2) = 1.0;
  CHECK(frame_entropy(one_hot) == 0.0);

  Matrix disagree(2, 2);
  disagree << 1.0, 0.0, 0.0, 1.0;
  CHECK(frame_mutual_information(disagree) == doctest::Approx(std::log(2.0)));
  CHECK(frame_variance(disagree) == doctest::Approx(0.5));
  CHECK(frame_akld(disagree) == doctest::Approx(std::log(1e12)));

  Matrix same(3, 3);
  same << 0.2, 0.3, 0.5, 0.2, 0.3, 0.5, 0.2, 0.3, 0.5;
  CHECK(std::abs(frame_mutual_information(same)) < 1e-15);
  CHECK(std::abs(frame_variance(same)) < 1e-15);
  CHECK(frame_akld(same) == 0.0);

  // aKLD follows drawing order: KL(a||b) and KL(b||a) differ.
  Matrix ab(2, 2), ba(2, 2);
  ab << 0.9, 0.1, 0.5, 0.5;
  ba << 0.5, 0.5, 0.9, 0.1;
  CHECK(frame_akld(ab) == doctest::Approx(0.9 * std::log(1.8) + 0.1 * std::log(0.2)));
  CHECK(frame_akld(ba) == doctest::Approx(0.5 * std::log(0.5 / 0.9) + 0.5 * std::log(5.0)));
}

TEST_CASE("invalid inputs") {
  RowVector bad(3);
  bad << 0.5, 0.5, 0.5;
  CHECK_THROWS_AS(frame_entropy(bad), PreconditionError);
  CHECK_THROWS_AS(frame_mutual_information(Matrix::Constant(1, 2, 0.5)), PreconditionError);
  CHECK_THROWS_AS(scores_from_samples({Matrix::Constant(3, 2, 0.5)}), PreconditionError);
  CHECK_THROWS_AS(utterance_entropy(Matrix(0, 3)), PreconditionError);
  CHECK_THROWS(parse_measure("perplexity"));
}

TEST_CASE("aggregation over frames") {
  Matrix a(2, 2), b(2, 2);
  a << 1.0, 0.0, 0.5, 0.5;
  b << 1.0, 0.0, 0.9, 0.1;
  const UncertaintyScores max_s = scores_from_samples({a, b}, Aggregation::Max);
  const UncertaintyScores mean_s = scores_from_samples({a, b}, Aggregation::Mean);
  REQUIRE(max_s.entropy_trace.size() == 2);
  CHECK(max_s.entropy_trace[0] == 0.0);
  const double h1 = naive_entropy({0.7, 0.3});
  CHECK(max_s.entropy == doctest::Approx(h1));
  CHECK(mean_s.entropy == doctest::Approx(h1 / 2.0));
  CHECK(*max_s.mutual_information == doctest::Approx(h1 - 0.5 * (std::log(2.0) + naive_entropy({0.9, 0.1}))));
  CHECK(*max_s.variance == doctest::Approx(2.0 * 0.04));
  CHECK(max_s.get(Measure::Akld) == max_s.akld);
  CHECK(utterance_entropy(a) == doctest::Approx(std::log(2.0)));
}

TEST_CASE("per-model measure availability and determinism") {
  Rng rng(1);
  std::normal_distribution<double> g;
  Matrix feats(12, 39);
  for (Eigen::Index i = 0; i < feats.size(); ++i) feats.data()[i] = g(rng);
  TrainConfig tc;
  tc.bnn_init_rho = -3.0;
  for (ModelKind kind : kAllModelKinds) {
    CAPTURE(to_string(kind));
    const AcousticModel m = init_model(kind, InputNorm::identity(39), tc);
    const UncertaintyScores s = measure_utterance(m, feats, 0, 77);
    CHECK(s.entropy > 0.0);
    CHECK(s.entropy_trace.size() == 12);
    const bool sampled = kind != ModelKind::Fnn;
    CHECK(s.mutual_information.has_value() == sampled);
    CHECK(s.variance.has_value() == sampled);
    CHECK(s.akld.has_value() == sampled);
    if (sampled) {
      CHECK(*s.mutual_information > 0.0);
      const UncertaintyScores again = measure_utterance(m, feats, 0, 77);
      CHECK(again.mutual_information == s.mutual_information);
      CHECK(again.akld == s.akld);
    }
  }
}
