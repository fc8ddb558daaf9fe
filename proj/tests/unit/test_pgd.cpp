#include "uqasr/pgd.hpp"
#include "uqasr/synth.hpp"
#include "uqasr/training.hpp"

#include <doctest.h>

#include <map>

using namespace uqasr;

namespace {

// Separable quadratic pulling x toward `c`.
PgdObjective quadratic(std::vector<double> c) {
  return [c = std::move(c)](std::span<const double> x, int, std::span<double> grad) {
    double loss = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
      loss += (x[i] - c[i]) * (x[i] - c[i]);
      grad[i] = 2.0 * (x[i] - c[i]);
    }
    return loss;
  };
}

double max_abs(const std::vector<double>& v) {
  double m = 0.0;
  for (double d : v) m = std::max(m, std::abs(d));
  return m;
}

}  // namespace

TEST_CASE("pgd on a quadratic reaches the projected optimum") {
  const std::vector<double> x{0.0, 0.5, -0.2, 0.9};
  const std::vector<double> c{0.03, 0.5, -0.5, 1.5};
  const double eps = 0.1;
  const PgdResult r = pgd_minimize(x, quadratic(c), eps, 0.01, 50, -1.0, 1.0);
  REQUIRE(r.losses.size() == 51);
  CHECK(r.delta[0] == doctest::Approx(0.03).epsilon(1e-9));
  CHECK(std::abs(r.delta[1]) <= 0.01);
  CHECK(r.delta[2] == doctest::Approx(-0.1));
  CHECK(r.delta[3] == doctest::Approx(0.1));
  CHECK(max_abs(r.delta) <= eps + 1e-15);

  const auto best = std::min_element(r.losses.begin(), r.losses.end());
  CHECK(r.best_iteration == best - r.losses.begin());
}

TEST_CASE("pgd respects the sample range") {
  const std::vector<double> x{0.98, -0.99};
  const PgdResult r = pgd_minimize(x, quadratic({5.0, -5.0}), 0.1, 0.02, 20);
  CHECK(x[0] + r.delta[0] <= 1.0);
  CHECK(x[1] + r.delta[1] >= -1.0);
  CHECK(r.delta[0] == doctest::Approx(0.02));
  CHECK(r.delta[1] == doctest::Approx(-0.01));
}

TEST_CASE("pgd returns the earliest best iterate") {
  // The loss only ever grows, so the starting point is the best.
  const PgdObjective rising = [](std::span<const double>, int k, std::span<double> grad) {
    grad[0] = 1.0;
    return static_cast<double>(k);
  };
  const PgdResult r = pgd_minimize(std::vector<double>{0.0}, rising, 0.05, 0.01, 10);
  CHECK(r.best_iteration == 0);
  CHECK(r.delta[0] == 0.0);

  const PgdObjective flat = [](std::span<const double>, int, std::span<double> grad) {
    grad[0] = -1.0;
    return 1.0;
  };
  CHECK(pgd_minimize(std::vector<double>{0.0}, flat, 0.05, 0.01, 10).best_iteration == 0);
}

TEST_CASE("epsilon zero leaves the input untouched") {
  const PgdResult r = pgd_minimize(std::vector<double>{0.1, 0.2}, quadratic({1.0, 1.0}), 0.0, 0.0, 100);
  CHECK(r.losses.size() == 1);
  CHECK(max_abs(r.delta) == 0.0);
}

TEST_CASE("non-finite losses and gradients are reported") {
  const PgdObjective nan_loss = [](std::span<const double>, int, std::span<double>) { return std::nan(""); };
  CHECK_THROWS_AS(pgd_minimize(std::vector<double>{0.0}, nan_loss, 0.05, 0.01, 3), NumericError);
  const PgdObjective nan_grad = [](std::span<const double>, int, std::span<double> g) {
    g[0] = std::nan("");
    return 0.0;
  };
  CHECK_THROWS_AS(pgd_minimize(std::vector<double>{0.0}, nan_grad, 0.05, 0.01, 3), NumericError);
}

TEST_CASE("attack config validation") {
  AttackConfig cfg;
  CHECK(cfg.step() == doctest::Approx(0.0025));
  cfg.epsilon = 0.2;
  CHECK_THROWS_AS(cfg.validate(), PreconditionError);
  cfg.epsilon = 0.0;
  CHECK_NOTHROW(cfg.validate());
  cfg.iterations = 0;
  CHECK_THROWS_AS(cfg.validate(), PreconditionError);
  CHECK(parse_gradient_mode("mean") == GradientMode::Mean);
  CHECK_THROWS_AS(parse_gradient_mode("median"), PreconditionError);
}

TEST_CASE("target transcripts are uniform in length and digit") {
  const int n = 20000;
  std::map<size_t, int> lengths;
  std::map<int, int> digits;
  int total_digits = 0;
  for (int i = 0; i < n; ++i) {
    const Transcript t = sample_target_transcript(static_cast<uint64_t>(i), Transcript{});
    REQUIRE(!t.empty());
    REQUIRE(t.size() <= 5);
    ++lengths[t.size()];
    for (int d : t) {
      REQUIRE(d >= 0);
      REQUIRE(d <= 9);
      ++digits[d];
      ++total_digits;
    }
  }
  double chi_len = 0.0;
  for (size_t k = 1; k <= 5; ++k) {
    const double e = n / 5.0;
    chi_len += (lengths[k] - e) * (lengths[k] - e) / e;
  }
  double chi_digit = 0.0;
  for (int d = 0; d < 10; ++d) {
    const double e = total_digits / 10.0;
    chi_digit += (digits[d] - e) * (digits[d] - e) / e;
  }
  // 99.9% quantiles of chi-square with 4 and 9 degrees of freedom.
  CHECK(chi_len < 18.47);
  CHECK(chi_digit < 27.88);

  for (int i = 0; i < 2000; ++i) CHECK(sample_target_transcript(static_cast<uint64_t>(i), {4}) != Transcript{4});
  CHECK(sample_target_transcript(9, {1, 2}) == sample_target_transcript(9, {1, 2}));
}

TEST_CASE("end-to-end attack keeps its constraints") {
  TrainConfig tc;
  tc.seed = 3;
  tc.bnn_init_rho = -3.0;
  const SynthUtterance utt = concat_utterance(std::vector<int>{2, 7}, 11);
  const Waveform audio = quantize_pcm16(utt.audio);
  const FeatureMatrix feats = compute_mfcc(audio);
  const HmmTopology topo = HmmTopology::standard();
  const Alignment target = flat_start_alignment(static_cast<int>(feats.rows()), {5}, topo);

  for (ModelKind kind : kAllModelKinds) {
    CAPTURE(to_string(kind));
    const AcousticModel model = init_model(kind, InputNorm::fit(feats), tc);
    for (GradientMode mode : {GradientMode::SingleSample, GradientMode::Mean}) {
      AttackConfig cfg;
      cfg.epsilon = 0.02;
      cfg.iterations = 8;
      cfg.gradient_mode = mode;
      cfg.seed = 5;
      AdversarialExample adv = pgd_attack(audio, {5}, target, model, cfg);
      CHECK(adv.losses.size() == 9);
      CHECK(adv.linf() <= cfg.epsilon + 1e-15);
      CHECK(adv.losses[static_cast<size_t>(adv.best_iteration)] <= adv.losses[0]);
      CHECK(*std::min_element(adv.losses.begin(), adv.losses.end()) ==
            adv.losses[static_cast<size_t>(adv.best_iteration)]);
      if (kind == ModelKind::Fnn) CHECK(adv.best_iteration > 0);

      const AdversarialExample again = pgd_attack(audio, {5}, target, model, cfg);
      CHECK(again.delta == adv.delta);

      snap_delta_to_pcm16(adv);
      CHECK(adv.linf() <= cfg.epsilon);
      const Waveform p = adv.perturbed();
      for (size_t i = 0; i < p.samples.size(); ++i) {
        const double q = p.samples[i] * 32768.0;
        REQUIRE(q == std::round(q));
        REQUIRE(q <= 32767.0);
        REQUIRE(q >= -32768.0);
      }
      CHECK(quantize_pcm16(p).samples == p.samples);
    }
  }
  AttackConfig cfg;
  CHECK_THROWS_AS(pgd_attack(audio, {5}, Alignment(3, 0), init_model(ModelKind::Fnn, InputNorm::fit(feats), tc), cfg),
                  ShapeError);
}

TEST_CASE("attack success compares against target and original") {
  AdversarialExample adv;
  adv.target_transcript = {1, 2, 3};
  const AttackAccuracy a = attack_success(adv, {4, 5}, {1, 2, 3});
  CHECK(a.vs_target == 1.0);
  CHECK(a.vs_original == doctest::Approx(-0.5));
}
