#include "uqasr/pgd.hpp"

#include "uqasr/rng.hpp"
#include "uqasr/word_accuracy.hpp"

#include <algorithm>
#include <cmath>

namespace uqasr {

std::string_view to_string(GradientMode mode) {
  return mode == GradientMode::SingleSample ? "single_sample" : "mean";
}

GradientMode parse_gradient_mode(std::string_view name) {
  if (name == "single_sample") return GradientMode::SingleSample;
  if (name == "mean") return GradientMode::Mean;
  throw PreconditionError("unknown gradient mode '" + std::string(name) + "'");
}

void AttackConfig::validate() const {
  if (!(epsilon >= 0.0 && epsilon <= 0.1)) throw PreconditionError("epsilon must lie in [0, 0.1]");
  if (epsilon > 0.0 && !(step() > 0.0)) throw PreconditionError("step_size must be positive");
  if (iterations < 1) throw PreconditionError("iterations must be >= 1");
}

PgdResult pgd_minimize(std::span<const double> x, const PgdObjective& objective, double epsilon, double step,
                       int iterations, double lo, double hi) {
  const size_t n = x.size();
  std::vector<double> delta(n, 0.0), x_adv(n), grad(n);
  PgdResult result;
  result.delta = delta;

  const auto evaluate = [&](int k) {
    for (size_t i = 0; i < n; ++i) x_adv[i] = x[i] + delta[i];
    std::fill(grad.begin(), grad.end(), 0.0);
    const double loss = objective(x_adv, k, grad);
    if (!std::isfinite(loss)) throw NumericError("non-finite loss at PGD iteration " + std::to_string(k));
    result.losses.push_back(loss);
    if (loss < result.losses[static_cast<size_t>(result.best_iteration)]) {
      result.best_iteration = k;
      result.delta = delta;
    }
  };

  evaluate(0);
  if (epsilon == 0.0) return result;
  for (int k = 1; k <= iterations; ++k) {
    for (size_t i = 0; i < n; ++i) {
      if (!std::isfinite(grad[i])) throw NumericError("non-finite gradient at PGD iteration " + std::to_string(k - 1));
      const double sign = grad[i] > 0.0 ? 1.0 : (grad[i] < 0.0 ? -1.0 : 0.0);
      const double d = std::clamp(delta[i] - step * sign, -epsilon, epsilon);
      delta[i] = std::clamp(x[i] + d, lo, hi) - x[i];
    }
    evaluate(k);
  }
  return result;
}

Transcript sample_target_transcript(uint64_t seed, const Transcript& original) {
  Rng rng(derive_seed(seed, "target"));
  std::uniform_int_distribution<int> length(1, 5);
  std::uniform_int_distribution<int> digit(0, 9);
  for (;;) {
    Transcript t(static_cast<size_t>(length(rng)));
    for (int& d : t) d = digit(rng);
    if (t != original) return t;
  }
}

Matrix Recognizer::posteriors(const Waveform& audio) const {
  return forward(*model, compute_mfcc(audio, features), PredictMode::mean(predict_seed));
}

DecodeResult Recognizer::decode(const Waveform& audio) const {
  return viterbi_decode(posteriors(audio), *topology, priors);
}

Alignment build_attack_target(const Waveform& waveform, const Transcript& target, const Recognizer& recognizer) {
  return forced_align(recognizer.posteriors(waveform), *recognizer.topology, target, recognizer.priors).alignment;
}

Waveform AdversarialExample::perturbed() const {
  Waveform w = original;
  for (size_t i = 0; i < w.samples.size(); ++i) w.samples[i] = std::clamp(w.samples[i] + delta[i], -1.0, 1.0);
  return w;
}

double AdversarialExample::linf() const {
  double m = 0.0;
  for (double d : delta) m = std::max(m, std::abs(d));
  return m;
}

AdversarialExample pgd_attack(const Waveform& waveform, const Transcript& target, const Alignment& target_alignment,
                              const AcousticModel& model, const AttackConfig& cfg, const FeatureConfig& features) {
  cfg.validate();
  const MfccFrontEnd& fe = front_end(features);
  if (frame_count(waveform.size(), features) != static_cast<int>(target_alignment.size())) {
    throw ShapeError("target alignment length does not match the waveform frame count");
  }

  const PgdObjective objective = [&](std::span<const double> x, int k, std::span<double> grad) {
    MfccFrontEnd::Trace trace;
    const Matrix feats = fe.forward(x, &trace);
    const uint64_t seed = derive_seed(cfg.seed, "pgd", static_cast<uint64_t>(k));
    const PredictMode mode =
        cfg.gradient_mode == GradientMode::SingleSample ? PredictMode::single_sample(seed) : PredictMode::mean(seed);
    const InputGradient ig = input_grad(model, feats, target_alignment, mode);
    const std::vector<double> g = fe.backward(trace, ig.grad);
    std::copy(g.begin(), g.end(), grad.begin());
    return ig.loss;
  };

  PgdResult r = pgd_minimize(waveform.samples, objective, cfg.epsilon, cfg.step(), cfg.iterations);
  AdversarialExample adv;
  adv.original = waveform;
  adv.delta = std::move(r.delta);
  adv.target_transcript = target;
  adv.target_alignment = target_alignment;
  adv.losses = std::move(r.losses);
  adv.best_iteration = r.best_iteration;
  return adv;
}

void snap_delta_to_pcm16(AdversarialExample& adv) {
  for (size_t i = 0; i < adv.delta.size(); ++i) {
    double d = std::trunc(adv.delta[i] * 32768.0) / 32768.0;
    // Keep the perturbed sample inside the PCM16 range as well.
    const double x = adv.original.samples[i];
    while (x + d > 32767.0 / 32768.0) d -= 1.0 / 32768.0;
    adv.delta[i] = d;
  }
}

AttackAccuracy attack_success(const AdversarialExample& adv, const Transcript& original, const Transcript& decoded) {
  return {word_accuracy(adv.target_transcript, decoded), word_accuracy(original, decoded)};
}

}  // namespace uqasr
