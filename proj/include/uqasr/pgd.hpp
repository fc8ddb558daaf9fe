#pragma once

#include "uqasr/acoustic_model.hpp"
#include "uqasr/mfcc.hpp"
#include "uqasr/viterbi.hpp"

#include <functional>
#include <optional>
#include <span>

namespace uqasr {

enum class GradientMode { SingleSample, Mean };

std::string_view to_string(GradientMode mode);
GradientMode parse_gradient_mode(std::string_view name);

struct AttackConfig {
  double epsilon = 0.05;              // L-inf budget in amplitude units, [0, 0.1]
  std::optional<double> step_size;    // defaults to epsilon / 20
  int iterations = 100;
  GradientMode gradient_mode = GradientMode::SingleSample;
  uint64_t seed = 0;

  double step() const { return step_size.value_or(epsilon / 20.0); }
  void validate() const;
};

// Loss at `x` written to the return value; d loss / d x written to `grad`.
using PgdObjective = std::function<double(std::span<const double> x, int iteration, std::span<double> grad)>;

struct PgdResult {
  std::vector<double> delta;    // best iterate
  std::vector<double> losses;   // loss of delta_0 .. delta_iterations
  int best_iteration = 0;
};

// Sign-gradient descent on delta inside the L-inf ball of radius epsilon,
// keeping x + delta in [lo, hi]. Starts at delta = 0 and returns the iterate
// with the lowest loss (earliest on ties).
PgdResult pgd_minimize(std::span<const double> x, const PgdObjective& objective, double epsilon, double step,
                       int iterations, double lo = -1.0, double hi = 1.0);

// Uniform length 1..5 and uniform digits, redrawn while equal to `original`.
Transcript sample_target_transcript(uint64_t seed, const Transcript& original);

// Everything needed to score and decode audio with a trained recognizer.
struct Recognizer {
  const AcousticModel* model = nullptr;
  const HmmTopology* topology = nullptr;
  const StatePriors* priors = nullptr;  // null decodes raw posteriors
  FeatureConfig features{};
  uint64_t predict_seed = 0;            // seed of mean-mode predictions

  Matrix posteriors(const Waveform& audio) const;
  DecodeResult decode(const Waveform& audio) const;
};

// Forced alignment of the target transcript against the model's posteriors
// on the original audio. Throws PreconditionError if the audio is too short.
Alignment build_attack_target(const Waveform& waveform, const Transcript& target, const Recognizer& recognizer);

struct AdversarialExample {
  Waveform original;
  std::vector<double> delta;
  Transcript target_transcript;
  Alignment target_alignment;
  std::vector<double> losses;
  int best_iteration = 0;

  Waveform perturbed() const;
  double linf() const;
};

// PGD toward the target alignment through the differentiable front end.
// Single-sample mode draws a fresh theta_t each iteration.
AdversarialExample pgd_attack(const Waveform& waveform, const Transcript& target, const Alignment& target_alignment,
                              const AcousticModel& model, const AttackConfig& cfg,
                              const FeatureConfig& features = {});

// Truncates delta toward zero onto the PCM16 grid so that a saved example
// keeps |delta| <= epsilon and x + delta in range.
void snap_delta_to_pcm16(AdversarialExample& adv);

struct AttackAccuracy {
  double vs_target = 0.0;
  double vs_original = 0.0;
};

AttackAccuracy attack_success(const AdversarialExample& adv, const Transcript& original, const Transcript& decoded);

}  // namespace uqasr
