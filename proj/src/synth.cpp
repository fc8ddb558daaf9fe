#include "uqasr/synth.hpp"

#include "uqasr/rng.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

namespace uqasr {
namespace {

constexpr std::array<DigitVoice, 10> kVoices{{
    {300, 500, 2200, 1800},
    {400, 300, 1200, 1600},
    {500, 700, 2600, 2900},
    {600, 450, 1700, 2100},
    {700, 900, 1100, 1000},
    {800, 650, 2400, 2000},
    {350, 600, 2800, 3200},
    {900, 1100, 1900, 1500},
    {450, 350, 3000, 2600},
    {1000, 800, 1400, 1800},
}};

constexpr double kRampSeconds = 0.025;

}  // namespace

const DigitVoice& digit_voice(int digit) {
  if (digit < 0 || digit > 9) throw PreconditionError("digit out of range");
  return kVoices[static_cast<size_t>(digit)];
}

Waveform synth_digit_waveform(int digit, uint64_t seed, double duration_ms) {
  if (duration_ms < 250.0 || duration_ms > 600.0) {
    throw PreconditionError("duration_ms must lie in [250, 600]");
  }
  const DigitVoice& v = digit_voice(digit);
  Rng rng(derive_seed(seed, "digit", static_cast<uint64_t>(digit)));
  std::uniform_real_distribution<double> amp_dist(0.25, 0.4);
  std::uniform_real_distribution<double> phase_dist(0.0, 2.0 * std::numbers::pi);
  std::normal_distribution<double> noise(0.0, kSynthNoiseStd);

  const double amplitude = amp_dist(rng);
  const double phase1 = phase_dist(rng);
  const double phase2 = phase_dist(rng);

  const double duration = duration_ms / 1000.0;
  const auto n = static_cast<size_t>(std::lround(duration * kSampleRate));
  Waveform w;
  w.samples.resize(n);
  for (size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / kSampleRate;
    // Linear frequency glide integrated into the instantaneous phase.
    const double p1 = phase1 + 2.0 * std::numbers::pi *
                                   (v.f1_start * t + (v.f1_end - v.f1_start) * t * t / (2.0 * duration));
    const double p2 = phase2 + 2.0 * std::numbers::pi *
                                   (v.f2_start * t + (v.f2_end - v.f2_start) * t * t / (2.0 * duration));
    const double edge = std::min(t, duration - t);
    const double env =
        edge >= kRampSeconds ? 1.0 : 0.5 - 0.5 * std::cos(std::numbers::pi * std::max(edge, 0.0) / kRampSeconds);
    const double s = amplitude * env * (0.6 * std::sin(p1) + 0.4 * std::sin(p2)) + noise(rng);
    w.samples[i] = std::clamp(s, -1.0, 1.0);
  }
  return w;
}

Waveform synth_silence(uint64_t seed, size_t num_samples) {
  Rng rng(derive_seed(seed, "silence"));
  std::normal_distribution<double> noise(0.0, kSynthNoiseStd);
  Waveform w;
  w.samples.resize(num_samples);
  for (double& s : w.samples) s = std::clamp(noise(rng), -1.0, 1.0);
  return w;
}

SynthUtterance concat_utterance(std::span<const int> digits, uint64_t seed) {
  if (digits.empty()) throw PreconditionError("empty digit sequence");
  if (digits.size() > 7) throw PreconditionError("at most 7 digits per utterance");

  Rng rng(derive_seed(seed, "utterance"));
  std::uniform_real_distribution<double> gap_ms(50.0, 150.0);
  std::uniform_real_distribution<double> digit_ms(300.0, 500.0);

  SynthUtterance out;
  out.transcript.assign(digits.begin(), digits.end());
  auto& samples = out.audio.samples;
  const auto append = [&](const Waveform& piece, int digit) {
    Segment seg{samples.size(), samples.size() + piece.size(), digit};
    samples.insert(samples.end(), piece.samples.begin(), piece.samples.end());
    out.segments.push_back(seg);
  };
  const auto gap = [&](uint64_t k) {
    const auto n = static_cast<size_t>(std::lround(gap_ms(rng) / 1000.0 * kSampleRate));
    append(synth_silence(derive_seed(seed, "gap", k), n), -1);
  };

  gap(0);
  for (size_t i = 0; i < digits.size(); ++i) {
    const double ms = digit_ms(rng);
    append(synth_digit_waveform(digits[i], derive_seed(seed, "token", i), ms), digits[i]);
    gap(i + 1);
  }
  return out;
}

}  // namespace uqasr
