#pragma once

#include "uqasr/wav.hpp"

#include <cstdint>
#include <span>

namespace uqasr {

// Synthetic stand-in for recorded digit utterances. Each digit owns a pair of
// gliding formant-like carriers; seeds vary amplitude, phase and noise only.
struct DigitVoice {
  double f1_start, f1_end;
  double f2_start, f2_end;
};

const DigitVoice& digit_voice(int digit);

inline constexpr double kSynthNoiseStd = 0.01;

// duration_ms must lie in [250, 600].
Waveform synth_digit_waveform(int digit, uint64_t seed, double duration_ms);

// Seeded background noise used for silence segments.
Waveform synth_silence(uint64_t seed, size_t num_samples);

struct Segment {
  size_t begin = 0;
  size_t end = 0;
  int digit = -1;  // -1 for silence
};

struct SynthUtterance {
  Waveform audio;
  Transcript transcript;
  std::vector<Segment> segments;
};

// Joins 1..7 digits with seeded 50-150 ms silence gaps, including leading
// and trailing silence (n + 1 gaps for n digits).
SynthUtterance concat_utterance(std::span<const int> digits, uint64_t seed);

}  // namespace uqasr
