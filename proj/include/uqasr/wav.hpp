#pragma once

#include "uqasr/common.hpp"

#include <filesystem>
#include <vector>

namespace uqasr {

inline constexpr int kSampleRate = 8000;

struct Waveform {
  std::vector<double> samples;
  int sample_rate = kSampleRate;

  size_t size() const { return samples.size(); }
};

enum class WavErrorKind {
  MalformedHeader,
  UnsupportedChannelCount,
  UnsupportedSampleRate,
  UnsupportedEncoding,
  Io,
};

class WavError : public ParseError {
 public:
  WavError(WavErrorKind kind, const std::string& what) : ParseError(what), kind_(kind) {}
  WavErrorKind kind() const { return kind_; }

 private:
  WavErrorKind kind_;
};

// Out-of-range samples: reject with an error, or clip to [-1, 1].
enum class ClipPolicy { Reject, Clip };

// Reads RIFF/WAVE PCM16 mono 8 kHz. Integer sample s maps to s / 32768.
Waveform load_wav(const std::filesystem::path& path);
Waveform decode_wav(const std::vector<unsigned char>& bytes);

void save_wav(const Waveform& waveform, const std::filesystem::path& path,
              ClipPolicy policy = ClipPolicy::Reject);
std::vector<unsigned char> encode_wav(const Waveform& waveform,
                                      ClipPolicy policy = ClipPolicy::Reject);

// Rounds every sample to the nearest PCM16 level (what a save/load cycle yields).
Waveform quantize_pcm16(const Waveform& waveform);

}  // namespace uqasr
