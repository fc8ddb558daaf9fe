#include "uqasr/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

namespace uqasr {
namespace {

uint32_t read_u32(const unsigned char* p) {
  return uint32_t(p[0]) | uint32_t(p[1]) << 8 | uint32_t(p[2]) << 16 | uint32_t(p[3]) << 24;
}
uint16_t read_u16(const unsigned char* p) { return uint16_t(p[0] | p[1] << 8); }

void put_u32(std::vector<unsigned char>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}
void put_u16(std::vector<unsigned char>& out, uint16_t v) {
  out.push_back(static_cast<unsigned char>(v));
  out.push_back(static_cast<unsigned char>(v >> 8));
}

int16_t to_pcm16(double s) {
  const double scaled = std::round(s * 32768.0);
  return static_cast<int16_t>(std::clamp(scaled, -32768.0, 32767.0));
}

}  // namespace

Waveform decode_wav(const std::vector<unsigned char>& bytes) {
  const auto malformed = [](const std::string& msg) {
    return WavError(WavErrorKind::MalformedHeader, "malformed WAV header: " + msg);
  };
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw malformed("missing RIFF/WAVE signature");
  }

  bool have_fmt = false;
  uint16_t channels = 0, bits = 0, format = 0;
  uint32_t rate = 0;
  size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const uint32_t size = read_u32(chunk + 4);
    const size_t body = pos + 8;
    if (body + size > bytes.size()) throw malformed("chunk exceeds file size");

    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16) throw malformed("fmt chunk too small");
      format = read_u16(bytes.data() + body);
      channels = read_u16(bytes.data() + body + 2);
      rate = read_u32(bytes.data() + body + 4);
      bits = read_u16(bytes.data() + body + 14);
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      if (!have_fmt) throw malformed("data chunk before fmt chunk");
      if (channels != 1) {
        throw WavError(WavErrorKind::UnsupportedChannelCount,
                       "unsupported channel count " + std::to_string(channels));
      }
      if (rate != static_cast<uint32_t>(kSampleRate)) {
        throw WavError(WavErrorKind::UnsupportedSampleRate,
                       "unsupported sample rate " + std::to_string(rate));
      }
      if (format != 1 || bits != 16) {
        throw WavError(WavErrorKind::UnsupportedEncoding,
                       "unsupported encoding (format " + std::to_string(format) + ", " +
                           std::to_string(bits) + " bits)");
      }
      if (size % 2 != 0) throw malformed("odd PCM16 data size");
      Waveform w;
      w.sample_rate = static_cast<int>(rate);
      w.samples.resize(size / 2);
      for (size_t i = 0; i < w.samples.size(); ++i) {
        const auto v = static_cast<int16_t>(read_u16(bytes.data() + body + 2 * i));
        w.samples[i] = v / 32768.0;
      }
      return w;
    }
    pos = body + size + (size & 1);
  }
  throw malformed(have_fmt ? "missing data chunk" : "missing fmt chunk");
}

Waveform load_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw WavError(WavErrorKind::Io, "cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  return decode_wav(bytes);
}

std::vector<unsigned char> encode_wav(const Waveform& waveform, ClipPolicy policy) {
  if (waveform.sample_rate != kSampleRate) {
    throw WavError(WavErrorKind::UnsupportedSampleRate,
                   "unsupported sample rate " + std::to_string(waveform.sample_rate));
  }
  const uint32_t data_size = static_cast<uint32_t>(waveform.samples.size() * 2);
  std::vector<unsigned char> out;
  out.reserve(44 + data_size);
  const auto tag = [&](const char* t) { out.insert(out.end(), t, t + 4); };
  tag("RIFF");
  put_u32(out, 36 + data_size);
  tag("WAVE");
  tag("fmt ");
  put_u32(out, 16);
  put_u16(out, 1);
  put_u16(out, 1);
  put_u32(out, kSampleRate);
  put_u32(out, kSampleRate * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  tag("data");
  put_u32(out, data_size);
  for (double s : waveform.samples) {
    if (!std::isfinite(s)) throw NumericError("non-finite sample");
    if (std::abs(s) > 1.0) {
      if (policy == ClipPolicy::Reject) {
        throw PreconditionError("sample " + std::to_string(s) + " outside [-1, 1]");
      }
      s = std::clamp(s, -1.0, 1.0);
    }
    put_u16(out, static_cast<uint16_t>(to_pcm16(s)));
  }
  return out;
}

void save_wav(const Waveform& waveform, const std::filesystem::path& path, ClipPolicy policy) {
  const auto bytes = encode_wav(waveform, policy);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw WavError(WavErrorKind::Io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw WavError(WavErrorKind::Io, "write failed for " + path.string());
}

Waveform quantize_pcm16(const Waveform& waveform) {
  Waveform q = waveform;
  for (double& s : q.samples) s = to_pcm16(std::clamp(s, -1.0, 1.0)) / 32768.0;
  return q;
}

}  // namespace uqasr
