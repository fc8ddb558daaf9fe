#pragma once

#include "uqasr/common.hpp"
#include "uqasr/wav.hpp"

#include <span>

namespace uqasr {

struct FeatureConfig {
  int window_length = 200;  // 25 ms at 8 kHz
  int hop = 80;             // 10 ms
  int num_mel_filters = 26;
  int num_ceps = 13;
  double log_floor = 1e-10;
  int delta_context = 2;
  int fft_size = 256;
  int sample_rate = kSampleRate;

  void validate() const;
  int feature_dim() const { return 3 * num_ceps; }
  bool operator==(const FeatureConfig&) const = default;
};

// frames x (13 MFCC + 13 delta + 13 delta-delta)
using FeatureMatrix = Matrix;

// floor((n - window) / hop) + 1; zero when n < window.
int frame_count(size_t num_samples, const FeatureConfig& cfg);

// Triangular mel filters (HTK mel scale) sampled at the DFT bin frequencies;
// num_mel_filters x (fft_size / 2 + 1).
Matrix mel_filterbank(const FeatureConfig& cfg);

// Orthonormal DCT-II truncated to num_ceps rows; num_ceps x num_mel_filters.
Matrix dct_matrix(const FeatureConfig& cfg);

// Regression deltas over +-context frames with replicated edge frames.
Matrix compute_deltas(const Matrix& features, int context);
// Adjoint of compute_deltas.
Matrix compute_deltas_transpose(const Matrix& upstream, int context);
// [static | delta | delta-delta]
Matrix add_deltas(const Matrix& static_features, int context);

// Stateless MFCC pipeline with precomputed window/DFT/mel/DCT matrices.
class MfccFrontEnd {
 public:
  explicit MfccFrontEnd(const FeatureConfig& cfg = {});

  const FeatureConfig& config() const { return cfg_; }

  // Intermediate values kept by forward() so backward() need not recompute.
  struct Trace {
    Matrix real, imag;  // frames x bins
    Matrix mel_energy;  // frames x filters (before flooring)
    size_t num_samples = 0;
  };

  FeatureMatrix forward(std::span<const double> samples, Trace* trace = nullptr) const;
  // Power mel filterbank energies only (no log/DCT/deltas).
  Matrix filterbank_energies(std::span<const double> samples) const;
  std::vector<double> backward(const Trace& trace, const Matrix& upstream) const;

 private:
  Matrix frames(std::span<const double> samples) const;

  FeatureConfig cfg_;
  Matrix windowed_cos_;  // window_length x bins, Hamming window folded in
  Matrix windowed_sin_;
  Matrix mel_;           // filters x bins
  Matrix dct_;           // ceps x filters
};

// Shared front end for a config (built once, thread-safe).
const MfccFrontEnd& front_end(const FeatureConfig& cfg);

FeatureMatrix compute_mfcc(const Waveform& waveform, const FeatureConfig& cfg = {});

// Reverse-mode gradient of sum(upstream .* compute_mfcc(waveform)) w.r.t. the
// samples. Below the log floor the subgradient is 0.
std::vector<double> mfcc_backward(const Waveform& waveform, const Matrix& upstream,
                                  const FeatureConfig& cfg = {});

}  // namespace uqasr
