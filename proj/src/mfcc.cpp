#include "uqasr/mfcc.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <mutex>
#include <numbers>

namespace uqasr {
namespace {

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

int clamp_index(int i, int n) { return std::clamp(i, 0, n - 1); }

}  // namespace

void FeatureConfig::validate() const {
  if (hop <= 0 || window_length < hop) throw PreconditionError("need window_length >= hop > 0");
  if (num_ceps <= 0 || num_ceps > num_mel_filters) {
    throw PreconditionError("need 0 < num_ceps <= num_mel_filters");
  }
  if (fft_size < window_length) throw PreconditionError("fft_size shorter than window");
  if (!(log_floor > 0.0)) throw PreconditionError("log_floor must be positive");
  if (delta_context <= 0) throw PreconditionError("delta_context must be positive");
}

int frame_count(size_t num_samples, const FeatureConfig& cfg) {
  const auto window = static_cast<size_t>(cfg.window_length);
  if (num_samples < window) return 0;
  return static_cast<int>((num_samples - window) / static_cast<size_t>(cfg.hop)) + 1;
}

Matrix mel_filterbank(const FeatureConfig& cfg) {
  const int bins = cfg.fft_size / 2 + 1;
  const double nyquist = cfg.sample_rate / 2.0;
  const double mel_hi = hz_to_mel(nyquist);
  std::vector<double> edges(static_cast<size_t>(cfg.num_mel_filters + 2));
  for (size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(mel_hi * static_cast<double>(i) / (cfg.num_mel_filters + 1));
  }
  Matrix fb = Matrix::Zero(cfg.num_mel_filters, bins);
  for (int m = 0; m < cfg.num_mel_filters; ++m) {
    const double lo = edges[m], center = edges[m + 1], hi = edges[m + 2];
    for (int k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * cfg.sample_rate / cfg.fft_size;
      if (f > lo && f <= center) {
        fb(m, k) = (f - lo) / (center - lo);
      } else if (f > center && f < hi) {
        fb(m, k) = (hi - f) / (hi - center);
      }
    }
    if (fb.row(m).sum() <= 0.0) throw PreconditionError("empty mel filter; fft_size too small");
  }
  return fb;
}

Matrix dct_matrix(const FeatureConfig& cfg) {
  const int m_count = cfg.num_mel_filters;
  Matrix d(cfg.num_ceps, m_count);
  for (int k = 0; k < cfg.num_ceps; ++k) {
    const double scale = std::sqrt((k == 0 ? 1.0 : 2.0) / m_count);
    for (int m = 0; m < m_count; ++m) {
      d(k, m) = scale * std::cos(std::numbers::pi * k * (m + 0.5) / m_count);
    }
  }
  return d;
}

Matrix compute_deltas(const Matrix& x, int context) {
  const int n = static_cast<int>(x.rows());
  double denom = 0.0;
  for (int k = 1; k <= context; ++k) denom += 2.0 * k * k;
  Matrix d = Matrix::Zero(x.rows(), x.cols());
  for (int t = 0; t < n; ++t) {
    for (int k = 1; k <= context; ++k) {
      d.row(t) += (k / denom) * (x.row(clamp_index(t + k, n)) - x.row(clamp_index(t - k, n)));
    }
  }
  return d;
}

Matrix compute_deltas_transpose(const Matrix& g, int context) {
  const int n = static_cast<int>(g.rows());
  double denom = 0.0;
  for (int k = 1; k <= context; ++k) denom += 2.0 * k * k;
  Matrix out = Matrix::Zero(g.rows(), g.cols());
  for (int t = 0; t < n; ++t) {
    for (int k = 1; k <= context; ++k) {
      out.row(clamp_index(t + k, n)) += (k / denom) * g.row(t);
      out.row(clamp_index(t - k, n)) -= (k / denom) * g.row(t);
    }
  }
  return out;
}

Matrix add_deltas(const Matrix& s, int context) {
  const Matrix d1 = compute_deltas(s, context);
  const Matrix d2 = compute_deltas(d1, context);
  Matrix out(s.rows(), 3 * s.cols());
  out << s, d1, d2;
  return out;
}

MfccFrontEnd::MfccFrontEnd(const FeatureConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  const int n = cfg_.window_length;
  const int bins = cfg_.fft_size / 2 + 1;
  windowed_cos_.resize(n, bins);
  windowed_sin_.resize(n, bins);
  for (int i = 0; i < n; ++i) {
    const double w = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * i / (n - 1));
    for (int k = 0; k < bins; ++k) {
      const double angle = 2.0 * std::numbers::pi * static_cast<double>(i) * k / cfg_.fft_size;
      windowed_cos_(i, k) = w * std::cos(angle);
      windowed_sin_(i, k) = -w * std::sin(angle);
    }
  }
  mel_ = mel_filterbank(cfg_);
  dct_ = dct_matrix(cfg_);
}

Matrix MfccFrontEnd::frames(std::span<const double> samples) const {
  const int t_count = frame_count(samples.size(), cfg_);
  if (t_count == 0) throw PreconditionError("waveform shorter than one analysis window");
  Matrix f(t_count, cfg_.window_length);
  for (int t = 0; t < t_count; ++t) {
    const double* src = samples.data() + static_cast<size_t>(t) * cfg_.hop;
    for (int i = 0; i < cfg_.window_length; ++i) f(t, i) = src[i];
  }
  return f;
}

Matrix MfccFrontEnd::filterbank_energies(std::span<const double> samples) const {
  const Matrix f = frames(samples);
  const Matrix re = f * windowed_cos_;
  const Matrix im = f * windowed_sin_;
  const Matrix power = (re.array().square() + im.array().square()).matrix() / cfg_.fft_size;
  return power * mel_.transpose();
}

FeatureMatrix MfccFrontEnd::forward(std::span<const double> samples, Trace* trace) const {
  const Matrix f = frames(samples);
  Matrix re = f * windowed_cos_;
  Matrix im = f * windowed_sin_;
  const Matrix power = (re.array().square() + im.array().square()).matrix() / cfg_.fft_size;
  Matrix energy = power * mel_.transpose();
  const Matrix logs = energy.array().max(cfg_.log_floor).log().matrix();
  const Matrix ceps = logs * dct_.transpose();
  if (trace) {
    trace->real = std::move(re);
    trace->imag = std::move(im);
    trace->mel_energy = std::move(energy);
    trace->num_samples = samples.size();
  }
  return add_deltas(ceps, cfg_.delta_context);
}

std::vector<double> MfccFrontEnd::backward(const Trace& trace, const Matrix& upstream) const {
  const Eigen::Index t_count = trace.mel_energy.rows();
  const int c = cfg_.num_ceps;
  if (upstream.rows() != t_count || upstream.cols() != 3 * c) {
    throw ShapeError("upstream gradient shape does not match MFCC output");
  }
  const int ctx = cfg_.delta_context;
  // out = [s, D s, D D s]  =>  grad_s = g0 + D^T g1 + D^T D^T g2
  Matrix g_static = upstream.leftCols(c);
  g_static += compute_deltas_transpose(
      upstream.middleCols(c, c) + compute_deltas_transpose(upstream.rightCols(c), ctx), ctx);

  Matrix g_log = g_static * dct_;
  const auto& e = trace.mel_energy.array();
  Matrix g_energy = (e >= cfg_.log_floor).select(g_log.array() / e, 0.0).matrix();
  const Matrix g_power = g_energy * mel_;
  const double scale = 2.0 / cfg_.fft_size;
  const Matrix g_re = (trace.real.array() * g_power.array() * scale).matrix();
  const Matrix g_im = (trace.imag.array() * g_power.array() * scale).matrix();
  const Matrix g_frames = g_re * windowed_cos_.transpose() + g_im * windowed_sin_.transpose();

  std::vector<double> grad(trace.num_samples, 0.0);
  for (Eigen::Index t = 0; t < t_count; ++t) {
    double* dst = grad.data() + static_cast<size_t>(t) * cfg_.hop;
    for (int i = 0; i < cfg_.window_length; ++i) dst[i] += g_frames(t, i);
  }
  return grad;
}

const MfccFrontEnd& front_end(const FeatureConfig& cfg) {
  static std::mutex mutex;
  static std::vector<std::unique_ptr<MfccFrontEnd>> cache;
  std::lock_guard lock(mutex);
  for (const auto& fe : cache) {
    if (fe->config() == cfg) return *fe;
  }
  cache.push_back(std::make_unique<MfccFrontEnd>(cfg));
  return *cache.back();
}

FeatureMatrix compute_mfcc(const Waveform& waveform, const FeatureConfig& cfg) {
  return front_end(cfg).forward(waveform.samples);
}

std::vector<double> mfcc_backward(const Waveform& waveform, const Matrix& upstream,
                                  const FeatureConfig& cfg) {
  const auto& fe = front_end(cfg);
  MfccFrontEnd::Trace trace;
  fe.forward(waveform.samples, &trace);
  return fe.backward(trace, upstream);
}

}  // namespace uqasr
