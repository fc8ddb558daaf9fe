#include "uqasr/mlp.hpp"

#include <cmath>

namespace uqasr {
namespace {

void apply_mask(Matrix& h, const Matrix& mask) {
  if (mask.size() == 0) return;
  if (mask.rows() == 1) {
    h.array().rowwise() *= mask.row(0).array();
  } else {
    h.array() *= mask.array();
  }
}

Matrix relu(const Matrix& z) { return z.cwiseMax(0.0); }

Matrix relu_grad(const Matrix& z, const Matrix& upstream) {
  return (z.array() > 0.0).select(upstream.array(), 0.0).matrix();
}

}  // namespace

MlpParams MlpParams::zeros(const MlpShape& s) { return filled(s, 0.0); }

MlpParams MlpParams::filled(const MlpShape& s, double v) {
  MlpParams p;
  p.w1 = Matrix::Constant(s.input, s.hidden, v);
  p.b1 = Matrix::Constant(1, s.hidden, v);
  p.w2 = Matrix::Constant(s.hidden, s.hidden, v);
  p.b2 = Matrix::Constant(1, s.hidden, v);
  p.w3 = Matrix::Constant(s.hidden, s.output, v);
  p.b3 = Matrix::Constant(1, s.output, v);
  return p;
}

MlpParams MlpParams::he_init(const MlpShape& s, Rng& rng) {
  MlpParams p = zeros(s);
  const auto fill = [&rng](Matrix& w) {
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(w.rows())));
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = dist(rng);
  };
  fill(p.w1);
  fill(p.w2);
  fill(p.w3);
  return p;
}

MlpShape MlpParams::shape() const {
  return {static_cast<int>(w1.rows()), static_cast<int>(w1.cols()), static_cast<int>(w3.cols())};
}

std::array<Matrix*, 6> MlpParams::tensors() { return {&w1, &b1, &w2, &b2, &w3, &b3}; }
std::array<const Matrix*, 6> MlpParams::tensors() const { return {&w1, &b1, &w2, &b2, &w3, &b3}; }

bool MlpParams::all_finite() const {
  for (const Matrix* t : tensors())
    if (!t->allFinite()) return false;
  return true;
}

HiddenMasks sample_hidden_masks(const MlpShape& s, Eigen::Index rows, double p, Rng& rng) {
  std::bernoulli_distribution keep(1.0 - p);
  const double scale = 1.0 / (1.0 - p);
  HiddenMasks m;
  m.m1.resize(rows, s.hidden);
  m.m2.resize(rows, s.hidden);
  for (Matrix* mask : {&m.m1, &m.m2}) {
    for (Eigen::Index i = 0; i < mask->rows(); ++i)
      for (Eigen::Index j = 0; j < mask->cols(); ++j) (*mask)(i, j) = keep(rng) ? scale : 0.0;
  }
  return m;
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix out = logits;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const double mx = out.row(i).maxCoeff();
    out.row(i) = (out.row(i).array() - mx).exp();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

Matrix mlp_forward(const MlpParams& p, const Matrix& x, const HiddenMasks* masks, MlpTrace* trace) {
  Matrix z1 = x * p.w1;
  z1.rowwise() += p.b1.row(0);
  Matrix h1 = relu(z1);
  if (masks) apply_mask(h1, masks->m1);
  Matrix z2 = h1 * p.w2;
  z2.rowwise() += p.b2.row(0);
  Matrix h2 = relu(z2);
  if (masks) apply_mask(h2, masks->m2);
  Matrix z3 = h2 * p.w3;
  z3.rowwise() += p.b3.row(0);
  Matrix probs = softmax_rows(z3);
  if (trace) {
    trace->x = x;
    trace->z1 = std::move(z1);
    trace->h1 = std::move(h1);
    trace->z2 = std::move(z2);
    trace->h2 = std::move(h2);
    trace->probs = probs;
  }
  return probs;
}

void mlp_backward(const MlpParams& p, const MlpTrace& tr, const Matrix& dz3, const HiddenMasks* masks,
                  MlpParams* grads, Matrix* dx) {
  Matrix dh2 = dz3 * p.w3.transpose();
  if (masks) apply_mask(dh2, masks->m2);
  const Matrix dz2 = relu_grad(tr.z2, dh2);
  Matrix dh1 = dz2 * p.w2.transpose();
  if (masks) apply_mask(dh1, masks->m1);
  const Matrix dz1 = relu_grad(tr.z1, dh1);
  if (grads) {
    grads->w3 = tr.h2.transpose() * dz3;
    grads->b3 = dz3.colwise().sum();
    grads->w2 = tr.h1.transpose() * dz2;
    grads->b2 = dz2.colwise().sum();
    grads->w1 = tr.x.transpose() * dz1;
    grads->b1 = dz1.colwise().sum();
  }
  if (dx) *dx = dz1 * p.w1.transpose();
}

void check_targets(std::span<const int> targets, Eigen::Index frames, int num_classes) {
  if (static_cast<Eigen::Index>(targets.size()) != frames) {
    throw ShapeError("alignment length " + std::to_string(targets.size()) + " != frame count " +
                     std::to_string(frames));
  }
  for (int s : targets) {
    if (s < 0 || s >= num_classes) {
      throw PreconditionError("state id " + std::to_string(s) + " outside [0, " +
                              std::to_string(num_classes) + ")");
    }
  }
}

double mean_cross_entropy(const Matrix& probs, std::span<const int> targets) {
  double total = 0.0;
  for (size_t t = 0; t < targets.size(); ++t) {
    total -= std::log(std::max(probs(static_cast<Eigen::Index>(t), targets[t]), 1e-300));
  }
  return total / static_cast<double>(targets.size());
}

Matrix cross_entropy_logit_grad(const Matrix& probs, std::span<const int> targets, double scale) {
  Matrix g = probs;
  for (size_t t = 0; t < targets.size(); ++t) g(static_cast<Eigen::Index>(t), targets[t]) -= 1.0;
  return g * scale;
}

}  // namespace uqasr
