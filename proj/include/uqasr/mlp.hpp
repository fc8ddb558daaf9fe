#pragma once

#include "uqasr/common.hpp"
#include "uqasr/rng.hpp"

#include <array>
#include <span>
#include <string_view>

namespace uqasr {

struct MlpShape {
  int input = 39;
  int hidden = 100;
  int output = 95;
  bool operator==(const MlpShape&) const = default;
};

// input -> hidden -> hidden -> output, ReLU between layers, softmax output.
// Weights are stored (fan_in x fan_out); biases as 1 x fan_out.
struct MlpParams {
  Matrix w1, b1, w2, b2, w3, b3;

  static constexpr std::array<std::string_view, 6> kTensorNames{
      "fc1.weight", "fc1.bias", "fc2.weight", "fc2.bias", "fc3.weight", "fc3.bias"};

  static MlpParams zeros(const MlpShape& shape);
  static MlpParams filled(const MlpShape& shape, double value);
  // He-normal weights, zero biases.
  static MlpParams he_init(const MlpShape& shape, Rng& rng);

  MlpShape shape() const;
  std::array<Matrix*, 6> tensors();
  std::array<const Matrix*, 6> tensors() const;
  bool all_finite() const;
};

// Inverted-dropout masks (entries 0 or 1/(1-p)) for the two hidden layers.
// A single row is broadcast over every frame.
struct HiddenMasks {
  Matrix m1, m2;
};

HiddenMasks sample_hidden_masks(const MlpShape& shape, Eigen::Index rows, double drop_prob, Rng& rng);

struct MlpTrace {
  Matrix x, z1, h1, z2, h2;  // h1/h2 after masking
  Matrix probs;
};

Matrix softmax_rows(const Matrix& logits);

Matrix mlp_forward(const MlpParams& p, const Matrix& x, const HiddenMasks* masks = nullptr,
                   MlpTrace* trace = nullptr);

// Backpropagates d(loss)/d(logits). Either output may be null.
void mlp_backward(const MlpParams& p, const MlpTrace& trace, const Matrix& dlogits,
                  const HiddenMasks* masks, MlpParams* grads, Matrix* dx);

// Mean over frames of -log p(target).
double mean_cross_entropy(const Matrix& probs, std::span<const int> targets);

// (probs - onehot(targets)) * scale: gradient of scale * sum CE w.r.t. logits.
Matrix cross_entropy_logit_grad(const Matrix& probs, std::span<const int> targets, double scale);

void check_targets(std::span<const int> targets, Eigen::Index frames, int num_classes);

}  // namespace uqasr
