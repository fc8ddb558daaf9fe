#pragma once

#include "uqasr/common.hpp"
#include "uqasr/mlp.hpp"

#include <string_view>
#include <variant>

namespace uqasr {

enum class ModelKind { Fnn, Ensemble, Dropout, Bnn };

std::string_view to_string(ModelKind kind);
ModelKind parse_model_kind(std::string_view name);
inline constexpr std::array<ModelKind, 4> kAllModelKinds{ModelKind::Fnn, ModelKind::Ensemble,
                                                         ModelKind::Dropout, ModelKind::Bnn};

// Fixed per-dimension standardization of the feature frames, estimated once
// from training data and never trained.
struct InputNorm {
  RowVector mean;
  RowVector inv_std;

  static InputNorm identity(int dim);
  static InputNorm fit(const Matrix& frames);
  Matrix apply(const Matrix& feats) const;
};

double softplus(double x);
double sigmoid(double x);

// Mean-field Gaussian q(theta): theta = mu + softplus(rho) * zeta.
struct BnnPosterior {
  MlpParams mu;
  MlpParams rho;

  MlpParams stddev() const;
  MlpParams sample(Rng& rng) const;
};

struct FnnModel {
  MlpParams params;
};

struct EnsembleModel {
  std::vector<MlpParams> members;
};

struct DropoutModel {
  MlpParams params;
  double drop_prob = 0.2;
  int samples = 100;
};

struct BnnModel {
  BnnPosterior posterior;
  int samples = 5;
};

struct AcousticModel {
  InputNorm norm;
  std::variant<FnnModel, EnsembleModel, DropoutModel, BnnModel> body;

  ModelKind kind() const;
  // T used for mean-mode prediction; 1 for the fNN.
  int num_samples() const;
  MlpShape shape() const;
  void validate() const;
};

struct PredictMode {
  enum class Kind { Mean, SingleSample };
  Kind kind = Kind::Mean;
  uint64_t seed = 0;

  static PredictMode mean(uint64_t seed = 0) { return {Kind::Mean, seed}; }
  static PredictMode single_sample(uint64_t seed) { return {Kind::SingleSample, seed}; }
};

// frames x classes posteriors. Mean mode averages the model's T sampled
// networks (deterministic output for the fNN); single-sample mode evaluates
// one theta_t.
Matrix forward(const AcousticModel& model, const Matrix& feats, PredictMode mode = PredictMode::mean());

// T x (frames x classes). Sample t of a dropout network uses one mask shared
// by all frames of the utterance. Ensembles return their members as-is.
// T <= 0 selects the model's own sample count.
std::vector<Matrix> sample_predictions(const AcousticModel& model, const Matrix& feats, int T,
                                       uint64_t seed);

struct InputGradient {
  double loss = 0.0;  // mean per-frame cross-entropy
  Matrix grad;        // frames x feature_dim
};

// Gradient of the mean frame-wise cross-entropy toward `targets` w.r.t. the
// input features. Mean mode averages the per-sample gradients over the T
// sampled networks.
InputGradient input_grad(const AcousticModel& model, const Matrix& feats, std::span<const int> targets,
                         PredictMode mode);

// One concrete network of a sampled model, with its optional dropout masks.
struct SampledNetwork {
  MlpParams params;
  HiddenMasks masks;
  bool has_masks = false;
};

SampledNetwork draw_network(const AcousticModel& model, int t, uint64_t seed);

}  // namespace uqasr
