#pragma once

#include "uqasr/acoustic_model.hpp"

#include <span>
#include <string>

namespace uqasr {

struct TrainConfig {
  double learning_rate = 1e-3;
  int batch_size = 256;  // frames
  int epochs_ce = 3;
  int epochs_viterbi = 3;
  uint64_t seed = 1;
  int dropout_grad_samples = 10;
  double drop_prob = 0.2;
  int dropout_samples = 100;
  int ensemble_size = 5;
  int bnn_samples = 5;
  double bnn_init_rho = -2.0;
  // KLD weight ramps linearly from 0 to 1/num_batches over the first epoch.
  bool kld_anneal = true;
  MlpShape shape{};

  void validate() const;
};

// A feature matrix with its per-frame HMM state targets.
struct LabeledUtterance {
  std::string id;
  Matrix feats;
  Transcript transcript;
  Alignment alignment;
};

// All frames of a dataset stacked row-wise.
struct FrameSet {
  Matrix feats;
  std::vector<int> targets;

  static FrameSet stack(std::span<const LabeledUtterance> data);
  Eigen::Index size() const { return feats.rows(); }
};

// Trainable tensors in a fixed order: fNN/dropout -> 6 MLP tensors; ensemble
// -> 6 per member; BNN -> 6 mu tensors followed by 6 rho tensors.
std::vector<Matrix*> trainable_tensors(AcousticModel& model);
std::vector<const Matrix*> trainable_tensors(const AcousticModel& model);

struct LossResult {
  double loss = 0.0;
  std::vector<Matrix> grads;  // aligned with trainable_tensors()
};

// Mean per-frame cross-entropy and exact gradients. Dropout averages over
// `dropout_grad_samples` per-frame mask draws; ensemble members each get the
// gradient of their own loss (loss reported as the member mean); the BNN
// uses the reparameterized expected cross-entropy (an ELBO with no KLD term).
LossResult ce_loss_and_grads(const AcousticModel& model, const Matrix& feats, std::span<const int> targets,
                             uint64_t seed = 0, int dropout_grad_samples = 10);

struct ElboResult {
  double loss = 0.0;  // nll + kld_weight * kld
  double nll = 0.0;   // summed over frames, one local-reparameterization sample
  double kld = 0.0;
  std::vector<Matrix> grads;  // mu tensors then rho tensors
};

// Closed form KL[q || N(0, 1)] summed over every parameter.
double kl_divergence(const BnnPosterior& q);

ElboResult elbo_loss(const AcousticModel& bnn, const Matrix& feats, std::span<const int> targets,
                     double kld_weight, uint64_t seed);

AcousticModel init_model(ModelKind kind, const InputNorm& norm, const TrainConfig& cfg);

// Mini-batch Adam over frames. Ensemble members keep separate optimizer state
// and shuffle streams (member i uses seed + i).
class Trainer {
 public:
  Trainer(AcousticModel model, TrainConfig cfg);
  Trainer(const Trainer&) = delete;
  Trainer& operator=(const Trainer&) = delete;

  // One pass over the frames; returns the mean training loss per frame.
  double run_epoch(const FrameSet& data);

  const AcousticModel& model() const { return model_; }
  AcousticModel& model() { return model_; }
  int epochs_run() const { return epoch_; }

 private:
  struct Unit {
    std::vector<Matrix*> tensors;
    std::vector<Matrix> m, v;
    long step = 0;
    uint64_t seed = 0;
    int member = -1;
  };

  void adam_update(Unit& unit, const std::vector<Matrix>& grads);
  void rebind();

  AcousticModel model_;
  TrainConfig cfg_;
  std::vector<Unit> units_;
  int epoch_ = 0;
};

// Fits the input normalization, initializes and runs cfg.epochs_ce epochs
// on the given alignments.
AcousticModel train(ModelKind kind, std::span<const LabeledUtterance> data, const TrainConfig& cfg);

}  // namespace uqasr
