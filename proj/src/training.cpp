#include "uqasr/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace uqasr {
namespace {

struct BnnLayerTrace {
  Matrix a, mean, sd, noise, z;
};

// CE gradients for one concrete network on pre-normalized inputs.
double network_ce(const MlpParams& params, const Matrix& xn, std::span<const int> targets,
                  const HiddenMasks* masks, MlpParams* grads) {
  MlpTrace trace;
  const Matrix probs = mlp_forward(params, xn, masks, &trace);
  const double scale = 1.0 / static_cast<double>(xn.rows());
  mlp_backward(params, trace, cross_entropy_logit_grad(probs, targets, scale), masks, grads, nullptr);
  return mean_cross_entropy(probs, targets);
}

std::vector<Matrix> flatten(const MlpParams& g) {
  std::vector<Matrix> out;
  for (const Matrix* t : g.tensors()) out.push_back(*t);
  return out;
}

// Local reparameterization: pre-activations are sampled from
// N(a mu_w + mu_b, a^2 sigma_w^2 + sigma_b^2).
BnnLayerTrace bnn_layer_forward(const Matrix& a, const Matrix& mu_w, const Matrix& mu_b, const Matrix& sd_w,
                                const Matrix& sd_b, Rng& rng) {
  BnnLayerTrace tr;
  tr.a = a;
  tr.mean = a * mu_w;
  tr.mean.rowwise() += mu_b.row(0);
  Matrix var = a.array().square().matrix() * sd_w.array().square().matrix();
  var.rowwise() += sd_b.array().square().matrix().row(0);
  tr.sd = var.array().sqrt().matrix();
  std::normal_distribution<double> normal(0.0, 1.0);
  tr.noise.resize(tr.mean.rows(), tr.mean.cols());
  for (Eigen::Index j = 0; j < tr.noise.cols(); ++j)
    for (Eigen::Index i = 0; i < tr.noise.rows(); ++i) tr.noise(i, j) = normal(rng);
  tr.z = tr.mean + (tr.sd.array() * tr.noise.array()).matrix();
  return tr;
}

// Returns d/da; accumulates grads of mu and sd of this layer.
Matrix bnn_layer_backward(const BnnLayerTrace& tr, const Matrix& dz, const Matrix& mu_w, const Matrix& sd_w,
                          const Matrix& sd_b, Matrix& g_mu_w, Matrix& g_mu_b, Matrix& g_sd_w, Matrix& g_sd_b) {
  const Matrix dvar = (dz.array() * tr.noise.array() / (2.0 * tr.sd.array())).matrix();
  g_mu_w = tr.a.transpose() * dz;
  g_mu_b = dz.colwise().sum();
  const Matrix a2 = tr.a.array().square().matrix();
  g_sd_w = (2.0 * sd_w.array() * (a2.transpose() * dvar).array()).matrix();
  g_sd_b = (2.0 * sd_b.array() * dvar.colwise().sum().array()).matrix();
  const Matrix sd_w2 = sd_w.array().square().matrix();
  return dz * mu_w.transpose() + (2.0 * tr.a.array() * (dvar * sd_w2.transpose()).array()).matrix();
}

Matrix relu_backward(const Matrix& z, const Matrix& g) {
  return (z.array() > 0.0).select(g.array(), 0.0).matrix();
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || batch_size <= 0 || epochs_ce < 0 || epochs_viterbi < 0 ||
      dropout_grad_samples <= 0 || dropout_samples <= 0 || ensemble_size <= 0 || bnn_samples <= 0) {
    throw PreconditionError("training hyperparameters must be positive");
  }
  if (!(drop_prob > 0.0 && drop_prob < 1.0)) throw PreconditionError("drop_prob must lie in (0, 1)");
}

FrameSet FrameSet::stack(std::span<const LabeledUtterance> data) {
  Eigen::Index rows = 0;
  Eigen::Index cols = data.empty() ? 0 : data.front().feats.cols();
  for (const auto& u : data) {
    check_targets(u.alignment, u.feats.rows(), std::numeric_limits<int>::max());
    rows += u.feats.rows();
  }
  FrameSet fs;
  fs.feats.resize(rows, cols);
  fs.targets.reserve(static_cast<size_t>(rows));
  Eigen::Index r = 0;
  for (const auto& u : data) {
    fs.feats.middleRows(r, u.feats.rows()) = u.feats;
    r += u.feats.rows();
    fs.targets.insert(fs.targets.end(), u.alignment.begin(), u.alignment.end());
  }
  return fs;
}

std::vector<Matrix*> trainable_tensors(AcousticModel& model) {
  std::vector<Matrix*> out;
  const auto add = [&out](MlpParams& p) {
    for (Matrix* t : p.tensors()) out.push_back(t);
  };
  if (auto* f = std::get_if<FnnModel>(&model.body)) add(f->params);
  if (auto* e = std::get_if<EnsembleModel>(&model.body))
    for (auto& m : e->members) add(m);
  if (auto* d = std::get_if<DropoutModel>(&model.body)) add(d->params);
  if (auto* b = std::get_if<BnnModel>(&model.body)) {
    add(b->posterior.mu);
    add(b->posterior.rho);
  }
  return out;
}

std::vector<const Matrix*> trainable_tensors(const AcousticModel& model) {
  auto mut = trainable_tensors(const_cast<AcousticModel&>(model));
  return {mut.begin(), mut.end()};
}

double kl_divergence(const BnnPosterior& q) {
  double kld = 0.0;
  const auto mu = q.mu.tensors();
  const auto rho = q.rho.tensors();
  for (size_t k = 0; k < mu.size(); ++k) {
    const auto sd = rho[k]->array().unaryExpr([](double r) { return softplus(r); });
    const auto var = sd.square();
    kld += 0.5 * (mu[k]->array().square() + var - 1.0 - var.log()).sum();
  }
  return kld;
}

ElboResult elbo_loss(const AcousticModel& model, const Matrix& feats, std::span<const int> targets,
                     double kld_weight, uint64_t seed) {
  const auto* bnn = std::get_if<BnnModel>(&model.body);
  if (!bnn) throw PreconditionError("elbo_loss requires a BNN model");
  if (kld_weight < 0.0) throw PreconditionError("kld_weight must be non-negative");
  const BnnPosterior& q = bnn->posterior;
  const MlpParams sd = q.stddev();
  for (const Matrix* t : sd.tensors())
    if (!t->allFinite()) throw NumericError("non-finite sigma");
  check_targets(targets, feats.rows(), model.shape().output);

  Rng rng(derive_seed(seed, "elbo"));
  const Matrix xn = model.norm.apply(feats);
  const BnnLayerTrace l1 = bnn_layer_forward(xn, q.mu.w1, q.mu.b1, sd.w1, sd.b1, rng);
  const Matrix h1 = l1.z.cwiseMax(0.0);
  const BnnLayerTrace l2 = bnn_layer_forward(h1, q.mu.w2, q.mu.b2, sd.w2, sd.b2, rng);
  const Matrix h2 = l2.z.cwiseMax(0.0);
  const BnnLayerTrace l3 = bnn_layer_forward(h2, q.mu.w3, q.mu.b3, sd.w3, sd.b3, rng);
  const Matrix probs = softmax_rows(l3.z);

  ElboResult out;
  out.nll = mean_cross_entropy(probs, targets) * static_cast<double>(targets.size());
  out.kld = kl_divergence(q);
  out.loss = out.nll + kld_weight * out.kld;

  MlpParams g_mu = MlpParams::zeros(q.mu.shape());
  MlpParams g_sd = g_mu;
  const Matrix dz3 = cross_entropy_logit_grad(probs, targets, 1.0);
  const Matrix dh2 = bnn_layer_backward(l3, dz3, q.mu.w3, sd.w3, sd.b3, g_mu.w3, g_mu.b3, g_sd.w3, g_sd.b3);
  const Matrix dh1 = bnn_layer_backward(l2, relu_backward(l2.z, dh2), q.mu.w2, sd.w2, sd.b2, g_mu.w2, g_mu.b2,
                                        g_sd.w2, g_sd.b2);
  bnn_layer_backward(l1, relu_backward(l1.z, dh1), q.mu.w1, sd.w1, sd.b1, g_mu.w1, g_mu.b1, g_sd.w1, g_sd.b1);

  const auto gm = g_mu.tensors();
  const auto gs = g_sd.tensors();
  const auto mu = q.mu.tensors();
  const auto rho = q.rho.tensors();
  const auto sds = sd.tensors();
  for (size_t k = 0; k < gm.size(); ++k) {
    *gm[k] += kld_weight * *mu[k];
    *gs[k] += kld_weight * (sds[k]->array() - sds[k]->array().inverse()).matrix();
    // d softplus(rho) / d rho = sigmoid(rho)
    *gs[k] = (gs[k]->array() * rho[k]->array().unaryExpr([](double r) { return sigmoid(r); })).matrix();
  }
  out.grads = flatten(g_mu);
  for (const Matrix* t : g_sd.tensors()) out.grads.push_back(*t);
  return out;
}

LossResult ce_loss_and_grads(const AcousticModel& model, const Matrix& feats, std::span<const int> targets,
                             uint64_t seed, int dropout_grad_samples) {
  if (feats.cols() != model.shape().input) throw ShapeError("feature dimension mismatch");
  check_targets(targets, feats.rows(), model.shape().output);
  LossResult out;

  if (model.kind() == ModelKind::Bnn) {
    const ElboResult e = elbo_loss(model, feats, targets, 0.0, seed);
    const double n = static_cast<double>(feats.rows());
    out.loss = e.nll / n;
    for (const Matrix& g : e.grads) out.grads.push_back(g / n);
    return out;
  }

  const Matrix xn = model.norm.apply(feats);
  if (const auto* f = std::get_if<FnnModel>(&model.body)) {
    MlpParams g;
    out.loss = network_ce(f->params, xn, targets, nullptr, &g);
    out.grads = flatten(g);
  } else if (const auto* e = std::get_if<EnsembleModel>(&model.body)) {
    for (const auto& member : e->members) {
      MlpParams g;
      out.loss += network_ce(member, xn, targets, nullptr, &g) / static_cast<double>(e->members.size());
      for (Matrix& t : flatten(g)) out.grads.push_back(std::move(t));
    }
  } else if (const auto* d = std::get_if<DropoutModel>(&model.body)) {
    MlpParams acc = MlpParams::zeros(d->params.shape());
    for (int s = 0; s < dropout_grad_samples; ++s) {
      Rng rng(derive_seed(seed, "train-mask", static_cast<uint64_t>(s)));
      const HiddenMasks masks = sample_hidden_masks(d->params.shape(), xn.rows(), d->drop_prob, rng);
      MlpParams g;
      out.loss += network_ce(d->params, xn, targets, &masks, &g) / dropout_grad_samples;
      const auto src = g.tensors();
      const auto dst = acc.tensors();
      for (size_t k = 0; k < src.size(); ++k) *dst[k] += *src[k] / static_cast<double>(dropout_grad_samples);
    }
    out.grads = flatten(acc);
  }
  return out;
}

AcousticModel init_model(ModelKind kind, const InputNorm& norm, const TrainConfig& cfg) {
  cfg.validate();
  AcousticModel model;
  model.norm = norm;
  switch (kind) {
    case ModelKind::Fnn: {
      Rng rng(derive_seed(cfg.seed, "init"));
      model.body = FnnModel{MlpParams::he_init(cfg.shape, rng)};
      break;
    }
    case ModelKind::Ensemble: {
      EnsembleModel e;
      for (int i = 0; i < cfg.ensemble_size; ++i) {
        Rng rng(derive_seed(cfg.seed + static_cast<uint64_t>(i), "init"));
        e.members.push_back(MlpParams::he_init(cfg.shape, rng));
      }
      model.body = std::move(e);
      break;
    }
    case ModelKind::Dropout: {
      Rng rng(derive_seed(cfg.seed, "init"));
      model.body = DropoutModel{MlpParams::he_init(cfg.shape, rng), cfg.drop_prob, cfg.dropout_samples};
      break;
    }
    case ModelKind::Bnn: {
      Rng rng(derive_seed(cfg.seed, "init"));
      BnnPosterior q{MlpParams::he_init(cfg.shape, rng), MlpParams::filled(cfg.shape, cfg.bnn_init_rho)};
      model.body = BnnModel{std::move(q), cfg.bnn_samples};
      break;
    }
  }
  return model;
}

Trainer::Trainer(AcousticModel model, TrainConfig cfg) : model_(std::move(model)), cfg_(cfg) {
  cfg_.validate();
  model_.validate();
  rebind();
  for (Unit& u : units_) {
    for (const Matrix* t : u.tensors) {
      u.m.push_back(Matrix::Zero(t->rows(), t->cols()));
      u.v.push_back(Matrix::Zero(t->rows(), t->cols()));
    }
  }
}

void Trainer::rebind() {
  const std::vector<Matrix*> all = trainable_tensors(model_);
  std::vector<Unit> units;
  if (auto* e = std::get_if<EnsembleModel>(&model_.body)) {
    for (size_t i = 0; i < e->members.size(); ++i) {
      Unit u;
      u.tensors.assign(all.begin() + static_cast<long>(6 * i), all.begin() + static_cast<long>(6 * i + 6));
      u.seed = cfg_.seed + i;
      u.member = static_cast<int>(i);
      units.push_back(std::move(u));
    }
  } else {
    Unit u;
    u.tensors = all;
    u.seed = cfg_.seed;
    units.push_back(std::move(u));
  }
  for (size_t i = 0; i < units.size() && i < units_.size(); ++i) {
    units[i].m = std::move(units_[i].m);
    units[i].v = std::move(units_[i].v);
    units[i].step = units_[i].step;
  }
  units_ = std::move(units);
}

void Trainer::adam_update(Unit& u, const std::vector<Matrix>& grads) {
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  ++u.step;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(u.step));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(u.step));
  for (size_t k = 0; k < u.tensors.size(); ++k) {
    u.m[k] = beta1 * u.m[k] + (1.0 - beta1) * grads[k];
    u.v[k] = beta2 * u.v[k] + (1.0 - beta2) * grads[k].cwiseProduct(grads[k]);
    u.tensors[k]->array() -=
        cfg_.learning_rate * (u.m[k].array() / c1) / ((u.v[k].array() / c2).sqrt() + eps);
  }
}

double Trainer::run_epoch(const FrameSet& data) {
  if (data.size() == 0) throw PreconditionError("empty dataset");
  if (data.feats.cols() != model_.shape().input) throw ShapeError("feature dimension mismatch");
  const Eigen::Index n = data.size();
  const Eigen::Index bs = cfg_.batch_size;
  const Eigen::Index num_batches = (n + bs - 1) / bs;

  double total = 0.0;
  for (Unit& unit : units_) {
    std::vector<Eigen::Index> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    Rng shuffle_rng(derive_seed(unit.seed, "shuffle", static_cast<uint64_t>(epoch_)));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double unit_total = 0.0;
    for (Eigen::Index b = 0; b < num_batches; ++b) {
      const Eigen::Index begin = b * bs;
      const Eigen::Index rows = std::min(bs, n - begin);
      Matrix x(rows, data.feats.cols());
      std::vector<int> y(static_cast<size_t>(rows));
      for (Eigen::Index r = 0; r < rows; ++r) {
        const Eigen::Index src = order[static_cast<size_t>(begin + r)];
        x.row(r) = data.feats.row(src);
        y[static_cast<size_t>(r)] = data.targets[static_cast<size_t>(src)];
      }
      const uint64_t batch_seed = derive_seed(unit.seed, "batch", static_cast<uint64_t>(unit.step));

      std::vector<Matrix> grads;
      if (unit.member >= 0) {
        // Ensemble member: plain CE on that member alone.
        const auto& member = std::get<EnsembleModel>(model_.body).members[static_cast<size_t>(unit.member)];
        AcousticModel single{model_.norm, FnnModel{member}};
        LossResult r = ce_loss_and_grads(single, x, y, batch_seed);
        unit_total += r.loss * static_cast<double>(rows);
        grads = std::move(r.grads);
      } else if (model_.kind() == ModelKind::Bnn) {
        double weight = 1.0 / static_cast<double>(num_batches);
        if (cfg_.kld_anneal && epoch_ == 0) weight *= static_cast<double>(b + 1) / static_cast<double>(num_batches);
        ElboResult r = elbo_loss(model_, x, y, weight, batch_seed);
        unit_total += r.nll;
        grads = std::move(r.grads);
      } else {
        LossResult r = ce_loss_and_grads(model_, x, y, batch_seed, cfg_.dropout_grad_samples);
        unit_total += r.loss * static_cast<double>(rows);
        grads = std::move(r.grads);
      }
      adam_update(unit, grads);
    }
    total += unit_total / static_cast<double>(n);
  }
  ++epoch_;
  return total / static_cast<double>(units_.size());
}

AcousticModel train(ModelKind kind, std::span<const LabeledUtterance> data, const TrainConfig& cfg) {
  if (data.empty()) throw PreconditionError("empty dataset");
  for (const auto& u : data) {
    if (u.alignment.empty()) throw PreconditionError("utterance " + u.id + " has no alignment");
  }
  const FrameSet frames = FrameSet::stack(data);
  Trainer trainer(init_model(kind, InputNorm::fit(frames.feats), cfg), cfg);
  for (int e = 0; e < cfg.epochs_ce; ++e) trainer.run_epoch(frames);
  return trainer.model();
}

}  // namespace uqasr
