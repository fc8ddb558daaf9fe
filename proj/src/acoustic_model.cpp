#include "uqasr/acoustic_model.hpp"

#include <cmath>

namespace uqasr {
namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void check_features(const AcousticModel& model, const Matrix& feats) {
  if (feats.cols() != model.shape().input) {
    throw ShapeError("features have " + std::to_string(feats.cols()) + " columns, model expects " +
                     std::to_string(model.shape().input));
  }
  if (!feats.allFinite()) throw NumericError("non-finite features");
}

Matrix run_network(const SampledNetwork& net, const Matrix& xn, MlpTrace* trace = nullptr) {
  return mlp_forward(net.params, xn, net.has_masks ? &net.masks : nullptr, trace);
}

}  // namespace

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::Fnn: return "fnn";
    case ModelKind::Ensemble: return "ensemble";
    case ModelKind::Dropout: return "dropout";
    case ModelKind::Bnn: return "bnn";
  }
  return "unknown";
}

ModelKind parse_model_kind(std::string_view name) {
  for (ModelKind k : kAllModelKinds)
    if (to_string(k) == name) return k;
  throw PreconditionError("unknown model kind '" + std::string(name) + "'");
}

InputNorm InputNorm::identity(int dim) {
  return {RowVector::Zero(dim), RowVector::Ones(dim)};
}

InputNorm InputNorm::fit(const Matrix& frames) {
  if (frames.rows() < 2) throw PreconditionError("need at least two frames to fit normalization");
  InputNorm n;
  n.mean = frames.colwise().mean();
  const Matrix centered = frames.rowwise() - n.mean;
  const RowVector var = centered.array().square().colwise().sum() / static_cast<double>(frames.rows());
  n.inv_std = (var.array() + 1e-8).sqrt().inverse();
  return n;
}

Matrix InputNorm::apply(const Matrix& feats) const {
  return ((feats.rowwise() - mean).array().rowwise() * inv_std.array()).matrix();
}

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

MlpParams BnnPosterior::stddev() const {
  MlpParams s = rho;
  for (Matrix* t : s.tensors()) *t = t->unaryExpr([](double r) { return softplus(r); });
  return s;
}

MlpParams BnnPosterior::sample(Rng& rng) const {
  std::normal_distribution<double> normal(0.0, 1.0);
  MlpParams out = mu;
  auto dst = out.tensors();
  auto r = rho.tensors();
  for (size_t k = 0; k < dst.size(); ++k) {
    Matrix& d = *dst[k];
    for (Eigen::Index j = 0; j < d.cols(); ++j)
      for (Eigen::Index i = 0; i < d.rows(); ++i) d(i, j) += softplus((*r[k])(i, j)) * normal(rng);
  }
  return out;
}

ModelKind AcousticModel::kind() const {
  return std::visit(Overloaded{[](const FnnModel&) { return ModelKind::Fnn; },
                               [](const EnsembleModel&) { return ModelKind::Ensemble; },
                               [](const DropoutModel&) { return ModelKind::Dropout; },
                               [](const BnnModel&) { return ModelKind::Bnn; }},
                    body);
}

int AcousticModel::num_samples() const {
  return std::visit(Overloaded{[](const FnnModel&) { return 1; },
                               [](const EnsembleModel& e) { return static_cast<int>(e.members.size()); },
                               [](const DropoutModel& d) { return d.samples; },
                               [](const BnnModel& b) { return b.samples; }},
                    body);
}

MlpShape AcousticModel::shape() const {
  return std::visit(Overloaded{[](const FnnModel& m) { return m.params.shape(); },
                               [](const EnsembleModel& e) { return e.members.front().shape(); },
                               [](const DropoutModel& d) { return d.params.shape(); },
                               [](const BnnModel& b) { return b.posterior.mu.shape(); }},
                    body);
}

void AcousticModel::validate() const {
  std::visit(Overloaded{
                 [](const FnnModel& m) {
                   if (!m.params.all_finite()) throw NumericError("non-finite parameters");
                 },
                 [](const EnsembleModel& e) {
                   if (e.members.empty()) throw PreconditionError("empty ensemble");
                   for (const auto& m : e.members) {
                     if (!(m.shape() == e.members.front().shape())) {
                       throw PreconditionError("ensemble members differ in architecture");
                     }
                     if (!m.all_finite()) throw NumericError("non-finite parameters");
                   }
                 },
                 [](const DropoutModel& d) {
                   if (!(d.drop_prob > 0.0 && d.drop_prob < 1.0)) {
                     throw PreconditionError("drop_prob must lie in (0, 1)");
                   }
                   if (d.samples < 1) throw PreconditionError("dropout sample count must be positive");
                 },
                 [](const BnnModel& b) {
                   if (!b.posterior.mu.all_finite() || !b.posterior.rho.all_finite()) {
                     throw NumericError("non-finite sigma");
                   }
                   if (b.samples < 1) throw PreconditionError("BNN sample count must be positive");
                 }},
             body);
}

SampledNetwork draw_network(const AcousticModel& model, int t, uint64_t seed) {
  return std::visit(
      Overloaded{[](const FnnModel& m) { return SampledNetwork{m.params, {}, false}; },
                 [t](const EnsembleModel& e) {
                   const auto idx = static_cast<size_t>(t) % e.members.size();
                   return SampledNetwork{e.members[idx], {}, false};
                 },
                 [t, seed](const DropoutModel& d) {
                   Rng rng(derive_seed(seed, "theta", static_cast<uint64_t>(t)));
                   return SampledNetwork{d.params, sample_hidden_masks(d.params.shape(), 1, d.drop_prob, rng),
                                         true};
                 },
                 [t, seed](const BnnModel& b) {
                   Rng rng(derive_seed(seed, "theta", static_cast<uint64_t>(t)));
                   return SampledNetwork{b.posterior.sample(rng), {}, false};
                 }},
      model.body);
}

std::vector<Matrix> sample_predictions(const AcousticModel& model, const Matrix& feats, int T,
                                       uint64_t seed) {
  check_features(model, feats);
  const ModelKind kind = model.kind();
  if (kind == ModelKind::Fnn) throw PreconditionError("single-mode model: fNN has no sampled predictions");
  if (T <= 0) T = model.num_samples();
  if (kind == ModelKind::Ensemble && T != model.num_samples()) {
    throw PreconditionError("ensemble sample count is fixed to its member count");
  }
  const Matrix xn = model.norm.apply(feats);
  std::vector<Matrix> out;
  out.reserve(static_cast<size_t>(T));
  for (int t = 0; t < T; ++t) out.push_back(run_network(draw_network(model, t, seed), xn));
  return out;
}

Matrix forward(const AcousticModel& model, const Matrix& feats, PredictMode mode) {
  check_features(model, feats);
  const Matrix xn = model.norm.apply(feats);
  if (const auto* f = std::get_if<FnnModel>(&model.body)) return mlp_forward(f->params, xn);

  if (mode.kind == PredictMode::Kind::SingleSample) {
    // Ensembles pick the member from the seed; the others draw theta_0 of the stream.
    const int t = model.kind() == ModelKind::Ensemble
                      ? static_cast<int>(mode.seed % static_cast<uint64_t>(model.num_samples()))
                      : 0;
    return run_network(draw_network(model, t, mode.seed), xn);
  }
  const int T = model.num_samples();
  Matrix mean = Matrix::Zero(feats.rows(), model.shape().output);
  for (int t = 0; t < T; ++t) mean += run_network(draw_network(model, t, mode.seed), xn);
  return mean / static_cast<double>(T);
}

InputGradient input_grad(const AcousticModel& model, const Matrix& feats, std::span<const int> targets,
                         PredictMode mode) {
  check_features(model, feats);
  check_targets(targets, feats.rows(), model.shape().output);
  const Matrix xn = model.norm.apply(feats);
  const double scale = 1.0 / static_cast<double>(feats.rows());

  const auto one = [&](const SampledNetwork& net, InputGradient& acc, double weight) {
    MlpTrace trace;
    const Matrix probs = run_network(net, xn, &trace);
    Matrix dxn;
    mlp_backward(net.params, trace, cross_entropy_logit_grad(probs, targets, scale),
                 net.has_masks ? &net.masks : nullptr, nullptr, &dxn);
    acc.loss += weight * mean_cross_entropy(probs, targets);
    acc.grad += weight * (dxn.array().rowwise() * model.norm.inv_std.array()).matrix();
  };

  InputGradient out{0.0, Matrix::Zero(feats.rows(), feats.cols())};
  if (model.kind() == ModelKind::Fnn) {
    one(draw_network(model, 0, mode.seed), out, 1.0);
  } else if (mode.kind == PredictMode::Kind::SingleSample) {
    const int t = model.kind() == ModelKind::Ensemble
                      ? static_cast<int>(mode.seed % static_cast<uint64_t>(model.num_samples()))
                      : 0;
    one(draw_network(model, t, mode.seed), out, 1.0);
  } else {
    const int T = model.num_samples();
    for (int t = 0; t < T; ++t) one(draw_network(model, t, mode.seed), out, 1.0 / T);
  }
  return out;
}

}  // namespace uqasr
