#include "uqasr/training.hpp"

#include "oracles.hpp"

#include <doctest.h>

using namespace uqasr;

namespace {

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  std::normal_distribution<double> g(0.0, scale);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

std::vector<int> random_targets(int n, uint64_t seed) {
  Rng rng(seed);
  std::uniform_int_distribution<int> d(0, 94);
  std::vector<int> t(static_cast<size_t>(n));
  for (int& x : t) x = d(rng);
  return t;
}

AcousticModel make_model(ModelKind kind, uint64_t seed) {
  TrainConfig cfg;
  cfg.seed = seed;
  cfg.bnn_init_rho = -2.0;
  InputNorm norm = InputNorm::identity(39);
  norm.inv_std = (random_matrix(1, 39, seed + 7, 0.2).array().abs() + 0.7).matrix();
  return init_model(kind, norm, cfg);
}

oracle::FdReport check_params(AcousticModel& model, const std::vector<Matrix>& grads,
                              const std::function<double()>& loss, int count, uint64_t seed, double scale = 1.0) {
  const auto tensors = trainable_tensors(model);
  REQUIRE(tensors.size() == grads.size());
  return oracle::check_tensors(tensors, grads, loss, count, seed, 1e-6, scale);
}

std::vector<LabeledUtterance> toy_dataset(int n, uint64_t seed) {
  std::vector<LabeledUtterance> data;
  for (int u = 0; u < n; ++u) {
    LabeledUtterance utt;
    utt.id = "u" + std::to_string(u);
    utt.feats = random_matrix(30, 39, seed + static_cast<uint64_t>(u));
    // Targets depend on the input so there is something to learn.
    for (int t = 0; t < 30; ++t) utt.alignment.push_back(utt.feats(t, 0) > 0 ? (utt.feats(t, 1) > 0 ? 1 : 2) : 3);
    data.push_back(std::move(utt));
  }
  return data;
}

}  // namespace

TEST_CASE("parameter gradients match finite differences") {
  const Matrix x = random_matrix(10, 39, 1);
  const auto targets = random_targets(10, 2);

  SUBCASE("fNN") {
    AcousticModel m = make_model(ModelKind::Fnn, 3);
    const LossResult r = ce_loss_and_grads(m, x, targets);
    const auto rep = check_params(m, r.grads, [&] { return ce_loss_and_grads(m, x, targets).loss; }, 60, 4);
    CHECK(rep.worst < 1e-4);
  }
  SUBCASE("dropout with fixed mask draws") {
    AcousticModel m = make_model(ModelKind::Dropout, 5);
    const LossResult r = ce_loss_and_grads(m, x, targets, 17, 10);
    const auto rep =
        check_params(m, r.grads, [&] { return ce_loss_and_grads(m, x, targets, 17, 10).loss; }, 60, 6);
    CHECK(rep.worst < 1e-4);
  }
  SUBCASE("ensemble members see their own loss") {
    AcousticModel m = make_model(ModelKind::Ensemble, 7);
    const LossResult r = ce_loss_and_grads(m, x, targets);
    REQUIRE(r.grads.size() == 30);
    const auto rep =
        check_params(m, r.grads, [&] { return ce_loss_and_grads(m, x, targets).loss; }, 60, 8, 5.0);
    CHECK(rep.worst < 1e-4);
  }
  SUBCASE("BNN expected cross-entropy") {
    AcousticModel m = make_model(ModelKind::Bnn, 9);
    const LossResult r = ce_loss_and_grads(m, x, targets, 21);
    REQUIRE(r.grads.size() == 12);
    const auto rep =
        check_params(m, r.grads, [&] { return ce_loss_and_grads(m, x, targets, 21).loss; }, 60, 10);
    CHECK(rep.worst < 1e-4);
  }
}

TEST_CASE("ELBO gradients with respect to mu and rho match finite differences") {
  const Matrix x = random_matrix(12, 39, 11);
  const auto targets = random_targets(12, 12);
  AcousticModel m = make_model(ModelKind::Bnn, 13);
  const double w = 0.01;
  const ElboResult e = elbo_loss(m, x, targets, w, 99);
  CHECK(e.loss == doctest::Approx(e.nll + w * e.kld).epsilon(1e-12));
  const auto rep = check_params(m, e.grads, [&] { return elbo_loss(m, x, targets, w, 99).loss; }, 80, 14);
  CHECK(rep.checked == 80);
  CHECK(rep.worst < 1e-4);
}

TEST_CASE("KLD gradient is the difference of weighted and unweighted ELBO gradients") {
  const Matrix x = random_matrix(6, 39, 15);
  const auto targets = random_targets(6, 16);
  AcousticModel m = make_model(ModelKind::Bnn, 17);
  const ElboResult with = elbo_loss(m, x, targets, 1.0, 5);
  const ElboResult without = elbo_loss(m, x, targets, 0.0, 5);
  std::vector<Matrix> kld_grads;
  for (size_t i = 0; i < with.grads.size(); ++i) kld_grads.push_back(with.grads[i] - without.grads[i]);
  auto& bnn = std::get<BnnModel>(m.body);
  const auto rep = check_params(m, kld_grads, [&] { return kl_divergence(bnn.posterior); }, 60, 18);
  CHECK(rep.worst < 1e-4);
}

TEST_CASE("closed-form KLD values") {
  MlpShape tiny{1, 1, 1};
  BnnPosterior q{MlpParams::zeros(tiny), MlpParams::filled(tiny, std::log(std::exp(1.0) - 1.0))};
  CHECK(kl_divergence(q) == doctest::Approx(0.0).epsilon(1e-12));

  // One weight at mu = 1, sigma = 1; the rest at the prior.
  q.mu.w1(0, 0) = 1.0;
  CHECK(kl_divergence(q) == doctest::Approx(0.5).epsilon(1e-12));

  BnnPosterior narrow{MlpParams::zeros(tiny), MlpParams::filled(tiny, -3.0)};
  CHECK(kl_divergence(narrow) > 0.0);
}

TEST_CASE("training loss decreases over epochs") {
  const auto data = toy_dataset(10, 30);
  const FrameSet frames = FrameSet::stack(data);
  CHECK(frames.size() == 300);
  for (ModelKind kind : kAllModelKinds) {
    CAPTURE(to_string(kind));
    TrainConfig cfg;
    cfg.batch_size = 32;
    cfg.seed = 4;
    cfg.bnn_init_rho = -5.0;
    Trainer trainer(init_model(kind, InputNorm::fit(frames.feats), cfg), cfg);
    const double first = trainer.run_epoch(frames);
    const double second = trainer.run_epoch(frames);
    CHECK(second < first);
  }
}

TEST_CASE("training is bit-reproducible and ensemble members differ") {
  const auto data = toy_dataset(4, 50);
  TrainConfig cfg;
  cfg.epochs_ce = 1;
  cfg.batch_size = 16;
  cfg.seed = 8;
  const AcousticModel a = train(ModelKind::Ensemble, data, cfg);
  const AcousticModel b = train(ModelKind::Ensemble, data, cfg);
  const auto ta = trainable_tensors(a);
  const auto tb = trainable_tensors(b);
  for (size_t i = 0; i < ta.size(); ++i) CHECK(*ta[i] == *tb[i]);

  const auto& members = std::get<EnsembleModel>(a.body).members;
  REQUIRE(members.size() == 5);
  for (size_t i = 0; i < members.size(); ++i)
    for (size_t j = i + 1; j < members.size(); ++j) CHECK(members[i].w1 != members[j].w1);
}

TEST_CASE("preconditions") {
  CHECK_THROWS_AS(train(ModelKind::Fnn, std::vector<LabeledUtterance>{}, TrainConfig{}), PreconditionError);
  TrainConfig bad;
  bad.learning_rate = -1.0;
  CHECK_THROWS(bad.validate());
}
