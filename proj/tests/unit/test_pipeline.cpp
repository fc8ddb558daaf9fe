#include "uqasr/dataset.hpp"
#include "uqasr/pipeline.hpp"

#include <doctest.h>

#include <atomic>
#include <fstream>
#include <iterator>

using namespace uqasr;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("uqasr_pipeline_" + name);
  fs::remove_all(p);
  return p;
}

ExperimentConfig tiny_config(const fs::path& out) {
  ExperimentConfig c = parse_config(R"(
[experiment]
seed = 3
models = fnn, dropout
workers = 2
[data]
train_size = 12
heldout_size = 4
eval_size = 4
max_digits = 2
[train]
hidden = 16
batch_size = 64
epochs_ce = 1
epochs_viterbi = 1
dropout_samples = 4
dropout_grad_samples = 2
[attack]
epsilons = 0.0, 0.05
num_utterances = 2
iterations = 3
[detect]
epsilons = 0.05
num_adversarial = 3
histogram_bins = 5
)");
  c.output_dir = out;
  return c;
}

}  // namespace

TEST_CASE("parallel_for covers every index and rethrows the lowest failure") {
  for (int workers : {1, 3, 8}) {
    std::vector<int> hits(100, 0);
    parallel_for(100, workers, [&](int i) { hits[static_cast<size_t>(i)] += i; });
    for (int i = 0; i < 100; ++i) CHECK(hits[static_cast<size_t>(i)] == i);

    std::atomic<int> ran{0};
    try {
      parallel_for(50, workers, [&](int i) {
        ++ran;
        if (i == 7 || i == 31) throw std::runtime_error("fail " + std::to_string(i));
      });
      FAIL("expected an exception");
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()) == "fail 7");
    }
    CHECK(ran == 50);
  }
  CHECK_NOTHROW(parallel_for(0, 4, [](int) { throw std::runtime_error("never"); }));
}

TEST_CASE("manifest, attack and score files round trip") {
  const fs::path dir = scratch("files");
  fs::create_directories(dir / "eval");

  const std::vector<UtteranceRecord> records{{"eval_000000", dir / "eval" / "eval_000000.wav", {1, 2}},
                                             {"eval_000001", dir / "eval" / "eval_000001.wav", {9}}};
  write_manifest(dir / "eval.tsv", records);
  const auto back = read_manifest(dir / "eval.tsv");
  REQUIRE(back.size() == 2);
  CHECK(back[0].id == "eval_000000");
  CHECK(back[0].wav == dir / "eval" / "eval_000000.wav");
  CHECK(back[1].transcript == Transcript{9});
  CHECK(utterance_id("eval", 12) == "eval_000012");

  AttackRecord a;
  a.id = "eval_000001";
  a.epsilon = 0.05;
  a.original = {9};
  a.target = {1, 2, 3};
  a.decoded = {1, 2};
  a.acc_target = 2.0 / 3.0;
  a.acc_original = 0.0;
  a.linf = 0.049987;
  a.best_iteration = 97;
  a.final_loss = 0.123456789;
  AttackRecord failed = a;
  failed.status = "failed:too_short";
  write_attack_records(dir / "results.tsv", {a, failed});
  const auto attacks = read_attack_records(dir / "results.tsv");
  REQUIRE(attacks.size() == 2);
  CHECK(attacks[0].target == a.target);
  CHECK(attacks[0].decoded == a.decoded);
  CHECK(attacks[0].acc_target == doctest::Approx(a.acc_target));
  CHECK(attacks[0].best_iteration == 97);
  CHECK(attacks[1].status == "failed:too_short");

  ScoreRow s;
  s.id = "eval_000001@0.0500";
  s.source_id = "eval_000001";
  s.epsilon = 0.05;
  s.set(Measure::Entropy, 1.0 / 3.0);
  s.set(Measure::Akld, 1e-17);
  write_score_rows(dir / "scores.tsv", {{"adversarial", s}});
  const auto scores = read_score_rows(dir / "scores.tsv");
  REQUIRE(scores.size() == 1);
  CHECK(scores[0].first == "adversarial");
  CHECK(scores[0].second.get(Measure::Entropy) == 1.0 / 3.0);
  CHECK(scores[0].second.get(Measure::Akld) == 1e-17);
  CHECK_FALSE(scores[0].second.get(Measure::Variance).has_value());

  std::ofstream(dir / "broken.tsv") << "id\tepsilon\nx\t1\n";
  CHECK_THROWS_AS(read_score_rows(dir / "broken.tsv"), ParseError);
  CHECK_THROWS_AS(read_attack_records(dir / "absent.tsv"), ArtifactError);
  fs::remove_all(dir);
}

TEST_CASE("dataset synthesis is deterministic") {
  DataConfig dc;
  const SynthUtterance a = synth_record(dc, 9, "eval", 3);
  const SynthUtterance b = synth_record(dc, 9, "eval", 3);
  const SynthUtterance c = synth_record(dc, 9, "heldout", 3);
  CHECK(a.audio.samples == b.audio.samples);
  CHECK(a.transcript == b.transcript);
  CHECK(a.audio.samples != c.audio.samples);
}

TEST_CASE("stages run in order and refuse stale inputs") {
  const fs::path out = scratch("run");
  ExperimentConfig cfg = tiny_config(out);
  std::vector<std::string> messages;
  Pipeline p(cfg, {false, [&](const std::string& m) { messages.push_back(m); }});

  CHECK_THROWS_AS(p.train(ModelKind::Fnn), ArtifactError);
  p.synth_data();
  CHECK(read_manifest(p.data_dir() / "train.tsv").size() == 12);
  CHECK_THROWS_AS(p.synth_data(), PreconditionError);
  CHECK_THROWS_AS(p.attack(ModelKind::Fnn), ArtifactError);
  CHECK_THROWS_AS(p.report(), ArtifactError);

  p.run_all();
  for (const char* f : {"report/evaluation.tsv", "report/auroc.tsv", "manifest.json", "scores/fnn.tsv",
                        "scores/dropout.tsv", "detect/dropout/auroc.tsv", "detect/fnn/detectors.json"}) {
    CAPTURE(f);
    CHECK(fs::exists(out / f));
  }
  CHECK_FALSE(messages.empty());

  const auto attacks = read_attack_records(p.attack_dir(ModelKind::Fnn) / "results.tsv");
  int at_005 = 0;
  for (const auto& r : attacks) {
    CHECK(r.linf <= r.epsilon + 1e-12);
    if (same_epsilon(r.epsilon, 0.0)) CHECK(r.linf == 0.0);
    if (same_epsilon(r.epsilon, 0.05)) ++at_005;
  }
  CHECK(at_005 == 3);

  // Adversarial rows exist for every successful attack at 0.05 and carry their source id.
  const auto rows = read_score_rows(p.scores_path(ModelKind::Dropout));
  int adversarial = 0;
  for (const auto& [split, row] : rows) {
    if (split == "adversarial") {
      ++adversarial;
      CHECK(row.source_id.rfind("eval_", 0) == 0);
      CHECK(row.get(Measure::MutualInformation).has_value());
    }
    if (split == "heldout") CHECK(row.id.rfind("heldout_", 0) == 0);
  }
  CHECK(adversarial >= 1);

  // Changing the training setup invalidates everything downstream of training.
  ExperimentConfig changed = cfg;
  changed.train.learning_rate = 0.01;
  Pipeline stale(changed);
  CHECK_THROWS_AS(stale.attack(ModelKind::Fnn), ArtifactError);
  CHECK_THROWS_AS(stale.measure(ModelKind::Fnn), ArtifactError);
  CHECK_THROWS_AS(stale.detect(ModelKind::Fnn), ArtifactError);
  CHECK_THROWS_AS(stale.report(), ArtifactError);

  fs::remove_all(out);
}

TEST_CASE("worker count does not change any result file") {
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  const fs::path one = scratch("workers1");
  const fs::path many = scratch("workers3");
  ExperimentConfig a = tiny_config(one);
  a.workers = 1;
  ExperimentConfig b = tiny_config(many);
  b.workers = 3;
  Pipeline(a).run_all();
  Pipeline(b).run_all();

  for (const char* f : {"eval/fnn.tsv", "eval/dropout.tsv", "attacks/fnn/results.tsv", "attacks/dropout/results.tsv",
                        "scores/fnn.tsv", "scores/dropout.tsv", "detect/dropout/auroc.tsv", "report/auroc.tsv",
                        "report/evaluation.tsv"}) {
    CAPTURE(f);
    const std::string x = slurp(one / f);
    CHECK_FALSE(x.empty());
    CHECK(x == slurp(many / f));
  }
  fs::remove_all(one);
  fs::remove_all(many);
}
