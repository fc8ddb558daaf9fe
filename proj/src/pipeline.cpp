#include "uqasr/pipeline.hpp"

#include "uqasr/checkpoint.hpp"
#include "uqasr/hmm_training.hpp"
#include "uqasr/rng.hpp"
#include "uqasr/word_accuracy.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

namespace uqasr {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string opt_num(const std::optional<double>& v) { return v ? num(*v) : "null"; }

std::optional<double> parse_opt(const std::string& s) {
  if (s == "null") return std::nullopt;
  return std::stod(s);
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream in(line);
  for (std::string f; std::getline(in, f, '\t');) out.push_back(f);
  return out;
}

std::string timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ArtifactError("missing " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ArtifactError("unreadable " + path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ArtifactError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void write_stamp(const fs::path& path, const std::string& stage, uint64_t hash) {
  write_json(path, {{"stage", stage}, {"config_hash", hash_hex(hash)}});
}

void require_stamp(const fs::path& path, uint64_t expected, const std::string& what) {
  if (!fs::exists(path)) throw ArtifactError(what + " not found (" + path.string() + "); run the upstream stage first");
  const json j = read_json(path);
  const std::string found = j.value("config_hash", "");
  if (found != hash_hex(expected)) {
    throw ArtifactError(what + " was produced under a different configuration (hash " + found + ", expected " +
                        hash_hex(expected) + ")");
  }
}

bool stamp_matches(const fs::path& path, uint64_t expected) {
  return fs::exists(path) && read_json(path).value("config_hash", "") == hash_hex(expected);
}

void reset_dir(const fs::path& dir) {
  fs::remove_all(dir);
  fs::create_directories(dir);
}

Matrix features_of(const fs::path& wav) { return compute_mfcc(load_wav(wav)); }

std::string eps_dir_name(double eps) { return "eps_" + format_epsilon(eps); }

void write_alignments(const fs::path& path, const std::vector<LabeledUtterance>& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ArtifactError("cannot write " + path.string());
  for (const auto& u : data) {
    out << u.id;
    for (int s : u.alignment) out << ' ' << s;
    out << '\n';
  }
}

uint64_t id_seed(uint64_t master, std::string_view tag, const std::string& id) {
  return derive_seed(master, tag, fnv1a64(id));
}

}  // namespace

Recognizer TrainedRecognizer::recognizer(uint64_t predict_seed) const {
  Recognizer r;
  r.model = &model;
  r.topology = &topology;
  r.priors = use_priors ? &priors : nullptr;
  r.predict_seed = predict_seed;
  return r;
}

void parallel_for(int n, int workers, const std::function<void(int)>& fn) {
  if (n <= 0) return;
  workers = std::clamp(workers, 1, n);
  std::vector<std::exception_ptr> errors(static_cast<size_t>(n));
  std::atomic<int> next{0};
  auto body = [&] {
    for (int i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[static_cast<size_t>(i)] = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    body();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(body);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

void write_attack_records(const fs::path& path, const std::vector<AttackRecord>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ArtifactError("cannot write " + path.string());
  out << "id\tepsilon\toriginal\ttarget\tdecoded\tacc_target\tacc_original\tlinf\tbest_iteration\tfinal_loss\tstatus\n";
  for (const auto& r : rows) {
    out << r.id << '\t' << format_epsilon(r.epsilon) << '\t' << format_transcript(r.original) << '\t'
        << format_transcript(r.target) << '\t' << format_transcript(r.decoded) << '\t' << num(r.acc_target) << '\t'
        << num(r.acc_original) << '\t' << num(r.linf) << '\t' << r.best_iteration << '\t' << num(r.final_loss)
        << '\t' << r.status << '\n';
  }
}

std::vector<AttackRecord> read_attack_records(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ArtifactError("missing attack results " + path.string());
  std::vector<AttackRecord> rows;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_tabs(line);
    if (f.size() != 11) throw ParseError("malformed attack record in " + path.string());
    AttackRecord r;
    r.id = f[0];
    r.epsilon = std::stod(f[1]);
    r.original = parse_transcript(f[2]);
    r.target = parse_transcript(f[3]);
    r.decoded = parse_transcript(f[4]);
    r.acc_target = std::stod(f[5]);
    r.acc_original = std::stod(f[6]);
    r.linf = std::stod(f[7]);
    r.best_iteration = std::stoi(f[8]);
    r.final_loss = std::stod(f[9]);
    r.status = f[10];
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_score_rows(const fs::path& path, const std::vector<std::pair<std::string, ScoreRow>>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ArtifactError("cannot write " + path.string());
  out << "id\tsource_id\tsplit\tepsilon\tentropy\tmutual_information\tvariance\takld\n";
  for (const auto& [split, r] : rows) {
    out << r.id << '\t' << r.source_id << '\t' << split << '\t' << format_epsilon(r.epsilon) << '\t'
        << opt_num(r.get(Measure::Entropy)) << '\t' << opt_num(r.get(Measure::MutualInformation)) << '\t'
        << opt_num(r.get(Measure::Variance)) << '\t' << opt_num(r.get(Measure::Akld)) << '\n';
  }
}

std::vector<std::pair<std::string, ScoreRow>> read_score_rows(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ArtifactError("missing score file " + path.string());
  std::vector<std::pair<std::string, ScoreRow>> rows;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_tabs(line);
    if (f.size() != 8) throw ParseError("malformed score row in " + path.string());
    ScoreRow r;
    r.id = f[0];
    r.source_id = f[1];
    r.epsilon = std::stod(f[3]);
    r.set(Measure::Entropy, parse_opt(f[4]));
    r.set(Measure::MutualInformation, parse_opt(f[5]));
    r.set(Measure::Variance, parse_opt(f[6]));
    r.set(Measure::Akld, parse_opt(f[7]));
    rows.emplace_back(f[2], std::move(r));
  }
  return rows;
}

Pipeline::Pipeline(ExperimentConfig cfg, PipelineOptions opts) : cfg_(std::move(cfg)), opts_(std::move(opts)) {
  cfg_.validate();
}

fs::path Pipeline::model_dir(ModelKind kind) const { return cfg_.output_dir / "models" / std::string(to_string(kind)); }
fs::path Pipeline::align_dir(ModelKind kind) const { return cfg_.output_dir / "align" / std::string(to_string(kind)); }
fs::path Pipeline::eval_path(ModelKind kind) const {
  return cfg_.output_dir / "eval" / (std::string(to_string(kind)) + ".tsv");
}
fs::path Pipeline::attack_dir(ModelKind kind) const {
  return cfg_.output_dir / "attacks" / std::string(to_string(kind));
}
fs::path Pipeline::scores_path(ModelKind kind) const {
  return cfg_.output_dir / "scores" / (std::string(to_string(kind)) + ".tsv");
}
fs::path Pipeline::detect_dir(ModelKind kind) const { return cfg_.output_dir / "detect" / std::string(to_string(kind)); }

void Pipeline::log(const std::string& msg) const {
  if (opts_.log) opts_.log(msg);
}

std::vector<UtteranceRecord> Pipeline::split(std::string_view name) const {
  require_stamp(data_dir() / "stamp.json", cfg_.data_hash(), "dataset");
  return read_manifest(data_dir() / (std::string(name) + ".tsv"));
}

void Pipeline::record_stage(const std::string& stage, uint64_t hash, const std::vector<fs::path>& artifacts,
                            const std::string& started) const {
  json manifest = fs::exists(manifest_path()) ? read_json(manifest_path()) : json::object();
  manifest["config_hash"] = hash_hex(fnv1a64(cfg_.to_json().dump()));
  manifest["seeds"] = {{"master", cfg_.seed},
                       {"dataset", derive_seed(cfg_.seed, "dataset")},
                       {"train", derive_seed(cfg_.seed, "train")},
                       {"attack", derive_seed(cfg_.seed, "attack")},
                       {"measure", derive_seed(cfg_.seed, "measure")}};
  json paths = json::array();
  for (const auto& p : artifacts) {
    if (!fs::exists(p)) throw ArtifactError("stage " + stage + " did not produce " + p.string());
    paths.push_back(fs::relative(p, cfg_.output_dir).generic_string());
  }
  manifest["stages"][stage] = {
      {"config_hash", hash_hex(hash)}, {"artifacts", paths}, {"started", started}, {"finished", timestamp()}};
  write_json(manifest_path(), manifest);
}

void Pipeline::synth_data() {
  const std::string started = timestamp();
  const fs::path dir = data_dir();
  if (fs::exists(dir) && !fs::is_empty(dir)) {
    if (!opts_.force) throw PreconditionError(dir.string() + " exists and is not empty (use --force to overwrite)");
    fs::remove_all(dir);
  }
  fs::create_directories(dir);
  log("synthesizing dataset into " + dir.string());
  synthesize_dataset(dir, cfg_.data, derive_seed(cfg_.seed, "dataset"));
  write_stamp(dir / "stamp.json", "synth-data", cfg_.data_hash());
  record_stage("synth-data", cfg_.data_hash(),
               {dir / "train.tsv", dir / "heldout.tsv", dir / "eval.tsv", dir / "stamp.json"}, started);
}

void Pipeline::train(ModelKind kind) {
  const std::string started = timestamp();
  const std::string name(to_string(kind));
  const auto records = split("train");

  std::vector<LabeledUtterance> data(records.size());
  parallel_for(static_cast<int>(records.size()), cfg_.workers, [&](int i) {
    const auto& r = records[static_cast<size_t>(i)];
    data[static_cast<size_t>(i)] = {r.id, features_of(r.wav), r.transcript, {}};
  });

  HmmTopology topo = HmmTopology::standard(cfg_.hmm.self_loop);
  std::vector<Alignment> alignments;
  for (auto& u : data) {
    u.alignment = flat_start_alignment(static_cast<int>(u.feats.rows()), u.transcript, topo);
    alignments.push_back(u.alignment);
  }
  const auto prior_of = [&](std::span<const Alignment> a) {
    return cfg_.hmm.use_priors ? estimate_priors(a, topo.num_states()) : StatePriors::uniform(topo.num_states());
  };
  StatePriors priors = prior_of(alignments);

  TrainConfig tc = cfg_.train;
  tc.seed = derive_seed(cfg_.seed, "train:" + name);
  const auto start = std::chrono::steady_clock::now();
  FrameSet frames = FrameSet::stack(data);
  Trainer trainer(init_model(kind, InputNorm::fit(frames.feats), tc), tc);
  json history = json::array();
  for (int e = 0; e < tc.epochs_ce; ++e) {
    const double loss = trainer.run_epoch(frames);
    log("train " + name + ": CE epoch " + std::to_string(e + 1) + " loss " + num(loss));
    history.push_back({{"phase", "ce"}, {"epoch", e + 1}, {"loss", loss}});
  }
  frames = FrameSet{};
  for (int e = 0; e < tc.epochs_viterbi; ++e) {
    const auto stats = viterbi_train_epoch(trainer, data, topo, priors, derive_seed(tc.seed, "align", e));
    if (!cfg_.hmm.use_priors) priors = StatePriors::uniform(topo.num_states());
    log("train " + name + ": Viterbi epoch " + std::to_string(e + 1) + " loss " + num(stats.train_loss) +
        " skipped " + std::to_string(stats.skipped.size()));
    history.push_back({{"phase", "viterbi"},
                       {"epoch", e + 1},
                       {"loss", stats.train_loss},
                       {"align_score", stats.total_score},
                       {"skipped", stats.skipped.size()}});
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  const fs::path dir = model_dir(kind);
  reset_dir(dir);
  const json extra = {{"config_hash", hash_hex(cfg_.model_hash(kind))},
                      {"data_hash", hash_hex(cfg_.data_hash())},
                      {"topology", topo.to_json()},
                      {"priors", priors.to_json()},
                      {"use_priors", cfg_.hmm.use_priors},
                      {"train_seed", tc.seed},
                      {"history", history},
                      {"train_seconds", seconds}};
  save_checkpoint(dir, round_to_float32(trainer.model()), extra);
  write_alignments(dir / "alignments.txt", data);
  write_stamp(dir / "stamp.json", "train", cfg_.model_hash(kind));
  record_stage("train:" + name, cfg_.model_hash(kind), {dir / "meta.json", dir / "alignments.txt"}, started);
}

TrainedRecognizer Pipeline::load_recognizer(ModelKind kind) const {
  const fs::path dir = model_dir(kind);
  require_stamp(dir / "stamp.json", cfg_.model_hash(kind), "checkpoint for " + std::string(to_string(kind)));
  Checkpoint ck = load_checkpoint(dir);
  if (ck.model.kind() != kind) throw ArtifactError("checkpoint in " + dir.string() + " holds a different model kind");
  const json& extra = ck.meta.at("extra");
  TrainedRecognizer r{std::move(ck.model), HmmTopology::from_json(extra.at("topology")),
                      StatePriors::from_json(extra.at("priors")), extra.value("use_priors", true), ck.meta};
  return r;
}

void Pipeline::align(ModelKind kind) {
  const std::string started = timestamp();
  const TrainedRecognizer tr = load_recognizer(kind);
  const Recognizer rec = tr.recognizer(derive_seed(cfg_.seed, "decode"));
  const fs::path dir = align_dir(kind);
  reset_dir(dir);
  std::vector<fs::path> outputs;
  for (std::string_view name : kSplitNames) {
    const auto records = split(name);
    std::vector<std::string> lines(records.size());
    parallel_for(static_cast<int>(records.size()), cfg_.workers, [&](int i) {
      const auto& r = records[static_cast<size_t>(i)];
      std::ostringstream line;
      line << r.id;
      try {
        const Matrix post = rec.posteriors(load_wav(r.wav));
        for (int s : forced_align(post, tr.topology, r.transcript, rec.priors).alignment) line << ' ' << s;
      } catch (const PreconditionError&) {
        line << " FAILED";
      }
      lines[static_cast<size_t>(i)] = line.str();
    });
    const fs::path out_path = dir / (std::string(name) + ".ali");
    std::ofstream out(out_path, std::ios::binary);
    for (const auto& l : lines) out << l << '\n';
    outputs.push_back(out_path);
  }
  record_stage("align:" + std::string(to_string(kind)), cfg_.model_hash(kind), outputs, started);
}

void Pipeline::evaluate(ModelKind kind) {
  const std::string started = timestamp();
  const TrainedRecognizer tr = load_recognizer(kind);
  const Recognizer rec = tr.recognizer(derive_seed(cfg_.seed, "decode"));
  const auto records = split("eval");
  std::vector<Transcript> hyps(records.size());
  parallel_for(static_cast<int>(records.size()), cfg_.workers, [&](int i) {
    hyps[static_cast<size_t>(i)] = rec.decode(load_wav(records[static_cast<size_t>(i)].wav)).transcript;
  });

  EditCounts total;
  fs::create_directories(eval_path(kind).parent_path());
  std::ofstream out(eval_path(kind), std::ios::binary);
  out << "id\treference\thypothesis\taccuracy\n";
  for (size_t i = 0; i < records.size(); ++i) {
    const EditCounts c = edit_counts(records[i].transcript, hyps[i]);
    total.reference_words += c.reference_words;
    total.substitutions += c.substitutions;
    total.deletions += c.deletions;
    total.insertions += c.insertions;
    out << records[i].id << '\t' << format_transcript(records[i].transcript) << '\t' << format_transcript(hyps[i])
        << '\t' << num(word_accuracy(records[i].transcript, hyps[i])) << '\n';
  }
  out.close();
  const double acc = static_cast<double>(total.reference_words - total.substitutions - total.deletions -
                                         total.insertions) /
                     static_cast<double>(total.reference_words);
  const fs::path summary = eval_path(kind).parent_path() / (std::string(to_string(kind)) + ".json");
  write_json(summary, {{"config_hash", hash_hex(cfg_.model_hash(kind))},
                       {"model", std::string(to_string(kind))},
                       {"utterances", records.size()},
                       {"reference_words", total.reference_words},
                       {"substitutions", total.substitutions},
                       {"deletions", total.deletions},
                       {"insertions", total.insertions},
                       {"word_accuracy", acc}});
  log("evaluate " + std::string(to_string(kind)) + ": benign word accuracy " + num(acc));
  record_stage("evaluate:" + std::string(to_string(kind)), cfg_.model_hash(kind), {eval_path(kind), summary},
               started);
}

void Pipeline::attack(ModelKind kind) {
  const std::string started = timestamp();
  const std::string name(to_string(kind));
  const TrainedRecognizer tr = load_recognizer(kind);
  const Recognizer rec = tr.recognizer(derive_seed(cfg_.seed, "decode"));
  const auto records = split("eval");
  const std::vector<double> epsilons = cfg_.attack_epsilons();
  int count = 0;
  for (double e : epsilons) count = std::max(count, cfg_.attack_count(e));
  count = std::min<int>(count, static_cast<int>(records.size()));

  const fs::path dir = attack_dir(kind);
  reset_dir(dir);
  for (double e : epsilons) fs::create_directories(dir / eps_dir_name(e));

  const uint64_t attack_seed = derive_seed(cfg_.seed, "attack");
  std::vector<std::vector<AttackRecord>> per_utt(static_cast<size_t>(count));
  std::atomic<int> done{0};
  std::mutex log_mutex;
  parallel_for(count, cfg_.workers, [&](int i) {
    const auto& r = records[static_cast<size_t>(i)];
    const Waveform wave = load_wav(r.wav);
    const Transcript target = sample_target_transcript(id_seed(attack_seed, "target", r.id), r.transcript);
    Alignment target_alignment;
    std::string failure;
    try {
      target_alignment = build_attack_target(wave, target, rec);
    } catch (const PreconditionError& e) {
      failure = "failed:too_short";
    }
    auto& rows = per_utt[static_cast<size_t>(i)];
    for (double eps : epsilons) {
      if (i >= cfg_.attack_count(eps)) continue;
      AttackRecord row;
      row.id = r.id;
      row.epsilon = eps;
      row.original = r.transcript;
      row.target = target;
      if (!failure.empty()) {
        row.status = failure;
        rows.push_back(row);
        continue;
      }
      AttackConfig ac;
      ac.epsilon = eps;
      ac.step_size = cfg_.attack.step_fraction * eps;
      ac.iterations = cfg_.attack.iterations;
      ac.gradient_mode = cfg_.attack.gradient_mode;
      ac.seed = id_seed(attack_seed, "pgd:" + format_epsilon(eps), r.id);
      AdversarialExample adv = pgd_attack(wave, target, target_alignment, tr.model, ac);
      snap_delta_to_pcm16(adv);
      const fs::path out_wav = dir / eps_dir_name(eps) / (r.id + ".wav");
      save_wav(adv.perturbed(), out_wav);
      const Waveform saved = load_wav(out_wav);
      row.decoded = rec.decode(saved).transcript;
      const AttackAccuracy acc = attack_success(adv, r.transcript, row.decoded);
      row.acc_target = acc.vs_target;
      row.acc_original = acc.vs_original;
      double linf = 0.0;
      for (size_t k = 0; k < saved.samples.size(); ++k)
        linf = std::max(linf, std::abs(saved.samples[k] - wave.samples[k]));
      row.linf = linf;
      row.best_iteration = adv.best_iteration;
      row.final_loss = adv.losses.empty() ? 0.0 : adv.losses[static_cast<size_t>(adv.best_iteration)];
      rows.push_back(row);
    }
    const int finished = ++done;
    if (finished % 10 == 0 || finished == count) {
      std::lock_guard lock(log_mutex);
      log("attack " + name + ": " + std::to_string(finished) + "/" + std::to_string(count) + " utterances");
    }
  });

  std::vector<AttackRecord> all;
  for (double eps : epsilons) {
    for (const auto& rows : per_utt)
      for (const auto& row : rows)
        if (same_epsilon(row.epsilon, eps)) all.push_back(row);
  }
  int failures = 0;
  for (const auto& row : all) failures += row.status != "ok";
  log("attack " + name + ": " + std::to_string(all.size()) + " attacks, " + std::to_string(failures) + " failed");
  write_attack_records(dir / "results.tsv", all);
  write_stamp(dir / "stamp.json", "attack", cfg_.attack_hash(kind));
  record_stage("attack:" + name, cfg_.attack_hash(kind), {dir / "results.tsv"}, started);
}

void Pipeline::measure(ModelKind kind) {
  const std::string started = timestamp();
  const std::string name(to_string(kind));
  const TrainedRecognizer tr = load_recognizer(kind);
  require_stamp(attack_dir(kind) / "stamp.json", cfg_.attack_hash(kind), "attack results for " + name);
  const auto attacks = read_attack_records(attack_dir(kind) / "results.tsv");

  struct Job {
    std::string split;
    std::string id;
    std::string source_id;
    double epsilon;
    fs::path wav;
  };
  std::vector<Job> jobs;
  for (const auto& r : split("heldout")) jobs.push_back({"heldout", r.id, r.id, 0.0, r.wav});
  for (const auto& r : split("eval")) jobs.push_back({"eval", r.id, r.id, 0.0, r.wav});
  for (const auto& a : attacks) {
    if (a.status != "ok") continue;
    jobs.push_back({"adversarial", a.id + "@" + format_epsilon(a.epsilon), a.id, a.epsilon,
                    attack_dir(kind) / eps_dir_name(a.epsilon) / (a.id + ".wav")});
  }

  int samples = cfg_.measure.samples;
  if (kind == ModelKind::Ensemble) samples = 0;
  const uint64_t measure_seed = derive_seed(cfg_.seed, "measure");
  std::vector<std::pair<std::string, ScoreRow>> rows(jobs.size());
  parallel_for(static_cast<int>(jobs.size()), cfg_.workers, [&](int i) {
    const Job& j = jobs[static_cast<size_t>(i)];
    const UncertaintyScores s = measure_utterance(tr.model, features_of(j.wav), samples,
                                                  id_seed(measure_seed, "sample", j.id), cfg_.measure.aggregation);
    rows[static_cast<size_t>(i)] = {j.split, ScoreRow::from_scores(j.id, j.source_id, j.epsilon, s)};
  });

  fs::create_directories(scores_path(kind).parent_path());
  write_score_rows(scores_path(kind), rows);
  const fs::path stamp = scores_path(kind).parent_path() / (name + ".stamp.json");
  write_stamp(stamp, "measure", cfg_.measure_hash(kind));
  log("measure " + name + ": " + std::to_string(rows.size()) + " utterances scored");
  record_stage("measure:" + name, cfg_.measure_hash(kind), {scores_path(kind), stamp}, started);
}

void Pipeline::detect(ModelKind kind) {
  const std::string started = timestamp();
  const std::string name(to_string(kind));
  require_stamp(scores_path(kind).parent_path() / (name + ".stamp.json"), cfg_.measure_hash(kind),
                "scores for " + name);
  const auto scores = read_score_rows(scores_path(kind));

  ExperimentData data;
  for (const auto& [split_name, row] : scores) {
    if (split_name == "heldout") data.heldout.push_back(row);
    else if (split_name == "eval") data.benign.push_back(row);
    else data.adversarial.push_back(row);
  }
  for (const auto& a : read_attack_records(attack_dir(kind) / "results.tsv")) {
    if (a.status == "ok") data.attacks.push_back({a.id, a.epsilon, a.acc_target, a.acc_original});
  }
  data.epsilons = cfg_.detect.epsilons;
  data.histogram_bins = cfg_.detect.histogram_bins;
  const ExperimentReport report = evaluate_experiment(data);

  const fs::path dir = detect_dir(kind);
  reset_dir(dir);
  std::vector<fs::path> outputs{dir / "auroc.tsv", dir / "detectors.json"};
  {
    std::ofstream out(dir / "auroc.tsv", std::ios::binary);
    out << "measure\tepsilon\tauroc\tn_benign\tn_adversarial\n";
    for (const auto& r : report.rows) {
      out << to_string(r.measure) << '\t' << format_epsilon(r.epsilon) << '\t' << opt_num(r.auroc) << '\t'
          << r.n_benign << '\t' << r.n_adversarial << '\n';
    }
  }
  json detectors = json::array();
  for (const auto& d : report.detectors) detectors.push_back(d.to_json());
  write_json(dir / "detectors.json", {{"config_hash", hash_hex(cfg_.measure_hash(kind))}, {"detectors", detectors}});

  for (const auto& [key, roc] : report.rocs) {
    const fs::path p = dir / ("roc_" + std::string(to_string(key.first)) + "_" + eps_dir_name(key.second) + ".dat");
    std::ofstream out(p, std::ios::binary);
    out << "# fpr tpr\n";
    for (const auto& pt : roc.points) out << num(pt.fpr) << ' ' << num(pt.tpr) << '\n';
    outputs.push_back(p);
  }
  for (const auto& [key, h] : report.histograms) {
    const fs::path p = dir / ("hist_" + std::string(to_string(key.first)) + "_" + eps_dir_name(key.second) + ".dat");
    std::ofstream out(p, std::ios::binary);
    out << "# bin_center benign adversarial\n";
    for (size_t b = 0; b < h.benign.size(); ++b) {
      out << num(h.lo + (static_cast<double>(b) + 0.5) * h.width) << ' ' << h.benign[b] << ' ' << h.adversarial[b]
          << '\n';
    }
    outputs.push_back(p);
  }
  for (const auto& r : report.rows) {
    if (r.measure == Measure::Entropy && r.auroc) {
      log("detect " + name + ": entropy AUROC at eps " + format_epsilon(r.epsilon) + " = " + num(*r.auroc));
    }
  }
  write_stamp(dir / "stamp.json", "detect", cfg_.measure_hash(kind));
  record_stage("detect:" + name, cfg_.measure_hash(kind), outputs, started);
}

void Pipeline::report() {
  const std::string started = timestamp();
  std::vector<std::string> missing;
  for (ModelKind kind : cfg_.models) {
    const std::string name(to_string(kind));
    const fs::path eval_summary = eval_path(kind).parent_path() / (name + ".json");
    if (!fs::exists(eval_summary)) missing.push_back(eval_summary.string());
    if (!fs::exists(attack_dir(kind) / "results.tsv")) missing.push_back((attack_dir(kind) / "results.tsv").string());
    if (!fs::exists(detect_dir(kind) / "auroc.tsv")) missing.push_back((detect_dir(kind) / "auroc.tsv").string());
  }
  if (!missing.empty()) {
    std::string msg = "report inputs missing:";
    for (const auto& m : missing) msg += "\n  " + m;
    throw ArtifactError(msg);
  }

  const fs::path dir = report_dir();
  reset_dir(dir);
  std::vector<fs::path> outputs{dir / "evaluation.tsv", dir / "auroc.tsv"};
  std::ofstream evaluation(dir / "evaluation.tsv", std::ios::binary);
  evaluation << "model\tbenign_word_accuracy\n";
  std::ofstream auroc(dir / "auroc.tsv", std::ios::binary);
  auroc << "model\tmeasure\tepsilon\tauroc\n";

  for (ModelKind kind : cfg_.models) {
    const std::string name(to_string(kind));
    const json summary = read_json(eval_path(kind).parent_path() / (name + ".json"));
    if (summary.value("config_hash", "") != hash_hex(cfg_.model_hash(kind))) {
      throw ArtifactError("evaluation of " + name + " was produced under a different configuration");
    }
    require_stamp(attack_dir(kind) / "stamp.json", cfg_.attack_hash(kind), "attack results for " + name);
    require_stamp(detect_dir(kind) / "stamp.json", cfg_.measure_hash(kind), "detection report for " + name);
    evaluation << name << '\t' << num(summary.at("word_accuracy").get<double>()) << '\n';

    // Accuracy curve over the sweep grid on the first num_utterances.
    const auto attacks = read_attack_records(attack_dir(kind) / "results.tsv");
    const auto records = split("eval");
    std::map<std::string, int> index;
    for (size_t i = 0; i < records.size(); ++i) index[records[i].id] = static_cast<int>(i);
    const fs::path curve = dir / ("accuracy_" + name + ".dat");
    std::ofstream out(curve, std::ios::binary);
    out << "# epsilon acc_target acc_original n_ok n_failed\n";
    for (double eps : cfg_.attack.epsilons) {
      double st = 0.0, so = 0.0;
      int n = 0, failed = 0;
      for (const auto& a : attacks) {
        if (!same_epsilon(a.epsilon, eps) || index.at(a.id) >= cfg_.attack.num_utterances) continue;
        if (a.status != "ok") {
          ++failed;
          continue;
        }
        st += a.acc_target;
        so += a.acc_original;
        ++n;
      }
      out << format_epsilon(eps) << ' ' << (n ? num(st / n) : "nan") << ' ' << (n ? num(so / n) : "nan") << ' ' << n
          << ' ' << failed << '\n';
    }
    outputs.push_back(curve);

    std::ifstream in(detect_dir(kind) / "auroc.tsv");
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      const auto f = split_tabs(line);
      if (f.size() >= 3) auroc << name << '\t' << f[0] << '\t' << f[1] << '\t' << f[2] << '\n';
    }
    for (const auto& entry : fs::directory_iterator(detect_dir(kind))) {
      const std::string file = entry.path().filename().string();
      if (file.rfind("hist_entropy_", 0) == 0 || file.rfind("roc_", 0) == 0) {
        const fs::path target = dir / (name + "_" + file);
        fs::copy_file(entry.path(), target, fs::copy_options::overwrite_existing);
        outputs.push_back(target);
      }
    }
  }
  evaluation.close();
  auroc.close();
  std::sort(outputs.begin(), outputs.end());
  record_stage("report", fnv1a64(cfg_.to_json().dump()), outputs, started);
}

void Pipeline::run_all() {
  // An existing dataset built from the same settings is reused.
  if (opts_.force || !stamp_matches(data_dir() / "stamp.json", cfg_.data_hash())) {
    synth_data();
  } else {
    log("reusing dataset in " + data_dir().string());
  }
  for (ModelKind kind : cfg_.models) {
    train(kind);
    evaluate(kind);
    attack(kind);
    measure(kind);
    detect(kind);
  }
  report();
}

}  // namespace uqasr
