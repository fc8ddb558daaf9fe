#include "uqasr/config.hpp"

#include "uqasr/rng.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace uqasr {

namespace {

std::string trim(std::string s) {
  const auto ws = " \t\r\n";
  s.erase(0, s.find_first_not_of(ws));
  s.erase(s.find_last_not_of(ws) + 1);
  return s;
}

template <class T>
T parse_number(const std::string& key, const std::string& value) {
  std::istringstream in(value);
  T out{};
  in >> out;
  if (in.fail() || !(in >> std::ws).eof()) throw ConfigError("bad value for " + key + ": '" + value + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ConfigError("bad boolean for " + key + ": '" + value + "'");
}

using Setter = std::function<void(ExperimentConfig&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    t["experiment.seed"] = [](ExperimentConfig& c, const std::string& v) {
      c.seed = parse_number<uint64_t>("experiment.seed", v);
    };
    t["experiment.output_dir"] = [](ExperimentConfig& c, const std::string& v) { c.output_dir = v; };
    t["experiment.workers"] = [](ExperimentConfig& c, const std::string& v) {
      c.workers = parse_number<int>("experiment.workers", v);
    };
    t["experiment.models"] = [](ExperimentConfig& c, const std::string& v) {
      c.models.clear();
      std::istringstream in(v);
      for (std::string item; std::getline(in, item, ',');) {
        item = trim(item);
        if (item.empty()) continue;
        try {
          c.models.push_back(parse_model_kind(item));
        } catch (const Error& e) {
          throw ConfigError(e.what());
        }
      }
    };

    auto int_key = [&t](const std::string& key, auto member_ptr) {
      t[key] = [key, member_ptr](ExperimentConfig& c, const std::string& v) {
        member_ptr(c) = parse_number<int>(key, v);
      };
    };
    auto double_key = [&t](const std::string& key, auto member_ptr) {
      t[key] = [key, member_ptr](ExperimentConfig& c, const std::string& v) {
        member_ptr(c) = parse_number<double>(key, v);
      };
    };

    int_key("data.train_size", [](ExperimentConfig& c) -> int& { return c.data.train_size; });
    int_key("data.heldout_size", [](ExperimentConfig& c) -> int& { return c.data.heldout_size; });
    int_key("data.eval_size", [](ExperimentConfig& c) -> int& { return c.data.eval_size; });
    int_key("data.min_digits", [](ExperimentConfig& c) -> int& { return c.data.min_digits; });
    int_key("data.max_digits", [](ExperimentConfig& c) -> int& { return c.data.max_digits; });

    double_key("train.learning_rate", [](ExperimentConfig& c) -> double& { return c.train.learning_rate; });
    int_key("train.batch_size", [](ExperimentConfig& c) -> int& { return c.train.batch_size; });
    int_key("train.epochs_ce", [](ExperimentConfig& c) -> int& { return c.train.epochs_ce; });
    int_key("train.epochs_viterbi", [](ExperimentConfig& c) -> int& { return c.train.epochs_viterbi; });
    int_key("train.dropout_grad_samples",
            [](ExperimentConfig& c) -> int& { return c.train.dropout_grad_samples; });
    double_key("train.drop_prob", [](ExperimentConfig& c) -> double& { return c.train.drop_prob; });
    int_key("train.dropout_samples", [](ExperimentConfig& c) -> int& { return c.train.dropout_samples; });
    int_key("train.ensemble_size", [](ExperimentConfig& c) -> int& { return c.train.ensemble_size; });
    int_key("train.bnn_samples", [](ExperimentConfig& c) -> int& { return c.train.bnn_samples; });
    double_key("train.bnn_init_rho", [](ExperimentConfig& c) -> double& { return c.train.bnn_init_rho; });
    t["train.kld_anneal"] = [](ExperimentConfig& c, const std::string& v) {
      c.train.kld_anneal = parse_bool("train.kld_anneal", v);
    };
    int_key("train.hidden", [](ExperimentConfig& c) -> int& { return c.train.shape.hidden; });

    double_key("hmm.self_loop", [](ExperimentConfig& c) -> double& { return c.hmm.self_loop; });
    t["hmm.use_priors"] = [](ExperimentConfig& c, const std::string& v) {
      c.hmm.use_priors = parse_bool("hmm.use_priors", v);
    };

    t["attack.epsilons"] = [](ExperimentConfig& c, const std::string& v) { c.attack.epsilons = parse_double_list(v); };
    int_key("attack.num_utterances", [](ExperimentConfig& c) -> int& { return c.attack.num_utterances; });
    int_key("attack.iterations", [](ExperimentConfig& c) -> int& { return c.attack.iterations; });
    double_key("attack.step_fraction", [](ExperimentConfig& c) -> double& { return c.attack.step_fraction; });
    t["attack.gradient_mode"] = [](ExperimentConfig& c, const std::string& v) {
      try {
        c.attack.gradient_mode = parse_gradient_mode(v);
      } catch (const Error& e) {
        throw ConfigError(e.what());
      }
    };

    t["measure.aggregation"] = [](ExperimentConfig& c, const std::string& v) {
      try {
        c.measure.aggregation = parse_aggregation(v);
      } catch (const Error& e) {
        throw ConfigError(e.what());
      }
    };
    int_key("measure.samples", [](ExperimentConfig& c) -> int& { return c.measure.samples; });

    t["detect.epsilons"] = [](ExperimentConfig& c, const std::string& v) { c.detect.epsilons = parse_double_list(v); };
    int_key("detect.num_adversarial", [](ExperimentConfig& c) -> int& { return c.detect.num_adversarial; });
    int_key("detect.histogram_bins", [](ExperimentConfig& c) -> int& { return c.detect.histogram_bins; });
    return t;
  }();
  return table;
}

nlohmann::json doubles(const std::vector<double>& v) {
  nlohmann::json j = nlohmann::json::array();
  for (double x : v) j.push_back(format_epsilon(x));
  return j;
}

uint64_t hash_json(const nlohmann::json& j) { return fnv1a64(j.dump()); }

}  // namespace

ExperimentConfig::ExperimentConfig() {
  for (int i = 0; i <= 10; ++i) attack.epsilons.push_back(i / 100.0);
}

std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> out;
  std::istringstream in(text);
  for (std::string item; std::getline(in, item, ',');) {
    item = trim(item);
    if (!item.empty()) out.push_back(parse_number<double>("list", item));
  }
  return out;
}

std::string hash_hex(uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string format_epsilon(double eps) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", eps);
  return buf;
}

void ExperimentConfig::validate() const {
  const auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  require(workers >= 1, "experiment.workers must be >= 1");
  require(!models.empty(), "experiment.models must name at least one model");
  require(data.train_size >= 1 && data.heldout_size >= 1 && data.eval_size >= 1, "data set sizes must be >= 1");
  require(data.min_digits >= 1 && data.max_digits >= data.min_digits && data.max_digits <= 7,
          "data digits range must satisfy 1 <= min_digits <= max_digits <= 7");
  require(hmm.self_loop > 0.0 && hmm.self_loop < 1.0, "hmm.self_loop must lie in (0, 1)");
  require(attack.num_utterances >= 1 && attack.num_utterances <= data.eval_size,
          "attack.num_utterances must lie in [1, data.eval_size]");
  require(detect.num_adversarial >= 1 && detect.num_adversarial <= data.eval_size,
          "detect.num_adversarial must lie in [1, data.eval_size]");
  require(attack.iterations >= 1, "attack.iterations must be >= 1");
  require(attack.step_fraction > 0.0, "attack.step_fraction must be > 0");
  require(measure.samples == 0 || measure.samples >= 2, "measure.samples must be 0 or >= 2");
  require(detect.histogram_bins >= 1, "detect.histogram_bins must be >= 1");
  for (double e : attack.epsilons) require(e >= 0.0 && e <= 0.1, "attack epsilons must lie in [0, 0.1]");
  for (double e : detect.epsilons) require(e >= 0.0 && e <= 0.1, "detect epsilons must lie in [0, 0.1]");
  try {
    train.validate();
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
}

std::vector<double> ExperimentConfig::attack_epsilons() const {
  std::vector<double> all = attack.epsilons;
  all.insert(all.end(), detect.epsilons.begin(), detect.epsilons.end());
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end(), [](double a, double b) { return std::abs(a - b) < 1e-9; }),
            all.end());
  return all;
}

int ExperimentConfig::attack_count(double epsilon) const {
  int n = 0;
  for (double e : attack.epsilons)
    if (std::abs(e - epsilon) < 1e-9) n = std::max(n, attack.num_utterances);
  for (double e : detect.epsilons)
    if (std::abs(e - epsilon) < 1e-9) n = std::max(n, detect.num_adversarial);
  return n;
}

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json models_json = nlohmann::json::array();
  for (ModelKind k : models) models_json.push_back(std::string(to_string(k)));
  return {
      {"experiment", {{"seed", seed}, {"output_dir", output_dir.string()}, {"models", models_json}}},
      {"data",
       {{"train_size", data.train_size},
        {"heldout_size", data.heldout_size},
        {"eval_size", data.eval_size},
        {"min_digits", data.min_digits},
        {"max_digits", data.max_digits}}},
      {"train",
       {{"learning_rate", train.learning_rate},
        {"batch_size", train.batch_size},
        {"epochs_ce", train.epochs_ce},
        {"epochs_viterbi", train.epochs_viterbi},
        {"dropout_grad_samples", train.dropout_grad_samples},
        {"drop_prob", train.drop_prob},
        {"dropout_samples", train.dropout_samples},
        {"ensemble_size", train.ensemble_size},
        {"bnn_samples", train.bnn_samples},
        {"bnn_init_rho", train.bnn_init_rho},
        {"kld_anneal", train.kld_anneal},
        {"hidden", train.shape.hidden}}},
      {"hmm", {{"self_loop", hmm.self_loop}, {"use_priors", hmm.use_priors}}},
      {"attack",
       {{"epsilons", doubles(attack.epsilons)},
        {"num_utterances", attack.num_utterances},
        {"iterations", attack.iterations},
        {"step_fraction", attack.step_fraction},
        {"gradient_mode", std::string(to_string(attack.gradient_mode))}}},
      {"measure", {{"aggregation", std::string(to_string(measure.aggregation))}, {"samples", measure.samples}}},
      {"detect",
       {{"epsilons", doubles(detect.epsilons)},
        {"num_adversarial", detect.num_adversarial},
        {"histogram_bins", detect.histogram_bins}}},
  };
}

uint64_t ExperimentConfig::data_hash() const {
  const auto j = to_json();
  return hash_json({{"seed", seed}, {"data", j["data"]}});
}

uint64_t ExperimentConfig::model_hash(ModelKind kind) const {
  const auto j = to_json();
  return hash_json(
      {{"data", data_hash()}, {"train", j["train"]}, {"hmm", j["hmm"]}, {"kind", std::string(to_string(kind))}});
}

uint64_t ExperimentConfig::attack_hash(ModelKind kind) const {
  const auto j = to_json();
  nlohmann::json a = j["attack"];
  a.erase("epsilons");
  a.erase("num_utterances");
  return hash_json({{"model", model_hash(kind)}, {"attack", a}});
}

uint64_t ExperimentConfig::measure_hash(ModelKind kind) const {
  const auto j = to_json();
  return hash_json({{"attack", attack_hash(kind)}, {"measure", j["measure"]}});
}

ExperimentConfig parse_config(const std::string& text) {
  boost::property_tree::ptree tree;
  std::istringstream in(text);
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("cannot parse config: ") + e.what());
  }
  ExperimentConfig cfg;
  const auto& table = setters();
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw ConfigError("key outside a section: " + section);
    for (const auto& [key, value] : body) {
      const std::string full = section + "." + key;
      auto it = table.find(full);
      if (it == table.end()) throw ConfigError("unknown config key: " + full);
      it->second(cfg, trim(value.get_value<std::string>()));
    }
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str());
}

}  // namespace uqasr
