#include "uqasr/topology.hpp"

#include <algorithm>
#include <cmath>

namespace uqasr {

HmmTopology HmmTopology::make(int num_words, int states_per_word, int silence_states, double self_loop) {
  HmmTopology t;
  t.num_words = num_words;
  t.states_per_word = states_per_word;
  t.silence_states = silence_states;
  t.self_loop.assign(static_cast<size_t>(t.num_states()), self_loop);
  t.validate();
  return t;
}

int HmmTopology::position(StateId s) const {
  return is_silence(s) ? s - num_words * states_per_word : s % states_per_word;
}

double HmmTopology::log_self(StateId s) const { return std::log(self_loop[static_cast<size_t>(s)]); }
double HmmTopology::log_forward(StateId s) const { return std::log1p(-self_loop[static_cast<size_t>(s)]); }

void HmmTopology::validate() const {
  if (num_words <= 0 || states_per_word <= 0 || silence_states <= 0) {
    throw PreconditionError("topology needs positive word, state and silence counts");
  }
  if (static_cast<int>(self_loop.size()) != num_states()) throw ShapeError("self-loop table size mismatch");
  for (double p : self_loop) {
    if (!(p > 0.0 && p < 1.0)) throw PreconditionError("self-loop probability outside (0, 1)");
  }
}

nlohmann::json HmmTopology::to_json() const {
  return {{"num_words", num_words},
          {"states_per_word", states_per_word},
          {"silence_states", silence_states},
          {"self_loop", self_loop}};
}

HmmTopology HmmTopology::from_json(const nlohmann::json& j) {
  HmmTopology t;
  t.num_words = j.at("num_words").get<int>();
  t.states_per_word = j.at("states_per_word").get<int>();
  t.silence_states = j.at("silence_states").get<int>();
  t.self_loop = j.at("self_loop").get<std::vector<double>>();
  t.validate();
  return t;
}

StatePriors StatePriors::uniform(int num_states) {
  return {std::vector<double>(static_cast<size_t>(num_states), -std::log(static_cast<double>(num_states)))};
}

nlohmann::json StatePriors::to_json() const { return log_prior; }

StatePriors StatePriors::from_json(const nlohmann::json& j) { return {j.get<std::vector<double>>()}; }

StatePriors estimate_priors(std::span<const Alignment> alignments, int num_states) {
  if (alignments.empty()) throw PreconditionError("no alignments to estimate priors from");
  std::vector<double> counts(static_cast<size_t>(num_states), 1.0);
  double total = num_states;
  for (const auto& a : alignments) {
    for (StateId s : a) {
      if (s < 0 || s >= num_states) throw PreconditionError("state id out of range");
      counts[static_cast<size_t>(s)] += 1.0;
      total += 1.0;
    }
  }
  StatePriors p;
  p.log_prior.reserve(counts.size());
  for (double c : counts) p.log_prior.push_back(std::log(c / total));
  return p;
}

TransitionCounts count_transitions(std::span<const Alignment> alignments, int num_states) {
  TransitionCounts c{std::vector<long>(static_cast<size_t>(num_states), 0),
                     std::vector<long>(static_cast<size_t>(num_states), 0)};
  for (const auto& a : alignments) {
    for (size_t t = 0; t + 1 < a.size(); ++t) {
      auto& bucket = a[t] == a[t + 1] ? c.self : c.forward;
      ++bucket[static_cast<size_t>(a[t])];
    }
  }
  return c;
}

void reestimate_transitions(HmmTopology& topo, const TransitionCounts& counts, double min_prob) {
  for (size_t s = 0; s < topo.self_loop.size(); ++s) {
    const long total = counts.self[s] + counts.forward[s];
    if (total == 0) continue;
    const double p = static_cast<double>(counts.self[s]) / static_cast<double>(total);
    topo.self_loop[s] = std::clamp(p, min_prob, 1.0 - min_prob);
  }
}

}  // namespace uqasr
