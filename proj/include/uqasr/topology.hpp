#pragma once

#include "uqasr/common.hpp"

#include <json.hpp>

#include <span>

namespace uqasr {

// Whole-word digit HMM: num_words strictly left-to-right word models
// (self-loop + forward) followed by one silence model. The default is
// 10 x 9 + 5 = 95 emitting states. Word w, position k has id
// w * states_per_word + k; silence position k has id num_words * states_per_word + k.
struct HmmTopology {
  int num_words = 10;
  int states_per_word = 9;
  int silence_states = 5;
  std::vector<double> self_loop;  // per state, in (0, 1)

  static HmmTopology make(int num_words, int states_per_word, int silence_states, double self_loop = 0.6);
  static HmmTopology standard(double self_loop = 0.6) { return make(10, 9, 5, self_loop); }

  int num_states() const { return num_words * states_per_word + silence_states; }
  StateId word_state(int word, int k) const { return word * states_per_word + k; }
  StateId silence_state(int k) const { return num_words * states_per_word + k; }
  bool is_silence(StateId s) const { return s >= num_words * states_per_word; }
  // -1 for silence states.
  int word_of(StateId s) const { return is_silence(s) ? -1 : s / states_per_word; }
  int position(StateId s) const;
  int model_length(StateId s) const { return is_silence(s) ? silence_states : states_per_word; }
  bool is_model_entry(StateId s) const { return position(s) == 0; }
  bool is_model_exit(StateId s) const { return position(s) == model_length(s) - 1; }

  double log_self(StateId s) const;
  double log_forward(StateId s) const;

  void validate() const;
  nlohmann::json to_json() const;
  static HmmTopology from_json(const nlohmann::json& j);
};

// Laplace-smoothed log state priors: (count + 1) / (frames + num_states).
struct StatePriors {
  std::vector<double> log_prior;

  static StatePriors uniform(int num_states);
  nlohmann::json to_json() const;
  static StatePriors from_json(const nlohmann::json& j);
};

StatePriors estimate_priors(std::span<const Alignment> alignments, int num_states);

struct TransitionCounts {
  std::vector<long> self;
  std::vector<long> forward;  // includes exits out of a model
};

TransitionCounts count_transitions(std::span<const Alignment> alignments, int num_states);

// self_loop[s] = self / (self + forward), clamped to [min_prob, 1 - min_prob];
// states without observations keep their current value.
void reestimate_transitions(HmmTopology& topo, const TransitionCounts& counts, double min_prob = 0.01);

}  // namespace uqasr
