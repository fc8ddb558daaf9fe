#pragma once

#include "uqasr/topology.hpp"

namespace uqasr {

struct GraphArc {
  int from = 0;
  double log_prob = 0.0;
};

// Search graph whose nodes emit HMM states. Several nodes may share one
// emission state (e.g. silence before and after the first word).
struct DecodingGraph {
  std::vector<StateId> emission;
  std::vector<double> initial;                 // log start probability, -inf if not a start node
  std::vector<char> is_final;
  std::vector<std::vector<GraphArc>> incoming;  // sorted by `from`
  std::vector<int> word_label;                 // word emitted on entering the node, -1 for none

  int size() const { return static_cast<int>(emission.size()); }
  int add_node(StateId emission_state, int word = -1);
  void add_arc(int from, int to, double log_prob);
  void finalize();
};

struct ViterbiPath {
  std::vector<int> nodes;
  double score = 0.0;
};

// Max-product search; log_emissions is frames x num_emission_states.
// Ties prefer the lower predecessor / final node index.
ViterbiPath viterbi_search(const DecodingGraph& graph, const Matrix& log_emissions);

// Digit loop: optional silence -> (digit -> optional silence)+, uniform word
// entry. From a word exit the successors are every word entry and silence
// (1 / (num_words + 1) each); from silence only words (1 / num_words).
DecodingGraph digit_loop_graph(const HmmTopology& topo);

// Linear graph sil? w1 sil? w2 ... wn sil? with arc weights identical to the
// digit loop, so every forced path is also a decode path with equal score.
DecodingGraph forced_graph(const HmmTopology& topo, const Transcript& transcript);

// log p(s | x_t) - log p(s) (priors may be null for raw posteriors).
Matrix emission_scores(const Matrix& posteriors, const StatePriors* priors);

struct DecodeResult {
  Transcript transcript;
  Alignment alignment;
  double score = 0.0;
};

DecodeResult viterbi_decode(const Matrix& posteriors, const HmmTopology& topo, const StatePriors* priors);

struct ForcedAlignment {
  Alignment alignment;
  double score = 0.0;
};

ForcedAlignment forced_align(const Matrix& posteriors, const HmmTopology& topo, const Transcript& transcript,
                             const StatePriors* priors = nullptr);

// Fewest frames any path for the transcript needs.
int minimum_frames(const Transcript& transcript, const HmmTopology& topo, bool mandatory_silence);

// Uniform split over sil d1 sil d2 ... dn sil; the first (frames mod L)
// states get one extra frame.
Alignment flat_start_alignment(int num_frames, const Transcript& transcript, const HmmTopology& topo);

// Words in the order their models are entered.
Transcript alignment_words(const Alignment& alignment, const HmmTopology& topo);

// Throws PreconditionError when the alignment breaks the topology/grammar
// or (if given) does not spell out the transcript.
void validate_alignment(const Alignment& alignment, const HmmTopology& topo,
                        const Transcript* transcript = nullptr);

}  // namespace uqasr
