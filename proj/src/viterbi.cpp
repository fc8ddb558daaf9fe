#include "uqasr/viterbi.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace uqasr {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kProbFloor = 1e-30;

void check_transcript(const Transcript& transcript, const HmmTopology& topo) {
  if (transcript.empty()) throw PreconditionError("empty transcript");
  for (int w : transcript) {
    if (w < 0 || w >= topo.num_words) throw PreconditionError("word id out of range");
  }
}

// Adds the left-to-right chain of a model; returns (entry, exit) node ids.
std::pair<int, int> add_model(DecodingGraph& g, const HmmTopology& topo, StateId first, int length, int word) {
  const int entry = g.size();
  for (int k = 0; k < length; ++k) {
    const int node = g.add_node(first + k, k == 0 ? word : -1);
    g.add_arc(node, node, topo.log_self(first + k));
    if (k > 0) g.add_arc(node - 1, node, topo.log_forward(first + k - 1));
  }
  return {entry, g.size() - 1};
}

}  // namespace

int DecodingGraph::add_node(StateId emission_state, int word) {
  emission.push_back(emission_state);
  initial.push_back(kNegInf);
  is_final.push_back(0);
  incoming.emplace_back();
  word_label.push_back(word);
  return size() - 1;
}

void DecodingGraph::add_arc(int from, int to, double log_prob) {
  incoming[static_cast<size_t>(to)].push_back({from, log_prob});
}

void DecodingGraph::finalize() {
  for (auto& arcs : incoming) {
    std::stable_sort(arcs.begin(), arcs.end(), [](const GraphArc& a, const GraphArc& b) { return a.from < b.from; });
  }
}

ViterbiPath viterbi_search(const DecodingGraph& g, const Matrix& em) {
  const int n = g.size();
  const auto frames = static_cast<int>(em.rows());
  if (frames == 0) throw PreconditionError("no frames to decode");
  for (StateId s : g.emission) {
    if (s < 0 || s >= em.cols()) throw ShapeError("emission matrix has too few columns");
  }

  std::vector<double> prev(static_cast<size_t>(n)), cur(static_cast<size_t>(n));
  std::vector<int> back(static_cast<size_t>(frames) * static_cast<size_t>(n), -1);
  for (int j = 0; j < n; ++j) prev[static_cast<size_t>(j)] = g.initial[static_cast<size_t>(j)] + em(0, g.emission[static_cast<size_t>(j)]);

  for (int t = 1; t < frames; ++t) {
    for (int j = 0; j < n; ++j) {
      double best = kNegInf;
      int arg = -1;
      for (const GraphArc& arc : g.incoming[static_cast<size_t>(j)]) {
        const double s = prev[static_cast<size_t>(arc.from)] + arc.log_prob;
        if (s > best) {
          best = s;
          arg = arc.from;
        }
      }
      cur[static_cast<size_t>(j)] = arg < 0 ? kNegInf : best + em(t, g.emission[static_cast<size_t>(j)]);
      back[static_cast<size_t>(t) * static_cast<size_t>(n) + static_cast<size_t>(j)] = arg;
    }
    std::swap(prev, cur);
  }

  double best = kNegInf;
  int last = -1;
  for (int j = 0; j < n; ++j) {
    if (g.is_final[static_cast<size_t>(j)] && prev[static_cast<size_t>(j)] > best) {
      best = prev[static_cast<size_t>(j)];
      last = j;
    }
  }
  if (last < 0) throw PreconditionError("no valid path through the decoding graph");

  ViterbiPath path;
  path.score = best;
  path.nodes.assign(static_cast<size_t>(frames), 0);
  int node = last;
  for (int t = frames - 1; t >= 0; --t) {
    path.nodes[static_cast<size_t>(t)] = node;
    if (t > 0) node = back[static_cast<size_t>(t) * static_cast<size_t>(n) + static_cast<size_t>(node)];
  }
  return path;
}

DecodingGraph digit_loop_graph(const HmmTopology& topo) {
  DecodingGraph g;
  const double to_any = -std::log(static_cast<double>(topo.num_words + 1));
  const double to_word = -std::log(static_cast<double>(topo.num_words));
  std::vector<std::pair<int, int>> words;
  for (int w = 0; w < topo.num_words; ++w) {
    words.push_back(add_model(g, topo, topo.word_state(w, 0), topo.states_per_word, w));
  }
  // Silence before the first word cannot end the utterance; silence after a
  // word can. Both share the same emission states.
  const auto pre = add_model(g, topo, topo.silence_state(0), topo.silence_states, -1);
  const auto post = add_model(g, topo, topo.silence_state(0), topo.silence_states, -1);

  const StateId word_exit = topo.states_per_word - 1;
  const StateId sil_exit = topo.silence_state(topo.silence_states - 1);
  for (int w = 0; w < topo.num_words; ++w) {
    const int exit_node = words[static_cast<size_t>(w)].second;
    const double leave = topo.log_forward(topo.word_state(w, word_exit));
    for (const auto& target : words) g.add_arc(exit_node, target.first, leave + to_any);
    g.add_arc(exit_node, post.first, leave + to_any);
    g.is_final[static_cast<size_t>(exit_node)] = 1;
  }
  for (const auto& target : words) {
    g.add_arc(pre.second, target.first, topo.log_forward(sil_exit) + to_word);
    g.add_arc(post.second, target.first, topo.log_forward(sil_exit) + to_word);
    g.initial[static_cast<size_t>(target.first)] = to_any;
  }
  g.initial[static_cast<size_t>(pre.first)] = to_any;
  g.is_final[static_cast<size_t>(post.second)] = 1;
  g.finalize();
  return g;
}

DecodingGraph forced_graph(const HmmTopology& topo, const Transcript& transcript) {
  check_transcript(transcript, topo);
  DecodingGraph g;
  const double to_any = -std::log(static_cast<double>(topo.num_words + 1));
  const double to_word = -std::log(static_cast<double>(topo.num_words));
  const StateId sil_exit = topo.silence_state(topo.silence_states - 1);

  const auto add_silence = [&] { return add_model(g, topo, topo.silence_state(0), topo.silence_states, -1); };
  auto lead = add_silence();
  g.initial[static_cast<size_t>(lead.first)] = to_any;

  std::pair<int, int> prev_word{-1, -1};
  std::pair<int, int> prev_sil = lead;
  for (size_t i = 0; i < transcript.size(); ++i) {
    const int w = transcript[i];
    const auto word = add_model(g, topo, topo.word_state(w, 0), topo.states_per_word, w);
    if (i == 0) {
      g.initial[static_cast<size_t>(word.first)] = to_any;
    } else {
      const int pw = transcript[i - 1];
      const double leave = topo.log_forward(topo.word_state(pw, topo.states_per_word - 1));
      g.add_arc(prev_word.second, word.first, leave + to_any);
    }
    g.add_arc(prev_sil.second, word.first, topo.log_forward(sil_exit) + to_word);

    const auto sil = add_silence();
    g.add_arc(word.second, sil.first, topo.log_forward(topo.word_state(w, topo.states_per_word - 1)) + to_any);
    prev_word = word;
    prev_sil = sil;
  }
  g.is_final[static_cast<size_t>(prev_word.second)] = 1;
  g.is_final[static_cast<size_t>(prev_sil.second)] = 1;
  g.finalize();
  return g;
}

Matrix emission_scores(const Matrix& posteriors, const StatePriors* priors) {
  Matrix em = posteriors.array().max(kProbFloor).log().matrix();
  if (priors) {
    if (static_cast<Eigen::Index>(priors->log_prior.size()) != posteriors.cols()) {
      throw ShapeError("prior count does not match posterior columns");
    }
    for (Eigen::Index s = 0; s < em.cols(); ++s) em.col(s).array() -= priors->log_prior[static_cast<size_t>(s)];
  }
  return em;
}

namespace {

Alignment to_alignment(const DecodingGraph& g, const ViterbiPath& p) {
  Alignment a;
  a.reserve(p.nodes.size());
  for (int node : p.nodes) a.push_back(g.emission[static_cast<size_t>(node)]);
  return a;
}

void check_posteriors(const Matrix& posteriors, const HmmTopology& topo) {
  if (posteriors.cols() != topo.num_states()) throw ShapeError("posterior columns != HMM state count");
}

}  // namespace

DecodeResult viterbi_decode(const Matrix& posteriors, const HmmTopology& topo, const StatePriors* priors) {
  check_posteriors(posteriors, topo);
  const DecodingGraph g = digit_loop_graph(topo);
  const ViterbiPath p = viterbi_search(g, emission_scores(posteriors, priors));
  DecodeResult r;
  r.score = p.score;
  r.alignment = to_alignment(g, p);
  for (size_t t = 0; t < p.nodes.size(); ++t) {
    const int node = p.nodes[t];
    const int word = g.word_label[static_cast<size_t>(node)];
    if (word >= 0 && (t == 0 || p.nodes[t - 1] != node)) r.transcript.push_back(word);
  }
  return r;
}

int minimum_frames(const Transcript& transcript, const HmmTopology& topo, bool mandatory_silence) {
  const int n = static_cast<int>(transcript.size());
  return n * topo.states_per_word + (mandatory_silence ? (n + 1) * topo.silence_states : 0);
}

ForcedAlignment forced_align(const Matrix& posteriors, const HmmTopology& topo, const Transcript& transcript,
                             const StatePriors* priors) {
  check_posteriors(posteriors, topo);
  check_transcript(transcript, topo);
  if (posteriors.rows() < minimum_frames(transcript, topo, false)) {
    throw PreconditionError("utterance too short for transcript '" + format_transcript(transcript) + "'");
  }
  const DecodingGraph g = forced_graph(topo, transcript);
  const ViterbiPath p = viterbi_search(g, emission_scores(posteriors, priors));
  return {to_alignment(g, p), p.score};
}

Alignment flat_start_alignment(int num_frames, const Transcript& transcript, const HmmTopology& topo) {
  check_transcript(transcript, topo);
  std::vector<StateId> sequence;
  const auto add_silence = [&] {
    for (int k = 0; k < topo.silence_states; ++k) sequence.push_back(topo.silence_state(k));
  };
  add_silence();
  for (int w : transcript) {
    for (int k = 0; k < topo.states_per_word; ++k) sequence.push_back(topo.word_state(w, k));
    add_silence();
  }
  const int length = static_cast<int>(sequence.size());
  if (num_frames < length) {
    throw PreconditionError("utterance too short: " + std::to_string(num_frames) + " frames < " +
                            std::to_string(length) + " states");
  }
  const int base = num_frames / length;
  const int extra = num_frames % length;
  Alignment a;
  a.reserve(static_cast<size_t>(num_frames));
  for (int i = 0; i < length; ++i) {
    a.insert(a.end(), static_cast<size_t>(base + (i < extra ? 1 : 0)), sequence[static_cast<size_t>(i)]);
  }
  return a;
}

Transcript alignment_words(const Alignment& a, const HmmTopology& topo) {
  Transcript words;
  for (size_t t = 0; t < a.size(); ++t) {
    const StateId s = a[t];
    if (!topo.is_silence(s) && topo.is_model_entry(s) && (t == 0 || a[t - 1] != s)) {
      words.push_back(topo.word_of(s));
    }
  }
  return words;
}

void validate_alignment(const Alignment& a, const HmmTopology& topo, const Transcript* transcript) {
  const auto fail = [](const std::string& msg) { throw PreconditionError("invalid alignment: " + msg); };
  if (a.empty()) fail("empty");
  for (StateId s : a) {
    if (s < 0 || s >= topo.num_states()) fail("state id out of range");
  }
  if (!topo.is_model_entry(a.front())) fail("does not start at a model entry");
  if (!topo.is_model_exit(a.back())) fail("does not end at a model exit");
  if (std::all_of(a.begin(), a.end(), [&](StateId s) { return topo.is_silence(s); })) fail("contains no word");
  for (size_t t = 1; t < a.size(); ++t) {
    const StateId from = a[t - 1], to = a[t];
    if (from == to) continue;
    const bool same_model = topo.word_of(from) == topo.word_of(to) && topo.is_silence(from) == topo.is_silence(to);
    if (same_model && to == from + 1) continue;
    if (topo.is_model_exit(from) && topo.is_model_entry(to)) {
      if (topo.is_silence(from) && topo.is_silence(to)) fail("silence followed by silence");
      continue;
    }
    fail("illegal transition " + std::to_string(from) + " -> " + std::to_string(to) + " at frame " +
         std::to_string(t));
  }
  if (transcript && alignment_words(a, topo) != *transcript) fail("word sequence differs from transcript");
}

}  // namespace uqasr
