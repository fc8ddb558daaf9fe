#pragma once

// Independent reference implementations shared by the unit and acceptance
// tests. Nothing here calls into the code it is used to check.

#include "uqasr/common.hpp"
#include "uqasr/rng.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <vector>

namespace oracle {

// Central difference of f around x[i]; x[i] is restored afterwards.
inline double central_difference(const std::function<double()>& f, double& x, double h) {
  const double saved = x;
  x = saved + h;
  const double up = f();
  x = saved - h;
  const double down = f();
  x = saved;
  return (up - down) / (2.0 * h);
}

// |a - n| / max(|a|, |n|, floor). The floor keeps coordinates whose true
// gradient is ~0 from dominating on rounding noise alone.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

// Denominator floor for comparing against a central difference of a loss
// whose magnitude is |f|: rounding in f alone perturbs the quotient by about
// eps * |f| / h, so gradients below this floor are compared in absolute
// terms at 10x that noise level when the relative tolerance is 1e-4.
inline double fd_noise_floor(double f, double h) {
  return std::max(1e-6, 1e5 * std::numeric_limits<double>::epsilon() * std::abs(f) / h);
}

struct FdReport {
  int checked = 0;
  double worst = 0.0;
};

// Checks `count` random coordinates of a parameter block. `value(i)` yields a
// mutable reference to coordinate i, `analytic(i)` the claimed derivative.
inline FdReport check_coordinates(int size, int count, uint64_t seed, const std::function<double&(int)>& value,
                                  const std::function<double(int)>& analytic, const std::function<double()>& f,
                                  double h) {
  FdReport r;
  const double floor = fd_noise_floor(f(), h);
  uqasr::Rng rng(seed);
  std::uniform_int_distribution<int> pick(0, size - 1);
  for (int k = 0; k < count; ++k) {
    const int i = pick(rng);
    const double numeric = central_difference(f, value(i), h);
    r.worst = std::max(r.worst, relative_error(analytic(i), numeric, floor));
    ++r.checked;
  }
  return r;
}

// Same check over a list of tensors (e.g. every trainable parameter of a
// model). Coordinates are spread uniformly over the tensors first; `scale`
// multiplies the numeric derivative.
inline FdReport check_tensors(const std::vector<uqasr::Matrix*>& tensors, const std::vector<uqasr::Matrix>& grads,
                              const std::function<double()>& f, int count, uint64_t seed, double h,
                              double scale = 1.0) {
  FdReport r;
  const double floor = fd_noise_floor(f(), h);
  uqasr::Rng rng(seed);
  std::uniform_int_distribution<size_t> pick_tensor(0, tensors.size() - 1);
  for (int k = 0; k < count; ++k) {
    const size_t t = pick_tensor(rng);
    std::uniform_int_distribution<Eigen::Index> pick(0, tensors[t]->size() - 1);
    const Eigen::Index i = pick(rng);
    const double numeric = scale * central_difference(f, tensors[t]->data()[i], h);
    r.worst = std::max(r.worst, relative_error(grads[t].data()[i], numeric, floor));
    ++r.checked;
  }
  return r;
}

// Probability that a random positive outscores a random negative, ties 1/2.
inline double pairwise_auroc(const std::vector<double>& negatives, const std::vector<double>& positives) {
  double wins = 0.0;
  for (double p : positives) {
    for (double n : negatives) wins += p > n ? 1.0 : (p == n ? 0.5 : 0.0);
  }
  return wins / (static_cast<double>(positives.size()) * static_cast<double>(negatives.size()));
}

// Word-loop HMM semantics written out directly: models are entered at
// position 0, advance by self-loop or forward arcs, and on leaving a word
// pick any word or silence with weight 1/(W+1); on leaving silence any word
// with weight 1/W. Paths start in any model entry (1/(W+1)), end in a model
// exit and contain at least one word; silence may not follow silence.
struct ToyHmm {
  int words = 1;
  int states_per_word = 2;
  int silence_states = 1;
  std::vector<double> self_loop;

  int num_states() const { return words * states_per_word + silence_states; }
  bool is_silence(int s) const { return s >= words * states_per_word; }
  int word_of(int s) const { return is_silence(s) ? -1 : s / states_per_word; }
  int position(int s) const { return is_silence(s) ? s - words * states_per_word : s % states_per_word; }
  int length(int s) const { return is_silence(s) ? silence_states : states_per_word; }
  bool same_model(int a, int b) const {
    return is_silence(a) ? is_silence(b) : (!is_silence(b) && word_of(a) == word_of(b));
  }
};

struct ScoredPath {
  std::vector<int> states;
  std::vector<int> words;
  double score = -std::numeric_limits<double>::infinity();
};

// Score of one state sequence or nullopt if the grammar forbids it.
inline std::optional<ScoredPath> score_sequence(const ToyHmm& hmm, const std::vector<int>& seq,
                                                const std::vector<std::vector<double>>& emission) {
  const double w_any = -std::log(static_cast<double>(hmm.words + 1));
  const double w_word = -std::log(static_cast<double>(hmm.words));
  ScoredPath out;
  out.states = seq;
  if (hmm.position(seq[0]) != 0) return std::nullopt;
  double score = w_any + emission[0][static_cast<size_t>(seq[0])];
  if (!hmm.is_silence(seq[0])) out.words.push_back(hmm.word_of(seq[0]));
  for (size_t t = 1; t < seq.size(); ++t) {
    const int p = seq[t - 1];
    const int s = seq[t];
    const double stay = std::log(hmm.self_loop[static_cast<size_t>(p)]);
    const double go = std::log(1.0 - hmm.self_loop[static_cast<size_t>(p)]);
    if (s == p) {
      score += stay;
    } else if (hmm.same_model(p, s) && hmm.position(s) == hmm.position(p) + 1) {
      score += go;
    } else if (hmm.position(p) == hmm.length(p) - 1 && hmm.position(s) == 0) {
      if (hmm.is_silence(p)) {
        if (hmm.is_silence(s)) return std::nullopt;
        score += go + w_word;
      } else {
        score += go + w_any;
      }
      if (!hmm.is_silence(s)) out.words.push_back(hmm.word_of(s));
    } else {
      return std::nullopt;
    }
    score += emission[t][static_cast<size_t>(s)];
  }
  const int last = seq.back();
  if (hmm.position(last) != hmm.length(last) - 1) return std::nullopt;
  if (out.words.empty()) return std::nullopt;
  out.score = score;
  return out;
}

struct Enumeration {
  ScoredPath best;
  double runner_up = -std::numeric_limits<double>::infinity();
  int valid = 0;
};

// Exhaustive search over every state sequence of the given length. When
// `transcript` is set only sequences spelling it are considered.
inline Enumeration enumerate_paths(const ToyHmm& hmm, const std::vector<std::vector<double>>& emission,
                                   const std::vector<int>* transcript = nullptr) {
  const int frames = static_cast<int>(emission.size());
  const int n = hmm.num_states();
  Enumeration result;
  std::vector<int> seq(static_cast<size_t>(frames), 0);
  while (true) {
    if (auto scored = score_sequence(hmm, seq, emission)) {
      if (!transcript || scored->words == *transcript) {
        ++result.valid;
        if (scored->score > result.best.score) {
          result.runner_up = result.best.score;
          result.best = *scored;
        } else if (scored->score > result.runner_up) {
          result.runner_up = scored->score;
        }
      }
    }
    int i = frames - 1;
    while (i >= 0 && ++seq[static_cast<size_t>(i)] == n) seq[static_cast<size_t>(i--)] = 0;
    if (i < 0) break;
  }
  return result;
}

}  // namespace oracle
