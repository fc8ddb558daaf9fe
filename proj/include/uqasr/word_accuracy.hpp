#pragma once

#include "uqasr/common.hpp"

namespace uqasr {

struct EditCounts {
  int reference_words = 0;  // N
  int substitutions = 0;
  int deletions = 0;
  int insertions = 0;

  int errors() const { return substitutions + deletions + insertions; }
};

// Minimal unit-cost edit alignment. On equal cost the backtrace prefers
// match/substitution, then deletion, then insertion.
EditCounts edit_counts(const Transcript& reference, const Transcript& hypothesis);

// (N - S - D - I) / N; negative when insertions pile up.
double word_accuracy(const Transcript& reference, const Transcript& hypothesis);

}  // namespace uqasr
