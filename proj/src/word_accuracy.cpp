#include "uqasr/word_accuracy.hpp"

#include <algorithm>

namespace uqasr {

EditCounts edit_counts(const Transcript& ref, const Transcript& hyp) {
  const size_t n = ref.size(), m = hyp.size();
  std::vector<std::vector<int>> cost(n + 1, std::vector<int>(m + 1, 0));
  for (size_t i = 0; i <= n; ++i) cost[i][0] = static_cast<int>(i);
  for (size_t j = 0; j <= m; ++j) cost[0][j] = static_cast<int>(j);
  for (size_t i = 1; i <= n; ++i) {
    for (size_t j = 1; j <= m; ++j) {
      const int diag = cost[i - 1][j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      cost[i][j] = std::min({diag, cost[i - 1][j] + 1, cost[i][j - 1] + 1});
    }
  }

  EditCounts c;
  c.reference_words = static_cast<int>(n);
  size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && cost[i][j] == cost[i - 1][j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1)) {
      if (ref[i - 1] != hyp[j - 1]) ++c.substitutions;
      --i;
      --j;
    } else if (i > 0 && cost[i][j] == cost[i - 1][j] + 1) {
      ++c.deletions;
      --i;
    } else {
      ++c.insertions;
      --j;
    }
  }
  return c;
}

double word_accuracy(const Transcript& reference, const Transcript& hypothesis) {
  if (reference.empty()) throw PreconditionError("empty reference transcript");
  const EditCounts c = edit_counts(reference, hypothesis);
  return static_cast<double>(c.reference_words - c.errors()) / c.reference_words;
}

}  // namespace uqasr
