#include "uqasr/hmm_training.hpp"

#include <algorithm>

namespace uqasr {

double realign(const AcousticModel& model, std::vector<LabeledUtterance>& dataset, const HmmTopology& topo,
               const StatePriors& priors, uint64_t align_seed, std::vector<std::string>* skipped) {
  double total = 0.0;
  for (auto& utt : dataset) {
    try {
      const Matrix post = forward(model, utt.feats, PredictMode::mean(align_seed));
      ForcedAlignment fa = forced_align(post, topo, utt.transcript, &priors);
      total += fa.score;
      utt.alignment = std::move(fa.alignment);
    } catch (const PreconditionError&) {
      if (skipped) skipped->push_back(utt.id);
    }
  }
  return total;
}

ViterbiEpochStats viterbi_train_epoch(Trainer& trainer, std::vector<LabeledUtterance>& dataset,
                                      HmmTopology& topo, StatePriors& priors, uint64_t align_seed) {
  ViterbiEpochStats stats;
  stats.total_score = realign(trainer.model(), dataset, topo, priors, align_seed, &stats.skipped);

  std::vector<LabeledUtterance> usable;
  std::vector<Alignment> alignments;
  for (const auto& u : dataset) {
    if (std::find(stats.skipped.begin(), stats.skipped.end(), u.id) != stats.skipped.end()) continue;
    usable.push_back(u);
    alignments.push_back(u.alignment);
  }
  stats.aligned = static_cast<int>(usable.size());
  if (usable.empty()) throw PreconditionError("no utterance could be aligned");

  stats.train_loss = trainer.run_epoch(FrameSet::stack(usable));
  reestimate_transitions(topo, count_transitions(alignments, topo.num_states()));
  priors = estimate_priors(alignments, topo.num_states());
  return stats;
}

}  // namespace uqasr
