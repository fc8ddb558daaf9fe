#pragma once

#include "uqasr/training.hpp"
#include "uqasr/viterbi.hpp"

#include <string>

namespace uqasr {

struct ViterbiEpochStats {
  double total_score = 0.0;  // summed forced-alignment log score before retraining
  int aligned = 0;
  std::vector<std::string> skipped;  // ids whose alignment failed
  double train_loss = 0.0;
};

// Realign every utterance with the current model (mean-mode posteriors scaled
// by the current priors), retrain one epoch on the new targets, then
// re-estimate transitions and priors from the new alignments. Utterances that
// cannot be aligned keep their old alignment and are left out of this epoch.
ViterbiEpochStats viterbi_train_epoch(Trainer& trainer, std::vector<LabeledUtterance>& dataset,
                                      HmmTopology& topo, StatePriors& priors, uint64_t align_seed);

// Forced-alignment pass only (no retraining); returns the summed score.
double realign(const AcousticModel& model, std::vector<LabeledUtterance>& dataset, const HmmTopology& topo,
               const StatePriors& priors, uint64_t align_seed, std::vector<std::string>* skipped = nullptr);

}  // namespace uqasr
