// p2g/ctc-lattice.h

// Copyright 2026  The p2g Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef P2G_CTC_LATTICE_H_
#define P2G_CTC_LATTICE_H_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "p2g/frame-logits.h"

namespace p2g {

// A collapsed phoneme sequence with its acoustic log-probability log p(h|x).
// tokens are inventory indices and never contain the blank.
struct PhonemeHypothesis {
  std::vector<int> tokens;
  double acoustic_logprob = 0.0;  // kLogZero when no alignment exists
};

enum class HypothesisOrigin { kBeam, kSampled, kMerged };

// De-duplicated ranked set: sorted by acoustic_logprob descending, ties broken
// lexicographically on the token sequence (inventory order).
struct HypothesisSet {
  std::vector<PhonemeHypothesis> hypotheses;
  HypothesisOrigin origin = HypothesisOrigin::kBeam;
  int dropped_overlength = 0;  // hypotheses discarded by a length budget

  bool empty() const { return hypotheses.empty(); }
  size_t size() const { return hypotheses.size(); }
};

// Ordering used everywhere a hypothesis or candidate list is ranked.
bool hypothesis_less(const PhonemeHypothesis& a, const PhonemeHypothesis& b);
void sort_hypotheses(std::vector<PhonemeHypothesis>* hyps);

// Merge consecutive repeats, then remove blanks. Total function.
std::vector<int> collapse_path(const std::vector<int>& path, int blank_symbol);

// log p(h|x) by the CTC forward recursion over the blank-augmented label
// sequence. Returns kLogZero when no alignment of h onto the frames exists.
// Throws std::invalid_argument if h contains ids outside the inventory.
double ctc_sequence_logprob(const FrameLogits& fl,
                            const std::vector<int>& phonemes);

// CTC prefix beam search. Keeps (ending-in-blank, ending-in-label) log
// probability pairs per collapsed prefix and prunes to beam_size prefixes per
// frame. Prefix probabilities are exact whenever the prefix never fell out of
// the beam. Returns up to beam_size realizable hypotheses.
// max_collapsed_len < 0 means no budget beyond the forced cap of T.
HypothesisSet prefix_beam_search(const FrameLogits& fl, int beam_size,
                                 int max_collapsed_len = -1);

// Draws num_samples independent frame paths (each frame from its softmax
// row), collapses and de-duplicates them, and assigns every retained sequence
// its exact CTC sequence log-probability. Deterministic for a fixed seed.
// counts, when non-null, receives the number of raw draws per collapsed
// sequence (before de-duplication, including overlong drops).
HypothesisSet sample_hypotheses(const FrameLogits& fl, int num_samples,
                                uint64_t seed, int max_collapsed_len = -1,
                                std::map<std::vector<int>, int>* counts = nullptr);

// Best-path decode: per-frame argmax, then collapse.
std::vector<int> greedy_collapse(const FrameLogits& fl);

}  // namespace p2g

#endif  // P2G_CTC_LATTICE_H_
