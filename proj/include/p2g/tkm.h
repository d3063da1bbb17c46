// p2g/tkm.h

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

#ifndef P2G_TKM_H_
#define P2G_TKM_H_

#include <optional>
#include <string>
#include <vector>

#include "p2g/ctc-lattice.h"
#include "p2g/ngram-lm.h"
#include "p2g/p2g-model.h"
#include "p2g/rng.h"

namespace p2g {

// One training instance for marginalized losses: the ranked acoustic
// hypothesis set for an utterance plus its reference token sequence.
struct TKMBatchItem {
  HypothesisSet hypotheses;
  std::vector<int> target;
  std::string utt_id;
};

// A decoded grapheme sequence with its marginal score. provenance lists the
// hypothesis indices whose beams produced it (never empty).
struct Candidate {
  std::vector<int> tokens;
  double tkm_logscore = 0.0;
  std::optional<double> lm_logscore;
  std::optional<double> combined_logscore;
  std::vector<int> provenance;
};

// Softmax over the set's acoustic log-probs. The marginal weights are
// renormalized over the selected hypotheses: that shifts the loss by a
// per-item constant and scales decode scores by a per-utterance factor, so
// gradients and every argmax are unchanged while the numerics stay bounded.
// Throws std::invalid_argument when empty or all entries are impossible.
std::vector<double> renormalize_weights(const HypothesisSet& hyps);
std::vector<double> renormalize_logweights(const HypothesisSet& hyps);

// -log sum_k w_k p(y | h^(k)): the marginal negative log-likelihood over the
// item's hypothesis set, computed with log-sum-exp.
double tkm_loss(const P2GModel& model, const TKMBatchItem& item);

// Same loss, accumulating weight * d(loss)/d(params) into grads. Acoustic
// weights are constants: no gradient flows toward the hypothesis scores.
double tkm_loss_grad(const P2GModel& model, const TKMBatchItem& item,
                     double weight, P2GParams* grads);

// Marginal loss over n hypotheses drawn uniformly without replacement from
// the item's top-K; weights renormalized within the drawn subset. The caller
// owns the RNG (one fresh draw per minibatch visit).
double randomized_tkm_loss(const P2GModel& model, const TKMBatchItem& item,
                           int n, int top_k, Rng* rng);
double randomized_tkm_loss_grad(const P2GModel& model, const TKMBatchItem& item,
                                int n, int top_k, Rng* rng, double weight,
                                P2GParams* grads);

// Marginalized decoding: per-hypothesis beam search of size beam_size, union
// and de-duplication of the beams, then each candidate scored as
// sum_k w_k p_hat(y|h^(k)) with p_hat = 0 when y did not appear in the beam
// of h^(k). Returns the top beam_size candidates.
std::vector<Candidate> tkm_decode(const P2GModel& model,
                                  const HypothesisSet& hyps, int beam_size,
                                  int max_len);

// Diagnostic counterpart to the fast approximation: forces a full
// score_sequence for every (candidate, hypothesis) pair and re-ranks.
std::vector<Candidate> exact_rescore(const P2GModel& model,
                                     const HypothesisSet& hyps,
                                     const std::vector<Candidate>& candidates);

// combined = tkm + lambda * lm_logprob(words) + beta * |words|; re-sorted
// descending, stable for ties. grapheme_inventory maps token ids to words.
std::vector<Candidate> rescore_with_lm(
    const std::vector<Candidate>& candidates, const NGramLM& lm, double lambda,
    double beta, const std::vector<std::string>& grapheme_inventory);

// Marginalized training over TKM items, sharing the supervised train loop.
// randomized_n == 0 trains on the full top-K of every item (standard TKM);
// randomized_n in [1, K] redraws that many hypotheses per item visit.
// Per-item draws are seeded from (opts.seed, utt_id, epoch).
TrainTrace train_marginal(P2GModel* model, std::span<const TKMBatchItem> items,
                          int top_k, int randomized_n,
                          std::span<const TKMBatchItem> dev_items,
                          const TrainOptions& opts);

// Same, with a caller-supplied early-stopping metric.
TrainTrace train_marginal_with_dev(P2GModel* model,
                                   std::span<const TKMBatchItem> items,
                                   int top_k, int randomized_n,
                                   const TrainOptions& opts,
                                   const DevLossFn& dev_loss);

}  // namespace p2g

#endif  // P2G_TKM_H_
