// p2g/tkm.cc

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

#include "p2g/tkm.h"

#include <algorithm>
#include <map>
#include <stdexcept>

#include "p2g/logmath.h"

namespace p2g {

std::vector<double> renormalize_logweights(const HypothesisSet& hyps) {
  if (hyps.empty()) {
    throw std::invalid_argument("renormalize_weights: empty hypothesis set");
  }
  double lse = kLogZero;
  for (const auto& h : hyps.hypotheses) lse = log_add(lse, h.acoustic_logprob);
  if (log_is_zero(lse)) {
    throw std::invalid_argument(
        "renormalize_weights: all hypotheses impossible");
  }
  std::vector<double> logw;
  logw.reserve(hyps.size());
  for (const auto& h : hyps.hypotheses) {
    logw.push_back(log_is_zero(h.acoustic_logprob)
                       ? kLogZero
                       : h.acoustic_logprob - lse);
  }
  return logw;
}

std::vector<double> renormalize_weights(const HypothesisSet& hyps) {
  std::vector<double> w = renormalize_logweights(hyps);
  for (double& v : w) v = log_is_zero(v) ? 0.0 : std::exp(v);
  return w;
}

double tkm_loss(const P2GModel& model, const TKMBatchItem& item) {
  std::vector<double> logw = renormalize_logweights(item.hypotheses);
  double lse = kLogZero;
  for (size_t k = 0; k < item.hypotheses.size(); ++k) {
    if (log_is_zero(logw[k])) continue;
    double term =
        logw[k] + score_sequence(model, item.hypotheses.hypotheses[k].tokens,
                                 item.target);
    lse = log_add(lse, term);
  }
  return -lse;
}

double tkm_loss_grad(const P2GModel& model, const TKMBatchItem& item,
                     double weight, P2GParams* grads) {
  std::vector<double> logw = renormalize_logweights(item.hypotheses);
  const size_t K = item.hypotheses.size();

  std::vector<double> terms(K, kLogZero);
  double lse = kLogZero;
  for (size_t k = 0; k < K; ++k) {
    if (log_is_zero(logw[k])) continue;
    terms[k] = logw[k] +
               score_sequence(model, item.hypotheses.hypotheses[k].tokens,
                              item.target);
    lse = log_add(lse, terms[k]);
  }
  double loss = -lse;
  if (!std::isfinite(loss) || log_is_zero(lse)) {
    throw std::runtime_error("tkm_loss: non-finite marginal for utterance " +
                             item.utt_id);
  }
  if (weight == 0.0) return 0.0;

  // d(-lse)/dtheta = -sum_k gamma_k d(score_k)/dtheta with gamma the
  // in-marginal posterior; acoustic weights are constants (S2P side frozen).
  std::vector<SupervisedPair> weighted;
  weighted.reserve(K);
  for (size_t k = 0; k < K; ++k) {
    if (log_is_zero(terms[k])) continue;
    double gamma = std::exp(terms[k] - lse);
    weighted.push_back({item.hypotheses.hypotheses[k].tokens, item.target,
                        weight * gamma});
  }
  grad_nll(model, weighted, grads);
  return weight * loss;
}

namespace {

TKMBatchItem subset_item(const TKMBatchItem& item,
                         const std::vector<int>& indices) {
  TKMBatchItem sub;
  sub.utt_id = item.utt_id;
  sub.target = item.target;
  sub.hypotheses.origin = item.hypotheses.origin;
  for (int idx : indices) {
    sub.hypotheses.hypotheses.push_back(item.hypotheses.hypotheses[idx]);
  }
  return sub;
}

std::vector<int> draw_subset(const TKMBatchItem& item, int n, int top_k,
                             Rng* rng) {
  if (n < 1 || n > top_k ||
      top_k > static_cast<int>(item.hypotheses.size())) {
    throw std::invalid_argument(
        "randomized_tkm_loss: need 1 <= n <= K <= |hypotheses|");
  }
  return rng->sample_without_replacement(n, top_k);
}

TKMBatchItem truncated_item(const TKMBatchItem& item, int count) {
  TKMBatchItem sub;
  sub.utt_id = item.utt_id;
  sub.target = item.target;
  sub.hypotheses.origin = item.hypotheses.origin;
  int keep = std::min<int>(count, static_cast<int>(item.hypotheses.size()));
  sub.hypotheses.hypotheses.assign(
      item.hypotheses.hypotheses.begin(),
      item.hypotheses.hypotheses.begin() + keep);
  return sub;
}

}  // namespace

double randomized_tkm_loss(const P2GModel& model, const TKMBatchItem& item,
                           int n, int top_k, Rng* rng) {
  return tkm_loss(model, subset_item(item, draw_subset(item, n, top_k, rng)));
}

double randomized_tkm_loss_grad(const P2GModel& model, const TKMBatchItem& item,
                                int n, int top_k, Rng* rng, double weight,
                                P2GParams* grads) {
  return tkm_loss_grad(model, subset_item(item, draw_subset(item, n, top_k, rng)),
                       weight, grads);
}

std::vector<Candidate> tkm_decode(const P2GModel& model,
                                  const HypothesisSet& hyps, int beam_size,
                                  int max_len) {
  if (beam_size < 1) {
    throw std::invalid_argument("tkm_decode: beam_size must be >= 1");
  }
  std::vector<double> logw = renormalize_logweights(hyps);

  struct Accum {
    double logscore = kLogZero;
    std::vector<int> provenance;
  };
  std::map<std::vector<int>, Accum> pool;
  for (size_t k = 0; k < hyps.size(); ++k) {
    if (log_is_zero(logw[k])) continue;
    auto beams = beam_decode(model, hyps.hypotheses[k].tokens, beam_size,
                             max_len);
    for (const auto& b : beams) {
      Accum& acc = pool[b.tokens];
      acc.logscore = log_add(acc.logscore, logw[k] + b.logprob);
      acc.provenance.push_back(static_cast<int>(k));
    }
  }
  if (pool.empty()) {
    throw std::runtime_error("tkm_decode: no candidates produced");
  }

  std::vector<Candidate> out;
  out.reserve(pool.size());
  for (auto& [tokens, acc] : pool) {
    Candidate c;
    c.tokens = tokens;
    c.tkm_logscore = acc.logscore;
    c.provenance = std::move(acc.provenance);
    out.push_back(std::move(c));
  }
  std::sort(out.begin(), out.end(), [](const Candidate& a, const Candidate& b) {
    if (a.tkm_logscore != b.tkm_logscore) {
      return a.tkm_logscore > b.tkm_logscore;
    }
    return a.tokens < b.tokens;
  });
  if (static_cast<int>(out.size()) > beam_size) out.resize(beam_size);
  return out;
}

std::vector<Candidate> exact_rescore(const P2GModel& model,
                                     const HypothesisSet& hyps,
                                     const std::vector<Candidate>& candidates) {
  std::vector<double> logw = renormalize_logweights(hyps);
  std::vector<Candidate> out;
  out.reserve(candidates.size());
  for (const Candidate& c : candidates) {
    Candidate r;
    r.tokens = c.tokens;
    double lse = kLogZero;
    for (size_t k = 0; k < hyps.size(); ++k) {
      if (log_is_zero(logw[k])) continue;
      lse = log_add(lse, logw[k] + score_sequence(model,
                                                  hyps.hypotheses[k].tokens,
                                                  r.tokens));
      r.provenance.push_back(static_cast<int>(k));
    }
    r.tkm_logscore = lse;
    out.push_back(std::move(r));
  }
  std::sort(out.begin(), out.end(), [](const Candidate& a, const Candidate& b) {
    if (a.tkm_logscore != b.tkm_logscore) {
      return a.tkm_logscore > b.tkm_logscore;
    }
    return a.tokens < b.tokens;
  });
  return out;
}

std::vector<Candidate> rescore_with_lm(
    const std::vector<Candidate>& candidates, const NGramLM& lm, double lambda,
    double beta, const std::vector<std::string>& grapheme_inventory) {
  if (!std::isfinite(lambda) || !std::isfinite(beta)) {
    throw std::invalid_argument("rescore_with_lm: non-finite lambda/beta");
  }
  std::vector<Candidate> out = candidates;
  for (Candidate& c : out) {
    std::vector<std::string> words;
    words.reserve(c.tokens.size());
    for (int t : c.tokens) words.push_back(grapheme_inventory.at(t));
    c.lm_logscore = lm_logprob(lm, words);
    c.combined_logscore = c.tkm_logscore + lambda * (*c.lm_logscore) +
                          beta * static_cast<double>(words.size());
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const Candidate& a, const Candidate& b) {
                     return *a.combined_logscore > *b.combined_logscore;
                   });
  return out;
}

TrainTrace train_marginal_with_dev(P2GModel* model,
                                   std::span<const TKMBatchItem> items,
                                   int top_k, int randomized_n,
                                   const TrainOptions& opts,
                                   const DevLossFn& dev_loss) {
  if (items.empty()) {
    throw std::invalid_argument("train_marginal: empty dataset");
  }
  if (top_k < 1 || randomized_n < 0 || randomized_n > top_k) {
    throw std::invalid_argument("train_marginal: need 0 <= n <= K, K >= 1");
  }

  BatchGradFn batch_grad = [=](std::span<const int> batch, int epoch,
                               P2GParams* grads) {
    double loss = 0.0;
    int tokens = 0;
    for (int idx : batch) {
      const TKMBatchItem& item = items[idx];
      const int avail = static_cast<int>(item.hypotheses.size());
      const int k_eff = std::min(top_k, avail);
      if (randomized_n > 0 && randomized_n < k_eff) {
        Rng rng(mix_seed(opts.seed, hash_string(item.utt_id),
                         static_cast<uint64_t>(epoch)));
        loss += randomized_tkm_loss_grad(*model, item, randomized_n, k_eff,
                                         &rng, 1.0, grads);
      } else {
        loss += tkm_loss_grad(*model, truncated_item(item, k_eff), 1.0, grads);
      }
      tokens += static_cast<int>(item.target.size()) + 1;
    }
    return std::make_pair(loss, tokens);
  };

  return train_loop(model, static_cast<int>(items.size()), opts, batch_grad,
                    dev_loss);
}

TrainTrace train_marginal(P2GModel* model, std::span<const TKMBatchItem> items,
                          int top_k, int randomized_n,
                          std::span<const TKMBatchItem> dev_items,
                          const TrainOptions& opts) {
  // Dev loss without randomness: top-n hypotheses for randomized training,
  // the full top-K otherwise.
  const int dev_k = randomized_n > 0 ? randomized_n : top_k;
  DevLossFn dev = [=, &items](const P2GModel& m) {
    std::span<const TKMBatchItem> eval_items =
        dev_items.empty() ? items : dev_items;
    double loss = 0.0;
    int tokens = 0;
    for (const TKMBatchItem& item : eval_items) {
      loss += tkm_loss(m, truncated_item(item, dev_k));
      tokens += static_cast<int>(item.target.size()) + 1;
    }
    return loss / std::max(1, tokens);
  };
  return train_marginal_with_dev(model, items, top_k, randomized_n, opts, dev);
}

}  // namespace p2g
