// p2g/ctc-lattice.cc

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

#include "p2g/ctc-lattice.h"

#include <algorithm>
#include <map>
#include <set>
#include <stdexcept>

#include "p2g/logmath.h"
#include "p2g/rng.h"

namespace p2g {

bool hypothesis_less(const PhonemeHypothesis& a, const PhonemeHypothesis& b) {
  if (a.acoustic_logprob != b.acoustic_logprob) {
    return a.acoustic_logprob > b.acoustic_logprob;
  }
  return a.tokens < b.tokens;
}

void sort_hypotheses(std::vector<PhonemeHypothesis>* hyps) {
  std::sort(hyps->begin(), hyps->end(), hypothesis_less);
}

std::vector<int> collapse_path(const std::vector<int>& path,
                               int blank_symbol) {
  std::vector<int> out;
  out.reserve(path.size());
  int prev = blank_symbol;
  bool first = true;
  for (int sym : path) {
    if (!first && sym == prev) continue;  // merge repeats first
    first = false;
    prev = sym;
    if (sym != blank_symbol) out.push_back(sym);
  }
  return out;
}

namespace {

void check_phonemes(const FrameLogits& fl, const std::vector<int>& phonemes) {
  for (int p : phonemes) {
    if (p < 0 || p >= fl.num_phonemes()) {
      throw std::invalid_argument(
          "phoneme id " + std::to_string(p) +
          " outside inventory of size " + std::to_string(fl.num_phonemes()));
    }
  }
}

}  // namespace

double ctc_sequence_logprob(const FrameLogits& fl,
                            const std::vector<int>& phonemes) {
  check_phonemes(fl, phonemes);
  const int T = fl.num_frames();
  const int L = static_cast<int>(phonemes.size());

  if (L == 0) {
    double lp = 0.0;
    for (int t = 0; t < T; ++t) lp += fl.log_prob(t, fl.blank_index);
    return lp;
  }

  // Forward over the blank-augmented sequence b l1 b l2 ... lL b (length S).
  const int S = 2 * L + 1;
  auto label_col = [&](int s) {
    return s % 2 == 0 ? fl.blank_index : fl.column_of_phoneme(phonemes[s / 2]);
  };

  std::vector<double> alpha(S, kLogZero), next(S, kLogZero);
  alpha[0] = fl.log_prob(0, fl.blank_index);
  alpha[1] = fl.log_prob(0, label_col(1));

  for (int t = 1; t < T; ++t) {
    for (int s = 0; s < S; ++s) {
      double acc = alpha[s];
      if (s >= 1) acc = log_add(acc, alpha[s - 1]);
      // Skip the gap blank only between distinct labels.
      if (s >= 2 && s % 2 == 1 && label_col(s) != label_col(s - 2)) {
        acc = log_add(acc, alpha[s - 2]);
      }
      next[s] = log_is_zero(acc) ? kLogZero : acc + fl.log_prob(t, label_col(s));
    }
    alpha.swap(next);
  }

  double total = log_add(alpha[S - 1], alpha[S - 2]);
  return log_is_zero(total) ? kLogZero : total;
}

HypothesisSet prefix_beam_search(const FrameLogits& fl, int beam_size,
                                 int max_collapsed_len) {
  if (beam_size < 1) {
    throw std::invalid_argument("prefix_beam_search: beam_size must be >= 1");
  }
  const int T = fl.num_frames();
  const int V = fl.num_phonemes();

  struct PrefixProb {
    double blank = kLogZero;  // mass of paths ending in blank
    double label = kLogZero;  // mass of paths ending in the last label
    double total() const { return log_add(blank, label); }
  };

  // std::map keyed on the token vector gives deterministic (lexicographic)
  // iteration, which fixes all pruning tie-breaks.
  using Beam = std::map<std::vector<int>, PrefixProb>;
  Beam beam;
  beam[{}] = PrefixProb{0.0, kLogZero};  // empty prefix, probability 1

  HypothesisSet result;
  result.origin = HypothesisOrigin::kBeam;

  for (int t = 0; t < T; ++t) {
    Beam next;
    for (const auto& [prefix, pp] : beam) {
      const double total = pp.total();
      // Blank keeps the prefix as-is.
      {
        double add = total + fl.log_prob(t, fl.blank_index);
        PrefixProb& np = next[prefix];
        np.blank = log_add(np.blank, add);
      }
      const int last = prefix.empty() ? -1 : prefix.back();
      for (int p = 0; p < V; ++p) {
        const double lp = fl.log_prob(t, fl.column_of_phoneme(p));
        if (p == last) {
          // Same label again merges into the existing prefix...
          {
            PrefixProb& np = next[prefix];
            np.label = log_add(np.label, pp.label + lp);
          }
          // ...unless a blank intervened, which starts a new occurrence.
          if (!log_is_zero(pp.blank)) {
            std::vector<int> ext = prefix;
            ext.push_back(p);
            if (max_collapsed_len >= 0 &&
                static_cast<int>(ext.size()) > max_collapsed_len) {
              ++result.dropped_overlength;
            } else {
              PrefixProb& np = next[ext];
              np.label = log_add(np.label, pp.blank + lp);
            }
          }
        } else {
          std::vector<int> ext = prefix;
          ext.push_back(p);
          if (max_collapsed_len >= 0 &&
              static_cast<int>(ext.size()) > max_collapsed_len) {
            ++result.dropped_overlength;
          } else {
            PrefixProb& np = next[ext];
            np.label = log_add(np.label, total + lp);
          }
        }
      }
    }

    // Prune to the beam: by total probability, ties lexicographic (map order).
    std::vector<std::pair<const std::vector<int>*, double>> ranked;
    ranked.reserve(next.size());
    for (const auto& [prefix, pp] : next) {
      double total = pp.total();
      if (log_is_zero(total)) continue;
      ranked.emplace_back(&prefix, total);
    }
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) {
                       return a.second > b.second;
                     });
    if (static_cast<int>(ranked.size()) > beam_size) {
      ranked.resize(beam_size);
    }
    Beam pruned;
    for (const auto& [prefix, total] : ranked) {
      (void)total;
      pruned[*prefix] = next[*prefix];
    }
    beam.swap(pruned);
  }

  result.hypotheses.reserve(beam.size());
  for (const auto& [prefix, pp] : beam) {
    double total = pp.total();
    if (log_is_zero(total)) continue;
    result.hypotheses.push_back({prefix, total});
  }
  sort_hypotheses(&result.hypotheses);
  if (static_cast<int>(result.hypotheses.size()) > beam_size) {
    result.hypotheses.resize(beam_size);
  }
  return result;
}

HypothesisSet sample_hypotheses(const FrameLogits& fl, int num_samples,
                                uint64_t seed, int max_collapsed_len,
                                std::map<std::vector<int>, int>* counts) {
  if (num_samples < 0) {
    throw std::invalid_argument("sample_hypotheses: negative sample count");
  }
  const int T = fl.num_frames();
  const int W = fl.num_symbols();

  // Per-frame probabilities once; rows are softmax-normalized by contract.
  Eigen::MatrixXd probs = fl.log_probs.array().exp();

  Rng rng(seed);
  std::set<std::vector<int>> seen;
  HypothesisSet result;
  result.origin = HypothesisOrigin::kSampled;

  std::vector<int> path(T);
  for (int r = 0; r < num_samples; ++r) {
    for (int t = 0; t < T; ++t) {
      double u = rng.uniform();
      double cum = 0.0;
      int pick = W - 1;
      for (int c = 0; c < W; ++c) {
        cum += probs(t, c);
        if (u < cum) {
          pick = c;
          break;
        }
      }
      path[t] = pick;
    }
    std::vector<int> collapsed_cols = collapse_path(path, fl.blank_index);
    std::vector<int> tokens;
    tokens.reserve(collapsed_cols.size());
    for (int c : collapsed_cols) tokens.push_back(fl.phoneme_of_column(c));
    if (counts != nullptr) ++(*counts)[tokens];
    if (max_collapsed_len >= 0 &&
        static_cast<int>(tokens.size()) > max_collapsed_len) {
      ++result.dropped_overlength;
      continue;
    }
    seen.insert(std::move(tokens));
  }

  result.hypotheses.reserve(seen.size());
  for (const auto& tokens : seen) {
    // Exact CTC probability, not the per-path product: beam and sampled sets
    // then share one probability semantics.
    result.hypotheses.push_back({tokens, ctc_sequence_logprob(fl, tokens)});
  }
  sort_hypotheses(&result.hypotheses);
  return result;
}

std::vector<int> greedy_collapse(const FrameLogits& fl) {
  const int T = fl.num_frames();
  std::vector<int> path(T);
  for (int t = 0; t < T; ++t) {
    int best = 0;
    fl.log_probs.row(t).maxCoeff(&best);
    path[t] = best;
  }
  std::vector<int> cols = collapse_path(path, fl.blank_index);
  std::vector<int> tokens;
  tokens.reserve(cols.size());
  for (int c : cols) tokens.push_back(fl.phoneme_of_column(c));
  return tokens;
}

}  // namespace p2g
