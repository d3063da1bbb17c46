// p2g/eval.h

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

#ifndef P2G_EVAL_H_
#define P2G_EVAL_H_

#include <span>
#include <string>
#include <vector>

namespace p2g {

struct ErrorBreakdown {
  int substitutions = 0;
  int insertions = 0;
  int deletions = 0;
  int reference_length = 0;

  int total_errors() const { return substitutions + insertions + deletions; }
  // Empty reference: 0 when the hypothesis is empty too, +inf otherwise.
  double rate() const;
};

// Minimal edit distance with unit costs. When alignments tie, the backtrace
// prefers substitution over insertion over deletion.
ErrorBreakdown edit_errors(std::span<const int> reference,
                           std::span<const int> hypothesis);

struct UttTokens {
  std::string utt_id;
  std::vector<int> tokens;
};

// Micro-averaged corpus totals: (sum S + I + D) / (sum N_ref). Inputs must be
// aligned by utt_id pairwise; mismatch throws std::invalid_argument.
ErrorBreakdown corpus_errors(std::span<const UttTokens> refs,
                             std::span<const UttTokens> hyps);

struct MatchedPairsResult {
  double p_value = 1.0;
  double z = 0.0;
  // Zero variance with nonzero mean shift: p forced to 0, flagged here.
  bool degenerate = false;
};

// Matched-pairs sentence test under the normal approximation: per-utterance
// error differences d_i, z = mean(d) / (stddev(d)/sqrt(N)), two-tailed tail
// probability. All-zero differences give p = 1.
MatchedPairsResult matched_pairs_test(std::span<const int> errors_a,
                                      std::span<const int> errors_b);

}  // namespace p2g

#endif  // P2G_EVAL_H_
