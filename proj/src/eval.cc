// p2g/eval.cc

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

#include "p2g/eval.h"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace p2g {

double ErrorBreakdown::rate() const {
  if (reference_length == 0) {
    return total_errors() == 0 ? 0.0
                               : std::numeric_limits<double>::infinity();
  }
  return static_cast<double>(total_errors()) / reference_length;
}

ErrorBreakdown edit_errors(std::span<const int> reference,
                           std::span<const int> hypothesis) {
  const int n = static_cast<int>(reference.size());
  const int m = static_cast<int>(hypothesis.size());

  // cost[i][j]: edit distance between reference[:i] and hypothesis[:j]
  std::vector<std::vector<int>> cost(n + 1, std::vector<int>(m + 1, 0));
  for (int i = 0; i <= n; ++i) cost[i][0] = i;
  for (int j = 0; j <= m; ++j) cost[0][j] = j;
  for (int i = 1; i <= n; ++i) {
    for (int j = 1; j <= m; ++j) {
      int diag = cost[i - 1][j - 1] + (reference[i - 1] != hypothesis[j - 1]);
      int ins = cost[i][j - 1] + 1;
      int del = cost[i - 1][j] + 1;
      cost[i][j] = std::min({diag, ins, del});
    }
  }

  // Backtrace, preferring substitution over insertion over deletion on ties.
  ErrorBreakdown eb;
  eb.reference_length = n;
  int i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 &&
        cost[i][j] ==
            cost[i - 1][j - 1] + (reference[i - 1] != hypothesis[j - 1])) {
      if (reference[i - 1] != hypothesis[j - 1]) ++eb.substitutions;
      --i;
      --j;
    } else if (j > 0 && cost[i][j] == cost[i][j - 1] + 1) {
      ++eb.insertions;
      --j;
    } else {
      ++eb.deletions;
      --i;
    }
  }
  return eb;
}

ErrorBreakdown corpus_errors(std::span<const UttTokens> refs,
                             std::span<const UttTokens> hyps) {
  if (refs.size() != hyps.size()) {
    throw std::invalid_argument("corpus_errors: count mismatch");
  }
  ErrorBreakdown total;
  for (size_t i = 0; i < refs.size(); ++i) {
    if (refs[i].utt_id != hyps[i].utt_id) {
      throw std::invalid_argument("corpus_errors: utt_id mismatch at index " +
                                  std::to_string(i) + " (" + refs[i].utt_id +
                                  " vs " + hyps[i].utt_id + ")");
    }
    ErrorBreakdown eb = edit_errors(refs[i].tokens, hyps[i].tokens);
    total.substitutions += eb.substitutions;
    total.insertions += eb.insertions;
    total.deletions += eb.deletions;
    total.reference_length += eb.reference_length;
  }
  return total;
}

MatchedPairsResult matched_pairs_test(std::span<const int> errors_a,
                                      std::span<const int> errors_b) {
  if (errors_a.size() != errors_b.size()) {
    throw std::invalid_argument("matched_pairs_test: length mismatch");
  }
  const int n = static_cast<int>(errors_a.size());
  if (n < 2) {
    throw std::invalid_argument("matched_pairs_test: need N >= 2");
  }

  double mean = 0.0;
  for (int i = 0; i < n; ++i) mean += errors_a[i] - errors_b[i];
  mean /= n;

  double ss = 0.0;
  bool all_zero = true;
  for (int i = 0; i < n; ++i) {
    double d = errors_a[i] - errors_b[i];
    if (d != 0.0) all_zero = false;
    ss += (d - mean) * (d - mean);
  }
  MatchedPairsResult res;
  if (all_zero) {
    res.p_value = 1.0;
    res.z = 0.0;
    return res;
  }
  double sd = std::sqrt(ss / (n - 1));  // sample stddev
  if (sd == 0.0) {
    res.p_value = 0.0;
    res.z = mean > 0 ? std::numeric_limits<double>::infinity()
                     : -std::numeric_limits<double>::infinity();
    res.degenerate = true;
    return res;
  }
  res.z = mean / (sd / std::sqrt(static_cast<double>(n)));
  res.p_value = std::erfc(std::abs(res.z) / std::sqrt(2.0));
  return res;
}

}  // namespace p2g
