// p2g/frame-logits.h

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

#ifndef P2G_FRAME_LOGITS_H_
#define P2G_FRAME_LOGITS_H_

#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace p2g {

// Frame-level log-posteriors over the phoneme inventory plus a blank column.
// This is the interface that stands in for speech input: every downstream
// decoder sees only this. Immutable after construction; safe to share across
// worker threads.
struct FrameLogits {
  std::string utt_id;
  std::vector<std::string> inventory;  // phoneme identifiers, blank excluded
  int blank_index = 0;                 // column of the blank symbol
  Eigen::MatrixXd log_probs;           // T x (V+1), natural log, rows sum to 1

  int num_frames() const { return static_cast<int>(log_probs.rows()); }
  int num_phonemes() const { return static_cast<int>(inventory.size()); }
  int num_symbols() const { return num_phonemes() + 1; }

  // inventory index <-> matrix column
  int column_of_phoneme(int p) const { return p < blank_index ? p : p + 1; }
  int phoneme_of_column(int c) const {
    return c == blank_index ? -1 : (c < blank_index ? c : c - 1);
  }

  double log_prob(int t, int column) const { return log_probs(t, column); }

  // Checks T >= 1, V >= 1, blank_index in range and per-row normalization
  // (sum of exponentials within 1e-9 of 1). Throws std::invalid_argument.
  void validate() const;
};

// JSON Lines record:
// {"utt_id": ..., "inventory": [...], "blank_index": n, "frames": [[...],...]}
nlohmann::json frame_logits_to_json(const FrameLogits& fl);
FrameLogits frame_logits_from_json(const nlohmann::json& record);

}  // namespace p2g

#endif  // P2G_FRAME_LOGITS_H_
