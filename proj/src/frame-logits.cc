// p2g/frame-logits.cc

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

#include "p2g/frame-logits.h"

#include <cmath>
#include <stdexcept>

#include "p2g/errors.h"

namespace p2g {

void FrameLogits::validate() const {
  if (log_probs.rows() < 1) {
    throw std::invalid_argument("FrameLogits: need at least one frame");
  }
  if (inventory.empty()) {
    throw std::invalid_argument("FrameLogits: empty phoneme inventory");
  }
  if (log_probs.cols() != num_symbols()) {
    throw std::invalid_argument("FrameLogits: frame width != inventory + 1");
  }
  if (blank_index < 0 || blank_index >= num_symbols()) {
    throw std::invalid_argument("FrameLogits: blank_index out of range");
  }
  for (int t = 0; t < num_frames(); ++t) {
    double sum = log_probs.row(t).array().exp().sum();
    if (std::abs(sum - 1.0) > 1e-9) {
      throw std::invalid_argument("FrameLogits: row " + std::to_string(t) +
                                  " not normalized (sum=" +
                                  std::to_string(sum) + ")");
    }
  }
}

nlohmann::json frame_logits_to_json(const FrameLogits& fl) {
  nlohmann::json frames = nlohmann::json::array();
  for (int t = 0; t < fl.num_frames(); ++t) {
    nlohmann::json row = nlohmann::json::array();
    for (int c = 0; c < fl.num_symbols(); ++c) row.push_back(fl.log_probs(t, c));
    frames.push_back(std::move(row));
  }
  return nlohmann::json{{"utt_id", fl.utt_id},
                        {"inventory", fl.inventory},
                        {"blank_index", fl.blank_index},
                        {"frames", std::move(frames)}};
}

FrameLogits frame_logits_from_json(const nlohmann::json& record) {
  FrameLogits fl;
  try {
    fl.utt_id = record.at("utt_id").get<std::string>();
    fl.inventory = record.at("inventory").get<std::vector<std::string>>();
    fl.blank_index = record.at("blank_index").get<int>();
    const auto& frames = record.at("frames");
    if (!frames.is_array() || frames.empty()) {
      throw SchemaError("frame_logits: 'frames' must be a nonempty array");
    }
    const int T = static_cast<int>(frames.size());
    const int W = static_cast<int>(frames.at(0).size());
    fl.log_probs.resize(T, W);
    for (int t = 0; t < T; ++t) {
      const auto& row = frames.at(t);
      if (static_cast<int>(row.size()) != W) {
        throw SchemaError("frame_logits: ragged 'frames' rows");
      }
      for (int c = 0; c < W; ++c) fl.log_probs(t, c) = row.at(c).get<double>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("frame_logits record: ") + e.what());
  }
  try {
    fl.validate();
  } catch (const std::invalid_argument& e) {
    throw SchemaError(std::string("frame_logits record: ") + e.what());
  }
  return fl;
}

}  // namespace p2g
