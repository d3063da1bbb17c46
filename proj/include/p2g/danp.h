// p2g/danp.h

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

#ifndef P2G_DANP_H_
#define P2G_DANP_H_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "p2g/p2g-model.h"
#include "p2g/synth-s2p.h"

namespace p2g {

// Noisy-phoneme training data: hypothesized phoneme sequences paired with the
// utterance's reference text.
struct AugmentedItem {
  std::string utt_id;
  std::vector<int> phonemes;  // hypothesized (noisy) phoneme sequence
  std::vector<int> target;    // reference text tokens (word ids)
  enum class Source { kBeam, kSampled, kClean } source = Source::kBeam;
  int variant = 0;  // emission variant that produced it (0 = primary)
};

struct AugmentedStats {
  int64_t beam_raw = 0;
  int64_t sampled_raw = 0;
  int64_t clean_raw = 0;
  int64_t kept = 0;
  double dedup_ratio = 0.0;  // kept / raw
};

struct AugmentedDataset {
  std::vector<AugmentedItem> items;
  AugmentedStats stats;
};

struct DanpConfig {
  int beam_size = 8;     // top-K hypotheses per emission variant; 0 disables
  int num_samples = 0;   // stochastic path draws per variant; 0 disables
  bool include_clean = false;  // add the reference pronunciation pair
  // Additional emission variants ("checkpoints"): re-emissions of each
  // utterance under different noise seeds/scales, giving diverse noisy views.
  std::vector<NoiseSpec> checkpoints;
  int max_phoneme_len = -1;  // hypothesis length budget; < 0 disables
};

// Per utterance: beam and sampled hypotheses from its own FrameLogits
// (variant 0) and from every checkpoint re-emission, paired with reference
// tokens, de-duplicated on the phoneme sequence per utterance (first source
// wins), deterministic per seed. Utterances must carry frame_logits.
AugmentedDataset build_augmented(const Lexicon& lexicon,
                                 std::span<const Utterance> corpus,
                                 const DanpConfig& config, uint64_t seed);

// Cross-entropy training on the augmented pairs (each pair weighted equally).
TrainTrace train_danp(P2GModel* model, const AugmentedDataset& dataset,
                      std::span<const SupervisedPair> dev_items,
                      const TrainOptions& opts);

// JSON Lines records:
// {"utt_id", "phonemes": [...], "target": [...], "source", "variant"}
nlohmann::json augmented_item_to_json(const Lexicon& lexicon,
                                      const AugmentedItem& item);
AugmentedItem augmented_item_from_json(const Lexicon& lexicon,
                                       const nlohmann::json& record);

}  // namespace p2g

#endif  // P2G_DANP_H_
