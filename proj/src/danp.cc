// p2g/danp.cc

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

#include "p2g/danp.h"

#include <set>
#include <stdexcept>

#include "p2g/ctc-lattice.h"
#include "p2g/errors.h"
#include "p2g/rng.h"

namespace p2g {

namespace {

const char* source_name(AugmentedItem::Source s) {
  switch (s) {
    case AugmentedItem::Source::kBeam:
      return "beam";
    case AugmentedItem::Source::kSampled:
      return "sampled";
    case AugmentedItem::Source::kClean:
      return "clean";
  }
  return "beam";
}

AugmentedItem::Source source_from_name(const std::string& name) {
  if (name == "beam") return AugmentedItem::Source::kBeam;
  if (name == "sampled") return AugmentedItem::Source::kSampled;
  if (name == "clean") return AugmentedItem::Source::kClean;
  throw SchemaError("augmented item: unknown source '" + name + "'");
}

}  // namespace

AugmentedDataset build_augmented(const Lexicon& lexicon,
                                 std::span<const Utterance> corpus,
                                 const DanpConfig& config, uint64_t seed) {
  if (corpus.empty()) {
    throw std::invalid_argument("build_augmented: empty corpus");
  }
  if (config.beam_size <= 0 && config.num_samples <= 0 &&
      !config.include_clean) {
    throw ConfigError("build_augmented: every augmentation scheme disabled");
  }
  for (const auto& ck : config.checkpoints) ck.validate();

  AugmentedDataset ds;
  int64_t raw = 0;

  for (const Utterance& utt : corpus) {
    if (!utt.frame_logits.has_value()) {
      throw MissingInputError("build_augmented: utterance " + utt.utt_id +
                              " has no frame logits");
    }
    std::set<std::vector<int>> seen;
    auto add = [&](std::vector<int> phonemes, AugmentedItem::Source source,
                   int variant) {
      raw += 1;
      switch (source) {
        case AugmentedItem::Source::kBeam:
          ++ds.stats.beam_raw;
          break;
        case AugmentedItem::Source::kSampled:
          ++ds.stats.sampled_raw;
          break;
        case AugmentedItem::Source::kClean:
          ++ds.stats.clean_raw;
          break;
      }
      if (!seen.insert(phonemes).second) return;
      ds.items.push_back(
          {utt.utt_id, std::move(phonemes), utt.text, source, variant});
    };

    // Variant 0 is the utterance's own emission; checkpoints re-emit.
    const int variants = 1 + static_cast<int>(config.checkpoints.size());
    for (int v = 0; v < variants; ++v) {
      FrameLogits variant_fl;
      const FrameLogits* fl = nullptr;
      if (v == 0) {
        fl = &*utt.frame_logits;
      } else {
        variant_fl =
            emit_for_utterance(lexicon, utt, config.checkpoints[v - 1]);
        fl = &variant_fl;
      }
      if (config.beam_size > 0) {
        HypothesisSet beams =
            prefix_beam_search(*fl, config.beam_size, config.max_phoneme_len);
        for (const auto& h : beams.hypotheses) {
          add(h.tokens, AugmentedItem::Source::kBeam, v);
        }
      }
      if (config.num_samples > 0) {
        HypothesisSet sampled = sample_hypotheses(
            *fl, config.num_samples,
            mix_seed(seed, hash_string(utt.utt_id), static_cast<uint64_t>(v)),
            config.max_phoneme_len);
        for (const auto& h : sampled.hypotheses) {
          add(h.tokens, AugmentedItem::Source::kSampled, v);
        }
      }
    }
    if (config.include_clean) {
      add(utt.reference_phonemes, AugmentedItem::Source::kClean, 0);
    }
  }

  ds.stats.kept = static_cast<int64_t>(ds.items.size());
  ds.stats.dedup_ratio =
      raw > 0 ? static_cast<double>(ds.stats.kept) / static_cast<double>(raw)
              : 0.0;
  return ds;
}

TrainTrace train_danp(P2GModel* model, const AugmentedDataset& dataset,
                      std::span<const SupervisedPair> dev_items,
                      const TrainOptions& opts) {
  if (dataset.items.empty()) {
    throw std::invalid_argument("train_danp: empty dataset");
  }
  std::vector<SupervisedPair> pairs;
  pairs.reserve(dataset.items.size());
  for (const auto& item : dataset.items) {
    pairs.push_back({item.phonemes, item.target, 1.0});
  }
  return train(model, pairs, dev_items, opts);
}

nlohmann::json augmented_item_to_json(const Lexicon& lexicon,
                                      const AugmentedItem& item) {
  nlohmann::json phonemes = nlohmann::json::array();
  for (int p : item.phonemes) {
    phonemes.push_back(lexicon.phoneme_inventory.at(p));
  }
  nlohmann::json target = nlohmann::json::array();
  for (int w : item.target) target.push_back(lexicon.words.at(w).word);
  return nlohmann::json{{"utt_id", item.utt_id},
                        {"phonemes", std::move(phonemes)},
                        {"target", std::move(target)},
                        {"source", source_name(item.source)},
                        {"variant", item.variant}};
}

AugmentedItem augmented_item_from_json(const Lexicon& lexicon,
                                       const nlohmann::json& record) {
  AugmentedItem item;
  try {
    item.utt_id = record.at("utt_id").get<std::string>();
    for (const auto& pn : record.at("phonemes")) {
      int id = lexicon.phoneme_id(pn.get<std::string>());
      if (id < 0) {
        throw SchemaError("augmented item: unknown phoneme " +
                          pn.get<std::string>());
      }
      item.phonemes.push_back(id);
    }
    for (const auto& w : record.at("target")) {
      int id = lexicon.word_id(w.get<std::string>());
      if (id < 0) {
        throw SchemaError("augmented item: unknown word " +
                          w.get<std::string>());
      }
      item.target.push_back(id);
    }
    item.source = source_from_name(record.at("source").get<std::string>());
    item.variant = record.at("variant").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("augmented item: ") + e.what());
  }
  return item;
}

}  // namespace p2g
