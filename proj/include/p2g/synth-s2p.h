// p2g/synth-s2p.h

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

#ifndef P2G_SYNTH_S2P_H_
#define P2G_SYNTH_S2P_H_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "p2g/frame-logits.h"

namespace p2g {

struct LexiconEntry {
  std::string word;
  std::vector<int> phonemes;  // indices into phoneme_inventory
};

// A toy language: spelled words with pronunciations over a small phoneme
// inventory. Grapheme tokens are the words themselves (word-level output
// vocabulary). Homophone pairs share a pronunciation under distinct
// spellings; word boundaries carry no marker phoneme.
struct Lexicon {
  std::vector<LexiconEntry> words;
  std::vector<std::string> phoneme_inventory;
  std::vector<std::string> grapheme_inventory;  // one token per word

  int phoneme_id(const std::string& name) const;  // -1 if unknown
  int word_id(const std::string& spelling) const;
  void validate() const;
};

struct ToyLanguageConfig {
  int num_words = 8;
  int num_phonemes = 12;
  int homophone_groups = 2;  // pairs of words sharing one pronunciation
  int pron_len_min = 2;
  int pron_len_max = 4;
};

// Deterministic for a fixed seed. Throws ConfigError on inconsistent
// configuration (e.g. more homophone pairs than words/2).
Lexicon build_toy_language(const ToyLanguageConfig& config, uint64_t seed);

struct Utterance {
  std::string utt_id;
  std::vector<int> text;                // word ids into the lexicon
  std::vector<int> reference_phonemes;  // concatenated pronunciations
  std::optional<FrameLogits> frame_logits;
};

// Word sequences follow a seeded first-order Markov chain derived from the
// lexicon contents, so every corpus drawn from the same lexicon shares the
// same skewed word statistics (that structure is what the n-gram LM later
// exploits). Word counts are uniform in [len_min, len_max]. Each utterance
// uses a seed derived from (seed, index), so generation is order-independent.
std::vector<Utterance> generate_corpus(const Lexicon& lexicon, int n_utts,
                                       int len_min, int len_max, uint64_t seed,
                                       const std::string& id_prefix = "utt");

struct NoiseSpec {
  int duration_min = 1;  // frames per phoneme
  int duration_max = 3;
  double blank_prior = 0.3;      // chance of a blank frame between phonemes
  double confusion_scale = 1.0;  // stddev of Gaussian pre-softmax noise
  uint64_t seed = 0;

  void validate() const;
};

// Simulated CTC posteriors for a phoneme sequence: each phoneme expands to a
// random duration of one-hot-scored frames, blank-dominated frames are
// interleaved between phonemes (always between identical neighbors, else with
// probability blank_prior), Gaussian noise is added to the pre-softmax scores
// and rows are log-softmax normalized. Blank is the last column.
// confusion_scale 0 yields exact one-hot rows (deterministic posteriors).
// Deterministic per (phonemes, noise, seed).
FrameLogits emit_frame_logits(const std::vector<int>& phonemes,
                              const std::vector<std::string>& inventory,
                              const NoiseSpec& noise, uint64_t seed);

// Emission for a corpus utterance with the per-utterance seed protocol used
// across the pipeline: seed = mix(noise.seed, hash(utt_id)).
FrameLogits emit_for_utterance(const Lexicon& lexicon, const Utterance& utt,
                               const NoiseSpec& noise);

// JSON forms. Corpus records: {"utt_id", "text", "phonemes": [...]} with
// text as the space-joined spelling and phonemes as identifier strings.
nlohmann::json lexicon_to_json(const Lexicon& lexicon);
Lexicon lexicon_from_json(const nlohmann::json& doc);
nlohmann::json utterance_to_json(const Lexicon& lexicon, const Utterance& utt);
Utterance utterance_from_json(const Lexicon& lexicon,
                              const nlohmann::json& record);

}  // namespace p2g

#endif  // P2G_SYNTH_S2P_H_
