// p2g/ngram-lm.h

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

#ifndef P2G_NGRAM_LM_H_
#define P2G_NGRAM_LM_H_

#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

namespace p2g {

// Word-level n-gram model with add-k smoothing. Contexts that were never
// observed fall back to the next shorter context (the whole conditional
// distribution backs off, so per-context normalization over the vocabulary,
// unknown word included, is exact). Unknown words map to <unk>.
// Immutable after training; safe for concurrent scoring.
class NGramLM {
 public:
  struct Options {
    int order = 4;
    double add_k = 1.0;
  };

  static NGramLM train(std::span<const std::vector<std::string>> corpus,
                       const Options& options);

  int order() const { return options_.order; }
  double add_k() const { return options_.add_k; }
  const std::vector<std::string>& vocabulary() const { return vocab_; }

  // log P(word | context words); unknowns (word or context) map to <unk>.
  double word_logprob(std::span<const std::string> context,
                      const std::string& word) const;

  // Sum of per-word conditional log-probs with <s> left-padding. Empty
  // sequence scores 0 (empty product); no end-of-sentence event.
  double sequence_logprob(std::span<const std::string> words) const;

  double perplexity(std::span<const std::vector<std::string>> corpus) const;

  nlohmann::json to_json() const;
  static NGramLM from_json(const nlohmann::json& doc);

  static constexpr const char* kUnk = "<unk>";

 private:
  NGramLM() = default;

  int word_id(const std::string& w) const;  // maps OOV to <unk>
  double conditional_logprob(std::span<const int> context, int word) const;

  struct ContextCounts {
    std::map<int, int64_t> continuations;
    int64_t total = 0;
  };

  Options options_;
  std::vector<std::string> vocab_;  // words + <unk>; <s> is separate
  std::unordered_map<std::string, int> ids_;
  int bos_id_ = -1;  // context-only sentinel, not part of the vocabulary
  // tables_[len] maps a length-len context key to its continuation counts.
  std::vector<std::map<std::string, ContextCounts>> tables_;
};

// Convenience form mirroring the scoring interface used in re-scoring.
double lm_logprob(const NGramLM& lm, const std::vector<std::string>& words);

}  // namespace p2g

#endif  // P2G_NGRAM_LM_H_
