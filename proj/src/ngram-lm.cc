// p2g/ngram-lm.cc

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

#include "p2g/ngram-lm.h"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "p2g/errors.h"

namespace p2g {

namespace {

std::string context_key(std::span<const int> context) {
  std::string key;
  for (size_t i = 0; i < context.size(); ++i) {
    if (i) key += ',';
    key += std::to_string(context[i]);
  }
  return key;
}

}  // namespace

int NGramLM::word_id(const std::string& w) const {
  auto it = ids_.find(w);
  return it == ids_.end() ? ids_.at(kUnk) : it->second;
}

NGramLM NGramLM::train(std::span<const std::vector<std::string>> corpus,
                       const Options& options) {
  if (options.order < 1) throw ConfigError("ngram: order must be >= 1");
  if (options.add_k <= 0) throw ConfigError("ngram: add_k must be > 0");
  if (corpus.empty()) throw std::invalid_argument("ngram: empty corpus");

  NGramLM lm;
  lm.options_ = options;

  for (const auto& sent : corpus) {
    for (const auto& w : sent) {
      if (!lm.ids_.count(w)) {
        lm.ids_[w] = static_cast<int>(lm.vocab_.size());
        lm.vocab_.push_back(w);
      }
    }
  }
  if (!lm.ids_.count(kUnk)) {
    lm.ids_[kUnk] = static_cast<int>(lm.vocab_.size());
    lm.vocab_.push_back(kUnk);
  }
  lm.bos_id_ = static_cast<int>(lm.vocab_.size());

  lm.tables_.resize(options.order);
  for (const auto& sent : corpus) {
    std::vector<int> padded(options.order - 1, lm.bos_id_);
    for (const auto& w : sent) padded.push_back(lm.word_id(w));
    const int n0 = options.order - 1;
    for (size_t i = n0; i < padded.size(); ++i) {
      int word = padded[i];
      for (int len = 0; len < options.order; ++len) {
        std::span<const int> ctx(padded.data() + i - len,
                                 static_cast<size_t>(len));
        ContextCounts& cc = lm.tables_[len][context_key(ctx)];
        ++cc.continuations[word];
        ++cc.total;
      }
    }
  }
  return lm;
}

double NGramLM::conditional_logprob(std::span<const int> context,
                                    int word) const {
  const double k = options_.add_k;
  const double V = static_cast<double>(vocab_.size());
  // Longest seen context wins; unseen contexts back off whole-distribution.
  for (int len = static_cast<int>(context.size()); len >= 0; --len) {
    std::span<const int> ctx = context.subspan(context.size() - len);
    const auto& table = tables_[len];
    auto it = table.find(context_key(ctx));
    if (it == table.end() || it->second.total == 0) continue;
    const ContextCounts& cc = it->second;
    auto cit = cc.continuations.find(word);
    int64_t count = cit == cc.continuations.end() ? 0 : cit->second;
    return std::log((static_cast<double>(count) + k) /
                    (static_cast<double>(cc.total) + k * V));
  }
  // No unigram table entry can only happen for an empty model.
  return std::log(k / (k * V));
}

double NGramLM::word_logprob(std::span<const std::string> context,
                             const std::string& word) const {
  std::vector<int> ctx;
  size_t need = static_cast<size_t>(options_.order - 1);
  size_t have = context.size() > need ? need : context.size();
  for (size_t i = 0; i < need - have; ++i) ctx.push_back(bos_id_);
  for (size_t i = context.size() - have; i < context.size(); ++i) {
    ctx.push_back(word_id(context[i]));
  }
  return conditional_logprob(ctx, word_id(word));
}

double NGramLM::sequence_logprob(std::span<const std::string> words) const {
  double total = 0.0;
  for (size_t i = 0; i < words.size(); ++i) {
    total += word_logprob(words.subspan(0, i), words[i]);
  }
  return total;
}

double NGramLM::perplexity(
    std::span<const std::vector<std::string>> corpus) const {
  double logprob = 0.0;
  int64_t tokens = 0;
  for (const auto& sent : corpus) {
    logprob += sequence_logprob(sent);
    tokens += static_cast<int64_t>(sent.size());
  }
  if (tokens == 0) return 1.0;
  return std::exp(-logprob / static_cast<double>(tokens));
}

double lm_logprob(const NGramLM& lm, const std::vector<std::string>& words) {
  return lm.sequence_logprob(words);
}

nlohmann::json NGramLM::to_json() const {
  nlohmann::json tables = nlohmann::json::array();
  for (const auto& table : tables_) {
    nlohmann::json tj = nlohmann::json::object();
    for (const auto& [key, cc] : table) {
      nlohmann::json conts = nlohmann::json::object();
      for (const auto& [word, count] : cc.continuations) {
        conts[std::to_string(word)] = count;
      }
      tj[key.empty() ? "" : key] = {{"total", cc.total},
                                    {"continuations", std::move(conts)}};
    }
    tables.push_back(std::move(tj));
  }
  return nlohmann::json{{"format", "p2g-ngram"},
                        {"version", 1},
                        {"order", options_.order},
                        {"add_k", options_.add_k},
                        {"vocab", vocab_},
                        {"tables", std::move(tables)}};
}

NGramLM NGramLM::from_json(const nlohmann::json& doc) {
  NGramLM lm;
  try {
    if (doc.value("format", "") != "p2g-ngram" || doc.value("version", 0) != 1) {
      throw SchemaError("ngram: unknown format/version");
    }
    lm.options_.order = doc.at("order").get<int>();
    lm.options_.add_k = doc.at("add_k").get<double>();
    lm.vocab_ = doc.at("vocab").get<std::vector<std::string>>();
    for (size_t i = 0; i < lm.vocab_.size(); ++i) {
      lm.ids_[lm.vocab_[i]] = static_cast<int>(i);
    }
    lm.bos_id_ = static_cast<int>(lm.vocab_.size());
    const auto& tables = doc.at("tables");
    lm.tables_.resize(lm.options_.order);
    if (static_cast<int>(tables.size()) != lm.options_.order) {
      throw SchemaError("ngram: table count != order");
    }
    for (int len = 0; len < lm.options_.order; ++len) {
      for (const auto& [key, entry] : tables.at(len).items()) {
        ContextCounts cc;
        cc.total = entry.at("total").get<int64_t>();
        for (const auto& [word, count] :
             entry.at("continuations").items()) {
          cc.continuations[std::stoi(word)] = count.get<int64_t>();
        }
        lm.tables_[len][key] = std::move(cc);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("ngram: ") + e.what());
  }
  return lm;
}

}  // namespace p2g
