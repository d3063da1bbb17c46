// p2g/synth-s2p.cc

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

#include "p2g/synth-s2p.h"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>

#include "p2g/errors.h"
#include "p2g/logmath.h"
#include "p2g/rng.h"

namespace p2g {

namespace {

constexpr double kEmissionScore = 8.0;  // pre-softmax score of the true symbol

std::string padded_name(const char* prefix, int index, int count) {
  int width = 1;
  for (int c = count - 1; c >= 10; c /= 10) ++width;
  std::ostringstream os;
  os << prefix;
  std::string digits = std::to_string(index);
  os << std::string(width > static_cast<int>(digits.size())
                        ? width - digits.size()
                        : 0,
                    '0')
     << digits;
  return os.str();
}

}  // namespace

int Lexicon::phoneme_id(const std::string& name) const {
  for (size_t i = 0; i < phoneme_inventory.size(); ++i) {
    if (phoneme_inventory[i] == name) return static_cast<int>(i);
  }
  return -1;
}

int Lexicon::word_id(const std::string& spelling) const {
  for (size_t i = 0; i < words.size(); ++i) {
    if (words[i].word == spelling) return static_cast<int>(i);
  }
  return -1;
}

void Lexicon::validate() const {
  if (words.empty()) throw std::invalid_argument("Lexicon: no words");
  if (phoneme_inventory.size() < 2) {
    throw std::invalid_argument("Lexicon: phoneme inventory too small");
  }
  if (grapheme_inventory.size() != words.size()) {
    throw std::invalid_argument("Lexicon: grapheme inventory must list words");
  }
  for (const auto& e : words) {
    if (e.phonemes.empty()) {
      throw std::invalid_argument("Lexicon: empty pronunciation for " + e.word);
    }
    for (int p : e.phonemes) {
      if (p < 0 || p >= static_cast<int>(phoneme_inventory.size())) {
        throw std::invalid_argument("Lexicon: bad phoneme id in " + e.word);
      }
    }
  }
}

Lexicon build_toy_language(const ToyLanguageConfig& config, uint64_t seed) {
  if (config.num_words < 1) throw ConfigError("toy language: need >= 1 word");
  if (config.num_phonemes < 2) {
    throw ConfigError("toy language: need >= 2 phonemes");
  }
  if (config.pron_len_min < 1 || config.pron_len_max < config.pron_len_min) {
    throw ConfigError("toy language: bad pronunciation length range");
  }
  if (config.homophone_groups * 2 > config.num_words) {
    throw ConfigError("toy language: more homophone pairs than words/2");
  }

  Rng rng(mix_seed(seed, 0xb00c));
  Lexicon lex;
  for (int p = 0; p < config.num_phonemes; ++p) {
    lex.phoneme_inventory.push_back(
        padded_name("p", p, config.num_phonemes));
  }

  // Distinct pronunciations, except inside a homophone pair. Words 2g and
  // 2g+1 of group g share a pronunciation.
  std::set<std::vector<int>> used;
  auto draw_pron = [&]() {
    for (int attempt = 0; attempt < 10000; ++attempt) {
      int len = config.pron_len_min +
                rng.uniform_int(config.pron_len_max - config.pron_len_min + 1);
      std::vector<int> pron(len);
      for (int& p : pron) p = rng.uniform_int(config.num_phonemes);
      if (used.insert(pron).second) return pron;
    }
    throw ConfigError("toy language: cannot draw enough distinct pronunciations");
  };

  for (int w = 0; w < config.num_words; ++w) {
    LexiconEntry entry;
    entry.word = padded_name("w", w, config.num_words);
    bool second_of_pair =
        w < 2 * config.homophone_groups && w % 2 == 1;
    entry.phonemes = second_of_pair ? lex.words[w - 1].phonemes : draw_pron();
    lex.words.push_back(std::move(entry));
  }
  for (const auto& e : lex.words) lex.grapheme_inventory.push_back(e.word);
  lex.validate();
  return lex;
}

namespace {

// Second-order word chain with two preferred continuations per two-word
// history. Derived from lexicon content only, so all corpora over one
// lexicon share the same text statistics. The two-word dependency is what
// the word n-gram LM later exploits (a count model recovers it exactly,
// while the small P2G decoder only approximates it).
struct WordChain {
  std::vector<double> init;                        // first word
  std::vector<std::vector<double>> trans;          // [(prev2+1)*n + prev1]
  int n = 0;

  const std::vector<double>& row(int prev2, int prev1) const {
    return trans[(prev2 + 1) * n + prev1];  // prev2 == -1 at sentence start
  }
};

WordChain word_chain_for(const Lexicon& lex) {
  std::string tag;
  for (const auto& e : lex.words) tag += e.word + "|";
  Rng rng(mix_seed(hash_string(tag), 0xc4a1));

  const int n = static_cast<int>(lex.words.size());
  auto skewed_row = [&]() {
    std::vector<double> row(n, 0.0);
    int preferred = std::min(2, n);
    double mass = n == 1 ? 1.0 : 0.86;
    std::vector<int> picks = rng.sample_without_replacement(preferred, n);
    for (int p : picks) row[p] = mass / preferred;
    if (n > preferred) {
      // spread the rest uniformly over the non-preferred words
      double rest = (1.0 - mass) / (n - preferred);
      for (int w = 0; w < n; ++w) {
        if (row[w] == 0.0) row[w] = rest;
      }
    } else {
      double total = 0.0;
      for (double v : row) total += v;
      for (double& v : row) v /= total;
    }
    return row;
  };

  WordChain chain;
  chain.n = n;
  chain.init = skewed_row();
  chain.trans.reserve(static_cast<size_t>(n + 1) * n);
  for (int prev2 = -1; prev2 < n; ++prev2) {
    for (int prev1 = 0; prev1 < n; ++prev1) {
      (void)prev1;
      chain.trans.push_back(skewed_row());
    }
  }
  return chain;
}

}  // namespace

std::vector<Utterance> generate_corpus(const Lexicon& lexicon, int n_utts,
                                       int len_min, int len_max, uint64_t seed,
                                       const std::string& id_prefix) {
  lexicon.validate();
  if (n_utts < 1) throw std::invalid_argument("generate_corpus: n_utts < 1");
  if (len_min < 1 || len_max < len_min) {
    throw std::invalid_argument("generate_corpus: bad length range");
  }

  WordChain chain = word_chain_for(lexicon);
  std::vector<Utterance> corpus(n_utts);
  for (int i = 0; i < n_utts; ++i) {
    Rng rng(mix_seed(seed, static_cast<uint64_t>(i)));
    Utterance& utt = corpus[i];
    utt.utt_id = id_prefix + "-" + padded_name("", i, std::max(n_utts, 100000));
    int len = len_min + rng.uniform_int(len_max - len_min + 1);
    utt.text.resize(len);
    for (int k = 0; k < len; ++k) {
      const std::vector<double>& dist =
          k == 0 ? chain.init
                 : chain.row(k >= 2 ? utt.text[k - 2] : -1, utt.text[k - 1]);
      utt.text[k] = rng.categorical(dist);
    }
    for (int w : utt.text) {
      const auto& pron = lexicon.words[w].phonemes;
      utt.reference_phonemes.insert(utt.reference_phonemes.end(), pron.begin(),
                                    pron.end());
    }
  }
  return corpus;
}

void NoiseSpec::validate() const {
  if (duration_min < 1 || duration_max < duration_min) {
    throw ConfigError("NoiseSpec: bad duration range");
  }
  if (confusion_scale < 0) {
    throw ConfigError("NoiseSpec: negative confusion_scale");
  }
  if (blank_prior < 0 || blank_prior >= 1) {
    throw ConfigError("NoiseSpec: blank_prior must be in [0, 1)");
  }
}

FrameLogits emit_frame_logits(const std::vector<int>& phonemes,
                              const std::vector<std::string>& inventory,
                              const NoiseSpec& noise, uint64_t seed) {
  noise.validate();
  if (phonemes.empty()) {
    throw std::invalid_argument("emit_frame_logits: empty phoneme sequence");
  }
  const int V = static_cast<int>(inventory.size());
  for (int p : phonemes) {
    if (p < 0 || p >= V) {
      throw std::invalid_argument("emit_frame_logits: unknown phoneme id " +
                                  std::to_string(p));
    }
  }

  Rng rng(mix_seed(noise.seed, seed));
  const int blank_col = V;

  // Hot column per frame. A blank always separates identical neighbors so
  // that collapse cannot merge them; other boundaries get a blank with
  // probability blank_prior.
  std::vector<int> hot;
  for (size_t i = 0; i < phonemes.size(); ++i) {
    int dur = noise.duration_min +
              rng.uniform_int(noise.duration_max - noise.duration_min + 1);
    for (int d = 0; d < dur; ++d) hot.push_back(phonemes[i]);
    if (i + 1 < phonemes.size()) {
      bool force = phonemes[i + 1] == phonemes[i];
      if (force || rng.uniform() < noise.blank_prior) hot.push_back(blank_col);
    }
  }

  const int T = static_cast<int>(hot.size());
  FrameLogits fl;
  fl.inventory = inventory;
  fl.blank_index = blank_col;
  fl.log_probs.resize(T, V + 1);
  for (int t = 0; t < T; ++t) {
    if (noise.confusion_scale == 0.0) {
      // Zero noise means deterministic posteriors: exact one-hot rows, so
      // beams and samples contain nothing but the reference sequence.
      for (int c = 0; c <= V; ++c) {
        fl.log_probs(t, c) = c == hot[t] ? 0.0 : kLogZero;
      }
      continue;
    }
    Eigen::VectorXd scores(V + 1);
    for (int c = 0; c <= V; ++c) {
      scores(c) = (c == hot[t] ? kEmissionScore : 0.0) +
                  noise.confusion_scale * rng.gaussian();
    }
    double m = scores.maxCoeff();
    double lse = m + std::log((scores.array() - m).exp().sum());
    fl.log_probs.row(t) = (scores.array() - lse).transpose();
  }
  fl.validate();
  return fl;
}

FrameLogits emit_for_utterance(const Lexicon& lexicon, const Utterance& utt,
                               const NoiseSpec& noise) {
  FrameLogits fl = emit_frame_logits(utt.reference_phonemes,
                                     lexicon.phoneme_inventory, noise,
                                     hash_string(utt.utt_id));
  fl.utt_id = utt.utt_id;
  return fl;
}

nlohmann::json lexicon_to_json(const Lexicon& lexicon) {
  nlohmann::json words = nlohmann::json::array();
  for (const auto& e : lexicon.words) {
    nlohmann::json prons = nlohmann::json::array();
    for (int p : e.phonemes) prons.push_back(lexicon.phoneme_inventory[p]);
    words.push_back({{"word", e.word}, {"phonemes", std::move(prons)}});
  }
  return nlohmann::json{{"format", "p2g-lexicon"},
                        {"version", 1},
                        {"words", std::move(words)},
                        {"phoneme_inventory", lexicon.phoneme_inventory},
                        {"grapheme_inventory", lexicon.grapheme_inventory}};
}

Lexicon lexicon_from_json(const nlohmann::json& doc) {
  Lexicon lex;
  try {
    if (doc.value("format", "") != "p2g-lexicon" || doc.value("version", 0) != 1) {
      throw SchemaError("lexicon: unknown format/version");
    }
    lex.phoneme_inventory =
        doc.at("phoneme_inventory").get<std::vector<std::string>>();
    lex.grapheme_inventory =
        doc.at("grapheme_inventory").get<std::vector<std::string>>();
    for (const auto& w : doc.at("words")) {
      LexiconEntry e;
      e.word = w.at("word").get<std::string>();
      for (const auto& pn : w.at("phonemes")) {
        int id = lex.phoneme_id(pn.get<std::string>());
        if (id < 0) throw SchemaError("lexicon: unknown phoneme " +
                                      pn.get<std::string>());
        e.phonemes.push_back(id);
      }
      lex.words.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("lexicon: ") + e.what());
  }
  lex.validate();
  return lex;
}

nlohmann::json utterance_to_json(const Lexicon& lexicon, const Utterance& utt) {
  std::string text;
  for (size_t i = 0; i < utt.text.size(); ++i) {
    if (i) text += ' ';
    text += lexicon.words[utt.text[i]].word;
  }
  nlohmann::json phonemes = nlohmann::json::array();
  for (int p : utt.reference_phonemes) {
    phonemes.push_back(lexicon.phoneme_inventory[p]);
  }
  return nlohmann::json{{"utt_id", utt.utt_id},
                        {"text", std::move(text)},
                        {"phonemes", std::move(phonemes)}};
}

Utterance utterance_from_json(const Lexicon& lexicon,
                              const nlohmann::json& record) {
  Utterance utt;
  try {
    utt.utt_id = record.at("utt_id").get<std::string>();
    std::istringstream text(record.at("text").get<std::string>());
    std::string word;
    while (text >> word) {
      int id = lexicon.word_id(word);
      if (id < 0) throw SchemaError("corpus: unknown word " + word);
      utt.text.push_back(id);
    }
    for (const auto& pn : record.at("phonemes")) {
      int id = lexicon.phoneme_id(pn.get<std::string>());
      if (id < 0) {
        throw SchemaError("corpus: unknown phoneme " + pn.get<std::string>());
      }
      utt.reference_phonemes.push_back(id);
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("corpus record: ") + e.what());
  }
  return utt;
}

}  // namespace p2g
