// p2g/config.cc

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

#include "p2g/config.h"

#include <set>

#include "p2g/errors.h"
#include "p2g/jsonl.h"

namespace p2g {

namespace {

NoiseSpec noise_from_json(const nlohmann::json& j, const NoiseSpec& defaults) {
  NoiseSpec n = defaults;
  if (j.contains("duration_range")) {
    n.duration_min = j.at("duration_range").at(0).get<int>();
    n.duration_max = j.at("duration_range").at(1).get<int>();
  }
  n.blank_prior = j.value("blank_prior", defaults.blank_prior);
  n.confusion_scale = j.value("confusion_scale", defaults.confusion_scale);
  n.seed = j.value("seed", defaults.seed);
  return n;
}

nlohmann::json noise_to_json(const NoiseSpec& n) {
  return nlohmann::json{
      {"duration_range", {n.duration_min, n.duration_max}},
      {"blank_prior", n.blank_prior},
      {"confusion_scale", n.confusion_scale},
      {"seed", n.seed}};
}

}  // namespace

void ExperimentConfig::validate() const {
  if (corpus.train_utts < 1 || corpus.dev_utts < 1 || corpus.test_utts < 1) {
    throw ConfigError("config: corpus sizes must be >= 1");
  }
  if (corpus.len_min < 1 || corpus.len_max < corpus.len_min) {
    throw ConfigError("config: bad corpus length range");
  }
  noise.validate();
  for (const auto& ck : danp.checkpoints) ck.validate();
  if (danp.beam_size < 0 || danp.num_samples < 0) {
    throw ConfigError("config: negative danp scheme sizes");
  }
  if (tkm.train_topk < 1 || tkm.randomized_n < 1 ||
      tkm.randomized_n > tkm.train_topk) {
    throw ConfigError("config: need K >= n >= 1 in tkm");
  }
  if (tkm.beam_size < 1) throw ConfigError("config: tkm beam size must be >= 1");
  if (tkm.decode_topk < 1) throw ConfigError("config: decode_topk must be >= 1");
  if (tkm.max_len < 1) throw ConfigError("config: tkm max_len must be >= 1");
  if (model.embedding < 1 || model.hidden < 1) {
    throw ConfigError("config: model dims must be positive");
  }
  if (train.learning_rate <= 0 || train.batch_size < 1 ||
      train.max_epochs < 1 || train.patience < 1) {
    throw ConfigError("config: bad training options");
  }
  if (lm.order < 1) throw ConfigError("config: lm order must be >= 1");
  if (lm.add_k <= 0) throw ConfigError("config: lm add_k must be > 0");
  std::set<std::string> known{"clean", "danp", "tkm", "rtkm"};
  if (matrix_regimes.empty()) {
    throw ConfigError("config: matrix regimes empty");
  }
  for (const auto& r : matrix_regimes) {
    if (!known.count(r)) throw ConfigError("config: unknown regime " + r);
  }
}

ExperimentConfig config_from_json(const nlohmann::json& doc) {
  ExperimentConfig cfg;
  try {
    cfg.seed = doc.value("seed", cfg.seed);
    cfg.workers = doc.value("workers", cfg.workers);
    if (doc.contains("synth")) {
      const auto& s = doc.at("synth");
      cfg.synth.num_words = s.value("num_words", cfg.synth.num_words);
      cfg.synth.num_phonemes = s.value("num_phonemes", cfg.synth.num_phonemes);
      cfg.synth.homophone_groups =
          s.value("homophone_groups", cfg.synth.homophone_groups);
      if (s.contains("pron_len")) {
        cfg.synth.pron_len_min = s.at("pron_len").at(0).get<int>();
        cfg.synth.pron_len_max = s.at("pron_len").at(1).get<int>();
      }
    }
    if (doc.contains("corpus")) {
      const auto& c = doc.at("corpus");
      cfg.corpus.train_utts = c.value("train_utts", cfg.corpus.train_utts);
      cfg.corpus.dev_utts = c.value("dev_utts", cfg.corpus.dev_utts);
      cfg.corpus.test_utts = c.value("test_utts", cfg.corpus.test_utts);
      cfg.corpus.lm_text_utts = c.value("lm_text_utts", cfg.corpus.lm_text_utts);
      if (c.contains("len_range")) {
        cfg.corpus.len_min = c.at("len_range").at(0).get<int>();
        cfg.corpus.len_max = c.at("len_range").at(1).get<int>();
      }
    }
    if (doc.contains("noise")) {
      cfg.noise = noise_from_json(doc.at("noise"), cfg.noise);
    }
    if (doc.contains("danp")) {
      const auto& d = doc.at("danp");
      cfg.danp.beam_size = d.value("beam_size", cfg.danp.beam_size);
      cfg.danp.num_samples = d.value("num_samples", cfg.danp.num_samples);
      cfg.danp.include_clean = d.value("include_clean", cfg.danp.include_clean);
      if (d.contains("checkpoints")) {
        cfg.danp.checkpoints.clear();
        for (const auto& ck : d.at("checkpoints")) {
          cfg.danp.checkpoints.push_back(noise_from_json(ck, cfg.noise));
        }
      }
    }
    if (doc.contains("tkm")) {
      const auto& t = doc.at("tkm");
      cfg.tkm.train_topk = t.value("train_topk", cfg.tkm.train_topk);
      cfg.tkm.randomized_n = t.value("randomized_n", cfg.tkm.randomized_n);
      cfg.tkm.beam_size = t.value("beam_size", cfg.tkm.beam_size);
      cfg.tkm.decode_topk = t.value("decode_topk", cfg.tkm.decode_topk);
      cfg.tkm.max_len = t.value("max_len", cfg.tkm.max_len);
    }
    if (doc.contains("model")) {
      const auto& m = doc.at("model");
      cfg.model.embedding = m.value("embedding_dim", cfg.model.embedding);
      cfg.model.hidden = m.value("hidden_dim", cfg.model.hidden);
    }
    if (doc.contains("train")) {
      const auto& t = doc.at("train");
      cfg.train.learning_rate = t.value("learning_rate", cfg.train.learning_rate);
      cfg.train.batch_size = t.value("batch_size", cfg.train.batch_size);
      cfg.train.max_epochs = t.value("max_epochs", cfg.train.max_epochs);
      cfg.train.patience = t.value("patience", cfg.train.patience);
      cfg.train.clip_norm = t.value("clip_norm", cfg.train.clip_norm);
    }
    if (doc.contains("lm")) {
      const auto& l = doc.at("lm");
      cfg.lm.order = l.value("order", cfg.lm.order);
      cfg.lm.add_k = l.value("add_k", cfg.lm.add_k);
      cfg.lm.lambda = l.value("lambda", cfg.lm.lambda);
      cfg.lm.beta = l.value("beta", cfg.lm.beta);
      if (l.contains("lambda_grid")) {
        cfg.lm.lambda_grid = l.at("lambda_grid").get<std::vector<double>>();
      }
      if (l.contains("beta_grid")) {
        cfg.lm.beta_grid = l.at("beta_grid").get<std::vector<double>>();
      }
    }
    if (doc.contains("matrix") && doc.at("matrix").contains("regimes")) {
      cfg.matrix_regimes =
          doc.at("matrix").at("regimes").get<std::vector<std::string>>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

nlohmann::json config_to_json(const ExperimentConfig& cfg) {
  nlohmann::json checkpoints = nlohmann::json::array();
  for (const auto& ck : cfg.danp.checkpoints) {
    checkpoints.push_back(noise_to_json(ck));
  }
  return nlohmann::json{
      {"seed", cfg.seed},
      {"workers", cfg.workers},
      {"synth",
       {{"num_words", cfg.synth.num_words},
        {"num_phonemes", cfg.synth.num_phonemes},
        {"homophone_groups", cfg.synth.homophone_groups},
        {"pron_len", {cfg.synth.pron_len_min, cfg.synth.pron_len_max}}}},
      {"corpus",
       {{"train_utts", cfg.corpus.train_utts},
        {"dev_utts", cfg.corpus.dev_utts},
        {"test_utts", cfg.corpus.test_utts},
        {"lm_text_utts", cfg.corpus.lm_text_utts},
        {"len_range", {cfg.corpus.len_min, cfg.corpus.len_max}}}},
      {"noise", noise_to_json(cfg.noise)},
      {"danp",
       {{"beam_size", cfg.danp.beam_size},
        {"num_samples", cfg.danp.num_samples},
        {"include_clean", cfg.danp.include_clean},
        {"checkpoints", std::move(checkpoints)}}},
      {"tkm",
       {{"train_topk", cfg.tkm.train_topk},
        {"randomized_n", cfg.tkm.randomized_n},
        {"beam_size", cfg.tkm.beam_size},
        {"decode_topk", cfg.tkm.decode_topk},
        {"max_len", cfg.tkm.max_len}}},
      {"model",
       {{"embedding_dim", cfg.model.embedding},
        {"hidden_dim", cfg.model.hidden}}},
      {"train",
       {{"learning_rate", cfg.train.learning_rate},
        {"batch_size", cfg.train.batch_size},
        {"max_epochs", cfg.train.max_epochs},
        {"patience", cfg.train.patience},
        {"clip_norm", cfg.train.clip_norm}}},
      {"lm",
       {{"order", cfg.lm.order},
        {"add_k", cfg.lm.add_k},
        {"lambda", cfg.lm.lambda},
        {"beta", cfg.lm.beta},
        {"lambda_grid", cfg.lm.lambda_grid},
        {"beta_grid", cfg.lm.beta_grid}}},
      {"matrix", {{"regimes", cfg.matrix_regimes}}}};
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  return config_from_json(read_json_file(path));
}

}  // namespace p2g
