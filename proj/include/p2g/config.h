// p2g/config.h

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

#ifndef P2G_CONFIG_H_
#define P2G_CONFIG_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "p2g/p2g-model.h"
#include "p2g/synth-s2p.h"

namespace p2g {

// A single JSON document drives the whole pipeline. Environment variables
// and CLI flags may override paths and worker counts, never hyper-parameters.
// All stage randomness derives from `seed`, so one master seed reproduces the
// entire experiment byte-for-byte.
struct ExperimentConfig {
  uint64_t seed = 7;
  int workers = 0;  // 0 = hardware concurrency

  ToyLanguageConfig synth;

  struct Corpus {
    int train_utts = 2000;
    int dev_utts = 300;
    int test_utts = 500;
    int lm_text_utts = 10000;  // extra text-only data for the LM
    int len_min = 3;
    int len_max = 8;
  } corpus;

  NoiseSpec noise;  // primary emission noise; noise.seed is a stream id

  struct Danp {
    int beam_size = 8;
    int num_samples = 4;
    bool include_clean = false;
    std::vector<NoiseSpec> checkpoints;
  } danp;

  struct Tkm {
    int train_topk = 8;    // K in marginalized training
    int randomized_n = 4;  // n drawn per visit in randomized training
    int beam_size = 4;     // S: per-hypothesis decode beam
    int decode_topk = 4;   // hypotheses marginalized at decode time
    int max_len = 12;      // decoder length budget
  } tkm;

  ModelDims model;

  TrainOptions train;  // train.seed is derived per regime, ignore in config

  struct Lm {
    int order = 4;
    double add_k = 0.25;
    double lambda = 0.5;
    double beta = 0.0;
    std::vector<double> lambda_grid = {0.0, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0};
    std::vector<double> beta_grid = {0.0};  // length-reward values tuned with lambda
  } lm;

  std::vector<std::string> matrix_regimes = {"clean", "danp", "rtkm"};

  void validate() const;  // throws ConfigError
};

ExperimentConfig config_from_json(const nlohmann::json& doc);
nlohmann::json config_to_json(const ExperimentConfig& cfg);
ExperimentConfig load_config(const std::filesystem::path& path);

}  // namespace p2g

#endif  // P2G_CONFIG_H_
