// tools/p2g-main.cc

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

// Pipeline driver. Exit codes: 0 success, 2 configuration/usage error,
// 3 missing input artifact, 4 schema violation, 1 anything else. Failures
// print one machine-readable JSON object to stderr.

#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "p2g/errors.h"
#include "p2g/pipeline.h"

namespace {

void print_error(const char* type, const std::string& message) {
  nlohmann::json err{{"error", {{"type", type}, {"message", message}}}};
  std::cerr << err.dump() << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"two-step phoneme-to-grapheme ASR decoding pipeline"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  int64_t seed_override = -1;
  int workers_override = -1;
  app.add_option("--config", config_path, "experiment config (JSON)");
  app.add_option("--out", out_dir, "output directory for stage artifacts");
  app.add_option("--seed", seed_override, "override the config seed");
  app.add_option("--workers", workers_override,
                 "utterance-level worker threads (0 = all cores)");

  auto* synth_cmd = app.add_subcommand("synth-gen",
                                       "generate lexicon, corpora, frames");
  auto* s2p_cmd = app.add_subcommand("s2p-decode",
                                     "beam-search phoneme hypothesis sets");
  auto* danp_cmd = app.add_subcommand("danp-build",
                                      "build the noisy-phoneme training set");

  std::string train_regime;
  auto* train_cmd = app.add_subcommand("train", "train a P2G model");
  train_cmd->add_option("regime", train_regime, "clean|danp|tkm|rtkm")
      ->required();

  std::string decode_mode, decode_regime;
  auto* decode_cmd = app.add_subcommand("decode", "decode dev and test");
  decode_cmd->add_option("mode", decode_mode, "best-path|tkm")->required();
  decode_cmd->add_option("--regime", decode_regime, "model to decode with")
      ->required();

  std::string rescore_mode, rescore_regime;
  auto* rescore_cmd =
      app.add_subcommand("rescore", "re-score candidates with the n-gram LM");
  rescore_cmd->add_option("--regime", rescore_regime, "model regime")
      ->required();
  rescore_cmd->add_option("--mode", rescore_mode, "best-path|tkm")->required();

  std::string eval_mode, eval_regime, eval_split = "test";
  bool eval_lm = false;
  auto* eval_cmd = app.add_subcommand("eval", "word error rate report");
  eval_cmd->add_option("--regime", eval_regime, "model regime")->required();
  eval_cmd->add_option("--mode", eval_mode, "best-path|tkm")->required();
  eval_cmd->add_option("--split", eval_split, "dev|test (default test)");
  eval_cmd->add_flag("--lm", eval_lm, "evaluate the LM-rescored candidates");

  std::string sig_a, sig_b, sig_out;
  auto* sig_cmd = app.add_subcommand(
      "significance", "matched-pairs test between two eval reports");
  sig_cmd->add_option("--a", sig_a, "first report.json")->required();
  sig_cmd->add_option("--b", sig_b, "second report.json")->required();
  sig_cmd->add_option("--out-file", sig_out, "where to write the result");

  auto* matrix_cmd = app.add_subcommand(
      "experiment-matrix", "full train x decode grid with significance tests");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    print_error("config", e.what());
    return 2;
  }

  try {
    if (sig_cmd->parsed()) {
      p2g::MatchedPairsResult res = p2g::stage_significance(
          sig_a, sig_b,
          sig_out.empty() ? std::filesystem::path()
                          : std::filesystem::path(sig_out));
      nlohmann::json doc{{"p_value", res.p_value},
                         {"z", res.z},
                         {"degenerate", res.degenerate}};
      std::cout << doc.dump() << std::endl;
      return 0;
    }

    if (config_path.empty()) {
      throw p2g::ConfigError("--config is required for this subcommand");
    }
    if (out_dir.empty()) {
      throw p2g::ConfigError("--out is required for this subcommand");
    }
    p2g::ExperimentConfig cfg = p2g::load_config(config_path);
    if (seed_override >= 0) cfg.seed = static_cast<uint64_t>(seed_override);
    if (workers_override >= 0) {
      cfg.workers = workers_override;
    } else if (const char* env = std::getenv("P2G_WORKERS")) {
      cfg.workers = std::atoi(env);
    }

    if (synth_cmd->parsed()) {
      p2g::stage_synth_gen(cfg, out_dir);
      std::cout << "synth-gen: wrote lexicon, corpora and frames"
                << std::endl;
    } else if (s2p_cmd->parsed()) {
      p2g::stage_s2p_decode(cfg, out_dir);
      std::cout << "s2p-decode: wrote hypothesis sets" << std::endl;
    } else if (danp_cmd->parsed()) {
      p2g::stage_danp_build(cfg, out_dir);
      std::cout << "danp-build: wrote augmented training set" << std::endl;
    } else if (train_cmd->parsed()) {
      p2g::stage_train(cfg, out_dir, p2g::regime_from_name(train_regime));
      std::cout << "train: wrote model checkpoint (" << train_regime << ")"
                << std::endl;
    } else if (decode_cmd->parsed()) {
      p2g::stage_decode(cfg, out_dir, p2g::regime_from_name(decode_regime),
                        p2g::decode_mode_from_name(decode_mode));
      std::cout << "decode: wrote candidates (" << decode_regime << ", "
                << decode_mode << ")" << std::endl;
    } else if (rescore_cmd->parsed()) {
      p2g::stage_rescore(cfg, out_dir, p2g::regime_from_name(rescore_regime),
                         p2g::decode_mode_from_name(rescore_mode));
      std::cout << "rescore: wrote re-scored candidates" << std::endl;
    } else if (eval_cmd->parsed()) {
      p2g::EvalResult res = p2g::stage_eval(
          cfg, out_dir, p2g::regime_from_name(eval_regime),
          p2g::decode_mode_from_name(eval_mode), eval_lm, eval_split);
      std::printf("eval: %s/%s%s split=%s WER=%.4f (S=%d I=%d D=%d N=%d)\n",
                  eval_regime.c_str(), eval_mode.c_str(),
                  eval_lm ? "/lm" : "", eval_split.c_str(), res.wer,
                  res.totals.substitutions, res.totals.insertions,
                  res.totals.deletions, res.totals.reference_length);
    } else if (matrix_cmd->parsed()) {
      nlohmann::json matrix = p2g::stage_experiment_matrix(cfg, out_dir);
      std::cout << "experiment-matrix: wrote matrix.json / matrix.txt ("
                << matrix.at("cells").size() << " cells)" << std::endl;
    }
    return 0;
  } catch (const p2g::ConfigError& e) {
    print_error("config", e.what());
    return 2;
  } catch (const p2g::MissingInputError& e) {
    print_error("missing_input", e.what());
    return 3;
  } catch (const p2g::SchemaError& e) {
    print_error("schema", e.what());
    return 4;
  } catch (const std::exception& e) {
    print_error("internal", e.what());
    return 1;
  }
}
