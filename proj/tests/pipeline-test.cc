// tests/pipeline-test.cc

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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "p2g/errors.h"
#include "p2g/jsonl.h"
#include "p2g/pipeline.h"

using namespace p2g;

namespace {

namespace fs = std::filesystem;

fs::path fresh_dir(const std::string& tag) {
  fs::path dir = fs::temp_directory_path() / ("p2g-pipe-" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

ExperimentConfig tiny_config() {
  ExperimentConfig cfg;
  cfg.seed = 7;
  cfg.workers = 2;
  cfg.corpus.train_utts = 40;
  cfg.corpus.dev_utts = 12;
  cfg.corpus.test_utts = 16;
  cfg.corpus.lm_text_utts = 100;
  cfg.noise.confusion_scale = 2.4;
  cfg.noise.seed = 17;
  cfg.danp.beam_size = 3;
  cfg.danp.num_samples = 2;
  cfg.tkm.train_topk = 3;
  cfg.tkm.randomized_n = 2;
  cfg.tkm.beam_size = 3;
  cfg.tkm.decode_topk = 2;
  cfg.train.learning_rate = 0.01;
  cfg.train.max_epochs = 3;
  cfg.train.patience = 2;
  cfg.lm.lambda_grid = {0.0, 0.5};
  cfg.lm.beta_grid = {0.0};
  cfg.validate();
  return cfg;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// write -> read -> write must be byte-identical for JSON Lines artifacts
void check_jsonl_roundtrip(const fs::path& file) {
  std::string original = slurp(file);
  auto records = read_jsonl(file);
  std::string rewritten;
  for (const auto& r : records) rewritten += r.dump() + "\n";
  CHECK(original == rewritten);
}

}  // namespace

TEST_CASE("stage directories version instead of overwriting") {
  fs::path out = fresh_dir("versioning");
  fs::path first = stage_dir_for_write(out, "synth");
  CHECK(first == out / "synth");
  std::ofstream(first / "marker.txt") << "v1";

  fs::path second = stage_dir_for_write(out, "synth");
  CHECK(second == out / "synth.v2");
  std::ofstream(second / "marker.txt") << "v2";

  CHECK(slurp(out / "synth" / "marker.txt") == "v1");  // immutable
  CHECK(stage_dir_for_read(out, "synth") == second);   // newest wins

  CHECK_THROWS_AS(stage_dir_for_read(out, "missing"), MissingInputError);
  fs::remove_all(out);
}

TEST_CASE("parallel_for is deterministic across worker counts") {
  std::vector<int> a(100), b(100);
  parallel_for(100, 1, [&](int i) { a[i] = i * i; });
  parallel_for(100, 4, [&](int i) { b[i] = i * i; });
  CHECK(a == b);
  CHECK_THROWS_AS(parallel_for(4, 2,
                               [](int i) {
                                 if (i == 2) throw std::runtime_error("boom");
                               }),
                  std::runtime_error);
}

TEST_CASE("artifacts round-trip byte-identically through their schemas") {
  fs::path out = fresh_dir("roundtrip");
  ExperimentConfig cfg = tiny_config();
  stage_synth_gen(cfg, out);
  stage_s2p_decode(cfg, out);
  stage_danp_build(cfg, out);

  check_jsonl_roundtrip(out / "synth" / "corpus.train.jsonl");
  check_jsonl_roundtrip(out / "synth" / "frames.dev.jsonl");
  check_jsonl_roundtrip(out / "s2p" / "hyps.test.jsonl");
  check_jsonl_roundtrip(out / "danp" / "danp.train.jsonl");

  // typed round-trips preserve content
  Lexicon lex = load_lexicon(out);
  auto corpus = load_corpus(out, "train", true);
  CHECK(corpus.size() == 40);
  for (const auto& utt : corpus) {
    REQUIRE(utt.frame_logits.has_value());
    nlohmann::json once = frame_logits_to_json(*utt.frame_logits);
    nlohmann::json twice = frame_logits_to_json(frame_logits_from_json(once));
    CHECK(once == twice);
  }
  fs::remove_all(out);
}

TEST_CASE("hypothesis loader truncates to the requested top-K") {
  fs::path out = fresh_dir("topk");
  ExperimentConfig cfg = tiny_config();
  stage_synth_gen(cfg, out);
  stage_s2p_decode(cfg, out);
  auto full = load_hypothesis_items(out, "dev", 0);
  auto one = load_hypothesis_items(out, "dev", 1);
  REQUIRE(full.size() == one.size());
  for (size_t i = 0; i < full.size(); ++i) {
    CHECK(one[i].hypotheses.size() == 1);
    CHECK(one[i].hypotheses.hypotheses[0].tokens ==
          full[i].hypotheses.hypotheses[0].tokens);
  }
  fs::remove_all(out);
}

TEST_CASE("train rtkm with n=K produces the same checkpoint as train tkm") {
  fs::path out = fresh_dir("nk");
  ExperimentConfig cfg = tiny_config();
  cfg.tkm.randomized_n = cfg.tkm.train_topk;  // n = K
  stage_synth_gen(cfg, out);
  stage_s2p_decode(cfg, out);
  stage_train(cfg, out, TrainRegime::kTkm);
  stage_train(cfg, out, TrainRegime::kRtkm);
  CHECK(slurp(out / "train-tkm" / "model.json") ==
        slurp(out / "train-rtkm" / "model.json"));
  fs::remove_all(out);
}

TEST_CASE("decode tkm with K=1 equals decode best-path") {
  fs::path out = fresh_dir("k1");
  ExperimentConfig cfg = tiny_config();
  cfg.tkm.decode_topk = 1;
  stage_synth_gen(cfg, out);
  stage_s2p_decode(cfg, out);
  stage_train(cfg, out, TrainRegime::kClean);
  stage_decode(cfg, out, TrainRegime::kClean, DecodeMode::kBestPath);
  stage_decode(cfg, out, TrainRegime::kClean, DecodeMode::kTkm);
  CHECK(slurp(out / "decode-clean-best-path" / "candidates.test.jsonl") ==
        slurp(out / "decode-clean-tkm" / "candidates.test.jsonl"));
  CHECK(slurp(out / "decode-clean-best-path" / "candidates.dev.jsonl") ==
        slurp(out / "decode-clean-tkm" / "candidates.dev.jsonl"));
  fs::remove_all(out);
}

TEST_CASE("significance stage reads eval reports and honors alignment") {
  fs::path out = fresh_dir("sig");
  ExperimentConfig cfg = tiny_config();
  stage_synth_gen(cfg, out);
  stage_s2p_decode(cfg, out);
  stage_train(cfg, out, TrainRegime::kClean);
  stage_decode(cfg, out, TrainRegime::kClean, DecodeMode::kBestPath);
  EvalResult res = stage_eval(cfg, out, TrainRegime::kClean,
                              DecodeMode::kBestPath, false, "test");
  CHECK(std::isfinite(res.wer));

  fs::path report =
      out / "eval-clean-best-path" / "report.test.json";
  MatchedPairsResult self =
      stage_significance(report, report, out / "self.json");
  CHECK(self.p_value == 1.0);
  fs::remove_all(out);
}

TEST_CASE("config validation rejects inconsistent hyper-parameters") {
  ExperimentConfig cfg = tiny_config();
  cfg.tkm.randomized_n = cfg.tkm.train_topk + 1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  nlohmann::json doc = config_to_json(tiny_config());
  doc["tkm"]["train_topk"] = 0;
  CHECK_THROWS_AS(config_from_json(doc), ConfigError);

  // config JSON round-trip preserves every field
  nlohmann::json once = config_to_json(tiny_config());
  nlohmann::json twice = config_to_json(config_from_json(once));
  CHECK(once == twice);
}

#ifdef P2G_CLI_PATH
namespace {

int run_cli(const std::string& args) {
  std::string cmd = std::string(P2G_CLI_PATH) + " " + args + " 2>/dev/null";
  int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

}  // namespace

TEST_CASE("CLI exit codes distinguish failure classes") {
  fs::path out = fresh_dir("cli");
  fs::path cfg_path = out / "cfg.json";
  write_json_file(cfg_path, config_to_json(tiny_config()));

  // usage error
  CHECK(run_cli("") == 2);
  // missing config file
  CHECK(run_cli("--config " + (out / "nope.json").string() + " --out " +
                out.string() + " synth-gen") == 3);
  // malformed config
  std::ofstream(out / "bad.json") << "{ not json";
  CHECK(run_cli("--config " + (out / "bad.json").string() + " --out " +
                out.string() + " synth-gen") == 4);
  // inconsistent config
  nlohmann::json bad_cfg = config_to_json(tiny_config());
  bad_cfg["tkm"]["randomized_n"] = 99;
  write_json_file(out / "incons.json", bad_cfg);
  CHECK(run_cli("--config " + (out / "incons.json").string() + " --out " +
                out.string() + " synth-gen") == 2);
  // upstream stage missing
  CHECK(run_cli("--config " + cfg_path.string() + " --out " + out.string() +
                " s2p-decode") == 3);
  // happy path
  CHECK(run_cli("--config " + cfg_path.string() + " --out " + out.string() +
                " synth-gen") == 0);
  CHECK(run_cli("--config " + cfg_path.string() + " --out " + out.string() +
                " s2p-decode") == 0);
  fs::remove_all(out);
}
#endif
