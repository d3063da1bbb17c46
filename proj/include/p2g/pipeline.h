// p2g/pipeline.h

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

#ifndef P2G_PIPELINE_H_
#define P2G_PIPELINE_H_

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "p2g/config.h"
#include "p2g/ctc-lattice.h"
#include "p2g/danp.h"
#include "p2g/eval.h"
#include "p2g/ngram-lm.h"
#include "p2g/p2g-model.h"
#include "p2g/tkm.h"

namespace p2g {

// Stage artifacts are immutable: each stage owns a directory under the output
// root, and re-running a stage that already has artifacts writes to a fresh
// ".v2", ".v3", ... sibling. Readers resolve the newest version.
std::filesystem::path stage_dir_for_write(const std::filesystem::path& out,
                                          const std::string& stage);
std::filesystem::path stage_dir_for_read(const std::filesystem::path& out,
                                         const std::string& stage);

// Runs fn(0..n-1) on `workers` threads (0 = hardware concurrency); fn must
// write only to its own index, and results are then index-ordered, so the
// worker count never changes any output.
void parallel_for(int n, int workers, const std::function<void(int)>& fn);

enum class TrainRegime { kClean, kDanp, kTkm, kRtkm };
enum class DecodeMode { kBestPath, kTkm };

TrainRegime regime_from_name(const std::string& name);
const char* regime_name(TrainRegime regime);
DecodeMode decode_mode_from_name(const std::string& name);
const char* decode_mode_name(DecodeMode mode);

// synth-gen: lexicon, train/dev/test corpora with frame logits, LM text.
void stage_synth_gen(const ExperimentConfig& cfg,
                     const std::filesystem::path& out);

// s2p-decode: per-utterance top-K hypothesis sets for every split.
void stage_s2p_decode(const ExperimentConfig& cfg,
                      const std::filesystem::path& out);

// danp-build: augmented training pairs plus stats.
void stage_danp_build(const ExperimentConfig& cfg,
                      const std::filesystem::path& out);

// train {clean|danp|tkm|rtkm}: model checkpoint + loss trace.
void stage_train(const ExperimentConfig& cfg, const std::filesystem::path& out,
                 TrainRegime regime);

// decode {best-path|tkm} with a trained regime's model, on dev and test.
void stage_decode(const ExperimentConfig& cfg, const std::filesystem::path& out,
                  TrainRegime regime, DecodeMode mode);

// rescore: n-gram LM over train + extra text, lambda tuned on dev when a
// grid is configured, applied to dev and test candidate files.
void stage_rescore(const ExperimentConfig& cfg, const std::filesystem::path& out,
                   TrainRegime regime, DecodeMode mode);

// eval: WER report (JSON + aligned text) for a decode or rescore output.
struct EvalResult {
  ErrorBreakdown totals;
  double wer = 0.0;
  std::vector<std::pair<std::string, int>> per_utt_errors;  // by utt_id
};
EvalResult stage_eval(const ExperimentConfig& cfg,
                      const std::filesystem::path& out, TrainRegime regime,
                      DecodeMode mode, bool rescored, const std::string& split);

// significance: matched-pairs test between two eval reports.
MatchedPairsResult stage_significance(const std::filesystem::path& report_a,
                                      const std::filesystem::path& report_b,
                                      const std::filesystem::path& out_file);

// experiment-matrix: the full train x decode grid (configured regimes by
// {best-path, tkm} x {no-LM, LM}) with WERs and pairwise p-values.
nlohmann::json stage_experiment_matrix(const ExperimentConfig& cfg,
                                       const std::filesystem::path& out);

// Shared loaders (read the newest stage version).
Lexicon load_lexicon(const std::filesystem::path& out);
std::vector<Utterance> load_corpus(const std::filesystem::path& out,
                                   const std::string& split,
                                   bool with_frames);
std::vector<TKMBatchItem> load_hypothesis_items(
    const std::filesystem::path& out, const std::string& split, int top_k);
P2GModel load_regime_model(const std::filesystem::path& out,
                           TrainRegime regime);

}  // namespace p2g

#endif  // P2G_PIPELINE_H_
