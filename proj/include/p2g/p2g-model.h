// p2g/p2g-model.h

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

#ifndef P2G_P2G_MODEL_H_
#define P2G_P2G_MODEL_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace p2g {

// Phoneme-conditioned autoregressive grapheme model:
// a single-layer tanh-RNN encoder over phoneme embeddings, a single-layer
// tanh-RNN decoder with dot-product attention over encoder states, and a
// linear projection of [state; context] to grapheme logits.
// Double precision throughout so gradient checks hold to tight tolerances.

struct ModelDims {
  int embedding = 16;
  int hidden = 32;
};

struct P2GVocab {
  std::vector<std::string> phonemes;   // encoder-side inventory
  std::vector<std::string> graphemes;  // decoder-side tokens (words)

  // Input ids: phonemes, then <pad>, then <s> (start-of-input marker that is
  // always prepended, so empty phoneme sequences still encode).
  int input_size() const { return static_cast<int>(phonemes.size()) + 2; }
  int input_pad() const { return static_cast<int>(phonemes.size()); }
  int input_start() const { return static_cast<int>(phonemes.size()) + 1; }

  // Output ids: graphemes, then <pad>, <bos>, <eos>. The softmax ranges over
  // all of them; only graphemes and <eos> are ever decoded.
  int output_size() const { return static_cast<int>(graphemes.size()) + 3; }
  int output_pad() const { return static_cast<int>(graphemes.size()); }
  int output_bos() const { return static_cast<int>(graphemes.size()) + 1; }
  int output_eos() const { return static_cast<int>(graphemes.size()) + 2; }
};

// All parameters as dense matrices (biases are column vectors).
struct P2GParams {
  Eigen::MatrixXd in_embed;   // input_size x embedding
  Eigen::MatrixXd out_embed;  // output_size x embedding
  Eigen::MatrixXd enc_wx;     // hidden x embedding
  Eigen::MatrixXd enc_wh;     // hidden x hidden
  Eigen::MatrixXd enc_b;      // hidden x 1
  Eigen::MatrixXd dec_wx;     // hidden x embedding
  Eigen::MatrixXd dec_wh;     // hidden x hidden
  Eigen::MatrixXd dec_b;      // hidden x 1
  Eigen::MatrixXd out_w;      // output_size x 2*hidden
  Eigen::MatrixXd out_b;      // output_size x 1

  void resize(const ModelDims& dims, const P2GVocab& vocab);
  void set_zero();
  double squared_norm() const;
  void add_scaled(const P2GParams& other, double scale);  // this += scale*other
};

template <typename Params, typename F>
void for_each_parameter(Params& p, F&& f) {
  f("in_embed", p.in_embed);
  f("out_embed", p.out_embed);
  f("enc_wx", p.enc_wx);
  f("enc_wh", p.enc_wh);
  f("enc_b", p.enc_b);
  f("dec_wx", p.dec_wx);
  f("dec_wh", p.dec_wh);
  f("dec_b", p.dec_b);
  f("out_w", p.out_w);
  f("out_b", p.out_b);
}

struct P2GModel {
  ModelDims dims;
  P2GVocab vocab;
  P2GParams params;
};

// Glorot-uniform weights, zero biases; deterministic per seed.
P2GModel init_model(const ModelDims& dims, const P2GVocab& vocab,
                    uint64_t seed);

// Log-probability vector over the output vocabulary for the next position
// after y_prefix (teacher-forced). Sums to 1 in probability within 1e-9.
Eigen::VectorXd next_token_logprobs(const P2GModel& model,
                                    const std::vector<int>& phonemes,
                                    const std::vector<int>& y_prefix);

// log p(y|h): next-token log-probs summed over y's tokens plus <eos>.
double score_sequence(const P2GModel& model, const std::vector<int>& phonemes,
                      const std::vector<int>& target);

struct ScoredSeq {
  std::vector<int> tokens;
  double logprob;
};

// Length-synchronous beam search with <eos> termination; expands grapheme
// tokens only. Results sorted by logprob descending (ties lexicographic),
// de-duplicated, at most beam_size entries; every logprob equals
// score_sequence of its tokens.
std::vector<ScoredSeq> beam_decode(const P2GModel& model,
                                   const std::vector<int>& phonemes,
                                   int beam_size, int max_len);

// One supervised (noisy-phonemes -> text) pair with a loss weight.
struct SupervisedPair {
  std::vector<int> phonemes;
  std::vector<int> target;
  double weight = 1.0;
};

// Accumulates exact analytic gradients of sum_i w_i * (-log p(y_i|h_i)) into
// grads (+=) and returns that loss. grads must be pre-sized and may carry
// prior accumulation.
double grad_nll(const P2GModel& model, std::span<const SupervisedPair> batch,
                P2GParams* grads);

enum class Optimizer { kSgd, kAdam };

struct TrainOptions {
  Optimizer optimizer = Optimizer::kAdam;
  double learning_rate = 0.01;  // fixed throughout training
  int batch_size = 16;
  int max_epochs = 50;
  int patience = 3;      // early-stopping patience, in dev evaluations
  double clip_norm = 5.0;  // global gradient-norm clip; <= 0 disables
  uint64_t seed = 0;
};

struct TrainTrace {
  std::vector<double> train_loss;  // nats per target token, by epoch
  std::vector<double> dev_loss;
  int best_epoch = -1;
  bool stopped_early = false;
};

// Generic minibatch SGD loop with early stopping on dev loss and best-weights
// restore. batch_grad accumulates gradients for the given item indices and
// returns (summed loss, summed target tokens); dev_loss returns mean nats per
// token. Deterministic for fixed seed: fixed shuffles, fixed reduction order.
using BatchGradFn = std::function<std::pair<double, int>(
    std::span<const int> items, int epoch, P2GParams* grads)>;
using DevLossFn = std::function<double(const P2GModel&)>;

TrainTrace train_loop(P2GModel* model, int num_items, const TrainOptions& opts,
                      const BatchGradFn& batch_grad, const DevLossFn& dev_loss);

// Plain cross-entropy training on supervised pairs.
TrainTrace train(P2GModel* model, std::span<const SupervisedPair> train_items,
                 std::span<const SupervisedPair> dev_items,
                 const TrainOptions& opts);

// Cross-entropy training with a caller-supplied early-stopping metric
// (lower is better; e.g. dev WER for noisy-input regimes, where dev
// cross-entropy degrades as the model sharpens even while accuracy improves).
TrainTrace train_with_dev(P2GModel* model,
                          std::span<const SupervisedPair> train_items,
                          const TrainOptions& opts, const DevLossFn& dev_loss);

// Versioned single-document JSON checkpoint; parameter round-trip is
// bit-exact. Loading a wrong version or malformed file throws SchemaError.
void save_checkpoint(const P2GModel& model, const std::filesystem::path& path);
P2GModel load_checkpoint(const std::filesystem::path& path);
nlohmann::json checkpoint_to_json(const P2GModel& model);
P2GModel checkpoint_from_json(const nlohmann::json& doc);

}  // namespace p2g

#endif  // P2G_P2G_MODEL_H_
