// p2g/p2g-model.cc

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

#include "p2g/p2g-model.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "p2g/errors.h"
#include "p2g/jsonl.h"
#include "p2g/rng.h"

namespace p2g {

namespace {

void check_input_tokens(const P2GModel& model, const std::vector<int>& h) {
  const int P = static_cast<int>(model.vocab.phonemes.size());
  for (int p : h) {
    if (p < 0 || p >= P) {
      throw std::invalid_argument("p2g: phoneme id " + std::to_string(p) +
                                  " outside vocabulary");
    }
  }
}

void check_output_tokens(const P2GModel& model, const std::vector<int>& y) {
  const int G = static_cast<int>(model.vocab.graphemes.size());
  for (int g : y) {
    if (g < 0 || g >= G) {
      throw std::invalid_argument("p2g: grapheme id " + std::to_string(g) +
                                  " outside vocabulary");
    }
  }
}

Eigen::VectorXd log_softmax(const Eigen::VectorXd& logits) {
  double m = logits.maxCoeff();
  double lse = m + std::log((logits.array() - m).exp().sum());
  return logits.array() - lse;
}

Eigen::VectorXd softmax(const Eigen::VectorXd& scores) {
  double m = scores.maxCoeff();
  Eigen::VectorXd e = (scores.array() - m).exp();
  return e / e.sum();
}

// Encoder over [<s>, h...]; returns hidden x (|h|+1) state matrix.
Eigen::MatrixXd run_encoder(const P2GModel& model, const std::vector<int>& h,
                            std::vector<int>* input_ids) {
  const auto& p = model.params;
  const int H = model.dims.hidden;
  input_ids->clear();
  input_ids->push_back(model.vocab.input_start());
  for (int t : h) input_ids->push_back(t);
  const int M = static_cast<int>(input_ids->size());

  Eigen::MatrixXd states(H, M);
  Eigen::VectorXd prev = Eigen::VectorXd::Zero(H);
  for (int j = 0; j < M; ++j) {
    Eigen::VectorXd x = p.in_embed.row((*input_ids)[j]).transpose();
    Eigen::VectorXd pre = p.enc_wx * x + p.enc_wh * prev + p.enc_b.col(0);
    states.col(j) = pre.array().tanh();
    prev = states.col(j);
  }
  return states;
}

// One decoder step from state s_prev with input token id; fills the caches
// the backward pass needs.
struct DecodeStep {
  Eigen::VectorXd state;    // s_i
  Eigen::VectorXd attn;     // alpha over encoder columns
  Eigen::VectorXd context;  // c_i
  Eigen::VectorXd logp;     // log-softmax over output vocab
};

DecodeStep decoder_step(const P2GModel& model, const Eigen::MatrixXd& enc,
                        const Eigen::VectorXd& s_prev, int input_id) {
  const auto& p = model.params;
  const int H = model.dims.hidden;
  DecodeStep out;
  Eigen::VectorXd x = p.out_embed.row(input_id).transpose();
  Eigen::VectorXd pre = p.dec_wx * x + p.dec_wh * s_prev + p.dec_b.col(0);
  out.state = pre.array().tanh();
  Eigen::VectorXd scores = enc.transpose() * out.state;
  out.attn = softmax(scores);
  out.context = enc * out.attn;
  Eigen::VectorXd z(2 * H);
  z << out.state, out.context;
  out.logp = log_softmax(p.out_w * z + p.out_b.col(0));
  return out;
}

}  // namespace

void P2GParams::resize(const ModelDims& dims, const P2GVocab& vocab) {
  in_embed.setZero(vocab.input_size(), dims.embedding);
  out_embed.setZero(vocab.output_size(), dims.embedding);
  enc_wx.setZero(dims.hidden, dims.embedding);
  enc_wh.setZero(dims.hidden, dims.hidden);
  enc_b.setZero(dims.hidden, 1);
  dec_wx.setZero(dims.hidden, dims.embedding);
  dec_wh.setZero(dims.hidden, dims.hidden);
  dec_b.setZero(dims.hidden, 1);
  out_w.setZero(vocab.output_size(), 2 * dims.hidden);
  out_b.setZero(vocab.output_size(), 1);
}

void P2GParams::set_zero() {
  for_each_parameter(*this, [](const char*, Eigen::MatrixXd& m) {
    m.setZero();
  });
}

double P2GParams::squared_norm() const {
  double acc = 0.0;
  for_each_parameter(*this, [&](const char*, const Eigen::MatrixXd& m) {
    acc += m.squaredNorm();
  });
  return acc;
}

void P2GParams::add_scaled(const P2GParams& other, double scale) {
  in_embed += scale * other.in_embed;
  out_embed += scale * other.out_embed;
  enc_wx += scale * other.enc_wx;
  enc_wh += scale * other.enc_wh;
  enc_b += scale * other.enc_b;
  dec_wx += scale * other.dec_wx;
  dec_wh += scale * other.dec_wh;
  dec_b += scale * other.dec_b;
  out_w += scale * other.out_w;
  out_b += scale * other.out_b;
}

P2GModel init_model(const ModelDims& dims, const P2GVocab& vocab,
                    uint64_t seed) {
  if (dims.embedding < 1 || dims.hidden < 1) {
    throw std::invalid_argument("init_model: dims must be positive");
  }
  if (vocab.phonemes.empty() || vocab.graphemes.empty()) {
    throw std::invalid_argument("init_model: empty vocabulary");
  }
  P2GModel model;
  model.dims = dims;
  model.vocab = vocab;
  model.params.resize(dims, vocab);

  Rng rng(mix_seed(seed, 0x90de1));
  for_each_parameter(model.params, [&](const char* name, Eigen::MatrixXd& m) {
    std::string_view n(name);
    if (n.ends_with("_b")) return;  // biases stay zero
    double r = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        m(i, j) = r * (2.0 * rng.uniform() - 1.0);
      }
    }
  });
  return model;
}

Eigen::VectorXd next_token_logprobs(const P2GModel& model,
                                    const std::vector<int>& phonemes,
                                    const std::vector<int>& y_prefix) {
  check_input_tokens(model, phonemes);
  check_output_tokens(model, y_prefix);
  std::vector<int> input_ids;
  Eigen::MatrixXd enc = run_encoder(model, phonemes, &input_ids);
  Eigen::VectorXd s = enc.col(enc.cols() - 1);
  int input = model.vocab.output_bos();
  DecodeStep step = decoder_step(model, enc, s, input);
  for (int tok : y_prefix) {
    s = step.state;
    step = decoder_step(model, enc, s, tok);
  }
  return step.logp;
}

double score_sequence(const P2GModel& model, const std::vector<int>& phonemes,
                      const std::vector<int>& target) {
  check_input_tokens(model, phonemes);
  check_output_tokens(model, target);
  std::vector<int> input_ids;
  Eigen::MatrixXd enc = run_encoder(model, phonemes, &input_ids);
  Eigen::VectorXd s = enc.col(enc.cols() - 1);

  double score = 0.0;
  int input = model.vocab.output_bos();
  for (size_t i = 0; i <= target.size(); ++i) {
    DecodeStep step = decoder_step(model, enc, s, input);
    int t = i < target.size() ? target[i] : model.vocab.output_eos();
    score += step.logp(t);
    s = step.state;
    input = t;
  }
  return score;
}

std::vector<ScoredSeq> beam_decode(const P2GModel& model,
                                   const std::vector<int>& phonemes,
                                   int beam_size, int max_len) {
  if (beam_size < 1) {
    throw std::invalid_argument("beam_decode: beam_size must be >= 1");
  }
  if (max_len < 0) {
    throw std::invalid_argument("beam_decode: negative max_len");
  }
  check_input_tokens(model, phonemes);
  std::vector<int> input_ids;
  Eigen::MatrixXd enc = run_encoder(model, phonemes, &input_ids);

  struct Item {
    std::vector<int> tokens;
    Eigen::VectorXd state;  // decoder state after consuming `input`
    int input;              // next decoder input token
    double logprob;
    bool finished;
  };
  const int G = static_cast<int>(model.vocab.graphemes.size());
  const int eos = model.vocab.output_eos();

  std::vector<Item> beam;
  beam.push_back(Item{{},
                      enc.col(enc.cols() - 1),
                      model.vocab.output_bos(),
                      0.0,
                      false});

  auto item_less = [](const Item& a, const Item& b) {
    if (a.logprob != b.logprob) return a.logprob > b.logprob;
    return a.tokens < b.tokens;
  };

  for (int round = 0; round <= max_len; ++round) {
    bool any_live = false;
    std::vector<Item> expanded;
    for (const Item& item : beam) {
      if (item.finished) {
        expanded.push_back(item);
        continue;
      }
      any_live = true;
      DecodeStep step = decoder_step(model, enc, item.state, item.input);
      // Finishing is always an option.
      Item done = item;
      done.finished = true;
      done.logprob += step.logp(eos);
      expanded.push_back(std::move(done));
      if (static_cast<int>(item.tokens.size()) < max_len) {
        for (int g = 0; g < G; ++g) {
          Item next = item;
          next.tokens.push_back(g);
          next.state = step.state;
          next.input = g;
          next.logprob += step.logp(g);
          next.finished = false;
          expanded.push_back(std::move(next));
        }
      }
    }
    if (!any_live) break;
    std::sort(expanded.begin(), expanded.end(), item_less);
    if (static_cast<int>(expanded.size()) > beam_size) {
      expanded.resize(beam_size);
    }
    beam.swap(expanded);
  }

  std::vector<ScoredSeq> out;
  for (const Item& item : beam) {
    if (item.finished) out.push_back({item.tokens, item.logprob});
  }
  return out;
}

double grad_nll(const P2GModel& model, std::span<const SupervisedPair> batch,
                P2GParams* grads) {
  if (batch.empty()) {
    throw std::invalid_argument("grad_nll: empty batch");
  }
  const auto& p = model.params;
  const int H = model.dims.hidden;
  double total_loss = 0.0;

  for (const SupervisedPair& pair : batch) {
    check_input_tokens(model, pair.phonemes);
    check_output_tokens(model, pair.target);
    const double w = pair.weight;

    std::vector<int> input_ids;
    Eigen::MatrixXd enc = run_encoder(model, pair.phonemes, &input_ids);
    const int M = static_cast<int>(enc.cols());

    // Teacher-forced forward with caches.
    const int N = static_cast<int>(pair.target.size()) + 1;
    std::vector<int> inputs(N), targets(N);
    for (int i = 0; i < N; ++i) {
      inputs[i] = i == 0 ? model.vocab.output_bos() : pair.target[i - 1];
      targets[i] = i < N - 1 ? pair.target[i] : model.vocab.output_eos();
    }
    std::vector<DecodeStep> steps(N);
    std::vector<Eigen::VectorXd> s_prev(N);
    Eigen::VectorXd s = enc.col(M - 1);
    double nll = 0.0;
    for (int i = 0; i < N; ++i) {
      s_prev[i] = s;
      steps[i] = decoder_step(model, enc, s, inputs[i]);
      nll -= steps[i].logp(targets[i]);
      s = steps[i].state;
    }
    total_loss += w * nll;
    if (w == 0.0) continue;

    // Backward.
    Eigen::MatrixXd denc = Eigen::MatrixXd::Zero(enc.rows(), enc.cols());
    Eigen::VectorXd ds_carry = Eigen::VectorXd::Zero(H);
    for (int i = N - 1; i >= 0; --i) {
      const DecodeStep& st = steps[i];
      Eigen::VectorXd dlogits = st.logp.array().exp();
      dlogits(targets[i]) -= 1.0;
      dlogits *= w;

      Eigen::VectorXd z(2 * H);
      z << st.state, st.context;
      grads->out_w += dlogits * z.transpose();
      grads->out_b.col(0) += dlogits;

      Eigen::VectorXd dz = p.out_w.transpose() * dlogits;
      Eigen::VectorXd ds = dz.head(H) + ds_carry;
      Eigen::VectorXd dc = dz.tail(H);

      // context = enc * attn
      Eigen::VectorXd dattn = enc.transpose() * dc;
      denc += dc * st.attn.transpose();

      // attn = softmax(enc^T s)
      double inner = st.attn.dot(dattn);
      Eigen::VectorXd dscore =
          st.attn.array() * (dattn.array() - inner);
      ds += enc * dscore;
      denc += st.state * dscore.transpose();

      // s = tanh(dec_wx x + dec_wh s_prev + dec_b)
      Eigen::VectorXd dpre =
          (1.0 - st.state.array().square()) * ds.array();
      Eigen::VectorXd x = p.out_embed.row(inputs[i]).transpose();
      grads->dec_wx += dpre * x.transpose();
      grads->dec_wh += dpre * s_prev[i].transpose();
      grads->dec_b.col(0) += dpre;
      grads->out_embed.row(inputs[i]) +=
          (p.dec_wx.transpose() * dpre).transpose();
      ds_carry = p.dec_wh.transpose() * dpre;
    }
    // s_0 was the last encoder state.
    denc.col(M - 1) += ds_carry;

    // Encoder backward.
    Eigen::VectorXd de_carry = Eigen::VectorXd::Zero(H);
    for (int j = M - 1; j >= 0; --j) {
      Eigen::VectorXd de = denc.col(j) + de_carry;
      Eigen::VectorXd dpre =
          (1.0 - enc.col(j).array().square()) * de.array();
      Eigen::VectorXd x = p.in_embed.row(input_ids[j]).transpose();
      grads->enc_wx += dpre * x.transpose();
      if (j > 0) grads->enc_wh += dpre * enc.col(j - 1).transpose();
      grads->enc_b.col(0) += dpre;
      grads->in_embed.row(input_ids[j]) +=
          (p.enc_wx.transpose() * dpre).transpose();
      de_carry = j > 0 ? (p.enc_wh.transpose() * dpre).eval()
                       : Eigen::VectorXd::Zero(H).eval();
    }
  }

  if (!std::isfinite(total_loss)) {
    throw std::runtime_error("grad_nll: non-finite loss");
  }
  return total_loss;
}

TrainTrace train_loop(P2GModel* model, int num_items, const TrainOptions& opts,
                      const BatchGradFn& batch_grad,
                      const DevLossFn& dev_loss) {
  if (num_items < 1) {
    throw std::invalid_argument("train_loop: empty dataset");
  }
  if (opts.batch_size < 1 || opts.max_epochs < 1 || opts.patience < 1) {
    throw std::invalid_argument("train_loop: bad options");
  }

  TrainTrace trace;
  P2GParams grads;
  grads.resize(model->dims, model->vocab);

  // Adam moments; parameter lists share the visitor order, so the four
  // structures stay aligned by index.
  P2GParams adam_m, adam_v;
  adam_m.resize(model->dims, model->vocab);
  adam_v.resize(model->dims, model->vocab);
  std::vector<Eigen::MatrixXd*> p_list, g_list, m_list, v_list;
  for_each_parameter(model->params,
                     [&](const char*, Eigen::MatrixXd& m) { p_list.push_back(&m); });
  for_each_parameter(grads,
                     [&](const char*, Eigen::MatrixXd& m) { g_list.push_back(&m); });
  for_each_parameter(adam_m,
                     [&](const char*, Eigen::MatrixXd& m) { m_list.push_back(&m); });
  for_each_parameter(adam_v,
                     [&](const char*, Eigen::MatrixXd& m) { v_list.push_back(&m); });
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kAdamEps = 1e-8;
  int64_t step = 0;

  P2GParams best = model->params;
  double best_dev = std::numeric_limits<double>::infinity();
  int since_best = 0;

  std::vector<int> order(num_items);
  for (int i = 0; i < num_items; ++i) order[i] = i;

  for (int epoch = 0; epoch < opts.max_epochs; ++epoch) {
    Rng rng(mix_seed(opts.seed, 0xe90c, static_cast<uint64_t>(epoch)));
    rng.shuffle(&order);

    double epoch_loss = 0.0;
    long epoch_tokens = 0;
    for (int start = 0; start < num_items; start += opts.batch_size) {
      int end = std::min(num_items, start + opts.batch_size);
      std::span<const int> items(order.data() + start,
                                 static_cast<size_t>(end - start));
      grads.set_zero();
      auto [loss, tokens] = batch_grad(items, epoch, &grads);
      epoch_loss += loss;
      epoch_tokens += tokens;

      double scale = 1.0 / static_cast<double>(items.size());
      if (opts.clip_norm > 0) {
        double norm = std::sqrt(grads.squared_norm()) * scale;
        if (norm > opts.clip_norm) scale *= opts.clip_norm / norm;
      }
      if (opts.optimizer == Optimizer::kSgd) {
        model->params.add_scaled(grads, -opts.learning_rate * scale);
      } else {
        ++step;
        double corr1 = 1.0 - std::pow(kBeta1, static_cast<double>(step));
        double corr2 = 1.0 - std::pow(kBeta2, static_cast<double>(step));
        for (size_t i = 0; i < p_list.size(); ++i) {
          Eigen::ArrayXXd g = g_list[i]->array() * scale;
          m_list[i]->array() = kBeta1 * m_list[i]->array() + (1 - kBeta1) * g;
          v_list[i]->array() =
              kBeta2 * v_list[i]->array() + (1 - kBeta2) * g.square();
          p_list[i]->array() -=
              opts.learning_rate * (m_list[i]->array() / corr1) /
              ((v_list[i]->array() / corr2).sqrt() + kAdamEps);
        }
      }
    }
    double mean_train =
        epoch_tokens > 0 ? epoch_loss / static_cast<double>(epoch_tokens) : 0.0;
    if (!std::isfinite(mean_train)) {
      throw std::runtime_error("train_loop: diverged at epoch " +
                               std::to_string(epoch) +
                               " (non-finite training loss)");
    }
    trace.train_loss.push_back(mean_train);

    double dev = dev_loss(*model);
    if (!std::isfinite(dev)) {
      throw std::runtime_error("train_loop: diverged at epoch " +
                               std::to_string(epoch) +
                               " (non-finite dev loss)");
    }
    trace.dev_loss.push_back(dev);

    if (dev < best_dev - 1e-12) {
      best_dev = dev;
      best = model->params;
      trace.best_epoch = epoch;
      since_best = 0;
    } else {
      ++since_best;
      if (since_best >= opts.patience) {
        trace.stopped_early = true;
        break;
      }
    }
  }
  model->params = best;
  return trace;
}

namespace {

std::pair<double, int> supervised_tokens(std::span<const SupervisedPair> items,
                                         const P2GModel& model) {
  double loss = 0.0;
  int tokens = 0;
  for (const auto& pair : items) {
    loss -= score_sequence(model, pair.phonemes, pair.target);
    tokens += static_cast<int>(pair.target.size()) + 1;
  }
  return {loss, tokens};
}

}  // namespace

TrainTrace train_with_dev(P2GModel* model,
                          std::span<const SupervisedPair> train_items,
                          const TrainOptions& opts, const DevLossFn& dev_loss) {
  if (train_items.empty()) {
    throw std::invalid_argument("train: empty dataset");
  }
  BatchGradFn batch_grad = [model, train_items](std::span<const int> items,
                                                int /*epoch*/,
                                                P2GParams* grads) {
    double loss = 0.0;
    int tokens = 0;
    for (int idx : items) {
      const SupervisedPair& pair = train_items[idx];
      loss += grad_nll(*model, std::span<const SupervisedPair>(&pair, 1),
                       grads);
      tokens += static_cast<int>(pair.target.size()) + 1;
    }
    return std::make_pair(loss, tokens);
  };
  return train_loop(model, static_cast<int>(train_items.size()), opts,
                    batch_grad, dev_loss);
}

TrainTrace train(P2GModel* model, std::span<const SupervisedPair> train_items,
                 std::span<const SupervisedPair> dev_items,
                 const TrainOptions& opts) {
  DevLossFn dev = [train_items, dev_items](const P2GModel& m) {
    auto items = dev_items.empty() ? train_items : dev_items;
    auto [loss, tokens] = supervised_tokens(items, m);
    return loss / std::max(1, tokens);
  };
  return train_with_dev(model, train_items, opts, dev);
}

nlohmann::json checkpoint_to_json(const P2GModel& model) {
  nlohmann::json params;
  for_each_parameter(
      model.params,
      [&](const char* name, const Eigen::MatrixXd& m) {
        nlohmann::json rows = nlohmann::json::array();
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
          nlohmann::json row = nlohmann::json::array();
          for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
          rows.push_back(std::move(row));
        }
        params[name] = std::move(rows);
      });
  return nlohmann::json{
      {"format", "p2g-checkpoint"},
      {"version", 1},
      {"dims",
       {{"embedding", model.dims.embedding}, {"hidden", model.dims.hidden}}},
      {"vocab",
       {{"phonemes", model.vocab.phonemes},
        {"graphemes", model.vocab.graphemes}}},
      {"params", std::move(params)}};
}

P2GModel checkpoint_from_json(const nlohmann::json& doc) {
  P2GModel model;
  try {
    if (doc.value("format", "") != "p2g-checkpoint") {
      throw SchemaError("checkpoint: not a p2g checkpoint");
    }
    if (doc.value("version", 0) != 1) {
      throw SchemaError("checkpoint: unsupported version " +
                        std::to_string(doc.value("version", 0)));
    }
    model.dims.embedding = doc.at("dims").at("embedding").get<int>();
    model.dims.hidden = doc.at("dims").at("hidden").get<int>();
    model.vocab.phonemes =
        doc.at("vocab").at("phonemes").get<std::vector<std::string>>();
    model.vocab.graphemes =
        doc.at("vocab").at("graphemes").get<std::vector<std::string>>();
    model.params.resize(model.dims, model.vocab);
    const auto& params = doc.at("params");
    for_each_parameter(model.params, [&](const char* name,
                                         Eigen::MatrixXd& m) {
      const auto& rows = params.at(name);
      if (static_cast<Eigen::Index>(rows.size()) != m.rows()) {
        throw SchemaError(std::string("checkpoint: bad shape for ") + name);
      }
      for (Eigen::Index i = 0; i < m.rows(); ++i) {
        const auto& row = rows.at(i);
        if (static_cast<Eigen::Index>(row.size()) != m.cols()) {
          throw SchemaError(std::string("checkpoint: bad shape for ") + name);
        }
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
          m(i, j) = row.at(j).get<double>();
        }
      }
    });
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("checkpoint: ") + e.what());
  }
  return model;
}

void save_checkpoint(const P2GModel& model,
                     const std::filesystem::path& path) {
  write_json_file(path, checkpoint_to_json(model));
}

P2GModel load_checkpoint(const std::filesystem::path& path) {
  return checkpoint_from_json(read_json_file(path));
}

}  // namespace p2g
