// p2g/pipeline.cc

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

#include "p2g/pipeline.h"

#include <atomic>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <thread>

#include "p2g/errors.h"
#include "p2g/jsonl.h"
#include "p2g/logmath.h"
#include "p2g/rng.h"

namespace p2g {

namespace {

constexpr const char* kSplits[] = {"train", "dev", "test"};

std::string stage_decode_name(TrainRegime regime, DecodeMode mode) {
  return std::string("decode-") + regime_name(regime) + "-" +
         decode_mode_name(mode);
}

std::string stage_rescore_name(TrainRegime regime, DecodeMode mode) {
  return std::string("rescore-") + regime_name(regime) + "-" +
         decode_mode_name(mode);
}

std::string stage_eval_name(TrainRegime regime, DecodeMode mode,
                            bool rescored) {
  return std::string("eval-") + regime_name(regime) + "-" +
         decode_mode_name(mode) + (rescored ? "-lm" : "");
}

uint64_t stream_seed(const ExperimentConfig& cfg, const std::string& tag) {
  return mix_seed(cfg.seed, hash_string(tag));
}

NoiseSpec effective_noise(const ExperimentConfig& cfg, const NoiseSpec& spec,
                          const std::string& tag) {
  NoiseSpec n = spec;
  n.seed = mix_seed(cfg.seed, spec.seed, hash_string(tag));
  return n;
}

nlohmann::json hypotheses_to_json(const Lexicon& lex, const std::string& utt_id,
                                  const HypothesisSet& set) {
  nlohmann::json hyps = nlohmann::json::array();
  for (const auto& h : set.hypotheses) {
    nlohmann::json tokens = nlohmann::json::array();
    for (int p : h.tokens) tokens.push_back(lex.phoneme_inventory.at(p));
    hyps.push_back({{"tokens", std::move(tokens)},
                    {"acoustic_logprob", h.acoustic_logprob}});
  }
  return nlohmann::json{
      {"utt_id", utt_id}, {"origin", "beam"}, {"hypotheses", std::move(hyps)}};
}

HypothesisSet hypotheses_from_json(const Lexicon& lex,
                                   const nlohmann::json& record) {
  HypothesisSet set;
  set.origin = HypothesisOrigin::kBeam;
  try {
    for (const auto& h : record.at("hypotheses")) {
      PhonemeHypothesis ph;
      for (const auto& t : h.at("tokens")) {
        int id = lex.phoneme_id(t.get<std::string>());
        if (id < 0) {
          throw SchemaError("hypotheses: unknown phoneme " +
                            t.get<std::string>());
        }
        ph.tokens.push_back(id);
      }
      ph.acoustic_logprob = h.at("acoustic_logprob").get<double>();
      set.hypotheses.push_back(std::move(ph));
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("hypotheses record: ") + e.what());
  }
  return set;
}

nlohmann::json candidates_to_json(const Lexicon& lex, const std::string& utt_id,
                                  const std::vector<Candidate>& candidates) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& c : candidates) {
    nlohmann::json tokens = nlohmann::json::array();
    for (int w : c.tokens) tokens.push_back(lex.words.at(w).word);
    nlohmann::json jc{{"tokens", std::move(tokens)},
                      {"tkm_logscore", c.tkm_logscore},
                      {"provenance", c.provenance}};
    jc["lm_logscore"] =
        c.lm_logscore ? nlohmann::json(*c.lm_logscore) : nlohmann::json();
    jc["combined_logscore"] = c.combined_logscore
                                  ? nlohmann::json(*c.combined_logscore)
                                  : nlohmann::json();
    arr.push_back(std::move(jc));
  }
  return nlohmann::json{{"utt_id", utt_id}, {"candidates", std::move(arr)}};
}

std::vector<Candidate> candidates_from_json(const Lexicon& lex,
                                            const nlohmann::json& record) {
  std::vector<Candidate> out;
  try {
    for (const auto& jc : record.at("candidates")) {
      Candidate c;
      for (const auto& t : jc.at("tokens")) {
        int id = lex.word_id(t.get<std::string>());
        if (id < 0) {
          throw SchemaError("candidates: unknown word " + t.get<std::string>());
        }
        c.tokens.push_back(id);
      }
      c.tkm_logscore = jc.at("tkm_logscore").get<double>();
      if (!jc.at("lm_logscore").is_null()) {
        c.lm_logscore = jc.at("lm_logscore").get<double>();
      }
      if (!jc.at("combined_logscore").is_null()) {
        c.combined_logscore = jc.at("combined_logscore").get<double>();
      }
      c.provenance = jc.at("provenance").get<std::vector<int>>();
      out.push_back(std::move(c));
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("candidates record: ") + e.what());
  }
  return out;
}

P2GVocab vocab_from_lexicon(const Lexicon& lex) {
  P2GVocab vocab;
  vocab.phonemes = lex.phoneme_inventory;
  vocab.graphemes = lex.grapheme_inventory;
  return vocab;
}

std::vector<std::vector<std::string>> corpus_text(
    const Lexicon& lex, const std::vector<Utterance>& corpus) {
  std::vector<std::vector<std::string>> text;
  text.reserve(corpus.size());
  for (const auto& utt : corpus) {
    std::vector<std::string> words;
    words.reserve(utt.text.size());
    for (int w : utt.text) words.push_back(lex.words[w].word);
    text.push_back(std::move(words));
  }
  return text;
}

// Reference tokens per utterance, for eval joins.
std::vector<UttTokens> corpus_refs(const std::vector<Utterance>& corpus) {
  std::vector<UttTokens> refs;
  refs.reserve(corpus.size());
  for (const auto& utt : corpus) refs.push_back({utt.utt_id, utt.text});
  return refs;
}

struct UttCandidates {
  std::string utt_id;
  std::vector<Candidate> candidates;
};

std::vector<UttCandidates> load_candidates(const Lexicon& lex,
                                           const std::filesystem::path& file) {
  std::vector<UttCandidates> out;
  for (const auto& record : read_jsonl(file)) {
    out.push_back({record.at("utt_id").get<std::string>(),
                   candidates_from_json(lex, record)});
  }
  return out;
}

std::vector<UttTokens> top1_tokens(const std::vector<UttCandidates>& decoded) {
  std::vector<UttTokens> hyps;
  hyps.reserve(decoded.size());
  for (const auto& uc : decoded) {
    hyps.push_back({uc.utt_id, uc.candidates.empty()
                                   ? std::vector<int>{}
                                   : uc.candidates.front().tokens});
  }
  return hyps;
}

double wer_of(const std::vector<UttTokens>& refs,
              const std::vector<UttTokens>& hyps) {
  return corpus_errors(refs, hyps).rate();
}

nlohmann::json trace_to_json(const TrainTrace& trace) {
  return nlohmann::json{{"train_loss", trace.train_loss},
                        {"dev_loss", trace.dev_loss},
                        {"best_epoch", trace.best_epoch},
                        {"stopped_early", trace.stopped_early}};
}

DanpConfig danp_config(const ExperimentConfig& cfg) {
  DanpConfig danp_cfg;
  danp_cfg.beam_size = cfg.danp.beam_size;
  danp_cfg.num_samples = cfg.danp.num_samples;
  danp_cfg.include_clean = cfg.danp.include_clean;
  danp_cfg.max_phoneme_len = cfg.tkm.max_len;
  for (size_t i = 0; i < cfg.danp.checkpoints.size(); ++i) {
    danp_cfg.checkpoints.push_back(effective_noise(
        cfg, cfg.danp.checkpoints[i], "ckpt-" + std::to_string(i)));
  }
  return danp_cfg;
}

}  // namespace

std::filesystem::path stage_dir_for_write(const std::filesystem::path& out,
                                          const std::string& stage) {
  std::filesystem::create_directories(out);
  std::filesystem::path base = out / stage;
  if (!std::filesystem::exists(base) || std::filesystem::is_empty(base)) {
    std::filesystem::create_directories(base);
    return base;
  }
  for (int v = 2;; ++v) {
    std::filesystem::path versioned = out / (stage + ".v" + std::to_string(v));
    if (!std::filesystem::exists(versioned)) {
      std::filesystem::create_directories(versioned);
      return versioned;
    }
  }
}

std::filesystem::path stage_dir_for_read(const std::filesystem::path& out,
                                         const std::string& stage) {
  std::filesystem::path best;
  int best_version = -1;
  std::filesystem::path base = out / stage;
  if (std::filesystem::exists(base) && !std::filesystem::is_empty(base)) {
    best = base;
    best_version = 1;
  }
  for (int v = 2;; ++v) {
    std::filesystem::path versioned = out / (stage + ".v" + std::to_string(v));
    if (!std::filesystem::exists(versioned)) break;
    best = versioned;
    best_version = v;
  }
  if (best_version < 0) {
    throw MissingInputError("stage '" + stage + "' has no artifacts under " +
                            out.string() + "; run the upstream subcommand");
  }
  return best;
}

void parallel_for(int n, int workers, const std::function<void(int)>& fn) {
  if (n <= 0) return;
  if (workers <= 0) {
    workers = static_cast<int>(std::thread::hardware_concurrency());
  }
  workers = std::max(1, std::min(workers, n));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&]() {
      while (true) {
        int i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mu);
          if (!error) error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

TrainRegime regime_from_name(const std::string& name) {
  if (name == "clean") return TrainRegime::kClean;
  if (name == "danp") return TrainRegime::kDanp;
  if (name == "tkm") return TrainRegime::kTkm;
  if (name == "rtkm") return TrainRegime::kRtkm;
  throw ConfigError("unknown training regime '" + name + "'");
}

const char* regime_name(TrainRegime regime) {
  switch (regime) {
    case TrainRegime::kClean:
      return "clean";
    case TrainRegime::kDanp:
      return "danp";
    case TrainRegime::kTkm:
      return "tkm";
    case TrainRegime::kRtkm:
      return "rtkm";
  }
  return "clean";
}

DecodeMode decode_mode_from_name(const std::string& name) {
  if (name == "best-path") return DecodeMode::kBestPath;
  if (name == "tkm") return DecodeMode::kTkm;
  throw ConfigError("unknown decode mode '" + name + "'");
}

const char* decode_mode_name(DecodeMode mode) {
  return mode == DecodeMode::kBestPath ? "best-path" : "tkm";
}

Lexicon load_lexicon(const std::filesystem::path& out) {
  return lexicon_from_json(
      read_json_file(stage_dir_for_read(out, "synth") / "lexicon.json"));
}

std::vector<Utterance> load_corpus(const std::filesystem::path& out,
                                   const std::string& split, bool with_frames) {
  std::filesystem::path dir = stage_dir_for_read(out, "synth");
  Lexicon lex = lexicon_from_json(read_json_file(dir / "lexicon.json"));
  std::vector<Utterance> corpus;
  for (const auto& record :
       read_jsonl(dir / ("corpus." + split + ".jsonl"))) {
    corpus.push_back(utterance_from_json(lex, record));
  }
  if (with_frames) {
    auto frames = read_jsonl(dir / ("frames." + split + ".jsonl"));
    if (frames.size() != corpus.size()) {
      throw SchemaError("frames." + split + " does not match corpus size");
    }
    for (size_t i = 0; i < corpus.size(); ++i) {
      FrameLogits fl = frame_logits_from_json(frames[i]);
      if (fl.utt_id != corpus[i].utt_id) {
        throw SchemaError("frames." + split + " utt_id mismatch at line " +
                          std::to_string(i + 1));
      }
      corpus[i].frame_logits = std::move(fl);
    }
  }
  return corpus;
}

std::vector<TKMBatchItem> load_hypothesis_items(
    const std::filesystem::path& out, const std::string& split, int top_k) {
  Lexicon lex = load_lexicon(out);
  std::vector<Utterance> corpus = load_corpus(out, split, false);
  std::filesystem::path file =
      stage_dir_for_read(out, "s2p") / ("hyps." + split + ".jsonl");
  auto records = read_jsonl(file);
  if (records.size() != corpus.size()) {
    throw SchemaError(file.string() + " does not match corpus size");
  }
  std::vector<TKMBatchItem> items;
  items.reserve(records.size());
  for (size_t i = 0; i < records.size(); ++i) {
    TKMBatchItem item;
    item.utt_id = records[i].at("utt_id").get<std::string>();
    if (item.utt_id != corpus[i].utt_id) {
      throw SchemaError(file.string() + ": utt_id mismatch at line " +
                        std::to_string(i + 1));
    }
    item.hypotheses = hypotheses_from_json(lex, records[i]);
    if (top_k > 0 &&
        static_cast<int>(item.hypotheses.hypotheses.size()) > top_k) {
      item.hypotheses.hypotheses.resize(top_k);
    }
    item.target = corpus[i].text;
    items.push_back(std::move(item));
  }
  return items;
}

P2GModel load_regime_model(const std::filesystem::path& out,
                           TrainRegime regime) {
  std::filesystem::path dir =
      stage_dir_for_read(out, std::string("train-") + regime_name(regime));
  return load_checkpoint(dir / "model.json");
}

void stage_synth_gen(const ExperimentConfig& cfg,
                     const std::filesystem::path& out) {
  std::filesystem::path dir = stage_dir_for_write(out, "synth");
  Lexicon lex = build_toy_language(cfg.synth, stream_seed(cfg, "lexicon"));
  write_json_file(dir / "lexicon.json", lexicon_to_json(lex));

  NoiseSpec noise = effective_noise(cfg, cfg.noise, "emit");
  struct SplitSpec {
    const char* name;
    int count;
    bool frames;
  };
  const SplitSpec splits[] = {{"train", cfg.corpus.train_utts, true},
                              {"dev", cfg.corpus.dev_utts, true},
                              {"test", cfg.corpus.test_utts, true},
                              {"lmtext", cfg.corpus.lm_text_utts, false}};
  for (const auto& split : splits) {
    if (split.count <= 0) continue;
    auto corpus = generate_corpus(lex, split.count, cfg.corpus.len_min,
                                  cfg.corpus.len_max,
                                  stream_seed(cfg, std::string("corpus-") +
                                                       split.name),
                                  split.name);
    std::vector<nlohmann::json> records(corpus.size());
    for (size_t i = 0; i < corpus.size(); ++i) {
      records[i] = utterance_to_json(lex, corpus[i]);
    }
    write_jsonl(dir / ("corpus." + std::string(split.name) + ".jsonl"),
                records);
    if (!split.frames) continue;
    std::vector<nlohmann::json> frames(corpus.size());
    parallel_for(static_cast<int>(corpus.size()), cfg.workers, [&](int i) {
      FrameLogits fl = emit_for_utterance(lex, corpus[i], noise);
      frames[i] = frame_logits_to_json(fl);
    });
    write_jsonl(dir / ("frames." + std::string(split.name) + ".jsonl"),
                frames);
  }
}

void stage_s2p_decode(const ExperimentConfig& cfg,
                      const std::filesystem::path& out) {
  Lexicon lex = load_lexicon(out);
  std::filesystem::path dir = stage_dir_for_write(out, "s2p");
  const int top_k = std::max(cfg.tkm.train_topk, cfg.tkm.decode_topk);
  for (const char* split : kSplits) {
    auto corpus = load_corpus(out, split, true);
    std::vector<nlohmann::json> records(corpus.size());
    parallel_for(static_cast<int>(corpus.size()), cfg.workers, [&](int i) {
      HypothesisSet set =
          prefix_beam_search(*corpus[i].frame_logits, top_k, cfg.tkm.max_len);
      records[i] = hypotheses_to_json(lex, corpus[i].utt_id, set);
    });
    write_jsonl(dir / ("hyps." + std::string(split) + ".jsonl"), records);
  }
}

void stage_danp_build(const ExperimentConfig& cfg,
                      const std::filesystem::path& out) {
  Lexicon lex = load_lexicon(out);
  auto corpus = load_corpus(out, "train", true);

  AugmentedDataset ds =
      build_augmented(lex, corpus, danp_config(cfg), stream_seed(cfg, "danp"));

  std::filesystem::path dir = stage_dir_for_write(out, "danp");
  std::vector<nlohmann::json> records(ds.items.size());
  for (size_t i = 0; i < ds.items.size(); ++i) {
    records[i] = augmented_item_to_json(lex, ds.items[i]);
  }
  write_jsonl(dir / "danp.train.jsonl", records);
  write_json_file(dir / "stats.json",
                  {{"beam_raw", ds.stats.beam_raw},
                   {"sampled_raw", ds.stats.sampled_raw},
                   {"clean_raw", ds.stats.clean_raw},
                   {"kept", ds.stats.kept},
                   {"dedup_ratio", ds.stats.dedup_ratio}});
}

void stage_train(const ExperimentConfig& cfg, const std::filesystem::path& out,
                 TrainRegime regime) {
  Lexicon lex = load_lexicon(out);
  P2GVocab vocab = vocab_from_lexicon(lex);
  const std::string name = regime_name(regime);
  // tkm and rtkm share seed streams so that rtkm with n = K reproduces tkm
  // checkpoint-for-checkpoint.
  const bool marginal =
      regime == TrainRegime::kTkm || regime == TrainRegime::kRtkm;
  const std::string seed_tag = marginal ? "marginal" : name;

  P2GModel model = init_model(cfg.model, vocab,
                              stream_seed(cfg, "init-" + seed_tag));
  TrainOptions opts = cfg.train;
  opts.seed = stream_seed(cfg, "train-" + seed_tag);

  TrainTrace trace;
  switch (regime) {
    case TrainRegime::kClean: {
      auto train_corpus = load_corpus(out, "train", false);
      auto dev_corpus = load_corpus(out, "dev", false);
      std::vector<SupervisedPair> train_pairs, dev_pairs;
      for (const auto& u : train_corpus) {
        train_pairs.push_back({u.reference_phonemes, u.text, 1.0});
      }
      for (const auto& u : dev_corpus) {
        dev_pairs.push_back({u.reference_phonemes, u.text, 1.0});
      }
      trace = train(&model, train_pairs, dev_pairs, opts);
      break;
    }
    case TrainRegime::kDanp: {
      auto records = read_jsonl(stage_dir_for_read(out, "danp") /
                                "danp.train.jsonl");
      std::vector<SupervisedPair> pairs;
      for (const auto& r : records) {
        AugmentedItem item = augmented_item_from_json(lex, r);
        pairs.push_back({std::move(item.phonemes), std::move(item.target), 1.0});
      }
      // Early stopping on dev WER under the decode-time condition (1-best
      // input): dev cross-entropy on noisy pairs keeps rising as the model
      // sharpens even while accuracy improves, so it cannot gate here.
      auto dev_items = load_hypothesis_items(out, "dev", 1);
      DevLossFn dev_wer = [&](const P2GModel& m) {
        std::vector<UttTokens> refs(dev_items.size()), hyps(dev_items.size());
        parallel_for(static_cast<int>(dev_items.size()), cfg.workers,
                     [&](int i) {
                       refs[i] = {dev_items[i].utt_id, dev_items[i].target};
                       auto cands = tkm_decode(m, dev_items[i].hypotheses,
                                               cfg.tkm.beam_size,
                                               cfg.tkm.max_len);
                       hyps[i] = {dev_items[i].utt_id,
                                  cands.empty() ? std::vector<int>{}
                                                : cands.front().tokens};
                     });
        return corpus_errors(refs, hyps).rate();
      };
      trace = train_with_dev(&model, pairs, opts, dev_wer);
      break;
    }
    case TrainRegime::kTkm:
    case TrainRegime::kRtkm: {
      auto items = load_hypothesis_items(out, "train", cfg.tkm.train_topk);
      int randomized_n =
          regime == TrainRegime::kRtkm ? cfg.tkm.randomized_n : 0;
      // Dev metric: WER of marginalized decoding over the top-n (randomized)
      // or top-K hypotheses, i.e. the decode this model will actually run.
      const int dev_k = randomized_n > 0 ? randomized_n : cfg.tkm.train_topk;
      auto dev_items = load_hypothesis_items(out, "dev", dev_k);
      DevLossFn dev_wer = [&](const P2GModel& m) {
        std::vector<UttTokens> refs(dev_items.size()), hyps(dev_items.size());
        parallel_for(static_cast<int>(dev_items.size()), cfg.workers,
                     [&](int i) {
                       refs[i] = {dev_items[i].utt_id, dev_items[i].target};
                       auto cands = tkm_decode(m, dev_items[i].hypotheses,
                                               cfg.tkm.beam_size,
                                               cfg.tkm.max_len);
                       hyps[i] = {dev_items[i].utt_id,
                                  cands.empty() ? std::vector<int>{}
                                                : cands.front().tokens};
                     });
        return corpus_errors(refs, hyps).rate();
      };
      trace = train_marginal_with_dev(&model, items, cfg.tkm.train_topk,
                                      randomized_n, opts, dev_wer);
      break;
    }
  }

  std::filesystem::path dir = stage_dir_for_write(out, "train-" + name);
  save_checkpoint(model, dir / "model.json");
  write_json_file(dir / "trace.json", trace_to_json(trace));
}

void stage_decode(const ExperimentConfig& cfg, const std::filesystem::path& out,
                  TrainRegime regime, DecodeMode mode) {
  Lexicon lex = load_lexicon(out);
  P2GModel model = load_regime_model(out, regime);
  const int top_k = mode == DecodeMode::kBestPath ? 1 : cfg.tkm.decode_topk;

  std::filesystem::path dir =
      stage_dir_for_write(out, stage_decode_name(regime, mode));
  for (const char* split : {"dev", "test"}) {
    auto items = load_hypothesis_items(out, split, top_k);
    std::vector<nlohmann::json> records(items.size());
    parallel_for(static_cast<int>(items.size()), cfg.workers, [&](int i) {
      auto candidates = tkm_decode(model, items[i].hypotheses,
                                   cfg.tkm.beam_size, cfg.tkm.max_len);
      records[i] = candidates_to_json(lex, items[i].utt_id, candidates);
    });
    write_jsonl(dir / ("candidates." + std::string(split) + ".jsonl"),
                records);
  }
}

void stage_rescore(const ExperimentConfig& cfg,
                   const std::filesystem::path& out, TrainRegime regime,
                   DecodeMode mode) {
  Lexicon lex = load_lexicon(out);
  auto lm_train = corpus_text(lex, load_corpus(out, "train", false));
  {
    auto extra = corpus_text(lex, load_corpus(out, "lmtext", false));
    lm_train.insert(lm_train.end(), extra.begin(), extra.end());
  }
  NGramLM lm = NGramLM::train(
      lm_train, {.order = cfg.lm.order, .add_k = cfg.lm.add_k});

  std::filesystem::path decode_dir =
      stage_dir_for_read(out, stage_decode_name(regime, mode));
  auto dev_candidates = load_candidates(lex, decode_dir / "candidates.dev.jsonl");
  auto dev_refs = corpus_refs(load_corpus(out, "dev", false));

  auto rescore_all = [&](const std::vector<UttCandidates>& decoded,
                         double lambda, double beta) {
    std::vector<UttCandidates> rescored(decoded.size());
    parallel_for(static_cast<int>(decoded.size()), cfg.workers, [&](int i) {
      rescored[i].utt_id = decoded[i].utt_id;
      rescored[i].candidates =
          rescore_with_lm(decoded[i].candidates, lm, lambda, beta,
                          lex.grapheme_inventory);
    });
    return rescored;
  };

  // (lambda, beta) tuned jointly on dev WER when grids are configured; ties
  // go to the earliest grid entry. The length reward pays for the LM's
  // per-word cost, without it the LM just buys deletions.
  double lambda = cfg.lm.lambda;
  double beta = cfg.lm.beta;
  nlohmann::json dev_grid = nlohmann::json::array();
  if (!cfg.lm.lambda_grid.empty()) {
    std::vector<double> betas =
        cfg.lm.beta_grid.empty() ? std::vector<double>{cfg.lm.beta}
                                 : cfg.lm.beta_grid;
    double best_wer = std::numeric_limits<double>::infinity();
    double best_lambda = cfg.lm.lambda_grid.front();
    double best_beta = betas.front();
    for (double l : cfg.lm.lambda_grid) {
      for (double b : betas) {
        double wer =
            wer_of(dev_refs, top1_tokens(rescore_all(dev_candidates, l, b)));
        dev_grid.push_back({{"lambda", l}, {"beta", b}, {"wer", wer}});
        if (wer < best_wer - 1e-12) {
          best_wer = wer;
          best_lambda = l;
          best_beta = b;
        }
      }
    }
    lambda = best_lambda;
    beta = best_beta;
  }

  std::filesystem::path dir =
      stage_dir_for_write(out, stage_rescore_name(regime, mode));
  for (const char* split : {"dev", "test"}) {
    auto decoded = split == std::string("dev")
                       ? dev_candidates
                       : load_candidates(
                             lex, decode_dir / ("candidates." +
                                                std::string(split) + ".jsonl"));
    auto rescored = rescore_all(decoded, lambda, beta);
    std::vector<nlohmann::json> records(rescored.size());
    for (size_t i = 0; i < rescored.size(); ++i) {
      records[i] = candidates_to_json(lex, rescored[i].utt_id,
                                      rescored[i].candidates);
    }
    write_jsonl(dir / ("candidates." + std::string(split) + ".jsonl"),
                records);
  }
  write_json_file(dir / "summary.json", {{"lambda", lambda},
                                         {"beta", beta},
                                         {"dev_grid", std::move(dev_grid)}});
  write_json_file(dir / "lm.json", lm.to_json());
}

EvalResult stage_eval(const ExperimentConfig& /*cfg*/,
                      const std::filesystem::path& out, TrainRegime regime,
                      DecodeMode mode, bool rescored,
                      const std::string& split) {
  Lexicon lex = load_lexicon(out);
  auto refs = corpus_refs(load_corpus(out, split, false));
  std::filesystem::path source_dir = stage_dir_for_read(
      out, rescored ? stage_rescore_name(regime, mode)
                    : stage_decode_name(regime, mode));
  auto decoded =
      load_candidates(lex, source_dir / ("candidates." + split + ".jsonl"));
  auto hyps = top1_tokens(decoded);

  EvalResult result;
  result.totals = corpus_errors(refs, hyps);
  result.wer = result.totals.rate();
  for (size_t i = 0; i < refs.size(); ++i) {
    result.per_utt_errors.emplace_back(
        refs[i].utt_id,
        edit_errors(refs[i].tokens, hyps[i].tokens).total_errors());
  }

  nlohmann::json per_utt = nlohmann::json::array();
  for (size_t i = 0; i < refs.size(); ++i) {
    per_utt.push_back({{"utt_id", refs[i].utt_id},
                       {"errors", result.per_utt_errors[i].second},
                       {"ref_len", static_cast<int>(refs[i].tokens.size())}});
  }
  nlohmann::json report{{"split", split},
                        {"wer", result.wer},
                        {"S", result.totals.substitutions},
                        {"I", result.totals.insertions},
                        {"D", result.totals.deletions},
                        {"N_ref", result.totals.reference_length},
                        {"per_utt", std::move(per_utt)}};

  std::filesystem::path dir =
      stage_dir_for_write(out, stage_eval_name(regime, mode, rescored));
  write_json_file(dir / ("report." + split + ".json"), report);

  std::ofstream text(dir / ("report." + split + ".txt"));
  char line[160];
  std::snprintf(line, sizeof(line), "%-28s %8s %6s %6s %6s %8s\n", "system",
                "WER", "S", "I", "D", "N_ref");
  text << line;
  std::snprintf(line, sizeof(line), "%-28s %8.4f %6d %6d %6d %8d\n",
                (std::string(regime_name(regime)) + "/" +
                 decode_mode_name(mode) + (rescored ? "/lm" : ""))
                    .c_str(),
                result.wer, result.totals.substitutions,
                result.totals.insertions, result.totals.deletions,
                result.totals.reference_length);
  text << line;
  return result;
}

MatchedPairsResult stage_significance(const std::filesystem::path& report_a,
                                      const std::filesystem::path& report_b,
                                      const std::filesystem::path& out_file) {
  nlohmann::json a = read_json_file(report_a);
  nlohmann::json b = read_json_file(report_b);
  std::vector<int> errors_a, errors_b;
  try {
    const auto& pa = a.at("per_utt");
    const auto& pb = b.at("per_utt");
    if (pa.size() != pb.size()) {
      throw SchemaError("significance: reports cover different utterances");
    }
    for (size_t i = 0; i < pa.size(); ++i) {
      if (pa.at(i).at("utt_id") != pb.at(i).at("utt_id")) {
        throw SchemaError("significance: utt_id mismatch at index " +
                          std::to_string(i));
      }
      errors_a.push_back(pa.at(i).at("errors").get<int>());
      errors_b.push_back(pb.at(i).at("errors").get<int>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("significance: ") + e.what());
  }
  MatchedPairsResult res = matched_pairs_test(errors_a, errors_b);
  nlohmann::json doc{{"p_value", res.p_value},
                     {"z", res.z},
                     {"degenerate", res.degenerate},
                     {"n", static_cast<int>(errors_a.size())},
                     {"report_a", report_a.filename().string()},
                     {"report_b", report_b.filename().string()}};
  if (!out_file.empty()) write_json_file(out_file, doc);
  return res;
}

nlohmann::json stage_experiment_matrix(const ExperimentConfig& cfg,
                                       const std::filesystem::path& out) {
  stage_synth_gen(cfg, out);
  stage_s2p_decode(cfg, out);

  std::vector<TrainRegime> regimes;
  for (const auto& name : cfg.matrix_regimes) {
    regimes.push_back(regime_from_name(name));
  }
  bool needs_danp = false;
  for (TrainRegime r : regimes) needs_danp |= r == TrainRegime::kDanp;
  if (needs_danp) stage_danp_build(cfg, out);

  const DecodeMode modes[] = {DecodeMode::kBestPath, DecodeMode::kTkm};

  struct Cell {
    TrainRegime regime;
    DecodeMode mode;
    bool lm;
    EvalResult eval;
  };
  std::vector<Cell> cells;

  for (TrainRegime regime : regimes) {
    stage_train(cfg, out, regime);
    for (DecodeMode mode : modes) {
      stage_decode(cfg, out, regime, mode);
      stage_rescore(cfg, out, regime, mode);
      for (bool lm : {false, true}) {
        cells.push_back(
            {regime, mode, lm,
             stage_eval(cfg, out, regime, mode, lm, "test")});
      }
    }
  }

  auto find_cell = [&](TrainRegime r, DecodeMode m, bool lm) -> const Cell* {
    for (const auto& c : cells) {
      if (c.regime == r && c.mode == m && c.lm == lm) return &c;
    }
    return nullptr;
  };

  auto cell_tag = [](const Cell& c) {
    return std::string(regime_name(c.regime)) + "/" +
           decode_mode_name(c.mode) + (c.lm ? "/lm" : "");
  };

  // Pairwise tests: every pair of regimes within one (mode, lm) column, plus
  // the cross-mode comparisons inside each regime.
  std::vector<std::pair<const Cell*, const Cell*>> pairs;
  for (DecodeMode mode : modes) {
    for (bool lm : {false, true}) {
      for (size_t i = 0; i < regimes.size(); ++i) {
        for (size_t j = i + 1; j < regimes.size(); ++j) {
          pairs.push_back({find_cell(regimes[i], mode, lm),
                           find_cell(regimes[j], mode, lm)});
        }
      }
    }
  }
  for (TrainRegime regime : regimes) {
    for (bool lm : {false, true}) {
      pairs.push_back({find_cell(regime, DecodeMode::kBestPath, lm),
                       find_cell(regime, DecodeMode::kTkm, lm)});
    }
  }

  nlohmann::json jcells = nlohmann::json::array();
  for (const auto& c : cells) {
    jcells.push_back({{"regime", regime_name(c.regime)},
                      {"mode", decode_mode_name(c.mode)},
                      {"lm", c.lm},
                      {"wer", c.eval.wer},
                      {"S", c.eval.totals.substitutions},
                      {"I", c.eval.totals.insertions},
                      {"D", c.eval.totals.deletions},
                      {"N_ref", c.eval.totals.reference_length}});
  }
  nlohmann::json jpairs = nlohmann::json::array();
  for (const auto& [a, b] : pairs) {
    std::vector<int> ea, eb;
    for (const auto& [id, e] : a->eval.per_utt_errors) {
      (void)id;
      ea.push_back(e);
    }
    for (const auto& [id, e] : b->eval.per_utt_errors) {
      (void)id;
      eb.push_back(e);
    }
    MatchedPairsResult mp = matched_pairs_test(ea, eb);
    jpairs.push_back({{"a", cell_tag(*a)},
                      {"b", cell_tag(*b)},
                      {"p_value", mp.p_value},
                      {"z", mp.z},
                      {"degenerate", mp.degenerate}});
  }

  nlohmann::json matrix{{"config", config_to_json(cfg)},
                        {"split", "test"},
                        {"cells", std::move(jcells)},
                        {"pairs", std::move(jpairs)}};

  std::filesystem::path dir = stage_dir_for_write(out, "matrix");
  write_json_file(dir / "matrix.json", matrix);

  std::ofstream text(dir / "matrix.txt");
  char line[200];
  std::snprintf(line, sizeof(line), "%-8s %22s %22s\n", "",
                "best-path decode", "tkm decode");
  text << "Word error rate (test split)\n" << line;
  std::snprintf(line, sizeof(line), "%-8s %10s %10s %12s %10s\n", "train",
                "w/o LM", "w LM", "w/o LM", "w LM");
  text << line;
  for (TrainRegime regime : regimes) {
    const Cell* bp0 = find_cell(regime, DecodeMode::kBestPath, false);
    const Cell* bp1 = find_cell(regime, DecodeMode::kBestPath, true);
    const Cell* tk0 = find_cell(regime, DecodeMode::kTkm, false);
    const Cell* tk1 = find_cell(regime, DecodeMode::kTkm, true);
    std::snprintf(line, sizeof(line), "%-8s %10.4f %10.4f %12.4f %10.4f\n",
                  regime_name(regime), bp0->eval.wer, bp1->eval.wer,
                  tk0->eval.wer, tk1->eval.wer);
    text << line;
  }
  text << "\nMatched-pairs tests\n";
  for (const auto& jp : matrix.at("pairs")) {
    std::snprintf(line, sizeof(line), "  %-24s vs %-24s p=%.4g\n",
                  jp.at("a").get<std::string>().c_str(),
                  jp.at("b").get<std::string>().c_str(),
                  jp.at("p_value").get<double>());
    text << line;
  }
  return matrix;
}

}  // namespace p2g
