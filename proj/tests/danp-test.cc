// tests/danp-test.cc

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

#include <set>

#include "p2g/ctc-lattice.h"
#include "p2g/danp.h"
#include "p2g/errors.h"

using namespace p2g;

namespace {

struct Fixture {
  Lexicon lex;
  std::vector<Utterance> corpus;
};

Fixture make_fixture(int n_utts, double confusion_scale, uint64_t seed) {
  Fixture f;
  ToyLanguageConfig cfg;
  f.lex = build_toy_language(cfg, 7);
  f.corpus = generate_corpus(f.lex, n_utts, 3, 6, seed);
  NoiseSpec noise;
  noise.duration_min = 1;
  noise.duration_max = 2;
  noise.blank_prior = 0.3;
  noise.confusion_scale = confusion_scale;
  noise.seed = 71;
  for (auto& utt : f.corpus) {
    utt.frame_logits = emit_for_utterance(f.lex, utt, noise);
  }
  return f;
}

}  // namespace

TEST_CASE("1-beam scheme yields exactly one item per utterance") {
  Fixture f = make_fixture(20, 2.4, 5);
  DanpConfig cfg;
  cfg.beam_size = 1;
  cfg.num_samples = 0;
  cfg.include_clean = false;
  AugmentedDataset ds = build_augmented(f.lex, f.corpus, cfg, 3);
  CHECK(ds.items.size() == f.corpus.size());
  for (size_t i = 0; i < ds.items.size(); ++i) {
    CHECK(ds.items[i].utt_id == f.corpus[i].utt_id);
    CHECK(ds.items[i].source == AugmentedItem::Source::kBeam);
    CHECK(ds.items[i].target == f.corpus[i].text);
    // the 1-best of the utterance's own lattice
    HypothesisSet top = prefix_beam_search(*f.corpus[i].frame_logits, 1);
    CHECK(ds.items[i].phonemes == top.hypotheses[0].tokens);
  }
}

TEST_CASE("noiseless emissions collapse to one clean item per utterance") {
  Fixture f = make_fixture(15, 0.0, 6);
  DanpConfig cfg;
  cfg.beam_size = 8;
  cfg.num_samples = 10;
  cfg.include_clean = true;
  AugmentedDataset ds = build_augmented(f.lex, f.corpus, cfg, 3);
  CHECK(ds.items.size() == f.corpus.size());
  for (size_t i = 0; i < ds.items.size(); ++i) {
    CHECK(ds.items[i].phonemes == f.corpus[i].reference_phonemes);
  }
}

TEST_CASE("sampling on top of beams only adds items; dedup ratio reported") {
  Fixture f = make_fixture(100, 2.4, 7);
  DanpConfig beams_only;
  beams_only.beam_size = 8;
  AugmentedDataset a = build_augmented(f.lex, f.corpus, beams_only, 3);

  DanpConfig with_sampling = beams_only;
  with_sampling.num_samples = 8;
  AugmentedDataset b = build_augmented(f.lex, f.corpus, with_sampling, 3);

  CHECK(b.items.size() >= a.items.size());
  CHECK(b.stats.sampled_raw > 0);
  CHECK(b.stats.dedup_ratio > 0.0);
  CHECK(b.stats.dedup_ratio <= 1.0);
  CHECK(b.stats.kept == static_cast<int64_t>(b.items.size()));
}

TEST_CASE("checkpoint variants add diverse views of the same utterance") {
  Fixture f = make_fixture(30, 2.4, 8);
  DanpConfig cfg;
  cfg.beam_size = 4;
  NoiseSpec ck;
  ck.duration_min = 1;
  ck.duration_max = 2;
  ck.blank_prior = 0.3;
  ck.confusion_scale = 2.7;
  ck.seed = 911;
  cfg.checkpoints = {ck};
  AugmentedDataset ds = build_augmented(f.lex, f.corpus, cfg, 3);

  DanpConfig base = cfg;
  base.checkpoints.clear();
  AugmentedDataset primary = build_augmented(f.lex, f.corpus, base, 3);
  CHECK(ds.items.size() > primary.items.size());
  bool saw_variant = false;
  for (const auto& item : ds.items) saw_variant |= item.variant == 1;
  CHECK(saw_variant);
}

TEST_CASE("build_augmented is deterministic and idempotent") {
  Fixture f = make_fixture(25, 2.4, 9);
  DanpConfig cfg;
  cfg.beam_size = 4;
  cfg.num_samples = 6;
  AugmentedDataset a = build_augmented(f.lex, f.corpus, cfg, 3);
  AugmentedDataset b = build_augmented(f.lex, f.corpus, cfg, 3);
  REQUIRE(a.items.size() == b.items.size());
  for (size_t i = 0; i < a.items.size(); ++i) {
    CHECK(a.items[i].utt_id == b.items[i].utt_id);
    CHECK(a.items[i].phonemes == b.items[i].phonemes);
    CHECK(a.items[i].source == b.items[i].source);
    CHECK(a.items[i].variant == b.items[i].variant);
  }
}

TEST_CASE("no duplicate (phonemes, reference) pairs per utterance") {
  Fixture f = make_fixture(50, 2.8, 10);
  DanpConfig cfg;
  cfg.beam_size = 8;
  cfg.num_samples = 8;
  cfg.include_clean = true;
  AugmentedDataset ds = build_augmented(f.lex, f.corpus, cfg, 3);
  std::set<std::pair<std::string, std::vector<int>>> keys;
  for (const auto& item : ds.items) {
    CHECK(keys.insert({item.utt_id, item.phonemes}).second);
  }
}

TEST_CASE("monotone beam coverage on noiseless instances") {
  Fixture f = make_fixture(10, 0.0, 11);
  DanpConfig small, large;
  small.beam_size = 2;
  large.beam_size = 8;
  AugmentedDataset a = build_augmented(f.lex, f.corpus, small, 3);
  AugmentedDataset b = build_augmented(f.lex, f.corpus, large, 3);
  std::set<std::pair<std::string, std::vector<int>>> in_large;
  for (const auto& item : b.items) {
    in_large.insert({item.utt_id, item.phonemes});
  }
  for (const auto& item : a.items) {
    CHECK(in_large.count({item.utt_id, item.phonemes}) == 1);
  }
}

TEST_CASE("all schemes disabled is an error; missing logits is an error") {
  Fixture f = make_fixture(3, 1.0, 12);
  DanpConfig none;
  none.beam_size = 0;
  none.num_samples = 0;
  none.include_clean = false;
  CHECK_THROWS_AS(build_augmented(f.lex, f.corpus, none, 3), ConfigError);

  f.corpus[1].frame_logits.reset();
  DanpConfig cfg;
  cfg.beam_size = 1;
  CHECK_THROWS_AS(build_augmented(f.lex, f.corpus, cfg, 3), MissingInputError);
}

TEST_CASE("augmented items round-trip through JSON Lines records") {
  Fixture f = make_fixture(10, 2.4, 13);
  DanpConfig cfg;
  cfg.beam_size = 3;
  cfg.num_samples = 2;
  AugmentedDataset ds = build_augmented(f.lex, f.corpus, cfg, 3);
  for (const auto& item : ds.items) {
    AugmentedItem rt =
        augmented_item_from_json(f.lex, augmented_item_to_json(f.lex, item));
    CHECK(rt.utt_id == item.utt_id);
    CHECK(rt.phonemes == item.phonemes);
    CHECK(rt.target == item.target);
    CHECK(rt.source == item.source);
    CHECK(rt.variant == item.variant);
  }
}

TEST_CASE("clean-only dataset trains like plain supervised data") {
  Fixture f = make_fixture(12, 0.0, 14);
  DanpConfig cfg;
  cfg.beam_size = 0;
  cfg.num_samples = 0;
  cfg.include_clean = true;
  AugmentedDataset ds = build_augmented(f.lex, f.corpus, cfg, 3);

  P2GVocab vocab;
  vocab.phonemes = f.lex.phoneme_inventory;
  vocab.graphemes = f.lex.grapheme_inventory;
  TrainOptions opts;
  opts.learning_rate = 0.02;
  opts.batch_size = 4;
  opts.max_epochs = 3;
  opts.patience = 3;
  opts.seed = 2;

  std::vector<SupervisedPair> pairs;
  for (const auto& utt : f.corpus) {
    pairs.push_back({utt.reference_phonemes, utt.text, 1.0});
  }

  P2GModel a = init_model(ModelDims{8, 12}, vocab, 3);
  P2GModel b = init_model(ModelDims{8, 12}, vocab, 3);
  TrainTrace ta = train_danp(&a, ds, pairs, opts);
  TrainTrace tb = train(&b, pairs, pairs, opts);
  REQUIRE(ta.train_loss.size() == tb.train_loss.size());
  for (size_t i = 0; i < ta.train_loss.size(); ++i) {
    CHECK(ta.train_loss[i] == tb.train_loss[i]);
  }
  CHECK(a.params.out_w == b.params.out_w);

  // smoothed loss trace is finite and non-increasing overall
  CHECK(std::isfinite(ta.train_loss.back()));
  CHECK(ta.train_loss.back() <= ta.train_loss.front());
}