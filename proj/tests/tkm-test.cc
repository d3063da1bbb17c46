// tests/tkm-test.cc

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

#include <cmath>

#include "p2g/logmath.h"
#include "p2g/tkm.h"
#include "support/ctc-oracle.h"
#include "support/gradient-check.h"

using namespace p2g;

namespace {

P2GVocab tiny_vocab(int phonemes, int graphemes) {
  P2GVocab v;
  for (int i = 0; i < phonemes; ++i) v.phonemes.push_back("p" + std::to_string(i));
  for (int i = 0; i < graphemes; ++i) v.graphemes.push_back("w" + std::to_string(i));
  return v;
}

HypothesisSet make_set(std::vector<PhonemeHypothesis> hyps) {
  HypothesisSet set;
  set.hypotheses = std::move(hyps);
  sort_hypotheses(&set.hypotheses);
  return set;
}

// All grapheme sequences up to max_len.
std::vector<std::vector<int>> enumerate_outputs(int graphemes, int max_len) {
  std::vector<std::vector<int>> all{{}};
  for (size_t qi = 0; qi < all.size(); ++qi) {
    std::vector<int> seq = all[qi];
    if (static_cast<int>(seq.size()) < max_len) {
      for (int g = 0; g < graphemes; ++g) {
        auto ext = seq;
        ext.push_back(g);
        all.push_back(ext);
      }
    }
  }
  return all;
}

}  // namespace

TEST_CASE("renormalize_weights basics") {
  HypothesisSet one = make_set({{{0}, -2.5}});
  auto w1 = renormalize_weights(one);
  REQUIRE(w1.size() == 1);
  CHECK(w1[0] == doctest::Approx(1.0).epsilon(1e-12));

  HypothesisSet four = make_set(
      {{{0}, -1.0}, {{1}, -1.0}, {{2}, -1.0}, {{0, 1}, -1.0}});
  auto w4 = renormalize_weights(four);
  double sum = 0.0;
  for (double w : w4) {
    CHECK(w == doctest::Approx(0.25).epsilon(1e-12));
    sum += w;
  }
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));

  // additive shift leaves the weights unchanged
  HypothesisSet shifted = four;
  for (auto& h : shifted.hypotheses) h.acoustic_logprob += 3.7;
  auto ws = renormalize_weights(shifted);
  for (size_t i = 0; i < ws.size(); ++i) {
    CHECK(ws[i] == doctest::Approx(w4[i]).epsilon(1e-12));
  }

  HypothesisSet empty;
  CHECK_THROWS_AS(renormalize_weights(empty), std::invalid_argument);
  HypothesisSet impossible = make_set({{{0}, kLogZero}});
  CHECK_THROWS_AS(renormalize_weights(impossible), std::invalid_argument);
}

TEST_CASE("tkm_loss with K=1 is the cross-entropy") {
  P2GModel m = init_model(ModelDims{6, 8}, tiny_vocab(4, 3), 5);
  TKMBatchItem item{make_set({{{0, 2, 1}, -1.3}}), {1, 0}, "u1"};
  double loss = tkm_loss(m, item);
  double ce = -score_sequence(m, {0, 2, 1}, {1, 0});
  CHECK(std::abs(loss - ce) <= 1e-12);
}

TEST_CASE("tkm_loss over identical token sequences is the plain loss") {
  P2GModel m = init_model(ModelDims{6, 8}, tiny_vocab(4, 3), 6);
  TKMBatchItem item{
      make_set({{{2, 2}, -0.2}, {{2, 2}, -1.5}, {{2, 2}, -3.0}}),
      {0, 1},
      "u2"};
  double loss = tkm_loss(m, item);
  CHECK(loss == doctest::Approx(-score_sequence(m, {2, 2}, {0, 1}))
                    .epsilon(1e-12));
}

TEST_CASE("tkm_loss matches the full-marginalization oracle on covered sets") {
  // Hypothesis set = every realizable h with its exact CTC weight; then
  // -loss must equal log p(y|x) marginalized over all h by brute force.
  for (uint64_t seed = 0; seed < 5; ++seed) {
    FrameLogits fl = testing::random_frame_logits(3, 2, 700 + seed);
    auto events = testing::enumerate_ctc_events(fl);
    std::vector<PhonemeHypothesis> hyps;
    for (const auto& [h, prob] : events) {
      hyps.push_back({h, std::log(prob)});
    }
    TKMBatchItem item{make_set(std::move(hyps)), {1, 0}, "u"};
    P2GModel m = init_model(ModelDims{6, 8}, tiny_vocab(2, 2), 800 + seed);

    double brute = 0.0;
    for (const auto& [h, prob] : events) {
      brute += prob * std::exp(score_sequence(m, h, item.target));
    }
    double loss = tkm_loss(m, item);
    CHECK(std::exp(-loss) == doctest::Approx(brute).epsilon(1e-9));
  }
}

TEST_CASE("tkm_loss is invariant to additive shifts of acoustic scores") {
  P2GModel m = init_model(ModelDims{6, 8}, tiny_vocab(4, 3), 7);
  TKMBatchItem item{make_set({{{0, 1}, -0.4}, {{2}, -1.9}, {{3, 1}, -2.2}}),
                    {2, 0}, "u3"};
  TKMBatchItem shifted = item;
  for (auto& h : shifted.hypotheses.hypotheses) h.acoustic_logprob += 11.0;

  CHECK(tkm_loss(m, item) ==
        doctest::Approx(tkm_loss(m, shifted)).epsilon(1e-12));

  P2GParams ga, gb;
  ga.resize(m.dims, m.vocab);
  gb.resize(m.dims, m.vocab);
  tkm_loss_grad(m, item, 1.0, &ga);
  tkm_loss_grad(m, shifted, 1.0, &gb);
  ga.add_scaled(gb, -1.0);
  CHECK(std::sqrt(ga.squared_norm()) < 1e-12);
}

TEST_CASE("tkm_loss gradients match finite differences") {
  P2GModel m = init_model(ModelDims{6, 8}, tiny_vocab(4, 3), 8);
  TKMBatchItem item{make_set({{{0, 1, 2}, -0.3}, {{0, 1}, -1.0}, {{3}, -2.5}}),
                    {1, 2}, "u4"};
  P2GParams grads;
  grads.resize(m.dims, m.vocab);
  tkm_loss_grad(m, item, 1.0, &grads);
  auto loss = [&](const P2GModel& model) { return tkm_loss(model, item); };
  auto report = testing::check_gradients(&m, grads, loss, 120, 12345);
  CAPTURE(report.worst_param);
  CHECK(report.max_rel_error <= 1e-4);
}

TEST_CASE("randomized_tkm_loss reductions and determinism") {
  P2GModel m = init_model(ModelDims{6, 8}, tiny_vocab(4, 3), 9);
  TKMBatchItem item{make_set({{{0}, -0.1}, {{1}, -0.9}, {{2}, -1.4},
                              {{3}, -2.0}}),
                    {0}, "u5"};
  // n = K: identical to the full loss
  {
    Rng rng(1);
    double full = tkm_loss(m, item);
    double drawn = randomized_tkm_loss(m, item, 4, 4, &rng);
    CHECK(std::abs(full - drawn) <= 1e-12);
  }
  // n = 1: equals the cross-entropy of the drawn hypothesis
  {
    Rng rng(77);
    double drawn = randomized_tkm_loss(m, item, 1, 4, &rng);
    Rng probe(77);
    int j = probe.sample_without_replacement(1, 4)[0];
    double ce = -score_sequence(m, item.hypotheses.hypotheses[j].tokens,
                                item.target);
    CHECK(drawn == doctest::Approx(ce).epsilon(1e-12));
  }
  // fixed seed: identical draw, identical loss
  {
    Rng a(5), b(5);
    CHECK(randomized_tkm_loss(m, item, 2, 4, &a) ==
          randomized_tkm_loss(m, item, 2, 4, &b));
  }
  Rng rng(3);
  CHECK_THROWS_AS(randomized_tkm_loss(m, item, 5, 4, &rng),
                  std::invalid_argument);
  CHECK_THROWS_AS(randomized_tkm_loss(m, item, 3, 5, &rng),
                  std::invalid_argument);
}

TEST_CASE("randomized_tkm_loss gradients match finite differences") {
  P2GModel m = init_model(ModelDims{6, 8}, tiny_vocab(4, 3), 10);
  TKMBatchItem item{make_set({{{0, 1}, -0.3}, {{2}, -1.1}, {{1, 3}, -1.8},
                              {{2, 2}, -2.4}}),
                    {2, 1}, "u6"};
  P2GParams grads;
  grads.resize(m.dims, m.vocab);
  {
    Rng rng(42);
    randomized_tkm_loss_grad(m, item, 2, 4, &rng, 1.0, &grads);
  }
  auto loss = [&](const P2GModel& model) {
    Rng rng(42);  // same draw at every perturbed evaluation
    return randomized_tkm_loss(model, item, 2, 4, &rng);
  };
  auto report = testing::check_gradients(&m, grads, loss, 120, 999);
  CAPTURE(report.worst_param);
  CHECK(report.max_rel_error <= 1e-4);
}

TEST_CASE("tkm_decode with K=1 reproduces beam_decode") {
  P2GModel m = init_model(ModelDims{6, 8}, tiny_vocab(4, 3), 11);
  HypothesisSet hyps = make_set({{{0, 2, 1}, -0.5}});
  auto cands = tkm_decode(m, hyps, 4, 5);
  auto beams = beam_decode(m, {0, 2, 1}, 4, 5);
  REQUIRE(cands.size() == beams.size());
  for (size_t i = 0; i < cands.size(); ++i) {
    CHECK(cands[i].tokens == beams[i].tokens);
    // single hypothesis: weight 1, so scores coincide
    CHECK(cands[i].tkm_logscore ==
          doctest::Approx(beams[i].logprob).epsilon(1e-12));
    CHECK(cands[i].provenance == std::vector<int>{0});
  }
}

TEST_CASE("tkm_decode ranking is invariant to acoustic score shifts") {
  P2GModel m = init_model(ModelDims{6, 8}, tiny_vocab(4, 3), 12);
  HypothesisSet hyps = make_set({{{0, 1}, -0.2}, {{2, 3}, -1.0}, {{1}, -1.7}});
  HypothesisSet shifted = hyps;
  for (auto& h : shifted.hypotheses) h.acoustic_logprob += 4.2;
  // (sort order unchanged by a common shift)
  auto a = tkm_decode(m, hyps, 4, 5);
  auto b = tkm_decode(m, shifted, 4, 5);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].tokens == b[i].tokens);
    CHECK(a[i].tkm_logscore == doctest::Approx(b[i].tkm_logscore).epsilon(1e-12));
  }
}

TEST_CASE("exact_rescore dominates the fast approximation") {
  P2GModel m = init_model(ModelDims{6, 8}, tiny_vocab(3, 3), 13);
  HypothesisSet hyps =
      make_set({{{0, 1}, -0.4}, {{2}, -1.2}, {{1, 1}, -2.0}});
  auto fast = tkm_decode(m, hyps, 3, 4);
  auto exact = exact_rescore(m, hyps, fast);
  REQUIRE(exact.size() == fast.size());
  // compare per token sequence: exact adds mass, never removes
  for (const auto& f : fast) {
    bool found = false;
    for (const auto& e : exact) {
      if (e.tokens == f.tokens) {
        CHECK(e.tkm_logscore >= f.tkm_logscore - 1e-12);
        CHECK(e.provenance.size() == hyps.size());
        found = true;
      }
    }
    CHECK(found);
  }
}

TEST_CASE("exact_rescore equals tkm_decode when beams cover every candidate") {
  // Large beam on a tiny output space: every candidate appears in every beam,
  // so the fast approximation loses nothing.
  P2GModel m = init_model(ModelDims{6, 8}, tiny_vocab(3, 2), 14);
  HypothesisSet hyps = make_set({{{0, 1}, -0.4}, {{2}, -1.2}});
  const int all = 7;  // sequences up to length 2 over 2 graphemes
  auto fast = tkm_decode(m, hyps, all, 2);
  auto exact = exact_rescore(m, hyps, fast);
  REQUIRE(fast.size() == exact.size());
  for (size_t i = 0; i < fast.size(); ++i) {
    CHECK(fast[i].tokens == exact[i].tokens);
    CHECK(fast[i].tkm_logscore ==
          doctest::Approx(exact[i].tkm_logscore).epsilon(1e-9));
  }
}

TEST_CASE("exact_rescore top-1 equals the brute-force marginal argmax") {
  for (uint64_t seed = 0; seed < 5; ++seed) {
    FrameLogits fl = testing::random_frame_logits(3, 2, 910 + seed);
    auto events = testing::enumerate_ctc_events(fl);
    std::vector<PhonemeHypothesis> hyps;
    for (const auto& [h, prob] : events) hyps.push_back({h, std::log(prob)});
    HypothesisSet set = make_set(std::move(hyps));
    P2GModel m = init_model(ModelDims{6, 8}, tiny_vocab(2, 2), 920 + seed);

    const int max_len = 2;
    auto outputs = enumerate_outputs(2, max_len);
    std::vector<int> best;
    double best_p = -1.0;
    for (const auto& y : outputs) {
      double p = 0.0;
      for (const auto& [h, prob] : events) {
        p += prob * std::exp(score_sequence(m, h, y));
      }
      if (p > best_p) {
        best_p = p;
        best = y;
      }
    }

    std::vector<Candidate> pool;
    for (const auto& y : outputs) {
      Candidate c;
      c.tokens = y;
      pool.push_back(c);
    }
    auto exact = exact_rescore(m, set, pool);
    CHECK(exact.front().tokens == best);
  }
}

TEST_CASE("rescore_with_lm orders homophones by context likelihood") {
  // grapheme tokens: w0 and w1 are homophone spellings; the LM has only seen
  // w0. With lambda = 0 ordering is untouched; with a large lambda the LM
  // decides.
  std::vector<std::string> graphemes{"w0", "w1"};
  std::vector<std::vector<std::string>> text{{"w0", "w0"}, {"w0"}};
  NGramLM lm = NGramLM::train(text, {.order = 2, .add_k = 0.5});

  std::vector<Candidate> cands;
  Candidate a, b;
  a.tokens = {1};
  a.tkm_logscore = -1.0;  // acoustically slightly preferred
  b.tokens = {0};
  b.tkm_logscore = -1.1;
  cands = {a, b};

  auto zero = rescore_with_lm(cands, lm, 0.0, 0.0, graphemes);
  REQUIRE(zero.size() == 2);
  CHECK(zero[0].tokens == a.tokens);  // ordering untouched
  CHECK(zero[0].combined_logscore == zero[0].tkm_logscore);

  auto strong = rescore_with_lm(cands, lm, 5.0, 0.0, graphemes);
  CHECK(strong[0].tokens == b.tokens);  // LM flips the homophone
  CHECK(strong[0].lm_logscore.has_value());
}

TEST_CASE("rescore_with_lm ranking ignores constant score shifts") {
  // With equal-length candidates the length reward is a constant shift of
  // every combined score, standing in for "add a constant to all lm scores".
  std::vector<std::string> graphemes{"w0", "w1"};
  std::vector<std::vector<std::string>> text{{"w0", "w1"}, {"w1", "w0"}};
  NGramLM lm = NGramLM::train(text, {.order = 2, .add_k = 1.0});

  std::vector<Candidate> cands;
  for (int i = 0; i < 4; ++i) {
    Candidate c;
    c.tokens = {i % 2, (i / 2) % 2};
    c.tkm_logscore = -0.3 * i;
    cands.push_back(c);
  }
  auto base = rescore_with_lm(cands, lm, 0.7, 0.0, graphemes);
  auto shifted = rescore_with_lm(cands, lm, 0.7, 9.0, graphemes);
  REQUIRE(base.size() == shifted.size());
  for (size_t i = 0; i < base.size(); ++i) {
    CHECK(base[i].tokens == shifted[i].tokens);
  }
}
