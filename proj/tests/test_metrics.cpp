#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "reflect/metrics.hpp"
#include "support/toy_lms.hpp"

using namespace reflect;
using namespace reflect::testing;
using Catch::Approx;

TEST_CASE("bleu") {
  Corpus c = corpus_from_lines({"the cat sat . the the the cat other words"});
  TokenSeq ref = encode(c.vocab, "the cat sat");
  SECTION("perfect match scores 100") {
    REQUIRE(bleu(ref, {ref}) == Approx(100.0).margin(1e-9));
  }
  SECTION("zero unigram overlap scores 0") {
    TokenSeq cand = encode(c.vocab, "other words");
    REQUIRE(bleu(cand, {ref}) == 0.0);
  }
  SECTION("'the the the cat' vs 'the cat sat' matches the hand computation") {
    TokenSeq cand = encode(c.vocab, "the the the cat");
    // modified precisions: p1 = 2/4 (clipped 'the'), p2 = 1/3; p3 = p4 = 0.
    // smoothed: p2 = 2/4, p3 = 1/3, p4 = 1/2; BP = 1 since |cand| > |ref|.
    double smoothed = 100.0 * std::pow(0.5 * 0.5 * (1.0 / 3.0) * 0.5, 0.25);
    REQUIRE(bleu(cand, {ref}) == Approx(smoothed).epsilon(1e-12));
    // unsmoothed variant zeroes on the empty trigram match
    REQUIRE(bleu(cand, {ref}, {4, false}) == 0.0);
    // unsmoothed bigram-only BLEU is exactly the geometric mean of p1, p2
    double bigram = 100.0 * std::sqrt(0.5 * (1.0 / 3.0));
    REQUIRE(bleu(cand, {ref}, {2, false}) == Approx(bigram).epsilon(1e-12));
  }
  SECTION("brevity penalty for short candidates") {
    TokenSeq cand = encode(c.vocab, "the cat");
    // p1 = 1, p2 = (1+1)/(1+1) = 1, BP = exp(1 - 3/2)
    REQUIRE(bleu(cand, {ref}) == Approx(100.0 * std::exp(1.0 - 1.5)).epsilon(1e-12));
  }
  SECTION("errors on empty inputs") {
    REQUIRE_THROWS_AS(bleu({}, {ref}), std::invalid_argument);
    REQUIRE_THROWS_AS(bleu(ref, {}), std::invalid_argument);
    REQUIRE_THROWS_AS(bleu(ref, {TokenSeq{}}), std::invalid_argument);
  }
  SECTION("invariant under consistent token relabeling") {
    TokenSeq cand = encode(c.vocab, "the the the cat");
    auto relabel = [](const TokenSeq& s) {
      TokenSeq out;
      for (TokenId t : s) out.push_back(t + 100);
      return out;
    };
    REQUIRE(bleu(cand, {ref}) == bleu(relabel(cand), {relabel(ref)}));
  }
}

TEST_CASE("novelty") {
  Corpus c = corpus_from_lines({"the cat sat near other words"});
  TokenSeq s = encode(c.vocab, "the cat sat");
  SECTION("novelty(s, s) = 0") { REQUIRE(novelty(s, s) == Approx(0.0).margin(1e-9)); }
  SECTION("disjoint token sets score 100") {
    REQUIRE(novelty(encode(c.vocab, "other words"), s) == 100.0);
  }
  SECTION("is 100 minus bleu on partial overlap") {
    TokenSeq cand = encode(c.vocab, "the the the cat");
    REQUIRE(novelty(cand, s) == Approx(100.0 - bleu(cand, {s})).margin(1e-12));
  }
  SECTION("always within [0, 100]") {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      std::mt19937_64 eng(seed);
      TokenSeq cand, src;
      for (int i = 0; i < 5; ++i) {
        cand.push_back(3 + static_cast<TokenId>(eng() % 4));
        src.push_back(3 + static_cast<TokenId>(eng() % 4));
      }
      double n = novelty(cand, src);
      REQUIRE(n >= -1e-9);
      REQUIRE(n <= 100.0 + 1e-9);
    }
  }
}

TEST_CASE("contextual_cross_entropy") {
  SECTION("deterministic LM assigning probability 1 gives 0") {
    Vocabulary v = make_vocab({"a"});
    auto det = deterministic_lm(v, v.lookup("a"));
    REQUIRE(contextual_cross_entropy({3}, {{3}, {3, 3}}, det) == Approx(0.0).margin(1e-9));
  }
  SECTION("uniform LM over |V|=4 with contexts of length L gives L log 4") {
    auto uni = uniform_lm(1);
    REQUIRE(contextual_cross_entropy({3}, {{3, 3}, {3, 3}}, uni) ==
            Approx(2.0 * std::log(4.0)).epsilon(1e-12));
  }
  SECTION("reference LM matches hand-summed token log-probs") {
    Corpus c = corpus_from_lines({"a b a", "b a"});
    auto fwd = train_reference_lm(c.docs, c.vocab, 2, Direction::kForward, {0.1});
    TokenSeq s = encode(c.vocab, "a");
    std::vector<TokenSeq> ctxs = {encode(c.vocab, "b"), encode(c.vocab, "a b")};
    double expected = 0.0;
    for (const auto& ctx : ctxs) expected += -sequence_logprob(fwd, ctx, s);
    expected /= 2.0;
    REQUIRE(contextual_cross_entropy(s, ctxs, fwd) == Approx(expected).margin(1e-12));
    REQUIRE(contextual_cross_entropy(s, ctxs, fwd) >= 0.0);
  }
  SECTION("error without contexts") {
    auto uni = uniform_lm(1);
    REQUIRE_THROWS_AS(contextual_cross_entropy({3}, {}, uni), std::invalid_argument);
  }
}
