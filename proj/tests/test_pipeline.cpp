#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>

#include "reflect/manifest.hpp"
#include "reflect/pipeline.hpp"
#include "support/toy_lms.hpp"

using namespace reflect;
using namespace reflect::testing;
using Catch::Approx;

namespace {

PipelineConfig small_cfg() {
  PipelineConfig cfg = PipelineConfig::paraphrase_preset();
  cfg.n_c = 10;
  cfg.k_c = 4;
  cfg.len_c = 6;
  cfg.n_s = 8;
  cfg.weights.max_iters = 30;
  cfg.rng_seed = 42;
  return cfg;
}

struct TrainedPair {
  Corpus corpus;
  NgramLm fwd;
  NgramLm bwd;
};

TrainedPair trained_pair(const std::vector<std::string>& lines, int order = 2,
                         double add_k = 0.1) {
  Corpus c = corpus_from_lines(lines);
  auto fwd = train_reference_lm(c.docs, c.vocab, order, Direction::kForward, {add_k});
  auto bwd = train_reference_lm(c.docs, c.vocab, order, Direction::kBackward, {add_k});
  return {std::move(c), std::move(fwd), std::move(bwd)};
}

}  // namespace

TEST_CASE("generate_contexts") {
  SECTION("deterministic LM yields n_c identical contexts") {
    Vocabulary v = make_vocab({"a"});
    auto det = deterministic_lm(v, v.lookup("a"));
    PipelineConfig cfg = small_cfg();
    cfg.len_c = 3;
    auto ctxs = generate_contexts(det, {3}, cfg, 5);
    REQUIRE(ctxs.size() == 10);
    for (const auto& c : ctxs) REQUIRE(c == TokenSeq{3, 3, 3});
  }
  SECTION("fixed seed reproduces the context set") {
    auto t = trained_pair(templated_lines());
    TokenSeq src = encode(t.corpus.vocab, "the red dog runs .");
    auto a = generate_contexts(t.fwd, src, small_cfg(), 77);
    auto b = generate_contexts(t.fwd, src, small_cfg(), 77);
    REQUIRE(a == b);
  }
  SECTION("p_c = 0.7 yields fewer distinct contexts than p_c = 1.0 on average") {
    auto t = trained_pair(templated_lines(), 1);
    TokenSeq src = encode(t.corpus.vocab, "the red dog runs .");
    PipelineConfig tight = small_cfg(), open = small_cfg();
    tight.p_c = 0.7;
    open.p_c = 1.0;
    tight.n_c = open.n_c = 15;
    tight.len_c = open.len_c = 4;
    double d_tight = 0.0, d_open = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      auto a = generate_contexts(t.fwd, src, tight, seed);
      auto b = generate_contexts(t.fwd, src, open, seed);
      d_tight += static_cast<double>(std::set<TokenSeq>(a.begin(), a.end()).size());
      d_open += static_cast<double>(std::set<TokenSeq>(b.begin(), b.end()).size());
    }
    REQUIRE(d_tight < d_open);
  }
  SECTION("empty source is an error") {
    auto t = trained_pair({"a b"});
    REQUIRE_THROWS_AS(generate_contexts(t.fwd, {}, small_cfg(), 0), std::invalid_argument);
  }
}

TEST_CASE("build_reflective_sampler") {
  auto t = trained_pair(templated_lines());
  TokenSeq src = encode(t.corpus.vocab, "the red dog runs .");

  SECTION("n_c = 1 reduces to the one-expert LM") {
    PipelineConfig cfg = small_cfg();
    cfg.n_c = 1;
    auto sampler = build_reflective_sampler(src, Direction::kBackward, t.fwd, t.bwd, cfg, 9);
    REQUIRE(sampler.ensemble().contexts.size() == 1);
    REQUIRE(sampler.ensemble().weights == std::vector<double>{1.0});
    auto rd = rd_next_token_dist(sampler, {});
    auto base = t.bwd.next_token_logprobs(sampler.ensemble().contexts[0]);
    for (std::size_t i = 0; i < rd.size(); ++i)
      REQUIRE(rd[i] == Approx(base[i]).margin(1e-9));
  }
  SECTION("pruning keeps exactly k_c contexts with simplex weights") {
    PipelineConfig cfg = small_cfg();
    cfg.n_c = 12;
    cfg.k_c = 6;
    auto sampler = build_reflective_sampler(src, Direction::kBackward, t.fwd, t.bwd, cfg, 3);
    REQUIRE(sampler.ensemble().contexts.size() == 6);
    double sum = 0.0;
    for (double w : sampler.ensemble().weights) {
      REQUIRE(w >= 0.0);
      sum += w;
    }
    REQUIRE(sum == Approx(1.0).margin(1e-8));
  }
  SECTION("mirror problem reproduces the sampler token-reversed") {
    std::vector<TokenSeq> rev_docs;
    for (const auto& d : t.corpus.docs) rev_docs.push_back(reversed(d));
    auto fwd_m = train_reference_lm(rev_docs, t.corpus.vocab, 2, Direction::kForward, {0.1});
    auto bwd_m = train_reference_lm(rev_docs, t.corpus.vocab, 2, Direction::kBackward, {0.1});
    PipelineConfig cfg = small_cfg();
    auto rd_back = build_reflective_sampler(src, Direction::kBackward, t.fwd, t.bwd, cfg, 11);
    auto rd_fwd_m =
        build_reflective_sampler(reversed(src), Direction::kForward, fwd_m, bwd_m, cfg, 11);
    REQUIRE(rd_back.ensemble().contexts.size() == rd_fwd_m.ensemble().contexts.size());
    for (std::size_t i = 0; i < rd_back.ensemble().contexts.size(); ++i) {
      REQUIRE(rd_fwd_m.ensemble().contexts[i] == reversed(rd_back.ensemble().contexts[i]));
      REQUIRE(rd_fwd_m.ensemble().weights[i] == rd_back.ensemble().weights[i]);
    }
  }
}

TEST_CASE("postprocess") {
  Corpus c = corpus_from_lines({"how do they form ? the rest is noise . x"});
  const Vocabulary& v = c.vocab;

  SECTION("forward paraphrase keeps the first complete sentence") {
    auto out = postprocess(encode(v, "how do they form ? the rest is noise"),
                           Task::kParaphrase, Direction::kForward, v);
    REQUIRE(decode(v, out.tokens) == "how do they form ?");
    REQUIRE_FALSE(out.untrimmable);
  }
  SECTION("backward paraphrase keeps the last complete sentence") {
    auto out = postprocess(encode(v, "noise . how do they form ?"), Task::kParaphrase,
                           Direction::kBackward, v);
    REQUIRE(decode(v, out.tokens) == "how do they form ?");
  }
  SECTION("single complete sentence is the identity") {
    TokenSeq s = encode(v, "how do they form ?");
    for (Direction d : {Direction::kForward, Direction::kBackward}) {
      auto out = postprocess(s, Task::kParaphrase, d, v);
      REQUIRE(out.tokens == s);
      REQUIRE_FALSE(out.untrimmable);
    }
  }
  SECTION("no boundary token returns input with a flag") {
    TokenSeq s = encode(v, "the rest is noise");
    auto out = postprocess(s, Task::kParaphrase, Direction::kForward, v);
    REQUIRE(out.tokens == s);
    REQUIRE(out.untrimmable);
  }
  SECTION("infill trims only the truncated end") {
    auto fwd = postprocess(encode(v, "they form . the rest"), Task::kInfill,
                           Direction::kForward, v);
    REQUIRE(decode(v, fwd.tokens) == "they form .");
    auto bwd = postprocess(encode(v, "rest . they form ."), Task::kInfill,
                           Direction::kBackward, v);
    REQUIRE(decode(v, bwd.tokens) == "they form .");
    auto single = postprocess(encode(v, "they form ."), Task::kInfill,
                              Direction::kBackward, v);
    REQUIRE(decode(v, single.tokens) == "they form .");
  }
}

TEST_CASE("select_with_novelty_threshold") {
  auto cand = [](double nov) {
    Candidate c;
    c.novelty = nov;
    return c;
  };
  std::vector<Candidate> ranked = {cand(10), cand(40), cand(50)};
  SECTION("threshold 0 takes the top-ranked candidate") {
    auto sel = select_with_novelty_threshold(ranked, 0.0);
    REQUIRE(sel.rank == 0);
    REQUIRE_FALSE(sel.fallback);
  }
  SECTION("threshold 30 takes the first candidate meeting it") {
    auto sel = select_with_novelty_threshold(ranked, 30.0);
    REQUIRE(sel.rank == 1);
    REQUIRE(sel.candidate.novelty == 40.0);
  }
  SECTION("all below threshold falls back to the max-novelty candidate") {
    auto sel = select_with_novelty_threshold(ranked, 90.0);
    REQUIRE(sel.rank == 2);
    REQUIRE(sel.fallback);
  }
  SECTION("empty list is an error") {
    REQUIRE_THROWS_AS(select_with_novelty_threshold({}, 0.0), std::invalid_argument);
  }
  SECTION("selected novelty is monotone in the threshold") {
    for (double t1 : {0.0, 20.0, 45.0})
      for (double t2 : {0.0, 20.0, 45.0})
        if (t1 <= t2)
          REQUIRE(select_with_novelty_threshold(ranked, t1).candidate.novelty <=
                  select_with_novelty_threshold(ranked, t2).candidate.novelty);
  }
}

TEST_CASE("paraphrase pipeline") {
  auto t = trained_pair(templated_pair_lines());
  TokenSeq src = encode(t.corpus.vocab, "the red dog runs .");
  PipelineConfig cfg = small_cfg();
  PipelineRun run = paraphrase(src, t.fwd, t.bwd, cfg);
  REQUIRE_FALSE(run.result.no_candidates);
  REQUIRE(!run.result.ranked.empty());

  SECTION("ranking is sorted by score with the declared tie-breaks") {
    const auto& r = run.result.ranked;
    for (std::size_t i = 1; i < r.size(); ++i) {
      REQUIRE(r[i - 1].task_score >= r[i].task_score);
      if (r[i - 1].task_score == r[i].task_score)
        REQUIRE(r[i - 1].rd_logprob >= r[i].rd_logprob);
    }
  }
  SECTION("candidates are deduplicated and non-empty") {
    std::set<TokenSeq> seen;
    for (const auto& c : run.result.ranked) {
      REQUIRE(!c.tokens.empty());
      REQUIRE(seen.insert(c.tokens).second);
    }
  }
  SECTION("stored novelty equals an independent recomputation") {
    for (const auto& c : run.result.ranked)
      REQUIRE(c.novelty == novelty(c.tokens, src, cfg.bleu));
  }
  SECTION("re-running with the same seed yields the identical ranked list") {
    PipelineRun again = paraphrase(src, t.fwd, t.bwd, cfg);
    REQUIRE(again.result.ranked.size() == run.result.ranked.size());
    for (std::size_t i = 0; i < run.result.ranked.size(); ++i) {
      REQUIRE(again.result.ranked[i].tokens == run.result.ranked[i].tokens);
      REQUIRE(again.result.ranked[i].task_score == run.result.ranked[i].task_score);
      REQUIRE(again.result.ranked[i].rd_logprob == run.result.ranked[i].rd_logprob);
    }
  }
  SECTION("the source outscores a junk sequence of equal length") {
    auto score = [&](const TokenSeq& s) {
      double right = 0.0, left = 0.0;
      const auto& rh = run.rd_backward.build.pruned.contexts;
      const auto& lh = run.rd_forward.build.pruned.contexts;
      for (const auto& ctx : rh) right += sequence_logprob(t.fwd, ctx, s);
      for (const auto& ctx : lh) left += sequence_logprob(t.bwd, ctx, s);
      return right / static_cast<double>(rh.size()) + left / static_cast<double>(lh.size());
    };
    TokenSeq junk(src.size(), Vocabulary::kUnk);
    REQUIRE(score(src) > score(junk));
    REQUIRE(std::isfinite(score(src)));
  }
  SECTION("top selection under a threshold shares a content token with the source") {
    auto sel = select_with_novelty_threshold(run.result.ranked, 10.0);
    REQUIRE(sel.candidate.novelty > 0.0);
    std::set<TokenId> src_words(src.begin(), src.end());
    src_words.erase(t.corpus.vocab.lookup("."));
    bool shares = false;
    for (TokenId tok : sel.candidate.tokens)
      if (src_words.count(tok)) shares = true;
    REQUIRE(shares);
  }
  SECTION("manifest echoes contexts, weights and calibration") {
    nlohmann::json j = run_to_json(run, t.corpus.vocab);
    REQUIRE(j["rd_backward"]["contexts"].size() == static_cast<std::size_t>(cfg.k_c));
    REQUIRE(j["rd_backward"]["calibrated_p"].get<double>() > 0.0);
    REQUIRE(j["candidates"].size() == run.result.ranked.size());
  }
}

TEST_CASE("abductive_infill pipeline") {
  auto t = trained_pair({"x y z", "x y z", "x y z", "x w", "w z"}, 3, 0.05);
  TokenSeq o1 = encode(t.corpus.vocab, "x");
  TokenSeq o2 = encode(t.corpus.vocab, "z");
  TokenSeq y = encode(t.corpus.vocab, "y");

  SECTION("the attested bridge passes the filter by hand-checkable margins") {
    double explain_left = sequence_logprob(t.bwd, o1, concat(y, o2));
    double base_left = sequence_logprob(t.bwd, o1, o2);
    double explain_right = sequence_logprob(t.fwd, o2, concat(o1, y));
    double base_right = sequence_logprob(t.fwd, o2, o1);
    REQUIRE(explain_left > base_left);
    REQUIRE(explain_right > base_right);
  }
  SECTION("empty hypothesis scores exactly the baseline and is rejected") {
    REQUIRE(sequence_logprob(t.bwd, o1, concat(TokenSeq{}, o2)) ==
            sequence_logprob(t.bwd, o1, o2));
    REQUIRE(sequence_logprob(t.fwd, o2, concat(o1, TokenSeq{})) ==
            sequence_logprob(t.fwd, o2, o1));
  }
  SECTION("pipeline output satisfies the filter on recheck") {
    PipelineConfig cfg = small_cfg();
    cfg.task = Task::kInfill;
    cfg.len_h = 4;
    cfg.h_sample = 2.0;
    PipelineRun run = abductive_infill(o1, o2, t.fwd, t.bwd, cfg);
    double base_left = sequence_logprob(t.bwd, o1, o2);
    double base_right = sequence_logprob(t.fwd, o2, o1);
    for (const auto& c : run.result.ranked) {
      REQUIRE(c.passed_filter);
      REQUIRE(sequence_logprob(t.bwd, o1, concat(c.tokens, o2)) > base_left);
      REQUIRE(sequence_logprob(t.fwd, o2, concat(o1, c.tokens)) > base_right);
    }
    for (const auto& c : run.result.rejected) REQUIRE_FALSE(c.passed_filter);
    // duplicates removed across both directions
    std::set<TokenSeq> seen;
    for (const auto& c : run.result.ranked) REQUIRE(seen.insert(c.tokens).second);
    for (const auto& c : run.result.rejected) REQUIRE(seen.insert(c.tokens).second);
  }
  SECTION("empty observations are errors") {
    REQUIRE_THROWS_AS(abductive_infill({}, o2, t.fwd, t.bwd, small_cfg()),
                      std::invalid_argument);
    REQUIRE_THROWS_AS(abductive_infill(o1, {}, t.fwd, t.bwd, small_cfg()),
                      std::invalid_argument);
  }
}

TEST_CASE("preset values") {
  PipelineConfig p = PipelineConfig::paraphrase_preset();
  REQUIRE(p.len_s_extra == 5);
  REQUIRE(p.len_c == 50);
  REQUIRE(p.n_s == 30);
  REQUIRE(p.n_c == 80);
  REQUIRE(p.h_sample == 4.0);
  REQUIRE(p.p_c == 0.7);
  REQUIRE(p.k_c == 6);
  REQUIRE(p.candidate_max_len(7) == 12);

  PipelineConfig a = PipelineConfig::anlg_preset();
  REQUIRE(a.len_h == 20);
  REQUIRE(a.len_c == 50);
  REQUIRE(a.n_s == 20);
  REQUIRE(a.n_c == 50);
  REQUIRE(a.h_sample == 6.0);
  REQUIRE(a.p_c == 0.9);
  REQUIRE(a.k_c == 6);
  REQUIRE(a.candidate_max_len(7) == 20);
}
