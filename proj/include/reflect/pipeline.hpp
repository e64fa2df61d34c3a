// End-to-end reflective decoding: context generation, sampler construction in
// both directions, the paraphrase and abductive-infilling applications, and
// sentence-boundary post-processing.
#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "reflect/ensemble.hpp"
#include "reflect/lm.hpp"
#include "reflect/metrics.hpp"
#include "reflect/sampling.hpp"
#include "reflect/token.hpp"
#include "reflect/weights.hpp"

namespace reflect {

enum class Task { kParaphrase, kInfill };

struct PipelineConfig {
  Task task = Task::kParaphrase;
  int n_c = 80;         // contexts sampled per side
  int k_c = 6;          // contexts kept after pruning
  double p_c = 0.7;     // nucleus parameter for context sampling
  int len_c = 50;       // max context length, tokens
  int n_s = 30;         // candidates sampled per direction
  int len_s_extra = 5;  // paraphrase: max candidate length = len(source) + extra
  int len_h = 20;       // infill: max hypothesis length
  double h_sample = 4.0;         // entropy target for candidate sampling, nats
  double entropy_tolerance = 0.05;
  std::optional<double> novelty_threshold;
  std::uint64_t rng_seed = 0;
  WeightLearnConfig weights;
  BleuConfig bleu;
  bool score_all_contexts = false;      // rank over unpruned contexts instead
  bool length_normalize_scores = false; // per-candidate-token score variant

  int candidate_max_len(std::size_t src_len) const {
    return task == Task::kParaphrase ? static_cast<int>(src_len) + len_s_extra : len_h;
  }

  static PipelineConfig paraphrase_preset() {
    PipelineConfig c;
    c.task = Task::kParaphrase;
    c.n_c = 80;
    c.k_c = 6;
    c.p_c = 0.7;
    c.len_c = 50;
    c.n_s = 30;
    c.len_s_extra = 5;
    c.h_sample = 4.0;
    return c;
  }

  static PipelineConfig anlg_preset() {
    PipelineConfig c;
    c.task = Task::kInfill;
    c.n_c = 50;
    c.k_c = 6;
    c.p_c = 0.9;
    c.len_c = 50;
    c.n_s = 20;
    c.len_h = 20;
    c.h_sample = 6.0;
    return c;
  }
};

struct Candidate {
  TokenSeq tokens;
  Direction origin = Direction::kForward;  // which sampler produced it
  double rd_logprob = 0.0;
  double task_score = 0.0;
  double novelty = 0.0;
  bool passed_filter = true;
};

// Sample n_c contexts conditioned on the source. A forward LM yields right
// contexts, a backward LM left contexts; either way sequences come back in
// logical order.
inline std::vector<TokenSeq> generate_contexts(const LanguageModel& lm,
                                               const TokenSeq& s_src,
                                               const PipelineConfig& cfg,
                                               std::uint64_t stream_seed) {
  if (s_src.empty()) throw std::invalid_argument("source is empty");
  LmProvider provider(lm, s_src);
  std::vector<TokenSeq> contexts;
  contexts.reserve(static_cast<std::size_t>(cfg.n_c));
  // An immediate end-of-text yields an empty context, which carries no
  // information about the source (its expert is the unconditioned LM), so
  // resample past empties; the attempt cap keeps degenerate models halting.
  const int max_attempts = cfg.n_c * 20;
  for (int i = 0; i < max_attempts && contexts.size() < static_cast<std::size_t>(cfg.n_c);
       ++i) {
    NucleusParams params{cfg.p_c, substream_seed(stream_seed, "context", static_cast<std::uint64_t>(i)),
                         cfg.len_c};
    SampleResult res = sample_sequence(provider, params);
    TokenSeq ctx =
        lm.direction() == Direction::kBackward ? reversed(res.tokens) : res.tokens;
    if (!ctx.empty()) contexts.push_back(std::move(ctx));
  }
  while (contexts.size() < static_cast<std::size_t>(cfg.n_c)) contexts.push_back({});
  return contexts;
}

// Contextualize, learn weights, prune. `direction` names the decoding
// direction of the resulting sampler: backward = right contexts from the
// forward LM decoded by the backward LM, forward symmetrically.
struct SamplerBuild {
  ContextEnsemble learned;  // before pruning
  ContextEnsemble pruned;
  std::vector<WeightIterate> trace;
};

inline SamplerBuild build_reflective_ensemble(const TokenSeq& s_src, Direction direction,
                                              const LanguageModel& forward_lm,
                                              const LanguageModel& backward_lm,
                                              const PipelineConfig& cfg,
                                              std::uint64_t stream_seed) {
  if (forward_lm.direction() != Direction::kForward ||
      backward_lm.direction() != Direction::kBackward)
    throw std::invalid_argument("build_reflective_ensemble needs one LM per direction");
  if (!(forward_lm.vocab() == backward_lm.vocab()))
    throw std::invalid_argument("forward and backward LMs must share a vocabulary");
  const LanguageModel& context_lm =
      direction == Direction::kBackward ? forward_lm : backward_lm;
  const LanguageModel& decode_lm =
      direction == Direction::kBackward ? backward_lm : forward_lm;
  std::vector<TokenSeq> contexts = generate_contexts(context_lm, s_src, cfg, stream_seed);
  SamplerBuild out;
  out.learned = learn_weights(contexts, s_src, decode_lm, cfg.weights, &out.trace);
  out.pruned = prune_weights(out.learned, cfg.k_c);
  return out;
}

inline ReflectiveSampler build_reflective_sampler(const TokenSeq& s_src, Direction direction,
                                                  const LanguageModel& forward_lm,
                                                  const LanguageModel& backward_lm,
                                                  const PipelineConfig& cfg,
                                                  std::uint64_t stream_seed) {
  SamplerBuild b =
      build_reflective_ensemble(s_src, direction, forward_lm, backward_lm, cfg, stream_seed);
  const LanguageModel& decode_lm =
      direction == Direction::kBackward ? backward_lm : forward_lm;
  return ReflectiveSampler(std::move(b.pruned), decode_lm);
}

struct PostprocessResult {
  TokenSeq tokens;
  bool untrimmable = false;  // no sentence boundary found; input returned as-is
};

// Trim a fixed-length generation at sentence boundaries. Paraphrase mode
// keeps the one complete sentence adjacent to the conditioning side (left for
// a forward-origin sample, right for backward). Infill mode only drops the
// ragged fragment at the generation-truncated end.
inline PostprocessResult postprocess(const TokenSeq& raw, Task mode, Direction origin,
                                     const Vocabulary& vocab) {
  std::vector<std::size_t> bounds;  // indices of boundary tokens
  for (std::size_t i = 0; i < raw.size(); ++i)
    if (is_sentence_boundary(vocab, raw[i])) bounds.push_back(i);
  if (bounds.empty()) return {raw, true};

  if (mode == Task::kParaphrase) {
    if (origin == Direction::kForward) {
      // first complete sentence
      return {TokenSeq(raw.begin(), raw.begin() + static_cast<std::ptrdiff_t>(bounds.front()) + 1),
              false};
    }
    // last complete sentence
    std::size_t end = bounds.back() + 1;
    std::size_t start = bounds.size() >= 2 ? bounds[bounds.size() - 2] + 1 : 0;
    return {TokenSeq(raw.begin() + static_cast<std::ptrdiff_t>(start),
                     raw.begin() + static_cast<std::ptrdiff_t>(end)),
            false};
  }

  // infill
  if (origin == Direction::kForward) {
    // drop the incomplete tail after the last boundary
    return {TokenSeq(raw.begin(), raw.begin() + static_cast<std::ptrdiff_t>(bounds.back()) + 1),
            false};
  }
  // right-to-left generation truncates on the left; with two or more
  // boundaries the head up to the first one is a sentence-tail fragment
  if (bounds.size() >= 2) {
    return {TokenSeq(raw.begin() + static_cast<std::ptrdiff_t>(bounds.front()) + 1, raw.end()),
            false};
  }
  return {raw, false};
}

struct RankedCandidates {
  std::vector<Candidate> ranked;    // filter-passing, best first
  std::vector<Candidate> rejected;  // infill only: failed the explanation filter
  bool no_candidates = false;       // everything empty after post-processing
};

struct DirectionRun {
  SamplerBuild build;
  CalibrationResult calibration;
  std::uint64_t context_seed = 0;
  std::uint64_t candidate_seed = 0;
};

struct PipelineRun {
  RankedCandidates result;
  DirectionRun rd_forward;   // RD with left contexts, decoding left-to-right
  DirectionRun rd_backward;  // RD with right contexts, decoding right-to-left
};

namespace detail {

inline void sort_candidates(std::vector<Candidate>& cands) {
  std::vector<std::size_t> idx(cands.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (cands[a].task_score != cands[b].task_score)
      return cands[a].task_score > cands[b].task_score;
    if (cands[a].rd_logprob != cands[b].rd_logprob)
      return cands[a].rd_logprob > cands[b].rd_logprob;
    return a < b;
  });
  std::vector<Candidate> out;
  out.reserve(cands.size());
  for (std::size_t i : idx) out.push_back(std::move(cands[i]));
  cands = std::move(out);
}

// Exact token-sequence dedup keeping the first occurrence; empties dropped.
inline std::vector<Candidate> dedup_nonempty(std::vector<Candidate> cands) {
  std::set<TokenSeq> seen;
  std::vector<Candidate> out;
  for (auto& c : cands) {
    if (c.tokens.empty()) continue;
    if (seen.insert(c.tokens).second) out.push_back(std::move(c));
  }
  return out;
}

inline CalibrationResult calibrate_direction(const ReflectiveSampler& sampler,
                                             const TokenSeq& inner,
                                             const TokenSeq& calib_seq,
                                             const PipelineConfig& cfg) {
  RdProvider provider(sampler, inner);
  TokenSeq s = sampler.direction() == Direction::kBackward ? reversed(calib_seq) : calib_seq;
  EntropyTarget target;
  target.h_target = cfg.h_sample;
  target.tolerance = cfg.entropy_tolerance;
  return calibrate_p(provider, s, target);
}

inline std::vector<Candidate> sample_candidates(const ReflectiveSampler& sampler,
                                                const TokenSeq& inner, double p,
                                                int count, int max_len,
                                                std::uint64_t stream_seed, Task mode,
                                                const Vocabulary& vocab) {
  RdProvider provider(sampler, inner);
  std::vector<Candidate> out;
  for (int i = 0; i < count; ++i) {
    NucleusParams params{p, substream_seed(stream_seed, "candidate", static_cast<std::uint64_t>(i)),
                         max_len};
    SampleResult res = sample_sequence(provider, params);
    TokenSeq logical = sampler.direction() == Direction::kBackward ? reversed(res.tokens)
                                                                   : res.tokens;
    Candidate c;
    c.origin = sampler.direction();
    c.tokens = postprocess(logical, mode, sampler.direction(), vocab).tokens;
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace detail

// Paraphrase application: sample candidates from both directions, trim,
// dedup, and rank by how well each candidate predicts the source's contexts.
inline PipelineRun paraphrase(const TokenSeq& s_src, const LanguageModel& forward_lm,
                              const LanguageModel& backward_lm, const PipelineConfig& cfg) {
  if (s_src.empty()) throw std::invalid_argument("source is empty");
  PipelineRun run;
  run.rd_backward.context_seed = substream_seed(cfg.rng_seed, "contexts.rd_backward");
  run.rd_forward.context_seed = substream_seed(cfg.rng_seed, "contexts.rd_forward");
  run.rd_backward.candidate_seed = substream_seed(cfg.rng_seed, "candidates.rd_backward");
  run.rd_forward.candidate_seed = substream_seed(cfg.rng_seed, "candidates.rd_forward");

  run.rd_backward.build = build_reflective_ensemble(
      s_src, Direction::kBackward, forward_lm, backward_lm, cfg, run.rd_backward.context_seed);
  run.rd_forward.build = build_reflective_ensemble(
      s_src, Direction::kForward, forward_lm, backward_lm, cfg, run.rd_forward.context_seed);
  ReflectiveSampler rd_back(run.rd_backward.build.pruned, backward_lm);
  ReflectiveSampler rd_fwd(run.rd_forward.build.pruned, forward_lm);

  run.rd_backward.calibration = detail::calibrate_direction(rd_back, {}, s_src, cfg);
  run.rd_forward.calibration = detail::calibrate_direction(rd_fwd, {}, s_src, cfg);

  const int max_len = cfg.candidate_max_len(s_src.size());
  const Vocabulary& vocab = forward_lm.vocab();
  std::vector<Candidate> cands = detail::sample_candidates(
      rd_fwd, {}, run.rd_forward.calibration.p, cfg.n_s, max_len,
      run.rd_forward.candidate_seed, Task::kParaphrase, vocab);
  std::vector<Candidate> back = detail::sample_candidates(
      rd_back, {}, run.rd_backward.calibration.p, cfg.n_s, max_len,
      run.rd_backward.candidate_seed, Task::kParaphrase, vocab);
  cands.insert(cands.end(), std::make_move_iterator(back.begin()),
               std::make_move_iterator(back.end()));
  cands = detail::dedup_nonempty(std::move(cands));
  if (cands.empty()) {
    run.result.no_candidates = true;
    return run;
  }

  const auto& right_ctx = cfg.score_all_contexts ? run.rd_backward.build.learned.contexts
                                                 : run.rd_backward.build.pruned.contexts;
  const auto& left_ctx = cfg.score_all_contexts ? run.rd_forward.build.learned.contexts
                                                : run.rd_forward.build.pruned.contexts;
  for (Candidate& c : cands) {
    double right = 0.0, left = 0.0;
    for (const TokenSeq& ctx : right_ctx) right += sequence_logprob(forward_lm, ctx, c.tokens);
    for (const TokenSeq& ctx : left_ctx) left += sequence_logprob(backward_lm, ctx, c.tokens);
    c.task_score = right / static_cast<double>(right_ctx.size()) +
                   left / static_cast<double>(left_ctx.size());
    if (cfg.length_normalize_scores)
      c.task_score /= static_cast<double>(c.tokens.size());
    c.rd_logprob = c.origin == Direction::kBackward ? rd_sequence_logprob(rd_back, c.tokens)
                                                    : rd_sequence_logprob(rd_fwd, c.tokens);
    c.novelty = novelty(c.tokens, s_src, cfg.bleu);
  }
  detail::sort_candidates(cands);
  run.result.ranked = std::move(cands);
  return run;
}

struct Selection {
  Candidate candidate;
  std::size_t rank = 0;
  bool fallback = false;  // nothing met the threshold; highest-novelty returned
};

// First candidate meeting the novelty threshold; threshold 0 is plain top-1.
inline Selection select_with_novelty_threshold(const std::vector<Candidate>& ranked,
                                               double threshold) {
  if (ranked.empty()) throw std::invalid_argument("no candidates to select from");
  for (std::size_t i = 0; i < ranked.size(); ++i)
    if (ranked[i].novelty >= threshold) return {ranked[i], i, false};
  std::size_t best = 0;
  for (std::size_t i = 1; i < ranked.size(); ++i)
    if (ranked[i].novelty > ranked[best].novelty) best = i;
  return {ranked[best], best, true};
}

// Abductive infilling: hypotheses sampled between o1 and o2, filtered so that
// adding the hypothesis strictly improves how well each observation is
// explained, ranked by the combined explanation score.
inline PipelineRun abductive_infill(const TokenSeq& o1, const TokenSeq& o2,
                                    const LanguageModel& forward_lm,
                                    const LanguageModel& backward_lm,
                                    const PipelineConfig& cfg) {
  if (o1.empty() || o2.empty())
    throw std::invalid_argument("both observations must be non-empty");
  TokenSeq s_src = concat(o1, o2);
  PipelineRun run;
  run.rd_backward.context_seed = substream_seed(cfg.rng_seed, "contexts.rd_backward");
  run.rd_forward.context_seed = substream_seed(cfg.rng_seed, "contexts.rd_forward");
  run.rd_backward.candidate_seed = substream_seed(cfg.rng_seed, "candidates.rd_backward");
  run.rd_forward.candidate_seed = substream_seed(cfg.rng_seed, "candidates.rd_forward");

  run.rd_backward.build = build_reflective_ensemble(
      s_src, Direction::kBackward, forward_lm, backward_lm, cfg, run.rd_backward.context_seed);
  run.rd_forward.build = build_reflective_ensemble(
      s_src, Direction::kForward, forward_lm, backward_lm, cfg, run.rd_forward.context_seed);
  ReflectiveSampler rd_back(run.rd_backward.build.pruned, backward_lm);
  ReflectiveSampler rd_fwd(run.rd_forward.build.pruned, forward_lm);

  // calibrate where sampling will actually happen: before o2 for RD-backward,
  // after o1 for RD-forward
  run.rd_backward.calibration = detail::calibrate_direction(rd_back, o2, o1, cfg);
  run.rd_forward.calibration = detail::calibrate_direction(rd_fwd, o1, o2, cfg);

  const Vocabulary& vocab = forward_lm.vocab();
  std::vector<Candidate> cands = detail::sample_candidates(
      rd_back, o2, run.rd_backward.calibration.p, cfg.n_s, cfg.len_h,
      run.rd_backward.candidate_seed, Task::kInfill, vocab);
  std::vector<Candidate> fwd = detail::sample_candidates(
      rd_fwd, o1, run.rd_forward.calibration.p, cfg.n_s, cfg.len_h,
      run.rd_forward.candidate_seed, Task::kInfill, vocab);
  cands.insert(cands.end(), std::make_move_iterator(fwd.begin()),
               std::make_move_iterator(fwd.end()));
  cands = detail::dedup_nonempty(std::move(cands));
  if (cands.empty()) {
    run.result.no_candidates = true;
    return run;
  }

  const double base_left = sequence_logprob(backward_lm, o1, o2);
  const double base_right = sequence_logprob(forward_lm, o2, o1);
  for (Candidate& c : cands) {
    double explain_left = sequence_logprob(backward_lm, o1, concat(c.tokens, o2));
    double explain_right = sequence_logprob(forward_lm, o2, concat(o1, c.tokens));
    c.task_score = explain_left + explain_right;
    if (cfg.length_normalize_scores)
      c.task_score /= static_cast<double>(c.tokens.size());
    c.passed_filter = explain_left > base_left && explain_right > base_right;
    c.rd_logprob = c.origin == Direction::kBackward
                       ? rd_sequence_logprob(rd_back, c.tokens, o2)
                       : rd_sequence_logprob(rd_fwd, c.tokens, o1);
    c.novelty = novelty(c.tokens, s_src, cfg.bleu);
  }
  std::vector<Candidate> passed, failed;
  for (auto& c : cands) (c.passed_filter ? passed : failed).push_back(std::move(c));
  detail::sort_candidates(passed);
  detail::sort_candidates(failed);
  run.result.ranked = std::move(passed);
  run.result.rejected = std::move(failed);
  return run;
}

}  // namespace reflect
