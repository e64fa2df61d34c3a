// Run manifest serialization. Schema documented in docs/manifest_format.md.
#pragma once

#include <string>

#include <json.hpp>

#include "reflect/pipeline.hpp"
#include "reflect/token.hpp"

namespace reflect {

inline constexpr int kManifestFormatVersion = 1;

inline nlohmann::json config_to_json(const PipelineConfig& cfg) {
  nlohmann::json j;
  j["task"] = cfg.task == Task::kParaphrase ? "paraphrase" : "infill";
  j["n_c"] = cfg.n_c;
  j["k_c"] = cfg.k_c;
  j["p_c"] = cfg.p_c;
  j["len_c"] = cfg.len_c;
  j["n_s"] = cfg.n_s;
  if (cfg.task == Task::kParaphrase) {
    j["len_s_rule"] = "len(s)+" + std::to_string(cfg.len_s_extra);
    j["len_s_extra"] = cfg.len_s_extra;
  } else {
    j["len_h"] = cfg.len_h;
  }
  j["h_sample"] = cfg.h_sample;
  j["entropy_tolerance"] = cfg.entropy_tolerance;
  j["novelty_threshold"] =
      cfg.novelty_threshold ? nlohmann::json(*cfg.novelty_threshold) : nlohmann::json();
  j["rng_seed"] = cfg.rng_seed;
  j["weights"] = {{"max_iters", cfg.weights.max_iters},
                  {"step_size", cfg.weights.step_size},
                  {"convergence_tol", cfg.weights.convergence_tol}};
  j["bleu"] = {{"max_ngram_order", cfg.bleu.max_ngram_order},
               {"smooth_higher_orders", cfg.bleu.smooth_higher_orders}};
  j["score_all_contexts"] = cfg.score_all_contexts;
  j["length_normalize_scores"] = cfg.length_normalize_scores;
  return j;
}

inline nlohmann::json candidate_to_json(const Candidate& c, const Vocabulary& vocab) {
  return {{"text", decode(vocab, c.tokens)},
          {"tokens", c.tokens},
          {"origin", c.origin == Direction::kBackward ? "rd_backward" : "rd_forward"},
          {"rd_logprob", c.rd_logprob},
          {"task_score", c.task_score},
          {"novelty", c.novelty},
          {"passed_filter", c.passed_filter}};
}

inline nlohmann::json direction_run_to_json(const DirectionRun& d, const Vocabulary& vocab) {
  nlohmann::json contexts = nlohmann::json::array();
  for (std::size_t i = 0; i < d.build.pruned.contexts.size(); ++i)
    contexts.push_back({{"text", decode(vocab, d.build.pruned.contexts[i])},
                        {"weight", d.build.pruned.weights[i]}});
  nlohmann::json all = nlohmann::json::array();
  for (std::size_t i = 0; i < d.build.learned.contexts.size(); ++i)
    all.push_back({{"text", decode(vocab, d.build.learned.contexts[i])},
                   {"weight", d.build.learned.weights[i]}});
  return {{"contexts", contexts},
          {"all_contexts", all},
          {"calibrated_p", d.calibration.p},
          {"calibrated_entropy", d.calibration.achieved_entropy},
          {"calibration_at_boundary", d.calibration.at_boundary},
          {"context_seed", d.context_seed},
          {"candidate_seed", d.candidate_seed}};
}

inline nlohmann::json run_to_json(const PipelineRun& run, const Vocabulary& vocab) {
  nlohmann::json j;
  j["rd_forward"] = direction_run_to_json(run.rd_forward, vocab);
  j["rd_backward"] = direction_run_to_json(run.rd_backward, vocab);
  j["no_candidates"] = run.result.no_candidates;
  nlohmann::json cands = nlohmann::json::array();
  for (const Candidate& c : run.result.ranked) cands.push_back(candidate_to_json(c, vocab));
  j["candidates"] = cands;
  nlohmann::json rej = nlohmann::json::array();
  for (const Candidate& c : run.result.rejected) rej.push_back(candidate_to_json(c, vocab));
  j["rejected"] = rej;
  return j;
}

}  // namespace reflect
