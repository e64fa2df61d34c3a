// The reflective sampling function: a token-normalized product of experts
// over one unidirectional LM conditioned on each sampled context.
//
// Right contexts pair with the backward LM (decoding right-to-left); left
// contexts pair with the forward LM. Each emitted token distribution is
//   softmax_t( sum_i w_i * log LM(t | partial + inner + c_i) ).
#pragma once

#include <memory>
#include <stdexcept>
#include <utility>
#include <vector>

#include "reflect/lm.hpp"
#include "reflect/numeric.hpp"
#include "reflect/sampling.hpp"
#include "reflect/token.hpp"

namespace reflect {

enum class ContextSide { kLeft, kRight };

struct ContextEnsemble {
  std::vector<TokenSeq> contexts;
  std::vector<double> weights;  // simplex: w_i >= 0, sum 1
  ContextSide side = ContextSide::kRight;

  void validate() const {
    if (contexts.empty() || contexts.size() != weights.size())
      throw std::invalid_argument("ensemble needs matching non-empty contexts and weights");
    double sum = 0.0;
    for (double w : weights) {
      if (w < 0.0) throw std::invalid_argument("ensemble weight is negative");
      sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-8)
      throw std::invalid_argument("ensemble weights do not sum to 1");
  }
};

class ReflectiveSampler {
 public:
  ReflectiveSampler(ContextEnsemble ensemble, const LanguageModel& lm)
      : ensemble_(std::move(ensemble)), lm_(lm) {
    ensemble_.validate();
    const bool ok = (ensemble_.side == ContextSide::kRight &&
                     lm_.direction() == Direction::kBackward) ||
                    (ensemble_.side == ContextSide::kLeft &&
                     lm_.direction() == Direction::kForward);
    if (!ok)
      throw std::invalid_argument(
          "context side and LM direction are incompatible: right contexts need a "
          "backward LM, left contexts a forward LM");
  }

  const ContextEnsemble& ensemble() const { return ensemble_; }
  const LanguageModel& lm() const { return lm_; }
  Direction direction() const { return lm_.direction(); }
  const Vocabulary& vocab() const { return lm_.vocab(); }

 private:
  ContextEnsemble ensemble_;
  const LanguageModel& lm_;
};

// PoE next-token distribution. `partial` is the already-generated part in
// logical order (the suffix for a backward sampler, the prefix for a forward
// one); `fixed_inner_context` sits between the generation and the contexts.
inline std::vector<double> rd_next_token_dist(const ReflectiveSampler& sampler,
                                              const TokenSeq& partial,
                                              const TokenSeq& fixed_inner_context = {}) {
  const auto& ens = sampler.ensemble();
  std::vector<double> mix(sampler.vocab().size(), 0.0);
  for (std::size_t i = 0; i < ens.contexts.size(); ++i) {
    TokenSeq prefix = sampler.direction() == Direction::kBackward
                          ? concat(partial, concat(fixed_inner_context, ens.contexts[i]))
                          : concat(ens.contexts[i], concat(fixed_inner_context, partial));
    std::vector<double> lp = sampler.lm().next_token_logprobs(prefix);
    const double w = ens.weights[i];
    for (std::size_t t = 0; t < mix.size(); ++t) mix[t] += w * floored(lp[t]);
  }
  normalize_log_probs(mix);
  return mix;
}

// Log-probability of s under the sampler's token-normalized factorization;
// the objective maximized during weight learning.
inline double rd_sequence_logprob(const ReflectiveSampler& sampler, const TokenSeq& s,
                                  const TokenSeq& fixed_inner_context = {}) {
  double total = 0.0;
  if (sampler.direction() == Direction::kBackward) {
    for (std::size_t j = s.size(); j-- > 0;) {
      TokenSeq partial(s.begin() + static_cast<std::ptrdiff_t>(j) + 1, s.end());
      total += rd_next_token_dist(sampler, partial, fixed_inner_context)
          [static_cast<std::size_t>(s[j])];
    }
  } else {
    for (std::size_t j = 0; j < s.size(); ++j) {
      TokenSeq partial(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(j));
      total += rd_next_token_dist(sampler, partial, fixed_inner_context)
          [static_cast<std::size_t>(s[j])];
    }
  }
  return total;
}

// Generation-order provider over the PoE distribution.
class RdProvider final : public TokenDistProvider {
 public:
  RdProvider(const ReflectiveSampler& sampler, TokenSeq fixed_inner_context = {})
      : sampler_(sampler), inner_(std::move(fixed_inner_context)) {}

  std::vector<double> next_logprobs(const TokenSeq& emitted) const override {
    TokenSeq partial = sampler_.direction() == Direction::kBackward
                           ? reversed(emitted)
                           : emitted;
    return rd_next_token_dist(sampler_, partial, inner_);
  }

 private:
  const ReflectiveSampler& sampler_;
  TokenSeq inner_;
};

// Draw `count` sequences, returned in logical order.
inline std::vector<TokenSeq> rd_sample(const ReflectiveSampler& sampler,
                                       const TokenSeq& fixed_inner_context,
                                       const NucleusParams& params, int count) {
  if (count < 1) throw std::invalid_argument("sample count must be >= 1");
  RdProvider provider(sampler, fixed_inner_context);
  std::vector<TokenSeq> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    NucleusParams p = params;
    p.rng_seed = mix64(params.rng_seed + static_cast<std::uint64_t>(i));
    SampleResult res = sample_sequence(provider, p);
    out.push_back(sampler.direction() == Direction::kBackward ? reversed(res.tokens)
                                                              : res.tokens);
  }
  return out;
}

}  // namespace reflect
