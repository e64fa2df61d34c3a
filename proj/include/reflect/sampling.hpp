// Nucleus (top-p) truncation, seeded autoregressive sampling and entropy
// calibration of the nucleus parameter.
//
// Providers work in GENERATION order: the prefix passed to next_logprobs is
// the tokens emitted so far, earliest first. For a right-to-left provider the
// caller converts to logical order afterwards.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "reflect/lm.hpp"
#include "reflect/numeric.hpp"
#include "reflect/rng.hpp"
#include "reflect/token.hpp"

namespace reflect {

struct NucleusParams {
  double p = 1.0;           // in (0, 1]
  std::uint64_t rng_seed = 0;
  int max_len = 1;          // >= 1, tokens
};

struct EntropyTarget {
  double h_target = 0.0;    // nats, >= 0
  double tolerance = 0.05;  // nats, > 0
  double p_lo = 0.01;
  double p_hi = 1.0;
  int max_iters = 40;
};

class TokenDistProvider {
 public:
  virtual ~TokenDistProvider() = default;
  // Log-prob vector over V for the next emitted token given the tokens
  // emitted so far (generation order).
  virtual std::vector<double> next_logprobs(const TokenSeq& emitted) const = 0;
};

// Forward LM with fixed left conditioning: generation order == logical order.
class LmProvider final : public TokenDistProvider {
 public:
  LmProvider(const LanguageModel& lm, TokenSeq conditioning)
      : lm_(lm), conditioning_(std::move(conditioning)) {}

  std::vector<double> next_logprobs(const TokenSeq& emitted) const override {
    if (lm_.direction() == Direction::kForward)
      return lm_.next_token_logprobs(concat(conditioning_, emitted));
    // Backward LM: emitted tokens grow leftward; the logical right context of
    // the next token is reverse(emitted) + conditioning.
    return lm_.next_token_logprobs(concat(reversed(emitted), conditioning_));
  }

 private:
  const LanguageModel& lm_;
  TokenSeq conditioning_;
};

struct NucleusSupport {
  std::vector<TokenId> kept;      // probability-descending, ties by ascending id
  std::vector<double> kept_logp;  // renormalized over the kept set
};

// Support of the smallest prefix of probability-sorted tokens with cumulative
// mass >= p, renormalized.
inline NucleusSupport nucleus_support(const std::vector<double>& logp, double p) {
  if (!(p > 0.0 && p <= 1.0)) throw std::invalid_argument("nucleus p must be in (0,1]");
  std::vector<TokenId> idx(logp.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](TokenId a, TokenId b) {
    return logp[static_cast<std::size_t>(a)] > logp[static_cast<std::size_t>(b)];
  });
  NucleusSupport out;
  double cum = 0.0;
  for (TokenId t : idx) {
    out.kept.push_back(t);
    cum += std::exp(logp[static_cast<std::size_t>(t)]);
    if (cum >= p) break;
  }
  const double logz = std::log(cum);
  out.kept_logp.reserve(out.kept.size());
  for (TokenId t : out.kept)
    out.kept_logp.push_back(logp[static_cast<std::size_t>(t)] - logz);
  return out;
}

// Full-vocabulary view of the truncated distribution: excluded entries at the
// log-prob floor.
inline std::vector<double> nucleus_filter(const std::vector<double>& logp, double p) {
  NucleusSupport sup = nucleus_support(logp, p);
  std::vector<double> out(logp.size(), kLogProbFloor);
  for (std::size_t i = 0; i < sup.kept.size(); ++i)
    out[static_cast<std::size_t>(sup.kept[i])] = sup.kept_logp[i];
  return out;
}

// Inverse-CDF draw over the kept set.
inline TokenId sample_from_support(const NucleusSupport& sup, Rng& rng) {
  double u = rng.uniform();
  double cum = 0.0;
  for (std::size_t i = 0; i < sup.kept.size(); ++i) {
    cum += std::exp(sup.kept_logp[i]);
    if (u < cum) return sup.kept[i];
  }
  return sup.kept.back();
}

struct SampleResult {
  TokenSeq tokens;          // generation order, end-of-text not included
  bool hit_max_len = false;
};

// Autoregressive nucleus sampling; stops early when end-of-text is drawn.
// Identical seed and inputs replay identically.
inline SampleResult sample_sequence(const TokenDistProvider& provider,
                                    const NucleusParams& params) {
  if (params.max_len < 1) throw std::invalid_argument("max_len must be >= 1");
  Rng rng(params.rng_seed);
  SampleResult res;
  for (int i = 0; i < params.max_len; ++i) {
    NucleusSupport sup = nucleus_support(provider.next_logprobs(res.tokens), params.p);
    TokenId t = sample_from_support(sup, rng);
    if (t == Vocabulary::kEos) return res;
    res.tokens.push_back(t);
  }
  res.hit_max_len = true;
  return res;
}

inline double shannon_entropy(const NucleusSupport& sup) {
  double h = 0.0;
  for (double lp : sup.kept_logp) h -= std::exp(lp) * lp;
  return std::max(h, 0.0);
}

// Sum of token-wise entropies of the truncated sampling distribution along s
// (teacher forcing; s in generation order).
inline double estimate_sequence_entropy(const TokenDistProvider& provider,
                                        const TokenSeq& s, double p) {
  if (s.empty()) throw std::invalid_argument("entropy estimate needs a non-empty sequence");
  double total = 0.0;
  TokenSeq prefix;
  for (TokenId t : s) {
    total += shannon_entropy(nucleus_support(provider.next_logprobs(prefix), p));
    prefix.push_back(t);
  }
  return total;
}

struct CalibrationResult {
  double p = 1.0;
  double achieved_entropy = 0.0;
  bool at_boundary = false;  // target unreachable inside the search bounds
};

// Bisection on the monotone nondecreasing map p -> sequence entropy.
inline CalibrationResult calibrate_p(const TokenDistProvider& provider, const TokenSeq& s,
                                     const EntropyTarget& target) {
  if (target.h_target < 0.0) throw std::invalid_argument("entropy target must be >= 0");
  if (target.tolerance <= 0.0) throw std::invalid_argument("tolerance must be > 0");
  auto eval = [&](double p) { return estimate_sequence_entropy(provider, s, p); };
  double lo = target.p_lo, hi = target.p_hi;
  double h_lo = eval(lo), h_hi = eval(hi);
  if (h_lo >= target.h_target - target.tolerance)
    return {lo, h_lo, h_lo > target.h_target + target.tolerance};
  if (h_hi <= target.h_target + target.tolerance)
    return {hi, h_hi, h_hi < target.h_target - target.tolerance};
  double best_p = hi, best_h = h_hi;
  for (int it = 0; it < target.max_iters; ++it) {
    double mid = 0.5 * (lo + hi);
    double h = eval(mid);
    if (std::abs(h - target.h_target) < std::abs(best_h - target.h_target)) {
      best_p = mid;
      best_h = h;
    }
    if (std::abs(h - target.h_target) <= target.tolerance) return {mid, h, false};
    if (h < target.h_target)
      lo = mid;
    else
      hi = mid;
  }
  // The entropy map is piecewise constant in p, so the tolerance can be
  // unattainable even inside the bounds; report the nearest point found.
  return {best_p, best_h, true};
}

}  // namespace reflect
