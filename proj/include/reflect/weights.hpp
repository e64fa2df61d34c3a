// Simplex-constrained context-weight learning by exponentiated-gradient
// ascent on the token-normalized PoE log-probability of the source, plus
// top-k pruning.
#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "reflect/ensemble.hpp"
#include "reflect/lm.hpp"
#include "reflect/numeric.hpp"
#include "reflect/token.hpp"

namespace reflect {

struct WeightLearnConfig {
  int max_iters = 200;
  double step_size = 0.5;
  double convergence_tol = 1e-4;  // change in objective, nats
  int k_c = 6;
};

struct WeightIterate {
  int iteration = 0;
  double objective = 0.0;
  std::vector<double> weights;
};

// Per-position expert log-prob tables for a fixed source: logp[j][i][t] is
// expert i's (floored) log-prob of token t at position j, realized[j] the
// source token there. Objective and gradient are closed-form in these.
class PoeObjective {
 public:
  PoeObjective(const std::vector<TokenSeq>& contexts, const TokenSeq& s_src,
               const LanguageModel& lm, const TokenSeq& fixed_inner_context = {}) {
    const std::size_t len = s_src.size();
    const bool backward = lm.direction() == Direction::kBackward;
    logp_.resize(len);
    realized_.resize(len);
    for (std::size_t step = 0; step < len; ++step) {
      // position in factorization order
      std::size_t j = backward ? len - 1 - step : step;
      realized_[step] = s_src[j];
      TokenSeq partial = backward
                             ? TokenSeq(s_src.begin() + static_cast<std::ptrdiff_t>(j) + 1,
                                        s_src.end())
                             : TokenSeq(s_src.begin(),
                                        s_src.begin() + static_cast<std::ptrdiff_t>(j));
      logp_[step].reserve(contexts.size());
      for (const TokenSeq& c : contexts) {
        TokenSeq prefix = backward ? concat(partial, concat(fixed_inner_context, c))
                                   : concat(c, concat(fixed_inner_context, partial));
        std::vector<double> lp = lm.next_token_logprobs(prefix);
        for (double& x : lp) x = floored(x);
        logp_[step].push_back(std::move(lp));
      }
    }
    n_experts_ = contexts.size();
  }

  std::size_t num_experts() const { return n_experts_; }

  double objective(const std::vector<double>& w) const {
    double obj = 0.0;
    for (std::size_t step = 0; step < logp_.size(); ++step) {
      std::vector<double> mix = mixed(step, w);
      obj += mix[static_cast<std::size_t>(realized_[step])] - log_sum_exp(mix);
    }
    return obj;
  }

  // Analytic gradient of the objective with respect to w (unconstrained
  // coordinates; the simplex is enforced by the EG update).
  std::vector<double> gradient(const std::vector<double>& w) const {
    std::vector<double> g(n_experts_, 0.0);
    for (std::size_t step = 0; step < logp_.size(); ++step) {
      std::vector<double> mix = mixed(step, w);
      double z = log_sum_exp(mix);
      const std::size_t r = static_cast<std::size_t>(realized_[step]);
      for (std::size_t i = 0; i < n_experts_; ++i) {
        double expect = 0.0;
        for (std::size_t t = 0; t < mix.size(); ++t)
          expect += std::exp(mix[t] - z) * logp_[step][i][t];
        g[i] += logp_[step][i][r] - expect;
      }
    }
    return g;
  }

 private:
  std::vector<double> mixed(std::size_t step, const std::vector<double>& w) const {
    std::vector<double> mix(logp_[step][0].size(), 0.0);
    for (std::size_t i = 0; i < n_experts_; ++i)
      for (std::size_t t = 0; t < mix.size(); ++t) mix[t] += w[i] * logp_[step][i][t];
    return mix;
  }

  std::vector<std::vector<std::vector<double>>> logp_;  // [step][expert][token]
  std::vector<TokenId> realized_;
  std::size_t n_experts_ = 0;
};

// Multiplicative update w_i <- w_i * exp(step * g_i), renormalized, so every
// iterate stays on the simplex. Returns the best-objective iterate.
inline ContextEnsemble learn_weights(const std::vector<TokenSeq>& contexts,
                                     const TokenSeq& s_src, const LanguageModel& lm,
                                     const WeightLearnConfig& cfg,
                                     std::vector<WeightIterate>* trace = nullptr) {
  if (contexts.empty()) throw std::invalid_argument("no contexts to weight");
  if (cfg.max_iters < 1) throw std::invalid_argument("max_iters must be >= 1");
  ContextSide side = lm.direction() == Direction::kBackward ? ContextSide::kRight
                                                            : ContextSide::kLeft;
  const std::size_t n = contexts.size();
  std::vector<double> w(n, 1.0 / static_cast<double>(n));

  PoeObjective obj(contexts, s_src, lm);
  double best = obj.objective(w);
  if (!std::isfinite(best)) {
    // identify the offending expert for the error message
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> e(n, 0.0);
      e[i] = 1.0;
      if (!std::isfinite(obj.objective(e)))
        throw std::runtime_error("non-finite objective at initialization (context " +
                                 std::to_string(i) + ")");
    }
    throw std::runtime_error("non-finite objective at initialization");
  }
  std::vector<double> best_w = w;
  if (trace) trace->push_back({0, best, w});

  double prev = best;
  for (int it = 1; it <= cfg.max_iters && n > 1; ++it) {
    std::vector<double> g = obj.gradient(w);
    double gmax = *std::max_element(g.begin(), g.end());
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      // subtract gmax before exponentiating; the shift cancels in the
      // normalization
      w[i] *= std::exp(cfg.step_size * (g[i] - gmax));
      sum += w[i];
    }
    for (double& x : w) x /= sum;
    double cur = obj.objective(w);
    if (cur > best) {
      best = cur;
      best_w = w;
    }
    if (trace) trace->push_back({it, best, w});
    if (std::abs(cur - prev) < cfg.convergence_tol) break;
    prev = cur;
  }
  return ContextEnsemble{contexts, best_w, side};
}

// Keep the k_c largest-weight contexts (ties by lower original index),
// renormalize, preserving original order of survivors.
inline ContextEnsemble prune_weights(const ContextEnsemble& ensemble, int k_c) {
  if (k_c < 1) throw std::invalid_argument("k_c must be >= 1");
  ensemble.validate();
  const std::size_t n = ensemble.contexts.size();
  if (n <= static_cast<std::size_t>(k_c)) return ensemble;
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return ensemble.weights[a] > ensemble.weights[b];
  });
  idx.resize(static_cast<std::size_t>(k_c));
  std::sort(idx.begin(), idx.end());
  ContextEnsemble out;
  out.side = ensemble.side;
  double sum = 0.0;
  for (std::size_t i : idx) sum += ensemble.weights[i];
  for (std::size_t i : idx) {
    out.contexts.push_back(ensemble.contexts[i]);
    out.weights.push_back(ensemble.weights[i] / sum);
  }
  return out;
}

}  // namespace reflect
