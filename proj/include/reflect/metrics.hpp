// Sentence-level BLEU, Novelty (100 - BLEU against the source), and the
// contextual cross-entropy diagnostic.
#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <vector>

#include "reflect/lm.hpp"
#include "reflect/token.hpp"

namespace reflect {

struct BleuConfig {
  int max_ngram_order = 4;
  // add-one smoothing on 2..n-gram precisions; orders with an empty candidate
  // n-gram set are skipped either way
  bool smooth_higher_orders = true;
};

namespace detail {
inline std::map<TokenSeq, int> ngram_counts(const TokenSeq& s, int n) {
  std::map<TokenSeq, int> counts;
  if (static_cast<int>(s.size()) < n) return counts;
  for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= s.size(); ++i)
    ++counts[TokenSeq(s.begin() + static_cast<std::ptrdiff_t>(i),
                      s.begin() + static_cast<std::ptrdiff_t>(i) + n)];
  return counts;
}
}  // namespace detail

// Modified n-gram precision geometric mean with brevity penalty, in [0,100].
inline double bleu(const TokenSeq& candidate, const std::vector<TokenSeq>& references,
                   const BleuConfig& cfg = {}) {
  if (cfg.max_ngram_order < 1 || cfg.max_ngram_order > 4)
    throw std::invalid_argument("max_ngram_order must be in [1,4]");
  if (candidate.empty()) throw std::invalid_argument("bleu: empty candidate");
  if (references.empty()) throw std::invalid_argument("bleu: no references");
  for (const auto& r : references)
    if (r.empty()) throw std::invalid_argument("bleu: empty reference");

  double log_prec_sum = 0.0;
  int used_orders = 0;
  for (int n = 1; n <= cfg.max_ngram_order; ++n) {
    auto cand = detail::ngram_counts(candidate, n);
    if (cand.empty()) break;  // candidate shorter than n
    int total = 0, matched = 0;
    for (const auto& [ng, c] : cand) {
      total += c;
      int best = 0;
      for (const auto& r : references) {
        auto rc = detail::ngram_counts(r, n);
        auto it = rc.find(ng);
        if (it != rc.end()) best = std::max(best, it->second);
      }
      matched += std::min(c, best);
    }
    double num = matched, den = total;
    if (cfg.smooth_higher_orders && n > 1) {
      num += 1.0;
      den += 1.0;
    }
    if (num == 0.0) return 0.0;
    log_prec_sum += std::log(num / den);
    ++used_orders;
  }
  double geo = log_prec_sum / used_orders;

  // closest reference length, ties to the shorter
  std::size_t c_len = candidate.size();
  std::size_t r_len = references[0].size();
  for (const auto& r : references) {
    auto diff = [&](std::size_t l) {
      return l > c_len ? l - c_len : c_len - l;
    };
    if (diff(r.size()) < diff(r_len) || (diff(r.size()) == diff(r_len) && r.size() < r_len))
      r_len = r.size();
  }
  double bp = c_len >= r_len
                  ? 1.0
                  : std::exp(1.0 - static_cast<double>(r_len) / static_cast<double>(c_len));
  return 100.0 * bp * std::exp(geo);
}

// Novelty = 100 - BLEU(candidate, source).
inline double novelty(const TokenSeq& candidate, const TokenSeq& source,
                      const BleuConfig& cfg = {}) {
  return 100.0 - bleu(candidate, {source}, cfg);
}

// Finite-sample contextual cross-entropy: mean of -log LM(c_i | s).
inline double contextual_cross_entropy(const TokenSeq& s,
                                       const std::vector<TokenSeq>& contexts,
                                       const LanguageModel& lm) {
  if (contexts.empty()) throw std::invalid_argument("no contexts");
  double total = 0.0;
  for (const TokenSeq& c : contexts) total += -sequence_logprob(lm, c, s);
  return total / static_cast<double>(contexts.size());
}

}  // namespace reflect
