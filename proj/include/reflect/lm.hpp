// Unidirectional language-model contract and the trainable reference n-gram
// model (interpolated backoff with add-k smoothing at each order).
//
// A backward model stores its sequences reversed internally; the public
// contract is always logical order. For a backward model "prefix" means the
// text to the RIGHT of the position being predicted.
#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "reflect/numeric.hpp"
#include "reflect/token.hpp"

namespace reflect {

enum class Direction { kForward, kBackward };

inline const char* to_string(Direction d) {
  return d == Direction::kForward ? "forward" : "backward";
}

inline Direction direction_from_string(const std::string& s) {
  if (s == "forward") return Direction::kForward;
  if (s == "backward") return Direction::kBackward;
  throw std::invalid_argument("unknown direction: " + s);
}

class LanguageModel {
 public:
  virtual ~LanguageModel() = default;

  virtual Direction direction() const = 0;
  virtual int order() const = 0;
  virtual const Vocabulary& vocab() const = 0;

  // Log-probabilities over the full vocabulary for the next token given the
  // logical-order prefix (text to the left for forward models, text to the
  // right for backward models). The exp-sum of the result is 1.
  virtual std::vector<double> next_token_logprobs(const TokenSeq& prefix) const = 0;
};

// Sum of per-token log-probs of `seq` in the model's factorization order,
// with `conditioning` as outer context (left context for a forward model,
// right context for a backward model).
inline double sequence_logprob(const LanguageModel& lm, const TokenSeq& seq,
                               const TokenSeq& conditioning = {}) {
  double total = 0.0;
  if (lm.direction() == Direction::kForward) {
    TokenSeq prefix = conditioning;
    for (TokenId t : seq) {
      if (!lm.vocab().contains(t))
        throw std::out_of_range("token id outside vocabulary");
      total += lm.next_token_logprobs(prefix)[static_cast<std::size_t>(t)];
      prefix.push_back(t);
    }
  } else {
    TokenSeq suffix = conditioning;  // logical right context
    for (auto it = seq.rbegin(); it != seq.rend(); ++it) {
      if (!lm.vocab().contains(*it))
        throw std::out_of_range("token id outside vocabulary");
      total += lm.next_token_logprobs(suffix)[static_cast<std::size_t>(*it)];
      suffix.insert(suffix.begin(), *it);
    }
  }
  return total;
}

struct SmoothingConfig {
  double add_k = 0.1;
};

// Interpolated backoff n-gram model. At each order m:
//   P_m(t|ctx) = (c_m(ctx,t) + k*|V|*P_{m-1}(t|ctx[1:])) / (C_m(ctx) + k*|V|)
// with P_0 uniform over V. Every conditional is therefore strictly positive
// and sums to exactly 1 over the vocabulary.
class NgramLm final : public LanguageModel {
 public:
  static constexpr int kMaxOrder = 8;
  static constexpr int kFormatVersion = 1;

  Direction direction() const override { return direction_; }
  int order() const override { return order_; }
  const Vocabulary& vocab() const override { return vocab_; }
  const SmoothingConfig& smoothing() const { return smoothing_; }

  std::vector<double> next_token_logprobs(const TokenSeq& prefix) const override {
    for (TokenId t : prefix)
      if (!vocab_.contains(t))
        throw std::out_of_range("token id outside vocabulary");
    TokenSeq internal = direction_ == Direction::kBackward ? reversed(prefix) : prefix;
    std::vector<double> probs = conditional_probs(internal);
    std::vector<double> logp(probs.size());
    for (std::size_t i = 0; i < probs.size(); ++i) logp[i] = std::log(probs[i]);
    return logp;
  }

  // Train on logical-order sequences. Backward models train on the reversed
  // sequences; queries reverse the prefix, so callers never see internals.
  static NgramLm train(const std::vector<TokenSeq>& corpus, const Vocabulary& vocab,
                       int order, Direction direction,
                       const SmoothingConfig& smoothing = {}) {
    if (corpus.empty()) throw std::invalid_argument("training corpus is empty");
    if (order < 1) throw std::invalid_argument("order must be >= 1");
    if (order > kMaxOrder)
      throw std::invalid_argument("order exceeds maximum of " +
                                  std::to_string(kMaxOrder));
    NgramLm lm;
    lm.vocab_ = vocab;
    lm.order_ = order;
    lm.direction_ = direction;
    lm.smoothing_ = smoothing;
    lm.counts_.resize(static_cast<std::size_t>(order));
    for (const TokenSeq& logical : corpus) {
      TokenSeq s = direction == Direction::kBackward ? reversed(logical) : logical;
      TokenSeq padded(static_cast<std::size_t>(order - 1), Vocabulary::kBos);
      padded.insert(padded.end(), s.begin(), s.end());
      padded.push_back(Vocabulary::kEos);
      for (std::size_t i = static_cast<std::size_t>(order - 1); i < padded.size(); ++i) {
        TokenId tgt = padded[i];
        if (!lm.vocab_.contains(tgt))
          throw std::out_of_range("token id outside vocabulary");
        for (int m = 1; m <= order; ++m) {
          TokenSeq ctx(padded.begin() + static_cast<std::ptrdiff_t>(i) - (m - 1),
                       padded.begin() + static_cast<std::ptrdiff_t>(i));
          auto& slot = lm.counts_[static_cast<std::size_t>(m - 1)][ctx];
          ++slot.events[tgt];
          ++slot.total;
        }
      }
    }
    return lm;
  }

  // Internal count table, exposed for serialization.
  struct ContextCounts {
    std::map<TokenId, std::int64_t> events;
    std::int64_t total = 0;
  };
  using OrderCounts = std::map<TokenSeq, ContextCounts>;
  const std::vector<OrderCounts>& counts() const { return counts_; }

  // Used by deserialization only.
  static NgramLm from_parts(Vocabulary vocab, int order, Direction direction,
                            SmoothingConfig smoothing, std::vector<OrderCounts> counts) {
    NgramLm lm;
    lm.vocab_ = std::move(vocab);
    lm.order_ = order;
    lm.direction_ = direction;
    lm.smoothing_ = smoothing;
    lm.counts_ = std::move(counts);
    return lm;
  }

  bool operator==(const NgramLm& o) const {
    if (!(vocab_ == o.vocab_) || order_ != o.order_ || direction_ != o.direction_ ||
        smoothing_.add_k != o.smoothing_.add_k || counts_.size() != o.counts_.size())
      return false;
    for (std::size_t m = 0; m < counts_.size(); ++m) {
      if (counts_[m].size() != o.counts_[m].size()) return false;
      auto it = counts_[m].begin();
      auto jt = o.counts_[m].begin();
      for (; it != counts_[m].end(); ++it, ++jt) {
        if (it->first != jt->first || it->second.total != jt->second.total ||
            it->second.events != jt->second.events)
          return false;
      }
    }
    return true;
  }

 private:
  NgramLm() = default;

  // Probability vector for the next internal token given an internal-order
  // context, built order by order from the uniform base.
  std::vector<double> conditional_probs(const TokenSeq& internal_prefix) const {
    const std::size_t vn = vocab_.size();
    const double kv = smoothing_.add_k * static_cast<double>(vn);
    std::vector<double> p(vn, 1.0 / static_cast<double>(vn));
    TokenSeq padded(static_cast<std::size_t>(order_ - 1), Vocabulary::kBos);
    padded.insert(padded.end(), internal_prefix.begin(), internal_prefix.end());
    for (int m = 1; m <= order_; ++m) {
      TokenSeq ctx(padded.end() - (m - 1), padded.end());
      const auto& table = counts_[static_cast<std::size_t>(m - 1)];
      auto it = table.find(ctx);
      if (it == table.end()) continue;  // unseen context: P_m == P_{m-1}
      const double denom = static_cast<double>(it->second.total) + kv;
      for (std::size_t t = 0; t < vn; ++t) p[t] = kv * p[t] / denom;
      for (const auto& [tok, c] : it->second.events)
        p[static_cast<std::size_t>(tok)] += static_cast<double>(c) / denom;
    }
    return p;
  }

  Vocabulary vocab_;
  int order_ = 1;
  Direction direction_ = Direction::kForward;
  SmoothingConfig smoothing_;
  std::vector<OrderCounts> counts_;
};

// Build a vocabulary from a tokenized corpus (specials first, then tokens in
// first-appearance order).
inline Vocabulary build_vocabulary(const std::vector<std::vector<std::string>>& docs) {
  Vocabulary v;
  for (const auto& doc : docs)
    for (const auto& tok : doc) v.add(tok);
  return v;
}

inline NgramLm train_reference_lm(const std::vector<TokenSeq>& corpus,
                                  const Vocabulary& vocab, int order,
                                  Direction direction,
                                  const SmoothingConfig& smoothing = {}) {
  return NgramLm::train(corpus, vocab, order, direction, smoothing);
}

// Perplexity over documents, including the end-of-text event.
inline double perplexity(const LanguageModel& lm, const std::vector<TokenSeq>& docs) {
  double total_logp = 0.0;
  std::size_t n_events = 0;
  for (const TokenSeq& doc : docs) {
    total_logp += sequence_logprob(lm, doc);
    // end-of-text event with the whole document as context
    total_logp += lm.next_token_logprobs(doc)[Vocabulary::kEos];
    n_events += doc.size() + 1;
  }
  if (n_events == 0) return std::numeric_limits<double>::quiet_NaN();
  return std::exp(-total_logp / static_cast<double>(n_events));
}

}  // namespace reflect
