// Toy language models and corpus fixtures shared across the test suites.
#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "reflect/lm.hpp"
#include "reflect/numeric.hpp"
#include "reflect/token.hpp"

namespace reflect::testing {

inline Vocabulary make_vocab(const std::vector<std::string>& extra_tokens) {
  Vocabulary v;
  for (const auto& t : extra_tokens) v.add(t);
  return v;
}

// Same distribution at every position.
class FixedDistLm final : public LanguageModel {
 public:
  FixedDistLm(Vocabulary vocab, std::vector<double> logp,
              Direction dir = Direction::kForward)
      : vocab_(std::move(vocab)), logp_(std::move(logp)), dir_(dir) {}

  Direction direction() const override { return dir_; }
  int order() const override { return 1; }
  const Vocabulary& vocab() const override { return vocab_; }
  std::vector<double> next_token_logprobs(const TokenSeq&) const override { return logp_; }

 private:
  Vocabulary vocab_;
  std::vector<double> logp_;
  Direction dir_;
};

inline FixedDistLm uniform_lm(std::size_t n_extra_tokens,
                              Direction dir = Direction::kForward) {
  std::vector<std::string> extra;
  for (std::size_t i = 0; i < n_extra_tokens; ++i)
    extra.push_back(std::string(1, static_cast<char>('a' + i)));
  Vocabulary v = make_vocab(extra);
  std::vector<double> logp(v.size(), -std::log(static_cast<double>(v.size())));
  return FixedDistLm(std::move(v), std::move(logp), dir);
}

// Probability ~1 on one token, the rest at the floor.
inline FixedDistLm deterministic_lm(const Vocabulary& vocab, TokenId target,
                                    Direction dir = Direction::kForward) {
  std::vector<double> logp(vocab.size(), kLogProbFloor);
  logp[static_cast<std::size_t>(target)] = 0.0;
  return FixedDistLm(vocab, std::move(logp), dir);
}

// Distribution depends on the last prefix token (a random hand-rolled
// "bigram" table); enough structure for property tests.
class TableLm final : public LanguageModel {
 public:
  TableLm(Vocabulary vocab, std::vector<std::vector<double>> row_logp,
          Direction dir = Direction::kForward)
      : vocab_(std::move(vocab)), rows_(std::move(row_logp)), dir_(dir) {}

  static TableLm random(std::size_t n_extra_tokens, std::uint64_t seed,
                        Direction dir = Direction::kForward) {
    std::vector<std::string> extra;
    for (std::size_t i = 0; i < n_extra_tokens; ++i)
      extra.push_back(std::string(1, static_cast<char>('a' + i)));
    Vocabulary v = make_vocab(extra);
    std::mt19937_64 eng(seed);
    std::uniform_real_distribution<double> unif(0.05, 1.0);
    std::vector<std::vector<double>> rows(v.size() + 1);
    for (auto& row : rows) {
      row.resize(v.size());
      double sum = 0.0;
      for (double& x : row) {
        x = unif(eng);
        sum += x;
      }
      for (double& x : row) x = std::log(x / sum);
    }
    return TableLm(std::move(v), std::move(rows), dir);
  }

  Direction direction() const override { return dir_; }
  int order() const override { return 2; }
  const Vocabulary& vocab() const override { return vocab_; }

  std::vector<double> next_token_logprobs(const TokenSeq& prefix) const override {
    // backward models read the logical prefix right-to-left; its nearest
    // token is the front
    std::size_t row;
    if (prefix.empty()) {
      row = rows_.size() - 1;
    } else {
      TokenId last = dir_ == Direction::kBackward ? prefix.front() : prefix.back();
      row = static_cast<std::size_t>(last);
    }
    return rows_[row];
  }

 private:
  Vocabulary vocab_;
  std::vector<std::vector<double>> rows_;
  Direction dir_;
};

struct Corpus {
  Vocabulary vocab;
  std::vector<TokenSeq> docs;
};

inline Corpus corpus_from_lines(const std::vector<std::string>& lines) {
  Corpus c;
  std::vector<std::vector<std::string>> tokenized;
  for (const auto& l : lines) tokenized.push_back(tokenize(l));
  c.vocab = build_vocabulary(tokenized);
  for (const auto& toks : tokenized) {
    TokenSeq ids;
    for (const auto& t : toks) ids.push_back(c.vocab.lookup(t));
    c.docs.push_back(std::move(ids));
  }
  return c;
}

// Small templated sentence corpus ("the red dog runs .", ...).
inline std::vector<std::string> templated_lines() {
  std::vector<std::string> subjects = {"dog", "cat", "fox", "bird"};
  std::vector<std::string> colors = {"red", "big", "old"};
  std::vector<std::string> verbs = {"runs", "sleeps", "jumps", "sprints"};
  std::vector<std::string> lines;
  for (const auto& c : colors)
    for (const auto& s : subjects)
      for (const auto& v : verbs)
        lines.push_back("the " + c + " " + s + " " + v + " .");
  return lines;
}

// Two templated sentences per line, so documents continue past the period and
// sampled right contexts are non-trivial.
inline std::vector<std::string> templated_pair_lines() {
  auto lines = templated_lines();
  std::vector<std::string> out;
  for (std::size_t i = 0; i < lines.size(); ++i)
    out.push_back(lines[i] + " " + lines[(i + 7) % lines.size()]);
  return out;
}

}  // namespace reflect::testing
