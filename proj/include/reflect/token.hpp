// Vocabulary, token sequences and the whitespace tokenizer.
//
// Sequences are always stored in logical left-to-right order; direction is an
// interpretation applied by the consumer (a backward LM reads them
// right-to-left).
#pragma once

#include <algorithm>
#include <cctype>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace reflect {

using TokenId = int;
using TokenSeq = std::vector<TokenId>;

inline TokenSeq reversed(const TokenSeq& s) {
  return TokenSeq(s.rbegin(), s.rend());
}

inline TokenSeq concat(const TokenSeq& a, const TokenSeq& b) {
  TokenSeq out = a;
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

struct TokenizerOptions {
  bool lowercase = true;
  bool split_punct = true;  // split leading/trailing punctuation into tokens
};

class Vocabulary {
 public:
  // Special markers occupy the first three ids.
  static constexpr TokenId kBos = 0;
  static constexpr TokenId kEos = 1;
  static constexpr TokenId kUnk = 2;

  Vocabulary() {
    add("<s>");
    add("</s>");
    add("<unk>");
  }

  TokenId add(const std::string& tok) {
    auto it = index_.find(tok);
    if (it != index_.end()) return it->second;
    TokenId id = static_cast<TokenId>(tokens_.size());
    tokens_.push_back(tok);
    index_.emplace(tok, id);
    return id;
  }

  // Id for a known token, kUnk otherwise.
  TokenId lookup(const std::string& tok) const {
    auto it = index_.find(tok);
    return it == index_.end() ? kUnk : it->second;
  }

  const std::string& lookup(TokenId id) const {
    if (id < 0 || id >= static_cast<TokenId>(tokens_.size()))
      throw std::out_of_range("token id " + std::to_string(id) +
                              " outside vocabulary of size " +
                              std::to_string(tokens_.size()));
    return tokens_[id];
  }

  bool contains(TokenId id) const {
    return id >= 0 && id < static_cast<TokenId>(tokens_.size());
  }

  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  bool operator==(const Vocabulary& o) const { return tokens_ == o.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

inline bool is_punct_char(char c) {
  return std::ispunct(static_cast<unsigned char>(c)) != 0;
}

// Whitespace tokenization into token strings, optionally lowercasing and
// splitting leading/trailing punctuation runs into their own tokens.
inline std::vector<std::string> tokenize(const std::string& text,
                                         const TokenizerOptions& opt = {}) {
  std::vector<std::string> out;
  std::string word;
  auto flush = [&]() {
    if (word.empty()) return;
    if (opt.split_punct) {
      std::size_t a = 0, b = word.size();
      while (a < b && is_punct_char(word[a])) ++a;
      while (b > a && is_punct_char(word[b - 1])) --b;
      for (std::size_t i = 0; i < a; ++i) out.push_back(std::string(1, word[i]));
      if (a < b) out.push_back(word.substr(a, b - a));
      for (std::size_t i = b; i < word.size(); ++i)
        out.push_back(std::string(1, word[i]));
    } else {
      out.push_back(word);
    }
    word.clear();
  };
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      flush();
    } else {
      word.push_back(opt.lowercase
                         ? static_cast<char>(std::tolower(static_cast<unsigned char>(c)))
                         : c);
    }
  }
  flush();
  return out;
}

inline TokenSeq encode(const Vocabulary& vocab, const std::string& text,
                       const TokenizerOptions& opt = {}) {
  TokenSeq ids;
  for (const auto& tok : tokenize(text, opt)) ids.push_back(vocab.lookup(tok));
  return ids;
}

inline std::string decode(const Vocabulary& vocab, const TokenSeq& ids) {
  std::string out;
  for (TokenId id : ids) {
    if (!out.empty()) out.push_back(' ');
    out += vocab.lookup(id);
  }
  return out;
}

// True for tokens that end a sentence.
inline bool is_sentence_boundary(const Vocabulary& vocab, TokenId id) {
  if (!vocab.contains(id)) return false;
  const std::string& t = vocab.lookup(id);
  return t == "." || t == "!" || t == "?";
}

}  // namespace reflect
