#include <catch2/catch_amalgamated.hpp>

#include "reflect/token.hpp"

using namespace reflect;

TEST_CASE("vocabulary ids are a dense bijection") {
  Vocabulary v;
  TokenId a = v.add("a");
  TokenId b = v.add("b");
  REQUIRE(v.size() == 5);
  REQUIRE(a == 3);
  REQUIRE(b == 4);
  REQUIRE(v.add("a") == a);  // idempotent
  for (TokenId id = 0; id < static_cast<TokenId>(v.size()); ++id)
    REQUIRE(v.lookup(v.lookup(id)) == id);
  REQUIRE(v.lookup("missing") == Vocabulary::kUnk);
  REQUIRE_THROWS_AS(v.lookup(99), std::out_of_range);
}

TEST_CASE("special markers exist and are distinct") {
  Vocabulary v;
  REQUIRE(v.lookup("<s>") == Vocabulary::kBos);
  REQUIRE(v.lookup("</s>") == Vocabulary::kEos);
  REQUIRE(v.lookup("<unk>") == Vocabulary::kUnk);
  REQUIRE(Vocabulary::kBos != Vocabulary::kEos);
  REQUIRE(Vocabulary::kEos != Vocabulary::kUnk);
}

TEST_CASE("tokenizer splits whitespace and punctuation") {
  auto toks = tokenize("How are you?  Fine.");
  REQUIRE(toks == std::vector<std::string>{"how", "are", "you", "?", "fine", "."});

  TokenizerOptions raw{false, false};
  REQUIRE(tokenize("How are you?", raw) == std::vector<std::string>{"How", "are", "you?"});
}

TEST_CASE("encode/decode round-trips known text") {
  Vocabulary v;
  for (const auto& t : tokenize("the cat sat .")) v.add(t);
  TokenSeq ids = encode(v, "the cat sat .");
  REQUIRE(decode(v, ids) == "the cat sat .");
  // unknown words map to <unk>
  REQUIRE(encode(v, "the dog")[1] == Vocabulary::kUnk);
}

TEST_CASE("sentence boundary tokens") {
  Vocabulary v;
  TokenId dot = v.add(".");
  TokenId bang = v.add("!");
  TokenId word = v.add("cat");
  REQUIRE(is_sentence_boundary(v, dot));
  REQUIRE(is_sentence_boundary(v, bang));
  REQUIRE_FALSE(is_sentence_boundary(v, word));
}
