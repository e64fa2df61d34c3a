// Model file serialization. Schema documented in docs/model_format.md.
#pragma once

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "reflect/lm.hpp"

namespace reflect {

struct ModelIoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline nlohmann::json lm_to_json(const NgramLm& lm) {
  nlohmann::json j;
  j["format"] = "reflect-ngram-lm";
  j["format_version"] = NgramLm::kFormatVersion;
  j["direction"] = to_string(lm.direction());
  j["order"] = lm.order();
  j["smoothing"] = {{"add_k", lm.smoothing().add_k}};
  j["vocabulary"] = lm.vocab().tokens();
  nlohmann::json orders = nlohmann::json::array();
  for (const auto& table : lm.counts()) {
    nlohmann::json contexts = nlohmann::json::array();
    for (const auto& [ctx, cc] : table) {
      nlohmann::json events = nlohmann::json::array();
      for (const auto& [tok, c] : cc.events) events.push_back({tok, c});
      contexts.push_back({{"context", ctx}, {"events", events}});
    }
    orders.push_back(contexts);
  }
  j["counts"] = orders;
  return j;
}

inline NgramLm lm_from_json(const nlohmann::json& j) {
  auto require = [&](const char* field) -> const nlohmann::json& {
    if (!j.contains(field))
      throw ModelIoError(std::string("model file missing field '") + field + "'");
    return j.at(field);
  };
  if (require("format").get<std::string>() != "reflect-ngram-lm")
    throw ModelIoError("not a reflect-ngram-lm model file (field 'format')");
  int version = require("format_version").get<int>();
  if (version != NgramLm::kFormatVersion)
    throw ModelIoError("unsupported model format_version " + std::to_string(version) +
                       " (expected " + std::to_string(NgramLm::kFormatVersion) + ")");
  Direction dir = direction_from_string(require("direction").get<std::string>());
  int order = require("order").get<int>();
  SmoothingConfig smoothing;
  smoothing.add_k = require("smoothing").at("add_k").get<double>();

  Vocabulary vocab;
  auto toks = require("vocabulary").get<std::vector<std::string>>();
  static const std::vector<std::string> specials = {"<s>", "</s>", "<unk>"};
  for (std::size_t i = 0; i < toks.size(); ++i) {
    if (i < specials.size()) {
      if (toks[i] != specials[i])
        throw ModelIoError("field 'vocabulary': special marker mismatch at index " +
                           std::to_string(i));
    } else {
      vocab.add(toks[i]);
    }
  }

  std::vector<NgramLm::OrderCounts> counts;
  for (const auto& contexts : require("counts")) {
    NgramLm::OrderCounts table;
    for (const auto& entry : contexts) {
      if (!entry.contains("context") || !entry.contains("events"))
        throw ModelIoError("field 'counts': entry missing 'context' or 'events'");
      TokenSeq ctx = entry.at("context").get<TokenSeq>();
      NgramLm::ContextCounts cc;
      for (const auto& ev : entry.at("events")) {
        TokenId tok = ev.at(0).get<TokenId>();
        std::int64_t c = ev.at(1).get<std::int64_t>();
        cc.events[tok] = c;
        cc.total += c;
      }
      table.emplace(std::move(ctx), std::move(cc));
    }
    counts.push_back(std::move(table));
  }
  if (static_cast<int>(counts.size()) != order)
    throw ModelIoError("field 'counts': expected " + std::to_string(order) +
                       " order tables, found " + std::to_string(counts.size()));
  return NgramLm::from_parts(std::move(vocab), order, dir, smoothing, std::move(counts));
}

inline void save_lm(const NgramLm& lm, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ModelIoError("cannot open model file for writing: " + path);
  out << lm_to_json(lm).dump(1) << "\n";
  if (!out) throw ModelIoError("write failed: " + path);
}

inline NgramLm load_lm(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ModelIoError("cannot open model file: " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    // e.what() names the byte offset of the failure
    throw ModelIoError(std::string("malformed model file ") + path + ": " + e.what());
  }
  try {
    return lm_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw ModelIoError(std::string("malformed model file ") + path + ": " + e.what());
  }
}

}  // namespace reflect
