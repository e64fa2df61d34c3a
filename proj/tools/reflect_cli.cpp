// Command-line front end: LM training, paraphrase and infill runs, and
// BLEU/Novelty evaluation.
//
// Exit codes: 0 ok, 1 usage, 2 io, 3 data.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "reflect/lm.hpp"
#include "reflect/lm_io.hpp"
#include "reflect/manifest.hpp"
#include "reflect/metrics.hpp"
#include "reflect/pipeline.hpp"
#include "reflect/token.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitIo = 2;
constexpr int kExitData = 3;

struct CliError {
  int code;
  std::string message;
};

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CliError{kExitIo, "cannot open file: " + path};
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

std::vector<std::string> read_nonblank_lines(const std::string& path) {
  std::vector<std::string> out;
  for (auto& l : read_lines(path))
    if (!l.empty()) out.push_back(std::move(l));
  return out;
}

// write-temp then rename, so a crashed run never leaves a partial file
void write_file_atomic(const std::string& path, const std::string& content) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw CliError{kExitIo, "cannot open file for writing: " + tmp};
    out << content;
    if (!out) throw CliError{kExitIo, "write failed: " + tmp};
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw CliError{kExitIo, "rename failed: " + path + ": " + ec.message()};
}

struct CorpusData {
  reflect::Vocabulary vocab;
  std::vector<reflect::TokenSeq> docs;
};

CorpusData load_corpus(const std::string& path) {
  CorpusData data;
  std::vector<std::vector<std::string>> tokenized;
  for (const auto& line : read_nonblank_lines(path))
    tokenized.push_back(reflect::tokenize(line));
  if (tokenized.empty()) throw CliError{kExitData, "corpus is empty: " + path};
  data.vocab = reflect::build_vocabulary(tokenized);
  for (const auto& toks : tokenized) {
    reflect::TokenSeq ids;
    for (const auto& t : toks) ids.push_back(data.vocab.lookup(t));
    data.docs.push_back(std::move(ids));
  }
  return data;
}

reflect::NgramLm load_model_or_die(const std::string& path) {
  try {
    return reflect::load_lm(path);
  } catch (const reflect::ModelIoError& e) {
    throw CliError{kExitData, e.what()};
  }
}

// Precedence: preset defaults < config file < command-line flags.
void apply_config_json(reflect::PipelineConfig& cfg, const nlohmann::json& j) {
  if (j.contains("n_c")) cfg.n_c = j.at("n_c").get<int>();
  if (j.contains("k_c")) cfg.k_c = j.at("k_c").get<int>();
  if (j.contains("p_c")) cfg.p_c = j.at("p_c").get<double>();
  if (j.contains("len_c")) cfg.len_c = j.at("len_c").get<int>();
  if (j.contains("n_s")) cfg.n_s = j.at("n_s").get<int>();
  if (j.contains("len_s_extra")) cfg.len_s_extra = j.at("len_s_extra").get<int>();
  if (j.contains("len_h")) cfg.len_h = j.at("len_h").get<int>();
  if (j.contains("h_sample")) cfg.h_sample = j.at("h_sample").get<double>();
  if (j.contains("entropy_tolerance"))
    cfg.entropy_tolerance = j.at("entropy_tolerance").get<double>();
  if (j.contains("novelty_threshold") && !j.at("novelty_threshold").is_null())
    cfg.novelty_threshold = j.at("novelty_threshold").get<double>();
  if (j.contains("rng_seed")) cfg.rng_seed = j.at("rng_seed").get<std::uint64_t>();
  if (j.contains("weights")) {
    const auto& w = j.at("weights");
    if (w.contains("max_iters")) cfg.weights.max_iters = w.at("max_iters").get<int>();
    if (w.contains("step_size")) cfg.weights.step_size = w.at("step_size").get<double>();
    if (w.contains("convergence_tol"))
      cfg.weights.convergence_tol = w.at("convergence_tol").get<double>();
  }
  if (j.contains("score_all_contexts"))
    cfg.score_all_contexts = j.at("score_all_contexts").get<bool>();
  if (j.contains("length_normalize_scores"))
    cfg.length_normalize_scores = j.at("length_normalize_scores").get<bool>();
}

struct RunFlags {
  std::string forward_model;
  std::string backward_model;
  std::string input;
  std::string output;
  std::string manifest_path;
  std::string config_path;
  std::string preset = "paraphrase";
  std::optional<std::uint64_t> seed;
  std::optional<double> novelty_threshold;
  bool full = false;
};

void add_run_flags(CLI::App* cmd, RunFlags& f) {
  cmd->add_option("--forward-model", f.forward_model, "forward LM file")->required();
  cmd->add_option("--backward-model", f.backward_model, "backward LM file")->required();
  cmd->add_option("--input", f.input, "input file")->required();
  cmd->add_option("--output", f.output, "primary output file")->required();
  cmd->add_option("--manifest", f.manifest_path, "manifest output file");
  cmd->add_option("--config", f.config_path, "JSON config file");
  cmd->add_option("--task-preset", f.preset, "parameter preset")
      ->check(CLI::IsMember({"paraphrase", "anlg"}));
  cmd->add_option("--seed", f.seed, "run seed");
  cmd->add_option("--novelty-threshold", f.novelty_threshold, "novelty threshold");
  cmd->add_flag("--full", f.full, "write full manifest next to the output");
}

reflect::PipelineConfig resolve_config(const RunFlags& f, reflect::Task task) {
  reflect::PipelineConfig cfg = f.preset == "anlg"
                                    ? reflect::PipelineConfig::anlg_preset()
                                    : reflect::PipelineConfig::paraphrase_preset();
  cfg.task = task;
  if (!f.config_path.empty()) {
    std::ifstream in(f.config_path);
    if (!in) throw CliError{kExitIo, "cannot open config file: " + f.config_path};
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw CliError{kExitData, std::string("malformed config file: ") + e.what()};
    }
    apply_config_json(cfg, j);
  }
  if (f.seed) cfg.rng_seed = *f.seed;
  if (f.novelty_threshold) cfg.novelty_threshold = *f.novelty_threshold;
  return cfg;
}

nlohmann::json manifest_header(const char* task, const reflect::PipelineConfig& cfg) {
  nlohmann::json m;
  m["format"] = "reflect-run-manifest";
  m["format_version"] = reflect::kManifestFormatVersion;
  m["task"] = task;
  m["seed"] = cfg.rng_seed;
  m["config"] = reflect::config_to_json(cfg);
  m["records"] = nlohmann::json::array();
  return m;
}

int cmd_train_lm(const std::string& corpus_path, const std::string& out_prefix, int order,
                 double add_k) {
  if (order < 1) throw CliError{kExitUsage, "--order must be >= 1"};
  if (order > reflect::NgramLm::kMaxOrder)
    throw CliError{kExitUsage,
                   "--order exceeds maximum of " + std::to_string(reflect::NgramLm::kMaxOrder)};
  CorpusData data = load_corpus(corpus_path);

  // deterministic held-out split: every 10th document when there are enough
  std::vector<reflect::TokenSeq> train, heldout;
  if (data.docs.size() >= 10) {
    for (std::size_t i = 0; i < data.docs.size(); ++i)
      (i % 10 == 9 ? heldout : train).push_back(data.docs[i]);
  } else {
    train = data.docs;
    heldout = data.docs;
  }

  reflect::SmoothingConfig smoothing{add_k};
  auto fwd = reflect::train_reference_lm(train, data.vocab, order,
                                         reflect::Direction::kForward, smoothing);
  auto bwd = reflect::train_reference_lm(train, data.vocab, order,
                                         reflect::Direction::kBackward, smoothing);
  reflect::save_lm(fwd, out_prefix + ".fwd.json");
  reflect::save_lm(bwd, out_prefix + ".bwd.json");
  std::cout << "vocabulary size: " << data.vocab.size() << "\n"
            << "forward held-out perplexity: " << reflect::perplexity(fwd, heldout) << "\n"
            << "backward held-out perplexity: " << reflect::perplexity(bwd, heldout) << "\n";
  return kExitOk;
}

int cmd_paraphrase(const RunFlags& flags) {
  reflect::PipelineConfig cfg = resolve_config(flags, reflect::Task::kParaphrase);
  auto fwd = load_model_or_die(flags.forward_model);
  auto bwd = load_model_or_die(flags.backward_model);
  std::vector<std::string> lines = read_nonblank_lines(flags.input);
  if (lines.empty()) throw CliError{kExitData, "input file is empty: " + flags.input};

  nlohmann::json manifest = manifest_header("paraphrase", cfg);
  std::ostringstream out;
  const double threshold = cfg.novelty_threshold.value_or(0.0);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    nlohmann::json rec;
    rec["line"] = i;
    rec["source"] = lines[i];
    reflect::PipelineConfig line_cfg = cfg;
    line_cfg.rng_seed = reflect::substream_seed(cfg.rng_seed, "line", i);
    rec["line_seed"] = line_cfg.rng_seed;
    try {
      reflect::TokenSeq src = reflect::encode(fwd.vocab(), lines[i]);
      if (src.empty()) throw std::invalid_argument("source tokenizes to nothing");
      rec["resolved_len_s"] = line_cfg.candidate_max_len(src.size());
      reflect::PipelineRun run = reflect::paraphrase(src, fwd, bwd, line_cfg);
      rec.update(reflect::run_to_json(run, fwd.vocab()));
      if (run.result.no_candidates) {
        rec["error"] = "no candidates after post-processing";
        out << "\n";
      } else {
        auto sel = reflect::select_with_novelty_threshold(run.result.ranked, threshold);
        rec["selection"] = {{"text", reflect::decode(fwd.vocab(), sel.candidate.tokens)},
                            {"rank", sel.rank},
                            {"novelty", sel.candidate.novelty},
                            {"fallback", sel.fallback}};
        out << reflect::decode(fwd.vocab(), sel.candidate.tokens) << "\n";
      }
    } catch (const std::exception& e) {
      rec["error"] = e.what();
      out << "\n";
    }
    manifest["records"].push_back(std::move(rec));
  }
  write_file_atomic(flags.output, out.str());
  std::string mpath = flags.manifest_path;
  if (mpath.empty() && flags.full) mpath = flags.output + ".manifest.json";
  if (!mpath.empty()) write_file_atomic(mpath, manifest.dump(1) + "\n");
  return kExitOk;
}

int cmd_infill(const RunFlags& flags) {
  reflect::PipelineConfig cfg = resolve_config(flags, reflect::Task::kInfill);
  auto fwd = load_model_or_die(flags.forward_model);
  auto bwd = load_model_or_die(flags.backward_model);
  std::vector<std::string> lines = read_nonblank_lines(flags.input);
  if (lines.empty()) throw CliError{kExitData, "input file is empty: " + flags.input};

  nlohmann::json manifest = manifest_header("infill", cfg);
  std::ostringstream out;
  std::size_t skipped = 0;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    nlohmann::json rec;
    rec["line"] = i;
    std::size_t tab = lines[i].find('\t');
    if (tab == std::string::npos) {
      std::cerr << "warning: line " << i + 1 << " has no tab separator; skipped\n";
      rec["error"] = "malformed record: missing tab separator";
      ++skipped;
      manifest["records"].push_back(std::move(rec));
      continue;
    }
    std::string o1_text = lines[i].substr(0, tab);
    std::string o2_text = lines[i].substr(tab + 1);
    rec["o1"] = o1_text;
    rec["o2"] = o2_text;
    reflect::PipelineConfig line_cfg = cfg;
    line_cfg.rng_seed = reflect::substream_seed(cfg.rng_seed, "line", i);
    rec["line_seed"] = line_cfg.rng_seed;
    try {
      reflect::TokenSeq o1 = reflect::encode(fwd.vocab(), o1_text);
      reflect::TokenSeq o2 = reflect::encode(fwd.vocab(), o2_text);
      reflect::PipelineRun run = reflect::abductive_infill(o1, o2, fwd, bwd, line_cfg);
      rec.update(reflect::run_to_json(run, fwd.vocab()));
      if (run.result.ranked.empty()) {
        rec["selection"] = nullptr;
        out << "<no-hypothesis>\n";
      } else {
        rec["selection"] = {{"text", reflect::decode(fwd.vocab(), run.result.ranked[0].tokens)},
                            {"rank", 0}};
        out << reflect::decode(fwd.vocab(), run.result.ranked[0].tokens) << "\n";
      }
    } catch (const std::exception& e) {
      rec["error"] = e.what();
      ++skipped;
      out << "<no-hypothesis>\n";
    }
    manifest["records"].push_back(std::move(rec));
  }
  manifest["skipped_records"] = skipped;
  write_file_atomic(flags.output, out.str());
  std::string mpath = flags.manifest_path;
  if (mpath.empty() && flags.full) mpath = flags.output + ".manifest.json";
  if (!mpath.empty()) write_file_atomic(mpath, manifest.dump(1) + "\n");
  if (skipped > 0) std::cerr << skipped << " record(s) skipped\n";
  return kExitOk;
}

int cmd_eval(const std::string& cand_path, const std::string& src_path,
             const std::string& ref_path, const std::string& out_path) {
  std::vector<std::string> cands = read_lines(cand_path);
  std::vector<std::string> srcs = read_lines(src_path);
  if (cands.size() != srcs.size())
    throw CliError{kExitData, "line count mismatch: " + cand_path + " has " +
                                  std::to_string(cands.size()) + " lines, " + src_path +
                                  " has " + std::to_string(srcs.size())};
  std::vector<std::string> refs;
  if (!ref_path.empty()) {
    refs = read_lines(ref_path);
    if (refs.size() != cands.size())
      throw CliError{kExitData, "line count mismatch: reference file has " +
                                    std::to_string(refs.size()) + " lines, expected " +
                                    std::to_string(cands.size())};
  }

  // shared vocabulary over all inputs so token ids line up
  std::vector<std::vector<std::string>> all;
  for (const auto& l : cands) all.push_back(reflect::tokenize(l));
  for (const auto& l : srcs) all.push_back(reflect::tokenize(l));
  for (const auto& l : refs) all.push_back(reflect::tokenize(l));
  reflect::Vocabulary vocab = reflect::build_vocabulary(all);

  reflect::BleuConfig bleu_cfg;
  nlohmann::json report;
  report["format"] = "reflect-eval-report";
  report["format_version"] = 1;
  report["lines"] = nlohmann::json::array();
  double novelty_sum = 0.0, bleu_sum = 0.0;
  std::size_t n_novelty = 0, n_bleu = 0;
  for (std::size_t i = 0; i < cands.size(); ++i) {
    nlohmann::json line;
    line["index"] = i;
    line["candidate"] = cands[i];
    line["source"] = srcs[i];
    reflect::TokenSeq c = reflect::encode(vocab, cands[i]);
    reflect::TokenSeq s = reflect::encode(vocab, srcs[i]);
    if (!c.empty() && !s.empty()) {
      double nov = reflect::novelty(c, s, bleu_cfg);
      line["novelty"] = nov;
      novelty_sum += nov;
      ++n_novelty;
    } else {
      line["novelty"] = nullptr;
    }
    if (!refs.empty()) {
      line["reference"] = refs[i];
      reflect::TokenSeq r = reflect::encode(vocab, refs[i]);
      if (!c.empty() && !r.empty()) {
        double b = reflect::bleu(c, {r}, bleu_cfg);
        line["bleu"] = b;
        bleu_sum += b;
        ++n_bleu;
      } else {
        line["bleu"] = nullptr;
      }
    }
    report["lines"].push_back(std::move(line));
  }
  report["aggregate"]["mean_novelty"] =
      n_novelty ? nlohmann::json(novelty_sum / static_cast<double>(n_novelty))
                : nlohmann::json();
  if (!refs.empty())
    report["aggregate"]["mean_bleu"] =
        n_bleu ? nlohmann::json(bleu_sum / static_cast<double>(n_bleu)) : nlohmann::json();

  std::string text = report.dump(1) + "\n";
  if (out_path.empty())
    std::cout << text;
  else
    write_file_atomic(out_path, text);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reflective decoding: unsupervised paraphrasing and text infilling"};
  app.require_subcommand(1);

  // train-lm
  std::string corpus_path, out_prefix;
  int order = 3;
  double add_k = 0.1;
  auto* train = app.add_subcommand("train-lm", "train forward and backward reference LMs");
  train->add_option("--corpus", corpus_path, "training corpus, one document per line")
      ->required();
  train->add_option("--out", out_prefix, "output model path prefix")->required();
  train->add_option("--order", order, "n-gram order");
  train->add_option("--add-k", add_k, "add-k smoothing constant");

  RunFlags para_flags;
  auto* para = app.add_subcommand("paraphrase", "paraphrase each input line");
  add_run_flags(para, para_flags);

  RunFlags infill_flags;
  infill_flags.preset = "anlg";
  auto* infill = app.add_subcommand("infill", "fill the gap between o1 and o2 (tab-separated)");
  add_run_flags(infill, infill_flags);

  std::string eval_cands, eval_srcs, eval_refs, eval_out;
  auto* eval = app.add_subcommand("eval", "BLEU / Novelty report");
  eval->add_option("--candidates", eval_cands, "candidate file")->required();
  eval->add_option("--sources", eval_srcs, "source file")->required();
  eval->add_option("--references", eval_refs, "reference file");
  eval->add_option("--output", eval_out, "report file (stdout if omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (train->parsed()) return cmd_train_lm(corpus_path, out_prefix, order, add_k);
    if (para->parsed()) return cmd_paraphrase(para_flags);
    if (infill->parsed()) return cmd_infill(infill_flags);
    if (eval->parsed()) return cmd_eval(eval_cands, eval_srcs, eval_refs, eval_out);
  } catch (const CliError& e) {
    std::cerr << "error: " << e.message << "\n";
    return e.code;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
