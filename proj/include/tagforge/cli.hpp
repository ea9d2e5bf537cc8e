#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tagforge/corpus.hpp"
#include "tagforge/crf.hpp"
#include "tagforge/error.hpp"
#include "tagforge/eval.hpp"
#include "tagforge/experiment.hpp"
#include "tagforge/log.hpp"
#include "tagforge/tokenizer.hpp"

namespace tagforge::cli {

namespace fs = std::filesystem;
using experiment::ExperimentConfig;
using nlohmann::json;

// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Flags shared by commands that build an ExperimentConfig; set flags win
/// over the config file.
struct ConfigFlags {
  std::string config_path;
  std::string dataset, valid_dataset, output, model;
  std::optional<std::uint64_t> seed;
  std::optional<double> ratio, lr, l2;
  std::optional<std::size_t> epochs, batch_size, max_sentences, warmup_steps;
  std::vector<std::string> keep;
  bool keep_best_only = false;

  void attach(CLI::App* cmd) {
    cmd->add_option("-c,--config", config_path, "JSON experiment config")->check(CLI::ExistingFile);
    cmd->add_option("-d,--dataset", dataset, "GMB CSV (.csv) or CoNLL file");
    cmd->add_option("--valid", valid_dataset, "validation file; skips the split");
    cmd->add_option("-o,--output", output, "output directory");
    cmd->add_option("-m,--model", model, "crf|transformer|bilstm|bertlike");
    cmd->add_option("-s,--seed", seed, "random seed (required here or in the config)");
    cmd->add_option("--ratio", ratio, "train fraction of the split");
    cmd->add_option("--keep", keep, "entity types to keep; others become O")->delimiter(',');
    cmd->add_option("--max-sentences", max_sentences, "use only the first N sentences");
    cmd->add_option("--epochs", epochs, "training epochs");
    cmd->add_option("--lr", lr, "learning rate");
    cmd->add_option("--l2", l2, "CRF L2 strength");
    cmd->add_option("--batch-size", batch_size, "sentences per update");
    cmd->add_option("--warmup-steps", warmup_steps, "linear warmup steps (neural models)");
    cmd->add_flag("--keep-best-only", keep_best_only, "write only best.model");
  }

  ExperimentConfig resolve() const {
    ExperimentConfig c = config_path.empty() ? ExperimentConfig{} : experiment::load_config(config_path);
    if (!dataset.empty()) c.dataset = dataset;
    if (!valid_dataset.empty()) c.valid_dataset = valid_dataset;
    if (!output.empty()) c.output_dir = output;
    if (!model.empty()) experiment::apply_model_defaults(c, experiment::parse_model_kind(model));
    if (seed) c.seed = seed;
    if (ratio) c.split_ratio = *ratio;
    if (!keep.empty()) c.keep_entities = keep;
    if (max_sentences) c.max_sentences = *max_sentences;
    if (keep_best_only) c.keep_best_only = true;
    const bool is_crf = c.model == experiment::ModelKind::Crf;
    if (epochs) (is_crf ? c.crf.epochs : c.train.epochs) = *epochs;
    if (lr) (is_crf ? c.crf.lr : c.train.optimizer.lr) = *lr;
    if (batch_size) (is_crf ? c.crf.batch_size : c.train.batch_size) = *batch_size;
    if (l2) c.crf.l2 = *l2;
    if (warmup_steps) c.train.optimizer.warmup_steps = *warmup_steps;
    c.require_seed();
    return c;
  }
};

inline void write_text(const fs::path& path, const std::string& content) { experiment::write_file(path, content); }

inline std::string format_histogram(const std::map<std::string, std::size_t>& h) {
  std::string out;
  for (const auto& [tag, n] : h) out += tag + "\t" + std::to_string(n) + "\n";
  return out;
}

inline int cmd_prepare(const ConfigFlags& flags, std::ostream& out) {
  const ExperimentConfig cfg = flags.resolve();
  const auto data = experiment::prepare_data(cfg);
  const fs::path dir = cfg.output_dir;
  fs::create_directories(dir);
  write_text(dir / "train.snap", corpus::to_conll(data.train));
  write_text(dir / "valid.snap", corpus::to_conll(data.valid));
  auto vocab = corpus::build_vocab(data.train, cfg.min_count, data.all_tags);
  write_text(dir / "vocab.txt", corpus::lines_to_text(vocab.tokens()));
  write_text(dir / "tags.txt", corpus::lines_to_text(vocab.tags()));
  write_text(dir / "wordpiece.txt", tokenizer::build_wordpiece_vocab(data.train, cfg.wordpiece_words).to_text());
  corpus::Corpus all = data.train;
  all.insert(all.end(), data.valid.begin(), data.valid.end());
  const auto histogram = corpus::label_histogram(all);
  json report = {{"train_sentences", data.train.size()},
                 {"valid_sentences", data.valid.size()},
                 {"violations_repaired", data.repaired},
                 {"label_histogram", histogram},
                 {"config", experiment::to_json(cfg)}};
  write_text(dir / "prep_report.json", report.dump(2) + "\n");
  out << "train=" << data.train.size() << " valid=" << data.valid.size() << " repaired=" << data.repaired << "\n"
      << format_histogram(histogram);
  return 0;
}

inline int cmd_train(const ConfigFlags& flags, std::ostream& out) {
  const ExperimentConfig cfg = flags.resolve();
  const auto data = experiment::prepare_data(cfg);
  const auto report = experiment::run_training(cfg, data, out);
  out << "best_epoch=" << report.best_epoch << "\n";
  return 0;
}

/// Applies the model's own repair and entity mapping to evaluation data.
inline corpus::Corpus load_for_model(const std::string& path, const experiment::AnyModel& m) {
  return experiment::normalize(corpus::load_any(path), experiment::config_from_json(m.config));
}

inline int cmd_eval(const std::string& model_path, const std::string& data_path, const std::string& out_dir,
                    const std::string& averaging, bool exclude_o, std::ostream& out) {
  auto m = experiment::load_model(model_path);
  auto data = load_for_model(data_path, m);
  eval::TagSequences truth;
  for (const auto& s : data) {
    std::vector<std::string> tags;
    for (const auto& t : s.tokens) tags.push_back(t.ner);
    truth.push_back(std::move(tags));
  }
  eval::EvalOptions opts = experiment::config_from_json(m.config).eval;
  if (!averaging.empty()) opts.averaging = eval::parse_averaging(averaging);
  if (exclude_o) opts.include_o = false;
  const auto report = eval::evaluate(truth, experiment::predict(m, data), opts);
  out << eval::format_table(report);
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    write_text(fs::path(out_dir) / "report.json", eval::to_json(report).dump(2) + "\n");
    write_text(fs::path(out_dir) / "confusion.csv", report.confusion.to_csv());
  }
  return 0;
}

/// One sentence per line, split on whitespace; an empty line is an empty
/// sentence.
inline corpus::Corpus read_text_sentences(const std::string& path) {
  const auto content = corpus::decode_text(corpus::read_file_bytes(path));
  corpus::Corpus out;
  auto lines = corpus::text_to_lines(content);
  if (!lines.empty() && lines.back().empty() && !content.empty() && content.back() == '\n') lines.pop_back();
  for (const auto& line : lines) {
    corpus::Sentence s;
    s.id = static_cast<int>(out.size());
    std::istringstream words(line);
    std::string w;
    while (words >> w) s.tokens.push_back({w, "", "O"});
    out.push_back(std::move(s));
  }
  return out;
}

/// Prints `word<TAB>tag` (or `word<TAB>POS<TAB>tag` when the input carries
/// POS) per token and a blank line after each sentence.
inline int cmd_predict(const std::string& model_path, const std::string& input, const std::string& format,
                       std::ostream& out) {
  auto m = experiment::load_model(model_path);
  const bool tabular = format == "conll" || (format == "auto" && input.ends_with(".csv"));
  auto sentences = tabular ? load_for_model(input, m) : read_text_sentences(input);
  const auto tags = experiment::predict(m, sentences);
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    for (std::size_t t = 0; t < sentences[i].size(); ++t) {
      const auto& tok = sentences[i].tokens[t];
      out << tok.word << "\t";
      if (tabular) out << tok.pos << "\t";
      out << tags[i][t] << "\n";
    }
    out << "\n";
  }
  return 0;
}

inline int cmd_tokenize(const std::string& model_path, const std::string& vocab_path, const std::string& input,
                        std::size_t maxlen, std::ostream& out) {
  tokenizer::WordPieceVocab vocab;
  if (!model_path.empty()) {
    auto m = experiment::load_model(model_path);
    auto* bert = std::get_if<taggers::BertLikeTagger>(&m.model);
    if (bert == nullptr) {
      throw Error(ErrorKind::Config, "model kind '" + experiment::to_string(m.kind) + "' has no subword vocabulary");
    }
    vocab = bert->pieces;
    maxlen = bert->config.maxlen;
  } else if (!vocab_path.empty()) {
    vocab = tokenizer::WordPieceVocab::from_text(corpus::decode_text(corpus::read_file_bytes(vocab_path)));
  } else {
    throw Error(ErrorKind::Config, "tokenize needs --model or --vocab");
  }
  for (const auto& s : read_text_sentences(input)) {
    if (s.size() > 0) {
      std::vector<std::string> words;
      for (const auto& t : s.tokens) words.push_back(t.word);
      out << tokenizer::format_encoding(tokenizer::encode_sentence(words, nullptr, vocab, {maxlen, true, true}).encoding,
                                        vocab);
    } else {
      log::warn("skipping empty line ", s.id + 1);
    }
    out << "\n";
  }
  return 0;
}

inline int cmd_inspect_transitions(const std::string& model_path, std::size_t k, std::ostream& out) {
  auto m = experiment::load_model(model_path);
  auto* model = std::get_if<crf::CrfModel>(&m.model);
  if (model == nullptr) {
    throw Error(ErrorKind::Config, "model kind '" + experiment::to_string(m.kind) + "' has no transition table; need a crf model");
  }
  const auto ranking = crf::top_transitions(*model, k);
  char line[256];
  auto block = [&](const char* title, const std::vector<crf::Transition>& rows) {
    out << title << "\n";
    for (const auto& r : rows) {
      std::snprintf(line, sizeof line, "%-8s \xe2\x86\x92 %-8s %10.6f\n", r.from.c_str(), r.to.c_str(), r.weight);
      out << line;
    }
  };
  block("Top likely transitions:", ranking.likely);
  out << "\n";
  block("Top unlikely transitions:", ranking.unlikely);
  return 0;
}

inline int cmd_curves(const std::string& trace_path, double plateau_eps, const std::string& json_path, std::ostream& out) {
  const auto report = eval::analyze_curve(eval::read_curve_csv(trace_path), {plateau_eps});
  out << eval::format_curve_report(report);
  if (!json_path.empty()) write_text(json_path, eval::to_json(report).dump(2) + "\n");
  return 0;
}

/// Parses arguments and runs one command. Diagnostics go to `err` only.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"tagforge: named-entity taggers, training and evaluation", "tagforge"};
  app.require_subcommand(1);

  ConfigFlags prepare_flags, train_flags;
  auto* prepare = app.add_subcommand("prepare", "validate, map and split a dataset into snapshots");
  prepare_flags.attach(prepare);
  auto* train = app.add_subcommand("train", "train a model and write checkpoints and a loss trace");
  train_flags.attach(train);

  std::string model_path, data_path, out_dir, averaging, input, vocab_path, format = "auto", json_path;
  bool exclude_o = false;
  std::size_t k = 10, maxlen = 128;
  double plateau_eps = 1e-3;

  auto* evaluate = app.add_subcommand("eval", "score a model on a labelled file");
  evaluate->add_option("model", model_path, "model file")->required()->check(CLI::ExistingFile);
  evaluate->add_option("dataset", data_path, "labelled GMB CSV or CoNLL file")->required()->check(CLI::ExistingFile);
  evaluate->add_option("-o,--output", out_dir, "directory for report.json and confusion.csv");
  evaluate->add_option("--average", averaging, "weighted|macro|micro");
  evaluate->add_flag("--exclude-O", exclude_o, "leave O out of the averaged F1");

  auto* predict = app.add_subcommand("predict", "tag sentences, one per line");
  predict->add_option("model", model_path, "model file")->required()->check(CLI::ExistingFile);
  predict->add_option("input", input, "text file, or a CSV/CoNLL file")->required()->check(CLI::ExistingFile);
  predict->add_option("--format", format, "auto|text|conll")->check(CLI::IsMember({"auto", "text", "conll"}));

  auto* tokenize = app.add_subcommand("tokenize", "show the subword encoding of each line");
  tokenize->add_option("input", input, "text file")->required()->check(CLI::ExistingFile);
  tokenize->add_option("--model", model_path, "bertlike model file")->check(CLI::ExistingFile);
  tokenize->add_option("--vocab", vocab_path, "wordpiece vocabulary file")->check(CLI::ExistingFile);
  tokenize->add_option("--maxlen", maxlen, "maximum positions including [CLS]");

  auto* inspect = app.add_subcommand("inspect-transitions", "list the strongest CRF transitions");
  inspect->add_option("model", model_path, "crf model file")->required()->check(CLI::ExistingFile);
  inspect->add_option("-k", k, "rows per block");

  auto* curves = app.add_subcommand("curves", "analyse a loss trace");
  curves->add_option("trace", input, "trace CSV")->required()->check(CLI::ExistingFile);
  curves->add_option("--plateau-eps", plateau_eps, "train-loss change treated as flat");
  curves->add_option("--json", json_path, "also write the analysis as JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*prepare) return cmd_prepare(prepare_flags, out);
    if (*train) return cmd_train(train_flags, out);
    if (*evaluate) return cmd_eval(model_path, data_path, out_dir, averaging, exclude_o, out);
    if (*predict) return cmd_predict(model_path, input, format, out);
    if (*tokenize) return cmd_tokenize(model_path, vocab_path, input, maxlen, out);
    if (*inspect) return cmd_inspect_transitions(model_path, k, out);
    if (*curves) return cmd_curves(input, plateau_eps, json_path, out);
  } catch (const Error& e) {
    err << "tagforge: " << e.what() << "\n";
    return e.kind() == ErrorKind::Config ? kExitUsage : kExitFailure;
  } catch (const std::exception& e) {
    err << "tagforge: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace tagforge::cli
