#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "tagforge/container.hpp"
#include "tagforge/corpus.hpp"
#include "tagforge/crf.hpp"
#include "tagforge/error.hpp"
#include "tagforge/eval.hpp"
#include "tagforge/log.hpp"
#include "tagforge/taggers.hpp"
#include "tagforge/tokenizer.hpp"

namespace tagforge::experiment {

using nlohmann::json;

enum class ModelKind { Crf, Transformer, BiLstm, BertLike };

inline ModelKind parse_model_kind(const std::string& s) {
  if (s == "crf") return ModelKind::Crf;
  if (s == taggers::TransformerTagger::kKind) return ModelKind::Transformer;
  if (s == taggers::BiLstmTagger::kKind) return ModelKind::BiLstm;
  if (s == taggers::BertLikeTagger::kKind) return ModelKind::BertLike;
  throw Error(ErrorKind::Config, "unknown model kind '" + s + "' (crf|transformer|bilstm|bertlike)");
}

inline std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::Crf: return "crf";
    case ModelKind::Transformer: return taggers::TransformerTagger::kKind;
    case ModelKind::BiLstm: return taggers::BiLstmTagger::kKind;
    case ModelKind::BertLike: return taggers::BertLikeTagger::kKind;
  }
  return "crf";
}

/// Everything a run depends on. Paths are resolved against the working
/// directory; `output_dir` is run plumbing and stays out of model snapshots.
struct ExperimentConfig {
  std::string dataset;
  std::string valid_dataset;  // set: used as-is instead of splitting `dataset`
  std::string output_dir = "tagforge-out";
  ModelKind model = ModelKind::Crf;
  std::optional<std::uint64_t> seed;
  double split_ratio = 0.8;
  std::size_t max_sentences = 0;  // 0 keeps the whole file
  bool repair_bio = true;
  std::vector<std::string> keep_entities;  // empty keeps every type
  std::size_t min_count = 1;
  std::size_t wordpiece_words = 5000;
  std::string embeddings;  // optional pretrained table for the transformer
  bool keep_best_only = false;

  crf::CrfTrainConfig crf;
  taggers::TransformerConfig transformer{64, 4, 2, 128, 0.1, 128, true};
  taggers::BiLstmConfig bilstm;
  taggers::BertLikeConfig bertlike;
  taggers::TrainOptions train;
  json train_overrides = json::object();  // explicit "train" keys, re-applied when the model changes
  eval::EvalOptions eval;

  std::uint64_t require_seed() const {
    if (!seed) throw Error(ErrorKind::Config, "a seed is required (config \"seed\" or --seed)");
    return *seed;
  }
};

namespace detail {

// Reads known keys from `j` into the fields and rejects anything else, so
// typos fail loudly instead of silently falling back to defaults.
class Reader {
 public:
  Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw Error(ErrorKind::Config, where_ + " must be a JSON object");
  }

  template <typename T>
  void get(const char* key, T& field) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      field = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw Error(ErrorKind::Config, where_ + "." + key + " has the wrong type");
    }
  }

  const json* section(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  void finish() const {
    for (const auto& [k, _] : j_.items()) {
      if (!seen_.contains(k)) throw Error(ErrorKind::Config, "unknown key '" + k + "' in " + where_);
    }
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

inline std::string optimizer_name(taggers::OptimizerKind k) { return k == taggers::OptimizerKind::Sgd ? "sgd" : "adamw"; }

}  // namespace detail

inline json crf_to_json(const crf::CrfTrainConfig& c) {
  return {{"l2", c.l2}, {"epochs", c.epochs}, {"lr", c.lr}, {"batch_size", c.batch_size}};
}

inline json transformer_to_json(const taggers::TransformerConfig& c) {
  return {{"emb_dim", c.emb_dim}, {"num_heads", c.num_heads}, {"num_layers", c.num_layers}, {"ffn_dim", c.ffn_dim},
          {"dropout", c.dropout}, {"maxlen", c.maxlen},       {"positional", c.positional}};
}

inline json bilstm_to_json(const taggers::BiLstmConfig& c) {
  return {{"emb_dim", c.emb_dim}, {"units", c.units}, {"dropout", c.dropout}, {"recurrent_dropout", c.recurrent_dropout}};
}

inline json bertlike_to_json(const taggers::BertLikeConfig& c) {
  return {{"num_layers", c.num_layers}, {"hidden", c.hidden},         {"num_heads", c.num_heads},
          {"ffn_dim", c.ffn_dim},       {"fc_dropout", c.fc_dropout}, {"maxlen", c.maxlen},
          {"lambda_pos", c.lambda_pos}};
}

inline json train_to_json(const taggers::TrainOptions& t) {
  const auto& o = t.optimizer;
  return {{"epochs", t.epochs},
          {"batch_size", t.batch_size},
          {"optimizer", detail::optimizer_name(o.kind)},
          {"lr", o.lr},
          {"momentum", o.momentum},
          {"weight_decay", o.adamw.weight_decay},
          {"warmup_steps", o.warmup_steps},
          {"total_steps", o.total_steps},
          {"epoch_decay", o.epoch_decay}};
}

inline void crf_from_json(const json& j, crf::CrfTrainConfig& c) {
  detail::Reader r(j, "crf");
  r.get("l2", c.l2);
  r.get("epochs", c.epochs);
  r.get("lr", c.lr);
  r.get("batch_size", c.batch_size);
  r.finish();
}

inline void transformer_from_json(const json& j, taggers::TransformerConfig& c) {
  detail::Reader r(j, "transformer");
  r.get("emb_dim", c.emb_dim);
  r.get("num_heads", c.num_heads);
  r.get("num_layers", c.num_layers);
  r.get("ffn_dim", c.ffn_dim);
  r.get("dropout", c.dropout);
  r.get("maxlen", c.maxlen);
  r.get("positional", c.positional);
  r.finish();
}

inline void bilstm_from_json(const json& j, taggers::BiLstmConfig& c) {
  detail::Reader r(j, "bilstm");
  r.get("emb_dim", c.emb_dim);
  r.get("units", c.units);
  r.get("dropout", c.dropout);
  r.get("recurrent_dropout", c.recurrent_dropout);
  r.finish();
}

inline void bertlike_from_json(const json& j, taggers::BertLikeConfig& c) {
  detail::Reader r(j, "bertlike");
  r.get("num_layers", c.num_layers);
  r.get("hidden", c.hidden);
  r.get("num_heads", c.num_heads);
  r.get("ffn_dim", c.ffn_dim);
  r.get("fc_dropout", c.fc_dropout);
  r.get("maxlen", c.maxlen);
  r.get("lambda_pos", c.lambda_pos);
  r.finish();
}

inline void train_from_json(const json& j, taggers::TrainOptions& t) {
  detail::Reader r(j, "train");
  auto& o = t.optimizer;
  std::string optimizer = detail::optimizer_name(o.kind);
  r.get("epochs", t.epochs);
  r.get("batch_size", t.batch_size);
  r.get("optimizer", optimizer);
  r.get("lr", o.lr);
  r.get("momentum", o.momentum);
  r.get("weight_decay", o.adamw.weight_decay);
  r.get("warmup_steps", o.warmup_steps);
  r.get("total_steps", o.total_steps);
  r.get("epoch_decay", o.epoch_decay);
  r.finish();
  if (optimizer == "sgd") {
    o.kind = taggers::OptimizerKind::Sgd;
  } else if (optimizer == "adamw") {
    o.kind = taggers::OptimizerKind::AdamW;
  } else {
    throw Error(ErrorKind::Config, "train.optimizer must be 'sgd' or 'adamw', got '" + optimizer + "'");
  }
}

/// Per-model optimizer defaults: SGD with momentum for the transformer,
/// AdamW with a 2,500-step warmup at 3e-5 for the subword model, AdamW
/// otherwise.
inline taggers::TrainOptions default_train_options(ModelKind kind) {
  taggers::TrainOptions t;
  auto& o = t.optimizer;
  switch (kind) {
    case ModelKind::Transformer:
      o.kind = taggers::OptimizerKind::Sgd;
      o.lr = 1e-3;
      o.momentum = 0.9;
      break;
    case ModelKind::BertLike:
      o.kind = taggers::OptimizerKind::AdamW;
      o.lr = 3e-5;
      o.warmup_steps = 2500;
      break;
    default:
      o.kind = taggers::OptimizerKind::AdamW;
      o.lr = 1e-3;
      break;
  }
  return t;
}

/// Resets `train` to the defaults of `kind` with the explicit keys on top.
inline void apply_model_defaults(ExperimentConfig& c, ModelKind kind) {
  c.model = kind;
  c.train = default_train_options(kind);
  train_from_json(c.train_overrides, c.train);
}

/// Snapshot of the configuration; `output_dir` is omitted.
inline json to_json(const ExperimentConfig& c) {
  json j = {{"dataset", c.dataset},
            {"valid_dataset", c.valid_dataset},
            {"model", to_string(c.model)},
            {"split_ratio", c.split_ratio},
            {"max_sentences", c.max_sentences},
            {"repair_bio", c.repair_bio},
            {"keep_entities", c.keep_entities},
            {"min_count", c.min_count},
            {"wordpiece_words", c.wordpiece_words},
            {"embeddings", c.embeddings},
            {"keep_best_only", c.keep_best_only},
            {"crf", crf_to_json(c.crf)},
            {"transformer", transformer_to_json(c.transformer)},
            {"bilstm", bilstm_to_json(c.bilstm)},
            {"bertlike", bertlike_to_json(c.bertlike)},
            {"train", train_to_json(c.train)},
            {"eval", {{"averaging", eval::to_string(c.eval.averaging)}, {"include_O", c.eval.include_o}}}};
  j["seed"] = c.seed ? json(*c.seed) : json(nullptr);
  return j;
}

inline ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  detail::Reader r(j, "config");
  std::string model = to_string(c.model);
  r.get("dataset", c.dataset);
  r.get("valid_dataset", c.valid_dataset);
  r.get("output_dir", c.output_dir);
  r.get("model", model);
  c.model = parse_model_kind(model);
  if (const json* s = r.section("seed"); s != nullptr && !s->is_null()) {
    if (!s->is_number_unsigned()) throw Error(ErrorKind::Config, "seed must be a non-negative integer");
    c.seed = s->get<std::uint64_t>();
  }
  r.get("split_ratio", c.split_ratio);
  r.get("max_sentences", c.max_sentences);
  r.get("repair_bio", c.repair_bio);
  r.get("keep_entities", c.keep_entities);
  r.get("min_count", c.min_count);
  r.get("wordpiece_words", c.wordpiece_words);
  r.get("embeddings", c.embeddings);
  r.get("keep_best_only", c.keep_best_only);
  if (const json* s = r.section("crf")) crf_from_json(*s, c.crf);
  if (const json* s = r.section("transformer")) transformer_from_json(*s, c.transformer);
  if (const json* s = r.section("bilstm")) bilstm_from_json(*s, c.bilstm);
  if (const json* s = r.section("bertlike")) bertlike_from_json(*s, c.bertlike);
  if (const json* s = r.section("train")) c.train_overrides = *s;
  apply_model_defaults(c, c.model);
  if (const json* s = r.section("eval")) {
    detail::Reader e(*s, "eval");
    std::string averaging = eval::to_string(c.eval.averaging);
    e.get("averaging", averaging);
    e.get("include_O", c.eval.include_o);
    e.finish();
    c.eval.averaging = eval::parse_averaging(averaging);
  }
  r.finish();
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open config '" + path + "'");
  try {
    return config_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::Config, "config '" + path + "' is not valid JSON: " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Data

struct PreparedData {
  corpus::Corpus train;
  corpus::Corpus valid;
  std::size_t repaired = 0;          // BIO violations fixed
  std::set<std::string> all_tags;    // over train and valid
};

/// Applies the configured BIO repair and entity mapping.
inline corpus::Corpus normalize(corpus::Corpus c, const ExperimentConfig& cfg, std::size_t* repaired = nullptr) {
  if (cfg.repair_bio) {
    const auto violations = corpus::validate_bio(c).size();
    if (repaired != nullptr) *repaired += violations;
    if (violations > 0) {
      log::info("repairing ", violations, " BIO violations");
      c = corpus::repair_bio(std::move(c));
    }
  }
  if (!cfg.keep_entities.empty()) {
    c = corpus::map_entities(std::move(c), std::set<std::string>(cfg.keep_entities.begin(), cfg.keep_entities.end()));
  }
  return c;
}

inline PreparedData prepare_data(const ExperimentConfig& cfg) {
  if (cfg.dataset.empty()) throw Error(ErrorKind::Config, "no dataset given");
  PreparedData d;
  auto all = corpus::load_any(cfg.dataset);
  if (cfg.max_sentences > 0 && all.size() > cfg.max_sentences) all.resize(cfg.max_sentences);
  all = normalize(std::move(all), cfg, &d.repaired);
  if (cfg.valid_dataset.empty()) {
    auto parts = corpus::split(all, cfg.split_ratio, cfg.require_seed());
    d.train = std::move(parts.train);
    d.valid = std::move(parts.valid);
  } else {
    d.train = std::move(all);
    d.valid = normalize(corpus::load_any(cfg.valid_dataset), cfg, &d.repaired);
  }
  if (d.train.empty()) throw Error(ErrorKind::EmptyCorpus, "training split is empty");
  if (d.valid.empty()) throw Error(ErrorKind::EmptyCorpus, "validation split is empty");
  for (const auto* part : {&d.train, &d.valid}) {
    for (const auto& s : *part) {
      for (const auto& t : s.tokens) d.all_tags.insert(t.ner);
    }
  }
  return d;
}

// ---------------------------------------------------------------------------
// Models and containers

using ModelVariant =
    std::variant<crf::CrfModel, taggers::TransformerTagger, taggers::BiLstmTagger, taggers::BertLikeTagger>;

struct AnyModel {
  ModelKind kind = ModelKind::Crf;
  json config;  // experiment snapshot the model was built from
  ModelVariant model;
};

namespace detail {

inline std::vector<container::NamedTensor> named(const std::vector<numgrad::Parameter*>& params) {
  std::vector<container::NamedTensor> out;
  for (const auto* p : params) out.push_back({p->name, p->value});
  return out;
}

inline void restore(const container::Container& c, const std::vector<numgrad::Parameter*>& params) {
  if (c.tensors.size() != params.size()) {
    throw Error(ErrorKind::Container, "model holds " + std::to_string(c.tensors.size()) + " tensors but its config needs " +
                                          std::to_string(params.size()));
  }
  for (auto* p : params) {
    const auto& t = c.tensor(p->name);
    if (t.shape != p->value.shape) throw Error(ErrorKind::Container, "tensor '" + p->name + "' has the wrong shape");
    p->value = t;
    p->zero_grad();
  }
}

template <typename T>
T table(const container::Container& c, const char* key) {
  try {
    return c.tables.at(key).get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorKind::Container, std::string("missing or malformed table '") + key + "'");
  }
}

}  // namespace detail

inline container::Container to_container(AnyModel& m) {
  container::Container c;
  c.kind = to_string(m.kind);
  c.config = m.config;
  std::visit(
      [&](auto& model) {
        using T = std::decay_t<decltype(model)>;
        if constexpr (std::is_same_v<T, crf::CrfModel>) {
          c.tables = {{"labels", model.labels()}, {"features", model.features()}};
          c.tensors = detail::named(model.parameters());
        } else if constexpr (std::is_same_v<T, taggers::BertLikeTagger>) {
          c.tables = {{"pieces", model.pieces.pieces()}, {"tags", model.tags}};
          c.tensors = detail::named(model.parameters());
        } else {
          c.tables = {{"tokens", model.vocab.tokens()}, {"tags", model.vocab.tags()}};
          c.tensors = detail::named(model.parameters());
        }
      },
      m.model);
  return c;
}

inline AnyModel from_container(const container::Container& c) {
  AnyModel m;
  m.kind = parse_model_kind(c.kind);
  m.config = c.config;
  const ExperimentConfig cfg = config_from_json(c.config);
  switch (m.kind) {
    case ModelKind::Crf: {
      crf::CrfModel model(detail::table<std::vector<std::string>>(c, "labels"));
      for (const auto& f : detail::table<std::vector<std::string>>(c, "features")) model.add_feature(f);
      detail::restore(c, model.parameters());
      m.model = std::move(model);
      break;
    }
    case ModelKind::Transformer: {
      corpus::Vocab v(detail::table<std::vector<std::string>>(c, "tokens"), detail::table<std::vector<std::string>>(c, "tags"));
      taggers::TransformerTagger model(cfg.transformer, std::move(v), 0);
      detail::restore(c, model.parameters());
      m.model = std::move(model);
      break;
    }
    case ModelKind::BiLstm: {
      corpus::Vocab v(detail::table<std::vector<std::string>>(c, "tokens"), detail::table<std::vector<std::string>>(c, "tags"));
      taggers::BiLstmTagger model(cfg.bilstm, std::move(v), 0);
      detail::restore(c, model.parameters());
      m.model = std::move(model);
      break;
    }
    case ModelKind::BertLike: {
      tokenizer::WordPieceVocab wp(detail::table<std::vector<std::string>>(c, "pieces"));
      taggers::BertLikeTagger model(cfg.bertlike, std::move(wp), detail::table<std::vector<std::string>>(c, "tags"), 0);
      detail::restore(c, model.parameters());
      m.model = std::move(model);
      break;
    }
  }
  return m;
}

inline void save_model(const std::string& path, AnyModel& m) { container::save(path, to_container(m)); }
inline AnyModel load_model(const std::string& path) { return from_container(container::load(path)); }

inline eval::TagSequences predict(AnyModel& m, const corpus::Corpus& sentences) {
  return std::visit(
      [&](auto& model) -> eval::TagSequences {
        using T = std::decay_t<decltype(model)>;
        if constexpr (std::is_same_v<T, crf::CrfModel>) {
          eval::TagSequences out;
          for (const auto& s : sentences) {
            if (s.size() == 0) log::warn("skipping empty sentence ", s.id);
            out.push_back(crf::predict(model, s));
          }
          return out;
        } else {
          return taggers::predict(model, sentences);
        }
      },
      m.model);
}

/// Builds an untrained model of the configured kind from the training split.
inline AnyModel build_model(const ExperimentConfig& cfg, const PreparedData& data) {
  AnyModel m;
  m.kind = cfg.model;
  m.config = to_json(cfg);
  const std::uint64_t seed = cfg.require_seed();
  switch (cfg.model) {
    case ModelKind::Crf:
      m.model = crf::make_model(data.train, data.all_tags);
      break;
    case ModelKind::Transformer: {
      taggers::TransformerTagger model(cfg.transformer, corpus::build_vocab(data.train, cfg.min_count, data.all_tags),
                                       seed);
      if (!cfg.embeddings.empty()) {
        const auto n = taggers::load_embeddings(cfg.embeddings, model.vocab, model.embedding.value);
        log::info("loaded ", n, " pretrained embedding rows");
      }
      m.model = std::move(model);
      break;
    }
    case ModelKind::BiLstm:
      m.model = taggers::BiLstmTagger(cfg.bilstm, corpus::build_vocab(data.train, cfg.min_count, data.all_tags), seed);
      break;
    case ModelKind::BertLike:
      m.model = taggers::BertLikeTagger(cfg.bertlike, tokenizer::build_wordpiece_vocab(data.train, cfg.wordpiece_words),
                                        std::vector<std::string>(data.all_tags.begin(), data.all_tags.end()), seed);
      break;
  }
  return m;
}

// ---------------------------------------------------------------------------
// Training driver

struct TrainReport {
  std::vector<taggers::EpochRecord> trace;
  std::size_t best_epoch = 0;
};

inline std::string trace_csv(const std::vector<taggers::EpochRecord>& trace) {
  std::string out = "epoch,train_loss,valid_loss,lr\n";
  char line[128];
  for (const auto& r : trace) {
    std::snprintf(line, sizeof line, "%zu,%.17g,%.17g,%.17g\n", r.epoch, r.train_loss, r.valid_loss, r.lr);
    out += line;
  }
  return out;
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write '" + path.string() + "'");
  out << content;
}

/// Trains the configured model and writes into `output_dir`:
/// epoch-XXX.model (unless keep_best_only), trace.csv and best.model.
/// Each epoch prints `epoch=k train_loss=x valid_loss=y lr=z` to `progress`.
/// On divergence the files for completed epochs are kept, best.model is
/// written from them, and the training error is rethrown.
inline TrainReport run_training(const ExperimentConfig& cfg, const PreparedData& data, std::ostream& progress) {
  namespace fs = std::filesystem;
  const fs::path dir = cfg.output_dir;
  fs::create_directories(dir);
  AnyModel model = build_model(cfg, data);
  TrainReport report;
  std::string best_bytes;
  double best_valid = 0.0;

  auto record = [&](const taggers::EpochRecord& rec, AnyModel& snapshot) {
    report.trace.push_back(rec);
    const std::string bytes = container::serialize(to_container(snapshot));
    char name[32];
    std::snprintf(name, sizeof name, "epoch-%03zu.model", rec.epoch);
    if (!cfg.keep_best_only) write_file(dir / name, bytes);
    if (report.best_epoch == 0 || rec.valid_loss < best_valid) {
      report.best_epoch = rec.epoch;
      best_valid = rec.valid_loss;
      best_bytes = bytes;
    }
    char line[160];
    std::snprintf(line, sizeof line, "epoch=%zu train_loss=%.6f valid_loss=%.6f lr=%.6g\n", rec.epoch, rec.train_loss,
                  rec.valid_loss, rec.lr);
    progress << line << std::flush;
  };
  auto finish = [&] {
    write_file(dir / "trace.csv", trace_csv(report.trace));
    if (!best_bytes.empty()) write_file(dir / "best.model", best_bytes);
  };

  try {
    if (auto* crf_model = std::get_if<crf::CrfModel>(&model.model)) {
      crf::CrfTrainConfig tc = cfg.crf;
      tc.seed = cfg.require_seed();
      crf::train(data.train, tc, *crf_model, [&](std::size_t epoch, const crf::CrfModel& m, double) {
        AnyModel snap{model.kind, model.config, m};
        record({epoch, crf::mean_nll(data.train, m), crf::mean_nll(data.valid, m), tc.lr}, snap);
      });
    } else {
      taggers::TrainOptions options = cfg.train;
      options.seed = cfg.require_seed();
      std::visit(
          [&](auto& m) {
            using T = std::decay_t<decltype(m)>;
            if constexpr (!std::is_same_v<T, crf::CrfModel>) {
              taggers::train_tagger<T>(m, data.train, data.valid, options,
                                       [&](const taggers::EpochRecord& rec, const T& trained) {
                                         AnyModel snap{model.kind, model.config, trained};
                                         record(rec, snap);
                                       });
            }
          },
          model.model);
    }
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Training) finish();
    throw;
  }
  finish();
  return report;
}

}  // namespace tagforge::experiment
