#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "tagforge/error.hpp"

namespace tagforge::eval {

using TagSequences = std::vector<std::vector<std::string>>;

/// True tags equal to this are skipped (padding, truncated words).
inline const std::string kIgnoreTag;

enum class Averaging { Weighted, Macro, Micro };

inline Averaging parse_averaging(const std::string& s) {
  if (s == "weighted") return Averaging::Weighted;
  if (s == "macro") return Averaging::Macro;
  if (s == "micro") return Averaging::Micro;
  throw Error(ErrorKind::Config, "unknown averaging '" + s + "' (weighted|macro|micro)");
}

inline std::string to_string(Averaging a) {
  switch (a) {
    case Averaging::Weighted: return "weighted";
    case Averaging::Macro: return "macro";
    case Averaging::Micro: return "micro";
  }
  return "weighted";
}

struct LabelScore {
  std::string label;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;    // true occurrences
  std::size_t predicted = 0;  // predicted occurrences
  std::size_t true_positive = 0;
};

/// One (true, predicted) pair per evaluated token.
struct TokenStream {
  std::vector<std::string> truth;
  std::vector<std::string> pred;
  std::size_t size() const { return truth.size(); }
};

inline TokenStream flatten(const TagSequences& truth, const TagSequences& pred) {
  if (truth.size() != pred.size()) {
    throw Error(ErrorKind::Alignment, std::to_string(truth.size()) + " true sentences but " +
                                          std::to_string(pred.size()) + " predicted");
  }
  TokenStream out;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i].size() != pred[i].size()) {
      throw Error(ErrorKind::Alignment, "sentence " + std::to_string(i) + " has " + std::to_string(truth[i].size()) +
                                            " true tags but " + std::to_string(pred[i].size()) + " predicted");
    }
    for (std::size_t t = 0; t < truth[i].size(); ++t) {
      if (truth[i][t] == kIgnoreTag) continue;
      out.truth.push_back(truth[i][t]);
      out.pred.push_back(pred[i][t]);
    }
  }
  return out;
}

/// Sorted union of true and predicted labels.
inline std::vector<std::string> observed_labels(const TokenStream& s) {
  std::set<std::string> all(s.truth.begin(), s.truth.end());
  all.insert(s.pred.begin(), s.pred.end());
  return {all.begin(), all.end()};
}

inline LabelScore score_label(const TokenStream& s, const std::string& label) {
  LabelScore r;
  r.label = label;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const bool t = s.truth[i] == label, p = s.pred[i] == label;
    r.support += t;
    r.predicted += p;
    r.true_positive += t && p;
  }
  if (r.predicted > 0) r.precision = static_cast<double>(r.true_positive) / static_cast<double>(r.predicted);
  if (r.support > 0) r.recall = static_cast<double>(r.true_positive) / static_cast<double>(r.support);
  if (r.precision + r.recall > 0.0) r.f1 = 2.0 * r.precision * r.recall / (r.precision + r.recall);
  return r;
}

inline std::vector<LabelScore> label_scores(const TokenStream& s, const std::vector<std::string>& labels) {
  std::vector<LabelScore> out;
  out.reserve(labels.size());
  for (const auto& l : labels) out.push_back(score_label(s, l));
  return out;
}

/// Averages F1 over `rows`. Weighted and macro skip rows with neither true
/// nor predicted occurrences; micro pools the counts.
inline double average_f1(const std::vector<LabelScore>& rows, Averaging averaging) {
  if (averaging == Averaging::Micro) {
    double tp = 0, pred = 0, sup = 0;
    for (const auto& r : rows) {
      tp += static_cast<double>(r.true_positive);
      pred += static_cast<double>(r.predicted);
      sup += static_cast<double>(r.support);
    }
    const double p = pred > 0 ? tp / pred : 0.0, rc = sup > 0 ? tp / sup : 0.0;
    return p + rc > 0 ? 2.0 * p * rc / (p + rc) : 0.0;
  }
  double num = 0.0, den = 0.0;
  for (const auto& r : rows) {
    if (averaging == Averaging::Weighted) {
      num += r.f1 * static_cast<double>(r.support);
      den += static_cast<double>(r.support);
    } else if (r.support > 0 || r.predicted > 0) {
      num += r.f1;
      den += 1.0;
    }
  }
  return den > 0.0 ? num / den : 0.0;
}

inline std::vector<std::string> averaged_labels(const TokenStream& s, bool include_o) {
  auto labels = observed_labels(s);
  if (!include_o) labels.erase(std::remove(labels.begin(), labels.end(), "O"), labels.end());
  return labels;
}

/// Token-level F1 over the flattened streams.
inline double flat_f1(const TagSequences& truth, const TagSequences& pred, Averaging averaging = Averaging::Weighted,
                      bool include_o = true) {
  auto s = flatten(truth, pred);
  return average_f1(label_scores(s, averaged_labels(s, include_o)), averaging);
}

/// Rows for the requested labels in the given order; absent labels get
/// support 0 and zero rates.
inline std::vector<LabelScore> per_entity_report(const TagSequences& truth, const TagSequences& pred,
                                                 const std::vector<std::string>& labels) {
  return label_scores(flatten(truth, pred), labels);
}

struct ConfusionMatrix {
  std::vector<std::string> labels;
  std::vector<std::vector<std::size_t>> counts;  // [true][predicted]

  std::size_t total() const {
    std::size_t n = 0;
    for (const auto& row : counts) {
      for (auto c : row) n += c;
    }
    return n;
  }

  std::string to_csv() const {
    std::string out = "true\\pred";
    for (const auto& l : labels) out += "," + l;
    out += "\n";
    for (std::size_t i = 0; i < labels.size(); ++i) {
      out += labels[i];
      for (auto c : counts[i]) out += "," + std::to_string(c);
      out += "\n";
    }
    return out;
  }
};

/// `labels` empty means the sorted union of observed labels. A tag outside
/// an explicit label order is a label error.
inline ConfusionMatrix confusion_matrix(const TagSequences& truth, const TagSequences& pred,
                                        std::vector<std::string> labels = {}) {
  auto s = flatten(truth, pred);
  if (labels.empty()) labels = observed_labels(s);
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < labels.size(); ++i) index.emplace(labels[i], i);
  ConfusionMatrix m{labels, std::vector<std::vector<std::size_t>>(labels.size(), std::vector<std::size_t>(labels.size()))};
  auto find = [&](const std::string& l) {
    auto it = index.find(l);
    if (it == index.end()) throw Error(ErrorKind::Label, "tag '" + l + "' is not in the confusion-matrix label order");
    return it->second;
  };
  for (std::size_t i = 0; i < s.size(); ++i) ++m.counts[find(s.truth[i])][find(s.pred[i])];
  return m;
}

struct EvalOptions {
  Averaging averaging = Averaging::Weighted;
  bool include_o = true;
};

struct EvalReport {
  std::vector<LabelScore> labels;  // every observed label, sorted
  double flat_f1 = 0.0;            // under `options`
  double token_accuracy = 0.0;
  std::size_t total_tokens = 0;
  EvalOptions options;
  ConfusionMatrix confusion;
};

inline EvalReport evaluate(const TagSequences& truth, const TagSequences& pred, const EvalOptions& options = {}) {
  auto s = flatten(truth, pred);
  EvalReport r;
  r.options = options;
  r.total_tokens = s.size();
  r.labels = label_scores(s, observed_labels(s));
  r.flat_f1 = average_f1(label_scores(s, averaged_labels(s, options.include_o)), options.averaging);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < s.size(); ++i) correct += s.truth[i] == s.pred[i];
  r.token_accuracy = s.size() > 0 ? static_cast<double>(correct) / static_cast<double>(s.size()) : 0.0;
  r.confusion = confusion_matrix(truth, pred, observed_labels(s));
  return r;
}

inline nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& l : r.labels) {
    rows.push_back({{"label", l.label},
                    {"precision", l.precision},
                    {"recall", l.recall},
                    {"f1", l.f1},
                    {"support", l.support},
                    {"predicted", l.predicted}});
  }
  return {{"flat_f1", r.flat_f1},
          {"averaging", to_string(r.options.averaging)},
          {"include_O", r.options.include_o},
          {"token_accuracy", r.token_accuracy},
          {"total_tokens", r.total_tokens},
          {"labels", rows},
          {"confusion", {{"labels", r.confusion.labels}, {"counts", r.confusion.counts}}}};
}

inline EvalReport report_from_json(const nlohmann::json& j) {
  EvalReport r;
  try {
    r.flat_f1 = j.at("flat_f1").get<double>();
    r.options.averaging = parse_averaging(j.at("averaging").get<std::string>());
    r.options.include_o = j.at("include_O").get<bool>();
    r.token_accuracy = j.at("token_accuracy").get<double>();
    r.total_tokens = j.at("total_tokens").get<std::size_t>();
    for (const auto& row : j.at("labels")) {
      LabelScore l;
      l.label = row.at("label").get<std::string>();
      l.precision = row.at("precision").get<double>();
      l.recall = row.at("recall").get<double>();
      l.f1 = row.at("f1").get<double>();
      l.support = row.at("support").get<std::size_t>();
      l.predicted = row.at("predicted").get<std::size_t>();
      l.true_positive = static_cast<std::size_t>(std::llround(l.recall * static_cast<double>(l.support)));
      r.labels.push_back(l);
    }
    r.confusion.labels = j.at("confusion").at("labels").get<std::vector<std::string>>();
    r.confusion.counts = j.at("confusion").at("counts").get<std::vector<std::vector<std::size_t>>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Schema, std::string("malformed report: ") + e.what());
  }
  return r;
}

inline std::string format_table(const EvalReport& r) {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "%-12s %9s %9s %9s %9s\n", "label", "precision", "recall", "f1", "support");
  out << line;
  for (const auto& l : r.labels) {
    std::snprintf(line, sizeof line, "%-12s %9.4f %9.4f %9.4f %9zu\n", l.label.c_str(), l.precision, l.recall, l.f1,
                  l.support);
    out << line;
  }
  std::snprintf(line, sizeof line, "\nflat F1 (%s, O %s): %.4f\ntoken accuracy: %.4f over %zu tokens\n",
                to_string(r.options.averaging).c_str(), r.options.include_o ? "included" : "excluded", r.flat_f1,
                r.token_accuracy, r.total_tokens);
  out << line;
  return out.str();
}

// ---------------------------------------------------------------------------
// Loss curves

struct CurvePoint {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double valid_loss = 0.0;
};

struct Segment {
  std::size_t first_epoch = 0;
  std::size_t last_epoch = 0;
};

struct CurveOptions {
  double plateau_eps = 1e-3;
};

struct CurveReport {
  std::size_t checkpoint = 0;  // epoch with minimum valid loss, earliest on ties
  std::optional<std::size_t> overfit_onset;
  std::vector<Segment> plateaus;
};

/// Checkpoint: argmin of valid loss. Overfit onset: first epoch e whose valid
/// loss rises over e-1 and again at e+1 while the train loss falls at both
/// steps. Plateaus: maximal epoch runs whose consecutive train-loss changes
/// all have magnitude below plateau_eps.
inline CurveReport analyze_curve(const std::vector<CurvePoint>& trace, const CurveOptions& options = {}) {
  for (std::size_t i = 1; i < trace.size(); ++i) {
    if (trace[i].epoch <= trace[i - 1].epoch) throw Error(ErrorKind::Contract, "curve epochs must strictly increase");
  }
  CurveReport r;
  double best = 0.0;
  for (const auto& p : trace) {
    if (std::isnan(p.valid_loss)) continue;
    if (r.checkpoint == 0 || p.valid_loss < best) {
      r.checkpoint = p.epoch;
      best = p.valid_loss;
    }
  }
  for (std::size_t i = 1; i + 1 < trace.size(); ++i) {
    const bool valid_up = trace[i].valid_loss > trace[i - 1].valid_loss && trace[i + 1].valid_loss > trace[i].valid_loss;
    const bool train_down =
        trace[i].train_loss < trace[i - 1].train_loss && trace[i + 1].train_loss < trace[i].train_loss;
    if (valid_up && train_down) {
      r.overfit_onset = trace[i].epoch;
      break;
    }
  }
  std::size_t start = 0;
  for (std::size_t i = 1; i <= trace.size(); ++i) {
    const bool flat = i < trace.size() && std::abs(trace[i].train_loss - trace[i - 1].train_loss) < options.plateau_eps;
    if (flat) continue;
    if (i - 1 > start) r.plateaus.push_back({trace[start].epoch, trace[i - 1].epoch});
    start = i;
  }
  return r;
}

inline nlohmann::json to_json(const CurveReport& r) {
  nlohmann::json plateaus = nlohmann::json::array();
  for (const auto& s : r.plateaus) plateaus.push_back({{"first_epoch", s.first_epoch}, {"last_epoch", s.last_epoch}});
  return {{"checkpoint", r.checkpoint},
          {"overfit_onset", r.overfit_onset ? nlohmann::json(*r.overfit_onset) : nlohmann::json(nullptr)},
          {"plateaus", plateaus}};
}

inline std::string format_curve_report(const CurveReport& r) {
  std::ostringstream out;
  out << "recommended checkpoint: epoch " << r.checkpoint << "\n";
  out << "overfit onset: " << (r.overfit_onset ? "epoch " + std::to_string(*r.overfit_onset) : std::string("none"))
      << "\n";
  out << "plateaus:";
  if (r.plateaus.empty()) out << " none";
  for (const auto& s : r.plateaus) out << " [" << s.first_epoch << "-" << s.last_epoch << "]";
  out << "\n";
  return out.str();
}

/// `epoch,train_loss,valid_loss` with round-trip precision.
inline std::string curve_csv(const std::vector<CurvePoint>& trace) {
  std::string out = "epoch,train_loss,valid_loss\n";
  char line[96];
  for (const auto& p : trace) {
    std::snprintf(line, sizeof line, "%zu,%.17g,%.17g\n", p.epoch, p.train_loss, p.valid_loss);
    out += line;
  }
  return out;
}

/// Reads the first three columns of a curve CSV; extra columns are ignored.
inline std::vector<CurvePoint> read_curve_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open curve file '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || !line.starts_with("epoch,train_loss,valid_loss")) {
    throw Error(ErrorKind::Schema, "curve file '" + path + "' must start with 'epoch,train_loss,valid_loss'");
  }
  std::vector<CurvePoint> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string a, b, c;
    CurvePoint p;
    try {
      if (!std::getline(row, a, ',') || !std::getline(row, b, ',') || !std::getline(row, c, ',')) throw std::invalid_argument("");
      p.epoch = std::stoul(a);
      p.train_loss = std::stod(b);
      p.valid_loss = std::stod(c);
    } catch (const std::exception&) {
      throw Error(ErrorKind::MalformedRow, "curve file '" + path + "' line " + std::to_string(lineno) + ": '" + line + "'");
    }
    out.push_back(p);
  }
  return out;
}

}  // namespace tagforge::eval
