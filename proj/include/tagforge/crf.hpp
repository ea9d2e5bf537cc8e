#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <set>
#include <string>
#include <tuple>
#include <unordered_map>
#include <utility>
#include <vector>

#include "tagforge/corpus.hpp"
#include "tagforge/error.hpp"
#include "tagforge/log.hpp"
#include "tagforge/numgrad/optim.hpp"
#include "tagforge/numgrad/tape.hpp"
#include "tagforge/rng.hpp"
#include "tagforge/text.hpp"

namespace tagforge::crf {

using FeatureSet = std::vector<std::string>;

namespace detail {

inline const char* py_bool(bool b) { return b ? "True" : "False"; }

}  // namespace detail

/// Observation features for position t, in template order:
///   word.lower, word[-3:], word[-2:], word.isupper, word.isdigit,
///   word.istitle, postag; the same five context features of the previous
///   word prefixed "-1:" (or "BEG" at t = 0); and "END" at the last position.
inline FeatureSet extract_features(const corpus::Sentence& s, std::size_t t) {
  if (t >= s.size()) throw Error(ErrorKind::Contract, "feature position " + std::to_string(t) + " out of range");
  const corpus::Token& tok = s.tokens[t];
  FeatureSet f;
  f.reserve(13);
  f.push_back("word.lower=" + text::lower(tok.word));
  f.push_back("word[-3:]=" + text::suffix(tok.word, 3));
  f.push_back("word[-2:]=" + text::suffix(tok.word, 2));
  f.push_back(std::string("word.isupper=") + detail::py_bool(text::is_upper(tok.word)));
  f.push_back(std::string("word.isdigit=") + detail::py_bool(text::is_digit(tok.word)));
  f.push_back(std::string("word.istitle=") + detail::py_bool(text::is_title(tok.word)));
  f.push_back("postag=" + tok.pos);
  if (t > 0) {
    const corpus::Token& prev = s.tokens[t - 1];
    f.push_back("-1:word.lower=" + text::lower(prev.word));
    f.push_back(std::string("-1:word.isupper=") + detail::py_bool(text::is_upper(prev.word)));
    f.push_back(std::string("-1:word.isdigit=") + detail::py_bool(text::is_digit(prev.word)));
    f.push_back(std::string("-1:word.istitle=") + detail::py_bool(text::is_title(prev.word)));
    f.push_back("-1:postag=" + prev.pos);
  } else {
    f.push_back("BEG");
  }
  if (t + 1 == s.size()) f.push_back("END");
  FeatureSet unique;
  for (auto& name : f) {
    if (std::find(unique.begin(), unique.end(), name) == unique.end()) unique.push_back(std::move(name));
  }
  return unique;
}

inline std::vector<FeatureSet> sentence_features(const corpus::Sentence& s) {
  std::vector<FeatureSet> out;
  out.reserve(s.size());
  for (std::size_t t = 0; t < s.size(); ++t) out.push_back(extract_features(s, t));
  return out;
}

/// Feature-weight table (dense over the features seen in training, implicit
/// zero for anything else) plus label-to-label, begin and end transitions.
class CrfModel {
 public:
  CrfModel() = default;

  explicit CrfModel(std::vector<std::string> labels) : labels_(std::move(labels)) {
    for (std::size_t i = 0; i < labels_.size(); ++i) {
      if (!label_index_.emplace(labels_[i], static_cast<int>(i)).second) {
        throw Error(ErrorKind::Label, "duplicate label '" + labels_[i] + "'");
      }
    }
    const std::size_t y = labels_.size();
    state_ = numgrad::Parameter("crf.state", numgrad::Tensor::matrix(0, y));
    transitions_ = numgrad::Parameter("crf.transitions", numgrad::Tensor::matrix(y, y));
    begin_ = numgrad::Parameter("crf.begin", numgrad::Tensor(numgrad::Shape{y}));
    end_ = numgrad::Parameter("crf.end", numgrad::Tensor(numgrad::Shape{y}));
  }

  std::size_t num_labels() const { return labels_.size(); }
  std::size_t num_features() const { return features_.size(); }
  const std::vector<std::string>& labels() const { return labels_; }
  const std::vector<std::string>& features() const { return features_; }

  int label_id(const std::string& label) const {
    auto it = label_index_.find(label);
    if (it == label_index_.end()) throw Error(ErrorKind::Label, "unknown label '" + label + "'");
    return it->second;
  }
  const std::string& label(int id) const { return labels_.at(static_cast<std::size_t>(id)); }

  int feature_id(const std::string& name) const {
    auto it = feature_index_.find(name);
    return it == feature_index_.end() ? -1 : it->second;
  }

  int add_feature(const std::string& name) {
    auto [it, inserted] = feature_index_.emplace(name, static_cast<int>(features_.size()));
    if (inserted) {
      features_.push_back(name);
      const std::size_t y = labels_.size();
      state_.value.shape[0] = features_.size();
      state_.value.data.resize(features_.size() * y, 0.0);
      state_.grad = numgrad::Tensor(state_.value.shape, 0.0);
    }
    return it->second;
  }

  double state_weight(const std::string& feature, const std::string& label) const {
    int f = feature_id(feature);
    if (f < 0) return 0.0;
    return state_.value(static_cast<std::size_t>(f), static_cast<std::size_t>(label_id(label)));
  }

  void set_state_weight(const std::string& feature, const std::string& label, double w) {
    int y = label_id(label);
    int f = add_feature(feature);
    state_.value(static_cast<std::size_t>(f), static_cast<std::size_t>(y)) = w;
  }

  double transition(int from, int to) const {
    return transitions_.value(static_cast<std::size_t>(from), static_cast<std::size_t>(to));
  }

  numgrad::Parameter& state() { return state_; }
  numgrad::Parameter& transitions() { return transitions_; }
  numgrad::Parameter& begin() { return begin_; }
  numgrad::Parameter& end() { return end_; }
  const numgrad::Parameter& state() const { return state_; }
  const numgrad::Parameter& transitions() const { return transitions_; }
  const numgrad::Parameter& begin() const { return begin_; }
  const numgrad::Parameter& end() const { return end_; }

  std::vector<numgrad::Parameter*> parameters() { return {&state_, &transitions_, &begin_, &end_}; }

  /// Non-zero (feature, label, weight) triples sorted by feature then label.
  std::vector<std::tuple<std::string, std::string, double>> sparse_state_weights() const {
    std::vector<std::tuple<std::string, std::string, double>> out;
    const std::size_t y = labels_.size();
    for (std::size_t f = 0; f < features_.size(); ++f) {
      for (std::size_t l = 0; l < y; ++l) {
        double w = state_.value.data[f * y + l];
        if (w != 0.0) out.emplace_back(features_[f], labels_[l], w);
      }
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  bool all_finite() const {
    return state_.value.all_finite() && transitions_.value.all_finite() && begin_.value.all_finite() &&
           end_.value.all_finite();
  }

 private:
  std::vector<std::string> labels_;
  std::unordered_map<std::string, int> label_index_;
  std::vector<std::string> features_;
  std::unordered_map<std::string, int> feature_index_;
  numgrad::Parameter state_;
  numgrad::Parameter transitions_;
  numgrad::Parameter begin_;
  numgrad::Parameter end_;
};

/// Observation sequence resolved against a model's feature table; features
/// the model has never seen are dropped (their weights are zero).
struct CompiledSequence {
  std::vector<std::vector<int>> features;
  std::size_t size() const { return features.size(); }
};

inline CompiledSequence compile(const std::vector<FeatureSet>& x, const CrfModel& model) {
  CompiledSequence c;
  c.features.reserve(x.size());
  for (const auto& fs : x) {
    std::vector<int> ids;
    for (const auto& name : fs) {
      int id = model.feature_id(name);
      if (id >= 0) ids.push_back(id);
    }
    c.features.push_back(std::move(ids));
  }
  return c;
}

namespace detail {

// emissions[t * Y + y] = sum of state weights of x_t's features for label y.
inline std::vector<double> emissions(const CompiledSequence& x, const CrfModel& model) {
  const std::size_t y_count = model.num_labels();
  std::vector<double> e(x.size() * y_count, 0.0);
  const auto& w = model.state().value.data;
  for (std::size_t t = 0; t < x.size(); ++t) {
    for (int f : x.features[t]) {
      const double* row = w.data() + static_cast<std::size_t>(f) * y_count;
      for (std::size_t y = 0; y < y_count; ++y) e[t * y_count + y] += row[y];
    }
  }
  return e;
}

inline double log_sum_exp(const double* v, std::size_t n) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) mx = std::max(mx, v[i]);
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::exp(v[i] - mx);
  return mx + std::log(s);
}

struct Lattice {
  std::vector<double> alpha;  // [T x Y]
  std::vector<double> beta;   // [T x Y]
  std::vector<double> emit;   // [T x Y]
  double log_z = 0.0;
};

inline Lattice forward_backward(const CompiledSequence& x, const CrfModel& model) {
  const std::size_t T = x.size(), Y = model.num_labels();
  Lattice L;
  L.emit = emissions(x, model);
  L.alpha.assign(T * Y, 0.0);
  L.beta.assign(T * Y, 0.0);
  const auto& tr = model.transitions().value.data;
  const auto& bg = model.begin().value.data;
  const auto& en = model.end().value.data;
  std::vector<double> buf(Y);
  for (std::size_t y = 0; y < Y; ++y) L.alpha[y] = bg[y] + L.emit[y];
  for (std::size_t t = 1; t < T; ++t) {
    for (std::size_t y = 0; y < Y; ++y) {
      for (std::size_t p = 0; p < Y; ++p) buf[p] = L.alpha[(t - 1) * Y + p] + tr[p * Y + y];
      L.alpha[t * Y + y] = log_sum_exp(buf.data(), Y) + L.emit[t * Y + y];
    }
  }
  for (std::size_t y = 0; y < Y; ++y) L.beta[(T - 1) * Y + y] = en[y];
  for (std::size_t t = T - 1; t-- > 0;) {
    for (std::size_t y = 0; y < Y; ++y) {
      for (std::size_t n = 0; n < Y; ++n) buf[n] = tr[y * Y + n] + L.emit[(t + 1) * Y + n] + L.beta[(t + 1) * Y + n];
      L.beta[t * Y + y] = log_sum_exp(buf.data(), Y);
    }
  }
  for (std::size_t y = 0; y < Y; ++y) buf[y] = L.alpha[(T - 1) * Y + y] + en[y];
  L.log_z = log_sum_exp(buf.data(), Y);
  return L;
}

}  // namespace detail

inline double sequence_score(const CompiledSequence& x, const std::vector<int>& y, const CrfModel& model) {
  if (x.size() != y.size()) {
    throw Error(ErrorKind::Alignment, "sequence of " + std::to_string(x.size()) + " positions with " +
                                          std::to_string(y.size()) + " labels");
  }
  if (x.size() == 0) return 0.0;
  const std::size_t Y = model.num_labels();
  for (int l : y) {
    if (l < 0 || static_cast<std::size_t>(l) >= Y) throw Error(ErrorKind::Label, "label id " + std::to_string(l));
  }
  const auto& w = model.state().value.data;
  double s = model.begin().value.data[static_cast<std::size_t>(y.front())];
  for (std::size_t t = 0; t < x.size(); ++t) {
    const auto yt = static_cast<std::size_t>(y[t]);
    for (int f : x.features[t]) s += w[static_cast<std::size_t>(f) * Y + yt];
    if (t > 0) s += model.transition(y[t - 1], y[t]);
  }
  s += model.end().value.data[static_cast<std::size_t>(y.back())];
  return s;
}

inline double sequence_score(const std::vector<FeatureSet>& x, const std::vector<std::string>& labels,
                             const CrfModel& model) {
  std::vector<int> y;
  for (const auto& l : labels) y.push_back(model.label_id(l));
  return sequence_score(compile(x, model), y, model);
}

/// log sum_y exp(score(x, y)) by the forward recursion in log space.
inline double log_partition(const CompiledSequence& x, const CrfModel& model) {
  if (x.size() == 0) throw Error(ErrorKind::Contract, "log_partition of an empty sequence");
  return detail::forward_backward(x, model).log_z;
}

inline double log_partition(const std::vector<FeatureSet>& x, const CrfModel& model) {
  return log_partition(compile(x, model), model);
}

/// Per-position label marginals p(y_t = y | x), row-major [T x Y].
inline std::vector<double> marginals(const CompiledSequence& x, const CrfModel& model) {
  auto L = detail::forward_backward(x, model);
  std::vector<double> p(L.alpha.size());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = std::exp(L.alpha[i] + L.beta[i] - L.log_z);
  return p;
}

struct Decoded {
  std::vector<int> labels;
  double score = 0.0;
};

/// Max-sum dynamic program. Ties go to the lower label index at the last
/// position, then at each earlier position while backtracking, i.e. the
/// winner is the smallest tied sequence compared from the end.
inline Decoded viterbi_decode(const CompiledSequence& x, const CrfModel& model) {
  if (x.size() == 0) throw Error(ErrorKind::Contract, "viterbi_decode of an empty sequence");
  const std::size_t T = x.size(), Y = model.num_labels();
  auto emit = detail::emissions(x, model);
  const auto& tr = model.transitions().value.data;
  const auto& bg = model.begin().value.data;
  const auto& en = model.end().value.data;
  std::vector<double> delta(T * Y);
  std::vector<int> back(T * Y, 0);
  for (std::size_t y = 0; y < Y; ++y) delta[y] = bg[y] + emit[y];
  for (std::size_t t = 1; t < T; ++t) {
    for (std::size_t y = 0; y < Y; ++y) {
      double best = -std::numeric_limits<double>::infinity();
      int arg = 0;
      for (std::size_t p = 0; p < Y; ++p) {
        double v = delta[(t - 1) * Y + p] + tr[p * Y + y];
        if (v > best) {
          best = v;
          arg = static_cast<int>(p);
        }
      }
      delta[t * Y + y] = best + emit[t * Y + y];
      back[t * Y + y] = arg;
    }
  }
  double best = -std::numeric_limits<double>::infinity();
  int last = 0;
  for (std::size_t y = 0; y < Y; ++y) {
    double v = delta[(T - 1) * Y + y] + en[y];
    if (v > best) {
      best = v;
      last = static_cast<int>(y);
    }
  }
  Decoded d;
  d.labels.assign(T, 0);
  d.labels[T - 1] = last;
  for (std::size_t t = T - 1; t > 0; --t) d.labels[t - 1] = back[t * Y + static_cast<std::size_t>(d.labels[t])];
  d.score = best;
  return d;
}

inline Decoded viterbi_decode(const std::vector<FeatureSet>& x, const CrfModel& model) {
  return viterbi_decode(compile(x, model), model);
}

struct Example {
  CompiledSequence x;
  std::vector<int> y;
};

struct NllResult {
  double loss = 0.0;
  numgrad::Tensor d_state;
  numgrad::Tensor d_transitions;
  numgrad::Tensor d_begin;
  numgrad::Tensor d_end;
};

/// Negative log-likelihood sum_i (log Z(x_i) - score(x_i, y_i)) + (l2/2)|w|^2
/// and its gradient: expected minus empirical feature counts (forward-backward
/// marginals) plus l2 w, for state, transition, begin and end weights.
/// Examples are reduced in order, so the result is deterministic.
inline NllResult nll_and_gradient(const std::vector<Example>& batch, const CrfModel& model, double l2) {
  const std::size_t Y = model.num_labels();
  NllResult r;
  r.d_state = numgrad::Tensor(model.state().value.shape, 0.0);
  r.d_transitions = numgrad::Tensor(model.transitions().value.shape, 0.0);
  r.d_begin = numgrad::Tensor(model.begin().value.shape, 0.0);
  r.d_end = numgrad::Tensor(model.end().value.shape, 0.0);
  const auto& tr = model.transitions().value.data;
  std::vector<double> p(Y);
  for (const Example& ex : batch) {
    const std::size_t T = ex.x.size();
    if (T == 0) continue;
    if (ex.y.size() != T) throw Error(ErrorKind::Alignment, "example with mismatched labels");
    auto L = detail::forward_backward(ex.x, model);
    r.loss += L.log_z - sequence_score(ex.x, ex.y, model);
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t y = 0; y < Y; ++y) p[y] = std::exp(L.alpha[t * Y + y] + L.beta[t * Y + y] - L.log_z);
      const auto gold = static_cast<std::size_t>(ex.y[t]);
      for (int f : ex.x.features[t]) {
        double* row = r.d_state.data.data() + static_cast<std::size_t>(f) * Y;
        for (std::size_t y = 0; y < Y; ++y) row[y] += p[y];
        row[gold] -= 1.0;
      }
      if (t == 0) {
        for (std::size_t y = 0; y < Y; ++y) r.d_begin.data[y] += p[y];
        r.d_begin.data[gold] -= 1.0;
      }
      if (t + 1 == T) {
        for (std::size_t y = 0; y < Y; ++y) r.d_end.data[y] += p[y];
        r.d_end.data[gold] -= 1.0;
      }
      if (t > 0) {
        for (std::size_t a = 0; a < Y; ++a) {
          const double base = L.alpha[(t - 1) * Y + a] - L.log_z;
          for (std::size_t b = 0; b < Y; ++b) {
            r.d_transitions.data[a * Y + b] +=
                std::exp(base + tr[a * Y + b] + L.emit[t * Y + b] + L.beta[t * Y + b]);
          }
        }
        r.d_transitions.data[static_cast<std::size_t>(ex.y[t - 1]) * Y + gold] -= 1.0;
      }
    }
  }
  if (l2 > 0.0) {
    auto reg = [&](const numgrad::Tensor& w, numgrad::Tensor& g) {
      for (std::size_t i = 0; i < w.data.size(); ++i) {
        r.loss += 0.5 * l2 * w.data[i] * w.data[i];
        g.data[i] += l2 * w.data[i];
      }
    };
    reg(model.state().value, r.d_state);
    reg(model.transitions().value, r.d_transitions);
    reg(model.begin().value, r.d_begin);
    reg(model.end().value, r.d_end);
  }
  return r;
}

struct CrfTrainConfig {
  double l2 = 0.1;
  std::size_t epochs = 30;
  double lr = 0.1;
  std::uint64_t seed = 0;
  // 0 trains on the full batch; otherwise shuffled mini-batches of this many
  // sentences per AdamW step.
  std::size_t batch_size = 0;
  numgrad::AdamWConfig adamw{0.9, 0.999, 1e-8, 0.0};
};

struct CrfTrainResult {
  CrfModel model;
  std::vector<double> loss_trace;  // training objective after each epoch's updates
};

/// Builds the label inventory (sorted corpus tags plus `extra_labels`) and the
/// feature table from `corpus`.
inline CrfModel make_model(const corpus::Corpus& corpus, const std::set<std::string>& extra_labels = {}) {
  std::set<std::string> labels = extra_labels;
  for (const auto& s : corpus) {
    for (const auto& t : s.tokens) labels.insert(t.ner);
  }
  CrfModel model(std::vector<std::string>(labels.begin(), labels.end()));
  for (const auto& s : corpus) {
    for (std::size_t t = 0; t < s.size(); ++t) {
      for (const auto& f : extract_features(s, t)) model.add_feature(f);
    }
  }
  return model;
}

inline std::vector<Example> make_examples(const corpus::Corpus& corpus, const CrfModel& model) {
  std::vector<Example> out;
  out.reserve(corpus.size());
  for (const auto& s : corpus) {
    if (s.size() == 0) continue;
    Example ex{compile(sentence_features(s), model), {}};
    for (const auto& t : s.tokens) ex.y.push_back(model.label_id(t.ner));
    out.push_back(std::move(ex));
  }
  return out;
}

/// Called after every epoch with (1-based epoch, model, training objective).
using EpochCallback = std::function<void(std::size_t, const CrfModel&, double)>;

/// Maximum-likelihood training with AdamW on nll_and_gradient. Deterministic
/// for a given config; `model` must already hold the feature table.
inline CrfTrainResult train(const corpus::Corpus& corpus, const CrfTrainConfig& config, CrfModel model,
                            const EpochCallback& on_epoch = {}) {
  if (corpus.empty()) throw Error(ErrorKind::EmptyCorpus, "cannot train a CRF on an empty corpus");
  if (config.epochs < 1) throw Error(ErrorKind::Config, "epochs must be at least 1");
  auto examples = make_examples(corpus, model);
  numgrad::AdamWState opt;
  opt.config = config.adamw;
  auto params = model.parameters();
  Pcg32 rng(config.seed, 0xc7fULL);
  std::vector<std::size_t> order(examples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  CrfTrainResult result;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::vector<std::vector<Example>> batches;
    if (config.batch_size == 0 || config.batch_size >= examples.size()) {
      batches.push_back(examples);
    } else {
      rng.shuffle(order);
      for (std::size_t s = 0; s < order.size(); s += config.batch_size) {
        std::vector<Example> b;
        for (std::size_t k = s; k < std::min(order.size(), s + config.batch_size); ++k) b.push_back(examples[order[k]]);
        batches.push_back(std::move(b));
      }
    }
    for (const auto& b : batches) {
      // The l2 term is spread over mini-batches so one epoch applies it once.
      const double l2 = config.l2 * static_cast<double>(b.size()) / static_cast<double>(examples.size());
      auto r = nll_and_gradient(b, model, l2);
      if (!std::isfinite(r.loss)) {
        throw Error(ErrorKind::Training, "non-finite CRF loss in epoch " + std::to_string(epoch));
      }
      model.state().grad = std::move(r.d_state);
      model.transitions().grad = std::move(r.d_transitions);
      model.begin().grad = std::move(r.d_begin);
      model.end().grad = std::move(r.d_end);
      numgrad::adamw_step(params, opt, config.lr);
    }
    const double objective = nll_and_gradient(examples, model, config.l2).loss;
    if (!std::isfinite(objective)) {
      throw Error(ErrorKind::Training, "non-finite CRF loss in epoch " + std::to_string(epoch));
    }
    result.loss_trace.push_back(objective);
    if (on_epoch) on_epoch(epoch, model, objective);
  }
  result.model = std::move(model);
  return result;
}

inline CrfTrainResult train(const corpus::Corpus& corpus, const CrfTrainConfig& config) {
  return train(corpus, config, make_model(corpus));
}

/// Mean per-sentence negative log-likelihood without regularization; labels
/// unknown to the model make a sentence unscorable and it is skipped.
inline double mean_nll(const corpus::Corpus& corpus, const CrfModel& model) {
  std::vector<Example> ex;
  for (const auto& s : corpus) {
    if (s.size() == 0) continue;
    bool ok = true;
    Example e{compile(sentence_features(s), model), {}};
    for (const auto& t : s.tokens) {
      try {
        e.y.push_back(model.label_id(t.ner));
      } catch (const Error&) {
        ok = false;
        break;
      }
    }
    if (ok) ex.push_back(std::move(e));
  }
  if (ex.empty()) return 0.0;
  double total = 0.0;
  for (const auto& e : ex) total += log_partition(e.x, model) - sequence_score(e.x, e.y, model);
  return total / static_cast<double>(ex.size());
}

inline std::vector<std::string> predict(const CrfModel& model, const corpus::Sentence& s) {
  if (s.size() == 0) return {};
  auto d = viterbi_decode(compile(sentence_features(s), model), model);
  std::vector<std::string> out;
  for (int l : d.labels) out.push_back(model.label(l));
  return out;
}

struct Transition {
  std::string from;
  std::string to;
  double weight = 0.0;
};

struct TransitionRanking {
  std::vector<Transition> likely;    // descending weight
  std::vector<Transition> unlikely;  // ascending weight
};

/// The k largest and k smallest label-to-label transition weights. Ties are
/// ordered by (from, to) index. k beyond |Y|^2 is clamped with a warning.
inline TransitionRanking top_transitions(const CrfModel& model, std::size_t k) {
  const std::size_t Y = model.num_labels();
  if (k > Y * Y) {
    log::warn("top_transitions: k=", k, " exceeds ", Y * Y, " transitions; clamped");
    k = Y * Y;
  }
  std::vector<std::tuple<double, std::size_t, std::size_t>> all;
  for (std::size_t a = 0; a < Y; ++a) {
    for (std::size_t b = 0; b < Y; ++b) all.emplace_back(model.transition(static_cast<int>(a), static_cast<int>(b)), a, b);
  }
  std::sort(all.begin(), all.end(), [](const auto& l, const auto& r) {
    if (std::get<0>(l) != std::get<0>(r)) return std::get<0>(l) > std::get<0>(r);
    return std::make_pair(std::get<1>(l), std::get<2>(l)) < std::make_pair(std::get<1>(r), std::get<2>(r));
  });
  TransitionRanking out;
  auto make = [&](const auto& e) {
    return Transition{model.label(static_cast<int>(std::get<1>(e))), model.label(static_cast<int>(std::get<2>(e))),
                      std::get<0>(e)};
  };
  for (std::size_t i = 0; i < k; ++i) out.likely.push_back(make(all[i]));
  for (std::size_t i = 0; i < k; ++i) out.unlikely.push_back(make(all[all.size() - 1 - i]));
  return out;
}

}  // namespace tagforge::crf
