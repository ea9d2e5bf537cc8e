#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tagforge/corpus.hpp"
#include "tagforge/taggers/batch.hpp"
#include "tagforge/taggers/layers.hpp"

namespace tagforge::taggers {

struct BiLstmConfig {
  std::size_t emb_dim = 104;
  std::size_t units = 100;
  double dropout = 0.1;            // on embeddings
  double recurrent_dropout = 0.1;  // one mask per sequence on h_{t-1}

  void validate() const {
    if (units < 1 || emb_dim < 1) throw Error(ErrorKind::Config, "units and emb_dim must be at least 1");
    if (!(dropout >= 0.0 && dropout < 1.0) || !(recurrent_dropout >= 0.0 && recurrent_dropout < 1.0)) {
      throw Error(ErrorKind::Config, "dropout rates must lie in [0, 1)");
    }
  }
};

/// Gate columns are laid out [i | f | g | o].
struct LstmParams {
  Parameter input_weight;      // [in x 4U]
  Parameter recurrent_weight;  // [U x 4U]
  Parameter bias;              // [4U]

  LstmParams() = default;
  LstmParams(const std::string& name, std::size_t in, std::size_t units, Pcg32& rng)
      : input_weight(name + ".input_weight", numgrad::xavier_uniform(in, 4 * units, rng)),
        recurrent_weight(name + ".recurrent_weight", numgrad::xavier_uniform(units, 4 * units, rng)),
        bias(name + ".bias", Tensor(Shape{4 * units})) {
    for (std::size_t j = units; j < 2 * units; ++j) bias.value.data[j] = 1.0;  // forget gate
  }

  std::size_t units() const { return recurrent_weight.value.rows(); }

  void collect(std::vector<Parameter*>& out) {
    out.push_back(&input_weight);
    out.push_back(&recurrent_weight);
    out.push_back(&bias);
  }
};

/// Runs one LSTM direction left to right over x [rows*T x in] (row r*T + t)
/// and returns h in the same layout. i, f, o = sigmoid; g = tanh;
/// c = f*c + i*g; h = o*tanh(c). `recurrent_mask` ([rows x U], may be null)
/// multiplies h_{t-1} before the recurrent product at every step.
inline Var lstm_direction(Tape& tape, Var x, std::size_t rows, std::size_t seq_len, LstmParams& p,
                          const Tensor* recurrent_mask = nullptr) {
  const std::size_t U = p.units();
  Var projected = numgrad::add_bias(numgrad::matmul(x, tape.param(p.input_weight)), tape.param(p.bias));
  Var wh = tape.param(p.recurrent_weight);
  Var mask = recurrent_mask != nullptr ? tape.constant(*recurrent_mask) : Var{};
  Var h = tape.constant(Tensor::matrix(rows, U));
  Var c = tape.constant(Tensor::matrix(rows, U));
  std::vector<Var> steps;
  steps.reserve(seq_len);
  std::vector<int> index(rows);
  for (std::size_t t = 0; t < seq_len; ++t) {
    for (std::size_t r = 0; r < rows; ++r) index[r] = static_cast<int>(r * seq_len + t);
    Var hin = recurrent_mask != nullptr ? numgrad::mul(h, mask) : h;
    Var z = numgrad::add(numgrad::gather_rows(projected, index), numgrad::matmul(hin, wh));
    Var i = numgrad::sigmoid(numgrad::slice_cols(z, 0, U));
    Var f = numgrad::sigmoid(numgrad::slice_cols(z, U, U));
    Var g = numgrad::tanh(numgrad::slice_cols(z, 2 * U, U));
    Var o = numgrad::sigmoid(numgrad::slice_cols(z, 3 * U, U));
    c = numgrad::add(numgrad::mul(f, c), numgrad::mul(i, g));
    h = numgrad::mul(o, numgrad::tanh(c));
    steps.push_back(h);
  }
  // steps stacked are time-major (t*rows + r); reorder to r*T + t.
  Var stacked = seq_len == 1 ? steps[0] : numgrad::concat_rows(steps);
  std::vector<int> to_row_major(rows * seq_len);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t t = 0; t < seq_len; ++t) to_row_major[r * seq_len + t] = static_cast<int>(t * rows + r);
  }
  return numgrad::gather_rows(stacked, std::move(to_row_major));
}

/// Index map reversing each row's first `lengths[r]` positions and leaving
/// padding in place; it is its own inverse.
inline std::vector<int> reverse_index(const std::vector<std::size_t>& lengths, std::size_t seq_len) {
  std::vector<int> idx(lengths.size() * seq_len);
  for (std::size_t r = 0; r < lengths.size(); ++r) {
    for (std::size_t t = 0; t < seq_len; ++t) {
      const std::size_t src = t < lengths[r] ? lengths[r] - 1 - t : t;
      idx[r * seq_len + t] = static_cast<int>(r * seq_len + src);
    }
  }
  return idx;
}

/// Embedding, dropout, bidirectional LSTM (forward and backward states
/// concatenated) and a per-position dense layer.
class BiLstmTagger {
 public:
  static constexpr const char* kKind = "bilstm";

  BiLstmConfig config;
  corpus::Vocab vocab;
  Parameter embedding;
  LstmParams forward_lstm;
  LstmParams backward_lstm;
  Linear classifier;

  BiLstmTagger() = default;
  BiLstmTagger(const BiLstmConfig& cfg, corpus::Vocab v, std::uint64_t seed) : config(cfg), vocab(std::move(v)) {
    config.validate();
    Pcg32 rng(seed, 0xb157ULL);
    embedding = Parameter("embedding", uniform_tensor(Shape{vocab.num_tokens(), config.emb_dim}, 0.05, rng));
    forward_lstm = LstmParams("lstm.forward", config.emb_dim, config.units, rng);
    backward_lstm = LstmParams("lstm.backward", config.emb_dim, config.units, rng);
    classifier = Linear("classifier", 2 * config.units, vocab.num_tags(), rng);
  }

  std::size_t num_tags() const { return vocab.num_tags(); }

  std::vector<Parameter*> parameters() {
    std::vector<Parameter*> out{&embedding};
    forward_lstm.collect(out);
    backward_lstm.collect(out);
    classifier.collect(out);
    return out;
  }

  TaggerBatch make_batch(const std::vector<const corpus::Sentence*>& sentences, bool labeled) const {
    return word_batch(sentences, vocab, labeled);
  }

  /// Concatenated [forward | backward] states, [rows*cols x 2U].
  Var hidden(Tape& tape, const TaggerBatch& b, bool training, Pcg32& rng) {
    Var x = numgrad::gather_rows(tape.param(embedding), b.ids);
    x = numgrad::dropout(x, config.dropout, rng, training);
    Tensor fmask, bmask;
    const bool recurrent = training && config.recurrent_dropout > 0.0;
    if (recurrent) {
      fmask = recurrent_mask(b.rows, rng);
      bmask = recurrent_mask(b.rows, rng);
    }
    Var hf = lstm_direction(tape, x, b.rows, b.cols, forward_lstm, recurrent ? &fmask : nullptr);
    const auto rev = reverse_index(b.lengths, b.cols);
    Var hb = lstm_direction(tape, numgrad::gather_rows(x, rev), b.rows, b.cols, backward_lstm,
                            recurrent ? &bmask : nullptr);
    return numgrad::concat_cols({hf, numgrad::gather_rows(hb, rev)});
  }

  Var logits(Tape& tape, const TaggerBatch& b, bool training, Pcg32& rng) {
    return classifier(tape, hidden(tape, b, training, rng));
  }

  Var loss(Tape& tape, const TaggerBatch& b, bool training, Pcg32& rng) {
    return numgrad::cross_entropy_masked(logits(tape, b, training, rng), b.labels);
  }

  std::vector<std::vector<std::string>> decode(const TaggerBatch& b, const Tensor& logits) const {
    auto best = argmax_rows(logits);
    std::vector<std::vector<std::string>> out(b.rows);
    for (std::size_t r = 0; r < b.rows; ++r) {
      for (std::size_t t = 0; t < b.lengths[r]; ++t) out[r].push_back(vocab.tag(best[r * b.cols + t]));
    }
    return out;
  }

 private:
  Tensor recurrent_mask(std::size_t rows, Pcg32& rng) const {
    Tensor m = Tensor::matrix(rows, config.units);
    const double keep = 1.0 / (1.0 - config.recurrent_dropout);
    for (double& v : m.data) v = rng.uniform() < config.recurrent_dropout ? 0.0 : keep;
    return m;
  }
};

}  // namespace tagforge::taggers
