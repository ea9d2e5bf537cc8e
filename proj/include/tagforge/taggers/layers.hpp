#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "tagforge/error.hpp"
#include "tagforge/numgrad.hpp"
#include "tagforge/rng.hpp"

namespace tagforge::taggers {

using numgrad::Parameter;
using numgrad::Shape;
using numgrad::Tape;
using numgrad::Tensor;
using numgrad::Var;

/// PE(pos, 2i) = sin(pos / 10000^(2i/d)), PE(pos, 2i+1) = cos(same angle).
inline Tensor sinusoidal_pe(std::size_t maxlen, std::size_t d) {
  if (d == 0 || d % 2 != 0) throw Error(ErrorKind::Config, "positional encoding width must be even, got " + std::to_string(d));
  Tensor pe = Tensor::matrix(maxlen, d);
  for (std::size_t pos = 0; pos < maxlen; ++pos) {
    for (std::size_t i = 0; i < d / 2; ++i) {
      const double angle =
          static_cast<double>(pos) / std::pow(10000.0, static_cast<double>(2 * i) / static_cast<double>(d));
      pe(pos, 2 * i) = std::sin(angle);
      pe(pos, 2 * i + 1) = std::cos(angle);
    }
  }
  return pe;
}

struct Linear {
  Parameter weight;  // [in x out]
  Parameter bias;    // [out]

  Linear() = default;
  Linear(const std::string& name, std::size_t in, std::size_t out, Pcg32& rng)
      : weight(name + ".weight", numgrad::xavier_uniform(in, out, rng)), bias(name + ".bias", Tensor(Shape{out})) {}

  Var operator()(Tape& tape, Var x) { return numgrad::add_bias(numgrad::matmul(x, tape.param(weight)), tape.param(bias)); }
  void collect(std::vector<Parameter*>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
  }
};

struct LayerNormParams {
  Parameter gamma;
  Parameter beta;

  LayerNormParams() = default;
  LayerNormParams(const std::string& name, std::size_t d)
      : gamma(name + ".gamma", Tensor(Shape{d}, 1.0)), beta(name + ".beta", Tensor(Shape{d})) {}

  Var operator()(Tape& tape, Var x) { return numgrad::layer_norm(x, tape.param(gamma), tape.param(beta)); }
  void collect(std::vector<Parameter*>& out) {
    out.push_back(&gamma);
    out.push_back(&beta);
  }
};

struct AttentionParams {
  std::size_t heads = 1;
  Linear query, key, value, output;

  AttentionParams() = default;
  AttentionParams(const std::string& name, std::size_t d, std::size_t h, Pcg32& rng)
      : heads(h),
        query(name + ".query", d, d, rng),
        key(name + ".key", d, d, rng),
        value(name + ".value", d, d, rng),
        output(name + ".output", d, d, rng) {
    if (h == 0 || d % h != 0) {
      throw Error(ErrorKind::Config, "model width " + std::to_string(d) + " is not divisible by " + std::to_string(h) + " heads");
    }
  }

  void collect(std::vector<Parameter*>& out) {
    query.collect(out);
    key.collect(out);
    value.collect(out);
    output.collect(out);
  }
};

/// Self-attention over a batch stored as [B*T x d] (row b*T + t). key_valid
/// has B*T entries; invalid keys get zero weight. Each head computes
/// softmax(Q K^T / sqrt(d_k)) V on its column block; heads are concatenated
/// and projected. When `weights_out` is given it receives one [T x T]
/// attention matrix per (row, head), row-major over (b, h).
inline Var multi_head_attention(Tape& tape, Var x, AttentionParams& p, const std::vector<bool>& key_valid,
                                std::size_t seq_len, std::vector<Tensor>* weights_out = nullptr) {
  const std::size_t n = x.value().rows(), d = x.value().cols();
  if (seq_len == 0 || n % seq_len != 0 || key_valid.size() != n) {
    throw Error(ErrorKind::Shape, "attention input " + numgrad::shape_str(x.shape()) + " does not split into rows of " +
                                      std::to_string(seq_len) + " with " + std::to_string(key_valid.size()) + " key flags");
  }
  const std::size_t batch = n / seq_len, dk = d / p.heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));
  Var q = p.query(tape, x), k = p.key(tape, x), v = p.value(tape, x);
  std::vector<Var> rows;
  rows.reserve(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    std::vector<bool> valid(key_valid.begin() + static_cast<std::ptrdiff_t>(b * seq_len),
                            key_valid.begin() + static_cast<std::ptrdiff_t>((b + 1) * seq_len));
    Var qb = numgrad::slice_rows(q, b * seq_len, seq_len);
    Var kb = numgrad::slice_rows(k, b * seq_len, seq_len);
    Var vb = numgrad::slice_rows(v, b * seq_len, seq_len);
    std::vector<Var> heads;
    heads.reserve(p.heads);
    for (std::size_t h = 0; h < p.heads; ++h) {
      Var qh = p.heads == 1 ? qb : numgrad::slice_cols(qb, h * dk, dk);
      Var kh = p.heads == 1 ? kb : numgrad::slice_cols(kb, h * dk, dk);
      Var vh = p.heads == 1 ? vb : numgrad::slice_cols(vb, h * dk, dk);
      Var scores = numgrad::scale(numgrad::matmul(qh, numgrad::transpose(kh)), inv_sqrt);
      Var weights = numgrad::masked_softmax_rows(scores, valid);
      if (weights_out != nullptr) weights_out->push_back(weights.value());
      heads.push_back(numgrad::matmul(weights, vh));
    }
    rows.push_back(p.heads == 1 ? heads[0] : numgrad::concat_cols(heads));
  }
  Var joined = batch == 1 ? rows[0] : numgrad::concat_rows(rows);
  return p.output(tape, joined);
}

/// Post-LN encoder block: x = LN(x + MHA(x)); x = LN(x + FFN(x)).
struct EncoderLayer {
  AttentionParams attention;
  LayerNormParams attention_norm;
  Linear ffn_in;
  Linear ffn_out;
  LayerNormParams ffn_norm;

  EncoderLayer() = default;
  EncoderLayer(const std::string& name, std::size_t d, std::size_t heads, std::size_t ffn_dim, Pcg32& rng)
      : attention(name + ".attention", d, heads, rng),
        attention_norm(name + ".attention_norm", d),
        ffn_in(name + ".ffn_in", d, ffn_dim, rng),
        ffn_out(name + ".ffn_out", ffn_dim, d, rng),
        ffn_norm(name + ".ffn_norm", d) {}

  Var operator()(Tape& tape, Var x, const std::vector<bool>& key_valid, std::size_t seq_len, double dropout,
                 Pcg32& rng, bool training) {
    Var a = multi_head_attention(tape, x, attention, key_valid, seq_len);
    a = numgrad::dropout(a, dropout, rng, training);
    x = attention_norm(tape, numgrad::add(x, a));
    Var f = ffn_out(tape, numgrad::relu(ffn_in(tape, x)));
    f = numgrad::dropout(f, dropout, rng, training);
    return ffn_norm(tape, numgrad::add(x, f));
  }

  void collect(std::vector<Parameter*>& out) {
    attention.collect(out);
    attention_norm.collect(out);
    ffn_in.collect(out);
    ffn_out.collect(out);
    ffn_norm.collect(out);
  }
};

inline Tensor uniform_tensor(Shape shape, double limit, Pcg32& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.data) v = rng.uniform(-limit, limit);
  return t;
}

}  // namespace tagforge::taggers
