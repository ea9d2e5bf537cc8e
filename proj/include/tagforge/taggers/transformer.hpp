#pragma once

#include <cstddef>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "tagforge/corpus.hpp"
#include "tagforge/log.hpp"
#include "tagforge/taggers/batch.hpp"
#include "tagforge/taggers/layers.hpp"

namespace tagforge::taggers {

struct TransformerConfig {
  std::size_t emb_dim = 300;
  std::size_t num_heads = 6;
  std::size_t num_layers = 6;
  std::size_t ffn_dim = 2048;
  double dropout = 0.0;
  std::size_t maxlen = 128;
  bool positional = true;  // false drops the sinusoidal term

  void validate() const {
    if (emb_dim == 0 || num_heads == 0 || emb_dim % num_heads != 0) {
      throw Error(ErrorKind::Config, "emb_dim " + std::to_string(emb_dim) + " is not divisible by num_heads " +
                                         std::to_string(num_heads));
    }
    if (emb_dim % 2 != 0) throw Error(ErrorKind::Config, "emb_dim must be even for the sinusoidal encoding");
    if (num_layers == 0 || ffn_dim == 0) throw Error(ErrorKind::Config, "num_layers and ffn_dim must be positive");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw Error(ErrorKind::Config, "dropout must lie in [0, 1)");
  }
};

/// Reads "word v1 ... vd" lines into rows of a [vocab x dim] table. Words the
/// file lacks keep their rows from `table`.
inline std::size_t load_embeddings(const std::string& path, const corpus::Vocab& vocab, Tensor& table) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open embedding file '" + path + "'");
  const std::size_t dim = table.cols();
  std::string line;
  std::size_t line_no = 0, found = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ss(line);
    std::string word;
    if (!(ss >> word)) continue;
    std::vector<double> values;
    double v;
    while (ss >> v) values.push_back(v);
    if (values.size() != dim) {
      throw Error(ErrorKind::Config, "embedding file line " + std::to_string(line_no) + " has " +
                                         std::to_string(values.size()) + " values, expected " + std::to_string(dim));
    }
    if (!vocab.has_token(word)) continue;
    const auto row = static_cast<std::size_t>(vocab.token_index(word));
    if (static_cast<int>(row) == corpus::kUnkIndex && word != corpus::kUnkToken) continue;
    std::copy(values.begin(), values.end(), table.data.begin() + static_cast<std::ptrdiff_t>(row * dim));
    ++found;
  }
  return found;
}

/// Word-level encoder tagger: embedding + sinusoidal positions, a post-LN
/// encoder stack, and a per-position linear classifier. Pad positions are
/// never attended to.
class TransformerTagger {
 public:
  static constexpr const char* kKind = "transformer";

  TransformerConfig config;
  corpus::Vocab vocab;
  Parameter embedding;
  std::vector<EncoderLayer> layers;
  Linear classifier;

  TransformerTagger() = default;
  TransformerTagger(const TransformerConfig& cfg, corpus::Vocab v, std::uint64_t seed) : config(cfg), vocab(std::move(v)) {
    config.validate();
    Pcg32 rng(seed, 0x7a11ULL);
    // Unit-variance embeddings, the same scale as the positional signal.
    embedding = Parameter("embedding", uniform_tensor(Shape{vocab.num_tokens(), config.emb_dim}, std::sqrt(3.0), rng));
    for (std::size_t l = 0; l < config.num_layers; ++l) {
      layers.emplace_back("encoder." + std::to_string(l), config.emb_dim, config.num_heads, config.ffn_dim, rng);
    }
    classifier = Linear("classifier", config.emb_dim, vocab.num_tags(), rng);
  }

  std::size_t num_tags() const { return vocab.num_tags(); }

  std::vector<Parameter*> parameters() {
    std::vector<Parameter*> out{&embedding};
    for (auto& l : layers) l.collect(out);
    classifier.collect(out);
    return out;
  }

  TaggerBatch make_batch(const std::vector<const corpus::Sentence*>& sentences, bool labeled) const {
    return word_batch(sentences, vocab, labeled);
  }

  /// Logits [rows*cols x |Y|].
  Var logits(Tape& tape, const TaggerBatch& b, bool training, Pcg32& rng) {
    Var x = numgrad::gather_rows(tape.param(embedding), b.ids);
    if (config.positional) {
      Tensor pe = sinusoidal_pe(b.cols, config.emb_dim);
      Tensor tiled = Tensor::matrix(b.rows * b.cols, config.emb_dim);
      for (std::size_t r = 0; r < b.rows; ++r) {
        std::copy(pe.data.begin(), pe.data.end(),
                  tiled.data.begin() + static_cast<std::ptrdiff_t>(r * b.cols * config.emb_dim));
      }
      x = numgrad::add(x, tape.constant(std::move(tiled)));
    }
    x = numgrad::dropout(x, config.dropout, rng, training);
    const auto valid = b.key_valid();
    for (auto& layer : layers) x = layer(tape, x, valid, b.cols, config.dropout, rng, training);
    return classifier(tape, x);
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
};

}  // namespace tagforge::taggers
