#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "tagforge/corpus.hpp"
#include "tagforge/log.hpp"
#include "tagforge/taggers/batch.hpp"
#include "tagforge/taggers/layers.hpp"
#include "tagforge/tokenizer.hpp"

namespace tagforge::taggers {

struct BertLikeConfig {
  std::size_t num_layers = 2;
  std::size_t hidden = 64;
  std::size_t num_heads = 4;
  std::size_t ffn_dim = 256;
  double fc_dropout = 0.1;
  std::size_t maxlen = 128;  // rows of the position table and position classes
  double lambda_pos = 0.1;

  void validate() const {
    if (hidden == 0 || num_heads == 0 || hidden % num_heads != 0) {
      throw Error(ErrorKind::Config, "hidden " + std::to_string(hidden) + " is not divisible by num_heads " +
                                         std::to_string(num_heads));
    }
    if (num_layers == 0 || ffn_dim == 0) throw Error(ErrorKind::Config, "num_layers and ffn_dim must be positive");
    if (maxlen < 2) throw Error(ErrorKind::Config, "maxlen must be at least 2");
    if (!(fc_dropout >= 0.0 && fc_dropout < 1.0)) throw Error(ErrorKind::Config, "fc_dropout must lie in [0, 1)");
    if (!(lambda_pos >= 0.0)) throw Error(ErrorKind::Config, "lambda_pos must be non-negative");
  }
};

struct BertLikeOutput {
  Var tags;       // [rows*cols x |Y|]
  Var positions;  // [rows*cols x maxlen]
};

/// categorical + lambda_pos * positional. The categorical term is the mean
/// cross-entropy of tag logits over active positions only; the positional
/// term is the mean cross-entropy of position logits against each position's
/// own index over non-pad positions (`positions` holds -1 at padding).
inline Var composite_loss(Var tag_logits, Var position_logits, const std::vector<int>& labels,
                          const std::vector<bool>& active, const std::vector<int>& positions, double lambda_pos) {
  if (labels.size() != active.size() || labels.size() != positions.size()) {
    throw Error(ErrorKind::Shape, "composite_loss: labels, active mask and positions differ in length");
  }
  std::vector<int> active_labels(labels.size(), corpus::kIgnoreLabel);
  std::size_t n_active = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (active[i] && labels[i] != corpus::kIgnoreLabel) {
      active_labels[i] = labels[i];
      ++n_active;
    }
  }
  if (n_active == 0) throw Error(ErrorKind::Contract, "batch has no active labelled positions");
  Var categorical = numgrad::cross_entropy_masked(tag_logits, active_labels);
  if (lambda_pos == 0.0) return categorical;
  Var positional = numgrad::cross_entropy_masked(position_logits, positions);
  return numgrad::add(categorical, numgrad::scale(positional, lambda_pos));
}

/// Subword encoder: token embedding (zero at [PAD]) plus a learned position
/// table, a post-LN encoder stack, dropout, then a tag head and a position
/// head.
class BertLikeTagger {
 public:
  static constexpr const char* kKind = "bertlike";

  BertLikeConfig config;
  tokenizer::WordPieceVocab pieces;
  std::vector<std::string> tags;
  Parameter token_embedding;
  Parameter position_embedding;
  std::vector<EncoderLayer> layers;
  Linear tag_head;
  Linear position_head;

  BertLikeTagger() = default;
  BertLikeTagger(const BertLikeConfig& cfg, tokenizer::WordPieceVocab wp, std::vector<std::string> tag_list,
                 std::uint64_t seed)
      : config(cfg), pieces(std::move(wp)), tags(std::move(tag_list)) {
    config.validate();
    for (std::size_t i = 0; i < tags.size(); ++i) tag_index_.emplace(tags[i], static_cast<int>(i));
    Pcg32 rng(seed, 0xbe27ULL);
    token_embedding = Parameter("token_embedding", uniform_tensor(Shape{pieces.size(), config.hidden}, 0.1, rng));
    position_embedding = Parameter("position_embedding", uniform_tensor(Shape{config.maxlen, config.hidden}, 0.1, rng));
    for (std::size_t l = 0; l < config.num_layers; ++l) {
      layers.emplace_back("encoder." + std::to_string(l), config.hidden, config.num_heads, config.ffn_dim, rng);
    }
    tag_head = Linear("tag_head", config.hidden, tags.size(), rng);
    position_head = Linear("position_head", config.hidden, config.maxlen, rng);
  }

  std::size_t num_tags() const { return tags.size(); }

  int tag_id(const std::string& tag) const {
    auto it = tag_index_.find(tag);
    if (it == tag_index_.end()) throw Error(ErrorKind::Label, "tag '" + tag + "' is not in the tag inventory");
    return it->second;
  }

  std::vector<Parameter*> parameters() {
    std::vector<Parameter*> out{&token_embedding, &position_embedding};
    for (auto& l : layers) l.collect(out);
    tag_head.collect(out);
    position_head.collect(out);
    return out;
  }

  /// Encodes with truncation at maxlen (trailing words that do not fit are
  /// dropped) and trims padding to the longest row.
  TaggerBatch make_batch(const std::vector<const corpus::Sentence*>& sentences, bool labeled) const {
    TaggerBatch b;
    b.rows = sentences.size();
    std::vector<tokenizer::EncodedSentence> enc;
    std::size_t longest = 1;
    for (const auto* s : sentences) {
      std::vector<std::string> words;
      std::vector<int> labels;
      for (const auto& t : s->tokens) {
        words.push_back(t.word);
        if (labeled) labels.push_back(tag_id(t.ner));
      }
      enc.push_back(tokenizer::encode_sentence(words, labeled ? &labels : nullptr, pieces,
                                               tokenizer::EncodeOptions{config.maxlen, true, true}));
      const auto& active = enc.back().encoding.active;
      if (static_cast<std::size_t>(std::count(active.begin(), active.end(), true)) < words.size()) {
        log::debug("sentence ", s->id, " truncated to fit maxlen ", config.maxlen);
      }
      longest = std::max(longest, enc.back().encoding.length);
    }
    b.cols = longest;
    for (auto& e : enc) {
      auto& se = e.encoding;
      b.ids.insert(b.ids.end(), se.ids.begin(), se.ids.begin() + static_cast<std::ptrdiff_t>(longest));
      b.active.insert(b.active.end(), se.active.begin(), se.active.begin() + static_cast<std::ptrdiff_t>(longest));
      if (labeled) {
        b.labels.insert(b.labels.end(), e.subword_labels.begin(),
                        e.subword_labels.begin() + static_cast<std::ptrdiff_t>(longest));
      } else {
        b.labels.insert(b.labels.end(), longest, corpus::kIgnoreLabel);
      }
      b.lengths.push_back(se.length);
      b.encodings.push_back(std::move(se));
    }
    return b;
  }

  BertLikeOutput forward(Tape& tape, const TaggerBatch& b, bool training, Pcg32& rng) {
    if (b.cols > config.maxlen) {
      throw Error(ErrorKind::Length, "sequence of " + std::to_string(b.cols) + " positions exceeds the position table of " +
                                         std::to_string(config.maxlen));
    }
    const std::size_t n = b.rows * b.cols, H = config.hidden;
    Var tok = numgrad::gather_rows(tape.param(token_embedding), b.ids);
    Tensor keep = Tensor::matrix(n, H, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
      if (b.ids[i] == pieces.pad_id()) std::fill_n(keep.data.begin() + static_cast<std::ptrdiff_t>(i * H), H, 0.0);
    }
    tok = numgrad::mul(tok, tape.constant(std::move(keep)));
    std::vector<int> pos(n);
    for (std::size_t i = 0; i < n; ++i) pos[i] = static_cast<int>(i % b.cols);
    Var x = numgrad::add(tok, numgrad::gather_rows(tape.param(position_embedding), pos));
    const auto valid = b.key_valid();
    for (auto& layer : layers) x = layer(tape, x, valid, b.cols, 0.0, rng, training);
    x = numgrad::dropout(x, config.fc_dropout, rng, training);
    return {tag_head(tape, x), position_head(tape, x)};
  }

  Var logits(Tape& tape, const TaggerBatch& b, bool training, Pcg32& rng) { return forward(tape, b, training, rng).tags; }

  std::vector<int> position_targets(const TaggerBatch& b) const {
    std::vector<int> out(b.rows * b.cols, corpus::kIgnoreLabel);
    for (std::size_t r = 0; r < b.rows; ++r) {
      for (std::size_t t = 0; t < b.lengths[r]; ++t) out[r * b.cols + t] = static_cast<int>(t);
    }
    return out;
  }

  Var loss(Tape& tape, const TaggerBatch& b, bool training, Pcg32& rng) {
    auto out = forward(tape, b, training, rng);
    return composite_loss(out.tags, out.positions, b.labels, b.active, position_targets(b), config.lambda_pos);
  }

  /// Word-level tags from each word's first subword; words lost to truncation
  /// get "O" (or the first tag when "O" is not in the inventory).
  std::vector<std::vector<std::string>> decode(const TaggerBatch& b, const Tensor& logits) const {
    auto best = argmax_rows(logits);
    const int fallback = tag_index_.contains("O") ? tag_index_.at("O") : 0;
    std::vector<std::vector<std::string>> out(b.rows);
    for (std::size_t r = 0; r < b.rows; ++r) {
      std::vector<int> row(best.begin() + static_cast<std::ptrdiff_t>(r * b.cols),
                           best.begin() + static_cast<std::ptrdiff_t>((r + 1) * b.cols));
      for (int id : tokenizer::recombine_predictions(b.encodings[r], row, fallback)) {
        out[r].push_back(tags[static_cast<std::size_t>(id)]);
      }
    }
    return out;
  }

 private:
  std::unordered_map<std::string, int> tag_index_;
};

}  // namespace tagforge::taggers
