#pragma once

#include <algorithm>
#include <cstddef>
#include <string>
#include <vector>

#include "tagforge/corpus.hpp"
#include "tagforge/numgrad/tensor.hpp"
#include "tagforge/tokenizer.hpp"

namespace tagforge::taggers {

/// Model input padded to the longest row of the batch. Flat vectors are
/// row-major [rows x cols].
struct TaggerBatch {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<int> ids;
  std::vector<int> labels;               // -1 where no loss applies
  std::vector<std::size_t> lengths;      // non-pad positions per row
  std::vector<bool> active;              // subword models: first piece of each word
  std::vector<tokenizer::SubwordEncoding> encodings;  // subword models only

  std::vector<bool> key_valid() const {
    std::vector<bool> v(rows * cols, false);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t t = 0; t < lengths[r]; ++t) v[r * cols + t] = true;
    }
    return v;
  }
};

/// Word-level batch: vocab ids padded with PAD, labels -1 beyond each length
/// (and everywhere when `labeled` is false).
inline TaggerBatch word_batch(const std::vector<const corpus::Sentence*>& sentences, const corpus::Vocab& vocab,
                              bool labeled) {
  std::size_t longest = 1;
  for (const auto* s : sentences) longest = std::max(longest, s->size());
  TaggerBatch b;
  b.rows = sentences.size();
  b.cols = longest;
  b.ids.assign(b.rows * b.cols, vocab.pad_idx());
  b.labels.assign(b.rows * b.cols, corpus::kIgnoreLabel);
  for (std::size_t r = 0; r < b.rows; ++r) {
    const auto& s = *sentences[r];
    for (std::size_t t = 0; t < s.size(); ++t) {
      b.ids[r * b.cols + t] = vocab.token_index(s.tokens[t].word);
      if (labeled) b.labels[r * b.cols + t] = vocab.tag_index(s.tokens[t].ner);
    }
    b.lengths.push_back(s.size());
  }
  return b;
}

/// Row-wise argmax of a [rows*cols x classes] logit matrix.
inline std::vector<int> argmax_rows(const numgrad::Tensor& logits) {
  const std::size_t m = logits.rows(), n = logits.cols();
  std::vector<int> out(m, 0);
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = logits.data.data() + i * n;
    out[i] = static_cast<int>(std::max_element(row, row + n) - row);
  }
  return out;
}

}  // namespace tagforge::taggers
