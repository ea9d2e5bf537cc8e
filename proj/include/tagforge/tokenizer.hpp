#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "tagforge/corpus.hpp"
#include "tagforge/error.hpp"
#include "tagforge/text.hpp"

namespace tagforge::tokenizer {

inline constexpr std::string_view kPad = "[PAD]";
inline constexpr std::string_view kUnk = "[UNK]";
inline constexpr std::string_view kCls = "[CLS]";
inline constexpr std::string_view kMask = "[MASK]";
inline constexpr std::string_view kContinuation = "##";

// Words longer than this (in characters) become [UNK] outright.
inline constexpr std::size_t kMaxWordChars = 100;

/// Piece inventory; line number in the vocab file is the id. Continuation
/// pieces carry a "##" prefix. Special tokens are found by name, and [PAD]
/// must be id 0 so it coincides with the corpus padding index.
class WordPieceVocab {
 public:
  WordPieceVocab() = default;

  explicit WordPieceVocab(std::vector<std::string> pieces) : pieces_(std::move(pieces)) {
    for (std::size_t i = 0; i < pieces_.size(); ++i) {
      if (pieces_[i].empty()) throw Error(ErrorKind::Config, "empty piece at line " + std::to_string(i + 1));
      if (!index_.emplace(pieces_[i], static_cast<int>(i)).second) {
        throw Error(ErrorKind::Config, "duplicate piece '" + pieces_[i] + "'");
      }
    }
    pad_ = require(kPad);
    unk_ = require(kUnk);
    cls_ = require(kCls);
    mask_ = require(kMask);
    if (pad_ != corpus::kPadIndex) throw Error(ErrorKind::Config, "[PAD] must have id 0");
  }

  static WordPieceVocab from_text(std::string_view content) {
    auto lines = corpus::text_to_lines(content);
    while (!lines.empty() && lines.back().empty()) lines.pop_back();
    return WordPieceVocab(std::move(lines));
  }

  static WordPieceVocab load(const std::string& path) { return from_text(corpus::read_file_bytes(path)); }

  std::string to_text() const { return corpus::lines_to_text(pieces_); }

  std::optional<int> find(const std::string& piece) const {
    auto it = index_.find(piece);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  const std::string& piece(int id) const { return pieces_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return pieces_.size(); }
  const std::vector<std::string>& pieces() const { return pieces_; }

  int pad_id() const { return pad_; }
  int unk_id() const { return unk_; }
  int cls_id() const { return cls_; }
  int mask_id() const { return mask_; }

 private:
  int require(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) throw Error(ErrorKind::Config, "vocab lacks special token " + std::string(name));
    return it->second;
  }

  std::vector<std::string> pieces_;
  std::unordered_map<std::string, int> index_;
  int pad_ = 0, unk_ = 1, cls_ = 2, mask_ = 3;
};

/// Builds a closed WordPiece inventory from corpus words without learning
/// merges: the specials, every lower-cased character in both word-initial and
/// "##" form, then the `max_words` most frequent lower-cased words (ties
/// lexicographic). Every word of the corpus is therefore tokenizable.
inline WordPieceVocab build_wordpiece_vocab(const corpus::Corpus& corpus, std::size_t max_words) {
  std::map<std::string, std::size_t> counts;
  std::map<std::uint32_t, bool> chars;
  for (const auto& s : corpus) {
    for (const auto& t : s.tokens) {
      std::string w = text::lower(t.word);
      ++counts[w];
      for (auto cp : text::codepoints(w)) chars[cp] = true;
    }
  }
  std::vector<std::string> pieces{std::string(kPad), std::string(kUnk), std::string(kCls), std::string(kMask)};
  std::unordered_map<std::string, bool> seen;
  for (auto& p : pieces) seen[p] = true;
  auto add = [&](std::string p) {
    if (!seen.contains(p)) {
      seen[p] = true;
      pieces.push_back(std::move(p));
    }
  };
  for (auto& [cp, _] : chars) {
    std::string c;
    text::append_utf8(c, cp);
    add(c);
  }
  for (auto& [cp, _] : chars) {
    std::string c(kContinuation);
    text::append_utf8(c, cp);
    add(c);
  }
  std::vector<std::pair<std::string, std::size_t>> ordered(counts.begin(), counts.end());
  std::stable_sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::size_t taken = 0;
  for (auto& [w, c] : ordered) {
    if (taken >= max_words) break;
    if (text::codepoints(w).size() > kMaxWordChars) continue;
    add(w);
    ++taken;
  }
  return WordPieceVocab(std::move(pieces));
}

/// Greedy longest-match-first. Non-initial pieces are looked up in their
/// "##" form; if some position has no matching piece the whole word is [UNK].
inline std::vector<int> wordpiece_tokenize(const std::string& word, const WordPieceVocab& vocab) {
  if (word.empty()) throw Error(ErrorKind::Contract, "cannot tokenize an empty word");
  auto cps = text::codepoints(word);
  if (cps.size() > kMaxWordChars) return {vocab.unk_id()};
  std::vector<int> out;
  std::size_t start = 0;
  while (start < cps.size()) {
    std::size_t end = cps.size();
    std::optional<int> match;
    while (end > start) {
      std::string candidate = text::from_codepoints(cps, start, end);
      if (start > 0) candidate = std::string(kContinuation) + candidate;
      match = vocab.find(candidate);
      if (match) break;
      --end;
    }
    if (!match) return {vocab.unk_id()};
    out.push_back(*match);
    start = end;
  }
  return out;
}

struct SubwordEncoding {
  std::vector<int> ids;         // position 0 is [CLS]
  std::vector<int> word_index;  // -1 at [CLS] and padding
  std::vector<bool> active;     // first subword of each word
  std::size_t length = 0;       // non-pad positions, [CLS] included
  std::size_t num_words = 0;    // source words, including any truncated away
};

struct EncodedSentence {
  SubwordEncoding encoding;
  std::vector<int> subword_labels;  // -1 wherever no label applies; empty when unlabeled
};

struct EncodeOptions {
  std::size_t maxlen = 128;
  bool truncate = false;
  bool lowercase = true;
};

/// Prepends [CLS], expands each word into pieces, and pads to maxlen. Every
/// piece of a word carries the word's label; only the first is active. With
/// truncation on, trailing words that do not fit entirely are dropped.
inline EncodedSentence encode_sentence(const std::vector<std::string>& words, const std::vector<int>* labels,
                                       const WordPieceVocab& vocab, const EncodeOptions& opts) {
  if (words.empty()) throw Error(ErrorKind::Contract, "cannot encode an empty sentence");
  if (labels != nullptr && labels->size() != words.size()) {
    throw Error(ErrorKind::Alignment, "labels (" + std::to_string(labels->size()) + ") and words (" +
                                          std::to_string(words.size()) + ") differ in length");
  }
  if (opts.maxlen < 2) throw Error(ErrorKind::Length, "maxlen must leave room for [CLS] and one piece");

  EncodedSentence out;
  SubwordEncoding& enc = out.encoding;
  enc.num_words = words.size();
  enc.ids.push_back(vocab.cls_id());
  enc.word_index.push_back(-1);
  enc.active.push_back(false);
  if (labels != nullptr) out.subword_labels.push_back(corpus::kIgnoreLabel);

  for (std::size_t w = 0; w < words.size(); ++w) {
    auto pieces = wordpiece_tokenize(opts.lowercase ? text::lower(words[w]) : words[w], vocab);
    if (enc.ids.size() + pieces.size() > opts.maxlen) {
      if (!opts.truncate) {
        throw Error(ErrorKind::Length, "subword expansion exceeds maxlen " + std::to_string(opts.maxlen));
      }
      break;
    }
    for (std::size_t p = 0; p < pieces.size(); ++p) {
      enc.ids.push_back(pieces[p]);
      enc.word_index.push_back(static_cast<int>(w));
      enc.active.push_back(p == 0);
      if (labels != nullptr) out.subword_labels.push_back((*labels)[w]);
    }
  }
  enc.length = enc.ids.size();
  while (enc.ids.size() < opts.maxlen) {
    enc.ids.push_back(vocab.pad_id());
    enc.word_index.push_back(-1);
    enc.active.push_back(false);
    if (labels != nullptr) out.subword_labels.push_back(corpus::kIgnoreLabel);
  }
  return out;
}

/// One tag per source word, taken from the word's first subword. Tags may
/// cover the padded encoding or only its first `length` positions. Words lost
/// to truncation receive `fallback`.
template <typename Tag>
std::vector<Tag> recombine_predictions(const SubwordEncoding& enc, const std::vector<Tag>& subword_tags,
                                       const Tag& fallback = Tag{}) {
  if (subword_tags.size() < enc.length || subword_tags.size() > enc.ids.size()) {
    throw Error(ErrorKind::Alignment, "got " + std::to_string(subword_tags.size()) + " subword tags for an encoding of " +
                                          std::to_string(enc.length) + " positions");
  }
  std::vector<Tag> out(enc.num_words, fallback);
  for (std::size_t p = 0; p < enc.length; ++p) {
    if (enc.active[p]) out[static_cast<std::size_t>(enc.word_index[p])] = subword_tags[p];
  }
  return out;
}

/// `id<TAB>piece<TAB>word_index<TAB>active` for every non-pad position.
inline std::string format_encoding(const SubwordEncoding& enc, const WordPieceVocab& vocab) {
  std::string out;
  for (std::size_t p = 0; p < enc.length; ++p) {
    out += std::to_string(enc.ids[p]) + "\t" + vocab.piece(enc.ids[p]) + "\t" + std::to_string(enc.word_index[p]) +
           "\t" + (enc.active[p] ? "1" : "0") + "\n";
  }
  return out;
}

}  // namespace tagforge::tokenizer
