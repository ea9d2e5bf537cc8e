#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "tagforge/error.hpp"
#include "tagforge/rng.hpp"
#include "tagforge/text.hpp"

namespace tagforge::corpus {

struct Token {
  std::string word;
  std::string pos;
  std::string ner;

  bool operator==(const Token&) const = default;
};

struct Sentence {
  std::size_t id = 0;
  std::vector<Token> tokens;

  std::size_t size() const { return tokens.size(); }
  bool operator==(const Sentence&) const = default;
};

using Corpus = std::vector<Sentence>;

inline constexpr std::string_view kPadToken = "<PAD>";
inline constexpr std::string_view kUnkToken = "<UNK>";
inline constexpr int kPadIndex = 0;
inline constexpr int kUnkIndex = 1;
inline constexpr int kIgnoreLabel = -1;

// ---------------------------------------------------------------------------
// Reading

inline std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open '" + path + "'");
  std::ostringstream oss;
  oss << in.rdbuf();
  return oss.str();
}

// UTF-8 when the bytes are valid UTF-8, otherwise Latin-1 (the encoding of
// the published Kaggle GMB file).
inline std::string decode_text(std::string bytes) {
  if (text::utf8_valid(bytes)) return bytes;
  return text::latin1_to_utf8(bytes);
}

namespace detail {

inline std::string lower_ascii(std::string s) {
  for (char& c : s) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return s;
}

inline std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r' || s[b] == '\n')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r' || s[e - 1] == '\n')) --e;
  return std::string(s.substr(b, e - b));
}

inline std::vector<std::string_view> lines(std::string_view content) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (start <= content.size()) {
    std::size_t nl = content.find('\n', start);
    if (nl == std::string_view::npos) {
      if (start < content.size()) out.push_back(content.substr(start));
      break;
    }
    out.push_back(content.substr(start, nl - start));
    start = nl + 1;
  }
  return out;
}

}  // namespace detail

/// A bare "0" is the outside tag written as a digit; it reads as "O".
inline std::string normalize_tag(std::string tag) { return tag == "0" ? std::string("O") : tag; }

/// Parses GMB/Kaggle-style CSV content (already decoded to UTF-8). The header
/// must name the four columns; the sentence marker appears only on the first
/// row of each sentence and is forward-filled. Sentence ids are ordinals in
/// file order.
inline Corpus parse_gmb_csv(std::string_view content) {
  auto rows = detail::lines(content);
  std::size_t first = 0;
  while (first < rows.size() && detail::trim(rows[first]).empty()) ++first;
  if (first == rows.size()) throw Error(ErrorKind::EmptyCorpus, "CSV file has no rows");

  auto header = text::split_csv_line(rows[first], first + 1);
  int col_marker = -1, col_word = -1, col_pos = -1, col_tag = -1;
  for (std::size_t i = 0; i < header.size(); ++i) {
    std::string h = detail::lower_ascii(detail::trim(header[i]));
    if (h.rfind("\xEF\xBB\xBF", 0) == 0) h = h.substr(3);  // BOM
    if (col_marker < 0 && h.find("sentence") != std::string::npos) col_marker = static_cast<int>(i);
    else if (col_word < 0 && h == "word") col_word = static_cast<int>(i);
    else if (col_pos < 0 && h == "pos") col_pos = static_cast<int>(i);
    else if (col_tag < 0 && h == "tag") col_tag = static_cast<int>(i);
  }
  if (col_marker < 0) throw Error(ErrorKind::Schema, "missing column 'Sentence #'");
  if (col_word < 0) throw Error(ErrorKind::Schema, "missing column 'Word'");
  if (col_pos < 0) throw Error(ErrorKind::Schema, "missing column 'POS'");
  if (col_tag < 0) throw Error(ErrorKind::Schema, "missing column 'Tag'");
  const auto needed = static_cast<std::size_t>(std::max({col_marker, col_word, col_pos, col_tag}) + 1);

  Corpus corpus;
  for (std::size_t r = first + 1; r < rows.size(); ++r) {
    std::size_t line_no = r + 1;
    if (detail::trim(rows[r]).empty()) continue;
    auto fields = text::split_csv_line(rows[r], line_no);
    if (fields.size() < needed) {
      throw Error(ErrorKind::MalformedRow, "line " + std::to_string(line_no) + ": expected " +
                                               std::to_string(needed) + " fields, got " +
                                               std::to_string(fields.size()));
    }
    std::string marker = detail::trim(fields[col_marker]);
    Token tok{fields[col_word], detail::trim(fields[col_pos]), normalize_tag(detail::trim(fields[col_tag]))};
    if (tok.word.empty()) {
      throw Error(ErrorKind::MalformedRow, "line " + std::to_string(line_no) + ": empty word");
    }
    if (tok.ner.empty()) {
      throw Error(ErrorKind::MalformedRow, "line " + std::to_string(line_no) + ": empty tag");
    }
    if (!marker.empty()) {
      corpus.push_back(Sentence{corpus.size(), {}});
    } else if (corpus.empty()) {
      throw Error(ErrorKind::MalformedRow,
                  "line " + std::to_string(line_no) + ": row precedes the first sentence marker");
    }
    corpus.back().tokens.push_back(std::move(tok));
  }
  if (corpus.empty()) throw Error(ErrorKind::EmptyCorpus, "CSV file has a header but no data rows");
  return corpus;
}

inline Corpus load_gmb_csv(const std::string& path) {
  return parse_gmb_csv(decode_text(read_file_bytes(path)));
}

/// CoNLL-style text: "word POS tag" per line, blank line between sentences.
/// A "# sent_id = N" comment sets the id of the following sentence.
inline Corpus parse_conll(std::string_view content) {
  Corpus corpus;
  Sentence cur;
  bool have_id = false;
  std::size_t next_id = 0;
  auto flush = [&] {
    if (!cur.tokens.empty()) {
      if (!have_id) cur.id = next_id;
      next_id = cur.id + 1;
      corpus.push_back(std::move(cur));
    }
    cur = Sentence{};
    have_id = false;
  };
  auto rows = detail::lines(content);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::string line = detail::trim(rows[r]);
    if (line.empty()) {
      flush();
      continue;
    }
    if (line.rfind("# sent_id = ", 0) == 0) {
      flush();
      cur.id = std::stoull(line.substr(12));
      have_id = true;
      continue;
    }
    auto parts = text::split_whitespace(line);
    if (parts.size() != 3 && line[0] == '#') continue;
    if (parts.size() != 3) {
      throw Error(ErrorKind::MalformedRow, "line " + std::to_string(r + 1) + ": expected 'word POS tag'");
    }
    cur.tokens.push_back(Token{parts[0], parts[1], normalize_tag(parts[2])});
  }
  flush();
  if (corpus.empty()) throw Error(ErrorKind::EmptyCorpus, "CoNLL file has no sentences");
  return corpus;
}

inline Corpus load_conll(const std::string& path) {
  return parse_conll(decode_text(read_file_bytes(path)));
}

inline std::string to_conll(const Corpus& corpus) {
  std::string out;
  for (const auto& s : corpus) {
    out += "# sent_id = " + std::to_string(s.id) + "\n";
    for (const auto& t : s.tokens) out += t.word + " " + t.pos + " " + t.ner + "\n";
    out += "\n";
  }
  return out;
}

// Dispatches on extension: .csv is GMB CSV, anything else CoNLL.
inline Corpus load_any(const std::string& path) {
  if (path.size() >= 4 && detail::lower_ascii(path.substr(path.size() - 4)) == ".csv") return load_gmb_csv(path);
  return load_conll(path);
}

inline std::size_t token_count(const Corpus& corpus) {
  std::size_t n = 0;
  for (const auto& s : corpus) n += s.size();
  return n;
}

// ---------------------------------------------------------------------------
// BIO hygiene

struct BioViolation {
  std::size_t sentence_id;
  std::size_t position;
  std::string reason;
};

namespace detail {

// Splits "B-geo" into ('B', "geo"); returns prefix 0 for tags without one.
inline std::pair<char, std::string> bio_parts(const std::string& tag) {
  if (tag.size() > 2 && (tag[0] == 'B' || tag[0] == 'I') && tag[1] == '-') return {tag[0], tag.substr(2)};
  return {0, tag};
}

}  // namespace detail

inline std::vector<BioViolation> validate_bio(const Corpus& corpus) {
  std::vector<BioViolation> out;
  for (const auto& s : corpus) {
    std::string prev = "O";
    for (std::size_t t = 0; t < s.tokens.size(); ++t) {
      const std::string& tag = s.tokens[t].ner;
      auto [prefix, entity] = detail::bio_parts(tag);
      if (prefix == 'I') {
        auto [pprefix, pentity] = detail::bio_parts(prev);
        if (pprefix == 0) {
          out.push_back({s.id, t, tag + " follows " + prev});
        } else if (pentity != entity) {
          out.push_back({s.id, t, tag + " follows a different entity " + prev});
        }
      }
      prev = tag;
    }
  }
  return out;
}

// Rewrites each dangling I-tag to the B-tag of the same entity.
inline Corpus repair_bio(Corpus corpus) {
  for (auto& s : corpus) {
    std::string prev = "O";
    for (auto& tok : s.tokens) {
      auto [prefix, entity] = detail::bio_parts(tok.ner);
      if (prefix == 'I') {
        auto [pprefix, pentity] = detail::bio_parts(prev);
        if (pprefix == 0 || pentity != entity) tok.ner = "B-" + entity;
      }
      prev = tok.ner;
    }
  }
  return corpus;
}

// ---------------------------------------------------------------------------
// Entity mapping

namespace detail {

inline std::string upper_ascii(std::string s) {
  for (char& c : s) {
    if (c >= 'a' && c <= 'z') c = static_cast<char>(c - 'a' + 'A');
  }
  return s;
}

}  // namespace detail

inline std::string map_tag(const std::string& tag, const std::set<std::string>& keep) {
  if (tag == "O") return tag;
  auto [prefix, entity] = detail::bio_parts(tag);
  if (prefix != 0) {
    if (entity.empty()) throw Error(ErrorKind::Mapping, "unknown tag format '" + tag + "'");
    std::string up = detail::upper_ascii(entity);
    return keep.contains(up) ? up : std::string("O");
  }
  // Already-mapped labels pass through, which makes the mapping idempotent.
  if (keep.contains(tag)) return tag;
  throw Error(ErrorKind::Mapping, "unknown tag format '" + tag + "'");
}

/// Collapses B-/I- to one upper-cased entity label and sends every entity
/// outside `keep` to "O".
inline Corpus map_entities(Corpus corpus, const std::set<std::string>& keep) {
  for (auto& s : corpus) {
    for (auto& tok : s.tokens) tok.ner = map_tag(tok.ner, keep);
  }
  return corpus;
}

inline std::map<std::string, std::size_t> label_histogram(const Corpus& corpus) {
  std::map<std::string, std::size_t> hist;
  for (const auto& s : corpus) {
    for (const auto& t : s.tokens) ++hist[t.ner];
  }
  return hist;
}

// ---------------------------------------------------------------------------
// Vocabulary

class Vocab {
 public:
  Vocab() = default;

  Vocab(std::vector<std::string> tokens, std::vector<std::string> tags)
      : idx_to_token_(std::move(tokens)), idx_to_tag_(std::move(tags)) {
    if (idx_to_token_.size() < 2 || idx_to_token_[kPadIndex] != kPadToken || idx_to_token_[kUnkIndex] != kUnkToken) {
      throw Error(ErrorKind::Config, "vocabulary must start with <PAD> and <UNK>");
    }
    for (std::size_t i = 0; i < idx_to_token_.size(); ++i) {
      if (!token_to_idx_.emplace(idx_to_token_[i], static_cast<int>(i)).second) {
        throw Error(ErrorKind::Config, "duplicate vocabulary token '" + idx_to_token_[i] + "'");
      }
    }
    for (std::size_t i = 0; i < idx_to_tag_.size(); ++i) {
      if (!tag_to_idx_.emplace(idx_to_tag_[i], static_cast<int>(i)).second) {
        throw Error(ErrorKind::Config, "duplicate tag '" + idx_to_tag_[i] + "'");
      }
    }
  }

  int pad_idx() const { return kPadIndex; }
  int unk_idx() const { return kUnkIndex; }
  std::size_t num_tokens() const { return idx_to_token_.size(); }
  std::size_t num_tags() const { return idx_to_tag_.size(); }

  int token_index(const std::string& word) const {
    auto it = token_to_idx_.find(word);
    // a literal "<PAD>" in the text must not alias the padding index
    return it == token_to_idx_.end() || it->second == kPadIndex ? kUnkIndex : it->second;
  }
  bool has_token(const std::string& word) const { return token_to_idx_.contains(word); }
  const std::string& token(int idx) const { return idx_to_token_.at(static_cast<std::size_t>(idx)); }

  int tag_index(const std::string& tag) const {
    auto it = tag_to_idx_.find(tag);
    if (it == tag_to_idx_.end()) throw Error(ErrorKind::Label, "tag '" + tag + "' is not in the tag inventory");
    return it->second;
  }
  bool has_tag(const std::string& tag) const { return tag_to_idx_.contains(tag); }
  const std::string& tag(int idx) const { return idx_to_tag_.at(static_cast<std::size_t>(idx)); }

  const std::vector<std::string>& tokens() const { return idx_to_token_; }
  const std::vector<std::string>& tags() const { return idx_to_tag_; }

 private:
  std::unordered_map<std::string, int> token_to_idx_;
  std::vector<std::string> idx_to_token_;
  std::unordered_map<std::string, int> tag_to_idx_;
  std::vector<std::string> idx_to_tag_;
};

/// PAD and UNK take indices 0 and 1; remaining words with count >= min_count
/// follow in descending frequency, ties broken lexicographically. Tags are
/// the sorted union of corpus tags and `extra_tags`.
inline Vocab build_vocab(const Corpus& corpus, std::size_t min_count = 1,
                         const std::set<std::string>& extra_tags = {}) {
  if (corpus.empty()) throw Error(ErrorKind::EmptyCorpus, "cannot build a vocabulary from an empty corpus");
  std::unordered_map<std::string, std::size_t> counts;
  std::set<std::string> tags = extra_tags;
  for (const auto& s : corpus) {
    for (const auto& t : s.tokens) {
      ++counts[t.word];
      tags.insert(t.ner);
    }
  }
  std::vector<std::pair<std::string, std::size_t>> ordered(counts.begin(), counts.end());
  std::sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  std::vector<std::string> tokens{std::string(kPadToken), std::string(kUnkToken)};
  for (auto& [word, count] : ordered) {
    if (count < min_count || word == kPadToken || word == kUnkToken) continue;
    tokens.push_back(word);
  }
  return Vocab(std::move(tokens), std::vector<std::string>(tags.begin(), tags.end()));
}

// One entry per line, line number = index.
inline std::string lines_to_text(const std::vector<std::string>& entries) {
  std::string out;
  for (const auto& e : entries) out += e + "\n";
  return out;
}

inline std::vector<std::string> text_to_lines(std::string_view content) {
  std::vector<std::string> out;
  for (auto line : detail::lines(content)) {
    std::string s(line);
    if (!s.empty() && s.back() == '\r') s.pop_back();
    out.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Split and batch

struct Split {
  Corpus train;
  Corpus valid;
};

/// Seeded shuffle, then the first floor(ratio * N) sentences go to train.
/// Each part keeps the original corpus order.
inline Split split(const Corpus& corpus, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw Error(ErrorKind::Split, "ratio must lie in (0, 1)");
  if (corpus.size() < 2) throw Error(ErrorKind::Split, "need at least 2 sentences to split");
  std::vector<std::size_t> order(corpus.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Pcg32 rng(seed, 0x5eedULL);
  rng.shuffle(order);
  auto n_train = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(corpus.size())));
  std::vector<std::size_t> train_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::size_t> valid_idx(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(valid_idx.begin(), valid_idx.end());
  Split out;
  for (auto i : train_idx) out.train.push_back(corpus[i]);
  for (auto i : valid_idx) out.valid.push_back(corpus[i]);
  return out;
}

struct IntMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<int> data;

  IntMatrix() = default;
  IntMatrix(std::size_t r, std::size_t c, int fill) : rows(r), cols(c), data(r * c, fill) {}

  int& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  int at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

struct Batch {
  IntMatrix input_ids;
  IntMatrix label_ids;
  std::vector<std::size_t> lengths;
  std::vector<std::size_t> sentence_ids;

  std::size_t size() const { return lengths.size(); }
  std::size_t maxlen() const { return input_ids.cols; }
};

/// Pads inputs with pad_idx and labels with -1. Tags missing from the
/// vocabulary are a label error; with `truncate` longer sentences are cut.
inline Batch pad_batch(const std::vector<const Sentence*>& sentences, const Vocab& vocab, std::size_t maxlen,
                       bool truncate = false) {
  Batch b;
  b.input_ids = IntMatrix(sentences.size(), maxlen, vocab.pad_idx());
  b.label_ids = IntMatrix(sentences.size(), maxlen, kIgnoreLabel);
  for (std::size_t r = 0; r < sentences.size(); ++r) {
    const Sentence& s = *sentences[r];
    if (s.size() > maxlen && !truncate) {
      throw Error(ErrorKind::Length, "sentence " + std::to_string(s.id) + " has " + std::to_string(s.size()) +
                                         " tokens, more than maxlen " + std::to_string(maxlen));
    }
    std::size_t len = std::min(s.size(), maxlen);
    for (std::size_t t = 0; t < len; ++t) {
      b.input_ids.at(r, t) = vocab.token_index(s.tokens[t].word);
      b.label_ids.at(r, t) = vocab.tag_index(s.tokens[t].ner);
    }
    b.lengths.push_back(len);
    b.sentence_ids.push_back(s.id);
  }
  return b;
}

inline Batch pad_batch(const Corpus& sentences, const Vocab& vocab, std::size_t maxlen, bool truncate = false) {
  std::vector<const Sentence*> ptrs;
  for (const auto& s : sentences) ptrs.push_back(&s);
  return pad_batch(ptrs, vocab, maxlen, truncate);
}

}  // namespace tagforge::corpus
