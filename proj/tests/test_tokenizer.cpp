#include <catch2/catch_amalgamated.hpp>

#include <functional>
#include <string>
#include <vector>

#include "support/synthetic.hpp"
#include "tagforge/tokenizer.hpp"

using namespace tagforge;
using namespace tagforge::tokenizer;

namespace {

WordPieceVocab toy_vocab() {
  return WordPieceVocab({"[PAD]", "[UNK]", "[CLS]", "[MASK]", "sat", "##urday", "s", "a", "t", "##u", "##r", "##d",
                         "##a", "##y", "china", "to", "go"});
}

std::vector<std::string> pieces_of(const std::vector<int>& ids, const WordPieceVocab& v) {
  std::vector<std::string> out;
  for (int id : ids) out.push_back(v.piece(id));
  return out;
}

std::string join_pieces(const std::vector<int>& ids, const WordPieceVocab& v) {
  std::string out;
  for (int id : ids) {
    const std::string& p = v.piece(id);
    out += p.rfind("##", 0) == 0 ? p.substr(2) : p;
  }
  return out;
}

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected tagforge::Error");
  return ErrorKind::Io;
}

}  // namespace

TEST_CASE("greedy longest match", "[tokenizer][wordpiece]") {
  auto v = toy_vocab();
  CHECK(pieces_of(wordpiece_tokenize("saturday", v), v) == std::vector<std::string>{"sat", "##urday"});
  CHECK(pieces_of(wordpiece_tokenize("china", v), v) == std::vector<std::string>{"china"});
  CHECK(pieces_of(wordpiece_tokenize("sad", v), v) == std::vector<std::string>{"s", "##a", "##d"});
  CHECK(wordpiece_tokenize("qx", v) == std::vector<int>{v.unk_id()});
  // A missing continuation piece makes the whole word [UNK], not a partial split.
  CHECK(wordpiece_tokenize("satq", v) == std::vector<int>{v.unk_id()});
  CHECK(kind_of([&] { wordpiece_tokenize("", v); }) == ErrorKind::Contract);
}

TEST_CASE("vocab specials and file form", "[tokenizer][vocab]") {
  auto v = toy_vocab();
  CHECK(v.pad_id() == 0);
  CHECK(v.unk_id() == 1);
  CHECK(v.cls_id() == 2);
  CHECK(v.mask_id() == 3);
  auto back = WordPieceVocab::from_text(v.to_text());
  CHECK(back.pieces() == v.pieces());
  CHECK(kind_of([] { WordPieceVocab({"[UNK]", "[PAD]", "[CLS]", "[MASK]"}); }) == ErrorKind::Config);
  CHECK(kind_of([] { WordPieceVocab({"[PAD]", "[UNK]", "[CLS]"}); }) == ErrorKind::Config);
  CHECK(kind_of([] { WordPieceVocab({"[PAD]", "[UNK]", "[CLS]", "[MASK]", "a", "a"}); }) == ErrorKind::Config);
}

TEST_CASE("encoding prepends CLS, propagates labels and marks first pieces active", "[tokenizer][encode]") {
  auto v = toy_vocab();
  std::vector<int> labels = {7};
  auto e = encode_sentence({"Saturday"}, &labels, v, EncodeOptions{5});
  CHECK(pieces_of(e.encoding.ids, v) == std::vector<std::string>{"[CLS]", "sat", "##urday", "[PAD]", "[PAD]"});
  CHECK(e.subword_labels == std::vector<int>{-1, 7, 7, -1, -1});
  CHECK(e.encoding.active == std::vector<bool>{false, true, false, false, false});
  CHECK(e.encoding.word_index == std::vector<int>{-1, 0, 0, -1, -1});
  CHECK(e.encoding.length == 3);

  auto single = encode_sentence({"go", "to", "China"}, nullptr, v, EncodeOptions{6});
  CHECK(single.encoding.active == std::vector<bool>{false, true, true, true, false, false});
  CHECK(single.subword_labels.empty());
}

TEST_CASE("encoding errors", "[tokenizer][encode]") {
  auto v = toy_vocab();
  std::vector<int> two = {1, 2};
  CHECK(kind_of([&] { encode_sentence({"go"}, &two, v, {}); }) == ErrorKind::Alignment);
  CHECK(kind_of([&] { encode_sentence({"saturday", "go"}, nullptr, v, EncodeOptions{3}); }) == ErrorKind::Length);
  CHECK(kind_of([&] { encode_sentence({}, nullptr, v, {}); }) == ErrorKind::Contract);
  // Truncation drops whole trailing words.
  auto t = encode_sentence({"go", "saturday"}, nullptr, v, EncodeOptions{3, true});
  CHECK(t.encoding.length == 2);
  CHECK(t.encoding.num_words == 2);
}

TEST_CASE("recombination takes each word's first piece", "[tokenizer][recombine]") {
  auto v = toy_vocab();
  auto e = encode_sentence({"Saturday", "go"}, nullptr, v, EncodeOptions{6});
  std::vector<std::string> sub = {"-", "B-tim", "O", "B-geo", "-", "-"};
  CHECK(recombine_predictions(e.encoding, sub) == std::vector<std::string>{"B-tim", "B-geo"});
  std::vector<std::string> unpadded(sub.begin(), sub.begin() + 4);
  CHECK(recombine_predictions(e.encoding, unpadded) == std::vector<std::string>{"B-tim", "B-geo"});
  CHECK(kind_of([&] { recombine_predictions(e.encoding, std::vector<std::string>{"-", "x"}); }) ==
        ErrorKind::Alignment);
  auto t = encode_sentence({"go", "saturday"}, nullptr, v, EncodeOptions{3, true});
  CHECK(recombine_predictions(t.encoding, std::vector<std::string>{"-", "B-per", "-"}, std::string("O")) ==
        std::vector<std::string>{"B-per", "O"});
}

TEST_CASE("single-piece sentences recombine to the word-position tags", "[tokenizer][recombine]") {
  auto v = toy_vocab();
  auto e = encode_sentence({"go", "to", "china"}, nullptr, v, EncodeOptions{4});
  std::vector<int> tags = {9, 1, 2, 3};
  CHECK(recombine_predictions(e.encoding, tags) == std::vector<int>{1, 2, 3});
}

TEST_CASE("thirteen-word sentence yields thirteen tags", "[tokenizer][recombine]") {
  corpus::Sentence s;
  const std::vector<std::string> w13 = {"Alice",  "will",  "go", "to",  "China", "this", "Saturday!",
                                        "Her",    "father", "works", "in", "WHO", "."};
  for (const auto& w : w13) s.tokens.push_back({w, "NN", "O"});
  auto v = build_wordpiece_vocab({s}, 3);
  auto e = encode_sentence(w13, nullptr, v, EncodeOptions{64});
  std::vector<int> tags(e.encoding.ids.size(), 0);
  CHECK(recombine_predictions(e.encoding, tags).size() == 13);
  std::size_t active = 0;
  for (bool a : e.encoding.active) active += a;
  CHECK(active == 13);
}

TEST_CASE("built vocab covers every corpus word", "[tokenizer][vocab][property]") {
  auto c = testing::synthetic_corpus(300, 4);
  c.push_back(corpus::Sentence{999, {{"Pel\xC3\xA9", "NNP", "B-per"}, {"\xC3\x89tat", "NN", "O"}}});
  auto v = build_wordpiece_vocab(c, 20);
  for (const auto& s : c) {
    for (const auto& t : s.tokens) {
      auto ids = wordpiece_tokenize(text::lower(t.word), v);
      CHECK(join_pieces(ids, v) == text::lower(t.word));
    }
  }
  CHECK(build_wordpiece_vocab(c, 20).pieces() == v.pieces());
}

TEST_CASE("encoding invariants on random sentences", "[tokenizer][property]") {
  auto c = testing::synthetic_corpus(200, 17);
  auto v = build_wordpiece_vocab(c, 10);
  for (const auto& s : c) {
    std::vector<std::string> words;
    for (const auto& t : s.tokens) words.push_back(t.word);
    auto e = encode_sentence(words, nullptr, v, EncodeOptions{256}).encoding;
    REQUIRE(e.ids[0] == v.cls_id());
    CHECK(e.word_index[0] == -1);
    CHECK_FALSE(e.active[0]);
    for (std::size_t w = 0; w < words.size(); ++w) {
      std::size_t first = 0, last = 0, count = 0, actives = 0;
      for (std::size_t p = 0; p < e.ids.size(); ++p) {
        if (e.word_index[p] != static_cast<int>(w)) continue;
        if (count == 0) first = p;
        last = p;
        ++count;
        actives += e.active[p];
      }
      CHECK(last - first + 1 == count);
      CHECK(actives == 1);
      CHECK(e.active[first]);
    }
    for (std::size_t p = e.length; p < e.ids.size(); ++p) {
      CHECK(e.ids[p] == v.pad_id());
      CHECK(e.word_index[p] == -1);
      CHECK_FALSE(e.active[p]);
    }
  }
}

TEST_CASE("format lists non-pad positions", "[tokenizer][format]") {
  auto v = toy_vocab();
  auto e = encode_sentence({"Saturday"}, nullptr, v, EncodeOptions{5});
  CHECK(format_encoding(e.encoding, v) == "2\t[CLS]\t-1\t0\n4\tsat\t0\t1\n5\t##urday\t0\t0\n");
}
