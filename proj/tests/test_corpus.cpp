#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "support/synthetic.hpp"
#include "tagforge/corpus.hpp"

using namespace tagforge;
using namespace tagforge::corpus;

namespace {

ErrorKind kind_of(const std::function<void()>& fn, std::string* message = nullptr) {
  try {
    fn();
  } catch (const Error& e) {
    if (message) *message = e.what();
    return e.kind();
  }
  FAIL("expected tagforge::Error");
  return ErrorKind::Io;
}

std::vector<std::string> tags_of(const Sentence& s) {
  std::vector<std::string> out;
  for (const auto& t : s.tokens) out.push_back(t.ner);
  return out;
}

Sentence tagged(const std::vector<std::string>& tags, std::size_t id = 0) {
  Sentence s{id, {}};
  for (std::size_t i = 0; i < tags.size(); ++i) s.tokens.push_back({"w" + std::to_string(i), "NN", tags[i]});
  return s;
}

}  // namespace

TEST_CASE("rows are grouped by the forward-filled sentence marker", "[corpus][csv]") {
  auto c = parse_gmb_csv("Sentence #,Word,POS,Tag\nSentence: 1,Alice,NNP,B-per\n,went,VBD,O\n");
  REQUIRE(c.size() == 1);
  CHECK(c[0].tokens == std::vector<Token>{{"Alice", "NNP", "B-per"}, {"went", "VBD", "O"}});

  auto c2 = parse_gmb_csv(
      "Sentence #,Word,POS,Tag\nSentence: 1,a,DT,O\n,b,NN,O\n,c,NN,O\nSentence: 2,d,NN,O\n,e,NN,O\n");
  CHECK(c2.size() == 2);
  CHECK(token_count(c2) == 5);
  CHECK(c2[0].id == 0);
  CHECK(c2[1].id == 1);
}

TEST_CASE("header columns are located by name and quoted fields are honored", "[corpus][csv]") {
  auto c = parse_gmb_csv("tag,Word,sentence #,POS\r\nO,\"a, b\",Sentence: 9,NN\r\nB-geo,\"say \"\"x\"\"\",,NNP\r\n");
  REQUIRE(c.size() == 1);
  CHECK(c[0].tokens[0] == Token{"a, b", "NN", "O"});
  CHECK(c[0].tokens[1] == Token{"say \"x\"", "NNP", "B-geo"});
}

TEST_CASE("a bare zero tag reads as the outside tag", "[corpus][csv]") {
  auto c = parse_gmb_csv("Sentence #,Word,POS,Tag\nSentence: 1,Hi,UH,0\n,Bob,NNP,B-per\n");
  CHECK(c[0].tokens[0].ner == "O");
  CHECK(parse_conll("Hi UH 0\nBob NNP B-per\n")[0].tokens[0].ner == "O");
  CHECK(normalize_tag("B-per") == "B-per");
}

TEST_CASE("loader errors name the problem", "[corpus][csv]") {
  std::string msg;
  CHECK(kind_of([] { parse_gmb_csv("Sentence #,Word,Tag\nSentence: 1,a,O\n"); }, &msg) == ErrorKind::Schema);
  CHECK(msg.find("POS") != std::string::npos);
  CHECK(kind_of([] { parse_gmb_csv(""); }) == ErrorKind::EmptyCorpus);
  CHECK(kind_of([] { parse_gmb_csv("Sentence #,Word,POS,Tag\n"); }) == ErrorKind::EmptyCorpus);
  CHECK(kind_of([] { parse_gmb_csv("Sentence #,Word,POS,Tag\nSentence: 1,a,DT,O\n,,NN,O\n"); }, &msg) ==
        ErrorKind::MalformedRow);
  CHECK(msg.find("line 3") != std::string::npos);
  CHECK(kind_of([] { parse_gmb_csv("Sentence #,Word,POS,Tag\n,a,DT,O\n"); }) == ErrorKind::MalformedRow);
  CHECK(kind_of([] { parse_gmb_csv("Sentence #,Word,POS,Tag\nSentence: 1,\"a,DT,O\n"); }) == ErrorKind::MalformedRow);
}

TEST_CASE("Latin-1 bytes decode through the fallback", "[corpus][csv]") {
  const std::string bytes = "Sentence #,Word,POS,Tag\nSentence: 1,Pel\xE9,NNP,B-per\n";
  auto c = parse_gmb_csv(decode_text(bytes));
  CHECK(c[0].tokens[0].word == "Pel\xC3\xA9");
  // Valid UTF-8 is left alone.
  auto u = parse_gmb_csv(decode_text("Sentence #,Word,POS,Tag\nSentence: 1,Pel\xC3\xA9,NNP,B-per\n"));
  CHECK(u[0].tokens[0].word == "Pel\xC3\xA9");
}

TEST_CASE("fixture file loads with row-count conservation", "[corpus][csv]") {
  const std::string path = std::string(TAGFORGE_TEST_DATA) + "/toy_gmb.csv";
  auto c = load_gmb_csv(path);
  REQUIRE(c.size() == 3);
  std::size_t rows = 0;
  {
    auto text = decode_text(read_file_bytes(path));
    rows = static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')) - 1;
  }
  CHECK(token_count(c) == rows);
  CHECK(c[1].tokens[3].word == "Pel\xC3\xA9");
  CHECK(c[1].tokens[5].word == "Washington, D.C.");
  CHECK(kind_of([] { load_gmb_csv("/nonexistent/file.csv"); }) == ErrorKind::Io);
}

TEST_CASE("synthetic CSV round-trips through the loader", "[corpus][csv]") {
  auto c = testing::synthetic_corpus(120, 5);
  auto back = parse_gmb_csv(testing::to_gmb_csv(c));
  REQUIRE(back.size() == c.size());
  for (std::size_t i = 0; i < c.size(); ++i) CHECK(back[i].tokens == c[i].tokens);
}

TEST_CASE("CoNLL text round-trips with sentence ids", "[corpus][conll]") {
  auto c = testing::synthetic_corpus(20, 6);
  for (auto& s : c) s.id *= 7;
  auto back = parse_conll(to_conll(c));
  CHECK(back == c);
  auto plain = parse_conll("# a comment\nAlice NNP B-per\n\n\nwent VBD O\n# NN O\n");
  REQUIRE(plain.size() == 2);
  CHECK(plain[1].tokens[1].word == "#");
  CHECK(kind_of([] { parse_conll("a b\n"); }) == ErrorKind::MalformedRow);
  CHECK(kind_of([] { parse_conll("\n\n"); }) == ErrorKind::EmptyCorpus);
}

TEST_CASE("BIO violations are found and repaired", "[corpus][bio]") {
  Corpus c = {tagged({"O", "I-geo"}, 1), tagged({"B-per", "I-per"}, 2), tagged({"B-per", "I-geo"}, 3),
              tagged({"I-tim", "I-tim"}, 4)};
  auto v = validate_bio(c);
  REQUIRE(v.size() == 3);
  CHECK((v[0].sentence_id == 1 && v[0].position == 1));
  CHECK((v[1].sentence_id == 3 && v[1].position == 1));
  CHECK((v[2].sentence_id == 4 && v[2].position == 0));
  auto r = repair_bio(c);
  CHECK(tags_of(r[0]) == std::vector<std::string>{"O", "B-geo"});
  CHECK(tags_of(r[1]) == std::vector<std::string>{"B-per", "I-per"});
  CHECK(tags_of(r[2]) == std::vector<std::string>{"B-per", "B-geo"});
  CHECK(tags_of(r[3]) == std::vector<std::string>{"B-tim", "I-tim"});
  CHECK(validate_bio(r).empty());
}

TEST_CASE("entity mapping collapses BIO and drops unkept entities", "[corpus][map]") {
  const std::set<std::string> keep = {"PER", "GPE"};
  Corpus c = {tagged({"B-per", "I-per", "O", "B-geo"}), tagged({"B-gpe"})};
  auto m = map_entities(c, keep);
  CHECK(tags_of(m[0]) == std::vector<std::string>{"PER", "PER", "O", "O"});
  CHECK(tags_of(m[1]) == std::vector<std::string>{"GPE"});
  CHECK(tags_of(map_entities(c, {})[0]) == std::vector<std::string>{"O", "O", "O", "O"});
  CHECK(map_entities(Corpus{}, keep).empty());
  std::string msg;
  CHECK(kind_of([&] { map_entities({tagged({"X-per"})}, keep); }, &msg) == ErrorKind::Mapping);
  CHECK(msg.find("X-per") != std::string::npos);
}

TEST_CASE("entity mapping is idempotent", "[corpus][map][property]") {
  auto c = testing::synthetic_corpus(200, 8);
  for (const auto& keep : std::vector<std::set<std::string>>{{"PER", "GPE"}, {}, {"GEO", "ORG", "TIM"}}) {
    auto once = map_entities(c, keep);
    CHECK(map_entities(once, keep) == once);
  }
}

TEST_CASE("vocabulary ordering and thresholds", "[corpus][vocab]") {
  Corpus c = {Sentence{0, {{"a", "DT", "O"}, {"b", "NN", "B-geo"}, {"a", "DT", "O"}}},
              Sentence{1, {{"a", "DT", "O"}, {"c", "NN", "O"}, {"c", "NN", "B-per"}}}};
  auto v = build_vocab(c, 2);
  CHECK(v.tokens() == std::vector<std::string>{"<PAD>", "<UNK>", "a", "c"});
  CHECK(v.token_index("b") == kUnkIndex);
  CHECK(v.token_index("<PAD>") == kUnkIndex);
  CHECK(v.tags() == std::vector<std::string>{"B-geo", "B-per", "O"});

  auto v1 = build_vocab(c, 1);
  CHECK(v1.tokens() == std::vector<std::string>{"<PAD>", "<UNK>", "a", "c", "b"});
  Corpus tie = {Sentence{0, {{"zeta", "NN", "O"}, {"beta", "NN", "O"}, {"eta", "NN", "O"}, {"eta", "NN", "O"}}}};
  CHECK(build_vocab(tie).tokens() == std::vector<std::string>{"<PAD>", "<UNK>", "eta", "beta", "zeta"});
  for (std::size_t i = 2; i < v1.num_tokens(); ++i) {
    CHECK(v1.token_index(v1.token(static_cast<int>(i))) == static_cast<int>(i));
  }
  for (std::size_t i = 0; i < v1.num_tags(); ++i) CHECK(v1.tag_index(v1.tag(static_cast<int>(i))) == static_cast<int>(i));
  CHECK(kind_of([&] { v1.tag_index("B-art"); }) == ErrorKind::Label);
  CHECK(kind_of([] { build_vocab({}); }) == ErrorKind::EmptyCorpus);
  CHECK(build_vocab(c, 1, {"B-art"}).has_tag("B-art"));
}

TEST_CASE("vocabulary is rebuilt from its text form", "[corpus][vocab]") {
  auto v = build_vocab(testing::synthetic_corpus(50, 2));
  Vocab back(text_to_lines(lines_to_text(v.tokens())), text_to_lines(lines_to_text(v.tags())));
  CHECK(back.tokens() == v.tokens());
  CHECK(back.tags() == v.tags());
  CHECK(kind_of([] { Vocab({"a", "b"}, {}); }) == ErrorKind::Config);
}

TEST_CASE("split sizes, determinism and coverage", "[corpus][split]") {
  auto c = testing::synthetic_corpus(10, 1);
  auto s = split(c, 0.8, 3);
  CHECK(s.train.size() == 8);
  CHECK(s.valid.size() == 2);
  auto again = split(c, 0.8, 3);
  CHECK(again.train == s.train);
  CHECK(again.valid == s.valid);

  auto big = testing::synthetic_corpus(503, 2);
  auto p = split(big, 0.8, 11);
  CHECK(p.train.size() == 402);
  std::multiset<std::size_t> ids;
  for (const auto& x : p.train) ids.insert(x.id);
  for (const auto& x : p.valid) ids.insert(x.id);
  std::multiset<std::size_t> orig;
  for (const auto& x : big) orig.insert(x.id);
  CHECK(ids == orig);
  CHECK(split(big, 0.8, 12).train != p.train);

  CHECK(kind_of([] { split(testing::synthetic_corpus(1, 1), 0.8, 0); }) == ErrorKind::Split);
  CHECK(kind_of([&] { split(c, 1.0, 0); }) == ErrorKind::Split);
  CHECK(kind_of([&] { split(c, 0.0, 0); }) == ErrorKind::Split);
}

TEST_CASE("padding fills inputs with pad and labels with -1", "[corpus][batch]") {
  Corpus c = {tagged({"O", "B-geo", "O"}, 4), tagged({"O", "O", "B-per", "I-per", "O"}, 5)};
  auto v = build_vocab(c);
  auto b = pad_batch(c, v, 5);
  CHECK(b.lengths == std::vector<std::size_t>{3, 5});
  for (std::size_t p = 3; p < 5; ++p) {
    CHECK(b.input_ids.at(0, p) == v.pad_idx());
    CHECK(b.label_ids.at(0, p) == -1);
  }
  for (std::size_t p = 0; p < 5; ++p) CHECK(b.label_ids.at(1, p) >= 0);

  std::string msg;
  CHECK(kind_of([&] { pad_batch(c, v, 4); }, &msg) == ErrorKind::Length);
  CHECK(msg.find("sentence 5") != std::string::npos);
  auto t = pad_batch(c, v, 4, true);
  CHECK(t.lengths == std::vector<std::size_t>{3, 4});
}

TEST_CASE("batch masks are complementary", "[corpus][batch][property]") {
  auto c = testing::synthetic_corpus(64, 12);
  auto v = build_vocab(c);
  std::size_t maxlen = 0;
  for (const auto& s : c) maxlen = std::max(maxlen, s.size());
  auto b = pad_batch(c, v, maxlen + 3);
  for (std::size_t r = 0; r < b.size(); ++r) {
    for (std::size_t p = 0; p < b.maxlen(); ++p) {
      const bool pad_in = b.input_ids.at(r, p) == v.pad_idx();
      const bool pad_lab = b.label_ids.at(r, p) == -1;
      const bool beyond = p >= b.lengths[r];
      CHECK(pad_in == beyond);
      CHECK(pad_lab == beyond);
    }
  }
}
