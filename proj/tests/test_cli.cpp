#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "support/synthetic.hpp"
#include "tagforge/cli.hpp"
#include "tagforge/container.hpp"
#include "tagforge/experiment.hpp"

using namespace tagforge;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code = 0;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "tagforge");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Result r;
  // Library warnings go to std::cerr; capture them with the command's own diagnostics.
  auto* saved = std::cerr.rdbuf(err.rdbuf());
  r.code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  std::cerr.rdbuf(saved);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  out << s;
}

fs::path workdir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("tagforge_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

fs::path synthetic_csv(const fs::path& dir, std::size_t n, std::uint64_t seed = 3) {
  auto path = dir / "toy.csv";
  spit(path, testing::to_gmb_csv(testing::synthetic_corpus(n, seed)));
  return path;
}

// Small neural configs so every kind trains in well under a second.
fs::path toy_config(const fs::path& dir, const std::string& model) {
  nlohmann::json j = {{"model", model},
                      {"transformer", {{"emb_dim", 8}, {"num_heads", 2}, {"num_layers", 1}, {"ffn_dim", 16}}},
                      {"bilstm", {{"emb_dim", 8}, {"units", 6}}},
                      {"bertlike", {{"num_layers", 1}, {"hidden", 8}, {"num_heads", 2}, {"ffn_dim", 16}, {"maxlen", 64}}},
                      {"wordpiece_words", 40},
                      {"crf", {{"epochs", 3}}},
                      {"train", {{"epochs", 2}, {"batch_size", 8}, {"lr", 0.01}}}};
  auto path = dir / (model + ".json");
  spit(path, j.dump(2));
  return path;
}

}  // namespace

TEST_CASE("prepare writes split snapshots deterministically", "[cli]") {
  auto dir = workdir("prepare");
  auto csv = synthetic_csv(dir, 100);
  auto a = run({"prepare", "-d", csv.string(), "-o", (dir / "a").string(), "--seed", "4", "--ratio", "0.8"});
  REQUIRE(a.code == 0);
  CHECK(a.out.find("train=80 valid=20") != std::string::npos);
  auto train = corpus::load_conll((dir / "a" / "train.snap").string());
  auto valid = corpus::load_conll((dir / "a" / "valid.snap").string());
  CHECK(train.size() == 80);
  CHECK(valid.size() == 20);
  auto b = run({"prepare", "-d", csv.string(), "-o", (dir / "b").string(), "--seed", "4"});
  REQUIRE(b.code == 0);
  for (const char* f : {"train.snap", "valid.snap", "vocab.txt", "wordpiece.txt"}) {
    CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));
  }
}

TEST_CASE("entity mapping keeps only the requested types", "[cli]") {
  auto dir = workdir("keep");
  auto csv = synthetic_csv(dir, 60);
  auto r = run({"prepare", "-d", csv.string(), "-o", dir.string(), "--seed", "1", "--keep", "PER,GPE"});
  REQUIRE(r.code == 0);
  auto report = nlohmann::json::parse(slurp(dir / "prep_report.json"));
  for (const auto& [tag, n] : report.at("label_histogram").items()) {
    INFO(tag);
    CHECK((tag == "O" || tag == "PER" || tag == "GPE"));
  }
}

TEST_CASE("a seed is mandatory", "[cli]") {
  auto dir = workdir("seed");
  auto csv = synthetic_csv(dir, 20);
  auto r = run({"prepare", "-d", csv.string(), "-o", dir.string()});
  CHECK(r.code == cli::kExitUsage);
  CHECK(r.out.empty());
  CHECK(r.err.find("seed") != std::string::npos);
}

TEST_CASE("bad arguments and unknown config keys fail with usage errors", "[cli]") {
  CHECK(run({}).code == cli::kExitUsage);
  CHECK(run({"frobnicate"}).code == cli::kExitUsage);
  auto dir = workdir("badcfg");
  spit(dir / "c.json", R"({"seed": 1, "epochz": 3})");
  auto r = run({"train", "-c", (dir / "c.json").string()});
  CHECK(r.code == cli::kExitUsage);
  CHECK(r.err.find("epochz") != std::string::npos);
}

TEST_CASE("crf training emits checkpoints, trace and best model", "[cli]") {
  auto dir = workdir("crf");
  auto csv = synthetic_csv(dir, 50);
  auto r = run({"train", "-d", csv.string(), "-o", (dir / "run").string(), "-m", "crf", "--seed", "2", "--epochs", "4"});
  REQUIRE(r.code == 0);
  CHECK(fs::exists(dir / "run" / "best.model"));
  for (int e = 1; e <= 4; ++e) CHECK(fs::exists(dir / "run" / ("epoch-00" + std::to_string(e) + ".model")));
  auto trace = eval::read_curve_csv((dir / "run" / "trace.csv").string());
  CHECK(trace.size() == 4);
  std::istringstream lines(r.out);
  std::string line;
  int epoch_lines = 0;
  while (std::getline(lines, line)) epoch_lines += line.starts_with("epoch=");
  CHECK(epoch_lines == 4);
  // best.model is the min-valid-loss checkpoint.
  const auto best = eval::analyze_curve(trace).checkpoint;
  char name[32];
  std::snprintf(name, sizeof name, "epoch-%03zu.model", best);
  CHECK(slurp(dir / "run" / "best.model") == slurp(dir / "run" / name));

  SECTION("eval on the training file") {
    auto e = run({"eval", (dir / "run" / "best.model").string(), csv.string(), "-o", (dir / "eval").string()});
    REQUIRE(e.code == 0);
    auto report = eval::report_from_json(nlohmann::json::parse(slurp(dir / "eval" / "report.json")));
    CHECK(eval::to_json(report) == nlohmann::json::parse(slurp(dir / "eval" / "report.json")));
    CHECK(report.total_tokens == corpus::token_count(corpus::load_any(csv.string())));
    CHECK(slurp(dir / "eval" / "confusion.csv").starts_with("true\\pred,"));
    auto x = run({"eval", (dir / "run" / "best.model").string(), csv.string(), "--exclude-O", "-o", (dir / "eval2").string()});
    REQUIRE(x.code == 0);
    auto a = nlohmann::json::parse(slurp(dir / "eval" / "report.json"));
    auto b = nlohmann::json::parse(slurp(dir / "eval2" / "report.json"));
    CHECK(a.at("labels") == b.at("labels"));
    CHECK(a.at("flat_f1") != b.at("flat_f1"));
  }

  SECTION("inspect-transitions prints two blocks of k rows") {
    auto t = run({"inspect-transitions", (dir / "run" / "best.model").string(), "-k", "10"});
    REQUIRE(t.code == 0);
    std::istringstream in(t.out);
    std::string l;
    int arrows = 0;
    while (std::getline(in, l)) arrows += l.find("\xe2\x86\x92") != std::string::npos;
    CHECK(arrows == 20);
  }

  SECTION("curves reads the trace") {
    auto c = run({"curves", (dir / "run" / "trace.csv").string(), "--json", (dir / "curves.json").string()});
    REQUIRE(c.code == 0);
    CHECK(c.out.find("recommended checkpoint: epoch " + std::to_string(best)) != std::string::npos);
    CHECK(nlohmann::json::parse(slurp(dir / "curves.json")).at("checkpoint") == best);
  }
}

TEST_CASE("separable training data evaluates to F1 1", "[cli]") {
  auto dir = workdir("separable");
  std::string csv = "Sentence #,Word,POS,Tag\n";
  for (int i = 1; i <= 30; ++i) {
    csv += "Sentence: " + std::to_string(i) + ",Paris,NNP,B-geo\n";
    csv += ",likes,VBZ,O\n";
    csv += ",Bob,NNP,B-per\n";
  }
  spit(dir / "sep.csv", csv);
  REQUIRE(run({"train", "-d", (dir / "sep.csv").string(), "-o", (dir / "run").string(), "--seed", "1", "--epochs", "20"})
              .code == 0);
  auto e = run({"eval", (dir / "run" / "best.model").string(), (dir / "sep.csv").string(), "-o", dir.string()});
  REQUIRE(e.code == 0);
  CHECK(nlohmann::json::parse(slurp(dir / "report.json")).at("flat_f1") == 1.0);
}

TEST_CASE("predict tags one line per word and warns on empty lines", "[cli]") {
  auto dir = workdir("predict");
  auto csv = synthetic_csv(dir, 40);
  REQUIRE(run({"train", "-d", csv.string(), "-o", dir.string(), "--seed", "1", "--epochs", "3"}).code == 0);
  spit(dir / "in.txt", "Alice will go to China this Saturday! Her father works in WHO .\n\nBob\n");
  auto p = run({"predict", (dir / "best.model").string(), (dir / "in.txt").string()});
  REQUIRE(p.code == 0);
  std::istringstream in(p.out);
  std::vector<std::vector<std::string>> blocks(1);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) {
      blocks.emplace_back();
    } else {
      blocks.back().push_back(line);
    }
  }
  blocks.pop_back();
  REQUIRE(blocks.size() == 3);
  CHECK(blocks[0].size() == 13);
  CHECK(blocks[0][4].starts_with("China\t"));
  CHECK(blocks[1].empty());
  CHECK(blocks[2].size() == 1);
  CHECK(p.err.find("empty") != std::string::npos);
  CHECK(run({"predict", (dir / "best.model").string(), (dir / "in.txt").string()}).out == p.out);
}

TEST_CASE("inspect-transitions rejects non-crf models", "[cli]") {
  auto dir = workdir("inspect");
  auto csv = synthetic_csv(dir, 30);
  REQUIRE(run({"train", "-c", toy_config(dir, "bilstm").string(), "-d", csv.string(), "-o", dir.string(), "--seed", "1"})
              .code == 0);
  auto r = run({"inspect-transitions", (dir / "best.model").string()});
  CHECK(r.code != 0);
  CHECK(r.err.find("crf") != std::string::npos);
  CHECK(r.out.empty());
}

TEST_CASE("training twice gives byte-identical outputs for every model kind", "[cli][determinism]") {
  for (const std::string kind : {"crf", "transformer", "bilstm", "bertlike"}) {
    INFO(kind);
    auto dir = workdir("det_" + kind);
    auto csv = synthetic_csv(dir, 40);
    auto cfg = toy_config(dir, kind);
    for (const char* sub : {"a", "b"}) {
      REQUIRE(run({"train", "-c", cfg.string(), "-d", csv.string(), "-o", (dir / sub).string(), "--seed", "9"}).code == 0);
    }
    CHECK(slurp(dir / "a" / "trace.csv") == slurp(dir / "b" / "trace.csv"));
    CHECK(slurp(dir / "a" / "best.model") == slurp(dir / "b" / "best.model"));
    CHECK(slurp(dir / "a" / "epoch-001.model") == slurp(dir / "b" / "epoch-001.model"));
  }
}

TEST_CASE("model containers round-trip bit-exactly", "[cli][container]") {
  auto dir = workdir("roundtrip");
  auto csv = synthetic_csv(dir, 30);
  for (const std::string kind : {"crf", "transformer", "bilstm", "bertlike"}) {
    INFO(kind);
    REQUIRE(run({"train", "-c", toy_config(dir, kind).string(), "-d", csv.string(), "-o", (dir / kind).string(), "--seed",
                 "5", "--keep-best-only"})
                .code == 0);
    CHECK_FALSE(fs::exists(dir / kind / "epoch-001.model"));
    const auto bytes = slurp(dir / kind / "best.model");
    auto c = container::deserialize(bytes);
    CHECK(c.kind == kind);
    CHECK(container::serialize(c) == bytes);
    auto m = experiment::from_container(c);
    CHECK(container::serialize(experiment::to_container(m)) == bytes);
    CHECK(m.config == c.config);
  }
}

TEST_CASE("container layout and defects", "[container]") {
  container::Container c;
  c.kind = "crf";
  c.config = {{"x", 1}};
  c.tensors.push_back({"a", numgrad::Tensor(numgrad::Shape{2, 3}, {1, 2, 3, 4, 5, -0.0})});
  c.tensors.push_back({"b", numgrad::Tensor(numgrad::Shape{2}, {std::nan(""), 1e-310})});
  const auto bytes = container::serialize(c);
  CHECK(bytes.substr(0, 4) == "TGFG");
  CHECK(bytes[4] == 1);
  const std::uint64_t manifest_len = container::detail::get_le<std::uint64_t>(bytes, 8);
  auto manifest = nlohmann::json::parse(bytes.substr(16, manifest_len));
  const auto& entries = manifest.at("tensors");
  REQUIRE(entries.size() == 2);
  CHECK(entries[0].at("offset") == 0);
  CHECK(entries[1].at("offset") == 48);
  CHECK(bytes.size() == 16 + manifest_len + 64);
  // Little-endian 1.0 = 0x3ff0000000000000.
  CHECK(static_cast<unsigned char>(bytes[16 + manifest_len + 7]) == 0x3f);
  CHECK(static_cast<unsigned char>(bytes[16 + manifest_len + 6]) == 0xf0);
  auto back = container::deserialize(bytes);
  CHECK(container::serialize(back) == bytes);
  CHECK(std::signbit(back.tensor("a").data[5]));

  auto expect = [](const std::string& b, const std::string& needle) {
    try {
      container::deserialize(b);
      FAIL("expected a container error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Container);
      CHECK(std::string(e.what()).find(needle) != std::string::npos);
    }
  };
  expect(bytes.substr(0, bytes.size() - 8), "payload");
  std::string bad = bytes;
  bad[0] = 'X';
  expect(bad, "magic");
  bad = bytes;
  bad[4] = 2;
  expect(bad, "version");
  expect(bytes.substr(0, 10), "short");
  // Rewrite the second offset so the blocks overlap.
  auto m2 = manifest;
  m2["tensors"][1]["offset"] = 40;
  std::string text = m2.dump();
  std::string rebuilt = bytes.substr(0, 8);
  container::detail::put_le<std::uint64_t>(rebuilt, text.size());
  rebuilt += text + bytes.substr(16 + manifest_len);
  expect(rebuilt, "offset");
  m2 = manifest;
  m2["tensors"][0]["shape"] = {2, 2};
  text = m2.dump();
  rebuilt = bytes.substr(0, 8);
  container::detail::put_le<std::uint64_t>(rebuilt, text.size());
  rebuilt += text + bytes.substr(16 + manifest_len);
  expect(rebuilt, "shape");
}

TEST_CASE("config JSON round-trips through the schema", "[cli][config]") {
  experiment::ExperimentConfig c;
  c.seed = 17;
  c.model = experiment::ModelKind::BertLike;
  c.keep_entities = {"PER", "GPE"};
  c.train.optimizer.warmup_steps = 2500;
  c.train.optimizer.lr = 3e-5;
  c.eval.include_o = false;
  auto j = experiment::to_json(c);
  auto back = experiment::config_from_json(j);
  CHECK(experiment::to_json(back) == j);
  CHECK(back.train.optimizer.lr == 3e-5);
  CHECK_THROWS_AS(experiment::config_from_json({{"model", "svm"}}), Error);
  CHECK_THROWS_AS(experiment::config_from_json({{"train", {{"optimizer", "rmsprop"}}}}), Error);
}

TEST_CASE("optimizer defaults follow the model kind", "[cli][config]") {
  using experiment::ModelKind;
  auto transformer = experiment::config_from_json({{"model", "transformer"}});
  CHECK(transformer.train.optimizer.kind == taggers::OptimizerKind::Sgd);
  CHECK(transformer.train.optimizer.lr == 1e-3);
  CHECK(transformer.train.optimizer.momentum == 0.9);
  auto bert = experiment::config_from_json({{"model", "bertlike"}});
  CHECK(bert.train.optimizer.kind == taggers::OptimizerKind::AdamW);
  CHECK(bert.train.optimizer.lr == 3e-5);
  CHECK(bert.train.optimizer.warmup_steps == 2500);
  CHECK(experiment::config_from_json({{"model", "bilstm"}}).train.optimizer.kind == taggers::OptimizerKind::AdamW);
  // Explicit keys survive a later change of model.
  auto c = experiment::config_from_json({{"model", "bilstm"}, {"train", {{"lr", 0.5}}}});
  experiment::apply_model_defaults(c, ModelKind::Transformer);
  CHECK(c.train.optimizer.kind == taggers::OptimizerKind::Sgd);
  CHECK(c.train.optimizer.lr == 0.5);
}

TEST_CASE("tokenize prints subword encodings from a prepared vocabulary", "[cli]") {
  auto dir = workdir("tokenize");
  auto csv = synthetic_csv(dir, 30);
  REQUIRE(run({"prepare", "-d", csv.string(), "-o", dir.string(), "--seed", "1"}).code == 0);
  spit(dir / "in.txt", "Alice went to Paris\n");
  auto r = run({"tokenize", (dir / "in.txt").string(), "--vocab", (dir / "wordpiece.txt").string()});
  REQUIRE(r.code == 0);
  CHECK(r.out.starts_with("2\t[CLS]\t-1\t0\n"));
  CHECK(run({"tokenize", (dir / "in.txt").string()}).code == cli::kExitUsage);
}
