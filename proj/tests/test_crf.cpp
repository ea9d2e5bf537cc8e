#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "support/synthetic.hpp"
#include "tagforge/crf.hpp"

using namespace tagforge;
using namespace tagforge::crf;

namespace {

corpus::Sentence make_sentence(const std::vector<std::string>& words, const std::vector<std::string>& pos,
                               const std::vector<std::string>& tags = {}) {
  corpus::Sentence s;
  for (std::size_t i = 0; i < words.size(); ++i) {
    s.tokens.push_back({words[i], pos[i], tags.empty() ? "O" : tags[i]});
  }
  return s;
}

struct Instance {
  CrfModel model;
  CompiledSequence x;
};

// Random model over |Y| labels and 5 features with every weight ~ U(lo, hi);
// each position carries a random non-empty subset of the features.
Instance random_instance(Pcg32& rng, std::size_t T, std::size_t Y, double lo = -2.0, double hi = 2.0) {
  std::vector<std::string> labels;
  for (std::size_t y = 0; y < Y; ++y) labels.push_back("L" + std::to_string(y));
  Instance in{CrfModel(labels), {}};
  for (int f = 0; f < 5; ++f) in.model.add_feature("f" + std::to_string(f));
  for (auto* p : in.model.parameters()) {
    for (double& w : p->value.data) w = rng.uniform(lo, hi);
  }
  for (std::size_t t = 0; t < T; ++t) {
    std::vector<int> ids;
    for (int f = 0; f < 5; ++f) {
      if (rng.uniform() < 0.5) ids.push_back(f);
    }
    if (ids.empty()) ids.push_back(static_cast<int>(rng.below(5)));
    in.x.features.push_back(ids);
  }
  return in;
}

// Independent oracle: every label sequence, scored term by term.
double oracle_score(const Instance& in, const std::vector<int>& y) {
  const auto Y = in.model.num_labels();
  const auto& w = in.model.state().value.data;
  double s = in.model.begin().value.data[static_cast<std::size_t>(y[0])] +
             in.model.end().value.data[static_cast<std::size_t>(y.back())];
  for (std::size_t t = 0; t < y.size(); ++t) {
    for (int f : in.x.features[t]) s += w[static_cast<std::size_t>(f) * Y + static_cast<std::size_t>(y[t])];
    if (t > 0) s += in.model.transitions().value.data[static_cast<std::size_t>(y[t - 1]) * Y + static_cast<std::size_t>(y[t])];
  }
  return s;
}

template <typename Fn>
void for_each_sequence(std::size_t T, std::size_t Y, Fn fn) {
  std::vector<int> y(T, 0);
  while (true) {
    fn(y);
    std::size_t t = 0;
    while (t < T && static_cast<std::size_t>(++y[t]) == Y) y[t++] = 0;
    if (t == T) return;
  }
}

struct Brute {
  double z = 0.0;
  double best = -1e300;
  std::vector<int> argmax;
};

// argmax tie-break: smallest label at the last position, then the one before.
bool colex_less(const std::vector<int>& a, const std::vector<int>& b) {
  return std::lexicographical_compare(a.rbegin(), a.rend(), b.rbegin(), b.rend());
}

Brute brute_force(const Instance& in) {
  Brute b;
  for_each_sequence(in.x.size(), in.model.num_labels(), [&](const std::vector<int>& y) {
    const double s = oracle_score(in, y);
    b.z += std::exp(s);
    if (s > b.best || (s == b.best && colex_less(y, b.argmax))) {
      b.best = s;
      b.argmax = y;
    }
  });
  return b;
}

}  // namespace

TEST_CASE("feature templates for a final token", "[crf][features]") {
  auto s = make_sentence({"Alice", "went", "to", "China"}, {"NNP", "VBD", "TO", "NNP"});
  FeatureSet expected = {"word.lower=china",     "word[-3:]=ina",         "word[-2:]=na",
                         "word.isupper=False",   "word.isdigit=False",    "word.istitle=True",
                         "postag=NNP",           "-1:word.lower=to",      "-1:word.isupper=False",
                         "-1:word.isdigit=False", "-1:word.istitle=False", "-1:postag=TO",
                         "END"};
  CHECK(extract_features(s, 3) == expected);
}

TEST_CASE("first position carries BEG and no context features", "[crf][features]") {
  auto s = make_sentence({"WHO", "said", "so"}, {"NNP", "VBD", "RB"});
  auto f = extract_features(s, 0);
  CHECK(std::find(f.begin(), f.end(), "BEG") != f.end());
  CHECK(std::find(f.begin(), f.end(), "END") == f.end());
  CHECK(std::none_of(f.begin(), f.end(), [](const std::string& n) { return n.rfind("-1:", 0) == 0; }));
  CHECK(std::find(f.begin(), f.end(), "word.isupper=True") != f.end());
  CHECK(std::find(f.begin(), f.end(), "word.istitle=False") != f.end());
}

TEST_CASE("short words use the whole word as suffix and single tokens get BEG and END", "[crf][features]") {
  auto s = make_sentence({"5"}, {"CD"});
  auto f = extract_features(s, 0);
  CHECK(f == FeatureSet{"word.lower=5", "word[-3:]=5", "word[-2:]=5", "word.isupper=False", "word.isdigit=True",
                        "word.istitle=False", "postag=CD", "BEG", "END"});
  CHECK_THROWS_AS(extract_features(s, 1), Error);
}

TEST_CASE("feature sets have no duplicates", "[crf][features]") {
  auto c = testing::synthetic_corpus(50, 3);
  for (const auto& s : c) {
    for (std::size_t t = 0; t < s.size(); ++t) {
      auto f = extract_features(s, t);
      std::set<std::string> u(f.begin(), f.end());
      CHECK(u.size() == f.size());
    }
  }
}

TEST_CASE("sequence score hand computation", "[crf][score]") {
  CrfModel m({"A", "B"});
  m.set_state_weight("x", "A", 1.0);
  m.set_state_weight("x", "B", -0.5);
  m.set_state_weight("y", "B", 2.0);
  m.transitions().value(0, 1) = 0.25;  // A->B
  m.transitions().value(1, 1) = -1.0;  // B->B
  m.begin().value.data = {0.5, 0.0};
  m.end().value.data = {0.0, 0.75};
  std::vector<FeatureSet> x = {{"x"}, {"x", "y"}, {"y", "unseen"}};
  // A B B: begin 0.5 + x|A 1 + x|B -0.5 + y|B 2 + y|B 2 + A->B 0.25 + B->B -1 + end 0.75
  CHECK(sequence_score(x, {"A", "B", "B"}, m) == Catch::Approx(5.0).epsilon(1e-15));
  CHECK_THROWS_AS(sequence_score(x, {"A", "C", "B"}, m), Error);
  try {
    sequence_score(x, {"A", "C", "B"}, m);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Label);
  }
}

TEST_CASE("zero weights give zero score and a uniform partition", "[crf][score]") {
  CrfModel m({"A", "B"});
  std::vector<FeatureSet> x1 = {{"a"}};
  CHECK(sequence_score(x1, {"B"}, m) == 0.0);
  CHECK(log_partition(x1, m) == Catch::Approx(std::log(2.0)).epsilon(1e-15));
  std::vector<FeatureSet> x3 = {{"a"}, {"b"}, {"c"}};
  CHECK(log_partition(x3, m) == Catch::Approx(3 * std::log(2.0)).epsilon(1e-14));
  auto d = viterbi_decode(x3, m);
  CHECK(d.labels == std::vector<int>{0, 0, 0});
  CHECK(d.score == 0.0);
}

TEST_CASE("single position score is begin plus state plus end", "[crf][score]") {
  CrfModel m({"A", "B"});
  m.set_state_weight("w", "B", 1.5);
  m.begin().value.data = {0.0, 0.25};
  m.end().value.data = {0.0, -2.0};
  m.transitions().value.fill(9.0);
  CHECK(sequence_score({{"w"}}, {"B"}, m) == Catch::Approx(1.5 + 0.25 - 2.0).epsilon(1e-15));
}

TEST_CASE("log partition and Viterbi agree with brute force", "[crf][oracle]") {
  Pcg32 rng(2024, 1);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t T = 1 + rng.below(6), Y = 1 + rng.below(4);
    auto in = random_instance(rng, T, Y);
    auto b = brute_force(in);
    const double z = std::exp(log_partition(in.x, in.model));
    CHECK(std::abs(z - b.z) / b.z < 1e-9);
    auto d = viterbi_decode(in.x, in.model);
    CHECK(std::abs(d.score - b.best) <= 1e-9 * std::max(1.0, std::abs(b.best)));
    CHECK(d.labels == b.argmax);
    CHECK(std::abs(sequence_score(in.x, d.labels, in.model) - d.score) < 1e-12);
  }
}

TEST_CASE("Viterbi tie-break on exactly tied integer weights", "[crf][oracle]") {
  Pcg32 rng(99, 2);
  int ties_seen = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t T = 1 + rng.below(5), Y = 2 + rng.below(3);
    auto in = random_instance(rng, T, Y);
    for (auto* p : in.model.parameters()) {
      for (double& w : p->value.data) w = static_cast<double>(rng.below(3)) - 1.0;
    }
    auto b = brute_force(in);
    int count = 0;
    for_each_sequence(T, Y, [&](const std::vector<int>& y) { count += oracle_score(in, y) == b.best; });
    ties_seen += count > 1;
    CHECK(viterbi_decode(in.x, in.model).labels == b.argmax);
  }
  CHECK(ties_seen > 50);
}

TEST_CASE("log partition for T=4 and three labels matches all 81 sequences", "[crf][oracle]") {
  Pcg32 rng(5, 5);
  auto in = random_instance(rng, 4, 3);
  double z = 0.0;
  int n = 0;
  for_each_sequence(4, 3, [&](const std::vector<int>& y) {
    z += std::exp(oracle_score(in, y));
    ++n;
  });
  CHECK(n == 81);
  CHECK(std::abs(log_partition(in.x, in.model) - std::log(z)) < 1e-9);
}

TEST_CASE("constant state shift moves log Z by c*T and keeps the Viterbi path", "[crf][property]") {
  Pcg32 rng(17, 3);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t T = 2 + rng.below(5);
    auto in = random_instance(rng, T, 3);
    // A dedicated feature present at every position, constant across labels.
    const int bias = in.model.add_feature("bias");
    for (auto& f : in.x.features) f.push_back(bias);
    const double z0 = log_partition(in.x, in.model);
    const auto path0 = viterbi_decode(in.x, in.model).labels;
    const double c = rng.uniform(-3.0, 3.0);
    for (std::size_t y = 0; y < 3; ++y) in.model.state().value(static_cast<std::size_t>(bias), y) = c;
    CHECK(log_partition(in.x, in.model) == Catch::Approx(z0 + c * static_cast<double>(T)).epsilon(1e-12));
    CHECK(viterbi_decode(in.x, in.model).labels == path0);
  }
}

TEST_CASE("partition is stable for scores near 1e3", "[crf][property]") {
  Pcg32 rng(8, 8);
  auto in = random_instance(rng, 5, 3, -300.0, 300.0);
  const double lz = log_partition(in.x, in.model);
  REQUIRE(std::isfinite(lz));
  CHECK(lz >= brute_force(in).best);
  auto m = marginals(in.x, in.model);
  for (double v : m) CHECK(std::isfinite(v));
}

TEST_CASE("marginals sum to one at every position", "[crf][property]") {
  Pcg32 rng(31, 4);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t T = 1 + rng.below(6), Y = 1 + rng.below(4);
    auto in = random_instance(rng, T, Y);
    auto p = marginals(in.x, in.model);
    for (std::size_t t = 0; t < T; ++t) {
      double s = 0.0;
      for (std::size_t y = 0; y < Y; ++y) s += p[t * Y + y];
      CHECK(std::abs(s - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("nll gradient matches central differences on every weight class", "[crf][gradient]") {
  Pcg32 rng(11, 6);
  auto in = random_instance(rng, 5, 3, -1.0, 1.0);
  std::vector<Example> batch;
  for (int i = 0; i < 3; ++i) {
    auto other = random_instance(rng, 2 + rng.below(4), 3);
    Example ex{other.x, {}};
    for (std::size_t t = 0; t < ex.x.size(); ++t) ex.y.push_back(static_cast<int>(rng.below(3)));
    batch.push_back(ex);
  }
  const double l2 = 0.3;
  auto r = nll_and_gradient(batch, in.model, l2);
  const std::vector<const numgrad::Tensor*> grads = {&r.d_state, &r.d_transitions, &r.d_begin, &r.d_end};
  auto params = in.model.parameters();
  const double h = 1e-5;
  for (std::size_t k = 0; k < params.size(); ++k) {
    double max_diff = 0.0, scale = 1e-12;
    for (std::size_t i = 0; i < params[k]->value.data.size(); ++i) {
      double& w = params[k]->value.data[i];
      const double orig = w;
      w = orig + h;
      const double fp = nll_and_gradient(batch, in.model, l2).loss;
      w = orig - h;
      const double fm = nll_and_gradient(batch, in.model, l2).loss;
      w = orig;
      const double numeric = (fp - fm) / (2 * h);
      max_diff = std::max(max_diff, std::abs(numeric - grads[k]->data[i]));
      scale = std::max({scale, std::abs(numeric), std::abs(grads[k]->data[i])});
    }
    INFO(params[k]->name);
    CHECK(max_diff / scale < 1e-6);
  }
}

TEST_CASE("loss is log Z minus gold score plus the l2 term", "[crf][gradient]") {
  Pcg32 rng(12, 7);
  auto in = random_instance(rng, 3, 2);
  Example ex{in.x, {1, 0, 1}};
  double sq = 0.0;
  for (auto* p : in.model.parameters()) {
    for (double w : p->value.data) sq += w * w;
  }
  const double expect = log_partition(in.x, in.model) - sequence_score(in.x, ex.y, in.model) + 0.5 * 2.0 * sq;
  CHECK(nll_and_gradient({ex}, in.model, 2.0).loss == Catch::Approx(expect).epsilon(1e-12));
}

TEST_CASE("data gradient vanishes when empirical counts equal expected counts", "[crf][gradient]") {
  // With every weight zero the model is uniform; a batch containing each label
  // sequence once has empirical counts equal to the expected counts.
  CrfModel m({"A", "B"});
  m.add_feature("f");
  std::vector<Example> batch;
  for_each_sequence(3, 2, [&](const std::vector<int>& y) {
    batch.push_back(Example{CompiledSequence{{{0}, {0}, {0}}}, y});
  });
  auto r = nll_and_gradient(batch, m, 0.0);
  for (const auto* g : {&r.d_state, &r.d_transitions, &r.d_begin, &r.d_end}) {
    for (double v : g->data) CHECK(std::abs(v) < 1e-12);
  }
}

TEST_CASE("strong l2 drives trained weights toward zero", "[crf][train]") {
  auto c = testing::synthetic_corpus(30, 4);
  CrfTrainConfig weak{0.0, 15, 0.1, 1};
  CrfTrainConfig strong{1000.0, 15, 0.1, 1};
  auto norm = [](CrfModel& m) {
    double s = 0.0;
    for (auto* p : m.parameters()) {
      for (double w : p->value.data) s += w * w;
    }
    return std::sqrt(s);
  };
  auto a = train(c, weak).model;
  auto b = train(c, strong).model;
  CHECK(norm(b) < 0.05 * norm(a));
}

TEST_CASE("training loss is non-increasing on a 50-sentence toy set", "[crf][train]") {
  auto c = testing::synthetic_corpus(50, 21);
  CrfTrainConfig cfg{0.1, 25, 0.05, 7};
  auto r = train(c, cfg);
  REQUIRE(r.loss_trace.size() == 25);
  for (std::size_t i = 1; i < r.loss_trace.size(); ++i) {
    INFO("epoch " << i + 1);
    CHECK(r.loss_trace[i] <= r.loss_trace[i - 1] + 1e-6);
  }
}

TEST_CASE("separable corpus is fit perfectly", "[crf][train]") {
  corpus::Corpus c;
  const std::vector<std::pair<std::string, std::string>> lex = {
      {"alpha", "B-per"}, {"beta", "O"}, {"gamma", "B-geo"}, {"delta", "I-geo"}, {"eps", "B-tim"}};
  Pcg32 rng(3, 3);
  for (int i = 0; i < 40; ++i) {
    corpus::Sentence s;
    for (int t = 0; t < 6; ++t) {
      const auto& e = lex[rng.below(5)];
      s.tokens.push_back({e.first, "NN", e.second});
    }
    c.push_back(s);
  }
  auto r = train(c, CrfTrainConfig{0.01, 40, 0.1, 0});
  std::size_t right = 0, total = 0;
  for (const auto& s : c) {
    auto pred = predict(r.model, s);
    for (std::size_t t = 0; t < s.size(); ++t) right += pred[t] == s.tokens[t].ner, ++total;
  }
  CHECK(right == total);
}

TEST_CASE("training is deterministic", "[crf][train]") {
  auto c = testing::synthetic_corpus(40, 9);
  CrfTrainConfig cfg{0.1, 5, 0.1, 42};
  auto a = train(c, cfg);
  auto b = train(c, cfg);
  CHECK(a.loss_trace == b.loss_trace);
  CHECK(a.model.state().value == b.model.state().value);
  CHECK(a.model.transitions().value == b.model.transitions().value);
  cfg.batch_size = 8;
  auto m1 = train(c, cfg);
  auto m2 = train(c, cfg);
  CHECK(m1.model.state().value == m2.model.state().value);
}

TEST_CASE("non-finite loss raises a training error naming the epoch", "[crf][train]") {
  auto c = testing::synthetic_corpus(10, 1);
  auto model = make_model(c);
  model.state().value.data[0] = std::numeric_limits<double>::infinity();
  try {
    train(c, CrfTrainConfig{0.1, 3, 0.1, 0}, model);
    FAIL("expected a training error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Training);
    CHECK(std::string(e.what()).find("epoch 1") != std::string::npos);
  }
  CHECK_THROWS_AS(train({}, CrfTrainConfig{}), Error);
  CHECK_THROWS_AS(train(c, CrfTrainConfig{0.1, 0, 0.1, 0}), Error);
}

TEST_CASE("top transitions are ranked and clamped", "[crf][transitions]") {
  CrfModel m({"A", "B", "C"});
  Pcg32 rng(4, 4);
  for (double& w : m.transitions().value.data) w = rng.uniform(-1, 1);
  auto r = top_transitions(m, 3);
  REQUIRE(r.likely.size() == 3);
  REQUIRE(r.unlikely.size() == 3);
  for (std::size_t i = 1; i < 3; ++i) {
    CHECK(r.likely[i - 1].weight >= r.likely[i].weight);
    CHECK(r.unlikely[i - 1].weight <= r.unlikely[i].weight);
  }
  const double mx = *std::max_element(m.transitions().value.data.begin(), m.transitions().value.data.end());
  CHECK(r.likely[0].weight == mx);
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& t : r.likely) seen.insert({t.from, t.to});
  for (const auto& t : r.unlikely) seen.insert({t.from, t.to});
  CHECK(seen.size() == 6);

  auto empty = top_transitions(m, 0);
  CHECK(empty.likely.empty());
  CHECK(empty.unlikely.empty());
  CHECK(top_transitions(m, 50).likely.size() == 9);
}
