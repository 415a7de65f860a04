#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <set>

#include "qitsa/corpus.hpp"
#include "qitsa/error.hpp"
#include "test_util.hpp"

using namespace qitsa;
using testutil::TempDir;
using testutil::write_file;

TEST_CASE("tokenize lowercases and isolates punctuation") {
  CHECK(tokenize("I like cats.") == std::vector<std::string>{"i", "like", "cats", "."});
  CHECK(tokenize("").empty());
  CHECK(tokenize("Don't stop") == std::vector<std::string>{"don", "'", "t", "stop"});
  CHECK(tokenize("  a\tb\n") == std::vector<std::string>{"a", "b"});
  CHECK(tokenize("wow!!") == std::vector<std::string>{"wow", "!", "!"});
}

TEST_CASE("tokenize is idempotent on rejoined output") {
  Rng rng(11);
  const std::string alphabet = "abcXYZ .,!?'-()\t";
  for (int trial = 0; trial < 200; ++trial) {
    std::string text;
    const auto len = rng.below(30);
    for (std::uint64_t i = 0; i < len; ++i) text += alphabet[rng.below(alphabet.size())];
    const auto once = tokenize(text);
    std::string joined;
    for (const auto& t : once) joined += t + " ";
    CHECK(tokenize(joined) == once);
  }
}

TEST_CASE("build_vocab orders by frequency then lexicographically") {
  Vocabulary v = build_vocab({{"a", "b", "a"}});
  CHECK(v.id("<pad>") == kPadId);
  CHECK(v.id("<unk>") == kUnkId);
  CHECK(v.id("a") == 2);
  CHECK(v.id("b") == 3);
  CHECK(v.size() == 4);

  Vocabulary v2 = build_vocab({{"a", "b", "a"}}, 2);
  CHECK(v2.id("a") == 2);
  CHECK(v2.id("b") == kUnkId);
  CHECK_FALSE(v2.contains("b"));

  Vocabulary v3 = build_vocab({{"y", "x", "y"}, {"x", "y", "x"}});
  CHECK(v3.id("x") == 2);
  CHECK(v3.id("y") == 3);

  CHECK_THROWS_AS(build_vocab({}), Error);
  CHECK_THROWS_AS(build_vocab({{}}), Error);
}

TEST_CASE("vocabulary is a bijection and round-trips through its token list") {
  Vocabulary v = build_vocab({{"the", "cat", "sat", "on", "the", "mat"}});
  for (TokenId id = 0; id < v.size(); ++id) CHECK(v.id(v.token(id)) == id);
  Vocabulary w = Vocabulary::from_tokens(v.tokens());
  CHECK(w.tokens() == v.tokens());
  CHECK_THROWS_AS(Vocabulary::from_tokens({"x", "<unk>"}), Error);
  const std::vector<std::string> words{"the", "dog"};
  CHECK(v.encode(words) == std::vector<TokenId>{v.id("the"), kUnkId});
}

TEST_CASE("read_labeled_file reports bad lines") {
  TempDir dir;
  write_file(dir / "empty.tsv", "");
  try {
    read_labeled_file(dir / "empty.tsv");
    FAIL("expected an error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("no records") != std::string::npos);
  }

  write_file(dir / "notab.tsv", "1\tfine\n0 no tab here\n");
  try {
    read_labeled_file(dir / "notab.tsv");
    FAIL("expected an error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }

  write_file(dir / "label.tsv", "1\tok\n0\tok\n2\tbad label\n");
  try {
    read_labeled_file(dir / "label.tsv");
    FAIL("expected an error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
    CHECK(std::string(e.what()).find("outside {0,1}") != std::string::npos);
  }

  write_file(dir / "notokens.tsv", "1\t   \n");
  CHECK_THROWS_AS(read_labeled_file(dir / "notokens.tsv"), ParseError);
  CHECK_THROWS_AS(read_labeled_file(dir / "missing.tsv"), Error);

  write_file(dir / "ok.tsv", "1\tGood movie.\n\n0\tBad one\n");
  auto rows = read_labeled_file(dir / "ok.tsv");
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].label == 1);
  CHECK(rows[0].words == std::vector<std::string>{"good", "movie", "."});
  CHECK(rows[0].raw_text == "Good movie.");
}

namespace {

std::string numbered_tsv(int n) {
  std::string text;
  for (int i = 0; i < n; ++i) text += std::to_string(i % 2) + "\tsentence number " + std::to_string(i) + "\n";
  return text;
}

std::multiset<std::string> texts(const std::vector<LabeledSentence>& rows) {
  std::multiset<std::string> out;
  for (const auto& r : rows) out.insert(r.raw_text);
  return out;
}

}  // namespace

TEST_CASE("tsv split is 80/10/10 and deterministic under a seed") {
  TempDir dir;
  write_file(dir / "ten.tsv", numbered_tsv(10));
  Dataset a = load_dataset(dir / "ten.tsv", DatasetName::Custom, DatasetFormat::Tsv, 7);
  Dataset b = load_dataset(dir / "ten.tsv", DatasetName::Custom, DatasetFormat::Tsv, 7);
  CHECK(a.sizes() == SplitSizes{8, 1, 1});
  CHECK(texts(a.train) == texts(b.train));
  CHECK(texts(a.validation) == texts(b.validation));
  CHECK(texts(a.test) == texts(b.test));
}

TEST_CASE("tsv split is a partition for every seed") {
  TempDir dir;
  write_file(dir / "data.tsv", numbered_tsv(37));
  std::multiset<std::string> all;
  for (const auto& r : read_labeled_file(dir / "data.tsv")) all.insert(r.raw_text);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Dataset d = load_dataset(dir / "data.tsv", DatasetName::Custom, DatasetFormat::Tsv, seed);
    CHECK(d.sizes().total() == 37);
    std::multiset<std::string> joined;
    for (const auto* split : {&d.train, &d.validation, &d.test})
      for (const auto& r : *split) joined.insert(r.raw_text);
    CHECK(joined == all);
  }
}

TEST_CASE("presplit directory is read verbatim") {
  Dataset d = load_dataset(testutil::fixture_dir(), DatasetName::Custom, DatasetFormat::Presplit);
  CHECK(d.sizes() == SplitSizes{64, 16, 16});
  CHECK(d.canonical_mismatch().empty());
  CHECK_THROWS_AS(load_dataset(testutil::fixture_dir() / "nope", DatasetName::Custom, DatasetFormat::Presplit), Error);
}

TEST_CASE("canonical split sizes") {
  auto mr = canonical_split_sizes(DatasetName::MR);
  REQUIRE(mr);
  CHECK(*mr == SplitSizes{8530, 1065, 1067});
  CHECK(mr->total() == 10662);
  CHECK(canonical_split_sizes(DatasetName::SST)->total() == 70042);
  CHECK(canonical_split_sizes(DatasetName::SUBJ)->total() == 10000);
  CHECK(canonical_split_sizes(DatasetName::CR)->total() == 3772);
  CHECK(*canonical_split_sizes(DatasetName::MPQA) == SplitSizes{8496, 1035, 1072});
  CHECK_FALSE(canonical_split_sizes(DatasetName::Custom));
  CHECK(label_semantics(DatasetName::SUBJ) == LabelSemantics::SubjObj);
  CHECK(label_semantics(DatasetName::MR) == LabelSemantics::PosNeg);

  Dataset d;
  d.name = DatasetName::MR;
  d.train.resize(3);
  CHECK_FALSE(d.canonical_mismatch().empty());
}

TEST_CASE("index truncates to max_len") {
  TempDir dir;
  write_file(dir / "d.tsv", "1\ta b c d e f\n0\ta b\n");
  auto rows = read_labeled_file(dir / "d.tsv");
  Dataset d;
  d.train = rows;
  d.test = rows;
  Vocabulary v = build_vocab(d.all_words());
  d.index(v, 4);
  CHECK(d.train[0].tokens.size() == 4);
  CHECK(d.train[1].tokens.size() == 2);
  CHECK(d.train[0].tokens[0] == v.id("a"));
  CHECK_THROWS_AS(d.index(v, 0), Error);
}

TEST_CASE("amplitude table loading") {
  TempDir dir;
  Vocabulary v = build_vocab({{"cat", "dog", "cat"}});
  write_file(dir / "vec.txt", "cat 0.1 0.2\nzebra 1 1\n");
  AmplitudeTable t = load_amplitude_table(dir / "vec.txt", v, 2, 3);
  CHECK(t.rows() == v.size());
  CHECK(t.row(v.id("cat"))[0] == doctest::Approx(0.1));
  CHECK(t.row(v.id("cat"))[1] == doctest::Approx(0.2));
  CHECK(t.row(kPadId)[0] == 0.0);
  CHECK(t.row(kPadId)[1] == 0.0);
  for (double x : t.row(v.id("dog"))) {
    CHECK(x >= -0.1);
    CHECK(x <= 0.1);
  }
  AmplitudeTable again = load_amplitude_table(dir / "vec.txt", v, 2, 3);
  CHECK(again.data == t.data);
  CHECK(t.found == 1);
  CHECK(t.missing == 1);  // dog; specials are not counted

  AmplitudeTable zeros = load_amplitude_table(dir / "vec.txt", v, 2, 3, MissingRows::Zero);
  CHECK(zeros.row(v.id("dog"))[0] == 0.0);

  write_file(dir / "w2v.txt", "2 2\ncat 0.5 0.5\ndog 1 2\n");
  AmplitudeTable w = load_amplitude_table(dir / "w2v.txt", v, 2);
  CHECK(w.row(v.id("dog"))[1] == doctest::Approx(2.0));

  write_file(dir / "bad.txt", "cat 0.1 0.2\ndog 0.1 0.2 0.3\n");
  try {
    load_amplitude_table(dir / "bad.txt", v, 2);
    FAIL("expected an error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
  CHECK_THROWS_AS(load_amplitude_table(dir / "none.txt", v, 2), Error);
}

TEST_CASE("random amplitude table is seeded and bounded") {
  Vocabulary v = build_vocab({{"a", "b", "c"}});
  AmplitudeTable a = random_amplitude_table(v, 5, 9);
  AmplitudeTable b = random_amplitude_table(v, 5, 9);
  AmplitudeTable c = random_amplitude_table(v, 5, 10);
  CHECK(a.data == b.data);
  CHECK(a.data != c.data);
  for (double x : a.row(kPadId)) CHECK(x == 0.0);
  for (double x : a.data) CHECK(std::abs(x) <= kMissingInitBound);
}

TEST_CASE("phase lexicon averages synsets") {
  TempDir dir;
  write_file(dir / "lex.txt", "# comment\ngood 0.75 0.0\n\ngood 0.25 0.0\nbad 0.0 1.0\n");
  PhaseLexicon lex = load_phase_lexicon(dir / "lex.txt");
  CHECK(lex.score("good") == doctest::Approx(0.5));
  CHECK(lex.score("bad") == doctest::Approx(-1.0));
  CHECK(lex.score("unseen") == 0.0);
  CHECK(lex.size() == 2);

  write_file(dir / "range.txt", "good 1.5 0.0\n");
  CHECK_THROWS_AS(load_phase_lexicon(dir / "range.txt"), ParseError);
  write_file(dir / "shape.txt", "good 0.5\n");
  CHECK_THROWS_AS(load_phase_lexicon(dir / "shape.txt"), ParseError);
  CHECK_THROWS_AS(lex.set("x", 1.5), Error);
}

TEST_CASE("phase lexicon is invariant to line order") {
  TempDir dir;
  Rng rng(5);
  std::vector<std::string> lines;
  for (int i = 0; i < 60; ++i) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "w%d %.3f %.3f", i % 7, rng.unit(), rng.unit());
    lines.push_back(buf);
  }
  auto write_lines = [&](const std::filesystem::path& p) {
    std::string text;
    for (const auto& l : lines) text += l + "\n";
    write_file(p, text);
  };
  write_lines(dir / "a.txt");
  PhaseLexicon base = load_phase_lexicon(dir / "a.txt");
  for (int trial = 0; trial < 20; ++trial) {
    rng.shuffle(lines);
    write_lines(dir / "b.txt");
    PhaseLexicon shuffled = load_phase_lexicon(dir / "b.txt");
    for (int w = 0; w < 7; ++w) {
      const std::string token = "w" + std::to_string(w);
      CHECK(shuffled.score(token) == base.score(token));
      CHECK(std::abs(base.score(token)) <= 1.0);
    }
  }
}

TEST_CASE("fixture lexicon separates the fixture classes") {
  const auto dir = testutil::fixture_dir();
  PhaseLexicon lex = load_phase_lexicon(dir / "lexicon.txt");
  Dataset d = load_dataset(dir, DatasetName::Custom, DatasetFormat::Presplit);
  for (const auto& s : d.train) {
    double total = 0.0;
    for (const auto& w : s.words) total += lex.score(w);
    CHECK((s.label == 1 ? total > 0.0 : total < 0.0));
  }
}
