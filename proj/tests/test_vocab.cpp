#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>
#include <sstream>

#include "nargen/vocab.hpp"
#include "test_util.hpp"

using namespace nargen;
using namespace nargen::testutil;

TEST_CASE("word vocab from a tiny corpus") {
  const Vocab v = Vocab::build("a b a", 10, Vocab::Mode::word);
  CHECK(v.size() == 6);
  CHECK(v.token(Vocab::kPad) == "<pad>");
  CHECK(v.token(Vocab::kMask) == "<mask>");
  CHECK(v.token(Vocab::kSep) == "<sep>");
  CHECK(v.token(Vocab::kUnk) == "<unk>");
  CHECK(v.token(4) == "a");  // higher frequency first
  CHECK(v.token(5) == "b");
}

TEST_CASE("byte vocab always has 260 entries") {
  const Vocab v = Vocab::build("anything", 9999, Vocab::Mode::byte_level);
  CHECK(v.size() == 260);
  const auto ids = v.encode("Hi");
  CHECK(ids == std::vector<std::int32_t>{4 + 'H', 4 + 'i'});
  CHECK(v.decode(ids) == "Hi");
}

TEST_CASE("empty corpus is an error") {
  CHECK_THROWS_AS(Vocab::build("", 100, Vocab::Mode::word), DataError);
  CHECK_THROWS_AS(Vocab::build("   \n \t ", 100, Vocab::Mode::word), DataError);
}

TEST_CASE("frequency ordering matches an independent counter") {
  // synthetic 1k-line corpus with a power-law-ish token distribution
  std::ostringstream corpus;
  Rng rng(404);
  const std::vector<std::string> words = {"alpha", "beta",  "gamma", "delta", "eps",
                                          "zeta",  "eta",   "theta", "iota",  "kappa",
                                          "mu",    "nu",    "xi",    "pi",    "rho"};
  std::map<std::string, std::int64_t> independent;
  for (int line = 0; line < 1000; ++line) {
    for (int w = 0; w < 8; ++w) {
      const auto k = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(
          1 + rng.uniform_int(static_cast<std::int64_t>(words.size())))));
      corpus << words[k] << ' ';
      ++independent[words[k]];
    }
    corpus << '\n';
  }
  const Vocab v = Vocab::build(corpus.str(), 1000, Vocab::Mode::word);
  // expected order: by count descending, ties lexicographic
  std::vector<std::pair<std::string, std::int64_t>> ranked(independent.begin(), independent.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  REQUIRE(v.size() == static_cast<std::int32_t>(ranked.size()) + Vocab::kNumReserved);
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    CHECK(v.token(static_cast<std::int32_t>(i) + Vocab::kNumReserved) == ranked[i].first);
  }
}

TEST_CASE("max_size truncates the tail") {
  const Vocab v = Vocab::build("a a a b b c", 6, Vocab::Mode::word);
  CHECK(v.size() == 6);  // 4 reserved + "a" + "b"
  CHECK(v.encode("c")[0] == Vocab::kUnk);
}

TEST_CASE("empty text round trip") {
  const Vocab v = Vocab::build("x y", 10, Vocab::Mode::word);
  CHECK(v.encode("").empty());
  CHECK(v.decode(std::vector<std::int32_t>{}) == "");
}

TEST_CASE("out-of-vocabulary words become <unk>") {
  const Vocab v = Vocab::build("hello world", 10, Vocab::Mode::word);
  const auto ids = v.encode("hello zzz");
  REQUIRE(ids.size() == 2);
  CHECK(ids[1] == Vocab::kUnk);
  CHECK(v.decode(ids) == "hello <unk>");
}

TEST_CASE("decode skips PAD and MASK") {
  const Vocab v = Vocab::build("a b", 10, Vocab::Mode::word);
  const std::vector<std::int32_t> ids{Vocab::kPad, 4, Vocab::kMask, 5, Vocab::kPad};
  CHECK(v.decode(ids) == v.decode(std::vector<std::int32_t>{4, 5}));
}

TEST_CASE("decode rejects ids outside the vocabulary") {
  const Vocab v = Vocab::build("a b", 10, Vocab::Mode::word);
  CHECK_THROWS_AS(v.decode(std::vector<std::int32_t>{v.size()}), DimensionError);
}

TEST_CASE("roundtrip is identity on in-vocab whitespace-normalized text") {
  const std::string corpus = "the quick brown fox jumps over the lazy dog , again .";
  const Vocab v = Vocab::build(corpus, 100, Vocab::Mode::word);
  const std::vector<std::string> bag = word_tokenize(corpus);
  Rng rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    std::string sentence;
    const int len = 1 + static_cast<int>(rng.uniform_int(12));
    for (int i = 0; i < len; ++i) {
      if (i) sentence += ' ';
      sentence += bag[static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(bag.size())))];
    }
    CHECK(v.decode(v.encode(sentence)) == sentence);
  }
}

TEST_CASE("encoder output never contains reserved ids") {
  const Vocab v = Vocab::build("some words < pad > and <pad> markers", 100, Vocab::Mode::word);
  Rng rng(7);
  const std::string tricky = "<pad> <mask> <sep> <unk> plain words";
  for (std::int32_t id : v.encode(tricky)) {
    // punctuation splitting turns "<pad>" into "<", "pad", ">", so even a
    // corpus containing the literal rendering cannot hit a reserved id
    CHECK(id >= Vocab::kNumReserved);
  }
  for (std::int32_t id : v.encode("completely novel zzz qqq")) {
    CHECK((id == Vocab::kUnk || id >= Vocab::kNumReserved));
  }
}

TEST_CASE("vocab file round trip preserves ids and mode") {
  const auto dir = temp_dir("vocab");
  const Vocab v = Vocab::build("a b c a b a", 100, Vocab::Mode::word);
  v.save((dir / "vocab.txt").string());
  const Vocab loaded = Vocab::load((dir / "vocab.txt").string());
  CHECK(loaded.size() == v.size());
  CHECK(loaded.mode() == Vocab::Mode::word);
  for (std::int32_t i = 0; i < v.size(); ++i) CHECK(loaded.token(i) == v.token(i));

  const Vocab bytes = Vocab::build("", 0, Vocab::Mode::byte_level);
  bytes.save((dir / "bytes.txt").string());
  const Vocab loaded_bytes = Vocab::load((dir / "bytes.txt").string());
  CHECK(loaded_bytes.mode() == Vocab::Mode::byte_level);
  CHECK(loaded_bytes.size() == 260);
  CHECK(loaded_bytes.decode(loaded_bytes.encode("round trip!")) == "round trip!");
}
