#include <doctest.h>

#include <algorithm>
#include <set>
#include <sstream>

#include "derivgen/corpus.hpp"
#include "derivgen/error.hpp"
#include "derivgen/random.hpp"
#include "derivgen/utf8.hpp"
#include "support.hpp"

using namespace derivgen;

namespace {

std::vector<Triple> numbered(size_t n) {
  std::vector<Triple> out;
  for (size_t i = 0; i < n; ++i) {
    out.push_back({"w" + std::to_string(i), kStandardTags[i % kStandardTags.size()],
                   "w" + std::to_string(i) + "ly"});
  }
  return out;
}

std::string random_word(Rng& rng, std::string_view alphabet, size_t max_len) {
  std::string s;
  const size_t len = rng.below(max_len + 1);
  for (size_t i = 0; i < len; ++i) s += alphabet[rng.below(alphabet.size())];
  return s;
}

}  // namespace

TEST_CASE("levenshtein basics") {
  CHECK(levenshtein(std::string_view("abc"), std::string_view("abc")) == 0);
  CHECK(levenshtein(std::string_view(""), std::string_view("abc")) == 3);
  CHECK(levenshtein(std::string_view("abc"), std::string_view("")) == 3);
  CHECK(levenshtein(std::string_view("kitten"), std::string_view("sitting")) == 3);
  CHECK(levenshtein(std::string_view("corrode"), std::string_view("corrosion")) ==
        testing::naive_levenshtein("corrode", "corrosion"));
}

TEST_CASE("levenshtein counts code points, not bytes") {
  CHECK(levenshtein(std::string_view("caf\xC3\xA9"), std::string_view("cafe")) == 1);
  CHECK(levenshtein(std::string_view("\xC3\xA9"), std::string_view("")) == 1);
}

TEST_CASE("levenshtein agrees with the recursive oracle on short strings over {a,b,c}") {
  const auto words = testing::all_strings("abc", 4);
  for (const auto& a : words) {
    for (const auto& b : words) {
      const size_t d = levenshtein(std::string_view(a), std::string_view(b));
      REQUIRE(d == testing::naive_levenshtein(a, b));
      REQUIRE(d == levenshtein(std::string_view(b), std::string_view(a)));
      REQUIRE((d == 0) == (a == b));
    }
  }
}

TEST_CASE("levenshtein triangle inequality on random triples") {
  Rng rng(11);
  for (int i = 0; i < 2000; ++i) {
    auto a = random_word(rng, "abcd", 7), b = random_word(rng, "abcd", 7),
         c = random_word(rng, "abcd", 7);
    REQUIRE(levenshtein(std::string_view(a), std::string_view(c)) <=
            levenshtein(std::string_view(a), std::string_view(b)) +
                levenshtein(std::string_view(b), std::string_view(c)));
  }
}

TEST_CASE("distance filter") {
  CHECK(passes_distance_filter({"ameliorate", "RESULT", "amelioration"}));
  CHECK(passes_distance_filter({"x", "TAG", "x"}));
  // Unrelated pair: distance 5 against lengths 5 + 5, exactly half, is kept.
  CHECK(testing::naive_levenshtein("abcde", "vwxyz") == 5);
  CHECK(passes_distance_filter({"abcde", "T", "vwxyz"}));
  // One more character on the derived side: 6 > 11/2.
  CHECK(testing::naive_levenshtein("abcde", "vwxyzq") == 6);
  CHECK_FALSE(passes_distance_filter({"abcde", "T", "vwxyzq"}));
  CHECK_FALSE(passes_distance_filter({"go", "RESULT", "went"}));
}

TEST_CASE("filter keeps order and is idempotent") {
  std::vector<Triple> raw = {{"take", "RESULT", "taking"},
                             {"go", "RESULT", "went"},
                             {"quick", "ADVERB", "quickly"},
                             {"ab", "T", "xyz"}};
  auto once = filter_triples(raw);
  REQUIRE(once.size() == 2);
  CHECK(once[0].base == "take");
  CHECK(once[1].base == "quick");
  CHECK(filter_triples(once) == once);
}

TEST_CASE("filter idempotence on random data") {
  Rng rng(5);
  for (int round = 0; round < 1000; ++round) {
    std::vector<Triple> raw;
    const size_t n = 1 + rng.below(8);
    for (size_t i = 0; i < n; ++i) {
      auto base = random_word(rng, "abc", 5);
      if (base.empty()) base = "a";
      auto derived = random_word(rng, "abc", 6);
      if (derived.empty()) derived = "b";
      raw.push_back({base, "T", derived});
    }
    auto once = filter_triples(raw);
    REQUIRE(filter_triples(once) == once);
    for (const auto& t : once) {
      const size_t d = testing::naive_levenshtein(t.base, t.derived);
      REQUIRE(2 * d <= t.base.size() + t.derived.size());
    }
  }
}

TEST_CASE("split sizes follow floor arithmetic") {
  auto s20 = split_dataset(numbered(20), 3);
  CHECK(s20.train.size() == 14);
  CHECK(s20.dev.size() == 3);
  CHECK(s20.test.size() == 3);

  auto big = split_dataset(numbered(6029), 1);
  CHECK(big.train.size() == 4220);
  CHECK(big.dev.size() == 904);
  CHECK(big.test.size() == 905);
}

TEST_CASE("split is deterministic, disjoint and complete") {
  auto data = numbered(57);
  auto a = split_dataset(data, 42);
  auto b = split_dataset(data, 42);
  CHECK(a.train == b.train);
  CHECK(a.dev == b.dev);
  CHECK(a.test == b.test);
  CHECK(a.seed == 42);

  auto c = split_dataset(data, 43);
  CHECK(c.train != a.train);

  std::multiset<std::string> seen;
  for (const auto* part : {&a.train, &a.dev, &a.test}) {
    for (const auto& t : *part) seen.insert(t.base);
  }
  std::multiset<std::string> expected;
  for (const auto& t : data) expected.insert(t.base);
  CHECK(seen == expected);
}

TEST_CASE("split proportions hold for random sizes") {
  Rng rng(99);
  for (int i = 0; i < 1000; ++i) {
    const size_t n = 1 + rng.below(300);
    auto s = split_dataset(numbered(n), rng.next());
    REQUIRE(s.train.size() == n * 70 / 100);
    REQUIRE(s.dev.size() == n * 85 / 100 - n * 70 / 100);
    REQUIRE(s.test.size() == n - n * 85 / 100);
  }
}

TEST_CASE("stratified split cuts each tag separately") {
  auto data = numbered(100);
  auto s = split_dataset(data, 7, true);
  CHECK(s.train.size() + s.dev.size() + s.test.size() == 100);
  for (const auto& tag : kStandardTags) {
    auto count = [&](const std::vector<Triple>& v) {
      return std::count_if(v.begin(), v.end(), [&](const Triple& t) { return t.tag == tag; });
    };
    CHECK(count(s.train) == 14);
    CHECK(count(s.dev) == 3);
    CHECK(count(s.test) == 3);
  }
}

TEST_CASE("empty dataset is rejected") {
  std::vector<Triple> none;
  CHECK_THROWS_WITH_AS(split_dataset(none, 1), "empty dataset", DataError);
}

TEST_CASE("vocab layout") {
  std::vector<Triple> train = {{"ab", "T", "ba"}};
  Vocab v = build_vocab(train);
  CHECK(v.size() == 7);
  CHECK(v.char_id(U'a') == 4);
  CHECK(v.char_id(U'b') == 5);
  CHECK(v.tag_id("T") == 6);
  CHECK(v.char_id(U'z') == Vocab::kUnk);
  CHECK_FALSE(v.tag_id("Q").has_value());
  for (char32_t c : v.chars()) CHECK(v.id_to_char(v.char_id(c)) == c);
  for (int id = 0; id < Vocab::kNumReserved; ++id) {
    CHECK_FALSE(v.is_char_id(id));
    CHECK_FALSE(v.is_tag_id(id));
  }
  CHECK(v.token(Vocab::kEos) == "<EOS>");
  CHECK(v.token(6) == "T");
}

TEST_CASE("vocab sorts characters by code point and tags lexicographically") {
  std::vector<Triple> train = {{"zeta", "RESULT", "zetation"}, {"\xC3\xA9t\xC3\xA9", "AGENT", "a"}};
  Vocab v = build_vocab(train);
  CHECK(std::is_sorted(v.chars().begin(), v.chars().end()));
  CHECK(v.chars().back() == U'é');
  REQUIRE(v.tags() == std::vector<std::string>{"AGENT", "RESULT"});
  CHECK(*v.tag_id("AGENT") < *v.tag_id("RESULT"));
  CHECK(*v.tag_id("AGENT") == static_cast<int>(Vocab::kNumReserved + v.num_chars()));
}

TEST_CASE("vocab json round trip") {
  std::vector<Triple> train = {{"ameliorate", "RESULT", "amelioration"}, {"quick", "ADVERB", "quickly"}};
  Vocab v = build_vocab(train);
  Vocab back = Vocab::from_json(v.to_json());
  CHECK(back == v);
  CHECK(back.tag_id("ADVERB") == v.tag_id("ADVERB"));
}

TEST_CASE("encode_source") {
  std::vector<Triple> train = {{"ab", "T", "ba"}};
  Vocab v = build_vocab(train);
  CHECK(encode_source({"a", "T", ""}, v) == std::vector<int>{4, 6, Vocab::kEos});
  CHECK(encode_source("azb", "T", v) == std::vector<int>{4, Vocab::kUnk, 5, 6, Vocab::kEos});
  CHECK_THROWS_WITH_AS(encode_source("a", "X", v), "unknown tag", DataError);

  std::vector<Triple> am = {{"ameliorate", "RESULT", "amelioration"}};
  Vocab va = build_vocab(am);
  auto ids = encode_source(am[0], va);
  REQUIRE(ids.size() == 12);
  const std::u32string letters = U"ameliorate";
  for (size_t i = 0; i < letters.size(); ++i) CHECK(ids[i] == va.char_id(letters[i]));
  CHECK(ids[10] == *va.tag_id("RESULT"));
  CHECK(ids[11] == Vocab::kEos);
}

TEST_CASE("decode inverts encode_target over the training alphabet") {
  std::vector<Triple> train = {{"abc", "T", "cab\xC3\xA9"}};
  Vocab v = build_vocab(train);
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    std::u32string word;
    const size_t len = rng.below(8);
    for (size_t j = 0; j < len; ++j) word += v.chars()[rng.below(v.num_chars())];
    const auto text = utf8::encode(word);
    auto ids = v.encode_target(text);
    REQUIRE(ids.back() == Vocab::kEos);
    REQUIRE(v.decode(ids) == text);
  }
}

TEST_CASE("parse_triples skips comments and blank lines") {
  std::istringstream in("# header\nquick\tADVERB\tquickly\n\n  \ntake\tRESULT\ttaking\n");
  auto triples = parse_triples(in, "mem");
  REQUIRE(triples.size() == 2);
  CHECK(triples[1] == Triple{"take", "RESULT", "taking"});
}

TEST_CASE("parse_triples reports the offending line") {
  std::istringstream in("quick\tADVERB\tquickly\nbroken line\n");
  CHECK_THROWS_WITH_AS(parse_triples(in, "mem.tsv"), doctest::Contains("mem.tsv:2"), DataError);
  std::istringstream empty_field("quick\t\tquickly\n");
  CHECK_THROWS_AS(parse_triples(empty_field, "x"), DataError);
}

TEST_CASE("triples survive a write/read round trip") {
  testing::TempDir dir("corpus");
  auto data = numbered(9);
  write_triples(dir / "d.tsv", data);
  CHECK(read_triples(dir / "d.tsv") == data);
  CHECK_THROWS_AS(read_triples(dir / "missing.tsv"), DataError);

  testing::write_file(dir / "q2.tsv", "quick\tADVERB\nslow\tADVERB\textra\n");
  auto q = read_queries(dir / "q2.tsv");
  REQUIRE(q.size() == 2);
  CHECK(q[1].base == "slow");
  CHECK(q[1].tag == "ADVERB");
}
