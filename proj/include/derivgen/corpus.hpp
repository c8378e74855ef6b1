#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace derivgen {

/// One supervised example: <base, derivation tag, derived form>, UTF-8.
struct Triple {
  std::string base;
  std::string tag;
  std::string derived;

  bool operator==(const Triple&) const = default;
};

/// Slot labels of the English derivational data (verb nominalizations,
/// adverbs and adjective-noun derivations). Loaders accept any tag set.
inline const std::vector<std::string> kStandardTags = {"ADVERB", "AGENT", "NOMINAL",
                                                       "PATIENT", "RESULT"};

struct DatasetSplit {
  std::vector<Triple> train;
  std::vector<Triple> dev;
  std::vector<Triple> test;
  uint64_t seed = 0;
};

/// Character and tag ids in one id space. Ids 0..3 are reserved, then
/// characters in code point order, then tags in lexicographic order.
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kBos = 2;
  static constexpr int kEos = 3;
  static constexpr int kNumReserved = 4;

  Vocab() = default;
  Vocab(std::vector<char32_t> chars, std::vector<std::string> tags);

  size_t size() const { return kNumReserved + chars_.size() + tags_.size(); }
  size_t num_chars() const { return chars_.size(); }
  size_t num_tags() const { return tags_.size(); }

  /// UNK for characters never seen in training.
  int char_id(char32_t c) const;
  std::optional<int> tag_id(std::string_view tag) const;

  bool is_char_id(int id) const;
  bool is_tag_id(int id) const;
  char32_t id_to_char(int id) const;
  const std::string& id_to_tag(int id) const;

  /// Readable form of any id: the character, the tag, or <PAD>/<UNK>/<BOS>/<EOS>.
  std::string token(int id) const;

  const std::vector<char32_t>& chars() const { return chars_; }
  const std::vector<std::string>& tags() const { return tags_; }

  /// Characters of `word` followed by EOS.
  std::vector<int> encode_target(std::string_view word) const;
  /// Concatenates character ids up to the first EOS; reserved and tag ids are dropped.
  std::string decode(std::span<const int> ids) const;

  nlohmann::json to_json() const;
  static Vocab from_json(const nlohmann::json& j);

  bool operator==(const Vocab& other) const {
    return chars_ == other.chars_ && tags_ == other.tags_;
  }

 private:
  std::vector<char32_t> chars_;
  std::vector<std::string> tags_;
  std::map<char32_t, int> char_ids_;
  std::map<std::string, int, std::less<>> tag_ids_;
};

/// Unit-cost edit distance over code points.
size_t levenshtein(std::u32string_view a, std::u32string_view b);
size_t levenshtein(std::string_view a, std::string_view b);

/// True unless levenshtein(base, derived) exceeds half the summed lengths.
/// Compared as 2*d > |base| + |derived| so no rounding is involved.
bool passes_distance_filter(const Triple& t);

/// Drops likely mis-annotations; keeps input order.
std::vector<Triple> filter_triples(std::span<const Triple> raw);

/// Shuffles with `seed` and cuts at floor(0.70 n) and floor(0.85 n).
/// With `stratified`, the same cut is applied per tag (tags in sorted order)
/// and the parts are concatenated. Throws DataError("empty dataset").
DatasetSplit split_dataset(std::span<const Triple> data, uint64_t seed, bool stratified = false);

Vocab build_vocab(std::span<const Triple> train);

/// [base chars] ++ [tag] ++ [EOS]. Throws DataError("unknown tag").
std::vector<int> encode_source(const Triple& t, const Vocab& v);
std::vector<int> encode_source(std::string_view base, std::string_view tag, const Vocab& v);

/// Reads base<TAB>tag<TAB>derived lines; '#' lines and blank lines are skipped.
/// Malformed lines raise DataError naming `source_name` and the line number.
std::vector<Triple> parse_triples(std::istream& in, std::string_view source_name = "<input>");
std::vector<Triple> read_triples(const std::filesystem::path& path);
void write_triples(std::ostream& out, std::span<const Triple> triples);
void write_triples(const std::filesystem::path& path, std::span<const Triple> triples);

/// base<TAB>tag lines (further columns ignored), for prediction input.
struct Query {
  std::string base;
  std::string tag;
};
std::vector<Query> read_queries(const std::filesystem::path& path);

}  // namespace derivgen
