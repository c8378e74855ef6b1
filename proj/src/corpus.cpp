#include "derivgen/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "derivgen/error.hpp"
#include "derivgen/random.hpp"
#include "derivgen/utf8.hpp"

namespace derivgen {

namespace {

std::vector<std::string> split_tabs(std::string_view line) {
  std::vector<std::string> cols;
  size_t start = 0;
  while (true) {
    size_t pos = line.find('\t', start);
    if (pos == std::string_view::npos) {
      cols.emplace_back(line.substr(start));
      break;
    }
    cols.emplace_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return cols;
}

std::string_view strip_cr(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  return line;
}

bool skippable(std::string_view line) {
  return line.find_first_not_of(" \t") == std::string_view::npos || line.front() == '#';
}

}  // namespace

Vocab::Vocab(std::vector<char32_t> chars, std::vector<std::string> tags)
    : chars_(std::move(chars)), tags_(std::move(tags)) {
  std::sort(chars_.begin(), chars_.end());
  chars_.erase(std::unique(chars_.begin(), chars_.end()), chars_.end());
  std::sort(tags_.begin(), tags_.end());
  tags_.erase(std::unique(tags_.begin(), tags_.end()), tags_.end());
  for (size_t i = 0; i < chars_.size(); ++i) {
    char_ids_.emplace(chars_[i], static_cast<int>(kNumReserved + i));
  }
  for (size_t i = 0; i < tags_.size(); ++i) {
    tag_ids_.emplace(tags_[i], static_cast<int>(kNumReserved + chars_.size() + i));
  }
}

int Vocab::char_id(char32_t c) const {
  auto it = char_ids_.find(c);
  return it == char_ids_.end() ? kUnk : it->second;
}

std::optional<int> Vocab::tag_id(std::string_view tag) const {
  auto it = tag_ids_.find(tag);
  if (it == tag_ids_.end()) return std::nullopt;
  return it->second;
}

bool Vocab::is_char_id(int id) const {
  return id >= kNumReserved && id < static_cast<int>(kNumReserved + chars_.size());
}

bool Vocab::is_tag_id(int id) const {
  return id >= static_cast<int>(kNumReserved + chars_.size()) && id < static_cast<int>(size());
}

char32_t Vocab::id_to_char(int id) const {
  if (!is_char_id(id)) throw DataError("id " + std::to_string(id) + " is not a character id");
  return chars_[id - kNumReserved];
}

const std::string& Vocab::id_to_tag(int id) const {
  if (!is_tag_id(id)) throw DataError("id " + std::to_string(id) + " is not a tag id");
  return tags_[id - kNumReserved - chars_.size()];
}

std::string Vocab::token(int id) const {
  switch (id) {
    case kPad: return "<PAD>";
    case kUnk: return "<UNK>";
    case kBos: return "<BOS>";
    case kEos: return "<EOS>";
    default: break;
  }
  if (is_char_id(id)) return utf8::encode(id_to_char(id));
  if (is_tag_id(id)) return id_to_tag(id);
  throw DataError("id " + std::to_string(id) + " out of vocabulary range");
}

std::vector<int> Vocab::encode_target(std::string_view word) const {
  std::vector<int> ids;
  for (char32_t c : utf8::decode(word)) ids.push_back(char_id(c));
  ids.push_back(kEos);
  return ids;
}

std::string Vocab::decode(std::span<const int> ids) const {
  std::u32string out;
  for (int id : ids) {
    if (id == kEos) break;
    if (is_char_id(id)) out.push_back(id_to_char(id));
  }
  return utf8::encode(out);
}

nlohmann::json Vocab::to_json() const {
  nlohmann::json chars = nlohmann::json::array();
  for (char32_t c : chars_) chars.push_back(utf8::encode(c));
  return {{"chars", chars}, {"tags", tags_}};
}

Vocab Vocab::from_json(const nlohmann::json& j) {
  std::vector<char32_t> chars;
  for (const auto& c : j.at("chars")) {
    auto cps = utf8::decode(c.get<std::string>());
    if (cps.size() != 1) throw ModelError("vocab entry is not a single character");
    chars.push_back(cps[0]);
  }
  return Vocab(std::move(chars), j.at("tags").get<std::vector<std::string>>());
}

size_t levenshtein(std::u32string_view a, std::u32string_view b) {
  if (a.size() < b.size()) std::swap(a, b);
  std::vector<size_t> row(b.size() + 1);
  for (size_t j = 0; j <= b.size(); ++j) row[j] = j;
  for (size_t i = 1; i <= a.size(); ++i) {
    size_t diag = row[0];
    row[0] = i;
    for (size_t j = 1; j <= b.size(); ++j) {
      size_t up = row[j];
      size_t sub = diag + (a[i - 1] == b[j - 1] ? 0 : 1);
      row[j] = std::min({sub, up + 1, row[j - 1] + 1});
      diag = up;
    }
  }
  return row[b.size()];
}

size_t levenshtein(std::string_view a, std::string_view b) {
  return levenshtein(utf8::decode(a), utf8::decode(b));
}

bool passes_distance_filter(const Triple& t) {
  auto base = utf8::decode(t.base);
  auto derived = utf8::decode(t.derived);
  return 2 * levenshtein(base, derived) <= base.size() + derived.size();
}

std::vector<Triple> filter_triples(std::span<const Triple> raw) {
  std::vector<Triple> kept;
  std::copy_if(raw.begin(), raw.end(), std::back_inserter(kept), passes_distance_filter);
  return kept;
}

namespace {

void cut_into(std::vector<Triple>& items, DatasetSplit& out) {
  const size_t n = items.size();
  const size_t train_end = n * 70 / 100;
  const size_t dev_end = n * 85 / 100;
  out.train.insert(out.train.end(), items.begin(), items.begin() + train_end);
  out.dev.insert(out.dev.end(), items.begin() + train_end, items.begin() + dev_end);
  out.test.insert(out.test.end(), items.begin() + dev_end, items.end());
}

}  // namespace

DatasetSplit split_dataset(std::span<const Triple> data, uint64_t seed, bool stratified) {
  if (data.empty()) throw DataError("empty dataset");
  DatasetSplit split;
  split.seed = seed;
  Rng rng(seed);
  if (!stratified) {
    std::vector<Triple> items(data.begin(), data.end());
    rng.shuffle(std::span(items));
    cut_into(items, split);
    return split;
  }
  std::map<std::string, std::vector<Triple>> by_tag;
  for (const auto& t : data) by_tag[t.tag].push_back(t);
  for (auto& [tag, items] : by_tag) {
    rng.shuffle(std::span(items));
    cut_into(items, split);
  }
  return split;
}

Vocab build_vocab(std::span<const Triple> train) {
  std::set<char32_t> chars;
  std::set<std::string> tags;
  for (const auto& t : train) {
    for (char32_t c : utf8::decode(t.base)) chars.insert(c);
    for (char32_t c : utf8::decode(t.derived)) chars.insert(c);
    tags.insert(t.tag);
  }
  return Vocab({chars.begin(), chars.end()}, {tags.begin(), tags.end()});
}

std::vector<int> encode_source(std::string_view base, std::string_view tag, const Vocab& v) {
  auto tag_id = v.tag_id(tag);
  if (!tag_id) throw DataError("unknown tag");
  std::vector<int> ids;
  for (char32_t c : utf8::decode(base)) ids.push_back(v.char_id(c));
  ids.push_back(*tag_id);
  ids.push_back(Vocab::kEos);
  return ids;
}

std::vector<int> encode_source(const Triple& t, const Vocab& v) {
  return encode_source(t.base, t.tag, v);
}

std::vector<Triple> parse_triples(std::istream& in, std::string_view source_name) {
  std::vector<Triple> triples;
  std::string raw;
  size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    auto line = strip_cr(raw);
    if (skippable(line)) continue;
    auto cols = split_tabs(line);
    auto where = std::string(source_name) + ":" + std::to_string(line_no) + ": ";
    if (cols.size() != 3) {
      throw DataError(where + "expected 3 tab-separated columns, found " +
                      std::to_string(cols.size()));
    }
    if (cols[0].empty() || cols[1].empty() || cols[2].empty()) {
      throw DataError(where + "empty field");
    }
    triples.push_back({std::move(cols[0]), std::move(cols[1]), std::move(cols[2])});
  }
  return triples;
}

std::vector<Triple> read_triples(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  return parse_triples(in, path.string());
}

void write_triples(std::ostream& out, std::span<const Triple> triples) {
  for (const auto& t : triples) out << t.base << '\t' << t.tag << '\t' << t.derived << '\n';
}

void write_triples(const std::filesystem::path& path, std::span<const Triple> triples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  write_triples(out, triples);
}

std::vector<Query> read_queries(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  std::vector<Query> queries;
  std::string raw;
  size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    auto line = strip_cr(raw);
    if (skippable(line)) continue;
    auto cols = split_tabs(line);
    if (cols.size() < 2 || cols[0].empty() || cols[1].empty()) {
      throw DataError(path.string() + ":" + std::to_string(line_no) +
                      ": expected base<TAB>tag");
    }
    queries.push_back({std::move(cols[0]), std::move(cols[1])});
  }
  return queries;
}

}  // namespace derivgen
