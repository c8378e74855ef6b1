#include "derivgen/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "derivgen/corpus.hpp"
#include "derivgen/error.hpp"

namespace derivgen {

const std::vector<std::string> kDefaultAffixInventory = {
    "ly",  "er",  "or",   "ation", "ity", "ment", "ist", "ness", "ence",
    "ure", "ee",  "age",  "ion",   "tion", "al",  "able", "ible", "ant",
    "ette", "an", "ian",  "ish",   "ese", "ous",  "ious", "eous"};

namespace {

void check_lengths(size_t pred, size_t gold, bool allow_empty = false) {
  if (pred != gold) {
    throw DataError("length mismatch: " + std::to_string(pred) + " predictions vs " +
                    std::to_string(gold) + " gold forms");
  }
  if (!allow_empty && gold == 0) throw DataError("no items to score");
}

std::string_view strip_hyphen(std::string_view affix) {
  if (!affix.empty() && affix.front() == '-') affix.remove_prefix(1);
  return affix;
}

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

}  // namespace

double accuracy(std::span<const std::string> pred, std::span<const std::string> gold) {
  check_lengths(pred.size(), gold.size());
  size_t hits = 0;
  for (size_t i = 0; i < gold.size(); ++i) hits += pred[i] == gold[i];
  return static_cast<double>(hits) / static_cast<double>(gold.size());
}

double avg_edit_distance(std::span<const std::string> pred, std::span<const std::string> gold) {
  check_lengths(pred.size(), gold.size());
  size_t total = 0;
  for (size_t i = 0; i < gold.size(); ++i) total += levenshtein(pred[i], gold[i]);
  return static_cast<double>(total) / static_cast<double>(gold.size());
}

double kbest_accuracy(std::span<const std::vector<std::string>> kbest,
                      std::span<const std::string> gold) {
  check_lengths(kbest.size(), gold.size());
  size_t hits = 0;
  for (size_t i = 0; i < gold.size(); ++i) {
    hits += std::find(kbest[i].begin(), kbest[i].end(), gold[i]) != kbest[i].end();
  }
  return static_cast<double>(hits) / static_cast<double>(gold.size());
}

std::optional<std::string> extract_affix(std::string_view form,
                                         std::span<const std::string> inventory) {
  std::optional<std::string> best;
  for (const auto& entry : inventory) {
    auto affix = strip_hyphen(entry);
    if (affix.empty() || !form.ends_with(affix)) continue;
    if (!best || affix.size() > best->size()) best = std::string(affix);
  }
  return best;
}

std::vector<AffixF1Row> affix_f1(std::span<const std::string> pred,
                                 std::span<const std::string> gold,
                                 std::span<const std::string> inventory, bool whole_word) {
  check_lengths(pred.size(), gold.size(), true);
  std::map<std::string, AffixF1Row> rows;
  for (size_t i = 0; i < gold.size(); ++i) {
    auto p = extract_affix(pred[i], inventory);
    auto g = extract_affix(gold[i], inventory);
    if (p) {
      auto& row = rows[*p];
      row.affix = *p;
      ++row.predicted;
    }
    if (g) {
      auto& row = rows[*g];
      row.affix = *g;
      ++row.support;
      if (p && *p == *g && (!whole_word || pred[i] == gold[i])) ++row.correct;
    }
  }
  std::vector<AffixF1Row> out;
  for (auto& [affix, row] : rows) {
    row.precision = row.predicted ? static_cast<double>(row.correct) / row.predicted : 0.0;
    row.recall = row.support ? static_cast<double>(row.correct) / row.support : 0.0;
    const double denom = row.precision + row.recall;
    row.f1 = denom > 0.0 ? 2.0 * row.precision * row.recall / denom : 0.0;
    out.push_back(row);
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const AffixF1Row& a, const AffixF1Row& b) { return a.f1 > b.f1; });
  return out;
}

EvalReport evaluate(std::span<const std::vector<std::string>> kbest,
                    std::span<const std::string> gold, std::span<const std::string> tags,
                    std::span<const std::string> inventory, bool whole_word) {
  check_lengths(kbest.size(), gold.size());
  check_lengths(tags.size(), gold.size());
  EvalReport report;
  report.count = gold.size();
  report.k = 1;
  std::vector<std::string> best;
  best.reserve(kbest.size());
  for (const auto& list : kbest) {
    best.push_back(list.empty() ? std::string() : list.front());
    report.k = std::max(report.k, list.size());
  }
  report.accuracy = accuracy(best, gold);
  report.avg_edit = avg_edit_distance(best, gold);
  report.kbest_accuracy = kbest_accuracy(kbest, gold);

  std::map<std::string, std::vector<size_t>> members;
  for (size_t i = 0; i < tags.size(); ++i) members[tags[i]].push_back(i);
  for (const auto& [tag, idx] : members) {
    std::vector<std::string> p, g;
    std::vector<std::vector<std::string>> kb;
    for (size_t i : idx) {
      p.push_back(best[i]);
      g.push_back(gold[i]);
      kb.push_back(kbest[i]);
    }
    report.per_tag[tag] = {accuracy(p, g), avg_edit_distance(p, g), kbest_accuracy(kb, g),
                           idx.size()};
  }
  report.affixes = affix_f1(best, gold, inventory, whole_word);
  return report;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j;
  j["count"] = count;
  j["k"] = k;
  j["accuracy"] = accuracy;
  j["avg_edit"] = avg_edit;
  j["kbest_accuracy"] = kbest_accuracy;
  j["per_tag"] = nlohmann::json::object();
  for (const auto& [tag, s] : per_tag) {
    j["per_tag"][tag] = {{"accuracy", s.accuracy},
                         {"avg_edit", s.avg_edit},
                         {"kbest_accuracy", s.kbest_accuracy},
                         {"count", s.count}};
  }
  j["affixes"] = nlohmann::json::array();
  for (const auto& r : affixes) {
    j["affixes"].push_back({{"affix", r.affix},
                            {"precision", r.precision},
                            {"recall", r.recall},
                            {"f1", r.f1},
                            {"support", r.support}});
  }
  return j;
}

std::string EvalReport::to_table() const {
  std::ostringstream out;
  char line[160];
  const std::string kcol = std::to_string(k) + "-best acc";
  std::snprintf(line, sizeof line, "%-12s %8s %8s %12s %6s\n", "", "acc", "edit", kcol.c_str(),
                "n");
  out << line;
  auto row = [&](const std::string& name, double acc, double edit, double kacc, size_t n) {
    std::snprintf(line, sizeof line, "%-12s %8s %8s %12s %6zu\n", name.c_str(),
                  fmt("%.1f%%", 100.0 * acc).c_str(), fmt("%.2f", edit).c_str(),
                  fmt("%.1f%%", 100.0 * kacc).c_str(), n);
    out << line;
  };
  row("all", accuracy, avg_edit, kbest_accuracy, count);
  for (const auto& [tag, s] : per_tag) row(tag, s.accuracy, s.avg_edit, s.kbest_accuracy, s.count);
  if (!affixes.empty()) {
    out << '\n';
    std::snprintf(line, sizeof line, "%-10s %6s %6s %6s %8s\n", "affix", "F1", "P", "R",
                  "support");
    out << line;
    for (const auto& r : affixes) {
      std::snprintf(line, sizeof line, "%-10s %6.2f %6.2f %6.2f %8zu\n",
                    ("-" + r.affix).c_str(), r.f1, r.precision, r.recall, r.support);
      out << line;
    }
  }
  return out.str();
}

std::vector<std::string> read_affix_inventory(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read affix inventory " + path);
  std::vector<std::string> inventory;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    inventory.emplace_back(strip_hyphen(line));
  }
  if (inventory.empty()) throw DataError("affix inventory " + path + " is empty");
  return inventory;
}

}  // namespace derivgen
