#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace derivgen {

/// Union of the suffixes reported for English derivation, without the hyphen.
extern const std::vector<std::string> kDefaultAffixInventory;

struct TagScores {
  double accuracy = 0.0;
  double avg_edit = 0.0;
  double kbest_accuracy = 0.0;
  size_t count = 0;
};

struct AffixF1Row {
  std::string affix;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  size_t support = 0;  // gold forms carrying the affix
  size_t predicted = 0;
  size_t correct = 0;
};

struct EvalReport {
  size_t count = 0;
  size_t k = 1;
  double accuracy = 0.0;
  double avg_edit = 0.0;
  double kbest_accuracy = 0.0;
  std::map<std::string, TagScores> per_tag;
  std::vector<AffixF1Row> affixes;

  nlohmann::json to_json() const;
  /// Plain-text rendering: an acc/edit table per tag, then affix/F1 rows.
  std::string to_table() const;
};

double accuracy(std::span<const std::string> pred, std::span<const std::string> gold);
double avg_edit_distance(std::span<const std::string> pred, std::span<const std::string> gold);

/// Fraction of items whose gold appears anywhere in the corresponding list.
double kbest_accuracy(std::span<const std::vector<std::string>> kbest,
                      std::span<const std::string> gold);

/// Longest inventory suffix ending `form`. Inventory entries may carry a leading '-'.
std::optional<std::string> extract_affix(std::string_view form,
                                         std::span<const std::string> inventory);

/// Per-affix precision/recall/F1, sorted by descending F1 then affix.
/// By default a position is correct for affix a when both the predicted and the
/// gold affix are a; with `whole_word`, the strings must also be equal.
std::vector<AffixF1Row> affix_f1(std::span<const std::string> pred,
                                 std::span<const std::string> gold,
                                 std::span<const std::string> inventory,
                                 bool whole_word = false);

/// Full report. kbest[i] is the ranked list for item i; its head is the 1-best.
EvalReport evaluate(std::span<const std::vector<std::string>> kbest,
                    std::span<const std::string> gold, std::span<const std::string> tags,
                    std::span<const std::string> inventory, bool whole_word = false);

/// Reads one suffix per line ('#' comments and blank lines ignored).
std::vector<std::string> read_affix_inventory(const std::string& path);

}  // namespace derivgen
