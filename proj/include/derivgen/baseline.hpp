#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "derivgen/corpus.hpp"

namespace derivgen::baseline {

// Declaration order is the tie-break order used when scores are equal.
// kCopy and kStop are classifier labels: kCopy stands for SUB of the current
// input character, kStop (valid once all input is consumed) ends decoding.
// align() only produces kSub, kDel and kIns.
enum class ActionKind : uint8_t { kCopy = 0, kSub = 1, kDel = 2, kIns = 3, kStop = 4 };

struct EditAction {
  ActionKind kind = ActionKind::kSub;
  char32_t ch = 0;  // output character for kSub / kIns, 0 otherwise

  static EditAction copy() { return {ActionKind::kCopy, 0}; }
  static EditAction sub(char32_t c) { return {ActionKind::kSub, c}; }
  static EditAction del() { return {ActionKind::kDel, 0}; }
  static EditAction ins(char32_t c) { return {ActionKind::kIns, c}; }
  static EditAction stop() { return {ActionKind::kStop, 0}; }

  bool consumes_input() const {
    return kind == ActionKind::kCopy || kind == ActionKind::kSub || kind == ActionKind::kDel;
  }

  /// "COPY", "SUB:c", "DEL", "INS:c" or "STOP".
  std::string to_string() const;
  static EditAction parse(std::string_view text);

  auto operator<=>(const EditAction&) const = default;
};

struct EditScript {
  std::u32string source;
  std::vector<EditAction> actions;

  /// Runs the actions over `source`. Throws DataError when input consumption
  /// does not match the source length.
  std::u32string apply() const;
  /// Number of actions that are not copies.
  size_t cost() const;
};

/// Minimal unit-cost script turning base into derived. The path is traced
/// left to right preferring copy, then substitution, deletion, insertion, so
/// edits sit as far right as the optimum allows (suffixes become trailing
/// insertions).
EditScript align(std::u32string_view base, std::u32string_view derived);
EditScript align(std::string_view base, std::string_view derived);

struct FeatureConfig {
  int window = 3;
  int history = 2;
};

/// Window characters at offsets -window..+window (boundary tokens outside the
/// word), the last `history` output characters, the last `history` actions,
/// the length of the current insertion run (alone and with the tag), the tag,
/// and tag-by-window conjunctions.
std::vector<std::string> featurize(std::u32string_view source, std::string_view tag,
                                   size_t position, std::u32string_view history,
                                   std::span<const EditAction> previous_actions = {},
                                   const FeatureConfig& config = {});

/// Multiclass perceptron with sparse (feature, action) weights. Averaging is
/// over the weight vectors produced by successive updates, so passes that
/// make no mistakes leave the averaged model unchanged.
class PerceptronModel {
 public:
  explicit PerceptronModel(std::vector<EditAction> actions = {});

  const std::vector<EditAction>& actions() const { return actions_; }
  std::optional<size_t> action_index(const EditAction& a) const;

  /// Scores of every action; entries with allowed[i] == false are ignored by best().
  std::vector<double> scores(std::span<const std::string> features) const;
  /// Highest scoring allowed action; ties go to the lower index.
  std::optional<size_t> best(std::span<const std::string> features,
                             const std::vector<bool>& allowed) const;

  /// One mistake-driven update: gold weights +1, predicted weights -1.
  void update(std::span<const std::string> features, size_t gold, size_t predicted);
  /// Replaces the raw weights by their average. Further updates are rejected.
  void finalize();

  bool finalized() const { return finalized_; }
  uint64_t update_count() const { return updates_; }
  double weight(std::string_view feature, const EditAction& action) const;

  /// (feature, action, weight) for every nonzero weight, sorted.
  struct Entry {
    std::string feature;
    std::string action;
    double weight;
  };
  std::vector<Entry> entries() const;
  /// Rebuilds a finalized model.
  static PerceptronModel from_entries(std::vector<EditAction> actions, uint64_t updates,
                                      std::span<const Entry> entries);

 private:
  struct Cell {
    uint32_t action;
    double weight;
    double total;
    uint64_t last;
  };
  Cell& cell(const std::string& feature, uint32_t action);

  std::vector<EditAction> actions_;
  std::unordered_map<std::string, std::vector<Cell>> rows_;
  uint64_t updates_ = 0;
  bool finalized_ = false;
};

struct TrainConfig {
  int epochs = 10;
  uint64_t seed = 1;
  FeatureConfig features;
  bool per_tag = false;
  int max_insertions = 5;
};

/// One model with tag features, or one model per tag.
class Transducer {
 public:
  Transducer() = default;
  Transducer(TrainConfig config, std::map<std::string, PerceptronModel> models)
      : config_(config), models_(std::move(models)) {}

  const TrainConfig& config() const { return config_; }
  const std::map<std::string, PerceptronModel>& models() const { return models_; }
  /// The model consulted for `tag`; nullptr if per-tag and the tag was never trained.
  const PerceptronModel* model_for(std::string_view tag) const;

  void save(std::ostream& out) const;
  void save(const std::filesystem::path& path) const;
  static Transducer load(std::istream& in);
  static Transducer load(const std::filesystem::path& path);

  static constexpr std::string_view kSharedKey = "*";
  static constexpr std::string_view kMagic = "derivgen-perceptron";

 private:
  TrainConfig config_;
  std::map<std::string, PerceptronModel> models_;
};

/// One (features, gold label) pair per decision along the aligned script,
/// ending with STOP at the final position. Copies are labelled COPY.
struct TrainingState {
  std::vector<std::string> features;
  EditAction gold;
  bool at_end = false;  // all input consumed
};
std::vector<TrainingState> oracle_states(const Triple& t, const FeatureConfig& config);

/// Called after every epoch with the number of updates made and the averaged
/// model so far.
using EpochCallback =
    std::function<void(int epoch, size_t mistakes, const Transducer& averaged)>;

Transducer train_perceptron(std::span<const Triple> data, const TrainConfig& config,
                            const EpochCallback& on_epoch = {});

/// Greedy left-to-right decoding; insertion runs are capped by
/// config.max_insertions so decoding always terminates.
std::string decode_greedy(const Transducer& model, std::string_view base, std::string_view tag);
std::u32string decode_greedy(const PerceptronModel& model, std::u32string_view base,
                             std::string_view tag, const TrainConfig& config);

}  // namespace derivgen::baseline
