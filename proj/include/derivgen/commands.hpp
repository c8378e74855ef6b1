#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "derivgen/baseline.hpp"
#include "derivgen/metrics.hpp"
#include "derivgen/seq2seq.hpp"

namespace derivgen::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kDataError = 2, kModelError = 3 };

enum class ModelKind { kBaseline, kSeq2Seq };

std::string to_string(ModelKind kind);
ModelKind parse_model_kind(const std::string& name);

/// Every setting of a run. Defaults follow the published training recipe
/// where one exists.
struct RunConfig {
  std::filesystem::path data;
  std::filesystem::path splits;
  std::filesystem::path model;
  std::filesystem::path output;
  ModelKind kind = ModelKind::kSeq2Seq;
  uint64_t seed = 1;
  bool stratified = false;

  seq2seq::TrainConfig seq2seq;
  size_t beam = 12;
  baseline::TrainConfig baseline;

  size_t k = 1;
  std::filesystem::path affixes;  // empty: built-in inventory
  bool whole_word = false;

  void validate() const;
};

struct SplitSummary {
  size_t read = 0;
  size_t retained = 0;
  size_t removed = 0;
  size_t train = 0;
  size_t dev = 0;
  size_t test = 0;
};

/// Filters and splits `data`, writing train.tsv, dev.tsv, test.tsv and
/// manifest.json into out_dir.
SplitSummary cmd_split(const std::filesystem::path& data, uint64_t seed,
                       const std::filesystem::path& out_dir, bool stratified, std::ostream& log);

/// Trains from <splits>/train.tsv (and dev.tsv for selection/logging), writes
/// the model to config.model and a key=value log to config.model + ".log".
void cmd_train(const RunConfig& config, std::ostream& log);

ModelKind detect_model_kind(const std::filesystem::path& model);

/// Writes base<TAB>tag<TAB>rank<TAB>prediction<TAB>log_prob rows.
void cmd_predict(const std::filesystem::path& model, const std::filesystem::path& input, size_t k,
                 size_t beam, std::ostream& out);

/// Ranked predictions per query, grouped from a prediction TSV.
struct PredictionGroup {
  std::string base;
  std::string tag;
  std::vector<std::string> ranked;
};
std::vector<PredictionGroup> read_predictions(const std::filesystem::path& path);

EvalReport cmd_evaluate(const std::filesystem::path& predictions,
                        const std::filesystem::path& gold,
                        const std::vector<std::string>& inventory, bool whole_word);

/// Full command-line entry point. Returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace derivgen::cli
