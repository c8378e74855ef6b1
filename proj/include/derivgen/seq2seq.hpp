#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "derivgen/corpus.hpp"
#include "derivgen/numeric/tape.hpp"
#include "derivgen/numeric/tensor.hpp"

namespace derivgen::seq2seq {

using numeric::Tape;
using numeric::Tensor;
using numeric::Var;

struct ModelConfig {
  size_t source_vocab = 0;
  size_t target_vocab = 0;
  size_t embedding = 300;
  size_t hidden = 100;  // per encoder direction, and the decoder state size
  int bos_id = Vocab::kBos;
  int eos_id = Vocab::kEos;

  size_t context_size() const { return 2 * hidden; }
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

/// Gate weights stacked as [update; reset; candidate].
struct GruParams {
  Tensor input;     // [3H, in]
  Tensor gates;     // [2H, H], recurrent weights of update and reset gates
  Tensor candidate; // [H, H], recurrent weights of the candidate state
  Tensor bias;      // [3H]
};

struct Params {
  ModelConfig config;
  Tensor source_embedding;  // [Vs, E]
  Tensor target_embedding;  // [Vt, E]
  GruParams encoder_forward;
  GruParams encoder_backward;
  GruParams decoder;        // input [E + 2H]
  Tensor init_weight;       // [H, H], from the backward state at position 0
  Tensor init_bias;         // [H]
  Tensor attention_state;   // W [H, H]
  Tensor attention_source;  // U [H, 2H]
  Tensor attention_vector;  // v [H]
  Tensor readout_prev;      // [H, E]
  Tensor readout_state;     // [H, H]
  Tensor readout_context;   // [H, 2H]
  Tensor readout_bias;      // [H]
  Tensor output_weight;     // [Vt, H]
  Tensor output_bias;       // [Vt]

  /// All zeros.
  static Params zeros(const ModelConfig& config);
  /// Matrices uniform in (-scale, scale), biases zero.
  static Params random(const ModelConfig& config, uint64_t seed, double scale = 0.08);

  std::vector<std::pair<std::string, Tensor*>> named();
  std::vector<std::pair<std::string, const Tensor*>> named() const;
  std::vector<Tensor*> trainable();
  size_t num_parameters() const;

  void save(const std::filesystem::path& path) const;
  static Params load(const std::filesystem::path& path, const ModelConfig& config);
};

struct EncodedSource {
  std::vector<Var> states;  // h_i = [forward_i; backward_i], each 2H
  std::vector<Var> keys;    // U h_i, precomputed for attention
  Var memory;               // [2H, n]: the h_i as columns
  size_t source_length = 0;
};

struct Attention {
  Var context;
  Var weights;
};

struct StepOutput {
  Var state;
  Var log_dist;
  Attention attention;
};

/// The network's forward computation recorded on one tape.
class Graph {
 public:
  /// Parameters are trainable: backward() accumulates into their gradients.
  Graph(Tape& tape, Params& params);
  /// Inference only.
  Graph(Tape& tape, const Params& params);

  Tape& tape() { return tape_; }
  const ModelConfig& config() const { return config_; }

  Var gru(const GruParams& p, Var input, Var state);
  /// Throws DataError for ids outside the source vocabulary or an empty sequence.
  EncodedSource encode(std::span<const int> source_ids);
  Var initial_state(const EncodedSource& enc);
  Attention attend(Var prev_state, const EncodedSource& enc);
  Var readout(Var prev_embedding, Var state, Var context);
  StepOutput decode_step(int prev_token, Var prev_state, const EncodedSource& enc);
  /// Teacher-forced negative log-likelihood of target_ids (which end in EOS).
  Var sequence_loss(std::span<const int> source_ids, std::span<const int> target_ids);

 private:
  struct GruVars {
    Var input, gates, candidate, bias;
  };
  Graph(Tape& tape, const Params& params, bool trainable);
  Var bind(const Tensor& t);
  GruVars bind(const GruParams& p);
  const GruVars& vars_for(const GruParams& p) const;

  Tape& tape_;
  const Params& params_;
  bool trainable_;
  ModelConfig config_;
  Var source_embedding_, target_embedding_;
  GruVars encoder_forward_, encoder_backward_, decoder_;
  Var init_weight_, init_bias_;
  Var attention_state_, attention_source_, attention_vector_;
  Var readout_prev_, readout_state_, readout_context_, readout_bias_;
  Var output_weight_, output_bias_;
};

struct Hypothesis {
  std::vector<int> tokens;  // ends with EOS unless cut at max_len
  double log_prob = 0.0;
  std::vector<double> state;
};

struct BeamConfig {
  size_t beam = 12;
  size_t k = 1;
  size_t max_len = 0;
};

/// k-best list sorted by descending log-probability (then shorter, then
/// lexicographically smaller token sequences).
std::vector<Hypothesis> beam_search(const Params& params, std::span<const int> source_ids,
                                    const BeamConfig& config);
/// Argmax at every step; lowest id wins ties.
Hypothesis greedy_decode(const Params& params, std::span<const int> source_ids, size_t max_len);

/// Loss value for one pair (no gradient).
double sequence_loss_value(const Params& params, std::span<const int> source_ids,
                           std::span<const int> target_ids);

struct TrainConfig {
  size_t embedding = 300;
  size_t hidden = 100;
  size_t batch = 20;
  int epochs = 300;
  double rho = 0.95;
  double eps = 1e-6;
  double clip = 0.0;        // global gradient-norm clip; 0 disables
  double init_scale = 0.08;
  uint64_t seed = 1;
  int patience = 0;         // stop after this many epochs without dev improvement; 0 disables
  size_t dev_beam = 1;      // beam used for per-epoch dev accuracy
  size_t extra_len = 10;    // inference max_len = source length + extra_len

  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
  void validate() const;
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;  // mean per-sequence loss
  double dev_accuracy = 0.0;
  double dev_edit = 0.0;
  bool improved = false;
};

struct Model {
  Vocab vocab;
  TrainConfig config;
  Params params;
  int best_epoch = 0;
  double best_dev_accuracy = 0.0;
  double best_dev_edit = 0.0;

  /// `path` holds the tensor container; `path`.json the vocab, config and
  /// selection metrics.
  void save(const std::filesystem::path& path) const;
  static Model load(const std::filesystem::path& path);
  static std::filesystem::path sidecar_path(const std::filesystem::path& path);
};

struct Prediction {
  std::string form;
  double log_prob = 0.0;
};

/// k-best surface forms for base+tag. Throws DataError("unknown tag").
std::vector<Prediction> predict(const Model& model, std::string_view base, std::string_view tag,
                                size_t k, size_t beam);

using EpochCallback = std::function<void(const EpochLog&)>;

/// Adadelta over minibatches of mean sequence loss; after each epoch the dev
/// set is decoded and the best checkpoint (accuracy, then edit distance, then
/// earlier epoch) is kept. With no dev data the final epoch is kept.
Model train(const DatasetSplit& split, const TrainConfig& config,
            const EpochCallback& on_epoch = {});

}  // namespace derivgen::seq2seq
