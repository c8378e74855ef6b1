#include "derivgen/seq2seq.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <tuple>

#include "derivgen/error.hpp"
#include "derivgen/metrics.hpp"
#include "derivgen/numeric/adadelta.hpp"
#include "derivgen/numeric/checkpoint.hpp"
#include "derivgen/random.hpp"
#include "derivgen/utf8.hpp"

namespace derivgen::seq2seq {

namespace nm = numeric;

// ---------------------------------------------------------------------------
// Configuration

nlohmann::json ModelConfig::to_json() const {
  return {{"source_vocab", source_vocab}, {"target_vocab", target_vocab},
          {"embedding", embedding},       {"hidden", hidden},
          {"bos_id", bos_id},             {"eos_id", eos_id}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.source_vocab = j.at("source_vocab").get<size_t>();
  c.target_vocab = j.at("target_vocab").get<size_t>();
  c.embedding = j.at("embedding").get<size_t>();
  c.hidden = j.at("hidden").get<size_t>();
  c.bos_id = j.at("bos_id").get<int>();
  c.eos_id = j.at("eos_id").get<int>();
  return c;
}

nlohmann::json TrainConfig::to_json() const {
  return {{"embedding", embedding}, {"hidden", hidden},       {"batch", batch},
          {"epochs", epochs},       {"rho", rho},             {"eps", eps},
          {"clip", clip},           {"init_scale", init_scale}, {"seed", seed},
          {"patience", patience},   {"dev_beam", dev_beam},   {"extra_len", extra_len}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.embedding = j.at("embedding").get<size_t>();
  c.hidden = j.at("hidden").get<size_t>();
  c.batch = j.at("batch").get<size_t>();
  c.epochs = j.at("epochs").get<int>();
  c.rho = j.at("rho").get<double>();
  c.eps = j.at("eps").get<double>();
  c.clip = j.at("clip").get<double>();
  c.init_scale = j.at("init_scale").get<double>();
  c.seed = j.at("seed").get<uint64_t>();
  c.patience = j.at("patience").get<int>();
  c.dev_beam = j.at("dev_beam").get<size_t>();
  c.extra_len = j.at("extra_len").get<size_t>();
  return c;
}

void TrainConfig::validate() const {
  if (embedding == 0 || hidden == 0 || batch == 0 || epochs < 1 || dev_beam == 0 ||
      extra_len == 0) {
    throw UsageError("seq2seq sizes, batch, epochs, dev beam and extra length must be positive");
  }
  if (!(rho > 0.0 && rho < 1.0) || !(eps > 0.0)) throw UsageError("adadelta needs 0<rho<1, eps>0");
  if (clip < 0.0 || init_scale <= 0.0 || patience < 0) {
    throw UsageError("clip and patience must be non-negative, init scale positive");
  }
}

// ---------------------------------------------------------------------------
// Parameters

namespace {

GruParams gru_zeros(size_t in, size_t h) {
  return {Tensor({3 * h, in}), Tensor({2 * h, h}), Tensor({h, h}), Tensor({3 * h})};
}

bool is_bias(const std::string& name) { return name.ends_with("bias"); }

}  // namespace

Params Params::zeros(const ModelConfig& config) {
  if (config.source_vocab == 0 || config.target_vocab == 0 || config.embedding == 0 ||
      config.hidden == 0) {
    throw UsageError("model dimensions must be positive");
  }
  const size_t e = config.embedding;
  const size_t h = config.hidden;
  const size_t c = config.context_size();
  Params p;
  p.config = config;
  p.source_embedding = Tensor({config.source_vocab, e});
  p.target_embedding = Tensor({config.target_vocab, e});
  p.encoder_forward = gru_zeros(e, h);
  p.encoder_backward = gru_zeros(e, h);
  p.decoder = gru_zeros(e + c, h);
  p.init_weight = Tensor({h, h});
  p.init_bias = Tensor({h});
  p.attention_state = Tensor({h, h});
  p.attention_source = Tensor({h, c});
  p.attention_vector = Tensor({h});
  p.readout_prev = Tensor({h, e});
  p.readout_state = Tensor({h, h});
  p.readout_context = Tensor({h, c});
  p.readout_bias = Tensor({h});
  p.output_weight = Tensor({config.target_vocab, h});
  p.output_bias = Tensor({config.target_vocab});
  return p;
}

Params Params::random(const ModelConfig& config, uint64_t seed, double scale) {
  Params p = zeros(config);
  Rng rng(seed);
  for (auto& [name, t] : p.named()) {
    if (is_bias(name)) continue;
    for (double& v : t->values()) v = rng.uniform(-scale, scale);
  }
  return p;
}

std::vector<std::pair<std::string, Tensor*>> Params::named() {
  std::vector<std::pair<std::string, Tensor*>> out;
  out.emplace_back("source_embedding", &source_embedding);
  out.emplace_back("target_embedding", &target_embedding);
  auto gru = [&](const std::string& prefix, GruParams& g) {
    out.emplace_back(prefix + ".input", &g.input);
    out.emplace_back(prefix + ".gates", &g.gates);
    out.emplace_back(prefix + ".candidate", &g.candidate);
    out.emplace_back(prefix + ".bias", &g.bias);
  };
  gru("encoder_forward", encoder_forward);
  gru("encoder_backward", encoder_backward);
  gru("decoder", decoder);
  out.emplace_back("init.weight", &init_weight);
  out.emplace_back("init.bias", &init_bias);
  out.emplace_back("attention.state", &attention_state);
  out.emplace_back("attention.source", &attention_source);
  out.emplace_back("attention.vector", &attention_vector);
  out.emplace_back("readout.prev", &readout_prev);
  out.emplace_back("readout.state", &readout_state);
  out.emplace_back("readout.context", &readout_context);
  out.emplace_back("readout.bias", &readout_bias);
  out.emplace_back("output.weight", &output_weight);
  out.emplace_back("output.bias", &output_bias);
  return out;
}

std::vector<std::pair<std::string, const Tensor*>> Params::named() const {
  std::vector<std::pair<std::string, const Tensor*>> out;
  for (auto& [name, t] : const_cast<Params*>(this)->named()) out.emplace_back(name, t);
  return out;
}

std::vector<Tensor*> Params::trainable() {
  std::vector<Tensor*> out;
  for (auto& [name, t] : named()) out.push_back(t);
  return out;
}

size_t Params::num_parameters() const {
  size_t n = 0;
  for (const auto& [name, t] : named()) n += t->size();
  return n;
}

void Params::save(const std::filesystem::path& path) const {
  std::map<std::string, const Tensor*> tensors;
  for (const auto& [name, t] : named()) tensors.emplace(name, t);
  nm::save_tensors(path, tensors);
}

Params Params::load(const std::filesystem::path& path, const ModelConfig& config) {
  auto tensors = nm::load_tensors(path);
  Params p = zeros(config);
  for (auto& [name, t] : p.named()) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw ModelError("checkpoint lacks tensor " + name);
    if (it->second.shape() != t->shape()) {
      throw ModelError("tensor " + name + " has shape " + nm::shape_string(it->second.shape()) +
                       ", expected " + nm::shape_string(t->shape()));
    }
    *t = std::move(it->second);
  }
  return p;
}

// ---------------------------------------------------------------------------
// Forward computation

Graph::Graph(Tape& tape, Params& params) : Graph(tape, params, true) {}
Graph::Graph(Tape& tape, const Params& params) : Graph(tape, params, false) {}

Graph::Graph(Tape& tape, const Params& params, bool trainable)
    : tape_(tape), params_(params), trainable_(trainable), config_(params.config) {
  source_embedding_ = bind(params.source_embedding);
  target_embedding_ = bind(params.target_embedding);
  encoder_forward_ = bind(params.encoder_forward);
  encoder_backward_ = bind(params.encoder_backward);
  decoder_ = bind(params.decoder);
  init_weight_ = bind(params.init_weight);
  init_bias_ = bind(params.init_bias);
  attention_state_ = bind(params.attention_state);
  attention_source_ = bind(params.attention_source);
  attention_vector_ = bind(params.attention_vector);
  readout_prev_ = bind(params.readout_prev);
  readout_state_ = bind(params.readout_state);
  readout_context_ = bind(params.readout_context);
  readout_bias_ = bind(params.readout_bias);
  output_weight_ = bind(params.output_weight);
  output_bias_ = bind(params.output_bias);
}

Var Graph::bind(const Tensor& t) {
  return trainable_ ? tape_.param(const_cast<Tensor&>(t)) : tape_.frozen(t);
}

Graph::GruVars Graph::bind(const GruParams& p) {
  return {bind(p.input), bind(p.gates), bind(p.candidate), bind(p.bias)};
}

const Graph::GruVars& Graph::vars_for(const GruParams& p) const {
  if (&p == &params_.encoder_forward) return encoder_forward_;
  if (&p == &params_.encoder_backward) return encoder_backward_;
  if (&p == &params_.decoder) return decoder_;
  throw std::invalid_argument("GRU parameters do not belong to this graph");
}

Var Graph::gru(const GruParams& p, Var input, Var state) {
  const auto& w = vars_for(p);
  const size_t h = state.size();
  Var projected = nm::matmul(w.input, input) + w.bias;
  Var recurrent = nm::matmul(w.gates, state);
  Var update = nm::sigmoid(nm::slice(projected, 0, h) + nm::slice(recurrent, 0, h));
  Var reset = nm::sigmoid(nm::slice(projected, h, h) + nm::slice(recurrent, h, h));
  Var candidate =
      nm::tanh(nm::slice(projected, 2 * h, h) + nm::matmul(w.candidate, reset * state));
  // (1 - z) * h + z * h~
  return state + update * (candidate - state);
}

EncodedSource Graph::encode(std::span<const int> source_ids) {
  if (source_ids.empty()) throw DataError("cannot encode an empty source sequence");
  const size_t n = source_ids.size();
  std::vector<Var> embedded;
  embedded.reserve(n);
  for (int id : source_ids) {
    if (id < 0 || static_cast<size_t>(id) >= config_.source_vocab) {
      throw DataError("source id " + std::to_string(id) + " outside vocabulary of size " +
                      std::to_string(config_.source_vocab));
    }
    embedded.push_back(nm::lookup(source_embedding_, static_cast<size_t>(id)));
  }
  const size_t h = config_.hidden;
  std::vector<Var> forward(n), backward(n);
  Var state = tape_.constant(Tensor({h}));
  for (size_t i = 0; i < n; ++i) forward[i] = state = gru(params_.encoder_forward, embedded[i], state);
  state = tape_.constant(Tensor({h}));
  for (size_t i = n; i-- > 0;) backward[i] = state = gru(params_.encoder_backward, embedded[i], state);

  EncodedSource enc;
  enc.source_length = n;
  for (size_t i = 0; i < n; ++i) {
    const Var parts[] = {forward[i], backward[i]};
    enc.states.push_back(nm::concat(parts));
    enc.keys.push_back(nm::matmul(attention_source_, enc.states.back()));
  }
  enc.memory = nm::transpose(nm::stack(enc.states));
  return enc;
}

Var Graph::initial_state(const EncodedSource& enc) {
  // Backward half of h_1: the right-to-left encoder's final state.
  Var first_backward = nm::slice(enc.states.front(), config_.hidden, config_.hidden);
  return nm::tanh(nm::matmul(init_weight_, first_backward) + init_bias_);
}

Attention Graph::attend(Var prev_state, const EncodedSource& enc) {
  Var query = nm::matmul(attention_state_, prev_state);
  std::vector<Var> scores;
  scores.reserve(enc.keys.size());
  for (const Var& key : enc.keys) scores.push_back(nm::dot(attention_vector_, nm::tanh(query + key)));
  Var energies = nm::concat(scores);
  Var weights = nm::softmax(energies);
  return {nm::matmul(enc.memory, weights), weights};
}

Var Graph::readout(Var prev_embedding, Var state, Var context) {
  Var hidden = nm::tanh(nm::matmul(readout_prev_, prev_embedding) +
                        nm::matmul(readout_state_, state) +
                        nm::matmul(readout_context_, context) + readout_bias_);
  return nm::log_softmax(nm::matmul(output_weight_, hidden) + output_bias_);
}

StepOutput Graph::decode_step(int prev_token, Var prev_state, const EncodedSource& enc) {
  if (prev_token < 0 || static_cast<size_t>(prev_token) >= config_.target_vocab) {
    throw DataError("target id " + std::to_string(prev_token) + " outside vocabulary");
  }
  Attention att = attend(prev_state, enc);
  Var prev_embedding = nm::lookup(target_embedding_, static_cast<size_t>(prev_token));
  const Var input_parts[] = {prev_embedding, att.context};
  Var state = gru(params_.decoder, nm::concat(input_parts), prev_state);
  return {state, readout(prev_embedding, state, att.context), att};
}

Var Graph::sequence_loss(std::span<const int> source_ids, std::span<const int> target_ids) {
  EncodedSource enc = encode(source_ids);
  Var state = initial_state(enc);
  int prev = config_.bos_id;
  std::vector<Var> terms;
  terms.reserve(target_ids.size());
  for (int y : target_ids) {
    if (y < 0 || static_cast<size_t>(y) >= config_.target_vocab) {
      throw DataError("target id " + std::to_string(y) + " outside vocabulary");
    }
    StepOutput step = decode_step(prev, state, enc);
    terms.push_back(nm::pick(step.log_dist, static_cast<size_t>(y)));
    state = step.state;
    prev = y;
  }
  if (terms.empty()) throw DataError("empty target sequence");
  return nm::scale(nm::sum(nm::concat(terms)), -1.0);
}

double sequence_loss_value(const Params& params, std::span<const int> source_ids,
                           std::span<const int> target_ids) {
  Tape tape;
  Graph graph(tape, params);
  return graph.sequence_loss(source_ids, target_ids).value();
}

// ---------------------------------------------------------------------------
// Search

namespace {

struct Live {
  std::vector<int> tokens;
  double log_prob;
  Var state;
};

// Descending log-probability, then shorter, then lexicographically smaller.
bool ranks_before(const std::vector<int>& a, double lpa, const std::vector<int>& b, double lpb) {
  if (lpa != lpb) return lpa > lpb;
  if (a.size() != b.size()) return a.size() < b.size();
  return a < b;
}

std::vector<double> copy_values(Var v) { return {v.values().begin(), v.values().end()}; }

}  // namespace

std::vector<Hypothesis> beam_search(const Params& params, std::span<const int> source_ids,
                                    const BeamConfig& config) {
  if (config.k < 1 || config.beam < config.k || config.max_len < 1) {
    throw UsageError("beam search needs beam >= k >= 1 and max_len >= 1");
  }
  Tape tape;
  Graph graph(tape, params);
  const int eos = params.config.eos_id;
  EncodedSource enc = graph.encode(source_ids);
  std::vector<Live> live{{{}, 0.0, graph.initial_state(enc)}};
  std::vector<Hypothesis> finished;

  struct Candidate {
    size_t parent;
    int token;
    double log_prob;
    Var state;
  };
  for (size_t t = 0; t < config.max_len && !live.empty(); ++t) {
    std::vector<Candidate> candidates;
    for (size_t i = 0; i < live.size(); ++i) {
      const int prev = live[i].tokens.empty() ? params.config.bos_id : live[i].tokens.back();
      StepOutput step = graph.decode_step(prev, live[i].state, enc);
      auto dist = step.log_dist.values();
      for (size_t y = 0; y < dist.size(); ++y) {
        candidates.push_back({i, static_cast<int>(y), live[i].log_prob + dist[y], step.state});
      }
    }
    auto cmp = [&](const Candidate& a, const Candidate& b) {
      if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
      const auto& ta = live[a.parent].tokens;
      const auto& tb = live[b.parent].tokens;
      if (ta != tb) return ta < tb;
      return a.token < b.token;
    };
    const size_t keep = std::min(config.beam, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + keep, candidates.end(), cmp);
    candidates.resize(keep);

    const bool last_step = t + 1 == config.max_len;
    std::vector<Live> next;
    for (auto& c : candidates) {
      std::vector<int> tokens = live[c.parent].tokens;
      tokens.push_back(c.token);
      if (c.token == eos || last_step) {
        finished.push_back({std::move(tokens), c.log_prob, copy_values(c.state)});
      } else {
        next.push_back({std::move(tokens), c.log_prob, c.state});
      }
    }
    live = std::move(next);

    // Scores only decrease, so once k finished hypotheses beat every live
    // one the k-best list is settled.
    if (finished.size() >= config.k && !live.empty()) {
      std::vector<double> scores;
      for (const auto& f : finished) scores.push_back(f.log_prob);
      std::nth_element(scores.begin(), scores.begin() + (config.k - 1), scores.end(),
                       std::greater<>());
      double best_live = -std::numeric_limits<double>::infinity();
      for (const auto& l : live) best_live = std::max(best_live, l.log_prob);
      if (scores[config.k - 1] > best_live) live.clear();
    }
  }
  std::sort(finished.begin(), finished.end(), [](const Hypothesis& a, const Hypothesis& b) {
    return ranks_before(a.tokens, a.log_prob, b.tokens, b.log_prob);
  });
  finished.erase(std::unique(finished.begin(), finished.end(),
                             [](const Hypothesis& a, const Hypothesis& b) {
                               return a.tokens == b.tokens;
                             }),
                 finished.end());
  if (finished.size() > config.k) finished.resize(config.k);
  return finished;
}

Hypothesis greedy_decode(const Params& params, std::span<const int> source_ids, size_t max_len) {
  if (max_len < 1) throw UsageError("max_len must be at least 1");
  Tape tape;
  Graph graph(tape, params);
  EncodedSource enc = graph.encode(source_ids);
  Var state = graph.initial_state(enc);
  Hypothesis hyp;
  int prev = params.config.bos_id;
  for (size_t t = 0; t < max_len; ++t) {
    StepOutput step = graph.decode_step(prev, state, enc);
    auto dist = step.log_dist.values();
    const auto best = static_cast<int>(std::max_element(dist.begin(), dist.end()) - dist.begin());
    hyp.tokens.push_back(best);
    hyp.log_prob += dist[best];
    state = step.state;
    prev = best;
    if (best == params.config.eos_id) break;
  }
  hyp.state = copy_values(state);
  return hyp;
}

// ---------------------------------------------------------------------------
// Model artifact

std::filesystem::path Model::sidecar_path(const std::filesystem::path& path) {
  auto p = path;
  p += ".json";
  return p;
}

void Model::save(const std::filesystem::path& path) const {
  params.save(path);
  nlohmann::json j;
  j["format"] = "derivgen-seq2seq";
  j["version"] = 1;
  j["vocab"] = vocab.to_json();
  j["model"] = params.config.to_json();
  j["train"] = config.to_json();
  j["best_epoch"] = best_epoch;
  j["best_dev_accuracy"] = best_dev_accuracy;
  j["best_dev_edit"] = best_dev_edit;
  std::ofstream out(sidecar_path(path), std::ios::binary);
  if (!out) throw ModelError("cannot write " + sidecar_path(path).string());
  out << j.dump(2) << '\n';
}

Model Model::load(const std::filesystem::path& path) {
  std::ifstream in(sidecar_path(path));
  if (!in) throw ModelError("cannot read " + sidecar_path(path).string());
  nlohmann::json j;
  try {
    in >> j;
    if (j.at("format") != "derivgen-seq2seq" || j.at("version") != 1) {
      throw ModelError("unsupported seq2seq sidecar");
    }
    Model m;
    m.vocab = Vocab::from_json(j.at("vocab"));
    m.config = TrainConfig::from_json(j.at("train"));
    m.params = Params::load(path, ModelConfig::from_json(j.at("model")));
    m.best_epoch = j.at("best_epoch").get<int>();
    m.best_dev_accuracy = j.at("best_dev_accuracy").get<double>();
    m.best_dev_edit = j.at("best_dev_edit").get<double>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ModelError(std::string("malformed seq2seq sidecar: ") + e.what());
  }
}

std::vector<Prediction> predict(const Model& model, std::string_view base, std::string_view tag,
                                size_t k, size_t beam) {
  auto source = encode_source(base, tag, model.vocab);
  const size_t max_len = utf8::decode(base).size() + model.config.extra_len;
  std::vector<Prediction> out;
  if (beam == 1 && k == 1) {
    auto hyp = greedy_decode(model.params, source, max_len);
    out.push_back({model.vocab.decode(hyp.tokens), hyp.log_prob});
    return out;
  }
  for (auto& hyp : beam_search(model.params, source, {beam, k, max_len})) {
    out.push_back({model.vocab.decode(hyp.tokens), hyp.log_prob});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training

namespace {

struct Encoded {
  std::vector<int> source;
  std::vector<int> target;
};

std::pair<double, double> dev_scores(const Model& model, std::span<const Triple> dev) {
  std::vector<std::string> pred, gold;
  for (const auto& t : dev) {
    gold.push_back(t.derived);
    if (!model.vocab.tag_id(t.tag)) {
      pred.emplace_back();
      continue;
    }
    pred.push_back(predict(model, t.base, t.tag, 1, model.config.dev_beam).front().form);
  }
  return {accuracy(pred, gold), avg_edit_distance(pred, gold)};
}

}  // namespace

Model train(const DatasetSplit& split, const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  if (split.train.empty()) throw DataError("empty training split");
  Model model;
  model.config = config;
  model.vocab = build_vocab(split.train);
  ModelConfig mc;
  mc.source_vocab = mc.target_vocab = model.vocab.size();
  mc.embedding = config.embedding;
  mc.hidden = config.hidden;
  model.params = Params::random(mc, config.seed, config.init_scale);

  std::vector<Encoded> data;
  for (const auto& t : split.train) {
    data.push_back({encode_source(t, model.vocab), model.vocab.encode_target(t.derived)});
  }
  Model best = model;
  bool have_best = false;
  int stale = 0;

  nm::Adadelta optimizer(config.rho, config.eps);
  auto params = model.params.trainable();
  std::vector<size_t> order(data.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(config.seed ^ 0x9E3779B97F4A7C15ULL);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    rng.shuffle(std::span(order));
    double loss_total = 0.0;
    for (size_t start = 0; start < order.size(); start += config.batch) {
      const size_t end = std::min(order.size(), start + config.batch);
      const double inv = 1.0 / static_cast<double>(end - start);
      for (size_t b = start; b < end; ++b) {
        const auto& ex = data[order[b]];
        Tape tape;
        Graph graph(tape, model.params);
        Var loss = graph.sequence_loss(ex.source, ex.target);
        loss_total += loss.value();
        tape.backward(nm::scale(loss, inv));
      }
      if (config.clip > 0.0) nm::clip_grad_norm(params, config.clip);
      optimizer.step(params);
    }

    EpochLog log;
    log.epoch = epoch;
    log.train_loss = loss_total / static_cast<double>(data.size());
    if (!split.dev.empty()) {
      std::tie(log.dev_accuracy, log.dev_edit) = dev_scores(model, split.dev);
    }
    // Without dev data the latest epoch is kept.
    log.improved = !have_best || split.dev.empty() || log.dev_accuracy > best.best_dev_accuracy ||
                   (log.dev_accuracy == best.best_dev_accuracy &&
                    log.dev_edit < best.best_dev_edit);
    if (log.improved) {
      best.params = model.params;
      best.best_epoch = epoch;
      best.best_dev_accuracy = log.dev_accuracy;
      best.best_dev_edit = log.dev_edit;
      have_best = true;
      stale = 0;
    } else {
      ++stale;
    }
    if (on_epoch) on_epoch(log);
    if (config.patience > 0 && stale >= config.patience) break;
  }
  return best;
}

}  // namespace derivgen::seq2seq
