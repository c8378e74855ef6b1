#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "derivgen/error.hpp"
#include "derivgen/random.hpp"
#include "derivgen/seq2seq.hpp"
#include "derivgen/utf8.hpp"
#include "micro.hpp"
#include "support.hpp"

using namespace derivgen;
using namespace derivgen::seq2seq;
namespace nm = derivgen::numeric;

namespace {

Var random_var(Tape& tape, size_t n, Rng& rng, double scale = 1.0) {
  Tensor t({n});
  for (double& v : t.values()) v = rng.uniform(-scale, scale);
  return tape.constant(std::move(t));
}

std::vector<double> to_vec(std::span<const double> s) { return {s.begin(), s.end()}; }

// Runs backward once on the trainable graph, then compares each listed
// tensor's gradient with central differences of the same computation.
double layer_gradient_error(Params& params, const std::vector<Tensor*>& tensors,
                            const std::function<Var(Tape&, Graph&)>& build) {
  {
    Tape tape;
    Graph graph(tape, params);
    for (Tensor* t : params.trainable()) t->zero_grad();
    tape.backward(build(tape, graph));
  }
  const Params& frozen = params;
  auto value = [&] {
    Tape tape;
    Graph graph(tape, frozen);
    return build(tape, graph).value();
  };
  double worst = 0.0;
  for (Tensor* t : tensors) worst = std::max(worst, testing::max_gradient_error(*t, value));
  return worst;
}

}  // namespace

TEST_CASE("parameter shapes follow the configuration") {
  ModelConfig cfg{10, 12, 300, 100, Vocab::kBos, Vocab::kEos};
  auto p = Params::zeros(cfg);
  CHECK(p.source_embedding.shape() == nm::Shape{10, 300});
  CHECK(p.encoder_forward.input.shape() == nm::Shape{300, 300});
  CHECK(p.decoder.input.shape() == nm::Shape{300, 500});
  CHECK(p.attention_source.shape() == nm::Shape{100, 200});
  CHECK(p.output_weight.shape() == nm::Shape{12, 100});
  size_t total = 0;
  for (const auto& [name, t] : p.named()) total += t->size();
  CHECK(total == p.num_parameters());
}

TEST_CASE("random init draws matrices and leaves biases at zero") {
  auto p = Params::random(micro::config(), 3, 0.08);
  for (const auto& [name, t] : p.named()) {
    const bool bias = name.ends_with("bias");
    for (double v : t->values()) {
      REQUIRE(std::abs(v) < 0.08);
      if (bias) REQUIRE(v == 0.0);
    }
  }
  auto q = Params::random(micro::config(), 3, 0.08);
  CHECK(to_vec(p.output_weight.values()) == to_vec(q.output_weight.values()));
}

TEST_CASE("encode of a length-1 input gives one state of twice the hidden size") {
  ModelConfig cfg{6, 6, 8, 100, 1, 0};
  auto p = Params::random(cfg, 1, 0.1);
  Tape tape;
  Graph g(tape, static_cast<const Params&>(p));
  const int ids[] = {2};
  auto enc = g.encode(ids);
  REQUIRE(enc.states.size() == 1);
  CHECK(enc.states[0].size() == 200);
  CHECK(enc.source_length == 1);
}

TEST_CASE("encode rejects bad ids and empty input") {
  auto p = Params::random(micro::config(), 1);
  Tape tape;
  Graph g(tape, static_cast<const Params&>(p));
  const int bad[] = {0, 6};
  CHECK_THROWS_AS(g.encode(bad), DataError);
  CHECK_THROWS_AS(g.encode(std::span<const int>()), DataError);
}

TEST_CASE("zero weights give zero encoder states") {
  auto p = Params::zeros(micro::config());
  Tape tape;
  Graph g(tape, static_cast<const Params&>(p));
  const int ids[] = {1, 2, 3};
  for (const auto& h : g.encode(ids).states) {
    for (double v : h.values()) CHECK(v == 0.0);
  }
}

TEST_CASE("reversing the input swaps the encoder directions") {
  auto p = Params::random(micro::config(), 5, 0.5);
  p.encoder_backward = p.encoder_forward;
  const std::vector<int> x = {1, 4, 2, 5};
  std::vector<int> rx(x.rbegin(), x.rend());
  Tape tape;
  Graph g(tape, static_cast<const Params&>(p));
  auto a = g.encode(x);
  auto b = g.encode(rx);
  const size_t h = p.config.hidden, n = x.size();
  for (size_t i = 0; i < n; ++i) {
    auto fwd_rev = b.states[i].values().subspan(0, h);
    auto bwd = a.states[n - 1 - i].values().subspan(h, h);
    CHECK(to_vec(fwd_rev) == to_vec(bwd));
  }
}

TEST_CASE("attention over one position is the identity") {
  auto p = Params::random(micro::config(), 2, 0.5);
  Tape tape;
  Graph g(tape, static_cast<const Params&>(p));
  const int ids[] = {3};
  auto enc = g.encode(ids);
  Rng rng(1);
  auto att = g.attend(random_var(tape, 3, rng), enc);
  CHECK(att.weights.values()[0] == 1.0);
  CHECK(to_vec(att.context.values()) == to_vec(enc.states[0].values()));
}

TEST_CASE("identical memory states get uniform attention") {
  auto p = Params::random(micro::config(), 2, 0.5);
  Tape tape;
  Graph g(tape, static_cast<const Params&>(p));
  Rng rng(2);
  Var h = random_var(tape, 6, rng);
  EncodedSource enc;
  Var u = tape.frozen(p.attention_source);
  for (int i = 0; i < 4; ++i) {
    enc.states.push_back(h);
    enc.keys.push_back(nm::matmul(u, h));
  }
  enc.memory = nm::transpose(nm::stack(enc.states));
  enc.source_length = 4;
  auto att = g.attend(random_var(tape, 3, rng), enc);
  for (double w : att.weights.values()) CHECK(w == doctest::Approx(0.25));
}

TEST_CASE("attention context equals an explicit weighted sum, and weights form a simplex") {
  Rng rng(3);
  for (int round = 0; round < 1000; ++round) {
    auto p = Params::random(micro::config(), rng.next(), 1.0);
    Tape tape;
    Graph g(tape, static_cast<const Params&>(p));
    std::vector<int> ids(1 + rng.below(5));
    for (int& id : ids) id = static_cast<int>(rng.below(6));
    auto enc = g.encode(ids);
    Var s = random_var(tape, 3, rng, 2.0);
    auto att = g.attend(s, enc);

    // Independent recomputation: e_i = v . tanh(W s + U h_i)
    const size_t H = 3, n = ids.size();
    std::vector<double> e(n);
    for (size_t i = 0; i < n; ++i) {
      auto hi = enc.states[i].values();
      double score = 0.0;
      for (size_t r = 0; r < H; ++r) {
        double acc = 0.0;
        for (size_t c = 0; c < H; ++c) acc += p.attention_state.at(r, c) * s.values()[c];
        for (size_t c = 0; c < 2 * H; ++c) acc += p.attention_source.at(r, c) * hi[c];
        score += p.attention_vector[r] * std::tanh(acc);
      }
      e[i] = score;
    }
    const double mx = *std::max_element(e.begin(), e.end());
    double z = 0.0;
    for (double& v : e) z += (v = std::exp(v - mx));
    double total = 0.0;
    for (size_t i = 0; i < n; ++i) {
      const double a = att.weights.values()[i];
      REQUIRE(a >= 0.0);
      REQUIRE(std::abs(a - e[i] / z) < 1e-12);
      total += a;
    }
    REQUIRE(std::abs(total - 1.0) < 1e-9);
    for (size_t c = 0; c < 2 * H; ++c) {
      double expected = 0.0;
      for (size_t i = 0; i < n; ++i) expected += e[i] / z * enc.states[i].values()[c];
      REQUIRE(std::abs(att.context.values()[c] - expected) < 1e-12);
    }
  }
}

TEST_CASE("decode_step gives a normalized, deterministic distribution") {
  auto p = Params::random(micro::config(), 8, 1.0);
  Tape tape;
  Graph g(tape, static_cast<const Params&>(p));
  const int ids[] = {1, 2, 3};
  auto enc = g.encode(ids);
  Var s0 = g.initial_state(enc);
  auto a = g.decode_step(1, s0, enc);
  auto b = g.decode_step(1, s0, enc);
  double total = 0.0;
  for (double v : a.log_dist.values()) {
    CHECK(v <= 0.0);
    total += std::exp(v);
  }
  CHECK(std::abs(total - 1.0) < 1e-9);
  CHECK(to_vec(a.log_dist.values()) == to_vec(b.log_dist.values()));
  CHECK(to_vec(a.state.values()) == to_vec(b.state.values()));
  CHECK_THROWS_AS(g.decode_step(99, s0, enc), DataError);
}

TEST_CASE("sequence loss equals the summed per-step log-probabilities") {
  Rng rng(4);
  for (int round = 0; round < 50; ++round) {
    auto p = Params::random(micro::config(), rng.next(), 1.0);
    const std::vector<int> src = {1, 5, 2};
    std::vector<int> tgt(1 + rng.below(4));
    for (int& y : tgt) y = 1 + static_cast<int>(rng.below(5));
    tgt.push_back(p.config.eos_id);

    Tape tape;
    Graph g(tape, static_cast<const Params&>(p));
    auto enc = g.encode(src);
    Var s = g.initial_state(enc);
    int prev = p.config.bos_id;
    double log_prob = 0.0;
    for (int y : tgt) {
      auto step = g.decode_step(prev, s, enc);
      log_prob += step.log_dist.values()[y];
      s = step.state;
      prev = y;
    }
    const double loss = sequence_loss_value(p, src, tgt);
    REQUIRE(loss >= 0.0);
    REQUIRE(std::abs(loss + log_prob) < 1e-9);
  }
}

TEST_CASE("uniform output distribution gives (|y|+1) ln V") {
  ModelConfig cfg{7, 9, 5, 4, Vocab::kBos, Vocab::kEos};
  auto p = Params::zeros(cfg);
  const std::vector<int> src = {4, 5, 6};
  const std::vector<int> tgt = {4, 5, 6, 7, Vocab::kEos};  // |y| = 4 plus EOS
  CHECK(sequence_loss_value(p, src, tgt) == doctest::Approx(5 * std::log(9.0)).epsilon(1e-12));
}

TEST_CASE("GRU cell gradients match finite differences") {
  auto p = Params::random(micro::config(), 11, 0.8);
  Rng rng(12);
  Tensor x({4}), s({3}), r({3});
  for (auto* t : {&x, &s, &r}) {
    for (double& v : t->values()) v = rng.uniform(-1, 1);
  }
  const auto& gru = p.encoder_forward;
  auto build = [&](Tape& tape, Graph& g) {
    Var h = g.gru(gru, tape.constant(x), tape.constant(s));
    return nm::dot(h, tape.constant(r));
  };
  auto& w = p.encoder_forward;
  CHECK(layer_gradient_error(p, {&w.input, &w.gates, &w.candidate, &w.bias}, build) < 1e-4);
}

TEST_CASE("attention gradients match finite differences") {
  auto p = Params::random(micro::config(), 13, 0.8);
  Rng rng(14);
  Tensor s({3}), r({6}), q({3});
  for (auto* t : {&s, &r, &q}) {
    for (double& v : t->values()) v = rng.uniform(-1, 1);
  }
  const int ids[] = {2, 4, 1};
  auto build = [&](Tape& tape, Graph& g) {
    auto enc = g.encode(ids);
    auto att = g.attend(tape.constant(s), enc);
    return nm::dot(att.context, tape.constant(r)) + nm::dot(att.weights, tape.constant(q));
  };
  CHECK(layer_gradient_error(p, {&p.attention_state, &p.attention_source, &p.attention_vector}, build) < 1e-4);
}

TEST_CASE("output MLP gradients match finite differences") {
  auto p = Params::random(micro::config(), 15, 0.8);
  Rng rng(16);
  Tensor e({4}), s({3}), c({6});
  for (auto* t : {&e, &s, &c}) {
    for (double& v : t->values()) v = rng.uniform(-1, 1);
  }
  auto build = [&](Tape& tape, Graph& g) {
    return nm::pick(g.readout(tape.constant(e), tape.constant(s), tape.constant(c)), 2);
  };
  CHECK(layer_gradient_error(p, {&p.readout_prev, &p.readout_state, &p.readout_context,
                                   &p.readout_bias, &p.output_weight, &p.output_bias}, build) < 1e-4);
}

TEST_CASE("end-to-end gradients of the micro model match finite differences") {
  auto p = Params::random(micro::config(), 17, 0.5);
  CHECK(micro::max_gradient_error(p) < 1e-4);
}

TEST_CASE("beam search equals exhaustive enumeration on tiny models") {
  Rng rng(21);
  for (int round = 0; round < 50; ++round) {
    auto p = Params::random(micro::beam_config(2 + rng.below(2)), rng.next(), 2.0);
    const std::vector<int> src = {0, 1, static_cast<int>(rng.below(p.config.source_vocab))};
    const size_t max_len = 1 + rng.below(4);
    auto best = micro::exhaustive_best(p, src, max_len);
    auto beam = beam_search(p, src, {12, 1, max_len});
    REQUIRE(beam.size() == 1);
    CHECK(beam[0].tokens == best.tokens);
    CHECK(beam[0].log_prob == doctest::Approx(best.log_prob).epsilon(1e-12));
  }
}

TEST_CASE("beam width 1 is greedy decoding") {
  Rng rng(22);
  for (int round = 0; round < 200; ++round) {
    auto p = Params::random(micro::config(), rng.next(), 2.0);
    const std::vector<int> src = {1, 2, 3};
    auto greedy = greedy_decode(p, src, 6);
    auto beam = beam_search(p, src, {1, 1, 6});
    REQUIRE(beam.size() == 1);
    REQUIRE(beam[0].tokens == greedy.tokens);
    REQUIRE(beam[0].log_prob == greedy.log_prob);
  }
}

TEST_CASE("k-best lists are sorted, unique and prefix-consistent") {
  Rng rng(23);
  for (int round = 0; round < 1000; ++round) {
    auto p = Params::random(micro::config(), rng.next(), 1.5);
    std::vector<int> src(1 + rng.below(3));
    for (int& id : src) id = static_cast<int>(rng.below(6));
    auto ten = beam_search(p, src, {12, 10, 5});
    auto one = beam_search(p, src, {12, 1, 5});
    REQUIRE(!ten.empty());
    REQUIRE(ten.size() <= 10);
    REQUIRE(one.at(0).tokens == ten[0].tokens);
    for (size_t i = 0; i < ten.size(); ++i) {
      REQUIRE(ten[i].log_prob <= 0.0);
      REQUIRE(std::count(ten[i].tokens.begin(), ten[i].tokens.end(), p.config.eos_id) <= 1);
      if (i > 0) {
        REQUIRE(ten[i - 1].log_prob >= ten[i].log_prob);
        REQUIRE(ten[i - 1].tokens != ten[i].tokens);
      }
    }
  }
}

TEST_CASE("hypothesis scores are the model log-probabilities of their tokens") {
  auto p = Params::random(micro::config(), 24, 1.5);
  const std::vector<int> src = {1, 4, 5};
  for (const auto& h : beam_search(p, src, {12, 5, 4})) {
    CHECK(micro::path_log_prob(p, src, h.tokens) == doctest::Approx(h.log_prob).epsilon(1e-12));
  }
}

TEST_CASE("wider beams never find a worse 1-best on a fixed input") {
  Rng rng(25);
  for (int round = 0; round < 100; ++round) {
    auto p = Params::random(micro::config(), rng.next(), 2.0);
    const std::vector<int> src = {2, 3, 1};
    double previous = -std::numeric_limits<double>::infinity();
    for (size_t beam : {1, 2, 4, 8, 12}) {
      auto best = beam_search(p, src, {beam, 1, 5});
      REQUIRE(best[0].log_prob >= previous - 1e-12);
      previous = best[0].log_prob;
    }
  }
}

TEST_CASE("beam search rejects invalid settings") {
  auto p = Params::random(micro::config(), 1);
  const std::vector<int> src = {1};
  CHECK_THROWS_AS(beam_search(p, src, {2, 3, 5}), UsageError);
  CHECK_THROWS_AS(beam_search(p, src, {2, 1, 0}), UsageError);
}

TEST_CASE("training configuration validation") {
  TrainConfig c;
  CHECK(c.embedding == 300);
  CHECK(c.hidden == 100);
  CHECK(c.batch == 20);
  CHECK(c.epochs == 300);
  CHECK(c.rho == 0.95);
  CHECK(c.eps == 1e-6);
  CHECK_NOTHROW(c.validate());
  c.batch = 0;
  CHECK_THROWS_AS(c.validate(), UsageError);
  c = TrainConfig{};
  c.rho = 1.0;
  CHECK_THROWS_AS(c.validate(), UsageError);
  auto j = TrainConfig{}.to_json();
  CHECK(TrainConfig::from_json(j).to_json() == j);
}

TEST_CASE("training learns a regular suffix and is deterministic") {
  auto split = micro::suffix_split(80, 20, 3);
  TrainConfig cfg;
  cfg.embedding = 8;
  cfg.hidden = 16;
  cfg.batch = 10;
  cfg.epochs = 50;
  cfg.init_scale = 0.2;
  cfg.seed = 4;
  std::vector<EpochLog> logs;
  auto model = train(split, cfg, [&](const EpochLog& e) { logs.push_back(e); });
  REQUIRE(!logs.empty());
  CHECK(logs[2].train_loss < logs[0].train_loss);
  CHECK(model.best_dev_accuracy == 1.0);
  CHECK(model.best_epoch <= 50);
  for (const auto& t : split.dev) {
    auto pred = predict(model, t.base, t.tag, 1, 12);
    CHECK(pred.at(0).form == t.derived);
  }

  cfg.epochs = 3;
  auto a = train(split, cfg);
  auto b = train(split, cfg);
  for (size_t i = 0; i < a.params.named().size(); ++i) {
    auto ta = a.params.named()[i].second->values();
    auto tb = b.params.named()[i].second->values();
    REQUIRE(std::equal(ta.begin(), ta.end(), tb.begin()));
  }
}

TEST_CASE("a single pair can be memorized") {
  DatasetSplit split;
  split.train = {{"ameliorate", "RESULT", "amelioration"}};
  TrainConfig cfg;
  cfg.embedding = 8;
  cfg.hidden = 12;
  cfg.batch = 1;
  cfg.epochs = 400;
  cfg.init_scale = 0.2;
  auto model = train(split, cfg);
  const auto src = encode_source(split.train[0], model.vocab);
  const auto tgt = model.vocab.encode_target("amelioration");
  CHECK(sequence_loss_value(model.params, src, tgt) < 0.1);
  CHECK(model.best_epoch == 400);
  CHECK(predict(model, "ameliorate", "RESULT", 1, 1).at(0).form == "amelioration");
  CHECK(predict(model, "ameliorate", "RESULT", 1, 12).at(0).form == "amelioration");
}

TEST_CASE("model artifacts reload bit-exactly") {
  auto split = micro::suffix_split(30, 10, 5);
  TrainConfig cfg;
  cfg.embedding = 6;
  cfg.hidden = 5;
  cfg.epochs = 2;
  auto model = train(split, cfg);
  testing::TempDir dir("s2s");
  model.save(dir / "m.bin");
  CHECK(std::filesystem::exists(Model::sidecar_path(dir / "m.bin")));
  auto back = Model::load(dir / "m.bin");
  CHECK(back.vocab == model.vocab);
  CHECK(back.best_epoch == model.best_epoch);
  CHECK(back.config.to_json() == model.config.to_json());
  auto na = model.params.named();
  auto nb = back.params.named();
  REQUIRE(na.size() == nb.size());
  for (size_t i = 0; i < na.size(); ++i) {
    REQUIRE(na[i].first == nb[i].first);
    auto va = na[i].second->values();
    auto vb = nb[i].second->values();
    for (size_t j = 0; j < va.size(); ++j) {
      REQUIRE(std::bit_cast<uint64_t>(va[j]) == std::bit_cast<uint64_t>(vb[j]));
    }
  }
  model.save(dir / "again.bin");
  back.save(dir / "copy.bin");
  CHECK(testing::read_file(dir / "again.bin") == testing::read_file(dir / "copy.bin"));
}

TEST_CASE("prediction with k=1 and beam 1 is the greedy decode") {
  auto split = micro::suffix_split(30, 10, 6);
  TrainConfig cfg;
  cfg.embedding = 6;
  cfg.hidden = 5;
  cfg.epochs = 2;
  auto model = train(split, cfg);
  for (const auto& t : split.dev) {
    auto src = encode_source(t.base, t.tag, model.vocab);
    auto greedy = greedy_decode(model.params, src, utf8::decode(t.base).size() + cfg.extra_len);
    auto pred = predict(model, t.base, t.tag, 1, 1);
    REQUIRE(pred.size() == 1);
    CHECK(pred[0].form == model.vocab.decode(greedy.tokens));
  }
  CHECK_THROWS_WITH_AS(predict(model, "abc", "NOPE", 1, 1), "unknown tag", DataError);
  auto many = predict(model, split.dev[0].base, split.dev[0].tag, 10, 12);
  CHECK(many.size() <= 10);
}
