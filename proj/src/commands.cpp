#include "derivgen/commands.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "derivgen/corpus.hpp"
#include "derivgen/error.hpp"
#include "derivgen/numeric/checkpoint.hpp"
#include "derivgen/synthetic.hpp"

namespace derivgen::cli {

namespace fs = std::filesystem;

namespace {

std::string format(const char* spec, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, spec, args...);
  return buf;
}

// Writes every line to the log file and to the caller's stream.
class LogSink {
 public:
  LogSink(const fs::path& path, std::ostream& echo) : file_(path, std::ios::binary), echo_(echo) {
    if (!file_) throw ModelError("cannot write " + path.string());
  }
  void line(const std::string& text) {
    file_ << text << '\n';
    file_.flush();
    echo_ << text << '\n';
  }

 private:
  std::ofstream file_;
  std::ostream& echo_;
};

fs::path log_path(const fs::path& model) {
  auto p = model;
  p += ".log";
  return p;
}

fs::path require_file(const fs::path& dir, const char* name) {
  auto p = dir / name;
  if (!fs::exists(p)) throw DataError("missing split file " + p.string());
  return p;
}

void ensure_parent(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

std::pair<double, double> score_baseline(const baseline::Transducer& model,
                                         std::span<const Triple> items) {
  if (items.empty()) return {0.0, 0.0};
  std::vector<std::string> pred, gold;
  for (const auto& t : items) {
    pred.push_back(baseline::decode_greedy(model, t.base, t.tag));
    gold.push_back(t.derived);
  }
  return {accuracy(pred, gold), avg_edit_distance(pred, gold)};
}

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> cols;
  size_t start = 0;
  while (true) {
    size_t pos = line.find('\t', start);
    if (pos == std::string_view::npos) {
      cols.push_back(line.substr(start));
      return cols;
    }
    cols.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

}  // namespace

std::string to_string(ModelKind kind) {
  return kind == ModelKind::kBaseline ? "baseline" : "seq2seq";
}

ModelKind parse_model_kind(const std::string& name) {
  if (name == "baseline") return ModelKind::kBaseline;
  if (name == "seq2seq") return ModelKind::kSeq2Seq;
  throw UsageError("unknown model kind '" + name + "' (expected baseline or seq2seq)");
}

void RunConfig::validate() const {
  if (k < 1 || beam < 1) throw UsageError("k and beam must be positive");
  if (beam < k) throw UsageError("beam must be at least k");
  if (kind == ModelKind::kSeq2Seq) {
    seq2seq.validate();
  } else if (baseline.epochs < 1 || baseline.features.window < 0 ||
             baseline.features.history < 0 || baseline.max_insertions < 1) {
    throw UsageError("baseline epochs and insertion cap must be positive");
  }
}

SplitSummary cmd_split(const fs::path& data, uint64_t seed, const fs::path& out_dir,
                       bool stratified, std::ostream& log) {
  auto raw = read_triples(data);
  auto kept = filter_triples(raw);
  auto split = split_dataset(kept, seed, stratified);
  fs::create_directories(out_dir);
  write_triples(out_dir / "train.tsv", split.train);
  write_triples(out_dir / "dev.tsv", split.dev);
  write_triples(out_dir / "test.tsv", split.test);

  SplitSummary s{raw.size(), kept.size(), raw.size() - kept.size(),
                 split.train.size(), split.dev.size(), split.test.size()};
  nlohmann::ordered_json manifest = {{"source", data.filename().string()},
                                     {"seed", seed},
                                     {"stratified", stratified},
                                     {"read", s.read},
                                     {"retained", s.retained},
                                     {"removed", s.removed},
                                     {"train", s.train},
                                     {"dev", s.dev},
                                     {"test", s.test}};
  std::ofstream out(out_dir / "manifest.json", std::ios::binary);
  if (!out) throw DataError("cannot write manifest in " + out_dir.string());
  out << manifest.dump(2) << '\n';
  log << format("split read=%zu retained=%zu removed=%zu train=%zu dev=%zu test=%zu seed=%llu",
                s.read, s.retained, s.removed, s.train, s.dev, s.test,
                static_cast<unsigned long long>(seed))
      << '\n';
  return s;
}

void cmd_train(const RunConfig& config, std::ostream& log) {
  config.validate();
  if (config.model.empty()) throw UsageError("--model is required");
  if (config.splits.empty()) throw UsageError("--splits is required");
  DatasetSplit split;
  split.seed = config.seed;
  split.train = read_triples(require_file(config.splits, "train.tsv"));
  split.dev = read_triples(require_file(config.splits, "dev.tsv"));
  if (split.train.empty()) throw DataError("training split is empty");
  ensure_parent(config.model);
  LogSink sink(log_path(config.model), log);

  if (config.kind == ModelKind::kBaseline) {
    auto bc = config.baseline;
    bc.seed = config.seed;
    sink.line(format("config kind=baseline window=%d history=%d epochs=%d per_tag=%d "
                     "max_insertions=%d seed=%llu train=%zu dev=%zu",
                     bc.features.window, bc.features.history, bc.epochs, bc.per_tag ? 1 : 0,
                     bc.max_insertions, static_cast<unsigned long long>(bc.seed),
                     split.train.size(), split.dev.size()));
    auto model = baseline::train_perceptron(
        split.train, bc, [&](int epoch, size_t mistakes, const baseline::Transducer& snapshot) {
          auto [acc, edit] = score_baseline(snapshot, split.dev);
          sink.line(format("epoch=%d mistakes=%zu dev_acc=%.6f dev_edit=%.6f", epoch, mistakes,
                           acc, edit));
        });
    model.save(config.model);
    auto [acc, edit] = score_baseline(model, split.dev);
    sink.line(format("done epochs=%d dev_acc=%.6f dev_edit=%.6f", bc.epochs, acc, edit));
    return;
  }

  auto sc = config.seq2seq;
  sc.seed = config.seed;
  sink.line(format("config kind=seq2seq embedding=%zu hidden=%zu batch=%zu epochs=%d beam=%zu "
                   "rho=%g eps=%g clip=%g init_scale=%g patience=%d dev_beam=%zu seed=%llu "
                   "train=%zu dev=%zu",
                   sc.embedding, sc.hidden, sc.batch, sc.epochs, config.beam, sc.rho, sc.eps,
                   sc.clip, sc.init_scale, sc.patience, sc.dev_beam,
                   static_cast<unsigned long long>(sc.seed), split.train.size(),
                   split.dev.size()));
  auto model = seq2seq::train(split, sc, [&](const seq2seq::EpochLog& e) {
    sink.line(format("epoch=%d loss=%.6f dev_acc=%.6f dev_edit=%.6f best=%d", e.epoch,
                     e.train_loss, e.dev_accuracy, e.dev_edit, e.improved ? 1 : 0));
  });
  model.save(config.model);
  sink.line(format("done best_epoch=%d dev_acc=%.6f dev_edit=%.6f parameters=%zu",
                   model.best_epoch, model.best_dev_accuracy, model.best_dev_edit,
                   model.params.num_parameters()));
}

ModelKind detect_model_kind(const fs::path& model) {
  std::ifstream in(model, std::ios::binary);
  if (!in) throw ModelError("cannot read model " + model.string());
  if (numeric::is_tensor_container(in)) return ModelKind::kSeq2Seq;
  std::string first;
  std::getline(in, first);
  if (first.starts_with(baseline::Transducer::kMagic)) return ModelKind::kBaseline;
  throw ModelError(model.string() + " is not a derivgen model");
}

void cmd_predict(const fs::path& model_path, const fs::path& input, size_t k, size_t beam,
                 std::ostream& out) {
  if (k < 1) throw UsageError("k must be at least 1");
  const auto kind = detect_model_kind(model_path);
  if (kind == ModelKind::kBaseline && k > 1) throw UsageError("baseline is greedy-only");
  auto queries = read_queries(input);
  if (kind == ModelKind::kBaseline) {
    auto model = baseline::Transducer::load(model_path);
    for (const auto& q : queries) {
      out << q.base << '\t' << q.tag << "\t1\t" << baseline::decode_greedy(model, q.base, q.tag)
          << "\t0.000000\n";
    }
    return;
  }
  if (beam < k) throw UsageError("beam must be at least k");
  auto model = seq2seq::Model::load(model_path);
  for (const auto& q : queries) {
    auto preds = seq2seq::predict(model, q.base, q.tag, k, beam);
    for (size_t r = 0; r < preds.size(); ++r) {
      out << q.base << '\t' << q.tag << '\t' << (r + 1) << '\t' << preds[r].form << '\t'
          << format("%.6f", preds[r].log_prob) << '\n';
    }
  }
}

std::vector<PredictionGroup> read_predictions(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  std::vector<PredictionGroup> groups;
  std::string raw;
  size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = raw;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty() || line.front() == '#') continue;
    auto cols = split_tabs(line);
    auto where = path.string() + ":" + std::to_string(line_no) + ": ";
    if (cols.size() != 5) throw DataError(where + "expected 5 tab-separated columns");
    size_t rank = 0;
    try {
      rank = std::stoul(std::string(cols[2]));
    } catch (const std::exception&) {
      throw DataError(where + "bad rank");
    }
    if (rank == 1) {
      groups.push_back({std::string(cols[0]), std::string(cols[1]), {}});
    } else if (groups.empty() || groups.back().ranked.size() + 1 != rank ||
               groups.back().base != cols[0] || groups.back().tag != cols[1]) {
      throw DataError(where + "ranks must start at 1 and increase by one per query");
    }
    groups.back().ranked.emplace_back(cols[3]);
  }
  return groups;
}

EvalReport cmd_evaluate(const fs::path& predictions, const fs::path& gold,
                        const std::vector<std::string>& inventory, bool whole_word) {
  auto groups = read_predictions(predictions);
  auto triples = read_triples(gold);
  if (groups.size() != triples.size()) {
    throw DataError("row-count mismatch: " + std::to_string(groups.size()) +
                    " predicted items vs " + std::to_string(triples.size()) + " gold rows");
  }
  std::vector<std::vector<std::string>> kbest;
  std::vector<std::string> gold_forms, tags;
  for (size_t i = 0; i < triples.size(); ++i) {
    if (groups[i].base != triples[i].base || groups[i].tag != triples[i].tag) {
      throw DataError("item " + std::to_string(i + 1) + " predicts " + groups[i].base + "/" +
                      groups[i].tag + " but gold has " + triples[i].base + "/" + triples[i].tag);
    }
    kbest.push_back(std::move(groups[i].ranked));
    gold_forms.push_back(triples[i].derived);
    tags.push_back(triples[i].tag);
  }
  return evaluate(kbest, gold_forms, tags, inventory, whole_word);
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"derivgen: derivational paradigm completion"};
  app.require_subcommand(1);
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.set_config("--config", "", "Flat key=value config file; flags override it")
      ->envname("DERIVGEN_CONFIG");

  RunConfig rc;
  std::string kind = "seq2seq";
  std::string data, splits, model, output, input, gold, predictions, json_path, affixes, out_dir;

  app.add_option("--seed", rc.seed, "Random seed")->capture_default_str();
  app.add_option("--kind", kind, "Model kind: baseline or seq2seq")->capture_default_str();
  app.add_option("--embedding", rc.seq2seq.embedding, "Character embedding size")
      ->capture_default_str();
  app.add_option("--hidden", rc.seq2seq.hidden, "Hidden units per recurrent layer")
      ->capture_default_str();
  app.add_option("--batch", rc.seq2seq.batch, "Minibatch size")->capture_default_str();
  app.add_option("--epochs", rc.seq2seq.epochs, "seq2seq training epochs")->capture_default_str();
  app.add_option("--beam", rc.beam, "Beam size for prediction")->capture_default_str();
  app.add_option("--rho", rc.seq2seq.rho, "Adadelta decay")->capture_default_str();
  app.add_option("--eps", rc.seq2seq.eps, "Adadelta epsilon")->capture_default_str();
  app.add_option("--clip", rc.seq2seq.clip, "Gradient-norm clip, 0 disables")
      ->capture_default_str();
  app.add_option("--init-scale", rc.seq2seq.init_scale, "Uniform init half-width")
      ->capture_default_str();
  app.add_option("--patience", rc.seq2seq.patience, "Early stop after N stale epochs, 0 disables")
      ->capture_default_str();
  app.add_option("--dev-beam", rc.seq2seq.dev_beam, "Beam used for per-epoch dev accuracy")
      ->capture_default_str();
  app.add_option("--baseline-epochs", rc.baseline.epochs, "Perceptron epochs")
      ->capture_default_str();
  app.add_option("--window", rc.baseline.features.window, "Perceptron character window radius")
      ->capture_default_str();
  app.add_option("--history", rc.baseline.features.history, "Perceptron output history length")
      ->capture_default_str();
  app.add_option("--max-insertions", rc.baseline.max_insertions, "Consecutive insertion cap")
      ->capture_default_str();
  app.add_flag("--per-tag", rc.baseline.per_tag, "Train one perceptron per tag");
  app.add_option("-k,--k", rc.k, "Number of ranked outputs per input")->capture_default_str();
  app.add_option("--affixes", affixes, "Affix inventory file (one suffix per line)");
  app.add_flag("--whole-word", rc.whole_word, "Affix F1 counts only exact-match predictions");
  app.add_flag("--stratified", rc.stratified, "Split each tag separately");

  auto* split_cmd = app.add_subcommand("split", "Filter and split a triple file 70/15/15");
  split_cmd->fallthrough();
  split_cmd->add_option("--data", data, "Triple TSV (base, tag, derived)")->required();
  split_cmd->add_option("--out", out_dir, "Output directory")->required();

  auto* train_cmd = app.add_subcommand("train", "Train a model on split files");
  train_cmd->fallthrough();
  train_cmd->add_option("--splits", splits, "Directory with train.tsv and dev.tsv")->required();
  train_cmd->add_option("--model", model, "Model output path")->required();

  auto* predict_cmd = app.add_subcommand("predict", "Write k-best predictions");
  predict_cmd->fallthrough();
  predict_cmd->add_option("--model", model, "Trained model")->required();
  predict_cmd->add_option("--input", input, "TSV of base<TAB>tag")->required();
  predict_cmd->add_option("--output", output, "Output TSV (default stdout)");

  auto* eval_cmd = app.add_subcommand("evaluate", "Score predictions against gold triples");
  eval_cmd->fallthrough();
  eval_cmd->add_option("--predictions", predictions, "Prediction TSV")->required();
  eval_cmd->add_option("--gold", gold, "Gold triple TSV")->required();
  eval_cmd->add_option("--json", json_path, "Also write the report as JSON");

  size_t count = 2000;
  auto* generate_cmd =
      app.add_subcommand("generate", "Write a synthetic suffixation corpus (six rules)");
  generate_cmd->fallthrough();
  generate_cmd->add_option("--n", count, "Number of triples")->capture_default_str();
  generate_cmd->add_option("--output", output, "Output TSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    rc.kind = parse_model_kind(kind);
    if (*generate_cmd) {
      write_triples(fs::path(output), synthetic::generate(count, rc.seed));
    } else if (*split_cmd) {
      cmd_split(data, rc.seed, out_dir, rc.stratified, out);
    } else if (*train_cmd) {
      rc.splits = splits;
      rc.model = model;
      cmd_train(rc, out);
    } else if (*predict_cmd) {
      if (output.empty()) {
        cmd_predict(model, input, rc.k, rc.beam, out);
      } else {
        std::ofstream file(output, std::ios::binary);
        if (!file) throw DataError("cannot write " + output);
        cmd_predict(model, input, rc.k, rc.beam, file);
      }
    } else if (*eval_cmd) {
      auto inventory = affixes.empty() ? kDefaultAffixInventory : read_affix_inventory(affixes);
      auto report = cmd_evaluate(predictions, gold, inventory, rc.whole_word);
      out << report.to_table();
      if (!json_path.empty()) {
        std::ofstream file(json_path, std::ios::binary);
        if (!file) throw DataError("cannot write " + json_path);
        file << report.to_json().dump(2) << '\n';
      }
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const ModelError& e) {
    err << "model error: " << e.what() << '\n';
    return kModelError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kDataError;
  }
  return kOk;
}

}  // namespace derivgen::cli
