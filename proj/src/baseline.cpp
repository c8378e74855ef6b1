#include "derivgen/baseline.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "derivgen/error.hpp"
#include "derivgen/random.hpp"
#include "derivgen/utf8.hpp"

namespace derivgen::baseline {

namespace {

constexpr std::string_view kLeftBoundary = "<BOW>";
constexpr std::string_view kRightBoundary = "<EOW>";
constexpr int kFormatVersion = 1;

std::string offset_name(int offset) {
  return offset < 0 ? std::to_string(offset) : "+" + std::to_string(offset);
}

std::vector<bool> allowed_mask(const std::vector<EditAction>& actions, bool at_end,
                               bool insertions_left) {
  std::vector<bool> allowed(actions.size());
  for (size_t i = 0; i < actions.size(); ++i) {
    switch (actions[i].kind) {
      case ActionKind::kCopy:
      case ActionKind::kSub:
      case ActionKind::kDel: allowed[i] = !at_end; break;
      case ActionKind::kIns: allowed[i] = insertions_left; break;
      case ActionKind::kStop: allowed[i] = at_end; break;
    }
  }
  return allowed;
}

std::string format_weight(double w) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", w);
  return buf;
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

// Parses "key=value" fields of a header line.
std::map<std::string, std::string> key_values(std::span<const std::string_view> cols) {
  std::map<std::string, std::string> kv;
  for (auto col : cols) {
    auto eq = col.find('=');
    if (eq == std::string_view::npos) throw ModelError("malformed header field: " + std::string(col));
    kv.emplace(col.substr(0, eq), col.substr(eq + 1));
  }
  return kv;
}

template <typename T>
T to_number(const std::map<std::string, std::string>& kv, const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end()) throw ModelError("missing header field: " + key);
  T value{};
  auto [ptr, ec] = std::from_chars(it->second.data(), it->second.data() + it->second.size(), value);
  if (ec != std::errc() || ptr != it->second.data() + it->second.size()) {
    throw ModelError("bad value for " + key + ": " + it->second);
  }
  return value;
}

}  // namespace

std::string EditAction::to_string() const {
  switch (kind) {
    case ActionKind::kCopy: return "COPY";
    case ActionKind::kSub: return "SUB:" + utf8::encode(ch);
    case ActionKind::kDel: return "DEL";
    case ActionKind::kIns: return "INS:" + utf8::encode(ch);
    case ActionKind::kStop: return "STOP";
  }
  return {};
}

EditAction EditAction::parse(std::string_view text) {
  if (text == "COPY") return copy();
  if (text == "DEL") return del();
  if (text == "STOP") return stop();
  auto char_of = [&](std::string_view rest) {
    auto cps = utf8::decode(rest);
    if (cps.size() != 1) throw ModelError("bad edit action: " + std::string(text));
    return cps[0];
  };
  if (text.starts_with("SUB:")) return sub(char_of(text.substr(4)));
  if (text.starts_with("INS:")) return ins(char_of(text.substr(4)));
  throw ModelError("bad edit action: " + std::string(text));
}

std::u32string EditScript::apply() const {
  std::u32string out;
  size_t pos = 0;
  for (const auto& a : actions) {
    switch (a.kind) {
      case ActionKind::kCopy:
      case ActionKind::kSub:
        if (pos >= source.size()) throw DataError("edit script consumes past end of source");
        out.push_back(a.kind == ActionKind::kCopy ? source[pos] : a.ch);
        ++pos;
        break;
      case ActionKind::kDel:
        if (pos >= source.size()) throw DataError("edit script consumes past end of source");
        ++pos;
        break;
      case ActionKind::kIns: out.push_back(a.ch); break;
      case ActionKind::kStop: break;
    }
  }
  if (pos != source.size()) throw DataError("edit script leaves source input unconsumed");
  return out;
}

size_t EditScript::cost() const {
  size_t cost = 0;
  size_t pos = 0;
  for (const auto& a : actions) {
    if (a.kind == ActionKind::kCopy) {
      ++pos;
    } else if (a.kind == ActionKind::kSub) {
      cost += source[pos] != a.ch;
      ++pos;
    } else if (a.kind == ActionKind::kDel) {
      ++cost;
      ++pos;
    } else if (a.kind == ActionKind::kIns) {
      ++cost;
    }
  }
  return cost;
}

EditScript align(std::u32string_view base, std::u32string_view derived) {
  const size_t n = base.size();
  const size_t m = derived.size();
  // d(i, j) = distance between base[i:] and derived[j:]
  std::vector<size_t> d((n + 1) * (m + 1));
  auto at = [&](size_t i, size_t j) -> size_t& { return d[i * (m + 1) + j]; };
  for (size_t i = 0; i <= n; ++i) at(i, m) = n - i;
  for (size_t j = 0; j <= m; ++j) at(n, j) = m - j;
  for (size_t i = n; i-- > 0;) {
    for (size_t j = m; j-- > 0;) {
      at(i, j) = std::min({at(i + 1, j + 1) + (base[i] == derived[j] ? 0 : 1),
                           at(i + 1, j) + 1, at(i, j + 1) + 1});
    }
  }
  EditScript script;
  script.source = base;
  size_t i = 0, j = 0;
  while (i < n || j < m) {
    const size_t here = at(i, j);
    if (i < n && j < m && base[i] == derived[j] && here == at(i + 1, j + 1)) {
      script.actions.push_back(EditAction::sub(derived[j]));
      ++i, ++j;
    } else if (i < n && j < m && here == at(i + 1, j + 1) + 1) {
      script.actions.push_back(EditAction::sub(derived[j]));
      ++i, ++j;
    } else if (i < n && here == at(i + 1, j) + 1) {
      script.actions.push_back(EditAction::del());
      ++i;
    } else {
      script.actions.push_back(EditAction::ins(derived[j]));
      ++j;
    }
  }
  return script;
}

EditScript align(std::string_view base, std::string_view derived) {
  return align(utf8::decode(base), utf8::decode(derived));
}

std::vector<std::string> featurize(std::u32string_view source, std::string_view tag,
                                   size_t position, std::u32string_view history,
                                   std::span<const EditAction> previous_actions,
                                   const FeatureConfig& config) {
  std::vector<std::string> features;
  features.reserve(3 + 2 * (2 * config.window + 1) + 2 * config.history);
  const std::string tag_feature = "t=" + std::string(tag);
  features.push_back(tag_feature);
  for (int offset = -config.window; offset <= config.window; ++offset) {
    const auto idx = static_cast<long>(position) + offset;
    std::string value;
    if (idx < 0) {
      value = kLeftBoundary;
    } else if (idx >= static_cast<long>(source.size())) {
      value = kRightBoundary;
    } else {
      value = utf8::encode(source[idx]);
    }
    std::string feature = "c" + offset_name(offset) + "=" + value;
    features.push_back(tag_feature + "|" + feature);
    features.push_back(std::move(feature));
  }
  for (int k = 1; k <= config.history; ++k) {
    std::string value = static_cast<size_t>(k) <= history.size()
                            ? utf8::encode(history[history.size() - k])
                            : std::string(kLeftBoundary);
    features.push_back("h" + std::to_string(k) + "=" + value);
  }
  for (int k = 1; k <= config.history; ++k) {
    std::string value = static_cast<size_t>(k) <= previous_actions.size()
                            ? previous_actions[previous_actions.size() - k].to_string()
                            : std::string(kLeftBoundary);
    features.push_back("a" + std::to_string(k) + "=" + value);
  }
  size_t run = 0;
  while (run < previous_actions.size() &&
         previous_actions[previous_actions.size() - 1 - run].kind == ActionKind::kIns) {
    ++run;
  }
  features.push_back("r=" + std::to_string(run));
  features.push_back(tag_feature + "|r=" + std::to_string(run));
  return features;
}

PerceptronModel::PerceptronModel(std::vector<EditAction> actions) : actions_(std::move(actions)) {
  std::sort(actions_.begin(), actions_.end());
  actions_.erase(std::unique(actions_.begin(), actions_.end()), actions_.end());
}

std::optional<size_t> PerceptronModel::action_index(const EditAction& a) const {
  auto it = std::lower_bound(actions_.begin(), actions_.end(), a);
  if (it == actions_.end() || *it != a) return std::nullopt;
  return static_cast<size_t>(it - actions_.begin());
}

std::vector<double> PerceptronModel::scores(std::span<const std::string> features) const {
  std::vector<double> s(actions_.size(), 0.0);
  for (const auto& f : features) {
    auto it = rows_.find(f);
    if (it == rows_.end()) continue;
    for (const auto& c : it->second) s[c.action] += c.weight;
  }
  return s;
}

std::optional<size_t> PerceptronModel::best(std::span<const std::string> features,
                                            const std::vector<bool>& allowed) const {
  auto s = scores(features);
  std::optional<size_t> arg;
  for (size_t i = 0; i < s.size(); ++i) {
    if (!allowed[i]) continue;
    if (!arg || s[i] > s[*arg]) arg = i;
  }
  return arg;
}

PerceptronModel::Cell& PerceptronModel::cell(const std::string& feature, uint32_t action) {
  auto& row = rows_[feature];
  for (auto& c : row) {
    if (c.action == action) return c;
  }
  row.push_back({action, 0.0, 0.0, 0});
  return row.back();
}

void PerceptronModel::update(std::span<const std::string> features, size_t gold,
                             size_t predicted) {
  if (finalized_) throw ModelError("cannot update a finalized perceptron");
  if (gold == predicted) return;
  ++updates_;
  auto bump = [&](Cell& c, double delta) {
    // Versions last+1 .. updates_-1 carried the old weight.
    c.total += static_cast<double>(updates_ - 1 - c.last) * c.weight;
    c.last = updates_ - 1;
    c.weight += delta;
  };
  for (const auto& f : features) {
    bump(cell(f, static_cast<uint32_t>(gold)), 1.0);
    bump(cell(f, static_cast<uint32_t>(predicted)), -1.0);
  }
}

void PerceptronModel::finalize() {
  if (finalized_) return;
  for (auto& [feature, row] : rows_) {
    for (auto& c : row) {
      c.total += static_cast<double>(updates_ - c.last) * c.weight;
      c.last = updates_;
      c.weight = updates_ > 0 ? c.total / static_cast<double>(updates_) : 0.0;
    }
  }
  finalized_ = true;
}

double PerceptronModel::weight(std::string_view feature, const EditAction& action) const {
  auto idx = action_index(action);
  auto it = rows_.find(std::string(feature));
  if (!idx || it == rows_.end()) return 0.0;
  for (const auto& c : it->second) {
    if (c.action == *idx) return c.weight;
  }
  return 0.0;
}

std::vector<PerceptronModel::Entry> PerceptronModel::entries() const {
  std::vector<Entry> out;
  for (const auto& [feature, row] : rows_) {
    for (const auto& c : row) {
      if (c.weight != 0.0) out.push_back({feature, actions_[c.action].to_string(), c.weight});
    }
  }
  std::sort(out.begin(), out.end(), [](const Entry& a, const Entry& b) {
    return std::tie(a.feature, a.action) < std::tie(b.feature, b.action);
  });
  return out;
}

PerceptronModel PerceptronModel::from_entries(std::vector<EditAction> actions, uint64_t updates,
                                              std::span<const Entry> entries) {
  PerceptronModel model(std::move(actions));
  for (const auto& e : entries) {
    auto idx = model.action_index(EditAction::parse(e.action));
    if (!idx) throw ModelError("weight for undeclared action " + e.action);
    model.cell(e.feature, static_cast<uint32_t>(*idx)).weight = e.weight;
  }
  model.updates_ = updates;
  model.finalized_ = true;
  return model;
}

std::vector<TrainingState> oracle_states(const Triple& t, const FeatureConfig& config) {
  auto script = align(t.base, t.derived);
  std::vector<TrainingState> states;
  std::u32string out;
  std::vector<EditAction> done;
  size_t pos = 0;
  for (const auto& a : script.actions) {
    const bool is_copy = a.kind == ActionKind::kSub && a.ch == script.source[pos];
    const EditAction label = is_copy ? EditAction::copy() : a;
    states.push_back({featurize(script.source, t.tag, pos, out, done, config), label,
                      pos == script.source.size()});
    if (a.kind != ActionKind::kDel) out.push_back(a.ch);
    if (a.consumes_input()) ++pos;
    done.push_back(label);
  }
  states.push_back(
      {featurize(script.source, t.tag, pos, out, done, config), EditAction::stop(), true});
  return states;
}

namespace {

// Online training state for one perceptron.
class Trainer {
 public:
  Trainer(std::span<const Triple> data, const TrainConfig& config) : rng_(config.seed) {
    std::vector<std::vector<TrainingState>> raw;
    raw.reserve(data.size());
    std::set<EditAction> observed;
    for (const auto& t : data) {
      raw.push_back(oracle_states(t, config.features));
      for (const auto& s : raw.back()) observed.insert(s.gold);
    }
    model_ = PerceptronModel({observed.begin(), observed.end()});
    examples_.resize(raw.size());
    for (size_t i = 0; i < raw.size(); ++i) {
      for (auto& s : raw[i]) {
        examples_[i].gold.push_back(*model_.action_index(s.gold));
        examples_[i].at_end.push_back(s.at_end);
        examples_[i].features.push_back(std::move(s.features));
      }
    }
    allowed_mid_ = allowed_mask(model_.actions(), false, true);
    allowed_end_ = allowed_mask(model_.actions(), true, true);
    order_.resize(examples_.size());
    for (size_t i = 0; i < order_.size(); ++i) order_[i] = i;
  }

  // Returns the number of mistakes (updates) made during the pass.
  size_t run_epoch() {
    size_t mistakes = 0;
    rng_.shuffle(std::span(order_));
    for (size_t i : order_) {
      const auto& ex = examples_[i];
      for (size_t k = 0; k < ex.gold.size(); ++k) {
        auto guess = model_.best(ex.features[k], ex.at_end[k] ? allowed_end_ : allowed_mid_);
        if (guess && *guess != ex.gold[k]) {
          model_.update(ex.features[k], ex.gold[k], *guess);
          ++mistakes;
        }
      }
    }
    return mistakes;
  }

  const PerceptronModel& model() const { return model_; }
  PerceptronModel release() {
    model_.finalize();
    return std::move(model_);
  }

 private:
  struct Example {
    std::vector<std::vector<std::string>> features;
    std::vector<size_t> gold;
    std::vector<bool> at_end;
  };
  PerceptronModel model_;
  std::vector<Example> examples_;
  std::vector<bool> allowed_mid_, allowed_end_;
  std::vector<size_t> order_;
  Rng rng_;
};

}  // namespace

Transducer train_perceptron(std::span<const Triple> data, const TrainConfig& config,
                            const EpochCallback& on_epoch) {
  if (data.empty()) throw DataError("empty training data");
  if (config.epochs < 1) throw UsageError("epochs must be at least 1");
  if (config.features.window < 0 || config.features.history < 0 || config.max_insertions < 1) {
    throw UsageError("invalid baseline hyperparameters");
  }
  std::map<std::string, std::vector<Triple>> groups;
  if (!config.per_tag) {
    groups[std::string(Transducer::kSharedKey)].assign(data.begin(), data.end());
  } else {
    for (const auto& t : data) groups[t.tag].push_back(t);
  }
  std::map<std::string, Trainer> trainers;
  for (const auto& [key, items] : groups) trainers.emplace(key, Trainer(items, config));

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    size_t mistakes = 0;
    for (auto& [key, trainer] : trainers) mistakes += trainer.run_epoch();
    if (on_epoch) {
      std::map<std::string, PerceptronModel> snapshot;
      for (const auto& [key, trainer] : trainers) {
        PerceptronModel copy = trainer.model();
        copy.finalize();
        snapshot.emplace(key, std::move(copy));
      }
      on_epoch(epoch, mistakes, Transducer(config, std::move(snapshot)));
    }
  }
  std::map<std::string, PerceptronModel> models;
  for (auto& [key, trainer] : trainers) models.emplace(key, trainer.release());
  return Transducer(config, std::move(models));
}

const PerceptronModel* Transducer::model_for(std::string_view tag) const {
  auto key = config_.per_tag ? std::string(tag) : std::string(kSharedKey);
  auto it = models_.find(key);
  return it == models_.end() ? nullptr : &it->second;
}

std::u32string decode_greedy(const PerceptronModel& model, std::u32string_view base,
                             std::string_view tag, const TrainConfig& config) {
  std::u32string out;
  std::vector<EditAction> done;
  size_t pos = 0;
  int run = 0;
  // Each iteration either consumes input, inserts (at most max_insertions in a
  // row) or stops, so the loop is bounded by (|base| + 1) * (max_insertions + 1).
  while (true) {
    const bool at_end = pos == base.size();
    const bool can_insert = run < config.max_insertions;
    auto allowed = allowed_mask(model.actions(), at_end, can_insert);
    auto features = featurize(base, tag, pos, out, done, config.features);
    auto choice = model.best(features, allowed);
    const EditAction a = choice ? model.actions()[*choice] : EditAction::copy();
    if (!choice && at_end) break;
    if (a.kind == ActionKind::kStop) break;
    done.push_back(a);
    if (a.kind == ActionKind::kIns) {
      out.push_back(a.ch);
      ++run;
      continue;
    }
    if (a.kind == ActionKind::kCopy) out.push_back(base[pos]);
    if (a.kind == ActionKind::kSub) out.push_back(a.ch);
    ++pos;
    run = 0;
  }
  return out;
}

std::string decode_greedy(const Transducer& model, std::string_view base, std::string_view tag) {
  const auto* m = model.model_for(tag);
  auto source = utf8::decode(base);
  if (!m) return std::string(base);
  return utf8::encode(decode_greedy(*m, source, tag, model.config()));
}

void Transducer::save(std::ostream& out) const {
  out << kMagic << "\tversion=" << kFormatVersion << "\twindow=" << config_.features.window
      << "\thistory=" << config_.features.history << "\tepochs=" << config_.epochs
      << "\tseed=" << config_.seed << "\tper_tag=" << (config_.per_tag ? 1 : 0)
      << "\tmax_insertions=" << config_.max_insertions << '\n';
  for (const auto& [key, model] : models_) {
    out << "model\t" << key << "\tupdates=" << model.update_count()
        << "\tactions=" << model.actions().size() << '\n';
    for (const auto& a : model.actions()) out << "action\t" << a.to_string() << '\n';
    for (const auto& e : model.entries()) {
      out << e.feature << '\t' << e.action << '\t' << format_weight(e.weight) << '\n';
    }
    out << "end\n";
  }
}

void Transducer::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ModelError("cannot write " + path.string());
  save(out);
}

Transducer Transducer::load(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ModelError("empty baseline model");
  auto header = split_tabs(line);
  if (header.empty() || header[0] != kMagic) throw ModelError("not a baseline model file");
  auto kv = key_values(std::span(header).subspan(1));
  if (to_number<int>(kv, "version") != kFormatVersion) {
    throw ModelError("unsupported baseline model version " + kv["version"]);
  }
  TrainConfig config;
  config.features.window = to_number<int>(kv, "window");
  config.features.history = to_number<int>(kv, "history");
  config.epochs = to_number<int>(kv, "epochs");
  config.seed = to_number<uint64_t>(kv, "seed");
  config.per_tag = to_number<int>(kv, "per_tag") != 0;
  config.max_insertions = to_number<int>(kv, "max_insertions");

  std::map<std::string, PerceptronModel> models;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cols = split_tabs(line);
    if (cols.size() < 2 || cols[0] != "model") throw ModelError("expected model section: " + line);
    std::string key(cols[1]);
    auto mkv = key_values(std::span(cols).subspan(2));
    const auto updates = to_number<uint64_t>(mkv, "updates");
    const auto n_actions = to_number<size_t>(mkv, "actions");
    std::vector<EditAction> actions;
    for (size_t i = 0; i < n_actions; ++i) {
      if (!std::getline(in, line)) throw ModelError("truncated action list");
      auto acols = split_tabs(line);
      if (acols.size() != 2 || acols[0] != "action") throw ModelError("bad action line: " + line);
      actions.push_back(EditAction::parse(acols[1]));
    }
    std::vector<PerceptronModel::Entry> entries;
    bool closed = false;
    while (std::getline(in, line)) {
      if (line == "end") {
        closed = true;
        break;
      }
      auto wcols = split_tabs(line);
      if (wcols.size() != 3) throw ModelError("bad weight line: " + line);
      char* end = nullptr;
      std::string text(wcols[2]);
      double w = std::strtod(text.c_str(), &end);
      if (end != text.c_str() + text.size()) throw ModelError("bad weight: " + text);
      entries.push_back({std::string(wcols[0]), std::string(wcols[1]), w});
    }
    if (!closed) throw ModelError("truncated baseline model");
    models.emplace(key, PerceptronModel::from_entries(std::move(actions), updates, entries));
  }
  return Transducer(config, std::move(models));
}

Transducer Transducer::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ModelError("cannot read " + path.string());
  return load(in);
}

}  // namespace derivgen::baseline
