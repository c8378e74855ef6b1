#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "derivgen/baseline.hpp"
#include "derivgen/commands.hpp"
#include "derivgen/corpus.hpp"
#include "derivgen/error.hpp"
#include "derivgen/metrics.hpp"
#include "derivgen/seq2seq.hpp"
#include "derivgen/synthetic.hpp"
#include "derivgen/utf8.hpp"

namespace py = pybind11;
using namespace derivgen;
namespace bl = derivgen::baseline;
namespace s2s = derivgen::seq2seq;

PYBIND11_MODULE(_derivgen, m) {
  m.doc() = "Derivational paradigm completion: perceptron transducer and attentional seq2seq";

  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<ModelError>(m, "ModelError", PyExc_RuntimeError);
  py::register_exception<UsageError>(m, "UsageError", PyExc_ValueError);

  // Corpus
  py::class_<Triple>(m, "Triple")
      .def(py::init<std::string, std::string, std::string>(), py::arg("base"), py::arg("tag"),
           py::arg("derived"))
      .def_readwrite("base", &Triple::base)
      .def_readwrite("tag", &Triple::tag)
      .def_readwrite("derived", &Triple::derived)
      .def("__eq__", [](const Triple& a, const Triple& b) { return a == b; })
      .def("__repr__", [](const Triple& t) {
        return "Triple(" + t.base + ", " + t.tag + ", " + t.derived + ")";
      });

  py::class_<DatasetSplit>(m, "DatasetSplit")
      .def_readonly("train", &DatasetSplit::train)
      .def_readonly("dev", &DatasetSplit::dev)
      .def_readonly("test", &DatasetSplit::test)
      .def_readonly("seed", &DatasetSplit::seed);

  m.def("levenshtein",
        [](std::string_view a, std::string_view b) { return levenshtein(a, b); });
  m.def("passes_distance_filter", &passes_distance_filter);
  m.def("filter_triples",
        [](const std::vector<Triple>& raw) { return filter_triples(raw); });
  m.def("split_dataset",
        [](const std::vector<Triple>& data, uint64_t seed, bool stratified) {
          return split_dataset(data, seed, stratified);
        },
        py::arg("data"), py::arg("seed"), py::arg("stratified") = false);
  m.def("read_triples", [](const std::filesystem::path& p) { return read_triples(p); });
  m.def("write_triples", [](const std::filesystem::path& p, const std::vector<Triple>& t) {
    write_triples(p, t);
  });

  // Metrics
  m.def("accuracy", [](const std::vector<std::string>& pred,
                       const std::vector<std::string>& gold) { return accuracy(pred, gold); });
  m.def("avg_edit_distance",
        [](const std::vector<std::string>& pred, const std::vector<std::string>& gold) {
          return avg_edit_distance(pred, gold);
        });
  m.def("kbest_accuracy", [](const std::vector<std::vector<std::string>>& kbest,
                             const std::vector<std::string>& gold) {
    return kbest_accuracy(kbest, gold);
  });
  m.def("extract_affix",
        [](std::string_view form, const std::vector<std::string>& inventory) {
          return extract_affix(form, inventory);
        },
        py::arg("form"), py::arg("inventory") = kDefaultAffixInventory);
  m.attr("DEFAULT_AFFIXES") = kDefaultAffixInventory;
  m.def("_evaluate_json",
        [](const std::vector<std::vector<std::string>>& kbest,
           const std::vector<std::string>& gold, const std::vector<std::string>& tags,
           const std::vector<std::string>& inventory, bool whole_word) {
          return evaluate(kbest, gold, tags, inventory, whole_word).to_json().dump();
        });

  // Baseline transducer
  m.def("align", [](std::string_view base, std::string_view derived) {
    auto script = bl::align(base, derived);
    std::vector<std::string> actions;
    for (const auto& a : script.actions) actions.push_back(a.to_string());
    return py::make_tuple(actions, script.cost());
  });

  py::class_<bl::TrainConfig>(m, "BaselineConfig")
      .def(py::init<>())
      .def_readwrite("epochs", &bl::TrainConfig::epochs)
      .def_readwrite("seed", &bl::TrainConfig::seed)
      .def_readwrite("per_tag", &bl::TrainConfig::per_tag)
      .def_readwrite("max_insertions", &bl::TrainConfig::max_insertions)
      .def_property(
          "window", [](const bl::TrainConfig& c) { return c.features.window; },
          [](bl::TrainConfig& c, int v) { c.features.window = v; })
      .def_property(
          "history", [](const bl::TrainConfig& c) { return c.features.history; },
          [](bl::TrainConfig& c, int v) { c.features.history = v; });

  py::class_<bl::Transducer>(m, "Transducer")
      .def_static("load",
                  [](const std::filesystem::path& p) { return bl::Transducer::load(p); })
      .def("save", [](const bl::Transducer& t, const std::filesystem::path& p) { t.save(p); })
      .def("decode", [](const bl::Transducer& t, std::string_view base,
                        std::string_view tag) { return bl::decode_greedy(t, base, tag); })
      .def("to_text", [](const bl::Transducer& t) {
        std::ostringstream out;
        t.save(out);
        return out.str();
      });

  m.def("train_baseline",
        [](const std::vector<Triple>& data, const bl::TrainConfig& config) {
          py::gil_scoped_release release;
          return bl::train_perceptron(data, config);
        },
        py::arg("data"), py::arg("config") = bl::TrainConfig{});

  // Seq2seq
  py::class_<s2s::TrainConfig>(m, "Seq2SeqConfig")
      .def(py::init<>())
      .def_readwrite("embedding", &s2s::TrainConfig::embedding)
      .def_readwrite("hidden", &s2s::TrainConfig::hidden)
      .def_readwrite("batch", &s2s::TrainConfig::batch)
      .def_readwrite("epochs", &s2s::TrainConfig::epochs)
      .def_readwrite("rho", &s2s::TrainConfig::rho)
      .def_readwrite("eps", &s2s::TrainConfig::eps)
      .def_readwrite("clip", &s2s::TrainConfig::clip)
      .def_readwrite("init_scale", &s2s::TrainConfig::init_scale)
      .def_readwrite("seed", &s2s::TrainConfig::seed)
      .def_readwrite("patience", &s2s::TrainConfig::patience)
      .def_readwrite("dev_beam", &s2s::TrainConfig::dev_beam)
      .def_readwrite("extra_len", &s2s::TrainConfig::extra_len);

  py::class_<s2s::Model>(m, "Seq2SeqModel")
      .def_static("load", [](const std::filesystem::path& p) { return s2s::Model::load(p); })
      .def("save", &s2s::Model::save)
      .def_readonly("best_epoch", &s2s::Model::best_epoch)
      .def_readonly("best_dev_accuracy", &s2s::Model::best_dev_accuracy)
      .def("predict",
           [](const s2s::Model& model, std::string_view base, std::string_view tag, size_t k,
              size_t beam) {
             std::vector<std::pair<std::string, double>> out;
             for (auto& p : s2s::predict(model, base, tag, k, beam)) {
               out.emplace_back(p.form, p.log_prob);
             }
             return out;
           },
           py::arg("base"), py::arg("tag"), py::arg("k") = 1, py::arg("beam") = 12);

  m.def("train_seq2seq",
        [](const std::vector<Triple>& train, const std::vector<Triple>& dev,
           const s2s::TrainConfig& config) {
          DatasetSplit split;
          split.train = train;
          split.dev = dev;
          py::gil_scoped_release release;
          return s2s::train(split, config);
        },
        py::arg("train"), py::arg("dev"), py::arg("config") = s2s::TrainConfig{});

  // Synthetic grammar
  m.def("generate_synthetic", [](size_t n, uint64_t seed) { return synthetic::generate(n, seed); },
        py::arg("n"), py::arg("seed"));
  m.def("is_concatenative", [](const Triple& t) { return synthetic::is_concatenative(t); });

  // Command line
  m.def("run_cli", [](const std::vector<std::string>& args) {
    std::vector<const char*> argv{"derivgen"};
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    int code = 0;
    {
      py::gil_scoped_release release;
      code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    }
    return py::make_tuple(code, out.str(), err.str());
  });
}
