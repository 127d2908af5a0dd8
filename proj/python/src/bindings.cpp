#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include <nlohmann/json.hpp>

#include "fatlab/bench.hpp"
#include "fatlab/cli.hpp"
#include "fatlab/clusters.hpp"
#include "fatlab/errors.hpp"
#include "fatlab/eval.hpp"
#include "fatlab/losses.hpp"

namespace py = pybind11;
using namespace fatlab;
using nlohmann::json;

namespace {

py::object to_py(const json& j) {
  switch (j.type()) {
    case json::value_t::null: return py::none();
    case json::value_t::boolean: return py::bool_(j.get<bool>());
    case json::value_t::number_integer: return py::int_(j.get<std::int64_t>());
    case json::value_t::number_unsigned: return py::int_(j.get<std::uint64_t>());
    case json::value_t::number_float: return py::float_(j.get<double>());
    case json::value_t::string: return py::str(j.get<std::string>());
    case json::value_t::array: {
      py::list out;
      for (const auto& v : j) out.append(to_py(v));
      return out;
    }
    default: {
      py::dict out;
      for (auto it = j.begin(); it != j.end(); ++it) out[py::str(it.key())] = to_py(it.value());
      return out;
    }
  }
}

json from_py(const py::handle& o) {
  if (o.is_none()) return nullptr;
  if (py::isinstance<py::bool_>(o)) return o.cast<bool>();
  if (py::isinstance<py::int_>(o)) return o.cast<std::int64_t>();
  if (py::isinstance<py::float_>(o)) return o.cast<double>();
  if (py::isinstance<py::str>(o)) return o.cast<std::string>();
  if (py::isinstance<py::dict>(o)) {
    json out = json::object();
    for (auto item : o.cast<py::dict>()) out[py::str(item.first).cast<std::string>()] = from_py(item.second);
    return out;
  }
  if (py::isinstance<py::list>(o) || py::isinstance<py::tuple>(o)) {
    json out = json::array();
    for (auto v : o) out.push_back(from_py(v));
    return out;
  }
  throw py::type_error("config values must be JSON-compatible");
}

RunConfig config_from(const std::string& command, const py::dict& config) {
  json j = from_py(config);
  j["command"] = command;
  RunConfig c = parse_run_config(j);
  validate(c);
  return c;
}

py::dict loss_dict(const LossOutput& o) {
  py::dict d;
  d["value"] = o.value;
  d["embedding_grad"] = o.embedding_grad;
  if (o.logit_grad.size() > 0) d["logit_grad"] = o.logit_grad;
  d["radii_term"] = o.radii_term;
  d["active_fraction"] = o.active_fraction();
  return d;
}

py::dict log_dict(const TrainLog& log) {
  py::list loss, ce;
  for (const auto& e : log.epochs) {
    loss.append(e.loss);
    ce.append(e.ce_weighted);
  }
  py::dict d;
  d["loss"] = loss;
  d["ce_weighted"] = ce;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "FAT-loss metric learning core";

  auto base = py::register_exception<Error>(m, "FatlabError");
  auto validation = py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", validation.ptr());
  py::register_exception<InvalidArgumentError>(m, "InvalidArgumentError", validation.ptr());
  py::register_exception<DegenerateVectorError>(m, "DegenerateVectorError", base.ptr());
  py::register_exception<MissingClusterError>(m, "MissingClusterError", base.ptr());
  py::register_exception<DegenerateClusterError>(m, "DegenerateClusterError", base.ptr());
  py::register_exception<EmptyTripletSetError>(m, "EmptyTripletSetError", base.ptr());
  py::register_exception<InvalidBatchError>(m, "InvalidBatchError", base.ptr());
  py::register_exception<TrainingDivergenceError>(m, "TrainingDivergenceError", base.ptr());
  py::register_exception<EmptyTrustedSetError>(m, "EmptyTrustedSetError", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());

  m.def("euclidean_distance", [](const Vector& u, const Vector& v) { return euclidean_distance(u, v); });
  m.def("softmax", [](const Vector& z) { return softmax(z); });
  m.def("entropy", [](const Vector& p) { return entropy(p); });

  m.def(
      "compute_centroids",
      [](const RowMatrix& features, const std::vector<Label>& labels, const std::string& option) {
        py::dict out;
        for (const auto& [label, s] : compute_centroids(features, labels, parse_centroid_option(option))) {
          py::dict c;
          c["centroid"] = s.centroid;
          c["radius"] = s.radius;
          c["members"] = s.members;
          out[py::int_(label)] = c;
        }
        return out;
      },
      py::arg("features"), py::arg("labels"), py::arg("option") = "C1");

  m.def(
      "triplet_batch_all",
      [](const RowMatrix& emb, const std::vector<Label>& labels, double margin, bool active_only) {
        return loss_dict(triplet_batch_all(emb, labels, margin, active_only));
      },
      py::arg("embeddings"), py::arg("labels"), py::arg("margin"), py::arg("average_active_only") = false);
  m.def(
      "triplet_batch_hard",
      [](const RowMatrix& emb, const std::vector<Label>& labels, double margin) {
        return loss_dict(triplet_batch_hard(emb, labels, margin));
      },
      py::arg("embeddings"), py::arg("labels"), py::arg("margin"));
  m.def(
      "fat_batch",
      [](const RowMatrix& emb, const std::vector<Label>& labels, double margin, const std::string& centroid,
         const std::string& negative, bool normalized, bool with_radii) {
        LossConfig cfg;
        cfg.margin = margin;
        cfg.centroid = parse_centroid_option(centroid);
        cfg.negative = parse_negative_strategy(negative);
        cfg.normalized = normalized;
        validate(cfg);
        const ClusterSet clusters = compute_centroids(emb, labels, cfg.centroid);
        return loss_dict(point_to_set_batch(emb, labels, clusters, cfg, with_radii));
      },
      "Point-to-set loss with clusters computed from the batch itself; with_radii=False gives P2S.",
      py::arg("embeddings"), py::arg("labels"), py::arg("margin") = 1.0, py::arg("centroid") = "C1",
      py::arg("negative") = "batchNeg", py::arg("normalized") = false, py::arg("with_radii") = true);

  m.def(
      "evaluate_retrieval",
      [](const RowMatrix& q, const std::vector<Label>& ql, const RowMatrix& g, const std::vector<Label>& gl) {
        return to_py(to_json(evaluate_retrieval(q, ql, g, gl)));
      },
      py::arg("query"), py::arg("query_labels"), py::arg("gallery"), py::arg("gallery_labels"));
  m.def("count_triplets_vanilla", &count_triplets_vanilla, py::arg("identities"), py::arg("per_identity"));
  m.def("count_pairs_hard_mining", &count_pairs_hard_mining, py::arg("identities"), py::arg("per_identity"));

  m.def(
      "benchmark_loss_scaling",
      [](const std::string& loss, const std::vector<std::size_t>& sizes, int repeats) {
        BenchSpec spec;
        spec.loss = parse_bench_loss(loss);
        spec.sizes = sizes;
        spec.repeats = repeats;
        return to_py(to_json(benchmark_loss_scaling(spec)));
      },
      py::arg("loss"), py::arg("sizes"), py::arg("repeats") = 3);

  m.def(
      "generate_dataset",
      [](const py::dict& config) {
        const PreparedData d = prepare_data(config_from("gen-data", config));
        py::dict out;
        out["features"] = d.data.features;
        out["labels"] = d.data.labels;
        out["clean_labels"] = d.data.clean_labels;
        out["num_classes"] = d.data.num_classes;
        std::vector<std::string> prov;
        for (auto p : d.provenance) prov.push_back(to_string(p));
        out["provenance"] = prov;
        return out;
      },
      "Synthetic identities with injected noise, as configured.", py::arg("config") = py::dict());

  m.def(
      "train",
      [](const py::dict& config) {
        const RunConfig c = config_from("train", config);
        const TrainOutcome o = run_train(c, prepare_data(c));
        py::dict out;
        out["report"] = to_py(to_json(o.report));
        out["log"] = log_dict(o.result.log);
        return out;
      },
      "Trains on the configured data and evaluates held-out queries.", py::arg("config") = py::dict());

  m.def(
      "distill",
      [](const py::dict& config) {
        const RunConfig c = config_from("distill", config);
        const DistillOutcome o = run_distill(c, prepare_data(c));
        py::dict out;
        out["teacher"] = to_py(to_json(o.teacher_report));
        out["distilled"] = to_py(to_json(o.distilled_report));
        out["baseline"] = to_py(to_json(o.baseline_report));
        out["full_corruption"] = o.full_corruption;
        out["first_selection_corruption"] = o.first_selection_corruption;
        out["final_selection_corruption"] = o.final_selection_corruption;
        return out;
      },
      "Teacher, soft labels, then distilled and non-distilled students.", py::arg("config") = py::dict());

  m.def(
      "resolve_config",
      [](const std::string& command, const py::dict& config) { return to_py(to_json(config_from(command, config))); },
      py::arg("command"), py::arg("config") = py::dict());

  m.def(
      "run",
      [](const std::string& command, const std::string& config_path, const std::string& out,
         std::optional<std::uint64_t> seed, const std::vector<std::string>& overrides) {
        CliOptions o;
        o.command = command;
        o.config_path = config_path;
        o.out = out;
        o.seed = seed;
        o.overrides = overrides;
        std::ostringstream log, err;
        const int code = fatlab::run(o, log, err);
        return py::make_tuple(code, log.str(), err.str());
      },
      "Runs a CLI command in-process; returns (exit_code, stdout, stderr).", py::arg("command"),
      py::arg("config_path") = "", py::arg("out") = "out", py::arg("seed") = py::none(),
      py::arg("overrides") = std::vector<std::string>{});
}
