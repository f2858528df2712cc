// Python bindings for the main operations: dataset generation and io, model
// construction and training, embeddings, and the evaluation metrics. Thin
// wrappers only; all behavior lives in the C++ library.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>
#include <stdexcept>
#include <utility>

#include "relgraph/io.hpp"
#include "relgraph/metrics.hpp"
#include "relgraph/synth.hpp"
#include "relgraph/train.hpp"

namespace py = pybind11;
using namespace relgraph;

namespace {

// The relation tables point into the owned graph, so the graph lives behind
// a unique_ptr and never moves after construction.
struct PyGraph {
  std::unique_ptr<HeteroGraph> g;
  RelationGraphSet rs;

  explicit PyGraph(HeteroGraph graph)
      : g(std::make_unique<HeteroGraph>(std::move(graph))), rs(decompose(*g)) {}
};

struct PyModel {
  std::shared_ptr<PyGraph> graph;
  Model model;
};

std::vector<std::vector<double>> rows_of(const Tensor& t) {
  std::vector<std::vector<double>> out(t.rows(), std::vector<double>(t.cols()));
  for (size_t i = 0; i < t.rows(); ++i)
    for (size_t j = 0; j < t.cols(); ++j) out[i][j] = t.at(i, j);
  return out;
}

py::dict splits_dict(const NodeSplits& sp) {
  py::dict d;
  d["train"] = sp.train;
  d["valid"] = sp.valid;
  d["test"] = sp.test;
  return d;
}

py::dict report_dict(const TrainReport& rep) {
  py::dict d;
  d["best_epoch"] = rep.best_epoch;
  d["best_val"] = rep.best_val;
  d["stop_epoch"] = rep.stop_epoch;
  py::list hist;
  for (const auto& rec : rep.history)
    hist.append(py::make_tuple(rec.epoch, rec.train_loss, rec.val_metric, rec.lr));
  d["history"] = hist;
  return d;
}

TrainConfig make_train_cfg(double lr, double lr_min, size_t epochs, size_t patience,
                           size_t batch, const std::vector<size_t>& fanouts, uint64_t seed,
                           Task task) {
  TrainConfig tc;
  tc.lr = lr;
  tc.lr_min = lr_min;
  tc.epochs = epochs;
  tc.patience = patience;
  tc.batch = batch;
  tc.fanouts = fanouts;
  tc.seed = seed;
  tc.task = task;
  return tc;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "relation-aware heterogeneous graph representation learning";

  py::class_<PyGraph, std::shared_ptr<PyGraph>>(m, "Graph")
      .def_static(
          "load", [](const std::string& path) { return std::make_shared<PyGraph>(load_graph(path)); },
          py::arg("path"))
      .def("save", [](const PyGraph& pg, const std::string& path) { save_graph(path, *pg.g); },
           py::arg("path"))
      .def_property_readonly("node_types",
                             [](const PyGraph& pg) { return pg.g->schema.node_types; })
      .def_property_readonly("relations",
                             [](const PyGraph& pg) {
                               std::vector<std::string> names;
                               for (const auto& r : pg.g->schema.relations) names.push_back(r.name);
                               return names;
                             })
      .def_property_readonly("node_counts",
                             [](const PyGraph& pg) { return pg.g->node_counts; })
      .def_property_readonly("num_edges", [](const PyGraph& pg) { return pg.g->num_edges(); })
      .def("edges",
           [](const PyGraph& pg, const std::string& relation) {
             return pg.g->edges[pg.g->schema.relation_id(relation)];
           },
           py::arg("relation"))
      .def("features",
           [](const PyGraph& pg, const std::string& node_type) {
             return rows_of(pg.g->features[pg.g->schema.type_id(node_type)]);
           },
           py::arg("node_type"));

  m.def(
      "generate",
      [](const std::vector<std::string>& types, const std::vector<uint32_t>& counts,
         const std::vector<size_t>& dims,
         const std::vector<std::tuple<std::string, std::string, std::string>>& relations,
         const std::vector<size_t>& edges, const std::vector<double>& homophily,
         size_t classes, double signal, const std::string& label_type, double train_frac,
         double valid_frac, uint64_t seed) {
        SyntheticSpec spec;
        spec.type_names = types;
        spec.counts = counts;
        spec.feature_dims = dims;
        for (const auto& [name, src, dst] : relations) spec.relations.push_back({name, src, dst});
        spec.edge_counts = edges;
        spec.homophily = homophily;
        spec.n_classes = classes;
        spec.signal = signal;
        spec.label_type = label_type.empty() ? 0 : [&] {
          for (size_t t = 0; t < types.size(); ++t)
            if (types[t] == label_type) return t;
          throw std::invalid_argument("unknown label_type: " + label_type);
        }();
        spec.train_frac = train_frac;
        spec.valid_frac = valid_frac;
        SynthData data = gen_synth(spec, seed);
        return py::make_tuple(std::make_shared<PyGraph>(std::move(data.g)), data.labels,
                              splits_dict(data.splits));
      },
      py::arg("types"), py::arg("counts"), py::arg("dims"), py::arg("relations"),
      py::arg("edges"), py::arg("homophily"), py::arg("classes") = 3,
      py::arg("signal") = 0.7, py::arg("label_type") = "", py::arg("train_frac") = 0.2,
      py::arg("valid_frac") = 0.1, py::arg("seed") = 1,
      "Planted-class synthetic dataset; returns (graph, labels, splits).");

  py::class_<PyModel, std::shared_ptr<PyModel>>(m, "Model")
      .def(py::init([](std::shared_ptr<PyGraph> graph, size_t layers, size_t heads,
                       size_t d_in, size_t d_node, size_t d_rel, size_t d_fuse,
                       size_t classes, double dropout, double leaky_slope, bool no_wrc,
                       bool no_cmp, bool no_rrf, uint64_t seed) {
             ModelConfig cfg;
             cfg.layers = layers;
             cfg.heads = heads;
             cfg.d_in = d_in;
             cfg.d_node = d_node;
             cfg.d_rel = d_rel;
             cfg.d_fuse = d_fuse;
             cfg.n_classes = classes;
             cfg.dropout = dropout;
             cfg.leaky_slope = leaky_slope;
             cfg.no_wrc = no_wrc;
             cfg.no_cmp = no_cmp;
             cfg.no_rrf = no_rrf;
             return std::make_shared<PyModel>(
                 PyModel{graph, Model(graph->rs, cfg, seed)});
           }),
           py::arg("graph"), py::arg("layers") = 2, py::arg("heads") = 8,
           py::arg("d_in") = 64, py::arg("d_node") = 64, py::arg("d_rel") = 64,
           py::arg("d_fuse") = 64, py::arg("classes") = 0, py::arg("dropout") = 0.6,
           py::arg("leaky_slope") = 0.2, py::arg("no_wrc") = false,
           py::arg("no_cmp") = false, py::arg("no_rrf") = false, py::arg("seed") = 1)
      .def_static(
          "load",
          [](const std::string& path, std::shared_ptr<PyGraph> graph) {
            return std::make_shared<PyModel>(PyModel{graph, load_checkpoint(path, graph->rs)});
          },
          py::arg("path"), py::arg("graph"))
      .def("save",
           [](const PyModel& pm, const std::string& path) { save_checkpoint(path, pm.model); },
           py::arg("path"))
      .def_property_readonly("num_parameters",
                             [](const PyModel& pm) {
                               size_t total = 0;
                               for (const auto& t : pm.model.parameters()) total += t.size();
                               return total;
                             })
      .def("train_classify",
           [](PyModel& pm, const std::string& label_type, const std::vector<size_t>& labels,
              const std::vector<size_t>& train_ids, const std::vector<size_t>& valid_ids,
              const std::vector<size_t>& test_ids, double lr, double lr_min, size_t epochs,
              size_t patience, size_t batch, const std::vector<size_t>& fanouts,
              uint64_t seed) {
             const ClassifyTask task{pm.graph->g->schema.type_id(label_type), labels,
                                     {train_ids, valid_ids, test_ids}};
             const TrainConfig tc = make_train_cfg(lr, lr_min, epochs, patience, batch,
                                                   fanouts, seed, Task::classify);
             return report_dict(train(pm.model, pm.graph->rs, task, tc));
           },
           py::arg("label_type"), py::arg("labels"), py::arg("train_ids"),
           py::arg("valid_ids"), py::arg("test_ids"), py::arg("lr") = 1e-3,
           py::arg("lr_min") = 0.0, py::arg("epochs") = 200, py::arg("patience") = 50,
           py::arg("batch") = 0, py::arg("fanouts") = std::vector<size_t>{},
           py::arg("seed") = 1)
      .def("train_linkpred",
           [](PyModel& pm, const std::string& relation, const std::vector<Edge>& train_edges,
              const std::vector<Edge>& valid_edges, const std::vector<Edge>& test_edges,
              double lr, double lr_min, size_t epochs, size_t patience, size_t batch,
              const std::vector<size_t>& fanouts, size_t negatives_train,
              size_t negatives_eval, uint64_t seed) {
             const LinkpredTask task{pm.graph->g->schema.relation_id(relation),
                                     {train_edges, valid_edges, test_edges}};
             TrainConfig tc = make_train_cfg(lr, lr_min, epochs, patience, batch, fanouts,
                                             seed, Task::linkpred);
             tc.negatives_train = negatives_train;
             tc.negatives_eval = negatives_eval;
             return report_dict(train(pm.model, pm.graph->rs, task, tc));
           },
           py::arg("relation"), py::arg("train_edges"), py::arg("valid_edges"),
           py::arg("test_edges"), py::arg("lr") = 1e-3, py::arg("lr_min") = 0.0,
           py::arg("epochs") = 200, py::arg("patience") = 50, py::arg("batch") = 0,
           py::arg("fanouts") = std::vector<size_t>{}, py::arg("negatives_train") = 5,
           py::arg("negatives_eval") = 1, py::arg("seed") = 1)
      .def("predict",
           [](const PyModel& pm, const std::string& node_type,
              const std::vector<size_t>& ids) {
             return argmax_rows(classify_logits(pm.model, pm.graph->rs,
                                                pm.graph->g->schema.type_id(node_type), ids));
           },
           py::arg("node_type"), py::arg("ids"))
      .def("embed",
           [](const PyModel& pm, const std::string& node_type) {
             return embed_all(pm.model, pm.graph->rs, pm.graph->g->schema.type_id(node_type));
           },
           py::arg("node_type"), "Fused representation per node, row i for node id i.")
      .def("edge_scores",
           [](const PyModel& pm, const std::string& relation, const std::vector<Edge>& pairs) {
             return edge_scores(pm.model, pm.graph->rs,
                                pm.graph->g->schema.relation_id(relation), pairs);
           },
           py::arg("relation"), py::arg("pairs"));

  m.def("accuracy", &accuracy, py::arg("pred"), py::arg("truth"));
  m.def("macro_f1", &macro_f1, py::arg("pred"), py::arg("truth"), py::arg("classes"));
  m.def("nmi", &nmi, py::arg("a"), py::arg("b"));
  m.def("ari", &ari, py::arg("a"), py::arg("b"));
  m.def(
      "clustering_score",
      [](const PyModel& pm, const std::string& node_type, const std::vector<size_t>& labels,
         size_t k, uint64_t seed, size_t repeats) {
        const ClusterScores cs =
            clustering_protocol(pm.model, pm.graph->rs, pm.graph->g->schema.type_id(node_type),
                                labels, k, seed, repeats);
        return py::make_tuple(cs.nmi, cs.ari);
      },
      py::arg("model"), py::arg("node_type"), py::arg("labels"), py::arg("k"),
      py::arg("seed") = 1, py::arg("repeats") = 10,
      "Mean (nmi, ari) of k-means over L2-normalized embeddings.");
}
