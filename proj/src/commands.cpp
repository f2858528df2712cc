#include "relgraph/commands.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <unordered_set>

#include "relgraph/io.hpp"
#include "relgraph/metrics.hpp"
#include "relgraph/synth.hpp"

namespace fs = std::filesystem;

namespace relgraph {

namespace {

constexpr uint64_t kModelInitTag = 0x90de1;
constexpr uint64_t kTestNegativesTag = 0x7e57;

// Staged run directory: fill it, then commit() renames it onto the target.
class RunDir {
 public:
  explicit RunDir(const OutputSpec& spec) : final_(spec.out) {
    require(!spec.out.empty(), "output directory not set");
    if (fs::exists(final_)) {
      const bool empty_dir = fs::is_directory(final_) && fs::is_empty(final_);
      if (!spec.overwrite && !empty_dir)
        throw RuntimeFailure("output directory " + spec.out +
                             " already exists; pass --overwrite to replace it");
      fs::remove_all(final_);
    }
    if (final_.has_parent_path()) fs::create_directories(final_.parent_path());
    stage_ = final_;
    stage_ += ".stage";
    fs::remove_all(stage_);
    fs::create_directories(stage_);
  }
  ~RunDir() {
    if (!committed_) {
      std::error_code ec;
      fs::remove_all(stage_, ec);
    }
  }
  std::string file(const std::string& name) const { return (stage_ / name).string(); }
  void commit() {
    fs::rename(stage_, final_);
    committed_ = true;
  }

 private:
  fs::path final_, stage_;
  bool committed_ = false;
};

void write_text(const std::string& path, const std::string& body) {
  std::ofstream out(path);
  out << body;
  if (!out) throw RuntimeFailure("write failed for " + path);
}

std::vector<std::string> split_list(const std::string& s, char sep = ',') {
  std::vector<std::string> out;
  std::string item;
  for (size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == sep) {
      const auto b = item.find_first_not_of(" \t");
      if (b != std::string::npos)
        out.push_back(item.substr(b, item.find_last_not_of(" \t") - b + 1));
      item.clear();
    } else {
      item.push_back(s[i]);
    }
  }
  return out;
}

std::vector<size_t> parse_sizes(const std::string& s, const std::string& what) {
  std::vector<size_t> out;
  for (const auto& tok : split_list(s)) {
    try {
      size_t used = 0;
      out.push_back(std::stoull(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw RuntimeFailure("bad " + what + " entry: '" + tok + "'");
    }
  }
  return out;
}

std::vector<double> parse_reals(const std::string& s, const std::string& what) {
  std::vector<double> out;
  for (const auto& tok : split_list(s)) {
    try {
      size_t used = 0;
      out.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw RuntimeFailure("bad " + what + " entry: '" + tok + "'");
    }
  }
  return out;
}

std::string fmt_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct MetricSink {
  std::string text;
  void add(const std::string& name, double value) {
    text += "metric " + name + " " + fmt_real(value) + "\n";
  }
};

void finish_run(RunDir& run, const std::string& resolved, const MetricSink* metrics,
                const std::string& out_path) {
  write_text(run.file("config.resolved"), resolved);
  if (metrics) write_text(run.file("metrics.txt"), metrics->text);
  run.commit();
  if (metrics) std::cout << metrics->text;
  std::cout << "run " << out_path << "\n";
}

void check_disjoint(const NodeSplits& sp, const std::string& what) {
  std::unordered_set<size_t> seen;
  size_t total = 0;
  for (const auto* part : {&sp.train, &sp.valid, &sp.test}) {
    total += part->size();
    for (size_t id : *part) seen.insert(id);
  }
  require(seen.size() == total, what + " splits overlap");
}

ModelConfig model_config(const TrainOptions& o, size_t n_classes) {
  ModelConfig mc;
  mc.layers = o.layers;
  mc.heads = o.heads;
  mc.d_in = o.d_in;
  mc.d_node = o.d_node;
  mc.d_rel = o.d_rel;
  mc.d_fuse = o.d_fuse;
  mc.n_classes = n_classes;
  mc.dropout = o.dropout;
  mc.leaky_slope = o.leaky_slope;
  mc.no_wrc = o.no_wrc;
  mc.no_cmp = o.no_cmp;
  mc.no_rrf = o.no_rrf;
  return mc;
}

TrainConfig train_config(const TrainOptions& o, Task task) {
  TrainConfig tc;
  tc.lr = o.lr;
  tc.lr_min = o.lr_min;
  tc.epochs = o.epochs;
  tc.patience = o.patience;
  tc.batch = o.full_batch ? 0 : o.batch;
  tc.fanouts = o.full_batch ? std::vector<size_t>{} : parse_sizes(o.fanouts, "fanouts");
  tc.negatives_train = o.negatives_train;
  tc.negatives_eval = o.negatives_eval;
  tc.seed = o.seed;
  tc.task = task;
  return tc;
}

void add_common_train_options(std::vector<OptSpec>& t, TrainOptions& o) {
  t.push_back({"splits", &o.splits, "split file", true});
  t.push_back({"seed", &o.seed, "run seed; fixes init, shuffling, and sampling"});
  t.push_back({"layers", &o.layers, "stacked layers"});
  t.push_back({"heads", &o.heads, "attention heads"});
  t.push_back({"d-in", &o.d_in, "projected input width"});
  t.push_back({"d-node", &o.d_node, "node representation width (heads concatenated)"});
  t.push_back({"d-rel", &o.d_rel, "per-head relation representation width"});
  t.push_back({"d-fuse", &o.d_fuse, "fused output width (heads concatenated)"});
  t.push_back({"dropout", &o.dropout, "feature dropout rate while training"});
  t.push_back({"leaky-slope", &o.leaky_slope, "negative slope of attention activations"});
  t.push_back({"no-wrc", &o.no_wrc, "ablation: drop the weighted residual"});
  t.push_back({"no-cmp", &o.no_cmp, "ablation: drop cross-relation mixing"});
  t.push_back({"no-rrf", &o.no_rrf, "ablation: mean-pool instead of attention fusing"});
  t.push_back({"lr", &o.lr, "peak learning rate of the cosine schedule"});
  t.push_back({"lr-min", &o.lr_min, "floor learning rate of the cosine schedule"});
  t.push_back({"epochs", &o.epochs, "epoch budget"});
  t.push_back({"patience", &o.patience, "early-stop patience in epochs"});
  t.push_back({"batch", &o.batch, "minibatch size; 0 trains full batch"});
  t.push_back({"fanouts", &o.fanouts, "per-layer neighbor fanouts; empty keeps full neighborhoods"});
  t.push_back({"full-batch", &o.full_batch, "force full-batch, full-neighborhood training"});
}

}  // namespace

std::vector<OptSpec> option_table(GenSynthOptions& o) {
  std::vector<OptSpec> t;
  t.push_back({"out", &o.output.out, "output directory", true});
  t.push_back({"overwrite", &o.output.overwrite, "replace an existing output directory"});
  t.push_back({"seed", &o.seed, "generator seed"});
  t.push_back({"types", &o.types, "node type names, comma separated"});
  t.push_back({"counts", &o.counts, "node counts per type"});
  t.push_back({"dims", &o.dims, "feature widths per type"});
  t.push_back({"relations", &o.relations, "relations as name:src:dst, comma separated"});
  t.push_back({"edges", &o.edges, "edge counts per relation"});
  t.push_back({"homophily", &o.homophily, "same-class edge bias per relation, in [0,1]"});
  t.push_back({"classes", &o.classes, "planted class count"});
  t.push_back({"signal", &o.signal, "fraction of feature variance tied to the class"});
  t.push_back({"label-type", &o.label_type, "labeled node type; empty means the first"});
  t.push_back({"train-frac", &o.train_frac, "training fraction of the labeled type"});
  t.push_back({"valid-frac", &o.valid_frac, "validation fraction of the labeled type"});
  return t;
}

std::vector<OptSpec> classify_option_table(TrainOptions& o) {
  std::vector<OptSpec> t;
  t.push_back({"out", &o.output.out, "run directory", true});
  t.push_back({"overwrite", &o.output.overwrite, "replace an existing run directory"});
  t.push_back({"graph", &o.graph, "graph file", true});
  t.push_back({"labels", &o.labels, "labels file", true});
  add_common_train_options(t, o);
  return t;
}

std::vector<OptSpec> linkpred_option_table(TrainOptions& o) {
  std::vector<OptSpec> t;
  t.push_back({"out", &o.output.out, "run directory", true});
  t.push_back({"overwrite", &o.output.overwrite, "replace an existing run directory"});
  t.push_back({"graph", &o.graph, "graph file", true});
  t.push_back({"relation", &o.relation, "target base relation name", true});
  add_common_train_options(t, o);
  t.push_back({"negatives-train", &o.negatives_train, "corrupted pairs per positive while training"});
  t.push_back({"negatives-eval", &o.negatives_eval, "corrupted pairs per positive for evaluation"});
  return t;
}

std::vector<OptSpec> option_table(ClusterOptions& o) {
  std::vector<OptSpec> t;
  t.push_back({"out", &o.output.out, "run directory", true});
  t.push_back({"overwrite", &o.output.overwrite, "replace an existing run directory"});
  t.push_back({"graph", &o.graph, "graph file", true});
  t.push_back({"labels", &o.labels, "labels file", true});
  t.push_back({"checkpoint", &o.checkpoint, "trained model checkpoint", true});
  t.push_back({"k", &o.k, "cluster count; 0 means the label class count"});
  t.push_back({"repeats", &o.repeats, "k-means repetitions averaged into the scores"});
  t.push_back({"seed", &o.seed, "clustering seed"});
  return t;
}

std::vector<OptSpec> option_table(EmbedOptions& o) {
  std::vector<OptSpec> t;
  t.push_back({"out", &o.output.out, "run directory", true});
  t.push_back({"overwrite", &o.output.overwrite, "replace an existing run directory"});
  t.push_back({"graph", &o.graph, "graph file", true});
  t.push_back({"checkpoint", &o.checkpoint, "trained model checkpoint", true});
  t.push_back({"node-type", &o.node_type, "node type to embed", true});
  return t;
}

std::string render_config(const std::vector<OptSpec>& specs) {
  std::string out;
  for (const auto& s : specs) {
    out += s.key + " = ";
    std::visit(
        [&](auto* field) {
          using T = std::remove_pointer_t<decltype(field)>;
          if constexpr (std::is_same_v<T, std::string>)
            out += *field;
          else if constexpr (std::is_same_v<T, bool>)
            out += *field ? "true" : "false";
          else if constexpr (std::is_same_v<T, double>)
            out += fmt_real(*field);
          else
            out += std::to_string(*field);
        },
        s.field);
    out += "\n";
  }
  return out;
}

void cmd_gen_synth(const GenSynthOptions& o, const std::string& resolved) {
  SyntheticSpec spec;
  spec.type_names = split_list(o.types);
  for (size_t c : parse_sizes(o.counts, "counts")) spec.counts.push_back(uint32_t(c));
  spec.feature_dims = parse_sizes(o.dims, "dims");
  for (const auto& r : split_list(o.relations)) {
    const auto parts = split_list(r, ':');
    require(parts.size() == 3, "relation '" + r + "' is not name:src:dst");
    spec.relations.push_back({parts[0], parts[1], parts[2]});
  }
  spec.edge_counts = parse_sizes(o.edges, "edges");
  spec.homophily = parse_reals(o.homophily, "homophily");
  spec.n_classes = o.classes;
  spec.signal = o.signal;
  spec.train_frac = o.train_frac;
  spec.valid_frac = o.valid_frac;
  if (!o.label_type.empty()) {
    const auto it =
        std::find(spec.type_names.begin(), spec.type_names.end(), o.label_type);
    require(it != spec.type_names.end(), "label-type '" + o.label_type + "' is not a node type");
    spec.label_type = size_t(it - spec.type_names.begin());
  }

  const SynthData d = gen_synth(spec, o.seed);
  RunDir run(o.output);
  save_graph(run.file("graph.txt"), d.g);
  save_labels(run.file("labels.txt"), spec.type_names[spec.label_type], d.labels);
  save_splits(run.file("splits.txt"), d.splits);
  finish_run(run, resolved, nullptr, o.output.out);
}

void cmd_train_classify(const TrainOptions& o, const std::string& resolved) {
  const HeteroGraph g = load_graph(o.graph);
  const RelationGraphSet rs = decompose(g);
  auto [ltype_name, labels] = load_labels(o.labels);
  require(g.schema.has_type(ltype_name),
          "labels file names node type '" + ltype_name + "' which the graph lacks");
  const size_t lt = g.schema.type_id(ltype_name);
  require(labels.size() == g.node_counts[lt],
          "labels file covers " + std::to_string(labels.size()) + " nodes but type " +
              ltype_name + " has " + std::to_string(g.node_counts[lt]));

  NodeSplits sp = load_splits(o.splits);
  check_disjoint(sp, "node");
  for (const auto* part : {&sp.train, &sp.valid, &sp.test})
    for (size_t id : *part)
      require(id < g.node_counts[lt], "split id " + std::to_string(id) + " out of range");
  require(!sp.test.empty(), "test split is empty");
  const size_t n_classes = 1 + *std::max_element(labels.begin(), labels.end());

  Model model(rs, model_config(o, n_classes), Rng::derive(o.seed, {kModelInitTag}));
  const TrainConfig tc = train_config(o, Task::classify);

  RunDir run(o.output);
  std::ofstream log(run.file("report.log"));
  ClassifyTask task{lt, labels, sp};
  const TrainReport rep = train(model, rs, task, tc, &log);
  log.close();

  const auto pred = argmax_rows(classify_logits(model, rs, lt, sp.test));
  std::vector<size_t> truth;
  for (size_t id : sp.test) truth.push_back(labels[id]);

  MetricSink metrics;
  metrics.add("test_accuracy", accuracy(pred, truth));
  metrics.add("test_macro_f1", macro_f1(pred, truth, n_classes));
  metrics.add("val_accuracy", rep.best_val);
  metrics.add("best_epoch", double(rep.best_epoch));
  metrics.add("epochs_run", double(rep.stop_epoch));
  save_checkpoint(run.file("checkpoint.bin"), model);
  finish_run(run, resolved, &metrics, o.output.out);
}

void cmd_train_linkpred(const TrainOptions& o, const std::string& resolved) {
  const HeteroGraph g = load_graph(o.graph);
  const RelationGraphSet rs = decompose(g);
  const size_t rel = g.schema.relation_id(o.relation);
  const auto& all_edges = g.edges[rel];

  const NodeSplits raw = load_splits(o.splits);
  check_disjoint(raw, "edge");
  EdgeSplits sp;
  for (const auto& [part, dst] : {std::pair{&raw.train, &sp.train},
                                  std::pair{&raw.valid, &sp.valid},
                                  std::pair{&raw.test, &sp.test}}) {
    for (size_t idx : *part) {
      require(idx < all_edges.size(),
              "edge split index " + std::to_string(idx) + " out of range for relation " +
                  o.relation);
      dst->push_back(all_edges[idx]);
    }
  }
  require(!sp.test.empty(), "test split is empty");

  Model model(rs, model_config(o, 0), Rng::derive(o.seed, {kModelInitTag}));
  const TrainConfig tc = train_config(o, Task::linkpred);

  RunDir run(o.output);
  std::ofstream log(run.file("report.log"));
  LinkpredTask task{rel, sp};
  const TrainReport rep = train(model, rs, task, tc, &log);
  log.close();

  Rng neg_rng(Rng::derive(o.seed, {kTestNegativesTag}));
  const auto negs = sample_negatives(g, rel, sp.test, o.negatives_eval, neg_rng);
  std::vector<Edge> pairs = sp.test;
  pairs.insert(pairs.end(), negs.begin(), negs.end());
  std::vector<size_t> truth(sp.test.size(), 1);
  truth.resize(pairs.size(), 0);
  const LinkMetrics lm = link_metrics(edge_scores(model, rs, rel, pairs), truth);

  MetricSink metrics;
  metrics.add("test_rmse", lm.rmse);
  metrics.add("test_mae", lm.mae);
  metrics.add("val_rmse", rep.best_val);
  metrics.add("best_epoch", double(rep.best_epoch));
  metrics.add("epochs_run", double(rep.stop_epoch));
  save_checkpoint(run.file("checkpoint.bin"), model);
  finish_run(run, resolved, &metrics, o.output.out);
}

void cmd_cluster(const ClusterOptions& o, const std::string& resolved) {
  const HeteroGraph g = load_graph(o.graph);
  const RelationGraphSet rs = decompose(g);
  auto [ltype_name, labels] = load_labels(o.labels);
  require(g.schema.has_type(ltype_name),
          "labels file names node type '" + ltype_name + "' which the graph lacks");
  const size_t lt = g.schema.type_id(ltype_name);
  require(labels.size() == g.node_counts[lt], "labels do not cover node type " + ltype_name);

  const Model model = load_checkpoint(o.checkpoint, rs);
  const size_t k = o.k ? o.k : 1 + *std::max_element(labels.begin(), labels.end());
  const ClusterScores cs = clustering_protocol(model, rs, lt, labels, k, o.seed, o.repeats);

  RunDir run(o.output);
  MetricSink metrics;
  metrics.add("nmi", cs.nmi);
  metrics.add("ari", cs.ari);
  finish_run(run, resolved, &metrics, o.output.out);
}

void cmd_embed(const EmbedOptions& o, const std::string& resolved) {
  const HeteroGraph g = load_graph(o.graph);
  const RelationGraphSet rs = decompose(g);
  require(g.schema.has_type(o.node_type),
          "node-type '" + o.node_type + "' is not in the graph");
  const size_t t = g.schema.type_id(o.node_type);
  require(g.node_counts[t] > 0, "node type " + o.node_type + " has no nodes");
  const Model model = load_checkpoint(o.checkpoint, rs);

  std::vector<std::vector<uint32_t>> seeds(g.schema.node_types.size());
  for (uint32_t i = 0; i < g.node_counts[t]; ++i) seeds[t].push_back(i);
  const BlockChain chain = full_blocks(rs, seeds, model.config().layers);
  ForwardTrace trace;
  const auto fused = model.forward(rs, chain, false, 0, &trace);

  const auto& rels = rs.by_dst_type[t];
  require(!rels.empty(), "node type " + o.node_type + " has no incoming relations");
  const size_t n = g.node_counts[t];
  std::vector<double> mean(rels.size(), 0.0);
  for (size_t h = 0; h < model.config().heads; ++h) {
    const auto& gm = trace.gamma[h][t];
    for (size_t v = 0; v < n; ++v)
      for (size_t j = 0; j < rels.size(); ++j) mean[j] += gm[v * rels.size() + j];
  }
  for (auto& m : mean) m /= double(n * model.config().heads);

  RunDir run(o.output);
  save_matrix(run.file("embeddings.bin"), fused[t].rows(), fused[t].cols(),
              fused[t].values());
  std::string weights;
  for (size_t j = 0; j < rels.size(); ++j)
    weights += "relation_weight " + rs.directed[rels[j]].name + " " + fmt_real(mean[j]) + "\n";
  write_text(run.file("relation_weights.txt"), weights);
  finish_run(run, resolved, nullptr, o.output.out);
}

}  // namespace relgraph
