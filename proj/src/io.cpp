#include "relgraph/io.hpp"

#include <bit>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>

static_assert(std::endian::native == std::endian::little,
              "file formats assume a little-endian host");

namespace relgraph {

namespace {

void rename_over(const std::string& tmp, const std::string& path) {
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    throw RuntimeFailure("could not move temp file onto " + path);
  }
}

std::ofstream open_out(const std::string& path, bool binary) {
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw RuntimeFailure("cannot open " + path + " for writing");
  return out;
}

std::ifstream open_in(const std::string& path, bool binary) {
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) throw RuntimeFailure("cannot open " + path);
  return in;
}

// directive lines of whitespace-separated fields; skips blanks and comments
std::vector<std::vector<std::string>> read_lines(const std::string& path) {
  std::ifstream in = open_in(path, false);
  std::vector<std::vector<std::string>> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::vector<std::string> fields;
    std::string f;
    while (ss >> f) fields.push_back(f);
    if (!fields.empty()) out.push_back(std::move(fields));
  }
  return out;
}

uint64_t parse_count(const std::string& s, const std::string& what) {
  try {
    size_t used = 0;
    const uint64_t v = std::stoull(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw RuntimeFailure("bad " + what + ": '" + s + "'");
  }
}

double parse_real(const std::string& s, const std::string& what) {
  try {
    size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw RuntimeFailure("bad " + what + ": '" + s + "'");
  }
}

std::string feat_path(const std::string& graph_path, const std::string& type) {
  return graph_path + "." + type + ".feat";
}

}  // namespace

void save_matrix(const std::string& path, size_t rows, size_t cols,
                 const std::vector<double>& values) {
  require(values.size() == rows * cols, "save_matrix: value count mismatch");
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out = open_out(tmp, true);
    const uint64_t header[2] = {rows, cols};
    out.write(reinterpret_cast<const char*>(header), sizeof header);
    out.write(reinterpret_cast<const char*>(values.data()),
              std::streamsize(values.size() * sizeof(double)));
    if (!out) throw RuntimeFailure("write failed for " + tmp);
  }
  rename_over(tmp, path);
}

std::tuple<size_t, size_t, std::vector<double>> load_matrix(const std::string& path) {
  std::ifstream in = open_in(path, true);
  uint64_t header[2];
  in.read(reinterpret_cast<char*>(header), sizeof header);
  if (!in) throw RuntimeFailure("truncated matrix header in " + path);
  std::vector<double> values(header[0] * header[1]);
  in.read(reinterpret_cast<char*>(values.data()),
          std::streamsize(values.size() * sizeof(double)));
  if (!in) throw RuntimeFailure("truncated matrix payload in " + path);
  return {size_t(header[0]), size_t(header[1]), std::move(values)};
}

void save_graph(const std::string& path, const HeteroGraph& g) {
  const Schema& s = g.schema;
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out = open_out(tmp, false);
    for (size_t t = 0; t < s.node_types.size(); ++t)
      out << "nodetype " << s.node_types[t] << " " << g.node_counts[t] << " "
          << s.feature_dims[t] << "\n";
    for (const RelationDef& r : s.relations)
      out << "relation " << r.name << " " << r.src_type << " " << r.dst_type << "\n";
    for (size_t r = 0; r < s.relations.size(); ++r)
      for (const Edge& e : g.edges[r])
        out << "edge " << s.relations[r].name << " " << e.first << " " << e.second << "\n";
    if (!out) throw RuntimeFailure("write failed for " + tmp);
  }
  for (size_t t = 0; t < s.node_types.size(); ++t)
    save_matrix(feat_path(path, s.node_types[t]), g.features[t].rows(),
                g.features[t].cols(), g.features[t].values());
  rename_over(tmp, path);
}

HeteroGraph load_graph(const std::string& path) {
  Schema s;
  std::vector<uint32_t> counts;
  std::vector<std::vector<Edge>> edges;
  for (const auto& f : read_lines(path)) {
    if (f[0] == "nodetype") {
      if (f.size() != 4) throw RuntimeFailure("malformed nodetype line in " + path);
      s.node_types.push_back(f[1]);
      counts.push_back(uint32_t(parse_count(f[2], "node count")));
      s.feature_dims.push_back(size_t(parse_count(f[3], "feature dim")));
    } else if (f[0] == "relation") {
      if (f.size() != 4) throw RuntimeFailure("malformed relation line in " + path);
      s.relations.push_back({f[1], f[2], f[3]});
      edges.emplace_back();
    } else if (f[0] == "edge") {
      if (f.size() != 4) throw RuntimeFailure("malformed edge line in " + path);
      const size_t r = s.relation_id(f[1]);
      edges[r].push_back({uint32_t(parse_count(f[2], "edge src")),
                          uint32_t(parse_count(f[3], "edge dst"))});
    } else {
      throw RuntimeFailure("unknown directive '" + f[0] + "' in " + path);
    }
  }
  std::vector<Tensor> feats;
  for (size_t t = 0; t < s.node_types.size(); ++t) {
    auto [rows, cols, values] = load_matrix(feat_path(path, s.node_types[t]));
    require(rows == counts[t] && cols == s.feature_dims[t],
            "feature sidecar shape disagrees with the graph header");
    feats.push_back(Tensor::from_values(rows, cols, std::move(values)));
  }
  return HeteroGraph::build(s, counts, feats, edges);
}

void save_labels(const std::string& path, const std::string& node_type,
                 const std::vector<size_t>& labels) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out = open_out(tmp, false);
    for (size_t i = 0; i < labels.size(); ++i)
      out << "label " << node_type << " " << i << " " << labels[i] << "\n";
    if (!out) throw RuntimeFailure("write failed for " + tmp);
  }
  rename_over(tmp, path);
}

std::pair<std::string, std::vector<size_t>> load_labels(const std::string& path) {
  std::string type;
  std::vector<size_t> labels;
  std::vector<bool> seen;
  for (const auto& f : read_lines(path)) {
    if (f[0] != "label" || f.size() != 4)
      throw RuntimeFailure("malformed label line in " + path);
    if (type.empty())
      type = f[1];
    else if (type != f[1])
      throw RuntimeFailure("labels file mixes node types in " + path);
    const size_t id = size_t(parse_count(f[2], "node id"));
    if (id >= labels.size()) {
      labels.resize(id + 1, 0);
      seen.resize(id + 1, false);
    }
    if (seen[id]) throw RuntimeFailure("duplicate label for node " + f[2]);
    seen[id] = true;
    labels[id] = size_t(parse_count(f[3], "class id"));
  }
  require(!labels.empty(), "labels file is empty: " + path);
  for (size_t i = 0; i < seen.size(); ++i)
    require(seen[i], "labels file misses node " + std::to_string(i));
  return {type, std::move(labels)};
}

void save_splits(const std::string& path, const NodeSplits& splits) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out = open_out(tmp, false);
    for (size_t id : splits.train) out << "split " << id << " train\n";
    for (size_t id : splits.valid) out << "split " << id << " valid\n";
    for (size_t id : splits.test) out << "split " << id << " test\n";
    if (!out) throw RuntimeFailure("write failed for " + tmp);
  }
  rename_over(tmp, path);
}

NodeSplits load_splits(const std::string& path) {
  NodeSplits out;
  for (const auto& f : read_lines(path)) {
    if (f[0] != "split" || f.size() != 3)
      throw RuntimeFailure("malformed split line in " + path);
    const size_t id = size_t(parse_count(f[1], "split id"));
    if (f[2] == "train")
      out.train.push_back(id);
    else if (f[2] == "valid")
      out.valid.push_back(id);
    else if (f[2] == "test")
      out.test.push_back(id);
    else
      throw RuntimeFailure("unknown split name '" + f[2] + "' in " + path);
  }
  return out;
}

void save_checkpoint(const std::string& path, const Model& model) {
  const ModelConfig& c = model.config();
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out = open_out(tmp, true);
    char buf[64];
    out << "checkpoint v1\n";
    out << "layers " << c.layers << "\nheads " << c.heads << "\nd_in " << c.d_in
        << "\nd_node " << c.d_node << "\nd_rel " << c.d_rel << "\nd_fuse " << c.d_fuse
        << "\nn_classes " << c.n_classes << "\n";
    std::snprintf(buf, sizeof buf, "%.17g", c.dropout);
    out << "dropout " << buf << "\n";
    std::snprintf(buf, sizeof buf, "%.17g", c.leaky_slope);
    out << "leaky_slope " << buf << "\n";
    out << "no_wrc " << int(c.no_wrc) << "\nno_cmp " << int(c.no_cmp) << "\nno_rrf "
        << int(c.no_rrf) << "\n";
    for (const std::string& t : model.type_names()) out << "nodetype " << t << "\n";
    for (const std::string& r : model.relation_names()) out << "relation " << r << "\n";
    const auto& params = model.parameters();
    const auto& names = model.param_names();
    for (size_t i = 0; i < params.size(); ++i)
      out << "tensor " << names[i] << " " << params[i].rows() << " " << params[i].cols()
          << "\n";
    out << "payload\n";
    for (const Tensor& p : params)
      out.write(reinterpret_cast<const char*>(p.values().data()),
                std::streamsize(p.size() * sizeof(double)));
    if (!out) throw RuntimeFailure("write failed for " + tmp);
  }
  rename_over(tmp, path);
}

Model load_checkpoint(const std::string& path, const RelationGraphSet& rs) {
  std::ifstream in = open_in(path, true);
  std::string line;
  if (!std::getline(in, line) || line != "checkpoint v1")
    throw RuntimeFailure("not a checkpoint file: " + path);

  ModelConfig cfg;
  std::vector<std::string> types, rels;
  std::vector<std::tuple<std::string, size_t, size_t>> manifest;
  bool payload = false;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::string key;
    ss >> key;
    if (key == "payload") {
      payload = true;
      break;
    }
    std::vector<std::string> rest;
    std::string tok;
    while (ss >> tok) rest.push_back(tok);
    auto one = [&]() -> const std::string& {
      if (rest.size() != 1) throw RuntimeFailure("malformed checkpoint line: " + line);
      return rest[0];
    };
    if (key == "layers")
      cfg.layers = size_t(parse_count(one(), "layers"));
    else if (key == "heads")
      cfg.heads = size_t(parse_count(one(), "heads"));
    else if (key == "d_in")
      cfg.d_in = size_t(parse_count(one(), "d_in"));
    else if (key == "d_node")
      cfg.d_node = size_t(parse_count(one(), "d_node"));
    else if (key == "d_rel")
      cfg.d_rel = size_t(parse_count(one(), "d_rel"));
    else if (key == "d_fuse")
      cfg.d_fuse = size_t(parse_count(one(), "d_fuse"));
    else if (key == "n_classes")
      cfg.n_classes = size_t(parse_count(one(), "n_classes"));
    else if (key == "dropout")
      cfg.dropout = parse_real(one(), "dropout");
    else if (key == "leaky_slope")
      cfg.leaky_slope = parse_real(one(), "leaky_slope");
    else if (key == "no_wrc")
      cfg.no_wrc = parse_count(one(), "no_wrc") != 0;
    else if (key == "no_cmp")
      cfg.no_cmp = parse_count(one(), "no_cmp") != 0;
    else if (key == "no_rrf")
      cfg.no_rrf = parse_count(one(), "no_rrf") != 0;
    else if (key == "nodetype")
      types.push_back(one());
    else if (key == "relation")
      rels.push_back(one());
    else if (key == "tensor") {
      if (rest.size() != 3) throw RuntimeFailure("malformed tensor line: " + line);
      manifest.emplace_back(rest[0], size_t(parse_count(rest[1], "tensor rows")),
                            size_t(parse_count(rest[2], "tensor cols")));
    } else {
      throw RuntimeFailure("unknown checkpoint key '" + key + "' in " + path);
    }
  }
  if (!payload) throw RuntimeFailure("checkpoint has no payload: " + path);

  Model model(rs, cfg, 0);
  require(model.type_names() == types,
          "checkpoint node types do not match the loaded graph");
  require(model.relation_names() == rels,
          "checkpoint relations do not match the loaded graph");
  const auto& params = model.parameters();
  const auto& names = model.param_names();
  require(manifest.size() == params.size(), "checkpoint tensor manifest size mismatch");
  std::vector<std::vector<double>> values;
  values.reserve(params.size());
  for (size_t i = 0; i < params.size(); ++i) {
    const auto& [name, rows, cols] = manifest[i];
    require(name == names[i] && rows == params[i].rows() && cols == params[i].cols(),
            "checkpoint tensor '" + name + "' does not match the model layout");
    std::vector<double> buf(rows * cols);
    in.read(reinterpret_cast<char*>(buf.data()), std::streamsize(buf.size() * sizeof(double)));
    if (!in) throw RuntimeFailure("truncated checkpoint payload in " + path);
    values.push_back(std::move(buf));
  }
  model.load_values(values);
  return model;
}

}  // namespace relgraph
