#include "relgraph/graph.hpp"

#include <unordered_set>

namespace relgraph {

size_t Schema::type_id(const std::string& name) const {
  for (size_t i = 0; i < node_types.size(); ++i)
    if (node_types[i] == name) return i;
  throw ContractError("unknown node type: " + name);
}

bool Schema::has_type(const std::string& name) const {
  for (const auto& t : node_types)
    if (t == name) return true;
  return false;
}

size_t Schema::relation_id(const std::string& name) const {
  for (size_t i = 0; i < relations.size(); ++i)
    if (relations[i].name == name) return i;
  throw ContractError("unknown relation: " + name);
}

void Schema::validate() const {
  require(node_types.size() == feature_dims.size(),
          "schema: one feature dim per node type required");
  std::unordered_set<std::string> seen;
  for (const auto& t : node_types)
    require(seen.insert(t).second, "schema: duplicate node type " + t);
  seen.clear();
  for (const auto& r : relations) {
    require(seen.insert(r.name).second, "schema: duplicate relation " + r.name);
    require(has_type(r.src_type), "schema: relation " + r.name + " has unknown src type");
    require(has_type(r.dst_type), "schema: relation " + r.name + " has unknown dst type");
  }
}

HeteroGraph HeteroGraph::build(Schema schema, std::vector<uint32_t> node_counts,
                               std::vector<Tensor> features,
                               std::vector<std::vector<Edge>> edges) {
  schema.validate();
  const size_t nt = schema.node_types.size();
  require(node_counts.size() == nt, "graph: one node count per type required");
  require(features.size() == nt, "graph: one feature matrix per type required");
  for (size_t t = 0; t < nt; ++t) {
    require(features[t].defined(), "graph: missing features for type " + schema.node_types[t]);
    require(features[t].rows() == node_counts[t],
            "graph: feature rows mismatch for type " + schema.node_types[t]);
    require(features[t].cols() == schema.feature_dims[t],
            "graph: feature dim mismatch for type " + schema.node_types[t]);
  }
  require(edges.size() == schema.relations.size(),
          "graph: one edge list per relation required");
  for (size_t r = 0; r < edges.size(); ++r) {
    const auto& def = schema.relations[r];
    const uint32_t ns = node_counts[schema.type_id(def.src_type)];
    const uint32_t nd = node_counts[schema.type_id(def.dst_type)];
    for (const auto& [s, d] : edges[r]) {
      require(s < ns, "graph: edge src id out of range in relation " + def.name);
      require(d < nd, "graph: edge dst id out of range in relation " + def.name);
    }
  }
  HeteroGraph g;
  g.schema = std::move(schema);
  g.node_counts = std::move(node_counts);
  g.features = std::move(features);
  g.edges = std::move(edges);
  return g;
}

size_t HeteroGraph::num_edges() const {
  size_t n = 0;
  for (const auto& e : edges) n += e.size();
  return n;
}

namespace {

// CSR over destination nodes in edge-list order.
void fill_csr(DirectedRelation& rel, uint32_t n_dst, const std::vector<Edge>& edges,
              bool swap_ends) {
  rel.offsets.assign(n_dst + 1, 0);
  for (const auto& [s, d] : edges) ++rel.offsets[(swap_ends ? s : d) + 1];
  for (size_t i = 1; i <= n_dst; ++i) rel.offsets[i] += rel.offsets[i - 1];
  rel.sources.resize(edges.size());
  std::vector<size_t> cursor(rel.offsets.begin(), rel.offsets.end() - 1);
  for (const auto& [s, d] : edges) {
    const uint32_t dst = swap_ends ? s : d;
    rel.sources[cursor[dst]++] = swap_ends ? d : s;
  }
}

}  // namespace

RelationGraphSet decompose(const HeteroGraph& g) {
  RelationGraphSet set;
  set.graph = &g;
  set.by_dst_type.resize(g.schema.node_types.size());
  for (size_t r = 0; r < g.schema.relations.size(); ++r) {
    const auto& def = g.schema.relations[r];
    const size_t st = g.schema.type_id(def.src_type);
    const size_t dt = g.schema.type_id(def.dst_type);

    DirectedRelation fwd;
    fwd.name = def.name;
    fwd.base = r;
    fwd.reversed = false;
    fwd.src_type = st;
    fwd.dst_type = dt;
    fill_csr(fwd, g.node_counts[dt], g.edges[r], /*swap_ends=*/false);

    DirectedRelation rev;
    rev.name = def.name + "~rev";
    rev.base = r;
    rev.reversed = true;
    rev.src_type = dt;
    rev.dst_type = st;
    fill_csr(rev, g.node_counts[st], g.edges[r], /*swap_ends=*/true);

    set.by_dst_type[dt].push_back(set.directed.size());
    set.directed.push_back(std::move(fwd));
    set.by_dst_type[st].push_back(set.directed.size());
    set.directed.push_back(std::move(rev));
  }
  return set;
}

const std::vector<size_t>& RelationGraphSet::relations_of(size_t node_type) const {
  require(node_type < by_dst_type.size(), "relations_of: node type id out of range");
  return by_dst_type[node_type];
}

const std::vector<size_t>& RelationGraphSet::relations_of(const std::string& node_type) const {
  require(graph != nullptr, "relations_of: empty relation set");
  return relations_of(graph->schema.type_id(node_type));
}

}  // namespace relgraph
