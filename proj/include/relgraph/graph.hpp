#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "relgraph/tensor.hpp"

namespace relgraph {

struct RelationDef {
  std::string name;
  std::string src_type;
  std::string dst_type;
};

// Node types, their feature widths, and the base relations connecting them.
struct Schema {
  std::vector<std::string> node_types;
  std::vector<size_t> feature_dims;  // one per node type
  std::vector<RelationDef> relations;

  size_t type_id(const std::string& name) const;
  bool has_type(const std::string& name) const;
  size_t relation_id(const std::string& name) const;
  void validate() const;
};

using Edge = std::pair<uint32_t, uint32_t>;  // (src_id, dst_id), ids per-type dense

// Immutable typed graph: per-type feature matrices plus per-base-relation
// edge lists.
struct HeteroGraph {
  Schema schema;
  std::vector<uint32_t> node_counts;   // per type
  std::vector<Tensor> features;        // per type, node_counts[t] x feature_dims[t]
  std::vector<std::vector<Edge>> edges;  // per base relation

  static HeteroGraph build(Schema schema, std::vector<uint32_t> node_counts,
                           std::vector<Tensor> features,
                           std::vector<std::vector<Edge>> edges);

  size_t num_edges() const;
};

// One direction of a base relation. Directed ids interleave: base relation i
// yields forward id 2i (messages src -> dst) and inverse id 2i+1; the
// opposite direction of any directed id is id ^ 1.
struct DirectedRelation {
  std::string name;      // base name, "~rev" suffix for the inverse
  size_t base;           // base relation id
  bool reversed;
  size_t src_type;       // message source type
  size_t dst_type;       // message destination (target) type
  // CSR keyed by destination node: neighbor lists hold source node ids.
  std::vector<size_t> offsets;    // node_counts[dst_type] + 1
  std::vector<uint32_t> sources;
};

inline size_t partner_relation(size_t directed_id) { return directed_id ^ 1; }

struct RelationGraphSet {
  const HeteroGraph* graph = nullptr;
  std::vector<DirectedRelation> directed;
  // directed relation ids targeting each node type, ascending
  std::vector<std::vector<size_t>> by_dst_type;

  size_t num_directed() const { return directed.size(); }
  const std::vector<size_t>& relations_of(size_t node_type) const;
  const std::vector<size_t>& relations_of(const std::string& node_type) const;
};

RelationGraphSet decompose(const HeteroGraph& g);

}  // namespace relgraph
