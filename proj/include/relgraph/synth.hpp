#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "relgraph/graph.hpp"
#include "relgraph/train.hpp"

namespace relgraph {

// Recipe for a planted-class dataset. Every node gets a latent class; features
// mix a per-(type, class) centroid with noise, `signal` being the fraction of
// feature variance tied to the class. Edges prefer same-class endpoints with
// probability `homophily[r]`.
struct SyntheticSpec {
  std::vector<std::string> type_names;
  std::vector<uint32_t> counts;
  std::vector<size_t> feature_dims;
  std::vector<RelationDef> relations;
  std::vector<size_t> edge_counts;  // per relation
  std::vector<double> homophily;    // per relation, in [0, 1]
  size_t n_classes = 3;
  double signal = 0.7;  // in [0, 1]
  size_t label_type = 0;
  double train_frac = 0.2;
  double valid_frac = 0.1;

  void validate() const;
};

struct SynthData {
  HeteroGraph g;
  std::vector<size_t> labels;               // latent classes of label_type
  NodeSplits splits;                        // node ids of label_type
  std::vector<std::vector<size_t>> latent;  // per type, per node
};

// Same spec and seed give bitwise-identical output.
SynthData gen_synth(const SyntheticSpec& spec, uint64_t seed);

}  // namespace relgraph
