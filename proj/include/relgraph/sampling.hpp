#pragma once

#include "relgraph/graph.hpp"

namespace relgraph {

// Bipartite slice of one directed relation between two consecutive node
// sets. offsets segments the flattened sampled edges by target (one segment
// per target node, possibly empty); src_pos holds, per edge, the position of
// the source node in the previous layer's node set of the source type.
struct RelBlock {
  std::vector<size_t> offsets;
  std::vector<size_t> src_pos;
};

struct Block {
  std::vector<RelBlock> rels;  // indexed by directed relation id
};

// Layered neighborhoods for a seed batch. node_sets[l][t] lists the original
// node ids of type t needed at depth l, ascending and unique; depth 0 is the
// input layer and depth num_blocks() holds the seeds. blocks[b] connects
// node_sets[b] (sources) to node_sets[b+1] (targets); every target also
// appears in the source side so residual state lines up.
struct BlockChain {
  std::vector<std::vector<std::vector<uint32_t>>> node_sets;
  std::vector<Block> blocks;

  size_t num_blocks() const { return blocks.size(); }
  // position of a seed in node_sets.back()[type]
  size_t seed_pos(size_t type, uint32_t id) const;
};

// Uniform neighbor sampling without replacement, fanouts.size() layers deep.
// fanouts[b] caps per-(target, relation) degree in block b; the block next
// to the seeds uses fanouts.back(). A target with degree <= fanout keeps all
// its neighbors and consumes no randomness.
BlockChain sample_blocks(const RelationGraphSet& rset,
                         const std::vector<std::vector<uint32_t>>& seeds_by_type,
                         const std::vector<size_t>& fanouts, Rng& rng);

// sample_blocks with unbounded fanout: the exact L-hop neighborhood.
BlockChain full_blocks(const RelationGraphSet& rset,
                       const std::vector<std::vector<uint32_t>>& seeds_by_type, size_t L);

}  // namespace relgraph
