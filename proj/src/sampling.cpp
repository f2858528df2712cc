#include "relgraph/sampling.hpp"

#include <algorithm>
#include <unordered_map>

namespace relgraph {

size_t BlockChain::seed_pos(size_t type, uint32_t id) const {
  require(!node_sets.empty() && type < node_sets.back().size(),
          "seed_pos: node type out of range");
  const auto& ids = node_sets.back()[type];
  const auto it = std::lower_bound(ids.begin(), ids.end(), id);
  require(it != ids.end() && *it == id, "seed_pos: id is not a seed");
  return size_t(it - ids.begin());
}

namespace {

constexpr size_t kUnbounded = size_t(-1);

BlockChain build_chain(const RelationGraphSet& rset,
                       const std::vector<std::vector<uint32_t>>& seeds_by_type,
                       const std::vector<size_t>& fanouts, Rng* rng) {
  require(rset.graph != nullptr, "sample_blocks: empty relation set");
  require(!fanouts.empty(), "sample_blocks: at least one layer required");
  const HeteroGraph& g = *rset.graph;
  const size_t nt = g.schema.node_types.size();
  const size_t nrel = rset.num_directed();
  const size_t L = fanouts.size();
  require(seeds_by_type.size() == nt, "sample_blocks: one seed list per node type required");

  BlockChain chain;
  chain.node_sets.assign(L + 1, std::vector<std::vector<uint32_t>>(nt));
  chain.blocks.resize(L);

  for (size_t t = 0; t < nt; ++t) {
    auto ids = seeds_by_type[t];
    for (uint32_t id : ids)
      require(id < g.node_counts[t], "sample_blocks: seed id out of range");
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    chain.node_sets[L][t] = std::move(ids);
  }

  std::vector<uint32_t> scratch;
  for (size_t b = L; b-- > 0;) {
    const size_t fanout = fanouts[b];
    const auto& targets = chain.node_sets[b + 1];

    // sampled[r][k]: source ids drawn for target k of directed relation r
    std::vector<std::vector<std::vector<uint32_t>>> sampled(nrel);
    std::vector<std::vector<uint32_t>> required(nt);
    for (size_t t = 0; t < nt; ++t) required[t] = targets[t];  // residual state

    for (size_t r = 0; r < nrel; ++r) {
      const auto& rel = rset.directed[r];
      const auto& tg = targets[rel.dst_type];
      sampled[r].resize(tg.size());
      for (size_t k = 0; k < tg.size(); ++k) {
        const size_t lo = rel.offsets[tg[k]], hi = rel.offsets[tg[k] + 1];
        const size_t deg = hi - lo;
        auto& out = sampled[r][k];
        if (deg <= fanout) {
          out.assign(rel.sources.begin() + lo, rel.sources.begin() + hi);
        } else {
          scratch.assign(rel.sources.begin() + lo, rel.sources.begin() + hi);
          for (size_t i = 0; i < fanout; ++i) {
            const size_t j = i + size_t(rng->bounded(deg - i));
            std::swap(scratch[i], scratch[j]);
          }
          out.assign(scratch.begin(), scratch.begin() + fanout);
        }
        auto& req = required[rel.src_type];
        req.insert(req.end(), out.begin(), out.end());
      }
    }

    for (size_t t = 0; t < nt; ++t) {
      auto& ids = required[t];
      std::sort(ids.begin(), ids.end());
      ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
      chain.node_sets[b][t] = std::move(ids);
    }

    std::vector<std::unordered_map<uint32_t, size_t>> pos(nt);
    for (size_t t = 0; t < nt; ++t)
      for (size_t i = 0; i < chain.node_sets[b][t].size(); ++i)
        pos[t].emplace(chain.node_sets[b][t][i], i);

    chain.blocks[b].rels.resize(nrel);
    for (size_t r = 0; r < nrel; ++r) {
      const auto& rel = rset.directed[r];
      auto& rb = chain.blocks[b].rels[r];
      rb.offsets.assign(targets[rel.dst_type].size() + 1, 0);
      size_t total = 0;
      for (size_t k = 0; k < sampled[r].size(); ++k) {
        total += sampled[r][k].size();
        rb.offsets[k + 1] = total;
      }
      rb.src_pos.reserve(total);
      const auto& src_pos_map = pos[rel.src_type];
      for (const auto& group : sampled[r])
        for (uint32_t id : group) rb.src_pos.push_back(src_pos_map.at(id));
    }
  }
  return chain;
}

}  // namespace

BlockChain sample_blocks(const RelationGraphSet& rset,
                         const std::vector<std::vector<uint32_t>>& seeds_by_type,
                         const std::vector<size_t>& fanouts, Rng& rng) {
  return build_chain(rset, seeds_by_type, fanouts, &rng);
}

BlockChain full_blocks(const RelationGraphSet& rset,
                       const std::vector<std::vector<uint32_t>>& seeds_by_type, size_t L) {
  const std::vector<size_t> fanouts(L, kUnbounded);
  return build_chain(rset, seeds_by_type, fanouts, nullptr);
}

}  // namespace relgraph
