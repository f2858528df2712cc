#include "relgraph/synth.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace relgraph {

void SyntheticSpec::validate() const {
  require(!type_names.empty(), "SyntheticSpec: needs at least one node type");
  require(counts.size() == type_names.size() && feature_dims.size() == type_names.size(),
          "SyntheticSpec: counts/feature_dims must match type_names");
  for (uint32_t c : counts) require(c > 0, "SyntheticSpec: node counts must be positive");
  for (size_t d : feature_dims)
    require(d > 0, "SyntheticSpec: feature dims must be positive");
  require(edge_counts.size() == relations.size() && homophily.size() == relations.size(),
          "SyntheticSpec: edge_counts/homophily must match relations");
  for (size_t e : edge_counts)
    require(e > 0, "SyntheticSpec: edge counts must be positive");
  for (double h : homophily)
    require(h >= 0.0 && h <= 1.0, "SyntheticSpec: homophily must be in [0, 1]");
  require(signal >= 0.0 && signal <= 1.0, "SyntheticSpec: signal must be in [0, 1]");
  require(n_classes >= 2, "SyntheticSpec: needs at least two classes");
  require(label_type < type_names.size(), "SyntheticSpec: label_type out of range");
  require(train_frac > 0.0 && valid_frac > 0.0 && train_frac + valid_frac < 1.0,
          "SyntheticSpec: split fractions must be positive and sum below 1");
}

SynthData gen_synth(const SyntheticSpec& spec, uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  const size_t n_types = spec.type_names.size();

  std::vector<std::vector<size_t>> latent(n_types);
  for (size_t t = 0; t < n_types; ++t) {
    latent[t].resize(spec.counts[t]);
    for (auto& c : latent[t]) c = size_t(rng.bounded(spec.n_classes));
  }

  const double w_sig = std::sqrt(spec.signal);
  const double w_noise = std::sqrt(1.0 - spec.signal);
  std::vector<Tensor> features;
  for (size_t t = 0; t < n_types; ++t) {
    const size_t d = spec.feature_dims[t];
    std::vector<double> centroids(spec.n_classes * d);
    for (auto& v : centroids) v = rng.normal();
    std::vector<double> vals(size_t(spec.counts[t]) * d);
    for (size_t i = 0; i < spec.counts[t]; ++i) {
      const double* c = &centroids[latent[t][i] * d];
      for (size_t j = 0; j < d; ++j)
        vals[i * d + j] = w_sig * c[j] + w_noise * rng.normal();
    }
    features.push_back(Tensor::from_values(spec.counts[t], d, std::move(vals)));
  }

  Schema schema{spec.type_names, spec.feature_dims, spec.relations};
  schema.validate();
  std::vector<std::vector<Edge>> edges(spec.relations.size());
  for (size_t r = 0; r < spec.relations.size(); ++r) {
    const size_t st = schema.type_id(spec.relations[r].src_type);
    const size_t dt = schema.type_id(spec.relations[r].dst_type);
    std::vector<std::vector<uint32_t>> bucket(spec.n_classes);
    for (uint32_t i = 0; i < spec.counts[dt]; ++i)
      bucket[latent[dt][i]].push_back(i);

    std::unordered_set<uint64_t> taken;
    // cap keeps a near-saturated relation from spinning forever
    const size_t max_attempts = 20 * spec.edge_counts[r] + 100;
    size_t attempts = 0;
    while (edges[r].size() < spec.edge_counts[r] && attempts++ < max_attempts) {
      const uint32_t src = uint32_t(rng.bounded(spec.counts[st]));
      uint32_t dst;
      const auto& same = bucket[latent[st][src]];
      if (rng.uniform01() < spec.homophily[r] && !same.empty())
        dst = same[rng.bounded(same.size())];
      else
        dst = uint32_t(rng.bounded(spec.counts[dt]));
      const uint64_t key = (uint64_t(src) << 32) | dst;
      if (taken.insert(key).second) edges[r].push_back({src, dst});
    }
    require(!edges[r].empty(),
            "gen_synth: could not place any edge for relation " + spec.relations[r].name);
  }

  HeteroGraph g =
      HeteroGraph::build(std::move(schema), spec.counts, std::move(features), std::move(edges));

  SynthData out{std::move(g), latent[spec.label_type], {}, std::move(latent)};

  std::vector<size_t> ids(spec.counts[spec.label_type]);
  for (size_t i = 0; i < ids.size(); ++i) ids[i] = i;
  for (size_t i = ids.size(); i > 1; --i)
    std::swap(ids[i - 1], ids[rng.bounded(i)]);
  const size_t n_train = size_t(std::llround(spec.train_frac * double(ids.size())));
  const size_t n_valid = size_t(std::llround(spec.valid_frac * double(ids.size())));
  require(n_train >= 1 && n_valid >= 1 && n_train + n_valid < ids.size(),
          "gen_synth: split fractions leave an empty split at this node count");
  out.splits.train.assign(ids.begin(), ids.begin() + n_train);
  out.splits.valid.assign(ids.begin() + n_train, ids.begin() + n_train + n_valid);
  out.splits.test.assign(ids.begin() + n_train + n_valid, ids.end());
  return out;
}

}  // namespace relgraph
