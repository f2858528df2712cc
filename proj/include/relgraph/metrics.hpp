#pragma once

#include <cstdint>
#include <vector>

#include "relgraph/layers.hpp"

namespace relgraph {

double accuracy(const std::vector<size_t>& pred, const std::vector<size_t>& truth);

// Per-class F1 averaged over classes that appear in pred or truth; classes
// absent from both are left out of the mean.
double macro_f1(const std::vector<size_t>& pred, const std::vector<size_t>& truth,
                size_t n_classes);

struct ClusterAssignment {
  std::vector<size_t> ids;
  size_t k = 0;
  std::vector<std::vector<double>> centroids;
  double inertia = 0.0;
};

// Lloyd's algorithm with k-means++ seeding, best inertia over restarts.
// inertia_trace, when given, records the per-iteration inertia of the
// winning restart.
ClusterAssignment kmeans(const std::vector<std::vector<double>>& x, size_t k, Rng& rng,
                         size_t max_iter = 100, size_t restarts = 10,
                         std::vector<double>* inertia_trace = nullptr);

// Normalized mutual information with arithmetic-mean normalization; a
// zero-entropy side yields 0.
double nmi(const std::vector<size_t>& a, const std::vector<size_t>& b);

// Adjusted Rand index; can dip slightly below zero for anti-correlated
// partitions, never below -0.5 on valid input.
double ari(const std::vector<size_t>& a, const std::vector<size_t>& b);

struct LinkMetrics {
  double rmse = 0.0;
  double mae = 0.0;
};

LinkMetrics link_metrics(const std::vector<double>& scores,
                         const std::vector<size_t>& labels);

struct ClusterScores {
  double nmi = 0.0;
  double ari = 0.0;
};

// Embeds every node of node_type, L2-normalizes rows, then averages NMI/ARI
// over `repeats` independent k-means runs against the given labels.
ClusterScores clustering_protocol(const Model& model, const RelationGraphSet& rs,
                                  size_t node_type, const std::vector<size_t>& labels,
                                  size_t k, uint64_t seed, size_t repeats = 10);

// Eval-mode fused representations for every node of node_type, row i for
// node id i.
std::vector<std::vector<double>> embed_all(const Model& model, const RelationGraphSet& rs,
                                           size_t node_type);

void l2_normalize_rows(std::vector<std::vector<double>>& rows);

}  // namespace relgraph
