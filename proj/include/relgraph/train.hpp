#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "relgraph/layers.hpp"

namespace relgraph {

enum class Task { classify, linkpred };

struct TrainConfig {
  double lr = 1e-3;   // schedule peak
  double lr_min = 0.0;
  size_t epochs = 200;
  size_t patience = 50;
  size_t batch = 0;             // 0 means full batch
  std::vector<size_t> fanouts;  // empty means full neighborhoods
  size_t negatives_train = 5;
  size_t negatives_eval = 1;
  uint64_t seed = 0;
  Task task = Task::classify;

  // model_layers bounds the fanout list when sampling is enabled
  void validate(size_t model_layers) const;
};

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  size_t t = 0;
  std::vector<std::vector<double>> m, v;

  explicit AdamState(const std::vector<Tensor>& params);
};

// Mean-reduced cross entropy over the batch rows.
Tensor classification_loss(const Tensor& logits, const std::vector<size_t>& labels);

// Binary cross entropy on dot-product scores, positives against negatives,
// reduced by the positive count (negatives scale with the per-positive
// sampling factor). Row i of each pair of tensors holds one endpoint.
Tensor linkpred_loss(const Tensor& pos_a, const Tensor& pos_b, const Tensor& neg_a,
                     const Tensor& neg_b);

// k corrupted pairs per positive: destination resampled uniformly over its
// type, rejecting observed edges up to 100 retries per draw (then accepted;
// retry_exhausted counts those events).
std::vector<Edge> sample_negatives(const HeteroGraph& g, size_t relation,
                                   const std::vector<Edge>& positives, size_t k, Rng& rng,
                                   size_t* retry_exhausted = nullptr);

// Reads accumulated gradients from the tensors; caller zeroes them after.
void adam_step(const std::vector<Tensor>& params, AdamState& state, double lr);

double cosine_lr(size_t epoch, size_t epochs, double lr_max, double lr_min);

struct NodeSplits {
  std::vector<size_t> train, valid, test;
};

struct EdgeSplits {
  std::vector<Edge> train, valid, test;
};

struct ClassifyTask {
  size_t label_type = 0;
  std::vector<size_t> labels;  // dense over the label type's nodes
  NodeSplits splits;
};

struct LinkpredTask {
  size_t relation = 0;  // base relation id
  EdgeSplits splits;
};

struct EpochRecord {
  size_t epoch;
  double train_loss;
  double val_metric;
  double lr;
};

struct TrainReport {
  std::vector<EpochRecord> history;
  size_t best_epoch = 0;
  double best_val = 0.0;
  size_t stop_epoch = 0;
  size_t negative_retry_exhausted = 0;
  std::vector<std::vector<double>> best_state;
};

// Early-stopped training; the model is left loaded with the best-validation
// parameters. Epoch lines stream to log when given, one record per line:
// `epoch <n> train_loss <x> val_metric <y> lr <z>`. Validation uses full
// neighborhoods, accuracy for classification and RMSE for link prediction.
TrainReport train(Model& model, const RelationGraphSet& rs, const ClassifyTask& task,
                  const TrainConfig& cfg, std::ostream* log = nullptr);
TrainReport train(Model& model, const RelationGraphSet& rs, const LinkpredTask& task,
                  const TrainConfig& cfg, std::ostream* log = nullptr);

std::vector<size_t> argmax_rows(const Tensor& t);

// Eval-mode logits for the given nodes, rows aligned with ids.
Tensor classify_logits(const Model& model, const RelationGraphSet& rs, size_t label_type,
                       const std::vector<size_t>& ids);

// Eval-mode sigmoid(dot) scores for (src, dst) pairs under a base relation.
std::vector<double> edge_scores(const Model& model, const RelationGraphSet& rs,
                                size_t relation, const std::vector<Edge>& pairs);

}  // namespace relgraph
