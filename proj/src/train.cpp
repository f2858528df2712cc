#include "relgraph/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <unordered_set>

#include "relgraph/metrics.hpp"

namespace relgraph {

void TrainConfig::validate(size_t model_layers) const {
  require(lr > 0.0, "TrainConfig: lr must be positive");
  require(lr_min >= 0.0 && lr_min <= lr, "TrainConfig: need 0 <= lr_min <= lr");
  require(epochs >= 1, "TrainConfig: epochs must be at least 1");
  require(patience >= 1 && patience <= epochs, "TrainConfig: need 1 <= patience <= epochs");
  require(fanouts.empty() || fanouts.size() == model_layers,
          "TrainConfig: fanouts must be empty or one per layer");
  require(negatives_train >= 1 && negatives_eval >= 1,
          "TrainConfig: negative counts must be at least 1");
}

AdamState::AdamState(const std::vector<Tensor>& params) {
  m.reserve(params.size());
  v.reserve(params.size());
  for (const Tensor& p : params) {
    m.emplace_back(p.size(), 0.0);
    v.emplace_back(p.size(), 0.0);
  }
}

Tensor classification_loss(const Tensor& logits, const std::vector<size_t>& labels) {
  require(logits.rows() > 0, "classification_loss: empty batch");
  require(logits.rows() == labels.size(), "classification_loss: label count mismatch");
  Tensor picked = select_cols_per_row(log_softmax_rows(logits), labels);
  return scale(sum(picked), -1.0 / double(labels.size()));
}

Tensor linkpred_loss(const Tensor& pos_a, const Tensor& pos_b, const Tensor& neg_a,
                     const Tensor& neg_b) {
  require(pos_a.rows() > 0, "linkpred_loss: no positive pairs");
  require(pos_a.rows() == pos_b.rows() && pos_a.cols() == pos_b.cols(),
          "linkpred_loss: positive pair shape mismatch");
  require(neg_a.rows() == neg_b.rows() && neg_a.cols() == neg_b.cols(),
          "linkpred_loss: negative pair shape mismatch");
  Tensor total = sum(log_sigmoid(rows_dot(pos_a, pos_b)));
  if (neg_a.rows() > 0)
    total = add(total, sum(log_sigmoid(scale(rows_dot(neg_a, neg_b), -1.0))));
  return scale(total, -1.0 / double(pos_a.rows()));
}

std::vector<Edge> sample_negatives(const HeteroGraph& g, size_t relation,
                                   const std::vector<Edge>& positives, size_t k, Rng& rng,
                                   size_t* retry_exhausted) {
  require(relation < g.schema.relations.size(), "sample_negatives: unknown relation");
  require(k >= 1, "sample_negatives: k must be at least 1");
  const size_t dst_type = g.schema.type_id(g.schema.relations[relation].dst_type);
  const uint64_t n_dst = g.node_counts[dst_type];
  require(n_dst > 0, "sample_negatives: destination type has no nodes");

  std::unordered_set<uint64_t> observed;
  observed.reserve(g.edges[relation].size() * 2);
  for (const Edge& e : g.edges[relation])
    observed.insert((uint64_t(e.first) << 32) | e.second);

  std::vector<Edge> out;
  out.reserve(positives.size() * k);
  for (const Edge& pos : positives) {
    for (size_t j = 0; j < k; ++j) {
      uint32_t dst = 0;
      bool clean = false;
      for (int attempt = 0; attempt <= 100; ++attempt) {
        dst = uint32_t(rng.bounded(n_dst));
        if (!observed.count((uint64_t(pos.first) << 32) | dst)) {
          clean = true;
          break;
        }
      }
      if (!clean && retry_exhausted) ++*retry_exhausted;
      out.push_back({pos.first, dst});
    }
  }
  return out;
}

void adam_step(const std::vector<Tensor>& params, AdamState& state, double lr) {
  require(params.size() == state.m.size(), "adam_step: state size mismatch");
  ++state.t;
  const double bc1 = 1.0 - std::pow(state.beta1, double(state.t));
  const double bc2 = 1.0 - std::pow(state.beta2, double(state.t));
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor p = params[i];
    require(p.size() == state.m[i].size(), "adam_step: parameter shape changed");
    const std::vector<double>* g = p.grad();
    std::vector<double>& vals = p.mut_values();
    std::vector<double>& m = state.m[i];
    std::vector<double>& v = state.v[i];
    for (size_t j = 0; j < vals.size(); ++j) {
      const double gj = g ? (*g)[j] : 0.0;
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * gj;
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * gj * gj;
      vals[j] -= lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + state.eps);
    }
  }
}

double cosine_lr(size_t epoch, size_t epochs, double lr_max, double lr_min) {
  require(epochs >= 1, "cosine_lr: epochs must be at least 1");
  require(epoch <= epochs, "cosine_lr: epoch past the end");
  const double frac = double(epoch) / double(epochs);
  return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(frac * 3.14159265358979323846));
}

std::vector<size_t> argmax_rows(const Tensor& t) {
  std::vector<size_t> out(t.rows());
  for (size_t i = 0; i < t.rows(); ++i) {
    size_t best = 0;
    for (size_t j = 1; j < t.cols(); ++j)
      if (t.at(i, j) > t.at(i, best)) best = j;
    out[i] = best;
  }
  return out;
}

namespace {

std::vector<uint32_t> to_ids(const std::vector<size_t>& xs) {
  return std::vector<uint32_t>(xs.begin(), xs.end());
}

void shuffle_ids(std::vector<size_t>& xs, Rng& rng) {
  for (size_t i = xs.size(); i > 1; --i) std::swap(xs[i - 1], xs[rng.bounded(i)]);
}

void shuffle_edges(std::vector<Edge>& xs, Rng& rng) {
  for (size_t i = xs.size(); i > 1; --i) std::swap(xs[i - 1], xs[rng.bounded(i)]);
}

void emit(std::ostream* log, const EpochRecord& r) {
  if (!log) return;
  char buf[160];
  std::snprintf(buf, sizeof buf, "epoch %zu train_loss %.10g val_metric %.10g lr %.10g\n",
                r.epoch, r.train_loss, r.val_metric, r.lr);
  *log << buf;
  log->flush();
}

// Shared epoch loop: step_epoch trains one epoch and returns its mean loss,
// val_metric scores the current parameters.
template <typename StepFn, typename ValFn>
TrainReport run_loop(Model& model, const TrainConfig& cfg, bool higher_better,
                     StepFn step_epoch, ValFn val_metric, std::ostream* log) {
  TrainReport rep;
  double best = higher_better ? -std::numeric_limits<double>::infinity()
                              : std::numeric_limits<double>::infinity();
  size_t bad = 0;
  for (size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const double lr = cosine_lr(epoch - 1, cfg.epochs, cfg.lr, cfg.lr_min);
    const double train_loss = step_epoch(epoch, lr);
    const double val = val_metric();
    rep.history.push_back({epoch, train_loss, val, lr});
    emit(log, rep.history.back());
    const bool improved = higher_better ? val > best : val < best;
    if (improved) {
      best = val;
      bad = 0;
      rep.best_epoch = epoch;
      rep.best_state = model.state_values();
    } else if (++bad >= cfg.patience) {
      rep.stop_epoch = epoch;
      break;
    }
  }
  if (rep.stop_epoch == 0) rep.stop_epoch = rep.history.size();
  rep.best_val = best;
  model.load_values(rep.best_state);
  return rep;
}

BlockChain chain_for_batch(const RelationGraphSet& rs,
                           const std::vector<std::vector<uint32_t>>& seeds,
                           const TrainConfig& cfg, size_t layers, uint64_t epoch,
                           uint64_t batch_idx) {
  if (cfg.fanouts.empty()) return full_blocks(rs, seeds, layers);
  Rng srng(Rng::derive(cfg.seed, {0x5a17, epoch, batch_idx}));
  return sample_blocks(rs, seeds, cfg.fanouts, srng);
}

}  // namespace

TrainReport train(Model& model, const RelationGraphSet& rs, const ClassifyTask& task,
                  const TrainConfig& cfg, std::ostream* log) {
  const ModelConfig& mc = model.config();
  cfg.validate(mc.layers);
  require(cfg.task == Task::classify, "train: config task does not match the data");
  require(mc.n_classes > 0, "train: model has no classifier head");
  const size_t n_types = model.type_names().size();
  require(task.label_type < n_types, "train: unknown label type");
  require(task.labels.size() == rs.graph->node_counts[task.label_type],
          "train: labels must cover every node of the label type");
  for (size_t c : task.labels)
    require(c < mc.n_classes, "train: label class out of range");
  require(!task.splits.train.empty(), "train: empty train split");
  require(!task.splits.valid.empty(), "train: empty validation split");

  std::vector<std::vector<uint32_t>> valid_seeds(n_types);
  valid_seeds[task.label_type] = to_ids(task.splits.valid);
  const BlockChain valid_chain = full_blocks(rs, valid_seeds, mc.layers);
  std::vector<size_t> valid_truth;
  for (uint32_t id : valid_chain.node_sets.back()[task.label_type])
    valid_truth.push_back(task.labels[id]);

  const auto& params = model.parameters();
  AdamState state(params);

  auto step_epoch = [&](size_t epoch, double lr) {
    std::vector<size_t> order = task.splits.train;
    Rng sh(Rng::derive(cfg.seed, {0xe91, epoch}));
    shuffle_ids(order, sh);
    const size_t bsize = cfg.batch == 0 ? order.size() : std::min(cfg.batch, order.size());
    double loss_sum = 0.0;
    size_t seen = 0;
    for (size_t off = 0, b = 0; off < order.size(); off += bsize, ++b) {
      const size_t end = std::min(off + bsize, order.size());
      std::vector<std::vector<uint32_t>> seeds(n_types);
      seeds[task.label_type].assign(order.begin() + off, order.begin() + end);
      BlockChain chain = chain_for_batch(rs, seeds, cfg, mc.layers, epoch, b);
      auto fused = model.forward(rs, chain, true, Rng::derive(cfg.seed, {0xd601, epoch, b}));
      const auto& batch_ids = chain.node_sets.back()[task.label_type];
      std::vector<size_t> classes;
      classes.reserve(batch_ids.size());
      for (uint32_t id : batch_ids) classes.push_back(task.labels[id]);
      Tensor loss = classification_loss(model.classify(fused[task.label_type]), classes);
      backward(loss);
      adam_step(params, state, lr);
      for (const Tensor& p : params) Tensor(p).zero_grad();
      loss_sum += loss.value() * double(batch_ids.size());
      seen += batch_ids.size();
    }
    return loss_sum / double(seen);
  };

  auto val_metric = [&] {
    auto fused = model.forward(rs, valid_chain, false, 0);
    auto pred = argmax_rows(model.classify(fused[task.label_type]));
    return accuracy(pred, valid_truth);
  };

  return run_loop(model, cfg, true, step_epoch, val_metric, log);
}

TrainReport train(Model& model, const RelationGraphSet& rs, const LinkpredTask& task,
                  const TrainConfig& cfg, std::ostream* log) {
  const ModelConfig& mc = model.config();
  cfg.validate(mc.layers);
  require(cfg.task == Task::linkpred, "train: config task does not match the data");
  const HeteroGraph& g = *rs.graph;
  require(task.relation < g.schema.relations.size(), "train: unknown relation");
  require(!task.splits.train.empty(), "train: empty train split");
  require(!task.splits.valid.empty(), "train: empty validation split");
  const size_t n_types = model.type_names().size();
  const size_t src_type = g.schema.type_id(g.schema.relations[task.relation].src_type);
  const size_t dst_type = g.schema.type_id(g.schema.relations[task.relation].dst_type);

  size_t exhausted = 0;

  Rng eval_rng(Rng::derive(cfg.seed, {0xee7}));
  const std::vector<Edge> valid_neg =
      sample_negatives(g, task.relation, task.splits.valid, cfg.negatives_eval, eval_rng,
                       &exhausted);
  std::vector<Edge> valid_pairs = task.splits.valid;
  valid_pairs.insert(valid_pairs.end(), valid_neg.begin(), valid_neg.end());
  std::vector<size_t> valid_labels(task.splits.valid.size(), 1);
  valid_labels.resize(valid_pairs.size(), 0);

  const auto& params = model.parameters();
  AdamState state(params);

  auto step_epoch = [&](size_t epoch, double lr) {
    std::vector<Edge> order = task.splits.train;
    Rng sh(Rng::derive(cfg.seed, {0xe92, epoch}));
    shuffle_edges(order, sh);
    const size_t bsize = cfg.batch == 0 ? order.size() : std::min(cfg.batch, order.size());
    double loss_sum = 0.0;
    size_t seen = 0;
    for (size_t off = 0, b = 0; off < order.size(); off += bsize, ++b) {
      const size_t end = std::min(off + bsize, order.size());
      std::vector<Edge> pos(order.begin() + off, order.begin() + end);
      Rng nrng(Rng::derive(cfg.seed, {0x4e6, epoch, b}));
      std::vector<Edge> neg = sample_negatives(g, task.relation, pos, cfg.negatives_train,
                                               nrng, &exhausted);
      std::vector<std::vector<uint32_t>> seeds(n_types);
      for (const Edge& e : pos) {
        seeds[src_type].push_back(e.first);
        seeds[dst_type].push_back(e.second);
      }
      for (const Edge& e : neg) seeds[dst_type].push_back(e.second);
      BlockChain chain = chain_for_batch(rs, seeds, cfg, mc.layers, epoch, b);
      auto fused = model.forward(rs, chain, true, Rng::derive(cfg.seed, {0xd602, epoch, b}));

      auto gather = [&](const std::vector<Edge>& pairs, bool src_side) {
        std::vector<size_t> rows;
        rows.reserve(pairs.size());
        for (const Edge& e : pairs)
          rows.push_back(src_side ? chain.seed_pos(src_type, e.first)
                                  : chain.seed_pos(dst_type, e.second));
        return row_gather(fused[src_side ? src_type : dst_type], rows);
      };
      Tensor loss = linkpred_loss(gather(pos, true), gather(pos, false), gather(neg, true),
                                  gather(neg, false));
      backward(loss);
      adam_step(params, state, lr);
      for (const Tensor& p : params) Tensor(p).zero_grad();
      loss_sum += loss.value() * double(pos.size());
      seen += pos.size();
    }
    return loss_sum / double(seen);
  };

  auto val_metric = [&] {
    return link_metrics(edge_scores(model, rs, task.relation, valid_pairs), valid_labels)
        .rmse;
  };

  TrainReport rep = run_loop(model, cfg, false, step_epoch, val_metric, log);
  rep.negative_retry_exhausted = exhausted;
  return rep;
}

Tensor classify_logits(const Model& model, const RelationGraphSet& rs, size_t label_type,
                       const std::vector<size_t>& ids) {
  require(!ids.empty(), "classify_logits: no nodes given");
  const size_t n_types = model.type_names().size();
  require(label_type < n_types, "classify_logits: unknown node type");
  std::vector<std::vector<uint32_t>> seeds(n_types);
  seeds[label_type] = to_ids(ids);
  const BlockChain chain = full_blocks(rs, seeds, model.config().layers);
  auto fused = model.forward(rs, chain, false, 0);
  std::vector<size_t> rows;
  rows.reserve(ids.size());
  for (size_t id : ids) rows.push_back(chain.seed_pos(label_type, uint32_t(id)));
  return model.classify(row_gather(fused[label_type], rows));
}

std::vector<double> edge_scores(const Model& model, const RelationGraphSet& rs,
                                size_t relation, const std::vector<Edge>& pairs) {
  require(!pairs.empty(), "edge_scores: no pairs given");
  const HeteroGraph& g = *rs.graph;
  require(relation < g.schema.relations.size(), "edge_scores: unknown relation");
  const size_t src_type = g.schema.type_id(g.schema.relations[relation].src_type);
  const size_t dst_type = g.schema.type_id(g.schema.relations[relation].dst_type);
  const size_t n_types = model.type_names().size();
  std::vector<std::vector<uint32_t>> seeds(n_types);
  for (const Edge& e : pairs) {
    seeds[src_type].push_back(e.first);
    seeds[dst_type].push_back(e.second);
  }
  const BlockChain chain = full_blocks(rs, seeds, model.config().layers);
  auto fused = model.forward(rs, chain, false, 0);
  std::vector<size_t> a_rows, b_rows;
  for (const Edge& e : pairs) {
    a_rows.push_back(chain.seed_pos(src_type, e.first));
    b_rows.push_back(chain.seed_pos(dst_type, e.second));
  }
  Tensor probs = sigmoid(
      rows_dot(row_gather(fused[src_type], a_rows), row_gather(fused[dst_type], b_rows)));
  return probs.values();
}

}  // namespace relgraph
