#include "relgraph/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace relgraph {

double accuracy(const std::vector<size_t>& pred, const std::vector<size_t>& truth) {
  require(pred.size() == truth.size(), "accuracy: length mismatch");
  require(!pred.empty(), "accuracy: empty input");
  size_t hit = 0;
  for (size_t i = 0; i < pred.size(); ++i)
    if (pred[i] == truth[i]) ++hit;
  return double(hit) / double(pred.size());
}

double macro_f1(const std::vector<size_t>& pred, const std::vector<size_t>& truth,
                size_t n_classes) {
  require(pred.size() == truth.size(), "macro_f1: length mismatch");
  require(!pred.empty(), "macro_f1: empty input");
  require(n_classes > 0, "macro_f1: need at least one class");
  std::vector<size_t> tp(n_classes, 0), fp(n_classes, 0), fn(n_classes, 0);
  for (size_t i = 0; i < pred.size(); ++i) {
    require(pred[i] < n_classes && truth[i] < n_classes, "macro_f1: class out of range");
    if (pred[i] == truth[i]) {
      ++tp[pred[i]];
    } else {
      ++fp[pred[i]];
      ++fn[truth[i]];
    }
  }
  double total = 0.0;
  size_t present = 0;
  for (size_t c = 0; c < n_classes; ++c) {
    if (tp[c] + fp[c] + fn[c] == 0) continue;  // class absent on both sides
    total += 2.0 * double(tp[c]) / double(2 * tp[c] + fp[c] + fn[c]);
    ++present;
  }
  return total / double(present);
}

namespace {

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
  double acc = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

struct LloydResult {
  std::vector<size_t> ids;
  std::vector<std::vector<double>> centroids;
  double inertia = 0.0;
  std::vector<double> trace;
};

LloydResult lloyd_once(const std::vector<std::vector<double>>& x, size_t k, Rng& rng,
                       size_t max_iter) {
  const size_t n = x.size();
  std::vector<std::vector<double>> c;
  c.reserve(k);

  // k-means++ seeding
  c.push_back(x[rng.bounded(n)]);
  std::vector<double> d2(n);
  while (c.size() < k) {
    double total = 0.0;
    for (size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& cc : c) best = std::min(best, sq_dist(x[i], cc));
      d2[i] = best;
      total += best;
    }
    if (total <= 0.0) {
      c.push_back(x[rng.bounded(n)]);  // all remaining points coincide
      continue;
    }
    double u = rng.uniform01() * total;
    size_t pick = n - 1;
    for (size_t i = 0; i < n; ++i) {
      u -= d2[i];
      if (u <= 0.0) {
        pick = i;
        break;
      }
    }
    c.push_back(x[pick]);
  }

  LloydResult res;
  res.ids.assign(n, 0);
  std::vector<size_t> prev(n, size_t(-1));
  for (size_t iter = 0; iter < max_iter; ++iter) {
    for (size_t i = 0; i < n; ++i) {
      size_t best = 0;
      double bd = sq_dist(x[i], c[0]);
      for (size_t j = 1; j < k; ++j) {
        const double d = sq_dist(x[i], c[j]);
        if (d < bd) {
          bd = d;
          best = j;
        }
      }
      res.ids[i] = best;
    }

    std::vector<size_t> count(k, 0);
    for (size_t a : res.ids) ++count[a];
    for (size_t j = 0; j < k; ++j) {
      if (count[j] > 0) continue;
      // hand the emptied cluster the point farthest from its centroid
      size_t far = size_t(-1);
      double fd = -1.0;
      for (size_t i = 0; i < n; ++i) {
        if (count[res.ids[i]] <= 1) continue;
        const double d = sq_dist(x[i], c[res.ids[i]]);
        if (d > fd) {
          fd = d;
          far = i;
        }
      }
      if (far == size_t(-1)) break;
      --count[res.ids[far]];
      res.ids[far] = j;
      count[j] = 1;
    }

    for (auto& cc : c) std::fill(cc.begin(), cc.end(), 0.0);
    for (size_t i = 0; i < n; ++i)
      for (size_t f = 0; f < x[i].size(); ++f) c[res.ids[i]][f] += x[i][f];
    for (size_t j = 0; j < k; ++j)
      if (count[j] > 0)
        for (double& v : c[j]) v /= double(count[j]);

    double inertia = 0.0;
    for (size_t i = 0; i < n; ++i) inertia += sq_dist(x[i], c[res.ids[i]]);
    res.trace.push_back(inertia);
    if (res.ids == prev) break;
    prev = res.ids;
  }
  res.centroids = std::move(c);
  res.inertia = res.trace.back();
  return res;
}

}  // namespace

ClusterAssignment kmeans(const std::vector<std::vector<double>>& x, size_t k, Rng& rng,
                         size_t max_iter, size_t restarts, std::vector<double>* trace) {
  require(k >= 1, "kmeans: need at least one cluster");
  require(x.size() >= k, "kmeans: fewer points than clusters");
  require(max_iter >= 1 && restarts >= 1, "kmeans: iteration counts must be positive");
  for (const auto& row : x)
    require(row.size() == x[0].size(), "kmeans: ragged input");

  LloydResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (size_t r = 0; r < restarts; ++r) {
    LloydResult cur = lloyd_once(x, k, rng, max_iter);
    if (cur.inertia < best.inertia) best = std::move(cur);
  }
  if (trace) *trace = best.trace;
  ClusterAssignment out;
  out.ids = std::move(best.ids);
  out.k = k;
  out.centroids = std::move(best.centroids);
  out.inertia = best.inertia;
  return out;
}

namespace {

// contingency table plus marginals over compacted label ids
struct Contingency {
  std::map<std::pair<size_t, size_t>, size_t> cells;
  std::map<size_t, size_t> ma, mb;
  size_t n = 0;
};

Contingency tabulate(const std::vector<size_t>& a, const std::vector<size_t>& b) {
  require(a.size() == b.size(), "partition metric: length mismatch");
  require(!a.empty(), "partition metric: empty input");
  Contingency t;
  t.n = a.size();
  for (size_t i = 0; i < a.size(); ++i) {
    ++t.cells[{a[i], b[i]}];
    ++t.ma[a[i]];
    ++t.mb[b[i]];
  }
  return t;
}

double entropy(const std::map<size_t, size_t>& marg, size_t n) {
  double h = 0.0;
  for (const auto& [_, cnt] : marg) {
    const double p = double(cnt) / double(n);
    h -= p * std::log(p);
  }
  return h;
}

double comb2(double x) { return x * (x - 1.0) / 2.0; }

}  // namespace

double nmi(const std::vector<size_t>& a, const std::vector<size_t>& b) {
  const Contingency t = tabulate(a, b);
  const double ha = entropy(t.ma, t.n);
  const double hb = entropy(t.mb, t.n);
  if (ha <= 0.0 || hb <= 0.0) return 0.0;
  double mi = 0.0;
  for (const auto& [cell, cnt] : t.cells) {
    const double pij = double(cnt) / double(t.n);
    const double pi = double(t.ma.at(cell.first)) / double(t.n);
    const double pj = double(t.mb.at(cell.second)) / double(t.n);
    mi += pij * std::log(pij / (pi * pj));
  }
  return std::clamp(mi / (0.5 * (ha + hb)), 0.0, 1.0);
}

double ari(const std::vector<size_t>& a, const std::vector<size_t>& b) {
  const Contingency t = tabulate(a, b);
  double index = 0.0;
  for (const auto& [_, cnt] : t.cells) index += comb2(double(cnt));
  double suma = 0.0, sumb = 0.0;
  for (const auto& [_, cnt] : t.ma) suma += comb2(double(cnt));
  for (const auto& [_, cnt] : t.mb) sumb += comb2(double(cnt));
  const double pairs = comb2(double(t.n));
  if (pairs <= 0.0) return 1.0;
  const double expected = suma * sumb / pairs;
  const double maximum = 0.5 * (suma + sumb);
  if (maximum == expected) return 1.0;  // both partitions trivial
  return (index - expected) / (maximum - expected);
}

LinkMetrics link_metrics(const std::vector<double>& scores,
                         const std::vector<size_t>& labels) {
  require(scores.size() == labels.size(), "link_metrics: length mismatch");
  require(!scores.empty(), "link_metrics: empty input");
  double se = 0.0, ae = 0.0;
  for (size_t i = 0; i < scores.size(); ++i) {
    require(labels[i] <= 1, "link_metrics: labels must be 0 or 1");
    const double d = scores[i] - double(labels[i]);
    se += d * d;
    ae += std::fabs(d);
  }
  const double n = double(scores.size());
  return {std::sqrt(se / n), ae / n};
}

std::vector<std::vector<double>> embed_all(const Model& model, const RelationGraphSet& rs,
                                           size_t node_type) {
  const size_t n_types = model.type_names().size();
  require(node_type < n_types, "embed_all: unknown node type");
  const size_t n = rs.graph->node_counts[node_type];
  require(n > 0, "embed_all: node type is empty");
  std::vector<std::vector<uint32_t>> seeds(n_types);
  seeds[node_type].resize(n);
  for (size_t i = 0; i < n; ++i) seeds[node_type][i] = uint32_t(i);
  const BlockChain chain = full_blocks(rs, seeds, model.config().layers);
  const Tensor fused = model.forward(rs, chain, false, 0)[node_type];
  std::vector<std::vector<double>> out(n);
  for (size_t i = 0; i < n; ++i) {
    out[i].resize(fused.cols());
    for (size_t j = 0; j < fused.cols(); ++j) out[i][j] = fused.at(i, j);
  }
  return out;
}

void l2_normalize_rows(std::vector<std::vector<double>>& rows) {
  for (auto& row : rows) {
    double norm = 0.0;
    for (double v : row) norm += v * v;
    norm = std::sqrt(norm);
    if (norm > 0.0)
      for (double& v : row) v /= norm;
  }
}

ClusterScores clustering_protocol(const Model& model, const RelationGraphSet& rs,
                                  size_t node_type, const std::vector<size_t>& labels,
                                  size_t k, uint64_t seed, size_t repeats) {
  require(repeats >= 1, "clustering_protocol: repeats must be positive");
  auto embeds = embed_all(model, rs, node_type);
  require(labels.size() == embeds.size(),
          "clustering_protocol: labels must cover every node");
  l2_normalize_rows(embeds);
  ClusterScores total;
  for (size_t rep = 0; rep < repeats; ++rep) {
    Rng rng(Rng::derive(seed, {0xc1, rep}));
    const ClusterAssignment asg = kmeans(embeds, k, rng);
    total.nmi += nmi(asg.ids, labels);
    total.ari += ari(asg.ids, labels);
  }
  total.nmi /= double(repeats);
  total.ari /= double(repeats);
  return total;
}

}  // namespace relgraph
