#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <memory>
#include <sstream>

#include "relgraph/metrics.hpp"
#include "relgraph/train.hpp"
#include "test_support.hpp"

using namespace relgraph;

namespace {

ModelConfig tiny_cfg(size_t layers = 1) {
  ModelConfig c;
  c.layers = layers;
  c.heads = 2;
  c.d_in = 8;
  c.d_node = 8;
  c.d_rel = 4;
  c.d_fuse = 8;
  c.n_classes = 3;
  c.dropout = 0.0;
  return c;
}

// Two-type graph whose type-a features carry the class signal.
struct TrainToy {
  HeteroGraph g;
  RelationGraphSet rs;
  std::vector<size_t> labels;
  NodeSplits splits;

  TrainToy(HeteroGraph gg, std::vector<size_t> lab)
      : g(std::move(gg)), rs(decompose(g)), labels(std::move(lab)) {}
};

std::unique_ptr<TrainToy> make_train_toy(uint64_t seed, size_t n_a, size_t n_classes,
                                         double signal) {
  Rng rng(seed);
  Schema s;
  s.node_types = {"a", "b"};
  s.feature_dims = {6, 5};
  s.relations = {{"ab", "a", "b"}};
  const size_t n_b = 8;

  std::vector<size_t> labels(n_a);
  for (auto& l : labels) l = rng.bounded(n_classes);
  std::vector<std::vector<double>> centroids(n_classes, std::vector<double>(6));
  for (auto& c : centroids)
    for (auto& v : c) v = rng.normal();

  std::vector<double> fa(n_a * 6);
  for (size_t i = 0; i < n_a; ++i)
    for (size_t j = 0; j < 6; ++j)
      fa[i * 6 + j] = std::sqrt(signal) * centroids[labels[i]][j] +
                      std::sqrt(1.0 - signal) * rng.normal();
  std::vector<Tensor> feats{Tensor::from_values(n_a, 6, fa),
                            Tensor::uniform(n_b, 5, -1, 1, rng)};

  std::vector<Edge> ab;
  for (uint32_t i = 0; i < n_a; ++i) {
    ab.push_back({i, uint32_t(rng.bounded(n_b))});
    ab.push_back({i, uint32_t(rng.bounded(n_b))});
  }
  auto toy = std::make_unique<TrainToy>(
      HeteroGraph::build(s, {uint32_t(n_a), uint32_t(n_b)}, feats, {ab}), std::move(labels));

  std::vector<size_t> order(n_a);
  for (size_t i = 0; i < n_a; ++i) order[i] = i;
  for (size_t i = n_a; i > 1; --i) std::swap(order[i - 1], order[rng.bounded(i)]);
  const size_t n_train = std::max<size_t>(1, n_a * 6 / 10);
  const size_t n_valid = std::max<size_t>(1, n_a * 2 / 10);
  toy->splits.train.assign(order.begin(), order.begin() + n_train);
  toy->splits.valid.assign(order.begin() + n_train, order.begin() + n_train + n_valid);
  toy->splits.test.assign(order.begin() + n_train + n_valid, order.end());
  return toy;
}

}  // namespace

TEST_CASE("classification loss closed forms") {
  SUBCASE("uniform logits give ln C") {
    Tensor logits = Tensor::full(4, 3, 0.7);
    Tensor loss = classification_loss(logits, {0, 1, 2, 0});
    CHECK(loss.value() == doctest::Approx(std::log(3.0)).epsilon(1e-14));
  }

  SUBCASE("a saturated margin drives the loss to zero") {
    Tensor logits = Tensor::from_values(1, 2, {20.0, 0.0});
    CHECK(classification_loss(logits, {0}).value() < 1e-8);
  }

  SUBCASE("random batch matches the explicit softmax evaluation") {
    Rng rng(1);
    Tensor logits = Tensor::uniform(4, 5, -2, 2, rng);
    std::vector<size_t> labels{3, 0, 4, 1};
    double expect = 0.0;
    for (size_t i = 0; i < 4; ++i) {
      double m = logits.at(i, 0);
      for (size_t j = 1; j < 5; ++j) m = std::max(m, logits.at(i, j));
      double z = 0.0;
      for (size_t j = 0; j < 5; ++j) z += std::exp(logits.at(i, j) - m);
      expect -= (logits.at(i, labels[i]) - m) - std::log(z);
    }
    expect /= 4.0;
    CHECK(std::fabs(classification_loss(logits, labels).value() - expect) <= 1e-12);
  }

  CHECK_THROWS_AS(classification_loss(Tensor::zeros(2, 3), {0, 3}), ContractError);
  CHECK_THROWS_AS(classification_loss(Tensor::zeros(0, 3), {}), ContractError);
}

TEST_CASE("link prediction loss closed forms") {
  SUBCASE("zero scores give 2 ln 2 per positive") {
    Tensor pa = Tensor::from_values(1, 2, {1.0, 0.0});
    Tensor pb = Tensor::from_values(1, 2, {0.0, 1.0});
    Tensor loss = linkpred_loss(pa, pb, pa, pb);
    CHECK(loss.value() == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-14));
  }

  SUBCASE("saturated scores vanish") {
    Tensor pa = Tensor::from_values(1, 1, {5.0});
    Tensor pb = Tensor::from_values(1, 1, {5.0});
    Tensor na = Tensor::from_values(1, 1, {5.0});
    Tensor nb = Tensor::from_values(1, 1, {-5.0});
    CHECK(linkpred_loss(pa, pb, na, nb).value() < 1e-8);
  }

  SUBCASE("random batch matches the direct formula") {
    Rng rng(2);
    Tensor pa = Tensor::uniform(3, 4, -1, 1, rng);
    Tensor pb = Tensor::uniform(3, 4, -1, 1, rng);
    Tensor na = Tensor::uniform(6, 4, -1, 1, rng);
    Tensor nb = Tensor::uniform(6, 4, -1, 1, rng);
    auto ls = [](double x) {
      const double c = std::clamp(x, -30.0, 30.0);
      return c < 0 ? c - std::log1p(std::exp(c)) : -std::log1p(std::exp(-c));
    };
    double expect = 0.0;
    for (size_t i = 0; i < 3; ++i) {
      double s = 0.0;
      for (size_t j = 0; j < 4; ++j) s += pa.at(i, j) * pb.at(i, j);
      expect -= ls(s);
    }
    for (size_t i = 0; i < 6; ++i) {
      double s = 0.0;
      for (size_t j = 0; j < 4; ++j) s += na.at(i, j) * nb.at(i, j);
      expect -= ls(-s);
    }
    expect /= 3.0;
    CHECK(std::fabs(linkpred_loss(pa, pb, na, nb).value() - expect) <= 1e-12);
  }

  SUBCASE("negatives may be empty") {
    Tensor pa = Tensor::from_values(1, 2, {1.0, 1.0});
    Tensor z = Tensor::zeros(0, 2);
    CHECK(std::isfinite(linkpred_loss(pa, pa, z, z).value()));
  }

  CHECK_THROWS_AS(linkpred_loss(Tensor::zeros(0, 2), Tensor::zeros(0, 2),
                                Tensor::zeros(1, 2), Tensor::zeros(1, 2)),
                  ContractError);
  CHECK_THROWS_AS(linkpred_loss(Tensor::zeros(2, 2), Tensor::zeros(2, 3),
                                Tensor::zeros(1, 2), Tensor::zeros(1, 2)),
                  ContractError);
}

TEST_CASE("negative sampling") {
  Schema s;
  s.node_types = {"u", "p"};
  s.feature_dims = {2, 2};
  s.relations = {{"up", "u", "p"}};
  Rng frng(3);

  SUBCASE("k clean corruptions per positive on a sparse graph") {
    std::vector<Edge> edges{{0, 0}, {1, 2}, {2, 4}, {3, 5}};
    HeteroGraph g = HeteroGraph::build(
        s, {4, 50}, {Tensor::uniform(4, 2, -1, 1, frng), Tensor::uniform(50, 2, -1, 1, frng)},
        {edges});
    Rng rng(7);
    size_t exhausted = 0;
    auto negs = sample_negatives(g, 0, edges, 5, rng, &exhausted);
    CHECK(negs.size() == 20);
    CHECK(exhausted == 0);
    for (size_t i = 0; i < negs.size(); ++i) {
      CHECK(negs[i].first == edges[i / 5].first);
      CHECK(negs[i].second < 50);
      for (const Edge& e : edges)
        CHECK(!(negs[i].first == e.first && negs[i].second == e.second));
    }
    Rng rng2(7);
    CHECK(sample_negatives(g, 0, edges, 5, rng2) == negs);
  }

  SUBCASE("retry exhaustion on a saturated source is counted and accepted") {
    std::vector<Edge> edges{{0, 0}};
    HeteroGraph g = HeteroGraph::build(
        s, {1, 1}, {Tensor::uniform(1, 2, -1, 1, frng), Tensor::uniform(1, 2, -1, 1, frng)},
        {edges});
    Rng rng(9);
    size_t exhausted = 0;
    auto negs = sample_negatives(g, 0, edges, 3, rng, &exhausted);
    CHECK(negs.size() == 3);
    CHECK(exhausted == 3);
  }
}

TEST_CASE("adam steps") {
  SUBCASE("three steps of w^2 match the scalar recurrence") {
    Tensor w = Tensor::from_values(1, 1, {1.5});
    w.set_requires_grad(true);
    std::vector<Tensor> params{w};
    AdamState st(params);
    const double lr = 0.1;
    double theta = 1.5, m = 0.0, v = 0.0;
    for (int t = 1; t <= 3; ++t) {
      Tensor loss = mul(w, w);
      backward(loss);
      adam_step(params, st, lr);
      w.zero_grad();
      const double gr = 2.0 * theta;
      m = 0.9 * m + 0.1 * gr;
      v = 0.999 * v + 0.001 * gr * gr;
      theta -= lr * (m / (1.0 - std::pow(0.9, t))) /
               (std::sqrt(v / (1.0 - std::pow(0.999, t))) + 1e-8);
      CHECK(std::fabs(w.value() - theta) <= 1e-12);
    }
    CHECK(st.t == 3);
  }

  SUBCASE("first step moves by almost exactly lr against the gradient sign") {
    Tensor w = Tensor::from_values(1, 1, {5.0});
    w.set_requires_grad(true);
    std::vector<Tensor> params{w};
    AdamState st(params);
    Tensor loss = mul(w, w);
    backward(loss);
    adam_step(params, st, 0.01);
    const double step = 5.0 - w.value();
    CHECK(step > 0.999 * 0.01);
    CHECK(step <= 0.01);
  }

  SUBCASE("no gradient means no movement at the first step") {
    Tensor w = Tensor::from_values(1, 1, {2.0});
    w.set_requires_grad(true);
    std::vector<Tensor> params{w};
    AdamState st(params);
    adam_step(params, st, 0.5);
    CHECK(w.value() == 2.0);
  }

  SUBCASE("a small verified step decreases the loss from any start") {
    Rng rng(20);
    auto toy = testsup::make_toy(rng, 12);
    std::vector<size_t> ids(toy->labels.size());
    std::vector<size_t> classes(toy->labels.begin(), toy->labels.end());
    for (size_t i = 0; i < ids.size(); ++i) ids[i] = i;
    auto chain = full_blocks(toy->rs, testsup::all_seeds(toy->g), 1);
    for (uint64_t restart = 0; restart < 20; ++restart) {
      Model model(toy->rs, tiny_cfg(1), 500 + restart);
      auto loss_of = [&] {
        auto fused = model.forward(toy->rs, chain, false, 0);
        return classification_loss(model.classify(row_gather(fused[0], ids)), classes);
      };
      Tensor before = loss_of();
      backward(before);
      AdamState st(model.parameters());
      adam_step(model.parameters(), st, 1e-4);
      for (const Tensor& p : model.parameters()) Tensor(p).zero_grad();
      CHECK(loss_of().value() < before.value());
    }
  }
}

TEST_CASE("cosine schedule") {
  CHECK(cosine_lr(0, 10, 0.1, 0.001) == 0.1);
  CHECK(cosine_lr(10, 10, 0.1, 0.001) == doctest::Approx(0.001).epsilon(1e-14));
  CHECK(cosine_lr(5, 10, 0.1, 0.001) == doctest::Approx(0.0505).epsilon(1e-12));
  for (size_t e = 0; e < 40; ++e)
    CHECK(cosine_lr(e + 1, 40, 0.05, 0.002) <= cosine_lr(e, 40, 0.05, 0.002));
  CHECK_THROWS_AS(cosine_lr(11, 10, 0.1, 0.0), ContractError);
}

TEST_CASE("train config validation") {
  TrainConfig c;
  c.lr = 0.0;
  CHECK_THROWS_AS(c.validate(2), ContractError);
  c.lr = 0.01;
  c.patience = 300;
  CHECK_THROWS_AS(c.validate(2), ContractError);
  c.patience = 50;
  c.fanouts = {4};
  CHECK_THROWS_AS(c.validate(2), ContractError);
  c.fanouts = {4, 4};
  c.validate(2);
}

TEST_CASE("classification training loop") {
  auto toy = make_train_toy(101, 40, 3, 0.9);

  SUBCASE("a frozen model stops at epoch patience+1") {
    Model model(toy->rs, tiny_cfg(1), 4);
    TrainConfig cfg;
    cfg.lr = 1e-300;
    cfg.epochs = 10;
    cfg.patience = 1;
    cfg.seed = 5;
    ClassifyTask task{0, toy->labels, toy->splits};
    TrainReport rep = train(model, toy->rs, task, cfg);
    CHECK(rep.stop_epoch == 2);
    CHECK(rep.history.size() == 2);
    CHECK(rep.best_epoch == 1);
  }

  SUBCASE("same seed reproduces the whole curve") {
    TrainConfig cfg;
    cfg.lr = 0.01;
    cfg.epochs = 6;
    cfg.patience = 6;
    cfg.seed = 5;
    cfg.batch = 16;  // exercises shuffling and multi-batch epochs
    ClassifyTask task{0, toy->labels, toy->splits};
    Model m1(toy->rs, tiny_cfg(1), 4);
    Model m2(toy->rs, tiny_cfg(1), 4);
    std::ostringstream log1, log2;
    TrainReport r1 = train(m1, toy->rs, task, cfg, &log1);
    TrainReport r2 = train(m2, toy->rs, task, cfg, &log2);
    REQUIRE(r1.history.size() == r2.history.size());
    for (size_t i = 0; i < r1.history.size(); ++i) {
      CHECK(r1.history[i].train_loss == r2.history[i].train_loss);
      CHECK(r1.history[i].val_metric == r2.history[i].val_metric);
    }
    CHECK(log1.str() == log2.str());
    CHECK(log1.str().find("epoch 1 train_loss ") == 0);
  }

  SUBCASE("training fits an easy signal and restores the best checkpoint") {
    Model model(toy->rs, tiny_cfg(1), 4);
    TrainConfig cfg;
    cfg.lr = 0.02;
    cfg.epochs = 60;
    cfg.patience = 60;
    cfg.seed = 5;
    ClassifyTask task{0, toy->labels, toy->splits};
    TrainReport rep = train(model, toy->rs, task, cfg);
    CHECK(rep.history.back().train_loss < 0.5 * rep.history.front().train_loss);

    double best_seen = 0.0;
    for (const auto& e : rep.history) best_seen = std::max(best_seen, e.val_metric);
    CHECK(rep.best_val == best_seen);

    // the restored parameters reproduce the reported best validation metric
    Tensor logits = classify_logits(model, toy->rs, 0, toy->splits.valid);
    std::vector<size_t> truth;
    for (size_t id : toy->splits.valid) truth.push_back(toy->labels[id]);
    CHECK(accuracy(argmax_rows(logits), truth) == rep.best_val);

    // gate mixing stays strictly inside (0,1) after real updates
    for (const auto& head : model.layer_p)
      for (const auto& lp : head)
        for (const Tensor& gate : lp.gate_raw) {
          const double lam = 1.0 / (1.0 + std::exp(-gate.value()));
          CHECK(lam > 0.0);
          CHECK(lam < 1.0);
        }
  }

  SUBCASE("sampled-fanout training runs and stays deterministic") {
    TrainConfig cfg;
    cfg.lr = 0.01;
    cfg.epochs = 3;
    cfg.patience = 3;
    cfg.seed = 11;
    cfg.batch = 8;
    cfg.fanouts = {2};
    ClassifyTask task{0, toy->labels, toy->splits};
    Model m1(toy->rs, tiny_cfg(1), 4);
    Model m2(toy->rs, tiny_cfg(1), 4);
    TrainReport r1 = train(m1, toy->rs, task, cfg);
    TrainReport r2 = train(m2, toy->rs, task, cfg);
    for (size_t i = 0; i < r1.history.size(); ++i)
      CHECK(r1.history[i].train_loss == r2.history[i].train_loss);
  }

  SUBCASE("empty splits are rejected") {
    Model model(toy->rs, tiny_cfg(1), 4);
    TrainConfig cfg;
    ClassifyTask task{0, toy->labels, {}};
    CHECK_THROWS_AS(train(model, toy->rs, task, cfg), ContractError);
  }
}

TEST_CASE("link prediction training loop") {
  Rng frng(33);
  Schema s;
  s.node_types = {"u", "p"};
  s.feature_dims = {6, 6};
  s.relations = {{"up", "u", "p"}};
  const size_t nu = 20, np = 24;
  std::vector<Edge> edges;
  for (uint32_t i = 0; i < nu; ++i)
    for (int j = 0; j < 3; ++j) edges.push_back({i, uint32_t(frng.bounded(np))});
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  HeteroGraph g = HeteroGraph::build(
      s, {nu, np},
      {Tensor::uniform(nu, 6, -1, 1, frng), Tensor::uniform(np, 6, -1, 1, frng)}, {edges});
  RelationGraphSet rs = decompose(g);

  LinkpredTask task;
  task.relation = 0;
  for (size_t i = 0; i < edges.size(); ++i) {
    if (i % 5 == 3)
      task.splits.valid.push_back(edges[i]);
    else if (i % 5 == 4)
      task.splits.test.push_back(edges[i]);
    else
      task.splits.train.push_back(edges[i]);
  }

  ModelConfig mc = tiny_cfg(1);
  mc.n_classes = 0;
  mc.d_in = 6;
  TrainConfig cfg;
  cfg.task = Task::linkpred;
  cfg.lr = 0.01;
  cfg.epochs = 8;
  cfg.patience = 8;
  cfg.seed = 2;
  cfg.negatives_train = 2;
  cfg.negatives_eval = 1;

  Model m1(rs, mc, 6);
  TrainReport r1 = train(m1, rs, task, cfg);
  CHECK(r1.history.size() == 8);
  for (const auto& e : r1.history) {
    CHECK(e.val_metric >= 0.0);
    CHECK(e.val_metric <= 1.0);
    CHECK(std::isfinite(e.train_loss));
  }
  CHECK(r1.history.back().train_loss < r1.history.front().train_loss);
  CHECK(r1.negative_retry_exhausted == 0);

  Model m2(rs, mc, 6);
  TrainReport r2 = train(m2, rs, task, cfg);
  for (size_t i = 0; i < r1.history.size(); ++i) {
    CHECK(r1.history[i].train_loss == r2.history[i].train_loss);
    CHECK(r1.history[i].val_metric == r2.history[i].val_metric);
  }

  auto scores = edge_scores(m1, rs, 0, task.splits.test);
  for (double p : scores) {
    CHECK(p > 0.0);
    CHECK(p < 1.0);
  }
}

TEST_CASE("logit rows follow the requested id order") {
  auto toy = make_train_toy(55, 20, 3, 0.5);
  Model model(toy->rs, tiny_cfg(1), 4);
  Tensor base = classify_logits(model, toy->rs, 0, {2, 5, 9});
  Tensor perm = classify_logits(model, toy->rs, 0, {9, 2, 5});
  for (size_t j = 0; j < base.cols(); ++j) {
    CHECK(perm.at(0, j) == base.at(2, j));
    CHECK(perm.at(1, j) == base.at(0, j));
    CHECK(perm.at(2, j) == base.at(1, j));
  }
}
