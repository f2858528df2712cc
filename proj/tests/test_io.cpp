#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include "relgraph/io.hpp"
#include "relgraph/synth.hpp"
#include "test_support.hpp"

using namespace relgraph;
namespace fs = std::filesystem;

namespace {

// fresh directory per test case, removed on scope exit
struct Scratch {
  fs::path dir;
  Scratch() {
    static int counter = 0;
    dir = fs::temp_directory_path() / ("relgraph_io_" + std::to_string(counter++));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Scratch() {
    std::error_code ec;
    fs::remove_all(dir, ec);
  }
  std::string operator()(const std::string& name) const { return (dir / name).string(); }
  bool has_tmp_files() const {
    for (const auto& e : fs::directory_iterator(dir))
      if (e.path().string().ends_with(".tmp")) return true;
    return false;
  }
};

void write_text(const std::string& path, const std::string& body) {
  std::ofstream out(path);
  out << body;
}

SyntheticSpec imdb_shaped() {
  SyntheticSpec spec;
  spec.type_names = {"movie", "director", "actor"};
  spec.counts = {40, 12, 30};
  spec.feature_dims = {5, 4, 3};
  spec.relations = {{"md", "movie", "director"}, {"ma", "movie", "actor"}};
  spec.edge_counts = {60, 90};
  spec.homophily = {0.8, 0.8};
  return spec;
}

bool same_graph(const HeteroGraph& a, const HeteroGraph& b) {
  if (a.schema.node_types != b.schema.node_types) return false;
  if (a.schema.feature_dims != b.schema.feature_dims) return false;
  if (a.schema.relations.size() != b.schema.relations.size()) return false;
  for (size_t r = 0; r < a.schema.relations.size(); ++r) {
    if (a.schema.relations[r].name != b.schema.relations[r].name) return false;
    if (a.schema.relations[r].src_type != b.schema.relations[r].src_type) return false;
    if (a.schema.relations[r].dst_type != b.schema.relations[r].dst_type) return false;
  }
  if (a.node_counts != b.node_counts || a.edges != b.edges) return false;
  for (size_t t = 0; t < a.features.size(); ++t)
    if (a.features[t].values() != b.features[t].values()) return false;
  return true;
}

}  // namespace

TEST_CASE("matrix files round-trip bitwise") {
  Scratch sc;
  Rng rng(3);
  std::vector<double> vals(7 * 5);
  for (auto& v : vals) v = rng.normal();
  save_matrix(sc("m.bin"), 7, 5, vals);
  auto [rows, cols, loaded] = load_matrix(sc("m.bin"));
  CHECK(rows == 7);
  CHECK(cols == 5);
  CHECK(loaded == vals);

  save_matrix(sc("empty.bin"), 0, 4, {});
  auto [r0, c0, v0] = load_matrix(sc("empty.bin"));
  CHECK(r0 == 0);
  CHECK(c0 == 4);
  CHECK(v0.empty());

  CHECK(!sc.has_tmp_files());
  CHECK_THROWS_AS(load_matrix(sc("missing.bin")), RuntimeFailure);
  write_text(sc("short.bin"), "1234");
  CHECK_THROWS_AS(load_matrix(sc("short.bin")), RuntimeFailure);
  CHECK_THROWS_AS(save_matrix(sc("bad.bin"), 2, 2, {1.0}), ContractError);
}

TEST_CASE("graph files round-trip") {
  Scratch sc;
  Rng rng(11);
  auto toy = testsup::make_toy(rng, 18);
  save_graph(sc("g.txt"), toy->g);
  const HeteroGraph back = load_graph(sc("g.txt"));
  CHECK(same_graph(toy->g, back));

  // the decomposition of the reloaded graph matches too
  const RelationGraphSet rs2 = decompose(back);
  REQUIRE(rs2.num_directed() == toy->rs.num_directed());
  for (size_t r = 0; r < rs2.num_directed(); ++r) {
    CHECK(rs2.directed[r].name == toy->rs.directed[r].name);
    CHECK(rs2.directed[r].src_type == toy->rs.directed[r].src_type);
    CHECK(rs2.directed[r].dst_type == toy->rs.directed[r].dst_type);
  }
  CHECK(!sc.has_tmp_files());
}

TEST_CASE("graph parser tolerates comments and rejects bad lines") {
  Scratch sc;
  save_matrix(sc("hand.txt") + ".x.feat", 2, 1, {0.5, -0.5});
  save_matrix(sc("hand.txt") + ".y.feat", 1, 2, {1.0, 2.0});
  write_text(sc("hand.txt"),
             "# a handwritten graph\n"
             "nodetype x 2 1\n"
             "\n"
             "nodetype y 1 2\n"
             "relation xy x y\n"
             "# edges below\n"
             "edge xy 0 0\n"
             "edge xy 1 0\n");
  const HeteroGraph g = load_graph(sc("hand.txt"));
  CHECK(g.node_counts == std::vector<uint32_t>{2, 1});
  CHECK(g.edges[0] == std::vector<Edge>{{0, 0}, {1, 0}});
  CHECK(g.features[0].at(1, 0) == -0.5);

  write_text(sc("bad1.txt"), "nodetype x 2\n");
  CHECK_THROWS_AS(load_graph(sc("bad1.txt")), RuntimeFailure);
  write_text(sc("bad2.txt"), "frobnicate x\n");
  CHECK_THROWS_AS(load_graph(sc("bad2.txt")), RuntimeFailure);
  write_text(sc("bad3.txt"), "nodetype x 2 1\nedge nosuch 0 0\n");
  CHECK_THROWS(load_graph(sc("bad3.txt")));
  write_text(sc("bad4.txt"), "nodetype x two 1\n");
  CHECK_THROWS_AS(load_graph(sc("bad4.txt")), RuntimeFailure);
  CHECK_THROWS_AS(load_graph(sc("absent.txt")), RuntimeFailure);

  // sidecar shape disagreeing with the header is caught
  save_matrix(sc("hand.txt") + ".x.feat", 3, 1, {0.0, 0.0, 0.0});
  CHECK_THROWS_AS(load_graph(sc("hand.txt")), ContractError);
}

TEST_CASE("label and split files round-trip") {
  Scratch sc;
  const std::vector<size_t> labels = {2, 0, 1, 1, 0};
  save_labels(sc("l.txt"), "movie", labels);
  auto [type, back] = load_labels(sc("l.txt"));
  CHECK(type == "movie");
  CHECK(back == labels);

  NodeSplits sp;
  sp.train = {4, 0};
  sp.valid = {2};
  sp.test = {1, 3};
  save_splits(sc("s.txt"), sp);
  const NodeSplits sp2 = load_splits(sc("s.txt"));
  CHECK(sp2.train == sp.train);
  CHECK(sp2.valid == sp.valid);
  CHECK(sp2.test == sp.test);
  CHECK(!sc.has_tmp_files());

  write_text(sc("dup.txt"), "label m 0 1\nlabel m 0 2\n");
  CHECK_THROWS_AS(load_labels(sc("dup.txt")), RuntimeFailure);
  write_text(sc("gap.txt"), "label m 0 1\nlabel m 2 0\n");
  CHECK_THROWS_AS(load_labels(sc("gap.txt")), ContractError);
  write_text(sc("mixed.txt"), "label m 0 1\nlabel n 1 0\n");
  CHECK_THROWS_AS(load_labels(sc("mixed.txt")), RuntimeFailure);
  write_text(sc("badsplit.txt"), "split 0 sometimes\n");
  CHECK_THROWS_AS(load_splits(sc("badsplit.txt")), RuntimeFailure);
}

TEST_CASE("checkpoints restore the exact model") {
  Scratch sc;
  Rng rng(21);
  auto toy = testsup::make_toy(rng, 16);
  ModelConfig cfg;
  cfg.layers = 2;
  cfg.heads = 2;
  cfg.d_in = 4;
  cfg.d_node = 4;
  cfg.d_rel = 3;
  cfg.d_fuse = 4;
  cfg.n_classes = 3;
  cfg.dropout = 0.37;
  cfg.leaky_slope = 0.11;
  cfg.no_cmp = true;
  const Model m(toy->rs, cfg, 7);
  save_checkpoint(sc("ck.bin"), m);
  const Model back = load_checkpoint(sc("ck.bin"), toy->rs);

  const ModelConfig& c2 = back.config();
  CHECK(c2.layers == cfg.layers);
  CHECK(c2.heads == cfg.heads);
  CHECK(c2.d_in == cfg.d_in);
  CHECK(c2.d_node == cfg.d_node);
  CHECK(c2.d_rel == cfg.d_rel);
  CHECK(c2.d_fuse == cfg.d_fuse);
  CHECK(c2.n_classes == cfg.n_classes);
  CHECK(c2.dropout == cfg.dropout);
  CHECK(c2.leaky_slope == cfg.leaky_slope);
  CHECK(c2.no_wrc == cfg.no_wrc);
  CHECK(c2.no_cmp == cfg.no_cmp);
  CHECK(c2.no_rrf == cfg.no_rrf);

  REQUIRE(back.parameters().size() == m.parameters().size());
  for (size_t i = 0; i < m.parameters().size(); ++i)
    CHECK(back.parameters()[i].values() == m.parameters()[i].values());

  // forward passes agree bitwise
  const BlockChain chain = full_blocks(toy->rs, testsup::all_seeds(toy->g), cfg.layers);
  const auto fused_a = m.forward(toy->rs, chain, false, 0);
  const auto fused_b = back.forward(toy->rs, chain, false, 0);
  for (size_t t = 0; t < fused_a.size(); ++t)
    CHECK(fused_a[t].values() == fused_b[t].values());
  CHECK(!sc.has_tmp_files());
}

TEST_CASE("checkpoint loader rejects mismatches and corruption") {
  Scratch sc;
  Rng rng(22);
  auto toy = testsup::make_toy(rng, 14);
  ModelConfig cfg;
  cfg.layers = 1;
  cfg.heads = 1;
  cfg.d_in = 3;
  cfg.d_node = 3;
  cfg.d_rel = 2;
  cfg.d_fuse = 3;
  cfg.n_classes = 2;
  const Model m(toy->rs, cfg, 5);
  save_checkpoint(sc("ck.bin"), m);

  // a graph with a different schema cannot host this checkpoint
  Schema s;
  s.node_types = {"a", "b"};
  s.feature_dims = {3, 3};
  s.relations = {{"ab", "a", "b"}};
  std::vector<Tensor> feats = {Tensor::zeros(2, 3), Tensor::zeros(2, 3)};
  const HeteroGraph other =
      HeteroGraph::build(s, {2, 2}, std::move(feats), {{{0, 0}, {1, 1}}});
  const RelationGraphSet other_rs = decompose(other);
  CHECK_THROWS_AS(load_checkpoint(sc("ck.bin"), other_rs), ContractError);

  write_text(sc("junk.bin"), "hello\n");
  CHECK_THROWS_AS(load_checkpoint(sc("junk.bin"), toy->rs), RuntimeFailure);
  write_text(sc("nopay.bin"), "checkpoint v1\nlayers 1\n");
  CHECK_THROWS_AS(load_checkpoint(sc("nopay.bin"), toy->rs), RuntimeFailure);
  write_text(sc("oddkey.bin"), "checkpoint v1\nwhimsy 3\npayload\n");
  CHECK_THROWS_AS(load_checkpoint(sc("oddkey.bin"), toy->rs), RuntimeFailure);

  // truncate the payload
  const auto full = fs::file_size(sc("ck.bin"));
  fs::copy_file(sc("ck.bin"), sc("cut.bin"));
  fs::resize_file(sc("cut.bin"), full - 16);
  CHECK_THROWS_AS(load_checkpoint(sc("cut.bin"), toy->rs), RuntimeFailure);
  CHECK_THROWS_AS(load_checkpoint(sc("nofile.bin"), toy->rs), RuntimeFailure);
}

TEST_CASE("synthetic generation is reproducible and honors the recipe") {
  SyntheticSpec spec = imdb_shaped();

  SUBCASE("same seed, same bits") {
    const SynthData a = gen_synth(spec, 42);
    const SynthData b = gen_synth(spec, 42);
    CHECK(same_graph(a.g, b.g));
    CHECK(a.labels == b.labels);
    CHECK(a.latent == b.latent);
    CHECK(a.splits.train == b.splits.train);
    CHECK(a.splits.valid == b.splits.valid);
    CHECK(a.splits.test == b.splits.test);

    const SynthData c = gen_synth(spec, 43);
    CHECK(!same_graph(a.g, c.g));
  }

  SUBCASE("split fractions partition the labeled type") {
    const SynthData d = gen_synth(spec, 7);
    CHECK(d.splits.train.size() == 8);   // 0.2 * 40
    CHECK(d.splits.valid.size() == 4);   // 0.1 * 40
    CHECK(d.splits.test.size() == 28);
    std::vector<size_t> all;
    for (const auto* part : {&d.splits.train, &d.splits.valid, &d.splits.test})
      all.insert(all.end(), part->begin(), part->end());
    std::sort(all.begin(), all.end());
    std::vector<size_t> want(40);
    std::iota(want.begin(), want.end(), size_t(0));
    CHECK(all == want);
    CHECK(d.labels == d.latent[0]);
    CHECK(*std::max_element(d.labels.begin(), d.labels.end()) < spec.n_classes);
  }

  SUBCASE("full signal collapses same-class features onto the centroid") {
    spec.signal = 1.0;
    const SynthData d = gen_synth(spec, 5);
    for (size_t t = 0; t < 3; ++t) {
      const size_t dim = spec.feature_dims[t];
      std::vector<const double*> first(spec.n_classes, nullptr);
      for (uint32_t i = 0; i < spec.counts[t]; ++i) {
        const double* row = &d.g.features[t].values()[i * dim];
        const size_t cls = d.latent[t][i];
        if (!first[cls]) {
          first[cls] = row;
          continue;
        }
        for (size_t j = 0; j < dim; ++j) CHECK(row[j] == first[cls][j]);
      }
    }
  }

  SUBCASE("full homophily keeps every edge within a class") {
    spec.homophily = {1.0, 1.0};
    const SynthData d = gen_synth(spec, 6);
    for (size_t r = 0; r < spec.relations.size(); ++r) {
      const size_t st = d.g.schema.type_id(spec.relations[r].src_type);
      const size_t dt = d.g.schema.type_id(spec.relations[r].dst_type);
      CHECK(d.g.edges[r].size() == spec.edge_counts[r]);
      for (const auto& [src, dst] : d.g.edges[r])
        CHECK(d.latent[st][src] == d.latent[dt][dst]);
    }
  }

  SUBCASE("zero signal leaves features uninformative") {
    spec.signal = 0.0;
    spec.counts = {300, 12, 30};
    const SynthData d = gen_synth(spec, 9);
    const size_t dim = spec.feature_dims[0];
    std::vector<std::vector<double>> mean(spec.n_classes, std::vector<double>(dim, 0.0));
    std::vector<size_t> count(spec.n_classes, 0);
    for (uint32_t i = 0; i < spec.counts[0]; ++i) {
      const size_t cls = d.latent[0][i];
      ++count[cls];
      for (size_t j = 0; j < dim; ++j) mean[cls][j] += d.g.features[0].at(i, j);
    }
    for (size_t c = 0; c < spec.n_classes; ++c) {
      REQUIRE(count[c] > 20);
      for (size_t j = 0; j < dim; ++j)
        CHECK(std::abs(mean[c][j] / double(count[c])) < 0.35);
    }
  }

  SUBCASE("bad specs are rejected") {
    auto broken = imdb_shaped();
    broken.homophily = {1.5, 0.5};
    CHECK_THROWS_AS(gen_synth(broken, 1), ContractError);
    broken = imdb_shaped();
    broken.counts[1] = 0;
    CHECK_THROWS_AS(gen_synth(broken, 1), ContractError);
    broken = imdb_shaped();
    broken.signal = -0.1;
    CHECK_THROWS_AS(gen_synth(broken, 1), ContractError);
    broken = imdb_shaped();
    broken.train_frac = 0.95;
    CHECK_THROWS_AS(gen_synth(broken, 1), ContractError);
    broken = imdb_shaped();
    broken.n_classes = 1;
    CHECK_THROWS_AS(gen_synth(broken, 1), ContractError);
  }
}

TEST_CASE("generated datasets survive a disk round-trip") {
  Scratch sc;
  const SyntheticSpec spec = imdb_shaped();
  const SynthData d = gen_synth(spec, 12);
  save_graph(sc("g.txt"), d.g);
  save_labels(sc("l.txt"), spec.type_names[spec.label_type], d.labels);
  save_splits(sc("s.txt"), d.splits);

  const HeteroGraph g2 = load_graph(sc("g.txt"));
  CHECK(same_graph(d.g, g2));
  auto [type, labels] = load_labels(sc("l.txt"));
  CHECK(type == "movie");
  CHECK(labels == d.labels);
  const NodeSplits sp = load_splits(sc("s.txt"));
  CHECK(sp.train == d.splits.train);
  CHECK(sp.valid == d.splits.valid);
  CHECK(sp.test == d.splits.test);
  CHECK(!sc.has_tmp_files());
}
