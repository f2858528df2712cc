#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "relgraph/io.hpp"
#include "relgraph/metrics.hpp"

using namespace relgraph;
namespace fs = std::filesystem;

namespace {

struct Scratch {
  fs::path dir;
  Scratch() {
    static int counter = 0;
    dir = fs::temp_directory_path() / ("relgraph_cli_" + std::to_string(counter++));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Scratch() {
    std::error_code ec;
    fs::remove_all(dir, ec);
  }
  std::string operator()(const std::string& name) const { return (dir / name).string(); }
};

struct CmdResult {
  int code = -1;
  std::string out, err;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

CmdResult run_cmd(const Scratch& sc, const std::string& args) {
  const std::string cmd = std::string(RELGRAPH_BIN) + " " + args + " >" + sc("_stdout") +
                          " 2>" + sc("_stderr");
  const int st = std::system(cmd.c_str());
  CmdResult r;
  r.code = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  r.out = read_file(sc("_stdout"));
  r.err = read_file(sc("_stderr"));
  return r;
}

bool files_equal(const std::string& a, const std::string& b) {
  return read_file(a) == read_file(b);
}

// `metric <name> <value>` lines into a map
std::map<std::string, double> parse_metrics(const std::string& text) {
  std::map<std::string, double> out;
  std::istringstream ss(text);
  std::string word, name;
  double value;
  while (ss >> word >> name >> value) {
    REQUIRE(word == "metric");
    out[name] = value;
  }
  return out;
}

std::string gen_args(const std::string& out, const std::string& extra = "") {
  return "gen-synth --out " + out +
         " --seed 4 --counts 40,12,30 --dims 6,5,4 --edges 80,100 --signal 0.9 " + extra;
}

std::string small_model_args() {
  return " --heads 2 --d-in 8 --d-node 8 --d-rel 4 --d-fuse 8 --dropout 0.1 --lr 0.01 ";
}

}  // namespace

TEST_CASE("dataset generation writes a loadable, reproducible bundle") {
  Scratch sc;
  CHECK(run_cmd(sc, gen_args(sc("d1"))).code == 0);
  CHECK(run_cmd(sc, gen_args(sc("d2"))).code == 0);
  // config.resolved differs in the out path; every data file must match
  for (const char* f : {"graph.txt", "graph.txt.movie.feat", "labels.txt", "splits.txt"})
    CHECK(files_equal(sc("d1/" + std::string(f)), sc("d2/" + std::string(f))));

  const HeteroGraph g = load_graph(sc("d1/graph.txt"));
  CHECK(g.node_counts == std::vector<uint32_t>{40, 12, 30});
  CHECK(g.edges[0].size() == 80);
  auto [type, labels] = load_labels(sc("d1/labels.txt"));
  CHECK(type == "movie");
  CHECK(labels.size() == 40);
  const NodeSplits sp = load_splits(sc("d1/splits.txt"));
  CHECK(sp.train.size() + sp.valid.size() + sp.test.size() == 40);

  // a different seed changes the data
  CHECK(run_cmd(sc, gen_args(sc("d3"), "--seed 5")).code == 0);
  CHECK(!files_equal(sc("d1/graph.txt.movie.feat"), sc("d3/graph.txt.movie.feat")));
}

TEST_CASE("classification runs are complete and rerun bitwise from their config") {
  Scratch sc;
  REQUIRE(run_cmd(sc, gen_args(sc("data"))).code == 0);
  const std::string train = "train-classify --graph " + sc("data/graph.txt") + " --labels " +
                            sc("data/labels.txt") + " --splits " + sc("data/splits.txt") +
                            small_model_args() + " --epochs 8 --patience 8 --seed 3";
  const CmdResult r1 = run_cmd(sc, train + " --out " + sc("r1"));
  REQUIRE(r1.code == 0);
  for (const char* f : {"config.resolved", "report.log", "metrics.txt", "checkpoint.bin"})
    CHECK(fs::exists(sc("r1/" + std::string(f))));

  // stdout carries the metric lines
  const auto metrics = parse_metrics(read_file(sc("r1/metrics.txt")));
  CHECK(parse_metrics(r1.out.substr(0, r1.out.find("\nrun ") + 1)) == metrics);
  CHECK(metrics.count("test_accuracy") == 1);
  CHECK(metrics.at("epochs_run") == 8.0);

  // rerun from the resolved config, flags overriding only the target dir
  const CmdResult r2 =
      run_cmd(sc, "train-classify --config " + sc("r1/config.resolved") + " --out " + sc("r2"));
  REQUIRE(r2.code == 0);
  CHECK(files_equal(sc("r1/metrics.txt"), sc("r2/metrics.txt")));
  CHECK(files_equal(sc("r1/report.log"), sc("r2/report.log")));
  CHECK(files_equal(sc("r1/checkpoint.bin"), sc("r2/checkpoint.bin")));

  // flag overrides a config value
  const CmdResult r3 = run_cmd(sc, "train-classify --config " + sc("r1/config.resolved") +
                                       " --out " + sc("r3") + " --epochs 3 --patience 3");
  REQUIRE(r3.code == 0);
  CHECK(parse_metrics(read_file(sc("r3/metrics.txt"))).at("epochs_run") == 3.0);

  // the checkpoint reloads against the graph
  const HeteroGraph g = load_graph(sc("data/graph.txt"));
  const RelationGraphSet rs = decompose(g);
  const Model m = load_checkpoint(sc("r1/checkpoint.bin"), rs);
  CHECK(m.config().heads == 2);
}

TEST_CASE("link prediction runs are complete and deterministic") {
  Scratch sc;
  REQUIRE(run_cmd(sc, gen_args(sc("data"))).code == 0);
  {
    const HeteroGraph g = load_graph(sc("data/graph.txt"));
    std::ofstream out(sc("esplits.txt"));
    for (size_t i = 0; i < g.edges[0].size(); ++i) {
      const char* part = i % 5 == 4 ? "test" : (i % 5 == 3 ? "valid" : "train");
      out << "split " << i << " " << part << "\n";
    }
  }
  const std::string train = "train-linkpred --graph " + sc("data/graph.txt") +
                            " --relation md --splits " + sc("esplits.txt") +
                            small_model_args() +
                            " --epochs 6 --patience 6 --negatives-train 2 --seed 9";
  REQUIRE(run_cmd(sc, train + " --out " + sc("r1")).code == 0);
  REQUIRE(run_cmd(sc, train + " --out " + sc("r2")).code == 0);
  CHECK(files_equal(sc("r1/metrics.txt"), sc("r2/metrics.txt")));
  CHECK(files_equal(sc("r1/checkpoint.bin"), sc("r2/checkpoint.bin")));
  const auto metrics = parse_metrics(read_file(sc("r1/metrics.txt")));
  CHECK(metrics.count("test_rmse") == 1);
  CHECK(metrics.at("test_rmse") > 0.0);
  CHECK(metrics.at("test_rmse") < 1.0);

  // an unknown relation is refused
  CHECK(run_cmd(sc, "train-linkpred --graph " + sc("data/graph.txt") +
                        " --relation nosuch --splits " + sc("esplits.txt") + " --out " +
                        sc("bad")).code != 0);
  CHECK(!fs::exists(sc("bad")));
}

TEST_CASE("clustering and embedding commands agree with the library") {
  Scratch sc;
  REQUIRE(run_cmd(sc, gen_args(sc("data"))).code == 0);
  const std::string train = "train-classify --graph " + sc("data/graph.txt") + " --labels " +
                            sc("data/labels.txt") + " --splits " + sc("data/splits.txt") +
                            small_model_args() + " --epochs 6 --patience 6 --seed 3 --out " +
                            sc("run");
  REQUIRE(run_cmd(sc, train).code == 0);

  const CmdResult rc = run_cmd(sc, "cluster --graph " + sc("data/graph.txt") + " --labels " +
                                       sc("data/labels.txt") + " --checkpoint " +
                                       sc("run/checkpoint.bin") + " --seed 2 --out " + sc("cl"));
  REQUIRE(rc.code == 0);
  const auto cm = parse_metrics(read_file(sc("cl/metrics.txt")));
  CHECK(cm.at("nmi") >= 0.0);
  CHECK(cm.at("nmi") <= 1.0);
  CHECK(cm.at("ari") >= -0.5);

  const HeteroGraph g = load_graph(sc("data/graph.txt"));
  const RelationGraphSet rs = decompose(g);
  const Model m = load_checkpoint(sc("run/checkpoint.bin"), rs);
  auto [ltype, labels] = load_labels(sc("data/labels.txt"));
  const ClusterScores want = clustering_protocol(m, rs, 0, labels, 3, 2, 10);
  CHECK(cm.at("nmi") == doctest::Approx(want.nmi).epsilon(1e-15));
  CHECK(cm.at("ari") == doctest::Approx(want.ari).epsilon(1e-15));

  const CmdResult re = run_cmd(sc, "embed --graph " + sc("data/graph.txt") + " --checkpoint " +
                                       sc("run/checkpoint.bin") + " --node-type movie --out " +
                                       sc("em"));
  REQUIRE(re.code == 0);

  // embeddings match an eval-mode forward bitwise
  auto [rows, cols, values] = load_matrix(sc("em/embeddings.bin"));
  CHECK(rows == g.node_counts[0]);
  CHECK(cols == m.config().d_fuse);
  std::vector<std::vector<uint32_t>> seeds(3);
  for (uint32_t i = 0; i < g.node_counts[0]; ++i) seeds[0].push_back(i);
  const BlockChain chain = full_blocks(rs, seeds, m.config().layers);
  ForwardTrace trace;
  const auto fused = m.forward(rs, chain, false, 0, &trace);
  CHECK(values == fused[0].values());

  // the relation weight file matches the trace means and sums to one
  std::map<std::string, double> weights;
  {
    std::istringstream ss(read_file(sc("em/relation_weights.txt")));
    std::string word, rel;
    double v;
    while (ss >> word >> rel >> v) {
      REQUIRE(word == "relation_weight");
      weights[rel] = v;
    }
  }
  const auto& rels = rs.by_dst_type[0];
  REQUIRE(weights.size() == rels.size());
  double total = 0.0;
  for (size_t j = 0; j < rels.size(); ++j) {
    double mean = 0.0;
    for (size_t h = 0; h < m.config().heads; ++h)
      for (size_t v = 0; v < rows; ++v)
        mean += trace.gamma[h][0][v * rels.size() + j];
    mean /= double(rows * m.config().heads);
    CHECK(weights.at(rs.directed[rels[j]].name) == doctest::Approx(mean).epsilon(1e-15));
    total += weights.at(rs.directed[rels[j]].name);
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("failures exit nonzero and leave no partial run directory") {
  Scratch sc;
  CHECK(run_cmd(sc, "").code != 0);
  CHECK(run_cmd(sc, "--help").code == 0);
  CHECK(run_cmd(sc, "no-such-command").code != 0);

  const CmdResult missing = run_cmd(sc, "train-classify --graph " + sc("nope.txt") +
                                            " --labels l --splits s --out " + sc("r"));
  CHECK(missing.code != 0);
  CHECK(missing.err.find("nope.txt") != std::string::npos);
  CHECK(!fs::exists(sc("r")));
  CHECK(!fs::exists(sc("r.stage")));

  // unknown config keys are named
  std::ofstream(sc("bad.conf")) << "frobnicate = 1\n";
  const CmdResult badkey =
      run_cmd(sc, "gen-synth --config " + sc("bad.conf") + " --out " + sc("x"));
  CHECK(badkey.code != 0);
  CHECK(badkey.err.find("frobnicate") != std::string::npos);
  CHECK(!fs::exists(sc("x")));

  // an existing non-empty output needs the overwrite flag
  REQUIRE(run_cmd(sc, gen_args(sc("d"))).code == 0);
  const CmdResult clash = run_cmd(sc, gen_args(sc("d")));
  CHECK(clash.code != 0);
  CHECK(clash.err.find("overwrite") != std::string::npos);
  CHECK(run_cmd(sc, gen_args(sc("d"), "--overwrite")).code == 0);
  CHECK(fs::exists(sc("d/graph.txt")));

  // a pre-created empty directory is fine
  fs::create_directories(sc("empty_ok"));
  CHECK(run_cmd(sc, gen_args(sc("empty_ok"))).code == 0);
  CHECK(fs::exists(sc("empty_ok/graph.txt")));
}
