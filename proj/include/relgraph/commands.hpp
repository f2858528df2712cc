#pragma once

#include <cstddef>
#include <string>
#include <variant>
#include <vector>

namespace relgraph {

// Where a command drops its artifacts. The directory is staged next to the
// target and renamed into place on success, so failed runs leave nothing at
// the target path. An existing non-empty target is refused unless overwrite
// is set.
struct OutputSpec {
  std::string out;
  bool overwrite = false;
};

struct GenSynthOptions {
  OutputSpec output;
  size_t seed = 1;
  std::string types = "movie,director,actor";
  std::string counts = "200,60,150";
  std::string dims = "16,16,16";
  std::string relations = "md:movie:director,ma:movie:actor";  // name:src:dst
  std::string edges = "400,600";
  std::string homophily = "0.7,0.7";
  size_t classes = 3;
  double signal = 0.7;
  std::string label_type;  // empty means the first type
  double train_frac = 0.2;
  double valid_frac = 0.1;
};

// Shared by train-classify and train-linkpred; each command binds only the
// keys it understands.
struct TrainOptions {
  OutputSpec output;
  std::string graph, labels, splits;
  std::string relation;  // linkpred target, by base relation name
  size_t seed = 1;

  size_t layers = 2, heads = 8;
  size_t d_in = 64, d_node = 64, d_rel = 64, d_fuse = 64;
  double dropout = 0.6, leaky_slope = 0.2;
  bool no_wrc = false, no_cmp = false, no_rrf = false;

  double lr = 1e-3, lr_min = 0.0;
  size_t epochs = 200, patience = 50, batch = 0;
  std::string fanouts;  // comma list, empty means full neighborhoods
  bool full_batch = false;  // forces batch 0 and clears fanouts
  size_t negatives_train = 5, negatives_eval = 1;
};

struct ClusterOptions {
  OutputSpec output;
  std::string graph, labels, checkpoint;
  size_t k = 0;  // 0 means the class count of the labels file
  size_t repeats = 10;
  size_t seed = 1;
};

struct EmbedOptions {
  OutputSpec output;
  std::string graph, checkpoint, node_type;
};

// One flag/config key bound to a field of an options struct. The same table
// drives CLI registration and the config.resolved echo, so the two cannot
// drift apart.
using FieldRef = std::variant<std::string*, bool*, size_t*, double*>;
struct OptSpec {
  std::string key;  // kebab-case; the flag is --<key>, the file key is <key>
  FieldRef field;
  std::string help;
  bool required = false;
};

std::vector<OptSpec> option_table(GenSynthOptions& o);
std::vector<OptSpec> classify_option_table(TrainOptions& o);
std::vector<OptSpec> linkpred_option_table(TrainOptions& o);
std::vector<OptSpec> option_table(ClusterOptions& o);
std::vector<OptSpec> option_table(EmbedOptions& o);

// `key = value` lines, one per table entry, in table order.
std::string render_config(const std::vector<OptSpec>& specs);

void cmd_gen_synth(const GenSynthOptions& o, const std::string& resolved);
void cmd_train_classify(const TrainOptions& o, const std::string& resolved);
void cmd_train_linkpred(const TrainOptions& o, const std::string& resolved);
void cmd_cluster(const ClusterOptions& o, const std::string& resolved);
void cmd_embed(const EmbedOptions& o, const std::string& resolved);

}  // namespace relgraph
