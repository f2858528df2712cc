#pragma once

#include <string>
#include <tuple>
#include <vector>

#include "relgraph/layers.hpp"
#include "relgraph/train.hpp"

namespace relgraph {

// All writers go through a temp file and a rename, so a crash never leaves a
// half-written artifact at the target path.

// Binary matrix: two little-endian u64 counts (rows, cols), then row-major
// little-endian f64 values.
void save_matrix(const std::string& path, size_t rows, size_t cols,
                 const std::vector<double>& values);
std::tuple<size_t, size_t, std::vector<double>> load_matrix(const std::string& path);

// Line-oriented graph container:
//   nodetype <name> <count> <feature_dim>
//   relation <name> <src_type> <dst_type>
//   edge <relation> <src_id> <dst_id>
// Features live in one binary sidecar per type at `<path>.<type>.feat`.
// Blank lines and lines starting with # are skipped.
void save_graph(const std::string& path, const HeteroGraph& g);
HeteroGraph load_graph(const std::string& path);

// `label <node_type> <node_id> <class_id>` lines; every node of the type
// must be covered exactly once.
void save_labels(const std::string& path, const std::string& node_type,
                 const std::vector<size_t>& labels);
std::pair<std::string, std::vector<size_t>> load_labels(const std::string& path);

// `split <id> train|valid|test` lines. Ids are node ids for classification
// and edge indices (into the target relation's edge list) for link
// prediction.
void save_splits(const std::string& path, const NodeSplits& splits);
NodeSplits load_splits(const std::string& path);

// Text header (config echo, node type and directed relation tables, tensor
// manifest with shapes), then a `payload` line followed by raw little-endian
// f64 tensor data in manifest order.
void save_checkpoint(const std::string& path, const Model& model);
Model load_checkpoint(const std::string& path, const RelationGraphSet& rs);

}  // namespace relgraph
