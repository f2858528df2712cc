#pragma once

#include <string>
#include <vector>

#include "relgraph/graph.hpp"
#include "relgraph/sampling.hpp"

namespace relgraph {

struct ModelConfig {
  size_t layers = 2;
  size_t heads = 8;
  size_t d_in = 64;    // shared width after per-type input projection
  size_t d_node = 64;  // per-layer node representation width, heads concatenated
  size_t d_rel = 64;   // per-head relation representation width
  size_t d_fuse = 64;  // fused output width, heads concatenated
  size_t n_classes = 0;  // 0 disables the classifier head
  double dropout = 0.6;
  double leaky_slope = 0.2;
  bool no_wrc = false;  // drop the weighted residual
  bool no_cmp = false;  // drop cross-relation mixing
  bool no_rrf = false;  // replace attention fusing with mean pooling

  size_t d_head() const { return d_node / heads; }
  size_t d_fuse_head() const { return d_fuse / heads; }
  void validate() const;
};

// Attention weights recorded during a forward pass.
struct ForwardTrace {
  // alpha[block][head][rel]: per-edge neighbor attention, aligned with the
  // block's flattened edge order
  std::vector<std::vector<std::vector<std::vector<double>>>> alpha;
  // beta[block][head][rel]: row-major n_targets x |R(dst type)| mixing
  // weights used to produce that relation's updated representation
  std::vector<std::vector<std::vector<std::vector<double>>>> beta;
  // gamma[head][type]: row-major n_seeds x |R(type)| fusing weights
  std::vector<std::vector<std::vector<double>>> gamma;
};

// ---- layer components (single relation / single head unless noted) ----

// h_tgt: target rows (n_targets x d_prev), h_src: the source-side node set
// (n_src x d_prev_src), h_rel: 1 x w relation representation. Aggregates
// neighbor messages with per-target attention; zero-degree targets yield a
// zero row.
Tensor relation_conv(const RelBlock& rb, const Tensor& h_tgt, const Tensor& h_src,
                     const Tensor& h_rel, const Tensor& w_node_tgt,
                     const Tensor& w_node_src, const Tensor& w_rel, double slope,
                     std::vector<double>* alpha_out = nullptr);

// z = sigmoid(gate_raw) * z_tilde + (1 - sigmoid(gate_raw)) * h_tgt * w_align
Tensor weighted_residual(const Tensor& z_tilde, const Tensor& h_tgt, const Tensor& w_align,
                         const Tensor& gate_raw, bool no_wrc);

// Mixes the per-relation representations of one node type. z_by_rel and
// q_by_out_rel are parallel over that type's relation list; output rr is the
// attention combination of all inputs scored against q[rr].
std::vector<Tensor> cross_relation_mp(const std::vector<Tensor>& z_by_rel,
                                      const std::vector<Tensor>& q_by_out_rel, double slope,
                                      bool no_cmp,
                                      std::vector<std::vector<double>>* beta_out = nullptr);

Tensor relation_update(const Tensor& h_rel, const Tensor& w, const Tensor& b);

// Per-head fusing of one node type's final per-relation representations,
// guided by the final relation representations (1 x w each).
Tensor fuse_relations(const std::vector<Tensor>& h_by_rel,
                      const std::vector<Tensor>& rel_reps, const std::vector<Tensor>& v_mats,
                      const std::vector<Tensor>& e_mats, double slope, bool no_rrf,
                      std::vector<double>* gamma_out = nullptr);

Tensor one_hot_row(size_t width, size_t index);

// ---- full model ----

struct LayerParams {
  std::vector<Tensor> w_node;    // per node type
  std::vector<Tensor> w_align;   // per node type
  std::vector<Tensor> gate_raw;  // per node type, 1x1
  std::vector<Tensor> w_rel;     // per directed relation
  std::vector<Tensor> q;         // per directed relation, d_head x 1
  std::vector<Tensor> upd_w;     // per directed relation
  std::vector<Tensor> upd_b;     // per directed relation, 1 x d_rel
};

struct FuseParams {
  std::vector<Tensor> v, e;  // per directed relation
};

class Model {
 public:
  Model(const RelationGraphSet& rset, ModelConfig cfg, uint64_t init_seed);

  const ModelConfig& config() const { return cfg_; }

  // Fused seed representations per node type (undefined entries for types
  // without seeds). Dropout masks derive from dropout_seed, so a fixed seed
  // reproduces the pass bitwise regardless of thread count.
  std::vector<Tensor> forward(const RelationGraphSet& rset, const BlockChain& chain,
                              bool training, uint64_t dropout_seed,
                              ForwardTrace* trace = nullptr) const;

  Tensor classify(const Tensor& fused) const;

  // flat views in manifest order (stable across runs; checkpoint layout)
  const std::vector<Tensor>& parameters() const { return params_; }
  const std::vector<std::string>& param_names() const { return names_; }

  std::vector<std::vector<double>> state_values() const;
  void load_values(const std::vector<std::vector<double>>& values);

  // structured access
  std::vector<Tensor> proj;                       // per node type
  std::vector<std::vector<LayerParams>> layer_p;  // [layer][head]
  std::vector<FuseParams> fuse_p;                 // [head]
  Tensor cls_w, cls_b;

  const std::vector<std::string>& type_names() const { return type_names_; }
  const std::vector<std::string>& relation_names() const { return rel_names_; }

 private:
  Tensor add_param(const std::string& name, size_t rows, size_t cols, double init_bound,
                   Rng& rng);

  ModelConfig cfg_;
  std::vector<std::string> type_names_;
  std::vector<size_t> feature_dims_;
  std::vector<std::string> rel_names_;   // directed
  std::vector<size_t> rel_src_, rel_dst_;
  std::vector<std::vector<size_t>> by_dst_;

  std::vector<Tensor> params_;
  std::vector<std::string> names_;
};

}  // namespace relgraph
