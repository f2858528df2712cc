#include "relgraph/layers.hpp"

#include <cmath>

namespace relgraph {

void ModelConfig::validate() const {
  require(layers >= 1, "config: at least one layer required");
  require(heads >= 1, "config: at least one head required");
  require(d_in >= 1 && d_node >= 1 && d_rel >= 1 && d_fuse >= 1,
          "config: dimensions must be positive");
  require(d_node % heads == 0, "config: d_node must divide evenly across heads");
  require(d_fuse % heads == 0, "config: d_fuse must divide evenly across heads");
  require(dropout >= 0.0 && dropout < 1.0, "config: dropout must be in [0,1)");
  require(leaky_slope > 0.0 && leaky_slope < 1.0, "config: leaky slope must be in (0,1)");
}

Tensor one_hot_row(size_t width, size_t index) {
  require(index < width, "one_hot_row: index out of range");
  std::vector<double> v(width, 0.0);
  v[index] = 1.0;
  return Tensor::from_values(1, width, std::move(v));
}

Tensor relation_conv(const RelBlock& rb, const Tensor& h_tgt, const Tensor& h_src,
                     const Tensor& h_rel, const Tensor& w_node_tgt,
                     const Tensor& w_node_src, const Tensor& w_rel, double slope,
                     std::vector<double>* alpha_out) {
  require(!rb.offsets.empty(), "relation_conv: malformed block");
  const size_t n_tg = rb.offsets.size() - 1;
  require(h_tgt.rows() == n_tg, "relation_conv: target rows mismatch");

  Tensor c_tgt = matmul(h_tgt, w_node_tgt);
  const size_t d = c_tgt.cols();
  const size_t n_edges = rb.src_pos.size();
  if (alpha_out) alpha_out->clear();
  if (n_edges == 0) return Tensor::zeros(n_tg, d);

  Tensor c_src = matmul(h_src, w_node_src);
  require(c_src.cols() == d, "relation_conv: source/target width mismatch");
  Tensor c_rel = matmul(h_rel, w_rel);
  require(c_rel.rows() == 1 && c_rel.cols() == 2 * d,
          "relation_conv: relation projection must be 1 x 2*width");

  std::vector<size_t> tgt_of_edge(n_edges);
  std::vector<size_t> occupied{0};  // offsets with empty segments collapsed
  for (size_t k = 0; k < n_tg; ++k) {
    for (size_t i = rb.offsets[k]; i < rb.offsets[k + 1]; ++i) tgt_of_edge[i] = k;
    if (rb.offsets[k + 1] > rb.offsets[k]) occupied.push_back(rb.offsets[k + 1]);
  }

  Tensor cu = row_gather(c_src, rb.src_pos);
  Tensor cv = row_gather(c_tgt, tgt_of_edge);
  Tensor scores = leaky_relu(matmul(concat_cols(cv, cu), transpose(c_rel)), slope);
  Tensor alpha = segment_softmax(scores, occupied);
  if (alpha_out) *alpha_out = alpha.values();
  return relu(segment_sum_rows(scale_rows(cu, alpha), rb.offsets));
}

Tensor weighted_residual(const Tensor& z_tilde, const Tensor& h_tgt, const Tensor& w_align,
                         const Tensor& gate_raw, bool no_wrc) {
  if (no_wrc) return z_tilde;
  Tensor lam = sigmoid(gate_raw);
  Tensor inv = sub(Tensor::full(1, 1, 1.0), lam);
  return add(scale_by(z_tilde, lam), scale_by(matmul(h_tgt, w_align), inv));
}

std::vector<Tensor> cross_relation_mp(const std::vector<Tensor>& z_by_rel,
                                      const std::vector<Tensor>& q_by_out_rel, double slope,
                                      bool no_cmp,
                                      std::vector<std::vector<double>>* beta_out) {
  const size_t m = z_by_rel.size();
  require(m >= 1, "cross_relation_mp: empty relation set");
  require(q_by_out_rel.size() == m, "cross_relation_mp: one query per relation required");
  if (beta_out) beta_out->assign(m, {});
  if (no_cmp) return z_by_rel;

  std::vector<Tensor> out(m);
  for (size_t rr = 0; rr < m; ++rr) {
    Tensor s = leaky_relu(matmul(z_by_rel[0], q_by_out_rel[rr]), slope);
    for (size_t j = 1; j < m; ++j)
      s = concat_cols(s, leaky_relu(matmul(z_by_rel[j], q_by_out_rel[rr]), slope));
    Tensor beta = softmax_rows(s);
    if (beta_out) (*beta_out)[rr] = beta.values();
    Tensor h = scale_rows(z_by_rel[0], slice_cols(beta, 0, 1));
    for (size_t j = 1; j < m; ++j)
      h = add(h, scale_rows(z_by_rel[j], slice_cols(beta, j, j + 1)));
    out[rr] = h;
  }
  return out;
}

Tensor relation_update(const Tensor& h_rel, const Tensor& w, const Tensor& b) {
  return add(matmul(h_rel, w), b);
}

Tensor fuse_relations(const std::vector<Tensor>& h_by_rel,
                      const std::vector<Tensor>& rel_reps, const std::vector<Tensor>& v_mats,
                      const std::vector<Tensor>& e_mats, double slope, bool no_rrf,
                      std::vector<double>* gamma_out) {
  const size_t m = h_by_rel.size();
  require(m >= 1, "fuse: empty relation set");
  require(rel_reps.size() == m && v_mats.size() == m && e_mats.size() == m,
          "fuse: per-relation inputs must align");
  if (gamma_out) gamma_out->clear();

  std::vector<Tensor> vh(m);
  for (size_t j = 0; j < m; ++j) vh[j] = matmul(h_by_rel[j], v_mats[j]);

  if (no_rrf) {
    Tensor acc = vh[0];
    for (size_t j = 1; j < m; ++j) acc = add(acc, vh[j]);
    return scale(acc, 1.0 / double(m));
  }

  Tensor s = leaky_relu(matmul(vh[0], transpose(matmul(rel_reps[0], e_mats[0]))), slope);
  for (size_t j = 1; j < m; ++j)
    s = concat_cols(s, leaky_relu(matmul(vh[j], transpose(matmul(rel_reps[j], e_mats[j]))),
                                  slope));
  Tensor gamma = softmax_rows(s);
  if (gamma_out) *gamma_out = gamma.values();
  Tensor out = scale_rows(vh[0], slice_cols(gamma, 0, 1));
  for (size_t j = 1; j < m; ++j)
    out = add(out, scale_rows(vh[j], slice_cols(gamma, j, j + 1)));
  return out;
}

// ---- Model ----

Tensor Model::add_param(const std::string& name, size_t rows, size_t cols,
                        double init_bound, Rng& rng) {
  Tensor t = init_bound > 0.0 ? Tensor::uniform(rows, cols, -init_bound, init_bound, rng)
                              : Tensor::zeros(rows, cols);
  t.set_requires_grad(true);
  names_.push_back(name);
  params_.push_back(t);
  return t;
}

Model::Model(const RelationGraphSet& rset, ModelConfig cfg, uint64_t init_seed)
    : cfg_(cfg) {
  cfg_.validate();
  require(rset.graph != nullptr, "model: empty relation set");
  const Schema& schema = rset.graph->schema;
  type_names_ = schema.node_types;
  feature_dims_ = schema.feature_dims;
  for (const auto& rel : rset.directed) {
    rel_names_.push_back(rel.name);
    rel_src_.push_back(rel.src_type);
    rel_dst_.push_back(rel.dst_type);
  }
  by_dst_ = rset.by_dst_type;

  const size_t nt = type_names_.size();
  const size_t nr = rel_names_.size();
  require(nr >= 1, "model: at least one relation required");
  Rng rng(Rng::derive(init_seed, {0x9a7a}));

  auto bound = [](size_t fan_in) { return 1.0 / std::sqrt(double(fan_in)); };

  proj.resize(nt);
  for (size_t t = 0; t < nt; ++t)
    proj[t] = add_param("proj." + type_names_[t], feature_dims_[t], cfg_.d_in,
                        bound(feature_dims_[t]), rng);

  const size_t dh = cfg_.d_head();
  layer_p.assign(cfg_.layers, std::vector<LayerParams>(cfg_.heads));
  for (size_t l = 0; l < cfg_.layers; ++l) {
    const size_t in_node = l == 0 ? cfg_.d_in : cfg_.d_node;
    const size_t in_rel = l == 0 ? nr : cfg_.d_rel;
    for (size_t k = 0; k < cfg_.heads; ++k) {
      auto& p = layer_p[l][k];
      const std::string prefix = "l" + std::to_string(l) + ".h" + std::to_string(k) + ".";
      p.w_node.resize(nt);
      p.w_align.resize(nt);
      p.gate_raw.resize(nt);
      for (size_t t = 0; t < nt; ++t) {
        p.w_node[t] = add_param(prefix + "node." + type_names_[t], in_node, dh,
                                bound(in_node), rng);
        p.w_align[t] = add_param(prefix + "align." + type_names_[t], in_node, dh,
                                 bound(in_node), rng);
        p.gate_raw[t] = add_param(prefix + "gate." + type_names_[t], 1, 1, 0.0, rng);
      }
      p.w_rel.resize(nr);
      p.q.resize(nr);
      p.upd_w.resize(nr);
      p.upd_b.resize(nr);
      for (size_t r = 0; r < nr; ++r) {
        p.w_rel[r] = add_param(prefix + "rel." + rel_names_[r], in_rel, 2 * dh,
                               bound(in_rel), rng);
        p.q[r] = add_param(prefix + "attn." + rel_names_[r], dh, 1, bound(dh), rng);
        p.upd_w[r] = add_param(prefix + "updw." + rel_names_[r], in_rel, cfg_.d_rel,
                               bound(in_rel), rng);
        p.upd_b[r] = add_param(prefix + "updb." + rel_names_[r], 1, cfg_.d_rel, 0.0, rng);
      }
    }
  }

  const size_t dfh = cfg_.d_fuse_head();
  const size_t rel_cat = cfg_.heads * cfg_.d_rel;
  fuse_p.resize(cfg_.heads);
  for (size_t k = 0; k < cfg_.heads; ++k) {
    const std::string prefix = "fuse.h" + std::to_string(k) + ".";
    fuse_p[k].v.resize(nr);
    fuse_p[k].e.resize(nr);
    for (size_t r = 0; r < nr; ++r) {
      fuse_p[k].v[r] = add_param(prefix + "v." + rel_names_[r], cfg_.d_node, dfh,
                                 bound(cfg_.d_node), rng);
      fuse_p[k].e[r] = add_param(prefix + "e." + rel_names_[r], rel_cat, dfh,
                                 bound(rel_cat), rng);
    }
  }

  if (cfg_.n_classes > 0) {
    cls_w = add_param("head.weight", cfg_.d_fuse, cfg_.n_classes, bound(cfg_.d_fuse), rng);
    cls_b = add_param("head.bias", 1, cfg_.n_classes, 0.0, rng);
  }
}

namespace {

// positions of each element of `subset` within `full`; both ascending
std::vector<size_t> positions_in(const std::vector<uint32_t>& subset,
                                 const std::vector<uint32_t>& full) {
  std::vector<size_t> pos(subset.size());
  size_t j = 0;
  for (size_t i = 0; i < subset.size(); ++i) {
    while (j < full.size() && full[j] < subset[i]) ++j;
    require(j < full.size() && full[j] == subset[i],
            "forward: chain is missing a target in its source set");
    pos[i] = j;
  }
  return pos;
}

Tensor concat_heads(const std::vector<Tensor>& parts) {
  Tensor acc = parts.at(0);
  for (size_t i = 1; i < parts.size(); ++i) acc = concat_cols(acc, parts[i]);
  return acc;
}

}  // namespace

std::vector<Tensor> Model::forward(const RelationGraphSet& rset, const BlockChain& chain,
                                   bool training, uint64_t dropout_seed,
                                   ForwardTrace* trace) const {
  require(rset.graph != nullptr, "forward: empty relation set");
  require(chain.num_blocks() == cfg_.layers, "forward: chain depth must equal layer count");
  const HeteroGraph& g = *rset.graph;
  const size_t nt = type_names_.size();
  const size_t nr = rel_names_.size();
  require(g.schema.node_types.size() == nt && rset.num_directed() == nr,
          "forward: graph does not match the model's schema");

  if (trace) {
    trace->alpha.assign(cfg_.layers,
                        std::vector<std::vector<std::vector<double>>>(
                            cfg_.heads, std::vector<std::vector<double>>(nr)));
    trace->beta = trace->alpha;
    trace->gamma.assign(cfg_.heads, std::vector<std::vector<double>>(nt));
  }

  // depth-0 state: projected input features, shared by every relation
  // targeting the type
  std::vector<Tensor> h0(nt);
  for (size_t t = 0; t < nt; ++t) {
    const auto& ids = chain.node_sets[0][t];
    if (ids.empty()) continue;
    std::vector<size_t> rows(ids.begin(), ids.end());
    h0[t] = matmul(row_gather(g.features[t], rows), proj[t]);
  }
  std::vector<Tensor> h_node(nr);
  for (size_t r = 0; r < nr; ++r) h_node[r] = h0[rel_dst_[r]];

  std::vector<std::vector<Tensor>> h_rel(cfg_.heads, std::vector<Tensor>(nr));
  for (size_t r = 0; r < nr; ++r) {
    Tensor init = one_hot_row(nr, r);
    for (size_t k = 0; k < cfg_.heads; ++k) h_rel[k][r] = init;
  }

  for (size_t b = 0; b < cfg_.layers; ++b) {
    const Block& blk = chain.blocks[b];

    std::vector<Tensor> hd(nr);
    for (size_t r = 0; r < nr; ++r) {
      if (!h_node[r].defined()) continue;
      Rng drop_rng(Rng::derive(dropout_seed, {b, r}));
      hd[r] = dropout(h_node[r], cfg_.dropout, training, drop_rng);
    }

    std::vector<std::vector<size_t>> tgt_pos(nt);
    for (size_t t = 0; t < nt; ++t)
      tgt_pos[t] = positions_in(chain.node_sets[b + 1][t], chain.node_sets[b][t]);

    // z[k][r]: per-head post-residual representations over this block's
    // targets. Tasks are independent; results land in distinct slots.
    std::vector<std::vector<Tensor>> z(cfg_.heads, std::vector<Tensor>(nr));
    parallel_for(nr * cfg_.heads, [&](size_t task) {
      const size_t r = task / cfg_.heads;
      const size_t k = task % cfg_.heads;
      const size_t t = rel_dst_[r];
      if (chain.node_sets[b + 1][t].empty()) return;
      const auto& p = layer_p[b][k];
      Tensor h_tgt = row_gather(hd[r], tgt_pos[t]);
      std::vector<double>* alpha_slot = trace ? &trace->alpha[b][k][r] : nullptr;
      Tensor zt = relation_conv(blk.rels[r], h_tgt, hd[partner_relation(r)], h_rel[k][r],
                                p.w_node[t], p.w_node[rel_src_[r]], p.w_rel[r],
                                cfg_.leaky_slope, alpha_slot);
      z[k][r] = weighted_residual(zt, h_tgt, p.w_align[t], p.gate_raw[t], cfg_.no_wrc);
    });

    // cross-relation mixing per node type, then head concatenation
    std::vector<std::vector<Tensor>> mixed(cfg_.heads, std::vector<Tensor>(nr));
    for (size_t t = 0; t < nt; ++t) {
      if (chain.node_sets[b + 1][t].empty() || by_dst_[t].empty()) continue;
      const auto& rels = by_dst_[t];
      for (size_t k = 0; k < cfg_.heads; ++k) {
        std::vector<Tensor> zs, qs;
        for (size_t r : rels) {
          zs.push_back(z[k][r]);
          qs.push_back(layer_p[b][k].q[r]);
        }
        std::vector<std::vector<double>> betas;
        auto hs = cross_relation_mp(zs, qs, cfg_.leaky_slope, cfg_.no_cmp,
                                    trace ? &betas : nullptr);
        for (size_t j = 0; j < rels.size(); ++j) {
          mixed[k][rels[j]] = hs[j];
          if (trace) trace->beta[b][k][rels[j]] = std::move(betas[j]);
        }
      }
    }

    for (size_t r = 0; r < nr; ++r) {
      if (!mixed[0][r].defined()) {
        h_node[r] = Tensor();
        continue;
      }
      std::vector<Tensor> parts;
      for (size_t k = 0; k < cfg_.heads; ++k) parts.push_back(mixed[k][r]);
      h_node[r] = concat_heads(parts);
    }

    for (size_t k = 0; k < cfg_.heads; ++k)
      for (size_t r = 0; r < nr; ++r)
        h_rel[k][r] = relation_update(h_rel[k][r], layer_p[b][k].upd_w[r],
                                      layer_p[b][k].upd_b[r]);
  }

  // head-concatenated final relation representations
  std::vector<Tensor> rel_cat(nr);
  for (size_t r = 0; r < nr; ++r) {
    std::vector<Tensor> parts;
    for (size_t k = 0; k < cfg_.heads; ++k) parts.push_back(h_rel[k][r]);
    rel_cat[r] = concat_heads(parts);
  }

  std::vector<Tensor> fused(nt);
  for (size_t t = 0; t < nt; ++t) {
    if (chain.node_sets.back()[t].empty()) continue;
    require(!by_dst_[t].empty(), "fuse: no relations target type " + type_names_[t]);
    const auto& rels = by_dst_[t];
    std::vector<Tensor> hs, rs;
    for (size_t r : rels) {
      hs.push_back(h_node[r]);
      rs.push_back(rel_cat[r]);
    }
    std::vector<Tensor> parts(cfg_.heads);
    for (size_t k = 0; k < cfg_.heads; ++k) {
      std::vector<Tensor> vs, es;
      for (size_t r : rels) {
        vs.push_back(fuse_p[k].v[r]);
        es.push_back(fuse_p[k].e[r]);
      }
      parts[k] = fuse_relations(hs, rs, vs, es, cfg_.leaky_slope, cfg_.no_rrf,
                                trace ? &trace->gamma[k][t] : nullptr);
    }
    fused[t] = concat_heads(parts);
  }
  return fused;
}

Tensor Model::classify(const Tensor& fused) const {
  require(cls_w.defined(), "classify: model has no classifier head");
  return add_row_bias(matmul(fused, cls_w), cls_b);
}

std::vector<std::vector<double>> Model::state_values() const {
  std::vector<std::vector<double>> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.values());
  return out;
}

void Model::load_values(const std::vector<std::vector<double>>& values) {
  require(values.size() == params_.size(), "load_values: tensor count mismatch");
  for (size_t i = 0; i < params_.size(); ++i) {
    require(values[i].size() == params_[i].size(), "load_values: shape mismatch");
    params_[i].mut_values() = values[i];
  }
}

}  // namespace relgraph
