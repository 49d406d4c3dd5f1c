// Small builders shared by the test files. Unlike support.hpp these call into
// the library.
#pragma once

#include <cmath>
#include <functional>
#include <string>

#include "ctg/error.hpp"
#include "ctg/explain.hpp"
#include "ctg/models.hpp"

namespace fixture {

/// Kind of the ctg::Error thrown by `f`, or "" when it returns normally.
inline std::string error_kind(const std::function<void()>& f) {
  try {
    f();
  } catch (const ctg::Error& e) {
    return e.kind();
  }
  return "";
}

inline ctg::ModelConfig small_config(ctg::ModelType t, std::uint64_t seed = 1) {
  ctg::ModelConfig cfg;
  cfg.type = t;
  cfg.seed = seed;
  cfg.split_seed = seed;
  cfg.hidden_dim = 8;
  cfg.output_dim = 6;
  cfg.anchor_count = 16;
  return cfg;
}

/// BCE over a fixed set of scored pairs.
inline ctg::nd::Tensor pair_loss(const ctg::nd::Tensor& z, const std::vector<std::size_t>& us,
                                 const std::vector<std::size_t>& vs, const ctg::nd::Matrix& labels) {
  namespace nd = ctg::nd;
  const auto logits = nd::sum_cols(nd::mul(nd::row_gather(z, us), nd::row_gather(z, vs)));
  return nd::binary_cross_entropy_with_logits(logits, nd::constant(labels));
}

/// Untrained checkpoint for a context, with anchors drawn at epoch 0.
inline ctg::ModelCheckpoint fresh_checkpoint(const ctg::ModelConfig& cfg, const ctg::GraphContext& ctx) {
  ctg::ModelCheckpoint ck;
  ck.config = cfg;
  ck.weights = ctg::init_weights(cfg, ctx.features.dim());
  if (cfg.type == ctg::ModelType::pgnn)
    for (const auto& c : ctx.components) {
      std::vector<std::int64_t> ids;
      for (auto a : ctg::sample_anchors(c, cfg.anchor_count, cfg.seed, 0).nodes) ids.push_back(ctx.retained.node(a).id);
      ck.anchors.push_back(ids);
    }
  return ck;
}

/// Tabular pair dataset with a planted decision rule:
/// linked = same_attr[city] AND common_neighbors >= 1. The remaining columns
/// are noise the rule ignores.
struct Planted {
  ctg::PairDataset ds;
  std::size_t city = 0, common = 1;

  static int rule(std::span<const double> r) { return r[0] == 1.0 && r[1] >= 1.0 ? 1 : 0; }
};

inline Planted planted_dataset(std::uint64_t seed, std::size_t rows = 2000) {
  Planted p;
  p.ds.feature_names = {"same_attr[city]", "common_neighbors", "jaccard", "same_attr[job]", "degree_sum"};
  ctg::Rng rng(seed);
  for (std::size_t i = 0; i < rows; ++i) {
    std::vector<double> r(5);
    r[0] = rng.bernoulli(0.5) ? 1.0 : 0.0;
    r[1] = rng.bernoulli(0.5) ? 0.0 : static_cast<double>(1 + rng.uniform_index(4));
    r[2] = rng.uniform(0.0, 1.0);
    r[3] = rng.bernoulli(0.3) ? 1.0 : 0.0;
    r[4] = static_cast<double>(2 + rng.uniform_index(20));
    p.ds.labels.push_back(Planted::rule(r));
    p.ds.rows.push_back(std::move(r));
  }
  ctg::finalize_dataset(p.ds);
  return p;
}

/// Graph where the score of the non-adjacent pair (u, v) flows through one
/// bridge node: u - bridge - v. Only the bridge carries role=bridge, and a
/// hand-built GCN turns that slot into a channel shared by u and v. Decoy
/// neighbors of u are side=left, those of v side=right, and the model maps the
/// two sides onto opposite signs of a second output channel. The decoys are
/// leaves; an unlabeled random tree hangs off the bridge. Within two hops of
/// u and v every edge other than the two bridge edges either feeds a decoy or
/// dilutes the bridge, so each one pulls the score down.
struct Motif {
  ctg::PropertyGraph graph;
  ctg::ModelConfig config;
  ctg::GraphContext ctx;
  ctg::ModelCheckpoint checkpoint;
  ctg::NodeIndex u = 0, v = 0, bridge = 0;
  std::size_t bridge_slot = 0;
};

inline Motif planted_motif(std::uint64_t seed, std::size_t decoys = 3, std::size_t tail = 12) {
  Motif m;
  ctg::Rng rng(seed);
  const std::size_t n = 3 + 2 * decoys + tail;
  std::vector<ctg::PersonNode> nodes(n);
  std::vector<std::size_t> parent(n, 2);
  for (std::size_t i = 3 + 2 * decoys + 1; i < n; ++i) {
    const auto pick = rng.uniform_index(i - (3 + 2 * decoys) + 1);
    parent[i] = pick == 0 ? 2 : 3 + 2 * decoys + pick - 1;
  }
  for (std::size_t i = 0; i < n; ++i) {
    nodes[i].id = static_cast<std::int64_t>(10 + i);
    nodes[i].attrs["role"] = i == 2 ? "bridge" : "plain";
    if (i >= 3 && i < 3 + 2 * decoys) nodes[i].attrs["side"] = i < 3 + decoys ? "left" : "right";
  }
  std::vector<ctg::ContactEdge> edges;
  const auto link = [&](std::size_t a, std::size_t b) {
    edges.push_back({static_cast<ctg::NodeIndex>(a), static_cast<ctg::NodeIndex>(b), "contact", std::nullopt});
  };
  link(0, 2);
  link(2, 1);
  for (std::size_t d = 0; d < decoys; ++d) {
    link(0, 3 + d);
    link(1, 3 + decoys + d);
  }
  for (std::size_t i = 3 + 2 * decoys; i < n; ++i) link(i, parent[i]);
  m.graph = ctg::PropertyGraph(std::move(nodes), std::move(edges));
  m.u = 0;
  m.v = 1;
  m.bridge = 2;

  m.config = small_config(ctg::ModelType::gcn, seed);
  m.config.hidden_dim = 3;
  m.config.output_dim = 2;
  m.ctx = ctg::build_context(m.graph, m.config, false);
  const auto hd = m.ctx.features.hash_dim;
  m.bridge_slot = ctg::attribute_slot("role", "bridge", hd);

  ctg::GcnModel w{ctg::nd::Matrix(m.ctx.features.dim(), 3), ctg::nd::Matrix(3, 2)};
  w.w0(m.bridge_slot, 0) = 1.0;
  w.w0(ctg::attribute_slot("side", "left", hd), 1) = 1.0;
  w.w0(ctg::attribute_slot("side", "right", hd), 2) = 1.0;
  w.w1(0, 0) = 1.0;
  w.w1(1, 1) = 1.0;
  w.w1(2, 1) = -1.0;
  m.checkpoint.config = m.config;
  m.checkpoint.weights = w;
  // Scale both channels so the bridge contributes +1.5 and the decoys -0.5 to
  // the unmasked logit: the explainer then works away from saturation.
  const auto emb = ctg::embed(m.checkpoint, m.ctx);
  const double bridge_dot = emb.row(m.u)[0] * emb.row(m.v)[0];
  const double decoy_dot = emb.row(m.u)[1] * emb.row(m.v)[1];
  auto& out = std::get<ctg::GcnModel>(m.checkpoint.weights).w1;
  out(0, 0) = std::sqrt(1.5 / bridge_dot);
  if (decoy_dot < 0) {
    out(1, 1) = std::sqrt(0.5 / -decoy_dot);
    out(2, 1) = -out(1, 1);
  }
  return m;
}

}  // namespace fixture
