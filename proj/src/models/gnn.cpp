#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "ctg/error.hpp"
#include "ctg/models.hpp"

namespace ctg {

using nd::Matrix;
using nd::Tensor;

ModelWeights init_weights(const ModelConfig& cfg, std::size_t input_dim) {
  nd::Initializer init(derive_seed(cfg.seed, {0x3e1u}));
  if (cfg.type == ModelType::gcn) return GcnModel{init.glorot(input_dim, cfg.hidden_dim), init.glorot(cfg.hidden_dim, cfg.output_dim)};
  return PgnnModel{init.glorot(2 * input_dim, cfg.hidden_dim), init.glorot(2 * cfg.hidden_dim, 1)};
}

std::vector<Matrix*> parameters(ModelWeights& w) {
  if (auto* g = std::get_if<GcnModel>(&w)) return {&g->w0, &g->w1};
  auto& p = std::get<PgnnModel>(w);
  return {&p.w_hidden, &p.w_out};
}

std::vector<const Matrix*> parameters(const ModelWeights& w) {
  if (const auto* g = std::get_if<GcnModel>(&w)) return {&g->w0, &g->w1};
  const auto& p = std::get<PgnnModel>(w);
  return {&p.w_hidden, &p.w_out};
}

// --- GCN -----------------------------------------------------------------------

Tensor gcn_forward(const Tensor& w0, const Tensor& w1, const Tensor& norm_adj, const Tensor& x) {
  if (x.cols() != w0.rows() || w0.cols() != w1.rows() || norm_adj.rows() != x.rows())
    fail("shape_error", "gcn_forward: dimension mismatch X" + x.value().shape_string() + " W0" +
                            w0.value().shape_string() + " W1" + w1.value().shape_string() + " S" +
                            norm_adj.value().shape_string());
  const auto h = nd::relu(nd::matmul(norm_adj, nd::matmul(x, w0)));
  return nd::matmul(norm_adj, nd::matmul(h, w1));
}

Matrix gcn_embed(const GcnModel& m, const ComponentView& c) {
  require(c.norm_adj.rows() == c.size(), "invalid_argument", "component has no cached normalized adjacency");
  return gcn_forward(nd::constant(m.w0), nd::constant(m.w1), nd::constant(c.norm_adj), nd::constant(c.features))
      .value();
}

// --- P-GNN ---------------------------------------------------------------------

AnchorSet sample_anchors(const ComponentView& c, std::size_t k, std::uint64_t seed, std::uint64_t epoch) {
  require(c.size() > 0, "invalid_argument", "sample_anchors: empty component");
  const auto K = std::min(k, c.size());
  std::vector<NodeIndex> pool = c.nodes;
  Rng rng(derive_seed(seed, {0xa4c0u, epoch, c.nodes.front(), c.size()}));
  // Partial Fisher-Yates: the first K slots are a uniform K-subset.
  for (std::size_t i = 0; i < K; ++i) {
    const auto j = i + rng.uniform_index(pool.size() - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(K);
  return {std::move(pool), seed};
}

Matrix position_weights(const ComponentView& c, const DistanceIndex& d, const AnchorSet& anchors) {
  Matrix s(c.size(), anchors.nodes.size());
  for (std::size_t v = 0; v < c.size(); ++v)
    for (std::size_t k = 0; k < anchors.nodes.size(); ++k)
      if (auto dist = d.distance(c.nodes[v], anchors.nodes[k])) s(v, k) = 1.0 / (*dist + 1.0);
  return s;
}

std::vector<std::size_t> local_anchor_rows(const GraphContext& ctx, std::size_t component, const AnchorSet& anchors) {
  std::vector<std::size_t> rows;
  rows.reserve(anchors.nodes.size());
  for (auto a : anchors.nodes) {
    if (a >= ctx.node_count() || ctx.component_of[a] != component)
      fail("invalid_argument", "anchor node " + std::to_string(a) + " is outside component " + std::to_string(component));
    rows.push_back(ctx.local_index[a]);
  }
  return rows;
}

Tensor pgnn_forward(const Tensor& w_hidden, const Tensor& w_out, const Tensor& x,
                    std::span<const std::size_t> anchor_rows, const Tensor& s) {
  const auto n = x.rows(), d = x.cols(), K = s.cols();
  const auto dh = w_hidden.cols();
  if (w_hidden.rows() != 2 * d || w_out.rows() != 2 * dh || w_out.cols() != 1 || s.rows() != n ||
      anchor_rows.size() != K || K == 0)
    fail("shape_error", "pgnn_forward: dimension mismatch X" + x.value().shape_string() + " W_hidden" +
                            w_hidden.value().shape_string() + " w_out" + w_out.value().shape_string() + " S" +
                            s.value().shape_string());

  std::vector<std::size_t> top(d), bottom(d), out_top(dh), out_bottom(dh);
  std::iota(top.begin(), top.end(), 0);
  std::iota(bottom.begin(), bottom.end(), d);
  std::iota(out_top.begin(), out_top.end(), 0);
  std::iota(out_bottom.begin(), out_bottom.end(), dh);

  // concat(x_v, x_u) W = x_v W_top + x_u W_bottom, so the mean over anchors
  // splits into a self term scaled by mean_k s_vk and an S-weighted anchor term.
  const double inv_k = 1.0 / static_cast<double>(K);
  const auto self_part = nd::matmul(x, nd::row_gather(w_hidden, top));
  const auto anchor_part = nd::matmul(nd::row_gather(x, anchor_rows), nd::row_gather(w_hidden, bottom));
  const auto s_mean = nd::scale(nd::sum_cols(s), inv_k);
  const auto self_term = nd::mul(self_part, nd::matmul(s_mean, nd::constant(Matrix(1, dh, 1.0))));
  const auto anchor_term = nd::scale(nd::matmul(s, anchor_part), inv_k);
  const auto h = nd::relu(nd::add(self_term, anchor_term));

  const auto a = nd::matmul(h, nd::row_gather(w_out, out_top));                              // n x 1
  const auto b = nd::matmul(nd::row_gather(h, anchor_rows), nd::row_gather(w_out, out_bottom));  // K x 1
  const auto pre = nd::add(nd::matmul(a, nd::constant(Matrix(1, K, 1.0))),
                           nd::matmul(nd::constant(Matrix(n, 1, 1.0)), nd::transpose(b)));
  return nd::mul(s, pre);
}

Matrix pgnn_embed(const PgnnModel& m, const GraphContext& ctx, std::size_t component, const AnchorSet& anchors) {
  const auto& c = ctx.components.at(component);
  const auto rows = local_anchor_rows(ctx, component, anchors);
  return pgnn_forward(nd::constant(m.w_hidden), nd::constant(m.w_out), nd::constant(c.features), rows,
                      nd::constant(position_weights(c, ctx.distances, anchors)))
      .value();
}

// --- scoring -------------------------------------------------------------------

double link_score(std::span<const double> zu, std::span<const double> zv) {
  const auto n = std::min(zu.size(), zv.size());
  double dot = 0.0;
  for (std::size_t i = 0; i < n; ++i) dot += zu[i] * zv[i];
  if (dot >= 0) return 1.0 / (1.0 + std::exp(-dot));
  const double e = std::exp(dot);
  return e / (1.0 + e);
}

std::span<const double> Embeddings::row(NodeIndex v) const {
  require(ctx != nullptr && v < ctx->node_count(), "invalid_argument", "node " + std::to_string(v) + " not embedded");
  return per_component[ctx->component_of[v]].row_span(ctx->local_index[v]);
}

double Embeddings::score(NodeIndex u, NodeIndex v) const {
  const auto zu = row(u), zv = row(v);
  if (anchor_blocks && ctx->component_of[u] != ctx->component_of[v]) return link_score({}, {});
  return link_score(zu, zv);
}

std::vector<AnchorSet> checkpoint_anchors(const ModelCheckpoint& ckpt, const GraphContext& ctx) {
  require(ckpt.anchors.size() == ctx.components.size(), "incompatible_checkpoint",
          "checkpoint holds anchors for " + std::to_string(ckpt.anchors.size()) + " components, graph has " +
              std::to_string(ctx.components.size()));
  std::vector<AnchorSet> out;
  for (std::size_t c = 0; c < ckpt.anchors.size(); ++c) {
    AnchorSet a;
    a.seed = ckpt.config.seed;
    for (auto id : ckpt.anchors[c]) {
      auto idx = ctx.retained.index_of(id);
      if (!idx || ctx.component_of[*idx] != c)
        fail("incompatible_checkpoint", "checkpoint anchor " + std::to_string(id) + " is not in component " +
                                            std::to_string(c) + " of this graph");
      a.nodes.push_back(*idx);
    }
    out.push_back(std::move(a));
  }
  return out;
}

Embeddings embed(const ModelCheckpoint& ckpt, const GraphContext& ctx) {
  Embeddings e;
  e.ctx = &ctx;
  if (const auto* g = std::get_if<GcnModel>(&ckpt.weights)) {
    require(g->w0.rows() == ctx.features.dim(), "incompatible_checkpoint",
            "checkpoint input dimension does not match graph featurization");
    for (const auto& c : ctx.components) e.per_component.push_back(gcn_embed(*g, c));
  } else {
    const auto& p = std::get<PgnnModel>(ckpt.weights);
    e.anchor_blocks = true;
    require(p.w_hidden.rows() == 2 * ctx.features.dim(), "incompatible_checkpoint",
            "checkpoint input dimension does not match graph featurization");
    const auto anchors = checkpoint_anchors(ckpt, ctx);
    for (std::size_t c = 0; c < ctx.components.size(); ++c) e.per_component.push_back(pgnn_embed(p, ctx, c, anchors[c]));
  }
  return e;
}

// --- masked forward --------------------------------------------------------------

namespace {

// For each (node, anchor) slot within the cutoff, the masked edges on the
// canonical shortest path to the anchor (BFS tree rooted at the anchor, ties
// to the smallest parent index).
std::vector<std::vector<std::size_t>> anchor_path_edges(const GraphContext& ctx, std::size_t component,
                                                        std::span<const std::size_t> anchor_rows,
                                                        const std::map<std::pair<std::size_t, std::size_t>, std::size_t>& masked) {
  const auto& c = ctx.components[component];
  const auto n = c.size(), K = anchor_rows.size();
  const int q = ctx.distances.cutoff();
  std::vector<std::vector<std::size_t>> groups(n * K);
  std::vector<int> depth(n);
  std::vector<std::size_t> parent(n), frontier, next;
  for (std::size_t k = 0; k < K; ++k) {
    std::fill(depth.begin(), depth.end(), -1);
    const auto root = anchor_rows[k];
    depth[root] = 0;
    frontier.assign(1, root);
    for (int d = 1; d <= q && !frontier.empty(); ++d) {
      next.clear();
      for (auto u : frontier)
        for (auto w : ctx.message.neighbors(c.nodes[u])) {
          const auto lw = ctx.local_index[w];
          if (depth[lw] < 0) {
            depth[lw] = d;
            parent[lw] = u;
            next.push_back(lw);
          } else if (depth[lw] == d && u < parent[lw]) {
            parent[lw] = u;
          }
        }
      std::swap(frontier, next);
    }
    for (std::size_t v = 0; v < n; ++v) {
      if (depth[v] <= 0) continue;
      auto& g = groups[v * K + k];
      for (auto cur = v; cur != root; cur = parent[cur]) {
        auto key = std::minmax(cur, parent[cur]);
        if (auto it = masked.find({key.first, key.second}); it != masked.end()) g.push_back(it->second);
      }
    }
  }
  return groups;
}

}  // namespace

Tensor masked_embedding(const ModelCheckpoint& ckpt, const GraphContext& ctx, std::size_t component,
                        const MaskInputs& masks) {
  const auto& c = ctx.components.at(component);
  const auto n = c.size();
  Tensor x = nd::constant(c.features);
  if (masks.has_feature_mask) {
    if (masks.feature_weights.rows() != 1 || masks.feature_weights.cols() != c.features.cols())
      fail("shape_error", "feature mask must be 1 x " + std::to_string(c.features.cols()));
    x = nd::mul(x, nd::matmul(nd::constant(Matrix(n, 1, 1.0)), masks.feature_weights));
  }
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> masked;
  if (masks.has_edge_mask) {
    if (masks.edge_weights.rows() != masks.masked_edges.size() || masks.edge_weights.cols() != 1)
      fail("shape_error", "edge mask must be E x 1 over the masked edges");
    for (std::size_t e = 0; e < masks.masked_edges.size(); ++e) {
      auto [u, v] = masks.masked_edges[e];
      if (u > v) std::swap(u, v);
      if (!std::binary_search(c.edges.begin(), c.edges.end(), std::make_pair(u, v)))
        fail("invalid_argument", "masked edge is not an edge of the component");
      masked[{u, v}] = e;
    }
  }

  if (const auto* g = std::get_if<GcnModel>(&ckpt.weights)) {
    Tensor adj;
    if (masks.has_edge_mask) {
      Matrix fixed = component_adjacency(c);
      for (const auto& [uv, e] : masked) {
        fixed(uv.first, uv.second) = 0.0;
        fixed(uv.second, uv.first) = 0.0;
      }
      adj = nd::add(nd::constant(std::move(fixed)), nd::scatter_symmetric(masks.edge_weights, masks.masked_edges, n));
    } else {
      adj = nd::constant(component_adjacency(c));
    }
    return gcn_forward(nd::constant(g->w0), nd::constant(g->w1), normalized_adjacency(adj), x);
  }

  const auto& p = std::get<PgnnModel>(ckpt.weights);
  const auto anchors = checkpoint_anchors(ckpt, ctx);
  const auto rows = local_anchor_rows(ctx, component, anchors[component]);
  Tensor s = nd::constant(position_weights(c, ctx.distances, anchors[component]));
  if (masks.has_edge_mask) {
    // Anchor messages are gated by the product of the mask values along the
    // canonical shortest path; the distances themselves stay fixed. Each row
    // is rescaled to its unmasked total weight, as the GCN renormalizes its
    // masked adjacency, so only the relative mask values matter.
    const auto groups = anchor_path_edges(ctx, component, rows, masked);
    const auto gate = nd::reshape(nd::exp(nd::segment_sum(nd::log(masks.edge_weights), groups)), n, rows.size());
    const auto gated = nd::mul(s, gate);
    const auto ratio = nd::div(nd::add_scalar(nd::sum_cols(s), 1e-12), nd::add_scalar(nd::sum_cols(gated), 1e-12));
    s = nd::mul(gated, nd::matmul(ratio, nd::constant(Matrix(1, rows.size(), 1.0))));
  }
  return pgnn_forward(nd::constant(p.w_hidden), nd::constant(p.w_out), x, rows, s);
}

}  // namespace ctg
