#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>

#include "ctg/error.hpp"
#include "ctg/explain.hpp"

namespace ctg {

using nd::Matrix;
using nd::Tensor;

void GnnxConfig::validate() const {
  require(hops >= 1, "invalid_config", "explainer hops must be >= 1");
  require(lr > 0.0, "invalid_config", "explainer learning rate must be positive");
  require(lambda_edge >= 0 && lambda_edge_entropy >= 0 && lambda_feat >= 0 && lambda_feat_entropy >= 0,
          "invalid_config", "explainer regularization weights must be >= 0");
}

std::vector<NodeIndex> explanation_subgraph(const GraphContext& ctx, NodeIndex u, NodeIndex v, std::size_t hops) {
  std::vector<int> depth(ctx.node_count(), -1);
  std::vector<NodeIndex> frontier{u}, next;
  if (v != u) frontier.push_back(v);
  for (auto s : frontier) depth[s] = 0;
  std::vector<NodeIndex> out = frontier;
  for (std::size_t d = 1; d <= hops && !frontier.empty(); ++d) {
    next.clear();
    for (auto a : frontier)
      for (auto b : ctx.message.neighbors(a))
        if (depth[b] < 0) {
          depth[b] = static_cast<int>(d);
          next.push_back(b);
          out.push_back(b);
        }
    std::swap(frontier, next);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::string> feature_slot_names(const GraphContext& ctx) {
  const auto& f = ctx.features;
  std::vector<std::set<std::string>> entries(f.hash_dim);
  for (NodeIndex i = 0; i < ctx.message.node_count(); ++i)
    for (const auto& k : f.keys)
      if (const auto* val = ctx.message.attr(i, k)) entries[attribute_slot(k, *val, f.hash_dim)].insert(k + "=" + *val);
  std::vector<std::string> names;
  for (std::size_t s = 0; s < f.hash_dim; ++s) {
    std::string n;
    for (const auto& e : entries[s]) n += (n.empty() ? "" : "|") + e;
    names.push_back(n.empty() ? "slot[" + std::to_string(s) + "]" : n);
  }
  names.push_back("degree");
  return names;
}

namespace {

// Binary entropy of sigmoid(m), written on the logits: log(1 + e^m) - m sigmoid(m).
Tensor logit_entropy(const Tensor& m) {
  return nd::sub(nd::log(nd::add_scalar(nd::exp(m), 1.0)), nd::mul(m, nd::sigmoid(m)));
}

struct MaskLoss {
  Tensor loss;
  Tensor logit;
};

MaskLoss mask_loss(const ModelCheckpoint& ckpt, const GraphContext& ctx, std::size_t comp,
                   const std::vector<std::pair<std::size_t, std::size_t>>& edges, const Tensor& m, const Tensor& f,
                   std::size_t lu, std::size_t lv, const GnnxConfig& cfg) {
  MaskInputs mi;
  mi.masked_edges = edges;
  mi.has_edge_mask = !edges.empty();
  if (mi.has_edge_mask) mi.edge_weights = nd::sigmoid(m);
  mi.has_feature_mask = true;
  mi.feature_weights = nd::sigmoid(f);
  const auto z = masked_embedding(ckpt, ctx, comp, mi);
  const std::size_t iu[] = {lu}, iv[] = {lv};
  const auto logit = nd::sum_cols(nd::mul(nd::row_gather(z, iu), nd::row_gather(z, iv)));
  // -log(masked score) is the logistic loss against label 1.
  auto loss = nd::binary_cross_entropy_with_logits(logit, nd::constant(Matrix(1, 1, 1.0)));
  if (mi.has_edge_mask) {
    const double inv = 1.0 / static_cast<double>(edges.size());
    loss = nd::add(loss, nd::scale(nd::sum(mi.edge_weights), cfg.lambda_edge));
    loss = nd::add(loss, nd::scale(nd::sum(logit_entropy(m)), cfg.lambda_edge_entropy * inv));
  }
  const double inv_f = 1.0 / static_cast<double>(f.cols());
  loss = nd::add(loss, nd::scale(nd::sum(mi.feature_weights), cfg.lambda_feat));
  loss = nd::add(loss, nd::scale(nd::sum(logit_entropy(f)), cfg.lambda_feat_entropy * inv_f));
  return {loss, logit};
}

double sigmoid(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

}  // namespace

MaskExplanation explain_link(const ModelCheckpoint& ckpt, const GraphContext& ctx, NodeIndex u, NodeIndex v,
                             const GnnxConfig& cfg) {
  cfg.validate();
  require(u < ctx.node_count() && v < ctx.node_count(), "invalid_argument", "explained pair references a missing node");
  require(u != v, "invalid_argument", "explained pair needs two distinct nodes");
  if (ctx.component_of[u] != ctx.component_of[v])
    fail("different_components", "nodes " + std::to_string(ctx.retained.node(u).id) + " and " +
                                     std::to_string(ctx.retained.node(v).id) + " lie in different components");
  MaskExplanation me;
  me.u = u;
  me.v = v;
  me.component = ctx.component_of[u];
  const auto& view = ctx.components[me.component];
  const auto lu = ctx.local_index[u], lv = ctx.local_index[v];

  me.nodes = explanation_subgraph(ctx, u, v, cfg.hops);
  std::vector<bool> inside(view.size(), false);
  for (auto n : me.nodes) inside[ctx.local_index[n]] = true;
  for (auto e : view.edges)
    if (inside[e.first] && inside[e.second]) {
      me.edges.push_back(e);
      me.edge_nodes.emplace_back(view.nodes[e.first], view.nodes[e.second]);
    }
  me.feature_names = feature_slot_names(ctx);

  {
    const auto z = masked_embedding(ckpt, ctx, me.component, MaskInputs{});
    me.original_score = link_score(z.value().row_span(lu), z.value().row_span(lv));
  }
  if (me.original_score == 0.0)
    fail("degenerate_model", "the model scores this pair exactly 0; its log is undefined");

  nd::Initializer init(derive_seed(cfg.seed, {0x9e11u}));
  Matrix m = init.normal(me.edges.size(), 1, 0.0, 0.1);
  Matrix f = init.normal(1, ctx.features.dim(), 0.0, 0.1);
  nd::AdamState adam(nd::AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    nd::Tape tape;
    auto tm = tape.variable(m);
    auto tf = tape.variable(f);
    const auto ml = mask_loss(ckpt, ctx, me.component, me.edges, tm, tf, lu, lv, cfg);
    me.loss_history.push_back(ml.loss.item());
    tape.backward(ml.loss);
    if (me.edges.empty()) {
      std::array<Matrix*, 1> params{&f};
      std::array<Matrix, 1> grads{tf.grad()};
      adam_step(params, grads, adam);
    } else {
      std::array<Matrix*, 2> params{&m, &f};
      std::array<Matrix, 2> grads{tm.grad(), tf.grad()};
      adam_step(params, grads, adam);
    }
  }
  const auto final_loss = mask_loss(ckpt, ctx, me.component, me.edges, nd::constant(m), nd::constant(f), lu, lv, cfg);
  me.loss_history.push_back(final_loss.loss.item());
  me.masked_score = sigmoid(final_loss.logit.item());
  for (double x : m.data()) me.edge_mask.push_back(sigmoid(x));
  for (double x : f.data()) me.feature_mask.push_back(sigmoid(x));
  return me;
}

std::vector<std::size_t> top_k(const MaskExplanation& me, std::size_t k, MaskKind kind, const GraphContext& ctx) {
  require(k >= 1, "invalid_argument", "top_k needs k >= 1");
  const auto& values = kind == MaskKind::edges ? me.edge_mask : me.feature_mask;
  std::vector<std::size_t> idx(values.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  const auto edge_key = [&](std::size_t i) {
    const auto a = ctx.retained.node(me.edge_nodes[i].first).id, b = ctx.retained.node(me.edge_nodes[i].second).id;
    return a < b ? std::pair{a, b} : std::pair{b, a};
  };
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (values[a] != values[b]) return values[a] > values[b];
    if (kind == MaskKind::edges) return edge_key(a) < edge_key(b);
    return a < b;
  });
  idx.resize(std::min(k, idx.size()));
  return idx;
}

std::vector<double> pair_feature_importance(const MaskExplanation& me, const GraphContext& ctx,
                                            std::span<const std::string> pair_feature_names) {
  const auto& feat = ctx.features;
  const auto mean_of = [](const std::vector<double>& xs) {
    if (xs.empty()) return 0.0;
    double s = 0.0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
  };
  std::vector<double> incident;
  for (std::size_t e = 0; e < me.edges.size(); ++e) {
    const auto [a, b] = me.edge_nodes[e];
    if (a == me.u || a == me.v || b == me.u || b == me.v) incident.push_back(me.edge_mask[e]);
  }
  const double incident_mean = mean_of(incident), all_mean = mean_of(me.edge_mask);
  const double degree_mask = me.feature_mask.empty() ? 0.0 : me.feature_mask[feat.degree_slot()];

  std::vector<double> out;
  for (const auto& name : pair_feature_names) {
    if (name.starts_with("same_attr[") && name.ends_with("]")) {
      const auto key = name.substr(10, name.size() - 11);
      double imp = 0.0;
      if (std::find(feat.keys.begin(), feat.keys.end(), key) != feat.keys.end()) {
        std::set<std::size_t> slots;
        for (auto n : {me.u, me.v})
          if (const auto* val = ctx.message.attr(n, key)) slots.insert(attribute_slot(key, *val, feat.hash_dim));
        std::vector<double> xs;
        for (auto s : slots) xs.push_back(me.feature_mask[s]);
        imp = mean_of(xs);
      }
      out.push_back(imp);
    } else if (name == "min_degree" || name == "max_degree" || name == "preferential_attachment") {
      out.push_back(degree_mask);
    } else if (name == "common_neighbors" || name == "jaccard" || name == "adamic_adar") {
      out.push_back(incident_mean);
    } else if (name == "dist_capped") {
      out.push_back(all_mean);
    } else {
      out.push_back(0.0);
    }
  }
  return out;
}

namespace {

std::string display(const PropertyGraph& g, NodeIndex i, std::string_view key) {
  if (const auto* v = g.attr(i, std::string(key))) return *v;
  return std::to_string(g.node(i).id);
}

std::string quoted(std::string s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string mask_dot(const MaskExplanation& me, const GraphContext& ctx, std::string_view display_key) {
  std::string s = "graph explanation {\n  node [shape=ellipse];\n";
  for (auto n : me.nodes) {
    s += "  n" + std::to_string(ctx.retained.node(n).id) + " [label=" + quoted(display(ctx.retained, n, display_key));
    if (n == me.u || n == me.v) s += ", shape=doublecircle";
    s += "];\n";
  }
  char buf[96];
  for (std::size_t e = 0; e < me.edges.size(); ++e) {
    const auto [a, b] = me.edge_nodes[e];
    std::snprintf(buf, sizeof buf, " [label=\"%.3f\", penwidth=%.2f];\n", me.edge_mask[e], 0.5 + 4.0 * me.edge_mask[e]);
    s += "  n" + std::to_string(ctx.retained.node(a).id) + " -- n" + std::to_string(ctx.retained.node(b).id) + buf;
  }
  std::snprintf(buf, sizeof buf, " [style=dashed, label=\"predicted %.3f\"];\n", me.original_score);
  s += "  n" + std::to_string(ctx.retained.node(me.u).id) + " -- n" + std::to_string(ctx.retained.node(me.v).id) + buf;
  return s + "}\n";
}

}  // namespace ctg
