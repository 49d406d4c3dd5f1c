#include <algorithm>

#include "ctg/error.hpp"
#include "ctg/models.hpp"

namespace ctg {

nd::Matrix component_adjacency(const ComponentView& c) {
  nd::Matrix a(c.size(), c.size());
  for (auto [u, v] : c.edges) {
    a(u, v) = 1.0;
    a(v, u) = 1.0;
  }
  return a;
}

nd::Tensor normalized_adjacency(const nd::Tensor& adjacency) {
  const auto n = adjacency.rows();
  if (adjacency.cols() != n) fail("shape_error", "normalized_adjacency: adjacency must be square");
  nd::Matrix eye(n, n);
  for (std::size_t i = 0; i < n; ++i) eye(i, i) = 1.0;
  const auto deg = nd::add_scalar(nd::sum_cols(adjacency), 1.0);
  const auto dinv = nd::pow(deg, -0.5);
  const auto left = nd::matmul(dinv, nd::constant(nd::Matrix(1, n, 1.0)));
  const auto right = nd::transpose(left);
  return nd::mul(nd::mul(left, nd::add(adjacency, nd::constant(std::move(eye)))), right);
}

GraphContext build_context(const PropertyGraph& g, const ModelConfig& cfg, bool hold_out) {
  const auto ci = connected_components(g, cfg.min_component_size);
  if (ci.retained.empty())
    fail("nothing_to_train", "nothing to train on: no component with at least " +
                                 std::to_string(cfg.min_component_size) + " nodes");
  std::vector<NodeIndex> keep;
  for (auto c : ci.retained) keep.insert(keep.end(), ci.members[c].begin(), ci.members[c].end());
  std::sort(keep.begin(), keep.end());

  GraphContext ctx;
  ctx.retained = g.induced(keep);
  if (hold_out) {
    ctx.split = split_links(ctx.retained, cfg.holdout_frac, cfg.split_seed);
    ctx.message = ctx.retained.without_pairs(ctx.split.test_pos);
  } else {
    ctx.split.seed = cfg.split_seed;
    ctx.split.train_edges = ctx.retained.unique_pairs();
    ctx.message = ctx.retained;
  }
  ctx.features = featurize(ctx.message, cfg.featurize);
  ctx.distances = truncated_apsp(ctx.message, cfg.distance_cutoff);

  // Components of the retained graph; held-out edges may split them in the
  // message graph, which is fine (anchors beyond reach contribute zero).
  const auto parts = connected_components(ctx.retained, 0);
  ctx.component_of.assign(ctx.node_count(), 0);
  ctx.local_index.assign(ctx.node_count(), 0);
  for (std::size_t c = 0; c < parts.count(); ++c) {
    ComponentView view;
    view.nodes = parts.members[c];
    for (std::size_t i = 0; i < view.nodes.size(); ++i) {
      ctx.component_of[view.nodes[i]] = static_cast<std::uint32_t>(c);
      ctx.local_index[view.nodes[i]] = i;
    }
    ctx.components.push_back(std::move(view));
  }
  for (auto& view : ctx.components) {
    for (std::size_t i = 0; i < view.nodes.size(); ++i)
      for (auto w : ctx.message.neighbors(view.nodes[i])) {
        const auto j = ctx.local_index[w];
        if (j > i) view.edges.emplace_back(i, j);
      }
    std::sort(view.edges.begin(), view.edges.end());
    view.features = nd::Matrix(view.size(), ctx.features.dim());
    for (std::size_t i = 0; i < view.nodes.size(); ++i) {
      auto src = ctx.features.x.row_span(view.nodes[i]);
      std::copy(src.begin(), src.end(), view.features.row_span(i).begin());
    }
    if (cfg.type == ModelType::gcn)
      view.norm_adj = normalized_adjacency(nd::constant(component_adjacency(view))).value();
  }
  return ctx;
}

}  // namespace ctg
