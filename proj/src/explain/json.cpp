#include "ctg/explain.hpp"

namespace ctg {

using json = nlohmann::ordered_json;

json rule_json(const AnchorRule& r) {
  json preds = json::array();
  for (const auto& p : r.predicates) {
    json j{{"feature", p.name}, {"relation", to_string(p.relation)}};
    if (p.relation == Relation::in_bin) {
      j["bin"] = p.bin;
      j["bin_edges"] = p.edges;
    } else {
      j["threshold"] = p.threshold;
    }
    j["text"] = p.render();
    preds.push_back(std::move(j));
  }
  json j{{"predicates", std::move(preds)},
         {"prediction", r.predicted ? "linked" : "not linked"},
         {"precision", r.precision},
         {"precision_lower_bound", r.precision_lower},
         {"coverage", r.coverage},
         {"samples", r.samples},
         {"total_samples", r.total_samples},
         {"below_target", r.below_target}};
  if (!r.feature_subset.empty()) j["feature_subset"] = r.feature_subset;
  j["sentence"] = r.render();
  return j;
}

json mask_json(const MaskExplanation& me, const GraphContext& ctx, std::size_t top) {
  const auto id = [&](NodeIndex i) { return ctx.retained.node(i).id; };
  json nodes = json::array();
  for (auto n : me.nodes) nodes.push_back(id(n));
  json edges = json::array();
  for (std::size_t e = 0; e < me.edges.size(); ++e)
    edges.push_back({{"src", id(me.edge_nodes[e].first)}, {"dst", id(me.edge_nodes[e].second)}, {"mask", me.edge_mask[e]}});
  json features = json::array();
  for (std::size_t f = 0; f < me.feature_mask.size(); ++f)
    features.push_back({{"slot", f}, {"name", me.feature_names[f]}, {"mask", me.feature_mask[f]}});
  json top_edges = json::array(), top_features = json::array();
  if (!me.edges.empty())
    for (auto e : top_k(me, top, MaskKind::edges, ctx))
      top_edges.push_back({{"src", id(me.edge_nodes[e].first)}, {"dst", id(me.edge_nodes[e].second)}, {"mask", me.edge_mask[e]}});
  if (!me.feature_mask.empty())
    for (auto f : top_k(me, top, MaskKind::features, ctx))
      top_features.push_back({{"slot", f}, {"name", me.feature_names[f]}, {"mask", me.feature_mask[f]}});
  return {{"u", id(me.u)},
          {"v", id(me.v)},
          {"original_score", me.original_score},
          {"masked_score", me.masked_score},
          {"subgraph_nodes", std::move(nodes)},
          {"edge_mask", std::move(edges)},
          {"feature_mask", std::move(features)},
          {"top_edges", std::move(top_edges)},
          {"top_features", std::move(top_features)},
          {"loss_history", me.loss_history},
          {"dot", mask_dot(me, ctx)}};
}

json paths_json(const PropertyGraph& g, const RankedPaths& rp) {
  json paths = json::array();
  for (const auto& r : rp.paths) {
    json ids = json::array();
    for (auto n : r.path.nodes) ids.push_back(g.node(n).id);
    paths.push_back({{"nodes", std::move(ids)},
                     {"etypes", r.path.etypes},
                     {"length", r.path.length()},
                     {"score", r.score.total},
                     {"len_term", r.score.len_term},
                     {"specificity_term", r.score.specificity_term},
                     {"rarity_term", r.score.rarity_term},
                     {"rendered", r.rendered}});
  }
  json j{{"u", g.node(rp.u).id}, {"v", g.node(rp.v).id}, {"no_path", rp.no_path()}};
  if (rp.no_path()) j["message"] = "no existing path";
  j["enumerated"] = rp.enumerated;
  j["truncated"] = rp.truncated;
  j["paths"] = std::move(paths);
  return j;
}

}  // namespace ctg
