#include <algorithm>
#include <cmath>
#include <map>
#include <unordered_set>

#include "ctg/error.hpp"
#include "ctg/graph.hpp"

namespace ctg {

ComponentIndex connected_components(const PropertyGraph& g, std::size_t min_size) {
  constexpr auto kUnset = static_cast<std::uint32_t>(-1);
  ComponentIndex ci;
  ci.component_of.assign(g.node_count(), kUnset);
  std::vector<NodeIndex> stack;
  for (NodeIndex s = 0; s < g.node_count(); ++s) {
    if (ci.component_of[s] != kUnset) continue;
    const auto c = static_cast<std::uint32_t>(ci.sizes.size());
    std::vector<NodeIndex> members;
    ci.component_of[s] = c;
    stack.push_back(s);
    while (!stack.empty()) {
      const auto u = stack.back();
      stack.pop_back();
      members.push_back(u);
      for (auto v : g.neighbors(u)) {
        if (ci.component_of[v] != kUnset) continue;
        ci.component_of[v] = c;
        stack.push_back(v);
      }
    }
    std::sort(members.begin(), members.end());
    ci.sizes.push_back(members.size());
    if (members.size() >= min_size) ci.retained.push_back(c);
    ci.members.push_back(std::move(members));
  }
  return ci;
}

DistanceIndex::DistanceIndex(const PropertyGraph& g, int cutoff) : cutoff_(cutoff) {
  require(cutoff >= 1, "invalid_argument", "distance cutoff must be >= 1");
  require(cutoff < 255, "invalid_argument", "distance cutoff must be < 255");
  const auto n = g.node_count();
  offsets_.assign(n + 1, 0);
  std::vector<int> depth(n, -1);
  std::vector<NodeIndex> frontier, next, touched;
  std::vector<std::pair<NodeIndex, std::uint8_t>> row;
  for (NodeIndex s = 0; s < n; ++s) {
    row.clear();
    touched.clear();
    frontier.assign(1, s);
    depth[s] = 0;
    touched.push_back(s);
    for (int d = 1; d <= cutoff && !frontier.empty(); ++d) {
      next.clear();
      for (auto u : frontier)
        for (auto v : g.neighbors(u))
          if (depth[v] < 0) {
            depth[v] = d;
            touched.push_back(v);
            next.push_back(v);
          }
      std::swap(frontier, next);
    }
    for (auto v : touched) row.emplace_back(v, static_cast<std::uint8_t>(depth[v]));
    std::sort(row.begin(), row.end());
    for (auto v : touched) depth[v] = -1;
    entries_.insert(entries_.end(), row.begin(), row.end());
    offsets_[s + 1] = entries_.size();
  }
}

std::optional<int> DistanceIndex::distance(NodeIndex u, NodeIndex v) const {
  const auto r = row(u);
  auto it = std::lower_bound(r.begin(), r.end(), v, [](const auto& e, NodeIndex x) { return e.first < x; });
  if (it == r.end() || it->first != v) return std::nullopt;
  return it->second;
}

int DistanceIndex::capped(NodeIndex u, NodeIndex v) const { return distance(u, v).value_or(cutoff_ + 1); }

DistanceIndex truncated_apsp(const PropertyGraph& g, int cutoff) { return DistanceIndex(g, cutoff); }

NodeIndex sample_negative(const PropertyGraph& g, NodeIndex u, std::span<const NodeIndex> candidates, Rng& rng) {
  const std::size_t budget = 10 * std::max<std::size_t>(candidates.size(), 1);
  for (std::size_t attempt = 0; attempt < budget; ++attempt) {
    const auto w = candidates[rng.uniform_index(candidates.size())];
    if (w != u && !g.adjacent(u, w)) return w;
  }
  fail("degenerate_graph", "node " + std::to_string(g.node(u).id) +
                               " has no unconnected partner after bounded rejection sampling");
}

LinkSplit split_links(const PropertyGraph& g, double holdout_frac, std::uint64_t seed) {
  require(holdout_frac > 0.0 && holdout_frac < 1.0, "invalid_argument", "holdout fraction must be in (0, 1)");
  auto pairs = g.unique_pairs();
  require(pairs.size() >= 10, "invalid_argument", "split_links needs at least 10 edges");

  Rng rng(derive_seed(seed, {0x5111u}));
  const auto n_test = static_cast<std::size_t>(std::ceil(holdout_frac * static_cast<double>(pairs.size()) - 1e-9));
  std::vector<std::size_t> order(pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order.begin(), order.end());

  LinkSplit split;
  split.seed = seed;
  std::vector<bool> held(pairs.size(), false);
  for (std::size_t i = 0; i < n_test; ++i) held[order[i]] = true;
  for (std::size_t i = 0; i < n_test; ++i) split.test_pos.push_back(pairs[order[i]]);
  for (std::size_t i = 0; i < pairs.size(); ++i)
    if (!held[i]) split.train_edges.push_back(pairs[i]);

  std::vector<NodeIndex> all(g.node_count());
  for (NodeIndex i = 0; i < all.size(); ++i) all[i] = i;
  for (auto [u, v] : split.test_pos) split.test_neg.emplace_back(u, sample_negative(g, u, all, rng));
  return split;
}

// --- pair features ----------------------------------------------------------

double FeatureVector::at(std::string_view name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return values[i];
  fail("invalid_argument", "no feature named " + std::string(name));
}

std::vector<std::string> default_top_attr_keys(const PropertyGraph& g, std::size_t top) {
  std::map<std::string, std::size_t> freq;
  for (const auto& n : g.nodes())
    for (const auto& [k, v] : n.attrs) ++freq[k];
  std::vector<std::pair<std::string, std::size_t>> ranked(freq.begin(), freq.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> keys;
  for (std::size_t i = 0; i < ranked.size() && i < top; ++i) keys.push_back(ranked[i].first);
  return keys;
}

std::vector<std::string> pair_feature_names(std::span<const std::string> top_attr_keys) {
  std::vector<std::string> names = {"common_neighbors", "jaccard",    "adamic_adar", "preferential_attachment",
                                    "min_degree",       "max_degree", "dist_capped"};
  for (const auto& k : top_attr_keys) names.push_back("same_attr[" + k + "]");
  return names;
}

FeatureVector pair_features(const PropertyGraph& g, const DistanceIndex& d, NodeIndex u, NodeIndex v,
                            std::span<const std::string> top_attr_keys) {
  require(u < g.node_count() && v < g.node_count(), "invalid_argument", "pair_features: node out of range");
  require(u != v, "invalid_argument", "pair_features requires two distinct nodes");

  const auto nu = g.neighbors(u);
  const auto nv = g.neighbors(v);
  std::size_t common = 0;
  double adamic_adar = 0.0;
  // Both lists are sorted; merge-walk for the intersection.
  for (auto a = nu.begin(), b = nv.begin(); a != nu.end() && b != nv.end();) {
    if (*a < *b) {
      ++a;
    } else if (*b < *a) {
      ++b;
    } else {
      ++common;
      const auto deg = g.degree(*a);
      if (deg > 1) adamic_adar += 1.0 / std::log(static_cast<double>(deg));
      ++a;
      ++b;
    }
  }
  const auto uni = nu.size() + nv.size() - common;
  const double du = static_cast<double>(nu.size());
  const double dv = static_cast<double>(nv.size());

  FeatureVector f;
  f.names = pair_feature_names(top_attr_keys);
  f.values = {static_cast<double>(common),
              uni == 0 ? 0.0 : static_cast<double>(common) / static_cast<double>(uni),
              adamic_adar,
              du * dv,
              std::min(du, dv),
              std::max(du, dv),
              static_cast<double>(d.capped(u, v))};
  for (const auto& k : top_attr_keys) {
    const auto* a = g.attr(u, k);
    const auto* b = g.attr(v, k);
    f.values.push_back(a && b && *a == *b ? 1.0 : 0.0);
  }
  return f;
}

}  // namespace ctg
