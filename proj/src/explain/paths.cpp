#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "ctg/error.hpp"
#include "ctg/explain.hpp"

namespace ctg {

void PathWeights::validate() const {
  require(length >= 0 && specificity >= 0 && rarity >= 0, "invalid_config", "path weights must be >= 0");
  require(std::abs(length + specificity + rarity - 1.0) < 1e-9, "invalid_config", "path weights must sum to 1");
}

namespace {

struct PathSearch {
  const PropertyGraph& g;
  NodeIndex target;
  std::size_t max_len, cap;
  std::vector<std::vector<NodeIndex>> by_id;  // neighbors sorted by external id, built lazily
  std::vector<bool> built, on_path;
  std::vector<NodeIndex> stack;
  std::vector<Path> out;

  const std::vector<NodeIndex>& sorted_neighbors(NodeIndex a) {
    if (!built[a]) {
      auto nb = g.neighbors(a);
      by_id[a].assign(nb.begin(), nb.end());
      std::sort(by_id[a].begin(), by_id[a].end(), [&](auto x, auto y) { return g.node(x).id < g.node(y).id; });
      built[a] = true;
    }
    return by_id[a];
  }

  void dfs(NodeIndex a) {
    for (auto b : sorted_neighbors(a)) {
      if (out.size() >= cap) return;
      if (on_path[b]) continue;
      if (b == target) {
        Path p;
        p.nodes = stack;
        p.nodes.push_back(b);
        for (std::size_t i = 0; i + 1 < p.nodes.size(); ++i) p.etypes.push_back(g.edge_type(p.nodes[i], p.nodes[i + 1]));
        out.push_back(std::move(p));
        continue;
      }
      if (stack.size() >= max_len) continue;  // extending b would need more than max_len edges
      on_path[b] = true;
      stack.push_back(b);
      dfs(b);
      stack.pop_back();
      on_path[b] = false;
    }
  }
};

}  // namespace

std::vector<Path> enumerate_paths(const PropertyGraph& g, NodeIndex u, NodeIndex v, std::size_t max_len,
                                  std::size_t cap) {
  require(u < g.node_count() && v < g.node_count(), "invalid_argument", "path endpoints must exist");
  require(u != v, "invalid_argument", "path endpoints must differ");
  require(max_len >= 1 && max_len <= 6, "invalid_argument", "max_len must be in [1, 6]");
  require(cap >= 1, "invalid_argument", "path cap must be >= 1");
  PathSearch s{g, v, max_len, cap, {}, {}, {}, {}, {}};
  s.by_id.resize(g.node_count());
  s.built.assign(g.node_count(), false);
  s.on_path.assign(g.node_count(), false);
  s.on_path[u] = true;
  s.stack.push_back(u);
  s.dfs(u);
  return std::move(s.out);
}

PathScore score_path(const PropertyGraph& g, const Path& p, const PathWeights& w) {
  w.validate();
  require(p.length() >= 1 && p.nodes.size() == p.length() + 1, "invalid_argument", "malformed path");
  for (std::size_t i = 0; i + 1 < p.nodes.size(); ++i)
    require(g.adjacent(p.nodes[i], p.nodes[i + 1]), "invalid_argument", "path uses an edge missing from the graph");
  PathScore s;
  s.weights = w;
  s.len_term = 1.0 / static_cast<double>(p.length());
  double log_deg = 0.0;
  const auto inner = p.nodes.size() - 2;
  for (std::size_t i = 1; i + 1 < p.nodes.size(); ++i) log_deg += std::log(static_cast<double>(g.degree(p.nodes[i])));
  s.specificity_term = inner == 0 ? 1.0 : std::exp(-log_deg / static_cast<double>(inner));

  std::map<std::string, std::size_t> freq;
  for (const auto& e : g.edges()) ++freq[e.etype];
  const double total = static_cast<double>(g.edge_count());
  double rarity = 0.0;
  if (total > 1.0) {
    for (const auto& t : p.etypes) {
      const auto it = freq.find(t);
      const double f = it == freq.end() ? 1.0 : static_cast<double>(it->second);
      rarity += std::clamp(-std::log(f / total) / std::log(total), 0.0, 1.0);
    }
    rarity /= static_cast<double>(p.etypes.size());
  }
  s.rarity_term = rarity;
  s.total = w.length * s.len_term + w.specificity * s.specificity_term + w.rarity * s.rarity_term;
  return s;
}

std::string render_path(const PropertyGraph& g, const Path& p, std::string_view display_key) {
  const auto label = [&](NodeIndex i) {
    if (const auto* v = g.attr(i, std::string(display_key))) return *v;
    return std::to_string(g.node(i).id);
  };
  std::string s = label(p.nodes[0]);
  for (std::size_t i = 0; i < p.etypes.size(); ++i) s += " —" + p.etypes[i] + "→ " + label(p.nodes[i + 1]);
  return s;
}

RankedPaths explain_by_paths(const PropertyGraph& g, NodeIndex u, NodeIndex v, const PathsConfig& cfg) {
  cfg.weights.validate();
  require(cfg.top_k >= 1, "invalid_argument", "top_k must be >= 1");
  RankedPaths rp;
  rp.u = u;
  rp.v = v;
  // One path past the cap tells a full enumeration apart from a truncated one.
  auto paths = enumerate_paths(g, u, v, cfg.max_len, cfg.cap + 1);
  rp.truncated = paths.size() > cfg.cap;
  if (rp.truncated) paths.pop_back();
  rp.enumerated = paths.size();
  std::vector<RankedPath> ranked;
  for (auto& p : paths) {
    auto sc = score_path(g, p, cfg.weights);
    ranked.push_back({std::move(p), sc, {}});
  }
  const auto ids = [&](const Path& p) {
    std::vector<std::int64_t> out;
    for (auto n : p.nodes) out.push_back(g.node(n).id);
    return out;
  };
  std::sort(ranked.begin(), ranked.end(), [&](const RankedPath& a, const RankedPath& b) {
    if (a.score.total != b.score.total) return a.score.total > b.score.total;
    return ids(a.path) < ids(b.path);
  });
  if (ranked.size() > cfg.top_k) ranked.resize(cfg.top_k);
  for (auto& r : ranked) r.rendered = render_path(g, r.path, cfg.display_key);
  rp.paths = std::move(ranked);
  return rp;
}

std::string paths_dot(const PropertyGraph& g, const RankedPaths& rp, std::string_view display_key) {
  const auto label = [&](NodeIndex i) {
    std::string s = std::to_string(g.node(i).id);
    if (const auto* v = g.attr(i, std::string(display_key))) s = *v;
    std::string q;
    for (char c : s) {
      if (c == '"' || c == '\\') q += '\\';
      q += c;
    }
    return q;
  };
  std::map<NodeIndex, bool> nodes;
  std::map<std::pair<NodeIndex, NodeIndex>, std::pair<std::string, std::size_t>> edges;
  for (std::size_t r = 0; r < rp.paths.size(); ++r) {
    const auto& p = rp.paths[r].path;
    for (auto n : p.nodes) nodes[n] = true;
    for (std::size_t i = 0; i + 1 < p.nodes.size(); ++i) {
      auto key = std::minmax(p.nodes[i], p.nodes[i + 1]);
      edges.try_emplace({key.first, key.second}, p.etypes[i], r + 1);
    }
  }
  nodes[rp.u] = nodes[rp.v] = true;
  std::string s = "graph paths {\n";
  for (const auto& [n, unused] : nodes) {
    s += "  n" + std::to_string(g.node(n).id) + " [label=\"" + label(n) + "\"";
    if (n == rp.u || n == rp.v) s += ", shape=doublecircle";
    s += "];\n";
  }
  for (const auto& [e, info] : edges)
    s += "  n" + std::to_string(g.node(e.first).id) + " -- n" + std::to_string(g.node(e.second).id) + " [label=\"" +
         info.first + " (rank " + std::to_string(info.second) + ")\"];\n";
  return s + "}\n";
}

}  // namespace ctg
