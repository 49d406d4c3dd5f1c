// Independent reference implementations used by the tests. None of these
// call into the library code they check.
#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "ctg/graph.hpp"
#include "ctg/ndiff.hpp"
#include "ctg/rng.hpp"

namespace oracle {

using ctg::NodeIndex;

/// Adjacency sets built straight from the edge list.
inline std::vector<std::set<NodeIndex>> adjacency(const ctg::PropertyGraph& g) {
  std::vector<std::set<NodeIndex>> adj(g.node_count());
  for (const auto& e : g.edges()) {
    adj[e.src].insert(e.dst);
    adj[e.dst].insert(e.src);
  }
  return adj;
}

/// Hop distances from `s`; -1 when unreachable.
inline std::vector<int> bfs(const std::vector<std::set<NodeIndex>>& adj, NodeIndex s) {
  std::vector<int> d(adj.size(), -1);
  std::deque<NodeIndex> q{s};
  d[s] = 0;
  while (!q.empty()) {
    const auto x = q.front();
    q.pop_front();
    for (auto y : adj[x])
      if (d[y] < 0) {
        d[y] = d[x] + 1;
        q.push_back(y);
      }
  }
  return d;
}

/// Union-find component label per node, labels renumbered by smallest member.
inline std::vector<std::size_t> components(const ctg::PropertyGraph& g) {
  std::vector<std::size_t> parent(g.node_count());
  std::iota(parent.begin(), parent.end(), 0);
  std::function<std::size_t(std::size_t)> find = [&](std::size_t x) {
    return parent[x] == x ? x : parent[x] = find(parent[x]);
  };
  for (const auto& e : g.edges()) parent[find(e.src)] = find(e.dst);
  std::map<std::size_t, std::size_t> label;
  std::vector<std::size_t> out(g.node_count());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto r = find(i);
    if (!label.count(r)) label.emplace(r, label.size());
    out[i] = label[r];
  }
  return out;
}

/// O(n^2) AUC: P(score_pos > score_neg) + 0.5 P(equal).
inline double pairwise_auc(const std::vector<double>& s, const std::vector<int>& y) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (y[i] == 1 && y[j] == 0) {
        den += 1.0;
        num += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
      }
  return num / den;
}

/// All simple u-v paths with at most `max_len` edges, by breadth-first
/// expansion of partial paths. Returned sorted.
inline std::vector<std::vector<NodeIndex>> simple_paths(const std::vector<std::set<NodeIndex>>& adj, NodeIndex u,
                                                        NodeIndex v, std::size_t max_len) {
  std::vector<std::vector<NodeIndex>> out;
  std::deque<std::vector<NodeIndex>> q{{u}};
  while (!q.empty()) {
    auto p = q.front();
    q.pop_front();
    if (p.back() == v) {
      out.push_back(p);
      continue;
    }
    if (p.size() - 1 == max_len) continue;
    for (auto y : adj[p.back()])
      if (std::find(p.begin(), p.end(), y) == p.end()) {
        auto next = p;
        next.push_back(y);
        q.push_back(std::move(next));
      }
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// The same paths in depth-first discovery order, neighbors visited by
/// ascending external id.
inline std::vector<std::vector<NodeIndex>> dfs_paths(const ctg::PropertyGraph& g,
                                                     const std::vector<std::set<NodeIndex>>& adj, NodeIndex u,
                                                     NodeIndex v, std::size_t max_len) {
  std::vector<std::vector<NodeIndex>> out;
  std::vector<NodeIndex> path{u};
  std::function<void()> walk = [&] {
    std::vector<NodeIndex> nb(adj[path.back()].begin(), adj[path.back()].end());
    std::sort(nb.begin(), nb.end(), [&](NodeIndex a, NodeIndex b) { return g.node(a).id < g.node(b).id; });
    for (auto b : nb) {
      if (std::find(path.begin(), path.end(), b) != path.end()) continue;
      path.push_back(b);
      if (b == v)
        out.push_back(path);
      else if (path.size() - 1 < max_len)
        walk();
      path.pop_back();
    }
  };
  walk();
  return out;
}

/// Smallest edge type between a and b, from the raw edge list.
inline std::string min_etype(const ctg::PropertyGraph& g, NodeIndex a, NodeIndex b) {
  std::string best;
  bool found = false;
  for (const auto& e : g.edges())
    if ((e.src == a && e.dst == b) || (e.src == b && e.dst == a))
      if (!found || e.etype < best) {
        best = e.etype;
        found = true;
      }
  return best;
}

/// Random simple graph: `n` nodes, each pair joined with probability p, with
/// edge types drawn from `types` and a categorical "city" attribute.
inline ctg::PropertyGraph random_graph(std::size_t n, double p, std::uint64_t seed,
                                       std::vector<std::string> types = {"contact"}) {
  ctg::Rng rng(seed);
  std::vector<ctg::PersonNode> nodes(n);
  const char* cities[] = {"A", "B", "C"};
  for (std::size_t i = 0; i < n; ++i) {
    nodes[i].id = static_cast<std::int64_t>(100 + i);
    nodes[i].attrs["city"] = cities[rng.uniform_index(3)];
    nodes[i].attrs["name"] = "p" + std::to_string(i);
  }
  std::vector<ctg::ContactEdge> edges;
  for (NodeIndex a = 0; a < n; ++a)
    for (NodeIndex b = a + 1; b < n; ++b)
      if (rng.bernoulli(p)) edges.push_back({a, b, types[rng.uniform_index(types.size())], std::nullopt});
  return ctg::PropertyGraph(std::move(nodes), std::move(edges));
}

inline ctg::PropertyGraph path_graph(std::size_t n) {
  std::vector<ctg::PersonNode> nodes(n);
  for (std::size_t i = 0; i < n; ++i) nodes[i].id = static_cast<std::int64_t>(i);
  std::vector<ctg::ContactEdge> edges;
  for (NodeIndex i = 0; i + 1 < n; ++i) edges.push_back({i, i + 1, "contact", std::nullopt});
  return ctg::PropertyGraph(std::move(nodes), std::move(edges));
}

// --- finite differences -------------------------------------------------------

using ScalarFn = std::function<ctg::nd::Tensor(const std::vector<ctg::nd::Tensor>&)>;

struct GradCheck {
  double max_rel_err = 0.0;
  std::size_t checked = 0;
};

/// Compares tape gradients of `f` (which must return a 1x1 tensor) with
/// central differences, entry by entry. Relative error uses
/// max(|analytic|, |numeric|, floor) as the denominator.
inline GradCheck check_gradients(const ScalarFn& f, std::vector<ctg::nd::Matrix> inputs, double h = 1e-6,
                                 double floor = 1e-3) {
  using namespace ctg::nd;
  std::vector<Matrix> analytic;
  {
    Tape tape;
    std::vector<Tensor> vars;
    for (const auto& m : inputs) vars.push_back(tape.variable(m));
    auto loss = f(vars);
    tape.backward(loss);
    for (const auto& v : vars) analytic.push_back(v.grad());
  }
  const auto eval = [&](const std::vector<Matrix>& in) {
    std::vector<Tensor> cs;
    for (const auto& m : in) cs.push_back(constant(m));
    return f(cs).item();
  };
  GradCheck out;
  for (std::size_t k = 0; k < inputs.size(); ++k)
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      auto plus = inputs, minus = inputs;
      plus[k].data()[i] += h;
      minus[k].data()[i] -= h;
      const double num = (eval(plus) - eval(minus)) / (2 * h);
      const double ana = analytic[k].data()[i];
      const double rel = std::abs(num - ana) / std::max({std::abs(num), std::abs(ana), floor});
      out.max_rel_err = std::max(out.max_rel_err, rel);
      ++out.checked;
    }
  return out;
}

inline ctg::nd::Matrix random_matrix(std::size_t r, std::size_t c, ctg::Rng& rng, double lo = -1.0, double hi = 1.0) {
  ctg::nd::Matrix m(r, c);
  for (auto& x : m.data()) x = rng.uniform(lo, hi);
  return m;
}

/// Fixed random projection that turns any tensor into a scalar loss.
inline ctg::nd::Tensor project(const ctg::nd::Tensor& t, std::uint64_t seed = 7) {
  ctg::Rng rng(seed);
  return ctg::nd::sum(ctg::nd::mul(t, ctg::nd::constant(random_matrix(t.rows(), t.cols(), rng))));
}

}  // namespace oracle
