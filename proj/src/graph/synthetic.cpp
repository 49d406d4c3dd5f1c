#include <algorithm>
#include <cmath>
#include <numeric>

#include "ctg/error.hpp"
#include "ctg/graph.hpp"

namespace ctg {

std::vector<AttributeSpec> default_attribute_spec() {
  return {
      {"name", {}, {}, "Person ", ""},
      {"email", {}, {}, "user", "@example.org"},
      {"age_band", {"0-39", "40-59", "60+"}, {0.5, 0.3, 0.2}, "", ""},
      {"city",
       {"Austin", "Boston", "Chicago", "Denver", "Houston", "Miami", "Phoenix", "Portland", "Seattle", "Tampa",
        "Tucson", "Raleigh"},
       {},
       "",
       ""},
      {"occupation",
       {"teacher", "nurse", "engineer", "retail", "student", "driver", "chef", "retired"},
       {},
       "",
       ""},
  };
}

namespace {

std::size_t pick_weighted(Rng& rng, const std::vector<double>& cumulative) {
  const double r = rng.uniform01() * cumulative.back();
  auto it = std::upper_bound(cumulative.begin(), cumulative.end(), r);
  return std::min<std::size_t>(static_cast<std::size_t>(it - cumulative.begin()), cumulative.size() - 1);
}

std::vector<std::size_t> component_sizes(std::size_t n, std::size_t c, Rng& rng) {
  std::vector<double> w(c);
  for (auto& x : w) x = 0.5 + rng.uniform01();
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  std::vector<std::size_t> sizes(c);
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < c; ++i) {
    sizes[i] = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(w[i] / total * static_cast<double>(n))));
    assigned += sizes[i];
  }
  // Settle rounding on the largest components first.
  std::vector<std::size_t> order(c);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return sizes[a] > sizes[b]; });
  for (std::size_t k = 0; assigned < n; k = (k + 1) % c, ++assigned) ++sizes[order[k]];
  for (std::size_t k = 0; assigned > n; k = (k + 1) % c)
    if (sizes[order[k]] > 1) {
      --sizes[order[k]];
      --assigned;
    }
  // At least one component must survive the size-10 filter.
  auto& big = sizes[order[0]];
  for (std::size_t k = c; big < 10 && k-- > 1;)
    while (big < 10 && sizes[order[k]] > 1) {
      --sizes[order[k]];
      ++big;
    }
  return sizes;
}

}  // namespace

PropertyGraph generate_synthetic(const SyntheticConfig& cfg) {
  require(cfg.n_components >= 1, "invalid_argument", "need at least one component");
  require(cfg.n_nodes >= cfg.n_components, "invalid_argument", "n_nodes must be >= n_components");
  require(cfg.n_nodes >= 10, "invalid_argument", "n_nodes must be >= 10 (one component of size >= 10)");
  require(cfg.attach_edges >= 1, "invalid_argument", "attach_edges must be >= 1");
  require(cfg.community_size >= 2, "invalid_argument", "community_size must be >= 2");
  require(cfg.in_community_prob >= 0.0 && cfg.in_community_prob <= 1.0, "invalid_argument",
          "in_community_prob must be in [0, 1]");
  require(cfg.affinity_prob >= 0.0 && cfg.affinity_prob <= 1.0, "invalid_argument",
          "affinity_prob must be in [0, 1]");

  const auto attributes = cfg.attributes.empty() ? default_attribute_spec() : cfg.attributes;
  std::vector<std::vector<double>> cumulative;
  for (const auto& a : attributes) {
    require(!a.key.empty(), "invalid_argument", "attribute key must be nonempty");
    require(a.weights.empty() || a.weights.size() == a.values.size(), "invalid_argument",
            "attribute '" + a.key + "': weights and values differ in length");
    std::vector<double> cum;
    double acc = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
      const double w = a.weights.empty() ? 1.0 : a.weights[i];
      require(w >= 0.0, "invalid_argument", "attribute '" + a.key + "': negative weight");
      acc += w;
      cum.push_back(acc);
    }
    require(a.values.empty() || acc > 0.0, "invalid_argument", "attribute '" + a.key + "': zero total weight");
    cumulative.push_back(std::move(cum));
  }

  Rng rng(derive_seed(cfg.seed, {0x5e7u}));
  const auto sizes = component_sizes(cfg.n_nodes, cfg.n_components, rng);

  std::vector<PersonNode> nodes(cfg.n_nodes);
  for (std::size_t i = 0; i < cfg.n_nodes; ++i) {
    nodes[i].id = static_cast<std::int64_t>(i);
    for (std::size_t a = 0; a < attributes.size(); ++a) {
      const auto& spec = attributes[a];
      nodes[i].attrs[spec.key] = spec.values.empty() ? spec.unique_prefix + std::to_string(i) + spec.unique_suffix
                                                     : spec.values[pick_weighted(rng, cumulative[a])];
    }
  }

  std::vector<ContactEdge> edges;
  std::int64_t clock = 1'600'000'000;
  auto add_edge = [&](NodeIndex a, NodeIndex b, std::string etype) {
    edges.push_back({a, b, std::move(etype), clock});
    clock += 60;
  };

  NodeIndex base = 0;
  for (auto size : sizes) {
    const std::size_t n_comm = std::max<std::size_t>(1, (size + cfg.community_size / 2) / cfg.community_size);
    std::vector<std::vector<NodeIndex>> comm_members(n_comm);
    // Edge endpoint lists: uniform draws from these are degree-proportional.
    std::vector<std::vector<NodeIndex>> comm_endpoints(n_comm);
    std::vector<NodeIndex> endpoints;
    std::vector<std::size_t> community(size);

    for (std::size_t local = 0; local < size; ++local) {
      const NodeIndex v = base + static_cast<NodeIndex>(local);
      const std::size_t c = local % n_comm;
      community[local] = c;
      std::vector<NodeIndex> targets;
      const std::size_t m = std::min<std::size_t>(cfg.attach_edges, local);
      for (std::size_t tries = 0; targets.size() < m && tries < 50 * m; ++tries) {
        NodeIndex t;
        const bool own = rng.bernoulli(cfg.in_community_prob) && !comm_members[c].empty();
        if (own) {
          t = comm_endpoints[c].empty() || rng.bernoulli(0.2)
                  ? comm_members[c][rng.uniform_index(comm_members[c].size())]
                  : comm_endpoints[c][rng.uniform_index(comm_endpoints[c].size())];
        } else if (!endpoints.empty()) {
          t = endpoints[rng.uniform_index(endpoints.size())];
        } else {
          t = base + static_cast<NodeIndex>(rng.uniform_index(local));
        }
        if (std::find(targets.begin(), targets.end(), t) == targets.end()) targets.push_back(t);
      }
      for (auto t : targets) {
        add_edge(v, t, rng.bernoulli(0.2) ? "household" : "contact");
        endpoints.push_back(v);
        endpoints.push_back(t);
        comm_endpoints[c].push_back(v);
        const auto tc = community[t - base];
        comm_endpoints[tc].push_back(t);
      }
      comm_members[c].push_back(v);
    }

    // Attribute affinity: people sharing a city meet more often.
    if (!cfg.affinity_key.empty() && size > 2) {
      for (std::size_t local = 0; local < size; ++local) {
        if (!rng.bernoulli(cfg.affinity_prob)) continue;
        const NodeIndex v = base + static_cast<NodeIndex>(local);
        const auto* city = nodes[v].attrs.count(cfg.affinity_key) ? &nodes[v].attrs.at(cfg.affinity_key) : nullptr;
        if (!city) continue;
        const auto& pool = comm_members[community[local]];
        for (int tries = 0; tries < 20; ++tries) {
          const NodeIndex w = pool[rng.uniform_index(pool.size())];
          if (w == v) continue;
          auto it = nodes[w].attrs.find(cfg.affinity_key);
          if (it == nodes[w].attrs.end() || it->second != *city) continue;
          add_edge(v, w, "social");
          break;
        }
      }
    }
    base += static_cast<NodeIndex>(size);
  }

  return PropertyGraph(std::move(nodes), std::move(edges));
}

}  // namespace ctg
