#include <algorithm>
#include <unordered_set>

#include "ctg/error.hpp"
#include "ctg/graph.hpp"

namespace ctg {

std::uint64_t pair_key(NodeIndex u, NodeIndex v) {
  if (u > v) std::swap(u, v);
  return (static_cast<std::uint64_t>(u) << 32) | v;
}

PropertyGraph::PropertyGraph(std::vector<PersonNode> nodes, std::vector<ContactEdge> edges)
    : nodes_(std::move(nodes)) {
  id_to_index_.reserve(nodes_.size());
  for (NodeIndex i = 0; i < nodes_.size(); ++i) {
    if (!id_to_index_.emplace(nodes_[i].id, i).second)
      fail("invalid_graph", "duplicate node id " + std::to_string(nodes_[i].id));
    for (const auto& [k, v] : nodes_[i].attrs)
      require(!k.empty(), "invalid_graph", "empty attribute key on node " + std::to_string(nodes_[i].id));
  }

  struct TypedKey {
    std::uint64_t pair;
    std::string etype;
    bool operator==(const TypedKey&) const = default;
  };
  struct TypedKeyHash {
    std::size_t operator()(const TypedKey& k) const {
      return std::hash<std::uint64_t>{}(k.pair) ^ (std::hash<std::string>{}(k.etype) * 31);
    }
  };
  std::unordered_set<TypedKey, TypedKeyHash> seen;
  std::unordered_set<std::uint64_t> seen_pairs;
  std::vector<std::size_t> deg(nodes_.size(), 0);
  edges_.reserve(edges.size());
  for (auto& e : edges) {
    if (e.src >= nodes_.size() || e.dst >= nodes_.size())
      fail("invalid_graph", "edge endpoint out of range");
    if (e.src == e.dst) {
      ++dropped_self_loops_;
      continue;
    }
    const auto key = pair_key(e.src, e.dst);
    if (!seen.insert({key, e.etype}).second) {
      ++dropped_duplicates_;
      continue;
    }
    if (seen_pairs.insert(key).second) {
      ++deg[e.src];
      ++deg[e.dst];
    }
    edges_.push_back(std::move(e));
  }

  adj_offsets_.assign(nodes_.size() + 1, 0);
  for (std::size_t i = 0; i < nodes_.size(); ++i) adj_offsets_[i + 1] = adj_offsets_[i] + deg[i];
  adj_targets_.assign(adj_offsets_.back(), 0);
  std::vector<std::size_t> fill(adj_offsets_.begin(), adj_offsets_.end() - 1);
  seen_pairs.clear();
  for (const auto& e : edges_) {
    if (!seen_pairs.insert(pair_key(e.src, e.dst)).second) continue;
    adj_targets_[fill[e.src]++] = e.dst;
    adj_targets_[fill[e.dst]++] = e.src;
  }
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    std::sort(adj_targets_.begin() + static_cast<std::ptrdiff_t>(adj_offsets_[i]),
              adj_targets_.begin() + static_cast<std::ptrdiff_t>(adj_offsets_[i + 1]));
}

bool PropertyGraph::adjacent(NodeIndex u, NodeIndex v) const {
  if (degree(u) > degree(v)) std::swap(u, v);
  const auto nb = neighbors(u);
  return std::binary_search(nb.begin(), nb.end(), v);
}

std::optional<NodeIndex> PropertyGraph::index_of(std::int64_t id) const {
  auto it = id_to_index_.find(id);
  if (it == id_to_index_.end()) return std::nullopt;
  return it->second;
}

NodeIndex PropertyGraph::require_index(std::int64_t id) const {
  auto idx = index_of(id);
  if (!idx) fail("unknown_node", "unknown node id " + std::to_string(id));
  return *idx;
}

const std::string* PropertyGraph::attr(NodeIndex i, std::string_view key) const {
  const auto& attrs = nodes_[i].attrs;
  auto it = attrs.find(std::string(key));
  return it == attrs.end() ? nullptr : &it->second;
}

std::string PropertyGraph::edge_type(NodeIndex u, NodeIndex v) const {
  std::string best;
  bool found = false;
  const auto key = pair_key(u, v);
  for (const auto& e : edges_) {
    if (pair_key(e.src, e.dst) != key) continue;
    if (!found || e.etype < best) best = e.etype;
    found = true;
  }
  return best;
}

std::vector<NodePair> PropertyGraph::unique_pairs() const {
  std::vector<NodePair> out;
  out.reserve(pair_count());
  std::unordered_set<std::uint64_t> seen;
  for (const auto& e : edges_)
    if (seen.insert(pair_key(e.src, e.dst)).second) out.emplace_back(e.src, e.dst);
  return out;
}

PropertyGraph PropertyGraph::induced(std::span<const NodeIndex> keep) const {
  std::vector<std::int64_t> remap(nodes_.size(), -1);
  std::vector<PersonNode> nodes;
  nodes.reserve(keep.size());
  for (auto i : keep) {
    remap[i] = static_cast<std::int64_t>(nodes.size());
    nodes.push_back(nodes_[i]);
  }
  std::vector<ContactEdge> edges;
  for (const auto& e : edges_) {
    if (remap[e.src] < 0 || remap[e.dst] < 0) continue;
    edges.push_back({static_cast<NodeIndex>(remap[e.src]), static_cast<NodeIndex>(remap[e.dst]), e.etype,
                     e.timestamp});
  }
  return PropertyGraph(std::move(nodes), std::move(edges));
}

PropertyGraph PropertyGraph::without_pairs(std::span<const NodePair> pairs) const {
  std::unordered_set<std::uint64_t> drop;
  for (auto [u, v] : pairs) drop.insert(pair_key(u, v));
  std::vector<ContactEdge> edges;
  edges.reserve(edges_.size());
  for (const auto& e : edges_)
    if (!drop.contains(pair_key(e.src, e.dst))) edges.push_back(e);
  return PropertyGraph(nodes_, std::move(edges));
}

}  // namespace ctg
