#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ctg/rng.hpp"

namespace ctg {

/// Dense 0-based position of a node inside a PropertyGraph. External ids
/// (PersonNode::id) are only used at I/O boundaries.
using NodeIndex = std::uint32_t;
using NodePair = std::pair<NodeIndex, NodeIndex>;

struct PersonNode {
  std::int64_t id = 0;
  std::map<std::string, std::string> attrs;

  bool operator==(const PersonNode&) const = default;
};

struct ContactEdge {
  NodeIndex src = 0;
  NodeIndex dst = 0;
  std::string etype = "contact";
  std::optional<std::int64_t> timestamp;

  bool operator==(const ContactEdge&) const = default;
};

/// Immutable undirected contact graph with string-typed node attributes.
///
/// Edges keep the orientation they were given in, but (u,v) and (v,u) are the
/// same contact. Two nodes may be joined by several edges of distinct types;
/// the adjacency lists are simple (each neighbor once, ascending).
class PropertyGraph {
 public:
  PropertyGraph() = default;

  /// Validates ids and endpoints; drops self loops and exact duplicates.
  /// Throws ctg::Error on duplicate node ids, empty attribute keys, or edge
  /// endpoints out of range.
  PropertyGraph(std::vector<PersonNode> nodes, std::vector<ContactEdge> edges);

  std::size_t node_count() const { return nodes_.size(); }
  std::size_t edge_count() const { return edges_.size(); }
  /// Number of distinct unordered neighbor pairs.
  std::size_t pair_count() const { return adj_targets_.size() / 2; }

  const PersonNode& node(NodeIndex i) const { return nodes_[i]; }
  std::span<const PersonNode> nodes() const { return nodes_; }
  std::span<const ContactEdge> edges() const { return edges_; }

  std::span<const NodeIndex> neighbors(NodeIndex i) const {
    return {adj_targets_.data() + adj_offsets_[i], adj_targets_.data() + adj_offsets_[i + 1]};
  }
  std::size_t degree(NodeIndex i) const { return adj_offsets_[i + 1] - adj_offsets_[i]; }

  bool adjacent(NodeIndex u, NodeIndex v) const;
  std::optional<NodeIndex> index_of(std::int64_t id) const;
  NodeIndex require_index(std::int64_t id) const;

  /// Attribute lookup; nullptr when the node lacks the key.
  const std::string* attr(NodeIndex i, std::string_view key) const;

  /// Lexicographically smallest edge type joining u and v (empty if none).
  std::string edge_type(NodeIndex u, NodeIndex v) const;

  /// Distinct unordered pairs in first-occurrence order of the edge list,
  /// oriented as first seen.
  std::vector<NodePair> unique_pairs() const;

  /// Subgraph on `keep` (ascending order preserved), ids and attrs retained.
  PropertyGraph induced(std::span<const NodeIndex> keep) const;

  /// Copy without any edge joining the listed unordered pairs.
  PropertyGraph without_pairs(std::span<const NodePair> pairs) const;

  std::size_t dropped_self_loops() const { return dropped_self_loops_; }
  std::size_t dropped_duplicates() const { return dropped_duplicates_; }

  bool operator==(const PropertyGraph& o) const { return nodes_ == o.nodes_ && edges_ == o.edges_; }

 private:
  std::vector<PersonNode> nodes_;
  std::vector<ContactEdge> edges_;
  std::vector<std::size_t> adj_offsets_{0};
  std::vector<NodeIndex> adj_targets_;
  std::unordered_map<std::int64_t, NodeIndex> id_to_index_;
  std::size_t dropped_self_loops_ = 0;
  std::size_t dropped_duplicates_ = 0;
};

std::uint64_t pair_key(NodeIndex u, NodeIndex v);

// ---------------------------------------------------------------------------
// I/O

struct IngestReport {
  PropertyGraph graph;
  std::size_t self_loop_warnings = 0;
  std::size_t duplicate_edges = 0;
};

/// Node JSONL: {"id": int, "attrs": {...}}; edge JSONL: {"src", "dst",
/// "etype", "ts"?}. Malformed lines raise an error naming the file and line.
IngestReport ingest_jsonl(const std::filesystem::path& nodes_path,
                          const std::filesystem::path& edges_path);

void write_jsonl(const PropertyGraph& g, const std::filesystem::path& nodes_path,
                 const std::filesystem::path& edges_path);

/// Compact binary container ("G.bin"); deterministic byte layout.
std::string encode_graph(const PropertyGraph& g);
PropertyGraph decode_graph(std::string_view bytes);
void save_graph(const PropertyGraph& g, const std::filesystem::path& path);
PropertyGraph load_graph(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Synthetic data

struct AttributeSpec {
  std::string key;
  /// Categorical values and sampling weights; when empty the attribute is a
  /// per-node unique identifier `prefix + index` (names, e-mails).
  std::vector<std::string> values;
  std::vector<double> weights;
  std::string unique_prefix;
  std::string unique_suffix;
};

struct SyntheticConfig {
  std::size_t n_nodes = 100;
  std::size_t n_components = 1;
  std::uint64_t seed = 0;
  std::vector<AttributeSpec> attributes;  ///< defaults when empty
  std::size_t community_size = 16;        ///< mean community size inside a component
  std::size_t attach_edges = 2;           ///< preferential-attachment edges per new node
  double in_community_prob = 0.85;        ///< attachment target drawn from own community
  double affinity_prob = 0.25;            ///< per-node chance of a same-city extra edge
  std::string affinity_key = "city";
};

std::vector<AttributeSpec> default_attribute_spec();

PropertyGraph generate_synthetic(const SyntheticConfig& cfg);

// ---------------------------------------------------------------------------
// Structure

struct ComponentIndex {
  std::vector<std::uint32_t> component_of;        ///< per node
  std::vector<std::size_t> sizes;                 ///< per component
  std::vector<std::vector<NodeIndex>> members;    ///< ascending, per component
  std::vector<std::uint32_t> retained;            ///< components with size >= min_size

  std::size_t count() const { return sizes.size(); }
};

ComponentIndex connected_components(const PropertyGraph& g, std::size_t min_size);

/// Truncated all-pairs hop distances: exact up to `cutoff`, "far" beyond.
class DistanceIndex {
 public:
  DistanceIndex() = default;
  DistanceIndex(const PropertyGraph& g, int cutoff);

  int cutoff() const { return cutoff_; }
  std::size_t node_count() const { return offsets_.empty() ? 0 : offsets_.size() - 1; }

  std::optional<int> distance(NodeIndex u, NodeIndex v) const;
  /// Distance with "far" mapped to cutoff + 1.
  int capped(NodeIndex u, NodeIndex v) const;

  /// All (target, distance) entries within the cutoff for `source`, ascending target.
  std::span<const std::pair<NodeIndex, std::uint8_t>> row(NodeIndex source) const {
    return {entries_.data() + offsets_[source], entries_.data() + offsets_[source + 1]};
  }

 private:
  int cutoff_ = 0;
  std::vector<std::size_t> offsets_;
  std::vector<std::pair<NodeIndex, std::uint8_t>> entries_;
};

DistanceIndex truncated_apsp(const PropertyGraph& g, int cutoff);

struct LinkSplit {
  std::vector<NodePair> train_edges;
  std::vector<NodePair> test_pos;
  std::vector<NodePair> test_neg;
  std::uint64_t seed = 0;
};

LinkSplit split_links(const PropertyGraph& g, double holdout_frac, std::uint64_t seed);

/// Negative partner for `u`: uniform over `candidates`, rejecting u itself and
/// anything adjacent in `g`. Throws after 10 * |candidates| failed draws.
NodeIndex sample_negative(const PropertyGraph& g, NodeIndex u, std::span<const NodeIndex> candidates, Rng& rng);

// ---------------------------------------------------------------------------
// Pair features

struct FeatureVector {
  std::vector<std::string> names;
  std::vector<double> values;

  double at(std::string_view name) const;
};

/// The `top` most frequent attribute keys (ties broken by key).
std::vector<std::string> default_top_attr_keys(const PropertyGraph& g, std::size_t top = 10);

std::vector<std::string> pair_feature_names(std::span<const std::string> top_attr_keys);

FeatureVector pair_features(const PropertyGraph& g, const DistanceIndex& d, NodeIndex u, NodeIndex v,
                            std::span<const std::string> top_attr_keys);

}  // namespace ctg
