#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "ctg/graph.hpp"
#include "ctg/ndiff.hpp"

namespace ctg {

// ---------------------------------------------------------------------------
// Node featurization

struct FeaturizeSpec {
  std::size_t hash_dim = 64;
  /// Attribute keys hashed into the bag-of-attributes; empty means "every
  /// categorical key" (keys with at most `max_cardinality` distinct values).
  std::vector<std::string> include_keys;
  std::size_t max_cardinality = 64;
  /// Keys never featurized, e.g. fields kept on the user's device.
  std::vector<std::string> exclude_keys;
};

struct NodeFeatures {
  nd::Matrix x;                     ///< n x (hash_dim + 1); last column is log(1 + degree)
  std::vector<std::string> keys;    ///< resolved featurized keys
  std::size_t hash_dim = 0;

  std::size_t dim() const { return x.cols(); }
  std::size_t degree_slot() const { return hash_dim; }
};

/// 64-bit FNV-1a; stable across platforms and runs.
std::uint64_t stable_hash(std::string_view s);
std::size_t attribute_slot(std::string_view key, std::string_view value, std::size_t hash_dim);

/// Resolves `include_keys` against the graph (sorted, excludes applied).
std::vector<std::string> featurized_keys(const PropertyGraph& g, const FeaturizeSpec& spec);
NodeFeatures featurize(const PropertyGraph& g, const FeaturizeSpec& spec);

// ---------------------------------------------------------------------------
// Models

enum class ModelType { gcn, pgnn };
std::string to_string(ModelType t);
ModelType parse_model_type(std::string_view s);

struct ModelConfig {
  ModelType type = ModelType::pgnn;
  std::size_t hidden_dim = 32;
  std::size_t output_dim = 32;     ///< GCN embedding width
  std::size_t anchor_count = 64;   ///< P-GNN anchors per component (clamped to component size)
  int distance_cutoff = 3;
  std::uint64_t seed = 0;          ///< weight initialisation and anchor draws
  FeaturizeSpec featurize;
  std::size_t min_component_size = 10;
  double holdout_frac = 0.10;
  std::uint64_t split_seed = 0;
};

struct GcnModel {
  nd::Matrix w0;  ///< d_in x d_h
  nd::Matrix w1;  ///< d_h x d_out
};

struct PgnnModel {
  nd::Matrix w_hidden;  ///< 2 d_in x d_h over concat(self, anchor)
  nd::Matrix w_out;     ///< 2 d_h x 1
};

using ModelWeights = std::variant<GcnModel, PgnnModel>;

ModelWeights init_weights(const ModelConfig& cfg, std::size_t input_dim);
std::vector<nd::Matrix*> parameters(ModelWeights& w);
std::vector<const nd::Matrix*> parameters(const ModelWeights& w);

// ---------------------------------------------------------------------------
// Graph context shared by training, evaluation and the explainers

/// One connected component of the message-passing graph, in local indices.
struct ComponentView {
  std::vector<NodeIndex> nodes;                               ///< ascending context indices
  std::vector<std::pair<std::size_t, std::size_t>> edges;     ///< unique local pairs, u < v, sorted
  nd::Matrix features;                                        ///< local rows of the node features
  nd::Matrix norm_adj;                                        ///< D^-1/2 (A + I) D^-1/2

  std::size_t size() const { return nodes.size(); }
};

/// Everything a model needs to embed a graph: the retained components, the
/// held-out split, the message-passing graph (held-out positives removed),
/// features and truncated distances.
struct GraphContext {
  PropertyGraph retained;
  LinkSplit split;
  PropertyGraph message;
  NodeFeatures features;
  DistanceIndex distances;
  std::vector<ComponentView> components;
  std::vector<std::uint32_t> component_of;  ///< per node
  std::vector<std::size_t> local_index;     ///< per node, row inside its component

  std::size_t node_count() const { return retained.node_count(); }
};

/// Throws "nothing to train on" when no component reaches the minimum size.
/// With `hold_out` false the split is empty and every edge passes messages.
GraphContext build_context(const PropertyGraph& g, const ModelConfig& cfg, bool hold_out = true);

/// Dense 0/1 adjacency of a component.
nd::Matrix component_adjacency(const ComponentView& c);

/// D^-1/2 (A + I) D^-1/2 on a (possibly taped) adjacency. The cached,
/// unmasked matrices go through this same arithmetic.
nd::Tensor normalized_adjacency(const nd::Tensor& adjacency);

// ---------------------------------------------------------------------------
// GCN

/// Z = S relu(S X W0) W1
nd::Tensor gcn_forward(const nd::Tensor& w0, const nd::Tensor& w1, const nd::Tensor& norm_adj, const nd::Tensor& x);
nd::Matrix gcn_embed(const GcnModel& m, const ComponentView& c);

// ---------------------------------------------------------------------------
// P-GNN

struct AnchorSet {
  std::vector<NodeIndex> nodes;  ///< context indices, drawn from one component
  std::uint64_t seed = 0;
};

/// K = min(k, |component|) distinct members, uniform without replacement;
/// deterministic in (component, seed, epoch).
AnchorSet sample_anchors(const ComponentView& c, std::size_t k, std::uint64_t seed, std::uint64_t epoch);

/// s(v, u) = 1 / (dist + 1) within the cutoff, 0 when far. n x K.
nd::Matrix position_weights(const ComponentView& c, const DistanceIndex& d, const AnchorSet& anchors);
std::vector<std::size_t> local_anchor_rows(const GraphContext& ctx, std::size_t component, const AnchorSet& anchors);

/// h_v = relu(mean_k s_vk [x_v, x_uk] W_hidden);  z_v[k] = s_vk [h_v, h_uk] w_out.
/// `anchor_rows` index rows of `x`; `s` is n x K.
nd::Tensor pgnn_forward(const nd::Tensor& w_hidden, const nd::Tensor& w_out, const nd::Tensor& x,
                        std::span<const std::size_t> anchor_rows, const nd::Tensor& s);
nd::Matrix pgnn_embed(const PgnnModel& m, const GraphContext& ctx, std::size_t component, const AnchorSet& anchors);

// ---------------------------------------------------------------------------
// Scoring

double link_score(std::span<const double> zu, std::span<const double> zv);

/// Per-component embeddings of every node in a context.
///
/// P-GNN coordinates belong to the anchors of one component, so nodes of
/// different components occupy disjoint coordinate blocks of one global
/// embedding: their dot product is 0 and the score is exactly 0.5.
struct Embeddings {
  std::vector<nd::Matrix> per_component;
  const GraphContext* ctx = nullptr;
  bool anchor_blocks = false;

  std::span<const double> row(NodeIndex v) const;
  double score(NodeIndex u, NodeIndex v) const;
};

// ---------------------------------------------------------------------------
// Checkpoints

struct ModelCheckpoint {
  static constexpr int kFormatVersion = 1;

  ModelConfig config;
  ModelWeights weights;
  /// P-GNN: frozen anchors per context component, as external node ids.
  std::vector<std::vector<std::int64_t>> anchors;
  /// Opaque provenance block carried through save/load unchanged.
  nlohmann::ordered_json provenance = nlohmann::ordered_json::object();
};

std::string serialize_checkpoint(const ModelCheckpoint& ckpt);
ModelCheckpoint parse_checkpoint(std::string_view text);
void save_checkpoint(const ModelCheckpoint& ckpt, const std::filesystem::path& path);
ModelCheckpoint load_checkpoint(const std::filesystem::path& path);

/// Resolves checkpoint anchors against a context built from the same config.
std::vector<AnchorSet> checkpoint_anchors(const ModelCheckpoint& ckpt, const GraphContext& ctx);

Embeddings embed(const ModelCheckpoint& ckpt, const GraphContext& ctx);

/// Masked forward of one component for the explainers. `edge_weights` is
/// E_m x 1 over `masked_edges` (local pairs of the component), or empty for no
/// edge mask; `feature_weights` is 1 x d_in or empty. With every weight equal
/// to 1 the result is bit-identical to the unmasked embedding.
struct MaskInputs {
  std::vector<std::pair<std::size_t, std::size_t>> masked_edges;
  nd::Tensor edge_weights;
  nd::Tensor feature_weights;
  bool has_edge_mask = false;
  bool has_feature_mask = false;
};

nd::Tensor masked_embedding(const ModelCheckpoint& ckpt, const GraphContext& ctx, std::size_t component,
                            const MaskInputs& masks);

}  // namespace ctg
