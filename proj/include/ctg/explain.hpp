#pragma once

#include <array>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "ctg/models.hpp"

namespace ctg {

// ---------------------------------------------------------------------------
// Pair dataset and logistic surrogate

/// Tabular view of node pairs: pair features plus the GNN's own decision.
struct PairDataset {
  std::vector<std::string> feature_names;
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;            ///< [link score >= 0.5], never ground truth
  std::vector<NodePair> pairs;        ///< context indices; empty for hand-built datasets
  std::vector<double> scores;
  std::size_t split_pairs = 0;        ///< leading rows taken from the held-out split

  // Derived by `finalize_dataset`.
  std::vector<bool> binary;                       ///< column values all in {0, 1}
  std::vector<std::vector<double>> columns;       ///< per feature, values in row order
  std::vector<std::array<double, 3>> quartiles;   ///< per feature, bin edges q1 <= q2 <= q3

  std::size_t size() const { return rows.size(); }
  std::size_t dim() const { return feature_names.size(); }
  std::size_t feature_index(std::string_view name) const;
};

/// Computes marginals, binary flags and quartile edges from rows.
void finalize_dataset(PairDataset& ds);

/// Quartile bin 0..3 of `x` under `edges` (x <= q1 is bin 0, x > q3 is bin 3).
int quartile_bin(const std::array<double, 3>& edges, double x);

/// Rows: every held-out pair whose endpoints share a component, then uniform
/// same-component pairs up to `n_pairs`. Throws when only one label occurs.
PairDataset build_pair_dataset(const GraphContext& ctx, const Embeddings& emb, std::size_t n_pairs, std::uint64_t seed,
                               std::span<const std::string> top_attr_keys);

struct SurrogateConfig {
  std::size_t steps = 400;
  double lr = 0.05;
  double holdout = 0.2;
  std::uint64_t seed = 0;
};

struct SurrogateModel {
  std::vector<std::size_t> inputs;   ///< dataset columns actually used (zero-variance ones dropped)
  std::vector<std::string> input_names;
  std::vector<double> mean;
  std::vector<double> scale;
  std::vector<double> weights;       ///< per dataset feature; exactly 0 for unused ones
  double bias = 0.0;
  double fidelity = 0.0;             ///< agreement with the GNN labels on held-out rows
  std::size_t holdout_rows = 0;

  double probability(std::span<const double> row) const;
  int predict(std::span<const double> row) const { return probability(row) >= 0.5 ? 1 : 0; }
};

/// `columns` restricts training to a subset of dataset features (empty = all).
SurrogateModel train_surrogate(const PairDataset& ds, const SurrogateConfig& cfg,
                               std::span<const std::size_t> columns = {});

// ---------------------------------------------------------------------------
// Anchors

enum class Relation { eq, ge, le, in_bin };
std::string to_string(Relation r);

struct Predicate {
  std::size_t feature = 0;
  std::string name;
  Relation relation = Relation::eq;
  double threshold = 0.0;  ///< value for eq/ge/le
  int bin = 0;             ///< quartile bin for in_bin
  std::array<double, 3> edges{};  ///< bin edges for in_bin

  bool holds(std::span<const double> row) const;
  std::string render() const;
};

struct AnchorRule {
  std::vector<Predicate> predicates;
  double precision = 0.0;
  double precision_lower = 0.0;  ///< Hoeffding lower bound at confidence 1 - delta
  double coverage = 0.0;
  std::size_t samples = 0;       ///< perturbation samples behind `precision`
  std::size_t total_samples = 0; ///< all samples drawn during the search
  bool below_target = false;
  int predicted = 0;             ///< model decision on the instance
  std::vector<std::string> feature_subset;  ///< set for graph anchors

  bool holds(std::span<const double> row) const;
  std::string render() const;
};

using PairClassifier = std::function<int(std::span<const double>)>;

struct AnchorsConfig {
  double tau = 0.95;
  double delta = 0.05;
  std::size_t samples = 1000;
  std::size_t max_predicates = 4;
  std::size_t beam = 2;
  std::uint64_t seed = 0;
};

/// Monte-Carlo precision of `rule` for `instance`: every feature is drawn
/// independently from its dataset marginal, anchored ones restricted to the
/// values their predicates allow. The uniform draws depend only on `seed`, so
/// all rules explored for one instance share them.
double estimate_precision(const PairClassifier& model, const PairDataset& ds, std::span<const double> instance,
                          std::span<const Predicate> rule, std::size_t n, std::uint64_t seed);

double hoeffding_radius(std::size_t n, double delta);

/// Candidate predicates built from the instance's own values.
std::vector<Predicate> candidate_predicates(const PairDataset& ds, std::span<const double> instance,
                                            std::span<const std::size_t> allowed = {});

AnchorRule anchors_explain(const PairClassifier& model, const PairDataset& ds, std::span<const double> instance,
                           const AnchorsConfig& cfg, std::span<const std::size_t> allowed = {});

// ---------------------------------------------------------------------------
// GNN-Explainer masks

struct GnnxConfig {
  std::size_t hops = 2;
  std::size_t steps = 200;
  double lr = 0.01;
  double lambda_edge = 0.005;
  double lambda_edge_entropy = 1.0;
  double lambda_feat = 0.1;
  double lambda_feat_entropy = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

struct MaskExplanation {
  std::size_t component = 0;
  NodeIndex u = 0, v = 0;                                   ///< context indices
  std::vector<NodeIndex> nodes;                             ///< subgraph, context indices ascending
  std::vector<std::pair<std::size_t, std::size_t>> edges;   ///< local component pairs
  std::vector<NodePair> edge_nodes;                         ///< same edges as context index pairs
  std::vector<double> edge_mask;
  std::vector<double> feature_mask;
  std::vector<std::string> feature_names;                   ///< one per feature slot
  double masked_score = 0.0;
  double original_score = 0.0;
  std::vector<double> loss_history;                         ///< loss before each step, then the final loss
};

/// Masks for the link (u, v) (context indices) under the model in `ckpt`.
MaskExplanation explain_link(const ModelCheckpoint& ckpt, const GraphContext& ctx, NodeIndex u, NodeIndex v,
                             const GnnxConfig& cfg);

/// Node set of the `hops`-hop neighborhoods of u and v in the message graph.
std::vector<NodeIndex> explanation_subgraph(const GraphContext& ctx, NodeIndex u, NodeIndex v, std::size_t hops);

/// Readable names for feature slots ("key=value" entries hashing to a slot).
std::vector<std::string> feature_slot_names(const GraphContext& ctx);

enum class MaskKind { edges, features };

/// Indices into the edge or feature mask, by descending value; ties go to
/// smaller (external id) edge endpoints or to the smaller feature index.
std::vector<std::size_t> top_k(const MaskExplanation& me, std::size_t k, MaskKind kind, const GraphContext& ctx);

std::string mask_dot(const MaskExplanation& me, const GraphContext& ctx, std::string_view display_key = "name");

/// Importance of each pair feature derived from the masks.
std::vector<double> pair_feature_importance(const MaskExplanation& me, const GraphContext& ctx,
                                            std::span<const std::string> pair_feature_names);

struct GraphAnchorsConfig {
  std::size_t top_features = 5;
  double min_importance = 0.0;  ///< features at or below are never selected
  SurrogateConfig surrogate;
  AnchorsConfig anchors;
};

struct GraphAnchorsResult {
  AnchorRule rule;
  SurrogateModel surrogate;
  std::vector<std::size_t> selected;  ///< dataset columns
  std::vector<double> importance;     ///< per dataset column
};

/// Anchors against a surrogate fit on the top-k features by `importance`.
GraphAnchorsResult graph_anchors_explain(const PairDataset& ds, std::span<const double> importance,
                                         std::span<const double> instance, const GraphAnchorsConfig& cfg);

// ---------------------------------------------------------------------------
// Path explanations

struct Path {
  std::vector<NodeIndex> nodes;
  std::vector<std::string> etypes;

  std::size_t length() const { return etypes.size(); }
};

struct PathWeights {
  double length = 0.4;
  double specificity = 0.4;
  double rarity = 0.2;

  void validate() const;
};

struct PathScore {
  double total = 0.0;
  double len_term = 0.0;
  double specificity_term = 0.0;
  double rarity_term = 0.0;
  PathWeights weights;
};

/// Simple paths of at most `max_len` edges, depth-first with neighbors in
/// ascending id order, stopping after `cap` paths.
std::vector<Path> enumerate_paths(const PropertyGraph& g, NodeIndex u, NodeIndex v, std::size_t max_len,
                                  std::size_t cap);

PathScore score_path(const PropertyGraph& g, const Path& p, const PathWeights& w = {});

struct PathsConfig {
  std::size_t max_len = 4;
  std::size_t cap = 1000;
  std::size_t top_k = 3;
  PathWeights weights;
  std::string display_key = "name";
};

struct RankedPath {
  Path path;
  PathScore score;
  std::string rendered;
};

struct RankedPaths {
  NodeIndex u = 0, v = 0;
  std::vector<RankedPath> paths;
  std::size_t enumerated = 0;
  bool truncated = false;  ///< enumeration hit the cap
  bool no_path() const { return paths.empty(); }
};

RankedPaths explain_by_paths(const PropertyGraph& g, NodeIndex u, NodeIndex v, const PathsConfig& cfg);
std::string render_path(const PropertyGraph& g, const Path& p, std::string_view display_key);
std::string paths_dot(const PropertyGraph& g, const RankedPaths& rp, std::string_view display_key);

// ---------------------------------------------------------------------------
// JSON

using Explanation = std::variant<AnchorRule, MaskExplanation, RankedPaths>;

nlohmann::ordered_json rule_json(const AnchorRule& r);
nlohmann::ordered_json mask_json(const MaskExplanation& me, const GraphContext& ctx, std::size_t top = 10);
nlohmann::ordered_json paths_json(const PropertyGraph& g, const RankedPaths& rp);

}  // namespace ctg
