#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctg/explain.hpp"
#include "ctg/train.hpp"

namespace ctg {

// ---------------------------------------------------------------------------
// JSON schema subset used to check graphsheets

/// Supports type, enum, const, required, properties, additionalProperties
/// (boolean), items, minItems, minimum, maximum and minLength. Returns one
/// message per violation, each prefixed with its JSON pointer.
std::vector<std::string> validate_json(const nlohmann::ordered_json& instance, const nlohmann::ordered_json& schema);

/// The graphsheet schema shipped with the library.
const nlohmann::ordered_json& graphsheet_schema();
std::string_view graphsheet_schema_text();

// ---------------------------------------------------------------------------
// Graphsheet

struct FaqEntry {
  std::string question;
  std::string answer;
};

/// A JSON array of {"question", "answer"} objects; empty text counts as [].
std::vector<FaqEntry> parse_faq(std::string_view text);

struct DatasetFacts {
  std::size_t nodes = 0;
  std::size_t edges = 0;          ///< typed edges
  std::size_t node_pairs = 0;     ///< distinct adjacent pairs
  std::size_t components = 0;
  std::size_t retained_components = 0;
  std::size_t retained_nodes = 0;
  std::size_t largest_component = 0;
  std::vector<std::pair<std::string, double>> attribute_coverage;  ///< key -> fraction of nodes
  std::vector<std::pair<std::string, std::size_t>> edge_types;
  std::array<double, 5> degree_quantiles{};  ///< min, q25, median, q75, max
  double mean_degree = 0.0;
};

DatasetFacts dataset_facts(const PropertyGraph& g, std::size_t min_component_size);

/// One trained model: its metrics and the configuration it ran with.
struct ModelSummary {
  Metrics metrics;
  TrainConfig config;
};

struct GraphsheetOptions {
  std::string title = "Contact graph link prediction";
  std::string provenance;
  std::string train_timestamp;  ///< supplied by the caller, never read from the clock
  std::size_t min_component_size = 10;
  std::optional<double> surrogate_fidelity;
  PathWeights path_weights;
};

nlohmann::ordered_json build_graphsheet(const PropertyGraph& g, std::span<const ModelSummary> models,
                                        std::span<const FaqEntry> faq, const GraphsheetOptions& opt);
std::string graphsheet_markdown(const nlohmann::ordered_json& sheet);

// ---------------------------------------------------------------------------
// Feature importance and nudges

struct FieldImportance {
  std::string field;
  bool featurized = false;
  double mask_mean = 0.0;        ///< mean feature-mask value over the field's slots, 0 when not featurized
  double anchor_frequency = 0.0; ///< share of explained links whose anchor mentions the field
  double importance = 0.0;       ///< max(anchor_frequency, mask excess over the baseline, rescaled to [0, 1])
};

struct FeatureImportanceReport {
  std::vector<FieldImportance> fields;
  std::size_t requested = 0;
  std::size_t used = 0;
  bool shortfall = false;
  std::size_t candidates = 0;    ///< predicted links available to sample from
  double mask_baseline = 0.5;    ///< mask value an ignored feature converges to
  double surrogate_fidelity = 0.0;
  std::vector<std::pair<std::int64_t, std::int64_t>> explained;  ///< external ids
};

struct ImportanceConfig {
  std::size_t samples = 10;
  std::uint64_t seed = 0;
  std::size_t dataset_pairs = 2000;
  GnnxConfig gnnx;
  AnchorsConfig anchors;
  SurrogateConfig surrogate;
};

/// Mask value reached by a feature the model ignores: the regularizer-only
/// Adam trajectory started at logit 0.
double ignored_feature_baseline(const GnnxConfig& cfg, std::size_t feature_dim);

FeatureImportanceReport global_feature_importance(const ModelCheckpoint& ckpt, const GraphContext& ctx,
                                                  const ImportanceConfig& cfg);

struct NudgePolicy {
  double t_low = 0.1;
  double t_high = 0.5;
  std::vector<std::string> sensitive{"age_band"};

  void validate() const;
};

struct Recommendation {
  std::string field;
  std::string action;  ///< do-not-collect/optional | collect-with-consent | on-device-only
  double importance = 0.0;
  std::string rationale;
};

std::vector<Recommendation> nudge_recommendations(const FeatureImportanceReport& report, const NudgePolicy& policy);

nlohmann::ordered_json importance_json(const FeatureImportanceReport& r);
nlohmann::ordered_json recommendations_json(std::span<const Recommendation> recs, const NudgePolicy& policy);

// ---------------------------------------------------------------------------
// Alert policy

struct AlertPolicy {
  double tau0 = 0.5;
  double beta = 0.1;
  std::vector<std::pair<std::string, double>> risk{{"0-39", 0.0}, {"40-59", 0.5}, {"60+", 1.0}};
};

struct AlertDecision {
  double score = 0.0;
  std::string band;
  double risk = 0.0;
  double tau_eff = 0.0;
  bool alert = false;
  bool unknown_band = false;
};

AlertDecision alert_decision(double score, std::string_view band, const AlertPolicy& policy = {});
nlohmann::ordered_json alert_json(const AlertDecision& d);

}  // namespace ctg
