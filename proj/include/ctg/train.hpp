#pragma once

#include <span>
#include <vector>

#include <json.hpp>

#include "ctg/models.hpp"

namespace ctg {

struct TrainConfig {
  /// Architecture and featurization. `seed` and `split_seed` are overwritten
  /// per repetition with `seed + r`.
  ModelConfig model;
  std::size_t epochs = 200;
  std::size_t batch_components = 8;
  std::size_t repetitions = 5;
  std::uint64_t seed = 0;
  nd::AdamConfig adam;
  /// Repetitions run concurrently on up to this many threads.
  std::size_t threads = 1;

  void validate() const;
  /// Model config used by repetition `r`.
  ModelConfig repetition_model(std::size_t r) const;
};

struct Metrics {
  ModelType model_type = ModelType::pgnn;
  std::vector<double> auc;                      ///< one per repetition
  double mean = 0.0;
  double std = 0.0;                             ///< population std over repetitions
  double wall_seconds = 0.0;
  std::vector<std::vector<double>> epoch_loss;  ///< per repetition, mean BCE per epoch
};

nlohmann::ordered_json train_config_json(const TrainConfig& cfg);
/// Missing keys keep their defaults; unknown keys are an error.
TrainConfig train_config_from_json(const nlohmann::ordered_json& j);

/// Fills mean/std from `auc`.
void summarize(Metrics& m);
nlohmann::ordered_json metrics_json(const Metrics& m);
Metrics metrics_from_json(const nlohmann::ordered_json& j);

struct RepetitionResult {
  ModelCheckpoint checkpoint;
  double auc = 0.0;
  std::vector<double> epoch_loss;
};

/// One repetition on a prepared context (built from `cfg.repetition_model(r)`).
RepetitionResult train_repetition(const GraphContext& ctx, const TrainConfig& cfg, std::size_t r);

struct TrainResult {
  ModelCheckpoint checkpoint;  ///< from the final repetition
  Metrics metrics;
};

TrainResult train(const PropertyGraph& g, const TrainConfig& cfg);

/// Mann-Whitney AUC with half credit for ties. Labels are 0/1.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

struct PairScores {
  std::vector<double> scores;
  std::vector<int> labels;
};

/// Scores every held-out positive and negative pair of `split` (context indices).
PairScores score_split(const Embeddings& emb, const LinkSplit& split);
double evaluate(const ModelCheckpoint& ckpt, const GraphContext& ctx, const LinkSplit& split);
double evaluate(const ModelCheckpoint& ckpt, const GraphContext& ctx);

}  // namespace ctg
