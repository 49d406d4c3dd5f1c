#include <algorithm>
#include <chrono>
#include <cmath>
#include <future>
#include <numeric>

#include "ctg/error.hpp"
#include "ctg/train.hpp"

namespace ctg {

using nd::Matrix;
using nd::Tensor;

void TrainConfig::validate() const {
  require(epochs >= 1, "invalid_config", "epochs must be >= 1");
  require(repetitions >= 1, "invalid_config", "repetitions must be >= 1");
  require(batch_components >= 1, "invalid_config", "batch_components must be >= 1");
  require(model.holdout_frac > 0.0 && model.holdout_frac < 1.0, "invalid_config", "holdout_frac must be in (0, 1)");
  require(model.hidden_dim >= 1 && model.output_dim >= 1, "invalid_config", "model dimensions must be >= 1");
  require(model.anchor_count >= 1, "invalid_config", "anchor count must be >= 1");
  require(model.distance_cutoff >= 1, "invalid_config", "distance cutoff must be >= 1");
  require(adam.lr > 0.0 && adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0 &&
              adam.eps > 0.0,
          "invalid_config", "invalid Adam hyperparameters");
  require(threads >= 1, "invalid_config", "threads must be >= 1");
}

ModelConfig TrainConfig::repetition_model(std::size_t r) const {
  ModelConfig m = model;
  m.seed = seed + r;
  m.split_seed = seed + r;
  return m;
}

nlohmann::ordered_json train_config_json(const TrainConfig& c) {
  const auto& m = c.model;
  return {{"model_type", to_string(m.type)},
          {"epochs", c.epochs},
          {"batch_components", c.batch_components},
          {"repetitions", c.repetitions},
          {"seed", c.seed},
          {"threads", c.threads},
          {"holdout_frac", m.holdout_frac},
          {"hidden_dim", m.hidden_dim},
          {"output_dim", m.output_dim},
          {"anchor_count", m.anchor_count},
          {"distance_cutoff", m.distance_cutoff},
          {"min_component_size", m.min_component_size},
          {"featurize",
           {{"hash_dim", m.featurize.hash_dim},
            {"include_keys", m.featurize.include_keys},
            {"max_cardinality", m.featurize.max_cardinality},
            {"exclude_keys", m.featurize.exclude_keys}}},
          {"adam", {{"lr", c.adam.lr}, {"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"eps", c.adam.eps}}}};
}

namespace {

template <typename T>
void read_key(const nlohmann::ordered_json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void reject_unknown(const nlohmann::ordered_json& j, std::initializer_list<std::string_view> known, const char* where) {
  for (const auto& [k, v] : j.items())
    if (std::find(known.begin(), known.end(), k) == known.end())
      fail("invalid_config", std::string("unknown key '") + k + "' in " + where);
}

}  // namespace

TrainConfig train_config_from_json(const nlohmann::ordered_json& j) {
  TrainConfig c;
  try {
    require(j.is_object(), "invalid_config", "training config must be a JSON object");
    reject_unknown(j,
                   {"model_type", "epochs", "batch_components", "repetitions", "seed", "threads", "holdout_frac",
                    "hidden_dim", "output_dim", "anchor_count", "distance_cutoff", "min_component_size", "featurize",
                    "adam"},
                   "training config");
    if (j.contains("model_type")) c.model.type = parse_model_type(j.at("model_type").get<std::string>());
    read_key(j, "epochs", c.epochs);
    read_key(j, "batch_components", c.batch_components);
    read_key(j, "repetitions", c.repetitions);
    read_key(j, "seed", c.seed);
    read_key(j, "threads", c.threads);
    read_key(j, "holdout_frac", c.model.holdout_frac);
    read_key(j, "hidden_dim", c.model.hidden_dim);
    read_key(j, "output_dim", c.model.output_dim);
    read_key(j, "anchor_count", c.model.anchor_count);
    read_key(j, "distance_cutoff", c.model.distance_cutoff);
    read_key(j, "min_component_size", c.model.min_component_size);
    if (j.contains("featurize")) {
      const auto& f = j.at("featurize");
      reject_unknown(f, {"hash_dim", "include_keys", "max_cardinality", "exclude_keys"}, "featurize");
      read_key(f, "hash_dim", c.model.featurize.hash_dim);
      read_key(f, "include_keys", c.model.featurize.include_keys);
      read_key(f, "max_cardinality", c.model.featurize.max_cardinality);
      read_key(f, "exclude_keys", c.model.featurize.exclude_keys);
    }
    if (j.contains("adam")) {
      const auto& a = j.at("adam");
      reject_unknown(a, {"lr", "beta1", "beta2", "eps"}, "adam");
      read_key(a, "lr", c.adam.lr);
      read_key(a, "beta1", c.adam.beta1);
      read_key(a, "beta2", c.adam.beta2);
      read_key(a, "eps", c.adam.eps);
    }
  } catch (const nlohmann::json::exception& e) {
    fail("invalid_config", std::string("malformed training config: ") + e.what());
  }
  c.model.seed = c.seed;
  c.model.split_seed = c.seed;
  return c;
}

void summarize(Metrics& m) {
  if (m.auc.empty()) return;
  const double n = static_cast<double>(m.auc.size());
  m.mean = std::accumulate(m.auc.begin(), m.auc.end(), 0.0) / n;
  double ss = 0.0;
  for (double a : m.auc) ss += (a - m.mean) * (a - m.mean);
  m.std = std::sqrt(ss / n);
}

nlohmann::ordered_json metrics_json(const Metrics& m) {
  return {{"model_type", to_string(m.model_type)}, {"repetitions", m.auc.size()}, {"auc", m.auc},
          {"mean", m.mean},  {"std", m.std},          {"wall_seconds", m.wall_seconds},
          {"epoch_loss", m.epoch_loss}};
}

Metrics metrics_from_json(const nlohmann::ordered_json& j) {
  try {
    Metrics m;
    m.model_type = parse_model_type(j.at("model_type").get<std::string>());
    m.auc = j.at("auc").get<std::vector<double>>();
    m.mean = j.at("mean").get<double>();
    m.std = j.at("std").get<double>();
    m.wall_seconds = j.value("wall_seconds", 0.0);
    if (j.contains("epoch_loss")) m.epoch_loss = j.at("epoch_loss").get<std::vector<std::vector<double>>>();
    require(!m.auc.empty(), "parse_error", "metrics hold no repetitions");
    return m;
  } catch (const nlohmann::json::exception& e) {
    fail("parse_error", std::string("malformed metrics: ") + e.what());
  }
}

namespace {

// Stacks component embeddings that share one coordinate space (GCN).
Tensor stack_rows(const Tensor& zc, std::size_t row_off, std::size_t rows) {
  std::vector<std::size_t> ridx(zc.rows());
  std::iota(ridx.begin(), ridx.end(), row_off);
  return nd::row_scatter_add(zc, ridx, rows);
}

Tensor pair_logits(const Tensor& z, std::span<const std::size_t> left, std::span<const std::size_t> right) {
  return nd::sum_cols(nd::mul(nd::row_gather(z, left), nd::row_gather(z, right)));
}

}  // namespace

RepetitionResult train_repetition(const GraphContext& ctx, const TrainConfig& cfg, std::size_t r) {
  cfg.validate();
  const ModelConfig mcfg = cfg.repetition_model(r);
  const bool pgnn = mcfg.type == ModelType::pgnn;
  const auto n_comp = ctx.components.size();

  ModelWeights weights = init_weights(mcfg, ctx.features.dim());
  auto params = parameters(weights);
  nd::AdamState adam(cfg.adam);

  std::vector<AnchorSet> anchors(n_comp);
  std::vector<Matrix> pos_weights(n_comp);
  std::vector<std::vector<std::size_t>> anchor_rows(n_comp);
  std::vector<std::size_t> order(n_comp);
  std::iota(order.begin(), order.end(), 0);

  RepetitionResult out;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (pgnn)
      for (std::size_t c = 0; c < n_comp; ++c) {
        anchors[c] = sample_anchors(ctx.components[c], mcfg.anchor_count, mcfg.seed, epoch);
        pos_weights[c] = position_weights(ctx.components[c], ctx.distances, anchors[c]);
        anchor_rows[c] = local_anchor_rows(ctx, c, anchors[c]);
      }
    Rng rng(derive_seed(mcfg.seed, {0x7a11u, epoch}));
    rng.shuffle(order.begin(), order.end());

    double epoch_loss = 0.0;
    std::size_t epoch_pairs = 0;
    for (std::size_t start = 0; start < n_comp; start += cfg.batch_components) {
      const auto stop = std::min(n_comp, start + cfg.batch_components);
      std::vector<std::size_t> row_off(n_comp, 0);
      std::size_t rows = 0;
      std::vector<NodeIndex> batch_nodes;
      for (auto i = start; i < stop; ++i) {
        const auto c = order[i];
        row_off[c] = rows;
        rows += ctx.components[c].size();
        batch_nodes.insert(batch_nodes.end(), ctx.components[c].nodes.begin(), ctx.components[c].nodes.end());
      }
      const auto batch_row = [&](NodeIndex v) { return row_off[ctx.component_of[v]] + ctx.local_index[v]; };

      std::vector<std::size_t> left, right;
      for (auto i = start; i < stop; ++i) {
        const auto c = order[i];
        for (auto [a, b] : ctx.components[c].edges) {
          left.push_back(row_off[c] + a);
          right.push_back(row_off[c] + b);
        }
      }
      const auto n_pos = left.size();
      if (n_pos == 0) continue;
      // Train negatives: keep the first endpoint, redraw the partner from the batch.
      for (auto i = start; i < stop; ++i) {
        const auto c = order[i];
        for (const auto& e : ctx.components[c].edges) {
          const auto a = e.first;
          const auto u = ctx.components[c].nodes[a];
          const auto w = sample_negative(ctx.message, u, batch_nodes, rng);
          left.push_back(row_off[c] + a);
          right.push_back(batch_row(w));
        }
      }
      Matrix labels(left.size(), 1);
      for (std::size_t p = 0; p < n_pos; ++p) labels(p, 0) = 1.0;

      nd::Tape tape;
      std::vector<Tensor> vars;
      for (auto* p : params) vars.push_back(tape.variable(*p));
      Tensor logits;
      if (!pgnn) {
        Tensor z;
        for (auto i = start; i < stop; ++i) {
          const auto c = order[i];
          const auto& view = ctx.components[c];
          auto placed = stack_rows(
              gcn_forward(vars[0], vars[1], nd::constant(view.norm_adj), nd::constant(view.features)), row_off[c], rows);
          z = i == start ? placed : nd::add(z, placed);
        }
        logits = pair_logits(z, left, right);
      } else {
        // Anchor coordinates are private to a component: pairs spanning two
        // components have logit 0 and no gradient.
        std::vector<std::size_t> comp_of_row(rows);
        for (auto i = start; i < stop; ++i) {
          const auto c = order[i];
          std::fill_n(comp_of_row.begin() + static_cast<std::ptrdiff_t>(row_off[c]), ctx.components[c].size(), c);
        }
        Tensor acc = nd::constant(Matrix(left.size(), 1));
        for (auto i = start; i < stop; ++i) {
          const auto c = order[i];
          std::vector<std::size_t> lc, rc, slot;
          for (std::size_t p = 0; p < left.size(); ++p)
            if (comp_of_row[left[p]] == c && comp_of_row[right[p]] == c) {
              lc.push_back(left[p] - row_off[c]);
              rc.push_back(right[p] - row_off[c]);
              slot.push_back(p);
            }
          if (slot.empty()) continue;
          const auto& view = ctx.components[c];
          const auto zc = pgnn_forward(vars[0], vars[1], nd::constant(view.features), anchor_rows[c],
                                       nd::constant(pos_weights[c]));
          acc = nd::add(acc, nd::row_scatter_add(pair_logits(zc, lc, rc), slot, left.size()));
        }
        logits = acc;
      }
      const auto loss = nd::binary_cross_entropy_with_logits(logits, nd::constant(std::move(labels)));
      tape.backward(loss);
      std::vector<Matrix> grads;
      for (const auto& v : vars) grads.push_back(v.grad());
      adam_step(params, grads, adam);
      epoch_loss += loss.item() * static_cast<double>(left.size());
      epoch_pairs += left.size();
    }
    out.epoch_loss.push_back(epoch_pairs ? epoch_loss / static_cast<double>(epoch_pairs) : 0.0);
  }

  out.checkpoint.config = mcfg;
  out.checkpoint.weights = std::move(weights);
  if (pgnn) {
    // Anchors of the last epoch are frozen for evaluation and prediction.
    for (const auto& a : anchors) {
      std::vector<std::int64_t> ids;
      for (auto v : a.nodes) ids.push_back(ctx.retained.node(v).id);
      out.checkpoint.anchors.push_back(std::move(ids));
    }
  }
  out.checkpoint.provenance = {{"epochs", cfg.epochs},
                               {"batch_components", cfg.batch_components},
                               {"repetition", r},
                               {"repetitions", cfg.repetitions},
                               {"seed", cfg.seed},
                               {"adam", {{"lr", cfg.adam.lr}, {"beta1", cfg.adam.beta1}, {"beta2", cfg.adam.beta2},
                                         {"eps", cfg.adam.eps}}}};
  out.auc = evaluate(out.checkpoint, ctx);
  return out;
}

TrainResult train(const PropertyGraph& g, const TrainConfig& cfg) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<RepetitionResult> reps(cfg.repetitions);
  const auto run = [&](std::size_t r) {
    const auto ctx = build_context(g, cfg.repetition_model(r));
    reps[r] = train_repetition(ctx, cfg, r);
  };
  if (cfg.threads <= 1) {
    for (std::size_t r = 0; r < cfg.repetitions; ++r) run(r);
  } else {
    for (std::size_t start = 0; start < cfg.repetitions; start += cfg.threads) {
      std::vector<std::future<void>> jobs;
      for (auto r = start; r < std::min(cfg.repetitions, start + cfg.threads); ++r)
        jobs.push_back(std::async(std::launch::async, run, r));
      for (auto& j : jobs) j.get();
    }
  }
  TrainResult res;
  res.metrics.model_type = cfg.model.type;
  for (auto& rep : reps) {
    res.metrics.auc.push_back(rep.auc);
    res.metrics.epoch_loss.push_back(std::move(rep.epoch_loss));
  }
  summarize(res.metrics);
  res.metrics.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  res.checkpoint = std::move(reps.back().checkpoint);
  return res;
}

// --- evaluation -------------------------------------------------------------------

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  require(scores.size() == labels.size(), "invalid_argument", "roc_auc: scores and labels differ in length");
  std::size_t n_pos = 0;
  for (int y : labels) {
    require(y == 0 || y == 1, "invalid_argument", "roc_auc: labels must be 0 or 1");
    n_pos += static_cast<std::size_t>(y);
  }
  const auto n_neg = labels.size() - n_pos;
  require(n_pos > 0 && n_neg > 0, "single_class", "roc_auc needs both positive and negative labels");

  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
  // Twice the midrank keeps every rank an integer, so the sum is exact.
  std::uint64_t pos_rank2 = 0;
  for (std::size_t i = 0; i < idx.size();) {
    auto j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
    const std::uint64_t mid2 = i + j + 1;  // 2 * mean of 1-based ranks i+1..j
    for (auto k = i; k < j; ++k)
      if (labels[idx[k]] == 1) pos_rank2 += mid2;
    i = j;
  }
  const double u = (static_cast<double>(pos_rank2) - static_cast<double>(n_pos) * static_cast<double>(n_pos + 1)) / 2.0;
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

PairScores score_split(const Embeddings& emb, const LinkSplit& split) {
  PairScores out;
  for (auto [u, v] : split.test_pos) {
    out.scores.push_back(emb.score(u, v));
    out.labels.push_back(1);
  }
  for (auto [u, v] : split.test_neg) {
    out.scores.push_back(emb.score(u, v));
    out.labels.push_back(0);
  }
  return out;
}

double evaluate(const ModelCheckpoint& ckpt, const GraphContext& ctx, const LinkSplit& split) {
  const auto emb = embed(ckpt, ctx);
  const auto ps = score_split(emb, split);
  return roc_auc(ps.scores, ps.labels);
}

double evaluate(const ModelCheckpoint& ckpt, const GraphContext& ctx) { return evaluate(ckpt, ctx, ctx.split); }

}  // namespace ctg
