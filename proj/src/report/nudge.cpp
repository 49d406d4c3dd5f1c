#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>

#include "ctg/error.hpp"
#include "ctg/graphsheet.hpp"

namespace ctg {

using json = nlohmann::ordered_json;

namespace {

double sigmoid(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", x);
  return buf;
}

}  // namespace

double ignored_feature_baseline(const GnnxConfig& cfg, std::size_t feature_dim) {
  require(feature_dim >= 1, "invalid_argument", "feature dimension must be >= 1");
  // A feature with no influence on the score only feels the size and entropy
  // penalties: d/df [a s(f) + b H(s(f))] = s(1 - s)(a - b f).
  const double a = cfg.lambda_feat, b = cfg.lambda_feat_entropy / static_cast<double>(feature_dim);
  double f = 0.0, m = 0.0, v = 0.0;
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  for (std::size_t t = 1; t <= cfg.steps; ++t) {
    const double s = sigmoid(f);
    const double g = s * (1.0 - s) * (a - b * f);
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mh = m / (1 - std::pow(b1, static_cast<double>(t)));
    const double vh = v / (1 - std::pow(b2, static_cast<double>(t)));
    f -= cfg.lr * mh / (std::sqrt(vh) + eps);
  }
  return sigmoid(f);
}

FeatureImportanceReport global_feature_importance(const ModelCheckpoint& ckpt, const GraphContext& ctx,
                                                  const ImportanceConfig& cfg) {
  require(cfg.samples >= 10, "invalid_argument", "feature importance needs at least 10 sampled links");
  const auto emb = embed(ckpt, ctx);

  // Predicted exposure links: unconnected same-component pairs scored >= 0.5.
  std::vector<NodePair> candidates;
  for (const auto& c : ctx.components)
    for (std::size_t i = 0; i < c.size(); ++i)
      for (std::size_t j = i + 1; j < c.size(); ++j) {
        const auto u = c.nodes[i], v = c.nodes[j];
        if (!ctx.message.adjacent(u, v) && emb.score(u, v) >= 0.5) candidates.emplace_back(u, v);
      }
  FeatureImportanceReport rep;
  rep.requested = cfg.samples;
  rep.candidates = candidates.size();
  Rng rng(derive_seed(cfg.seed, {0x4a0du}));
  const auto take = std::min(cfg.samples, candidates.size());
  for (std::size_t i = 0; i < take; ++i) std::swap(candidates[i], candidates[i + rng.uniform_index(candidates.size() - i)]);
  candidates.resize(take);
  rep.used = take;
  rep.shortfall = take < cfg.samples;

  const auto keys = default_top_attr_keys(ctx.message, 10);
  const auto ds = build_pair_dataset(ctx, emb, cfg.dataset_pairs, cfg.seed, keys);
  auto sur_cfg = cfg.surrogate;
  sur_cfg.seed = derive_seed(cfg.seed, {0x5u});
  const auto sur = train_surrogate(ds, sur_cfg);
  rep.surrogate_fidelity = sur.fidelity;
  const PairClassifier model = [&sur](std::span<const double> r) { return sur.predict(r); };
  rep.mask_baseline = ignored_feature_baseline(cfg.gnnx, ctx.features.dim());

  std::set<std::string> fields;
  for (const auto& n : ctx.message.nodes())
    for (const auto& [k, v] : n.attrs) fields.insert(k);
  std::map<std::string, std::vector<double>> mask_vals;
  std::map<std::string, std::size_t> anchor_hits;

  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto [u, v] = candidates[i];
    rep.explained.emplace_back(ctx.retained.node(u).id, ctx.retained.node(v).id);
    auto gcfg = cfg.gnnx;
    gcfg.seed = derive_seed(cfg.seed, {0x6u, i});
    const auto me = explain_link(ckpt, ctx, u, v, gcfg);
    for (const auto& k : ctx.features.keys) {
      std::set<std::size_t> slots;
      for (auto n : {u, v})
        if (const auto* val = ctx.message.attr(n, k)) slots.insert(attribute_slot(k, *val, ctx.features.hash_dim));
      if (slots.empty()) continue;
      double s = 0.0;
      for (auto sl : slots) s += me.feature_mask[sl];
      mask_vals[k].push_back(s / static_cast<double>(slots.size()));
    }
    auto acfg = cfg.anchors;
    acfg.seed = derive_seed(cfg.seed, {0x7u, i});
    const auto inst = pair_features(ctx.message, ctx.distances, u, v, keys).values;
    const auto rule = anchors_explain(model, ds, inst, acfg);
    std::set<std::string> mentioned;
    for (const auto& p : rule.predicates)
      if (p.name.starts_with("same_attr[")) mentioned.insert(p.name.substr(10, p.name.size() - 11));
    for (const auto& k : mentioned) ++anchor_hits[k];
  }

  const double denom = std::max(1e-12, 1.0 - rep.mask_baseline);
  for (const auto& k : fields) {
    FieldImportance fi;
    fi.field = k;
    fi.featurized = std::find(ctx.features.keys.begin(), ctx.features.keys.end(), k) != ctx.features.keys.end();
    if (auto it = mask_vals.find(k); it != mask_vals.end() && !it->second.empty()) {
      double s = 0.0;
      for (double x : it->second) s += x;
      fi.mask_mean = s / static_cast<double>(it->second.size());
    }
    fi.anchor_frequency = take ? static_cast<double>(anchor_hits[k]) / static_cast<double>(take) : 0.0;
    const double excess = fi.featurized ? std::clamp((fi.mask_mean - rep.mask_baseline) / denom, 0.0, 1.0) : 0.0;
    fi.importance = std::max(fi.anchor_frequency, excess);
    rep.fields.push_back(fi);
  }
  return rep;
}

void NudgePolicy::validate() const {
  require(t_low >= 0.0 && t_low < t_high && t_high <= 1.0, "invalid_config", "nudge thresholds need 0 <= t_low < t_high <= 1");
}

std::vector<Recommendation> nudge_recommendations(const FeatureImportanceReport& report, const NudgePolicy& policy) {
  policy.validate();
  require(!report.fields.empty(), "invalid_argument", "importance report has no fields");
  std::vector<Recommendation> out;
  for (const auto& f : report.fields) {
    Recommendation r;
    r.field = f.field;
    r.importance = f.importance;
    const bool sensitive = std::find(policy.sensitive.begin(), policy.sensitive.end(), f.field) != policy.sensitive.end();
    const auto numbers = "importance " + fmt(f.importance) + " (mask mean " + fmt(f.mask_mean) + " vs baseline " +
                         fmt(report.mask_baseline) + ", anchor frequency " + fmt(f.anchor_frequency) + ")";
    if (f.importance < policy.t_low) {
      r.action = "do-not-collect/optional";
      r.rationale = "Field '" + f.field + "' has " + numbers + ", below " + fmt(policy.t_low) +
                    ", so it adds little to exposure predictions and need not be collected.";
    } else if (f.importance >= policy.t_high && sensitive) {
      r.action = "on-device-only";
      r.rationale = "Field '" + f.field + "' has " + numbers + ", at least " + fmt(policy.t_high) +
                    ", and is sensitive, so keep it on the device and use it there to tailor alerts.";
    } else {
      r.action = "collect-with-consent";
      r.rationale = "Field '" + f.field + "' has " + numbers + ", useful enough to request with the user's consent.";
    }
    out.push_back(std::move(r));
  }
  return out;
}

json importance_json(const FeatureImportanceReport& r) {
  json fields = json::array();
  for (const auto& f : r.fields)
    fields.push_back({{"field", f.field},
                      {"featurized", f.featurized},
                      {"mask_mean", f.mask_mean},
                      {"anchor_frequency", f.anchor_frequency},
                      {"importance", f.importance}});
  json explained = json::array();
  for (const auto& [u, v] : r.explained) explained.push_back({u, v});
  return {{"samples_requested", r.requested}, {"samples_used", r.used},   {"shortfall", r.shortfall},
          {"candidate_links", r.candidates},  {"mask_baseline", r.mask_baseline},
          {"surrogate_fidelity", r.surrogate_fidelity}, {"explained_pairs", std::move(explained)},
          {"fields", std::move(fields)}};
}

json recommendations_json(std::span<const Recommendation> recs, const NudgePolicy& policy) {
  json list = json::array();
  for (const auto& r : recs)
    list.push_back({{"field", r.field}, {"action", r.action}, {"importance", r.importance}, {"rationale", r.rationale}});
  return {{"policy", {{"t_low", policy.t_low}, {"t_high", policy.t_high}, {"sensitive", policy.sensitive}}},
          {"recommendations", std::move(list)}};
}

AlertDecision alert_decision(double score, std::string_view band, const AlertPolicy& policy) {
  require(std::isfinite(score) && score >= 0.0 && score <= 1.0, "invalid_argument", "score must be in [0, 1]");
  AlertDecision d;
  d.score = score;
  d.band = std::string(band);
  d.unknown_band = true;
  for (const auto& [b, r] : policy.risk)
    if (b == band) {
      d.risk = r;
      d.unknown_band = false;
    }
  d.tau_eff = std::clamp(policy.tau0 - policy.beta * d.risk, 0.05, 0.95);
  d.alert = score >= d.tau_eff;
  return d;
}

json alert_json(const AlertDecision& d) {
  json j{{"score", d.score}, {"age_band", d.band}, {"risk", d.risk}, {"tau_eff", d.tau_eff},
         {"decision", d.alert ? "alert" : "no-alert"}};
  if (d.unknown_band) j["warning"] = "unknown age band '" + d.band + "' treated as risk 0";
  return j;
}

}  // namespace ctg
