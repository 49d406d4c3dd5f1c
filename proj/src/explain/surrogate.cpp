#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>

#include "ctg/error.hpp"
#include "ctg/explain.hpp"

namespace ctg {

// --- dataset ----------------------------------------------------------------

std::size_t PairDataset::feature_index(std::string_view name) const {
  for (std::size_t i = 0; i < feature_names.size(); ++i)
    if (feature_names[i] == name) return i;
  fail("invalid_argument", "dataset has no feature named " + std::string(name));
}

namespace {

double quantile(std::vector<double> sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace

void finalize_dataset(PairDataset& ds) {
  require(!ds.rows.empty(), "invalid_argument", "pair dataset is empty");
  require(ds.labels.size() == ds.rows.size(), "invalid_argument", "pair dataset labels and rows differ in length");
  const auto d = ds.dim();
  ds.columns.assign(d, {});
  ds.binary.assign(d, true);
  ds.quartiles.assign(d, {});
  for (const auto& r : ds.rows) require(r.size() == d, "invalid_argument", "pair dataset row has the wrong width");
  for (std::size_t j = 0; j < d; ++j) {
    auto& col = ds.columns[j];
    col.reserve(ds.rows.size());
    for (const auto& r : ds.rows) {
      col.push_back(r[j]);
      if (r[j] != 0.0 && r[j] != 1.0) ds.binary[j] = false;
    }
    auto sorted = col;
    std::sort(sorted.begin(), sorted.end());
    ds.quartiles[j] = {quantile(sorted, 0.25), quantile(sorted, 0.5), quantile(sorted, 0.75)};
  }
}

int quartile_bin(const std::array<double, 3>& edges, double x) {
  int b = 0;
  while (b < 3 && x > edges[static_cast<std::size_t>(b)]) ++b;
  return b;
}

PairDataset build_pair_dataset(const GraphContext& ctx, const Embeddings& emb, std::size_t n_pairs, std::uint64_t seed,
                               std::span<const std::string> top_attr_keys) {
  require(n_pairs >= 100, "invalid_argument", "pair dataset needs n_pairs >= 100");
  require(ctx.node_count() >= 2, "invalid_argument", "pair dataset needs at least 2 nodes");
  PairDataset ds;
  ds.feature_names = pair_feature_names(top_attr_keys);
  std::set<NodePair> seen;
  const auto add = [&](NodeIndex u, NodeIndex v) {
    const auto key = std::minmax(u, v);
    if (!seen.insert({key.first, key.second}).second) return;
    ds.rows.push_back(pair_features(ctx.message, ctx.distances, u, v, top_attr_keys).values);
    ds.pairs.emplace_back(u, v);
    ds.scores.push_back(emb.score(u, v));
    ds.labels.push_back(ds.scores.back() >= 0.5 ? 1 : 0);
  };
  for (const auto* list : {&ctx.split.test_pos, &ctx.split.test_neg})
    for (auto [u, v] : *list)
      if (ctx.component_of[u] == ctx.component_of[v]) add(u, v);
  ds.split_pairs = ds.rows.size();

  // Uniform over all same-component pairs: pick a component in proportion to
  // its pair count, then two distinct members.
  std::vector<double> cum;
  double total = 0.0;
  for (const auto& c : ctx.components) {
    const auto n = static_cast<double>(c.size());
    total += n * (n - 1) / 2;
    cum.push_back(total);
  }
  Rng rng(derive_seed(seed, {0xd5e7u}));
  for (std::size_t attempt = 0; ds.rows.size() < n_pairs && attempt < 20 * n_pairs; ++attempt) {
    const auto c = static_cast<std::size_t>(std::upper_bound(cum.begin(), cum.end(), rng.uniform01() * total) - cum.begin());
    const auto& comp = ctx.components[std::min(c, ctx.components.size() - 1)];
    if (comp.size() < 2) continue;
    const auto a = rng.uniform_index(comp.size());
    auto b = rng.uniform_index(comp.size() - 1);
    if (b >= a) ++b;
    add(comp.nodes[a], comp.nodes[b]);
  }
  const auto positives = std::count(ds.labels.begin(), ds.labels.end(), 1);
  if (positives == 0 || positives == static_cast<std::ptrdiff_t>(ds.labels.size()))
    fail("single_class", std::string("the model labels every pair as ") + (positives ? "linked" : "not linked") +
                             "; a surrogate needs both classes");
  finalize_dataset(ds);
  return ds;
}

// --- surrogate ----------------------------------------------------------------

double SurrogateModel::probability(std::span<const double> row) const {
  double z = bias;
  for (auto j : inputs) z += weights[j] * (row[j] - mean[j]) / scale[j];
  return 1.0 / (1.0 + std::exp(-z));
}

SurrogateModel train_surrogate(const PairDataset& ds, const SurrogateConfig& cfg, std::span<const std::size_t> columns) {
  require(!ds.rows.empty(), "invalid_argument", "surrogate needs a nonempty dataset");
  const auto pos = std::count(ds.labels.begin(), ds.labels.end(), 1);
  if (pos == 0 || pos == static_cast<std::ptrdiff_t>(ds.labels.size()))
    fail("single_class", "surrogate needs both label classes");
  require(cfg.holdout >= 0.0 && cfg.holdout < 1.0, "invalid_argument", "surrogate holdout must be in [0, 1)");

  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(cfg.seed, {0x5a66u}));
  rng.shuffle(order.begin(), order.end());
  const auto n_hold = static_cast<std::size_t>(std::floor(cfg.holdout * static_cast<double>(ds.size())));
  const auto n_train = ds.size() - n_hold;
  require(n_train >= 1, "invalid_argument", "surrogate has no training rows");

  std::vector<std::size_t> cand;
  if (columns.empty()) {
    cand.resize(ds.dim());
    std::iota(cand.begin(), cand.end(), 0);
  } else {
    cand.assign(columns.begin(), columns.end());
  }

  SurrogateModel m;
  m.mean.assign(ds.dim(), 0.0);
  m.scale.assign(ds.dim(), 1.0);
  m.weights.assign(ds.dim(), 0.0);
  for (auto j : cand) {
    require(j < ds.dim(), "invalid_argument", "surrogate column out of range");
    double mu = 0.0;
    for (std::size_t i = 0; i < n_train; ++i) mu += ds.rows[order[i]][j];
    mu /= static_cast<double>(n_train);
    double var = 0.0;
    for (std::size_t i = 0; i < n_train; ++i) var += (ds.rows[order[i]][j] - mu) * (ds.rows[order[i]][j] - mu);
    const double sd = std::sqrt(var / static_cast<double>(n_train));
    if (sd < 1e-12) continue;  // constant on the training rows: dropped, weight stays 0
    m.mean[j] = mu;
    m.scale[j] = sd;
    m.inputs.push_back(j);
    m.input_names.push_back(ds.feature_names[j]);
  }

  const auto k = m.inputs.size();
  nd::Matrix x(n_train, k), y(n_train, 1);
  for (std::size_t i = 0; i < n_train; ++i) {
    const auto& r = ds.rows[order[i]];
    for (std::size_t c = 0; c < k; ++c) x(i, c) = (r[m.inputs[c]] - m.mean[m.inputs[c]]) / m.scale[m.inputs[c]];
    y(i, 0) = ds.labels[order[i]];
  }
  nd::Matrix w(k, 1), b(1, 1);
  nd::AdamState adam(nd::AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});
  const auto X = nd::constant(std::move(x));
  const auto Y = nd::constant(std::move(y));
  const auto ones = nd::constant(nd::Matrix(n_train, 1, 1.0));
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    nd::Tape tape;
    auto tb = tape.variable(b);
    auto logits = nd::matmul(ones, tb);
    if (k > 0) {
      auto tw = tape.variable(w);
      logits = nd::add(nd::matmul(X, tw), logits);
      const auto loss = nd::binary_cross_entropy_with_logits(logits, Y);
      tape.backward(loss);
      std::array<nd::Matrix*, 2> params{&w, &b};
      std::array<nd::Matrix, 2> grads{tw.grad(), tb.grad()};
      adam_step(params, grads, adam);
    } else {
      const auto loss = nd::binary_cross_entropy_with_logits(logits, Y);
      tape.backward(loss);
      std::array<nd::Matrix*, 1> params{&b};
      std::array<nd::Matrix, 1> grads{tb.grad()};
      adam_step(params, grads, adam);
    }
  }
  for (std::size_t c = 0; c < k; ++c) m.weights[m.inputs[c]] = w(c, 0);
  m.bias = b(0, 0);

  std::size_t agree = 0, counted = 0;
  const auto first = n_hold > 0 ? n_train : 0;
  for (auto i = first; i < ds.size(); ++i, ++counted)
    agree += m.predict(ds.rows[order[i]]) == ds.labels[order[i]] ? 1 : 0;
  m.holdout_rows = n_hold;
  m.fidelity = static_cast<double>(agree) / static_cast<double>(counted);
  return m;
}

// --- predicates ---------------------------------------------------------------

std::string to_string(Relation r) {
  switch (r) {
    case Relation::eq: return "=";
    case Relation::ge: return ">=";
    case Relation::le: return "<=";
    case Relation::in_bin: return "in-bin";
  }
  return "?";
}

namespace {

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", x);
  return buf;
}

}  // namespace

bool Predicate::holds(std::span<const double> row) const {
  const double x = row[feature];
  switch (relation) {
    case Relation::eq: return x == threshold;
    case Relation::ge: return x >= threshold;
    case Relation::le: return x <= threshold;
    case Relation::in_bin: return quartile_bin(edges, x) == bin;
  }
  return false;
}

std::string Predicate::render() const {
  switch (relation) {
    case Relation::eq: return name + "=" + num(threshold);
    case Relation::ge: return name + "≥" + num(threshold);
    case Relation::le: return name + "≤" + num(threshold);
    case Relation::in_bin: {
      const auto i = static_cast<std::size_t>(bin);
      if (bin == 0) return name + "≤" + num(edges[0]);
      if (bin == 3) return name + ">" + num(edges[2]);
      return num(edges[i - 1]) + "<" + name + "≤" + num(edges[i]);
    }
  }
  return name;
}

bool AnchorRule::holds(std::span<const double> row) const {
  return std::all_of(predicates.begin(), predicates.end(), [&](const Predicate& p) { return p.holds(row); });
}

std::string AnchorRule::render() const {
  std::string s = "IF ";
  if (predicates.empty()) s += "(any pair)";
  for (std::size_t i = 0; i < predicates.size(); ++i) s += (i ? " AND " : "") + predicates[i].render();
  s += predicted ? " THEN linked" : " THEN not linked";
  s += ", precision " + num(precision) + ", coverage " + num(coverage);
  if (below_target) s += " (below target)";
  return s;
}

std::vector<Predicate> candidate_predicates(const PairDataset& ds, std::span<const double> instance,
                                            std::span<const std::size_t> allowed) {
  std::vector<std::size_t> feats;
  if (allowed.empty()) {
    feats.resize(ds.dim());
    std::iota(feats.begin(), feats.end(), 0);
  } else {
    feats.assign(allowed.begin(), allowed.end());
    std::sort(feats.begin(), feats.end());
  }
  std::vector<Predicate> out;
  for (auto j : feats) {
    const double x = instance[j];
    const auto& col = ds.columns[j];
    const auto [lo_it, hi_it] = std::minmax_element(col.begin(), col.end());
    const double lo = *lo_it, hi = *hi_it;
    Predicate base;
    base.feature = j;
    base.name = ds.feature_names[j];
    if (ds.binary[j] && (x == 0.0 || x == 1.0)) {
      base.relation = Relation::eq;
      base.threshold = x;
      out.push_back(base);
      continue;
    }
    const auto& q = ds.quartiles[j];
    const int b = quartile_bin(q, x);
    // Smallest and largest data value per quartile bin; thresholds come from
    // bins on the instance's side so the instance always satisfies them.
    std::array<double, 4> bin_min, bin_max;
    std::array<bool, 4> bin_seen{};
    for (double c : col) {
      const auto k = static_cast<std::size_t>(quartile_bin(q, c));
      if (!bin_seen[k]) {
        bin_min[k] = bin_max[k] = c;
        bin_seen[k] = true;
      }
      bin_min[k] = std::min(bin_min[k], c);
      bin_max[k] = std::max(bin_max[k], c);
    }
    const auto bi = static_cast<std::size_t>(b);
    bool bin_is_everything = true;
    for (std::size_t k = 0; k < 4; ++k)
      if (k != bi && bin_seen[k]) bin_is_everything = false;
    if (!bin_is_everything) {
      Predicate p = base;
      p.relation = Relation::in_bin;
      p.bin = b;
      p.edges = q;
      out.push_back(p);
    }
    std::set<double> ge, le;
    for (std::size_t k = 0; k <= bi; ++k)
      if (bin_seen[k]) ge.insert(k == bi ? std::min(bin_min[k], x) : bin_min[k]);
    for (std::size_t k = bi; k < 4; ++k)
      if (bin_seen[k]) le.insert(k == bi ? std::max(bin_max[k], x) : bin_max[k]);
    for (double t : ge)
      if (t > lo && t <= x) {
        Predicate p = base;
        p.relation = Relation::ge;
        p.threshold = t;
        out.push_back(p);
      }
    for (double t : le)
      if (t < hi && t >= x) {
        Predicate p = base;
        p.relation = Relation::le;
        p.threshold = t;
        out.push_back(p);
      }
  }
  return out;
}

double hoeffding_radius(std::size_t n, double delta) {
  require(n > 0 && delta > 0.0 && delta < 1.0, "invalid_argument", "hoeffding_radius needs n > 0 and delta in (0, 1)");
  return std::sqrt(std::log(1.0 / delta) / (2.0 * static_cast<double>(n)));
}

double estimate_precision(const PairClassifier& model, const PairDataset& ds, std::span<const double> instance,
                          std::span<const Predicate> rule, std::size_t n, std::uint64_t seed) {
  require(n > 0, "invalid_argument", "precision estimate needs n > 0");
  const auto d = ds.dim();
  const int target = model(instance);
  // Anchored features are drawn from their marginal restricted to values the
  // rule allows; the rest from the plain marginal.
  std::vector<std::vector<double>> pools(d);
  std::vector<bool> anchored(d, false);
  for (const auto& p : rule) anchored[p.feature] = true;
  for (std::size_t j = 0; j < d; ++j) {
    if (!anchored[j]) continue;
    for (double c : ds.columns[j]) {
      bool ok = true;
      for (const auto& p : rule)
        if (p.feature == j) {
          std::vector<double> probe(instance.begin(), instance.end());
          probe[j] = c;
          ok = ok && p.holds(probe);
        }
      if (ok) pools[j].push_back(c);
    }
    if (pools[j].empty()) pools[j].push_back(instance[j]);
  }
  Rng rng(derive_seed(seed, {0xa4c4u}));
  std::vector<double> row(d);
  std::size_t hits = 0;
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t j = 0; j < d; ++j) {
      const double u = rng.uniform01();  // one draw per (sample, feature), shared by every rule
      const auto& pool = anchored[j] ? pools[j] : ds.columns[j];
      row[j] = pool[std::min(pool.size() - 1, static_cast<std::size_t>(u * static_cast<double>(pool.size())))];
    }
    if (model(row) == target) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(n);
}

namespace {

double coverage_of(const PairDataset& ds, std::span<const Predicate> preds) {
  std::size_t hit = 0;
  for (const auto& r : ds.rows)
    if (std::all_of(preds.begin(), preds.end(), [&](const Predicate& p) { return p.holds(r); })) ++hit;
  return static_cast<double>(hit) / static_cast<double>(ds.size());
}

std::string rule_key(std::vector<Predicate> preds) {
  std::sort(preds.begin(), preds.end(), [](const auto& a, const auto& b) { return a.feature < b.feature; });
  std::string k;
  for (const auto& p : preds) k += p.render() + "|";
  return k;
}

}  // namespace

AnchorRule anchors_explain(const PairClassifier& model, const PairDataset& ds, std::span<const double> instance,
                           const AnchorsConfig& cfg, std::span<const std::size_t> allowed) {
  require(instance.size() == ds.dim(), "invalid_argument", "instance does not match the dataset schema");
  require(cfg.tau > 0.0 && cfg.tau <= 1.0 && cfg.beam >= 1 && cfg.samples >= 1, "invalid_argument",
          "invalid anchors configuration");
  const double radius = hoeffding_radius(cfg.samples, cfg.delta);
  const auto candidates = candidate_predicates(ds, instance, allowed);

  AnchorRule root;
  root.predicted = model(instance);
  root.samples = cfg.samples;
  root.precision = estimate_precision(model, ds, instance, {}, cfg.samples, cfg.seed);
  root.precision_lower = root.precision - radius;
  root.coverage = 1.0;
  std::size_t drawn = cfg.samples;
  const auto finish = [&](AnchorRule r, bool below) {
    r.below_target = below;
    r.total_samples = drawn;
    for (auto& p : r.predicates) p.name = ds.feature_names[p.feature];
    return r;
  };
  if (root.precision_lower >= cfg.tau) return finish(root, false);

  std::vector<AnchorRule> beam{root};
  AnchorRule best = root;
  for (std::size_t depth = 1; depth <= cfg.max_predicates; ++depth) {
    std::vector<AnchorRule> next;
    std::set<std::string> keys;
    for (const auto& parent : beam)
      for (const auto& cand : candidates) {
        if (std::any_of(parent.predicates.begin(), parent.predicates.end(),
                        [&](const Predicate& p) { return p.feature == cand.feature; }))
          continue;
        AnchorRule r = parent;
        r.predicates.push_back(cand);
        if (!keys.insert(rule_key(r.predicates)).second) continue;
        r.precision = estimate_precision(model, ds, instance, r.predicates, cfg.samples, cfg.seed);
        drawn += cfg.samples;
        // Extensions may only keep or raise the parent's precision.
        if (r.precision < parent.precision) continue;
        r.precision_lower = r.precision - radius;
        r.coverage = coverage_of(ds, r.predicates);
        next.push_back(std::move(r));
      }
    if (next.empty()) break;
    std::sort(next.begin(), next.end(), [](const AnchorRule& a, const AnchorRule& b) {
      if (a.precision != b.precision) return a.precision > b.precision;
      if (a.coverage != b.coverage) return a.coverage > b.coverage;
      return a.render() < b.render();
    });
    const AnchorRule* hit = nullptr;
    for (const auto& r : next)
      if (r.precision_lower >= cfg.tau && (!hit || r.coverage > hit->coverage)) hit = &r;
    if (hit) return finish(*hit, false);
    if (next.front().precision > best.precision) best = next.front();
    next.resize(std::min(next.size(), cfg.beam));
    beam = std::move(next);
  }
  return finish(best, true);
}

// --- graph anchors --------------------------------------------------------------

GraphAnchorsResult graph_anchors_explain(const PairDataset& ds, std::span<const double> importance,
                                         std::span<const double> instance, const GraphAnchorsConfig& cfg) {
  require(importance.size() == ds.dim(), "invalid_argument", "importance vector does not match the dataset schema");
  std::vector<std::size_t> order(ds.dim());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return importance[a] > importance[b]; });
  GraphAnchorsResult res;
  res.importance.assign(importance.begin(), importance.end());
  for (auto j : order)
    if (res.selected.size() < cfg.top_features && importance[j] > cfg.min_importance) res.selected.push_back(j);
  if (res.selected.empty())
    fail("empty_feature_subset", "the explainer masks select no feature above the importance floor");
  std::sort(res.selected.begin(), res.selected.end());
  res.surrogate = train_surrogate(ds, cfg.surrogate, res.selected);
  const auto& sur = res.surrogate;
  res.rule = anchors_explain([&sur](std::span<const double> r) { return sur.predict(r); }, ds, instance, cfg.anchors,
                             res.selected);
  for (auto j : res.selected) res.rule.feature_subset.push_back(ds.feature_names[j]);
  return res;
}

}  // namespace ctg
