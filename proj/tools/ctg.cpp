// ctg: command-line front end for the contact-graph link prediction library.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "ctg/error.hpp"
#include "ctg/explain.hpp"
#include "ctg/graph.hpp"
#include "ctg/graphsheet.hpp"
#include "ctg/models.hpp"
#include "ctg/train.hpp"

#ifndef CTG_VERSION
#define CTG_VERSION "0.0.0"
#endif

using json = nlohmann::ordered_json;

namespace {

// ---------------------------------------------------------------------------
// Config sections. Each struct lists its fields once; the same visitor reads
// and writes JSON so the echoed config always round-trips.

struct SynthSection {
  std::size_t nodes = 5000;
  std::size_t components = 40;
  std::size_t community_size = 16;
  std::size_t attach_edges = 2;
  double in_community_prob = 0.85;
  double affinity_prob = 0.25;
};

template <class F>
void visit(SynthSection& s, F&& f) {
  f("nodes", s.nodes);
  f("components", s.components);
  f("community_size", s.community_size);
  f("attach_edges", s.attach_edges);
  f("in_community_prob", s.in_community_prob);
  f("affinity_prob", s.affinity_prob);
}

template <class F>
void visit(ctg::SurrogateConfig& s, F&& f) {
  f("steps", s.steps);
  f("lr", s.lr);
  f("holdout", s.holdout);
}

template <class F>
void visit(ctg::AnchorsConfig& a, F&& f) {
  f("tau", a.tau);
  f("delta", a.delta);
  f("samples", a.samples);
  f("max_predicates", a.max_predicates);
  f("beam", a.beam);
}

template <class F>
void visit(ctg::GnnxConfig& g, F&& f) {
  f("hops", g.hops);
  f("steps", g.steps);
  f("lr", g.lr);
  f("lambda_edge", g.lambda_edge);
  f("lambda_edge_entropy", g.lambda_edge_entropy);
  f("lambda_feat", g.lambda_feat);
  f("lambda_feat_entropy", g.lambda_feat_entropy);
}

template <class F>
void visit(ctg::PathWeights& w, F&& f) {
  f("length", w.length);
  f("specificity", w.specificity);
  f("rarity", w.rarity);
}

template <class F>
void visit(ctg::PathsConfig& p, F&& f) {
  f("max_len", p.max_len);
  f("cap", p.cap);
  f("top_k", p.top_k);
  f("weights", p.weights);
  f("display_key", p.display_key);
}

struct ExplainSection {
  std::size_t dataset_pairs = 2000;
  std::size_t top_features = 5;
  double min_importance = 0.0;
  std::size_t mask_top = 10;
  ctg::SurrogateConfig surrogate;
  ctg::AnchorsConfig anchors;
  ctg::GnnxConfig gnnx;
  ctg::PathsConfig paths;
};

template <class F>
void visit(ExplainSection& e, F&& f) {
  f("dataset_pairs", e.dataset_pairs);
  f("top_features", e.top_features);
  f("min_importance", e.min_importance);
  f("mask_top", e.mask_top);
  f("surrogate", e.surrogate);
  f("anchors", e.anchors);
  f("gnnx", e.gnnx);
  f("paths", e.paths);
}

struct NudgeSection {
  std::size_t samples = 10;
  double t_low = 0.1;
  double t_high = 0.5;
  std::vector<std::string> sensitive{"age_band"};
};

template <class F>
void visit(NudgeSection& n, F&& f) {
  f("samples", n.samples);
  f("t_low", n.t_low);
  f("t_high", n.t_high);
  f("sensitive", n.sensitive);
}

struct AlertSection {
  double tau0 = 0.5;
  double beta = 0.1;
  std::map<std::string, double> risk{{"0-39", 0.0}, {"40-59", 0.5}, {"60+", 1.0}};
};

template <class F>
void visit(AlertSection& a, F&& f) {
  f("tau0", a.tau0);
  f("beta", a.beta);
  f("risk", a.risk);
}

struct GraphsheetSection {
  std::string title = "Contact graph link prediction";
  std::size_t min_component_size = 10;
};

template <class F>
void visit(GraphsheetSection& g, F&& f) {
  f("title", g.title);
  f("min_component_size", g.min_component_size);
}

template <class T>
concept Visitable = requires(T& t) { visit(t, [](const char*, auto&) {}); };

template <class T>
json to_json(T& s);

template <class T>
void from_json(const json& j, T& s, const std::string& where);

struct Writer {
  json& out;
  template <class V>
  void operator()(const char* key, V& v) {
    if constexpr (Visitable<V>)
      out[key] = to_json(v);
    else
      out[key] = v;
  }
};

struct Reader {
  const json& in;
  std::string where;
  std::set<std::string> known;
  template <class V>
  void operator()(const char* key, V& v) {
    known.insert(key);
    if (!in.contains(key)) return;
    if constexpr (Visitable<V>)
      from_json(in.at(key), v, where + "." + key);
    else
      v = in.at(key).get<V>();
  }
};

template <class T>
json to_json(T& s) {
  json j = json::object();
  visit(s, Writer{j});
  return j;
}

template <class T>
void from_json(const json& j, T& s, const std::string& where) {
  ctg::require(j.is_object(), "invalid_config", where + " must be a JSON object");
  Reader r{j, where, {}};
  try {
    visit(s, r);
  } catch (const nlohmann::json::exception& e) {
    ctg::fail("invalid_config", "malformed " + where + ": " + e.what());
  }
  for (const auto& [k, v] : j.items())
    ctg::require(r.known.count(k) > 0, "invalid_config", "unknown key '" + k + "' in " + where);
}

/// Everything a run can be configured with. Loaded from --config, then
/// overridden by flags, then echoed into the artifacts.
struct GlobalConfig {
  std::uint64_t seed = 0;
  SynthSection synth;
  ctg::TrainConfig train;
  ExplainSection explain;
  NudgeSection nudge;
  AlertSection alert;
  GraphsheetSection graphsheet;
};

const std::set<std::string> kSections{"seed", "synth", "train", "explain", "nudge", "alert", "graphsheet"};

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  ctg::require(in.good(), "io_error", "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  ctg::require(out.good(), "io_error", "cannot write " + path);
  out << text;
  ctg::require(out.good(), "io_error", "write failed for " + path);
}

json parse_json_file(const std::string& path) {
  try {
    return json::parse(read_text(path));
  } catch (const nlohmann::json::parse_error& e) {
    ctg::fail("parse_error", path + ": " + e.what());
  }
}

/// Accepts either a config file or any artifact carrying a provenance block,
/// so a run can be repeated from its own output.
GlobalConfig load_config(const std::string& path) {
  GlobalConfig cfg;
  if (path.empty()) return cfg;
  json j = parse_json_file(path);
  if (j.is_object() && j.contains("provenance") && j.at("provenance").is_object() &&
      j.at("provenance").contains("config")) {
    const auto prov = j.at("provenance");
    j = prov.at("config");
    if (prov.contains("seed")) j["seed"] = prov.at("seed");
  }
  ctg::require(j.is_object(), "invalid_config", "config must be a JSON object");
  for (const auto& [k, v] : j.items())
    ctg::require(kSections.count(k) > 0, "invalid_config", "unknown config section '" + k + "'");
  try {
    if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    ctg::fail("invalid_config", std::string("malformed seed: ") + e.what());
  }
  if (j.contains("synth")) from_json(j.at("synth"), cfg.synth, "synth");
  if (j.contains("train")) cfg.train = ctg::train_config_from_json(j.at("train"));
  if (j.contains("explain")) from_json(j.at("explain"), cfg.explain, "explain");
  if (j.contains("nudge")) from_json(j.at("nudge"), cfg.nudge, "nudge");
  if (j.contains("alert")) from_json(j.at("alert"), cfg.alert, "alert");
  if (j.contains("graphsheet")) from_json(j.at("graphsheet"), cfg.graphsheet, "graphsheet");
  return cfg;
}

json provenance(std::uint64_t seed, json config, json inputs) {
  config["seed"] = seed;
  return {{"tool", "ctg"}, {"version", CTG_VERSION}, {"seed", seed}, {"config", std::move(config)},
          {"inputs", std::move(inputs)}};
}

void emit(const json& j, const std::string& out) {
  const auto text = j.dump(2) + "\n";
  if (out.empty())
    std::cout << text;
  else
    write_text(out, text);
}

void warn(const std::string& msg) { std::cerr << "warning: " << msg << "\n"; }

std::pair<std::int64_t, std::int64_t> parse_pair(const std::string& s) {
  const auto comma = s.find(',');
  ctg::require(comma != std::string::npos, "invalid_argument", "pair must look like U,V: " + s);
  try {
    std::size_t p1 = 0, p2 = 0;
    const auto a = std::stoll(s.substr(0, comma), &p1);
    const auto b = std::stoll(s.substr(comma + 1), &p2);
    ctg::require(p1 == comma && p2 == s.size() - comma - 1, "invalid_argument", "pair must look like U,V: " + s);
    return {a, b};
  } catch (const std::logic_error&) {
    ctg::fail("invalid_argument", "pair must look like U,V: " + s);
  }
}

ctg::NodeIndex context_node(const ctg::GraphContext& ctx, std::int64_t id) {
  const auto i = ctx.retained.index_of(id);
  ctg::require(i.has_value(), "invalid_argument",
               "node " + std::to_string(id) + " is missing or lies in a component below the minimum size");
  return *i;
}

bool has_suffix(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

// ---------------------------------------------------------------------------
// Command state. Flag values land in std::optional so that "not given" keeps
// the config file value.

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;

  // ingest / synth
  std::string nodes_path, edges_path;
  std::optional<std::size_t> synth_nodes, synth_components;

  // train / eval / predict / explain / nudge
  std::string graph_path, ckpt_path, metrics_out;
  std::optional<std::string> model;
  std::optional<std::size_t> epochs, reps, threads, hidden, anchors, batch;
  std::optional<double> holdout, lr;
  std::vector<std::string> exclude_keys;
  std::vector<std::string> pairs;
  std::optional<std::size_t> top;

  std::string method;
  std::string dot_path;
  std::optional<std::size_t> max_len, topk, cap, steps, hops, samples, dataset_pairs;
  std::optional<double> tau;

  // graphsheet
  std::vector<std::string> metrics_paths;
  std::string faq_path, markdown_path, timestamp, dataset_provenance;
  std::optional<std::string> title;
  std::optional<double> fidelity;

  // nudge / alert
  std::optional<double> t_low, t_high;
  std::vector<std::string> sensitive;
  double score = 0.0;
  std::string age_band;
};

template <class T>
void apply(const std::optional<T>& flag, T& target) {
  if (flag) target = *flag;
}

GlobalConfig resolve(const Options& o) {
  auto cfg = load_config(o.config_path);
  apply(o.seed, cfg.seed);
  return cfg;
}

// ---------------------------------------------------------------------------
// Subcommands

int run_ingest(const Options& o) {
  auto rep = ctg::ingest_jsonl(o.nodes_path, o.edges_path);
  if (rep.self_loop_warnings) warn(std::to_string(rep.self_loop_warnings) + " self loops dropped");
  if (rep.duplicate_edges) warn(std::to_string(rep.duplicate_edges) + " duplicate edges dropped");
  ctg::save_graph(rep.graph, o.out);
  const json summary{{"out", o.out},
                     {"nodes", rep.graph.node_count()},
                     {"edges", rep.graph.edge_count()},
                     {"self_loops_dropped", rep.self_loop_warnings},
                     {"duplicates_dropped", rep.duplicate_edges},
                     {"provenance", provenance(0, json::object(), {{"nodes", o.nodes_path}, {"edges", o.edges_path}})}};
  emit(summary, "");
  return 0;
}

int run_synth(const Options& o) {
  auto cfg = resolve(o);
  apply(o.synth_nodes, cfg.synth.nodes);
  apply(o.synth_components, cfg.synth.components);
  ctg::SyntheticConfig sc;
  sc.n_nodes = cfg.synth.nodes;
  sc.n_components = cfg.synth.components;
  sc.seed = cfg.seed;
  sc.community_size = cfg.synth.community_size;
  sc.attach_edges = cfg.synth.attach_edges;
  sc.in_community_prob = cfg.synth.in_community_prob;
  sc.affinity_prob = cfg.synth.affinity_prob;
  const auto g = ctg::generate_synthetic(sc);
  ctg::save_graph(g, o.out);
  emit({{"out", o.out},
        {"nodes", g.node_count()},
        {"edges", g.edge_count()},
        {"provenance", provenance(cfg.seed, {{"synth", to_json(cfg.synth)}}, json::object())}},
       "");
  return 0;
}

ctg::TrainConfig resolve_train(const Options& o, const GlobalConfig& cfg) {
  auto t = cfg.train;
  t.seed = cfg.seed;
  if (o.model) t.model.type = ctg::parse_model_type(*o.model);
  apply(o.epochs, t.epochs);
  apply(o.reps, t.repetitions);
  apply(o.threads, t.threads);
  apply(o.hidden, t.model.hidden_dim);
  apply(o.anchors, t.model.anchor_count);
  apply(o.batch, t.batch_components);
  apply(o.holdout, t.model.holdout_frac);
  apply(o.lr, t.adam.lr);
  if (!o.exclude_keys.empty()) t.model.featurize.exclude_keys = o.exclude_keys;
  t.model.seed = t.model.split_seed = t.seed;
  t.validate();
  return t;
}

int run_train(const Options& o) {
  auto cfg = resolve(o);
  cfg.train = resolve_train(o, cfg);
  const auto g = ctg::load_graph(o.graph_path);
  auto result = ctg::train(g, cfg.train);
  auto train_json = ctg::train_config_json(cfg.train);
  train_json.erase("threads");  // does not affect results
  const auto prov = provenance(cfg.seed, {{"train", train_json}}, {{"graph", o.graph_path}});
  auto& ckpt = result.checkpoint;
  json p = prov;
  p["training"] = ckpt.provenance;
  ckpt.provenance = std::move(p);
  ctg::save_checkpoint(ckpt, o.out);
  if (!o.metrics_out.empty()) emit({{"provenance", prov}, {"metrics", ctg::metrics_json(result.metrics)}}, o.metrics_out);
  emit({{"model_type", ctg::to_string(cfg.train.model.type)},
        {"auc_mean", result.metrics.mean},
        {"auc_std", result.metrics.std},
        {"checkpoint", o.out}},
       "");
  return 0;
}

struct Loaded {
  ctg::PropertyGraph graph;
  ctg::ModelCheckpoint ckpt;
  ctg::GraphContext ctx;
};

Loaded load_model(const Options& o) {
  Loaded l;
  l.graph = ctg::load_graph(o.graph_path);
  l.ckpt = ctg::load_checkpoint(o.ckpt_path);
  l.ctx = ctg::build_context(l.graph, l.ckpt.config);
  return l;
}

int run_eval(const Options& o) {
  auto cfg = resolve(o);
  const auto l = load_model(o);
  const auto emb = ctg::embed(l.ckpt, l.ctx);
  const auto ps = ctg::score_split(emb, l.ctx.split);
  const double auc = ctg::roc_auc(ps.scores, ps.labels);
  emit({{"provenance", provenance(cfg.seed, json::object(), {{"graph", o.graph_path}, {"checkpoint", o.ckpt_path}})},
        {"model_type", ctg::to_string(l.ckpt.config.type)},
        {"auc", auc},
        {"test_positives", l.ctx.split.test_pos.size()},
        {"test_negatives", l.ctx.split.test_neg.size()}},
       o.out);
  return 0;
}

int run_predict(const Options& o) {
  auto cfg = resolve(o);
  const auto l = load_model(o);
  const auto emb = ctg::embed(l.ckpt, l.ctx);
  const auto id = [&](ctg::NodeIndex i) { return l.ctx.retained.node(i).id; };
  const auto row = [&](ctg::NodeIndex u, ctg::NodeIndex v) {
    const double s = emb.score(u, v);
    return json{{"u", id(u)},
                {"v", id(v)},
                {"score", s},
                {"linked", s >= 0.5},
                {"observed_edge", l.ctx.retained.adjacent(u, v)},
                {"same_component", l.ctx.component_of[u] == l.ctx.component_of[v]}};
  };
  json preds = json::array();
  for (const auto& p : o.pairs) {
    const auto [a, b] = parse_pair(p);
    preds.push_back(row(context_node(l.ctx, a), context_node(l.ctx, b)));
  }
  json top = json::array();
  if (o.top) {
    // Highest scoring unobserved same-component pairs.
    std::vector<std::tuple<double, ctg::NodeIndex, ctg::NodeIndex>> cand;
    for (const auto& c : l.ctx.components)
      for (std::size_t i = 0; i < c.size(); ++i)
        for (std::size_t j = i + 1; j < c.size(); ++j)
          if (!l.ctx.retained.adjacent(c.nodes[i], c.nodes[j]))
            cand.emplace_back(emb.score(c.nodes[i], c.nodes[j]), c.nodes[i], c.nodes[j]);
    const auto k = std::min(*o.top, cand.size());
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end(),
                      [&](const auto& x, const auto& y) {
                        if (std::get<0>(x) != std::get<0>(y)) return std::get<0>(x) > std::get<0>(y);
                        return std::pair(id(std::get<1>(x)), id(std::get<2>(x))) <
                               std::pair(id(std::get<1>(y)), id(std::get<2>(y)));
                      });
    for (std::size_t i = 0; i < k; ++i) top.push_back(row(std::get<1>(cand[i]), std::get<2>(cand[i])));
  }
  json out{{"provenance", provenance(cfg.seed, json::object(), {{"graph", o.graph_path}, {"checkpoint", o.ckpt_path}})},
           {"predictions", std::move(preds)}};
  if (o.top) out["top_predicted"] = std::move(top);
  emit(out, o.out);
  return 0;
}

int run_explain(const Options& o) {
  auto cfg = resolve(o);
  auto& e = cfg.explain;
  apply(o.max_len, e.paths.max_len);
  apply(o.topk, e.paths.top_k);
  apply(o.cap, e.paths.cap);
  apply(o.steps, e.gnnx.steps);
  apply(o.hops, e.gnnx.hops);
  apply(o.samples, e.anchors.samples);
  apply(o.tau, e.anchors.tau);
  apply(o.dataset_pairs, e.dataset_pairs);
  const auto [a, b] = parse_pair(o.pairs.front());
  json inputs{{"graph", o.graph_path}};
  if (!o.ckpt_path.empty()) inputs["checkpoint"] = o.ckpt_path;
  json section = json::object();
  json out{{"method", o.method}, {"pair", {a, b}}};

  if (o.method == "paths") {
    e.paths.weights.validate();
    section["paths"] = to_json(e.paths);
    const auto g = ctg::load_graph(o.graph_path);
    const auto rp = ctg::explain_by_paths(g, g.require_index(a), g.require_index(b), e.paths);
    if (rp.no_path()) warn("no path of length <= " + std::to_string(e.paths.max_len) + " between the endpoints");
    out["explanation"] = ctg::paths_json(g, rp);
    if (!o.dot_path.empty()) write_text(o.dot_path, ctg::paths_dot(g, rp, e.paths.display_key));
  } else {
    ctg::require(!o.ckpt_path.empty(), "invalid_argument", "--ckpt is required for method " + o.method);
    const auto l = load_model(o);
    const auto u = context_node(l.ctx, a), v = context_node(l.ctx, b);
    const auto emb = ctg::embed(l.ckpt, l.ctx);
    out["score"] = emb.score(u, v);
    auto gx = e.gnnx;
    gx.seed = ctg::derive_seed(cfg.seed, {0x9e0u});
    if (o.method == "gnnx") {
      section["gnnx"] = to_json(e.gnnx);
      section["mask_top"] = e.mask_top;
      const auto me = ctg::explain_link(l.ckpt, l.ctx, u, v, gx);
      out["explanation"] = ctg::mask_json(me, l.ctx, e.mask_top);
      if (!o.dot_path.empty()) write_text(o.dot_path, ctg::mask_dot(me, l.ctx, e.paths.display_key));
    } else {
      section["dataset_pairs"] = e.dataset_pairs;
      section["surrogate"] = to_json(e.surrogate);
      section["anchors"] = to_json(e.anchors);
      const auto keys = ctg::default_top_attr_keys(l.ctx.message, 10);
      const auto ds = ctg::build_pair_dataset(l.ctx, emb, e.dataset_pairs, ctg::derive_seed(cfg.seed, {0xd5u}), keys);
      const auto inst = ctg::pair_features(l.ctx.message, l.ctx.distances, u, v, keys).values;
      auto sc = e.surrogate;
      sc.seed = ctg::derive_seed(cfg.seed, {0x5u});
      auto ac = e.anchors;
      ac.seed = ctg::derive_seed(cfg.seed, {0xa4u});
      if (o.method == "anchors") {
        const auto sur = ctg::train_surrogate(ds, sc);
        const ctg::PairClassifier clf = [&sur](std::span<const double> r) { return sur.predict(r); };
        const auto rule = ctg::anchors_explain(clf, ds, inst, ac);
        if (rule.below_target) warn("no rule reached the precision target; reporting the best found");
        auto rj = ctg::rule_json(rule);
        rj["fidelity"] = sur.fidelity;
        out["explanation"] = std::move(rj);
      } else {
        section["gnnx"] = to_json(e.gnnx);
        section["top_features"] = e.top_features;
        section["min_importance"] = e.min_importance;
        const auto me = ctg::explain_link(l.ckpt, l.ctx, u, v, gx);
        const auto imp = ctg::pair_feature_importance(me, l.ctx, ds.feature_names);
        ctg::GraphAnchorsConfig gc;
        gc.top_features = e.top_features;
        gc.min_importance = e.min_importance;
        gc.surrogate = sc;
        gc.anchors = ac;
        const auto res = ctg::graph_anchors_explain(ds, imp, inst, gc);
        if (res.rule.below_target) warn("no rule reached the precision target; reporting the best found");
        auto rj = ctg::rule_json(res.rule);
        rj["fidelity"] = res.surrogate.fidelity;
        json sel = json::array();
        for (auto c : res.selected) sel.push_back({{"feature", ds.feature_names[c]}, {"importance", res.importance[c]}});
        rj["selected_features"] = std::move(sel);
        out["explanation"] = std::move(rj);
      }
    }
  }
  json result{{"provenance", provenance(cfg.seed, {{"explain", std::move(section)}}, std::move(inputs))}};
  for (auto& [k, v] : out.items()) result[k] = v;
  emit(result, o.out);
  return 0;
}

int run_graphsheet(const Options& o) {
  auto cfg = resolve(o);
  apply(o.title, cfg.graphsheet.title);
  const auto g = ctg::load_graph(o.graph_path);
  std::vector<ctg::ModelSummary> models;
  json inputs{{"graph", o.graph_path}, {"metrics", o.metrics_paths}};
  for (const auto& p : o.metrics_paths) {
    const auto j = parse_json_file(p);
    ctg::ModelSummary m;
    try {
      m.metrics = ctg::metrics_from_json(j.at("metrics"));
      m.config = ctg::train_config_from_json(j.at("provenance").at("config").at("train"));
    } catch (const nlohmann::json::exception& ex) {
      ctg::fail("parse_error", p + " is not a metrics file written by 'ctg train': " + ex.what());
    }
    models.push_back(std::move(m));
  }
  std::vector<ctg::FaqEntry> faq;
  if (!o.faq_path.empty()) {
    faq = ctg::parse_faq(read_text(o.faq_path));
    inputs["faq"] = o.faq_path;
  }
  ctg::GraphsheetOptions opt;
  opt.title = cfg.graphsheet.title;
  opt.provenance = o.dataset_provenance;
  opt.train_timestamp = o.timestamp;
  opt.min_component_size = cfg.graphsheet.min_component_size;
  opt.surrogate_fidelity = o.fidelity;
  opt.path_weights = cfg.explain.paths.weights;
  auto sheet = ctg::build_graphsheet(g, models, faq, opt);
  sheet["provenance"] =
      provenance(cfg.seed, {{"graphsheet", to_json(cfg.graphsheet)}, {"path_weights", to_json(opt.path_weights)}},
                 std::move(inputs));
  const auto errors = ctg::validate_json(sheet, ctg::graphsheet_schema());
  if (!errors.empty()) {
    std::string msg = "graphsheet does not match its schema:";
    for (const auto& err : errors) msg += " " + err + ";";
    ctg::fail("schema_violation", msg);
  }
  if (has_suffix(o.out, ".md")) {
    write_text(o.out, ctg::graphsheet_markdown(sheet));
  } else {
    emit(sheet, o.out);
  }
  if (!o.markdown_path.empty()) write_text(o.markdown_path, ctg::graphsheet_markdown(sheet));
  return 0;
}

int run_nudge(const Options& o) {
  auto cfg = resolve(o);
  auto& n = cfg.nudge;
  apply(o.samples, n.samples);
  apply(o.t_low, n.t_low);
  apply(o.t_high, n.t_high);
  apply(o.dataset_pairs, cfg.explain.dataset_pairs);
  apply(o.steps, cfg.explain.gnnx.steps);
  if (!o.sensitive.empty()) n.sensitive = o.sensitive;
  ctg::NudgePolicy policy{n.t_low, n.t_high, n.sensitive};
  policy.validate();
  const auto l = load_model(o);
  ctg::ImportanceConfig ic;
  ic.samples = n.samples;
  ic.seed = cfg.seed;
  ic.dataset_pairs = cfg.explain.dataset_pairs;
  ic.gnnx = cfg.explain.gnnx;
  ic.anchors = cfg.explain.anchors;
  ic.surrogate = cfg.explain.surrogate;
  const auto rep = ctg::global_feature_importance(l.ckpt, l.ctx, ic);
  if (rep.shortfall)
    warn("only " + std::to_string(rep.used) + " predicted links available; requested " + std::to_string(rep.requested));
  const auto recs = ctg::nudge_recommendations(rep, policy);
  json section{{"nudge", to_json(n)},
               {"explain",
                {{"dataset_pairs", cfg.explain.dataset_pairs},
                 {"surrogate", to_json(cfg.explain.surrogate)},
                 {"anchors", to_json(cfg.explain.anchors)},
                 {"gnnx", to_json(cfg.explain.gnnx)}}}};
  emit({{"provenance", provenance(cfg.seed, std::move(section), {{"graph", o.graph_path}, {"checkpoint", o.ckpt_path}})},
        {"importance", ctg::importance_json(rep)},
        {"nudges", ctg::recommendations_json(recs, policy)}},
       o.out);
  return 0;
}

int run_alert(const Options& o) {
  auto cfg = resolve(o);
  ctg::AlertPolicy policy;
  policy.tau0 = cfg.alert.tau0;
  policy.beta = cfg.alert.beta;
  policy.risk.assign(cfg.alert.risk.begin(), cfg.alert.risk.end());
  const auto d = ctg::alert_decision(o.score, o.age_band, policy);
  if (d.unknown_band) warn("unknown age band '" + d.band + "' treated as risk 0");
  auto j = ctg::alert_json(d);
  j["provenance"] = provenance(cfg.seed, {{"alert", to_json(cfg.alert)}}, json::object());
  emit(j, o.out);
  return 0;
}

void error_json(const std::string& kind, const std::string& message) {
  std::cerr << json{{"error", {{"kind", kind}, {"message", message}}}}.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ctg: exposure-link prediction on contact graphs, with explanations and graphsheets"};
  app.set_version_flag("--version", CTG_VERSION);
  app.require_subcommand(1);
  Options o;
  app.add_option("--config", o.config_path, "JSON config file (or an artifact with a provenance block)")
      ->check(CLI::ExistingFile);

  auto add_seed = [&](CLI::App* c) { c->add_option("--seed", o.seed, "Random seed"); };
  auto add_out = [&](CLI::App* c, bool required) {
    auto* opt = c->add_option("--out", o.out, "Output file (stdout when omitted)");
    if (required) opt->required();
  };
  auto add_model_inputs = [&](CLI::App* c) {
    c->add_option("--graph", o.graph_path, "Graph file (G.bin)")->required()->check(CLI::ExistingFile);
    c->add_option("--ckpt", o.ckpt_path, "Model checkpoint")->required()->check(CLI::ExistingFile);
  };

  auto* ingest = app.add_subcommand("ingest", "Convert node/edge JSONL files into a graph file");
  ingest->add_option("--nodes", o.nodes_path, "Node JSONL")->required()->check(CLI::ExistingFile);
  ingest->add_option("--edges", o.edges_path, "Edge JSONL")->required()->check(CLI::ExistingFile);
  add_out(ingest, true);

  auto* synth = app.add_subcommand("synth", "Generate a synthetic contact graph");
  synth->add_option("--nodes", o.synth_nodes, "Number of people");
  synth->add_option("--components", o.synth_components, "Number of connected components");
  add_seed(synth);
  add_out(synth, true);

  auto* train = app.add_subcommand("train", "Train a link prediction model over repeated splits");
  train->add_option("--graph", o.graph_path, "Graph file")->required()->check(CLI::ExistingFile);
  train->add_option("--model", o.model, "Model type")->check(CLI::IsMember({"gcn", "pgnn"}));
  train->add_option("--epochs", o.epochs, "Epochs per repetition");
  train->add_option("--reps", o.reps, "Repetitions (independent split and seed)");
  train->add_option("--threads", o.threads, "Repetitions trained concurrently");
  train->add_option("--hidden", o.hidden, "Hidden width");
  train->add_option("--anchors", o.anchors, "P-GNN anchors per component");
  train->add_option("--batch", o.batch, "Components per batch");
  train->add_option("--holdout", o.holdout, "Held-out edge fraction");
  train->add_option("--lr", o.lr, "Adam learning rate");
  train->add_option("--exclude-keys", o.exclude_keys, "Attribute keys never featurized")->delimiter(',');
  add_seed(train);
  add_out(train, true);
  train->add_option("--metrics", o.metrics_out, "Metrics JSON output");

  auto* eval = app.add_subcommand("eval", "ROC AUC of a checkpoint on its held-out split");
  add_model_inputs(eval);
  add_seed(eval);
  add_out(eval, false);

  auto* predict = app.add_subcommand("predict", "Score node pairs");
  add_model_inputs(predict);
  predict->add_option("--pair", o.pairs, "Pair of node ids U,V (repeatable)");
  predict->add_option("--top", o.top, "Also list the K highest scoring unobserved pairs");
  add_seed(predict);
  add_out(predict, false);

  auto* explain = app.add_subcommand("explain", "Explain one predicted link");
  explain->add_option("--method", o.method, "Explanation method")
      ->required()
      ->check(CLI::IsMember({"anchors", "graph-anchors", "gnnx", "paths"}));
  explain->add_option("--pair", o.pairs, "Pair of node ids U,V")->required()->expected(1);
  explain->add_option("--graph", o.graph_path, "Graph file")->required()->check(CLI::ExistingFile);
  explain->add_option("--ckpt", o.ckpt_path, "Model checkpoint (all methods but paths)")->check(CLI::ExistingFile);
  explain->add_option("--max-len", o.max_len, "Longest path in edges (paths)")->check(CLI::Range(1, 6));
  explain->add_option("--topk", o.topk, "Paths to report (paths)");
  explain->add_option("--cap", o.cap, "Enumeration cap (paths)");
  explain->add_option("--steps", o.steps, "Mask optimization steps (gnnx, graph-anchors)");
  explain->add_option("--hops", o.hops, "Subgraph radius (gnnx, graph-anchors)");
  explain->add_option("--samples", o.samples, "Perturbation samples per rule (anchors)");
  explain->add_option("--tau", o.tau, "Precision target (anchors)");
  explain->add_option("--dataset-pairs", o.dataset_pairs, "Pairs in the surrogate dataset (anchors)");
  explain->add_option("--dot", o.dot_path, "Also write a DOT rendering (gnnx, paths)");
  add_seed(explain);
  add_out(explain, false);

  auto* sheet = app.add_subcommand("graphsheet", "Build a graphsheet from a graph and training metrics");
  sheet->add_option("--graph", o.graph_path, "Graph file")->required()->check(CLI::ExistingFile);
  sheet->add_option("--metrics", o.metrics_paths, "metrics.json from 'ctg train' (repeatable)")
      ->required()
      ->check(CLI::ExistingFile);
  sheet->add_option("--faq", o.faq_path, "FAQ JSON array of {question, answer}")->check(CLI::ExistingFile);
  sheet->add_option("--timestamp", o.timestamp, "Training timestamp recorded in the sheet");
  sheet->add_option("--title", o.title, "Sheet title");
  sheet->add_option("--dataset-provenance", o.dataset_provenance, "Where the dataset came from");
  sheet->add_option("--surrogate-fidelity", o.fidelity, "Surrogate fidelity to report")->check(CLI::Range(0.0, 1.0));
  sheet->add_option("--markdown", o.markdown_path, "Also write the Markdown rendering");
  add_seed(sheet);
  add_out(sheet, true);

  auto* nudge = app.add_subcommand("nudge", "Feature importance and data-collection recommendations");
  add_model_inputs(nudge);
  nudge->add_option("--samples", o.samples, "Predicted links to explain (>= 10)");
  nudge->add_option("--t-low", o.t_low, "Importance below which a field is optional");
  nudge->add_option("--t-high", o.t_high, "Importance above which sensitive fields stay on device");
  nudge->add_option("--sensitive", o.sensitive, "Sensitive field names")->delimiter(',');
  nudge->add_option("--steps", o.steps, "Mask optimization steps");
  nudge->add_option("--dataset-pairs", o.dataset_pairs, "Pairs in the surrogate dataset");
  add_seed(nudge);
  add_out(nudge, false);

  auto* alert = app.add_subcommand("alert", "Risk-adjusted alert decision for one link score");
  alert->add_option("--score", o.score, "Link score in [0, 1]")->required();
  alert->add_option("--age-band", o.age_band, "Age band, e.g. 0-39, 40-59, 60+")->required();
  add_out(alert, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*ingest) return run_ingest(o);
    if (*synth) return run_synth(o);
    if (*train) return run_train(o);
    if (*eval) return run_eval(o);
    if (*predict) {
      if (o.pairs.empty() && !o.top) {
        std::cerr << "predict needs --pair or --top\n" << predict->help();
        return 2;
      }
      return run_predict(o);
    }
    if (*explain) return run_explain(o);
    if (*sheet) return run_graphsheet(o);
    if (*nudge) return run_nudge(o);
    if (*alert) return run_alert(o);
  } catch (const ctg::Error& e) {
    error_json(e.kind(), e.what());
    return 1;
  } catch (const std::exception& e) {
    error_json("internal_error", e.what());
    return 1;
  }
  return 2;
}
