#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "ctg/error.hpp"
#include "ctg/graphsheet.hpp"

namespace ctg {

namespace detail {
extern const std::string_view kGraphsheetSchema;
}

using json = nlohmann::ordered_json;

// --- schema validation --------------------------------------------------------

namespace {

bool has_type(const json& v, const std::string& t) {
  if (t == "object") return v.is_object();
  if (t == "array") return v.is_array();
  if (t == "string") return v.is_string();
  if (t == "boolean") return v.is_boolean();
  if (t == "null") return v.is_null();
  if (t == "number") return v.is_number();
  if (t == "integer") return v.is_number_integer() || (v.is_number_float() && std::floor(v.get<double>()) == v.get<double>());
  return false;
}

void validate_at(const json& v, const json& s, const std::string& path, std::vector<std::string>& errs) {
  const auto where = path.empty() ? std::string("/") : path;
  if (s.contains("type")) {
    const auto& t = s["type"];
    bool ok = false;
    if (t.is_string()) ok = has_type(v, t.get<std::string>());
    else
      for (const auto& x : t) ok = ok || has_type(v, x.get<std::string>());
    if (!ok) {
      errs.push_back(where + ": expected type " + t.dump());
      return;
    }
  }
  if (s.contains("const") && v != s["const"]) errs.push_back(where + ": must equal " + s["const"].dump());
  if (s.contains("enum") && std::find(s["enum"].begin(), s["enum"].end(), v) == s["enum"].end())
    errs.push_back(where + ": not one of " + s["enum"].dump());
  if (v.is_number()) {
    const double x = v.get<double>();
    if (s.contains("minimum") && x < s["minimum"].get<double>()) errs.push_back(where + ": below minimum");
    if (s.contains("maximum") && x > s["maximum"].get<double>()) errs.push_back(where + ": above maximum");
  }
  if (v.is_string() && s.contains("minLength") && v.get<std::string>().size() < s["minLength"].get<std::size_t>())
    errs.push_back(where + ": shorter than minLength");
  if (v.is_object()) {
    if (s.contains("required"))
      for (const auto& k : s["required"])
        if (!v.contains(k.get<std::string>())) errs.push_back(where + ": missing required key '" + k.get<std::string>() + "'");
    const bool closed = s.contains("additionalProperties") && s["additionalProperties"] == false;
    for (const auto& [k, child] : v.items()) {
      if (s.contains("properties") && s["properties"].contains(k))
        validate_at(child, s["properties"][k], path + "/" + k, errs);
      else if (closed)
        errs.push_back(where + ": unexpected key '" + k + "'");
    }
  }
  if (v.is_array()) {
    if (s.contains("minItems") && v.size() < s["minItems"].get<std::size_t>()) errs.push_back(where + ": too few items");
    if (s.contains("items"))
      for (std::size_t i = 0; i < v.size(); ++i) validate_at(v[i], s["items"], path + "/" + std::to_string(i), errs);
  }
}

}  // namespace

std::vector<std::string> validate_json(const json& instance, const json& schema) {
  std::vector<std::string> errs;
  validate_at(instance, schema, "", errs);
  return errs;
}

std::string_view graphsheet_schema_text() { return detail::kGraphsheetSchema; }

const json& graphsheet_schema() {
  static const json schema = json::parse(detail::kGraphsheetSchema);
  return schema;
}

// --- FAQ ----------------------------------------------------------------------

std::vector<FaqEntry> parse_faq(std::string_view text) {
  if (text.find_first_not_of(" \t\r\n") == std::string_view::npos) return {};
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    fail("parse_error", std::string("FAQ file is not valid JSON: ") + e.what());
  }
  if (!j.is_array()) fail("parse_error", "FAQ file must hold a JSON array of {question, answer} objects");
  std::vector<FaqEntry> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const auto& e = j[i];
    if (!e.is_object() || !e.contains("question") || !e.contains("answer") || !e["question"].is_string() ||
        !e["answer"].is_string() || e["question"].get<std::string>().empty())
      fail("parse_error", "FAQ entry " + std::to_string(i) + " needs string fields 'question' and 'answer'");
    out.push_back({e["question"].get<std::string>(), e["answer"].get<std::string>()});
  }
  return out;
}

// --- facts --------------------------------------------------------------------

namespace {

double quantile_sorted(const std::vector<double>& s, double q) {
  if (s.empty()) return 0.0;
  const double pos = q * static_cast<double>(s.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, s.size() - 1);
  return s[lo] + (pos - static_cast<double>(lo)) * (s[hi] - s[lo]);
}

std::string join(const std::vector<std::string>& xs, std::string_view sep) {
  std::string s;
  for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? std::string(sep) : "") + xs[i];
  return s;
}

std::string fmt(double x, const char* spec = "%.4f") {
  char buf[48];
  std::snprintf(buf, sizeof buf, spec, x);
  return buf;
}

}  // namespace

DatasetFacts dataset_facts(const PropertyGraph& g, std::size_t min_component_size) {
  DatasetFacts f;
  f.nodes = g.node_count();
  f.edges = g.edge_count();
  f.node_pairs = g.pair_count();
  const auto ci = connected_components(g, min_component_size);
  f.components = ci.count();
  f.retained_components = ci.retained.size();
  for (auto c : ci.retained) f.retained_nodes += ci.sizes[c];
  for (auto s : ci.sizes) f.largest_component = std::max(f.largest_component, s);

  std::map<std::string, std::size_t> keys;
  for (const auto& n : g.nodes())
    for (const auto& [k, v] : n.attrs) ++keys[k];
  for (const auto& [k, c] : keys)
    f.attribute_coverage.emplace_back(k, f.nodes ? static_cast<double>(c) / static_cast<double>(f.nodes) : 0.0);

  std::map<std::string, std::size_t> types;
  for (const auto& e : g.edges()) ++types[e.etype];
  f.edge_types.assign(types.begin(), types.end());

  std::vector<double> deg;
  for (NodeIndex i = 0; i < g.node_count(); ++i) deg.push_back(static_cast<double>(g.degree(i)));
  std::sort(deg.begin(), deg.end());
  f.degree_quantiles = {deg.empty() ? 0.0 : deg.front(), quantile_sorted(deg, 0.25), quantile_sorted(deg, 0.5),
                        quantile_sorted(deg, 0.75), deg.empty() ? 0.0 : deg.back()};
  double sum = 0.0;
  for (double d : deg) sum += d;
  f.mean_degree = deg.empty() ? 0.0 : sum / static_cast<double>(deg.size());
  return f;
}

json build_graphsheet(const PropertyGraph& g, std::span<const ModelSummary> models, std::span<const FaqEntry> faq,
                      const GraphsheetOptions& opt) {
  require(!models.empty(), "invalid_argument", "a graphsheet needs metrics for at least one model");
  const auto f = dataset_facts(g, opt.min_component_size);

  json coverage = json::array(), etypes = json::array();
  for (const auto& [k, x] : f.attribute_coverage) coverage.push_back({{"key", k}, {"fraction", x}});
  for (const auto& [t, c] : f.edge_types) etypes.push_back({{"etype", t}, {"count", c}});
  json dataset{{"nodes", f.nodes},
               {"edges", f.edges},
               {"node_pairs", f.node_pairs},
               {"components", f.components},
               {"min_component_size", opt.min_component_size},
               {"retained_components", f.retained_components},
               {"retained_nodes", f.retained_nodes},
               {"largest_component", f.largest_component},
               {"attribute_coverage", std::move(coverage)},
               {"edge_types", std::move(etypes)},
               {"degree",
                {{"min", f.degree_quantiles[0]},
                 {"q25", f.degree_quantiles[1]},
                 {"median", f.degree_quantiles[2]},
                 {"q75", f.degree_quantiles[3]},
                 {"max", f.degree_quantiles[4]},
                 {"mean", f.mean_degree}}},
               {"provenance", opt.provenance}};

  json model_list = json::array(), metric_list = json::array();
  std::vector<std::string> used_keys, excluded;
  for (const auto& m : models) {
    const auto& c = m.config;
    const auto keys = featurized_keys(g, c.model.featurize);
    for (const auto& k : keys)
      if (std::find(used_keys.begin(), used_keys.end(), k) == used_keys.end()) used_keys.push_back(k);
    for (const auto& k : c.model.featurize.exclude_keys)
      if (std::find(excluded.begin(), excluded.end(), k) == excluded.end()) excluded.push_back(k);
    model_list.push_back({{"type", to_string(c.model.type)},
                          {"hidden_dim", c.model.hidden_dim},
                          {"output_dim", c.model.output_dim},
                          {"anchor_count", c.model.anchor_count},
                          {"distance_cutoff", c.model.distance_cutoff},
                          {"seed", c.seed},
                          {"epochs", c.epochs},
                          {"batch_components", c.batch_components},
                          {"repetitions", c.repetitions},
                          {"holdout_frac", c.model.holdout_frac},
                          {"featurized_keys", keys},
                          {"excluded_keys", c.model.featurize.exclude_keys},
                          {"train_timestamp", opt.train_timestamp}});
    metric_list.push_back({{"model_type", to_string(m.metrics.model_type)},
                           {"repetitions", m.metrics.auc.size()},
                           {"auc", m.metrics.auc},
                           {"mean", m.metrics.mean},
                           {"std", m.metrics.std},
                           {"std_kind", "population"}});
  }
  std::sort(used_keys.begin(), used_keys.end());
  std::vector<std::string> unused;
  for (const auto& [k, x] : f.attribute_coverage)
    if (std::find(used_keys.begin(), used_keys.end(), k) == used_keys.end()) unused.push_back(k);

  std::vector<FaqEntry> auto_faq;
  auto_faq.push_back({"Which personal fields does the model use?",
                      (used_keys.empty() ? std::string("No attribute fields") : join(used_keys, ", ")) +
                          " (each key=value hashed into an indicator slot) plus node degree." +
                          (unused.empty() ? "" : " Not used: " + join(unused, ", ") + ".")});
  if (!excluded.empty())
    auto_faq.push_back({"Which fields stay on the user's device?",
                        join(excluded, ", ") + " never enter model features; they are only used locally, for "
                                               "example to tailor alerts."});
  auto_faq.push_back({"How is link prediction quality measured?",
                      "ROC AUC on held-out links against an equal number of sampled unconnected pairs, repeated over "
                      "independent splits and seeds; the reported spread is the population standard deviation."});
  auto_faq.push_back({"How are path explanations ranked?",
                      "Each existing path gets " + fmt(opt.path_weights.length, "%.2f") + " x (1 / length) + " +
                          fmt(opt.path_weights.specificity, "%.2f") +
                          " x (1 / geometric mean degree of intermediate people) + " +
                          fmt(opt.path_weights.rarity, "%.2f") + " x (edge-type rarity)."});

  json faq_list = json::array();
  for (const auto& a : auto_faq) {
    auto answer = a.answer;
    for (const auto& u : faq)
      if (u.question == a.question) answer = u.answer;
    faq_list.push_back({{"question", a.question}, {"answer", answer}});
  }
  for (const auto& u : faq)
    if (std::none_of(auto_faq.begin(), auto_faq.end(), [&](const FaqEntry& a) { return a.question == u.question; }))
      faq_list.push_back({{"question", u.question}, {"answer", u.answer}});

  json sheet;
  sheet["schema_version"] = "graphsheet/v1";
  sheet["title"] = opt.title;
  sheet["dataset"] = std::move(dataset);
  sheet["models"] = std::move(model_list);
  sheet["metrics"] = std::move(metric_list);
  sheet["explainability"] = {
      {"methods", {"anchors", "graph-anchors", "gnnx", "paths"}},
      {"surrogate_fidelity", opt.surrogate_fidelity ? json(*opt.surrogate_fidelity) : json(nullptr)},
      {"path_ranking_weights",
       {{"length", opt.path_weights.length},
        {"specificity", opt.path_weights.specificity},
        {"rarity", opt.path_weights.rarity}}}};
  sheet["faq"] = std::move(faq_list);
  return sheet;
}

std::string graphsheet_markdown(const json& s) {
  const auto num = [](const json& v) {
    if (v.is_number_integer() || v.is_number_unsigned()) return v.dump();
    if (v.is_number()) return fmt(v.get<double>());
    if (v.is_null()) return std::string("n/a");
    if (v.is_string()) return v.get<std::string>();
    return v.dump();
  };
  std::string md = "# " + s.at("title").get<std::string>() + "\n\nSchema: " + s.at("schema_version").get<std::string>() + "\n\n";
  const auto& d = s.at("dataset");
  md += "## Dataset\n\n| Fact | Value |\n|---|---|\n";
  for (const char* k : {"nodes", "edges", "node_pairs", "components", "min_component_size", "retained_components",
                        "retained_nodes", "largest_component"})
    md += std::string("| ") + k + " | " + num(d.at(k)) + " |\n";
  for (const auto& [k, v] : d.at("degree").items()) md += "| degree " + k + " | " + num(v) + " |\n";
  md += "| provenance | " + d.at("provenance").get<std::string>() + " |\n\n";
  md += "### Attribute coverage\n\n| Key | Fraction |\n|---|---|\n";
  for (const auto& a : d.at("attribute_coverage")) md += "| " + a.at("key").get<std::string>() + " | " + num(a.at("fraction")) + " |\n";
  md += "\n### Edge types\n\n| Type | Count |\n|---|---|\n";
  for (const auto& e : d.at("edge_types")) md += "| " + e.at("etype").get<std::string>() + " | " + num(e.at("count")) + " |\n";

  md += "\n## Models\n";
  for (const auto& m : s.at("models")) {
    md += "\n### " + m.at("type").get<std::string>() + "\n\n| Setting | Value |\n|---|---|\n";
    for (const auto& [k, v] : m.items()) {
      if (k == "type") continue;
      std::string val;
      if (v.is_array()) {
        std::vector<std::string> xs;
        for (const auto& x : v) xs.push_back(x.get<std::string>());
        val = xs.empty() ? "(none)" : join(xs, ", ");
      } else {
        val = num(v);
      }
      md += "| " + k + " | " + val + " |\n";
    }
  }
  md += "\n## Metrics\n\n| Model | Repetitions | Mean ROC AUC | Std. dev. (population) | Per-repetition AUC |\n|---|---|---|---|---|\n";
  for (const auto& m : s.at("metrics")) {
    std::vector<std::string> runs;
    for (const auto& a : m.at("auc")) runs.push_back(num(a));
    md += "| " + m.at("model_type").get<std::string>() + " | " + num(m.at("repetitions")) + " | " + num(m.at("mean")) +
          " | " + num(m.at("std")) + " | " + join(runs, ", ") + " |\n";
  }
  const auto& x = s.at("explainability");
  std::vector<std::string> methods;
  for (const auto& m : x.at("methods")) methods.push_back(m.get<std::string>());
  md += "\n## Explainability\n\n| Item | Value |\n|---|---|\n| methods | " + join(methods, ", ") + " |\n";
  md += "| surrogate fidelity | " + num(x.at("surrogate_fidelity")) + " |\n";
  for (const auto& [k, v] : x.at("path_ranking_weights").items()) md += "| path weight " + k + " | " + num(v) + " |\n";
  md += "\n## FAQ\n";
  for (const auto& q : s.at("faq"))
    md += "\n**" + q.at("question").get<std::string>() + "**\n\n" + q.at("answer").get<std::string>() + "\n";
  return md;
}

}  // namespace ctg
