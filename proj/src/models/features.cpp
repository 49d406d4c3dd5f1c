#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "ctg/error.hpp"
#include "ctg/models.hpp"

namespace ctg {

std::uint64_t stable_hash(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::size_t attribute_slot(std::string_view key, std::string_view value, std::size_t hash_dim) {
  std::string kv;
  kv.reserve(key.size() + value.size() + 1);
  kv.append(key).append("=").append(value);
  return static_cast<std::size_t>(stable_hash(kv) % hash_dim);
}

std::vector<std::string> featurized_keys(const PropertyGraph& g, const FeaturizeSpec& spec) {
  const std::set<std::string> excluded(spec.exclude_keys.begin(), spec.exclude_keys.end());
  std::set<std::string> keys;
  if (!spec.include_keys.empty()) {
    keys.insert(spec.include_keys.begin(), spec.include_keys.end());
  } else {
    std::map<std::string, std::set<std::string>> values;
    for (const auto& n : g.nodes())
      for (const auto& [k, v] : n.attrs) {
        auto& vs = values[k];
        if (vs.size() <= spec.max_cardinality) vs.insert(v);
      }
    for (const auto& [k, vs] : values)
      if (vs.size() <= spec.max_cardinality) keys.insert(k);
  }
  std::vector<std::string> out;
  for (const auto& k : keys)
    if (!excluded.contains(k)) out.push_back(k);
  return out;
}

NodeFeatures featurize(const PropertyGraph& g, const FeaturizeSpec& spec) {
  require(spec.hash_dim >= 1, "invalid_argument", "hash dimension must be >= 1");
  NodeFeatures f;
  f.hash_dim = spec.hash_dim;
  f.keys = featurized_keys(g, spec);
  f.x = nd::Matrix(g.node_count(), spec.hash_dim + 1);
  for (NodeIndex i = 0; i < g.node_count(); ++i) {
    for (const auto& k : f.keys)
      if (const auto* v = g.attr(i, k)) f.x(i, attribute_slot(k, *v, spec.hash_dim)) = 1.0;
    f.x(i, spec.hash_dim) = std::log(1.0 + static_cast<double>(g.degree(i)));
  }
  return f;
}

std::string to_string(ModelType t) { return t == ModelType::gcn ? "gcn" : "pgnn"; }

ModelType parse_model_type(std::string_view s) {
  if (s == "gcn") return ModelType::gcn;
  if (s == "pgnn") return ModelType::pgnn;
  fail("invalid_argument", "unknown model type '" + std::string(s) + "' (expected gcn or pgnn)");
}

}  // namespace ctg
