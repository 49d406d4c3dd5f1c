#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "ctg/error.hpp"
#include "ctg/models.hpp"

namespace ctg {

using json = nlohmann::ordered_json;

namespace {

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

double parse_double(const std::string& s, const std::string& where) {
  errno = 0;
  char* end = nullptr;
  const double x = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size() || errno == ERANGE || !std::isfinite(x))
    fail("corrupt_checkpoint", "weight " + where + ": '" + s + "' is not a finite decimal");
  return x;
}

json matrix_json(const std::string& name, const nd::Matrix& m) {
  json values = json::array();
  for (double x : m.data()) values.push_back(format_double(x));
  return json{{"name", name}, {"shape", {m.rows(), m.cols()}}, {"values", std::move(values)}};
}

nd::Matrix matrix_from_json(const json& j, const std::string& expected_name) {
  const auto name = j.at("name").get<std::string>();
  if (name != expected_name) fail("corrupt_checkpoint", "expected weight '" + expected_name + "', found '" + name + "'");
  const auto& shape = j.at("shape");
  if (!shape.is_array() || shape.size() != 2) fail("corrupt_checkpoint", "weight " + name + ": shape must be [rows, cols]");
  const auto rows = shape[0].get<std::size_t>(), cols = shape[1].get<std::size_t>();
  const auto& values = j.at("values");
  if (!values.is_array() || values.size() != rows * cols)
    fail("corrupt_checkpoint", "weight " + name + ": expected " + std::to_string(rows * cols) + " values, found " +
                                   std::to_string(values.is_array() ? values.size() : 0));
  nd::Matrix m(rows, cols);
  for (std::size_t i = 0; i < values.size(); ++i)
    m.data()[i] = parse_double(values[i].get<std::string>(), name + "[" + std::to_string(i) + "]");
  return m;
}

json config_json(const ModelConfig& c) {
  return json{{"hidden_dim", c.hidden_dim},
              {"output_dim", c.output_dim},
              {"anchor_count", c.anchor_count},
              {"distance_cutoff", c.distance_cutoff},
              {"seed", c.seed},
              {"featurize",
               {{"hash_dim", c.featurize.hash_dim},
                {"include_keys", c.featurize.include_keys},
                {"max_cardinality", c.featurize.max_cardinality},
                {"exclude_keys", c.featurize.exclude_keys}}},
              {"min_component_size", c.min_component_size},
              {"holdout_frac", format_double(c.holdout_frac)},
              {"split_seed", c.split_seed}};
}

ModelConfig config_from_json(const json& j, ModelType type) {
  ModelConfig c;
  c.type = type;
  c.hidden_dim = j.at("hidden_dim").get<std::size_t>();
  c.output_dim = j.at("output_dim").get<std::size_t>();
  c.anchor_count = j.at("anchor_count").get<std::size_t>();
  c.distance_cutoff = j.at("distance_cutoff").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  const auto& f = j.at("featurize");
  c.featurize.hash_dim = f.at("hash_dim").get<std::size_t>();
  c.featurize.include_keys = f.at("include_keys").get<std::vector<std::string>>();
  c.featurize.max_cardinality = f.at("max_cardinality").get<std::size_t>();
  c.featurize.exclude_keys = f.at("exclude_keys").get<std::vector<std::string>>();
  c.min_component_size = j.at("min_component_size").get<std::size_t>();
  c.holdout_frac = parse_double(j.at("holdout_frac").get<std::string>(), "holdout_frac");
  c.split_seed = j.at("split_seed").get<std::uint64_t>();
  return c;
}

}  // namespace

std::string serialize_checkpoint(const ModelCheckpoint& ckpt) {
  json weights = json::array();
  if (const auto* g = std::get_if<GcnModel>(&ckpt.weights)) {
    weights.push_back(matrix_json("w0", g->w0));
    weights.push_back(matrix_json("w1", g->w1));
  } else {
    const auto& p = std::get<PgnnModel>(ckpt.weights);
    weights.push_back(matrix_json("w_hidden", p.w_hidden));
    weights.push_back(matrix_json("w_out", p.w_out));
  }
  json j;
  j["format_version"] = ModelCheckpoint::kFormatVersion;
  j["model_type"] = to_string(ckpt.config.type);
  j["config"] = config_json(ckpt.config);
  j["weights"] = std::move(weights);
  j["anchors"] = ckpt.anchors;
  j["provenance"] = ckpt.provenance;
  return j.dump(2) + "\n";
}

ModelCheckpoint parse_checkpoint(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    fail("parse_error", std::string("checkpoint is not valid JSON: ") + e.what());
  }
  try {
    if (!j.is_object()) fail("parse_error", "checkpoint must be a JSON object");
    const auto version = j.at("format_version").get<int>();
    if (version != ModelCheckpoint::kFormatVersion)
      fail("version_mismatch", "checkpoint format version " + std::to_string(version) + " is not supported (expected " +
                                   std::to_string(ModelCheckpoint::kFormatVersion) + ")");
    ModelCheckpoint ckpt;
    ckpt.config = config_from_json(j.at("config"), parse_model_type(j.at("model_type").get<std::string>()));
    const auto& w = j.at("weights");
    if (!w.is_array() || w.size() != 2) fail("corrupt_checkpoint", "checkpoint must hold exactly two weight arrays");
    if (ckpt.config.type == ModelType::gcn) {
      GcnModel g{matrix_from_json(w[0], "w0"), matrix_from_json(w[1], "w1")};
      if (g.w0.cols() != g.w1.rows()) fail("corrupt_checkpoint", "gcn weight shapes are inconsistent");
      ckpt.weights = std::move(g);
    } else {
      PgnnModel p{matrix_from_json(w[0], "w_hidden"), matrix_from_json(w[1], "w_out")};
      if (p.w_hidden.rows() % 2 != 0 || p.w_out.rows() != 2 * p.w_hidden.cols() || p.w_out.cols() != 1)
        fail("corrupt_checkpoint", "pgnn weight shapes are inconsistent");
      ckpt.weights = std::move(p);
    }
    ckpt.anchors = j.at("anchors").get<std::vector<std::vector<std::int64_t>>>();
    ckpt.provenance = j.at("provenance");
    return ckpt;
  } catch (const json::exception& e) {
    fail("corrupt_checkpoint", std::string("checkpoint structure is invalid: ") + e.what());
  }
}

void save_checkpoint(const ModelCheckpoint& ckpt, const std::filesystem::path& path) {
  const auto text = serialize_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary);
  if (!out) fail("io_error", "cannot write " + path.string());
  out << text;
  if (!out) fail("io_error", "failed writing " + path.string());
}

ModelCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("io_error", "cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_checkpoint(ss.str());
}

}  // namespace ctg
