#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "ctg/error.hpp"
#include "ctg/models.hpp"
#include "fixtures.hpp"
#include "support.hpp"

using namespace ctg;
using nd::Matrix;
using nd::Tensor;
using fixture::error_kind;
using fixture::pair_loss;
using fixture::fresh_checkpoint;
using fixture::small_config;

namespace {

constexpr double kGradTol = 1e-4;

/// Symmetric 0/1 adjacency of a random graph on n nodes.
Matrix random_adjacency(std::size_t n, double p, Rng& rng) {
  Matrix a(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (rng.bernoulli(p)) a(i, j) = a(j, i) = 1.0;
  return a;
}

}  // namespace

// --- featurization ----------------------------------------------------------------

TEST_CASE("featurize basics") {
  std::vector<PersonNode> nodes(4);
  for (int i = 0; i < 4; ++i) nodes[i].id = i;
  nodes[1].attrs = {{"city", "A"}, {"job", "x"}};
  nodes[2].attrs = {{"city", "A"}, {"job", "x"}};
  nodes[3].attrs = {{"city", "B"}};
  PropertyGraph g(nodes, {{1, 3, "contact", std::nullopt}, {2, 3, "contact", std::nullopt}});
  FeaturizeSpec spec;
  spec.hash_dim = 16;
  const auto f = featurize(g, spec);
  REQUIRE(f.dim() == 17);
  for (std::size_t j = 0; j < f.dim(); ++j) CHECK(f.x(0, j) == 0.0);
  for (std::size_t j = 0; j < f.dim(); ++j) CHECK(f.x(1, j) == f.x(2, j));
  CHECK(f.x(3, f.degree_slot()) == doctest::Approx(std::log(3.0)));
  CHECK(f.x(1, attribute_slot("city", "A", 16)) == 1.0);
  CHECK(featurize(g, spec).x == f.x);

  spec.exclude_keys = {"job"};
  CHECK(featurize(g, spec).keys == std::vector<std::string>{"city"});
  spec.hash_dim = 0;
  CHECK(error_kind([&] { featurize(g, spec); }) == "invalid_argument");
}

TEST_CASE("attribute hashing collides at the balls-into-bins rate") {
  // Collisions = items - occupied slots. Expected occupied slots and their
  // variance follow from the indicator decomposition over slots.
  for (std::size_t items : {100u, 1000u}) {
    const double d = 128.0, n = static_cast<double>(items);
    std::set<std::size_t> used;
    for (std::size_t i = 0; i < items; ++i) used.insert(attribute_slot("key" + std::to_string(i % 7), "value" + std::to_string(i), 128));
    const double q1 = std::pow(1 - 1 / d, n), q2 = std::pow(1 - 2 / d, n);
    const double expected_empty = d * q1;
    const double var = d * q1 + d * (d - 1) * q2 - d * d * q1 * q1;
    const double empty = d - static_cast<double>(used.size());
    INFO(items);
    CHECK(std::abs(empty - expected_empty) <= 4 * std::sqrt(var) + 1.0);
  }
}

// --- GCN --------------------------------------------------------------------------

TEST_CASE("normalized adjacency is symmetric with spectral radius at most one") {
  Rng rng(4);
  for (int t = 0; t < 10; ++t) {
    const auto s = normalized_adjacency(nd::constant(random_adjacency(12, 0.3, rng))).value();
    for (std::size_t i = 0; i < 12; ++i)
      for (std::size_t j = 0; j < 12; ++j) CHECK(s(i, j) == doctest::Approx(s(j, i)).epsilon(1e-15));
    // Power iteration on S^2 bounds the largest eigenvalue magnitude.
    Matrix v(12, 1, 1.0);
    double lambda = 0.0;
    for (int it = 0; it < 200; ++it) {
      auto w = (nd::matmul(nd::constant(s), nd::matmul(nd::constant(s), nd::constant(v)))).value();
      double norm = 0.0;
      for (double x : w.data()) norm += x * x;
      norm = std::sqrt(norm);
      lambda = std::sqrt(norm);
      for (std::size_t i = 0; i < 12; ++i) v(i, 0) = w(i, 0) / norm;
    }
    CHECK(lambda <= 1.0 + 1e-9);
  }
}

TEST_CASE("gcn closed forms") {
  Rng rng(8);
  const auto x = oracle::random_matrix(1, 5, rng), w0 = oracle::random_matrix(5, 4, rng),
             w1 = oracle::random_matrix(4, 3, rng);
  const auto s = normalized_adjacency(nd::constant(Matrix(1, 1))).value();
  CHECK(s(0, 0) == 1.0);
  const auto z = gcn_forward(nd::constant(w0), nd::constant(w1), nd::constant(s), nd::constant(x)).value();
  const auto expect = nd::matmul(nd::relu(nd::matmul(nd::constant(x), nd::constant(w0))), nd::constant(w1)).value();
  CHECK(z == expect);

  const auto adj = normalized_adjacency(nd::constant(random_adjacency(6, 0.5, rng))).value();
  const auto zero = gcn_forward(nd::constant(Matrix(5, 4)), nd::constant(Matrix(4, 3)), nd::constant(adj),
                                nd::constant(oracle::random_matrix(6, 5, rng)))
                        .value();
  CHECK(zero == Matrix(6, 3));
  CHECK(error_kind([&] {
          gcn_forward(nd::constant(w0), nd::constant(w1), nd::constant(adj), nd::constant(Matrix(6, 4)));
        }) == "shape_error");
}

TEST_CASE("gcn output permutes with node relabeling") {
  Rng rng(9);
  const std::size_t n = 10;
  const auto a = random_adjacency(n, 0.3, rng);
  const auto x = oracle::random_matrix(n, 4, rng), w0 = oracle::random_matrix(4, 5, rng),
             w1 = oracle::random_matrix(5, 3, rng);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(perm.begin(), perm.end());
  Matrix pa(n, n), px(n, 4);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) pa(i, j) = a(perm[i], perm[j]);
    for (std::size_t k = 0; k < 4; ++k) px(i, k) = x(perm[i], k);
  }
  const auto run = [&](const Matrix& adj, const Matrix& feats) {
    return gcn_forward(nd::constant(w0), nd::constant(w1), normalized_adjacency(nd::constant(adj)), nd::constant(feats))
        .value();
  };
  const auto z = run(a, x), pz = run(pa, px);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < 3; ++k) CHECK(pz(i, k) == doctest::Approx(z(perm[i], k)).epsilon(1e-12));
}

TEST_CASE("gcn gradients on a 20-node graph match finite differences") {
  const auto g = oracle::random_graph(20, 0.2, 31);
  auto cfg = small_config(ModelType::gcn);
  cfg.min_component_size = 1;
  const auto ctx = build_context(g, cfg, false);
  Rng rng(2);
  for (const auto& c : ctx.components) {
    if (c.size() < 10) continue;
    std::vector<std::size_t> us, vs;
    Matrix labels(8, 1);
    for (std::size_t i = 0; i < 8; ++i) {
      us.push_back(rng.uniform_index(c.size()));
      vs.push_back(rng.uniform_index(c.size()));
      labels(i, 0) = static_cast<double>(i % 2);
    }
    const oracle::ScalarFn f = [&](const std::vector<Tensor>& w) {
      return pair_loss(gcn_forward(w[0], w[1], nd::constant(c.norm_adj), nd::constant(c.features)), us, vs, labels);
    };
    const auto r = oracle::check_gradients(f, {oracle::random_matrix(c.features.cols(), 4, rng, -0.5, 0.5),
                                               oracle::random_matrix(4, 3, rng, -0.5, 0.5)});
    CHECK(r.checked > 0);
    CHECK(r.max_rel_err < kGradTol);
  }
}

// --- P-GNN ------------------------------------------------------------------------

TEST_CASE("anchors") {
  ComponentView c;
  for (NodeIndex i = 0; i < 10; ++i) c.nodes.push_back(i * 3);
  const auto a = sample_anchors(c, 64, 5, 0);
  CHECK(a.nodes.size() == 10);
  CHECK(std::set<NodeIndex>(a.nodes.begin(), a.nodes.end()) == std::set<NodeIndex>(c.nodes.begin(), c.nodes.end()));
  CHECK(sample_anchors(c, 64, 5, 0).nodes == a.nodes);
  CHECK(sample_anchors(c, 4, 5, 1).nodes.size() == 4);
  CHECK(error_kind([] { sample_anchors(ComponentView{}, 4, 0, 0); }) == "invalid_argument");

  SUBCASE("inclusion frequency is uniform") {
    ComponentView big;
    for (NodeIndex i = 0; i < 100; ++i) big.nodes.push_back(i);
    const std::size_t draws = 10000, k = 64;
    std::vector<std::size_t> count(100, 0);
    for (std::size_t e = 0; e < draws; ++e) {
      const auto s = sample_anchors(big, k, 77, e);
      REQUIRE(std::set<NodeIndex>(s.nodes.begin(), s.nodes.end()).size() == k);
      for (auto v : s.nodes) ++count[v];
    }
    const double p = static_cast<double>(k) / 100.0;
    const double mean = draws * p, sd = std::sqrt(draws * p * (1 - p));
    for (auto x : count) CHECK(std::abs(static_cast<double>(x) - mean) <= 3.5 * sd);
  }
}

TEST_CASE("position weights follow inverse distance with a cutoff") {
  const auto g = oracle::path_graph(8);
  auto cfg = small_config(ModelType::pgnn);
  cfg.min_component_size = 1;
  const auto ctx = build_context(g, cfg, false);
  const auto& c = ctx.components[0];
  AnchorSet anchors{{0, 2, 7}, 0};
  const auto s = position_weights(c, ctx.distances, anchors);
  for (std::size_t v = 0; v < 8; ++v)
    for (std::size_t k = 0; k < 3; ++k) {
      const int d = std::abs(static_cast<int>(v) - static_cast<int>(anchors.nodes[k]));
      CHECK(s(v, k) == (d <= 3 ? 1.0 / (d + 1.0) : 0.0));
    }
  CHECK(s(7, 2) == 1.0);
}

TEST_CASE("pgnn forward closed forms") {
  Rng rng(12);
  const std::size_t d = 3, dh = 4;
  const auto wh = oracle::random_matrix(2 * d, dh, rng), wo = oracle::random_matrix(2 * dh, 1, rng);

  SUBCASE("node that is its own only anchor") {
    const auto x = oracle::random_matrix(1, d, rng);
    const std::vector<std::size_t> rows{0};
    const auto z = pgnn_forward(nd::constant(wh), nd::constant(wo), nd::constant(x), rows,
                                nd::constant(Matrix(1, 1, 1.0)))
                       .value();
    const auto xx = nd::concat_cols(nd::constant(x), nd::constant(x));
    const auto h = nd::relu(nd::matmul(xx, nd::constant(wh)));
    const double expect = nd::matmul(nd::concat_cols(h, h), nd::constant(wo)).item();
    CHECK(z(0, 0) == doctest::Approx(expect).epsilon(1e-14));
  }
  SUBCASE("anchor out of reach gives a zero column") {
    const auto x = oracle::random_matrix(5, d, rng);
    Matrix s = oracle::random_matrix(5, 3, rng, 0.1, 1.0);
    for (std::size_t v = 0; v < 5; ++v) s(v, 1) = 0.0;
    const std::vector<std::size_t> rows{0, 2, 4};
    const auto z = pgnn_forward(nd::constant(wh), nd::constant(wo), nd::constant(x), rows, nd::constant(s)).value();
    for (std::size_t v = 0; v < 5; ++v) CHECK(z(v, 1) == 0.0);
  }
  SUBCASE("matches the per-anchor message definition") {
    const std::size_t n = 6, K = 3;
    const auto x = oracle::random_matrix(n, d, rng);
    const auto s = oracle::random_matrix(n, K, rng, 0.0, 1.0);
    const std::vector<std::size_t> rows{5, 1, 3};
    const auto z = pgnn_forward(nd::constant(wh), nd::constant(wo), nd::constant(x), rows, nd::constant(s)).value();
    const auto cat = [](std::span<const double> a, std::span<const double> b) {
      std::vector<double> out(a.begin(), a.end());
      out.insert(out.end(), b.begin(), b.end());
      return out;
    };
    Matrix h(n, dh);
    for (std::size_t v = 0; v < n; ++v)
      for (std::size_t j = 0; j < dh; ++j) {
        double acc = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
          const auto m = cat(x.row_span(v), x.row_span(rows[k]));
          for (std::size_t i = 0; i < 2 * d; ++i) acc += s(v, k) * m[i] * wh(i, j);
        }
        h(v, j) = std::max(0.0, acc / K);
      }
    for (std::size_t v = 0; v < n; ++v)
      for (std::size_t k = 0; k < K; ++k) {
        const auto m = cat(h.row_span(v), h.row_span(rows[k]));
        double acc = 0.0;
        for (std::size_t i = 0; i < 2 * dh; ++i) acc += m[i] * wo(i, 0);
        CHECK(z(v, k) == doctest::Approx(s(v, k) * acc).epsilon(1e-12));
      }
  }
}

TEST_CASE("permuting anchors permutes embedding columns") {
  Rng rng(13);
  const std::size_t n = 9, K = 5;
  const auto wh = oracle::random_matrix(8, 6, rng), wo = oracle::random_matrix(12, 1, rng);
  const auto x = oracle::random_matrix(n, 4, rng);
  const auto s = oracle::random_matrix(n, K, rng, 0.0, 1.0);
  const std::vector<std::size_t> rows{0, 3, 4, 7, 8};
  std::vector<std::size_t> perm{3, 0, 4, 1, 2};
  std::vector<std::size_t> prows(K);
  Matrix ps(n, K);
  for (std::size_t k = 0; k < K; ++k) {
    prows[k] = rows[perm[k]];
    for (std::size_t v = 0; v < n; ++v) ps(v, k) = s(v, perm[k]);
  }
  const auto z = pgnn_forward(nd::constant(wh), nd::constant(wo), nd::constant(x), rows, nd::constant(s)).value();
  const auto pz = pgnn_forward(nd::constant(wh), nd::constant(wo), nd::constant(x), prows, nd::constant(ps)).value();
  for (std::size_t v = 0; v < n; ++v)
    for (std::size_t k = 0; k < K; ++k) CHECK(pz(v, k) == doctest::Approx(z(v, perm[k])).epsilon(1e-12));
}

TEST_CASE("pgnn gradients on a 20-node graph with five anchors match finite differences") {
  const auto g = oracle::random_graph(20, 0.2, 32);
  auto cfg = small_config(ModelType::pgnn);
  cfg.min_component_size = 10;
  const auto ctx = build_context(g, cfg, false);
  Rng rng(3);
  const auto& c = ctx.components[0];
  const auto anchors = sample_anchors(c, 5, 1, 0);
  const auto rows = local_anchor_rows(ctx, 0, anchors);
  const auto s = position_weights(c, ctx.distances, anchors);
  std::vector<std::size_t> us, vs;
  Matrix labels(8, 1);
  for (std::size_t i = 0; i < 8; ++i) {
    us.push_back(rng.uniform_index(c.size()));
    vs.push_back(rng.uniform_index(c.size()));
    labels(i, 0) = static_cast<double>(i % 2);
  }
  const oracle::ScalarFn f = [&](const std::vector<Tensor>& w) {
    return pair_loss(pgnn_forward(w[0], w[1], nd::constant(c.features), rows, nd::constant(s)), us, vs, labels);
  };
  const auto r = oracle::check_gradients(f, {oracle::random_matrix(2 * c.features.cols(), 4, rng, -0.5, 0.5),
                                             oracle::random_matrix(8, 1, rng, -0.5, 0.5)});
  CHECK(r.max_rel_err < kGradTol);
  CHECK(error_kind([&] { local_anchor_rows(ctx, 0, AnchorSet{{static_cast<NodeIndex>(ctx.node_count())}, 0}); }) ==
        "invalid_argument");
}

// --- scoring ----------------------------------------------------------------------

TEST_CASE("link score") {
  const std::vector<double> a{1, 0, 2}, b{0, 5, 0};
  CHECK(link_score(a, b) == 0.5);
  const std::vector<double> z{1, 3, 0};
  CHECK(link_score(z, z) == doctest::Approx(1.0 / (1.0 + std::exp(-10.0))).epsilon(1e-15));
  Rng rng(21);
  for (int i = 0; i < 1000; ++i) {
    const auto u = oracle::random_matrix(1, 8, rng, -3, 3), v = oracle::random_matrix(1, 8, rng, -3, 3);
    const double s = link_score(u.row_span(0), v.row_span(0));
    CHECK(s == link_score(v.row_span(0), u.row_span(0)));
    CHECK(s > 0.0);
    CHECK(s < 1.0);
  }
}

TEST_CASE("pgnn scores across components are exactly one half") {
  // Two disjoint random components.
  auto g1 = oracle::random_graph(15, 0.3, 40);
  std::vector<PersonNode> nodes(g1.nodes().begin(), g1.nodes().end());
  std::vector<ContactEdge> edges(g1.edges().begin(), g1.edges().end());
  for (std::size_t i = 0; i < 15; ++i) {
    auto p = nodes[i];
    p.id += 1000;
    nodes.push_back(p);
  }
  for (auto e : g1.edges()) edges.push_back({e.src + 15, e.dst + 15, e.etype, std::nullopt});
  const PropertyGraph g(nodes, edges);
  const auto cfg = small_config(ModelType::pgnn);
  const auto ctx = build_context(g, cfg, false);
  REQUIRE(ctx.components.size() == 2);
  const auto emb = embed(fresh_checkpoint(cfg, ctx), ctx);
  for (NodeIndex u = 0; u < 15; ++u)
    for (NodeIndex v = 15; v < 30; ++v) CHECK(emb.score(u, v) == 0.5);
}

// --- checkpoints ------------------------------------------------------------------

TEST_CASE("checkpoint round trip") {
  const auto g = oracle::random_graph(40, 0.12, 50);
  for (auto type : {ModelType::gcn, ModelType::pgnn}) {
    const auto cfg = small_config(type, 3);
    const auto ctx = build_context(g, cfg);
    auto ck = fresh_checkpoint(cfg, ctx);
    ck.provenance = {{"tool", "test"}};
    const auto text = serialize_checkpoint(ck);
    const auto back = parse_checkpoint(text);
    CHECK(serialize_checkpoint(back) == text);
    CHECK(back.provenance == ck.provenance);

    const auto before = embed(ck, ctx), after = embed(back, ctx);
    Rng rng(1);
    for (int i = 0; i < 100; ++i) {
      const auto u = static_cast<NodeIndex>(rng.uniform_index(ctx.node_count()));
      const auto v = static_cast<NodeIndex>(rng.uniform_index(ctx.node_count()));
      CHECK(before.score(u, v) == after.score(u, v));
    }

    const auto path = std::filesystem::temp_directory_path() / ("ctg_ckpt_" + to_string(type) + ".json");
    save_checkpoint(ck, path);
    CHECK(serialize_checkpoint(load_checkpoint(path)) == text);
    std::filesystem::remove(path);

    CHECK(error_kind([&] { parse_checkpoint(text.substr(0, text.size() / 2)); }) == "parse_error");
    auto j = nlohmann::ordered_json::parse(text);
    j["format_version"] = 99;
    CHECK(error_kind([&] { parse_checkpoint(j.dump()); }) == "version_mismatch");
  }
}

TEST_CASE("corrupted checkpoint weights are rejected") {
  const auto g = oracle::random_graph(30, 0.15, 51);
  const auto cfg = small_config(ModelType::gcn);
  const auto ctx = build_context(g, cfg);
  const auto text = serialize_checkpoint(fresh_checkpoint(cfg, ctx));
  auto j = nlohmann::ordered_json::parse(text);
  std::string dumped = j.dump();
  // Replace the first weight value with a non-number.
  auto pos = dumped.find("\"values\":[\"");
  REQUIRE(pos != std::string::npos);
  pos += 11;
  dumped.replace(pos, dumped.find('"', pos) - pos, "abc");
  CHECK(error_kind([&] { parse_checkpoint(dumped); }) == "corrupt_checkpoint");
}

// --- masked forward ---------------------------------------------------------------

TEST_CASE("masked embedding with unit masks matches the plain embedding") {
  const auto g = oracle::random_graph(40, 0.12, 52);
  for (auto type : {ModelType::gcn, ModelType::pgnn}) {
    const auto cfg = small_config(type, 4);
    const auto ctx = build_context(g, cfg);
    const auto ck = fresh_checkpoint(cfg, ctx);
    const auto emb = embed(ck, ctx);
    for (std::size_t c = 0; c < ctx.components.size(); ++c) {
      const auto& view = ctx.components[c];
      MaskInputs m;
      m.masked_edges = view.edges;
      m.edge_weights = nd::constant(Matrix(view.edges.size(), 1, 1.0));
      m.has_edge_mask = !view.edges.empty();
      m.feature_weights = nd::constant(Matrix(1, view.features.cols(), 1.0));
      m.has_feature_mask = true;
      INFO(to_string(type));
      CHECK(masked_embedding(ck, ctx, c, m).value() == emb.per_component[c]);
      CHECK(masked_embedding(ck, ctx, c, MaskInputs{}).value() == emb.per_component[c]);
    }
  }
}
