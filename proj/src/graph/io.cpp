#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "ctg/error.hpp"
#include "ctg/graph.hpp"

namespace ctg {
namespace {

using nlohmann::json;

std::string where(const std::filesystem::path& path, std::size_t line) {
  return path.string() + ":" + std::to_string(line);
}

template <class F>
void for_each_line(const std::filesystem::path& path, F&& f) {
  std::ifstream in(path);
  if (!in) fail("io_error", "cannot open " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      fail("parse_error", "malformed JSON at " + where(path, lineno) + ": " + e.what());
    }
    if (!obj.is_object()) fail("parse_error", "expected object at " + where(path, lineno));
    try {
      f(obj, lineno);
    } catch (const json::exception& e) {
      fail("parse_error", "bad field at " + where(path, lineno) + ": " + e.what());
    }
  }
}

}  // namespace

IngestReport ingest_jsonl(const std::filesystem::path& nodes_path, const std::filesystem::path& edges_path) {
  std::vector<PersonNode> nodes;
  std::unordered_map<std::int64_t, NodeIndex> index;
  for_each_line(nodes_path, [&](const json& obj, std::size_t lineno) {
    PersonNode n;
    if (!obj.contains("id") || !obj["id"].is_number_integer())
      fail("parse_error", "missing integer \"id\" at " + where(nodes_path, lineno));
    n.id = obj["id"].get<std::int64_t>();
    if (obj.contains("attrs")) {
      const auto& attrs = obj["attrs"];
      if (!attrs.is_object()) fail("parse_error", "\"attrs\" must be an object at " + where(nodes_path, lineno));
      for (const auto& [k, v] : attrs.items()) {
        if (k.empty()) fail("parse_error", "empty attribute key at " + where(nodes_path, lineno));
        n.attrs[k] = v.is_string() ? v.get<std::string>() : v.dump();
      }
    }
    if (!index.emplace(n.id, static_cast<NodeIndex>(nodes.size())).second)
      fail("parse_error", "duplicate node id " + std::to_string(n.id) + " at " + where(nodes_path, lineno));
    nodes.push_back(std::move(n));
  });

  IngestReport report;
  std::vector<ContactEdge> edges;
  for_each_line(edges_path, [&](const json& obj, std::size_t lineno) {
    for (const char* field : {"src", "dst"})
      if (!obj.contains(field) || !obj[field].is_number_integer())
        fail("parse_error", std::string("missing integer \"") + field + "\" at " + where(edges_path, lineno));
    const auto src = obj["src"].get<std::int64_t>();
    const auto dst = obj["dst"].get<std::int64_t>();
    for (auto id : {src, dst})
      if (!index.contains(id))
        fail("unknown_node", "unknown node id " + std::to_string(id) + " at " + where(edges_path, lineno));
    if (src == dst) {
      ++report.self_loop_warnings;
      return;
    }
    ContactEdge e;
    e.src = index.at(src);
    e.dst = index.at(dst);
    if (obj.contains("etype")) e.etype = obj["etype"].get<std::string>();
    if (obj.contains("ts") && !obj["ts"].is_null()) e.timestamp = obj["ts"].get<std::int64_t>();
    edges.push_back(std::move(e));
  });

  report.graph = PropertyGraph(std::move(nodes), std::move(edges));
  report.duplicate_edges = report.graph.dropped_duplicates();
  return report;
}

void write_jsonl(const PropertyGraph& g, const std::filesystem::path& nodes_path,
                 const std::filesystem::path& edges_path) {
  std::ofstream nodes_out(nodes_path), edges_out(edges_path);
  if (!nodes_out || !edges_out) fail("io_error", "cannot write JSONL output");
  for (const auto& n : g.nodes()) {
    json obj = {{"id", n.id}, {"attrs", n.attrs}};
    nodes_out << obj.dump() << '\n';
  }
  for (const auto& e : g.edges()) {
    nlohmann::ordered_json obj = {{"src", g.node(e.src).id}, {"dst", g.node(e.dst).id}, {"etype", e.etype}};
    if (e.timestamp) obj["ts"] = *e.timestamp;
    edges_out << obj.dump() << '\n';
  }
}

// --- binary container -------------------------------------------------------
//
// "CTGGRAPH" magic, u32 version, then little-endian counts and length-prefixed
// strings. Node attributes are written in key order (std::map), so the bytes
// are a pure function of the graph.

namespace {

constexpr char kMagic[8] = {'C', 'T', 'G', 'G', 'R', 'A', 'P', 'H'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  template <class T>
  void put(T v) {
    static_assert(std::is_integral_v<T>);
    for (std::size_t i = 0; i < sizeof(T); ++i)
      out_.push_back(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff));
  }
  void put_string(const std::string& s) {
    put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    out_ += s;
  }
  void raw(const char* p, std::size_t n) { out_.append(p, n); }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}
  template <class T>
  T get() {
    need(sizeof(T));
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in_[pos_ + i])) << (8 * i);
    pos_ += sizeof(T);
    return static_cast<T>(v);
  }
  std::string get_string() {
    const auto n = get<std::uint32_t>();
    need(n);
    std::string s(in_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  std::string_view raw(std::size_t n) {
    need(n);
    auto s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) fail("parse_error", "truncated graph file");
  }
  std::string_view in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_graph(const PropertyGraph& g) {
  Writer w;
  w.raw(kMagic, sizeof kMagic);
  w.put<std::uint32_t>(kVersion);
  w.put<std::uint64_t>(g.node_count());
  for (const auto& n : g.nodes()) {
    w.put<std::int64_t>(n.id);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(n.attrs.size()));
    for (const auto& [k, v] : n.attrs) {
      w.put_string(k);
      w.put_string(v);
    }
  }
  w.put<std::uint64_t>(g.edge_count());
  for (const auto& e : g.edges()) {
    w.put<std::uint32_t>(e.src);
    w.put<std::uint32_t>(e.dst);
    w.put_string(e.etype);
    w.put<std::uint8_t>(e.timestamp ? 1 : 0);
    if (e.timestamp) w.put<std::int64_t>(*e.timestamp);
  }
  return w.take();
}

PropertyGraph decode_graph(std::string_view bytes) {
  Reader r(bytes);
  if (r.raw(sizeof kMagic) != std::string_view(kMagic, sizeof kMagic))
    fail("parse_error", "not a graph file (bad magic)");
  if (auto v = r.get<std::uint32_t>(); v != kVersion)
    fail("version_mismatch", "unsupported graph file version " + std::to_string(v));
  const auto n = r.get<std::uint64_t>();
  std::vector<PersonNode> nodes;
  for (std::uint64_t i = 0; i < n; ++i) {
    PersonNode p;
    p.id = r.get<std::int64_t>();
    const auto na = r.get<std::uint32_t>();
    for (std::uint32_t a = 0; a < na; ++a) {
      auto k = r.get_string();
      p.attrs[k] = r.get_string();
    }
    nodes.push_back(std::move(p));
  }
  const auto m = r.get<std::uint64_t>();
  std::vector<ContactEdge> edges;
  for (std::uint64_t i = 0; i < m; ++i) {
    ContactEdge e;
    e.src = r.get<std::uint32_t>();
    e.dst = r.get<std::uint32_t>();
    e.etype = r.get_string();
    if (r.get<std::uint8_t>()) e.timestamp = r.get<std::int64_t>();
    edges.push_back(std::move(e));
  }
  if (!r.done()) fail("parse_error", "trailing bytes in graph file");
  return PropertyGraph(std::move(nodes), std::move(edges));
}

void save_graph(const PropertyGraph& g, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail("io_error", "cannot write " + path.string());
  const auto bytes = encode_graph(g);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

PropertyGraph load_graph(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("io_error", "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_graph(ss.str());
}

}  // namespace ctg
