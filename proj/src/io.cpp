#include "muse/io.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include "muse/errors.hpp"

namespace muse {

std::string sha256_hex(std::string_view data) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1)
    throw Error("sha256 digest failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int k = 0; k < len; ++k) {
    out.push_back(hex[digest[k] >> 4]);
    out.push_back(hex[digest[k] & 0xf]);
  }
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, std::string_view contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write '" + path + "'");
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
}

std::string format_double(double x) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), x);
  return std::string(buf.data(), ptr);
}

std::string format_double17(double x) {
  std::array<char, 64> buf{};
  auto [ptr, ec] =
      std::to_chars(buf.data(), buf.data() + buf.size(), x, std::chars_format::general, 17);
  return std::string(buf.data(), ptr);
}

double parse_double(std::string_view text, std::string_view what) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || ec != std::errc{} || ptr != text.data() + text.size() || !std::isfinite(v))
    throw FormatError("bad number '" + std::string(text) + "' for " + std::string(what));
  return v;
}

namespace {

const std::string& checked_id(const std::string& id) {
  if (id.find_first_of(" \t\r\n") != std::string::npos)
    throw FormatError("raw id '" + id + "' contains whitespace and cannot be written");
  return id;
}

std::vector<std::string> tokens(const std::string& line) {
  std::istringstream ss(line);
  std::vector<std::string> out;
  for (std::string t; ss >> t;) out.push_back(t);
  return out;
}

}  // namespace

void write_id_map(std::ostream& out, const SignedGraph& g) {
  for (NodeId i = 0; i < g.num_nodes(); ++i) out << checked_id(g.raw_id(i)) << '\t' << i << '\n';
}

void write_canonical_edges(std::ostream& out, const SignedGraph& g) {
  for (const auto& e : g.edges())
    out << checked_id(g.raw_id(e.src)) << '\t' << checked_id(g.raw_id(e.dst)) << '\t' << e.sign
        << '\n';
}

void write_split_manifest(std::ostream& out, const SignedGraph& g, const EdgeSplit& split,
                          const std::map<std::string, std::string>& meta) {
  out << "# muse-split 1\n";
  for (const auto& [k, v] : meta) out << "# " << k << '=' << v << '\n';
  for (const auto& e : split.test)
    out << checked_id(g.raw_id(e.src)) << '\t' << checked_id(g.raw_id(e.dst)) << '\t' << e.sign
        << '\n';
}

SplitManifest read_split_manifest(std::istream& in, const SignedGraph& g) {
  std::unordered_map<std::string, NodeId> dense;
  for (NodeId i = 0; i < g.num_nodes(); ++i) dense.emplace(g.raw_id(i), i);

  SplitManifest manifest;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line.front() == '#') {
      const auto eq = line.find('=');
      if (line.rfind("# ", 0) == 0 && eq != std::string::npos)
        manifest.meta[line.substr(2, eq - 2)] = line.substr(eq + 1);
      continue;
    }
    const auto t = tokens(line);
    if (t.size() != 3 || (t[2] != "1" && t[2] != "-1"))
      throw ParseError("split manifest: expected 'src dst sign'", line_no);
    auto a = dense.find(t[0]);
    auto b = dense.find(t[1]);
    if (a == dense.end() || b == dense.end())
      throw IntegrityError("split manifest line " + std::to_string(line_no) +
                           ": node id not present in the graph");
    const int sign = t[2] == "1" ? 1 : -1;
    if (g.sign(a->second, b->second) != sign)
      throw IntegrityError("split manifest line " + std::to_string(line_no) +
                           ": edge not present in the graph with that sign");
    manifest.test.push_back({std::min(a->second, b->second), std::max(a->second, b->second), sign});
  }
  return manifest;
}

std::vector<SignedEdge> complement_edges(const SignedGraph& g, const std::vector<SignedEdge>& test) {
  auto key = [](const SignedEdge& e) {
    return (static_cast<std::uint64_t>(std::min(e.src, e.dst)) << 32) | std::max(e.src, e.dst);
  };
  std::vector<std::uint64_t> held(test.size());
  std::transform(test.begin(), test.end(), held.begin(), key);
  std::sort(held.begin(), held.end());
  std::vector<SignedEdge> out;
  for (const auto& e : g.edges())
    if (!std::binary_search(held.begin(), held.end(), key(e))) out.push_back(e);
  return out;
}

void write_embeddings(std::ostream& out, const SignedGraph& g, const Tensor& emb,
                      const ModelConfig& cfg) {
  if (emb.rows() != static_cast<Index>(g.num_nodes()) || emb.cols() != cfg.width())
    throw DimensionError("write_embeddings: table " + shape_string(emb) + " vs " +
                         std::to_string(g.num_nodes()) + " nodes of width " +
                         std::to_string(cfg.width()));
  out << g.num_nodes() << ' ' << cfg.facets << ' ' << cfg.dim << '\n';
  for (NodeId i = 0; i < g.num_nodes(); ++i) {
    out << checked_id(g.raw_id(i));
    for (Index c = 0; c < emb.cols(); ++c) out << ' ' << format_double17(emb(i, c));
    out << '\n';
  }
}

EmbeddingTable read_embeddings(std::istream& in) {
  EmbeddingTable table;
  std::string line;
  if (!std::getline(in, line)) throw FormatError("embedding file: missing header");
  const auto header = tokens(line);
  if (header.size() != 3) throw ParseError("embedding header must be 'n M D'", 1);
  const auto n = static_cast<Index>(parse_double(header[0], "n"));
  table.facets = static_cast<int>(parse_double(header[1], "M"));
  table.dim = static_cast<int>(parse_double(header[2], "D"));
  const Index width = static_cast<Index>(table.facets) * table.dim;
  table.values.resize(n, width);
  for (Index i = 0; i < n; ++i) {
    if (!std::getline(in, line)) throw FormatError("embedding file: truncated");
    const auto t = tokens(line);
    if (static_cast<Index>(t.size()) != width + 1)
      throw ParseError("embedding row has wrong width", static_cast<std::size_t>(i) + 2);
    table.raw_ids.push_back(t[0]);
    for (Index c = 0; c < width; ++c)
      table.values(i, c) = parse_double(t[static_cast<std::size_t>(c) + 1], "embedding value");
  }
  return table;
}

}  // namespace muse
