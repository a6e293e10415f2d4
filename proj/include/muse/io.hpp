#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "muse/difftape.hpp"
#include "muse/model.hpp"
#include "muse/sgraph.hpp"

namespace muse {

std::string sha256_hex(std::string_view data);
std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);

// Shortest text that parses back to the identical double.
std::string format_double(double x);
// 17 significant digits, as used by the embedding export.
std::string format_double17(double x);
double parse_double(std::string_view text, std::string_view what);

/************ ingest outputs *******************************/

// "raw_id<TAB>dense_id" per node, dense order.
void write_id_map(std::ostream& out, const SignedGraph& g);
// "raw_src<TAB>raw_dst<TAB>sign" per unordered pair, dense (src, dst) order.
// Re-ingesting this with columns 0,1,2 reproduces the same graph.
void write_canonical_edges(std::ostream& out, const SignedGraph& g);

/************ split manifest *******************************/

// Header lines "# key=value" followed by one "raw_src<TAB>raw_dst<TAB>sign"
// line per test edge.
void write_split_manifest(std::ostream& out, const SignedGraph& g, const EdgeSplit& split,
                          const std::map<std::string, std::string>& meta);

struct SplitManifest {
  std::map<std::string, std::string> meta;
  std::vector<SignedEdge> test;
};

// Resolves raw ids against `g`; unknown ids or pairs absent from `g` are
// IntegrityErrors.
SplitManifest read_split_manifest(std::istream& in, const SignedGraph& g);

// Everything in `g` that is not a test edge, in canonical order.
std::vector<SignedEdge> complement_edges(const SignedGraph& g, const std::vector<SignedEdge>& test);

/************ embeddings ***********************************/

// Header "n M D", then "raw_id v_1 ... v_{M*D}" per node.
void write_embeddings(std::ostream& out, const SignedGraph& g, const Tensor& emb,
                      const ModelConfig& cfg);

struct EmbeddingTable {
  int facets = 0;
  int dim = 0;
  std::vector<std::string> raw_ids;
  Tensor values;
};
EmbeddingTable read_embeddings(std::istream& in);

}  // namespace muse
