#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace muse {

using NodeId = std::uint32_t;

// One undirected signed link. Graph-derived edge lists always carry src < dst.
struct SignedEdge {
  NodeId src = 0;
  NodeId dst = 0;
  int sign = 1;

  friend bool operator==(const SignedEdge&, const SignedEdge&) = default;
};

enum class SignClass { balanced = 0, unbalanced = 1 };

inline constexpr SignClass kSignClasses[] = {SignClass::balanced, SignClass::unbalanced};

const char* to_string(SignClass cls);

/************ ingestion ************************************/

enum class Delimiter { automatic, comma, whitespace };

struct ColumnSpec {
  std::size_t src_col = 0;
  std::size_t dst_col = 1;
  std::size_t weight_col = 2;
  Delimiter delimiter = Delimiter::automatic;
};

// Parses "0,1,2" style column lists.
ColumnSpec parse_column_spec(const std::string& cols, Delimiter delimiter = Delimiter::automatic);

struct EdgeRecord {
  std::string src;
  std::string dst;
  double weight = 0.0;
  std::size_t line = 0;
};

// Reads one record per data line; '#' and '%' lines and blank lines are skipped.
// Throws ParseError (bad number) or FormatError (missing column), both citing the line.
std::vector<EdgeRecord> parse_edge_list(std::istream& in, const ColumnSpec& spec);

/************ graph ****************************************/

enum class ConflictPolicy { negative_wins, first_wins };

class SignedGraph {
 public:
  struct Neighbor {
    NodeId id;
    int sign;
  };

  SignedGraph() = default;

  // Builds a symmetric graph over raw_ids.size() dense nodes. Duplicate pairs
  // (in either direction) are resolved by `policy`; self-loops and zero signs
  // are rejected with GraphError.
  static SignedGraph from_edges(std::vector<std::string> raw_ids,
                                std::span<const SignedEdge> edges,
                                ConflictPolicy policy = ConflictPolicy::negative_wins);

  std::size_t num_nodes() const noexcept { return raw_ids_.size(); }
  std::size_t num_positive() const noexcept { return num_positive_; }
  std::size_t num_negative() const noexcept { return num_negative_; }
  std::size_t num_edges() const noexcept { return num_positive_ + num_negative_; }

  // Sorted by neighbor id.
  std::span<const Neighbor> neighbors(NodeId i) const;

  // 0 when i and j are not linked.
  int sign(NodeId i, NodeId j) const;

  // One entry per unordered pair, src < dst, sorted lexicographically.
  std::vector<SignedEdge> edges() const;

  const std::vector<std::string>& raw_ids() const noexcept { return raw_ids_; }
  const std::string& raw_id(NodeId i) const { return raw_ids_.at(i); }

 private:
  std::vector<std::string> raw_ids_;
  std::vector<std::size_t> offsets_{0};
  std::vector<Neighbor> adjacency_;
  std::size_t num_positive_ = 0;
  std::size_t num_negative_ = 0;
};

// Sign mapping (w > 0 -> +1, w < 0 -> -1, w == 0 dropped), self-loop removal,
// symmetrization, and dense remapping of raw ids (numeric ids in numeric order).
SignedGraph build_graph(std::span<const EdgeRecord> records,
                        ConflictPolicy policy = ConflictPolicy::negative_wins);

/************ higher-order neighbors ***********************/

// B(i,l) / U(i,l): nodes reached from i by an l-edge walk whose sign product
// is +1 / -1. A node may appear in both; i never appears in its own sets.
class NeighborSets {
 public:
  NeighborSets() = default;

  int order() const noexcept { return order_; }
  std::size_t num_nodes() const noexcept { return num_nodes_; }
  std::optional<std::size_t> cap() const noexcept { return cap_; }

  std::span<const NodeId> get(NodeId i, int l, SignClass cls) const;
  std::span<const NodeId> balanced(NodeId i, int l) const { return get(i, l, SignClass::balanced); }
  std::span<const NodeId> unbalanced(NodeId i, int l) const { return get(i, l, SignClass::unbalanced); }

  // Sum of all set sizes over nodes, orders and classes.
  std::size_t total_size() const;

 private:
  friend NeighborSets higher_order_neighbor_sets(const SignedGraph&, int,
                                                 std::optional<std::size_t>, std::uint64_t);
  struct Table {
    std::vector<std::size_t> offsets{0};
    std::vector<NodeId> ids;
  };
  const Table& table(int l, SignClass cls) const;

  int order_ = 0;
  std::size_t num_nodes_ = 0;
  std::optional<std::size_t> cap_;
  std::vector<Table> tables_;  // index 2*(l-1) + class
};

NeighborSets higher_order_neighbor_sets(const SignedGraph& g, int max_order,
                                        std::optional<std::size_t> cap = std::nullopt,
                                        std::uint64_t seed = 0);

// No cap up to 10,000 nodes, 50 beyond.
std::optional<std::size_t> default_neighbor_cap(std::size_t num_nodes);

/************ splitting ************************************/

struct EdgeSplit {
  std::vector<SignedEdge> train;
  std::vector<SignedEdge> test;
  std::uint64_t seed = 0;
  double train_fraction = 0.8;
};

// Per-sign stratified split: round(fraction * |E+|) positive and
// round(fraction * |E-|) negative pairs go to train. Deterministic per seed.
EdgeSplit split_edges(const SignedGraph& g, double train_fraction, std::uint64_t seed);

}  // namespace muse
