#include "muse/sgraph.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <istream>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_map>

#include "muse/errors.hpp"

namespace muse {

const char* to_string(SignClass cls) {
  return cls == SignClass::balanced ? "balanced" : "unbalanced";
}

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split_fields(std::string_view line, Delimiter delim) {
  std::vector<std::string_view> fields;
  if (delim == Delimiter::comma) {
    std::size_t start = 0;
    while (true) {
      const auto pos = line.find(',', start);
      fields.push_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
      if (pos == std::string_view::npos) break;
      start = pos + 1;
    }
  } else {
    std::size_t i = 0;
    while (i < line.size()) {
      while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
      if (i >= line.size()) break;
      std::size_t j = i;
      while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
      fields.push_back(line.substr(i, j - i));
      i = j;
    }
  }
  return fields;
}

std::optional<long long> as_integer(const std::string& s) {
  long long v = 0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc{} || ptr != end) return std::nullopt;
  return v;
}

// Numeric raw ids sort numerically and before any non-numeric id.
bool raw_id_less(const std::string& a, const std::string& b) {
  const auto na = as_integer(a);
  const auto nb = as_integer(b);
  if (na && nb) return *na != *nb ? *na < *nb : a < b;
  if (na.has_value() != nb.has_value()) return na.has_value();
  return a < b;
}

std::mt19937_64 seeded_engine(std::uint64_t seed, std::initializer_list<std::uint64_t> salt) {
  std::vector<std::uint32_t> words{static_cast<std::uint32_t>(seed),
                                   static_cast<std::uint32_t>(seed >> 32)};
  for (auto s : salt) {
    words.push_back(static_cast<std::uint32_t>(s));
    words.push_back(static_cast<std::uint32_t>(s >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  return std::mt19937_64(seq);
}

}  // namespace

ColumnSpec parse_column_spec(const std::string& cols, Delimiter delimiter) {
  std::vector<std::size_t> idx;
  std::stringstream ss(cols);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto t = trim(item);
    std::size_t v = 0;
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || ec != std::errc{} || ptr != t.data() + t.size())
      throw ConfigError("bad column spec '" + cols + "': expected three non-negative indices");
    idx.push_back(v);
  }
  if (idx.size() != 3)
    throw ConfigError("bad column spec '" + cols + "': expected src,dst,weight indices");
  return ColumnSpec{idx[0], idx[1], idx[2], delimiter};
}

std::vector<EdgeRecord> parse_edge_list(std::istream& in, const ColumnSpec& spec) {
  std::vector<EdgeRecord> records;
  Delimiter delim = spec.delimiter;
  const std::size_t needed = std::max({spec.src_col, spec.dst_col, spec.weight_col}) + 1;

  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto line = trim(raw);
    if (line.empty() || line.front() == '#' || line.front() == '%') continue;
    if (delim == Delimiter::automatic)
      delim = line.find(',') != std::string_view::npos ? Delimiter::comma : Delimiter::whitespace;

    const auto fields = split_fields(line, delim);
    if (fields.size() < needed)
      throw FormatError("line " + std::to_string(line_no) + ": expected at least " +
                        std::to_string(needed) + " columns, found " + std::to_string(fields.size()));

    EdgeRecord rec;
    rec.src = std::string(fields[spec.src_col]);
    rec.dst = std::string(fields[spec.dst_col]);
    if (rec.src.empty() || rec.dst.empty()) throw ParseError("empty node id", line_no);

    const auto w = fields[spec.weight_col];
    auto [ptr, ec] = std::from_chars(w.data(), w.data() + w.size(), rec.weight);
    if (w.empty() || ec != std::errc{} || ptr != w.data() + w.size() || !std::isfinite(rec.weight))
      throw ParseError("bad weight '" + std::string(w) + "'", line_no);
    rec.line = line_no;
    records.push_back(std::move(rec));
  }
  return records;
}

SignedGraph SignedGraph::from_edges(std::vector<std::string> raw_ids,
                                    std::span<const SignedEdge> edges, ConflictPolicy policy) {
  const auto n = raw_ids.size();
  struct Keyed {
    NodeId a, b;
    int sign;
  };
  std::vector<Keyed> keyed;
  keyed.reserve(edges.size());
  for (const auto& e : edges) {
    if (e.src >= n || e.dst >= n)
      throw GraphError("edge (" + std::to_string(e.src) + ", " + std::to_string(e.dst) +
                       ") out of range for " + std::to_string(n) + " nodes");
    if (e.src == e.dst) throw GraphError("self-loop on node " + std::to_string(e.src));
    if (e.sign != 1 && e.sign != -1) throw GraphError("edge sign must be +1 or -1");
    keyed.push_back({std::min(e.src, e.dst), std::max(e.src, e.dst), e.sign});
  }
  // Stable so that first-wins sees records in input order.
  std::stable_sort(keyed.begin(), keyed.end(), [](const Keyed& x, const Keyed& y) {
    return x.a != y.a ? x.a < y.a : x.b < y.b;
  });

  std::vector<Keyed> pairs;
  for (std::size_t k = 0; k < keyed.size();) {
    std::size_t end = k;
    int sign = keyed[k].sign;
    while (end < keyed.size() && keyed[end].a == keyed[k].a && keyed[end].b == keyed[k].b) {
      if (policy == ConflictPolicy::negative_wins && keyed[end].sign < 0) sign = -1;
      ++end;
    }
    pairs.push_back({keyed[k].a, keyed[k].b, sign});
    k = end;
  }

  SignedGraph g;
  g.raw_ids_ = std::move(raw_ids);
  std::vector<std::size_t> degree(n, 0);
  for (const auto& p : pairs) {
    ++degree[p.a];
    ++degree[p.b];
    (p.sign > 0 ? g.num_positive_ : g.num_negative_) += 1;
  }
  g.offsets_.assign(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) g.offsets_[i + 1] = g.offsets_[i] + degree[i];
  g.adjacency_.resize(g.offsets_[n]);
  std::vector<std::size_t> cursor(g.offsets_.begin(), g.offsets_.end() - 1);
  for (const auto& p : pairs) {
    g.adjacency_[cursor[p.a]++] = {p.b, p.sign};
    g.adjacency_[cursor[p.b]++] = {p.a, p.sign};
  }
  for (std::size_t i = 0; i < n; ++i)
    std::sort(g.adjacency_.begin() + g.offsets_[i], g.adjacency_.begin() + g.offsets_[i + 1],
              [](const Neighbor& x, const Neighbor& y) { return x.id < y.id; });
  return g;
}

std::span<const SignedGraph::Neighbor> SignedGraph::neighbors(NodeId i) const {
  if (i >= num_nodes()) throw GraphError("node " + std::to_string(i) + " out of range");
  return {adjacency_.data() + offsets_[i], offsets_[i + 1] - offsets_[i]};
}

int SignedGraph::sign(NodeId i, NodeId j) const {
  const auto row = neighbors(i);
  auto it = std::lower_bound(row.begin(), row.end(), j,
                             [](const Neighbor& nb, NodeId v) { return nb.id < v; });
  return (it != row.end() && it->id == j) ? it->sign : 0;
}

std::vector<SignedEdge> SignedGraph::edges() const {
  std::vector<SignedEdge> out;
  out.reserve(num_edges());
  for (NodeId i = 0; i < num_nodes(); ++i)
    for (const auto& nb : neighbors(i))
      if (nb.id > i) out.push_back({i, nb.id, nb.sign});
  return out;
}

SignedGraph build_graph(std::span<const EdgeRecord> records, ConflictPolicy policy) {
  if (records.empty()) throw GraphError("no edge records");

  std::vector<const EdgeRecord*> kept;
  for (const auto& r : records)
    if (r.weight != 0.0 && r.src != r.dst) kept.push_back(&r);
  if (kept.empty()) throw GraphError("empty graph: every record was a self-loop or zero weight");

  std::vector<std::string> ids;
  ids.reserve(2 * kept.size());
  for (const auto* r : kept) {
    ids.push_back(r->src);
    ids.push_back(r->dst);
  }
  std::sort(ids.begin(), ids.end(), raw_id_less);
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());

  std::unordered_map<std::string, NodeId> dense;
  dense.reserve(ids.size());
  for (NodeId i = 0; i < ids.size(); ++i) dense.emplace(ids[i], i);

  std::vector<SignedEdge> edges;
  edges.reserve(kept.size());
  for (const auto* r : kept)
    edges.push_back({dense.at(r->src), dense.at(r->dst), r->weight > 0 ? 1 : -1});
  return SignedGraph::from_edges(std::move(ids), edges, policy);
}

/************ higher-order neighbors ***********************/

const NeighborSets::Table& NeighborSets::table(int l, SignClass cls) const {
  if (l < 1 || l > order_)
    throw ContractError("order " + std::to_string(l) + " outside 1.." + std::to_string(order_));
  return tables_[2 * static_cast<std::size_t>(l - 1) + static_cast<std::size_t>(cls)];
}

std::span<const NodeId> NeighborSets::get(NodeId i, int l, SignClass cls) const {
  const auto& t = table(l, cls);
  if (i >= num_nodes_) throw GraphError("node " + std::to_string(i) + " out of range");
  return {t.ids.data() + t.offsets[i], t.offsets[i + 1] - t.offsets[i]};
}

std::size_t NeighborSets::total_size() const {
  std::size_t total = 0;
  for (const auto& t : tables_) total += t.ids.size();
  return total;
}

NeighborSets higher_order_neighbor_sets(const SignedGraph& g, int max_order,
                                        std::optional<std::size_t> cap, std::uint64_t seed) {
  if (max_order < 1) throw ContractError("neighbor order must be >= 1");
  if (cap && *cap < 1) throw ContractError("neighbor cap must be >= 1");

  const auto n = g.num_nodes();
  NeighborSets sets;
  sets.order_ = max_order;
  sets.num_nodes_ = n;
  sets.cap_ = cap;
  sets.tables_.resize(2 * static_cast<std::size_t>(max_order));

  // Reach markers are stamped rather than cleared between levels.
  std::vector<std::uint64_t> stamp_pos(n, 0), stamp_neg(n, 0);
  std::uint64_t stamp = 0;
  std::vector<NodeId> pos, neg, next_pos, next_neg, out;

  auto emit = [&](NodeId i, int l, SignClass cls, const std::vector<NodeId>& reach) {
    out.clear();
    for (auto v : reach)
      if (v != i) out.push_back(v);
    std::sort(out.begin(), out.end());
    auto& t = sets.tables_[2 * static_cast<std::size_t>(l - 1) + static_cast<std::size_t>(cls)];
    if (cap && out.size() > *cap) {
      auto rng = seeded_engine(seed, {i, static_cast<std::uint64_t>(l),
                                      static_cast<std::uint64_t>(cls)});
      std::sample(out.begin(), out.end(), std::back_inserter(t.ids), *cap, rng);
    } else {
      t.ids.insert(t.ids.end(), out.begin(), out.end());
    }
    t.offsets.push_back(t.ids.size());
  };

  for (NodeId i = 0; i < n; ++i) {
    pos.clear();
    neg.clear();
    for (const auto& nb : g.neighbors(i)) (nb.sign > 0 ? pos : neg).push_back(nb.id);
    emit(i, 1, SignClass::balanced, pos);
    emit(i, 1, SignClass::unbalanced, neg);

    for (int l = 2; l <= max_order; ++l) {
      ++stamp;
      next_pos.clear();
      next_neg.clear();
      auto reach = [&](NodeId k, int product) {
        if (product > 0) {
          if (stamp_pos[k] != stamp) {
            stamp_pos[k] = stamp;
            next_pos.push_back(k);
          }
        } else if (stamp_neg[k] != stamp) {
          stamp_neg[k] = stamp;
          next_neg.push_back(k);
        }
      };
      for (auto j : pos)
        for (const auto& nb : g.neighbors(j)) reach(nb.id, nb.sign);
      for (auto j : neg)
        for (const auto& nb : g.neighbors(j)) reach(nb.id, -nb.sign);
      std::swap(pos, next_pos);
      std::swap(neg, next_neg);
      emit(i, l, SignClass::balanced, pos);
      emit(i, l, SignClass::unbalanced, neg);
    }
  }
  return sets;
}

std::optional<std::size_t> default_neighbor_cap(std::size_t num_nodes) {
  if (num_nodes <= 10'000) return std::nullopt;
  return 50;
}

/************ splitting ************************************/

EdgeSplit split_edges(const SignedGraph& g, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw SplitError("train fraction must lie in (0, 1)");

  std::vector<SignedEdge> pos, neg;
  for (const auto& e : g.edges()) (e.sign > 0 ? pos : neg).push_back(e);
  if (pos.size() < 2 || neg.size() < 2)
    throw SplitError("cannot stratify: need at least 2 edges of each sign, have " +
                     std::to_string(pos.size()) + " positive and " + std::to_string(neg.size()) +
                     " negative");

  EdgeSplit split;
  split.seed = seed;
  split.train_fraction = train_fraction;
  for (auto* group : {&pos, &neg}) {
    const std::uint64_t tag = group == &pos ? 1 : 2;
    auto rng = seeded_engine(seed, {tag});
    std::shuffle(group->begin(), group->end(), rng);
    const auto k = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(group->size())));
    split.train.insert(split.train.end(), group->begin(), group->begin() + k);
    split.test.insert(split.test.end(), group->begin() + k, group->end());
  }
  auto by_pair = [](const SignedEdge& a, const SignedEdge& b) {
    return a.src != b.src ? a.src < b.src : a.dst < b.dst;
  };
  std::sort(split.train.begin(), split.train.end(), by_pair);
  std::sort(split.test.begin(), split.test.end(), by_pair);
  return split;
}

}  // namespace muse
