#pragma once

// Independent reference implementations used only by tests. They work on
// plain nested vectors and loops and never call into the library's math.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "muse/difftape.hpp"
#include "muse/model.hpp"
#include "muse/sgraph.hpp"

namespace oracle {

using Mat = std::vector<std::vector<double>>;
using Vec = std::vector<double>;
using Dense = std::vector<std::vector<int>>;  // entries in {-1, 0, 1}

inline Dense dense_adjacency(const muse::SignedGraph& g) {
  Dense a(g.num_nodes(), std::vector<int>(g.num_nodes(), 0));
  for (const auto& e : g.edges()) a[e.src][e.dst] = a[e.dst][e.src] = e.sign;
  return a;
}

// Endpoints of every l-edge walk from i, split by sign product; i excluded.
inline std::pair<std::set<int>, std::set<int>> walk_sets(const Dense& a, int i, int l) {
  std::set<int> balanced, unbalanced;
  const int n = static_cast<int>(a.size());
  std::function<void(int, int, int)> walk = [&](int at, int left, int product) {
    if (left == 0) {
      if (at != i) (product > 0 ? balanced : unbalanced).insert(at);
      return;
    }
    for (int k = 0; k < n; ++k)
      if (a[at][k] != 0) walk(k, left - 1, product * a[at][k]);
  };
  walk(i, l, 1);
  return {balanced, unbalanced};
}

inline Mat to_mat(const muse::Tensor& t) {
  Mat m(static_cast<std::size_t>(t.rows()), Vec(static_cast<std::size_t>(t.cols())));
  for (long r = 0; r < t.rows(); ++r)
    for (long c = 0; c < t.cols(); ++c) m[r][c] = t(r, c);
  return m;
}

inline double leaky(double x, double slope) { return x > 0 ? x : slope * x; }

// alpha_m = sum_s exp(leaky(a . [W_T q_m ; W_T k_s])) / sum_{m,s}, written
// exactly as the formula reads (no score factorisation, no max shift).
inline Vec attention(const Mat& query, const Mat& key, const Mat& w_t, const Vec& w_a,
                     double slope) {
  const std::size_t M = query.size(), D = w_t.size();
  auto transform = [&](const Vec& x) {
    Vec y(D, 0.0);
    for (std::size_t r = 0; r < D; ++r)
      for (std::size_t c = 0; c < D; ++c) y[r] += w_t[r][c] * x[c];
    return y;
  };
  Vec numer(M, 0.0);
  double denom = 0.0;
  for (std::size_t m = 0; m < M; ++m) {
    const Vec tq = transform(query[m]);
    for (std::size_t s = 0; s < M; ++s) {
      const Vec tk = transform(key[s]);
      double z = 0.0;
      for (std::size_t d = 0; d < D; ++d) z += w_a[d] * tq[d] + w_a[D + d] * tk[d];
      const double e = std::exp(leaky(z, slope));
      numer[m] += e;
      denom += e;
    }
  }
  for (auto& v : numer) v /= denom;
  return numer;
}

inline Mat facets_of(const Vec& flat, std::size_t M, std::size_t D) {
  Mat out(M, Vec(D));
  for (std::size_t m = 0; m < M; ++m)
    for (std::size_t d = 0; d < D; ++d) out[m][d] = flat[m * D + d];
  return out;
}

struct Weights {
  Mat h0;
  // [order-1][class]
  std::vector<std::array<Mat, 2>> w_t;
  std::vector<std::array<Vec, 2>> w_a;
  std::vector<Mat> w_bu;
};

inline Weights weights_from(const muse::ParamStore& store, const muse::ModelConfig& cfg) {
  namespace pn = muse::param_names;
  Weights w;
  w.h0 = to_mat(store.value(pn::embeddings));
  for (int l = 1; l <= cfg.orders; ++l) {
    std::array<Mat, 2> t;
    std::array<Vec, 2> a;
    for (auto cls : muse::kSignClasses) {
      const auto c = static_cast<std::size_t>(cls);
      t[c] = to_mat(store.value(pn::transform(cfg, l, cls)));
      const auto& wa = store.value(pn::attention(cfg, l, cls));
      a[c].assign(wa.data(), wa.data() + wa.size());
    }
    w.w_t.push_back(t);
    w.w_a.push_back(a);
    w.w_bu.push_back(to_mat(store.value(pn::composite(l))));
  }
  return w;
}

// h^{BU(L)} for every node, with neighbor sets from walk enumeration.
inline Mat forward(const Dense& a, const Weights& w, int M, int D, int L, double slope) {
  const std::size_t n = a.size(), width = static_cast<std::size_t>(M * D);
  Mat out(n);
  for (std::size_t i = 0; i < n; ++i) {
    Vec prev = w.h0[i];
    for (int l = 1; l <= L; ++l) {
      const auto sets = walk_sets(a, static_cast<int>(i), l);
      std::array<Vec, 2> side;
      for (int cls = 0; cls < 2; ++cls) {
        Vec acc = prev;
        const Mat query = facets_of(prev, M, D);
        for (int j : (cls == 0 ? sets.first : sets.second)) {
          const Mat key = facets_of(w.h0[j], M, D);
          const Vec alpha = attention(query, key, w.w_t[l - 1][cls], w.w_a[l - 1][cls], slope);
          for (int m = 0; m < M; ++m)
            for (int d = 0; d < D; ++d) acc[m * D + d] += alpha[m] * key[m][d];
        }
        side[cls] = acc;
      }
      Vec next(width, 0.0);
      for (std::size_t c = 0; c < width; ++c) {
        double z = 0.0;
        for (std::size_t r = 0; r < width; ++r)
          z += w.w_bu[l - 1][r][c] * side[0][r] + w.w_bu[l - 1][width + r][c] * side[1][r];
        next[c] = std::tanh(z);
      }
      prev = next;
    }
    out[i] = prev;
  }
  return out;
}

// Textbook Adam on one scalar.
struct ScalarAdam {
  double m = 0, v = 0;
  int t = 0;
  double step(double x, double g, double lr, double b1 = 0.9, double b2 = 0.999,
              double eps = 1e-8) {
    ++t;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mhat = m / (1 - std::pow(b1, t));
    const double vhat = v / (1 - std::pow(b2, t));
    return x - lr * mhat / (std::sqrt(vhat) + eps);
  }
};

// Exhaustive pairwise AUC.
inline double pairwise_auc(const Vec& scores, const std::vector<int>& labels) {
  double credit = 0.0;
  std::size_t pairs = 0;
  for (std::size_t p = 0; p < scores.size(); ++p) {
    if (!labels[p]) continue;
    for (std::size_t q = 0; q < scores.size(); ++q) {
      if (labels[q]) continue;
      ++pairs;
      if (scores[p] > scores[q]) credit += 1.0;
      else if (scores[p] == scores[q]) credit += 0.5;
    }
  }
  return credit / static_cast<double>(pairs);
}

struct Recount {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  double f1 = 0.0;
};

inline Recount recount(const Vec& scores, const std::vector<int>& labels, double threshold) {
  Recount r;
  for (std::size_t k = 0; k < scores.size(); ++k) {
    const int predicted = scores[k] >= threshold ? 1 : 0;
    if (predicted == 1 && labels[k] == 1) ++r.tp;
    if (predicted == 1 && labels[k] == 0) ++r.fp;
    if (predicted == 0 && labels[k] == 0) ++r.tn;
    if (predicted == 0 && labels[k] == 1) ++r.fn;
  }
  const double p = r.tp + r.fp ? static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fp) : 0;
  const double rc = r.tp + r.fn ? static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fn) : 0;
  r.f1 = p + rc > 0 ? 2 * p * rc / (p + rc) : 0.0;
  return r;
}

/************ random instances *****************************/

// Erdos-Renyi signed graph on n nodes; ids are decimal strings.
inline std::vector<muse::SignedEdge> random_edges(int n, double p_edge, double p_positive,
                                                  std::mt19937_64& rng) {
  std::bernoulli_distribution edge(p_edge), positive(p_positive);
  std::vector<muse::SignedEdge> out;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (edge(rng))
        out.push_back({static_cast<muse::NodeId>(i), static_cast<muse::NodeId>(j),
                       positive(rng) ? 1 : -1});
  return out;
}

inline std::vector<std::string> decimal_ids(int n) {
  std::vector<std::string> ids;
  for (int i = 0; i < n; ++i) ids.push_back(std::to_string(i));
  return ids;
}

inline muse::SignedGraph random_graph(int n, double p_edge, double p_positive,
                                      std::mt19937_64& rng) {
  const auto edges = random_edges(n, p_edge, p_positive, rng);
  return muse::SignedGraph::from_edges(decimal_ids(n), edges);
}

// Random graph with at least one edge of each sign.
inline muse::SignedGraph random_mixed_graph(int n, double p_edge, std::mt19937_64& rng) {
  for (;;) {
    auto g = random_graph(n, p_edge, 0.5, rng);
    if (g.num_positive() > 0 && g.num_negative() > 0) return g;
  }
}

// Two positive cliques of six joined by four negative edges.
inline muse::SignedGraph two_cliques() {
  std::vector<muse::SignedEdge> edges;
  for (muse::NodeId base : {0u, 6u})
    for (muse::NodeId i = 0; i < 6; ++i)
      for (muse::NodeId j = i + 1; j < 6; ++j) edges.push_back({base + i, base + j, 1});
  for (muse::NodeId k = 0; k < 4; ++k) edges.push_back({k, k + 6, -1});
  return muse::SignedGraph::from_edges(decimal_ids(12), edges);
}

}  // namespace oracle
