#pragma once

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "muse/difftape.hpp"
#include "muse/errors.hpp"
#include "muse/sgraph.hpp"

namespace muse {

struct ModelConfig {
  int facets = 3;  // M
  int dim = 32;    // D, per facet
  int orders = 2;  // L
  double leaky_slope = 0.2;
  std::optional<std::size_t> neighbor_cap;
  // One (W_T, W_A) pair per sign class reused at every order.
  bool share_attention = false;

  Index width() const noexcept { return static_cast<Index>(facets) * dim; }
  void validate() const;
};

/************ parameter naming and init ********************/

namespace param_names {
inline constexpr const char* embeddings = "h0";
std::string transform(const ModelConfig& cfg, int order, SignClass cls);  // W_T, D x D
std::string attention(const ModelConfig& cfg, int order, SignClass cls);  // W_A, 2D x 1
std::string composite(int order);                                         // W_BU, 2MD x MD
}  // namespace param_names

// Uniform in +-sqrt(6 / (fan_in + fan_out)), seeded by (seed, salt).
Tensor glorot_uniform(Index rows, Index cols, Index fan_in, Index fan_out, std::uint64_t seed,
                      const std::string& salt);

// One row per raw id, entries ~ N(0, 1/sqrt(D)). Each row depends only on
// (seed, raw id), so relabeling nodes permutes rows.
Tensor init_embeddings(std::span<const std::string> raw_ids, const ModelConfig& cfg,
                       std::uint64_t seed);
// Same, keyed by the decimal dense id.
Tensor init_embeddings(std::size_t n, const ModelConfig& cfg, std::uint64_t seed);

// Registers h0, every W_T / W_A and every W_BU.
void init_model_params(ParamStore& store, std::span<const std::string> raw_ids,
                       const ModelConfig& cfg, std::uint64_t seed);

/************ plain per-node evaluation ********************/

namespace detail {

template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> as_column(
    const Eigen::MatrixBase<Derived>& v, const char* what) {
  if (v.cols() == 1) return v.col(0);
  if (v.rows() == 1) return v.row(0).transpose();
  throw DimensionError(std::string(what) + ": expected a vector, got (" + std::to_string(v.rows()) +
                       " x " + std::to_string(v.cols()) + ")");
}

// Core of the multi-faceted attention given pre-activation scores:
// alpha_m = sum_s exp(sigma(q_m + k_s)) / sum_{m,s} exp(sigma(q_m + k_s)).
template <typename DQ, typename DK>
Eigen::Matrix<typename DQ::Scalar, Eigen::Dynamic, 1> attention_from_scores(
    const Eigen::MatrixBase<DQ>& q, const Eigen::MatrixBase<DK>& k, typename DQ::Scalar slope) {
  using Scalar = typename DQ::Scalar;
  const Index M = q.size();
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> e(M, M);
  for (Index m = 0; m < M; ++m)
    for (Index s = 0; s < M; ++s) {
      const Scalar z = q(m) + k(s);
      e(m, s) = z > Scalar(0) ? z : slope * z;
    }
  e = (e.array() - e.maxCoeff()).exp().matrix();
  return e.rowwise().sum() / e.sum();
}

}  // namespace detail

// alpha_ij in R^M for query facets (M x D) of node i and key facets (M x D)
// of node j under one (W_T, W_A) pair.
template <typename DQ, typename DK, typename DT, typename DA>
Eigen::Matrix<typename DQ::Scalar, Eigen::Dynamic, 1> attention_weights(
    const Eigen::MatrixBase<DQ>& query, const Eigen::MatrixBase<DK>& key,
    const Eigen::MatrixBase<DT>& w_t, const Eigen::MatrixBase<DA>& w_a,
    typename DQ::Scalar slope) {
  const Index M = query.rows(), D = query.cols();
  if (key.rows() != M || key.cols() != D || w_t.rows() != D || w_t.cols() != D ||
      w_a.size() != 2 * D)
    throw DimensionError("attention_weights: query (" + std::to_string(M) + " x " +
                         std::to_string(D) + "), key (" + std::to_string(key.rows()) + " x " +
                         std::to_string(key.cols()) + "), W_T (" + std::to_string(w_t.rows()) +
                         " x " + std::to_string(w_t.cols()) + "), W_A size " +
                         std::to_string(w_a.size()));
  const auto wa = detail::as_column(w_a, "attention_weights");
  const auto q = ((query * w_t.transpose()) * wa.head(D)).eval();
  const auto k = ((key * w_t.transpose()) * wa.tail(D)).eval();
  return detail::attention_from_scores(q, k, slope);
}

// prev + sum_{j in neighbors} [alpha_ij1 h0_j1 | ... | alpha_ijM h0_jM], with
// queries from prev (viewed M x D) and keys/values from rows of h0.
template <typename DP, typename DH, typename DT, typename DA>
Eigen::Matrix<typename DP::Scalar, Eigen::Dynamic, 1> aggregate_order(
    const Eigen::MatrixBase<DP>& prev, std::span<const NodeId> neighbors,
    const Eigen::MatrixBase<DH>& h0, const Eigen::MatrixBase<DT>& w_t,
    const Eigen::MatrixBase<DA>& w_a, int facets, typename DP::Scalar slope) {
  using Scalar = typename DP::Scalar;
  using RowMat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  if (facets < 1 || prev.size() % facets != 0 || h0.cols() != prev.size())
    throw DimensionError("aggregate_order: prev of length " + std::to_string(prev.size()) +
                         " incompatible with " + std::to_string(facets) + " facets and h0 width " +
                         std::to_string(h0.cols()));
  const Index D = prev.size() / facets;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> out = detail::as_column(prev, "aggregate_order");
  const RowMat query = Eigen::Map<const RowMat>(out.data(), facets, D);
  for (const NodeId j : neighbors) {
    const RowMat row = h0.row(j);
    const RowMat key = Eigen::Map<const RowMat>(row.data(), facets, D);
    const auto alpha = attention_weights(query, key, w_t, w_a, slope);
    for (int m = 0; m < facets; ++m) out.segment(m * D, D) += alpha(m) * key.row(m).transpose();
  }
  return out;
}

// tanh(W_BU^T [hB ; hU]).
template <typename DB, typename DU, typename DW>
Eigen::Matrix<typename DB::Scalar, Eigen::Dynamic, 1> compose(const Eigen::MatrixBase<DB>& h_b,
                                                              const Eigen::MatrixBase<DU>& h_u,
                                                              const Eigen::MatrixBase<DW>& w_bu) {
  using Scalar = typename DB::Scalar;
  if (h_b.size() != h_u.size() || w_bu.rows() != 2 * h_b.size() || w_bu.cols() != h_b.size())
    throw DimensionError("compose: hB length " + std::to_string(h_b.size()) + ", hU length " +
                         std::to_string(h_u.size()) + ", W_BU (" + std::to_string(w_bu.rows()) +
                         " x " + std::to_string(w_bu.cols()) + ")");
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> stacked(2 * h_b.size());
  stacked << detail::as_column(h_b, "compose"), detail::as_column(h_u, "compose");
  return (w_bu.transpose() * stacked).array().tanh().matrix();
}

/************ batched forward on the tape ******************/

// Rows r of the result are
//   sum_{j in neighborhoods[r]} [alpha_rj1 v_j1 | ... | alpha_rjM v_jM]
// where alpha comes from attention_from_scores(query_scores.row(r),
// key_scores.row(j)). The spans must outlive backward().
Var facet_attention(Var query_scores, Var key_scores, Var values,
                    std::vector<std::span<const NodeId>> neighborhoods, double slope);

// h^{BU(L)} for `targets` (one output row each), reading h0 and weights from
// `store` as trainable leaves.
Var forward(Tape& tape, ParamStore& store, const NeighborSets& sets, const ModelConfig& cfg,
            std::span<const NodeId> targets);

// Full n x MD embedding table; parameters enter as constants.
Tensor forward(const ParamStore& store, const NeighborSets& sets, const ModelConfig& cfg);

}  // namespace muse
