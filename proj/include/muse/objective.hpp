#pragma once

#include <Eigen/Core>

#include <span>
#include <vector>

#include "muse/difftape.hpp"
#include "muse/model.hpp"
#include "muse/sgraph.hpp"

namespace muse {

struct ObjectiveConfig {
  double lambda = 4.0;
  void validate() const;
};

namespace param_names {
inline constexpr const char* predictor_weights = "W_L";  // 2MD x 1
inline constexpr const char* predictor_bias = "b";       // 1 x 1
}  // namespace param_names

// Logistic link-sign predictor sigmoid(W_L^T [h_i | h_j] + b).
struct PredictorParams {
  Eigen::VectorXd weights;
  double bias = 0.0;

  static PredictorParams from(const ParamStore& store);
};

// W_L Glorot-uniform, b = 0.
void init_predictor_params(ParamStore& store, const ModelConfig& cfg, std::uint64_t seed);

// Predictions this close to 0 or 1 are clamped before taking logs.
inline constexpr double kProbabilityFloor = 1e-12;

inline int sign_label(int sign) { return sign > 0 ? 1 : 0; }

/************ plain evaluation *****************************/

// (1/|E+|) sum ||h_i - h_j||^2 - (1/|E-|) sum ||h_i - h_k||^2 over rows of emb.
double structure_loss(const Tensor& emb, std::span<const SignedEdge> pos,
                      std::span<const SignedEdge> neg);

template <typename DI, typename DJ>
double predict_sign(const Eigen::MatrixBase<DI>& h_i, const Eigen::MatrixBase<DJ>& h_j,
                    const PredictorParams& p) {
  const Index w = h_i.size();
  if (h_j.size() != w || p.weights.size() != 2 * w)
    throw DimensionError("predict_sign: h_i length " + std::to_string(w) + ", h_j length " +
                         std::to_string(h_j.size()) + ", W_L length " +
                         std::to_string(p.weights.size()));
  const double logit = p.weights.head(w).dot(detail::as_column(h_i, "predict_sign")) +
                       p.weights.tail(w).dot(detail::as_column(h_j, "predict_sign")) + p.bias;
  return stable_sigmoid(logit);
}

// Mean binary cross-entropy; every prediction must lie strictly inside (0, 1).
double sign_loss(std::span<const double> predictions, std::span<const int> labels);

inline double total_loss(double structure, double sign, const ObjectiveConfig& cfg) {
  return structure + cfg.lambda * sign;
}

// Predictor output for each edge (source row first).
std::vector<double> score_edges(const Tensor& emb, std::span<const SignedEdge> edges,
                                const PredictorParams& p);

/************ tape objective *******************************/

struct LossTerms {
  Var structure;
  Var sign;
  Var total;
};

struct ObjectiveOptions {
  // Drop the structure term of a sign class that has no edges instead of
  // rejecting the batch (used by per-node updates).
  bool allow_missing_class = false;
};

// Edges index rows of `emb`. W_L and b are bound from `store`.
LossTerms objective(Tape& tape, ParamStore& store, Var emb, std::span<const SignedEdge> edges,
                    const ObjectiveConfig& cfg, ObjectiveOptions opts = {});

}  // namespace muse
