#include "muse/objective.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

namespace muse {

void ObjectiveConfig::validate() const {
  if (!std::isfinite(lambda) || lambda < 0.0) throw ConfigError("lambda must be finite and >= 0");
}

PredictorParams PredictorParams::from(const ParamStore& store) {
  PredictorParams p;
  const auto& w = store.value(param_names::predictor_weights);
  p.weights = Eigen::Map<const Eigen::VectorXd>(w.data(), w.size());
  p.bias = store.value(param_names::predictor_bias)(0, 0);
  return p;
}

void init_predictor_params(ParamStore& store, const ModelConfig& cfg, std::uint64_t seed) {
  const Index in = 2 * cfg.width();
  store.add(param_names::predictor_weights,
            glorot_uniform(in, 1, in, 1, seed, param_names::predictor_weights));
  store.add(param_names::predictor_bias, Tensor::Zero(1, 1));
}

namespace {

void check_rows(const Tensor& emb, std::span<const SignedEdge> edges, const char* what) {
  for (const auto& e : edges)
    if (static_cast<Index>(std::max(e.src, e.dst)) >= emb.rows())
      throw DimensionError(std::string(what) + ": edge (" + std::to_string(e.src) + ", " +
                           std::to_string(e.dst) + ") outside " + shape_string(emb));
}

double mean_sq_distance(const Tensor& emb, std::span<const SignedEdge> edges) {
  double sum = 0.0;
  for (const auto& e : edges) sum += (emb.row(e.src) - emb.row(e.dst)).squaredNorm();
  return sum / static_cast<double>(edges.size());
}

// Rejects predictions outside (0, 1); reports how many sit within the floor.
std::size_t check_probabilities(const double* p, std::size_t n) {
  std::size_t near_bound = 0;
  for (std::size_t k = 0; k < n; ++k) {
    if (!(p[k] > 0.0 && p[k] < 1.0))
      throw DomainError("sign_loss: prediction " + std::to_string(p[k]) + " outside (0, 1)");
    if (p[k] < kProbabilityFloor || p[k] > 1.0 - kProbabilityFloor) ++near_bound;
  }
  if (near_bound)
    std::cerr << "[muse] sign_loss: clamped " << near_bound << " of " << n
              << " predictions to [1e-12, 1-1e-12]\n";
  return near_bound;
}

}  // namespace

double structure_loss(const Tensor& emb, std::span<const SignedEdge> pos,
                      std::span<const SignedEdge> neg) {
  if (pos.empty() || neg.empty())
    throw ObjectiveError("structure_loss: need at least one positive and one negative edge");
  check_rows(emb, pos, "structure_loss");
  check_rows(emb, neg, "structure_loss");
  return mean_sq_distance(emb, pos) - mean_sq_distance(emb, neg);
}

double sign_loss(std::span<const double> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size())
    throw ContractError("sign_loss: " + std::to_string(predictions.size()) + " predictions vs " +
                        std::to_string(labels.size()) + " labels");
  if (predictions.empty()) throw ObjectiveError("sign_loss: empty batch");
  check_probabilities(predictions.data(), predictions.size());
  double sum = 0.0;
  for (std::size_t k = 0; k < predictions.size(); ++k) {
    const double p = std::clamp(predictions[k], kProbabilityFloor, 1.0 - kProbabilityFloor);
    if (labels[k] != 0 && labels[k] != 1) throw ContractError("sign_loss: labels must be 0 or 1");
    sum += labels[k] ? std::log(p) : std::log1p(-p);
  }
  return -sum / static_cast<double>(predictions.size());
}

std::vector<double> score_edges(const Tensor& emb, std::span<const SignedEdge> edges,
                                const PredictorParams& p) {
  check_rows(emb, edges, "score_edges");
  std::vector<double> scores;
  scores.reserve(edges.size());
  for (const auto& e : edges) scores.push_back(predict_sign(emb.row(e.src), emb.row(e.dst), p));
  return scores;
}

LossTerms objective(Tape& tape, ParamStore& store, Var emb, std::span<const SignedEdge> edges,
                    const ObjectiveConfig& cfg, ObjectiveOptions opts) {
  cfg.validate();
  check_rows(emb.value(), edges, "objective");
  if (edges.empty()) throw ObjectiveError("objective: empty edge batch");

  std::vector<Index> pos_src, pos_dst, neg_src, neg_dst, all_src, all_dst;
  Tensor labels(static_cast<Index>(edges.size()), 1);
  for (std::size_t k = 0; k < edges.size(); ++k) {
    const auto& e = edges[k];
    (e.sign > 0 ? pos_src : neg_src).push_back(e.src);
    (e.sign > 0 ? pos_dst : neg_dst).push_back(e.dst);
    all_src.push_back(e.src);
    all_dst.push_back(e.dst);
    labels(static_cast<Index>(k), 0) = sign_label(e.sign);
  }
  if (!opts.allow_missing_class && (pos_src.empty() || neg_src.empty()))
    throw ObjectiveError("objective: batch needs both positive and negative edges");

  // Structure-preserving term.
  Var structure;
  auto mean_distance = [&](const std::vector<Index>& a, const std::vector<Index>& b) {
    return scale(squared_l2_distance(gather_rows(emb, a), gather_rows(emb, b)),
                 1.0 / static_cast<double>(a.size()));
  };
  if (!pos_src.empty() && !neg_src.empty())
    structure = mean_distance(pos_src, pos_dst) - mean_distance(neg_src, neg_dst);
  else if (!pos_src.empty())
    structure = mean_distance(pos_src, pos_dst);
  else
    structure = scale(mean_distance(neg_src, neg_dst), -1.0);

  // Link-sign cross-entropy.
  const Index count = static_cast<Index>(edges.size());
  const Var w_l = tape.parameter(store, param_names::predictor_weights);
  const Var b = tape.parameter(store, param_names::predictor_bias);
  const Var pairs = concat_cols(gather_rows(emb, all_src), gather_rows(emb, all_dst));
  const Var logits = matmul(pairs, w_l) + matmul(tape.constant(Tensor::Ones(count, 1)), b);
  Var yhat = sigmoid(logits);
  if (check_probabilities(yhat.value().data(), edges.size()))
    yhat = clamp(yhat, kProbabilityFloor, 1.0 - kProbabilityFloor);
  const Var ones = tape.constant(Tensor::Ones(count, 1));
  const Var log_likelihood =
      matmul(tape.constant(labels.transpose()), log(yhat)) +
      matmul(tape.constant((1.0 - labels.array()).matrix().transpose()), log(ones - yhat));
  const Var sign = scale(log_likelihood, -1.0 / static_cast<double>(count));

  return {structure, sign, structure + scale(sign, cfg.lambda)};
}

}  // namespace muse
