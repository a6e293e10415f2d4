#pragma once

#include <cstddef>
#include <span>
#include <string>

namespace muse {

struct Confusion {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;

  std::size_t total() const noexcept { return tp + fp + tn + fn; }
  friend bool operator==(const Confusion&, const Confusion&) = default;
};

struct F1Result {
  double f1 = 0.0;
  Confusion confusion;
};

// Binary F1 on the positive class; a score >= threshold predicts positive.
// Labels are 1 (positive link) or 0.
F1Result f1_binary(std::span<const double> scores, std::span<const int> labels,
                   double threshold = 0.5);

// Mann-Whitney AUC with midrank credit for ties.
double auc(std::span<const double> scores, std::span<const int> labels);

struct EvalReport {
  double f1 = 0.0;
  double auc = 0.0;
  Confusion confusion;
  std::size_t n_test = 0;
  double threshold = 0.5;

  // One-line JSON object; doubles are written in shortest round-trip form.
  std::string to_json() const;
  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

EvalReport evaluate_scores(std::span<const double> scores, std::span<const int> labels,
                           double threshold = 0.5);

}  // namespace muse
