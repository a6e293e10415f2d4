#include "muse/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "json.hpp"

#include "muse/errors.hpp"

namespace muse {

namespace {

void check_inputs(std::span<const double> scores, std::span<const int> labels, const char* what) {
  if (scores.size() != labels.size())
    throw ContractError(std::string(what) + ": " + std::to_string(scores.size()) + " scores vs " +
                        std::to_string(labels.size()) + " labels");
  if (scores.empty()) throw ContractError(std::string(what) + ": empty input");
  for (std::size_t k = 0; k < scores.size(); ++k) {
    if (labels[k] != 0 && labels[k] != 1)
      throw ContractError(std::string(what) + ": labels must be 0 or 1");
    if (std::isnan(scores[k])) throw ContractError(std::string(what) + ": NaN score");
  }
}

}  // namespace

F1Result f1_binary(std::span<const double> scores, std::span<const int> labels, double threshold) {
  check_inputs(scores, labels, "f1_binary");
  F1Result r;
  auto& c = r.confusion;
  for (std::size_t k = 0; k < scores.size(); ++k) {
    const bool predicted = scores[k] >= threshold;
    if (labels[k]) predicted ? ++c.tp : ++c.fn;
    else predicted ? ++c.fp : ++c.tn;
  }
  if (c.tp == 0) return r;  // P + R = 0
  const double precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  const double recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  r.f1 = 2.0 * precision * recall / (precision + recall);
  return r;
}

double auc(std::span<const double> scores, std::span<const int> labels) {
  check_inputs(scores, labels, "auc");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Sum of positive ranks with ties sharing their midrank, kept doubled so
  // everything stays integral until the final division.
  std::size_t n_pos = 0;
  long double rank_sum2 = 0;
  for (std::size_t lo = 0; lo < n;) {
    std::size_t hi = lo;
    while (hi < n && scores[order[hi]] == scores[order[lo]]) ++hi;
    const std::size_t midrank2 = lo + 1 + hi;  // 2 * ((lo+1 + hi) / 2)
    for (std::size_t k = lo; k < hi; ++k)
      if (labels[order[k]]) {
        ++n_pos;
        rank_sum2 += static_cast<long double>(midrank2);
      }
    lo = hi;
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw MetricError("auc: labels contain a single class");
  const long double pos = static_cast<long double>(n_pos);
  const long double u2 = rank_sum2 - pos * (pos + 1);
  return static_cast<double>(u2 / (2 * pos * static_cast<long double>(n_neg)));
}

EvalReport evaluate_scores(std::span<const double> scores, std::span<const int> labels,
                           double threshold) {
  const auto f = f1_binary(scores, labels, threshold);
  EvalReport r;
  r.f1 = f.f1;
  r.auc = auc(scores, labels);
  r.confusion = f.confusion;
  r.n_test = scores.size();
  r.threshold = threshold;
  return r;
}

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["f1"] = f1;
  j["auc"] = auc;
  j["tp"] = confusion.tp;
  j["fp"] = confusion.fp;
  j["tn"] = confusion.tn;
  j["fn"] = confusion.fn;
  j["n_test"] = n_test;
  j["threshold"] = threshold;
  j["f1_convention"] = "binary-positive";
  return j.dump();
}

}  // namespace muse
