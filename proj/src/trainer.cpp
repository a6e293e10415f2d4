#include "muse/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

namespace muse {

const char* to_string(UpdateGranularity g) {
  return g == UpdateGranularity::per_epoch ? "per-epoch" : "per-node";
}

UpdateGranularity parse_granularity(const std::string& s) {
  if (s == "per-epoch") return UpdateGranularity::per_epoch;
  if (s == "per-node") return UpdateGranularity::per_node;
  throw ConfigError("update granularity must be per-epoch or per-node, got '" + s + "'");
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
    throw ConfigError("learning rate must be > 0");
  if (!std::isfinite(lambda) || lambda < 0.0) throw ConfigError("lambda must be finite and >= 0");
  if (batch_edges && *batch_edges < 2) throw ConfigError("batch size must be >= 2 edges");
  if (!(adam.beta1 > 0.0 && adam.beta1 < 1.0) || !(adam.beta2 > 0.0 && adam.beta2 < 1.0))
    throw ConfigError("Adam betas must lie in (0, 1)");
  if (!(adam.epsilon > 0.0)) throw ConfigError("Adam epsilon must be > 0");
}

std::size_t TrainConfig::effective_batch(std::size_t train_edges) const {
  if (batch_edges) return *batch_edges;
  return train_edges <= 50'000 ? train_edges : 10'000;
}

void adam_step(ParamStore& store, double learning_rate, const AdamConfig& adam) {
  for (auto& [name, p] : store) {
    ++p.step;
    const double t = static_cast<double>(p.step);
    p.m = adam.beta1 * p.m + (1.0 - adam.beta1) * p.grad;
    p.v = adam.beta2 * p.v + (1.0 - adam.beta2) * p.grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(adam.beta1, t);
    const double c2 = 1.0 - std::pow(adam.beta2, t);
    p.value.array() -=
        learning_rate * (p.m.array() / c1) / ((p.v.array() / c2).sqrt() + adam.epsilon);
    p.grad.setZero();
  }
}

TrainState init_train_state(const SignedGraph& g, const ModelConfig& model,
                            const TrainConfig& train) {
  model.validate();
  train.validate();
  TrainState state;
  init_model_params(state.params, g.raw_ids(), model, train.seed);
  init_predictor_params(state.params, model, train.seed);
  return state;
}

namespace {

std::vector<std::vector<SignedEdge>> epoch_batches(std::span<const SignedEdge> edges,
                                                   std::size_t num_nodes, int epoch,
                                                   const TrainConfig& cfg) {
  std::vector<std::vector<SignedEdge>> batches;
  if (cfg.granularity == UpdateGranularity::per_node) {
    std::vector<std::vector<SignedEdge>> incident(num_nodes);
    for (const auto& e : edges) {
      incident[e.src].push_back(e);
      incident[e.dst].push_back(e);
    }
    for (auto& b : incident)
      if (!b.empty()) batches.push_back(std::move(b));
    return batches;
  }

  const auto size = cfg.effective_batch(edges.size());
  if (edges.size() <= size) {
    batches.emplace_back(edges.begin(), edges.end());
    return batches;
  }

  // Stratified mini-batches: both sign classes are spread over every batch.
  std::vector<SignedEdge> pos, neg;
  for (const auto& e : edges) (e.sign > 0 ? pos : neg).push_back(e);
  std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                    static_cast<std::uint32_t>(epoch), 0x6261u};
  std::mt19937_64 rng(seq);
  std::shuffle(pos.begin(), pos.end(), rng);
  std::shuffle(neg.begin(), neg.end(), rng);
  std::size_t k = (edges.size() + size - 1) / size;
  k = std::max<std::size_t>(1, std::min({k, pos.size(), neg.size()}));
  for (std::size_t b = 0; b < k; ++b) {
    std::vector<SignedEdge> batch;
    batch.insert(batch.end(), pos.begin() + b * pos.size() / k, pos.begin() + (b + 1) * pos.size() / k);
    batch.insert(batch.end(), neg.begin() + b * neg.size() / k, neg.begin() + (b + 1) * neg.size() / k);
    batches.push_back(std::move(batch));
  }
  return batches;
}

std::string describe(const EpochStats& s) {
  std::ostringstream os;
  os << "total=" << s.total << " structure=" << s.structure << " sign=" << s.sign;
  return os.str();
}

}  // namespace

const EpochStats& train_epoch(TrainState& state, const NeighborSets& sets,
                              std::span<const SignedEdge> train_edges, const ModelConfig& model,
                              const TrainConfig& train) {
  const int epoch = state.epochs_done + 1;
  const ObjectiveConfig objective_cfg{train.lambda};
  const ObjectiveOptions opts{train.granularity == UpdateGranularity::per_node};

  EpochStats stats;
  stats.epoch = epoch;
  double weight = 0.0;
  std::vector<Index> local(sets.num_nodes(), -1);

  for (auto& batch : epoch_batches(train_edges, sets.num_nodes(), epoch, train)) {
    std::vector<NodeId> targets;
    for (const auto& e : batch) {
      targets.push_back(e.src);
      targets.push_back(e.dst);
    }
    std::sort(targets.begin(), targets.end());
    targets.erase(std::unique(targets.begin(), targets.end()), targets.end());
    for (std::size_t r = 0; r < targets.size(); ++r) local[targets[r]] = static_cast<Index>(r);
    std::vector<SignedEdge> local_edges;
    local_edges.reserve(batch.size());
    for (const auto& e : batch)
      local_edges.push_back({static_cast<NodeId>(local[e.src]), static_cast<NodeId>(local[e.dst]), e.sign});

    EpochStats step{epoch, NAN, NAN, NAN};
    try {
      Tape tape;
      const Var emb = forward(tape, state.params, sets, model, targets);
      const auto terms = objective(tape, state.params, emb, local_edges, objective_cfg, opts);
      step = {epoch, terms.total.value()(0, 0), terms.structure.value()(0, 0),
              terms.sign.value()(0, 0)};
      state.params.zero_grad();
      tape.backward(terms.total);
    } catch (const DomainError& err) {
      throw TrainingError("epoch " + std::to_string(epoch) + ": " + err.what() + " (" +
                          describe(step) + ")");
    }
    if (!std::isfinite(step.total) || !std::isfinite(step.structure) || !std::isfinite(step.sign))
      throw TrainingError("epoch " + std::to_string(epoch) + ": non-finite loss (" + describe(step) + ")");
    adam_step(state.params, train.learning_rate, train.adam);

    const double w = static_cast<double>(batch.size());
    stats.total += w * step.total;
    stats.structure += w * step.structure;
    stats.sign += w * step.sign;
    weight += w;
  }
  if (weight > 0.0) {
    stats.total /= weight;
    stats.structure /= weight;
    stats.sign /= weight;
  }
  state.epochs_done = epoch;
  state.history.push_back(stats);
  return state.history.back();
}

void continue_training(TrainState& state, const NeighborSets& sets,
                       std::span<const SignedEdge> train_edges, const ModelConfig& model,
                       const TrainConfig& train) {
  model.validate();
  train.validate();
  if (train_edges.empty()) throw TrainingError("no training edges");
  while (state.epochs_done < train.epochs) train_epoch(state, sets, train_edges, model, train);
}

TrainResult train(const SignedGraph& g, const NeighborSets& sets, const EdgeSplit& split,
                  const ModelConfig& model, const TrainConfig& cfg) {
  const bool has_pos = std::any_of(split.train.begin(), split.train.end(),
                                   [](const SignedEdge& e) { return e.sign > 0; });
  const bool has_neg = std::any_of(split.train.begin(), split.train.end(),
                                   [](const SignedEdge& e) { return e.sign < 0; });
  if (!has_pos || !has_neg) throw TrainingError("training edges must contain both signs");

  auto state = init_train_state(g, model, cfg);
  continue_training(state, sets, split.train, model, cfg);
  TrainResult result;
  result.embeddings = forward(state.params, sets, model);
  result.params = std::move(state.params);
  result.history = std::move(state.history);
  return result;
}

}  // namespace muse
