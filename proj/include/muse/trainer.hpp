#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "muse/difftape.hpp"
#include "muse/model.hpp"
#include "muse/objective.hpp"
#include "muse/sgraph.hpp"

namespace muse {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

enum class UpdateGranularity { per_epoch, per_node };

const char* to_string(UpdateGranularity g);
UpdateGranularity parse_granularity(const std::string& s);

struct TrainConfig {
  int epochs = 300;
  double learning_rate = 1e-4;
  double lambda = 4.0;
  // Edges per optimizer step; unset means full batch up to 50,000 training
  // edges and 10,000-edge batches beyond.
  std::optional<std::size_t> batch_edges;
  std::uint64_t seed = 42;
  AdamConfig adam;
  UpdateGranularity granularity = UpdateGranularity::per_epoch;

  void validate() const;
  std::size_t effective_batch(std::size_t train_edges) const;
};

// Bias-corrected Adam on every entry of the store, then zeroes gradients.
void adam_step(ParamStore& store, double learning_rate, const AdamConfig& adam);

struct EpochStats {
  int epoch = 0;
  double total = 0.0;
  double structure = 0.0;
  double sign = 0.0;

  friend bool operator==(const EpochStats&, const EpochStats&) = default;
};

struct TrainState {
  ParamStore params;
  int epochs_done = 0;
  std::vector<EpochStats> history;
};

// Fresh parameters: model weights and h0 (per raw id) plus the predictor.
TrainState init_train_state(const SignedGraph& g, const ModelConfig& model,
                            const TrainConfig& train);

// One pass over the training edges; each batch costs one Adam step.
// Throws TrainingError when a loss turns non-finite.
const EpochStats& train_epoch(TrainState& state, const NeighborSets& sets,
                              std::span<const SignedEdge> train_edges, const ModelConfig& model,
                              const TrainConfig& train);

// Runs epochs until state.epochs_done == train.epochs.
void continue_training(TrainState& state, const NeighborSets& sets,
                       std::span<const SignedEdge> train_edges, const ModelConfig& model,
                       const TrainConfig& train);

struct TrainResult {
  ParamStore params;
  Tensor embeddings;
  std::vector<EpochStats> history;
};

// `g` supplies node identities; `sets` must be built from the training edges.
TrainResult train(const SignedGraph& g, const NeighborSets& sets, const EdgeSplit& split,
                  const ModelConfig& model, const TrainConfig& train);

/************ checkpoints **********************************/

struct Checkpoint {
  ModelConfig model;
  TrainConfig train;
  int epochs_done = 0;
  std::vector<EpochStats> history;
  ParamStore params;
  // Free-form provenance (input hashes, split parameters, ...).
  std::map<std::string, std::string> meta;
};

// Text container. Values round-trip exactly.
void save_checkpoint(const Checkpoint& ckpt, std::ostream& out);
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
// Throws IntegrityError when the trailing digest does not match the content.
Checkpoint load_checkpoint(std::istream& in);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace muse
