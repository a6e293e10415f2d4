#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "muse/errors.hpp"
#include "muse/trainer.hpp"
#include "oracles.hpp"

using namespace muse;

namespace {

ModelConfig tiny_model() {
  ModelConfig cfg;
  cfg.facets = 2;
  cfg.dim = 4;
  cfg.orders = 2;
  return cfg;
}

struct Instance {
  SignedGraph g;
  EdgeSplit split;
  NeighborSets sets;
};

Instance make_instance(std::uint64_t seed, int n = 14) {
  std::mt19937_64 rng(seed);
  Instance inst{oracle::random_mixed_graph(n, 0.35, rng), {}, {}};
  inst.split.train = inst.g.edges();
  inst.sets = higher_order_neighbor_sets(inst.g, 2);
  return inst;
}

double full_loss(ParamStore& store, const Instance& inst, const ModelConfig& model, double lambda) {
  Tape tape;
  std::vector<NodeId> all(inst.g.num_nodes());
  for (NodeId i = 0; i < all.size(); ++i) all[i] = i;
  const Var emb = forward(tape, store, inst.sets, model, all);
  return objective(tape, store, emb, inst.split.train, {lambda}).total.value()(0, 0);
}

bool same_store(const ParamStore& a, const ParamStore& b) {
  if (a.size() != b.size()) return false;
  auto ib = b.begin();
  for (auto ia = a.begin(); ia != a.end(); ++ia, ++ib) {
    if (ia->first != ib->first || ia->second.step != ib->second.step) return false;
    if (ia->second.value != ib->second.value || ia->second.m != ib->second.m ||
        ia->second.v != ib->second.v)
      return false;
  }
  return true;
}

}  // namespace

TEST_CASE("adam_step with zero gradient leaves parameters unchanged") {
  ParamStore store;
  store.add("x", Tensor::Constant(2, 2, 0.7));
  adam_step(store, 1e-3, {});
  CHECK(store.value("x") == Tensor::Constant(2, 2, 0.7));
  CHECK(store.at("x").step == 1);
}

TEST_CASE("first adam step moves by lr against the gradient sign") {
  ParamStore store;
  store.add("x", Tensor::Constant(1, 2, 1.0));
  store.at("x").grad << 0.3, -2.0;
  adam_step(store, 1e-3, {});
  CHECK(store.value("x")(0, 0) == doctest::Approx(1.0 - 1e-3).epsilon(1e-7));
  CHECK(store.value("x")(0, 1) == doctest::Approx(1.0 + 1e-3).epsilon(1e-7));
  CHECK(store.at("x").grad == Tensor::Zero(1, 2));
}

TEST_CASE("adam trajectory on a quadratic matches a scalar implementation") {
  ParamStore store;
  Tensor x0(1, 3);
  x0 << 0.5, -1.5, 3.0;
  store.add("x", x0);
  const double a[] = {1.0, 4.0, 0.25}, c[] = {2.0, 0.0, -1.0};
  oracle::ScalarAdam ref[3];
  double want[3] = {0.5, -1.5, 3.0};
  for (int t = 0; t < 5; ++t) {
    for (int k = 0; k < 3; ++k) {
      store.at("x").grad(0, k) = a[k] * (store.value("x")(0, k) - c[k]);
      want[k] = ref[k].step(want[k], a[k] * (want[k] - c[k]), 0.05);
    }
    adam_step(store, 0.05, {});
  }
  for (int k = 0; k < 3; ++k) CHECK(std::abs(store.value("x")(0, k) - want[k]) < 1e-12);
  CHECK(store.at("x").step == 5);
}

TEST_CASE("train config validation") {
  TrainConfig cfg;
  cfg.epochs = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.learning_rate = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.adam.beta1 = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.adam.epsilon = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK(TrainConfig{}.effective_batch(50'000) == 50'000);
  CHECK(TrainConfig{}.effective_batch(50'001) == 10'000);
}

TEST_CASE("one epoch is one Adam step per batch") {
  const auto inst = make_instance(1);
  const auto model = tiny_model();
  TrainConfig cfg;
  cfg.epochs = 1;
  auto state = init_train_state(inst.g, model, cfg);
  continue_training(state, inst.sets, inst.split.train, model, cfg);
  for (const auto& [name, e] : state.params) CHECK(e.step == 1);
  CHECK(state.history.size() == 1);

  cfg.batch_edges = 6;
  auto batched = init_train_state(inst.g, model, cfg);
  continue_training(batched, inst.sets, inst.split.train, model, cfg);
  const auto n = inst.split.train.size();
  std::size_t negatives = 0;
  for (const auto& e : inst.split.train) negatives += e.sign < 0;
  const auto expected = std::min({(n + 5) / 6, negatives, n - negatives});
  CHECK(batched.params.at(param_names::embeddings).step == static_cast<std::int64_t>(expected));

  cfg.batch_edges.reset();
  cfg.granularity = UpdateGranularity::per_node;
  auto per_node = init_train_state(inst.g, model, cfg);
  continue_training(per_node, inst.sets, inst.split.train, model, cfg);
  std::size_t touched = 0;
  for (NodeId i = 0; i < inst.g.num_nodes(); ++i) touched += !inst.g.neighbors(i).empty();
  CHECK(per_node.params.at(param_names::embeddings).step == static_cast<std::int64_t>(touched));
}

TEST_CASE("training is deterministic") {
  const auto inst = make_instance(2);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.learning_rate = 1e-2;
  const auto a = train(inst.g, inst.sets, inst.split, tiny_model(), cfg);
  const auto b = train(inst.g, inst.sets, inst.split, tiny_model(), cfg);
  CHECK(a.embeddings == b.embeddings);
  CHECK(a.history == b.history);
  CHECK(same_store(a.params, b.params));
  cfg.seed = 43;
  CHECK(train(inst.g, inst.sets, inst.split, tiny_model(), cfg).embeddings != a.embeddings);
}

TEST_CASE("a single small full-batch step does not increase the loss") {
  for (double lr : {1e-4, 1e-5}) {
    int failures = 0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      const auto inst = make_instance(100 + seed, 10);
      const auto model = tiny_model();
      TrainConfig cfg;
      cfg.epochs = 1;
      cfg.learning_rate = lr;
      cfg.seed = seed;
      auto state = init_train_state(inst.g, model, cfg);
      const double before = full_loss(state.params, inst, model, cfg.lambda);
      train_epoch(state, inst.sets, inst.split.train, model, cfg);
      const double after = full_loss(state.params, inst, model, cfg.lambda);
      failures += after > before;
    }
    INFO("lr = " << lr);
    CHECK(failures == 0);
  }
}

TEST_CASE("checkpoint round trip resumes bit-exactly") {
  const auto inst = make_instance(3);
  const auto model = tiny_model();
  TrainConfig cfg;
  cfg.epochs = 8;
  cfg.learning_rate = 5e-3;

  auto straight = init_train_state(inst.g, model, cfg);
  continue_training(straight, inst.sets, inst.split.train, model, cfg);

  TrainConfig first = cfg;
  first.epochs = 3;
  auto half = init_train_state(inst.g, model, first);
  continue_training(half, inst.sets, inst.split.train, model, first);
  Checkpoint ckpt{model, cfg, half.epochs_done, half.history, std::move(half.params),
                  {{"note", "value with spaces"}}};
  std::stringstream buf;
  save_checkpoint(ckpt, buf);
  const std::string text = buf.str();

  std::istringstream in(text);
  auto loaded = load_checkpoint(in);
  CHECK(loaded.epochs_done == 3);
  CHECK(loaded.meta.at("note") == "value with spaces");
  CHECK(loaded.train.learning_rate == cfg.learning_rate);
  CHECK(loaded.model.facets == model.facets);
  CHECK(same_store(loaded.params, ckpt.params));

  TrainState resumed{std::move(loaded.params), loaded.epochs_done, loaded.history};
  continue_training(resumed, inst.sets, inst.split.train, loaded.model, loaded.train);
  CHECK(same_store(resumed.params, straight.params));
  CHECK(resumed.history == straight.history);
}

TEST_CASE("tampered or truncated checkpoints are rejected") {
  const auto inst = make_instance(4);
  TrainConfig cfg;
  cfg.epochs = 1;
  auto state = init_train_state(inst.g, tiny_model(), cfg);
  Checkpoint ckpt{tiny_model(), cfg, 0, {}, std::move(state.params), {}};
  std::stringstream buf;
  save_checkpoint(ckpt, buf);
  std::string text = buf.str();

  std::string tampered = text;
  const auto pos = tampered.find("value ") + 7;
  tampered[pos] = tampered[pos] == '1' ? '2' : '1';
  std::istringstream a(tampered);
  CHECK_THROWS_AS(load_checkpoint(a), IntegrityError);

  std::istringstream b(text.substr(0, text.size() / 2));
  CHECK_THROWS_AS(load_checkpoint(b), IntegrityError);
}

TEST_CASE("non-finite losses abort with the epoch and components") {
  const auto inst = make_instance(5);
  const auto model = tiny_model();
  TrainConfig cfg;
  cfg.epochs = 2;
  auto state = init_train_state(inst.g, model, cfg);
  state.params.at(param_names::predictor_weights).value.setConstant(1e308);
  try {
    continue_training(state, inst.sets, inst.split.train, model, cfg);
    FAIL("expected TrainingError");
  } catch (const TrainingError& e) {
    const std::string what = e.what();
    CHECK(what.find("epoch 1") != std::string::npos);
    CHECK(what.find("structure=") != std::string::npos);
  }
}

TEST_CASE("training needs both signs") {
  const std::vector<SignedEdge> e{{0, 1, 1}, {1, 2, 1}, {0, 2, -1}};
  const auto g = SignedGraph::from_edges(oracle::decimal_ids(3), e);
  EdgeSplit split;
  split.train = {e[0], e[1]};
  TrainConfig cfg;
  cfg.epochs = 1;
  CHECK_THROWS_AS(train(g, higher_order_neighbor_sets(g, 2), split, tiny_model(), cfg), TrainingError);
}
