#include "muse/model.hpp"

#include <functional>
#include <random>

namespace muse {

void ModelConfig::validate() const {
  if (facets < 1) throw ConfigError("facet count M must be >= 1");
  if (dim < 1) throw ConfigError("facet dimension D must be >= 1");
  if (orders < 1) throw ConfigError("order count L must be >= 1");
  if (!(leaky_slope > 0.0 && leaky_slope < 1.0))
    throw ConfigError("leaky slope must lie in (0, 1)");
  if (neighbor_cap && *neighbor_cap < 1) throw ConfigError("neighbor cap must be >= 1");
}

namespace param_names {

std::string transform(const ModelConfig& cfg, int order, SignClass cls) {
  const std::string level = cfg.share_attention ? "shared" : "l" + std::to_string(order);
  return "W_T/" + level + "/" + to_string(cls);
}

std::string attention(const ModelConfig& cfg, int order, SignClass cls) {
  const std::string level = cfg.share_attention ? "shared" : "l" + std::to_string(order);
  return "W_A/" + level + "/" + to_string(cls);
}

std::string composite(int order) { return "W_BU/l" + std::to_string(order); }

}  // namespace param_names

namespace {

std::mt19937_64 engine_for(std::uint64_t seed, const std::string& salt) {
  std::vector<std::uint32_t> words{static_cast<std::uint32_t>(seed),
                                   static_cast<std::uint32_t>(seed >> 32)};
  for (unsigned char ch : salt) words.push_back(ch);
  words.push_back(static_cast<std::uint32_t>(salt.size()));
  std::seed_seq seq(words.begin(), words.end());
  return std::mt19937_64(seq);
}

}  // namespace

Tensor glorot_uniform(Index rows, Index cols, Index fan_in, Index fan_out, std::uint64_t seed,
                      const std::string& salt) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  auto rng = engine_for(seed, "glorot/" + salt);
  std::uniform_real_distribution<double> dist(-limit, limit);
  Tensor t(rows, cols);
  for (Index k = 0; k < t.size(); ++k) t.data()[k] = dist(rng);
  return t;
}

Tensor init_embeddings(std::span<const std::string> raw_ids, const ModelConfig& cfg,
                       std::uint64_t seed) {
  cfg.validate();
  if (raw_ids.empty()) throw ContractError("init_embeddings: need at least one node");
  Tensor h0(static_cast<Index>(raw_ids.size()), cfg.width());
  const double stddev = 1.0 / std::sqrt(static_cast<double>(cfg.dim));
  for (std::size_t i = 0; i < raw_ids.size(); ++i) {
    auto rng = engine_for(seed, "h0/" + raw_ids[i]);
    std::normal_distribution<double> dist(0.0, stddev);
    for (Index c = 0; c < h0.cols(); ++c) h0(static_cast<Index>(i), c) = dist(rng);
  }
  return h0;
}

Tensor init_embeddings(std::size_t n, const ModelConfig& cfg, std::uint64_t seed) {
  std::vector<std::string> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = std::to_string(i);
  return init_embeddings(ids, cfg, seed);
}

void init_model_params(ParamStore& store, std::span<const std::string> raw_ids,
                       const ModelConfig& cfg, std::uint64_t seed) {
  store.add(param_names::embeddings, init_embeddings(raw_ids, cfg, seed));
  const Index D = cfg.dim, W = cfg.width();
  for (int l = 1; l <= cfg.orders; ++l) {
    for (auto cls : kSignClasses) {
      const auto wt = param_names::transform(cfg, l, cls);
      const auto wa = param_names::attention(cfg, l, cls);
      if (!store.contains(wt)) store.add(wt, glorot_uniform(D, D, D, D, seed, wt));
      if (!store.contains(wa)) store.add(wa, glorot_uniform(2 * D, 1, 2 * D, 1, seed, wa));
    }
    const auto wbu = param_names::composite(l);
    store.add(wbu, glorot_uniform(2 * W, W, 2 * W, W, seed, wbu));
  }
}

/************ fused attention aggregation ******************/

Var facet_attention(Var query_scores, Var key_scores, Var values,
                    std::vector<std::span<const NodeId>> neighborhoods, double slope) {
  const auto& q = query_scores.value();
  const auto& k = key_scores.value();
  const auto& v = values.value();
  const Index M = q.cols();
  if (k.cols() != M || k.rows() != v.rows() || M < 1 || v.cols() % M != 0 ||
      static_cast<std::size_t>(q.rows()) != neighborhoods.size())
    throw DimensionError("facet_attention: query scores " + shape_string(q) + ", key scores " +
                         shape_string(k) + ", values " + shape_string(v) + ", " +
                         std::to_string(neighborhoods.size()) + " neighborhoods");
  const Index D = v.cols() / M;
  for (const auto& nbhd : neighborhoods)
    for (const NodeId j : nbhd)
      if (static_cast<Index>(j) >= v.rows())
        throw DimensionError("facet_attention: neighbor " + std::to_string(j) + " outside " +
                             shape_string(v));

  Tensor out = Tensor::Zero(q.rows(), v.cols());
  Tensor w(M, M);
  for (Index r = 0; r < q.rows(); ++r) {
    for (const NodeId j : neighborhoods[static_cast<std::size_t>(r)]) {
      const auto alpha = detail::attention_from_scores(q.row(r), k.row(j), slope);
      for (Index m = 0; m < M; ++m) out.row(r).segment(m * D, D) += alpha(m) * v.row(j).segment(m * D, D);
    }
  }

  auto backward = [nbhds = std::move(neighborhoods), slope, M, D](BackwardContext& c) {
    const auto& q = c.input(0);
    const auto& k = c.input(1);
    const auto& v = c.input(2);
    const auto& g = c.adjoint();
    auto& dq = c.input_adjoint(0);
    auto& dk = c.input_adjoint(1);
    auto& dv = c.input_adjoint(2);
    Tensor p(M, M), z(M, M);
    Eigen::VectorXd dalpha(M), alpha(M);
    for (Index r = 0; r < q.rows(); ++r) {
      for (const NodeId j : nbhds[static_cast<std::size_t>(r)]) {
        for (Index m = 0; m < M; ++m)
          for (Index s = 0; s < M; ++s) {
            z(m, s) = q(r, m) + k(j, s);
            p(m, s) = leaky_relu(z(m, s), slope);
          }
        p = (p.array() - p.maxCoeff()).exp().matrix();
        p /= p.sum();
        alpha = p.rowwise().sum();
        for (Index m = 0; m < M; ++m) {
          const auto g_m = g.row(r).segment(m * D, D);
          dalpha(m) = g_m.dot(v.row(j).segment(m * D, D));
          dv.row(j).segment(m * D, D) += alpha(m) * g_m;
        }
        const double mean = alpha.dot(dalpha);
        for (Index m = 0; m < M; ++m)
          for (Index s = 0; s < M; ++s) {
            const double dz = p(m, s) * (dalpha(m) - mean) * (z(m, s) > 0.0 ? 1.0 : slope);
            dq(r, m) += dz;
            dk(j, s) += dz;
          }
      }
    }
  };
  return query_scores.tape().record(OpKind::custom, {query_scores, key_scores, values},
                                    std::move(out), std::move(backward));
}

/************ forward **************************************/

namespace {

using Binder = std::function<Var(const std::string&)>;

Var forward_impl(const Binder& bind, const NeighborSets& sets, const ModelConfig& cfg,
                 std::span<const NodeId> targets) {
  cfg.validate();
  if (sets.order() < cfg.orders)
    throw ContractError("neighbor sets of order " + std::to_string(sets.order()) +
                        " cannot feed a model with L = " + std::to_string(cfg.orders));
  const Var h0 = bind(param_names::embeddings);
  const Index n = h0.rows(), M = cfg.facets, D = cfg.dim;
  if (h0.cols() != cfg.width())
    throw DimensionError("h0 " + shape_string(h0.value()) + " does not match M*D = " +
                         std::to_string(cfg.width()));
  if (static_cast<std::size_t>(n) != sets.num_nodes())
    throw DimensionError("h0 has " + std::to_string(n) + " rows but neighbor sets cover " +
                         std::to_string(sets.num_nodes()) + " nodes");

  std::vector<Index> rows(targets.begin(), targets.end());
  const Index t = static_cast<Index>(rows.size());
  Var prev = gather_rows(h0, rows);
  const Var h0_facets = reshape(h0, n * M, D);

  for (int l = 1; l <= cfg.orders; ++l) {
    std::array<Var, 2> side;
    for (auto cls : kSignClasses) {
      const Var w_t = bind(param_names::transform(cfg, l, cls));
      const Var w_a = bind(param_names::attention(cfg, l, cls));
      const Var w_t_tr = transpose(w_t);
      // (W_T h)^T a = h^T (W_T^T a): project both halves of W_A once.
      const Var query_proj = matmul(w_t_tr, slice(w_a, 0, D, 0, 1));
      const Var key_proj = matmul(w_t_tr, slice(w_a, D, D, 0, 1));
      const Var query_scores = reshape(matmul(reshape(prev, t * M, D), query_proj), t, M);
      const Var key_scores = reshape(matmul(h0_facets, key_proj), n, M);

      std::vector<std::span<const NodeId>> nbhds;
      nbhds.reserve(rows.size());
      for (const NodeId i : targets) nbhds.push_back(sets.get(i, l, cls));
      side[static_cast<std::size_t>(cls)] =
          prev + facet_attention(query_scores, key_scores, h0, std::move(nbhds), cfg.leaky_slope);
    }
    prev = tanh(matmul(concat_cols(side[0], side[1]), bind(param_names::composite(l))));
  }
  return prev;
}

}  // namespace

Var forward(Tape& tape, ParamStore& store, const NeighborSets& sets, const ModelConfig& cfg,
            std::span<const NodeId> targets) {
  return forward_impl([&](const std::string& name) { return tape.parameter(store, name); }, sets,
                      cfg, targets);
}

Tensor forward(const ParamStore& store, const NeighborSets& sets, const ModelConfig& cfg) {
  Tape tape;
  std::vector<NodeId> all(sets.num_nodes());
  for (NodeId i = 0; i < all.size(); ++i) all[i] = i;
  const Var out = forward_impl(
      [&](const std::string& name) { return tape.constant(store.value(name)); }, sets, cfg, all);
  return out.value();
}

}  // namespace muse
