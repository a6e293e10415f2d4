#include <cmath>
#include <functional>
#include <random>

#include "doctest.h"
#include "muse/difftape.hpp"
#include "muse/errors.hpp"

using namespace muse;

namespace {

Tensor random_tensor(Index r, Index c, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(r, c);
  for (Index k = 0; k < t.size(); ++k) t.data()[k] = u(rng);
  return t;
}

using Builder = std::function<Var(Tape&, const std::vector<Var>&)>;

// Root = ||f(inputs) - target||^2 so every output entry gets a distinct weight.
double root_value(ParamStore& store, const std::vector<std::string>& names, const Builder& f,
                  const Tensor& target, bool run_backward) {
  Tape tape;
  std::vector<Var> in;
  for (const auto& n : names) in.push_back(tape.parameter(store, n));
  const Var out = f(tape, in);
  const Var root = squared_l2_distance(out, tape.constant(target));
  if (run_backward) tape.backward(root);
  return root.value()(0, 0);
}

// Max relative error of the analytic gradient against central differences.
double fd_error(std::vector<Tensor> inputs, const Builder& f, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ParamStore store;
  std::vector<std::string> names;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    names.push_back("x" + std::to_string(k));
    store.add(names.back(), inputs[k]);
  }
  Tensor probe;
  {
    Tape tape;
    std::vector<Var> in;
    for (const auto& n : names) in.push_back(tape.constant(store.value(n)));
    probe = f(tape, in).value();
  }
  const Tensor target = random_tensor(probe.rows(), probe.cols(), rng);
  store.zero_grad();
  root_value(store, names, f, target, true);

  const double h = 1e-5;
  double worst = 0.0;
  for (const auto& n : names) {
    auto& e = store.at(n);
    const Tensor analytic = e.grad;
    for (Index k = 0; k < e.value.size(); ++k) {
      const double saved = e.value.data()[k];
      e.value.data()[k] = saved + h;
      const double up = root_value(store, names, f, target, false);
      e.value.data()[k] = saved - h;
      const double down = root_value(store, names, f, target, false);
      e.value.data()[k] = saved;
      const double numeric = (up - down) / (2 * h);
      const double a = analytic.data()[k];
      worst = std::max(worst, std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6}));
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("scalar examples") {
  Tape tape;
  ParamStore store;
  store.add("x", Tensor::Zero(1, 1));
  const Var x = tape.parameter(store, "x");
  const Var t = tanh(x);
  CHECK(t.value()(0, 0) == 0.0);
  tape.backward(t);
  CHECK(store.at("x").grad(0, 0) == doctest::Approx(1.0).epsilon(1e-15));

  Tape t2;
  const Var s = softmax(t2.constant(Tensor::Constant(4, 1, 2.5)));
  for (Index k = 0; k < 4; ++k) CHECK(s.value()(k, 0) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(leaky_relu(t2.constant(Tensor::Constant(1, 1, -1.0)), 0.2).value()(0, 0) ==
        doctest::Approx(-0.2).epsilon(1e-15));
  CHECK(leaky_relu(-1.0, 0.2) == doctest::Approx(-0.2));
}

TEST_CASE("backward of a parameter sum is all ones") {
  std::mt19937_64 rng(1);
  ParamStore store;
  store.add("w", random_tensor(3, 4, rng));
  Tape tape;
  tape.backward(reduce_sum(tape.parameter(store, "w")));
  CHECK(store.at("w").grad == Tensor::Ones(3, 4));
}

TEST_CASE("squared distance gradient is 2(x - y)") {
  std::mt19937_64 rng(2);
  ParamStore store;
  store.add("x", random_tensor(3, 4, rng));
  const Tensor y = random_tensor(3, 4, rng);
  Tape tape;
  tape.backward(squared_l2_distance(tape.parameter(store, "x"), tape.constant(y)));
  CHECK((store.at("x").grad - 2.0 * (store.value("x") - y)).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("every primitive matches central differences") {
  std::mt19937_64 rng(3);
  const double tol = 1e-6;
  auto r34 = [&] { return random_tensor(3, 4, rng); };

  SUBCASE("matmul") {
    CHECK(fd_error({r34(), random_tensor(4, 2, rng)}, [](Tape&, auto& v) { return matmul(v[0], v[1]); }, 1) < tol);
  }
  SUBCASE("transpose") {
    CHECK(fd_error({r34()}, [](Tape&, auto& v) { return transpose(v[0]); }, 2) < tol);
  }
  SUBCASE("add and sub") {
    CHECK(fd_error({r34(), r34()}, [](Tape&, auto& v) { return v[0] + v[1]; }, 3) < tol);
    CHECK(fd_error({r34(), r34()}, [](Tape&, auto& v) { return v[0] - v[1]; }, 4) < tol);
  }
  SUBCASE("concat") {
    CHECK(fd_error({r34(), random_tensor(3, 2, rng)}, [](Tape&, auto& v) { return concat_cols(v[0], v[1]); }, 5) < tol);
    CHECK(fd_error({r34(), random_tensor(2, 4, rng)}, [](Tape&, auto& v) {
            const std::vector<Var> parts{v[0], v[1], v[0]};
            return concat_rows(parts);
          }, 6) < tol);
  }
  SUBCASE("slice, reshape, gather") {
    CHECK(fd_error({r34()}, [](Tape&, auto& v) { return slice(v[0], 1, 2, 1, 3); }, 7) < tol);
    CHECK(fd_error({r34()}, [](Tape&, auto& v) { return reshape(v[0], 6, 2); }, 8) < tol);
    CHECK(fd_error({r34()}, [](Tape&, auto& v) {
            const std::vector<Index> rows{2, 0, 2, 1};
            return gather_rows(v[0], rows);
          }, 9) < tol);
  }
  SUBCASE("reductions and scaling") {
    CHECK(fd_error({r34()}, [](Tape&, auto& v) { return reduce_sum(v[0]); }, 10) < tol);
    CHECK(fd_error({r34()}, [](Tape&, auto& v) { return scale(v[0], -1.7); }, 11) < tol);
    CHECK(fd_error({r34(), r34()}, [](Tape&, auto& v) { return squared_l2_distance(v[0], v[1]); }, 12) < tol);
  }
  SUBCASE("activations") {
    CHECK(fd_error({r34()}, [](Tape&, auto& v) { return leaky_relu(v[0], 0.2); }, 13) < tol);
    CHECK(fd_error({r34()}, [](Tape&, auto& v) { return tanh(v[0]); }, 14) < tol);
    CHECK(fd_error({r34()}, [](Tape&, auto& v) { return sigmoid(v[0]); }, 15) < tol);
    CHECK(fd_error({random_tensor(5, 1, rng)}, [](Tape&, auto& v) { return softmax(v[0]); }, 16) < tol);
    CHECK(fd_error({random_tensor(1, 5, rng)}, [](Tape&, auto& v) { return softmax(v[0]); }, 17) < tol);
    CHECK(fd_error({random_tensor(3, 4, rng, 0.2, 2.0)}, [](Tape&, auto& v) { return log(v[0]); }, 18) < tol);
    CHECK(fd_error({r34()}, [](Tape&, auto& v) { return clamp(v[0], -2.0, 2.0); }, 19) < tol);
  }
}

TEST_CASE("clamped entries carry no gradient") {
  ParamStore store;
  Tensor x(1, 3);
  x << -5.0, 0.5, 5.0;
  store.add("x", x);
  Tape tape;
  tape.backward(reduce_sum(clamp(tape.parameter(store, "x"), -1.0, 1.0)));
  CHECK(store.at("x").grad(0, 0) == 0.0);
  CHECK(store.at("x").grad(0, 1) == 1.0);
  CHECK(store.at("x").grad(0, 2) == 0.0);
}

TEST_CASE("softmax output is a distribution") {
  std::mt19937_64 rng(4);
  for (int k = 0; k < 100; ++k) {
    Tape tape;
    const Var s = softmax(tape.constant(random_tensor(7, 1, rng, -30, 30)));
    CHECK(std::abs(s.value().sum() - 1.0) < 1e-12);
    CHECK(s.value().minCoeff() > 0.0);
  }
}

TEST_CASE("reusing a parameter accumulates gradients") {
  std::mt19937_64 rng(5);
  ParamStore twice, once;
  const Tensor w = random_tensor(3, 3, rng), x = random_tensor(2, 3, rng);
  twice.add("w", w);
  once.add("w", w);
  {
    Tape tape;
    const Var a = tape.parameter(twice, "w");
    const Var b = tape.parameter(twice, "w");
    const Var xv = tape.constant(x);
    tape.backward(reduce_sum(tanh(matmul(xv, a))) + reduce_sum(tanh(matmul(xv, b))));
  }
  {
    Tape tape;
    const Var a = tape.parameter(once, "w");
    tape.backward(scale(reduce_sum(tanh(matmul(tape.constant(x), a))), 2.0));
  }
  CHECK((twice.at("w").grad - once.at("w").grad).cwiseAbs().maxCoeff() < 1e-14);
  // Same variable feeding two branches.
  ParamStore shared;
  shared.add("w", w);
  Tape tape;
  const Var a = tape.parameter(shared, "w");
  tape.backward(reduce_sum(a) + reduce_sum(a));
  CHECK(shared.at("w").grad == Tensor::Constant(3, 3, 2.0));
}

TEST_CASE("contract and shape errors") {
  Tape tape;
  const Var a = tape.constant(Tensor::Ones(2, 3));
  const Var b = tape.constant(Tensor::Ones(2, 2));
  CHECK_THROWS_AS(tape.backward(a), ContractError);
  CHECK_THROWS_AS(matmul(a, a), DimensionError);
  CHECK_THROWS_AS(a + b, DimensionError);
  CHECK_THROWS_AS(softmax(a), DimensionError);
  CHECK_THROWS_AS(slice(a, 1, 2, 0, 1), DimensionError);
  CHECK_THROWS_AS(reshape(a, 4, 2), DimensionError);
  CHECK_THROWS_AS(log(tape.constant(Tensor::Zero(1, 1))), DomainError);
  try {
    matmul(a, a);
  } catch (const DimensionError& e) {
    CHECK(std::string(e.what()).find("(2 x 3)") != std::string::npos);
  }
}

TEST_CASE("non-finite values are rejected at creation") {
  Tape tape;
  Tensor bad = Tensor::Zero(1, 2);
  bad(0, 1) = std::nan("");
  CHECK_THROWS_AS(tape.constant(bad), DomainError);
  ParamStore store;
  CHECK_THROWS_AS(store.add("p", bad), DomainError);
  const Var big = tape.constant(Tensor::Constant(1, 1, 1e200));
  CHECK_THROWS_AS(matmul(big, big), DomainError);
}

TEST_CASE("parameter store invariants") {
  ParamStore store;
  store.add("a", Tensor::Ones(2, 2));
  CHECK(store.at("a").m == Tensor::Zero(2, 2));
  CHECK(store.at("a").step == 0);
  CHECK_THROWS(store.add("a", Tensor::Ones(1, 1)));
  ParamEntry e{Tensor::Ones(2, 2), Tensor::Zero(2, 2), Tensor::Zero(2, 1), Tensor::Zero(2, 2), 0};
  CHECK_THROWS(store.restore("b", e));
  CHECK(store.num_scalars() == 4);
}
