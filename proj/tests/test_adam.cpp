#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "nargen/adam.hpp"
#include "test_util.hpp"

using namespace nargen;

TEST_CASE("zero gradients leave parameters unchanged and advance t") {
  Tensor<double> p(Shape{3}, {1.0, -2.0, 0.5});
  const Tensor<double> before = p;
  const Tensor<double> g(Shape{3});
  auto state = make_adam_state<double>({&p}, /*lr=*/1e-2);
  adam_step<double>(state, {&p}, {&g});
  CHECK(p == before);
  CHECK(state.t == 1);
}

TEST_CASE("first step moves by about -lr * sign(g)") {
  for (double g0 : {0.37, -1.4, 250.0}) {
    Tensor<double> p(Shape{1}, {1.0});
    const Tensor<double> g(Shape{1}, {g0});
    auto state = make_adam_state<double>({&p}, /*lr=*/1e-3);
    adam_step<double>(state, {&p}, {&g});
    // bias-corrected m-hat = g, v-hat = g^2, so the step is lr * sign(g)
    // up to the eps in the denominator
    CHECK(p[0] == doctest::Approx(1.0 - 1e-3 * (g0 > 0 ? 1.0 : -1.0)).epsilon(1e-6));
  }
}

TEST_CASE("three-step trajectory on a scalar quadratic matches a hand reference") {
  // loss(p) = 0.5 * p^2, gradient p; reference implements the Adam
  // recurrences directly, step by step.
  const double lr = 0.1, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  Tensor<double> p(Shape{1}, {2.0});
  auto state = make_adam_state<double>({&p}, lr, b1, b2, eps);

  double ref_p = 2.0, m = 0.0, v = 0.0;
  for (int t = 1; t <= 3; ++t) {
    const Tensor<double> g(Shape{1}, {p[0]});
    adam_step<double>(state, {&p}, {&g});

    const double ref_g = ref_p;
    m = b1 * m + (1 - b1) * ref_g;
    v = b2 * v + (1 - b2) * ref_g * ref_g;
    const double mhat = m / (1 - std::pow(b1, t));
    const double vhat = v / (1 - std::pow(b2, t));
    ref_p -= lr * mhat / (std::sqrt(vhat) + eps);

    CHECK(std::abs(p[0] - ref_p) < 1e-7);
  }
  CHECK(state.t == 3);
}

TEST_CASE("shape mismatch is rejected") {
  Tensor<double> p(Shape{3});
  const Tensor<double> g(Shape{4});
  auto state = make_adam_state<double>({&p});
  CHECK_THROWS_AS((adam_step<double>(state, {&p}, {&g})), DimensionError);
}

TEST_CASE("update is deterministic") {
  auto run = [] {
    Tensor<float> p(Shape{128});
    Rng rng(17);
    for (Index i = 0; i < p.size(); ++i) p[i] = static_cast<float>(rng.normal());
    auto state = make_adam_state<float>({&p}, 1e-3);
    for (int s = 0; s < 10; ++s) {
      Tensor<float> g(Shape{128});
      Rng grng(static_cast<std::uint64_t>(100 + s));
      for (Index i = 0; i < g.size(); ++i) g[i] = static_cast<float>(grng.normal());
      adam_step<float>(state, {&p}, {&g});
    }
    return p;
  };
  CHECK(run() == run());
}
