#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "nargen/ops.hpp"
#include "test_util.hpp"

using namespace nargen;
using namespace nargen::testutil;

namespace {

Tensor<double> random_tensor(Shape shape, std::uint64_t seed, double scale = 1.0) {
  Tensor<double> t(std::move(shape));
  Rng rng(seed);
  for (Index i = 0; i < t.size(); ++i) t[i] = rng.normal() * scale;
  return t;
}

}  // namespace

TEST_CASE("tensor shape/data invariant") {
  CHECK_THROWS_AS(Tensor<float>(Shape{2, 3}, std::vector<float>(5, 0.f)), DimensionError);
  Tensor<float> t(Shape{2, 3});
  CHECK(t.size() == 6);
  CHECK(Tensor<float>::scalar(2.5f).item() == 2.5f);
}

TEST_CASE("matmul hand-computed closed form") {
  const Tensor<double> a(Shape{2, 2}, {1, 2, 3, 4});
  const Tensor<double> b(Shape{2, 2}, {5, 6, 7, 8});
  const Tensor<double> c = matmul(a, b);
  CHECK(c.data() == std::vector<double>{19, 22, 43, 50});
}

TEST_CASE("matmul identity") {
  const Tensor<double> a = random_tensor({4, 4}, 7);
  Tensor<double> eye(Shape{4, 4});
  for (Index i = 0; i < 4; ++i) eye[i * 4 + i] = 1.0;
  CHECK(matmul(a, eye) == a);
}

TEST_CASE("matmul against naive triple-loop oracle") {
  const Tensor<double> a = random_tensor({5, 7}, 11);
  const Tensor<double> b = random_tensor({7, 3}, 13);
  const Tensor<double> c = matmul(a, b);
  for (Index i = 0; i < 5; ++i) {
    for (Index j = 0; j < 3; ++j) {
      double acc = 0.0;
      for (Index k = 0; k < 7; ++k) acc += a[i * 7 + k] * b[k * 3 + j];
      CHECK(rel_err(c[i * 3 + j], acc, 1e-9) < 1e-5);
    }
  }
}

TEST_CASE("matmul shape mismatch") {
  CHECK_THROWS_AS(matmul(Tensor<double>(Shape{2, 3}), Tensor<double>(Shape{2, 3})), DimensionError);
}

TEST_CASE("softmax uniform symmetry") {
  const Tensor<double> y = softmax(Tensor<double>(Shape{4}), 0);
  for (Index i = 0; i < 4; ++i) CHECK(y[i] == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("softmax shift invariance") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor<double> x = random_tensor({6}, 100 + static_cast<std::uint64_t>(trial), 3.0);
    Tensor<double> shifted = x;
    const double c = rng.normal() * 10.0;
    for (Index i = 0; i < x.size(); ++i) shifted[i] += c;
    const Tensor<double> a = softmax(x, 0);
    const Tensor<double> b = softmax(shifted, 0);
    for (Index i = 0; i < x.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-10));
  }
}

TEST_CASE("softmax frozen example") {
  // expected values computed independently from exp(x_i)/sum exp(x_j)
  const Tensor<double> y = softmax(Tensor<double>(Shape{3}, {1, 2, 3}), 0);
  CHECK(y[0] == doctest::Approx(0.09003).epsilon(1e-4));
  CHECK(y[1] == doctest::Approx(0.24473).epsilon(1e-4));
  CHECK(y[2] == doctest::Approx(0.66524).epsilon(1e-4));
}

TEST_CASE("softmax large-magnitude logits stay finite and normalized") {
  const Tensor<float> y = softmax(Tensor<float>(Shape{3}, {1e30f, -1e30f, 0.f}), 0);
  CHECK(y.all_finite());
  CHECK(y[0] == doctest::Approx(1.0));
}

TEST_CASE("softmax rows sum to one along any axis") {
  const Tensor<double> x = random_tensor({3, 4, 5}, 21, 4.0);
  for (int axis : {0, 1, 2, -1}) {
    const Tensor<double> y = softmax(x, axis);
    const int ax = axis < 0 ? axis + 3 : axis;
    const Index len = x.dim(ax);
    Index outer = 1, inner = 1;
    for (int i = 0; i < ax; ++i) outer *= x.dim(i);
    for (int i = ax + 1; i < 3; ++i) inner *= x.dim(i);
    for (Index o = 0; o < outer; ++o) {
      for (Index in = 0; in < inner; ++in) {
        double total = 0.0;
        for (Index j = 0; j < len; ++j) total += y[o * len * inner + j * inner + in];
        CHECK(total == doctest::Approx(1.0).epsilon(1e-6));
      }
    }
  }
}

TEST_CASE("layer_norm constant vector is zeroed by eps") {
  const Tensor<double> x = Tensor<double>::full(Shape{1, 8}, 3.25);
  const Tensor<double> y = layer_norm(x, Tensor<double>::full(Shape{8}, 1.0),
                                      Tensor<double>(Shape{8}), 1e-6);
  for (Index i = 0; i < 8; ++i) CHECK(y[i] == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("layer_norm two-point symmetry") {
  const Tensor<double> y = layer_norm(Tensor<double>(Shape{1, 2}, {1, 3}),
                                      Tensor<double>::full(Shape{2}, 1.0),
                                      Tensor<double>(Shape{2}), 1e-12);
  CHECK(y[0] == doctest::Approx(-1.0).epsilon(1e-5));
  CHECK(y[1] == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("layer_norm against direct formula oracle") {
  const Index d = 16;
  const Tensor<double> x = random_tensor({2, d}, 31, 2.0);
  const Tensor<double> gamma = random_tensor({d}, 32);
  const Tensor<double> beta = random_tensor({d}, 33);
  const double eps = 1e-6;
  const Tensor<double> y = layer_norm(x, gamma, beta, eps);
  for (Index r = 0; r < 2; ++r) {
    double mean = 0.0, var = 0.0;
    for (Index j = 0; j < d; ++j) mean += x[r * d + j];
    mean /= d;
    for (Index j = 0; j < d; ++j) var += (x[r * d + j] - mean) * (x[r * d + j] - mean);
    var /= d;
    for (Index j = 0; j < d; ++j) {
      const double want = (x[r * d + j] - mean) / std::sqrt(var + eps) * gamma[j] + beta[j];
      CHECK(rel_err(y[r * d + j], want, 1e-9) < 1e-5);
    }
  }
}

TEST_CASE("cross_entropy uniform logits") {
  const Tensor<double> logits(Shape{2, 8});
  const std::vector<std::int32_t> targets{3, 5};
  const std::vector<std::uint8_t> mask{1, 1};
  const auto info = cross_entropy_value(logits, targets, mask);
  CHECK(info.value == doctest::Approx(std::log(8.0)).epsilon(1e-12));
  CHECK(info.masked_count == 2);
  CHECK_FALSE(info.empty_mask);
}

TEST_CASE("cross_entropy two-logit closed form") {
  const Tensor<double> logits(Shape{1, 2}, {1, 0});
  const auto info = cross_entropy_value(logits, std::vector<std::int32_t>{0},
                                        std::vector<std::uint8_t>{1});
  CHECK(info.value == doctest::Approx(std::log(1.0 + std::exp(-1.0))).epsilon(1e-12));
}

TEST_CASE("cross_entropy against scalar-loop oracle") {
  const Tensor<double> logits = random_tensor({6, 11}, 41, 5.0);
  std::vector<std::int32_t> targets;
  std::vector<std::uint8_t> mask;
  Rng rng(42);
  for (int r = 0; r < 6; ++r) {
    targets.push_back(static_cast<std::int32_t>(rng.uniform_int(11)));
    mask.push_back(static_cast<std::uint8_t>(rng.uniform() < 0.7 ? 1 : 0));
  }
  mask[0] = 1;  // keep at least one position
  const auto info = cross_entropy_value(logits, targets, mask);

  // independent evaluation: per position, -log(exp(l_t)/sum exp(l_j))
  double want = 0.0;
  int count = 0;
  for (int r = 0; r < 6; ++r) {
    if (!mask[static_cast<std::size_t>(r)]) continue;
    double total = 0.0;
    for (int j = 0; j < 11; ++j) total += std::exp(logits[r * 11 + j]);
    want += -std::log(std::exp(logits[r * 11 + targets[static_cast<std::size_t>(r)]]) / total);
    ++count;
  }
  want /= count;
  CHECK(std::abs(info.value - want) < 1e-6);
  CHECK(info.value >= 0.0);
}

TEST_CASE("cross_entropy all-zero mask is zero with a warning flag") {
  const Tensor<double> logits = random_tensor({3, 4}, 51);
  const auto info = cross_entropy_value(logits, std::vector<std::int32_t>{0, 1, 2},
                                        std::vector<std::uint8_t>{0, 0, 0});
  CHECK(info.value == 0.0);
  CHECK(info.empty_mask);
}

TEST_CASE("backward of sum is all-ones") {
  Tape<double> tape;
  const Var p = tape.leaf(random_tensor({3, 5}, 61));
  tape.backward(sum(tape, p));
  for (Index i = 0; i < 15; ++i) CHECK(tape.grad(p)[i] == 1.0);
}

TEST_CASE("parameter unused by the loss gets a zero gradient") {
  Tape<double> tape;
  const Var used = tape.leaf(random_tensor({4}, 62));
  const Var unused = tape.leaf(random_tensor({4}, 63));
  tape.backward(sum(tape, used));
  for (Index i = 0; i < 4; ++i) {
    CHECK(tape.grad(unused)[i] == 0.0);
    CHECK(tape.grad(used)[i] == 1.0);
  }
}

TEST_CASE("backward rejects a non-scalar loss") {
  Tape<double> tape;
  const Var p = tape.leaf(random_tensor({2, 2}, 64));
  CHECK_THROWS_AS(tape.backward(p), ContractError);
}

// The gradient-fidelity invariant over a composition of every provided op:
// affine -> gelu -> attention -> layer_norm -> matmul / matmul_nt -> softmax
// -> add/scale -> cross_entropy, checked coordinate-by-coordinate against
// central finite differences in double.
TEST_CASE("composed-op gradients match central finite differences") {
  const Index batch = 2, seq = 3, d = 4, v = 5;
  const int heads = 2;
  Tensor<double> emb = random_tensor({v, d}, 71, 0.5);
  Tensor<double> wq = random_tensor({d, d}, 72, 0.5), bq = random_tensor({d}, 73, 0.1);
  Tensor<double> wk = random_tensor({d, d}, 74, 0.5), bk = random_tensor({d}, 75, 0.1);
  Tensor<double> wv = random_tensor({d, d}, 76, 0.5), bv = random_tensor({d}, 77, 0.1);
  Tensor<double> gamma = random_tensor({d}, 78, 0.3);
  Tensor<double> beta = random_tensor({d}, 79, 0.3);
  const std::vector<std::int32_t> ids{0, 1, 2, 3, 4, 1};
  const std::vector<std::int32_t> targets{1, 2, 3, 4, 0, 2};
  const std::vector<std::uint8_t> mask{1, 0, 1, 1, 1, 0};

  auto build = [&](Tape<double>& tape, std::vector<Var>* leaves_out = nullptr) {
    const Var e = tape.leaf(emb);
    const Var vwq = tape.leaf(wq);
    const Var vbq = tape.leaf(bq);
    const Var vwk = tape.leaf(wk);
    const Var vbk = tape.leaf(bk);
    const Var vwv = tape.leaf(wv);
    const Var vbv = tape.leaf(bv);
    const Var vgamma = tape.leaf(gamma);
    const Var vbeta = tape.leaf(beta);
    if (leaves_out) *leaves_out = {e, vwq, vbq, vwk, vbk, vwv, vbv, vgamma, vbeta};
    const Var x = gather_rows(tape, e, ids);
    const Var q = affine(tape, x, vwq, vbq);
    const Var k = affine(tape, x, vwk, vbk);
    const Var val = affine(tape, x, vwv, vbv);
    const Var att = multi_head_attention(tape, gelu(tape, q), k, val, batch, seq, heads,
                                         AttentionMode::causal);
    const Var h = layer_norm(tape, add(tape, x, att), vgamma, vbeta, 1e-6);
    const Var probs = softmax(tape, h, -1);
    const Var logits = matmul_nt(tape, scale(tape, probs, 2.0), e);
    return cross_entropy(tape, logits, targets, mask);
  };

  Tape<double> tape;
  std::vector<Var> leaves;
  const Var loss = build(tape, &leaves);
  tape.backward(loss);

  std::vector<std::pair<std::string, Tensor<double>*>> inputs{
      {"emb", &emb}, {"wq", &wq}, {"bq", &bq},       {"wk", &wk},    {"bk", &bk},
      {"wv", &wv},   {"bv", &bv}, {"gamma", &gamma}, {"beta", &beta}};
  std::vector<const Tensor<double>*> analytic;
  for (Var leaf : leaves) analytic.push_back(&tape.grad(leaf));

  auto eval = [&]() {
    Tape<double> t2(/*grad_enabled=*/false);
    return t2.value(build(t2)).item();
  };
  const GradCheck gc = check_gradients(inputs, analytic, eval);
  CAPTURE(gc.worst);
  CHECK(gc.max_rel < 1e-4);
}

TEST_CASE("dropout gradient with a frozen mask") {
  Tensor<double> x = random_tensor({4, 4}, 81);
  const std::uint64_t seed = 99;
  auto build = [&](Tape<double>& tape) {
    const Var xin = tape.leaf(x);
    return sum(tape, dropout(tape, xin, 0.5, seed));
  };
  Tape<double> tape;
  const Var loss = build(tape);
  tape.backward(loss);
  auto eval = [&]() {
    Tape<double> t2(false);
    return t2.value(build(t2)).item();
  };
  const GradCheck gc =
      check_gradients({{"x", &x}}, {&tape.grad(0)}, eval);
  CHECK(gc.max_rel < 1e-6);
}

TEST_CASE("ops are deterministic given identical inputs") {
  const Tensor<float> a = Tensor<float>::cast_from(random_tensor({8, 8}, 91));
  const Tensor<float> b = Tensor<float>::cast_from(random_tensor({8, 8}, 92));
  CHECK(matmul(a, b) == matmul(a, b));
  CHECK(softmax(a, -1) == softmax(a, -1));
  Rng r1(7), r2(7);
  for (int i = 0; i < 100; ++i) CHECK(r1.next_u64() == r2.next_u64());
}

TEST_CASE("sample_categorical covers the simplex deterministically") {
  const Tensor<double> logits(Shape{3}, {0.0, 1.0, 2.0});
  Rng rng(5);
  std::vector<int> counts(3, 0);
  for (int i = 0; i < 30000; ++i) {
    counts[static_cast<std::size_t>(sample_categorical(logits.raw(), 3, 1.0, rng))]++;
  }
  const Tensor<double> p = softmax(logits, 0);
  for (int j = 0; j < 3; ++j) {
    CHECK(std::abs(counts[static_cast<std::size_t>(j)] / 30000.0 - p[j]) < 0.01);
  }
  // temperature 0 degenerates to argmax
  Rng rng2(5);
  CHECK(sample_categorical(logits.raw(), 3, 0.0, rng2) == 2);
}
