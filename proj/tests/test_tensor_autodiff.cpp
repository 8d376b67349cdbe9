#include <cmath>
#include <numeric>

#include "doctest.h"
#include "frn/autodiff.hpp"
#include "frn/errors.hpp"
#include "test_util.hpp"

using namespace frn;
using frn::test::op_gradient_error;
using frn::test::random_tensor;

namespace {

Tensor<double> triple_loop(const Tensor<double>& a, const Tensor<double>& b) {
  Tensor<double> c({a.rows(), b.cols()});
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      c(i, j) = s;
    }
  }
  return c;
}

Tensor<double> eval_matmul(const Tensor<double>& a, const Tensor<double>& b) {
  Tape<double> tape;
  return matmul(tape.constant(a), tape.constant(b)).value();
}

}  // namespace

TEST_CASE("tensor: shape and data length must agree") {
  CHECK_THROWS_AS(Tensor<double>({2, 3}, std::vector<double>(5)), DimensionError);
  CHECK_THROWS_AS(Tensor<double>({2, 0}), DimensionError);
  Tensor<double> t({2, 3}, 1.5);
  CHECK(t.size() == 6);
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK_THROWS_AS(t.item(), UsageError);
}

TEST_CASE("matmul: identity and zero") {
  const auto a = Tensor<double>::matrix({{1, 2}, {3, 4}});
  CHECK(eval_matmul(a, Tensor<double>::matrix({{1, 0}, {0, 1}})) == a);
  CHECK(eval_matmul(a, Tensor<double>::matrix({{0, 0}, {0, 0}})) ==
        Tensor<double>::matrix({{0, 0}, {0, 0}}));
}

TEST_CASE("matmul: agrees with a triple loop") {
  Rng rng(11);
  const auto a = random_tensor({5, 7}, rng);
  const auto b = random_tensor({7, 3}, rng);
  const auto got = eval_matmul(a, b);
  const auto want = triple_loop(a, b);
  for (std::size_t i = 0; i < got.size(); ++i) CHECK(std::abs(got[i] - want[i]) < 1e-12);
}

TEST_CASE("matmul: inner dimension mismatch names both shapes") {
  Tape<double> tape;
  auto a = tape.constant(Tensor<double>({2, 3}));
  auto b = tape.constant(Tensor<double>({4, 2}));
  try {
    matmul(a, b);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string what = e.what();
    CHECK(what.find("[2x3]") != std::string::npos);
    CHECK(what.find("[4x2]") != std::string::npos);
  }
}

TEST_CASE("layer_norm: constant row gives zeros") {
  Tape<double> tape;
  auto x = tape.constant(Tensor<double>({1, 4}, 3.25));
  auto y = layer_norm(x, tape.constant(Tensor<double>({4}, 1.0)),
                      tape.constant(Tensor<double>({4}, 0.0)), 1e-5);
  for (double v : y.value().span()) CHECK(v == 0.0);
}

TEST_CASE("layer_norm: zero-mean unit-variance input is unchanged as eps shrinks") {
  Tape<double> tape;
  auto y = layer_norm(tape.constant(Tensor<double>::vector({1, -1})),
                      tape.constant(Tensor<double>({2}, 1.0)),
                      tape.constant(Tensor<double>({2}, 0.0)), 1e-15);
  CHECK(y.value()[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(y.value()[1] == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("layer_norm: matches the direct mean/variance formula") {
  Rng rng(5);
  const auto x = random_tensor({6, 9}, rng, -3.0, 3.0);
  const auto g = random_tensor({9}, rng);
  const auto b = random_tensor({9}, rng);
  const double eps = 1e-5;
  Tape<double> tape;
  const auto y =
      layer_norm(tape.constant(x), tape.constant(g), tape.constant(b), eps).value();
  for (std::size_t r = 0; r < 6; ++r) {
    double mean = 0.0;
    for (std::size_t c = 0; c < 9; ++c) mean += x(r, c) / 9.0;
    double var = 0.0;
    for (std::size_t c = 0; c < 9; ++c) var += (x(r, c) - mean) * (x(r, c) - mean) / 9.0;
    for (std::size_t c = 0; c < 9; ++c) {
      const double want = (x(r, c) - mean) / std::sqrt(var + eps) * g[c] + b[c];
      CHECK(std::abs(y(r, c) - want) < 1e-10);
    }
  }
}

TEST_CASE("relu: forward and gate") {
  Tape<double> tape;
  CHECK(relu(tape.constant(Tensor<double>::vector({-1, 0, 2}))).value() ==
        Tensor<double>::vector({0, 0, 2}));
  CHECK(relu(tape.constant(Tensor<double>::vector({-3, -0.5}))).value() ==
        Tensor<double>::vector({0, 0}));

  const auto w = Tensor<double>::vector({-1, 2});
  Tape<double> t2;
  auto x = t2.parameter(w);
  auto loss = sum(mul(relu(x), t2.constant(Tensor<double>::vector({5, 5}))));
  CHECK(t2.backward(loss)[0] == Tensor<double>::vector({0, 5}));

  const auto z = Tensor<double>::vector({0.0});
  Tape<double> t3;
  CHECK(t3.backward(sum(relu(t3.parameter(z))))[0][0] == 0.0);
}

TEST_CASE("dropout: identity in eval mode and at rate 0") {
  Rng rng(3);
  const auto x0 = random_tensor({4, 5}, rng);
  Tape<double> tape;
  auto x = tape.constant(x0);
  auto eval = dropout(x, 0.35, &rng, Mode::eval);
  CHECK(eval.value() == x0);
  CHECK(eval.index == x.index);
  CHECK(dropout(x, 0.0, &rng, Mode::train).value() == x0);
  CHECK_THROWS_AS(dropout(x, 1.0, &rng, Mode::train), ParameterError);
  CHECK_THROWS_AS(dropout(x, -0.1, &rng, Mode::train), ParameterError);
  CHECK_THROWS_AS(dropout(x, 0.5, nullptr, Mode::train), UsageError);
}

TEST_CASE("dropout: survivor fraction and mean at rate 0.35") {
  Rng rng(20240601);
  const std::size_t n = 1'000'000;
  Tape<double> tape;
  auto y = dropout(tape.constant(Tensor<double>({n}, 1.0)), 0.35, &rng, Mode::train);
  std::size_t survivors = 0;
  double total = 0.0;
  bool scaled = true;
  for (double v : y.value().span()) {
    if (v != 0.0) {
      ++survivors;
      scaled = scaled && v == 1.0 / (1.0 - 0.35);
    }
    total += v;
  }
  CHECK(scaled);
  CHECK(std::abs(static_cast<double>(survivors) / n - 0.65) < 0.005);
  CHECK(std::abs(total / n - 1.0) < 0.01);
}

TEST_CASE("dropout: backward applies the recorded mask") {
  Rng rng(9);
  const auto x0 = random_tensor({3, 8}, rng);
  Tape<double> tape;
  auto x = tape.parameter(x0);
  auto y = dropout(x, 0.5, &rng, Mode::train);
  const Tensor<double> out = y.value();
  const auto g = tape.backward(sum(y))[0];
  for (std::size_t i = 0; i < g.size(); ++i) {
    CHECK(g[i] == (out[i] == 0.0 ? 0.0 : 2.0));
  }
}

TEST_CASE("softmax_cross_entropy: closed-form cases") {
  const auto sym = softmax_cross_entropy(Tensor<double>::vector({0, 0}), 1);
  CHECK(sym.probs[0] == doctest::Approx(0.5));
  CHECK(sym.probs[1] == doctest::Approx(0.5));
  CHECK(sym.loss == doctest::Approx(std::log(2.0)));
  CHECK(softmax_cross_entropy(Tensor<double>::vector({-20, 20}), 1).loss < 1e-8);
  const auto far = softmax_cross_entropy(Tensor<double>::vector({1000, -1000}), 1);
  CHECK(std::isfinite(far.loss));
  CHECK(far.loss == doctest::Approx(2000.0));
}

TEST_CASE("softmax_cross_entropy: batched gradient matches central differences") {
  Rng rng(17);
  for (int trial = 0; trial < 5; ++trial) {
    const auto logits = random_tensor({4, 2}, rng, -3.0, 3.0);
    std::vector<int> labels(4);
    for (auto& y : labels) y = static_cast<int>(uniform_index(rng, 2));
    Tape<double> tape;
    auto l = tape.parameter(logits);
    const auto ce = softmax_cross_entropy(l, labels);
    const auto g = tape.backward(ce.loss)[0];
    const double h = 1e-6;
    for (std::size_t i = 0; i < logits.size(); ++i) {
      auto plus = logits, minus = logits;
      plus[i] += h;
      minus[i] -= h;
      double lp = 0.0, lm = 0.0;
      for (std::size_t r = 0; r < 4; ++r) {
        lp += softmax_cross_entropy(Tensor<double>({2}, {plus(r, 0), plus(r, 1)}), labels[r])
                  .loss /
              4.0;
        lm += softmax_cross_entropy(Tensor<double>({2}, {minus(r, 0), minus(r, 1)}),
                                    labels[r])
                  .loss /
              4.0;
      }
      CHECK(std::abs(g[i] - (lp - lm) / (2.0 * h)) < 1e-6);
    }
  }
}

TEST_CASE("backward: simple closed forms") {
  const auto w = Tensor<double>::vector({0.5, -2.0, 3.0});
  {
    Tape<double> tape;
    CHECK(tape.backward(sum(tape.parameter(w)))[0] == Tensor<double>({3}, 1.0));
  }
  {
    Tape<double> tape;
    auto p = tape.parameter(w);
    const auto g = tape.backward(scale(sum(mul(p, p)), 0.5))[0];
    for (std::size_t i = 0; i < 3; ++i) CHECK(g[i] == doctest::Approx(w[i]));
  }
}

TEST_CASE("backward: fan-out accumulates additively") {
  const auto w = Tensor<double>::matrix({{1.0, 2.0}});
  Tape<double> tape;
  auto p = tape.parameter(w);
  // p feeds both concat inputs and both mul operands: dL/dp = 1 + 1 + 2p.
  auto total = sum(concat_cols(concat_cols(p, p), mul(p, p)));
  const auto g = tape.backward(total)[0];
  CHECK(g == Tensor<double>::matrix({{4.0, 6.0}}));
}

TEST_CASE("backward: usage errors") {
  const auto w = Tensor<double>::vector({1.0, 2.0});
  Tape<double> tape;
  auto p = tape.parameter(w);
  CHECK_THROWS_AS(tape.backward(p), UsageError);  // not scalar
  Tape<double> other;
  auto foreign = sum(other.parameter(w));
  CHECK_THROWS_AS(tape.backward(foreign), UsageError);
  auto loss = sum(p);
  tape.backward(loss);
  CHECK(tape.consumed());
  CHECK_THROWS_AS(tape.backward(loss), UsageError);
  CHECK_THROWS_AS(tape.constant(w), UsageError);
}

TEST_CASE("backward: gradients come back in registration order") {
  const auto a = Tensor<double>::matrix({{1.0}});
  const auto b = Tensor<double>::matrix({{1.0, 1.0}});
  Tape<double> tape;
  auto pa = tape.parameter(a);
  auto pb = tape.parameter(b);
  // b is consumed first; the result still follows registration order.
  const auto g = tape.backward(sum(concat_cols(scale(pb, 3.0), scale(pa, 7.0))));
  REQUIRE(g.size() == 2);
  CHECK(g[0] == Tensor<double>::matrix({{7.0}}));
  CHECK(g[1] == Tensor<double>::matrix({{3.0, 3.0}}));
}

TEST_CASE("backward: unused parameter gets a zero gradient") {
  const auto a = Tensor<double>::matrix({{1, 2}});
  const auto b = Tensor<double>::vector({4.0});
  Tape<double> tape;
  auto pa = tape.parameter(a);
  tape.parameter(b);
  const auto g = tape.backward(sum(pa));
  CHECK(g[1] == Tensor<double>::vector({0.0}));
}

TEST_CASE("record: non-finite output is a numeric error") {
  Tape<double> tape;
  auto x = tape.constant(Tensor<double>::vector({1e308, 1e308}));
  CHECK_THROWS_AS(sum(x), NumericError);
}

TEST_CASE("primitive ops: backprop agrees with central differences") {
  Rng rng(101);
  SUBCASE("matmul") {
    CHECK(op_gradient_error({random_tensor({3, 4}, rng), random_tensor({4, 2}, rng)},
                            [](Tape<double>&, const std::vector<Var<double>>& v) {
                              return matmul(v[0], v[1]);
                            }) < 1e-4);
  }
  SUBCASE("add_bias") {
    CHECK(op_gradient_error({random_tensor({3, 4}, rng), random_tensor({4}, rng)},
                            [](Tape<double>&, const std::vector<Var<double>>& v) {
                              return add_bias(v[0], v[1]);
                            }) < 1e-4);
  }
  SUBCASE("layer_norm") {
    CHECK(op_gradient_error({random_tensor({3, 5}, rng, -2, 2), random_tensor({5}, rng),
                             random_tensor({5}, rng)},
                            [](Tape<double>&, const std::vector<Var<double>>& v) {
                              return layer_norm(v[0], v[1], v[2], 1e-5);
                            }) < 1e-4);
  }
  SUBCASE("relu away from the kink") {
    auto x = random_tensor({4, 4}, rng);
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (std::abs(x[i]) < 0.05) x[i] = 0.5;
    }
    CHECK(op_gradient_error({x}, [](Tape<double>&, const std::vector<Var<double>>& v) {
            return relu(v[0]);
          }) < 1e-4);
  }
  SUBCASE("dropout with a fixed mask") {
    CHECK(op_gradient_error({random_tensor({4, 6}, rng)},
                            [](Tape<double>&, const std::vector<Var<double>>& v) {
                              Rng local(77);  // same mask on every evaluation
                              return dropout(v[0], 0.35, &local, Mode::train);
                            }) < 1e-4);
  }
  SUBCASE("concat_cols") {
    CHECK(op_gradient_error({random_tensor({3, 2}, rng), random_tensor({3, 4}, rng)},
                            [](Tape<double>&, const std::vector<Var<double>>& v) {
                              return concat_cols(v[0], v[1]);
                            }) < 1e-4);
  }
  SUBCASE("gather_pairs with repeated rows") {
    CHECK(op_gradient_error({random_tensor({4, 3}, rng)},
                            [](Tape<double>&, const std::vector<Var<double>>& v) {
                              return gather_pairs(v[0], {{0, 1}, {0, 2}, {1, 2}, {3, 0}});
                            }) < 1e-4);
  }
  SUBCASE("segment_mean") {
    CHECK(op_gradient_error({random_tensor({6, 3}, rng)},
                            [](Tape<double>&, const std::vector<Var<double>>& v) {
                              return segment_mean(v[0], {0, 1, 4, 6});
                            }) < 1e-4);
  }
  SUBCASE("softmax_cross_entropy") {
    CHECK(op_gradient_error({random_tensor({5, 2}, rng, -2, 2)},
                            [](Tape<double>&, const std::vector<Var<double>>& v) {
                              return softmax_cross_entropy(v[0], {0, 1, 1, 0, 1}).loss;
                            }) < 1e-4);
  }
  SUBCASE("mul and scale") {
    CHECK(op_gradient_error({random_tensor({2, 3}, rng), random_tensor({2, 3}, rng)},
                            [](Tape<double>&, const std::vector<Var<double>>& v) {
                              return scale(mul(v[0], v[1]), -1.5);
                            }) < 1e-4);
  }
}

TEST_CASE("gather_pairs and segment_mean: forward values") {
  Tape<double> tape;
  auto e = tape.constant(Tensor<double>::matrix({{1, 2}, {3, 4}, {5, 6}}));
  const auto p = gather_pairs(e, {{0, 2}, {1, 0}}).value();
  CHECK(p == Tensor<double>::matrix({{1, 2, 5, 6}, {3, 4, 1, 2}}));
  const auto m = segment_mean(e, {0, 1, 3}).value();
  CHECK(m == Tensor<double>::matrix({{1, 2}, {4, 5}}));
  CHECK_THROWS_AS(segment_mean(e, {0, 0, 3}), DimensionError);
  CHECK_THROWS_AS(segment_mean(e, {0, 2}), DimensionError);
  CHECK_THROWS_AS(gather_pairs(e, {{0, 3}}), DimensionError);
}

TEST_CASE("tape: gradients do not depend on the order inputs were allocated") {
  Rng rng(8);
  const auto a = random_tensor({3, 4}, rng);
  const auto b = random_tensor({4, 2}, rng);
  std::vector<Tensor<double>> first, second;
  {
    Tape<double> tape;
    auto pa = tape.parameter(a);
    auto pb = tape.parameter(b);
    first = tape.backward(sum(relu(matmul(pa, pb))));
  }
  {
    Tape<double> tape;
    tape.constant(random_tensor({7, 7}, rng));  // shift every index
    auto pb = tape.parameter(b);
    auto pa = tape.parameter(a);
    const auto g = tape.backward(sum(relu(matmul(pa, pb))));
    second = {g[1], g[0]};
  }
  CHECK(first == second);
}

TEST_CASE("forward ops are deterministic") {
  Rng rng(4);
  const auto x = random_tensor({5, 6}, rng);
  const auto g = random_tensor({6}, rng);
  auto run = [&] {
    Tape<double> tape;
    return relu(layer_norm(tape.constant(x), tape.constant(g), tape.constant(g), 1e-5))
        .value();
  };
  CHECK(run() == run());
}
