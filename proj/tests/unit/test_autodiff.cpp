#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "farcon/autodiff.hpp"
#include "farcon/errors.hpp"
#include "farcon/gradcheck.hpp"
#include "helpers.hpp"

using namespace farcon;
using farcon::test::random_tensor;

namespace {

using Unary = std::function<ad::Var(ad::Var)>;

// Scalarizes a primitive's output by a fixed random projection so every
// output element contributes to the checked gradient.
double check_unary(const Unary& f, Tensor input, std::uint64_t seed) {
  Rng rng(seed);
  Tensor proj;
  ParamList params{{"x", &input}};
  auto loss = [&](ad::Graph& g, std::span<const ad::Var> v) {
    ad::Var y = f(v[0]);
    if (proj.empty()) {
      Rng prng(seed + 1);
      proj = random_tensor(y.rows(), y.cols(), prng);
    }
    return ad::sum_all(ad::mul(y, g.constant(proj)));
  };
  return finite_diff_check(params, loss, 1e-5, 1e-4).max_rel_err;
}

Tensor away_from_zero(std::size_t r, std::size_t c, Rng& rng) {
  Tensor t = random_tensor(r, c, rng);
  for (double& v : t.data()) v += v >= 0 ? 0.1 : -0.1;  // keep kinks out of the difference stencil
  return t;
}

Tensor positive(std::size_t r, std::size_t c, Rng& rng) {
  Tensor t = random_tensor(r, c, rng);
  for (double& v : t.data()) v = 0.5 + std::abs(v);
  return t;
}

}  // namespace

TEST(Autodiff, ElementwisePrimitivesMatchFiniteDifferences) {
  Rng rng(1);
  const std::vector<std::pair<const char*, Unary>> cases = {
      {"exp", [](ad::Var a) { return ad::exp(a); }},
      {"tanh", [](ad::Var a) { return ad::tanh(a); }},
      {"sigmoid", [](ad::Var a) { return ad::sigmoid(a); }},
      {"softplus", [](ad::Var a) { return ad::softplus(a); }},
      {"square", [](ad::Var a) { return ad::square(a); }},
      {"scale", [](ad::Var a) { return ad::scale(a, -2.5); }},
      {"add_scalar", [](ad::Var a) { return ad::add_scalar(a, 3.0); }},
      {"relu", [](ad::Var a) { return ad::relu(a); }},
      {"leaky_relu", [](ad::Var a) { return ad::leaky_relu(a, 0.01); }},
      {"clamp", [](ad::Var a) { return ad::clamp(a, -0.5, 0.5); }},
      {"sum_cols", [](ad::Var a) { return ad::sum_cols(a); }},
      {"mean_all", [](ad::Var a) { return ad::mean_all(a); }},
      {"slice_cols", [](ad::Var a) { return ad::slice_cols(a, 1, 3); }},
      {"concat_cols", [](ad::Var a) { return ad::concat_cols({a, ad::square(a)}); }},
  };
  for (const auto& [name, f] : cases) EXPECT_LE(check_unary(f, away_from_zero(4, 5, rng), 7), 1e-4) << name;
  EXPECT_LE(check_unary([](ad::Var a) { return ad::log(a); }, positive(4, 5, rng), 7), 1e-4) << "log";
  EXPECT_LE(check_unary([](ad::Var a) { return ad::reciprocal(a); }, positive(4, 5, rng), 7), 1e-4) << "reciprocal";
}

TEST(Autodiff, BinaryPrimitivesMatchFiniteDifferences) {
  Rng rng(2);
  Tensor a = random_tensor(3, 4, rng), b = random_tensor(3, 4, rng);
  Tensor w = random_tensor(5, 4, rng), bias = random_tensor(1, 5, rng), m = random_tensor(4, 2, rng);
  ParamList params{{"a", &a}, {"b", &b}, {"w", &w}, {"bias", &bias}, {"m", &m}};
  auto loss = [](ad::Graph&, std::span<const ad::Var> v) {
    ad::Var t = ad::add(v[0], v[1]) * ad::sub(v[0], v[1]);
    ad::Var h = ad::affine(t, v[2], v[3]);
    ad::Var p = ad::matmul(v[0], v[4]);
    return ad::sum_all(ad::tanh(h)) + ad::sum_all(ad::square(p));
  };
  const GradCheckReport r = finite_diff_check(params, loss, 1e-5, 1e-4);
  EXPECT_TRUE(r.pass) << r.max_rel_err;
  EXPECT_EQ(r.entries.size(), 5u);
}

TEST(Autodiff, AffineAcceptsRankOneBias) {
  ad::Graph g;
  ad::Var x = g.constant(Tensor::from_rows({{1, 2}, {3, 4}}));
  ad::Var w = g.constant(Tensor::from_rows({{1, 0}, {0, 1}, {1, 1}}));
  ad::Var b = g.constant(Tensor::vector({10, 20, 30}));
  EXPECT_EQ(ad::affine(x, w, b).value(), Tensor::from_rows({{11, 22, 33}, {13, 24, 37}}));
}

TEST(Autodiff, GradientsAccumulateOverReuse) {
  ad::Graph g;
  ad::Var x = g.variable(Tensor::scalar(3.0));
  ad::Var y = x * x + x;  // dy/dx = 2x + 1
  g.backward(y);
  EXPECT_DOUBLE_EQ(g.grad(x).item(), 7.0);
}

TEST(Autodiff, UnusedVariableHasZeroGradient) {
  ad::Graph g;
  ad::Var x = g.variable(Tensor::scalar(1.0));
  ad::Var unused = g.variable(Tensor::full(2, 2, 1.0));
  g.backward(ad::square(x));
  EXPECT_EQ(g.grad(unused), Tensor::zeros(2, 2));
}

TEST(Autodiff, NonFiniteValueNamesPrimitiveAndScope) {
  ad::Graph g;
  ad::Var x = g.variable(Tensor::scalar(-1.0));
  auto guard = g.scope("kld_x");
  try {
    ad::log(x);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_EQ(e.primitive(), "log");
    EXPECT_EQ(e.scope(), "kld_x");
  }
}

TEST(Autodiff, ShapeMismatchThrows) {
  ad::Graph g;
  ad::Var a = g.constant(Tensor::zeros(2, 3));
  ad::Var b = g.constant(Tensor::zeros(3, 2));
  EXPECT_THROW(ad::add(a, b), DimensionError);
  EXPECT_THROW(ad::matmul(a, a), DimensionError);
}

TEST(Autodiff, BackwardNeedsScalarRoot) {
  ad::Graph g;
  ad::Var a = g.variable(Tensor::zeros(2, 2));
  EXPECT_THROW(g.backward(a), DimensionError);
}

// loss_and_grads ---------------------------------------------------------------

TEST(LossAndGrads, SumOfParametersHasUnitGradients) {
  Rng rng(4);
  Tensor w = random_tensor(3, 4, rng);
  ParamList params{{"w", &w}};
  const LossAndGrads r = loss_and_grads(params, [](ad::Graph&, std::span<const ad::Var> v) { return ad::sum_all(v[0]); });
  EXPECT_NEAR(r.loss, w.sum(), 1e-12);
  ASSERT_EQ(r.grads.size(), 1u);
  EXPECT_EQ(r.grads[0], Tensor::full(3, 4, 1.0));
}

TEST(LossAndGrads, ScalarQuadratic) {
  // 0.5 * (W x - t)^2 with W = 2, x = 1, t = 0.
  Tensor w = Tensor::scalar(2.0);
  ParamList params{{"W", &w}};
  const LossAndGrads r = loss_and_grads(params, [](ad::Graph& g, std::span<const ad::Var> v) {
    ad::Var pred = ad::matmul(v[0], g.constant(Tensor::scalar(1.0)));
    return 0.5 * ad::square(ad::sub(pred, g.constant(Tensor::scalar(0.0))));
  });
  EXPECT_DOUBLE_EQ(r.loss, 2.0);
  EXPECT_DOUBLE_EQ(r.grads[0].item(), 2.0);
}

TEST(LossAndGrads, GradientShapesMirrorParameters) {
  Rng rng(6);
  Tensor a = random_tensor(2, 5, rng), b = random_tensor(1, 3, rng);
  ParamList params{{"a", &a}, {"b", &b}};
  const LossAndGrads r = loss_and_grads(params, [](ad::Graph&, std::span<const ad::Var> v) {
    return ad::sum_all(ad::square(v[0])) + ad::sum_all(v[1]);
  });
  EXPECT_EQ(r.grads[0].shape(), a.shape());
  EXPECT_EQ(r.grads[1].shape(), b.shape());
}

// finite_diff_check ------------------------------------------------------------

TEST(FiniteDiffCheck, ConstantLossHasZeroError) {
  Tensor w = Tensor::full(2, 2, 0.3);
  ParamList params{{"w", &w}};
  const auto r = finite_diff_check(
      params, [](ad::Graph& g, std::span<const ad::Var>) { return g.constant(Tensor::scalar(4.0)); }, 1e-5, 1e-4);
  EXPECT_EQ(r.max_rel_err, 0.0);
  EXPECT_TRUE(r.pass);
}

TEST(FiniteDiffCheck, QuadraticIsExactUpToRoundoff) {
  Rng rng(8);
  Tensor w = random_tensor(3, 3, rng);
  ParamList params{{"w", &w}};
  const auto r = finite_diff_check(
      params, [](ad::Graph&, std::span<const ad::Var> v) { return ad::sum_all(ad::square(v[0])); }, 1e-5, 1e-4);
  EXPECT_LT(r.max_rel_err, 1e-6);
}

TEST(FiniteDiffCheck, ReportsWrongGradientWithoutThrowing) {
  // relu'(0) is taken as 0 while the central difference sees slope 1/2.
  Tensor w = Tensor::scalar(0.0);
  ParamList params{{"w", &w}};
  GradCheckReport r;
  EXPECT_NO_THROW(r = finite_diff_check(
                      params, [](ad::Graph&, std::span<const ad::Var> v) { return ad::sum_all(ad::relu(v[0])); }, 1e-5,
                      1e-4));
  EXPECT_FALSE(r.pass);
  EXPECT_FALSE(r.entries[0].pass);
  EXPECT_EQ(r.entries[0].name, "w");
}

TEST(FiniteDiffCheck, RestoresParameters) {
  Rng rng(9);
  Tensor w = random_tensor(2, 3, rng);
  const Tensor before = w;
  ParamList params{{"w", &w}};
  finite_diff_check(params, [](ad::Graph&, std::span<const ad::Var> v) { return ad::sum_all(ad::exp(v[0])); }, 1e-5,
                    1e-4);
  EXPECT_EQ(w, before);
}
