#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "diffopt/dense.hpp"
#include "test_util.hpp"

namespace diffopt {
namespace {

Vector flatten_layer(const DenseLayer& l) {
  Vector v(l.weight.size() + l.bias.size());
  v << l.weight.reshaped(), l.bias;
  return v;
}

DenseLayer unflatten_layer(const Vector& v, Index in, Index out) {
  DenseLayer l = DenseLayer::zeros(in, out);
  l.weight.reshaped() = v.head(in * out);
  l.bias = v.tail(out);
  return l;
}

TEST(Dense, ForwardShapesAndValues) {
  DenseLayer l = DenseLayer::zeros(3, 2);
  l.weight << 1, 2, 3, 4, 5, 6;
  l.bias << 0.5, -1;
  Matrix x(3, 2);
  x << 1, 0, 0, 1, 1, 1;
  Matrix expect(2, 2);
  expect << 4.5, 5.5, 9, 10;
  EXPECT_EQ(dense_forward(l, x), expect);
  EXPECT_THROW(dense_forward(l, Matrix::Zero(2, 1)), std::invalid_argument);
}

TEST(Dense, GlorotBoundsAndDeterminism) {
  Rng a(11), b(11);
  const DenseLayer la = DenseLayer::glorot(32, 16, a);
  const DenseLayer lb = DenseLayer::glorot(32, 16, b);
  EXPECT_EQ(la.weight, lb.weight);
  EXPECT_TRUE(la.bias.isZero());
  const double limit = std::sqrt(6.0 / 48.0);
  EXPECT_LE(la.weight.cwiseAbs().maxCoeff(), limit);
  EXPECT_GT(la.weight.cwiseAbs().maxCoeff(), 0.5 * limit);
}

TEST(Dense, BackwardMatchesFiniteDifferences) {
  Rng rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const Index in = 7, out = 5, batch = 3;
    DenseLayer l = DenseLayer::glorot(in, out, rng);
    l.bias = rng.normal_matrix(out, 1);
    const Matrix x = rng.normal_matrix(in, batch);
    const Matrix probe = rng.normal_matrix(out, batch);
    // f = sum(probe .* relu(Wx + b))
    auto f_params = [&](const Vector& p) {
      const DenseLayer q = unflatten_layer(p, in, out);
      return relu_forward(dense_forward(q, x)).cwiseProduct(probe).sum();
    };
    const Matrix pre = dense_forward(l, x);
    const DenseGrads g = dense_backward(l, x, relu_backward(pre, probe));
    Vector analytic(g.weight.size() + g.bias.size());
    analytic << g.weight.reshaped(), g.bias;
    const Vector numeric = finite_difference_gradient(f_params, flatten_layer(l), 1e-6);
    EXPECT_LE(testing::rel_error(analytic, numeric), 1e-6);

    auto f_input = [&](const Vector& xv) {
      return relu_forward(dense_forward(l, xv.reshaped(in, batch))).cwiseProduct(probe).sum();
    };
    const Vector xin = x.reshaped();
    const Vector numeric_in = finite_difference_gradient(f_input, xin, 1e-6);
    EXPECT_LE(testing::rel_error(g.input.reshaped(), numeric_in), 1e-6);
  }
}

TEST(Relu, SubgradientAtZeroIsZero) {
  Matrix x(1, 3);
  x << -1, 0, 2;
  Matrix g = Matrix::Ones(1, 3);
  Matrix expect(1, 3);
  expect << 0, 0, 1;
  EXPECT_EQ(relu_backward(x, g), expect);
  Matrix fwd(1, 3);
  fwd << 0, 0, 2;
  EXPECT_EQ(relu_forward(x), fwd);
}

TEST(TimestepEmbedding, KnownValues) {
  const Vector e = timestep_embedding(1, 32);
  ASSERT_EQ(e.size(), 32);
  EXPECT_DOUBLE_EQ(e(0), std::sin(1.0));
  EXPECT_DOUBLE_EQ(e(1), std::cos(1.0));
  EXPECT_NEAR(e(30), std::sin(1.0 / std::pow(10000.0, 30.0 / 32.0)), 1e-15);
  for (int i = 0; i < 16; ++i) EXPECT_NEAR(e(2 * i) * e(2 * i) + e(2 * i + 1) * e(2 * i + 1), 1.0, 1e-14);
}

TEST(TimestepEmbedding, DistinctAcrossSteps) {
  for (int t = 1; t < 1000; ++t) EXPECT_GT((timestep_embedding(t, 32) - timestep_embedding(t + 1, 32)).norm(), 1e-4);
  EXPECT_THROW(timestep_embedding(0, 32), std::out_of_range);
  EXPECT_THROW(timestep_embedding(1, 31), std::invalid_argument);
}

// Scalar reference written against the textbook update, kept separate from
// the vectorised implementation.
struct ReferenceAdam {
  double lr, b1, b2, eps, wd;
  std::vector<double> m, v;
  int k = 0;
  void step(std::vector<double>& p, const std::vector<double>& g) {
    ++k;
    for (std::size_t i = 0; i < p.size(); ++i) {
      p[i] = p[i] * (1.0 - lr * wd);
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      const double mhat = m[i] / (1.0 - std::pow(b1, k));
      const double vhat = v[i] / (1.0 - std::pow(b2, k));
      p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
};

TEST(Adam, MatchesScalarReferenceOverHundredSteps) {
  Rng rng(13);
  const Index n = 64;
  AdamConfig cfg;
  cfg.lr = 1e-3;
  Vector params = rng.normal_matrix(n, 1);
  AdamState state(n, cfg);
  ReferenceAdam ref{cfg.lr, cfg.beta1, cfg.beta2, cfg.epsilon, cfg.weight_decay,
                    std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
  std::vector<double> p(params.data(), params.data() + n);
  for (int step = 0; step < 100; ++step) {
    const Vector g = rng.normal_matrix(n, 1);
    adam_update(params, g, state);
    ref.step(p, std::vector<double>(g.data(), g.data() + n));
  }
  EXPECT_EQ(state.step, 100);
  double worst = 0.0;
  for (Index i = 0; i < n; ++i) worst = std::max(worst, std::abs(params(i) - p[static_cast<std::size_t>(i)]));
  EXPECT_LE(worst, 1e-10);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  AdamConfig cfg;
  cfg.weight_decay = 0.0;
  Vector p = Vector::Zero(3);
  AdamState s(3, cfg);
  Vector g(3);
  g << 2.0, -0.5, 0.0;
  adam_update(p, g, s);
  EXPECT_NEAR(p(0), -cfg.lr, 1e-11);
  EXPECT_NEAR(p(1), cfg.lr, 1e-11);
  EXPECT_EQ(p(2), 0.0);
}

TEST(Adam, NonFiniteGradientLeavesStateUntouched) {
  Vector p = Vector::Ones(4);
  AdamState s(4, AdamConfig{});
  adam_update(p, Vector::Ones(4), s);
  const Vector p_before = p;
  const AdamState s_before = s;
  Vector bad = Vector::Ones(4);
  bad(2) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(adam_update(p, bad, s), NumericalError);
  bad(2) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(adam_update(p, bad, s), NumericalError);
  EXPECT_EQ(p, p_before);
  EXPECT_EQ(s.m, s_before.m);
  EXPECT_EQ(s.v, s_before.v);
  EXPECT_EQ(s.step, s_before.step);
}

TEST(FiniteDifference, Quadratic) {
  Vector x(3);
  x << 1, -2, 3;
  const Vector g = finite_difference_gradient([](const Vector& v) { return v.squaredNorm(); }, x, 1e-5);
  EXPECT_LE((g - 2.0 * x).cwiseAbs().maxCoeff(), 1e-8);
}

}  // namespace
}  // namespace diffopt
