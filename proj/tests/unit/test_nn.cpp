#include <doctest.h>

#include <cmath>
#include <random>

#include "gmct/nn.hpp"

using namespace gmct;
using namespace gmct::nn;

namespace {

// 0.5 * ||W x + b - t||^2 summed over columns.
double half_sq(const Matrix& out, const Matrix& target) { return 0.5 * (out - target).squaredNorm(); }

}  // namespace

TEST_SUITE("nn") {

TEST_CASE("layout packs layers contiguously") {
  ParameterLayout layout;
  const DenseLayer a = layout.add(3, 4);
  const DenseLayer b = layout.add(4, 2);
  CHECK(a.offset == 0);
  CHECK(a.size() == 16);
  CHECK(b.offset == 16);
  CHECK(layout.size() == 26);

  std::mt19937_64 rng(1);
  const Vector theta = layout.initialize(rng);
  CHECK(theta.segment(12, 4).isZero());
  CHECK(theta.segment(24, 2).isZero());
  CHECK_FALSE(theta.segment(0, 12).isZero());
}

TEST_CASE("He initialisation variance") {
  ParameterLayout layout;
  const DenseLayer l = layout.add(200, 200);
  std::mt19937_64 rng(2);
  const Vector theta = layout.initialize(rng);
  const auto w = theta.segment(l.offset, 200 * 200);
  const double var = w.squaredNorm() / static_cast<double>(w.size());
  CHECK(var == doctest::Approx(2.0 / 200).epsilon(0.05));
}

TEST_CASE("dense forward is W x + b") {
  ParameterLayout layout;
  const DenseLayer l = layout.add(2, 2);
  Vector theta(6);
  theta << 1, 3, 2, 4, 0.5, -0.5;  // W = [[1,2],[3,4]] column-major, b = [0.5,-0.5]
  Matrix x(2, 1);
  x << 1, 1;
  const Matrix y = dense_forward(theta, l, x);
  CHECK(y(0, 0) == 3.5);
  CHECK(y(1, 0) == 6.5);
}

TEST_CASE("mlp gradient matches central differences") {
  for (bool relu_out : {false, true}) {
    ParameterLayout layout;
    const Mlp mlp = make_mlp(layout, {5, 8, 6, 3}, relu_out);
    std::mt19937_64 rng(3);
    Vector theta = layout.initialize(rng);
    for (Eigen::Index i = 0; i < theta.size(); ++i) theta[i] += 0.05;  // keep biases off zero
    const Matrix x = Matrix::Random(5, 7);
    const Matrix t = Matrix::Random(3, 7);

    Mlp::Cache cache;
    const Matrix out = mlp.forward(theta, x, &cache);
    Vector grad = Vector::Zero(theta.size());
    const Matrix dx = mlp.backward(theta, cache, out - t, grad);

    const double h = 1e-6;
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
      Vector p = theta, m = theta;
      p[i] += h;
      m[i] -= h;
      const double numeric = (half_sq(mlp.forward(p, x), t) - half_sq(mlp.forward(m, x), t)) / (2 * h);
      CHECK(std::abs(numeric - grad[i]) <= 1e-4 * std::max({std::abs(numeric), std::abs(grad[i]), 1e-6}));
    }
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      Matrix xp = x, xm = x;
      xp.data()[i] += h;
      xm.data()[i] -= h;
      const double numeric = (half_sq(mlp.forward(theta, xp), t) - half_sq(mlp.forward(theta, xm), t)) / (2 * h);
      CHECK(std::abs(numeric - dx.data()[i]) <= 1e-4 * std::max({std::abs(numeric), std::abs(dx.data()[i]), 1e-6}));
    }
  }
}

TEST_CASE("adam first step moves each coordinate by the learning rate") {
  Adam adam(3, {});
  Vector theta = Vector::Zero(3);
  Vector g(3);
  g << 2.0, -0.5, 0.0;
  adam.step(theta, g);
  CHECK(adam.steps() == 1);
  CHECK(theta[0] == doctest::Approx(-1e-3).epsilon(1e-6));
  CHECK(theta[1] == doctest::Approx(1e-3).epsilon(1e-6));
  CHECK(theta[2] == 0.0);
  CHECK(adam.first_moment()[0] == doctest::Approx(0.2));
  CHECK(adam.second_moment()[0] == doctest::Approx(0.004));
}

TEST_CASE("adam minimises a quadratic") {
  AdamConfig cfg;
  cfg.learning_rate = 0.05;
  Adam adam(2, cfg);
  Vector theta(2);
  theta << 3, -2;
  for (int i = 0; i < 2000; ++i) {
    Vector g = 2 * (theta - Vector::Constant(2, 0.5));
    adam.step(theta, g);
  }
  CHECK(theta[0] == doctest::Approx(0.5).epsilon(1e-3));
  CHECK(theta[1] == doctest::Approx(0.5).epsilon(1e-3));
}

}  // TEST_SUITE
