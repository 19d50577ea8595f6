#include <doctest.h>

#include <cmath>
#include <random>

#include "peddict/neuralnet.hpp"

using namespace peddict;

namespace {

// Plain-loop forward pass of one sample.
std::vector<double> naive_forward(const MlpModel& m, std::vector<double> x) {
  for (std::size_t k = 0; k < m.layers.size(); ++k) {
    const auto& l = m.layers[k];
    std::vector<double> y(static_cast<std::size_t>(l.weight.cols()));
    for (Eigen::Index c = 0; c < l.weight.cols(); ++c) {
      double s = l.bias(c);
      for (Eigen::Index r = 0; r < l.weight.rows(); ++r) s += x[r] * l.weight(r, c);
      if (k + 1 < m.layers.size()) s = std::max(0.0, s);
      y[c] = s;
    }
    if (l.residual)
      for (std::size_t i = 0; i < y.size(); ++i) y[i] += x[i];
    x = std::move(y);
  }
  return x;
}

MlpModel random_model(std::mt19937_64& rng, std::vector<int> dims) {
  auto m = mlp_init(dims, rng());
  std::normal_distribution<double> g(0, 0.1);
  for (auto& l : m.layers)
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias(i) = g(rng);
  return m;
}

}  // namespace

TEST_CASE("architecture") {
  const auto m = mlp_init({5, 7, 7, 2}, 1);
  REQUIRE(m.layers.size() == 4);
  CHECK(m.layers[0].weight.rows() == 5);
  CHECK(m.layers[0].weight.cols() == 7);
  CHECK(m.layers[3].weight.cols() == 2);
  CHECK_FALSE(m.layers[0].residual);
  CHECK(m.layers[1].residual);
  CHECK(m.layers[2].residual);
  CHECK_FALSE(m.layers[3].residual);
  CHECK(m.parameter_count() == 5 * 7 + 7 + 2 * (7 * 7 + 7) + 7 * 2 + 2);
  CHECK(m.layers[0].bias.isZero());
  const double limit = std::sqrt(6.0 / (5 + 7));
  CHECK(m.layers[0].weight.cwiseAbs().maxCoeff() <= limit);
  CHECK(mlp_init({5, 7, 7, 2}, 1) == m);
  CHECK_FALSE(mlp_init({5, 7, 7, 2}, 2) == m);
  CHECK_THROWS_AS(mlp_init({5, 7, 6, 2}, 1), ConfigError);
  CHECK_THROWS_AS(mlp_init({5, 7, 2}, 1), ConfigError);
}

TEST_CASE("zero model outputs zeros") {
  const auto m = mlp_zeros({3, 4, 4, 2});
  const std::vector<double> x{1, 2, 3};
  CHECK(forward(m, x) == std::vector<double>{0, 0});
}

TEST_CASE("forward matches a plain-loop evaluation") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g(0, 1);
  const auto m = random_model(rng, {6, 9, 9, 3});
  Eigen::MatrixXd X(5, 6);
  for (Eigen::Index i = 0; i < X.size(); ++i) X(i) = g(rng);
  const auto Y = forward(m, X);
  for (Eigen::Index r = 0; r < 5; ++r) {
    std::vector<double> x(6);
    for (int c = 0; c < 6; ++c) x[c] = X(r, c);
    const auto want = naive_forward(m, x);
    const auto single = forward(m, x);
    for (int c = 0; c < 3; ++c) {
      CHECK(Y(r, c) == doctest::Approx(want[c]).epsilon(1e-12));
      CHECK(single[c] == doctest::Approx(want[c]).epsilon(1e-12));
    }
  }
  CHECK_THROWS_AS(forward(m, std::vector<double>(5)), DataError);
}

TEST_CASE("backprop agrees with central differences") {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g(0, 1);
  int checked = 0;
  while (checked < 10) {
    const int din = 2 + checked % 5, h = 3 + checked % 7, dout = 1 + checked % 3;
    const auto m = random_model(rng, {din, h, h, dout});
    std::vector<double> x(din), t(dout);
    for (auto& v : x) v = g(rng);
    for (auto& v : t) v = g(rng);
    const auto res = grad_check(m, x, t);
    if (res.min_abs_preactivation < 1e-4) continue;
    CHECK(res.max_relative_error < 1e-4);
    ++checked;
  }
}

TEST_CASE("mse definition") {
  Eigen::MatrixXd a(2, 2), b(2, 2);
  a << 1, 2, 3, 4;
  b << 1, 0, 3, 2;
  CHECK(mse(a, b) == doctest::Approx(2.0));
  CHECK_THROWS_AS(mse(a, Eigen::MatrixXd(1, 2)), DataError);
}

TEST_CASE("training fits a linear map and is deterministic") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0, 1);
  Eigen::MatrixXd X(200, 3), Y(200, 2);
  for (Eigen::Index i = 0; i < 200; ++i) {
    for (int c = 0; c < 3; ++c) X(i, c) = g(rng);
    Y(i, 0) = X(i, 0) - 0.5 * X(i, 2);
    Y(i, 1) = 0.3 * X(i, 1) + 0.1;
  }
  TrainConfig cfg;
  cfg.epochs = 200;
  cfg.batch_size = 32;
  cfg.learning_rate = 3e-3;
  cfg.seed = 9;
  auto a = mlp_init({3, 16, 16, 2}, 4);
  auto b = a;
  int calls = 0;
  const auto ra = train(a, X, Y, cfg, [&](int epoch, const MlpModel&, double) { CHECK(epoch == calls++); });
  const auto rb = train(b, X, Y, cfg);
  CHECK(calls == 200);
  CHECK(a == b);
  CHECK(ra.epoch_loss == rb.epoch_loss);
  CHECK(ra.epoch_loss.back() < 0.01 * ra.epoch_loss.front());
}

TEST_CASE("sgd lowers the loss too") {
  Eigen::MatrixXd X(4, 1), Y(4, 1);
  X << 0, 1, 2, 3;
  Y << 1, 3, 5, 7;
  TrainConfig cfg;
  cfg.optimizer = Optimizer::sgd;
  cfg.learning_rate = 1e-2;
  cfg.epochs = 100;
  auto m = mlp_init({1, 8, 8, 1}, 5);
  const auto r = train(m, X, Y, cfg);
  CHECK(r.epoch_loss.back() < r.epoch_loss.front());
}

TEST_CASE("training reports non-finite losses") {
  Eigen::MatrixXd X(2, 1), Y(2, 1);
  X << 1, 2;
  Y << 1, std::numeric_limits<double>::infinity();
  auto m = mlp_init({1, 4, 4, 1}, 1);
  TrainConfig cfg;
  cfg.epochs = 1;
  CHECK_THROWS_WITH_AS(train(m, X, Y, cfg), doctest::Contains("epoch 0"), DataError);
  CHECK_THROWS_AS(train(m, X, Eigen::MatrixXd(3, 1), cfg), DataError);
  cfg.batch_size = 0;
  CHECK_THROWS_AS(train(m, X, X, cfg), ConfigError);
}
