#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "peddict/clustering.hpp"
#include "peddict/embedding.hpp"

using namespace peddict;

namespace {

PointSet gaussian_points(std::size_t n, std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  PointSet X(n, std::vector<double>(dim));
  for (auto& row : X)
    for (auto& v : row) v = g(rng);
  return X;
}

std::vector<Point2> random_plane(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<Point2> Y(n);
  for (auto& y : Y) y = {g(rng), g(rng)};
  return Y;
}

}  // namespace

TEST_CASE("squared distances are symmetric with a zero diagonal") {
  const auto X = gaussian_points(6, 3, 1);
  const auto D = squared_distances(X);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(D[i * 6 + i] == 0.0);
    for (std::size_t j = 0; j < 6; ++j) {
      CHECK(D[i * 6 + j] == D[j * 6 + i]);
      double d = 0;
      for (int k = 0; k < 3; ++k) d += (X[i][k] - X[j][k]) * (X[i][k] - X[j][k]);
      CHECK(D[i * 6 + j] == doctest::Approx(d).epsilon(1e-12));
    }
  }
}

TEST_CASE("every row reaches the perplexity entropy") {
  const auto X = gaussian_points(60, 5, 2);
  for (double perp : {5.0, 15.0}) {
    const auto aff = compute_affinities(X, perp);
    CHECK(aff.clamped_rows == 0);
    for (std::size_t i = 0; i < X.size(); ++i) {
      const auto row = oracle::conditional_row(X, i, aff.beta[i]);
      CHECK(std::abs(oracle::entropy_bits(row) - std::log2(perp)) < 1e-5);
      CHECK(std::abs(aff.row_entropy_bits[i] - std::log2(perp)) < 1e-5);
      for (std::size_t j = 0; j < X.size(); ++j)
        CHECK(std::abs(aff.conditional[i * X.size() + j] - row[j]) < 1e-12);
    }
  }
}

TEST_CASE("joint affinities are symmetric and sum to one") {
  const auto X = gaussian_points(40, 4, 3);
  const auto aff = compute_affinities(X, 10);
  const std::size_t n = X.size();
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    CHECK(aff.p(i, i) == 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      total += aff.p(i, j);
      CHECK(std::abs(aff.p(i, j) - (aff.conditional[i * n + j] + aff.conditional[j * n + i]) / (2.0 * n)) < 1e-15);
    }
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("affinity input validation") {
  CHECK_THROWS_AS(compute_affinities(gaussian_points(2, 3, 4), 1.5), DataError);
  CHECK_THROWS_AS(compute_affinities(gaussian_points(10, 3, 4), 10), ConfigError);
  auto X = gaussian_points(10, 3, 4);
  X[3].pop_back();
  CHECK_THROWS_AS(compute_affinities(X, 3), DataError);
  X = gaussian_points(10, 3, 4);
  X[1][0] = std::nan("");
  CHECK_THROWS_AS(compute_affinities(X, 3), DataError);
}

TEST_CASE("KL matches the direct definition") {
  const auto X = gaussian_points(12, 4, 5);
  const auto P = compute_affinities(X, 4).joint;
  const auto Y = random_plane(12, 6);
  CHECK(kl_divergence(P, Y) == doctest::Approx(oracle::kl(P, Y)).epsilon(1e-12));
}

TEST_CASE("KL gradient matches central differences") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto X = gaussian_points(5, 3, 10 + seed);
    const auto P = compute_affinities(X, 2.0).joint;
    auto Y = random_plane(5, 20 + seed);
    const auto grad = kl_gradient(P, Y);
    const double h = 1e-6;
    for (std::size_t i = 0; i < Y.size(); ++i) {
      for (int c = 0; c < 2; ++c) {
        double& v = c == 0 ? Y[i].x : Y[i].y;
        const double keep = v;
        v = keep + h;
        const double up = oracle::kl(P, Y);
        v = keep - h;
        const double down = oracle::kl(P, Y);
        v = keep;
        const double numeric = (up - down) / (2 * h);
        const double analytic = c == 0 ? grad[i].x : grad[i].y;
        CHECK(std::abs(analytic - numeric) / std::max(std::abs(numeric), 1e-8) < 1e-4);
      }
    }
  }
}

TEST_CASE("exaggeration scales only the attractive part") {
  const auto P = compute_affinities(gaussian_points(8, 3, 7), 3).joint;
  const auto Y = random_plane(8, 8);
  const auto g1 = kl_gradient(P, Y, 1.0);
  const auto g4 = kl_gradient(P, Y, 4.0);
  std::vector<double> zero(P.size(), 0.0);
  const auto rep = kl_gradient(zero, Y, 1.0);
  for (std::size_t i = 0; i < Y.size(); ++i) {
    // g(e) = e * attract + repel
    CHECK(g4[i].x == doctest::Approx(4.0 * (g1[i].x - rep[i].x) + rep[i].x).epsilon(1e-10));
    CHECK(g4[i].y == doctest::Approx(4.0 * (g1[i].y - rep[i].y) + rep[i].y).epsilon(1e-10));
  }
}

TEST_CASE("t-SNE separates well-spaced blobs and is reproducible") {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g(0.0, 1.0);
  PointSet X;
  std::vector<int> truth;
  for (int b = 0; b < 3; ++b)
    for (int i = 0; i < 20; ++i) {
      std::vector<double> x(6);
      for (int d = 0; d < 6; ++d) x[d] = g(rng) + (d == b ? 10.0 : 0.0);
      X.push_back(x);
      truth.push_back(b);
    }
  TsneConfig cfg;
  cfg.perplexity = 10;
  cfg.n_iter = 400;
  cfg.seed = 3;
  const auto a = tsne(X, cfg);
  const auto b = tsne(X, cfg);
  CHECK(a.coords == b.coords);
  CHECK(a.kl_final < a.kl_after_exaggeration);
  CHECK(a.kl_trace.back().iteration == 400);
  ClusteringConfig kc;
  kc.k_per_n = {{1, 3}};
  const auto km = kmeans(a.coords, 3, kc);
  CHECK(oracle::purity(km.assignments, truth) == 1.0);
}

TEST_CASE("tsne_embed keeps ids and rejects mixed groups") {
  std::mt19937_64 rng(11);
  std::vector<FeatureVector> fv;
  std::vector<std::string> ids;
  for (int i = 0; i < 10; ++i) {
    fv.push_back(assemble_features(oracle::random_segment(rng, 1, 8), 15));
    ids.push_back("s" + std::to_string(i));
  }
  TsneConfig cfg;
  cfg.perplexity = 3;
  cfg.n_iter = 50;
  const auto table = tsne_embed(fv, ids, cfg);
  CHECK(table.n == 1);
  REQUIRE(table.rows.size() == 10);
  CHECK(table.rows[7].segment_id == "s7");
  CHECK(table.rows[7].cluster == -1);
  ids.pop_back();
  CHECK_THROWS_AS(tsne_embed(fv, ids, cfg), DataError);
  ids.push_back("x");
  fv[2] = assemble_features(oracle::random_segment(rng, 2, 8), 15);
  CHECK_THROWS_AS(tsne_embed(fv, ids, cfg), DataError);
}

TEST_CASE("t-SNE config validation") {
  TsneConfig cfg;
  cfg.perplexity = 30;
  CHECK_THROWS_AS(cfg.validate(20), ConfigError);
  cfg.perplexity = 5;
  CHECK_NOTHROW(cfg.validate(20));
  cfg.n_iter = 0;
  CHECK_THROWS_AS(cfg.validate(20), ConfigError);
}

TEST_CASE("automatic step size") {
  TsneConfig cfg;
  CHECK(cfg.step_size(60) == 50.0);
  CHECK(cfg.step_size(4800) == 100.0);
  cfg.learning_rate = 200;
  CHECK(cfg.step_size(60) == 200.0);
  cfg.learning_rate = -1;
  CHECK_THROWS_AS(cfg.validate(60), ConfigError);
}
