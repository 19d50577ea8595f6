#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "peddict/ptnet.hpp"

using namespace peddict;

namespace {

// Walkers heading left or right; the teacher puts them at (-1, 0) or (1, 0).
struct Toy {
  std::vector<FeatureVector> features;
  EmbeddingTable teacher;
  std::vector<Point2> centroids{{-1, 0}, {1, 0}};
};

Toy make_toy(int count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0, 0.01);
  Toy toy;
  toy.teacher.n = 1;
  for (int i = 0; i < count; ++i) {
    const int dir = i % 2;
    Segment s;
    s.n = 1;
    s.T = 8;
    s.ped_ids = {0};
    for (int t = 0; t < 8; ++t) s.positions.push_back({(dir ? 0.02 : -0.02) * t + noise(rng), noise(rng)});
    toy.features.push_back(assemble_features(s, 15));
    toy.teacher.rows.push_back({"seg" + std::to_string(i), {dir ? 1.0 + noise(rng) : -1.0 + noise(rng), noise(rng)}, dir});
  }
  return toy;
}

TrainConfig quick(int epochs) {
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.batch_size = 16;
  cfg.seed = 1;
  return cfg;
}

}  // namespace

TEST_CASE("cluster agreement counts nearest-centroid hits") {
  const std::vector<Point2> c{{0, 0}, {10, 0}};
  CHECK(cluster_agreement({{1, 0}, {9, 0}, {2, 0}, {8, 0}}, c, {0, 1, 1, 1}) == 0.75);
  CHECK(cluster_agreement({}, c, {}) == 0.0);
  CHECK_THROWS_AS(cluster_agreement({{0, 0}}, c, {}), DataError);
}

TEST_CASE("imitator learns a two-cluster teacher") {
  const auto toy = make_toy(80, 2);
  const auto res = train_imitator(toy.features, toy.teacher, 8, 16, quick(100), &toy.centroids);
  CHECK(res.epoch_loss.size() == 100);
  CHECK(res.epoch_agreement.size() == 100);
  CHECK(res.epoch_agreement.back() == 1.0);
  CHECK(res.epoch_loss.back() < res.epoch_loss.front());
  CHECK(res.imitator.n == 1);
  CHECK(res.imitator.scale.x == doctest::Approx(1.0).epsilon(0.05));

  PtNet net;
  net.models[1] = res.imitator;
  const auto coords = embed_batch(net, toy.features, 1);
  for (std::size_t i = 0; i < coords.size(); ++i) {
    const auto single = embed(net, toy.features[i], 1);
    CHECK(single.x == doctest::Approx(coords[i].x).epsilon(1e-12));
    CHECK(nearest_centroid(coords[i], toy.centroids) == toy.teacher.rows[i].cluster);
  }
}

TEST_CASE("imitator training is deterministic") {
  const auto toy = make_toy(30, 3);
  const auto a = train_imitator(toy.features, toy.teacher, 8, 8, quick(5));
  const auto b = train_imitator(toy.features, toy.teacher, 8, 8, quick(5));
  CHECK(a.imitator == b.imitator);
  CHECK(a.epoch_agreement.empty());
}

TEST_CASE("behavior prediction goes through the dictionary") {
  const auto toy = make_toy(40, 4);
  PtNet net;
  net.models[1] = train_imitator(toy.features, toy.teacher, 8, 16, quick(60)).imitator;
  BehaviorDictionary dict;
  dict.groups[1] = {{0, {-1, 0}, "left", 20}, {1, {1, 0}, "right", 20}};
  Segment right;
  right.n = 1;
  right.T = 8;
  right.ped_ids = {7};
  for (int t = 0; t < 8; ++t) right.positions.push_back({0.02 * t, 0});
  const auto p = predict_behavior(net, dict, right, 15);
  CHECK(p.n == 1);
  CHECK(p.cluster_id == 1);
}

TEST_CASE("shape errors") {
  const auto toy = make_toy(10, 5);
  auto teacher = toy.teacher;
  teacher.rows.pop_back();
  CHECK_THROWS_AS(train_imitator(toy.features, teacher, 8, 4, quick(1)), DataError);
  CHECK_THROWS_AS(train_imitator(toy.features, toy.teacher, 6, 4, quick(1)), DataError);
  PtNet net;
  CHECK_THROWS_AS(net.at(1), DataError);
  net.models[1] = train_imitator(toy.features, toy.teacher, 8, 4, quick(1)).imitator;
  FeatureVector shorter{1, std::vector<double>(10)};
  CHECK_THROWS_AS(embed(net, shorter, 1), DataError);
}
