#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "oracles.hpp"
#include "peddict/trajectory_prep.hpp"

using namespace peddict;

namespace {

TrajectoryTable table_of(const std::vector<Record>& recs) {
  TrajectoryTable t;
  t.scene_id = "s";
  t.records = recs;
  sort_and_check(t);
  return t;
}

Segment two_walkers() {
  Segment s;
  s.scene_id = "s";
  s.n = 2;
  s.T = 3;
  s.ped_ids = {1, 2};
  s.positions = {{0, 0}, {1, 0}, {2, 0}, {0, 1}, {1, 1}, {2, 1}};
  return s;
}

}  // namespace

TEST_CASE("normalize_scene maps the bbox onto [-1, 1]") {
  const auto t = table_of({{0, 1, 0, 0}, {1, 1, 10, 5}, {2, 1, 5, 2.5}});
  const auto [out, norm] = normalize_scene(t);
  CHECK(norm.center == Point2{5, 2.5});
  CHECK(norm.half_extent == 5.0);
  CHECK(out.records[1].x == 1.0);
  CHECK(out.records[1].y == 0.5);
  CHECK(out.records[2].x == 0.0);
  CHECK(out.records[2].y == 0.0);
  for (const auto& r : out.records) {
    CHECK(std::abs(r.x) <= 1.0);
    CHECK(std::abs(r.y) <= 1.0);
  }
}

TEST_CASE("denormalize inverts normalize") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-50, 50);
  const NormParams norm{{3.5, -2.0}, 7.25};
  for (int i = 0; i < 100; ++i) {
    const Point2 p{u(rng), u(rng)};
    const Point2 q = norm.denormalize(norm.normalize(p));
    CHECK(std::abs(q.x - p.x) < 1e-12);
    CHECK(std::abs(q.y - p.y) < 1e-12);
  }
}

TEST_CASE("degenerate bbox keeps unit scale") {
  const auto [out, norm] = normalize_scene(table_of({{0, 1, 3, 3}, {1, 1, 3, 3}}));
  CHECK(norm.half_extent == 1.0);
  CHECK(out.records[0].x == 0.0);
  CHECK_THROWS_AS(normalize_scene(TrajectoryTable{}), DataError);
}

TEST_CASE("one pedestrian over 10 frames gives 3 windows") {
  std::vector<Record> recs;
  for (int f = 0; f < 10; ++f) recs.push_back({f, 4, f * 0.1, 0});
  const auto segs = extract_segments(table_of(recs), {}, 1);
  REQUIRE(segs.size() == 3);
  CHECK(segs[0].start_frame == 0);
  CHECK(segs[1].start_frame == 1);
  CHECK(segs[2].start_frame == 2);
  CHECK(segs[2].positions.front().x == doctest::Approx(0.2));
}

TEST_CASE("window count is floor((F - T) / dT) + 1") {
  for (int F : {8, 9, 15, 23}) {
    for (int dT : {1, 2, 3}) {
      std::vector<Record> recs;
      for (int f = 0; f < F; ++f) recs.push_back({f, 0, 0, 0});
      SegmentationConfig cfg;
      cfg.delta_T = dT;
      CHECK(extract_segments(table_of(recs), cfg, 1).size() == static_cast<std::size_t>((F - 8) / dT + 1));
    }
  }
}

TEST_CASE("too-short track gives no segment") {
  std::vector<Record> recs;
  for (int f = 0; f <= 6; ++f) recs.push_back({f, 0, 0, 0});
  CHECK(extract_segments(table_of(recs), {}, 1).empty());
}

TEST_CASE("two co-present pedestrians over 8 frames give one pair segment") {
  std::vector<Record> recs;
  for (int f = 0; f < 8; ++f) {
    recs.push_back({f, 0, 0, 0});
    recs.push_back({f, 1, 1, 0});
  }
  const auto segs = extract_segments(table_of(recs), {}, 2);
  REQUIRE(segs.size() == 1);
  CHECK(segs[0].ped_ids == std::vector<std::int64_t>{0, 1});
  CHECK(segs[0].positions.size() == 16);
}

TEST_CASE("subgroup forms nearest-neighbour groups") {
  std::vector<PedPosition> line;
  for (int i : {0, 1, 2, 10, 11}) line.push_back({i == 10 ? 3 : i == 11 ? 4 : i, {double(i), 0}});
  const auto groups = subgroup(line, 3);
  REQUIRE(groups.size() == 2);
  CHECK(groups[0] == std::vector<std::int64_t>{0, 1, 2});
  CHECK(groups[1] == std::vector<std::int64_t>{2, 3, 4});
}

TEST_CASE("subgroup edge cases") {
  const std::vector<PedPosition> three{{5, {0, 0}}, {6, {3, 0}}, {7, {0, 9}}};
  const auto all = subgroup(three, 3);
  REQUIRE(all.size() == 1);
  CHECK(all[0] == std::vector<std::int64_t>{5, 6, 7});
  CHECK(subgroup(three, 4).empty());
  // 9 is equidistant from 8 and 10: the lower id wins.
  const auto tie = subgroup({{8, {-1, 0}}, {9, {0, 0}}, {10, {1, 0}}}, 2);
  CHECK(std::find(tie.begin(), tie.end(), std::vector<std::int64_t>{8, 9}) != tie.end());
  CHECK(std::find(tie.begin(), tie.end(), std::vector<std::int64_t>{9, 10}) != tie.end());
}

TEST_CASE("every pedestrian lands in at least one subgroup") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0, 10);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<PedPosition> peds;
    for (int i = 0; i < 9; ++i) peds.push_back({i * 3, {u(rng), u(rng)}});
    for (int n = 1; n <= 3; ++n) {
      std::set<std::int64_t> seen;
      for (const auto& g : subgroup(peds, n)) {
        CHECK(g.size() == static_cast<std::size_t>(n));
        seen.insert(g.begin(), g.end());
      }
      CHECK(seen.size() == peds.size());
    }
  }
}

TEST_CASE("rotation examples") {
  Segment s;
  s.n = 1;
  s.T = 1;
  s.ped_ids = {0};
  s.positions = {{1, 0}};
  const auto r90 = rotate_segment(s, 90);
  CHECK(r90.positions[0].x == doctest::Approx(0.0));
  CHECK(r90.positions[0].y == doctest::Approx(1.0));
  const auto r30 = rotate_segment(s, 30);
  CHECK(r30.positions[0].x == doctest::Approx(std::sqrt(3.0) / 2.0).epsilon(1e-12));
  CHECK(r30.positions[0].y == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(r30.rotation_deg == 30.0);
}

TEST_CASE("rotate_augment keeps originals first and multiplies the count") {
  std::mt19937_64 rng(3);
  std::vector<Segment> segs;
  for (int i = 0; i < 10; ++i) segs.push_back(oracle::random_segment(rng, 2, 8));
  const auto out = rotate_augment(segs, {30, 45, 60});
  REQUIRE(out.size() == 40);
  for (int i = 0; i < 10; ++i) CHECK(out[i] == segs[i]);
  CHECK(out[10].rotation_deg == 30.0);
  CHECK(out[25].rotation_deg == 45.0);
  CHECK(out[39].rotation_deg == 60.0);
}

TEST_CASE("hand-computed feature vector") {
  const auto fv = assemble_features(two_walkers(), 15.0);
  const std::vector<double> expected{15, 0, 15, 0, 1, -1, 1, -1, 15, 0, 15, 0, 1, 1, 1, 1};
  CHECK(fv.n == 2);
  CHECK(fv.values == expected);
}

TEST_CASE("standing pedestrian has all-zero features") {
  Segment s;
  s.n = 1;
  s.T = 8;
  s.ped_ids = {3};
  s.positions.assign(8, {0.3, -0.2});
  const auto fv = assemble_features(s, 15);
  CHECK(fv.values == std::vector<double>(14, 0.0));
}

TEST_CASE("feature length is 2 n^2 (T - 1)") {
  std::mt19937_64 rng(4);
  CHECK(feature_length(3, 8) == 126);
  for (int n = 1; n <= 3; ++n)
    for (int T : {2, 5, 8}) CHECK(assemble_features(oracle::random_segment(rng, n, T), 15).values.size() == feature_length(n, T));
}

TEST_CASE("features match the direct transcription") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const auto s = oracle::random_segment(rng, 1 + trial % 3, 8);
    const auto got = assemble_features(s, 15.0).values;
    const auto want = oracle::features(s, 15.0);
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(std::abs(got[i] - want[i]) <= 1e-12);
  }
}

TEST_CASE("features rotate with the segment") {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const auto s = oracle::random_segment(rng, 1 + trial % 3, 8);
    const double deg = 17.0 * trial;
    const auto a = assemble_features(s, 15).values;
    const auto b = assemble_features(rotate_segment(s, deg), 15).values;
    const double c = std::cos(deg * std::numbers::pi / 180), sn = std::sin(deg * std::numbers::pi / 180);
    for (std::size_t i = 0; i < a.size(); i += 2) {
      CHECK(std::abs(c * a[i] - sn * a[i + 1] - b[i]) < 1e-12);
      CHECK(std::abs(sn * a[i] + c * a[i + 1] - b[i + 1]) < 1e-12);
    }
  }
}

TEST_CASE("features ignore a uniform translation") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    auto s = oracle::random_segment(rng, 1 + trial % 3, 8);
    const auto a = assemble_features(s, 15).values;
    for (auto& p : s.positions) p = p + Point2{0.75, -0.5};
    const auto b = assemble_features(s, 15).values;
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) < 1e-12);
  }
}

TEST_CASE("non-finite positions are rejected") {
  auto s = two_walkers();
  s.positions[3].x = std::nan("");
  CHECK_THROWS_AS(assemble_features(s, 15), DataError);
}

TEST_CASE("slice_segment cuts a sub-window") {
  std::mt19937_64 rng(8);
  const auto s = oracle::random_segment(rng, 2, 20);
  const auto w = slice_segment(s, 0, 8);
  CHECK(w.T == 8);
  CHECK(w.at(1, 7) == s.at(1, 7));
  const auto tail = slice_segment(s, 8, 12);
  CHECK(tail.start_frame == s.start_frame + 8);
  CHECK(tail.at(0, 0) == s.at(0, 8));
  CHECK_THROWS_AS(slice_segment(s, 10, 12), DataError);
}

TEST_CASE("segment dump round-trips with and without features") {
  std::mt19937_64 rng(9);
  std::vector<SegmentRecord> recs;
  for (int i = 0; i < 12; ++i) {
    auto s = oracle::random_segment(rng, 1 + i % 3, 8);
    s.start_frame = i;
    s.rotation_deg = i % 2 ? 45.0 : 0.0;
    FeatureVector fv;
    if (i % 3) fv = assemble_features(s, 15);
    recs.push_back({s, fv});
  }
  std::stringstream ss;
  write_segments(ss, recs);
  CHECK(read_segments(ss) == recs);
}

TEST_CASE("truncated or mislabelled segment dumps fail") {
  std::mt19937_64 rng(10);
  std::vector<SegmentRecord> recs{{oracle::random_segment(rng, 2, 8), {}}, {oracle::random_segment(rng, 1, 8), {}}};
  std::stringstream ss;
  write_segments(ss, recs);
  auto text = ss.str();
  std::istringstream cut(text.substr(0, text.rfind('\n', text.size() - 2) + 1));
  CHECK_THROWS_AS(read_segments(cut), FormatError);
  std::istringstream wrong("peddict/segments/v2\ncount 0\n");
  CHECK_THROWS_AS(read_segments(wrong), FormatError);
}
