#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "peddict/dataset_io.hpp"

using namespace peddict;

namespace {

ParseResult parse(const std::string& text, ParseMode mode = ParseMode::strict) {
  std::istringstream in(text);
  return parse_canonical(in, "s", mode);
}

}  // namespace

TEST_CASE("canonical rows are echoed") {
  const auto r = parse("frame,ped_id,x,y\n0,1,0.0,0.0\n1,1,1.0,0.0\n");
  REQUIRE(r.table.records.size() == 2);
  CHECK(r.table.pedestrian_count() == 1);
  CHECK(r.table.records[1] == Record{1, 1, 1.0, 0.0});
  CHECK(r.rejected.empty());
}

TEST_CASE("header-only file gives an empty table") {
  const auto r = parse("frame,ped_id,x,y\n");
  CHECK(r.table.records.empty());
  CHECK(r.input_rows == 0);
}

TEST_CASE("out-of-order rows come back sorted by frame") {
  const auto r = parse("frame,ped_id,x,y\n1,1,1,0\n0,1,0,0\n");
  REQUIRE(r.table.records.size() == 2);
  CHECK(r.table.records[0].frame == 0);
  CHECK(r.table.records[1].frame == 1);
}

TEST_CASE("malformed header is rejected") {
  CHECK_THROWS_AS(parse("f,p,x,y\n0,1,0,0\n"), DataError);
  CHECK_THROWS_AS(parse(""), DataError);
}

TEST_CASE("strict mode names the offending line") {
  try {
    parse("frame,ped_id,x,y\n0,1,0,0\n1,1,abc,0\n");
    FAIL("expected an error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
}

TEST_CASE("lenient mode rejects exactly the rows it reports") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    std::ostringstream text;
    text << "frame,ped_id,x,y\n";
    std::size_t bad = 0;
    std::size_t rows = 0;
    std::vector<std::size_t> bad_lines;
    for (int f = 0; f < 30; ++f) {
      ++rows;
      const std::size_t line = rows + 1;
      switch (rng() % 5) {
        case 0:
          text << f << ",1,x,0\n";
          ++bad;
          bad_lines.push_back(line);
          break;
        case 1:
          text << f << ",1,0\n";
          ++bad;
          bad_lines.push_back(line);
          break;
        default:
          text << f << ",1," << f * 0.5 << ",2\n";
      }
    }
    const auto r = parse(text.str(), ParseMode::lenient);
    CHECK(r.input_rows == rows);
    CHECK(r.rejected.size() == bad);
    CHECK(r.table.records.size() + r.rejected.size() == r.input_rows);
    for (std::size_t i = 0; i < bad_lines.size(); ++i) CHECK(r.rejected[i].line == bad_lines[i]);
  }
}

TEST_CASE("duplicate observation is a hard error in both modes") {
  const std::string text = "frame,ped_id,x,y\n0,1,0,0\n0,1,1,1\n";
  CHECK_THROWS_AS(parse(text), DataError);
  CHECK_THROWS_AS(parse(text, ParseMode::lenient), DataError);
}

TEST_CASE("frame gaps split a pedestrian into separate tracks") {
  const auto r = parse("frame,ped_id,x,y\n0,5,0,0\n1,5,0,0\n4,5,0,0\n5,5,0,0\n0,2,0,0\n");
  CHECK(r.table.pedestrian_count() == 3);
  std::map<std::int64_t, std::vector<std::int64_t>> frames;
  for (const auto& rec : r.table.records) frames[rec.ped_id].push_back(rec.frame);
  CHECK(frames[5] == std::vector<std::int64_t>{0, 1});
  CHECK(frames[6] == std::vector<std::int64_t>{4, 5});
}

TEST_CASE("canonical write then parse is identity") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-100, 100);
  TrajectoryTable t;
  t.scene_id = "s";
  for (int f = 0; f < 20; ++f)
    for (int p = 0; p < 3; ++p) t.records.push_back({f, p, u(rng), u(rng)});
  std::stringstream ss;
  write_canonical(ss, t);
  CHECK(parse_canonical(ss, "s").table == t);
}

TEST_CASE("obsmat columns 1, 2, 3 and 5 are read") {
  std::istringstream in("780 1 8.46 0 3.59 1.2 0 0.1\n780 2 1.0 0 2.0 0 0 0\n786 1 8.5 0 3.6 0 0 0\n");
  const auto t = import_obsmat(in, "eth");
  REQUIRE(t.records.size() == 3);
  CHECK(t.records[0] == Record{0, 1, 8.46, 3.59});
  CHECK(t.records[1].frame == 0);
  CHECK(t.records[1].ped_id == 2);
  CHECK(t.records[2].frame == 1);
}

TEST_CASE("obsmat frames are reindexed by the detected stride") {
  std::istringstream in("780 1 0 0 0 0 0 0\n786 1 1 0 0 0 0 0\n792 1 2 0 0 0 0 0\n");
  const auto t = import_obsmat(in, "eth");
  std::vector<std::int64_t> frames;
  for (const auto& r : t.records) frames.push_back(r.frame);
  CHECK(frames == std::vector<std::int64_t>{0, 1, 2});
  CHECK(detect_frame_stride({780, 786, 792}) == 6);
  CHECK(detect_frame_stride({10, 16, 28, 40}) == 6);
  CHECK(detect_frame_stride({5}) == 1);
}

TEST_CASE("obsmat rows with too few columns fail with the line number") {
  std::istringstream in("780 1 8.46 0 3.59 1.2 0 0.1\n786 1 8.46 0 3.59\n");
  try {
    import_obsmat(in, "eth");
    FAIL("expected an error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}

TEST_CASE("obsmat column mapping can be overridden") {
  std::istringstream in("0 7 1.5 2.5\n1 7 1.6 2.6\n");
  const auto t = import_obsmat(in, "s", ObsmatColumns{1, 2, 3, 4, 4});
  REQUIRE(t.records.size() == 2);
  CHECK(t.records[1] == Record{1, 7, 1.6, 2.6});
}

TEST_CASE("obsmat scene names") {
  CHECK(obsmat_scene_name("data/hotel/obsmat.txt") == "hotel");
  CHECK(obsmat_scene_name("data/zara01.txt") == "zara01");
}

TEST_CASE("leader_follower without noise: same y, x offset exactly gap") {
  SyntheticSpec spec;
  spec.family = BehaviorFamily::leader_follower;
  spec.n_people = 2;
  spec.count = 3;
  spec.gap = 1.0;
  const auto t = generate_synthetic(spec, 11);
  std::map<std::int64_t, std::vector<Record>> by_frame;
  for (const auto& r : t.records) by_frame[r.frame].push_back(r);
  for (const auto& [f, recs] : by_frame) {
    REQUIRE(recs.size() == 2);
    CHECK(recs[0].y == recs[1].y);
    CHECK(std::abs(std::abs(recs[1].x - recs[0].x) - 1.0) < 1e-12);
  }
}

TEST_CASE("standing without noise never moves") {
  SyntheticSpec spec;
  spec.family = BehaviorFamily::standing;
  spec.count = 4;
  const auto t = generate_synthetic(spec, 5);
  std::map<std::int64_t, Record> last;
  for (const auto& r : t.records) {
    if (last.count(r.ped_id)) {
      CHECK(r.x == last[r.ped_id].x);
      CHECK(r.y == last[r.ped_id].y);
    }
    last[r.ped_id] = r;
  }
}

TEST_CASE("synthetic generation is a pure function of spec and seed") {
  for (auto fam : {BehaviorFamily::standing, BehaviorFamily::straight_walk, BehaviorFamily::leader_follower,
                   BehaviorFamily::side_by_side, BehaviorFamily::opposite_pass, BehaviorFamily::congregate}) {
    SyntheticSpec spec;
    spec.family = fam;
    spec.n_people = default_people(fam);
    spec.count = 5;
    spec.noise_sigma = 0.05;
    std::ostringstream a, b;
    write_canonical(a, generate_synthetic(spec, 42));
    write_canonical(b, generate_synthetic(spec, 42));
    CHECK(a.str() == b.str());
    std::ostringstream c;
    write_canonical(c, generate_synthetic(spec, 43));
    CHECK(a.str() != c.str());
  }
}

TEST_CASE("every synthetic group spans at least T + 12 frames") {
  SyntheticSpec spec;
  spec.family = BehaviorFamily::side_by_side;
  spec.n_people = 2;
  spec.count = 6;
  const auto t = generate_synthetic(spec, 1);
  std::map<std::int64_t, std::pair<std::int64_t, std::int64_t>> span;
  for (const auto& r : t.records) {
    auto [it, fresh] = span.try_emplace(r.ped_id, r.frame, r.frame);
    it->second.first = std::min(it->second.first, r.frame);
    it->second.second = std::max(it->second.second, r.frame);
  }
  CHECK(span.size() == 12);
  for (const auto& [id, s] : span) CHECK(s.second - s.first + 1 >= 20);
}

TEST_CASE("synthetic spec validation") {
  SyntheticSpec spec;
  spec.family = BehaviorFamily::leader_follower;
  spec.n_people = 3;
  CHECK_THROWS_AS(generate_synthetic(spec, 0), ConfigError);
  spec.n_people = 2;
  spec.count = 0;
  CHECK_THROWS_AS(generate_synthetic(spec, 0), ConfigError);
  CHECK_THROWS_AS(parse_family("moonwalk"), ConfigError);
  CHECK(parse_family("opposite_pass") == BehaviorFamily::opposite_pass);
  CHECK(to_string(BehaviorFamily::congregate) == "congregate");
}

TEST_CASE("merge_tables rejects clashing observations") {
  SyntheticSpec spec;
  spec.family = BehaviorFamily::straight_walk;
  const auto a = generate_synthetic(spec, 1);
  CHECK_THROWS_AS(merge_tables({a, a}, "m"), DataError);
  spec.first_ped_id = 1000;
  const auto b = generate_synthetic(spec, 2);
  const auto m = merge_tables({a, b}, "m");
  CHECK(m.records.size() == a.records.size() + b.records.size());
  CHECK(m.scene_id == "m");
}

TEST_CASE("canonical file round trip through the filesystem") {
  const auto dir = std::filesystem::temp_directory_path() / "peddict_io_test";
  std::filesystem::create_directories(dir);
  SyntheticSpec spec;
  spec.family = BehaviorFamily::congregate;
  spec.n_people = 3;
  auto t = generate_synthetic(spec, 4);
  t.scene_id = "plaza";
  write_canonical(dir / "plaza.csv", t);
  const auto back = parse_canonical(dir / "plaza.csv");
  CHECK(back.table == t);
  std::filesystem::remove_all(dir);
}
