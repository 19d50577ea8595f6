#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "peddict/artifacts.hpp"

using namespace peddict;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("peddict_artifacts_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

EmbeddingTable sample_embedding() {
  EmbeddingTable t;
  t.n = 2;
  t.rows = {{"s:0:1;2:0", {0.1, -1.0 / 3.0}, 3}, {"s:1:1;2:45", {1e-300, 12345.678}, -1}};
  return t;
}

BehaviorDictionary sample_dictionary() {
  BehaviorDictionary d;
  d.groups[1] = {{0, {0.5, 0.25}, "", 4}, {1, {-3, 2}, "walking, fast", 6}};
  d.groups[3] = {{0, {1.0 / 7.0, 2}, "group", 1}};
  return d;
}

MlpModel sample_mlp(std::uint64_t seed) {
  auto m = mlp_init({4, 5, 5, 2}, seed);
  m.layers[2].bias(1) = 0.1;
  return m;
}

std::string text_of(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("embedding round trip") {
  std::stringstream ss;
  write_embedding(ss, sample_embedding());
  CHECK(ss.str().rfind("peddict/embedding/v1\n", 0) == 0);
  CHECK(read_embedding(ss) == sample_embedding());
}

TEST_CASE("dictionary round trip keeps commas in labels") {
  std::stringstream ss;
  write_dictionary(ss, sample_dictionary());
  CHECK(read_dictionary(ss) == sample_dictionary());
  auto bad = sample_dictionary();
  bad.groups[1][0].label = "two\nlines";
  std::stringstream out;
  CHECK_THROWS_AS(write_dictionary(out, bad), DataError);
}

TEST_CASE("mlp round trip is exact") {
  const auto m = sample_mlp(3);
  std::stringstream ss;
  write_mlp(ss, m);
  const auto back = read_mlp(ss);
  CHECK(back == m);
  const std::vector<double> x{0.1, 0.2, -0.3, 0.4};
  CHECK(forward(back, x) == forward(m, x));
}

TEST_CASE("generic artifact files dispatch on their kind") {
  const auto dir = scratch("generic");
  serialize_artifact(sample_embedding(), dir / "e.txt");
  serialize_artifact(sample_dictionary(), dir / "d.txt");
  serialize_artifact(sample_mlp(1), dir / "m.mlp");
  CHECK(artifact_kind(deserialize_artifact(dir / "e.txt")) == "embedding");
  CHECK(load_artifact<BehaviorDictionary>(dir / "d.txt") == sample_dictionary());
  CHECK(load_artifact<MlpModel>(dir / "m.mlp") == sample_mlp(1));
  CHECK_THROWS_AS(load_artifact<MlpModel>(dir / "d.txt"), FormatError);

  // Same object, same bytes.
  serialize_artifact(sample_mlp(1), dir / "m2.mlp");
  CHECK(text_of(dir / "m.mlp") == text_of(dir / "m2.mlp"));
}

TEST_CASE("corrupt artifacts are rejected") {
  const auto dir = scratch("corrupt");
  serialize_artifact(sample_mlp(2), dir / "m.mlp");
  const auto full = text_of(dir / "m.mlp");
  auto write = [&](const std::string& name, const std::string& body) {
    std::ofstream(dir / name) << body;
    return dir / name;
  };
  CHECK_THROWS_AS(deserialize_artifact(write("cut.mlp", full.substr(0, full.size() / 2))), FormatError);
  CHECK_THROWS_AS(deserialize_artifact(write("v2.mlp", "peddict/mlp/v2\n" + full.substr(full.find('\n') + 1))),
                  FormatError);
  CHECK_THROWS_AS(deserialize_artifact(write("kind.txt", "peddict/banana/v1\n")), FormatError);
  CHECK_THROWS_AS(deserialize_artifact(write("junk.txt", "hello\n")), FormatError);
  CHECK_THROWS_AS(deserialize_artifact(write("empty.txt", "")), FormatError);
  CHECK_THROWS_AS(deserialize_artifact(dir / "absent.txt"), DataError);

  std::string garbled = full;
  garbled[garbled.rfind(',') + 1] = 'x';
  CHECK_THROWS_AS(deserialize_artifact(write("garbled.mlp", garbled)), FormatError);
}

TEST_CASE("ptnet and ensemble directories round trip") {
  const auto dir = scratch("dirs");
  PtNet net;
  net.T = 8;
  net.models[1] = {1, mlp_init({14, 6, 6, 2}, 1), {2.5, 0.5}, {-1, 3}};
  net.models[2] = {2, mlp_init({56, 6, 6, 2}, 2), {1, 1}, {0, 0}};
  save_ptnet(dir / "ptnet", net);
  CHECK(fs::exists(dir / "ptnet" / "ptnet_n2.mlp"));
  CHECK(load_ptnet(dir / "ptnet") == net);

  PredictorEnsemble ens;
  ens.horizon = {8, 12};
  ens.global_models[1] = mlp_init({16, 4, 4, 24}, 3);
  ens.cluster_models[{1, 0}] = mlp_init({16, 4, 4, 24}, 4);
  ens.cluster_models[{1, 7}] = mlp_init({16, 4, 4, 24}, 5);
  save_ensemble(dir / "ens", ens);
  CHECK(fs::exists(dir / "ens" / "n1_c7.mlp"));
  CHECK(load_ensemble(dir / "ens") == ens);

  fs::remove(dir / "ens" / "n1_c7.mlp");
  CHECK_THROWS_AS(load_ensemble(dir / "ens"), DataError);
}

TEST_CASE("norms and predictions round trip") {
  std::map<std::string, SceneNorm> norms;
  norms["eth"] = {{{1.5, -2}, 7.25}, {-5.75, -9.25, 8.75, 5.25}};
  norms["zara"] = {{{0, 0}, 1}, {0, 0, 0, 0}};
  std::stringstream ss;
  write_norms(ss, norms);
  const auto back = read_norms(ss);
  REQUIRE(back.size() == 2);
  CHECK(back.at("eth").params.center == Point2{1.5, -2});
  CHECK(back.at("eth").params.half_extent == 7.25);
  CHECK(back.at("eth").bounds.xmax == 8.75);

  const std::vector<PredictionRow> rows{{"a:0:1:0", 0, 0, {0.1, 0.2}}, {"a:0:1:0", 0, 1, {1.0 / 3.0, -4}}};
  std::stringstream ps;
  write_predictions(ps, rows);
  const auto pr = read_predictions(ps);
  REQUIRE(pr.size() == 2);
  CHECK(pr[1].pos == rows[1].pos);
  CHECK(pr[1].step == 1);
  CHECK(pr[0].segment_id == "a:0:1:0");
}
