#pragma once

#include <filesystem>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <variant>
#include <vector>

#include "peddict/analytics.hpp"
#include "peddict/clustering.hpp"
#include "peddict/embedding.hpp"
#include "peddict/neuralnet.hpp"
#include "peddict/predictor.hpp"
#include "peddict/ptnet.hpp"

// Line-oriented text artifacts. The first line of every file is
// "peddict/<kind>/v1"; decimals are written with 17 significant digits so a
// read of a written artifact reproduces it exactly.

namespace peddict {

void write_embedding(std::ostream& out, const EmbeddingTable& table);
EmbeddingTable read_embedding(std::istream& in);

void write_dictionary(std::ostream& out, const BehaviorDictionary& dict);
BehaviorDictionary read_dictionary(std::istream& in);

void write_mlp(std::ostream& out, const MlpModel& model);
MlpModel read_mlp(std::istream& in);

using Artifact = std::variant<EmbeddingTable, BehaviorDictionary, MlpModel>;

/// Kind tag used in the magic line: "embedding", "dict" or "mlp".
std::string artifact_kind(const Artifact& artifact);

void serialize_artifact(const Artifact& artifact, const std::filesystem::path& path);
/// Dispatches on the magic line; FormatError on an unknown kind, a version
/// other than v1, or a truncated body.
Artifact deserialize_artifact(const std::filesystem::path& path);

template <class T>
T load_artifact(const std::filesystem::path& path) {
  auto a = deserialize_artifact(path);
  if (auto* v = std::get_if<T>(&a)) return std::move(*v);
  throw FormatError(path.string() + ": unexpected artifact kind " + artifact_kind(a));
}

/// PT-net directory: manifest.txt plus ptnet_n<N>.mlp per imitator.
void save_ptnet(const std::filesystem::path& dir, const PtNet& net);
PtNet load_ptnet(const std::filesystem::path& dir);

/// Ensemble directory: manifest.txt plus one .mlp per model.
void save_ensemble(const std::filesystem::path& dir, const PredictorEnsemble& ens);
PredictorEnsemble load_ensemble(const std::filesystem::path& dir);

struct SceneNorm {
  NormParams params;
  Bounds bounds;  ///< raw scene-unit bounding box
};

void write_norms(std::ostream& out, const std::map<std::string, SceneNorm>& norms);
std::map<std::string, SceneNorm> read_norms(std::istream& in);

struct PredictionRow {
  std::string segment_id;
  int person = 0;
  int step = 0;
  Point2 pos;
};

void write_predictions(std::ostream& out, const std::vector<PredictionRow>& rows);
std::vector<PredictionRow> read_predictions(std::istream& in);

}  // namespace peddict
