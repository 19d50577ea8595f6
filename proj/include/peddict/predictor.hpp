#pragma once

#include <cstdint>
#include <map>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "peddict/clustering.hpp"
#include "peddict/neuralnet.hpp"
#include "peddict/ptnet.hpp"
#include "peddict/trajectory_prep.hpp"

namespace peddict {

struct HorizonConfig {
  int obs_len = 8;
  int pred_len = 12;

  friend bool operator==(const HorizonConfig&, const HorizonConfig&) = default;
};

/// A track window of obs_len + pred_len frames with its behavior cluster
/// (predicted from the observation window).
struct LabeledTrack {
  Segment track;
  int cluster = -1;
};

/// Observation half of a prediction problem, normalised scene units.
struct PredictionTask {
  int n = 0;
  std::vector<Point2> observed;  ///< person-major, n * obs_len
  NormParams norm;
};

PredictionTask make_task(const Segment& track, const HorizonConfig& h, const NormParams& norm = {});
std::vector<Point2> future_of(const Segment& track, const HorizonConfig& h);

/// One MLP per (n, cluster) plus a pooled model per n used as fallback.
struct PredictorEnsemble {
  HorizonConfig horizon;
  std::map<std::pair<int, int>, MlpModel> cluster_models;
  std::map<int, MlpModel> global_models;

  friend bool operator==(const PredictorEnsemble&, const PredictorEnsemble&) = default;
};

/// Model inputs: observed positions flattened person-major. Targets: offsets
/// of each future position from the person's last observed position.
std::vector<double> encode_observation(const std::vector<Point2>& observed);
std::vector<double> encode_targets(const Segment& track, const HorizonConfig& h);

/// Trains every cluster model and the pooled model. Clusters smaller than
/// the batch size train full-batch; clusters without items get no model.
PredictorEnsemble train_ensemble(const std::vector<LabeledTrack>& dataset, const HorizonConfig& h,
                                 int hidden, const TrainConfig& cfg);

enum class Conditioning { per_cluster, global_only };

struct FuturePrediction {
  int cluster_id = -1;
  Point2 coord;
  bool used_fallback = false;
  std::vector<Point2> positions;  ///< person-major, n * pred_len, normalised units

  std::vector<Point2> denormalized(const NormParams& norm) const;
};

/// The behavior cluster picks the model; the pooled model of task.n serves
/// when that cluster has none or when no imitator/dictionary covers task.n.
FuturePrediction predict_future(const PredictionTask& task, const PtNet& ptnet, const BehaviorDictionary& dict,
                                const PredictorEnsemble& ensemble, double alpha,
                                Conditioning mode = Conditioning::per_cluster);

struct Metrics {
  double ade = 0.0;
  double fde = 0.0;
  std::int64_t count = 0;  ///< person trajectories
};

/// pred and truth are person-major, n persons by steps.
Metrics ade_fde(const std::vector<Point2>& pred, const std::vector<Point2>& truth, int n);

struct TestItem {
  Segment track;           ///< obs_len + pred_len frames, normalised
  NormParams norm;         ///< of the item's scene
};

struct ReportRow {
  std::string scene;
  std::string n;        ///< number or "all"
  std::string cluster;  ///< number, "all", or "last_position" for the baseline
  Metrics metrics;
};

struct EvaluationReport {
  std::vector<ReportRow> rows;
  std::vector<FuturePrediction> predictions;  ///< aligned with the test items

  const ReportRow* find(const std::string& scene, const std::string& n, const std::string& cluster) const;
  void write_csv(std::ostream& out) const;
  void write_text(std::ostream& out) const;
};

/// Per (scene, n, cluster), per scene, and overall ADE/FDE plus a
/// last-observed-position baseline per scene. Errors are measured in scene
/// units (each item denormalised with its own NormParams).
EvaluationReport evaluate(const std::vector<TestItem>& test, const PtNet& ptnet, const BehaviorDictionary& dict,
                          const PredictorEnsemble& ensemble, const HorizonConfig& h, double alpha,
                          Conditioning mode = Conditioning::per_cluster);

/// Deterministic per-scene split of items into (train, test) index lists.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_by_scene(
    const std::vector<std::string>& scenes, double train_fraction, std::uint64_t seed);

}  // namespace peddict
