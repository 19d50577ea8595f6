#pragma once

#include <map>
#include <vector>

#include "peddict/clustering.hpp"
#include "peddict/embedding.hpp"
#include "peddict/neuralnet.hpp"
#include "peddict/trajectory_prep.hpp"

namespace peddict {

/// Student network for one pedestrian count. The network regresses
/// standardised teacher coordinates; coord = scale * output + shift.
struct Imitator {
  int n = 0;
  MlpModel model;
  Point2 scale{1.0, 1.0};
  Point2 shift{0.0, 0.0};

  friend bool operator==(const Imitator&, const Imitator&) = default;
};

/// One imitator per configured pedestrian count, all sharing window length T.
struct PtNet {
  int T = 8;
  std::map<int, Imitator> models;

  const Imitator& at(int n) const;
  friend bool operator==(const PtNet&, const PtNet&) = default;
};

struct ImitatorTraining {
  Imitator imitator;
  std::vector<double> epoch_loss;
  /// Fraction of training points whose imitated coordinate lands in the
  /// teacher's cluster; filled per epoch when centroids are supplied.
  std::vector<double> epoch_agreement;
  double initial_agreement = 0.0;
};

/// Trains the imitator for teacher.n on features aligned row-by-row with the
/// teacher embedding. Passing centroids enables the agreement trace.
ImitatorTraining train_imitator(const std::vector<FeatureVector>& features, const EmbeddingTable& teacher,
                                int T, int hidden, const TrainConfig& cfg,
                                const std::vector<Point2>* centroids = nullptr);

Point2 embed(const PtNet& net, const FeatureVector& features, int n);
std::vector<Point2> embed_batch(const PtNet& net, const std::vector<FeatureVector>& features, int n);

struct BehaviorPrediction {
  int n = 0;
  int cluster_id = 0;
  Point2 coord;
};

BehaviorPrediction predict_behavior(const PtNet& net, const BehaviorDictionary& dict, const Segment& segment,
                                    double alpha);

/// Fraction of positions i where nearest_centroid(coords[i]) == labels[i].
double cluster_agreement(const std::vector<Point2>& coords, const std::vector<Point2>& centroids,
                         const std::vector<int>& labels);

}  // namespace peddict
