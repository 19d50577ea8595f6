#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <string>
#include <vector>

#include "peddict/common.hpp"
#include "peddict/embedding.hpp"

namespace peddict {

struct ClusteringConfig {
  /// Clusters per pedestrian count. Defaults follow the observed taxonomy sizes.
  std::map<int, int> k_per_n{{1, 10}, {2, 28}, {3, 33}};
  int max_iters = 300;
  int restarts = 10;
  std::uint64_t seed = 0;

  void validate() const;
};

struct KMeansResult {
  std::vector<Point2> centroids;
  std::vector<int> assignments;
  double inertia = 0.0;
  int iterations = 0;
  int restart = 0;                    ///< index of the winning restart
  std::vector<double> inertia_trace;  ///< winning restart, one value per Lloyd step
};

double inertia(const std::vector<Point2>& points, const std::vector<Point2>& centroids,
               const std::vector<int>& assignments);

/// Index of the nearest centroid, ties to the lower index.
int nearest_centroid(Point2 p, const std::vector<Point2>& centroids);

/// k-means++ seeding, Lloyd iterations to an assignment fixpoint, best of
/// cfg.restarts by (inertia, restart index).
KMeansResult kmeans(const std::vector<Point2>& points, int k, const ClusteringConfig& cfg);

struct Cluster {
  int cluster_id = 0;
  Point2 centroid;
  std::string label;
  std::int64_t count = 0;

  friend bool operator==(const Cluster&, const Cluster&) = default;
};

/// Per pedestrian-count centroids in the embedding plane.
struct BehaviorDictionary {
  std::map<int, std::vector<Cluster>> groups;

  const std::vector<Cluster>& clusters(int n) const;
  std::vector<Point2> centroids(int n) const;
  friend bool operator==(const BehaviorDictionary&, const BehaviorDictionary&) = default;
};

/// Clusters every embedding and writes the cluster column back into them.
/// Throws DataError when an n in cfg.k_per_n has no embedding.
BehaviorDictionary build_dictionary(std::map<int, EmbeddingTable>& embeddings, const ClusteringConfig& cfg);

int assign_cluster(Point2 coord, const BehaviorDictionary& dict, int n);

/// Rows `n,cluster_id,label`; an optional header line `n,cluster_id,label` is skipped.
BehaviorDictionary apply_labels(BehaviorDictionary dict, std::istream& labels);
BehaviorDictionary apply_labels(BehaviorDictionary dict, const std::filesystem::path& labels_file);

}  // namespace peddict
