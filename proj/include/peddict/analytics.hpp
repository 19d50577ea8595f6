#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "peddict/common.hpp"
#include "peddict/trajectory_prep.hpp"

namespace peddict {

struct Bounds {
  double xmin = 0.0;
  double ymin = 0.0;
  double xmax = 0.0;
  double ymax = 0.0;
};

Bounds table_bounds(const TrajectoryTable& table);

struct GridConfig {
  int width = 64;
  int height = 48;
};

/// Occupancy counts of one behavior (or a set of clusters) over a scene.
struct BehaviorMap {
  std::string scene_id;
  int n = 0;
  std::vector<int> clusters;
  int width = 0;
  int height = 0;
  double cell_size = 1.0;  ///< square cells, scene units
  Point2 origin;           ///< lower-left corner of cell (0, 0)
  std::vector<std::int64_t> counts;  ///< row-major, counts[cy * width + cx]
  std::int64_t clamped = 0;          ///< positions outside the grid, pushed to the border

  std::int64_t at(int cx, int cy) const { return counts[static_cast<std::size_t>(cy) * width + cx]; }
  std::int64_t total() const;
  std::int64_t max_count() const;
};

/// A segment with its cluster, positions in scene units.
struct LabeledSegment {
  const Segment* segment = nullptr;
  int cluster = -1;
};

/// Every position of every person of every matching segment lands in one cell.
BehaviorMap behavior_map(const std::vector<LabeledSegment>& segments, const std::string& scene, int n,
                         const std::vector<int>& clusters, const Bounds& bounds, const GridConfig& grid = {});

struct Assignment {
  std::string scene_id;
  int n = 0;
  int cluster = 0;
};

struct BehaviorHistogram {
  std::string scene_id;
  int n = 0;
  std::map<int, std::int64_t> counts;  ///< every cluster 0..k-1 present

  std::int64_t total() const;
  friend bool operator==(const BehaviorHistogram&, const BehaviorHistogram&) = default;
};

/// Counts per cluster for (scene, n); no scene filter when scene is nullopt.
BehaviorHistogram behavior_histogram(const std::vector<Assignment>& assignments,
                                     const std::optional<std::string>& scene, int n, int k);
BehaviorHistogram merge(const BehaviorHistogram& a, const BehaviorHistogram& b);

void write_map_csv(std::ostream& out, const BehaviorMap& map);
void write_histogram_csv(std::ostream& out, const BehaviorHistogram& hist);

/// Single map shaded with a white-to-hue ramp plus legend.
std::string render_svg(const BehaviorMap& map);
/// Several maps drawn over each other, one hue each at 50% opacity.
std::string render_overlay_svg(const std::vector<BehaviorMap>& maps);
std::string render_svg(const BehaviorHistogram& hist);

/// Up to m seeded samples per cluster, each drawn as one panel of per-person
/// polylines with start markers and arrowheads. Keyed by cluster id.
std::map<int, std::string> sample_cluster_plots(const std::vector<LabeledSegment>& segments, int m,
                                                std::uint64_t seed);

/// Which segments sample_cluster_plots draws for each cluster (indices into
/// its input, ascending).
std::map<int, std::vector<std::size_t>> sample_cluster_members(const std::vector<LabeledSegment>& segments, int m,
                                                               std::uint64_t seed);

}  // namespace peddict
