#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "peddict/common.hpp"
#include "peddict/dataset_io.hpp"

namespace peddict {

struct SegmentationConfig {
  int T = 8;
  int delta_T = 1;
  int n_max = 3;
  double alpha = 15.0;
  std::vector<double> angles{30.0, 45.0, 60.0};  ///< degrees

  void validate() const;
};

/// n pedestrians observed together over T consecutive frames.
struct Segment {
  std::string scene_id;
  std::int64_t start_frame = 0;
  int n = 0;
  int T = 0;
  double rotation_deg = 0.0;  ///< 0 for original data, else augmentation angle
  std::vector<std::int64_t> ped_ids;  ///< ascending
  std::vector<Point2> positions;      ///< person-major: positions[i * T + t]

  Point2 at(int person, int t) const { return positions[static_cast<std::size_t>(person) * T + t]; }
  Point2& at(int person, int t) { return positions[static_cast<std::size_t>(person) * T + t]; }

  /// Unique, stable identifier: scene:start:id;id;...:rotation
  std::string id() const;
  void validate() const;

  friend bool operator==(const Segment&, const Segment&) = default;
};

struct FeatureVector {
  int n = 0;
  std::vector<double> values;

  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
};

/// 2 n^2 (T - 1): velocities plus one proximity track per neighbour, per person.
constexpr std::size_t feature_length(int n, int T) {
  return 2u * static_cast<std::size_t>(n) * n * static_cast<std::size_t>(T - 1);
}

/// Isotropic map of the scene bounding box onto [-1, 1]^2.
struct NormParams {
  Point2 center;
  double half_extent = 1.0;

  Point2 normalize(Point2 p) const { return {(p.x - center.x) / half_extent, (p.y - center.y) / half_extent}; }
  Point2 denormalize(Point2 p) const { return {p.x * half_extent + center.x, p.y * half_extent + center.y}; }
};

/// Centers the scene bounding box on the origin and scales by half of its
/// larger side. A degenerate box keeps half_extent = 1 and logs a warning.
std::pair<TrajectoryTable, NormParams> normalize_scene(const TrajectoryTable& table);

struct PedPosition {
  std::int64_t ped_id = 0;
  Point2 pos;
};

/// Nearest-neighbour groups of exactly n pedestrians: one candidate group per
/// pedestrian (itself plus its n-1 nearest, ties to the smaller id), with
/// duplicates removed. Groups come back as ascending id lists, sorted.
std::vector<std::vector<std::int64_t>> subgroup(std::vector<PedPosition> peds, int n);

/// Sliding windows of cfg.T frames every cfg.delta_T frames; one segment per
/// group of n pedestrians present over the whole window. Output is sorted by
/// (start_frame, ped_ids).
std::vector<Segment> extract_segments(const TrajectoryTable& table, const SegmentationConfig& cfg, int n);

Segment rotate_segment(const Segment& seg, double degrees);

/// Originals first, then every original rotated by angles[0], then angles[1], ...
std::vector<Segment> rotate_augment(const std::vector<Segment>& segments,
                                    const std::vector<double>& angles);

/// Velocity and proximity features, scaled velocities first for each person.
FeatureVector assemble_features(const Segment& seg, double alpha);

/// Window of `len` frames starting at `first` (used to cut observation windows).
Segment slice_segment(const Segment& seg, int first, int len);

// Segment dump: "peddict/segments/v1", "count <R>", then one line per segment.
struct SegmentRecord {
  Segment segment;
  FeatureVector features;  ///< empty values when features were not computed

  friend bool operator==(const SegmentRecord&, const SegmentRecord&) = default;
};

void write_segments(std::ostream& out, const std::vector<SegmentRecord>& records);
std::vector<SegmentRecord> read_segments(std::istream& in);
void write_segments(const std::filesystem::path& path, const std::vector<SegmentRecord>& records);
std::vector<SegmentRecord> read_segments(const std::filesystem::path& path);

}  // namespace peddict
