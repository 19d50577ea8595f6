#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "peddict/common.hpp"

namespace peddict {

struct Record {
  std::int64_t frame = 0;
  std::int64_t ped_id = 0;
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Record&, const Record&) = default;
};

/// Raw observations for one scene. Records are kept sorted by (frame, ped_id)
/// with no duplicate pairs.
struct TrajectoryTable {
  std::string scene_id;
  std::vector<Record> records;

  std::size_t pedestrian_count() const;
  friend bool operator==(const TrajectoryTable&, const TrajectoryTable&) = default;
};

/// Sorts records and throws DataError on a duplicate (frame, ped_id).
void sort_and_check(TrajectoryTable& table);

/// Gives every run of consecutive frames its own pedestrian id. The first run
/// keeps the original id; later runs get fresh ids above the current maximum.
void split_gaps(TrajectoryTable& table);

enum class ParseMode {
  strict,   ///< first bad row throws DataError naming the line
  lenient,  ///< bad rows are skipped and reported
};

struct RejectedRow {
  std::size_t line = 0;  ///< 1-based, header is line 1
  std::string reason;
};

struct ParseResult {
  TrajectoryTable table;
  std::vector<RejectedRow> rejected;
  std::size_t input_rows = 0;  ///< body rows seen, blank lines excluded
};

inline constexpr std::string_view kCanonicalHeader = "frame,ped_id,x,y";

ParseResult parse_canonical(std::istream& in, std::string scene_id,
                            ParseMode mode = ParseMode::strict);
ParseResult parse_canonical(const std::filesystem::path& path,
                            ParseMode mode = ParseMode::strict);
void write_canonical(std::ostream& out, const TrajectoryTable& table);
void write_canonical(const std::filesystem::path& path, const TrajectoryTable& table);

/// Column positions (1-based) of the whitespace separated obsmat layout.
struct ObsmatColumns {
  int frame = 1;
  int ped_id = 2;
  int x = 3;
  int y = 5;
  int min_columns = 8;
};

/// Frame stride of a scene: gcd of the gaps between successive distinct frames.
std::int64_t detect_frame_stride(std::vector<std::int64_t> frames);

TrajectoryTable import_obsmat(std::istream& in, std::string scene_id,
                              const ObsmatColumns& cols = {});
TrajectoryTable import_obsmat(const std::filesystem::path& path,
                              const ObsmatColumns& cols = {});

/// Scene name derived from an obsmat path: the parent directory when the
/// file is literally called obsmat.*, the file stem otherwise.
std::string obsmat_scene_name(const std::filesystem::path& path);

// Synthetic behavior generator.

enum class BehaviorFamily {
  standing,
  straight_walk,
  leader_follower,
  side_by_side,
  opposite_pass,
  congregate,
};

std::string to_string(BehaviorFamily f);
BehaviorFamily parse_family(std::string_view name);

struct SyntheticSpec {
  BehaviorFamily family = BehaviorFamily::straight_walk;
  int n_people = 1;
  int count = 1;               ///< number of groups
  double noise_sigma = 0.0;    ///< per-coordinate Gaussian noise
  double direction = 0.0;      ///< radians
  double gap = 1.0;            ///< inter-person spacing
  double speed = 0.4;          ///< scene units per frame
  int length = 20;             ///< frames per group
  double spread = 10.0;        ///< side of the square groups are placed in
  std::int64_t first_frame = 0;
  std::int64_t first_ped_id = 0;
  std::string scene_id = "synthetic";
};

/// Number of people a family produces by default.
int default_people(BehaviorFamily f);
void validate(const SyntheticSpec& spec);

/// Groups occupy disjoint consecutive frame ranges, so no window ever spans
/// two groups. Pure function of (spec, seed).
TrajectoryTable generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

/// Concatenates tables into one scene; throws on (frame, ped_id) clashes.
TrajectoryTable merge_tables(const std::vector<TrajectoryTable>& parts, std::string scene_id);

}  // namespace peddict
