#include "peddict/trajectory_prep.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

namespace peddict {

void SegmentationConfig::validate() const {
  if (T < 2) throw ConfigError("T must be >= 2");
  if (delta_T < 1) throw ConfigError("delta_T must be >= 1");
  if (n_max < 1) throw ConfigError("n_max must be >= 1");
  if (!(alpha > 0.0)) throw ConfigError("alpha must be > 0");
}

std::string Segment::id() const {
  std::string s = scene_id + ":" + std::to_string(start_frame) + ":";
  for (std::size_t i = 0; i < ped_ids.size(); ++i) {
    if (i) s += ';';
    s += std::to_string(ped_ids[i]);
  }
  s += ":" + format_double(rotation_deg);
  return s;
}

void Segment::validate() const {
  if (n < 1 || T < 1) throw DataError("segment with empty shape");
  if (static_cast<int>(ped_ids.size()) != n) throw DataError("segment ped_ids size != n");
  if (positions.size() != static_cast<std::size_t>(n) * T)
    throw DataError("segment positions size != n * T");
  for (std::size_t i = 1; i < ped_ids.size(); ++i)
    if (ped_ids[i] <= ped_ids[i - 1]) throw DataError("segment ped_ids must be strictly ascending");
}

std::pair<TrajectoryTable, NormParams> normalize_scene(const TrajectoryTable& table) {
  if (table.records.empty()) throw DataError("cannot normalize empty scene '" + table.scene_id + "'");
  double xmin = table.records.front().x, xmax = xmin;
  double ymin = table.records.front().y, ymax = ymin;
  for (const auto& r : table.records) {
    xmin = std::min(xmin, r.x);
    xmax = std::max(xmax, r.x);
    ymin = std::min(ymin, r.y);
    ymax = std::max(ymax, r.y);
  }
  NormParams params;
  params.center = {(xmin + xmax) / 2.0, (ymin + ymax) / 2.0};
  params.half_extent = std::max(xmax - xmin, ymax - ymin) / 2.0;
  if (!(params.half_extent > 0.0)) {
    log_warn("scene '" + table.scene_id + "' has a degenerate bounding box; using unit scale");
    params.half_extent = 1.0;
  }
  TrajectoryTable out = table;
  for (auto& r : out.records) {
    const Point2 p = params.normalize({r.x, r.y});
    r.x = p.x;
    r.y = p.y;
  }
  return {std::move(out), params};
}

std::vector<std::vector<std::int64_t>> subgroup(std::vector<PedPosition> peds, int n) {
  std::vector<std::vector<std::int64_t>> groups;
  if (n < 1 || static_cast<int>(peds.size()) < n) return groups;
  std::sort(peds.begin(), peds.end(),
            [](const PedPosition& a, const PedPosition& b) { return a.ped_id < b.ped_id; });

  std::vector<std::pair<double, std::int64_t>> order;
  for (const auto& self : peds) {
    order.clear();
    for (const auto& other : peds)
      if (other.ped_id != self.ped_id)
        order.emplace_back(squared_distance(self.pos, other.pos), other.ped_id);
    std::sort(order.begin(), order.end());
    std::vector<std::int64_t> group{self.ped_id};
    for (int k = 0; k < n - 1; ++k) group.push_back(order[k].second);
    std::sort(group.begin(), group.end());
    groups.push_back(std::move(group));
  }
  std::sort(groups.begin(), groups.end());
  groups.erase(std::unique(groups.begin(), groups.end()), groups.end());
  return groups;
}

namespace {

struct Track {
  std::vector<std::int64_t> frames;  // ascending, unique
  std::vector<Point2> pos;

  /// Index of `start` when the track covers [start, start + len) without gaps.
  std::ptrdiff_t covers(std::int64_t start, int len) const {
    const auto it = std::lower_bound(frames.begin(), frames.end(), start);
    if (it == frames.end() || *it != start) return -1;
    const auto idx = it - frames.begin();
    const auto last = idx + len - 1;
    if (last >= static_cast<std::ptrdiff_t>(frames.size())) return -1;
    return frames[last] == start + len - 1 ? idx : -1;
  }
};

}  // namespace

std::vector<Segment> extract_segments(const TrajectoryTable& table, const SegmentationConfig& cfg, int n) {
  cfg.validate();
  std::vector<Segment> out;
  if (table.records.empty() || n < 1) return out;

  std::map<std::int64_t, Track> tracks;
  std::map<std::int64_t, std::vector<std::int64_t>> peds_at;
  for (const auto& r : table.records) {
    auto& tr = tracks[r.ped_id];
    tr.frames.push_back(r.frame);
    tr.pos.push_back({r.x, r.y});
    peds_at[r.frame].push_back(r.ped_id);
  }
  const std::int64_t fmin = peds_at.begin()->first;
  const std::int64_t fmax = peds_at.rbegin()->first;

  std::vector<PedPosition> present;
  std::map<std::int64_t, std::ptrdiff_t> start_index;
  for (std::int64_t s = fmin; s + cfg.T - 1 <= fmax; s += cfg.delta_T) {
    const auto at = peds_at.find(s);
    if (at == peds_at.end()) continue;
    present.clear();
    start_index.clear();
    for (const auto ped : at->second) {
      const auto& tr = tracks.at(ped);
      const auto idx = tr.covers(s, cfg.T);
      if (idx < 0) continue;
      present.push_back({ped, tr.pos[idx]});
      start_index[ped] = idx;
    }
    if (static_cast<int>(present.size()) < n) continue;
    for (const auto& group : subgroup(present, n)) {
      Segment seg;
      seg.scene_id = table.scene_id;
      seg.start_frame = s;
      seg.n = n;
      seg.T = cfg.T;
      seg.ped_ids = group;
      seg.positions.reserve(static_cast<std::size_t>(n) * cfg.T);
      for (const auto ped : group) {
        const auto& tr = tracks.at(ped);
        const auto idx = start_index.at(ped);
        seg.positions.insert(seg.positions.end(), tr.pos.begin() + idx, tr.pos.begin() + idx + cfg.T);
      }
      out.push_back(std::move(seg));
    }
  }
  return out;
}

Segment rotate_segment(const Segment& seg, double degrees) {
  const double rad = degrees * std::numbers::pi / 180.0;
  const double c = std::cos(rad);
  const double s = std::sin(rad);
  Segment out = seg;
  out.rotation_deg = seg.rotation_deg + degrees;
  for (auto& p : out.positions) p = {c * p.x - s * p.y, s * p.x + c * p.y};
  return out;
}

std::vector<Segment> rotate_augment(const std::vector<Segment>& segments,
                                    const std::vector<double>& angles) {
  std::vector<Segment> out;
  out.reserve(segments.size() * (1 + angles.size()));
  out.insert(out.end(), segments.begin(), segments.end());
  for (const double a : angles)
    for (const auto& seg : segments) out.push_back(rotate_segment(seg, a));
  return out;
}

FeatureVector assemble_features(const Segment& seg, double alpha) {
  seg.validate();
  for (const auto& p : seg.positions)
    if (!std::isfinite(p.x) || !std::isfinite(p.y))
      throw DataError("segment " + seg.id() + " has a non-finite position");
  const int n = seg.n;
  const int T = seg.T;
  FeatureVector fv;
  fv.n = n;
  fv.values.reserve(feature_length(n, T));

  for (int i = 0; i < n; ++i) {
    for (int t = 1; t < T; ++t) {
      const Point2 v = seg.at(i, t) - seg.at(i, t - 1);
      fv.values.push_back(alpha * v.x);
      fv.values.push_back(alpha * v.y);
    }
    // Neighbours by ascending mean distance over the window, ties by ped_id.
    std::vector<std::pair<double, int>> neighbours;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      double sum = 0.0;
      for (int t = 0; t < T; ++t) sum += distance(seg.at(i, t), seg.at(j, t));
      neighbours.emplace_back(sum / T, j);
    }
    std::sort(neighbours.begin(), neighbours.end(), [&](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first < b.first;
      return seg.ped_ids[a.second] < seg.ped_ids[b.second];
    });
    for (const auto& [mean_dist, j] : neighbours) {
      for (int t = 1; t < T; ++t) {
        const Point2 d = seg.at(i, t) - seg.at(j, t - 1);
        fv.values.push_back(d.x);
        fv.values.push_back(d.y);
      }
    }
  }
  return fv;
}

Segment slice_segment(const Segment& seg, int first, int len) {
  if (first < 0 || len < 1 || first + len > seg.T) throw DataError("slice outside segment window");
  Segment out = seg;
  out.start_frame = seg.start_frame + first;
  out.T = len;
  out.positions.clear();
  for (int i = 0; i < seg.n; ++i)
    for (int t = first; t < first + len; ++t) out.positions.push_back(seg.at(i, t));
  return out;
}

// ---------------------------------------------------------------------------
// Segment dump

namespace {

constexpr std::string_view kSegmentsMagic = "peddict/segments/v1";

std::string join_ids(const std::vector<std::int64_t>& ids) {
  std::string s;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) s += ';';
    s += std::to_string(ids[i]);
  }
  return s;
}

std::vector<double> parse_double_list(std::string_view s) {
  std::vector<double> out;
  if (trim(s).empty()) return out;
  for (auto f : split(s, ';')) out.push_back(parse_double(f));
  return out;
}

}  // namespace

void write_segments(std::ostream& out, const std::vector<SegmentRecord>& records) {
  out << kSegmentsMagic << '\n' << "count " << records.size() << '\n';
  std::vector<double> flat;
  for (const auto& rec : records) {
    const auto& s = rec.segment;
    if (s.scene_id.find_first_of(",\n") != std::string::npos)
      throw DataError("scene id may not contain ',' or newlines: " + s.scene_id);
    flat.clear();
    for (const auto& p : s.positions) {
      flat.push_back(p.x);
      flat.push_back(p.y);
    }
    out << s.scene_id << ',' << s.start_frame << ',' << s.n << ',' << join_ids(s.ped_ids) << ','
        << s.T << ',' << format_double(s.rotation_deg) << ',' << join_doubles(flat, ';') << ','
        << join_doubles(rec.features.values, ';') << '\n';
  }
}

std::vector<SegmentRecord> read_segments(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || trim(line) != kSegmentsMagic)
    throw FormatError("expected header '" + std::string(kSegmentsMagic) + "'");
  if (!std::getline(in, line) || line.rfind("count ", 0) != 0)
    throw FormatError("segments: missing count line");
  const auto count = static_cast<std::size_t>(parse_int(std::string_view(line).substr(6)));
  std::vector<SegmentRecord> out;
  out.reserve(count);
  std::size_t line_no = 2;
  while (out.size() < count && std::getline(in, line)) {
    ++line_no;
    const auto f = split(trim(line), ',');
    if (f.size() != 8)
      throw FormatError("segments line " + std::to_string(line_no) + ": expected 8 fields");
    try {
      SegmentRecord rec;
      auto& s = rec.segment;
      s.scene_id = std::string(f[0]);
      s.start_frame = parse_int(f[1]);
      s.n = static_cast<int>(parse_int(f[2]));
      for (auto id : split(f[3], ';')) s.ped_ids.push_back(parse_int(id));
      s.T = static_cast<int>(parse_int(f[4]));
      s.rotation_deg = parse_double(f[5]);
      const auto flat = parse_double_list(f[6]);
      if (flat.size() % 2 != 0) throw DataError("odd coordinate count");
      for (std::size_t i = 0; i < flat.size(); i += 2) s.positions.push_back({flat[i], flat[i + 1]});
      s.validate();
      rec.features.values = parse_double_list(f[7]);
      rec.features.n = rec.features.values.empty() ? 0 : s.n;
      if (!rec.features.values.empty() && rec.features.values.size() != feature_length(s.n, s.T))
        throw DataError("feature length does not match n and T");
      out.push_back(std::move(rec));
    } catch (const FormatError&) {
      throw;
    } catch (const DataError& e) {
      throw FormatError("segments line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (out.size() != count)
    throw FormatError("segments: truncated file, expected " + std::to_string(count) + " rows, got " +
                      std::to_string(out.size()));
  return out;
}

void write_segments(const std::filesystem::path& path, const std::vector<SegmentRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  write_segments(out, records);
}

std::vector<SegmentRecord> read_segments(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return read_segments(in);
}

}  // namespace peddict
