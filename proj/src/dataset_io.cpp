#include "peddict/dataset_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

namespace peddict {

std::size_t TrajectoryTable::pedestrian_count() const {
  std::set<std::int64_t> ids;
  for (const auto& r : records) ids.insert(r.ped_id);
  return ids.size();
}

void sort_and_check(TrajectoryTable& table) {
  auto& recs = table.records;
  std::stable_sort(recs.begin(), recs.end(), [](const Record& a, const Record& b) {
    return a.frame != b.frame ? a.frame < b.frame : a.ped_id < b.ped_id;
  });
  for (std::size_t i = 1; i < recs.size(); ++i) {
    if (recs[i].frame == recs[i - 1].frame && recs[i].ped_id == recs[i - 1].ped_id)
      throw DataError("scene '" + table.scene_id + "': duplicate observation frame=" +
                      std::to_string(recs[i].frame) + " ped_id=" + std::to_string(recs[i].ped_id));
  }
}

void split_gaps(TrajectoryTable& table) {
  if (table.records.empty()) return;
  std::map<std::int64_t, std::vector<std::size_t>> by_ped;
  std::int64_t max_id = table.records.front().ped_id;
  for (std::size_t i = 0; i < table.records.size(); ++i) {
    by_ped[table.records[i].ped_id].push_back(i);
    max_id = std::max(max_id, table.records[i].ped_id);
  }
  std::int64_t next_id = max_id + 1;
  for (auto& [ped, idx] : by_ped) {
    // idx is already in frame order because records are sorted.
    std::int64_t current = ped;
    for (std::size_t k = 1; k < idx.size(); ++k) {
      if (table.records[idx[k]].frame != table.records[idx[k - 1]].frame + 1) current = next_id++;
      table.records[idx[k]].ped_id = current;
    }
  }
  sort_and_check(table);
}

namespace {

bool is_blank(std::string_view line) { return trim(line).empty(); }

}  // namespace

ParseResult parse_canonical(std::istream& in, std::string scene_id, ParseMode mode) {
  ParseResult result;
  result.table.scene_id = std::move(scene_id);
  std::string line;
  if (!std::getline(in, line) || trim(line) != kCanonicalHeader)
    throw DataError("line 1: expected header '" + std::string(kCanonicalHeader) + "'");

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_blank(line)) continue;
    ++result.input_rows;
    try {
      const auto fields = split(trim(line), ',');
      if (fields.size() != 4)
        throw DataError("expected 4 fields, got " + std::to_string(fields.size()));
      Record r{parse_int(fields[0]), parse_int(fields[1]), parse_double(fields[2]),
               parse_double(fields[3])};
      if (!std::isfinite(r.x) || !std::isfinite(r.y)) throw DataError("non-finite coordinate");
      result.table.records.push_back(r);
    } catch (const DataError& e) {
      if (mode == ParseMode::strict)
        throw DataError("line " + std::to_string(line_no) + ": " + e.what());
      result.rejected.push_back({line_no, e.what()});
    }
  }
  sort_and_check(result.table);
  split_gaps(result.table);
  return result;
}

ParseResult parse_canonical(const std::filesystem::path& path, ParseMode mode) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return parse_canonical(in, path.stem().string(), mode);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_canonical(std::ostream& out, const TrajectoryTable& table) {
  out << kCanonicalHeader << '\n';
  for (const auto& r : table.records)
    out << r.frame << ',' << r.ped_id << ',' << format_double(r.x) << ',' << format_double(r.y)
        << '\n';
}

void write_canonical(const std::filesystem::path& path, const TrajectoryTable& table) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  write_canonical(out, table);
}

std::int64_t detect_frame_stride(std::vector<std::int64_t> frames) {
  std::sort(frames.begin(), frames.end());
  frames.erase(std::unique(frames.begin(), frames.end()), frames.end());
  std::int64_t g = 0;
  for (std::size_t i = 1; i < frames.size(); ++i) g = std::gcd(g, frames[i] - frames[i - 1]);
  return g == 0 ? 1 : g;
}

TrajectoryTable import_obsmat(std::istream& in, std::string scene_id, const ObsmatColumns& cols) {
  const int needed = std::max({cols.min_columns, cols.frame, cols.ped_id, cols.x, cols.y});
  TrajectoryTable table;
  table.scene_id = std::move(scene_id);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_blank(line)) continue;
    std::istringstream fields(line);
    std::vector<std::string> tok;
    for (std::string t; fields >> t;) tok.push_back(t);
    if (static_cast<int>(tok.size()) < needed)
      throw DataError("line " + std::to_string(line_no) + ": expected at least " +
                      std::to_string(needed) + " columns, got " + std::to_string(tok.size()));
    try {
      const double frame = parse_double(tok[cols.frame - 1]);
      const double ped = parse_double(tok[cols.ped_id - 1]);
      if (frame != std::round(frame) || ped != std::round(ped))
        throw DataError("frame and id must be integral");
      table.records.push_back({static_cast<std::int64_t>(std::llround(frame)),
                               static_cast<std::int64_t>(std::llround(ped)),
                               parse_double(tok[cols.x - 1]), parse_double(tok[cols.y - 1])});
    } catch (const DataError& e) {
      throw DataError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!table.records.empty()) {
    std::vector<std::int64_t> frames;
    frames.reserve(table.records.size());
    for (const auto& r : table.records) frames.push_back(r.frame);
    const auto stride = detect_frame_stride(frames);
    const auto first = *std::min_element(frames.begin(), frames.end());
    for (auto& r : table.records) r.frame = (r.frame - first) / stride;
  }
  sort_and_check(table);
  split_gaps(table);
  return table;
}

std::string obsmat_scene_name(const std::filesystem::path& path) {
  const auto stem = path.stem().string();
  if (stem == "obsmat" && path.has_parent_path() && !path.parent_path().filename().empty())
    return path.parent_path().filename().string();
  return stem;
}

TrajectoryTable import_obsmat(const std::filesystem::path& path, const ObsmatColumns& cols) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return import_obsmat(in, obsmat_scene_name(path), cols);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

TrajectoryTable merge_tables(const std::vector<TrajectoryTable>& parts, std::string scene_id) {
  TrajectoryTable out;
  out.scene_id = std::move(scene_id);
  for (const auto& p : parts)
    out.records.insert(out.records.end(), p.records.begin(), p.records.end());
  sort_and_check(out);
  return out;
}

}  // namespace peddict
