#include "peddict/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

namespace peddict {

Bounds table_bounds(const TrajectoryTable& table) {
  if (table.records.empty()) return {};
  Bounds b{table.records.front().x, table.records.front().y, table.records.front().x, table.records.front().y};
  for (const auto& r : table.records) {
    b.xmin = std::min(b.xmin, r.x);
    b.xmax = std::max(b.xmax, r.x);
    b.ymin = std::min(b.ymin, r.y);
    b.ymax = std::max(b.ymax, r.y);
  }
  return b;
}

std::int64_t BehaviorMap::total() const {
  std::int64_t s = 0;
  for (const auto c : counts) s += c;
  return s;
}

std::int64_t BehaviorMap::max_count() const {
  return counts.empty() ? 0 : *std::max_element(counts.begin(), counts.end());
}

BehaviorMap behavior_map(const std::vector<LabeledSegment>& segments, const std::string& scene, int n,
                         const std::vector<int>& clusters, const Bounds& bounds, const GridConfig& grid) {
  if (grid.width < 1 || grid.height < 1) throw ConfigError("behavior map grid must be at least 1x1");
  BehaviorMap map;
  map.scene_id = scene;
  map.n = n;
  map.clusters = clusters;
  map.width = grid.width;
  map.height = grid.height;
  map.origin = {bounds.xmin, bounds.ymin};
  map.cell_size = std::max((bounds.xmax - bounds.xmin) / grid.width, (bounds.ymax - bounds.ymin) / grid.height);
  if (!(map.cell_size > 0.0)) map.cell_size = 1.0;
  map.counts.assign(static_cast<std::size_t>(grid.width) * grid.height, 0);

  // Slack for positions that went through normalize/denormalize.
  const double slack = 1e-9 * map.cell_size * std::max(grid.width, grid.height);
  const double left = map.origin.x - slack;
  const double bottom = map.origin.y - slack;
  const double right = map.origin.x + map.cell_size * grid.width + slack;
  const double top = map.origin.y + map.cell_size * grid.height + slack;
  for (const auto& ls : segments) {
    const auto& seg = *ls.segment;
    if (seg.scene_id != scene || seg.n != n) continue;
    if (std::find(clusters.begin(), clusters.end(), ls.cluster) == clusters.end()) continue;
    for (const auto& p : seg.positions) {
      if (p.x < left || p.x > right || p.y < bottom || p.y > top) ++map.clamped;
      const int cx = std::clamp(static_cast<int>(std::floor((p.x - map.origin.x) / map.cell_size)), 0, grid.width - 1);
      const int cy = std::clamp(static_cast<int>(std::floor((p.y - map.origin.y) / map.cell_size)), 0, grid.height - 1);
      ++map.counts[static_cast<std::size_t>(cy) * grid.width + cx];
    }
  }
  if (map.clamped > 0)
    log_warn("behavior map " + scene + " n=" + std::to_string(n) + ": " + std::to_string(map.clamped) +
             " positions outside the scene bounds were clamped");
  return map;
}

std::int64_t BehaviorHistogram::total() const {
  std::int64_t s = 0;
  for (const auto& [c, v] : counts) s += v;
  return s;
}

BehaviorHistogram behavior_histogram(const std::vector<Assignment>& assignments,
                                     const std::optional<std::string>& scene, int n, int k) {
  BehaviorHistogram h;
  h.scene_id = scene.value_or("all");
  h.n = n;
  for (int c = 0; c < k; ++c) h.counts[c] = 0;
  for (const auto& a : assignments) {
    if (a.n != n || (scene && a.scene_id != *scene)) continue;
    ++h.counts[a.cluster];
  }
  return h;
}

BehaviorHistogram merge(const BehaviorHistogram& a, const BehaviorHistogram& b) {
  if (a.n != b.n) throw DataError("cannot merge histograms of different pedestrian counts");
  BehaviorHistogram out = a;
  out.scene_id = a.scene_id + "+" + b.scene_id;
  for (const auto& [c, v] : b.counts) out.counts[c] += v;
  return out;
}

void write_map_csv(std::ostream& out, const BehaviorMap& map) {
  out << "cell_x,cell_y,count\n";
  for (int cy = 0; cy < map.height; ++cy)
    for (int cx = 0; cx < map.width; ++cx) out << cx << ',' << cy << ',' << map.at(cx, cy) << '\n';
}

void write_histogram_csv(std::ostream& out, const BehaviorHistogram& hist) {
  out << "cluster_id,count\n";
  for (const auto& [c, v] : hist.counts) out << c << ',' << v << '\n';
}

namespace {

struct Rgb {
  int r, g, b;
};

constexpr Rgb kPalette[] = {{31, 119, 180}, {255, 127, 14}, {44, 160, 44},  {214, 39, 40},
                            {148, 103, 189}, {140, 86, 75}, {227, 119, 194}, {188, 189, 34}};

Rgb palette(std::size_t i) { return kPalette[i % std::size(kPalette)]; }

std::string hex(Rgb c) {
  char buf[8];
  std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", c.r, c.g, c.b);
  return buf;
}

Rgb ramp(Rgb hue, double t) {
  auto mix = [t](int hi) { return static_cast<int>(std::lround(255.0 + (hi - 255.0) * t)); };
  return {mix(hue.r), mix(hue.g), mix(hue.b)};
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (const char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

std::string cluster_list(const std::vector<int>& clusters) {
  std::string s;
  for (std::size_t i = 0; i < clusters.size(); ++i) s += (i ? "," : "") + std::to_string(clusters[i]);
  return s;
}

constexpr double kCell = 10.0;
constexpr double kMargin = 20.0;
constexpr double kLegend = 60.0;

void map_cells(std::ostream& svg, const BehaviorMap& map, Rgb hue, double opacity) {
  const double max = static_cast<double>(map.max_count());
  svg << "<g class=\"map\" data-clusters=\"" << cluster_list(map.clusters) << "\" fill-opacity=\"" << num(opacity)
      << "\">\n";
  for (int cy = 0; cy < map.height; ++cy) {
    for (int cx = 0; cx < map.width; ++cx) {
      const auto c = map.at(cx, cy);
      if (c == 0) continue;
      const double x = kMargin + cx * kCell;
      const double y = kMargin + (map.height - 1 - cy) * kCell;
      svg << "<rect x=\"" << num(x) << "\" y=\"" << num(y) << "\" width=\"" << num(kCell) << "\" height=\""
          << num(kCell) << "\" fill=\"" << hex(ramp(hue, static_cast<double>(c) / max)) << "\" data-count=\"" << c
          << "\"/>\n";
    }
  }
  svg << "</g>\n";
}

void map_legend(std::ostream& svg, const BehaviorMap& map, Rgb hue, std::size_t index) {
  const double x = kMargin + map.width * kCell + 15.0;
  const double y = kMargin + index * 70.0;
  const std::string id = "ramp" + std::to_string(index);
  svg << "<defs><linearGradient id=\"" << id << "\" x1=\"0\" y1=\"1\" x2=\"0\" y2=\"0\">"
      << "<stop offset=\"0\" stop-color=\"#ffffff\"/><stop offset=\"1\" stop-color=\"" << hex(hue)
      << "\"/></linearGradient></defs>\n";
  svg << "<g class=\"legend\"><rect x=\"" << num(x) << "\" y=\"" << num(y) << "\" width=\"12\" height=\"50\" fill=\"url(#"
      << id << ")\" stroke=\"#333333\"/>\n";
  svg << "<text x=\"" << num(x + 16) << "\" y=\"" << num(y + 8) << "\" font-size=\"9\" class=\"legend-max\">"
      << map.max_count() << "</text>\n";
  svg << "<text x=\"" << num(x + 16) << "\" y=\"" << num(y + 50) << "\" font-size=\"9\">0</text>\n";
  svg << "<text x=\"" << num(x) << "\" y=\"" << num(y + 62) << "\" font-size=\"9\">C" << cluster_list(map.clusters)
      << "</text></g>\n";
}

std::string map_document(const std::vector<BehaviorMap>& maps, double opacity) {
  const auto& first = maps.front();
  const double w = kMargin * 2 + first.width * kCell + kLegend + 30.0;
  const double h = std::max(kMargin * 2 + first.height * kCell, kMargin + 70.0 * maps.size() + 10.0);
  std::ostringstream svg;
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(w) << "\" height=\"" << num(h)
      << "\" viewBox=\"0 0 " << num(w) << ' ' << num(h) << "\">\n";
  svg << "<title>" << xml_escape(first.scene_id) << " n=" << first.n << "</title>\n";
  svg << "<rect class=\"background\" x=\"" << num(kMargin) << "\" y=\"" << num(kMargin) << "\" width=\""
      << num(first.width * kCell) << "\" height=\"" << num(first.height * kCell)
      << "\" fill=\"#ffffff\" stroke=\"#999999\"/>\n";
  for (std::size_t i = 0; i < maps.size(); ++i) map_cells(svg, maps[i], palette(i), opacity);
  for (std::size_t i = 0; i < maps.size(); ++i) map_legend(svg, maps[i], palette(i), i);
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace

std::string render_svg(const BehaviorMap& map) { return map_document({map}, 1.0); }

std::string render_overlay_svg(const std::vector<BehaviorMap>& maps) {
  if (maps.empty()) throw DataError("overlay needs at least one map");
  for (const auto& m : maps)
    if (m.width != maps.front().width || m.height != maps.front().height)
      throw DataError("overlay maps must share a grid");
  return map_document(maps, 0.5);
}

std::string render_svg(const BehaviorHistogram& hist) {
  constexpr double kBar = 18.0;
  constexpr double kPlot = 200.0;
  const double w = kMargin * 2 + kBar * std::max<std::size_t>(hist.counts.size(), 1);
  const double h = kPlot + kMargin * 2 + 30.0;
  std::int64_t max = 0;
  for (const auto& [c, v] : hist.counts) max = std::max(max, v);

  std::ostringstream svg;
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(w) << "\" height=\"" << num(h)
      << "\" viewBox=\"0 0 " << num(w) << ' ' << num(h) << "\">\n";
  svg << "<title>" << xml_escape(hist.scene_id) << " n=" << hist.n << "</title>\n";
  svg << "<text x=\"" << num(kMargin) << "\" y=\"14\" font-size=\"11\">" << xml_escape(hist.scene_id)
      << " n=" << hist.n << "</text>\n";
  const double base = kMargin + kPlot;
  svg << "<line x1=\"" << num(kMargin) << "\" y1=\"" << num(base) << "\" x2=\"" << num(w - kMargin) << "\" y2=\""
      << num(base) << "\" stroke=\"#333333\"/>\n";
  std::size_t i = 0;
  for (const auto& [c, v] : hist.counts) {
    const double bh = max > 0 ? kPlot * static_cast<double>(v) / static_cast<double>(max) : 0.0;
    const double x = kMargin + i * kBar;
    svg << "<rect class=\"bar\" data-cluster=\"" << c << "\" data-count=\"" << v << "\" x=\"" << num(x + 2)
        << "\" y=\"" << num(base - bh) << "\" width=\"" << num(kBar - 4) << "\" height=\"" << num(bh)
        << "\" fill=\"" << hex(palette(0)) << "\"/>\n";
    svg << "<text x=\"" << num(x + kBar / 2) << "\" y=\"" << num(base + 12) << "\" font-size=\"8\" text-anchor=\"middle\">C"
        << c << "</text>\n";
    ++i;
  }
  svg << "</svg>\n";
  return svg.str();
}

std::map<int, std::vector<std::size_t>> sample_cluster_members(const std::vector<LabeledSegment>& segments, int m,
                                                               std::uint64_t seed) {
  std::map<int, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < segments.size(); ++i) members[segments[i].cluster].push_back(i);
  for (auto& [cluster, idx] : members) {
    if (static_cast<int>(idx.size()) <= m) continue;
    std::mt19937_64 rng(derive_seed(seed, {static_cast<std::uint64_t>(cluster)}));
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(static_cast<std::size_t>(std::max(m, 0)));
    std::sort(idx.begin(), idx.end());
  }
  return members;
}

std::map<int, std::string> sample_cluster_plots(const std::vector<LabeledSegment>& segments, int m,
                                                std::uint64_t seed) {
  constexpr double kPanel = 160.0;
  constexpr double kPad = 14.0;
  std::map<int, std::string> out;
  for (const auto& [cluster, idx] : sample_cluster_members(segments, m, seed)) {
    const std::size_t cols = std::min<std::size_t>(5, std::max<std::size_t>(idx.size(), 1));
    const std::size_t rows = (idx.size() + cols - 1) / cols;
    const double w = cols * kPanel;
    const double h = std::max<std::size_t>(rows, 1) * kPanel;
    std::ostringstream svg;
    svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(w) << "\" height=\"" << num(h)
        << "\" viewBox=\"0 0 " << num(w) << ' ' << num(h) << "\">\n";
    svg << "<title>cluster " << cluster << "</title>\n";
    svg << "<defs>";
    for (std::size_t p = 0; p < 3; ++p)
      svg << "<marker id=\"arrow" << p << "\" viewBox=\"0 0 10 10\" refX=\"9\" refY=\"5\" markerWidth=\"6\" "
          << "markerHeight=\"6\" orient=\"auto\"><path d=\"M0,0 L10,5 L0,10 z\" fill=\"" << hex(palette(p))
          << "\"/></marker>";
    svg << "</defs>\n";
    for (std::size_t s = 0; s < idx.size(); ++s) {
      const auto& seg = *segments[idx[s]].segment;
      const double px = (s % cols) * kPanel;
      const double py = static_cast<double>(s / cols) * kPanel;
      double xmin = seg.positions.front().x, xmax = xmin, ymin = seg.positions.front().y, ymax = ymin;
      for (const auto& p : seg.positions) {
        xmin = std::min(xmin, p.x);
        xmax = std::max(xmax, p.x);
        ymin = std::min(ymin, p.y);
        ymax = std::max(ymax, p.y);
      }
      const double span = std::max({xmax - xmin, ymax - ymin, 1e-9});
      const double scale = (kPanel - 2 * kPad) / span;
      const double cx = (xmin + xmax) / 2.0;
      const double cy = (ymin + ymax) / 2.0;
      auto sx = [&](double x) { return px + kPanel / 2 + (x - cx) * scale; };
      auto sy = [&](double y) { return py + kPanel / 2 - (y - cy) * scale; };
      svg << "<g class=\"sample\" data-segment=\"" << xml_escape(seg.id()) << "\">\n";
      svg << "<rect x=\"" << num(px + 1) << "\" y=\"" << num(py + 1) << "\" width=\"" << num(kPanel - 2)
          << "\" height=\"" << num(kPanel - 2) << "\" fill=\"none\" stroke=\"#cccccc\"/>\n";
      for (int person = 0; person < seg.n; ++person) {
        const auto colour = hex(palette(static_cast<std::size_t>(person)));
        svg << "<polyline class=\"person\" fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.5\" "
            << "marker-end=\"url(#arrow" << (person % 3) << ")\" points=\"";
        for (int t = 0; t < seg.T; ++t) {
          const auto p = seg.at(person, t);
          svg << (t ? " " : "") << num(sx(p.x)) << ',' << num(sy(p.y));
        }
        svg << "\"/>\n";
        const auto p0 = seg.at(person, 0);
        svg << "<circle cx=\"" << num(sx(p0.x)) << "\" cy=\"" << num(sy(p0.y)) << "\" r=\"2.5\" fill=\"" << colour
            << "\"/>\n";
      }
      svg << "</g>\n";
    }
    svg << "</svg>\n";
    out[cluster] = svg.str();
  }
  return out;
}

}  // namespace peddict
