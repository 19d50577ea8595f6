#include "peddict/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>

namespace peddict {

void ClusteringConfig::validate() const {
  for (const auto& [n, k] : k_per_n)
    if (k < 1) throw ConfigError("k for n=" + std::to_string(n) + " must be >= 1");
  if (max_iters < 1) throw ConfigError("k-means max_iters must be >= 1");
  if (restarts < 1) throw ConfigError("k-means restarts must be >= 1");
}

double inertia(const std::vector<Point2>& points, const std::vector<Point2>& centroids,
               const std::vector<int>& assignments) {
  double s = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) s += squared_distance(points[i], centroids[assignments[i]]);
  return s;
}

int nearest_centroid(Point2 p, const std::vector<Point2>& centroids) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    const double d = squared_distance(p, centroids[c]);
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(c);
    }
  }
  return best;
}

namespace {

std::vector<Point2> plus_plus_seeds(const std::vector<Point2>& points, int k, std::mt19937_64& rng) {
  const std::size_t m = points.size();
  std::vector<Point2> centroids;
  centroids.reserve(k);
  std::uniform_int_distribution<std::size_t> first(0, m - 1);
  centroids.push_back(points[first(rng)]);
  std::vector<double> d2(m);
  for (std::size_t i = 0; i < m; ++i) d2[i] = squared_distance(points[i], centroids[0]);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  while (static_cast<int>(centroids.size()) < k) {
    double total = 0.0;
    for (const double d : d2) total += d;
    std::size_t pick = 0;
    if (total > 0.0) {
      const double r = unit(rng) * total;
      double acc = 0.0;
      pick = m - 1;
      for (std::size_t i = 0; i < m; ++i) {
        acc += d2[i];
        if (acc > r && d2[i] > 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      // All points coincide with a centroid already.
      pick = std::uniform_int_distribution<std::size_t>(0, m - 1)(rng);
    }
    centroids.push_back(points[pick]);
    for (std::size_t i = 0; i < m; ++i) d2[i] = std::min(d2[i], squared_distance(points[i], points[pick]));
  }
  return centroids;
}

KMeansResult lloyd(const std::vector<Point2>& points, int k, int max_iters, std::mt19937_64& rng) {
  const std::size_t m = points.size();
  KMeansResult res;
  res.centroids = plus_plus_seeds(points, k, rng);
  res.assignments.assign(m, -1);
  for (int it = 0; it < max_iters; ++it) {
    bool changed = false;
    for (std::size_t i = 0; i < m; ++i) {
      const int c = nearest_centroid(points[i], res.centroids);
      if (c != res.assignments[i]) {
        res.assignments[i] = c;
        changed = true;
      }
    }
    res.iterations = it + 1;
    if (!changed) {
      res.inertia_trace.push_back(inertia(points, res.centroids, res.assignments));
      break;
    }

    std::vector<Point2> sum(k);
    std::vector<std::size_t> cnt(k, 0);
    for (std::size_t i = 0; i < m; ++i) {
      sum[res.assignments[i]] = sum[res.assignments[i]] + points[i];
      ++cnt[res.assignments[i]];
    }
    for (int c = 0; c < k; ++c) {
      if (cnt[c] > 0) {
        res.centroids[c] = (1.0 / static_cast<double>(cnt[c])) * sum[c];
        continue;
      }
      // Empty cluster: move it onto the point worst served by its centroid.
      std::size_t far = 0;
      double far_d = -1.0;
      for (std::size_t i = 0; i < m; ++i) {
        const double d = squared_distance(points[i], res.centroids[res.assignments[i]]);
        if (d > far_d && cnt[res.assignments[i]] > 1) {
          far_d = d;
          far = i;
        }
      }
      --cnt[res.assignments[far]];
      res.assignments[far] = c;
      cnt[c] = 1;
      res.centroids[c] = points[far];
    }
    res.inertia_trace.push_back(inertia(points, res.centroids, res.assignments));
  }
  // Final assignment to the final centroids.
  for (std::size_t i = 0; i < m; ++i) res.assignments[i] = nearest_centroid(points[i], res.centroids);
  res.inertia = inertia(points, res.centroids, res.assignments);
  return res;
}

}  // namespace

KMeansResult kmeans(const std::vector<Point2>& points, int k, const ClusteringConfig& cfg) {
  cfg.validate();
  if (k < 1) throw ConfigError("k must be >= 1");
  if (static_cast<std::size_t>(k) > points.size())
    throw DataError("k-means: k=" + std::to_string(k) + " exceeds point count " + std::to_string(points.size()));
  for (const auto& p : points)
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw DataError("k-means: non-finite point");

  std::vector<KMeansResult> runs(cfg.restarts);
  parallel_for(runs.size(), [&](std::size_t r) {
    std::seed_seq seq{static_cast<std::uint64_t>(cfg.seed), static_cast<std::uint64_t>(r),
                      static_cast<std::uint64_t>(k)};
    std::mt19937_64 rng(seq);
    runs[r] = lloyd(points, k, cfg.max_iters, rng);
    runs[r].restart = static_cast<int>(r);
  });
  std::size_t best = 0;
  for (std::size_t r = 1; r < runs.size(); ++r)
    if (runs[r].inertia < runs[best].inertia) best = r;
  return std::move(runs[best]);
}

const std::vector<Cluster>& BehaviorDictionary::clusters(int n) const {
  const auto it = groups.find(n);
  if (it == groups.end()) throw DataError("behavior dictionary has no group for n=" + std::to_string(n));
  return it->second;
}

std::vector<Point2> BehaviorDictionary::centroids(int n) const {
  std::vector<Point2> out;
  for (const auto& c : clusters(n)) out.push_back(c.centroid);
  return out;
}

BehaviorDictionary build_dictionary(std::map<int, EmbeddingTable>& embeddings, const ClusteringConfig& cfg) {
  cfg.validate();
  std::string missing;
  for (const auto& [n, k] : cfg.k_per_n)
    if (!embeddings.count(n)) missing += (missing.empty() ? "" : ", ") + std::to_string(n);
  if (!missing.empty()) throw DataError("no embedding for pedestrian group(s) n=" + missing);

  BehaviorDictionary dict;
  for (const auto& [n, k] : cfg.k_per_n) {
    auto& emb = embeddings.at(n);
    const auto pts = emb.coords();
    const auto km = kmeans(pts, k, cfg);
    auto& clusters = dict.groups[n];
    for (int c = 0; c < k; ++c) clusters.push_back({c, km.centroids[c], "", 0});
    for (std::size_t i = 0; i < pts.size(); ++i) {
      emb.rows[i].cluster = km.assignments[i];
      ++clusters[km.assignments[i]].count;
    }
    log_info("n=" + std::to_string(n) + ": k-means k=" + std::to_string(k) + " inertia " +
             format_double(km.inertia) + " (restart " + std::to_string(km.restart) + ")");
  }
  return dict;
}

int assign_cluster(Point2 coord, const BehaviorDictionary& dict, int n) {
  const auto& cl = dict.clusters(n);
  if (cl.empty()) throw DataError("behavior dictionary group n=" + std::to_string(n) + " is empty");
  int best = cl.front().cluster_id;
  double best_d = std::numeric_limits<double>::infinity();
  for (const auto& c : cl) {
    const double d = squared_distance(coord, c.centroid);
    if (d < best_d || (d == best_d && c.cluster_id < best)) {
      best_d = d;
      best = c.cluster_id;
    }
  }
  return best;
}

BehaviorDictionary apply_labels(BehaviorDictionary dict, std::istream& labels) {
  std::string line;
  std::size_t row = 0;
  while (std::getline(labels, line)) {
    ++row;
    const auto text = trim(line);
    if (text.empty()) continue;
    if (row == 1 && text == "n,cluster_id,label") continue;
    const auto first = text.find(',');
    const auto second = first == std::string_view::npos ? first : text.find(',', first + 1);
    if (second == std::string_view::npos)
      throw DataError("labels row " + std::to_string(row) + ": expected n,cluster_id,label");
    int n = 0;
    int id = 0;
    try {
      n = static_cast<int>(parse_int(text.substr(0, first)));
      id = static_cast<int>(parse_int(text.substr(first + 1, second - first - 1)));
    } catch (const DataError& e) {
      throw DataError("labels row " + std::to_string(row) + ": " + e.what());
    }
    const auto g = dict.groups.find(n);
    if (g == dict.groups.end())
      throw DataError("labels row " + std::to_string(row) + ": unknown group n=" + std::to_string(n));
    if (id < 0 || id >= static_cast<int>(g->second.size()))
      throw DataError("labels row " + std::to_string(row) + ": unknown cluster " + std::to_string(id) +
                      " for n=" + std::to_string(n) + " (k=" + std::to_string(g->second.size()) + ")");
    g->second[id].label = std::string(trim(text.substr(second + 1)));
  }
  return dict;
}

BehaviorDictionary apply_labels(BehaviorDictionary dict, const std::filesystem::path& labels_file) {
  std::ifstream in(labels_file);
  if (!in) throw DataError("cannot open " + labels_file.string());
  return apply_labels(std::move(dict), in);
}

}  // namespace peddict
