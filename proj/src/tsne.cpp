#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "peddict/embedding.hpp"

namespace peddict {

void TsneConfig::validate(std::size_t n_points) const {
  if (!(perplexity > 1.0) || !(perplexity < static_cast<double>(n_points)))
    throw ConfigError("perplexity must satisfy 1 < perplexity < n_points (n_points=" +
                      std::to_string(n_points) + ", perplexity=" + format_double(perplexity) + ")");
  if (n_iter < 1) throw ConfigError("t-SNE n_iter must be >= 1");
  if (!(learning_rate >= 0.0)) throw ConfigError("t-SNE learning_rate must be >= 0");
  if (exaggeration_iters < 0 || momentum_switch_iter < 0) throw ConfigError("negative t-SNE phase length");
}

// A fixed rate of 200 oscillates on small sets; scaling with n keeps the
// exaggerated phase stable.
double TsneConfig::step_size(std::size_t n_points) const {
  if (learning_rate > 0.0) return learning_rate;
  return std::max(static_cast<double>(n_points) / (4.0 * early_exaggeration), 50.0);
}

std::vector<double> squared_distances(const PointSet& X) {
  const std::size_t n = X.size();
  std::vector<double> d2(n * n, 0.0);
  parallel_for(n, [&](std::size_t i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      double s = 0.0;
      const auto& a = X[i];
      const auto& b = X[j];
      for (std::size_t k = 0; k < a.size(); ++k) {
        const double d = a[k] - b[k];
        s += d * d;
      }
      d2[i * n + j] = s;
    }
  });
  return d2;
}

namespace {

struct RowResult {
  double entropy_bits = 0.0;
  double beta = 0.0;
  bool clamped = false;
};

// Fills out[j] = p_{j|i} for the row and returns its entropy. Distances are
// shifted by the row minimum so the exponentials never underflow to all-zero;
// zero-distance duplicates therefore share the peak mass evenly.
double row_distribution(const double* d2, std::size_t n, std::size_t i, double dmin, double beta,
                        double* out) {
  double sum = 0.0;
  double weighted = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    if (j == i) {
      out[j] = 0.0;
      continue;
    }
    const double shifted = d2[j] - dmin;
    const double e = std::exp(-beta * shifted);
    out[j] = e;
    sum += e;
    weighted += e * shifted;
  }
  for (std::size_t j = 0; j < n; ++j) out[j] /= sum;
  const double nats = std::log(sum) + beta * weighted / sum;
  return nats / std::log(2.0);
}

RowResult search_row(const double* d2, std::size_t n, std::size_t i, double target_bits, double tol,
                     int max_steps, double* out) {
  double dmin = std::numeric_limits<double>::infinity();
  double mean_shift = 0.0;
  for (std::size_t j = 0; j < n; ++j)
    if (j != i) dmin = std::min(dmin, d2[j]);
  for (std::size_t j = 0; j < n; ++j)
    if (j != i) mean_shift += d2[j] - dmin;
  mean_shift /= static_cast<double>(n - 1);

  RowResult r;
  if (!(mean_shift > 0.0)) {
    // Every neighbour at the same distance: the row is uniform whatever beta is.
    r.beta = 1.0;
    r.entropy_bits = row_distribution(d2, n, i, dmin, r.beta, out);
    r.clamped = std::abs(r.entropy_bits - target_bits) > tol;
    return r;
  }

  double lo = std::log(1e-10 / mean_shift);
  double hi = std::log(1e10 / mean_shift);
  const double h_lo = row_distribution(d2, n, i, dmin, std::exp(lo), out);
  const double h_hi = row_distribution(d2, n, i, dmin, std::exp(hi), out);
  if (target_bits > h_lo || target_bits < h_hi) {
    r.beta = std::exp(target_bits > h_lo ? lo : hi);
    r.entropy_bits = row_distribution(d2, n, i, dmin, r.beta, out);
    r.clamped = true;
    return r;
  }
  double mid = 0.5 * (lo + hi);
  double h = row_distribution(d2, n, i, dmin, std::exp(mid), out);
  for (int step = 1; step < max_steps && std::abs(h - target_bits) > tol; ++step) {
    // Entropy falls as beta grows.
    if (h > target_bits)
      lo = mid;
    else
      hi = mid;
    mid = 0.5 * (lo + hi);
    h = row_distribution(d2, n, i, dmin, std::exp(mid), out);
  }
  r.beta = std::exp(mid);
  r.entropy_bits = h;
  r.clamped = std::abs(h - target_bits) > tol;
  return r;
}

}  // namespace

Affinities compute_affinities(const PointSet& X, double perplexity, double entropy_tolerance,
                              int max_steps) {
  const std::size_t n = X.size();
  if (n < 3) throw DataError("t-SNE needs at least 3 points, got " + std::to_string(n));
  if (!(perplexity > 1.0) || !(perplexity < static_cast<double>(n)))
    throw ConfigError("perplexity must satisfy 1 < perplexity < n_points");
  const std::size_t dim = X.front().size();
  for (const auto& x : X) {
    if (x.size() != dim) throw DataError("t-SNE input rows have different lengths");
    for (const double v : x)
      if (!std::isfinite(v)) throw DataError("t-SNE input contains a non-finite value");
  }

  Affinities a;
  a.n = n;
  a.conditional.assign(n * n, 0.0);
  a.row_entropy_bits.assign(n, 0.0);
  a.beta.assign(n, 0.0);
  const auto d2 = squared_distances(X);
  const double target = std::log2(perplexity);
  std::vector<char> clamped(n, 0);
  parallel_for(n, [&](std::size_t i) {
    const auto r = search_row(&d2[i * n], n, i, target, entropy_tolerance, max_steps,
                              &a.conditional[i * n]);
    a.row_entropy_bits[i] = r.entropy_bits;
    a.beta[i] = r.beta;
    clamped[i] = r.clamped ? 1 : 0;
  });
  for (std::size_t i = 0; i < n; ++i) a.clamped_rows += clamped[i];
  if (a.clamped_rows > 0)
    log_warn(std::to_string(a.clamped_rows) + " t-SNE rows could not reach perplexity " +
             format_double(perplexity) + "; bandwidth clamped");

  a.joint.assign(n * n, 0.0);
  const double denom = 2.0 * static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      a.joint[i * n + j] = (a.conditional[i * n + j] + a.conditional[j * n + i]) / denom;
  return a;
}

namespace {

// Student-t kernel rows and their normaliser, summed in index order.
struct Kernel {
  std::vector<double> w;  // 1 / (1 + |yi - yj|^2), zero diagonal
  double z = 0.0;
};

Kernel student_kernel(const std::vector<Point2>& Y) {
  const std::size_t n = Y.size();
  Kernel k;
  k.w.assign(n * n, 0.0);
  std::vector<double> row_sum(n, 0.0);
  parallel_for(n, [&](std::size_t i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double v = 1.0 / (1.0 + squared_distance(Y[i], Y[j]));
      k.w[i * n + j] = v;
      s += v;
    }
    row_sum[i] = s;
  });
  for (const double s : row_sum) k.z += s;
  return k;
}

std::vector<Point2> gradient_from_kernel(const std::vector<double>& P, const std::vector<Point2>& Y,
                                         const Kernel& k, double exaggeration) {
  const std::size_t n = Y.size();
  std::vector<Point2> grad(n);
  parallel_for(n, [&](std::size_t i) {
    double gx = 0.0, gy = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double w = k.w[i * n + j];
      const double coeff = (exaggeration * P[i * n + j] - w / k.z) * w;
      gx += coeff * (Y[i].x - Y[j].x);
      gy += coeff * (Y[i].y - Y[j].y);
    }
    grad[i] = {4.0 * gx, 4.0 * gy};
  });
  return grad;
}

double kl_from_kernel(const std::vector<double>& P, const Kernel& k, std::size_t n) {
  double kl = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double p = P[i * n + j];
      if (i == j || p <= 0.0) continue;
      kl += p * std::log(p / (k.w[i * n + j] / k.z));
    }
  return kl;
}

}  // namespace

double kl_divergence(const std::vector<double>& P, const std::vector<Point2>& Y) {
  if (P.size() != Y.size() * Y.size()) throw DataError("kl_divergence: P and Y sizes disagree");
  return kl_from_kernel(P, student_kernel(Y), Y.size());
}

std::vector<Point2> kl_gradient(const std::vector<double>& P, const std::vector<Point2>& Y,
                                double exaggeration) {
  if (P.size() != Y.size() * Y.size()) throw DataError("kl_gradient: P and Y sizes disagree");
  return gradient_from_kernel(P, Y, student_kernel(Y), exaggeration);
}

TsneResult tsne(const PointSet& X, const TsneConfig& cfg) {
  cfg.validate(X.size());
  const auto aff = compute_affinities(X, cfg.perplexity, cfg.entropy_tolerance, cfg.max_bisection_steps);
  const auto& P = aff.joint;
  const std::size_t n = X.size();

  TsneResult res;
  res.clamped_rows = aff.clamped_rows;
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> init(0.0, 1e-4);
  auto& Y = res.coords;
  Y.resize(n);
  for (auto& y : Y) {
    y.x = init(rng);
    y.y = init(rng);
  }
  std::vector<Point2> velocity(n);
  std::vector<Point2> gains(n, {1.0, 1.0});
  const double eta = cfg.step_size(n);

  auto update_gain = [](double& gain, double g, double v) {
    gain = (g > 0.0) != (v > 0.0) ? gain + 0.2 : gain * 0.8;
    gain = std::max(gain, 0.01);
  };

  for (int it = 0; it < cfg.n_iter; ++it) {
    const double exaggeration = it < cfg.exaggeration_iters ? cfg.early_exaggeration : 1.0;
    const double momentum = it < cfg.momentum_switch_iter ? cfg.momentum_early : cfg.momentum_late;
    const Kernel k = student_kernel(Y);
    const auto grad = gradient_from_kernel(P, Y, k, exaggeration);
    for (std::size_t i = 0; i < n; ++i) {
      if (!std::isfinite(grad[i].x) || !std::isfinite(grad[i].y))
        throw DataError("t-SNE gradient became non-finite at iteration " + std::to_string(it));
      update_gain(gains[i].x, grad[i].x, velocity[i].x);
      update_gain(gains[i].y, grad[i].y, velocity[i].y);
      velocity[i].x = momentum * velocity[i].x - eta * gains[i].x * grad[i].x;
      velocity[i].y = momentum * velocity[i].y - eta * gains[i].y * grad[i].y;
      Y[i] = Y[i] + velocity[i];
    }
    Point2 mean;
    for (const auto& y : Y) mean = mean + y;
    mean = (1.0 / static_cast<double>(n)) * mean;
    for (auto& y : Y) y = y - mean;

    const int done = it + 1;
    const bool end_of_exaggeration = done == cfg.exaggeration_iters;
    if (end_of_exaggeration || done == cfg.n_iter || (cfg.kl_every > 0 && done % cfg.kl_every == 0)) {
      const double kl = kl_divergence(P, Y);
      if (!std::isfinite(kl))
        throw DataError("t-SNE KL divergence became non-finite at iteration " + std::to_string(done));
      res.kl_trace.push_back({done, kl});
      if (end_of_exaggeration) res.kl_after_exaggeration = kl;
      log_debug("t-SNE iteration " + std::to_string(done) + " KL " + format_double(kl));
    }
  }
  res.kl_final = res.kl_trace.back().kl;
  if (cfg.exaggeration_iters == 0 || cfg.exaggeration_iters > cfg.n_iter)
    res.kl_after_exaggeration = res.kl_trace.front().kl;
  return res;
}

std::vector<Point2> EmbeddingTable::coords() const {
  std::vector<Point2> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r.coord);
  return out;
}

EmbeddingTable tsne_embed(const std::vector<FeatureVector>& features,
                          const std::vector<std::string>& segment_ids, const TsneConfig& cfg,
                          TsneResult* details) {
  if (features.size() != segment_ids.size())
    throw DataError("tsne_embed: features and segment ids have different lengths");
  if (features.empty()) throw DataError("tsne_embed: no feature vectors");
  PointSet X;
  X.reserve(features.size());
  const int n = features.front().n;
  for (const auto& f : features) {
    if (f.n != n) throw DataError("tsne_embed: mixed pedestrian counts in one embedding");
    X.push_back(f.values);
  }
  auto res = tsne(X, cfg);
  EmbeddingTable table;
  table.n = n;
  table.rows.reserve(features.size());
  for (std::size_t i = 0; i < features.size(); ++i)
    table.rows.push_back({segment_ids[i], res.coords[i], -1});
  if (details) *details = std::move(res);
  return table;
}

}  // namespace peddict
