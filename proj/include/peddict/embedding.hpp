#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "peddict/common.hpp"
#include "peddict/trajectory_prep.hpp"

namespace peddict {

/// Exact t-SNE settings. Defaults are the standard published values.
struct TsneConfig {
  double perplexity = 30.0;
  int n_iter = 1000;
  double learning_rate = 0.0;  ///< 0: max(n / (4 * early_exaggeration), 50)
  double momentum_early = 0.5;
  double momentum_late = 0.8;
  int momentum_switch_iter = 250;
  double early_exaggeration = 12.0;
  int exaggeration_iters = 250;
  double entropy_tolerance = 1e-5;  ///< bits
  int max_bisection_steps = 50;
  int kl_every = 50;  ///< KL checkpoint period (iterations)
  std::uint64_t seed = 0;

  void validate(std::size_t n_points) const;
  double step_size(std::size_t n_points) const;
};

using PointSet = std::vector<std::vector<double>>;

/// Dense n x n affinities, row-major.
struct Affinities {
  std::size_t n = 0;
  std::vector<double> conditional;       ///< p_{j|i} at [i * n + j]
  std::vector<double> joint;             ///< symmetric p_ij, sums to 1
  std::vector<double> row_entropy_bits;  ///< H(P_i) reached by the search
  std::vector<double> beta;              ///< 1 / (2 sigma_i^2)
  std::size_t clamped_rows = 0;          ///< rows whose target entropy was not bracketed

  double p(std::size_t i, std::size_t j) const { return joint[i * n + j]; }
};

std::vector<double> squared_distances(const PointSet& X);

/// Per-point Gaussian bandwidths by bisection on log(beta) so every row hits
/// log2(perplexity) bits, then symmetrised joint probabilities.
Affinities compute_affinities(const PointSet& X, double perplexity,
                              double entropy_tolerance = 1e-5, int max_steps = 50);

/// KL(P || Q) with Student-t (one degree of freedom) Q.
double kl_divergence(const std::vector<double>& P, const std::vector<Point2>& Y);

/// dKL/dY with P multiplied by `exaggeration`.
std::vector<Point2> kl_gradient(const std::vector<double>& P, const std::vector<Point2>& Y,
                                double exaggeration = 1.0);

struct KlCheckpoint {
  int iteration = 0;  ///< iterations completed
  double kl = 0.0;
};

struct TsneResult {
  std::vector<Point2> coords;
  std::vector<KlCheckpoint> kl_trace;  ///< unexaggerated KL
  double kl_after_exaggeration = 0.0;
  double kl_final = 0.0;
  std::size_t clamped_rows = 0;
};

TsneResult tsne(const PointSet& X, const TsneConfig& cfg);

struct EmbeddingRow {
  std::string segment_id;
  Point2 coord;
  int cluster = -1;  ///< -1 until clustered

  friend bool operator==(const EmbeddingRow&, const EmbeddingRow&) = default;
};

/// Teacher embedding of one pedestrian-count group.
struct EmbeddingTable {
  int n = 0;
  std::vector<EmbeddingRow> rows;

  std::vector<Point2> coords() const;
  friend bool operator==(const EmbeddingTable&, const EmbeddingTable&) = default;
};

EmbeddingTable tsne_embed(const std::vector<FeatureVector>& features,
                          const std::vector<std::string>& segment_ids, const TsneConfig& cfg,
                          TsneResult* details = nullptr);

}  // namespace peddict
