#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "peddict/common.hpp"

namespace peddict {

/// One affine layer; `weight` is fan_in x fan_out so y = x W + b.
struct Layer {
  Eigen::MatrixXd weight;
  Eigen::VectorXd bias;
  bool residual = false;  ///< output += input (hidden layers only)

  friend bool operator==(const Layer& a, const Layer& b) {
    return a.residual == b.residual && a.weight.rows() == b.weight.rows() &&
           a.weight.cols() == b.weight.cols() && a.bias.size() == b.bias.size() && a.weight == b.weight &&
           a.bias == b.bias;
  }
};

/// Four linear layers d_in -> h -> h -> h -> d_out with ReLU on the first
/// three and identity skips around the two h -> h layers.
struct MlpModel {
  std::vector<int> layer_dims;  ///< [d_in, h, h, d_out]
  std::vector<Layer> layers;

  int input_dim() const { return layer_dims.front(); }
  int output_dim() const { return layer_dims.back(); }
  std::size_t parameter_count() const;
  void validate() const;

  friend bool operator==(const MlpModel&, const MlpModel&) = default;
};

/// Builds an [d_in, h, h, d_out] model with zero parameters.
MlpModel mlp_zeros(const std::vector<int>& layer_dims);

/// Glorot-uniform weights, zero biases.
MlpModel mlp_init(const std::vector<int>& layer_dims, std::uint64_t seed);

/// Rows are samples.
Eigen::MatrixXd forward(const MlpModel& model, const Eigen::MatrixXd& inputs);
std::vector<double> forward(const MlpModel& model, std::span<const double> x);

/// Mean over every output element of the squared error.
double mse(const Eigen::MatrixXd& prediction, const Eigen::MatrixXd& target);

struct Gradients {
  std::vector<Eigen::MatrixXd> weight;
  std::vector<Eigen::VectorXd> bias;
};

struct LossAndGradient {
  double loss = 0.0;
  Gradients grad;
  double min_abs_preactivation = 0.0;  ///< distance of the batch to a ReLU kink
};

LossAndGradient loss_and_gradient(const MlpModel& model, const Eigen::MatrixXd& inputs,
                                  const Eigen::MatrixXd& targets);

enum class Optimizer { sgd, adam };

struct TrainConfig {
  int epochs = 300;
  int batch_size = 64;
  double learning_rate = 1e-3;
  Optimizer optimizer = Optimizer::adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
  bool shuffle = true;

  void validate() const;
};

struct TrainResult {
  std::vector<double> epoch_loss;  ///< mean training loss per epoch
};

/// Called after every epoch with the epoch index (0-based) and mean loss.
using EpochHook = std::function<void(int epoch, const MlpModel& model, double loss)>;

/// Mini-batch descent on mse. Deterministic given cfg; throws DataError on a
/// non-finite loss naming the epoch and batch.
TrainResult train(MlpModel& model, const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets,
                  const TrainConfig& cfg, const EpochHook& hook = {});

struct GradCheckResult {
  double max_relative_error = 0.0;
  double min_abs_preactivation = 0.0;  ///< below ~1e-4 the check is unreliable
  double loss = 0.0;
};

/// Central differences (eps = 1e-5) for every parameter against backprop.
GradCheckResult grad_check(const MlpModel& model, std::span<const double> x, std::span<const double> target,
                           double eps = 1e-5);

}  // namespace peddict
