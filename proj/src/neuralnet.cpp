#include "peddict/neuralnet.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace peddict {

std::size_t MlpModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

void MlpModel::validate() const {
  if (layer_dims.size() != 4) throw ConfigError("MLP dims must be [d_in, h, h, d_out]");
  for (const int d : layer_dims)
    if (d <= 0) throw ConfigError("MLP dims must be positive");
  if (layer_dims[1] != layer_dims[2]) throw ConfigError("MLP hidden widths must match for skip connections");
  if (layers.size() != 4) throw DataError("MLP must have 4 layers");
  const int h = layer_dims[1];
  const int fan_in[4] = {layer_dims[0], h, h, h};
  const int fan_out[4] = {h, h, h, layer_dims[3]};
  for (int i = 0; i < 4; ++i) {
    const auto& l = layers[i];
    if (l.weight.rows() != fan_in[i] || l.weight.cols() != fan_out[i] || l.bias.size() != fan_out[i])
      throw DataError("MLP layer " + std::to_string(i) + " has the wrong shape");
    if (!l.weight.allFinite() || !l.bias.allFinite())
      throw DataError("MLP layer " + std::to_string(i) + " has non-finite parameters");
  }
}

MlpModel mlp_zeros(const std::vector<int>& layer_dims) {
  if (layer_dims.size() != 4) throw ConfigError("MLP dims must be [d_in, h, h, d_out]");
  for (const int d : layer_dims)
    if (d <= 0) throw ConfigError("MLP dims must be positive");
  if (layer_dims[1] != layer_dims[2]) throw ConfigError("MLP hidden widths must match for skip connections");
  MlpModel m;
  m.layer_dims = layer_dims;
  const int h = layer_dims[1];
  const int fan_in[4] = {layer_dims[0], h, h, h};
  const int fan_out[4] = {h, h, h, layer_dims[3]};
  for (int i = 0; i < 4; ++i) {
    Layer l;
    l.weight = Eigen::MatrixXd::Zero(fan_in[i], fan_out[i]);
    l.bias = Eigen::VectorXd::Zero(fan_out[i]);
    l.residual = i == 1 || i == 2;
    m.layers.push_back(std::move(l));
  }
  return m;
}

MlpModel mlp_init(const std::vector<int>& layer_dims, std::uint64_t seed) {
  MlpModel m = mlp_zeros(layer_dims);
  std::mt19937_64 rng(seed);
  for (auto& l : m.layers) {
    const double limit = std::sqrt(6.0 / static_cast<double>(l.weight.rows() + l.weight.cols()));
    std::uniform_real_distribution<double> u(-limit, limit);
    // Row-major fill so the draw order matches the file layout.
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = u(rng);
  }
  return m;
}

namespace {

// Activations kept for backprop: pre[i] is the affine output of layer i,
// act[i] its input (act[0] = network input).
struct Tape {
  std::vector<Eigen::MatrixXd> act;
  std::vector<Eigen::MatrixXd> pre;
  Eigen::MatrixXd output;
};

Tape run(const MlpModel& model, const Eigen::MatrixXd& inputs) {
  if (inputs.cols() != model.input_dim())
    throw DataError("MLP input has " + std::to_string(inputs.cols()) + " columns, expected " +
                    std::to_string(model.input_dim()));
  Tape tape;
  const std::size_t L = model.layers.size();
  tape.act.reserve(L);
  tape.pre.reserve(L);
  Eigen::MatrixXd h = inputs;
  for (std::size_t i = 0; i < L; ++i) {
    const auto& l = model.layers[i];
    Eigen::MatrixXd z = h * l.weight;
    z.rowwise() += l.bias.transpose();
    tape.act.push_back(h);
    tape.pre.push_back(z);
    if (i + 1 == L) {
      h = std::move(z);
    } else {
      Eigen::MatrixXd a = z.cwiseMax(0.0);
      if (l.residual) a += h;
      h = std::move(a);
    }
  }
  tape.output = std::move(h);
  return tape;
}

}  // namespace

Eigen::MatrixXd forward(const MlpModel& model, const Eigen::MatrixXd& inputs) {
  return run(model, inputs).output;
}

std::vector<double> forward(const MlpModel& model, std::span<const double> x) {
  if (static_cast<int>(x.size()) != model.input_dim())
    throw DataError("MLP input has length " + std::to_string(x.size()) + ", expected " +
                    std::to_string(model.input_dim()));
  Eigen::MatrixXd in(1, static_cast<Eigen::Index>(x.size()));
  for (std::size_t i = 0; i < x.size(); ++i) in(0, static_cast<Eigen::Index>(i)) = x[i];
  const Eigen::MatrixXd out = forward(model, in);
  return std::vector<double>(out.data(), out.data() + out.size());
}

double mse(const Eigen::MatrixXd& prediction, const Eigen::MatrixXd& target) {
  if (prediction.rows() != target.rows() || prediction.cols() != target.cols())
    throw DataError("mse: shape mismatch");
  return (prediction - target).squaredNorm() / static_cast<double>(prediction.size());
}

LossAndGradient loss_and_gradient(const MlpModel& model, const Eigen::MatrixXd& inputs,
                                  const Eigen::MatrixXd& targets) {
  const Tape tape = run(model, inputs);
  if (targets.rows() != tape.output.rows() || targets.cols() != tape.output.cols())
    throw DataError("MLP target shape does not match output shape");
  LossAndGradient out;
  out.loss = mse(tape.output, targets);
  const std::size_t L = model.layers.size();
  out.grad.weight.resize(L);
  out.grad.bias.resize(L);
  out.min_abs_preactivation = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < L; ++i)
    out.min_abs_preactivation = std::min(out.min_abs_preactivation, tape.pre[i].cwiseAbs().minCoeff());

  // dL/d(output of layer i)
  Eigen::MatrixXd upstream = 2.0 * (tape.output - targets) / static_cast<double>(targets.size());
  for (std::size_t k = L; k-- > 0;) {
    const auto& l = model.layers[k];
    Eigen::MatrixXd dz;
    if (k + 1 == L) {
      dz = upstream;
    } else {
      dz = upstream.cwiseProduct((tape.pre[k].array() > 0.0).cast<double>().matrix());
    }
    out.grad.weight[k] = tape.act[k].transpose() * dz;
    out.grad.bias[k] = dz.colwise().sum().transpose();
    if (k == 0) break;
    Eigen::MatrixXd down = dz * l.weight.transpose();
    if (l.residual) down += upstream;
    upstream = std::move(down);
  }
  return out;
}

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
}

TrainResult train(MlpModel& model, const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets,
                  const TrainConfig& cfg, const EpochHook& hook) {
  cfg.validate();
  model.validate();
  if (inputs.rows() == 0 || inputs.rows() != targets.rows())
    throw DataError("train: need the same non-zero number of inputs and targets");
  if (targets.cols() != model.output_dim()) throw DataError("train: target width does not match model output");

  const Eigen::Index m = inputs.rows();
  const Eigen::Index batch = std::min<Eigen::Index>(cfg.batch_size, m);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(m));
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(cfg.seed);

  const std::size_t L = model.layers.size();
  std::vector<Eigen::MatrixXd> mw(L), vw(L);
  std::vector<Eigen::VectorXd> mb(L), vb(L);
  for (std::size_t i = 0; i < L; ++i) {
    mw[i] = Eigen::MatrixXd::Zero(model.layers[i].weight.rows(), model.layers[i].weight.cols());
    vw[i] = mw[i];
    mb[i] = Eigen::VectorXd::Zero(model.layers[i].bias.size());
    vb[i] = mb[i];
  }
  long step = 0;

  TrainResult result;
  Eigen::MatrixXd xb, tb;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.shuffle) std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (Eigen::Index start = 0, b = 0; start < m; start += batch, ++b) {
      const Eigen::Index rows = std::min(batch, m - start);
      xb.resize(rows, inputs.cols());
      tb.resize(rows, targets.cols());
      for (Eigen::Index r = 0; r < rows; ++r) {
        xb.row(r) = inputs.row(order[static_cast<std::size_t>(start + r)]);
        tb.row(r) = targets.row(order[static_cast<std::size_t>(start + r)]);
      }
      const auto lg = loss_and_gradient(model, xb, tb);
      if (!std::isfinite(lg.loss))
        throw DataError("training loss became non-finite at epoch " + std::to_string(epoch) + ", batch " +
                        std::to_string(b));
      loss_sum += lg.loss * static_cast<double>(rows);
      ++step;
      if (cfg.optimizer == Optimizer::sgd) {
        for (std::size_t i = 0; i < L; ++i) {
          model.layers[i].weight -= cfg.learning_rate * lg.grad.weight[i];
          model.layers[i].bias -= cfg.learning_rate * lg.grad.bias[i];
        }
        continue;
      }
      const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
      const double lr = cfg.learning_rate;
      for (std::size_t i = 0; i < L; ++i) {
        mw[i] = cfg.beta1 * mw[i] + (1.0 - cfg.beta1) * lg.grad.weight[i];
        vw[i] = cfg.beta2 * vw[i] + (1.0 - cfg.beta2) * lg.grad.weight[i].cwiseAbs2();
        mb[i] = cfg.beta1 * mb[i] + (1.0 - cfg.beta1) * lg.grad.bias[i];
        vb[i] = cfg.beta2 * vb[i] + (1.0 - cfg.beta2) * lg.grad.bias[i].cwiseAbs2();
        model.layers[i].weight.array() -=
            lr * (mw[i].array() / c1) / ((vw[i].array() / c2).sqrt() + cfg.epsilon);
        model.layers[i].bias.array() -= lr * (mb[i].array() / c1) / ((vb[i].array() / c2).sqrt() + cfg.epsilon);
      }
    }
    const double mean_loss = loss_sum / static_cast<double>(m);
    result.epoch_loss.push_back(mean_loss);
    if (hook) hook(epoch, model, mean_loss);
  }
  return result;
}

GradCheckResult grad_check(const MlpModel& model, std::span<const double> x, std::span<const double> target,
                           double eps) {
  Eigen::MatrixXd in(1, static_cast<Eigen::Index>(x.size()));
  for (std::size_t i = 0; i < x.size(); ++i) in(0, static_cast<Eigen::Index>(i)) = x[i];
  Eigen::MatrixXd tg(1, static_cast<Eigen::Index>(target.size()));
  for (std::size_t i = 0; i < target.size(); ++i) tg(0, static_cast<Eigen::Index>(i)) = target[i];

  const auto analytic = loss_and_gradient(model, in, tg);
  GradCheckResult res;
  res.loss = analytic.loss;
  res.min_abs_preactivation = analytic.min_abs_preactivation;

  MlpModel probe = model;
  auto rel = [](double a, double n) { return std::abs(a - n) / std::max(1e-8, std::abs(a) + std::abs(n)); };
  auto numeric = [&](double& param) {
    const double saved = param;
    param = saved + eps;
    const double up = mse(forward(probe, in), tg);
    param = saved - eps;
    const double down = mse(forward(probe, in), tg);
    param = saved;
    return (up - down) / (2.0 * eps);
  };
  for (std::size_t k = 0; k < probe.layers.size(); ++k) {
    auto& l = probe.layers[k];
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c)
        res.max_relative_error =
            std::max(res.max_relative_error, rel(analytic.grad.weight[k](r, c), numeric(l.weight(r, c))));
    for (Eigen::Index c = 0; c < l.bias.size(); ++c)
      res.max_relative_error = std::max(res.max_relative_error, rel(analytic.grad.bias[k](c), numeric(l.bias(c))));
  }
  return res;
}

}  // namespace peddict
