#include "peddict/ptnet.hpp"

#include <cmath>

namespace peddict {

const Imitator& PtNet::at(int n) const {
  const auto it = models.find(n);
  if (it == models.end()) throw DataError("PT-net has no imitator for n=" + std::to_string(n));
  return it->second;
}

double cluster_agreement(const std::vector<Point2>& coords, const std::vector<Point2>& centroids,
                         const std::vector<int>& labels) {
  if (coords.size() != labels.size()) throw DataError("cluster_agreement: size mismatch");
  if (coords.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < coords.size(); ++i) hits += nearest_centroid(coords[i], centroids) == labels[i];
  return static_cast<double>(hits) / static_cast<double>(coords.size());
}

namespace {

Eigen::MatrixXd feature_matrix(const std::vector<FeatureVector>& features, std::size_t width) {
  Eigen::MatrixXd X(static_cast<Eigen::Index>(features.size()), static_cast<Eigen::Index>(width));
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (features[i].values.size() != width)
      throw DataError("feature vector " + std::to_string(i) + " has length " +
                      std::to_string(features[i].values.size()) + ", expected " + std::to_string(width));
    for (std::size_t j = 0; j < width; ++j)
      X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = features[i].values[j];
  }
  return X;
}

std::vector<Point2> to_coords(const Imitator& im, const Eigen::MatrixXd& out) {
  std::vector<Point2> coords(static_cast<std::size_t>(out.rows()));
  for (Eigen::Index r = 0; r < out.rows(); ++r)
    coords[static_cast<std::size_t>(r)] = {im.scale.x * out(r, 0) + im.shift.x, im.scale.y * out(r, 1) + im.shift.y};
  return coords;
}

}  // namespace

ImitatorTraining train_imitator(const std::vector<FeatureVector>& features, const EmbeddingTable& teacher,
                                int T, int hidden, const TrainConfig& cfg, const std::vector<Point2>* centroids) {
  if (features.size() != teacher.rows.size())
    throw DataError("train_imitator: " + std::to_string(features.size()) + " feature vectors but " +
                    std::to_string(teacher.rows.size()) + " teacher coordinates");
  if (features.empty()) throw DataError("train_imitator: empty training set");
  const int n = teacher.n;
  const std::size_t width = feature_length(n, T);
  const Eigen::MatrixXd X = feature_matrix(features, width);

  const auto m = static_cast<double>(teacher.rows.size());
  Point2 mean;
  for (const auto& r : teacher.rows) mean = mean + r.coord;
  mean = (1.0 / m) * mean;
  Point2 var;
  for (const auto& r : teacher.rows) {
    var.x += (r.coord.x - mean.x) * (r.coord.x - mean.x);
    var.y += (r.coord.y - mean.y) * (r.coord.y - mean.y);
  }
  Point2 sd{std::sqrt(var.x / m), std::sqrt(var.y / m)};
  if (!(sd.x > 0.0)) sd.x = 1.0;
  if (!(sd.y > 0.0)) sd.y = 1.0;

  Eigen::MatrixXd Y(X.rows(), 2);
  for (std::size_t i = 0; i < teacher.rows.size(); ++i) {
    Y(static_cast<Eigen::Index>(i), 0) = (teacher.rows[i].coord.x - mean.x) / sd.x;
    Y(static_cast<Eigen::Index>(i), 1) = (teacher.rows[i].coord.y - mean.y) / sd.y;
  }

  ImitatorTraining out;
  out.imitator.n = n;
  out.imitator.scale = sd;
  out.imitator.shift = mean;
  out.imitator.model = mlp_init({static_cast<int>(width), hidden, hidden, 2}, cfg.seed);

  std::vector<int> labels;
  if (centroids) {
    for (const auto& r : teacher.rows)
      labels.push_back(r.cluster >= 0 ? r.cluster : nearest_centroid(r.coord, *centroids));
    out.initial_agreement =
        cluster_agreement(to_coords(out.imitator, forward(out.imitator.model, X)), *centroids, labels);
  }
  Imitator& im = out.imitator;
  EpochHook hook;
  if (centroids) {
    hook = [&](int epoch, const MlpModel& model, double loss) {
      const double agree = cluster_agreement(to_coords(im, forward(model, X)), *centroids, labels);
      out.epoch_agreement.push_back(agree);
      log_debug("imitator n=" + std::to_string(n) + " epoch " + std::to_string(epoch) + " loss " +
                format_double(loss) + " agreement " + format_double(agree));
    };
  }
  out.epoch_loss = train(im.model, X, Y, cfg, hook).epoch_loss;
  return out;
}

Point2 embed(const PtNet& net, const FeatureVector& features, int n) {
  const auto& im = net.at(n);
  const std::size_t expected = feature_length(n, net.T);
  if (features.values.size() != expected)
    throw DataError("PT-net input for n=" + std::to_string(n) + " must have length " + std::to_string(expected) +
                    ", got " + std::to_string(features.values.size()));
  const auto y = forward(im.model, std::span<const double>(features.values));
  return {im.scale.x * y[0] + im.shift.x, im.scale.y * y[1] + im.shift.y};
}

std::vector<Point2> embed_batch(const PtNet& net, const std::vector<FeatureVector>& features, int n) {
  const auto& im = net.at(n);
  if (features.empty()) return {};
  return to_coords(im, forward(im.model, feature_matrix(features, feature_length(n, net.T))));
}

BehaviorPrediction predict_behavior(const PtNet& net, const BehaviorDictionary& dict, const Segment& segment,
                                    double alpha) {
  BehaviorPrediction p;
  p.n = segment.n;
  p.coord = embed(net, assemble_features(segment, alpha), segment.n);
  p.cluster_id = assign_cluster(p.coord, dict, segment.n);
  return p;
}

}  // namespace peddict
