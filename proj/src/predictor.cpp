#include "peddict/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <random>
#include <set>
#include <tuple>

namespace peddict {

PredictionTask make_task(const Segment& track, const HorizonConfig& h, const NormParams& norm) {
  if (track.T != h.obs_len + h.pred_len)
    throw DataError("track " + track.id() + " has " + std::to_string(track.T) + " frames, expected " +
                    std::to_string(h.obs_len + h.pred_len));
  PredictionTask task;
  task.n = track.n;
  task.norm = norm;
  for (int i = 0; i < track.n; ++i)
    for (int t = 0; t < h.obs_len; ++t) task.observed.push_back(track.at(i, t));
  return task;
}

std::vector<Point2> future_of(const Segment& track, const HorizonConfig& h) {
  std::vector<Point2> out;
  for (int i = 0; i < track.n; ++i)
    for (int t = h.obs_len; t < h.obs_len + h.pred_len; ++t) out.push_back(track.at(i, t));
  return out;
}

std::vector<double> encode_observation(const std::vector<Point2>& observed) {
  std::vector<double> x;
  x.reserve(observed.size() * 2);
  for (const auto& p : observed) {
    x.push_back(p.x);
    x.push_back(p.y);
  }
  return x;
}

std::vector<double> encode_targets(const Segment& track, const HorizonConfig& h) {
  std::vector<double> y;
  y.reserve(static_cast<std::size_t>(track.n) * h.pred_len * 2);
  for (int i = 0; i < track.n; ++i) {
    const Point2 last = track.at(i, h.obs_len - 1);
    for (int t = h.obs_len; t < h.obs_len + h.pred_len; ++t) {
      const Point2 d = track.at(i, t) - last;
      y.push_back(d.x);
      y.push_back(d.y);
    }
  }
  return y;
}

namespace {

struct Job {
  int n = 0;
  int cluster = -1;  // -1: pooled model
  std::vector<std::size_t> items;
  MlpModel model;
};

}  // namespace

PredictorEnsemble train_ensemble(const std::vector<LabeledTrack>& dataset, const HorizonConfig& h, int hidden,
                                 const TrainConfig& cfg) {
  if (dataset.empty()) throw DataError("train_ensemble: empty dataset");
  std::map<std::pair<int, int>, std::vector<std::size_t>> by_cluster;
  std::map<int, std::vector<std::size_t>> by_n;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& item = dataset[i];
    if (item.track.T != h.obs_len + h.pred_len)
      throw DataError("train_ensemble: track " + item.track.id() + " has the wrong length");
    by_n[item.track.n].push_back(i);
    if (item.cluster >= 0) by_cluster[{item.track.n, item.cluster}].push_back(i);
  }
  std::vector<Job> jobs;
  for (const auto& [n, items] : by_n) jobs.push_back({n, -1, items, {}});
  for (const auto& [key, items] : by_cluster) jobs.push_back({key.first, key.second, items, {}});

  parallel_for(jobs.size(), [&](std::size_t j) {
    auto& job = jobs[j];
    const int d_in = job.n * h.obs_len * 2;
    const int d_out = job.n * h.pred_len * 2;
    Eigen::MatrixXd X(static_cast<Eigen::Index>(job.items.size()), d_in);
    Eigen::MatrixXd Y(static_cast<Eigen::Index>(job.items.size()), d_out);
    for (std::size_t r = 0; r < job.items.size(); ++r) {
      const auto& track = dataset[job.items[r]].track;
      const auto x = encode_observation(make_task(track, h).observed);
      const auto y = encode_targets(track, h);
      X.row(static_cast<Eigen::Index>(r)) = Eigen::Map<const Eigen::RowVectorXd>(x.data(), d_in);
      Y.row(static_cast<Eigen::Index>(r)) = Eigen::Map<const Eigen::RowVectorXd>(y.data(), d_out);
    }
    TrainConfig local = cfg;
    local.seed = derive_seed(cfg.seed, {static_cast<std::uint64_t>(job.n), static_cast<std::uint64_t>(job.cluster + 1)});
    job.model = mlp_init({d_in, hidden, hidden, d_out}, local.seed);
    const auto trace = train(job.model, X, Y, local);
    log_debug("predictor n=" + std::to_string(job.n) + " cluster=" + std::to_string(job.cluster) + " items=" +
              std::to_string(job.items.size()) + " final loss " +
              (trace.epoch_loss.empty() ? std::string("-") : format_double(trace.epoch_loss.back())));
  });

  PredictorEnsemble ens;
  ens.horizon = h;
  for (auto& job : jobs) {
    if (job.cluster < 0)
      ens.global_models[job.n] = std::move(job.model);
    else
      ens.cluster_models[{job.n, job.cluster}] = std::move(job.model);
  }
  return ens;
}

std::vector<Point2> FuturePrediction::denormalized(const NormParams& norm) const {
  std::vector<Point2> out;
  out.reserve(positions.size());
  for (const auto& p : positions) out.push_back(norm.denormalize(p));
  return out;
}

FuturePrediction predict_future(const PredictionTask& task, const PtNet& ptnet, const BehaviorDictionary& dict,
                                const PredictorEnsemble& ensemble, double alpha, Conditioning mode) {
  const auto& h = ensemble.horizon;
  if (task.n < 1 || task.observed.size() != static_cast<std::size_t>(task.n) * h.obs_len)
    throw DataError("prediction task must hold n * " + std::to_string(h.obs_len) + " observed positions");
  FuturePrediction out;

  const MlpModel* model = nullptr;
  const bool has_behavior = ptnet.models.count(task.n) && dict.groups.count(task.n) && !dict.groups.at(task.n).empty();
  if (mode == Conditioning::per_cluster && has_behavior) {
    if (ptnet.T != h.obs_len)
      throw DataError("PT-net window T=" + std::to_string(ptnet.T) + " does not match observation length " +
                      std::to_string(h.obs_len));
    Segment obs;
    obs.n = task.n;
    obs.T = h.obs_len;
    for (int i = 0; i < task.n; ++i) obs.ped_ids.push_back(i);
    obs.positions = task.observed;
    const auto behavior = predict_behavior(ptnet, dict, obs, alpha);
    out.cluster_id = behavior.cluster_id;
    out.coord = behavior.coord;
    const auto it = ensemble.cluster_models.find({task.n, behavior.cluster_id});
    if (it != ensemble.cluster_models.end()) model = &it->second;
  }
  if (!model) {
    const auto g = ensemble.global_models.find(task.n);
    if (g == ensemble.global_models.end())
      throw DataError("no predictor for n=" + std::to_string(task.n) + " cluster " + std::to_string(out.cluster_id) +
                      " and no pooled fallback model");
    model = &g->second;
    out.used_fallback = mode == Conditioning::per_cluster;
  }

  const auto x = encode_observation(task.observed);
  const auto y = forward(*model, std::span<const double>(x));
  out.positions.reserve(static_cast<std::size_t>(task.n) * h.pred_len);
  for (int i = 0; i < task.n; ++i) {
    const Point2 last = task.observed[static_cast<std::size_t>(i) * h.obs_len + h.obs_len - 1];
    for (int t = 0; t < h.pred_len; ++t) {
      const std::size_t k = (static_cast<std::size_t>(i) * h.pred_len + t) * 2;
      out.positions.push_back({last.x + y[k], last.y + y[k + 1]});
    }
  }
  return out;
}

Metrics ade_fde(const std::vector<Point2>& pred, const std::vector<Point2>& truth, int n) {
  if (pred.size() != truth.size()) throw DataError("ade_fde: prediction and truth shapes differ");
  if (n < 1 || pred.empty() || pred.size() % static_cast<std::size_t>(n) != 0)
    throw DataError("ade_fde: positions are not n x steps");
  const std::size_t steps = pred.size() / static_cast<std::size_t>(n);
  Metrics m;
  m.count = n;
  double total = 0.0;
  double final_total = 0.0;
  for (int i = 0; i < n; ++i) {
    for (std::size_t t = 0; t < steps; ++t) {
      const std::size_t k = static_cast<std::size_t>(i) * steps + t;
      const double d = distance(pred[k], truth[k]);
      total += d;
      if (t + 1 == steps) final_total += d;
    }
  }
  m.ade = total / static_cast<double>(pred.size());
  m.fde = final_total / static_cast<double>(n);
  return m;
}

const ReportRow* EvaluationReport::find(const std::string& scene, const std::string& n,
                                        const std::string& cluster) const {
  for (const auto& r : rows)
    if (r.scene == scene && r.n == n && r.cluster == cluster) return &r;
  return nullptr;
}

void EvaluationReport::write_csv(std::ostream& out) const {
  out << "scene,n,cluster,count,ade,fde\n";
  for (const auto& r : rows)
    out << r.scene << ',' << r.n << ',' << r.cluster << ',' << r.metrics.count << ','
        << format_double(r.metrics.ade) << ',' << format_double(r.metrics.fde) << '\n';
}

void EvaluationReport::write_text(std::ostream& out) const {
  std::size_t scene_w = 5;
  std::size_t cluster_w = 7;
  for (const auto& r : rows) {
    scene_w = std::max(scene_w, r.scene.size());
    cluster_w = std::max(cluster_w, r.cluster.size());
  }
  char buf[64];
  out << std::left << std::setw(static_cast<int>(scene_w)) << "scene" << "  " << std::setw(3) << "n" << "  "
      << std::setw(static_cast<int>(cluster_w)) << "cluster" << "  " << std::right << std::setw(7) << "count"
      << "  " << std::setw(8) << "ADE" << "  " << std::setw(8) << "FDE" << '\n';
  for (const auto& r : rows) {
    out << std::left << std::setw(static_cast<int>(scene_w)) << r.scene << "  " << std::setw(3) << r.n << "  "
        << std::setw(static_cast<int>(cluster_w)) << r.cluster << "  " << std::right << std::setw(7)
        << r.metrics.count << "  ";
    std::snprintf(buf, sizeof(buf), "%8.4f  %8.4f", r.metrics.ade, r.metrics.fde);
    out << buf << '\n';
  }
}

namespace {

struct Accumulator {
  double ade_sum = 0.0;
  double fde_sum = 0.0;
  std::int64_t count = 0;

  void add(const Metrics& m) {
    ade_sum += m.ade * static_cast<double>(m.count);
    fde_sum += m.fde * static_cast<double>(m.count);
    count += m.count;
  }
  Metrics metrics() const {
    Metrics m;
    m.count = count;
    if (count > 0) {
      m.ade = ade_sum / static_cast<double>(count);
      m.fde = fde_sum / static_cast<double>(count);
    }
    return m;
  }
};

}  // namespace

EvaluationReport evaluate(const std::vector<TestItem>& test, const PtNet& ptnet, const BehaviorDictionary& dict,
                          const PredictorEnsemble& ensemble, const HorizonConfig& h, double alpha,
                          Conditioning mode) {
  EvaluationReport report;
  report.predictions.resize(test.size());
  std::vector<Metrics> model_metrics(test.size());
  std::vector<Metrics> baseline_metrics(test.size());
  parallel_for(test.size(), [&](std::size_t i) {
    const auto& item = test[i];
    const auto task = make_task(item.track, h, item.norm);
    report.predictions[i] = predict_future(task, ptnet, dict, ensemble, alpha, mode);
    std::vector<Point2> truth = future_of(item.track, h);
    for (auto& p : truth) p = item.norm.denormalize(p);
    model_metrics[i] = ade_fde(report.predictions[i].denormalized(item.norm), truth, item.track.n);
    std::vector<Point2> still;
    for (int p = 0; p < item.track.n; ++p)
      for (int t = 0; t < h.pred_len; ++t) still.push_back(item.norm.denormalize(item.track.at(p, h.obs_len - 1)));
    baseline_metrics[i] = ade_fde(still, truth, item.track.n);
  });

  std::map<std::tuple<std::string, int, int>, Accumulator> detail;
  std::map<std::string, Accumulator> per_scene;
  std::map<std::string, Accumulator> per_scene_baseline;
  Accumulator overall;
  Accumulator overall_baseline;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const auto& scene = test[i].track.scene_id;
    detail[{scene, test[i].track.n, report.predictions[i].cluster_id}].add(model_metrics[i]);
    per_scene[scene].add(model_metrics[i]);
    per_scene_baseline[scene].add(baseline_metrics[i]);
    overall.add(model_metrics[i]);
    overall_baseline.add(baseline_metrics[i]);
  }
  for (const auto& [scene, acc] : per_scene) {
    for (const auto& [key, d] : detail)
      if (std::get<0>(key) == scene)
        report.rows.push_back({scene, std::to_string(std::get<1>(key)),
                               std::get<2>(key) < 0 ? std::string("global") : std::to_string(std::get<2>(key)),
                               d.metrics()});
    report.rows.push_back({scene, "all", "all", acc.metrics()});
    report.rows.push_back({scene, "all", "last_position", per_scene_baseline.at(scene).metrics()});
  }
  if (!test.empty()) {
    report.rows.push_back({"ALL", "all", "all", overall.metrics()});
    report.rows.push_back({"ALL", "all", "last_position", overall_baseline.metrics()});
  }
  return report;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_by_scene(
    const std::vector<std::string>& scenes, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("split must lie in (0, 1)");
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < scenes.size(); ++i) groups[scenes[i]].push_back(i);
  std::mt19937_64 rng(derive_seed(seed, {0x5b117ULL}));
  std::vector<std::size_t> train, test;
  for (auto& [scene, idx] : groups) {
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(idx.size())));
    train.insert(train.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    test.insert(test.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
  }
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {train, test};
}

}  // namespace peddict
