#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "peddict/clustering.hpp"
#include "peddict/dataset_io.hpp"
#include "peddict/embedding.hpp"
#include "peddict/neuralnet.hpp"
#include "peddict/predictor.hpp"
#include "peddict/trajectory_prep.hpp"

namespace peddict {

struct PipelineConfig {
  int T = 8;
  int delta_T = 1;
  double alpha = 15.0;
  std::vector<double> angles{30.0, 45.0, 60.0};
  std::map<int, int> k_per_n{{1, 10}, {2, 28}, {3, 33}};
  int imitator_epochs = 300;
  int predictor_epochs = 1000;
  int obs_len = 8;
  int pred_len = 12;
  double split = 0.8;
  std::uint64_t seed = 0;

  double perplexity = 30.0;
  int tsne_iters = 1000;
  int embed_max_points = 5000;  ///< exact t-SNE is quadratic; larger groups are subsampled
  int hidden = 128;
  int batch_size = 64;
  double learning_rate = 1e-3;
  int kmeans_restarts = 10;
  int kmeans_iters = 300;
  int grid_width = 64;
  int grid_height = 48;
  int samples_per_cluster = 10;
  unsigned threads = 0;  ///< 0: all hardware threads

  void validate() const;

  SegmentationConfig segmentation() const;
  TsneConfig tsne(int n) const;
  ClusteringConfig clustering() const;
  TrainConfig imitator_training(int n) const;
  TrainConfig predictor_training() const;
  HorizonConfig horizon() const { return {obs_len, pred_len}; }
};

/// Sets one `key = value` entry; ConfigError on an unknown key or bad value.
void set_config_value(PipelineConfig& cfg, const std::string& key, const std::string& value);

/// Flat `key = value` lines; '#' starts a comment.
void read_config(PipelineConfig& cfg, std::istream& in, const std::string& source);
void read_config(PipelineConfig& cfg, const std::filesystem::path& path);

/// Every key with its effective value, one `key = value` line each. Feeding
/// the text back to read_config reproduces the configuration.
std::string format_config(const PipelineConfig& cfg);

/// An input another stage should have produced is missing.
class MissingArtifact : public DataError {
 public:
  MissingArtifact(const std::filesystem::path& path, const std::string& stage);
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

/// Evaluation found nothing to score.
class EmptyTestSet : public DataError {
 public:
  using DataError::DataError;
};

/// Selection flags shared by the stages. Unset means "everything".
struct StageOptions {
  std::optional<int> n;
  std::optional<int> k;
  std::optional<std::string> scene;
  std::vector<int> overlay;  ///< clusters drawn together by `maps`
  std::optional<ObsmatColumns> columns;
  std::filesystem::path labels;
  std::filesystem::path tracks;  ///< `predict` input, default the held-out tracks
};

// Layout of a run directory.
namespace run_files {
std::filesystem::path tables(const std::filesystem::path& run);
std::filesystem::path norms(const std::filesystem::path& run);
std::filesystem::path segments(const std::filesystem::path& run, int n);
std::filesystem::path tracks_train(const std::filesystem::path& run, int n);
std::filesystem::path tracks_test(const std::filesystem::path& run, int n);
std::filesystem::path embedding(const std::filesystem::path& run, int n);
std::filesystem::path dictionary(const std::filesystem::path& run);
std::filesystem::path ptnet(const std::filesystem::path& run);
std::filesystem::path ensemble(const std::filesystem::path& run);
std::filesystem::path predictions(const std::filesystem::path& run);
std::filesystem::path report_csv(const std::filesystem::path& run);
std::filesystem::path report_text(const std::filesystem::path& run);
std::filesystem::path run_config(const std::filesystem::path& run);
}  // namespace run_files

/// Reads a canonical CSV, an obsmat file or a directory of them into
/// <run>/tables/<scene>.csv. Returns the scenes written.
std::vector<std::string> stage_ingest(const std::filesystem::path& in, const std::filesystem::path& run,
                                      const StageOptions& opt);

/// Stage entry points. Each reads the files of earlier stages from `run`
/// and writes its own; a missing input raises MissingArtifact.
void stage_segment(const std::filesystem::path& run, const PipelineConfig& cfg, const StageOptions& opt);
void stage_embed(const std::filesystem::path& run, const PipelineConfig& cfg, const StageOptions& opt);
void stage_cluster(const std::filesystem::path& run, const PipelineConfig& cfg, const StageOptions& opt);
void stage_label(const std::filesystem::path& run, const StageOptions& opt);
void stage_train_ptnet(const std::filesystem::path& run, const PipelineConfig& cfg, const StageOptions& opt);
void stage_train_predictors(const std::filesystem::path& run, const PipelineConfig& cfg, const StageOptions& opt);
void stage_predict(const std::filesystem::path& run, const PipelineConfig& cfg, const StageOptions& opt);
/// Throws EmptyTestSet after writing a header-only report when there is
/// nothing to evaluate.
EvaluationReport stage_evaluate(const std::filesystem::path& run, const PipelineConfig& cfg,
                                const StageOptions& opt);
void stage_maps(const std::filesystem::path& run, const PipelineConfig& cfg, const StageOptions& opt);
void stage_hist(const std::filesystem::path& run, const PipelineConfig& cfg, const StageOptions& opt);
void stage_samples(const std::filesystem::path& run, const PipelineConfig& cfg, const StageOptions& opt);

/// ingest through samples, in order.
EvaluationReport run_pipeline(const std::filesystem::path& in, const std::filesystem::path& run,
                              const PipelineConfig& cfg, const StageOptions& opt);

}  // namespace peddict
