#include "peddict/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <iterator>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <unordered_map>

#include "peddict/analytics.hpp"
#include "peddict/artifacts.hpp"
#include "peddict/ptnet.hpp"

namespace fs = std::filesystem;

namespace peddict {

namespace {

// Stream ids for derive_seed, one per stochastic stage.
enum Stream : std::uint64_t {
  kSplit = 1,
  kEmbed = 2,
  kSubsample = 3,
  kCluster = 4,
  kImitator = 5,
  kPredictor = 6,
  kSamples = 7,
};

std::string join_ints(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

// Shortest text that reads back to the same double.
std::string short_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string short_doubles(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + short_double(v[i]);
  return s;
}

int to_int(const std::string& key, const std::string& value) {
  try {
    const auto v = parse_int(trim(value));
    if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) throw DataError("out of range");
    return static_cast<int>(v);
  } catch (const DataError&) {
    throw ConfigError(key + ": expected an integer, got '" + value + "'");
  }
}

double to_double(const std::string& key, const std::string& value) {
  try {
    return parse_double(trim(value));
  } catch (const DataError&) {
    throw ConfigError(key + ": expected a number, got '" + value + "'");
  }
}

std::vector<double> to_doubles(const std::string& key, const std::string& value) {
  std::vector<double> out;
  if (trim(value).empty()) return out;
  for (auto f : split(value, ',')) out.push_back(to_double(key, std::string(f)));
  return out;
}

std::map<int, int> to_k_map(const std::string& key, const std::string& value) {
  std::map<int, int> out;
  for (auto f : split(value, ',')) {
    const auto parts = split(f, ':');
    if (parts.size() != 2) throw ConfigError(key + ": expected n:k pairs, got '" + std::string(f) + "'");
    out[to_int(key, std::string(parts[0]))] = to_int(key, std::string(parts[1]));
  }
  return out;
}

struct Entry {
  const char* key;
  std::function<std::string(const PipelineConfig&)> get;
  std::function<void(PipelineConfig&, const std::string&)> set;
};

#define INT_ENTRY(name)                                                                 \
  Entry {                                                                               \
    #name, [](const PipelineConfig& c) { return std::to_string(c.name); },              \
        [](PipelineConfig& c, const std::string& v) { c.name = to_int(#name, v); }      \
  }
#define DOUBLE_ENTRY(name)                                                              \
  Entry {                                                                               \
    #name, [](const PipelineConfig& c) { return short_double(c.name); },                \
        [](PipelineConfig& c, const std::string& v) { c.name = to_double(#name, v); }   \
  }

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = {
      INT_ENTRY(T),
      INT_ENTRY(delta_T),
      DOUBLE_ENTRY(alpha),
      Entry{"angles", [](const PipelineConfig& c) { return short_doubles(c.angles); },
            [](PipelineConfig& c, const std::string& v) { c.angles = to_doubles("angles", v); }},
      Entry{"k_per_n",
            [](const PipelineConfig& c) {
              std::string s;
              for (const auto& [n, k] : c.k_per_n)
                s += (s.empty() ? "" : ",") + std::to_string(n) + ":" + std::to_string(k);
              return s;
            },
            [](PipelineConfig& c, const std::string& v) { c.k_per_n = to_k_map("k_per_n", v); }},
      INT_ENTRY(imitator_epochs),
      INT_ENTRY(predictor_epochs),
      INT_ENTRY(obs_len),
      INT_ENTRY(pred_len),
      DOUBLE_ENTRY(split),
      Entry{"seed", [](const PipelineConfig& c) { return std::to_string(c.seed); },
            [](PipelineConfig& c, const std::string& v) {
              const auto s = to_int("seed", v);
              if (s < 0) throw ConfigError("seed must be >= 0");
              c.seed = static_cast<std::uint64_t>(s);
            }},
      DOUBLE_ENTRY(perplexity),
      INT_ENTRY(tsne_iters),
      INT_ENTRY(embed_max_points),
      INT_ENTRY(hidden),
      INT_ENTRY(batch_size),
      DOUBLE_ENTRY(learning_rate),
      INT_ENTRY(kmeans_restarts),
      INT_ENTRY(kmeans_iters),
      INT_ENTRY(grid_width),
      INT_ENTRY(grid_height),
      INT_ENTRY(samples_per_cluster),
      Entry{"threads", [](const PipelineConfig& c) { return std::to_string(c.threads); },
            [](PipelineConfig& c, const std::string& v) {
              const auto t = to_int("threads", v);
              if (t < 0) throw ConfigError("threads must be >= 0");
              c.threads = static_cast<unsigned>(t);
            }},
  };
  return table;
}

#undef INT_ENTRY
#undef DOUBLE_ENTRY

}  // namespace

void PipelineConfig::validate() const {
  auto positive = [](const char* key, double v) {
    if (!(v > 0.0)) throw ConfigError(std::string(key) + " must be > 0");
  };
  positive("T", T);
  if (T < 2) throw ConfigError("T must be >= 2");
  positive("delta_T", delta_T);
  positive("alpha", alpha);
  for (double a : angles)
    if (!std::isfinite(a)) throw ConfigError("angles must be finite");
  if (k_per_n.empty()) throw ConfigError("k_per_n must name at least one pedestrian count");
  for (const auto& [n, k] : k_per_n) {
    if (n < 1) throw ConfigError("k_per_n: pedestrian count must be >= 1");
    if (k < 1) throw ConfigError("k_per_n: k must be >= 1 for n=" + std::to_string(n));
  }
  positive("imitator_epochs", imitator_epochs);
  positive("predictor_epochs", predictor_epochs);
  positive("obs_len", obs_len);
  positive("pred_len", pred_len);
  if (obs_len != T)
    throw ConfigError("obs_len (" + std::to_string(obs_len) + ") must equal T (" + std::to_string(T) +
                      "): the behavior of an observation window is read by the imitator");
  if (!(split > 0.0 && split < 1.0)) throw ConfigError("split must lie in (0, 1)");
  if (!(perplexity > 1.0)) throw ConfigError("perplexity must be > 1");
  positive("tsne_iters", tsne_iters);
  positive("embed_max_points", embed_max_points);
  positive("hidden", hidden);
  positive("batch_size", batch_size);
  positive("learning_rate", learning_rate);
  positive("kmeans_restarts", kmeans_restarts);
  positive("kmeans_iters", kmeans_iters);
  positive("grid_width", grid_width);
  positive("grid_height", grid_height);
  positive("samples_per_cluster", samples_per_cluster);
}

SegmentationConfig PipelineConfig::segmentation() const {
  SegmentationConfig s;
  s.T = T;
  s.delta_T = delta_T;
  s.n_max = std::max(1, k_per_n.empty() ? 1 : k_per_n.rbegin()->first);
  s.alpha = alpha;
  s.angles = angles;
  return s;
}

TsneConfig PipelineConfig::tsne(int n) const {
  TsneConfig t;
  t.perplexity = perplexity;
  t.n_iter = tsne_iters;
  t.seed = derive_seed(seed, {kEmbed, static_cast<std::uint64_t>(n)});
  return t;
}

ClusteringConfig PipelineConfig::clustering() const {
  ClusteringConfig c;
  c.k_per_n = k_per_n;
  c.max_iters = kmeans_iters;
  c.restarts = kmeans_restarts;
  c.seed = derive_seed(seed, {kCluster});
  return c;
}

TrainConfig PipelineConfig::imitator_training(int n) const {
  TrainConfig t;
  t.epochs = imitator_epochs;
  t.batch_size = batch_size;
  t.learning_rate = learning_rate;
  t.seed = derive_seed(seed, {kImitator, static_cast<std::uint64_t>(n)});
  return t;
}

TrainConfig PipelineConfig::predictor_training() const {
  TrainConfig t;
  t.epochs = predictor_epochs;
  t.batch_size = batch_size;
  t.learning_rate = learning_rate;
  t.seed = derive_seed(seed, {kPredictor});
  return t;
}

void set_config_value(PipelineConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& e : entries())
    if (key == e.key) {
      e.set(cfg, value);
      return;
    }
  throw ConfigError("unknown config key '" + key + "'");
}

void read_config(PipelineConfig& cfg, std::istream& in, const std::string& source) {
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError(source + ":" + std::to_string(no) + ": expected 'key = value'");
    const std::string key(trim(body.substr(0, eq)));
    const std::string value(trim(body.substr(eq + 1)));
    try {
      set_config_value(cfg, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(no) + ": " + e.what());
    }
  }
}

void read_config(PipelineConfig& cfg, const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  read_config(cfg, in, path.string());
}

std::string format_config(const PipelineConfig& cfg) {
  std::string out;
  for (const auto& e : entries()) out += std::string(e.key) + " = " + e.get(cfg) + "\n";
  return out;
}

MissingArtifact::MissingArtifact(const fs::path& path, const std::string& stage)
    : DataError("missing " + path.string() + "; run `" + stage + "` first"), stage_(stage) {}

namespace run_files {
fs::path tables(const fs::path& run) { return run / "tables"; }
fs::path norms(const fs::path& run) { return run / "norm.txt"; }
fs::path segments(const fs::path& run, int n) { return run / ("segments_n" + std::to_string(n) + ".txt"); }
fs::path tracks_train(const fs::path& run, int n) { return run / ("tracks_train_n" + std::to_string(n) + ".txt"); }
fs::path tracks_test(const fs::path& run, int n) { return run / ("tracks_test_n" + std::to_string(n) + ".txt"); }
fs::path embedding(const fs::path& run, int n) { return run / ("embedding_n" + std::to_string(n) + ".txt"); }
fs::path dictionary(const fs::path& run) { return run / "dict.txt"; }
fs::path ptnet(const fs::path& run) { return run / "ptnet"; }
fs::path ensemble(const fs::path& run) { return run / "ensemble"; }
fs::path predictions(const fs::path& run) { return run / "predictions.txt"; }
fs::path report_csv(const fs::path& run) { return run / "report.csv"; }
fs::path report_text(const fs::path& run) { return run / "report.txt"; }
fs::path run_config(const fs::path& run) { return run / "run_config.txt"; }
}  // namespace run_files

namespace {

void require(const fs::path& path, const std::string& stage) {
  if (!fs::exists(path)) throw MissingArtifact(path, stage);
}

std::ofstream open_write(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

void write_text_file(const fs::path& path, const std::string& text) { open_write(path) << text; }

std::ifstream open_read(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return in;
}

std::vector<int> selected_ns(const PipelineConfig& cfg, const StageOptions& opt) {
  if (opt.n) return {*opt.n};
  std::vector<int> out;
  for (const auto& [n, k] : cfg.k_per_n) out.push_back(n);
  return out;
}

std::string safe_scene_name(std::string s) {
  for (auto& c : s)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.')) c = '_';
  return s.empty() ? std::string("scene") : s;
}

std::vector<fs::path> table_files(const fs::path& run) {
  const auto dir = run_files::tables(run);
  require(dir, "ingest");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw MissingArtifact(dir / "*.csv", "ingest");
  return files;
}

std::map<std::string, SceneNorm> load_norms(const fs::path& run) {
  require(run_files::norms(run), "segment");
  auto in = open_read(run_files::norms(run));
  return read_norms(in);
}

BehaviorDictionary load_dictionary(const fs::path& run) {
  require(run_files::dictionary(run), "cluster");
  return load_artifact<BehaviorDictionary>(run_files::dictionary(run));
}

PtNet load_ptnet_for(const fs::path& run) {
  require(run_files::ptnet(run) / "manifest.txt", "train-ptnet");
  return load_ptnet(run_files::ptnet(run));
}

PredictorEnsemble load_ensemble_for(const fs::path& run) {
  require(run_files::ensemble(run) / "manifest.txt", "train-predictors");
  return load_ensemble(run_files::ensemble(run));
}

std::vector<SegmentRecord> load_records(const fs::path& path, const std::string& stage) {
  require(path, stage);
  return read_segments(path);
}

bool has_behavior_model(const PtNet& net, const BehaviorDictionary& dict, int n) {
  return net.models.count(n) && dict.groups.count(n) && !dict.groups.at(n).empty();
}

}  // namespace

// ---------------------------------------------------------------------------

std::vector<std::string> stage_ingest(const fs::path& in, const fs::path& run, const StageOptions& opt) {
  if (!fs::exists(in)) throw DataError("input " + in.string() + " does not exist");
  std::vector<fs::path> files;
  if (fs::is_directory(in)) {
    for (const auto& e : fs::recursive_directory_iterator(in)) {
      const auto ext = e.path().extension();
      if (e.is_regular_file() && (ext == ".csv" || ext == ".txt")) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
  } else {
    files.push_back(in);
  }
  if (files.empty()) throw DataError("no .csv or .txt trajectory files under " + in.string());

  std::vector<TrajectoryTable> tables;
  for (const auto& path : files) {
    auto probe = open_read(path);
    std::string first;
    while (std::getline(probe, first) && trim(first).empty()) {
    }
    TrajectoryTable table;
    if (trim(first) == kCanonicalHeader) {
      auto res = parse_canonical(path, ParseMode::lenient);
      for (const auto& r : res.rejected)
        log_warn(path.string() + ": line " + std::to_string(r.line) + " rejected: " + r.reason);
      if (!res.rejected.empty())
        log_info(path.string() + ": " + std::to_string(res.rejected.size()) + " of " +
                 std::to_string(res.input_rows) + " rows rejected");
      table = std::move(res.table);
    } else {
      ObsmatColumns cols;
      if (opt.columns) {
        cols = *opt.columns;
      } else {
        std::istringstream fields(first);
        int count = 0;
        for (std::string f; fields >> f;) ++count;
        if (count == 4)
          cols = {1, 2, 3, 4, 4};
        else if (count < cols.min_columns)
          throw DataError(path.string() + ": cannot tell the column layout of a " + std::to_string(count) +
                          "-column file; pass --columns frame,ped_id,x,y");
      }
      table = import_obsmat(path, cols);
    }
    if (opt.scene && files.size() == 1) table.scene_id = *opt.scene;
    table.scene_id = safe_scene_name(table.scene_id);
    if (table.records.empty()) {
      log_warn(path.string() + ": no observations, skipped");
      continue;
    }
    log_info("ingest " + path.string() + " -> scene " + table.scene_id + ": " +
             std::to_string(table.records.size()) + " observations, " + std::to_string(table.pedestrian_count()) +
             " tracks");
    tables.push_back(std::move(table));
  }

  std::set<std::string> seen;
  for (const auto& t : tables)
    if (!seen.insert(t.scene_id).second) throw DataError("two inputs map to scene '" + t.scene_id + "'");

  std::vector<std::string> scenes;
  fs::create_directories(run_files::tables(run));
  for (const auto& t : tables) {
    write_canonical(run_files::tables(run) / (t.scene_id + ".csv"), t);
    scenes.push_back(t.scene_id);
  }
  return scenes;
}

void stage_segment(const fs::path& run, const PipelineConfig& cfg, const StageOptions& opt) {
  cfg.validate();
  struct Scene {
    TrajectoryTable normalized;
  };
  std::vector<Scene> scenes;
  std::map<std::string, SceneNorm> norms;
  for (const auto& path : table_files(run)) {
    const auto raw = parse_canonical(path, ParseMode::strict).table;
    if (raw.records.empty()) continue;
    auto [normed, params] = normalize_scene(raw);
    norms[raw.scene_id] = {params, table_bounds(raw)};
    scenes.push_back({std::move(normed)});
  }
  {
    auto out = open_write(run_files::norms(run));
    write_norms(out, norms);
  }

  auto seg_cfg = cfg.segmentation();
  auto track_cfg = seg_cfg;
  track_cfg.T = cfg.obs_len + cfg.pred_len;
  for (int n : selected_ns(cfg, opt)) {
    seg_cfg.n_max = track_cfg.n_max = std::max(seg_cfg.n_max, n);
    std::vector<Segment> segs;
    std::vector<Segment> tracks;
    for (const auto& s : scenes) {
      auto part = extract_segments(s.normalized, seg_cfg, n);
      segs.insert(segs.end(), part.begin(), part.end());
      auto tpart = extract_segments(s.normalized, track_cfg, n);
      tracks.insert(tracks.end(), tpart.begin(), tpart.end());
    }
    const auto augmented = rotate_augment(segs, cfg.angles);
    std::vector<SegmentRecord> records(augmented.size());
    parallel_for(augmented.size(), [&](std::size_t i) {
      records[i] = {augmented[i], assemble_features(augmented[i], cfg.alpha)};
    });
    write_segments(run_files::segments(run, n), records);

    std::vector<std::string> track_scenes;
    for (const auto& t : tracks) track_scenes.push_back(t.scene_id);
    const auto [train_idx, test_idx] =
        split_by_scene(track_scenes, cfg.split, derive_seed(cfg.seed, {kSplit, static_cast<std::uint64_t>(n)}));
    std::vector<SegmentRecord> train, test;
    for (auto i : train_idx) train.push_back({tracks[i], {}});
    for (auto i : test_idx) test.push_back({tracks[i], {}});
    write_segments(run_files::tracks_train(run, n), train);
    write_segments(run_files::tracks_test(run, n), test);

    log_info("n=" + std::to_string(n) + ": " + std::to_string(segs.size()) + " segments (" +
             std::to_string(records.size()) + " with rotations), " + std::to_string(train.size()) + " train / " +
             std::to_string(test.size()) + " test tracks");
    if (segs.empty()) log_warn("n=" + std::to_string(n) + ": no segments found");
  }
}

void stage_embed(const fs::path& run, const PipelineConfig& cfg, const StageOptions& opt) {
  cfg.validate();
  for (int n : selected_ns(cfg, opt)) {
    auto records = load_records(run_files::segments(run, n), "segment");
    const auto out_path = run_files::embedding(run, n);
    if (records.size() > static_cast<std::size_t>(cfg.embed_max_points)) {
      std::vector<std::size_t> idx(records.size());
      std::iota(idx.begin(), idx.end(), std::size_t{0});
      std::mt19937_64 rng(derive_seed(cfg.seed, {kSubsample, static_cast<std::uint64_t>(n)}));
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(static_cast<std::size_t>(cfg.embed_max_points));
      std::sort(idx.begin(), idx.end());
      std::vector<SegmentRecord> kept;
      kept.reserve(idx.size());
      for (auto i : idx) kept.push_back(std::move(records[i]));
      log_info("n=" + std::to_string(n) + ": embedding a seeded subsample of " + std::to_string(kept.size()) +
               " of " + std::to_string(records.size()) + " segments");
      records = std::move(kept);
    }

    auto tcfg = cfg.tsne(n);
    const double max_perp = (static_cast<double>(records.size()) - 1.0) / 3.0;
    if (tcfg.perplexity > max_perp) {
      if (max_perp <= 1.0) {
        log_warn("n=" + std::to_string(n) + ": only " + std::to_string(records.size()) +
                 " segments, too few to embed; group skipped");
        EmbeddingTable empty;
        empty.n = n;
        serialize_artifact(empty, out_path);
        continue;
      }
      log_warn("n=" + std::to_string(n) + ": perplexity lowered to " + format_double(max_perp) + " for " +
               std::to_string(records.size()) + " segments");
      tcfg.perplexity = max_perp;
    }

    std::vector<FeatureVector> features;
    std::vector<std::string> ids;
    for (auto& r : records) {
      if (r.features.values.empty()) r.features = assemble_features(r.segment, cfg.alpha);
      features.push_back(std::move(r.features));
      ids.push_back(r.segment.id());
    }
    TsneResult details;
    auto table = tsne_embed(features, ids, tcfg, &details);
    table.n = n;
    serialize_artifact(table, out_path);
    log_info("n=" + std::to_string(n) + ": t-SNE of " + std::to_string(table.rows.size()) + " segments, KL " +
             format_double(details.kl_final) +
             (details.clamped_rows ? ", " + std::to_string(details.clamped_rows) + " rows off target entropy" : ""));
  }
}

void stage_cluster(const fs::path& run, const PipelineConfig& cfg, const StageOptions& opt) {
  cfg.validate();
  BehaviorDictionary dict;
  if (opt.n && fs::exists(run_files::dictionary(run))) dict = load_artifact<BehaviorDictionary>(run_files::dictionary(run));

  auto ccfg = cfg.clustering();
  for (int n : selected_ns(cfg, opt)) {
    require(run_files::segments(run, n), "segment");
    require(run_files::embedding(run, n), "embed");
    auto emb = load_artifact<EmbeddingTable>(run_files::embedding(run, n));
    dict.groups.erase(n);
    if (emb.rows.empty()) {
      log_warn("n=" + std::to_string(n) + ": empty embedding, no behavior clusters");
      continue;
    }
    int k = 0;
    if (opt.k)
      k = *opt.k;
    else if (auto it = cfg.k_per_n.find(n); it != cfg.k_per_n.end())
      k = it->second;
    else
      throw ConfigError("no k for n=" + std::to_string(n) + "; pass --k or add it to k_per_n");
    if (static_cast<std::size_t>(k) > emb.rows.size())
      throw DataError("n=" + std::to_string(n) + ": k=" + std::to_string(k) + " exceeds the " +
                      std::to_string(emb.rows.size()) + " embedded segments; lower it with --k or k_per_n");
    ccfg.k_per_n = {{n, k}};
    std::map<int, EmbeddingTable> one{{n, std::move(emb)}};
    auto part = build_dictionary(one, ccfg);
    dict.groups[n] = std::move(part.groups.at(n));
    serialize_artifact(one.at(n), run_files::embedding(run, n));
  }
  if (dict.groups.empty()) throw DataError("nothing to cluster: every selected group is empty");
  serialize_artifact(dict, run_files::dictionary(run));
}

void stage_label(const fs::path& run, const StageOptions& opt) {
  if (opt.labels.empty()) throw ConfigError("label needs a labels file (--in labels.csv)");
  auto dict = load_dictionary(run);
  dict = apply_labels(std::move(dict), opt.labels);
  serialize_artifact(dict, run_files::dictionary(run));
}

void stage_train_ptnet(const fs::path& run, const PipelineConfig& cfg, const StageOptions& opt) {
  cfg.validate();
  const auto dict = load_dictionary(run);
  PtNet net;
  net.T = cfg.T;
  if (opt.n && fs::exists(run_files::ptnet(run) / "manifest.txt")) {
    net = load_ptnet(run_files::ptnet(run));
    if (net.T != cfg.T) net.models.clear();
    net.T = cfg.T;
  }

  struct Job {
    int n = 0;
    std::vector<FeatureVector> features;
    EmbeddingTable teacher;
    ImitatorTraining result;
    double agreement = 0.0;
  };
  std::vector<Job> jobs;
  for (int n : selected_ns(cfg, opt)) {
    net.models.erase(n);
    if (!dict.groups.count(n)) continue;
    require(run_files::embedding(run, n), "embed");
    auto records = load_records(run_files::segments(run, n), "segment");
    Job job;
    job.n = n;
    job.teacher = load_artifact<EmbeddingTable>(run_files::embedding(run, n));
    if (job.teacher.rows.empty()) continue;
    std::unordered_map<std::string, std::size_t> by_id;
    for (std::size_t i = 0; i < records.size(); ++i) by_id.emplace(records[i].segment.id(), i);
    for (const auto& row : job.teacher.rows) {
      const auto it = by_id.find(row.segment_id);
      if (it == by_id.end())
        throw DataError("embedding_n" + std::to_string(n) + " names segment " + row.segment_id +
                        " which is not in the segment file; rerun `embed`");
      auto& rec = records[it->second];
      job.features.push_back(rec.features.values.empty() ? assemble_features(rec.segment, cfg.alpha)
                                                         : std::move(rec.features));
    }
    jobs.push_back(std::move(job));
  }
  if (jobs.empty()) throw DataError("no clustered embedding to imitate");

  parallel_for(jobs.size(), [&](std::size_t j) {
    auto& job = jobs[j];
    const auto centroids = dict.centroids(job.n);
    const bool trace = log_level() >= LogLevel::debug;
    job.result = train_imitator(job.features, job.teacher, cfg.T, cfg.hidden, cfg.imitator_training(job.n),
                                trace ? &centroids : nullptr);
    PtNet one;
    one.T = cfg.T;
    one.models[job.n] = job.result.imitator;
    std::vector<int> labels;
    for (const auto& r : job.teacher.rows) labels.push_back(r.cluster);
    job.agreement = cluster_agreement(embed_batch(one, job.features, job.n), centroids, labels);
  });
  for (auto& job : jobs) {
    log_info("n=" + std::to_string(job.n) + ": imitator final loss " +
             (job.result.epoch_loss.empty() ? std::string("-") : format_double(job.result.epoch_loss.back())) +
             ", cluster agreement with the teacher " + format_double(job.agreement));
    net.models[job.n] = std::move(job.result.imitator);
  }
  save_ptnet(run_files::ptnet(run), net);
}

void stage_train_predictors(const fs::path& run, const PipelineConfig& cfg, const StageOptions& opt) {
  cfg.validate();
  const auto net = load_ptnet_for(run);
  const auto dict = load_dictionary(run);
  const auto h = cfg.horizon();

  std::vector<LabeledTrack> dataset;
  for (int n : selected_ns(cfg, opt)) {
    auto records = load_records(run_files::tracks_train(run, n), "segment");
    const auto start = dataset.size();
    for (auto& r : records) dataset.push_back({std::move(r.segment), -1});
    if (!has_behavior_model(net, dict, n)) {
      log_warn("n=" + std::to_string(n) + ": no behavior model, tracks go to the pooled predictor only");
      continue;
    }
    parallel_for(dataset.size() - start, [&](std::size_t i) {
      auto& item = dataset[start + i];
      item.cluster = predict_behavior(net, dict, slice_segment(item.track, 0, h.obs_len), cfg.alpha).cluster_id;
    });
  }
  if (dataset.empty()) throw DataError("no training tracks; every selected group is empty");
  std::map<std::pair<int, int>, int> sizes;
  for (const auto& item : dataset) ++sizes[{item.track.n, item.cluster}];
  for (const auto& [key, count] : sizes)
    log_debug("n=" + std::to_string(key.first) + " cluster " + std::to_string(key.second) + ": " +
              std::to_string(count) + " training tracks");

  const auto ens = train_ensemble(dataset, h, cfg.hidden, cfg.predictor_training());
  log_info("trained " + std::to_string(ens.cluster_models.size()) + " cluster predictors and " +
           std::to_string(ens.global_models.size()) + " pooled predictors on " + std::to_string(dataset.size()) +
           " tracks");
  if (fs::exists(run_files::ensemble(run))) fs::remove_all(run_files::ensemble(run));
  save_ensemble(run_files::ensemble(run), ens);
}

namespace {

std::vector<TestItem> load_test_items(const fs::path& run, const PipelineConfig& cfg, const StageOptions& opt,
                                      const std::map<std::string, SceneNorm>& norms) {
  std::vector<SegmentRecord> records;
  if (!opt.tracks.empty()) {
    records = read_segments(opt.tracks);
  } else {
    for (int n : selected_ns(cfg, opt)) {
      auto part = load_records(run_files::tracks_test(run, n), "segment");
      std::move(part.begin(), part.end(), std::back_inserter(records));
    }
  }
  std::vector<TestItem> items;
  for (auto& r : records) {
    if (opt.scene && r.segment.scene_id != *opt.scene) continue;
    const auto it = norms.find(r.segment.scene_id);
    if (it == norms.end()) throw DataError("no normalization for scene '" + r.segment.scene_id + "'");
    items.push_back({std::move(r.segment), it->second.params});
  }
  return items;
}

}  // namespace

void stage_predict(const fs::path& run, const PipelineConfig& cfg, const StageOptions& opt) {
  cfg.validate();
  const auto ens = load_ensemble_for(run);
  const auto net = load_ptnet_for(run);
  const auto dict = load_dictionary(run);
  const auto norms = load_norms(run);
  const auto items = load_test_items(run, cfg, opt, norms);

  std::vector<std::vector<PredictionRow>> per_item(items.size());
  parallel_for(items.size(), [&](std::size_t i) {
    const auto& item = items[i];
    const auto task = make_task(item.track, ens.horizon, item.norm);
    const auto pred = predict_future(task, net, dict, ens, cfg.alpha);
    const auto pos = pred.denormalized(item.norm);
    const auto id = item.track.id();
    for (int p = 0; p < item.track.n; ++p)
      for (int t = 0; t < ens.horizon.pred_len; ++t)
        per_item[i].push_back({id, p, t, pos[static_cast<std::size_t>(p) * ens.horizon.pred_len + t]});
  });
  std::vector<PredictionRow> rows;
  for (auto& v : per_item) std::move(v.begin(), v.end(), std::back_inserter(rows));
  auto out = open_write(run_files::predictions(run));
  write_predictions(out, rows);
  log_info("predicted " + std::to_string(items.size()) + " tracks");
}

EvaluationReport stage_evaluate(const fs::path& run, const PipelineConfig& cfg, const StageOptions& opt) {
  cfg.validate();
  const auto ens = load_ensemble_for(run);
  const auto net = load_ptnet_for(run);
  const auto dict = load_dictionary(run);
  const auto norms = load_norms(run);
  const auto items = load_test_items(run, cfg, opt, norms);

  auto report = evaluate(items, net, dict, ens, ens.horizon, cfg.alpha);
  {
    auto out = open_write(run_files::report_csv(run));
    report.write_csv(out);
  }
  {
    auto out = open_write(run_files::report_text(run));
    report.write_text(out);
  }
  if (items.empty()) throw EmptyTestSet("no held-out tracks to evaluate");
  std::ostringstream text;
  report.write_text(text);
  log_info("evaluation (scene units)\n" + text.str());
  return report;
}

namespace {

struct LabeledGroup {
  int n = 0;
  std::vector<Segment> segments;  ///< unrotated, scene units
  std::vector<int> clusters;
};

/// Behavior labels of every unrotated segment, read by the imitator.
std::vector<LabeledGroup> labeled_groups(const fs::path& run, const PipelineConfig& cfg, const StageOptions& opt,
                                         const PtNet& net, const BehaviorDictionary& dict,
                                         const std::map<std::string, SceneNorm>& norms) {
  std::vector<LabeledGroup> out;
  for (int n : selected_ns(cfg, opt)) {
    if (!has_behavior_model(net, dict, n)) continue;
    auto records = load_records(run_files::segments(run, n), "segment");
    LabeledGroup g;
    g.n = n;
    std::vector<FeatureVector> features;
    for (auto& r : records) {
      if (r.segment.rotation_deg != 0.0) continue;
      if (opt.scene && r.segment.scene_id != *opt.scene) continue;
      features.push_back(r.features.values.empty() ? assemble_features(r.segment, cfg.alpha)
                                                   : std::move(r.features));
      g.segments.push_back(std::move(r.segment));
    }
    const auto coords = embed_batch(net, features, n);
    for (const auto& c : coords) g.clusters.push_back(assign_cluster(c, dict, n));
    for (auto& s : g.segments) {
      const auto it = norms.find(s.scene_id);
      if (it == norms.end()) throw DataError("no normalization for scene '" + s.scene_id + "'");
      for (auto& p : s.positions) p = it->second.params.denormalize(p);
    }
    out.push_back(std::move(g));
  }
  return out;
}

std::vector<LabeledSegment> as_labeled(const LabeledGroup& g) {
  std::vector<LabeledSegment> out;
  for (std::size_t i = 0; i < g.segments.size(); ++i) out.push_back({&g.segments[i], g.clusters[i]});
  return out;
}

}  // namespace

void stage_maps(const fs::path& run, const PipelineConfig& cfg, const StageOptions& opt) {
  cfg.validate();
  const auto norms = load_norms(run);
  const auto net = load_ptnet_for(run);
  const auto dict = load_dictionary(run);
  const auto groups = labeled_groups(run, cfg, opt, net, dict, norms);
  const GridConfig grid{cfg.grid_width, cfg.grid_height};
  const auto dir = run / "maps";
  fs::create_directories(dir);
  std::size_t written = 0;
  for (const auto& [scene, norm] : norms) {
    if (opt.scene && scene != *opt.scene) continue;
    for (const auto& g : groups) {
      const auto labeled = as_labeled(g);
      const auto stem = "map_" + scene + "_n" + std::to_string(g.n);
      for (const auto& c : dict.clusters(g.n)) {
        const auto map = behavior_map(labeled, scene, g.n, {c.cluster_id}, norm.bounds, grid);
        const auto name = stem + "_c" + std::to_string(c.cluster_id);
        write_text_file(dir / (name + ".svg"), render_svg(map));
        auto csv = open_write(dir / (name + ".csv"));
        write_map_csv(csv, map);
        ++written;
      }
      if (!opt.overlay.empty()) {
        std::vector<BehaviorMap> maps;
        for (int c : opt.overlay) maps.push_back(behavior_map(labeled, scene, g.n, {c}, norm.bounds, grid));
        write_text_file(dir / (stem + "_overlay_" + join_ints(opt.overlay) + ".svg"), render_overlay_svg(maps));
      }
    }
  }
  log_info("wrote " + std::to_string(written) + " behavior maps to " + dir.string());
}

void stage_hist(const fs::path& run, const PipelineConfig& cfg, const StageOptions& opt) {
  cfg.validate();
  const auto norms = load_norms(run);
  const auto net = load_ptnet_for(run);
  const auto dict = load_dictionary(run);
  const auto groups = labeled_groups(run, cfg, opt, net, dict, norms);
  const auto dir = run / "hist";
  fs::create_directories(dir);
  for (const auto& g : groups) {
    std::vector<Assignment> assignments;
    for (std::size_t i = 0; i < g.segments.size(); ++i)
      assignments.push_back({g.segments[i].scene_id, g.n, g.clusters[i]});
    const int k = static_cast<int>(dict.clusters(g.n).size());
    auto emit = [&](const BehaviorHistogram& h, const std::string& scene) {
      const auto name = "hist_" + scene + "_n" + std::to_string(g.n);
      write_text_file(dir / (name + ".svg"), render_svg(h));
      auto csv = open_write(dir / (name + ".csv"));
      write_histogram_csv(csv, h);
    };
    for (const auto& [scene, norm] : norms) {
      if (opt.scene && scene != *opt.scene) continue;
      emit(behavior_histogram(assignments, scene, g.n, k), scene);
    }
    if (!opt.scene) emit(behavior_histogram(assignments, std::nullopt, g.n, k), "all");
  }
}

void stage_samples(const fs::path& run, const PipelineConfig& cfg, const StageOptions& opt) {
  cfg.validate();
  const auto norms = load_norms(run);
  const auto net = load_ptnet_for(run);
  const auto dict = load_dictionary(run);
  const auto groups = labeled_groups(run, cfg, opt, net, dict, norms);
  const auto dir = run / "samples";
  fs::create_directories(dir);
  for (const auto& g : groups) {
    const auto plots = sample_cluster_plots(as_labeled(g), cfg.samples_per_cluster,
                                            derive_seed(cfg.seed, {kSamples, static_cast<std::uint64_t>(g.n)}));
    for (const auto& [c, svg] : plots)
      write_text_file(dir / ("cluster_samples_n" + std::to_string(g.n) + "_c" + std::to_string(c) + ".svg"), svg);
  }
}

EvaluationReport run_pipeline(const fs::path& in, const fs::path& run, const PipelineConfig& cfg,
                              const StageOptions& opt) {
  cfg.validate();
  fs::create_directories(run);
  write_text_file(run_files::run_config(run), format_config(cfg));
  StageOptions all = opt;
  all.scene.reset();
  all.tracks.clear();
  stage_ingest(in, run, opt);
  stage_segment(run, cfg, all);
  stage_embed(run, cfg, all);
  stage_cluster(run, cfg, all);
  if (!opt.labels.empty()) stage_label(run, opt);
  stage_train_ptnet(run, cfg, all);
  stage_train_predictors(run, cfg, all);
  stage_maps(run, cfg, all);
  stage_hist(run, cfg, all);
  stage_samples(run, cfg, all);
  stage_predict(run, cfg, all);
  return stage_evaluate(run, cfg, all);
}

}  // namespace peddict
