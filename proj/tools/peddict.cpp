// peddict: command-line front end for the behavior dictionary pipeline.
//
// Every stage reads and writes files in a run directory (--out), so stages
// can be re-run one at a time. Exit codes: 0 success, 1 usage error,
// 2 data error, 3 nothing to evaluate.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "peddict/artifacts.hpp"
#include "peddict/dataset_io.hpp"
#include "peddict/pipeline.hpp"

namespace fs = std::filesystem;
using namespace peddict;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitEmptyTest = 3;

struct Flags {
  std::string in;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string config;
  std::optional<int> n;
  std::optional<int> k;
  std::optional<unsigned> threads;
  std::optional<std::string> scene;
  std::string family;
  int count = 100;
  double noise = 0.01;
  double direction = 0.0;
  std::vector<std::string> set;
  std::vector<int> overlay;
  std::string columns;
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--seed", f.seed, "Seed for every stochastic step");
  cmd->add_option("--config", f.config, "Config file of key = value lines")->check(CLI::ExistingFile);
  cmd->add_option("--threads", f.threads, "Worker cap (0: all cores)");
  cmd->add_option("--set", f.set, "Override one config key, key=value (repeatable)");
}

CLI::App* add_stage(CLI::App& app, const std::string& name, const std::string& help, Flags& f) {
  auto* cmd = app.add_subcommand(name, help);
  cmd->add_option("--out", f.out, "Run directory")->required();
  cmd->add_option("--n", f.n, "Only this pedestrian count");
  add_common(cmd, f);
  return cmd;
}

PipelineConfig effective_config(const Flags& f) {
  PipelineConfig cfg;
  if (!f.config.empty()) read_config(cfg, fs::path(f.config));
  for (const auto& kv : f.set) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    set_config_value(cfg, std::string(trim(std::string_view(kv).substr(0, eq))),
                     std::string(trim(std::string_view(kv).substr(eq + 1))));
  }
  if (f.seed) cfg.seed = *f.seed;
  if (f.threads) cfg.threads = *f.threads;
  cfg.validate();
  set_max_threads(cfg.threads);
  return cfg;
}

void log_config(const std::string& command, const PipelineConfig& cfg) {
  log_info(command + ": seed " + std::to_string(cfg.seed) + ", effective config:\n" + format_config(cfg));
}

StageOptions stage_options(const Flags& f) {
  StageOptions opt;
  opt.n = f.n;
  opt.k = f.k;
  opt.scene = f.scene;
  opt.overlay = f.overlay;
  if (!f.columns.empty()) {
    const auto parts = split(f.columns, ',');
    if (parts.size() != 4) throw ConfigError("--columns expects frame,ped_id,x,y column numbers");
    ObsmatColumns c;
    try {
      c.frame = static_cast<int>(parse_int(parts[0]));
      c.ped_id = static_cast<int>(parse_int(parts[1]));
      c.x = static_cast<int>(parse_int(parts[2]));
      c.y = static_cast<int>(parse_int(parts[3]));
    } catch (const DataError&) {
      throw ConfigError("--columns expects integers, got '" + f.columns + "'");
    }
    c.min_columns = std::max({c.frame, c.ped_id, c.x, c.y});
    opt.columns = c;
  }
  return opt;
}

std::vector<BehaviorFamily> families(const std::string& list) {
  std::vector<BehaviorFamily> out;
  if (list == "all") {
    for (auto f : {BehaviorFamily::standing, BehaviorFamily::straight_walk, BehaviorFamily::leader_follower,
                   BehaviorFamily::side_by_side, BehaviorFamily::opposite_pass, BehaviorFamily::congregate})
      out.push_back(f);
    return out;
  }
  for (auto name : split(list, ',')) out.push_back(parse_family(trim(name)));
  return out;
}

void run_synth(const Flags& f, const PipelineConfig& cfg) {
  const auto fams = families(f.family);
  const fs::path out(f.out);
  const bool single_file = out.extension() == ".csv";
  if (single_file && fams.size() > 1) throw ConfigError("several families need a run directory as --out");
  for (std::size_t i = 0; i < fams.size(); ++i) {
    SyntheticSpec spec;
    spec.family = fams[i];
    spec.n_people = f.n ? *f.n : default_people(fams[i]);
    spec.count = f.count;
    spec.noise_sigma = f.noise;
    spec.direction = f.direction * 3.14159265358979323846 / 180.0;
    spec.scene_id = f.scene && fams.size() == 1 ? *f.scene : "synth_" + to_string(fams[i]);
    const auto table = generate_synthetic(spec, derive_seed(cfg.seed, {static_cast<std::uint64_t>(fams[i])}));
    const auto path = single_file ? out : run_files::tables(out) / (spec.scene_id + ".csv");
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    write_canonical(path, table);
    log_info("synth " + to_string(fams[i]) + ": " + std::to_string(spec.count) + " groups of " +
             std::to_string(spec.n_people) + " -> " + path.string());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pedestrian behavior dictionary: segment, embed, cluster, imitate, predict, report"};
  app.require_subcommand(1);
  Flags f;

  auto* ingest = app.add_subcommand("ingest", "Import canonical CSV or obsmat files into <out>/tables");
  ingest->add_option("--in", f.in, "Trajectory file or directory")->required();
  ingest->add_option("--out", f.out, "Run directory")->required();
  ingest->add_option("--scene", f.scene, "Scene name for a single input file");
  ingest->add_option("--columns", f.columns, "1-based frame,ped_id,x,y columns of whitespace files");
  add_common(ingest, f);

  auto* synth = app.add_subcommand("synth", "Generate a synthetic behavior family as canonical CSV");
  synth->add_option("--family", f.family, "Family name, comma list, or 'all'")->required();
  synth->add_option("--count", f.count, "Number of groups")->check(CLI::PositiveNumber);
  synth->add_option("--n", f.n, "People per group (family default otherwise)");
  synth->add_option("--noise", f.noise, "Gaussian position noise sigma")->check(CLI::NonNegativeNumber);
  synth->add_option("--direction", f.direction, "Heading in degrees");
  synth->add_option("--scene", f.scene, "Scene name");
  synth->add_option("--out", f.out, "Output .csv file or run directory")->required();
  add_common(synth, f);

  auto* segment = add_stage(app, "segment", "Normalize scenes, cut segments and prediction tracks", f);
  auto* embed = add_stage(app, "embed", "t-SNE embedding per pedestrian count", f);
  auto* cluster = add_stage(app, "cluster", "k-means behavior dictionary", f);
  cluster->add_option("--k", f.k, "Cluster count (overrides k_per_n)")->check(CLI::PositiveNumber);
  auto* label = add_stage(app, "label", "Attach names to dictionary clusters", f);
  label->add_option("--in", f.in, "Labels CSV: n,cluster_id,label")->required()->check(CLI::ExistingFile);
  auto* train_ptnet = add_stage(app, "train-ptnet", "Train the imitator networks", f);
  auto* train_pred = add_stage(app, "train-predictors", "Train per-cluster trajectory predictors", f);
  auto* predict = add_stage(app, "predict", "Predict futures of held-out (or --in) tracks", f);
  predict->add_option("--in", f.in, "Track file in segment format")->check(CLI::ExistingFile);
  predict->add_option("--scene", f.scene, "Only this scene");
  auto* evaluate = add_stage(app, "evaluate", "ADE/FDE report on held-out tracks", f);
  evaluate->add_option("--scene", f.scene, "Only this scene");
  auto* maps = add_stage(app, "maps", "Behavior occupancy maps (SVG + CSV)", f);
  maps->add_option("--scene", f.scene, "Only this scene");
  maps->add_option("--overlay", f.overlay, "Clusters drawn together in one map")->delimiter(',');
  auto* hist = add_stage(app, "hist", "Behavior histograms per scene", f);
  hist->add_option("--scene", f.scene, "Only this scene");
  auto* samples = add_stage(app, "samples", "Sampled member trajectories per cluster", f);
  samples->add_option("--scene", f.scene, "Only this scene");

  auto* pipeline = app.add_subcommand("pipeline", "Run every stage from raw files to report");
  pipeline->add_option("--in", f.in, "Trajectory file or directory")->required();
  pipeline->add_option("--out", f.out, "Run directory")->required();
  pipeline->add_option("--n", f.n, "Only this pedestrian count");
  pipeline->add_option("--k", f.k, "Cluster count (overrides k_per_n)")->check(CLI::PositiveNumber);
  pipeline->add_option("--columns", f.columns, "1-based frame,ped_id,x,y columns of whitespace files");
  add_common(pipeline, f);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  const fs::path run(f.out);
  try {
    const auto cfg = effective_config(f);
    auto opt = stage_options(f);
    const auto* cmd = app.get_subcommands().front();
    log_config(cmd->get_name(), cfg);

    if (cmd == ingest) {
      stage_ingest(f.in, run, opt);
    } else if (cmd == synth) {
      run_synth(f, cfg);
    } else if (cmd == segment) {
      stage_segment(run, cfg, opt);
    } else if (cmd == embed) {
      stage_embed(run, cfg, opt);
    } else if (cmd == cluster) {
      stage_cluster(run, cfg, opt);
    } else if (cmd == label) {
      opt.labels = f.in;
      stage_label(run, opt);
    } else if (cmd == train_ptnet) {
      stage_train_ptnet(run, cfg, opt);
    } else if (cmd == train_pred) {
      stage_train_predictors(run, cfg, opt);
    } else if (cmd == predict) {
      opt.tracks = f.in;
      stage_predict(run, cfg, opt);
    } else if (cmd == evaluate) {
      stage_evaluate(run, cfg, opt);
    } else if (cmd == maps) {
      stage_maps(run, cfg, opt);
    } else if (cmd == hist) {
      stage_hist(run, cfg, opt);
    } else if (cmd == samples) {
      stage_samples(run, cfg, opt);
    } else if (cmd == pipeline) {
      run_pipeline(f.in, run, cfg, opt);
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const EmptyTestSet& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitEmptyTest;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return 0;
}
