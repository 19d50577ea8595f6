#include "peddict/artifacts.hpp"

#include <fstream>
#include <sstream>

namespace peddict {

namespace {

std::string magic(std::string_view kind) { return "peddict/" + std::string(kind) + "/v1"; }

class LineReader {
 public:
  LineReader(std::istream& in, std::string kind) : in_(in), kind_(std::move(kind)) {}

  std::string next() {
    std::string line;
    if (!std::getline(in_, line)) throw FormatError(kind_ + ": truncated file after line " + std::to_string(line_no_));
    ++line_no_;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
  }

  void expect_magic() {
    std::string line;
    if (!std::getline(in_, line)) throw FormatError(kind_ + ": empty file");
    ++line_no_;
    if (trim(line) != magic(kind_))
      throw FormatError("expected '" + magic(kind_) + "', found '" + std::string(trim(line)) + "'");
  }

  /// Reads "<key> <value>" and returns value.
  std::string keyed(std::string_view key) {
    const auto line = next();
    if (line.rfind(std::string(key) + " ", 0) != 0)
      throw FormatError(kind_ + " line " + std::to_string(line_no_) + ": expected '" + std::string(key) + "'");
    return line.substr(key.size() + 1);
  }

  std::size_t count() { return static_cast<std::size_t>(parse_int(keyed("count"))); }

  [[noreturn]] void fail(const std::string& what) const {
    throw FormatError(kind_ + " line " + std::to_string(line_no_) + ": " + what);
  }

  template <class F>
  auto guarded(F&& f) {
    try {
      return f();
    } catch (const FormatError&) {
      throw;
    } catch (const Error& e) {
      fail(e.what());
    }
  }

 private:
  std::istream& in_;
  std::string kind_;
  std::size_t line_no_ = 0;
};

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return in;
}

}  // namespace

// ---------------------------------------------------------------------------

void write_embedding(std::ostream& out, const EmbeddingTable& table) {
  out << magic("embedding") << '\n' << "n " << table.n << '\n' << "count " << table.rows.size() << '\n';
  out << "segment_id,n,coord_x,coord_y,cluster\n";
  for (const auto& r : table.rows) {
    out << r.segment_id << ',' << table.n << ',' << format_double(r.coord.x) << ',' << format_double(r.coord.y);
    if (r.cluster >= 0) out << ',' << r.cluster;
    out << '\n';
  }
}

EmbeddingTable read_embedding(std::istream& in) {
  LineReader rd(in, "embedding");
  rd.expect_magic();
  EmbeddingTable t;
  t.n = static_cast<int>(rd.guarded([&] { return parse_int(rd.keyed("n")); }));
  const auto count = rd.guarded([&] { return rd.count(); });
  rd.next();  // column header
  t.rows.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto line = rd.next();
    rd.guarded([&] {
      const auto f = split(line, ',');
      if (f.size() != 4 && f.size() != 5) rd.fail("expected 4 or 5 fields");
      if (parse_int(f[1]) != t.n) rd.fail("row n does not match table n");
      EmbeddingRow r{std::string(f[0]), {parse_double(f[2]), parse_double(f[3])}, -1};
      if (f.size() == 5) r.cluster = static_cast<int>(parse_int(f[4]));
      t.rows.push_back(std::move(r));
      return 0;
    });
  }
  return t;
}

void write_dictionary(std::ostream& out, const BehaviorDictionary& dict) {
  std::size_t total = 0;
  for (const auto& [n, cl] : dict.groups) total += cl.size();
  out << magic("dict") << '\n' << "count " << total << '\n';
  out << "n,cluster_id,centroid_x,centroid_y,count,label\n";
  for (const auto& [n, cl] : dict.groups)
    for (const auto& c : cl) {
      if (c.label.find('\n') != std::string::npos) throw DataError("cluster labels may not contain newlines");
      out << n << ',' << c.cluster_id << ',' << format_double(c.centroid.x) << ',' << format_double(c.centroid.y)
          << ',' << c.count << ',' << c.label << '\n';
    }
}

BehaviorDictionary read_dictionary(std::istream& in) {
  LineReader rd(in, "dict");
  rd.expect_magic();
  const auto count = rd.guarded([&] { return rd.count(); });
  rd.next();
  BehaviorDictionary dict;
  for (std::size_t i = 0; i < count; ++i) {
    const auto line = rd.next();
    rd.guarded([&] {
      // The label is everything after the fifth comma.
      std::vector<std::string_view> f;
      std::string_view rest(line);
      for (int k = 0; k < 5; ++k) {
        const auto pos = rest.find(',');
        if (pos == std::string_view::npos) rd.fail("expected 6 fields");
        f.push_back(rest.substr(0, pos));
        rest.remove_prefix(pos + 1);
      }
      const int n = static_cast<int>(parse_int(f[0]));
      Cluster c{static_cast<int>(parse_int(f[1])), {parse_double(f[2]), parse_double(f[3])}, std::string(rest),
                parse_int(f[4])};
      auto& group = dict.groups[n];
      if (c.cluster_id != static_cast<int>(group.size())) rd.fail("cluster ids must be dense and ascending");
      group.push_back(std::move(c));
      return 0;
    });
  }
  return dict;
}

void write_mlp(std::ostream& out, const MlpModel& model) {
  model.validate();
  out << magic("mlp") << '\n' << "dims";
  for (const int d : model.layer_dims) out << ' ' << d;
  out << '\n';
  for (std::size_t k = 0; k < model.layers.size(); ++k) {
    const auto& l = model.layers[k];
    out << "layer " << k << ' ' << l.weight.rows() << ' ' << l.weight.cols() << " residual " << (l.residual ? 1 : 0)
        << '\n';
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) out << (c ? " " : "") << format_double(l.weight(r, c));
      out << '\n';
    }
    out << "bias";
    for (Eigen::Index c = 0; c < l.bias.size(); ++c) out << ' ' << format_double(l.bias(c));
    out << '\n';
  }
  out << "end\n";
}

MlpModel read_mlp(std::istream& in) {
  LineReader rd(in, "mlp");
  rd.expect_magic();
  return rd.guarded([&] {
    std::vector<int> dims;
    const auto dims_line = rd.keyed("dims");
    for (auto tok : split(dims_line, ' ')) dims.push_back(static_cast<int>(parse_int(tok)));
    MlpModel m = mlp_zeros(dims);
    for (std::size_t k = 0; k < m.layers.size(); ++k) {
      auto& l = m.layers[k];
      const auto head_line = rd.next();
      const auto head = split(head_line, ' ');
      if (head.size() != 6 || head[0] != "layer" || parse_int(head[1]) != static_cast<std::int64_t>(k) ||
          parse_int(head[2]) != l.weight.rows() || parse_int(head[3]) != l.weight.cols() || head[4] != "residual")
        rd.fail("bad layer header");
      l.residual = parse_int(head[5]) != 0;
      for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
        const auto row = rd.next();
        const auto vals = split(row, ' ');
        if (static_cast<Eigen::Index>(vals.size()) != l.weight.cols()) rd.fail("weight row has the wrong width");
        for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = parse_double(vals[static_cast<std::size_t>(c)]);
      }
      const auto bias_line = rd.next();
      const auto bias = split(bias_line, ' ');
      if (static_cast<Eigen::Index>(bias.size()) != l.bias.size() + 1 || bias[0] != "bias") rd.fail("bad bias row");
      for (Eigen::Index c = 0; c < l.bias.size(); ++c) l.bias(c) = parse_double(bias[static_cast<std::size_t>(c) + 1]);
    }
    if (trim(rd.next()) != "end") rd.fail("missing end marker");
    m.validate();
    return m;
  });
}

std::string artifact_kind(const Artifact& artifact) {
  return std::visit(
      [](const auto& a) -> std::string {
        using T = std::decay_t<decltype(a)>;
        if constexpr (std::is_same_v<T, EmbeddingTable>) return "embedding";
        else if constexpr (std::is_same_v<T, BehaviorDictionary>) return "dict";
        else return "mlp";
      },
      artifact);
}

void serialize_artifact(const Artifact& artifact, const std::filesystem::path& path) {
  auto out = open_out(path);
  std::visit(
      [&](const auto& a) {
        using T = std::decay_t<decltype(a)>;
        if constexpr (std::is_same_v<T, EmbeddingTable>) write_embedding(out, a);
        else if constexpr (std::is_same_v<T, BehaviorDictionary>) write_dictionary(out, a);
        else write_mlp(out, a);
      },
      artifact);
  if (!out) throw DataError("failed writing " + path.string());
}

Artifact deserialize_artifact(const std::filesystem::path& path) {
  std::string first;
  {
    auto probe = open_in(path);
    std::getline(probe, first);
  }
  const auto head = trim(first);
  const auto parts = split(head, '/');
  if (parts.size() != 3 || parts[0] != "peddict")
    throw FormatError(path.string() + ": not a peddict artifact (header '" + std::string(head) + "')");
  if (parts[2] != "v1")
    throw FormatError(path.string() + ": unsupported version '" + std::string(parts[2]) + "'");
  auto in = open_in(path);
  try {
    if (parts[1] == "embedding") return read_embedding(in);
    if (parts[1] == "dict") return read_dictionary(in);
    if (parts[1] == "mlp") return read_mlp(in);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  throw FormatError(path.string() + ": unknown artifact kind '" + std::string(parts[1]) + "'");
}

// ---------------------------------------------------------------------------

void save_ptnet(const std::filesystem::path& dir, const PtNet& net) {
  std::filesystem::create_directories(dir);
  auto out = open_out(dir / "manifest.txt");
  out << magic("ptnet") << '\n' << "T " << net.T << '\n' << "count " << net.models.size() << '\n';
  out << "n,d_in,affine_scale_x,affine_scale_y,affine_shift_x,affine_shift_y\n";
  for (const auto& [n, im] : net.models) {
    out << n << ',' << im.model.input_dim() << ',' << format_double(im.scale.x) << ',' << format_double(im.scale.y)
        << ',' << format_double(im.shift.x) << ',' << format_double(im.shift.y) << '\n';
    serialize_artifact(im.model, dir / ("ptnet_n" + std::to_string(n) + ".mlp"));
  }
}

PtNet load_ptnet(const std::filesystem::path& dir) {
  auto in = open_in(dir / "manifest.txt");
  LineReader rd(in, "ptnet");
  rd.expect_magic();
  PtNet net;
  net.T = static_cast<int>(rd.guarded([&] { return parse_int(rd.keyed("T")); }));
  const auto count = rd.guarded([&] { return rd.count(); });
  rd.next();
  for (std::size_t i = 0; i < count; ++i) {
    const auto line = rd.next();
    rd.guarded([&] {
      const auto f = split(line, ',');
      if (f.size() != 6) rd.fail("expected 6 fields");
      Imitator im;
      im.n = static_cast<int>(parse_int(f[0]));
      im.scale = {parse_double(f[2]), parse_double(f[3])};
      im.shift = {parse_double(f[4]), parse_double(f[5])};
      im.model = load_artifact<MlpModel>(dir / ("ptnet_n" + std::to_string(im.n) + ".mlp"));
      if (im.model.input_dim() != parse_int(f[1]) ||
          static_cast<std::size_t>(im.model.input_dim()) != feature_length(im.n, net.T) || im.model.output_dim() != 2)
        rd.fail("imitator dimensions do not match n=" + std::to_string(im.n) + ", T=" + std::to_string(net.T));
      net.models[im.n] = std::move(im);
      return 0;
    });
  }
  return net;
}

void save_ensemble(const std::filesystem::path& dir, const PredictorEnsemble& ens) {
  std::filesystem::create_directories(dir);
  auto out = open_out(dir / "manifest.txt");
  out << magic("ensemble") << '\n'
      << "obs_len " << ens.horizon.obs_len << '\n'
      << "pred_len " << ens.horizon.pred_len << '\n'
      << "count " << ens.global_models.size() + ens.cluster_models.size() << '\n';
  out << "n,cluster,file\n";
  for (const auto& [n, m] : ens.global_models) {
    const auto file = "global_n" + std::to_string(n) + ".mlp";
    out << n << ",global," << file << '\n';
    serialize_artifact(m, dir / file);
  }
  for (const auto& [key, m] : ens.cluster_models) {
    const auto file = "n" + std::to_string(key.first) + "_c" + std::to_string(key.second) + ".mlp";
    out << key.first << ',' << key.second << ',' << file << '\n';
    serialize_artifact(m, dir / file);
  }
}

PredictorEnsemble load_ensemble(const std::filesystem::path& dir) {
  auto in = open_in(dir / "manifest.txt");
  LineReader rd(in, "ensemble");
  rd.expect_magic();
  PredictorEnsemble ens;
  rd.guarded([&] {
    ens.horizon.obs_len = static_cast<int>(parse_int(rd.keyed("obs_len")));
    ens.horizon.pred_len = static_cast<int>(parse_int(rd.keyed("pred_len")));
    return 0;
  });
  const auto count = rd.guarded([&] { return rd.count(); });
  rd.next();
  for (std::size_t i = 0; i < count; ++i) {
    const auto line = rd.next();
    rd.guarded([&] {
      const auto f = split(line, ',');
      if (f.size() != 3) rd.fail("expected 3 fields");
      const int n = static_cast<int>(parse_int(f[0]));
      auto model = load_artifact<MlpModel>(dir / std::string(f[2]));
      if (model.input_dim() != n * ens.horizon.obs_len * 2 || model.output_dim() != n * ens.horizon.pred_len * 2)
        rd.fail("model dimensions do not match n=" + std::to_string(n));
      if (f[1] == "global")
        ens.global_models[n] = std::move(model);
      else
        ens.cluster_models[{n, static_cast<int>(parse_int(f[1]))}] = std::move(model);
      return 0;
    });
  }
  return ens;
}

void write_norms(std::ostream& out, const std::map<std::string, SceneNorm>& norms) {
  out << magic("norm") << '\n' << "count " << norms.size() << '\n';
  out << "scene,center_x,center_y,half_extent,xmin,ymin,xmax,ymax\n";
  for (const auto& [scene, s] : norms)
    out << scene << ',' << format_double(s.params.center.x) << ',' << format_double(s.params.center.y) << ','
        << format_double(s.params.half_extent) << ',' << format_double(s.bounds.xmin) << ','
        << format_double(s.bounds.ymin) << ',' << format_double(s.bounds.xmax) << ',' << format_double(s.bounds.ymax)
        << '\n';
}

std::map<std::string, SceneNorm> read_norms(std::istream& in) {
  LineReader rd(in, "norm");
  rd.expect_magic();
  const auto count = rd.guarded([&] { return rd.count(); });
  rd.next();
  std::map<std::string, SceneNorm> out;
  for (std::size_t i = 0; i < count; ++i) {
    const auto line = rd.next();
    rd.guarded([&] {
      const auto f = split(line, ',');
      if (f.size() != 8) rd.fail("expected 8 fields");
      SceneNorm s;
      s.params.center = {parse_double(f[1]), parse_double(f[2])};
      s.params.half_extent = parse_double(f[3]);
      s.bounds = {parse_double(f[4]), parse_double(f[5]), parse_double(f[6]), parse_double(f[7])};
      out[std::string(f[0])] = s;
      return 0;
    });
  }
  return out;
}

void write_predictions(std::ostream& out, const std::vector<PredictionRow>& rows) {
  out << magic("pred") << '\n' << "count " << rows.size() << '\n' << "segment_id,person,step,x,y\n";
  for (const auto& r : rows)
    out << r.segment_id << ',' << r.person << ',' << r.step << ',' << format_double(r.pos.x) << ','
        << format_double(r.pos.y) << '\n';
}

std::vector<PredictionRow> read_predictions(std::istream& in) {
  LineReader rd(in, "pred");
  rd.expect_magic();
  const auto count = rd.guarded([&] { return rd.count(); });
  rd.next();
  std::vector<PredictionRow> rows;
  for (std::size_t i = 0; i < count; ++i) {
    const auto line = rd.next();
    rd.guarded([&] {
      const auto f = split(line, ',');
      if (f.size() != 5) rd.fail("expected 5 fields");
      rows.push_back({std::string(f[0]), static_cast<int>(parse_int(f[1])), static_cast<int>(parse_int(f[2])),
                      {parse_double(f[3]), parse_double(f[4])}});
      return 0;
    });
  }
  return rows;
}

}  // namespace peddict
