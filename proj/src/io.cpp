// Copyright (C) 2026 metapose contributors
// SPDX-License-Identifier: Apache-2.0

#include "metapose/io.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "metapose/error.hpp"

namespace metapose::io {

using nlohmann::json;

namespace {

[[noreturn]] void schema(const std::string& msg) { throw Error(ErrorKind::kSchema, msg); }

const json& field(const json& j, const std::string& key) {
  if (!j.is_object() || !j.contains(key)) schema("missing field '" + key + "'");
  return j.at(key);
}

double number(const json& j, const std::string& what) {
  if (!j.is_number()) schema(what + " must be a number");
  return j.get<double>();
}

long long integer(const json& j, const std::string& what) {
  if (!j.is_number_integer()) schema(what + " must be an integer");
  return j.get<long long>();
}

const std::string& text(const json& j, const std::string& what) {
  if (!j.is_string()) schema(what + " must be a string");
  return j.get_ref<const std::string&>();
}

const json& array(const json& j, const std::string& what, std::size_t expected_size = std::string::npos) {
  if (!j.is_array()) schema(what + " must be an array");
  if (expected_size != std::string::npos && j.size() != expected_size) {
    schema(what + " has " + std::to_string(j.size()) + " entries, expected " + std::to_string(expected_size));
  }
  return j;
}

Eigen::VectorXd vector(const json& j, const std::string& what, std::size_t expected_size = std::string::npos) {
  array(j, what, expected_size);
  Eigen::VectorXd v(j.size());
  for (std::size_t k = 0; k < j.size(); ++k) v(k) = number(j[k], what);
  return v;
}

json to_json(const Eigen::Ref<const Eigen::VectorXd>& v) {
  json out = json::array();
  for (Eigen::Index k = 0; k < v.size(); ++k) out.push_back(v(k));
  return out;
}

json rows_to_json(const Eigen::MatrixXd& m) {
  json out = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) out.push_back(to_json(m.row(r).transpose()));
  return out;
}

Eigen::MatrixXd rows_from_json(const json& j, int rows, int cols, const std::string& what) {
  array(j, what, rows);
  Eigen::MatrixXd m(rows, cols);
  for (int r = 0; r < rows; ++r) m.row(r) = vector(j[r], what + " row", cols).transpose();
  return m;
}

json camera_to_json(const WeakCamera& c) {
  return {{"rot6d", to_json(c.rot.flat())}, {"shift", to_json(c.shift)}, {"log_scale", c.log_scale}};
}

WeakCamera camera_from_json(const json& j) {
  WeakCamera c;
  c.rot = Rot6D::from_flat(vector(field(j, "rot6d"), "rot6d", 6));
  c.shift = vector(field(j, "shift"), "shift", 2);
  c.log_scale = number(field(j, "log_scale"), "log_scale");
  rot6d_to_matrix(c.rot);  // rejects degenerate 6D pairs
  return c;
}

json cameras_to_json(const std::vector<WeakCamera>& cams) {
  json out = json::array();
  for (const auto& c : cams) out.push_back(camera_to_json(c));
  return out;
}

std::vector<WeakCamera> cameras_from_json(const json& j, int count) {
  array(j, "cameras", count);
  std::vector<WeakCamera> out;
  for (const auto& c : j) out.push_back(camera_from_json(c));
  return out;
}

void check_header(const json& j, const std::string& format, int version) {
  if (!j.is_object()) schema("document must be a JSON object");
  if (text(field(j, "format"), "format") != format) schema("expected a " + format + " document");
  if (integer(field(j, "version"), "version") != version) {
    schema(format + " version " + field(j, "version").dump() + " is not supported");
  }
}

json parse(const std::string& s) {
  try {
    return json::parse(s);
  } catch (const json::parse_error& e) {
    schema(std::string("invalid JSON: ") + e.what());
  }
}

// Schema-level wrapper: shape problems in a parsed document are schema errors.
template <typename F>
auto as_schema(F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kShapeMismatch || e.kind() == ErrorKind::kInvalidConfig ||
        e.kind() == ErrorKind::kNotARotation || e.kind() == ErrorKind::kDegenerateRotation) {
      schema(e.what());
    }
    throw;
  } catch (const json::exception& e) {
    schema(e.what());
  }
}

const char* activation_name(Activation a) { return a == Activation::kSelu ? "selu" : "linear"; }

Activation activation_from(const std::string& s) {
  if (s == "selu") return Activation::kSelu;
  if (s == "linear") return Activation::kLinear;
  schema("unknown activation '" + s + "'");
}

json layers_to_json(const std::vector<DenseLayer>& layers) {
  json out = json::array();
  for (const auto& l : layers) {
    json w = json::array();
    for (int r = 0; r < l.out(); ++r) {
      for (int c = 0; c < l.in(); ++c) w.push_back(l.weights(r, c));
    }
    out.push_back({{"activation", activation_name(l.activation)},
                   {"in", l.in()},
                   {"out", l.out()},
                   {"weights", std::move(w)},
                   {"bias", to_json(l.bias)}});
  }
  return out;
}

std::vector<DenseLayer> layers_from_json(const json& j) {
  array(j, "layers");
  std::vector<DenseLayer> out;
  for (const auto& lj : j) {
    const long long in = integer(field(lj, "in"), "in");
    const long long o = integer(field(lj, "out"), "out");
    if (in < 1 || o < 1) schema("layer widths must be positive");
    const Eigen::VectorXd w = vector(field(lj, "weights"), "weights", static_cast<std::size_t>(in * o));
    DenseLayer l;
    l.weights = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(w.data(), o, in);
    l.bias = vector(field(lj, "bias"), "bias", static_cast<std::size_t>(o));
    l.activation = activation_from(text(field(lj, "activation"), "activation"));
    out.push_back(std::move(l));
  }
  return out;
}

std::string format_value(double v) {
  if (!std::isfinite(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

double mean_of(std::vector<double> v) {
  v.erase(std::remove_if(v.begin(), v.end(), [](double x) { return !std::isfinite(x); }), v.end());
  if (v.empty()) return std::nan("");
  double s = 0.0;
  for (double x : v) s += x;
  return s / v.size();
}

double median_of(std::vector<double> v) {
  v.erase(std::remove_if(v.begin(), v.end(), [](double x) { return !std::isfinite(x); }), v.end());
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

template <typename T, typename F>
std::vector<T> read_jsonl(const std::string& path, F&& parse_line) {
  std::vector<T> out;
  int line_no = 0;
  for (const std::string& line : read_lines(path)) {
    ++line_no;
    try {
      out.push_back(parse_line(line));
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::kSchema) {
        schema(path + ":" + std::to_string(line_no) + ": " + e.what());
      }
      throw;
    }
  }
  return out;
}

template <typename T, typename F>
void write_jsonl(const std::string& path, const std::vector<T>& items, F&& to_line) {
  std::string content;
  for (const auto& item : items) {
    content += to_line(item);
    content += '\n';
  }
  write_file(path, content);
}

}  // namespace

std::string scene_to_json(const Scene& scene) {
  scene.validate();
  json j;
  j["format"] = "metapose-scene";
  j["version"] = kSceneVersion;
  j["id"] = scene.id;
  j["meta"] = {{"joints", scene.num_joints()},
               {"cameras", scene.num_cameras()},
               {"components", scene.num_components()},
               {"units", "mm"},
               {"seed", scene.seed},
               {"reference_camera", scene.reference_camera}};
  if (scene.gt) {
    j["gt"] = {{"pose", rows_to_json(scene.gt->pose.joints)}, {"cameras", cameras_to_json(scene.gt->cameras)}};
  }
  if (!scene.keypoints.empty()) {
    json k = json::array();
    for (const auto& kp : scene.keypoints) k.push_back(rows_to_json(kp.points));
    j["keypoints"] = std::move(k);
  }
  json mix = json::array();
  for (const auto& row : scene.mixtures) {
    json jr = json::array();
    for (const auto& g : row) {
      json comps = json::array();
      for (const auto& c : g.components) {
        comps.push_back({{"weight", c.weight}, {"mean", to_json(c.mean)}, {"sigma", c.sigma}});
      }
      jr.push_back(std::move(comps));
    }
    mix.push_back(std::move(jr));
  }
  j["mixtures"] = std::move(mix);
  json mono = json::array();
  for (const auto& q : scene.monocular) mono.push_back(rows_to_json(q.joints));
  j["monocular"] = std::move(mono);
  json edges = json::array();
  for (const auto& [a, b] : scene.skeleton.edges) edges.push_back({a, b});
  j["skeleton"] = std::move(edges);
  if (scene.bone_prior) {
    j["bone_prior"] = {{"target", to_json(scene.bone_prior->target)}, {"sigma_b", scene.bone_prior->sigma_b}};
  }
  return j.dump();
}

Scene scene_from_json(const std::string& line) {
  return as_schema([&] {
    const json j = parse(line);
    check_header(j, "metapose-scene", kSceneVersion);
    const json& meta = field(j, "meta");
    const long long jn = integer(field(meta, "joints"), "meta.joints");
    const long long cn = integer(field(meta, "cameras"), "meta.cameras");
    const long long mn = integer(field(meta, "components"), "meta.components");
    if (jn < 3 || cn < 1 || mn < 1) schema("meta sizes out of range");
    const int joints = static_cast<int>(jn);
    const int cameras = static_cast<int>(cn);

    Scene s;
    s.id = text(field(j, "id"), "id");
    const json& seed = field(meta, "seed");
    if (!seed.is_number_unsigned() && !seed.is_number_integer()) schema("meta.seed must be an integer");
    s.seed = seed.get<std::uint64_t>();
    s.reference_camera = static_cast<int>(integer(field(meta, "reference_camera"), "meta.reference_camera"));
    text(field(meta, "units"), "meta.units");

    if (j.contains("gt")) {
      const json& gt = j.at("gt");
      s.gt = GroundTruth{Pose3D(rows_from_json(field(gt, "pose"), joints, 3, "gt.pose")),
                         cameras_from_json(field(gt, "cameras"), cameras)};
    }
    if (j.contains("keypoints")) {
      for (const auto& k : array(j.at("keypoints"), "keypoints", cameras)) {
        s.keypoints.emplace_back(rows_from_json(k, joints, 2, "keypoints"));
      }
    }
    for (const auto& row : array(field(j, "mixtures"), "mixtures", cameras)) {
      std::vector<GaussianMixture2D> out_row;
      for (const auto& g : array(row, "mixtures row", joints)) {
        GaussianMixture2D mix;
        for (const auto& c : array(g, "mixture")) {
          mix.components.push_back({number(field(c, "weight"), "weight"), vector(field(c, "mean"), "mean", 2),
                                    number(field(c, "sigma"), "sigma")});
        }
        if (mix.size() > mn) schema("mixture has more components than meta.components");
        out_row.push_back(std::move(mix));
      }
      s.mixtures.push_back(std::move(out_row));
    }
    for (const auto& q : array(field(j, "monocular"), "monocular", cameras)) {
      s.monocular.emplace_back(rows_from_json(q, joints, 3, "monocular"));
    }
    for (const auto& e : array(field(j, "skeleton"), "skeleton")) {
      array(e, "edge", 2);
      s.skeleton.edges.emplace_back(static_cast<int>(integer(e[0], "edge")), static_cast<int>(integer(e[1], "edge")));
    }
    if (j.contains("bone_prior")) {
      const json& b = j.at("bone_prior");
      s.bone_prior = BonePrior{vector(field(b, "target"), "bone_prior.target"),
                               number(field(b, "sigma_b"), "bone_prior.sigma_b")};
    }
    if (s.num_components() != mn) schema("meta.components does not match the mixtures");
    s.validate();
    return s;
  });
}

std::vector<Scene> read_scenes(const std::string& path) { return read_jsonl<Scene>(path, scene_from_json); }

void write_scenes(const std::string& path, const std::vector<Scene>& scenes) {
  write_jsonl(path, scenes, scene_to_json);
}

std::string solution_to_json(const Solution& s) {
  json j;
  j["format"] = "metapose-solution";
  j["version"] = kSolutionVersion;
  j["scene_id"] = s.scene_id;
  j["method"] = s.method;
  j["gauge"] = s.state.gauge;
  j["pose"] = rows_to_json(s.state.pose.joints);
  j["cameras"] = cameras_to_json(s.state.cameras);
  j["wall_time"] = s.wall_time;
  return j.dump();
}

Solution solution_from_json(const std::string& line) {
  return as_schema([&] {
    const json j = parse(line);
    check_header(j, "metapose-solution", kSolutionVersion);
    Solution s;
    s.scene_id = text(field(j, "scene_id"), "scene_id");
    s.method = text(field(j, "method"), "method");
    const json& pose = array(field(j, "pose"), "pose");
    s.state.pose = Pose3D(rows_from_json(pose, static_cast<int>(pose.size()), 3, "pose"));
    const json& cams = array(field(j, "cameras"), "cameras");
    s.state.cameras = cameras_from_json(cams, static_cast<int>(cams.size()));
    s.state.gauge = static_cast<int>(integer(field(j, "gauge"), "gauge"));
    if (s.state.gauge < 0 || s.state.gauge >= s.state.num_cameras()) schema("gauge camera out of range");
    s.wall_time = number(field(j, "wall_time"), "wall_time");
    return s;
  });
}

std::vector<Solution> read_solutions(const std::string& path) {
  return read_jsonl<Solution>(path, solution_from_json);
}

void write_solutions(const std::string& path, const std::vector<Solution>& solutions) {
  write_jsonl(path, solutions, solution_to_json);
}

std::string model_to_json(const NeuralOptimizer& opt) {
  opt.validate();
  json j;
  j["format"] = "metapose-model";
  j["version"] = kModelVersion;
  j["config_hash"] = opt.config_hash;
  json steps = json::array();
  for (const auto& s : opt.steps) {
    steps.push_back({{"joints", s.joints},
                     {"components", s.components},
                     {"plan", s.plan.to_string()},
                     {"input_mean", to_json(s.input_mean.transpose())},
                     {"input_std", to_json(s.input_std.transpose())},
                     {"trunk", layers_to_json(s.trunk)},
                     {"camera_head", layers_to_json(s.camera_head)},
                     {"pose_head", layers_to_json(s.pose_head)}});
  }
  j["steps"] = std::move(steps);
  return j.dump();
}

NeuralOptimizer model_from_json(const std::string& text_in) {
  return as_schema([&] {
    const json j = parse(text_in);
    check_header(j, "metapose-model", kModelVersion);
    NeuralOptimizer opt;
    opt.config_hash = text(field(j, "config_hash"), "config_hash");
    for (const auto& sj : array(field(j, "steps"), "steps")) {
      StepNetwork s;
      s.joints = static_cast<int>(integer(field(sj, "joints"), "joints"));
      s.components = static_cast<int>(integer(field(sj, "components"), "components"));
      s.plan = EquivariantBlockSpec::parse(text(field(sj, "plan"), "plan"));
      s.input_mean = vector(field(sj, "input_mean"), "input_mean").transpose();
      s.input_std = vector(field(sj, "input_std"), "input_std").transpose();
      s.trunk = layers_from_json(field(sj, "trunk"));
      s.camera_head = layers_from_json(field(sj, "camera_head"));
      s.pose_head = layers_from_json(field(sj, "pose_head"));
      opt.steps.push_back(std::move(s));
    }
    opt.validate();
    return opt;
  });
}

NeuralOptimizer read_model(const std::string& path) { return model_from_json(read_file(path)); }

void write_model(const std::string& path, const NeuralOptimizer& opt) { write_file(path, model_to_json(opt) + "\n"); }

std::string heatmaps_to_json(const HeatmapSet& h) {
  if (h.grids.empty() || h.grids.front().empty()) {
    throw Error(ErrorKind::kShapeMismatch, "heatmap set is empty");
  }
  const Eigen::Index height = h.grids.front().front().rows();
  const Eigen::Index width = h.grids.front().front().cols();
  json grids = json::array();
  for (const auto& row : h.grids) {
    json jr = json::array();
    for (const auto& g : row) {
      if (g.rows() != height || g.cols() != width) throw Error(ErrorKind::kShapeMismatch, "heatmap sizes differ");
      json cells = json::array();
      for (Eigen::Index r = 0; r < height; ++r) {
        for (Eigen::Index c = 0; c < width; ++c) cells.push_back(g(r, c));
      }
      jr.push_back(std::move(cells));
    }
    grids.push_back(std::move(jr));
  }
  json j;
  j["format"] = "metapose-heatmaps";
  j["version"] = kHeatmapVersion;
  j["scene_id"] = h.scene_id;
  j["width"] = width;
  j["height"] = height;
  j["grids"] = std::move(grids);
  return j.dump();
}

HeatmapSet heatmaps_from_json(const std::string& line) {
  return as_schema([&] {
    const json j = parse(line);
    check_header(j, "metapose-heatmaps", kHeatmapVersion);
    HeatmapSet h;
    h.scene_id = text(field(j, "scene_id"), "scene_id");
    const long long width = integer(field(j, "width"), "width");
    const long long height = integer(field(j, "height"), "height");
    if (width < 1 || height < 1) schema("heatmap size must be positive");
    for (const auto& row : array(field(j, "grids"), "grids")) {
      std::vector<Eigen::MatrixXd> out_row;
      for (const auto& cells : array(row, "grids row")) {
        const Eigen::VectorXd v = vector(cells, "heatmap", static_cast<std::size_t>(width * height));
        out_row.emplace_back(Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
            v.data(), height, width));
      }
      h.grids.push_back(std::move(out_row));
    }
    return h;
  });
}

std::vector<HeatmapSet> read_heatmaps(const std::string& path) {
  return read_jsonl<HeatmapSet>(path, heatmaps_from_json);
}

void write_heatmaps(const std::string& path, const std::vector<HeatmapSet>& sets) {
  write_jsonl(path, sets, heatmaps_to_json);
}

void write_eval_csv(std::ostream& out, const std::vector<EvalRow>& rows) {
  out << "scene_id,pmpjpe,nmpjpe,mse2d,wall_time\n";
  std::vector<double> p, n, m, t;
  for (const auto& r : rows) {
    out << r.scene_id << ',' << format_value(r.report.pmpjpe) << ',' << format_value(r.report.nmpjpe) << ','
        << format_value(r.report.mse2d) << ',' << format_value(r.report.wall_time) << '\n';
    p.push_back(r.report.pmpjpe);
    n.push_back(r.report.nmpjpe);
    m.push_back(r.report.mse2d);
    t.push_back(r.report.wall_time);
  }
  out << "mean," << format_value(mean_of(p)) << ',' << format_value(mean_of(n)) << ',' << format_value(mean_of(m))
      << ',' << format_value(mean_of(t)) << '\n';
  out << "median," << format_value(median_of(p)) << ',' << format_value(median_of(n)) << ','
      << format_value(median_of(m)) << ',' << format_value(median_of(t)) << '\n';
}

void write_training_curve_csv(std::ostream& out, const TrainReport& report) {
  out << "step,attempt,epoch,train_loss,validation\n";
  for (const auto& r : report.curve) {
    out << r.step << ',' << r.attempt << ',' << r.epoch << ',' << format_value(r.train_loss) << ','
        << format_value(r.validation) << '\n';
  }
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kInvalidConfig, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kInvalidConfig, "cannot write '" + path + "'");
  out << content;
  if (!out) throw Error(ErrorKind::kInvalidConfig, "failed writing '" + path + "'");
}

std::vector<std::string> read_lines(const std::string& path) {
  std::istringstream in(read_file(path));
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

}  // namespace metapose::io
