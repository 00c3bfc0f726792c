// Copyright (C) 2026 metapose contributors
// SPDX-License-Identifier: Apache-2.0

#include "metapose/neuro.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "metapose/error.hpp"
#include "metapose/metrics.hpp"

namespace metapose {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::MatrixXd activate(const Eigen::MatrixXd& z, Activation a) {
  if (a == Activation::kLinear) return z;
  return z.unaryExpr([](double v) { return selu(v); });
}

Eigen::MatrixXd activate_derivative(const Eigen::MatrixXd& z, Activation a) {
  if (a == Activation::kLinear) return Eigen::MatrixXd::Ones(z.rows(), z.cols());
  return z.unaryExpr([](double v) { return selu_derivative(v); });
}

// Inputs and pre-activations of every layer, kept for the backward pass.
struct StackCache {
  std::vector<Eigen::MatrixXd> inputs;
  std::vector<Eigen::MatrixXd> pre;
};

Eigen::MatrixXd stack_forward(const std::vector<DenseLayer>& layers, Eigen::MatrixXd x, StackCache* cache) {
  for (const DenseLayer& l : layers) {
    Eigen::MatrixXd z = x * l.weights.transpose();
    z.rowwise() += l.bias.transpose();
    if (cache) {
      cache->inputs.push_back(std::move(x));
      cache->pre.push_back(z);
    }
    x = activate(z, l.activation);
  }
  return x;
}

Eigen::MatrixXd layer_backward(const DenseLayer& l, const Eigen::MatrixXd& input, const Eigen::MatrixXd& pre,
                               const Eigen::MatrixXd& dy, DenseLayer& grad) {
  const Eigen::MatrixXd dz = dy.cwiseProduct(activate_derivative(pre, l.activation));
  grad.weights.noalias() += dz.transpose() * input;
  grad.bias += dz.colwise().sum().transpose();
  return dz * l.weights;
}

Eigen::MatrixXd stack_backward(const std::vector<DenseLayer>& layers, const StackCache& cache, Eigen::MatrixXd dy,
                               std::vector<DenseLayer>& grads) {
  for (int k = static_cast<int>(layers.size()) - 1; k >= 0; --k) {
    dy = layer_backward(layers[k], cache.inputs[k], cache.pre[k], dy, grads[k]);
  }
  return dy;
}

// Appends the column mean and the column mean of squares to every row.
Eigen::MatrixXd moment_concat(const Eigen::MatrixXd& h) {
  const Eigen::RowVectorXd mean = h.colwise().mean();
  const Eigen::RowVectorXd second = h.cwiseProduct(h).colwise().mean();
  Eigen::MatrixXd out(h.rows(), 3 * h.cols());
  out << h, mean.replicate(h.rows(), 1), second.replicate(h.rows(), 1);
  return out;
}

Eigen::MatrixXd moment_concat_backward(const Eigen::MatrixXd& h, const Eigen::MatrixXd& dy) {
  const Eigen::Index d = h.cols();
  const double n = static_cast<double>(h.rows());
  const Eigen::RowVectorXd d_mean = dy.middleCols(d, d).colwise().sum() / n;
  const Eigen::RowVectorXd d_second = dy.rightCols(d).colwise().sum() / n;
  Eigen::MatrixXd dx = dy.leftCols(d);
  dx.rowwise() += d_mean;
  dx += 2.0 * h.cwiseProduct(d_second.replicate(h.rows(), 1));
  return dx;
}

struct TrunkCache {
  std::vector<Eigen::MatrixXd> inputs;  // per plan item
  std::vector<Eigen::MatrixXd> pre;     // per plan item; empty for CC
};

Eigen::MatrixXd trunk_forward(const StepNetwork& net, Eigen::MatrixXd x, TrunkCache* cache) {
  int dense = 0;
  for (int item : net.plan.items) {
    if (item == EquivariantBlockSpec::kMomentConcat) {
      Eigen::MatrixXd y = moment_concat(x);
      if (cache) {
        cache->inputs.push_back(std::move(x));
        cache->pre.emplace_back();
      }
      x = std::move(y);
      continue;
    }
    const DenseLayer& l = net.trunk[dense++];
    Eigen::MatrixXd z = x * l.weights.transpose();
    z.rowwise() += l.bias.transpose();
    if (cache) {
      cache->inputs.push_back(std::move(x));
      cache->pre.push_back(z);
    }
    x = activate(z, l.activation);
  }
  return x;
}

void trunk_backward(const StepNetwork& net, const TrunkCache& cache, Eigen::MatrixXd dy, StepNetwork& grad) {
  int dense = static_cast<int>(net.trunk.size());
  for (int k = static_cast<int>(net.plan.items.size()) - 1; k >= 0; --k) {
    if (net.plan.items[k] == EquivariantBlockSpec::kMomentConcat) {
      dy = moment_concat_backward(cache.inputs[k], dy);
    } else {
      --dense;
      dy = layer_backward(net.trunk[dense], cache.inputs[k], cache.pre[k], dy, grad.trunk[dense]);
    }
  }
}

Eigen::MatrixXd standardized(const StepNetwork& net, const StepInput& input) {
  Eigen::MatrixXd x = input.combined();
  if (x.cols() != net.input_width()) {
    throw Error(ErrorKind::kShapeMismatch, "step input width " + std::to_string(x.cols()) +
                                               " does not match the network (" + std::to_string(net.input_width()) +
                                               ")");
  }
  x.rowwise() -= net.input_mean;
  x.array().rowwise() /= net.input_std.array();
  return x;
}

DenseLayer random_layer(int in, int out, Activation a, double scale, std::mt19937_64& rng) {
  // LeCun-uniform bound, matched to selu's self-normalizing assumptions.
  const double bound = scale * std::sqrt(3.0 / in);
  std::uniform_real_distribution<double> u(-bound, bound);
  DenseLayer l;
  l.weights = Eigen::MatrixXd::NullaryExpr(out, in, [&]() { return u(rng); });
  l.bias = Eigen::VectorXd::Zero(out);
  l.activation = a;
  return l;
}

std::vector<DenseLayer> make_head(int in, int hidden, int out, double output_scale, std::mt19937_64& rng) {
  std::vector<DenseLayer> head;
  if (hidden > 0) {
    head.push_back(random_layer(in, hidden, Activation::kSelu, 1.0, rng));
    in = hidden;
  }
  head.push_back(random_layer(in, out, Activation::kLinear, output_scale, rng));
  return head;
}

template <typename F>
void for_each_layer(const StepNetwork& net, F&& f) {
  for (const auto& l : net.trunk) f(l);
  for (const auto& l : net.camera_head) f(l);
  for (const auto& l : net.pose_head) f(l);
}

template <typename F>
void for_each_layer(StepNetwork& net, F&& f) {
  for (auto& l : net.trunk) f(l);
  for (auto& l : net.camera_head) f(l);
  for (auto& l : net.pose_head) f(l);
}

StepNetwork zeros_like(const StepNetwork& net) {
  StepNetwork g = net;
  for_each_layer(g, [](DenseLayer& l) {
    l.weights.setZero();
    l.bias.setZero();
  });
  return g;
}

void check_stack(const std::vector<DenseLayer>& layers, int in, int out, const char* what) {
  if (layers.empty()) throw Error(ErrorKind::kInvalidConfig, std::string(what) + " has no layers");
  for (const auto& l : layers) {
    l.validate();
    if (l.in() != in) throw Error(ErrorKind::kShapeMismatch, std::string(what) + " layer widths do not chain");
    in = l.out();
  }
  if (in != out) throw Error(ErrorKind::kShapeMismatch, std::string(what) + " has the wrong output width");
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

double selu(double x) { return x > 0.0 ? kSeluLambda * x : kSeluLambda * kSeluAlpha * std::expm1(x); }

double selu_derivative(double x) { return x > 0.0 ? kSeluLambda : kSeluLambda * kSeluAlpha * std::exp(x); }

Eigen::MatrixXd DenseLayer::apply(const Eigen::MatrixXd& x) const {
  Eigen::MatrixXd z = x * weights.transpose();
  z.rowwise() += bias.transpose();
  return activate(z, activation);
}

void DenseLayer::validate() const {
  if (bias.size() != weights.rows()) throw Error(ErrorKind::kShapeMismatch, "bias length differs from layer width");
  if (!weights.allFinite() || !bias.allFinite()) throw Error(ErrorKind::kInvalidConfig, "non-finite layer weights");
}

EquivariantBlockSpec EquivariantBlockSpec::parse(const std::string& text) {
  EquivariantBlockSpec spec;
  std::stringstream ss(text);
  std::string token;
  while (std::getline(ss, token, ',')) {
    token.erase(std::remove_if(token.begin(), token.end(), [](unsigned char c) { return std::isspace(c); }),
                token.end());
    if (token == "CC" || token == "cc") {
      spec.items.push_back(kMomentConcat);
      continue;
    }
    try {
      size_t used = 0;
      const int width = std::stoi(token, &used);
      if (used != token.size() || width < 1) throw std::invalid_argument(token);
      spec.items.push_back(width);
    } catch (const std::exception&) {
      throw Error(ErrorKind::kInvalidConfig, "bad layer plan entry '" + token + "'");
    }
  }
  spec.validate();
  return spec;
}

std::string EquivariantBlockSpec::to_string() const {
  std::string out;
  for (size_t k = 0; k < items.size(); ++k) {
    if (k) out += ',';
    out += items[k] == kMomentConcat ? "CC" : std::to_string(items[k]);
  }
  return out;
}

void EquivariantBlockSpec::validate() const {
  if (items.empty() || items.front() == kMomentConcat) {
    throw Error(ErrorKind::kInvalidConfig, "layer plan must start with a dense layer");
  }
  for (int w : items) {
    if (w < 0) throw Error(ErrorKind::kInvalidConfig, "negative layer width");
  }
}

int EquivariantBlockSpec::output_width(int input_width) const {
  int w = input_width;
  for (int item : items) w = item == kMomentConcat ? 3 * w : item;
  return w;
}

EquivariantBlockSpec EquivariantBlockSpec::skipose() {
  const int cc = kMomentConcat;
  return {{512, 512, cc, 512, 512, cc, 512, 512, cc, 512, 512, cc, 512}};
}

EquivariantBlockSpec EquivariantBlockSpec::h36m() {
  const int cc = kMomentConcat;
  return {{512, 512, cc, 512, 512, cc, 512}};
}

Eigen::MatrixXd StepInput::combined() const {
  Eigen::MatrixXd out(rows.rows(), rows.cols() + invariant.size());
  out << rows, invariant.replicate(rows.rows(), 1);
  return out;
}

int step_row_width(int joints, int components) { return kCameraParams + 4 * components * joints + 2 * joints; }

int step_invariant_width(int joints) { return 3 * joints + 1; }

StepInput build_step_input(const SolutionState& s, const MixtureSet& mixtures, int components) {
  const int c_count = s.num_cameras();
  const int j_count = s.num_joints();
  if (static_cast<int>(mixtures.size()) != c_count) {
    throw Error(ErrorKind::kShapeMismatch, "mixtures and state disagree in camera count");
  }
  StepInput in;
  in.rows.resize(c_count, step_row_width(j_count, components));
  double log_likelihood = 0.0;
  for (int c = 0; c < c_count; ++c) {
    if (static_cast<int>(mixtures[c].size()) != j_count) {
      throw Error(ErrorKind::kShapeMismatch, "mixtures and state disagree in joint count");
    }
    auto row = in.rows.row(c);
    row.head<kCameraParams>() = s.cameras[c].flat().transpose();
    int col = kCameraParams;
    for (int j = 0; j < j_count; ++j) {
      const Vec2 p = project(s.pose.joint(j), s.cameras[c]);
      const GaussianMixture2D g = mixtures[c][j].sorted_by_weight();
      if (g.size() > components) {
        throw Error(ErrorKind::kShapeMismatch, "mixture has more components than the network accepts");
      }
      for (int m = 0; m < components; ++m) {
        if (m < g.size()) {
          const GaussianComponent& comp = g.components[m];
          row.segment<4>(col) << comp.weight, comp.mean.x() - p.x(), comp.mean.y() - p.y(), std::log(comp.sigma);
        } else {
          row.segment<4>(col).setZero();
        }
        col += 4;
      }
    }
    for (int j = 0; j < j_count; ++j) {
      const Vec2 p = project(s.pose.joint(j), s.cameras[c]);
      row.segment<2>(col) = p.transpose();
      col += 2;
      log_likelihood += log_prob(mixtures[c][j], p);
    }
  }
  in.invariant.resize(step_invariant_width(j_count));
  for (int j = 0; j < j_count; ++j) in.invariant.segment<3>(3 * j) = s.pose.joints.row(j);
  in.invariant(3 * j_count) = log_likelihood / (c_count * j_count);
  return in;
}

StepNetwork StepNetwork::create(int joints, int components, const EquivariantBlockSpec& plan, int head_width,
                                std::uint64_t seed, double output_scale) {
  plan.validate();
  if (joints < 1 || components < 1 || head_width < 0) {
    throw Error(ErrorKind::kInvalidConfig, "invalid network dimensions");
  }
  std::mt19937_64 rng(seed);
  StepNetwork net;
  net.joints = joints;
  net.components = components;
  net.plan = plan;
  int width = net.input_width();
  for (int item : plan.items) {
    if (item == EquivariantBlockSpec::kMomentConcat) {
      width *= 3;
    } else {
      net.trunk.push_back(random_layer(width, item, Activation::kSelu, 1.0, rng));
      width = item;
    }
  }
  net.camera_head = make_head(width, head_width, kCameraParams, output_scale, rng);
  net.pose_head = make_head(width, head_width, 3 * joints, output_scale, rng);
  net.input_mean = Eigen::RowVectorXd::Zero(net.input_width());
  net.input_std = Eigen::RowVectorXd::Ones(net.input_width());
  return net;
}

Eigen::Index StepNetwork::num_parameters() const {
  Eigen::Index n = 0;
  for_each_layer(*this, [&](const DenseLayer& l) { n += l.weights.size() + l.bias.size(); });
  return n;
}

Eigen::VectorXd StepNetwork::parameters() const {
  Eigen::VectorXd p(num_parameters());
  Eigen::Index k = 0;
  for_each_layer(*this, [&](const DenseLayer& l) {
    Eigen::Map<RowMajor>(p.data() + k, l.out(), l.in()) = l.weights;
    k += l.weights.size();
    p.segment(k, l.bias.size()) = l.bias;
    k += l.bias.size();
  });
  return p;
}

void StepNetwork::set_parameters(const Eigen::VectorXd& p) {
  if (p.size() != num_parameters()) throw Error(ErrorKind::kShapeMismatch, "parameter vector has the wrong length");
  Eigen::Index k = 0;
  for_each_layer(*this, [&](DenseLayer& l) {
    l.weights = Eigen::Map<const RowMajor>(p.data() + k, l.out(), l.in());
    k += l.weights.size();
    l.bias = p.segment(k, l.bias.size());
    k += l.bias.size();
  });
}

void StepNetwork::validate() const {
  plan.validate();
  if (joints < 1 || components < 1) throw Error(ErrorKind::kInvalidConfig, "invalid network dimensions");
  int dense = 0;
  for (int item : plan.items) dense += item != EquivariantBlockSpec::kMomentConcat;
  if (dense != static_cast<int>(trunk.size())) {
    throw Error(ErrorKind::kShapeMismatch, "trunk layers do not match the plan");
  }
  int width = input_width();
  int k = 0;
  for (int item : plan.items) {
    if (item == EquivariantBlockSpec::kMomentConcat) {
      width *= 3;
      continue;
    }
    const DenseLayer& l = trunk[k++];
    l.validate();
    if (l.in() != width || l.out() != item) throw Error(ErrorKind::kShapeMismatch, "trunk layer widths do not chain");
    width = item;
  }
  check_stack(camera_head, width, kCameraParams, "camera head");
  check_stack(pose_head, width, 3 * joints, "pose head");
  if (input_mean.size() != input_width() || input_std.size() != input_width()) {
    throw Error(ErrorKind::kShapeMismatch, "normalization stats have the wrong width");
  }
  if (!input_mean.allFinite() || !(input_std.array() > 0.0).all()) {
    throw Error(ErrorKind::kInvalidConfig, "normalization stats must be finite with positive spread");
  }
}

StepOutput forward_step(const StepNetwork& net, const StepInput& input) {
  const Eigen::MatrixXd h = trunk_forward(net, standardized(net, input), nullptr);
  StepOutput out;
  out.camera_delta = stack_forward(net.camera_head, h, nullptr);
  out.pose_delta = stack_forward(net.pose_head, h.colwise().mean(), nullptr).transpose();
  return out;
}

Eigen::VectorXd backward_step(const StepNetwork& net, const StepInput& input, const Eigen::VectorXd& d_pose,
                              const Eigen::MatrixXd& d_cameras) {
  TrunkCache trunk;
  const Eigen::MatrixXd h = trunk_forward(net, standardized(net, input), &trunk);
  if (d_pose.size() != 3 * net.joints || d_cameras.rows() != h.rows() || d_cameras.cols() != kCameraParams) {
    throw Error(ErrorKind::kShapeMismatch, "output gradient shapes do not match the network");
  }
  StackCache cam_cache, pose_cache;
  stack_forward(net.camera_head, h, &cam_cache);
  stack_forward(net.pose_head, h.colwise().mean(), &pose_cache);

  StepNetwork grad = zeros_like(net);
  Eigen::MatrixXd dh = stack_backward(net.camera_head, cam_cache, d_cameras, grad.camera_head);
  const Eigen::RowVectorXd de = stack_backward(net.pose_head, pose_cache, d_pose.transpose(), grad.pose_head);
  dh.rowwise() += de / static_cast<double>(h.rows());
  trunk_backward(net, trunk, dh, grad);
  return grad.parameters();
}

SolutionState apply_update(const SolutionState& s, const Eigen::VectorXd& d_pose, const Eigen::MatrixXd& d_cameras) {
  const int j = s.num_joints();
  if (d_pose.size() != 3 * j || d_cameras.rows() != s.num_cameras() || d_cameras.cols() != kCameraParams) {
    throw Error(ErrorKind::kShapeMismatch, "update shapes do not match the state");
  }
  SolutionState out = s;
  out.pose.joints += Eigen::Map<const RowMajor>(d_pose.data(), j, 3);
  for (int c = 0; c < s.num_cameras(); ++c) {
    if (c == s.gauge) continue;
    const Eigen::Matrix<double, 9, 1> flat = s.cameras[c].flat() + d_cameras.row(c).transpose();
    out.cameras[c] = WeakCamera::from_flat(flat);
    rot6d_to_matrix(out.cameras[c].rot);  // throws on a degenerate update
  }
  return out;
}

void NeuralOptimizer::validate() const {
  for (const auto& s : steps) {
    s.validate();
    if (s.joints != steps.front().joints || s.components != steps.front().components) {
      throw Error(ErrorKind::kShapeMismatch, "steps disagree in joint or component count");
    }
  }
}

SolutionState infer(const NeuralOptimizer& opt, const SolutionState& init, const MixtureSet& mixtures) {
  SolutionState s = init;
  for (const StepNetwork& net : opt.steps) {
    const StepOutput out = forward_step(net, build_step_input(s, mixtures, net.components));
    s = apply_update(s, out.pose_delta, out.camera_delta);
  }
  return s;
}

const char* to_string(Supervision s) { return s == Supervision::kWeak ? "weak" : "self"; }

Supervision supervision_from_string(const std::string& s) {
  if (s == "weak") return Supervision::kWeak;
  if (s == "self" || s == "ss") return Supervision::kSelf;
  throw Error(ErrorKind::kInvalidConfig, "unknown supervision mode '" + s + "'");
}

void TrainConfig::validate() const {
  plan.validate();
  AdamConfig a = adam;
  a.validate();
  if (steps < 0 || head_width < 0 || epochs < 1 || batch_size < 1 || attempts < 1) {
    throw Error(ErrorKind::kInvalidConfig, "invalid training schedule");
  }
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
    throw Error(ErrorKind::kInvalidConfig, "validation fraction must be in (0, 1)");
  }
  if (!(output_scale > 0.0) || !(teacher_lambda >= 0.0) || !(input_jitter >= 0.0)) {
    throw Error(ErrorKind::kInvalidConfig, "output scale must be positive and teacher weight non-negative");
  }
}

std::string TrainConfig::hash() const {
  std::ostringstream ss;
  ss.precision(17);
  ss << steps << '|' << plan.to_string() << '|' << head_width << '|' << to_string(supervision) << '|' << use_bone
     << '|' << use_teacher << '|' << weights.reprojection << ',' << weights.ba << ',' << weights.bone << ','
     << weights.teacher << '|' << teacher_lambda << '|' << adam.lr << ',' << adam.beta1 << ',' << adam.beta2 << ','
     << adam.eps << '|' << epochs << '|' << batch_size << '|' << attempts << '|' << validation_fraction << '|'
     << output_scale << '|' << input_jitter << '|' << seed;
  std::ostringstream hex;
  hex << std::hex << fnv1a(ss.str());
  return hex.str();
}

std::vector<TrainingExample> prepare_examples(const std::vector<Scene>& scenes, const TrainConfig& cfg) {
  std::vector<TrainingExample> out;
  out.reserve(scenes.size());
  for (const Scene& scene : scenes) {
    if (cfg.supervision == Supervision::kWeak && scene.keypoints.empty()) {
      throw Error(ErrorKind::kInvalidConfig, "weak supervision needs ground-truth keypoints in " + scene.id);
    }
    if (cfg.use_bone && !scene.bone_prior) {
      throw Error(ErrorKind::kInvalidConfig, "bone term needs a bone prior in " + scene.id);
    }
    TrainingExample ex{&scene, stage1_state(scene), std::nullopt};
    if (cfg.use_teacher) {
      ObjectiveSpec spec;
      spec.mixtures = &scene.mixtures;
      ex.teacher = refine_iterative(ex.init, spec, AdamConfig{}).best;
    }
    out.push_back(std::move(ex));
  }
  return out;
}

double training_loss(const SolutionState& after, const TrainingExample& ex, const TrainConfig& cfg,
                     Eigen::VectorXd* grad) {
  const Scene& scene = *ex.scene;
  ObjectiveSpec spec;
  spec.weights = cfg.weights;
  if (cfg.supervision == Supervision::kWeak) {
    spec.keypoints = &scene.keypoints;
  } else {
    spec.mixtures = &scene.mixtures;
  }
  if (cfg.use_bone && scene.bone_prior) {
    spec.skeleton = &scene.skeleton;
    spec.bone_prior = &*scene.bone_prior;
  }
  std::optional<TeacherLossConfig> teacher;
  if (cfg.use_teacher && ex.teacher) {
    const double l = cfg.teacher_lambda;
    teacher = TeacherLossConfig{l, l, l, l, *ex.teacher};
    spec.teacher = &*teacher;
  }
  if (!grad) return total_objective(after, spec);
  double value = 0.0;
  *grad = gradient(after, spec, &value);
  return value;
}

StepNetwork train_step_network(int index, const std::vector<TrainingExample>& train,
                               const std::vector<TrainingExample>& validation, const NeuralOptimizer& frozen,
                               const TrainConfig& cfg, TrainReport* report) {
  cfg.validate();
  if (index != static_cast<int>(frozen.steps.size())) {
    throw Error(ErrorKind::kInvalidConfig, "steps must be trained in order");
  }
  if (train.empty() || validation.empty()) throw Error(ErrorKind::kInvalidConfig, "training needs scenes");

  int components = 1;
  for (const auto& ex : train) components = std::max(components, ex.scene->num_components());
  const int joints = train.front().init.num_joints();

  // Inputs to this step are the detached outputs of the frozen steps.
  auto advance = [&](const std::vector<TrainingExample>& set) {
    std::vector<SolutionState> states;
    std::vector<StepInput> inputs;
    for (const auto& ex : set) {
      states.push_back(infer(frozen, ex.init, ex.scene->mixtures));
      inputs.push_back(build_step_input(states.back(), ex.scene->mixtures, components));
    }
    return std::pair{std::move(states), std::move(inputs)};
  };
  const auto train_data = advance(train);
  const auto val_data = advance(validation);
  const std::vector<SolutionState>& train_states = train_data.first;
  const std::vector<StepInput>& train_inputs = train_data.second;
  const std::vector<SolutionState>& val_states = val_data.first;
  const std::vector<StepInput>& val_inputs = val_data.second;

  Eigen::Index rows = 0;
  for (const auto& in : train_inputs) rows += in.rows.rows();
  Eigen::MatrixXd all(rows, train_inputs.front().rows.cols() + train_inputs.front().invariant.size());
  rows = 0;
  for (const auto& in : train_inputs) {
    all.middleRows(rows, in.rows.rows()) = in.combined();
    rows += in.rows.rows();
  }
  const Eigen::RowVectorXd mean = all.colwise().mean();
  Eigen::RowVectorXd stdev = ((all.rowwise() - mean).array().square().colwise().sum() / all.rows()).sqrt();
  stdev = stdev.unaryExpr([](double v) { return v > 1e-8 ? v : 1.0; });

  bool use_pmpjpe = true;
  for (const auto& ex : validation) use_pmpjpe = use_pmpjpe && ex.scene->gt.has_value();

  auto val_metric = [&](const SolutionState& s, const TrainingExample& ex) {
    return use_pmpjpe ? pmpjpe(s.pose, ex.scene->gt->pose) : training_loss(s, ex, cfg);
  };
  double input_val = 0.0;
  for (size_t k = 0; k < validation.size(); ++k) input_val += val_metric(val_states[k], validation[k]);
  input_val /= validation.size();

  auto evaluate = [&](const StepNetwork& net, int attempt, int epoch) {
    EpochRecord rec{index, attempt, epoch, 0.0, 0.0};
    for (size_t k = 0; k < train.size(); ++k) {
      const StepOutput o = forward_step(net, train_inputs[k]);
      rec.train_loss += training_loss(apply_update(train_states[k], o.pose_delta, o.camera_delta), train[k], cfg);
    }
    rec.train_loss /= train.size();
    for (size_t k = 0; k < validation.size(); ++k) {
      const StepOutput o = forward_step(net, val_inputs[k]);
      rec.validation += val_metric(apply_update(val_states[k], o.pose_delta, o.camera_delta), validation[k]);
    }
    rec.validation /= validation.size();
    if (!std::isfinite(rec.train_loss) || !std::isfinite(rec.validation)) {
      throw Error(ErrorKind::kTrainingDiverged, "training loss became non-finite at step " + std::to_string(index));
    }
    if (report) report->curve.push_back(rec);
    return rec;
  };

  StepNetwork best_net;
  double best_val = std::numeric_limits<double>::infinity();
  bool improved = false;
  for (int attempt = 0; attempt < cfg.attempts && !improved; ++attempt) {
    const std::uint64_t seed = cfg.seed + 7919ULL * (index + 1) + 104729ULL * attempt;
    StepNetwork net = StepNetwork::create(joints, components, cfg.plan, cfg.head_width, seed, cfg.output_scale);
    net.input_mean = mean;
    net.input_std = stdev;
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);

    Eigen::VectorXd params = net.parameters();
    AdamMoments moments = AdamMoments::zeros(params.size());
    int t = 0;
    double attempt_best = evaluate(net, attempt, 0).validation;
    Eigen::VectorXd attempt_params = params;

    std::vector<size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
      std::shuffle(order.begin(), order.end(), rng);
      for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
        const size_t stop = std::min(order.size(), start + cfg.batch_size);
        Eigen::VectorXd g = Eigen::VectorXd::Zero(params.size());
        for (size_t b = start; b < stop; ++b) {
          const size_t k = order[b];
          SolutionState s = train_states[k];
          StepInput jittered;
          if (cfg.input_jitter > 0.0) {
            std::normal_distribution<double> noise(0.0, cfg.input_jitter);
            s = s.with_params(s.flatten().unaryExpr([&](double v) { return v + noise(rng); }));
            jittered = build_step_input(s, train[k].scene->mixtures, components);
          }
          const StepInput& input = cfg.input_jitter > 0.0 ? jittered : train_inputs[k];
          const StepOutput o = forward_step(net, input);
          Eigen::VectorXd d_state;
          training_loss(apply_update(s, o.pose_delta, o.camera_delta), train[k], cfg, &d_state);
          // The update is additive in the flat layout, so the state gradient
          // is the output gradient; the gauge row receives none.
          const Eigen::VectorXd d_pose = d_state.head(3 * joints);
          Eigen::MatrixXd d_cams = Eigen::MatrixXd::Zero(s.num_cameras(), kCameraParams);
          int offset = 3 * joints;
          for (int c = 0; c < s.num_cameras(); ++c) {
            if (c == s.gauge) continue;
            d_cams.row(c) = d_state.segment(offset, kCameraParams).transpose();
            offset += kCameraParams;
          }
          g += backward_step(net, input, d_pose, d_cams);
        }
        g /= static_cast<double>(stop - start);
        adam_step(params, g, moments, cfg.adam, ++t);
        net.set_parameters(params);
      }
      const double v = evaluate(net, attempt, epoch).validation;
      if (v < attempt_best) {
        attempt_best = v;
        attempt_params = params;
      }
    }
    if (attempt_best < best_val) {
      best_val = attempt_best;
      net.set_parameters(attempt_params);
      best_net = net;
    }
    improved = best_val < input_val;
  }
  if (report) {
    report->input_validation.push_back(input_val);
    report->improved.push_back(improved);
  }
  return best_net;
}

NeuralOptimizer train_optimizer(const std::vector<Scene>& scenes, const TrainConfig& cfg, TrainReport* report) {
  cfg.validate();
  if (scenes.size() < 2) throw Error(ErrorKind::kInvalidConfig, "training needs at least two scenes");
  const size_t n_val = std::clamp<size_t>(
      static_cast<size_t>(std::lround(cfg.validation_fraction * scenes.size())), 1, scenes.size() - 1);
  const std::vector<Scene> train_scenes(scenes.begin(), scenes.end() - n_val);
  const std::vector<Scene> val_scenes(scenes.end() - n_val, scenes.end());
  const std::vector<TrainingExample> train = prepare_examples(train_scenes, cfg);
  const std::vector<TrainingExample> val = prepare_examples(val_scenes, cfg);

  NeuralOptimizer opt;
  opt.config_hash = cfg.hash();
  for (int i = 0; i < cfg.steps; ++i) opt.steps.push_back(train_step_network(i, train, val, opt, cfg, report));
  return opt;
}

}  // namespace metapose
