// Copyright (C) 2026 metapose contributors
// SPDX-License-Identifier: Apache-2.0

#include "metapose/objective.hpp"

#include <array>
#include <cmath>
#include <numeric>

#include "metapose/autodiff.hpp"
#include "metapose/error.hpp"

namespace metapose {

void Skeleton::validate(int num_joints) const {
  if (edges.empty()) {
    throw Error(ErrorKind::kInvalidConfig, "skeleton has no edges");
  }
  std::vector<int> parent(num_joints);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int v) {
    while (parent[v] != v) v = parent[v] = parent[parent[v]];
    return v;
  };
  std::vector<char> used(num_joints, 0);
  for (const auto& [n, m] : edges) {
    if (n < 0 || m < 0 || n >= num_joints || m >= num_joints) {
      throw Error(ErrorKind::kInvalidConfig, "skeleton edge index out of range");
    }
    if (n == m) throw Error(ErrorKind::kInvalidConfig, "skeleton has a self-edge");
    used[n] = used[m] = 1;
    parent[find(n)] = find(m);
  }
  int root = -1;
  for (int j = 0; j < num_joints; ++j) {
    if (!used[j]) continue;
    if (root < 0) root = find(j);
    if (find(j) != root) throw Error(ErrorKind::kInvalidConfig, "skeleton is not connected");
  }
}

void BonePrior::validate() const {
  if (target.size() == 0 || !target.allFinite()) {
    throw Error(ErrorKind::kInvalidConfig, "bone prior target is empty or non-finite");
  }
  if (std::abs(target.mean() - 1.0) > 1e-9) {
    throw Error(ErrorKind::kInvalidConfig, "bone prior target must have mean 1");
  }
  if (!(sigma_b > 0.0)) throw Error(ErrorKind::kInvalidConfig, "sigma_b must be positive");
}

Eigen::VectorXd SolutionState::flatten() const {
  Eigen::VectorXd v(num_params());
  int k = 0;
  for (int j = 0; j < num_joints(); ++j) {
    for (int d = 0; d < 3; ++d) v(k++) = pose.joints(j, d);
  }
  for (int c = 0; c < num_cameras(); ++c) {
    if (c == gauge) continue;
    v.segment<kCameraParams>(k) = cameras[c].flat();
    k += kCameraParams;
  }
  return v;
}

SolutionState SolutionState::with_params(const Eigen::VectorXd& params) const {
  if (params.size() != num_params()) {
    throw Error(ErrorKind::kShapeMismatch, "parameter vector has the wrong length");
  }
  SolutionState out = *this;
  int k = 0;
  for (int j = 0; j < num_joints(); ++j) {
    for (int d = 0; d < 3; ++d) out.pose.joints(j, d) = params(k++);
  }
  for (int c = 0; c < num_cameras(); ++c) {
    if (c == gauge) continue;
    out.cameras[c] = WeakCamera::from_flat(params.segment<kCameraParams>(k));
    k += kCameraParams;
  }
  return out;
}

std::vector<Keypoints2D> SolutionState::project_all() const {
  std::vector<Keypoints2D> out;
  out.reserve(cameras.size());
  for (const auto& cam : cameras) out.push_back(project_pose(pose, cam));
  return out;
}

SolutionState SolutionState::permuted(const std::vector<int>& order) const {
  if (static_cast<int>(order.size()) != num_cameras()) {
    throw Error(ErrorKind::kShapeMismatch, "permutation length differs from camera count");
  }
  SolutionState out = *this;
  for (int k = 0; k < num_cameras(); ++k) {
    out.cameras[k] = cameras.at(order[k]);
    if (order[k] == gauge) out.gauge = k;
  }
  return out;
}

namespace {

using ad::Var;

template <class T>
using V3 = std::array<T, 3>;

template <class T>
V3<T> cross(const V3<T>& a, const V3<T>& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

template <class T>
T dot(const V3<T>& a, const V3<T>& b) {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

template <class T>
V3<T> normalized(const V3<T>& a) {
  using std::sqrt;
  using ad::sqrt;
  const T n = sqrt(dot(a, a));
  return {a[0] / n, a[1] / n, a[2] / n};
}

template <class T>
struct CameraT {
  std::array<V3<T>, 3> rows;
  T shift[2];
  T log_scale;
  T scale;
};

template <class T>
CameraT<T> make_camera(const V3<T>& x, const V3<T>& y, const T& tx, const T& ty, const T& log_scale) {
  using std::exp;
  using ad::exp;
  const V3<T> b = cross(x, y);
  const V3<T> c = cross(x, b);
  return CameraT<T>{{normalized(x), normalized(b), normalized(c)}, {tx, ty}, log_scale, exp(log_scale)};
}

// Scalar lifting: doubles pass through, Var constants go on the tape.
struct DoubleLift {
  double operator()(double v) const { return v; }
};

struct VarLift {
  ad::Tape* tape;
  Var operator()(double v) const { return tape->constant(v); }
};

inline double mixture_log_prob(const GaussianMixture2D& g, double x, double y) {
  return log_prob(g, Vec2(x, y));
}

inline Var mixture_log_prob(const GaussianMixture2D& g, const Var& x, const Var& y) {
  Vec2 grad;
  const double v = log_prob(g, Vec2(x.val, y.val), &grad);
  return x.tape->binary(v, x, grad(0), y, grad(1));
}

template <class T>
struct Problem {
  std::vector<V3<T>> joints;
  std::vector<CameraT<T>> cameras;
};

template <class T>
std::array<T, 2> project_t(const V3<T>& j, const CameraT<T>& c) {
  return {c.scale * dot(c.rows[0], j) + c.shift[0], c.scale * dot(c.rows[1], j) + c.shift[1]};
}

template <class T, class Lift>
T ba_term(const Problem<T>& p, const MixtureSet& mixtures, Lift lift) {
  T total = lift(0.0);
  for (size_t c = 0; c < p.cameras.size(); ++c) {
    for (size_t j = 0; j < p.joints.size(); ++j) {
      const auto k = project_t(p.joints[j], p.cameras[c]);
      total = total - mixture_log_prob(mixtures[c][j], k[0], k[1]);
    }
  }
  return total;
}

template <class T, class Lift>
T reprojection_term(const Problem<T>& p, const std::vector<Keypoints2D>& gt, Lift lift) {
  T total = lift(0.0);
  for (size_t c = 0; c < p.cameras.size(); ++c) {
    for (size_t j = 0; j < p.joints.size(); ++j) {
      const auto k = project_t(p.joints[j], p.cameras[c]);
      const T dx = k[0] - gt[c].points(j, 0);
      const T dy = k[1] - gt[c].points(j, 1);
      total = total + dx * dx + dy * dy;
    }
  }
  return total;
}

template <class T>
std::vector<T> bone_lengths_t(const std::vector<V3<T>>& joints, const Skeleton& sk) {
  using std::sqrt;
  using ad::sqrt;
  std::vector<T> lengths;
  lengths.reserve(sk.edges.size());
  double raw_total = 0.0;
  for (const auto& [n, m] : sk.edges) {
    const V3<T> d{joints[n][0] - joints[m][0], joints[n][1] - joints[m][1], joints[n][2] - joints[m][2]};
    lengths.push_back(sqrt(dot(d, d)));
    raw_total += ad::value_of(lengths.back());
  }
  if (!(raw_total > kDegenerateTolerancePerJoint * static_cast<double>(joints.size()))) {
    throw Error(ErrorKind::kDegeneratePose, "skeleton has zero total bone length");
  }
  for (const auto& b : lengths) {
    if (!(ad::value_of(b) > 0.0)) {
      throw Error(ErrorKind::kDegeneratePose, "zero-length bone");
    }
  }
  T mean = lengths[0];
  for (size_t e = 1; e < lengths.size(); ++e) mean = mean + lengths[e];
  mean = mean / static_cast<double>(lengths.size());
  for (auto& b : lengths) b = b / mean;
  return lengths;
}

template <class T, class Lift>
T bone_term(const std::vector<V3<T>>& joints, const BonePrior& prior, const Skeleton& sk, Lift lift) {
  if (prior.target.size() != sk.num_edges()) {
    throw Error(ErrorKind::kShapeMismatch, "bone prior length differs from skeleton edge count");
  }
  const std::vector<T> normalized_lengths = bone_lengths_t(joints, sk);
  T total = lift(0.0);
  for (int e = 0; e < sk.num_edges(); ++e) {
    const T d = normalized_lengths[e] - prior.target(e);
    total = total + d * d;
  }
  return total;
}

template <class T, class Lift>
T teacher_term(const Problem<T>& p, const TeacherLossConfig& cfg, Lift lift) {
  const SolutionState& ref = cfg.reference;
  T total = lift(0.0);
  if (cfg.lambda_pose != 0.0) {
    T acc = lift(0.0);
    for (size_t j = 0; j < p.joints.size(); ++j) {
      for (int d = 0; d < 3; ++d) {
        const T diff = p.joints[j][d] - ref.pose.joints(j, d);
        acc = acc + diff * diff;
      }
    }
    total = total + cfg.lambda_pose * acc;
  }
  for (size_t c = 0; c < p.cameras.size(); ++c) {
    const CameraT<T>& cam = p.cameras[c];
    const WeakCamera& rc = ref.cameras[c];
    if (cfg.lambda_shift != 0.0) {
      const T dx = cam.shift[0] - rc.shift(0);
      const T dy = cam.shift[1] - rc.shift(1);
      total = total + cfg.lambda_shift * (dx * dx + dy * dy);
    }
    if (cfg.lambda_rot != 0.0) {
      // rows[k][i] = R(k, i); (R^T B)(i, j) = sum_k R(k, i) B(k, j).
      const Mat3 b = rc.rotation();
      T acc = lift(0.0);
      for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
          T a = cam.rows[0][i] * b(0, j) + cam.rows[1][i] * b(1, j) + cam.rows[2][i] * b(2, j);
          if (i == j) a = a - 1.0;
          acc = acc + a * a;
        }
      }
      total = total + cfg.lambda_rot * acc;
    }
    if (cfg.lambda_scale != 0.0) {
      const T d = cam.log_scale - rc.log_scale;
      total = total + cfg.lambda_scale * (d * d);
    }
  }
  return total;
}

template <class T, class Lift>
T total_t(const Problem<T>& p, const ObjectiveSpec& spec, Lift lift) {
  T total = lift(0.0);
  if (spec.has_reprojection()) total = total + spec.weights.reprojection * reprojection_term(p, *spec.keypoints, lift);
  if (spec.has_ba()) total = total + spec.weights.ba * ba_term(p, *spec.mixtures, lift);
  if (spec.has_bone()) {
    const double w = spec.weights.bone / (spec.bone_prior->sigma_b * spec.bone_prior->sigma_b);
    total = total + w * bone_term(p.joints, *spec.bone_prior, *spec.skeleton, lift);
  }
  if (spec.has_teacher()) total = total + spec.weights.teacher * teacher_term(p, *spec.teacher, lift);
  return total;
}

Problem<double> problem_of(const SolutionState& s) {
  Problem<double> p;
  p.joints.reserve(s.num_joints());
  for (int j = 0; j < s.num_joints(); ++j) {
    p.joints.push_back({s.pose.joints(j, 0), s.pose.joints(j, 1), s.pose.joints(j, 2)});
  }
  for (const auto& cam : s.cameras) {
    const Mat3 r = cam.rotation();  // Validates the 6D parameters.
    CameraT<double> c;
    for (int k = 0; k < 3; ++k) c.rows[k] = {r(k, 0), r(k, 1), r(k, 2)};
    c.shift[0] = cam.shift(0);
    c.shift[1] = cam.shift(1);
    c.log_scale = cam.log_scale;
    c.scale = cam.scale();
    p.cameras.push_back(c);
  }
  return p;
}

void require_cameras(const SolutionState& s, size_t n, const char* what) {
  if (static_cast<size_t>(s.num_cameras()) != n) {
    throw Error(ErrorKind::kShapeMismatch, std::string(what) + " camera count differs from state");
  }
}

void check_mixtures(const SolutionState& s, const MixtureSet& g) {
  require_cameras(s, g.size(), "mixture");
  for (const auto& row : g) {
    if (static_cast<int>(row.size()) != s.num_joints()) {
      throw Error(ErrorKind::kShapeMismatch, "mixture joint count differs from state");
    }
    for (const auto& m : row) {
      if (m.size() == 0) throw Error(ErrorKind::kShapeMismatch, "empty mixture");
    }
  }
}

void check_keypoints(const SolutionState& s, const std::vector<Keypoints2D>& k) {
  require_cameras(s, k.size(), "keypoint");
  for (const auto& kp : k) {
    if (kp.num_joints() != s.num_joints()) {
      throw Error(ErrorKind::kShapeMismatch, "keypoint joint count differs from state");
    }
  }
}

void check_teacher(const SolutionState& s, const TeacherLossConfig& cfg) {
  if (cfg.reference.num_joints() != s.num_joints() || cfg.reference.num_cameras() != s.num_cameras()) {
    throw Error(ErrorKind::kShapeMismatch, "teacher reference shape differs from state");
  }
}

}  // namespace

void ObjectiveSpec::validate(const SolutionState& s) const {
  if (!any_active()) throw Error(ErrorKind::kNoActiveTerms, "objective has no active terms");
  if (has_ba()) check_mixtures(s, *mixtures);
  if (has_reprojection()) check_keypoints(s, *keypoints);
  if (has_bone()) {
    skeleton->validate(s.num_joints());
    if (bone_prior->target.size() != skeleton->num_edges()) {
      throw Error(ErrorKind::kShapeMismatch, "bone prior length differs from skeleton edge count");
    }
  }
  if (has_teacher()) check_teacher(s, *teacher);
  if (s.gauge < 0 || s.gauge >= s.num_cameras()) {
    throw Error(ErrorKind::kShapeMismatch, "gauge camera index out of range");
  }
}

double ba_neg_log_likelihood(const SolutionState& s, const MixtureSet& mixtures) {
  check_mixtures(s, mixtures);
  return ba_term(problem_of(s), mixtures, DoubleLift{});
}

double reprojection_loss(const SolutionState& s, const std::vector<Keypoints2D>& keypoints) {
  check_keypoints(s, keypoints);
  return reprojection_term(problem_of(s), keypoints, DoubleLift{});
}

Eigen::VectorXd bone_lengths_normalized(const Pose3D& p, const Skeleton& skeleton) {
  skeleton.validate(p.num_joints());
  std::vector<V3<double>> joints;
  for (int j = 0; j < p.num_joints(); ++j) joints.push_back({p.joints(j, 0), p.joints(j, 1), p.joints(j, 2)});
  const std::vector<double> b = bone_lengths_t(joints, skeleton);
  return Eigen::Map<const Eigen::VectorXd>(b.data(), static_cast<Eigen::Index>(b.size()));
}

double bone_loss(const Pose3D& p, const BonePrior& prior, const Skeleton& skeleton) {
  return (bone_lengths_normalized(p, skeleton) - prior.target).squaredNorm();
}

double teacher_loss(const SolutionState& s, const TeacherLossConfig& cfg) {
  check_teacher(s, cfg);
  return teacher_term(problem_of(s), cfg, DoubleLift{});
}

double total_objective(const SolutionState& s, const ObjectiveSpec& spec) {
  spec.validate(s);
  return total_t(problem_of(s), spec, DoubleLift{});
}

Eigen::VectorXd gradient(const SolutionState& s, const ObjectiveSpec& spec, double* value) {
  spec.validate(s);
  ad::Tape tape;
  const VarLift lift{&tape};
  Problem<Var> p;
  std::vector<int> param_nodes;
  param_nodes.reserve(s.num_params());
  auto param = [&](double v) {
    const Var x = tape.variable(v);
    param_nodes.push_back(x.index);
    return x;
  };
  for (int j = 0; j < s.num_joints(); ++j) {
    p.joints.push_back({param(s.pose.joints(j, 0)), param(s.pose.joints(j, 1)), param(s.pose.joints(j, 2))});
  }
  for (int c = 0; c < s.num_cameras(); ++c) {
    const WeakCamera& cam = s.cameras[c];
    cam.rotation();  // Throws on degenerate 6D parameters.
    auto lift_or_param = [&](double v) { return c == s.gauge ? lift(v) : param(v); };
    const V3<Var> x{lift_or_param(cam.rot.x(0)), lift_or_param(cam.rot.x(1)), lift_or_param(cam.rot.x(2))};
    const V3<Var> y{lift_or_param(cam.rot.y(0)), lift_or_param(cam.rot.y(1)), lift_or_param(cam.rot.y(2))};
    const Var tx = lift_or_param(cam.shift(0));
    const Var ty = lift_or_param(cam.shift(1));
    const Var ls = lift_or_param(cam.log_scale);
    p.cameras.push_back(make_camera(x, y, tx, ty, ls));
  }
  const Var out = total_t(p, spec, lift);
  if (value != nullptr) *value = out.val;
  const std::vector<double> adj = tape.gradient(out);
  Eigen::VectorXd g(param_nodes.size());
  for (size_t k = 0; k < param_nodes.size(); ++k) g(k) = adj[param_nodes[k]];
  return g;
}

}  // namespace metapose
