// Copyright (C) 2026 metapose contributors
// SPDX-License-Identifier: Apache-2.0

#include "metapose/scenegen.hpp"

#include <Eigen/Geometry>
#include <cmath>
#include <numbers>
#include <random>

#include "metapose/error.hpp"

namespace metapose {

namespace {

constexpr double kPi = std::numbers::pi;

// Human3.6M-style 17-joint layout in millimetres, z up, roughly 1.7 m tall.
constexpr int kTreeJoints = 17;
constexpr double kTreeTemplate[kTreeJoints][3] = {
    {0, 0, 950},       // pelvis
    {-130, 0, 950},    // right hip
    {-130, 30, 500},   // right knee
    {-130, 0, 70},     // right ankle
    {130, 0, 950},     // left hip
    {130, 30, 500},    // left knee
    {130, 0, 70},      // left ankle
    {0, 0, 1180},      // spine
    {0, 0, 1420},      // thorax
    {0, 20, 1520},     // neck
    {0, 10, 1650},     // head
    {170, 0, 1400},    // left shoulder
    {190, 0, 1120},    // left elbow
    {200, 40, 880},    // left wrist
    {-170, 0, 1400},   // right shoulder
    {-190, 0, 1120},   // right elbow
    {-200, 40, 880},   // right wrist
};
constexpr int kTreeParents[kTreeJoints] = {-1, 0, 1, 2, 0, 4, 5, 0, 7, 8, 9, 8, 11, 12, 8, 14, 15};

double gauss(std::mt19937_64& rng, double sigma) {
  if (sigma == 0.0) return 0.0;
  return std::normal_distribution<double>(0.0, sigma)(rng);
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

Vec3 random_unit(std::mt19937_64& rng) {
  Vec3 v(gauss(rng, 1.0), gauss(rng, 1.0), gauss(rng, 1.0));
  return v.normalized();
}

Pose3D tree_pose(std::mt19937_64& rng) {
  // Each limb is rotated by a small random angle about its parent joint.
  Eigen::MatrixX3d j(kTreeJoints, 3);
  for (int k = 0; k < kTreeJoints; ++k) j.row(k) << kTreeTemplate[k][0], kTreeTemplate[k][1], kTreeTemplate[k][2];
  Eigen::MatrixX3d posed = j;
  for (int k = 1; k < kTreeJoints; ++k) {
    const int p = kTreeParents[k];
    const Vec3 bone = (j.row(k) - j.row(p)).transpose();
    const Mat3 bend = Eigen::AngleAxisd(uniform(rng, -0.5, 0.5), random_unit(rng)).toRotationMatrix();
    posed.row(k) = posed.row(p) + (bend * bone).transpose();
  }
  // Scale the ~1.7 m template to the scene scale.
  posed *= kSceneScale / 1700.0;
  return Pose3D(posed);
}

Pose3D chain_pose(std::mt19937_64& rng, int joints) {
  Eigen::MatrixX3d j = Eigen::MatrixX3d::Zero(joints, 3);
  const double bone = kSceneScale / std::max(1, joints - 1) * 1.2;
  Vec3 dir = random_unit(rng);
  for (int k = 1; k < joints; ++k) {
    // Bend by at most ~70 degrees per link so the chain never folds back.
    Vec3 next = dir + 0.9 * random_unit(rng);
    dir = next.normalized();
    j.row(k) = j.row(k - 1) + bone * uniform(rng, 0.6, 1.4) * dir.transpose();
  }
  return Pose3D(j);
}

Pose3D triangle_pose(std::mt19937_64& rng) {
  const double side = 0.8 * kSceneScale;
  const double r = side / std::sqrt(3.0);
  Eigen::MatrixX3d j(3, 3);
  for (int k = 0; k < 3; ++k) j.row(k) << r * std::cos(2 * kPi * k / 3), r * std::sin(2 * kPi * k / 3), 0.0;
  const Mat3 tilt = Eigen::AngleAxisd(uniform(rng, -0.6, 0.6), Vec3::UnitX()).toRotationMatrix();
  return Pose3D(j * tilt.transpose());
}

// Rows: image x axis, image y axis, viewing direction.
Mat3 look_at(double azimuth, double elevation) {
  const Vec3 toward_camera(std::cos(elevation) * std::cos(azimuth), std::cos(elevation) * std::sin(azimuth),
                           std::sin(elevation));
  const Vec3 forward = -toward_camera;
  const Vec3 right = forward.cross(Vec3::UnitZ()).normalized();
  const Vec3 down = forward.cross(right);
  Mat3 r;
  r.row(0) = right;
  r.row(1) = down;
  r.row(2) = forward;
  return r;
}

GaussianMixture2D heatmap_mixture(const Vec2& center, const SceneConfig& cfg, std::uint64_t seed) {
  const GaussianMixture2D exact = GaussianMixture2D::single(center, cfg.heatmap_sigma);
  if (cfg.heatmap_resolution <= 0) return exact;
  EmConfig em;
  em.components = cfg.mixture_components;
  em.seed = seed;
  return fit_gmm(to_heatmap_grid(exact, cfg.heatmap_resolution, cfg.heatmap_resolution), em).sorted_by_weight();
}

}  // namespace

const char* to_string(SkeletonTemplate t) {
  switch (t) {
    case SkeletonTemplate::kChain: return "chain";
    case SkeletonTemplate::kTree: return "tree";
    case SkeletonTemplate::kTriangle: return "triangle";
  }
  return "unknown";
}

SkeletonTemplate skeleton_template_from_string(const std::string& s) {
  if (s == "chain") return SkeletonTemplate::kChain;
  if (s == "tree") return SkeletonTemplate::kTree;
  if (s == "triangle" || s == "triangle-toy") return SkeletonTemplate::kTriangle;
  throw Error(ErrorKind::kInvalidConfig, "unknown skeleton template '" + s + "'");
}

void SceneConfig::validate() const {
  if (joints < 3) throw Error(ErrorKind::kInvalidConfig, "scenes need at least 3 joints");
  if (cameras < 2) throw Error(ErrorKind::kInvalidConfig, "scenes need at least 2 cameras");
  if (skeleton == SkeletonTemplate::kTree && joints != kTreeJoints) {
    throw Error(ErrorKind::kInvalidConfig, "the tree skeleton has 17 joints");
  }
  if (skeleton == SkeletonTemplate::kTriangle && joints != 3) {
    throw Error(ErrorKind::kInvalidConfig, "the triangle skeleton has 3 joints");
  }
  for (double s : {ring_jitter, sigma_depth, sigma_pixel, sigma_keypoint, bone_noise}) {
    if (!(s >= 0.0) || !std::isfinite(s)) throw Error(ErrorKind::kInvalidConfig, "noise levels must be >= 0");
  }
  if (!(heatmap_sigma > 0.0) || !(bone_sigma > 0.0) || !(ring_radius > 0.0)) {
    throw Error(ErrorKind::kInvalidConfig, "heatmap sigma, bone sigma and ring radius must be positive");
  }
  if (mixture_components < 1 || heatmap_resolution < 0) {
    throw Error(ErrorKind::kInvalidConfig, "invalid heatmap rasterization settings");
  }
}

Skeleton make_skeleton(SkeletonTemplate t, int joints) {
  Skeleton s;
  switch (t) {
    case SkeletonTemplate::kTree:
      for (int k = 1; k < kTreeJoints; ++k) s.edges.emplace_back(kTreeParents[k], k);
      break;
    case SkeletonTemplate::kTriangle:
      s.edges = {{0, 1}, {1, 2}, {2, 0}};
      break;
    case SkeletonTemplate::kChain:
      for (int k = 1; k < joints; ++k) s.edges.emplace_back(k - 1, k);
      break;
  }
  return s;
}

int Scene::num_components() const {
  int m = 0;
  for (const auto& row : mixtures) {
    for (const auto& g : row) m = std::max(m, g.size());
  }
  return m;
}

Scene Scene::permuted(const std::vector<int>& order) const {
  if (static_cast<int>(order.size()) != num_cameras()) {
    throw Error(ErrorKind::kShapeMismatch, "permutation length differs from camera count");
  }
  Scene out = *this;
  for (int k = 0; k < num_cameras(); ++k) {
    const int src = order[k];
    out.monocular[k] = monocular.at(src);
    out.mixtures[k] = mixtures.at(src);
    if (!keypoints.empty()) out.keypoints[k] = keypoints.at(src);
    if (gt) out.gt->cameras[k] = gt->cameras.at(src);
    if (src == reference_camera) out.reference_camera = k;
  }
  return out;
}

Scene Scene::first_cameras(int k) const {
  if (k < 1 || k > num_cameras()) throw Error(ErrorKind::kInvalidConfig, "camera count override out of range");
  if (reference_camera >= k) throw Error(ErrorKind::kInvalidConfig, "reference camera dropped by the override");
  Scene out = *this;
  out.monocular.resize(k);
  out.mixtures.resize(k);
  if (!keypoints.empty()) out.keypoints.resize(k);
  if (gt) out.gt->cameras.resize(k);
  return out;
}

void Scene::validate() const {
  const int c = num_cameras();
  const int j = num_joints();
  if (c < 1 || j < 3) throw Error(ErrorKind::kShapeMismatch, "scene needs cameras and at least 3 joints");
  for (const auto& q : monocular) {
    if (q.num_joints() != j) throw Error(ErrorKind::kShapeMismatch, "monocular estimates disagree in J");
  }
  if (static_cast<int>(mixtures.size()) != c) throw Error(ErrorKind::kShapeMismatch, "mixtures disagree in C");
  for (const auto& row : mixtures) {
    if (static_cast<int>(row.size()) != j) throw Error(ErrorKind::kShapeMismatch, "mixtures disagree in J");
    for (const auto& g : row) g.validate();
  }
  if (!keypoints.empty()) {
    if (static_cast<int>(keypoints.size()) != c) throw Error(ErrorKind::kShapeMismatch, "keypoints disagree in C");
    for (const auto& k : keypoints) {
      if (k.num_joints() != j) throw Error(ErrorKind::kShapeMismatch, "keypoints disagree in J");
    }
  }
  if (gt && (gt->pose.num_joints() != j || static_cast<int>(gt->cameras.size()) != c)) {
    throw Error(ErrorKind::kShapeMismatch, "ground truth disagrees with the scene shape");
  }
  if (reference_camera < 0 || reference_camera >= c) {
    throw Error(ErrorKind::kShapeMismatch, "reference camera out of range");
  }
  skeleton.validate(j);
  if (bone_prior) {
    bone_prior->validate();
    if (bone_prior->target.size() != skeleton.num_edges()) {
      throw Error(ErrorKind::kShapeMismatch, "bone prior disagrees with the skeleton");
    }
  }
}

HeatmapGrid to_heatmap_grid(const GaussianMixture2D& g, int width, int height) {
  if (width < 1 || height < 1) throw Error(ErrorKind::kInvalidConfig, "grid must have at least one cell");
  Eigen::MatrixXd cells(height, width);
  Eigen::MatrixXd logs(height, width);
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) logs(r, c) = log_prob(g, Vec2((c + 0.5) / width, (r + 0.5) / height));
  }
  // Shift by the max so a far-away sharp mixture still leaves a usable grid.
  cells = (logs.array() - logs.maxCoeff()).exp();
  return HeatmapGrid(std::move(cells));
}

Scene generate(const SceneConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  Scene scene;
  scene.seed = cfg.seed;
  scene.id = "scene-" + std::to_string(cfg.seed);
  scene.skeleton = make_skeleton(cfg.skeleton, cfg.joints);

  Pose3D pose;
  switch (cfg.skeleton) {
    case SkeletonTemplate::kTree: pose = tree_pose(rng); break;
    case SkeletonTemplate::kChain: pose = chain_pose(rng, cfg.joints); break;
    case SkeletonTemplate::kTriangle: pose = triangle_pose(rng); break;
  }
  const Mat3 heading = Eigen::AngleAxisd(uniform(rng, 0.0, 2 * kPi), Vec3::UnitZ()).toRotationMatrix();
  Eigen::MatrixX3d world = pose.centered() * heading.transpose();
  world.rowwise() += Eigen::RowVector3d(uniform(rng, -300, 300), uniform(rng, -300, 300), 0.0);
  pose = Pose3D(world);
  const Vec3 center = pose.centroid();

  GroundTruth gt{pose, {}};
  // A fixed rig draws the placement from its own stream so every scene shares it.
  std::mt19937_64 rig_rng(cfg.rig_seed);
  std::mt19937_64& placement = cfg.fixed_rig ? rig_rng : rng;
  const double base_azimuth = uniform(placement, 0.0, 2 * kPi);
  for (int c = 0; c < cfg.cameras; ++c) {
    double azimuth = base_azimuth + 2 * kPi * c / cfg.cameras + uniform(placement, -0.5, 0.5) * cfg.ring_jitter;
    if (cfg.hard_two_cam && c == 1) azimuth = base_azimuth + uniform(placement, 0.02, 0.05);
    const double elevation = uniform(placement, 0.05, 0.35);
    const Mat3 r = look_at(azimuth, elevation);
    const double distance = cfg.ring_radius * uniform(placement, 0.9, 1.1);
    // Weak perspective: focal / distance, sized so the pose spans ~0.6 of the image.
    const double scale = 0.6 / kSceneScale * (5000.0 / distance);
    const Vec2 shift = Vec2(0.5, 0.5) - scale * (r * center).head<2>() +
                       Vec2(uniform(rng, -0.05, 0.05), uniform(rng, -0.05, 0.05));
    gt.cameras.push_back(WeakCamera::from_matrix(r, shift, scale));
  }

  for (int c = 0; c < cfg.cameras; ++c) {
    const WeakCamera& cam = gt.cameras[c];
    scene.keypoints.push_back(project_pose(gt.pose, cam));
    const Keypoints2D& k = scene.keypoints.back();

    std::vector<GaussianMixture2D> row;
    for (int j = 0; j < cfg.joints; ++j) {
      const Vec2 center_2d = k.points.row(j).transpose() + Vec2(gauss(rng, cfg.sigma_keypoint), gauss(rng, cfg.sigma_keypoint));
      row.push_back(heatmap_mixture(center_2d, cfg, cfg.seed * 1000003ULL + c * 1009ULL + j));
    }
    scene.mixtures.push_back(std::move(row));

    const double s = cam.scale();
    const Eigen::VectorXd depth = s * (gt.pose.joints * cam.rotation().row(2).transpose());
    Eigen::MatrixX3d q(cfg.joints, 3);
    for (int j = 0; j < cfg.joints; ++j) {
      q(j, 0) = k.points(j, 0) + gauss(rng, cfg.sigma_pixel);
      q(j, 1) = k.points(j, 1) + gauss(rng, cfg.sigma_pixel);
      q(j, 2) = depth(j) + s * gauss(rng, cfg.sigma_depth);
    }
    scene.monocular.push_back(center_depth(Pose3D(q)));
  }

  Eigen::VectorXd bones = bone_lengths_normalized(gt.pose, scene.skeleton);
  for (int e = 0; e < bones.size(); ++e) bones(e) = std::max(1e-3, bones(e) + gauss(rng, cfg.bone_noise));
  bones /= bones.mean();
  scene.bone_prior = BonePrior{bones, cfg.bone_sigma};
  scene.gt = std::move(gt);
  return scene;
}

SolutionState stage1_state(const Scene& scene) {
  Stage1Result r = stage1_init(scene.monocular, scene.reference_camera);
  return SolutionState{std::move(r.pose), std::move(r.cameras), scene.reference_camera};
}

SolutionState random_state_for(const Scene& scene, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  // Pose about the size of a stage-1 solution (~0.6 normalized units), centered in the image.
  Eigen::MatrixX3d j(scene.num_joints(), 3);
  for (int r = 0; r < j.rows(); ++r) j.row(r) << 0.5 + gauss(rng, 0.3), 0.5 + gauss(rng, 0.3), gauss(rng, 0.3);
  SolutionState s{Pose3D(j), {}, scene.reference_camera};
  for (int c = 0; c < scene.num_cameras(); ++c) {
    if (c == scene.reference_camera) {
      s.cameras.push_back(WeakCamera::identity());
      continue;
    }
    Eigen::Quaterniond q(gauss(rng, 1.0), gauss(rng, 1.0), gauss(rng, 1.0), gauss(rng, 1.0));
    q.normalize();
    const Mat3 r = q.toRotationMatrix();
    s.cameras.push_back(WeakCamera::from_matrix(r, Vec2(uniform(rng, 0.0, 0.5), uniform(rng, 0.0, 0.5)), 1.0));
  }
  return s;
}

}  // namespace metapose
