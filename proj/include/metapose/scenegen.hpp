// Copyright (C) 2026 metapose contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "metapose/geometry.hpp"
#include "metapose/mixtures.hpp"
#include "metapose/objective.hpp"

namespace metapose {

/// World units per scene; ground-truth poses are about this size (mm).
inline constexpr double kSceneScale = 1000.0;

enum class SkeletonTemplate { kChain, kTree, kTriangle };

const char* to_string(SkeletonTemplate t);
SkeletonTemplate skeleton_template_from_string(const std::string& s);

struct SceneConfig {
  int joints = 17;
  int cameras = 4;
  SkeletonTemplate skeleton = SkeletonTemplate::kTree;
  double ring_radius = 5000.0;      ///< Nominal camera distance, world units.
  double ring_jitter = 0.3;         ///< Azimuth jitter, radians.
  double heatmap_sigma = 0.01;      ///< Pseudo-heatmap spread, normalized units.
  double sigma_depth = 0.0;         ///< Monocular depth noise, world units.
  double sigma_pixel = 0.0;         ///< Monocular image-plane noise, normalized units.
  double sigma_keypoint = 0.0;      ///< Offset of heatmap centers from the true keypoints.
  double bone_noise = 0.0;          ///< Noise on the observed bone-length prior.
  double bone_sigma = 0.1;          ///< sigma_b recorded with the prior.
  int mixture_components = 1;       ///< Components fitted when heatmaps are rasterized.
  int heatmap_resolution = 0;       ///< 0 keeps exact single Gaussians; otherwise grid side.
  bool hard_two_cam = false;        ///< Puts the first two cameras almost on top of each other.
  bool fixed_rig = false;           ///< Same camera placement for every seed, drawn from rig_seed.
  std::uint64_t rig_seed = 0;
  std::uint64_t seed = 0;

  /// Throws InvalidConfig.
  void validate() const;
};

struct GroundTruth {
  Pose3D pose;
  std::vector<WeakCamera> cameras;
};

/// One multi-view capture: heatmap mixtures and monocular estimates are the
/// observations; ground truth and keypoints are optional supervision.
struct Scene {
  std::string id;
  std::uint64_t seed = 0;
  std::optional<GroundTruth> gt;
  std::vector<Keypoints2D> keypoints;  ///< Empty when absent.
  MixtureSet mixtures;
  std::vector<Pose3D> monocular;
  Skeleton skeleton;
  std::optional<BonePrior> bone_prior;
  int reference_camera = 0;

  int num_joints() const { return monocular.empty() ? 0 : monocular.front().num_joints(); }
  int num_cameras() const { return static_cast<int>(monocular.size()); }
  /// Largest component count over all mixtures.
  int num_components() const;

  /// Reorders cameras (new k = old order[k]); the reference camera follows.
  Scene permuted(const std::vector<int>& order) const;
  /// Keeps the first k cameras. The reference must be among them.
  Scene first_cameras(int k) const;

  /// Throws ShapeMismatch when the blocks disagree in J or C.
  void validate() const;
};

/// Deterministic in cfg.seed.
Scene generate(const SceneConfig& cfg);

Skeleton make_skeleton(SkeletonTemplate t, int joints);

/// Rasterizes the mixture density at the cell centers of a W x H grid.
HeatmapGrid to_heatmap_grid(const GaussianMixture2D& g, int width, int height);

/// Stage-1 solution of the scene in its reference-camera gauge.
SolutionState stage1_state(const Scene& scene);

/// Random pose and cameras of the size a stage-1 solution has.
SolutionState random_state_for(const Scene& scene, std::uint64_t seed);

}  // namespace metapose
