// Copyright (C) 2026 metapose contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <utility>
#include <vector>

#include "metapose/geometry.hpp"
#include "metapose/mixtures.hpp"

namespace metapose {

struct Skeleton {
  std::vector<std::pair<int, int>> edges;

  int num_edges() const { return static_cast<int>(edges.size()); }

  /// Indices in range, no self-edges, edge graph connected.
  void validate(int num_joints) const;
};

/// Target normalized bone lengths (mean 1) and their observation noise.
struct BonePrior {
  Eigen::VectorXd target;
  double sigma_b = 1.0;

  void validate() const;
};

/// Current pose and cameras. The camera at index `gauge` is frozen at the
/// identity and never appears in the parameter vector.
struct SolutionState {
  Pose3D pose;
  std::vector<WeakCamera> cameras;
  int gauge = 0;

  int num_joints() const { return pose.num_joints(); }
  int num_cameras() const { return static_cast<int>(cameras.size()); }

  /// 3J pose entries (row-major) then 9 entries per non-gauge camera in order.
  int num_params() const { return 3 * num_joints() + kCameraParams * (num_cameras() - 1); }
  Eigen::VectorXd flatten() const;
  SolutionState with_params(const Eigen::VectorXd& params) const;

  std::vector<Keypoints2D> project_all() const;

  /// Reorders cameras so that new camera k is old camera order[k]; the gauge
  /// index follows its camera.
  SolutionState permuted(const std::vector<int>& order) const;
};

struct TeacherLossConfig {
  double lambda_pose = 0.0;
  double lambda_shift = 0.0;
  double lambda_rot = 0.0;
  double lambda_scale = 0.0;
  SolutionState reference;
};

/// Per-(camera, joint) heatmap mixtures, indexed [camera][joint].
using MixtureSet = std::vector<std::vector<GaussianMixture2D>>;

struct TermWeights {
  double reprojection = 1.0;
  double ba = 1.0;
  double bone = 1.0;
  double teacher = 1.0;
};

/// Selects the active terms of the total objective. A term is active when
/// its inputs are set; the data is borrowed and must outlive the spec.
struct ObjectiveSpec {
  const MixtureSet* mixtures = nullptr;
  const std::vector<Keypoints2D>* keypoints = nullptr;
  const Skeleton* skeleton = nullptr;
  const BonePrior* bone_prior = nullptr;
  const TeacherLossConfig* teacher = nullptr;
  TermWeights weights;

  bool has_ba() const { return mixtures != nullptr; }
  bool has_reprojection() const { return keypoints != nullptr; }
  bool has_bone() const { return skeleton != nullptr && bone_prior != nullptr; }
  bool has_teacher() const { return teacher != nullptr; }
  bool any_active() const { return has_ba() || has_reprojection() || has_bone() || has_teacher(); }

  /// Throws NoActiveTerms or ShapeMismatch.
  void validate(const SolutionState& s) const;
};

double ba_neg_log_likelihood(const SolutionState& s, const MixtureSet& mixtures);
double reprojection_loss(const SolutionState& s, const std::vector<Keypoints2D>& keypoints);
Eigen::VectorXd bone_lengths_normalized(const Pose3D& p, const Skeleton& skeleton);
double bone_loss(const Pose3D& p, const BonePrior& prior, const Skeleton& skeleton);
double teacher_loss(const SolutionState& s, const TeacherLossConfig& cfg);

/// Weighted sum of the active terms. The bone weight is divided by sigma_b^2.
double total_objective(const SolutionState& s, const ObjectiveSpec& spec);

/// Gradient of total_objective with respect to SolutionState::flatten(),
/// computed by a reverse sweep over a recorded tape.
Eigen::VectorXd gradient(const SolutionState& s, const ObjectiveSpec& spec, double* value = nullptr);

}  // namespace metapose
