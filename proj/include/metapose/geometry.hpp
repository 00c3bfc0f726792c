// Copyright (C) 2026 metapose contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <span>
#include <vector>

namespace metapose {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Parallel-vector guard for the 6D rotation parameterization.
inline constexpr double kParallelTolerance = 1e-8;

/// Degenerate-pose guard: centered Frobenius norm must exceed this times J.
inline constexpr double kDegenerateTolerancePerJoint = 1e-10;

/// J x 3 joint coordinates. Requires J >= 3 and finite entries.
struct Pose3D {
  Eigen::MatrixX3d joints;

  Pose3D() = default;
  explicit Pose3D(Eigen::MatrixX3d j) : joints(std::move(j)) {}

  int num_joints() const { return static_cast<int>(joints.rows()); }
  Vec3 joint(int j) const { return joints.row(j).transpose(); }
  Vec3 centroid() const { return joints.colwise().mean().transpose(); }
  Eigen::MatrixX3d centered() const { return joints.rowwise() - joints.colwise().mean(); }

  /// Throws DegeneratePose when J < 3 or any entry is non-finite.
  void validate() const;
};

/// J x 2 keypoints in normalized image coordinates.
struct Keypoints2D {
  Eigen::MatrixX2d points;

  Keypoints2D() = default;
  explicit Keypoints2D(Eigen::MatrixX2d p) : points(std::move(p)) {}

  int num_joints() const { return static_cast<int>(points.rows()); }
};

/// Raw 6D rotation parameters; the matrix rows are obtained by Gram-Schmidt
/// as [n(x), n(x cross y), n(x cross (x cross y))].
struct Rot6D {
  Vec3 x = Vec3::UnitX();
  Vec3 y = -Vec3::UnitZ();

  Eigen::Matrix<double, 6, 1> flat() const;
  static Rot6D from_flat(const Eigen::Ref<const Eigen::Matrix<double, 6, 1>>& v);
};

/// Weak-perspective camera: k = s * (R j)[0:2] + t with s = exp(log_scale).
struct WeakCamera {
  Rot6D rot;
  Vec2 shift = Vec2::Zero();
  double log_scale = 0.0;

  Mat3 rotation() const;
  double scale() const;

  /// (I, 0, 1): the gauge camera.
  static WeakCamera identity();
  static WeakCamera from_matrix(const Mat3& r, const Vec2& shift, double scale);

  /// Packs as [rot6d x (3), rot6d y (3), shift (2), log_scale (1)].
  Eigen::Matrix<double, 9, 1> flat() const;
  static WeakCamera from_flat(const Eigen::Ref<const Eigen::Matrix<double, 9, 1>>& v);
};

inline constexpr int kCameraParams = 9;

/// Throws DegenerateRotation when |x| or |x cross y| falls below kParallelTolerance.
Mat3 rot6d_to_matrix(const Rot6D& r);

/// Inverse of rot6d_to_matrix: x = row 0, y = -row 2. Throws NotARotation
/// when r is not orthonormal with det +1 to within 1e-6.
Rot6D matrix_to_rot6d(const Mat3& r);

Vec2 project(const Vec3& joint, const WeakCamera& camera);
Keypoints2D project_pose(const Pose3D& pose, const WeakCamera& camera);

/// Weak camera (R, t, s) mapping a reference-frame pose onto another camera
/// frame: dst[:, 0:2] ~ s * (R src)[:, 0:2] + t.
struct Alignment {
  Mat3 rotation = Mat3::Identity();
  Vec2 shift = Vec2::Zero();
  double scale = 1.0;
};

/// Rotation from SVD of the centered cross-covariance with the Kabsch sign
/// correction; scale and shift from the image-plane (first two) coordinates.
Alignment procrustes_align(const Pose3D& src, const Pose3D& dst);

/// Full 3D similarity dst ~ scale * rotation * src + translation (least squares).
struct Similarity3D {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  double scale = 1.0;

  Pose3D apply(const Pose3D& p) const;
};

Similarity3D align_similarity(const Pose3D& src, const Pose3D& dst);

/// Kabsch rotation R minimizing sum |dst_j - R src_j|^2 over centered rows.
Mat3 kabsch_rotation(const Eigen::MatrixX3d& src_centered, const Eigen::MatrixX3d& dst_centered);

struct Stage1Result {
  Pose3D pose;
  std::vector<WeakCamera> cameras;
};

/// Closed-form initializer from per-camera monocular estimates. The reference
/// camera is fixed to (I, 0, 1) and every other camera is aligned against it.
Stage1Result stage1_init(std::span<const Pose3D> monocular, int reference = 0);

/// Subtracts the per-camera mean of the depth column.
Pose3D center_depth(Pose3D q);

}  // namespace metapose
