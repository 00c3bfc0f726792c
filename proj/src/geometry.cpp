// Copyright (C) 2026 metapose contributors
// SPDX-License-Identifier: Apache-2.0

#include "metapose/geometry.hpp"

#include <Eigen/Geometry>
#include <Eigen/LU>
#include <Eigen/SVD>
#include <cmath>

#include "metapose/error.hpp"

namespace metapose {

void Pose3D::validate() const {
  if (joints.rows() < 3) {
    throw Error(ErrorKind::kDegeneratePose, "pose needs at least 3 joints");
  }
  if (!joints.allFinite()) {
    throw Error(ErrorKind::kDegeneratePose, "pose has non-finite coordinates");
  }
}

Eigen::Matrix<double, 6, 1> Rot6D::flat() const {
  Eigen::Matrix<double, 6, 1> v;
  v << x, y;
  return v;
}

Rot6D Rot6D::from_flat(const Eigen::Ref<const Eigen::Matrix<double, 6, 1>>& v) {
  return Rot6D{v.head<3>(), v.tail<3>()};
}

Mat3 WeakCamera::rotation() const { return rot6d_to_matrix(rot); }

double WeakCamera::scale() const { return std::exp(log_scale); }

WeakCamera WeakCamera::identity() { return WeakCamera{}; }

WeakCamera WeakCamera::from_matrix(const Mat3& r, const Vec2& shift, double scale) {
  if (!(scale > 0.0) || !std::isfinite(scale)) {
    throw Error(ErrorKind::kInvalidConfig, "camera scale must be positive and finite");
  }
  return WeakCamera{matrix_to_rot6d(r), shift, std::log(scale)};
}

Eigen::Matrix<double, 9, 1> WeakCamera::flat() const {
  Eigen::Matrix<double, 9, 1> v;
  v << rot.x, rot.y, shift, log_scale;
  return v;
}

WeakCamera WeakCamera::from_flat(const Eigen::Ref<const Eigen::Matrix<double, 9, 1>>& v) {
  return WeakCamera{Rot6D{v.segment<3>(0), v.segment<3>(3)}, v.segment<2>(6), v(8)};
}

Mat3 rot6d_to_matrix(const Rot6D& r) {
  const double nx = r.x.norm();
  const Vec3 b = r.x.cross(r.y);
  const double nb = b.norm();
  if (!(nx > kParallelTolerance) || !(nb > kParallelTolerance * nx * r.y.norm())) {
    throw Error(ErrorKind::kDegenerateRotation, "6D rotation vectors are zero or parallel");
  }
  const Vec3 c = r.x.cross(b);
  Mat3 m;
  m.row(0) = r.x / nx;
  m.row(1) = b / nb;
  m.row(2) = c / c.norm();
  return m;
}

Rot6D matrix_to_rot6d(const Mat3& r) {
  const double ortho = (r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff();
  const double det = r.determinant();
  if (!std::isfinite(ortho) || ortho > 1e-6 || std::abs(det - 1.0) > 1e-6) {
    throw Error(ErrorKind::kNotARotation, "matrix is not a proper rotation");
  }
  // n(x cross y) = row1 when y = -row2, since row0 x row2 = -row1.
  return Rot6D{r.row(0).transpose(), -r.row(2).transpose()};
}

Vec2 project(const Vec3& joint, const WeakCamera& camera) {
  const Mat3 r = camera.rotation();
  return camera.scale() * (r.topRows<2>() * joint) + camera.shift;
}

Keypoints2D project_pose(const Pose3D& pose, const WeakCamera& camera) {
  const Mat3 r = camera.rotation();
  const double s = camera.scale();
  Eigen::MatrixX2d k = s * (pose.joints * r.topRows<2>().transpose());
  k.rowwise() += camera.shift.transpose();
  return Keypoints2D(std::move(k));
}

Mat3 kabsch_rotation(const Eigen::MatrixX3d& src_centered, const Eigen::MatrixX3d& dst_centered) {
  const Mat3 cov = src_centered.transpose() * dst_centered;
  Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  if (svd.info() != Eigen::Success) {
    throw Error(ErrorKind::kAlignmentFailed, "SVD did not converge");
  }
  const Mat3& u = svd.matrixU();
  const Mat3& v = svd.matrixV();
  Mat3 d = Mat3::Identity();
  if ((v * u.transpose()).determinant() < 0.0) d(2, 2) = -1.0;
  return v * d * u.transpose();
}

namespace {

void require_non_degenerate(const Eigen::MatrixX3d& centered, const char* what) {
  const double tau = kDegenerateTolerancePerJoint * static_cast<double>(centered.rows());
  if (!(centered.norm() > tau)) {
    throw Error(ErrorKind::kDegeneratePose, std::string(what) + " pose has no spatial extent");
  }
}

void require_same_shape(const Pose3D& a, const Pose3D& b) {
  a.validate();
  b.validate();
  if (a.num_joints() != b.num_joints()) {
    throw Error(ErrorKind::kShapeMismatch, "poses have different joint counts");
  }
}

}  // namespace

Alignment procrustes_align(const Pose3D& src, const Pose3D& dst) {
  require_same_shape(src, dst);
  const Eigen::MatrixX3d a = src.centered();
  const Eigen::MatrixX3d b = dst.centered();
  require_non_degenerate(a, "source");
  require_non_degenerate(b, "target");

  Alignment out;
  out.rotation = kabsch_rotation(a, b);
  const Eigen::MatrixX3d rotated = a * out.rotation.transpose();
  const double denom = rotated.leftCols<2>().norm();
  if (!(denom > kDegenerateTolerancePerJoint * a.rows())) {
    throw Error(ErrorKind::kDegeneratePose, "aligned pose collapses in the image plane");
  }
  out.scale = b.leftCols<2>().norm() / denom;
  const Vec3 src_mean = src.centroid();
  const Vec3 dst_mean = dst.centroid();
  out.shift = dst_mean.head<2>() - out.scale * (out.rotation * src_mean).head<2>();
  return out;
}

Pose3D Similarity3D::apply(const Pose3D& p) const {
  Eigen::MatrixX3d j = scale * (p.joints * rotation.transpose());
  j.rowwise() += translation.transpose();
  return Pose3D(std::move(j));
}

Similarity3D align_similarity(const Pose3D& src, const Pose3D& dst) {
  require_same_shape(src, dst);
  const Eigen::MatrixX3d a = src.centered();
  const Eigen::MatrixX3d b = dst.centered();
  require_non_degenerate(a, "source");

  Similarity3D out;
  out.rotation = kabsch_rotation(a, b);
  // Least-squares scale given the rotation: <R a, b> / <a, a>.
  const double num = (a * out.rotation.transpose()).cwiseProduct(b).sum();
  out.scale = num / a.squaredNorm();
  out.translation = dst.centroid() - out.scale * out.rotation * src.centroid();
  return out;
}

Pose3D center_depth(Pose3D q) {
  q.joints.col(2).array() -= q.joints.col(2).mean();
  return q;
}

Stage1Result stage1_init(std::span<const Pose3D> monocular, int reference) {
  const int num_cameras = static_cast<int>(monocular.size());
  if (num_cameras < 1) {
    throw Error(ErrorKind::kInvalidConfig, "stage 1 needs at least one camera");
  }
  if (reference < 0 || reference >= num_cameras) {
    throw Error(ErrorKind::kInvalidConfig, "reference camera index out of range");
  }
  const Pose3D& ref = monocular[reference];
  ref.validate();

  Stage1Result out;
  out.cameras.resize(num_cameras, WeakCamera::identity());
  Eigen::MatrixX3d acc = Eigen::MatrixX3d::Zero(ref.num_joints(), 3);
  for (int c = 0; c < num_cameras; ++c) {
    if (c == reference) {
      acc += ref.centered();
      continue;
    }
    const Alignment a = procrustes_align(ref, monocular[c]);
    out.cameras[c] = WeakCamera::from_matrix(a.rotation, a.shift, a.scale);
    // Map the camera-frame estimate back into the reference frame.
    acc += (monocular[c].centered() * a.rotation) / a.scale;
  }
  acc /= static_cast<double>(num_cameras);
  acc.rowwise() += ref.centroid().transpose();
  out.pose = Pose3D(std::move(acc));
  return out;
}

}  // namespace metapose
