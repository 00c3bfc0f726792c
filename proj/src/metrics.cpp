// Copyright (C) 2026 metapose contributors
// SPDX-License-Identifier: Apache-2.0

#include "metapose/metrics.hpp"

#include <algorithm>

#include "metapose/error.hpp"

namespace metapose {

double pmpjpe(const Pose3D& pred, const Pose3D& gt) {
  const Similarity3D t = align_similarity(pred, gt);
  return (t.apply(pred).joints - gt.joints).rowwise().norm().mean();
}

double nmpjpe(const Pose3D& pred, const Pose3D& gt) {
  pred.validate();
  gt.validate();
  if (pred.num_joints() != gt.num_joints()) {
    throw Error(ErrorKind::kShapeMismatch, "poses have different joint counts");
  }
  const Eigen::MatrixX3d a = pred.centered();
  const Eigen::MatrixX3d b = gt.centered();
  const double denom = a.squaredNorm();
  if (!(std::sqrt(denom) > kDegenerateTolerancePerJoint * pred.num_joints())) {
    throw Error(ErrorKind::kDegeneratePose, "predicted pose has no spatial extent");
  }
  // A negative factor would be a point reflection, not a scaling.
  const double scale = std::max(0.0, a.cwiseProduct(b).sum() / denom);
  return (scale * a - b).rowwise().norm().mean();
}

double mse2d(const std::vector<Keypoints2D>& pred, const std::vector<Keypoints2D>& gt) {
  if (pred.size() != gt.size() || pred.empty()) {
    throw Error(ErrorKind::kShapeMismatch, "keypoint sets differ in camera count");
  }
  double total = 0.0;
  Eigen::Index count = 0;
  for (size_t c = 0; c < pred.size(); ++c) {
    if (pred[c].points.rows() != gt[c].points.rows()) {
      throw Error(ErrorKind::kShapeMismatch, "keypoint sets differ in joint count");
    }
    total += (pred[c].points - gt[c].points).squaredNorm();
    count += pred[c].points.rows();
  }
  return total / static_cast<double>(count);
}

}  // namespace metapose
