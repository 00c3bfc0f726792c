// Copyright (C) 2026 metapose contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "metapose/geometry.hpp"

namespace metapose {

struct EvalReport {
  double pmpjpe = 0.0;
  double nmpjpe = 0.0;
  double mse2d = 0.0;  ///< Normalized image units; tables print it x 1e4.
  double wall_time = 0.0;
};

/// Mean per-joint error after the optimal similarity (rotation, scale,
/// translation; proper rotations only) mapping pred onto gt.
double pmpjpe(const Pose3D& pred, const Pose3D& gt);

/// Mean per-joint error after the optimal scale and shift only.
double nmpjpe(const Pose3D& pred, const Pose3D& gt);

/// Mean over cameras and joints of the squared 2D keypoint error.
double mse2d(const std::vector<Keypoints2D>& pred, const std::vector<Keypoints2D>& gt);

}  // namespace metapose
