// Copyright (C) 2026 metapose contributors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Geometry>
#include <numbers>

#include "metapose/error.hpp"
#include "metapose/metrics.hpp"
#include "test_support.hpp"

using namespace metapose;
using namespace metapose::testing;

namespace {

Mat3 euler(double a, double b, double c) {
  return (Eigen::AngleAxisd(a, Vec3::UnitZ()) * Eigen::AngleAxisd(b, Vec3::UnitY()) *
          Eigen::AngleAxisd(c, Vec3::UnitZ()))
      .toRotationMatrix();
}

// For a fixed rotation, scale and shift have closed forms; returns the
// least-squares residual and the mean per-joint error at that optimum.
std::pair<double, double> fit_for_rotation(const Pose3D& pred, const Pose3D& gt, const Mat3& r) {
  const Eigen::MatrixX3d a = pred.centered() * r.transpose();
  const Eigen::MatrixX3d b = gt.centered();
  const double s = a.cwiseProduct(b).sum() / a.squaredNorm();
  const Eigen::MatrixX3d res = s * a - b;
  return {res.squaredNorm(), res.rowwise().norm().mean()};
}

// Brute-force PMPJPE: dense ZYZ Euler grid, then coordinate pattern search.
double brute_force_pmpjpe(const Pose3D& pred, const Pose3D& gt) {
  constexpr double kPi = std::numbers::pi;
  Eigen::Vector3d best(0, 0, 0);
  double best_sse = std::numeric_limits<double>::infinity();
  const int n = 36;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= n / 2; ++j) {
      for (int k = 0; k < n; ++k) {
        const Eigen::Vector3d e(2 * kPi * i / n, kPi * j / (n / 2), 2 * kPi * k / n);
        const double sse = fit_for_rotation(pred, gt, euler(e(0), e(1), e(2))).first;
        if (sse < best_sse) {
          best_sse = sse;
          best = e;
        }
      }
    }
  }
  for (double step = 0.1; step > 1e-12; step *= 0.5) {
    bool improved = true;
    while (improved) {
      improved = false;
      for (int d = 0; d < 3; ++d) {
        for (double sign : {-1.0, 1.0}) {
          Eigen::Vector3d e = best;
          e(d) += sign * step;
          const double sse = fit_for_rotation(pred, gt, euler(e(0), e(1), e(2))).first;
          if (sse < best_sse) {
            best_sse = sse;
            best = e;
            improved = true;
          }
        }
      }
    }
  }
  return fit_for_rotation(pred, gt, euler(best(0), best(1), best(2))).second;
}

}  // namespace

TEST_CASE("pmpjpe is zero on similarity copies") {
  std::mt19937_64 rng(1);
  const Pose3D gt = random_pose(rng, 17, 300.0);
  CHECK(pmpjpe(gt, gt) < 1e-9);
  for (int trial = 0; trial < 20; ++trial) {
    const Similarity3D t{random_rotation(rng), Vec3(uniform(rng, -1e3, 1e3), 2.0, 3.0), 3.0};
    CHECK(pmpjpe(t.apply(gt), gt) < 1e-9);
  }
}

TEST_CASE("pmpjpe matches a brute-force alignment oracle") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 5; ++trial) {
    const Pose3D gt = random_pose(rng, 4, 1.0);
    Pose3D pred = Similarity3D{random_rotation(rng), Vec3(0.5, -1.0, 2.0), 1.4}.apply(gt);
    pred.joints.row(trial % 4) += Eigen::RowVector3d(0.3, -0.2, 0.25);
    const double oracle = brute_force_pmpjpe(pred, gt);
    CHECK(pmpjpe(pred, gt) == doctest::Approx(oracle).epsilon(1e-6));
    CHECK(oracle > 0.01);
  }
}

TEST_CASE("pmpjpe is invariant to a similarity of the prediction") {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    const Pose3D a = random_pose(rng, 10);
    const Pose3D b = random_pose(rng, 10);
    const Similarity3D t{random_rotation(rng), Vec3(uniform(rng, -5, 5), uniform(rng, -5, 5), 1.0),
                         uniform(rng, 0.1, 10.0)};
    CHECK(std::abs(pmpjpe(t.apply(a), b) - pmpjpe(a, b)) < 1e-9);
  }
}

TEST_CASE("nmpjpe removes only scale and shift") {
  std::mt19937_64 rng(2);
  const Pose3D gt = random_pose(rng, 12, 100.0);
  Pose3D scaled(2.0 * gt.joints);
  scaled.joints.rowwise() += Eigen::RowVector3d(5, -7, 11);
  CHECK(nmpjpe(scaled, gt) < 1e-9);

  const Mat3 r = Eigen::AngleAxisd(std::numbers::pi / 2, Vec3::UnitY()).toRotationMatrix();
  const Pose3D rotated(gt.joints * r.transpose());
  CHECK(nmpjpe(rotated, gt) > 10.0);
  CHECK(pmpjpe(rotated, gt) < 1e-9);
}

TEST_CASE("pmpjpe never exceeds nmpjpe on prediction-like pairs") {
  // Predictions are similarity copies of the ground truth plus per-joint
  // noise up to half the pose scale.
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 1000; ++trial) {
    const int j = 3 + static_cast<int>(rng() % 15);
    const Pose3D gt = random_pose(rng, j);
    const Pose3D noisy(gt.joints + random_pose(rng, j, uniform(rng, 0.0, 0.5)).joints);
    const Pose3D pred = Similarity3D{random_rotation(rng), Vec3(1, 2, 3), uniform(rng, 0.1, 10.0)}.apply(noisy);
    CHECK(pmpjpe(pred, gt) <= nmpjpe(pred, gt) + 1e-12);
  }
}

TEST_CASE("similarity alignment never has a larger squared residual than scale-and-shift") {
  // The alignment classes nest for the least-squares objective on any pair,
  // including unrelated poses where the mean-L2 ordering can flip.
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 1000; ++trial) {
    const int j = 3 + static_cast<int>(rng() % 15);
    const Pose3D a = random_pose(rng, j);
    const Pose3D b = random_pose(rng, j);
    const double similarity_sse = (align_similarity(a, b).apply(a).joints - b.joints).squaredNorm();
    const Eigen::MatrixX3d ac = a.centered();
    const Eigen::MatrixX3d bc = b.centered();
    const double s = std::max(0.0, ac.cwiseProduct(bc).sum() / ac.squaredNorm());
    CHECK(similarity_sse <= (s * ac - bc).squaredNorm() + 1e-12);
  }
}

TEST_CASE("metrics reject mismatched or degenerate inputs") {
  std::mt19937_64 rng(3);
  const Pose3D a = random_pose(rng, 5);
  CHECK_THROWS_AS(pmpjpe(a, random_pose(rng, 6)), Error);
  const Pose3D point(Eigen::MatrixX3d::Ones(5, 3));
  try {
    nmpjpe(point, a);
    FAIL("degenerate prediction accepted");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kDegeneratePose);
  }
}

TEST_CASE("mse2d") {
  std::mt19937_64 rng(7);
  std::vector<Keypoints2D> gt;
  for (int c = 0; c < 2; ++c) gt.emplace_back(Eigen::MatrixX2d::Random(2, 2));
  CHECK(mse2d(gt, gt) == 0.0);

  auto pred = gt;
  pred[1].points(0, 0) += 0.01;
  CHECK(mse2d(pred, gt) == doctest::Approx(0.0001 / 4));

  for (auto& k : pred) k.points += Eigen::MatrixX2d::Random(2, 2) * 0.1;
  double naive = 0.0;
  for (int c = 0; c < 2; ++c) {
    for (int j = 0; j < 2; ++j) {
      naive += std::pow(pred[c].points(j, 0) - gt[c].points(j, 0), 2) + std::pow(pred[c].points(j, 1) - gt[c].points(j, 1), 2);
    }
  }
  CHECK(mse2d(pred, gt) == doctest::Approx(naive / 4));
  CHECK_THROWS_AS(mse2d(pred, std::vector<Keypoints2D>(1)), Error);
}
