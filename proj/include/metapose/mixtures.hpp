// Copyright (C) 2026 metapose contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "metapose/geometry.hpp"

namespace metapose {

/// Added to the per-component normalizer inside the log of the stable
/// log-sum-exp.
inline constexpr double kLogProbEpsilon = 1e-12;

/// Floor applied to mixture weights before renormalization.
inline constexpr double kWeightFloor = 1e-12;

/// H x W probability grid over the unit square. Cell (row, col) has its center
/// at ((col + 0.5) / W, (row + 0.5) / H). Normalized to unit mass on construction.
class HeatmapGrid {
 public:
  /// Throws EmptyHeatmap when the total mass is zero, InvalidConfig on
  /// negative or non-finite cells.
  explicit HeatmapGrid(Eigen::MatrixXd probs);

  int width() const { return static_cast<int>(probs_.cols()); }
  int height() const { return static_cast<int>(probs_.rows()); }
  const Eigen::MatrixXd& probs() const { return probs_; }
  Vec2 cell_center(int row, int col) const;
  double cell_area() const { return 1.0 / (static_cast<double>(width()) * height()); }

 private:
  Eigen::MatrixXd probs_;
};

struct GaussianComponent {
  double weight = 1.0;
  Vec2 mean = Vec2::Zero();
  double sigma = 1.0;
};

/// Spherical 2D Gaussian mixture.
struct GaussianMixture2D {
  std::vector<GaussianComponent> components;

  int size() const { return static_cast<int>(components.size()); }

  static GaussianMixture2D single(const Vec2& mean, double sigma);

  /// Components ordered by descending weight (stable for ties).
  GaussianMixture2D sorted_by_weight() const;

  /// Throws InvalidConfig unless weights sum to 1 (1e-9) and sigmas are positive.
  void validate() const;
};

struct EmConfig {
  int components = 4;
  int max_iters = 50;
  double tol = 1e-7;
  std::uint64_t seed = 0;
  double sigma_floor = 1e-4;
};

/// Weighted EM over the grid cell centers with weights p_i: standard E-step,
/// weighted M-step for (w, mu, sigma). Sigma is clamped at cfg.sigma_floor.
/// When `history` is given it receives the weighted log-likelihood of the
/// seeding mixture followed by the value after every iteration.
GaussianMixture2D fit_gmm(const HeatmapGrid& grid, const EmConfig& cfg,
                          std::vector<double>* history = nullptr);

/// Numerically stable mixture log-density.
double log_prob(const GaussianMixture2D& g, const Vec2& x);

/// log_prob together with its gradient with respect to x.
double log_prob(const GaussianMixture2D& g, const Vec2& x, Vec2* grad);

/// sum_i p_i * log_prob(g, x_i) over grid cells.
double weighted_log_likelihood(const HeatmapGrid& grid, const GaussianMixture2D& g);

}  // namespace metapose
