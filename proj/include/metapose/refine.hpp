// Copyright (C) 2026 metapose contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <vector>

#include "metapose/objective.hpp"

namespace metapose {

struct AdamConfig {
  double lr = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int steps = 100;

  void validate() const;
};

/// First and second moment estimates for one parameter vector.
struct AdamMoments {
  Eigen::VectorXd m;
  Eigen::VectorXd v;

  static AdamMoments zeros(Eigen::Index n) { return {Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n)}; }
};

/// One bias-corrected Adam update at step t >= 1, in place.
void adam_step(Eigen::Ref<Eigen::VectorXd> params, const Eigen::Ref<const Eigen::VectorXd>& grads,
               AdamMoments& moments, const AdamConfig& cfg, int t);

struct RefineTrace {
  std::vector<double> objective;  ///< Value before every step and after the last one.
  SolutionState best;             ///< Lowest-objective state seen.
  int best_step = 0;
  double wall_time = 0.0;
};

/// Fixed-budget Adam descent on total_objective over the flattened state.
RefineTrace refine_iterative(const SolutionState& init, const ObjectiveSpec& spec, const AdamConfig& cfg);

}  // namespace metapose
