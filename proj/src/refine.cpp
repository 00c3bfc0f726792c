// Copyright (C) 2026 metapose contributors
// SPDX-License-Identifier: Apache-2.0

#include "metapose/refine.hpp"

#include <chrono>
#include <cmath>
#include <limits>

#include "metapose/error.hpp"

namespace metapose {

void AdamConfig::validate() const {
  if (!(lr > 0.0) || steps < 1 || !(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(eps > 0.0)) {
    throw Error(ErrorKind::kInvalidConfig, "invalid Adam configuration");
  }
}

void adam_step(Eigen::Ref<Eigen::VectorXd> params, const Eigen::Ref<const Eigen::VectorXd>& grads,
               AdamMoments& moments, const AdamConfig& cfg, int t) {
  if (grads.size() != params.size() || moments.m.size() != params.size() || moments.v.size() != params.size()) {
    throw Error(ErrorKind::kShapeMismatch, "Adam shapes disagree");
  }
  if (t < 1) throw Error(ErrorKind::kInvalidConfig, "Adam step index starts at 1");
  moments.m = cfg.beta1 * moments.m + (1.0 - cfg.beta1) * grads;
  moments.v = cfg.beta2 * moments.v + (1.0 - cfg.beta2) * grads.cwiseProduct(grads);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  params.array() -= cfg.lr * (moments.m.array() / c1) / ((moments.v.array() / c2).sqrt() + cfg.eps);
}

RefineTrace refine_iterative(const SolutionState& init, const ObjectiveSpec& spec, const AdamConfig& cfg) {
  cfg.validate();
  spec.validate(init);
  const auto start = std::chrono::steady_clock::now();

  RefineTrace trace;
  trace.objective.reserve(cfg.steps + 1);
  Eigen::VectorXd x = init.flatten();
  AdamMoments moments = AdamMoments::zeros(x.size());
  double best = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_x = x;
  SolutionState current = init;

  auto record = [&](double value, int step) {
    if (!std::isfinite(value)) {
      throw Error(ErrorKind::kTrainingDiverged, "objective became non-finite during refinement");
    }
    trace.objective.push_back(value);
    if (value < best) {
      best = value;
      best_x = x;
      trace.best_step = step;
    }
  };

  for (int t = 1; t <= cfg.steps; ++t) {
    double value = 0.0;
    const Eigen::VectorXd g = gradient(current, spec, &value);
    record(value, t - 1);
    adam_step(x, g, moments, cfg, t);
    current = init.with_params(x);
  }
  record(total_objective(current, spec), cfg.steps);

  trace.best = init.with_params(best_x);
  trace.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return trace;
}

}  // namespace metapose
