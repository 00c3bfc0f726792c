// Copyright (C) 2026 metapose contributors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "metapose/error.hpp"
#include "metapose/refine.hpp"
#include "test_support.hpp"

using namespace metapose;
using namespace metapose::testing;

TEST_CASE("first adam step moves by lr against the gradient sign") {
  AdamConfig cfg;
  cfg.lr = 0.1;
  Eigen::VectorXd x(3);
  x << 1.0, -2.0, 0.5;
  Eigen::VectorXd g(3);
  g << 4.0, -0.25, 1e-3;
  AdamMoments m = AdamMoments::zeros(3);
  const Eigen::VectorXd before = x;
  adam_step(x, g, m, cfg, 1);
  for (int i = 0; i < 3; ++i) {
    const double expected = before(i) - cfg.lr * g(i) / (std::abs(g(i)) + cfg.eps);
    CHECK(x(i) == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("a zero gradient leaves parameters alone and decays the moments") {
  AdamConfig cfg;
  Eigen::VectorXd x = Eigen::VectorXd::Constant(2, 3.0);
  AdamMoments m{Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(2)};
  adam_step(x, Eigen::VectorXd::Zero(2), m, cfg, 1);
  CHECK(x == Eigen::VectorXd::Constant(2, 3.0));

  m.m.setConstant(1.0);
  m.v.setConstant(1.0);
  adam_step(x, Eigen::VectorXd::Zero(2), m, cfg, 2);
  CHECK(m.m(0) == doctest::Approx(0.9));
  CHECK(m.v(0) == doctest::Approx(0.999));
}

TEST_CASE("two adam steps on x^2 match a hand-rolled trace") {
  AdamConfig cfg;
  cfg.lr = 0.1;
  Eigen::VectorXd x = Eigen::VectorXd::Constant(1, 1.0);
  AdamMoments m = AdamMoments::zeros(1);

  double xr = 1.0, mr = 0.0, vr = 0.0;
  for (int t = 1; t <= 2; ++t) {
    const double g = 2.0 * xr;
    mr = 0.9 * mr + 0.1 * g;
    vr = 0.999 * vr + 0.001 * g * g;
    const double mh = mr / (1.0 - std::pow(0.9, t));
    const double vh = vr / (1.0 - std::pow(0.999, t));
    xr -= 0.1 * mh / (std::sqrt(vh) + 1e-8);

    adam_step(x, Eigen::VectorXd::Constant(1, 2.0 * x(0)), m, cfg, t);
    CHECK(x(0) == doctest::Approx(xr).epsilon(1e-14));
  }
  CHECK(x(0) == doctest::Approx(0.8004).epsilon(1e-4));
}

TEST_CASE("adam rejects bad configs and shapes") {
  AdamConfig bad;
  bad.lr = 0.0;
  CHECK_THROWS_AS(bad.validate(), Error);
  AdamMoments m = AdamMoments::zeros(2);
  Eigen::VectorXd x(2);
  CHECK_THROWS_AS(adam_step(x, Eigen::VectorXd::Zero(3), m, AdamConfig{}, 1), Error);
  CHECK_THROWS_AS(adam_step(x, Eigen::VectorXd::Zero(2), m, AdamConfig{}, 0), Error);
}

TEST_CASE("refinement of an exact fit stays put") {
  std::mt19937_64 rng(3);
  const SolutionState s = random_state(rng, 6, 3);
  const std::vector<Keypoints2D> exact = s.project_all();
  ObjectiveSpec spec;
  spec.keypoints = &exact;
  const RefineTrace t = refine_iterative(s, spec, AdamConfig{});
  CHECK(t.objective.size() == 101);
  CHECK(t.objective.front() < 1e-28);
  CHECK((t.best.flatten() - s.flatten()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("refinement is deterministic and never worse than its start") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    const SolutionState s = random_state(rng, 5, 3, trial % 3);
    RandomTerms terms(rng, s, 2);
    const ObjectiveSpec spec = terms.spec(1 + 2 + 4);
    AdamConfig cfg;
    cfg.steps = 30;
    const RefineTrace a = refine_iterative(s, spec, cfg);
    const RefineTrace b = refine_iterative(s, spec, cfg);
    CHECK(a.objective == b.objective);
    CHECK(a.best.flatten() == b.best.flatten());
    CHECK(total_objective(a.best, spec) <= a.objective.front());
    CHECK(total_objective(a.best, spec) == doctest::Approx(a.objective[a.best_step]).epsilon(1e-12));
    CHECK(a.best.cameras[s.gauge].flat() == WeakCamera::identity().flat());
  }
}

TEST_CASE("refinement reduces a reprojection objective from a perturbed start") {
  std::mt19937_64 rng(5);
  const SolutionState truth = random_state(rng, 8, 4);
  const std::vector<Keypoints2D> k = truth.project_all();
  ObjectiveSpec spec;
  spec.keypoints = &k;
  Eigen::VectorXd x = truth.flatten();
  for (int i = 0; i < x.size(); ++i) x(i) += 0.05 * std::normal_distribution<double>()(rng);
  AdamConfig cfg;
  cfg.steps = 300;
  const RefineTrace t = refine_iterative(truth.with_params(x), spec, cfg);
  CHECK(t.objective[t.best_step] < 0.05 * t.objective.front());
}
