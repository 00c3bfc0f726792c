// Copyright (C) 2026 metapose contributors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "metapose/error.hpp"
#include "metapose/mixtures.hpp"
#include "test_support.hpp"

using namespace metapose;
using metapose::testing::uniform;

namespace {

// Grid whose cell values are an isotropic Gaussian density at cell centers.
Eigen::MatrixXd gaussian_cells(int w, int h, const Vec2& mu, double sigma, double mass = 1.0) {
  Eigen::MatrixXd m(h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const Vec2 x((c + 0.5) / w, (r + 0.5) / h);
      m(r, c) = mass * std::exp(-(x - mu).squaredNorm() / (2 * sigma * sigma));
    }
  }
  return m;
}

// Direct density in extended precision; no log-sum-exp.
long double naive_log_prob(const GaussianMixture2D& g, const Vec2& x) {
  long double total = 0.0L;
  for (const auto& c : g.components) {
    const long double var = static_cast<long double>(c.sigma) * c.sigma;
    const long double norm = c.weight / (2.0L * std::numbers::pi_v<long double> * var) + 1e-12L;
    const long double q = static_cast<long double>((x - c.mean).squaredNorm()) / (2.0L * var);
    total += norm * std::exp(-q);
  }
  return std::log(total);
}

}  // namespace

TEST_CASE("HeatmapGrid normalizes and validates") {
  Eigen::MatrixXd m = Eigen::MatrixXd::Constant(4, 5, 3.0);
  const HeatmapGrid g(m);
  CHECK(g.probs().sum() == doctest::Approx(1.0));
  CHECK(g.width() == 5);
  CHECK(g.height() == 4);
  CHECK(g.cell_center(0, 0).isApprox(Vec2(0.1, 0.125)));

  try {
    HeatmapGrid empty(Eigen::MatrixXd::Zero(3, 3));
    FAIL("zero mass accepted");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kEmptyHeatmap);
  }
  Eigen::MatrixXd neg = Eigen::MatrixXd::Ones(2, 2);
  neg(0, 0) = -1.0;
  CHECK_THROWS_AS(HeatmapGrid{neg}, Error);
}

TEST_CASE("fit_gmm on a point mass collapses to the sigma floor") {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(11, 11);
  m(5, 5) = 1.0;
  const HeatmapGrid grid(m);
  EmConfig cfg;
  cfg.components = 1;
  const GaussianMixture2D g = fit_gmm(grid, cfg);
  REQUIRE(g.size() == 1);
  CHECK((g.components[0].mean - Vec2(0.5, 0.5)).norm() < 1e-12);
  CHECK(g.components[0].sigma == doctest::Approx(cfg.sigma_floor));
  CHECK(weighted_log_likelihood(grid, g) == doctest::Approx(log_prob(g, Vec2(0.5, 0.5))).epsilon(1e-12));
}

TEST_CASE("fit_gmm recovers a sampled isotropic Gaussian") {
  const Vec2 truth(0.43, 0.58);
  const HeatmapGrid grid(gaussian_cells(64, 64, truth, 0.05));
  EmConfig cfg;
  cfg.components = 1;
  const GaussianMixture2D g = fit_gmm(grid, cfg);
  CHECK((g.components[0].mean - truth).cwiseAbs().maxCoeff() < 1.0 / 64);
  CHECK(std::abs(g.components[0].sigma - 0.05) < 0.005);
}

TEST_CASE("fit_gmm separates two blobs") {
  const Vec2 a(0.25, 0.3), b(0.72, 0.7);
  const HeatmapGrid grid(gaussian_cells(64, 64, a, 0.04, 0.7) + gaussian_cells(64, 64, b, 0.04, 0.3));
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    EmConfig cfg;
    cfg.components = 2;
    cfg.seed = seed;
    cfg.max_iters = 200;
    const GaussianMixture2D g = fit_gmm(grid, cfg).sorted_by_weight();
    CHECK((g.components[0].mean - a).cwiseAbs().maxCoeff() < 1.0 / 64);
    CHECK((g.components[1].mean - b).cwiseAbs().maxCoeff() < 1.0 / 64);
    CHECK(std::abs(g.components[0].weight - 0.7) < 0.05);
    CHECK(std::abs(g.components[1].weight - 0.3) < 0.05);
  }
}

TEST_CASE("fit_gmm is deterministic in the seed") {
  std::mt19937_64 rng(4);
  Eigen::MatrixXd m(20, 20);
  for (int i = 0; i < m.size(); ++i) m.data()[i] = uniform(rng, 0.0, 1.0);
  const HeatmapGrid grid(m);
  EmConfig cfg;
  cfg.seed = 99;
  const GaussianMixture2D a = fit_gmm(grid, cfg);
  const GaussianMixture2D b = fit_gmm(grid, cfg);
  for (int k = 0; k < a.size(); ++k) {
    CHECK(a.components[k].weight == b.components[k].weight);
    CHECK(a.components[k].mean == b.components[k].mean);
    CHECK(a.components[k].sigma == b.components[k].sigma);
  }
  a.validate();
}

TEST_CASE("EM weighted log-likelihood never decreases") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    const int w = 16 + static_cast<int>(rng() % 33);
    const int h = 16 + static_cast<int>(rng() % 33);
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(h, w);
    const int blobs = 1 + static_cast<int>(rng() % 4);
    for (int k = 0; k < blobs; ++k) {
      m += gaussian_cells(w, h, Vec2(uniform(rng, 0.1, 0.9), uniform(rng, 0.1, 0.9)), uniform(rng, 0.02, 0.2),
                          uniform(rng, 0.2, 1.0));
    }
    for (int i = 0; i < m.size(); ++i) m.data()[i] += uniform(rng, 0.0, 0.05) * m.maxCoeff();
    EmConfig cfg;
    cfg.components = 1 + static_cast<int>(rng() % 5);
    cfg.seed = trial;
    std::vector<double> history;
    fit_gmm(HeatmapGrid(m), cfg, &history);
    REQUIRE(history.size() >= 2);
    for (size_t i = 1; i < history.size(); ++i) CHECK(history[i] >= history[i - 1] - 1e-9);
  }
}

TEST_CASE("log_prob matches closed forms") {
  const GaussianMixture2D unit = GaussianMixture2D::single(Vec2::Zero(), 1.0);
  CHECK(log_prob(unit, Vec2::Zero()) == doctest::Approx(-1.8378770664093453).epsilon(1e-9));

  // The far component contributes nothing.
  const double sigma = 0.01;
  GaussianMixture2D pair;
  pair.components = {{0.5, Vec2(0.3, 0.3), sigma}, {0.5, Vec2(0.3 + 1000 * sigma, 0.3), sigma}};
  const double single = log_prob(GaussianMixture2D::single(Vec2(0.3, 0.3), sigma), Vec2(0.3, 0.3));
  CHECK(std::abs(log_prob(pair, Vec2(0.3, 0.3)) - (std::log(0.5) + single)) < 1e-12);
}

TEST_CASE("log_prob matches an extended-precision oracle") {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 200; ++trial) {
    GaussianMixture2D g;
    const int m = 1 + static_cast<int>(rng() % 4);
    double total = 0.0;
    for (int k = 0; k < m; ++k) {
      g.components.push_back({uniform(rng, 0.1, 1.0), Vec2(uniform(rng, 0, 1), uniform(rng, 0, 1)),
                              uniform(rng, 0.005, 0.2)});
      total += g.components.back().weight;
    }
    for (auto& c : g.components) c.weight /= total;
    const Vec2 x(uniform(rng, -1, 2), uniform(rng, -1, 2));
    const long double oracle = naive_log_prob(g, x);
    CHECK(std::abs(log_prob(g, x) - static_cast<double>(oracle)) <= 1e-6 * std::abs(static_cast<double>(oracle)));
  }

  // Exponent of -900: the double-precision direct formula underflows.
  const GaussianMixture2D unit = GaussianMixture2D::single(Vec2::Zero(), 1.0);
  const Vec2 x(std::sqrt(1800.0), 0.0);
  const double naive_double = std::log(std::exp(-900.0) / (2 * std::numbers::pi));
  CHECK(std::isinf(naive_double));
  const double stable = log_prob(unit, x);
  CHECK(std::isfinite(stable));
  const long double oracle = naive_log_prob(unit, x);
  CHECK(std::abs(stable - static_cast<double>(oracle)) <= 1e-6 * std::abs(static_cast<double>(oracle)));

  for (double q : {800.0, 5000.0, 1e6, 1e12}) {
    CHECK(std::isfinite(log_prob(unit, Vec2(std::sqrt(2 * q), 0.0))));
  }
}

TEST_CASE("log_prob gradient matches finite differences") {
  GaussianMixture2D g;
  g.components = {{0.3, Vec2(0.2, 0.4), 0.05}, {0.7, Vec2(0.5, 0.45), 0.1}};
  for (const Vec2& x : {Vec2(0.3, 0.4), Vec2(0.9, -0.2), Vec2(0.21, 0.41)}) {
    Vec2 grad;
    log_prob(g, x, &grad);
    for (int d = 0; d < 2; ++d) {
      Vec2 hi = x, lo = x;
      hi(d) += 1e-6;
      lo(d) -= 1e-6;
      const double fd = (log_prob(g, hi) - log_prob(g, lo)) / 2e-6;
      CHECK(grad(d) == doctest::Approx(fd).epsilon(1e-6));
    }
  }
}

TEST_CASE("log_prob integrates to one over the grid") {
  GaussianMixture2D g;
  g.components = {{0.6, Vec2(0.4, 0.45), 0.06}, {0.4, Vec2(0.65, 0.6), 0.04}};
  const int n = 400;
  double mass = 0.0;
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) mass += std::exp(log_prob(g, Vec2((c + 0.5) / n, (r + 0.5) / n)));
  }
  mass /= static_cast<double>(n) * n;
  CHECK(mass >= 0.98);
  CHECK(mass <= 1.02);
}

TEST_CASE("weighted log-likelihood prefers the matching spread") {
  const HeatmapGrid uniform_grid(Eigen::MatrixXd::Ones(32, 32));
  const GaussianMixture2D concentrated = GaussianMixture2D::single(Vec2(0.5, 0.5), 0.01);
  const GaussianMixture2D wide = GaussianMixture2D::single(Vec2(0.5, 0.5), 0.3);
  CHECK(weighted_log_likelihood(uniform_grid, concentrated) < weighted_log_likelihood(uniform_grid, wide));
}
