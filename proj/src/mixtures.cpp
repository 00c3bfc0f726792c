// Copyright (C) 2026 metapose contributors
// SPDX-License-Identifier: Apache-2.0

#include "metapose/mixtures.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "metapose/error.hpp"

namespace metapose {

HeatmapGrid::HeatmapGrid(Eigen::MatrixXd probs) : probs_(std::move(probs)) {
  if (probs_.size() == 0) {
    throw Error(ErrorKind::kEmptyHeatmap, "heatmap has no cells");
  }
  if (!probs_.allFinite() || (probs_.array() < 0.0).any()) {
    throw Error(ErrorKind::kInvalidConfig, "heatmap cells must be finite and non-negative");
  }
  const double total = probs_.sum();
  if (!(total > 0.0)) {
    throw Error(ErrorKind::kEmptyHeatmap, "heatmap has zero total mass");
  }
  probs_ /= total;
}

Vec2 HeatmapGrid::cell_center(int row, int col) const {
  return Vec2((col + 0.5) / width(), (row + 0.5) / height());
}

GaussianMixture2D GaussianMixture2D::single(const Vec2& mean, double sigma) {
  return GaussianMixture2D{{GaussianComponent{1.0, mean, sigma}}};
}

GaussianMixture2D GaussianMixture2D::sorted_by_weight() const {
  GaussianMixture2D out = *this;
  std::stable_sort(out.components.begin(), out.components.end(),
                   [](const auto& a, const auto& b) { return a.weight > b.weight; });
  return out;
}

void GaussianMixture2D::validate() const {
  if (components.empty()) {
    throw Error(ErrorKind::kInvalidConfig, "mixture has no components");
  }
  double total = 0.0;
  for (const auto& c : components) {
    if (!(c.sigma > 0.0) || !(c.weight >= 0.0) || !c.mean.allFinite()) {
      throw Error(ErrorKind::kInvalidConfig, "mixture component out of range");
    }
    total += c.weight;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw Error(ErrorKind::kInvalidConfig, "mixture weights do not sum to one");
  }
}

double log_prob(const GaussianMixture2D& g, const Vec2& x, Vec2* grad) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  const int m = g.size();
  // Small mixtures live on the stack; M is typically <= 8.
  double logits_small[16];
  std::vector<double> logits_large;
  double* logits = logits_small;
  if (m > 16) {
    logits_large.resize(m);
    logits = logits_large.data();
  }
  double best = -std::numeric_limits<double>::infinity();
  for (int r = 0; r < m; ++r) {
    const auto& c = g.components[r];
    const double var = c.sigma * c.sigma;
    logits[r] = std::log(c.weight / (kTwoPi * var) + kLogProbEpsilon) -
                (x - c.mean).squaredNorm() / (2.0 * var);
    best = std::max(best, logits[r]);
  }
  double sum = 0.0;
  for (int r = 0; r < m; ++r) sum += std::exp(logits[r] - best);
  const double value = best + std::log(sum);
  if (grad != nullptr) {
    grad->setZero();
    for (int r = 0; r < m; ++r) {
      const auto& c = g.components[r];
      const double resp = std::exp(logits[r] - value);
      *grad -= resp * (x - c.mean) / (c.sigma * c.sigma);
    }
  }
  return value;
}

double log_prob(const GaussianMixture2D& g, const Vec2& x) { return log_prob(g, x, nullptr); }

double weighted_log_likelihood(const HeatmapGrid& grid, const GaussianMixture2D& g) {
  double total = 0.0;
  for (int r = 0; r < grid.height(); ++r) {
    for (int c = 0; c < grid.width(); ++c) {
      const double p = grid.probs()(r, c);
      if (p > 0.0) total += p * log_prob(g, grid.cell_center(r, c));
    }
  }
  return total;
}

namespace {

struct WeightedPoints {
  Eigen::MatrixX2d x;
  Eigen::VectorXd p;
};

WeightedPoints support_of(const HeatmapGrid& grid) {
  std::vector<std::pair<Vec2, double>> pts;
  for (int r = 0; r < grid.height(); ++r) {
    for (int c = 0; c < grid.width(); ++c) {
      const double p = grid.probs()(r, c);
      if (p > 0.0) pts.emplace_back(grid.cell_center(r, c), p);
    }
  }
  WeightedPoints out{Eigen::MatrixX2d(pts.size(), 2), Eigen::VectorXd(pts.size())};
  for (size_t i = 0; i < pts.size(); ++i) {
    out.x.row(i) = pts[i].first.transpose();
    out.p(i) = pts[i].second;
  }
  return out;
}

int sample_index(const Eigen::VectorXd& mass, std::mt19937_64& rng) {
  const double total = mass.sum();
  if (!(total > 0.0)) return 0;
  const double u = std::uniform_real_distribution<double>(0.0, total)(rng);
  double acc = 0.0;
  for (int i = 0; i < mass.size(); ++i) {
    acc += mass(i);
    if (u < acc) return i;
  }
  return static_cast<int>(mass.size()) - 1;
}

// k-means++ seeding over cells drawn proportionally to their mass.
GaussianMixture2D seed_mixture(const WeightedPoints& pts, const EmConfig& cfg) {
  std::mt19937_64 rng(cfg.seed);
  const int n = static_cast<int>(pts.p.size());
  GaussianMixture2D g;
  g.components.reserve(cfg.components);
  Eigen::VectorXd dist2 = Eigen::VectorXd::Constant(n, std::numeric_limits<double>::infinity());
  int pick = sample_index(pts.p, rng);
  for (int m = 0; m < cfg.components; ++m) {
    const Vec2 mu = pts.x.row(pick).transpose();
    g.components.push_back(GaussianComponent{1.0 / cfg.components, mu, 1.0});
    for (int i = 0; i < n; ++i) {
      dist2(i) = std::min(dist2(i), (pts.x.row(i).transpose() - mu).squaredNorm());
    }
    pick = sample_index(pts.p.cwiseProduct(dist2), rng);
  }
  // Shared initial spread: weighted RMS distance to the nearest seed.
  const double spread = std::sqrt(pts.p.dot(dist2) / pts.p.sum() / 2.0);
  for (auto& c : g.components) c.sigma = std::max(spread, cfg.sigma_floor);
  return g;
}

double weighted_ll(const WeightedPoints& pts, const GaussianMixture2D& g) {
  double total = 0.0;
  for (int i = 0; i < pts.p.size(); ++i) total += pts.p(i) * log_prob(g, pts.x.row(i).transpose());
  return total;
}

void normalize_weights(GaussianMixture2D& g) {
  double total = 0.0;
  for (auto& c : g.components) {
    c.weight = std::max(c.weight, kWeightFloor);
    total += c.weight;
  }
  for (auto& c : g.components) c.weight /= total;
}

GaussianMixture2D em_iteration(const WeightedPoints& pts, const GaussianMixture2D& g,
                               double sigma_floor) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  const int n = static_cast<int>(pts.p.size());
  const int m = g.size();
  // E-step: eta(i, m) from the log-domain component densities.
  Eigen::MatrixXd eta(n, m);
  for (int i = 0; i < n; ++i) {
    const Vec2 x = pts.x.row(i).transpose();
    double best = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < m; ++k) {
      const auto& c = g.components[k];
      const double var = c.sigma * c.sigma;
      eta(i, k) = std::log(c.weight / (kTwoPi * var)) - (x - c.mean).squaredNorm() / (2.0 * var);
      best = std::max(best, eta(i, k));
    }
    double sum = 0.0;
    for (int k = 0; k < m; ++k) {
      eta(i, k) = std::exp(eta(i, k) - best);
      sum += eta(i, k);
    }
    eta.row(i) /= sum;
  }
  // Weighted M-step.
  const Eigen::MatrixXd weighted = eta.array().colwise() * pts.p.array();
  const Eigen::VectorXd mass = weighted.colwise().sum().transpose();
  const double total = mass.sum();
  GaussianMixture2D next = g;
  for (int k = 0; k < m; ++k) {
    auto& c = next.components[k];
    c.weight = mass(k) / total;
    if (!(mass(k) > 0.0)) continue;  // Starved component keeps its shape.
    c.mean = (pts.x.transpose() * weighted.col(k)) / mass(k);
    const Eigen::MatrixX2d diff = pts.x.rowwise() - c.mean.transpose();
    const double spread = diff.rowwise().squaredNorm().dot(weighted.col(k)) / mass(k);
    // Spherical 2D: the per-axis variance is half the mean squared distance.
    c.sigma = std::max(std::sqrt(spread / 2.0), sigma_floor);
  }
  normalize_weights(next);
  return next;
}

}  // namespace

GaussianMixture2D fit_gmm(const HeatmapGrid& grid, const EmConfig& cfg, std::vector<double>* history) {
  if (cfg.components < 1 || cfg.max_iters < 0 || !(cfg.sigma_floor > 0.0)) {
    throw Error(ErrorKind::kInvalidConfig, "invalid EM configuration");
  }
  const WeightedPoints pts = support_of(grid);
  GaussianMixture2D g = seed_mixture(pts, cfg);
  double ll = weighted_ll(pts, g);
  if (history != nullptr) {
    history->clear();
    history->push_back(ll);
  }
  for (int it = 0; it < cfg.max_iters; ++it) {
    GaussianMixture2D next = em_iteration(pts, g, cfg.sigma_floor);
    const double next_ll = weighted_ll(pts, next);
    if (history != nullptr) history->push_back(next_ll);
    g = std::move(next);
    const bool converged = next_ll - ll < cfg.tol;
    ll = next_ll;
    if (converged) break;
  }
  return g;
}

}  // namespace metapose
