// Copyright (C) 2026 metapose contributors
// SPDX-License-Identifier: Apache-2.0
//
// End-to-end acceptance run: one PASS/FAIL line per criterion.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <string>

#include "metapose/metrics.hpp"
#include "metapose/mixtures.hpp"
#include "metapose/neuro.hpp"
#include "metapose/objective.hpp"
#include "metapose/refine.hpp"
#include "metapose/scenegen.hpp"
#include "test_support.hpp"

using namespace metapose;
using namespace metapose::testing;

namespace {

using Clock = std::chrono::steady_clock;

int failures = 0;

void report(int id, bool pass, const std::string& detail) {
  std::printf("criterion %2d: %s  %s\n", id, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / v.size();
}

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

long double extended_log_prob(const GaussianMixture2D& g, const Vec2& x) {
  long double total = 0.0L;
  for (const auto& c : g.components) {
    const long double var = static_cast<long double>(c.sigma) * c.sigma;
    const long double norm = c.weight / (2.0L * std::numbers::pi_v<long double> * var) + 1e-12L;
    total += norm * std::exp(-static_cast<long double>((x - c.mean).squaredNorm()) / (2.0L * var));
  }
  return std::log(total);
}

void gradient_check() {
  const auto start = Clock::now();
  std::mt19937_64 rng(101);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const SolutionState s = random_state(rng, 4 + trial % 4, 2 + trial % 3, static_cast<int>(rng() % 2));
    const RandomTerms terms(rng, s, 1 + trial % 3);
    for (int mask = 1; mask < 16; ++mask) {
      const ObjectiveSpec spec = terms.spec(mask);
      const Eigen::VectorXd g = gradient(s, spec);
      const Eigen::VectorXd fd = finite_difference(
          [&](const Eigen::VectorXd& x) { return total_objective(s.with_params(x), spec); }, s.flatten());
      worst = std::max(worst, max_relative_error(g, fd));
    }
  }
  const double t = seconds_since(start);
  report(1, worst < 1e-4 && t < 60.0,
         fmt("gradient vs central differences, 50 states x 15 term sets: max rel err %.2e (< 1e-4), %.1f s", worst, t));
}

void rotation_check() {
  std::mt19937_64 rng(202);
  std::normal_distribution<double> n(0.0, 1.0);
  double ortho = 0.0, det = 0.0, round_trip = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const Rot6D r{Vec3(n(rng), n(rng), n(rng)), Vec3(n(rng), n(rng), n(rng))};
    const Mat3 m = rot6d_to_matrix(r);
    ortho = std::max(ortho, (m.transpose() * m - Mat3::Identity()).cwiseAbs().maxCoeff());
    det = std::max(det, std::abs(m.determinant() - 1.0));
    const Mat3 q = random_rotation(rng);
    round_trip = std::max(round_trip, (rot6d_to_matrix(matrix_to_rot6d(q)) - q).cwiseAbs().maxCoeff());
  }
  report(2, ortho < 1e-9 && det < 1e-9 && round_trip < 1e-9,
         fmt("1000 rot6d inputs: |RtR-I| %.1e, |det-1| %.1e, round trip %.1e (all < 1e-9)", ortho, det, round_trip));
}

void stage1_check() {
  const auto start = Clock::now();
  double worst = 0.0;
  for (int seed = 0; seed < 50; ++seed) {
    SceneConfig cfg;
    cfg.joints = 17;
    cfg.cameras = 4;
    cfg.seed = 3000 + seed;
    const Scene s = generate(cfg);
    worst = std::max(worst, pmpjpe(stage1_state(s).pose, s.gt->pose));
  }
  const double t = seconds_since(start);
  report(3, worst < 1e-6 * kSceneScale && t < 10.0,
         fmt("noiseless stage 1, 50 scenes J=17 C=4: max PMPJPE %.2e (< %.0e), %.2f s", worst, 1e-6 * kSceneScale, t));
}

void em_check() {
  const auto start = Clock::now();
  std::mt19937_64 rng(404);
  double worst_drop = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int w = 16 + static_cast<int>(rng() % 33);
    const int h = 16 + static_cast<int>(rng() % 33);
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(h, w);
    const int blobs = 1 + static_cast<int>(rng() % 4);
    for (int k = 0; k < blobs; ++k) {
      m += gaussian_cells(w, h, Vec2(uniform(rng, 0.1, 0.9), uniform(rng, 0.1, 0.9)), uniform(rng, 0.02, 0.2),
                          uniform(rng, 0.2, 1.0));
    }
    EmConfig cfg;
    cfg.components = 1 + static_cast<int>(rng() % 5);
    cfg.seed = trial;
    std::vector<double> history;
    fit_gmm(HeatmapGrid(m), cfg, &history);
    for (std::size_t i = 1; i < history.size(); ++i) worst_drop = std::max(worst_drop, history[i - 1] - history[i]);
  }
  double mean_err = 0.0, sigma_err = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    const Vec2 truth(uniform(rng, 0.3, 0.7), uniform(rng, 0.3, 0.7));
    EmConfig cfg;
    cfg.components = 1;
    const GaussianMixture2D g = fit_gmm(HeatmapGrid(gaussian_cells(64, 64, truth, 0.05)), cfg);
    mean_err = std::max(mean_err, (g.components[0].mean - truth).cwiseAbs().maxCoeff());
    sigma_err = std::max(sigma_err, std::abs(g.components[0].sigma - 0.05));
  }
  const double t = seconds_since(start);
  report(4, worst_drop <= 1e-9 && mean_err < 1.0 / 64 && sigma_err < 0.005 && t < 60.0,
         fmt("EM: largest likelihood drop %.1e (<= 1e-9); recovery |mu| %.1e (< 1/64), |sigma| %.1e (< 5e-3); %.1f s",
             worst_drop, mean_err, sigma_err, t));
}

void likelihood_check() {
  std::mt19937_64 rng(505);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const GaussianMixture2D g = random_mixture(rng, 1 + trial % 4, 0.005, 0.2);
    const Vec2 x(uniform(rng, -1, 2), uniform(rng, -1, 2));
    const long double oracle = extended_log_prob(g, x);
    if (!std::isfinite(static_cast<double>(oracle))) continue;
    const double exact = static_cast<double>(oracle);
    worst = std::max(worst, std::abs(log_prob(g, x) - exact) / std::abs(exact));
  }
  bool finite = true;
  const GaussianMixture2D unit = GaussianMixture2D::single(Vec2::Zero(), 1.0);
  for (double q : {800.0, 900.0, 5000.0, 1e6, 1e12}) {
    finite = finite && std::isfinite(log_prob(unit, Vec2(std::sqrt(2 * q), 0.0)));
  }
  report(5, worst < 1e-6 && finite,
         fmt("log-likelihood vs extended precision: max rel err %.1e (< 1e-6); exponents down to -1e12 finite: ",
             worst) + (finite ? "yes" : "no"));
}

struct IrRun {
  std::vector<double> s1, ir, rnd;
  double seconds = 0.0;
};

IrRun iterative_runs() {
  IrRun out;
  const auto start = Clock::now();
  for (int seed = 0; seed < 20; ++seed) {
    SceneConfig cfg;
    cfg.cameras = 4;
    cfg.sigma_depth = 0.05 * kSceneScale;
    cfg.heatmap_sigma = 0.01;
    cfg.seed = seed;
    const Scene s = generate(cfg);
    ObjectiveSpec spec;
    spec.mixtures = &s.mixtures;
    const SolutionState init = stage1_state(s);
    out.s1.push_back(pmpjpe(init.pose, s.gt->pose));
    out.ir.push_back(pmpjpe(refine_iterative(init, spec, AdamConfig{}).best.pose, s.gt->pose));
    out.rnd.push_back(pmpjpe(refine_iterative(random_state_for(s, seed), spec, AdamConfig{}).best.pose, s.gt->pose));
  }
  out.seconds = seconds_since(start);
  return out;
}

Scene toy_scene(std::uint64_t seed) {
  SceneConfig c;
  c.skeleton = SkeletonTemplate::kChain;
  c.joints = 5;
  c.cameras = 3;
  c.sigma_depth = 0.05 * kSceneScale;
  c.seed = seed;
  return generate(c);
}

TrainConfig toy_config(Supervision mode) {
  TrainConfig cfg;
  cfg.steps = 2;
  cfg.plan = EquivariantBlockSpec::parse("32,32,CC,32,32,CC,32");
  cfg.head_width = 32;
  cfg.supervision = mode;
  cfg.adam.lr = 1e-3;
  cfg.batch_size = 8;
  cfg.epochs = 150;
  cfg.attempts = 3;
  cfg.input_jitter = 0.003;
  cfg.seed = 1;
  return cfg;
}

}  // namespace

int main() {
  gradient_check();
  rotation_check();
  stage1_check();
  em_check();
  likelihood_check();

  const IrRun ir = iterative_runs();
  report(6, mean(ir.ir) <= 0.5 * mean(ir.s1) && ir.seconds < 120.0,
         fmt("20 scenes C=4: mean PMPJPE S1 %.2f, S1+IR %.2f, ratio %.3f (<= 0.5); %.1f s", mean(ir.s1), mean(ir.ir),
             mean(ir.ir) / mean(ir.s1), ir.seconds));

  std::vector<Scene> train, test;
  for (int i = 0; i < 200; ++i) train.push_back(toy_scene(1000 + i));
  for (int i = 0; i < 50; ++i) test.push_back(toy_scene(5000 + i));
  std::vector<double> s1;
  for (const Scene& s : test) s1.push_back(pmpjpe(stage1_state(s).pose, s.gt->pose));

  const auto start = Clock::now();
  const NeuralOptimizer weak = train_optimizer(train, toy_config(Supervision::kWeak));
  const NeuralOptimizer self = train_optimizer(train, toy_config(Supervision::kSelf));
  const double train_seconds = seconds_since(start);
  std::vector<double> weak_err, self_err;
  for (const Scene& s : test) {
    const SolutionState init = stage1_state(s);
    weak_err.push_back(pmpjpe(infer(weak, init, s.mixtures).pose, s.gt->pose));
    self_err.push_back(pmpjpe(infer(self, init, s.mixtures).pose, s.gt->pose));
  }
  const double s1_med = median(s1);
  report(7, median(weak_err) <= 0.7 * s1_med && median(self_err) < s1_med && train_seconds < 600.0,
         fmt("J=5 chain C=3, 50 held-out scenes: median PMPJPE S1 %.2f, S1+S2 %.2f (<= 0.7x), S1+S2/SS %.2f (< S1); "
             "training %.0f s",
             s1_med, median(weak_err), median(self_err), train_seconds));

  double pose_diff = 0.0, camera_diff = 0.0;
  const std::vector<int> order{2, 0, 1};
  for (int i = 0; i < 20; ++i) {
    const Scene& s = test[i];
    const Scene p = s.permuted(order);
    const SolutionState a = infer(weak, stage1_state(s), s.mixtures);
    const SolutionState b = infer(weak, stage1_state(p), p.mixtures);
    pose_diff = std::max(pose_diff, (a.pose.joints - b.pose.joints).cwiseAbs().maxCoeff());
    for (int k = 0; k < 3; ++k) {
      camera_diff = std::max(camera_diff, (a.cameras[order[k]].flat() - b.cameras[k].flat()).cwiseAbs().maxCoeff());
    }
  }
  report(8, pose_diff <= 1e-9 && camera_diff <= 1e-9,
         fmt("20 scenes, cameras permuted (2,0,1): pose diff %.1e, permuted camera diff %.1e (<= 1e-9)", pose_diff,
             camera_diff));

  double infer_seconds = 0.0, refine_seconds = 0.0, checksum = 0.0;
  for (const Scene& s : test) {
    const SolutionState init = stage1_state(s);
    ObjectiveSpec spec;
    spec.mixtures = &s.mixtures;
    auto t = Clock::now();
    const SolutionState out = infer(weak, init, s.mixtures);
    infer_seconds += seconds_since(t);
    t = Clock::now();
    const RefineTrace trace = refine_iterative(init, spec, AdamConfig{});
    refine_seconds += seconds_since(t);
    checksum += out.pose.joints.sum() + trace.best.pose.joints.sum();
  }
  report(9, refine_seconds >= 3.0 * infer_seconds && std::isfinite(checksum),
         fmt("50 scenes: neural %.3f ms/scene, 100-step IR %.3f ms/scene, speedup %.1fx (>= 3x)",
             1e3 * infer_seconds / test.size(), 1e3 * refine_seconds / test.size(), refine_seconds / infer_seconds));

  std::mt19937_64 rng(1010);
  int order_violations = 0, sse_violations = 0;
  double copy_err = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int j = 3 + static_cast<int>(rng() % 15);
    const Pose3D gt = random_pose(rng, j);
    const Pose3D noisy(gt.joints + random_pose(rng, j, uniform(rng, 0.0, 0.5)).joints);
    const Pose3D pred = Similarity3D{random_rotation(rng), Vec3(1, 2, 3), uniform(rng, 0.1, 10.0)}.apply(noisy);
    if (pmpjpe(pred, gt) > nmpjpe(pred, gt) + 1e-12) ++order_violations;

    const Pose3D a = random_pose(rng, j);
    const double sim_sse = (align_similarity(a, gt).apply(a).joints - gt.joints).squaredNorm();
    const Eigen::MatrixX3d ac = a.centered(), gc = gt.centered();
    const double scale = std::max(0.0, ac.cwiseProduct(gc).sum() / ac.squaredNorm());
    if (sim_sse > (scale * ac - gc).squaredNorm() + 1e-12) ++sse_violations;

    const Pose3D sim = Similarity3D{random_rotation(rng), Vec3(-4, 0, 9), uniform(rng, 0.1, 10.0)}.apply(gt);
    Pose3D scaled(uniform(rng, 0.1, 10.0) * gt.joints);
    scaled.joints.rowwise() += Eigen::RowVector3d(3, -1, 2);
    copy_err = std::max({copy_err, pmpjpe(sim, gt), nmpjpe(scaled, gt)});
  }
  report(10, order_violations == 0 && sse_violations == 0 && copy_err < 1e-9,
         fmt("1000 pairs: pmpjpe > nmpjpe on %.0f prediction pairs, similarity SSE > scale-shift SSE on %.0f random "
             "pairs; copies give %.1e",
             order_violations, sse_violations, copy_err));

  report(11, median(ir.rnd) > median(ir.ir),
         fmt("20 scenes: median PMPJPE RND+IR %.2f vs S1+IR %.2f (RND+IR worse)", median(ir.rnd), median(ir.ir)));

  std::printf("%d of 11 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
