// Copyright (C) 2026 metapose contributors
// SPDX-License-Identifier: Apache-2.0
//
// metapose: synthetic scenes, stage-1 init, iterative and learned refinement, evaluation.

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <exception>
#include <iostream>
#include <map>
#include <sstream>
#include <thread>

#include "metapose/error.hpp"
#include "metapose/io.hpp"
#include "metapose/metrics.hpp"
#include "metapose/mixtures.hpp"
#include "metapose/neuro.hpp"
#include "metapose/refine.hpp"
#include "metapose/scenegen.hpp"

using namespace metapose;

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kConfig = 2, kSchema = 3, kNumerical = 4, kIncompatible = 5 };

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidConfig:
    case ErrorKind::kNoActiveTerms:
      return kConfig;
    case ErrorKind::kSchema:
      return kSchema;
    case ErrorKind::kShapeMismatch:
      return kIncompatible;
    default:
      return kNumerical;
  }
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

int thread_count() {
  int n = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  if (const char* env = std::getenv("METAPOSE_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 1) {
      throw Error(ErrorKind::kInvalidConfig, "METAPOSE_THREADS must be a positive integer");
    }
    n = std::min<long>(n, v);
  }
  return n;
}

// Runs fn(i) for i in [0, n) on up to thread_count() workers. Results land in
// slot i, so output order never depends on completion order. The exception
// of the lowest failing index is rethrown.
template <typename T, typename F>
std::vector<T> parallel_map(std::size_t n, F&& fn) {
  std::vector<std::optional<T>> slots(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        slots[i] = fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t workers = std::min<std::size_t>(thread_count(), std::max<std::size_t>(n, 1));
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  std::vector<T> out;
  out.reserve(n);
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::vector<Scene> load_scenes(const std::string& path, int cams) {
  std::vector<Scene> scenes = io::read_scenes(path);
  if (cams > 0) {
    for (Scene& s : scenes) s = s.first_cameras(cams);
  }
  return scenes;
}

std::map<std::string, io::Solution> by_scene(const std::vector<io::Solution>& solutions) {
  std::map<std::string, io::Solution> out;
  for (const auto& s : solutions) {
    if (!out.emplace(s.scene_id, s).second) throw Error(ErrorKind::kSchema, "duplicate solution for " + s.scene_id);
  }
  return out;
}

const io::Solution& solution_for(const std::map<std::string, io::Solution>& solutions, const Scene& scene) {
  const auto it = solutions.find(scene.id);
  if (it == solutions.end()) throw Error(ErrorKind::kShapeMismatch, "no solution for " + scene.id);
  const SolutionState& st = it->second.state;
  if (st.num_joints() != scene.num_joints() || st.num_cameras() != scene.num_cameras()) {
    throw Error(ErrorKind::kShapeMismatch, "solution for " + scene.id + " does not match the scene shape");
  }
  return it->second;
}

void check_model(const NeuralOptimizer& opt, const Scene& scene) {
  for (const StepNetwork& net : opt.steps) {
    if (net.joints != scene.num_joints()) {
      throw Error(ErrorKind::kShapeMismatch, "model has " + std::to_string(net.joints) + " joints, scene " +
                                                 scene.id + " has " + std::to_string(scene.num_joints()));
    }
    if (scene.num_components() > net.components) {
      throw Error(ErrorKind::kShapeMismatch, "scene " + scene.id + " has more mixture components than the model");
    }
  }
}

void write_output(const std::string& path, const std::string& content) {
  if (path.empty() || path == "-") {
    std::cout << content;
  } else {
    io::write_file(path, content);
  }
}

std::string solutions_text(const std::vector<io::Solution>& solutions) {
  std::string out;
  for (const auto& s : solutions) out += io::solution_to_json(s) + "\n";
  return out;
}

// --- synth ---

struct SynthOptions {
  SceneConfig scene;
  std::string skeleton = "tree";
  int count = 10;
  std::uint64_t seed = 0;
  bool drop_gt = false;
  bool drop_keypoints = false;
  bool drop_bone_prior = false;
  std::string out;
  std::string heatmaps;
  int heatmap_grid = 32;
};

void run_synth(const SynthOptions& o) {
  if (o.count < 1) throw Error(ErrorKind::kInvalidConfig, "--scenes must be at least 1");
  if (o.heatmap_grid < 2) throw Error(ErrorKind::kInvalidConfig, "--heatmap-grid must be at least 2");
  SceneConfig base = o.scene;
  base.skeleton = skeleton_template_from_string(o.skeleton);
  base.validate();
  const std::vector<Scene> scenes = parallel_map<Scene>(o.count, [&](std::size_t i) {
    SceneConfig cfg = base;
    cfg.seed = splitmix64(o.seed * 0x100000001b3ULL + i);
    Scene s = generate(cfg);
    if (o.drop_gt) s.gt.reset();
    if (o.drop_keypoints) s.keypoints.clear();
    if (o.drop_bone_prior) s.bone_prior.reset();
    return s;
  });
  std::string text;
  for (const Scene& s : scenes) text += io::scene_to_json(s) + "\n";
  write_output(o.out, text);
  if (!o.heatmaps.empty()) {
    const std::vector<io::HeatmapSet> sets = parallel_map<io::HeatmapSet>(scenes.size(), [&](std::size_t i) {
      io::HeatmapSet h{scenes[i].id, {}};
      for (const auto& row : scenes[i].mixtures) {
        std::vector<Eigen::MatrixXd> grids;
        for (const auto& g : row) grids.push_back(to_heatmap_grid(g, o.heatmap_grid, o.heatmap_grid).probs());
        h.grids.push_back(std::move(grids));
      }
      return h;
    });
    io::write_heatmaps(o.heatmaps, sets);
  }
}

// --- fit-gmm ---

struct FitOptions {
  std::string scenes;
  std::string heatmaps;
  EmConfig em;
  std::string out;
};

void run_fit_gmm(const FitOptions& o) {
  std::vector<Scene> scenes = io::read_scenes(o.scenes);
  std::map<std::string, io::HeatmapSet> maps;
  for (auto& h : io::read_heatmaps(o.heatmaps)) maps.emplace(h.scene_id, std::move(h));
  const std::vector<Scene> fitted = parallel_map<Scene>(scenes.size(), [&](std::size_t i) {
    Scene s = scenes[i];
    const auto it = maps.find(s.id);
    if (it == maps.end()) throw Error(ErrorKind::kShapeMismatch, "no heatmaps for " + s.id);
    const auto& grids = it->second.grids;
    if (static_cast<int>(grids.size()) != s.num_cameras()) {
      throw Error(ErrorKind::kShapeMismatch, "heatmaps for " + s.id + " disagree in camera count");
    }
    for (int c = 0; c < s.num_cameras(); ++c) {
      if (static_cast<int>(grids[c].size()) != s.num_joints()) {
        throw Error(ErrorKind::kShapeMismatch, "heatmaps for " + s.id + " disagree in joint count");
      }
      for (int j = 0; j < s.num_joints(); ++j) {
        EmConfig cfg = o.em;
        cfg.seed = splitmix64(o.em.seed ^ (s.seed + 31 * c + 7919 * j));
        s.mixtures[c][j] = fit_gmm(HeatmapGrid(grids[c][j]), cfg);
      }
    }
    return s;
  });
  std::string text;
  for (const Scene& s : fitted) text += io::scene_to_json(s) + "\n";
  write_output(o.out, text);
}

// --- init ---

struct InitOptions {
  std::string scenes;
  int cams = 0;
  std::string out;
};

void run_init(const InitOptions& o) {
  const std::vector<Scene> scenes = load_scenes(o.scenes, o.cams);
  const auto solutions = parallel_map<io::Solution>(scenes.size(), [&](std::size_t i) {
    const auto start = std::chrono::steady_clock::now();
    SolutionState st = stage1_state(scenes[i]);
    return io::Solution{scenes[i].id, "stage1", std::move(st), seconds_since(start)};
  });
  write_output(o.out, solutions_text(solutions));
}

// --- refine ---

struct RefineOptions {
  std::string scenes;
  std::string from;
  bool random_init = false;
  std::uint64_t seed = 0;
  AdamConfig adam;
  bool bone = false;
  bool keypoints = false;
  TermWeights weights;
  int cams = 0;
  std::string out;
};

void run_refine(const RefineOptions& o) {
  o.adam.validate();
  if (o.random_init && !o.from.empty()) throw Error(ErrorKind::kInvalidConfig, "--from and --random-init conflict");
  const std::vector<Scene> scenes = load_scenes(o.scenes, o.cams);
  std::map<std::string, io::Solution> starts;
  if (!o.from.empty()) starts = by_scene(io::read_solutions(o.from));
  const std::string method = o.random_init ? "rnd+ir" : (o.from.empty() ? "s1+ir" : "ir");
  const auto solutions = parallel_map<io::Solution>(scenes.size(), [&](std::size_t i) {
    const Scene& scene = scenes[i];
    ObjectiveSpec spec;
    spec.weights = o.weights;
    spec.mixtures = &scene.mixtures;
    if (o.keypoints) {
      if (scene.keypoints.empty()) throw Error(ErrorKind::kInvalidConfig, "--keypoints needs keypoints in " + scene.id);
      spec.keypoints = &scene.keypoints;
    }
    if (o.bone) {
      if (!scene.bone_prior) throw Error(ErrorKind::kInvalidConfig, "--bone needs a bone prior in " + scene.id);
      spec.skeleton = &scene.skeleton;
      spec.bone_prior = &*scene.bone_prior;
    }
    const auto start = std::chrono::steady_clock::now();
    SolutionState init;
    if (o.random_init) {
      init = random_state_for(scene, splitmix64(o.seed ^ scene.seed));
    } else if (!o.from.empty()) {
      init = solution_for(starts, scene).state;
    } else {
      init = stage1_state(scene);
    }
    RefineTrace trace = refine_iterative(init, spec, o.adam);
    return io::Solution{scene.id, method, std::move(trace.best), seconds_since(start)};
  });
  write_output(o.out, solutions_text(solutions));
}

// --- train ---

struct TrainOptions {
  std::string scenes;
  TrainConfig cfg;
  std::string plan = EquivariantBlockSpec::skipose().to_string();
  std::string mode = "weak";
  int cams = 0;
  std::string out;
  std::string curve;
};

void run_train(TrainOptions o) {
  o.cfg.plan = EquivariantBlockSpec::parse(o.plan);
  o.cfg.supervision = supervision_from_string(o.mode);
  o.cfg.validate();
  if (o.out.empty()) throw Error(ErrorKind::kInvalidConfig, "train needs an output model path");
  const std::vector<Scene> scenes = load_scenes(o.scenes, o.cams);
  TrainReport report;
  const NeuralOptimizer opt = train_optimizer(scenes, o.cfg, &report);
  io::write_model(o.out, opt);
  if (!o.curve.empty()) {
    std::ostringstream csv;
    io::write_training_curve_csv(csv, report);
    io::write_file(o.curve, csv.str());
  }
  for (std::size_t k = 0; k < report.improved.size(); ++k) {
    if (!report.improved[k]) {
      std::cerr << "metapose: step " << k << " did not improve on its input (validation "
                << report.input_validation[k] << ")\n";
    }
  }
}

// --- infer ---

struct InferOptions {
  std::string scenes;
  std::string model;
  std::string from;
  int cams = 0;
  std::string out;
};

void run_infer(const InferOptions& o) {
  const NeuralOptimizer opt = io::read_model(o.model);
  const std::vector<Scene> scenes = load_scenes(o.scenes, o.cams);
  for (const Scene& s : scenes) check_model(opt, s);
  std::map<std::string, io::Solution> starts;
  if (!o.from.empty()) starts = by_scene(io::read_solutions(o.from));
  const auto solutions = parallel_map<io::Solution>(scenes.size(), [&](std::size_t i) {
    const Scene& scene = scenes[i];
    const auto start = std::chrono::steady_clock::now();
    const SolutionState init = o.from.empty() ? stage1_state(scene) : solution_for(starts, scene).state;
    SolutionState st = infer(opt, init, scene.mixtures);
    return io::Solution{scene.id, "s1+s2", std::move(st), seconds_since(start)};
  });
  write_output(o.out, solutions_text(solutions));
}

// --- eval ---

struct EvalOptions {
  std::string scenes;
  std::string solutions;
  int cams = 0;
  std::string out;
};

void run_eval(const EvalOptions& o) {
  const std::vector<Scene> scenes = load_scenes(o.scenes, o.cams);
  const auto solutions = by_scene(io::read_solutions(o.solutions));
  std::vector<io::EvalRow> rows = parallel_map<io::EvalRow>(scenes.size(), [&](std::size_t i) {
    const Scene& scene = scenes[i];
    const io::Solution& sol = solution_for(solutions, scene);
    EvalReport r;
    r.pmpjpe = r.nmpjpe = std::nan("");
    if (scene.gt) {
      // Solutions live in the gauge camera's frame; NMPJPE has no rotation
      // freedom, so ground truth is compared in that frame too.
      const Mat3 rot = scene.gt->cameras.at(sol.state.gauge).rotation();
      const Pose3D gt(scene.gt->pose.joints * rot.transpose());
      r.pmpjpe = pmpjpe(sol.state.pose, gt);
      r.nmpjpe = nmpjpe(sol.state.pose, gt);
    }
    r.mse2d = scene.keypoints.empty() ? std::nan("") : mse2d(sol.state.project_all(), scene.keypoints);
    r.wall_time = sol.wall_time;
    return io::EvalRow{scene.id, r};
  });
  std::stable_sort(rows.begin(), rows.end(),
                   [](const io::EvalRow& a, const io::EvalRow& b) { return a.scene_id < b.scene_id; });
  std::ostringstream csv;
  io::write_eval_csv(csv, rows);
  write_output(o.out, csv.str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"metapose: multi-view 3D pose from heatmap mixtures and monocular estimates"};
  app.set_config("--config", "", "Read options from a TOML/INI file");
  app.require_subcommand(1);
  app.footer(
      "Exit codes: 0 ok, 2 config error, 3 schema error, 4 numerical failure, 5 model/scene mismatch.\n"
      "METAPOSE_THREADS caps the number of worker threads.");

  SynthOptions synth;
  auto* cmd = app.add_subcommand("synth", "Generate synthetic scenes (JSONL)");
  cmd->add_option("--scenes", synth.count, "Number of scenes")->capture_default_str();
  cmd->add_option("--seed", synth.seed, "Base seed; scene i uses a seed mixed from (seed, i)")->capture_default_str();
  cmd->add_option("--joints", synth.scene.joints, "Joints per pose")->capture_default_str();
  cmd->add_option("--cams", synth.scene.cameras, "Cameras per scene")->capture_default_str();
  cmd->add_option("--skeleton", synth.skeleton, "tree (17 joints), chain or triangle")->capture_default_str();
  cmd->add_option("--ring-radius", synth.scene.ring_radius, "Camera distance, world units")->capture_default_str();
  cmd->add_option("--ring-jitter", synth.scene.ring_jitter, "Camera azimuth jitter, radians")->capture_default_str();
  cmd->add_option("--heatmap-sigma", synth.scene.heatmap_sigma, "Heatmap spread, image units")->capture_default_str();
  cmd->add_option("--sigma-depth", synth.scene.sigma_depth, "Monocular depth noise, world units")
      ->capture_default_str();
  cmd->add_option("--sigma-pixel", synth.scene.sigma_pixel, "Monocular image-plane noise, image units")
      ->capture_default_str();
  cmd->add_option("--sigma-keypoint", synth.scene.sigma_keypoint, "Heatmap center offset noise, image units")
      ->capture_default_str();
  cmd->add_option("--bone-noise", synth.scene.bone_noise, "Noise on the bone-length prior")->capture_default_str();
  cmd->add_option("--bone-sigma", synth.scene.bone_sigma, "sigma_b stored with the prior")->capture_default_str();
  cmd->add_option("--components", synth.scene.mixture_components, "Mixture components when rasterizing")
      ->capture_default_str();
  cmd->add_option("--heatmap-resolution", synth.scene.heatmap_resolution,
                  "Rasterize heatmaps at this grid side and refit mixtures (0 keeps exact Gaussians)")
      ->capture_default_str();
  cmd->add_flag("--hard-two-cam", synth.scene.hard_two_cam, "Place the first two cameras almost together");
  cmd->add_flag("--fixed-rig", synth.scene.fixed_rig, "Same camera placement for every scene");
  cmd->add_option("--rig-seed", synth.scene.rig_seed, "Seed of the fixed rig")->capture_default_str();
  cmd->add_flag("--no-gt", synth.drop_gt, "Omit ground truth");
  cmd->add_flag("--no-keypoints", synth.drop_keypoints, "Omit 2D keypoints");
  cmd->add_flag("--no-bone-prior", synth.drop_bone_prior, "Omit the bone-length prior");
  cmd->add_option("--heatmaps", synth.heatmaps, "Also write rasterized heatmaps to this JSONL file");
  cmd->add_option("--heatmap-grid", synth.heatmap_grid, "Grid side for --heatmaps")->capture_default_str();
  cmd->add_option("-o,--out", synth.out, "Output scene file (default stdout)");
  cmd->callback([&] { run_synth(synth); });

  FitOptions fit;
  cmd = app.add_subcommand("fit-gmm", "Replace scene mixtures by EM fits of heatmap grids");
  cmd->add_option("--scenes", fit.scenes, "Scene file")->required();
  cmd->add_option("--heatmaps", fit.heatmaps, "Heatmap file")->required();
  cmd->add_option("--components", fit.em.components, "Mixture components")->capture_default_str();
  cmd->add_option("--iters", fit.em.max_iters, "Maximum EM iterations")->capture_default_str();
  cmd->add_option("--tol", fit.em.tol, "Log-likelihood convergence tolerance")->capture_default_str();
  cmd->add_option("--sigma-floor", fit.em.sigma_floor, "Smallest component sigma")->capture_default_str();
  cmd->add_option("--seed", fit.em.seed, "EM seeding")->capture_default_str();
  cmd->add_option("-o,--out", fit.out, "Output scene file (default stdout)");
  cmd->callback([&] { run_fit_gmm(fit); });

  InitOptions init;
  cmd = app.add_subcommand("init", "Closed-form stage-1 solutions");
  cmd->add_option("--scenes", init.scenes, "Scene file")->required();
  cmd->add_option("--cams", init.cams, "Use only the first k cameras (0 = all)")->capture_default_str();
  cmd->add_option("-o,--out", init.out, "Output solution file (default stdout)");
  cmd->callback([&] { run_init(init); });

  RefineOptions refine;
  cmd = app.add_subcommand("refine", "Iterative Adam refinement of the heatmap likelihood");
  cmd->add_option("--scenes", refine.scenes, "Scene file")->required();
  cmd->add_option("--from", refine.from, "Start from these solutions (default: stage 1)");
  cmd->add_flag("--random-init", refine.random_init, "Start from a random state instead");
  cmd->add_option("--seed", refine.seed, "Seed for --random-init")->capture_default_str();
  cmd->add_option("--steps", refine.adam.steps, "Adam steps")->capture_default_str();
  cmd->add_option("--lr", refine.adam.lr, "Adam learning rate")->capture_default_str();
  cmd->add_option("--beta1", refine.adam.beta1, "Adam beta1")->capture_default_str();
  cmd->add_option("--beta2", refine.adam.beta2, "Adam beta2")->capture_default_str();
  cmd->add_flag("--bone", refine.bone, "Add the bone-length prior term");
  cmd->add_flag("--keypoints", refine.keypoints, "Add the 2D keypoint reprojection term");
  cmd->add_option("--w-ba", refine.weights.ba, "Weight of the heatmap term")->capture_default_str();
  cmd->add_option("--w-bone", refine.weights.bone, "Weight of the bone term")->capture_default_str();
  cmd->add_option("--w-reprojection", refine.weights.reprojection, "Weight of the keypoint term")
      ->capture_default_str();
  cmd->add_option("--cams", refine.cams, "Use only the first k cameras (0 = all)")->capture_default_str();
  cmd->add_option("-o,--out", refine.out, "Output solution file (default stdout)");
  cmd->callback([&] { run_refine(refine); });

  TrainOptions train;
  cmd = app.add_subcommand("train", "Train the learned refiner");
  cmd->add_option("--scenes", train.scenes, "Training scene file; the tail is held out for validation")
      ->required();
  cmd->add_option("-o,--out", train.out, "Output model file")->required();
  cmd->add_option("--curve", train.curve, "Training-curve CSV");
  cmd->add_option("--steps", train.cfg.steps, "Refinement steps")->capture_default_str();
  cmd->add_option("--plan", train.plan, "Trunk plan, widths and CC markers")->capture_default_str();
  cmd->add_option("--head-width", train.cfg.head_width, "Hidden width of the output heads")->capture_default_str();
  cmd->add_option("--mode", train.mode, "weak (2D keypoints) or self (heatmap likelihood)")->capture_default_str();
  cmd->add_flag("--bone", train.cfg.use_bone, "Add the bone-length prior to the loss");
  cmd->add_flag("--teacher", train.cfg.use_teacher, "Add the teacher loss towards IR solutions");
  cmd->add_option("--teacher-lambda", train.cfg.teacher_lambda, "Teacher loss weight")->capture_default_str();
  cmd->add_option("--epochs", train.cfg.epochs, "Epochs per step and attempt")->capture_default_str();
  cmd->add_option("--lr", train.cfg.adam.lr, "Adam learning rate")->capture_default_str();
  cmd->add_option("--batch", train.cfg.batch_size, "Minibatch size")->capture_default_str();
  cmd->add_option("--attempts", train.cfg.attempts, "Restarts per step until validation improves")
      ->capture_default_str();
  cmd->add_option("--jitter", train.cfg.input_jitter, "Noise added to training states")->capture_default_str();
  cmd->add_option("--output-scale", train.cfg.output_scale, "Initial scale of the last head layers")
      ->capture_default_str();
  cmd->add_option("--val-fraction", train.cfg.validation_fraction, "Held-out fraction")->capture_default_str();
  cmd->add_option("--seed", train.cfg.seed, "Training seed")->capture_default_str();
  cmd->add_option("--cams", train.cams, "Use only the first k cameras (0 = all)")->capture_default_str();
  cmd->callback([&] { run_train(train); });

  InferOptions inf;
  cmd = app.add_subcommand("infer", "Apply a trained refiner");
  cmd->add_option("--scenes", inf.scenes, "Scene file")->required();
  cmd->add_option("--model", inf.model, "Model file")->required();
  cmd->add_option("--from", inf.from, "Start from these solutions (default: stage 1)");
  cmd->add_option("--cams", inf.cams, "Use only the first k cameras (0 = all)")->capture_default_str();
  cmd->add_option("-o,--out", inf.out, "Output solution file (default stdout)");
  cmd->callback([&] { run_infer(inf); });

  EvalOptions ev;
  cmd = app.add_subcommand("eval", "Score solutions against ground truth (CSV)");
  cmd->add_option("--scenes", ev.scenes, "Scene file")->required();
  cmd->add_option("--solutions", ev.solutions, "Solution file")->required();
  cmd->add_option("--cams", ev.cams, "Use only the first k cameras (0 = all)")->capture_default_str();
  cmd->add_option("-o,--out", ev.out, "Output CSV (default stdout)");
  cmd->callback([&] { run_eval(ev); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  } catch (const Error& e) {
    std::cerr << "metapose: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "metapose: " << e.what() << "\n";
    return kFailure;
  }
  return kOk;
}
