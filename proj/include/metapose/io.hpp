// Copyright (C) 2026 metapose contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "metapose/metrics.hpp"
#include "metapose/neuro.hpp"
#include "metapose/scenegen.hpp"

namespace metapose::io {

inline constexpr int kSceneVersion = 1;
inline constexpr int kSolutionVersion = 1;
inline constexpr int kModelVersion = 1;
inline constexpr int kHeatmapVersion = 1;

/// One JSON object per line, keys sorted, shortest round-trip doubles.
/// Malformed or inconsistent documents throw Error(kSchema).
std::string scene_to_json(const Scene& scene);
Scene scene_from_json(const std::string& line);

std::vector<Scene> read_scenes(const std::string& path);
void write_scenes(const std::string& path, const std::vector<Scene>& scenes);

/// A solved scene: the estimate, which method produced it and how long it took.
struct Solution {
  std::string scene_id;
  std::string method;
  SolutionState state;
  double wall_time = 0.0;
};

std::string solution_to_json(const Solution& s);
Solution solution_from_json(const std::string& line);
std::vector<Solution> read_solutions(const std::string& path);
void write_solutions(const std::string& path, const std::vector<Solution>& solutions);

std::string model_to_json(const NeuralOptimizer& opt);
NeuralOptimizer model_from_json(const std::string& text);
NeuralOptimizer read_model(const std::string& path);
void write_model(const std::string& path, const NeuralOptimizer& opt);

/// Raw heatmaps of one scene, [camera][joint].
struct HeatmapSet {
  std::string scene_id;
  std::vector<std::vector<Eigen::MatrixXd>> grids;
};

std::string heatmaps_to_json(const HeatmapSet& h);
HeatmapSet heatmaps_from_json(const std::string& line);
std::vector<HeatmapSet> read_heatmaps(const std::string& path);
void write_heatmaps(const std::string& path, const std::vector<HeatmapSet>& sets);

/// One evaluated scene.
struct EvalRow {
  std::string scene_id;
  EvalReport report;
};

/// CSV with header scene_id,pmpjpe,nmpjpe,mse2d,wall_time followed by one
/// row per scene and `mean` / `median` summary rows.
void write_eval_csv(std::ostream& out, const std::vector<EvalRow>& rows);
void write_training_curve_csv(std::ostream& out, const TrainReport& report);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);
std::vector<std::string> read_lines(const std::string& path);

}  // namespace metapose::io
