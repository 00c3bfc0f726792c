// Copyright (C) 2026 metapose contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "metapose/objective.hpp"
#include "metapose/refine.hpp"
#include "metapose/scenegen.hpp"

namespace metapose {

inline constexpr double kSeluLambda = 1.0507009873554804934193349852946;
inline constexpr double kSeluAlpha = 1.6732632423543772848170429916717;

double selu(double x);
double selu_derivative(double x);

enum class Activation { kSelu, kLinear };

struct DenseLayer {
  Eigen::MatrixXd weights;  ///< out x in
  Eigen::VectorXd bias;
  Activation activation = Activation::kSelu;

  int in() const { return static_cast<int>(weights.cols()); }
  int out() const { return static_cast<int>(weights.rows()); }
  /// Batched over rows: X is n x in, result is n x out.
  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const;
  void validate() const;
};

/// Trunk layer plan: dense widths with moment-concatenation markers.
struct EquivariantBlockSpec {
  static constexpr int kMomentConcat = 0;
  std::vector<int> items;

  /// Parses "512,512,CC,512".
  static EquivariantBlockSpec parse(const std::string& text);
  std::string to_string() const;
  void validate() const;
  /// Width of the trunk output for a given input width.
  int output_width(int input_width) const;

  static EquivariantBlockSpec skipose();
  static EquivariantBlockSpec h36m();
};

/// Per-camera feature rows plus the view-invariant block shared by all rows.
struct StepInput {
  Eigen::MatrixXd rows;          ///< C x (9 + 4MJ + 2J)
  Eigen::RowVectorXd invariant;  ///< 3J + 1

  /// Invariant block copied onto every row.
  Eigen::MatrixXd combined() const;
};

int step_row_width(int joints, int components);
int step_invariant_width(int joints);

StepInput build_step_input(const SolutionState& s, const MixtureSet& mixtures, int components);

struct StepOutput {
  Eigen::VectorXd pose_delta;    ///< 3J, row-major joints
  Eigen::MatrixXd camera_delta;  ///< C x 9 in WeakCamera::flat order
};

struct StepNetwork {
  int joints = 0;
  int components = 0;
  EquivariantBlockSpec plan;
  std::vector<DenseLayer> trunk;  ///< Dense items of the plan, in order.
  std::vector<DenseLayer> camera_head;
  std::vector<DenseLayer> pose_head;
  Eigen::RowVectorXd input_mean;
  Eigen::RowVectorXd input_std;

  /// Fan-in scaled uniform weights; the last layer of each head is scaled by
  /// output_scale so a fresh step starts close to the identity update.
  static StepNetwork create(int joints, int components, const EquivariantBlockSpec& plan, int head_width,
                            std::uint64_t seed, double output_scale = 1e-3);

  int input_width() const { return step_row_width(joints, components) + step_invariant_width(joints); }
  Eigen::Index num_parameters() const;
  Eigen::VectorXd parameters() const;
  void set_parameters(const Eigen::VectorXd& p);
  void validate() const;
};

StepOutput forward_step(const StepNetwork& net, const StepInput& input);

/// Backpropagates output gradients to a flat weight gradient in parameters() order.
Eigen::VectorXd backward_step(const StepNetwork& net, const StepInput& input, const Eigen::VectorXd& d_pose,
                              const Eigen::MatrixXd& d_cameras);

/// Adds the deltas to the pose and every non-gauge camera.
SolutionState apply_update(const SolutionState& s, const Eigen::VectorXd& d_pose, const Eigen::MatrixXd& d_cameras);

struct NeuralOptimizer {
  std::vector<StepNetwork> steps;
  std::string config_hash;

  void validate() const;
};

SolutionState infer(const NeuralOptimizer& opt, const SolutionState& init, const MixtureSet& mixtures);

enum class Supervision { kWeak, kSelf };

const char* to_string(Supervision s);
Supervision supervision_from_string(const std::string& s);

struct TrainConfig {
  int steps = 3;
  EquivariantBlockSpec plan = EquivariantBlockSpec::skipose();
  int head_width = 128;
  Supervision supervision = Supervision::kWeak;
  bool use_bone = false;
  bool use_teacher = false;
  TermWeights weights;
  double teacher_lambda = 1.0;  ///< Applied to all four teacher penalties.
  AdamConfig adam{1e-4, 0.9, 0.999, 1e-8, 1};
  int epochs = 100;
  int batch_size = 16;
  int attempts = 10;
  double validation_fraction = 0.2;
  double output_scale = 1e-3;
  /// Std of Gaussian noise added to the flat training states each time they
  /// are visited; 0 trains on the exact step inputs.
  double input_jitter = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
  /// Stable hash of the fields above, hex encoded.
  std::string hash() const;
};

/// One scene prepared for training: the stage-1 start and optional teacher target.
struct TrainingExample {
  const Scene* scene = nullptr;
  SolutionState init;
  std::optional<SolutionState> teacher;
};

std::vector<TrainingExample> prepare_examples(const std::vector<Scene>& scenes, const TrainConfig& cfg);

struct EpochRecord {
  int step = 0;
  int attempt = 0;
  int epoch = 0;  ///< 0 is the untrained network.
  double train_loss = 0.0;
  double validation = 0.0;  ///< Mean PMPJPE, or mean loss without ground truth.
};

struct TrainReport {
  std::vector<EpochRecord> curve;
  std::vector<double> input_validation;  ///< Per step, before that step is applied.
  std::vector<bool> improved;
};

/// Loss of one example after a step update, as used for training.
double training_loss(const SolutionState& after, const TrainingExample& ex, const TrainConfig& cfg,
                     Eigen::VectorXd* grad = nullptr);

/// Trains step `index` on top of the frozen steps already in `frozen`.
StepNetwork train_step_network(int index, const std::vector<TrainingExample>& train,
                               const std::vector<TrainingExample>& validation, const NeuralOptimizer& frozen,
                               const TrainConfig& cfg, TrainReport* report = nullptr);

/// Splits scenes into train/validation and trains cfg.steps steps progressively.
NeuralOptimizer train_optimizer(const std::vector<Scene>& scenes, const TrainConfig& cfg,
                                TrainReport* report = nullptr);

}  // namespace metapose
