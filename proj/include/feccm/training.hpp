// Copyright 2026 The feccm Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Cascade training. CCM fits the first layer on ground truth and the second
// layer on first-layer outputs. FE-CCM then alternates a feedback step, which
// re-estimates the first-layer targets Z of every training sample with the
// parameters fixed, and a feed-forward step, which refits every classifier
// with Z fixed.
//
// Joint objective (exact mode), summed over training samples s:
//   sum_i NLL(theta_i; psi_i(s), Z_i(s)) + sum_{j labeled in s} NLL(omega_j; Phi_j(s), Y_j(s))
// plus the penalties of all classifiers.

#ifndef FECCM_TRAINING_HPP_
#define FECCM_TRAINING_HPP_

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "feccm/cascade.hpp"
#include "feccm/classifiers.hpp"
#include "feccm/optimize.hpp"
#include "feccm/tasks.hpp"

namespace feccm {

enum class FeedbackMode { kExact, kSurrogate };
const char* FeedbackModeName(FeedbackMode mode);
FeedbackMode ParseFeedbackMode(const std::string& name);

enum class InstantiationKind { kUnified, kOneGoal, kTargetSpecific };

struct Instantiation {
  InstantiationKind kind = InstantiationKind::kUnified;
  TaskId target = 0;  // OneGoal and TargetSpecific

  static Instantiation Unified() { return {}; }
  static Instantiation OneGoal(TaskId k) { return {InstantiationKind::kOneGoal, k}; }
  static Instantiation TargetSpecific(TaskId k) { return {InstantiationKind::kTargetSpecific, k}; }
};

// What the surrogate of omega_j is fitted against: the second-layer scores
// over all training samples, or the ground-truth encoding over Gamma_j.
enum class SurrogateTarget { kModelOutput, kGroundTruth };

// "auto" selects beta by hold-out grid search; otherwise a fixed value.
struct BetaPolicy {
  bool automatic = true;
  double value = 0.0;
};
BetaPolicy ParseBetaPolicy(const std::string& text);

struct FeedbackConfig {
  int max_outer_iters = 5;
  FeedbackMode mode = FeedbackMode::kExact;
  Instantiation instantiation;
  // Explicit importance factors; empty means "derive from instantiation".
  std::vector<double> pi;
  DescentConfig descent{500, 0.0, 1e-12, 1e-4, 0.5};
  BetaPolicy beta;
  SurrogateTarget surrogate_target = SurrogateTarget::kModelOutput;
  // Relative joint-objective change that ends exact-mode training.
  double tol = 1e-4;
  // Relative hold-out metric change that ends surrogate-mode training.
  double plateau_tol = 1e-3;
  double margin = kLabelMargin;
  std::uint64_t seed = 0;
  int threads = 1;
  // Target-specific selection.
  int folds = 3;
  std::vector<std::vector<double>> pi_grid;
};

void ValidateFeedbackConfig(const FeedbackConfig& config, int num_tasks);

// Classifier learners per task and layer plus the second-layer wiring.
struct CascadeSetup {
  std::vector<std::shared_ptr<const ClassifierFactory>> first_layer;
  std::vector<std::shared_ptr<const ClassifierFactory>> second_layer;
  AdapterTable adapters;

  // Ridge score regressors in the first layer, the default kind of each task
  // in the second, identity wiring.
  static CascadeSetup Default(std::span<const TaskSpec> specs,
                              double l2_penalty = kDefaultL2Penalty);
};

struct TraceRow {
  int iteration = 0;
  // Joint objective after the feedback half-step (equal to `objective` on
  // iteration 0, which has no feedback).
  double objective_after_feedback = 0.0;
  // Joint objective after the feed-forward half-step.
  double objective = 0.0;
  std::vector<double> metrics;
  double seconds = 0.0;
  int failed_samples = 0;
};

struct TrainingTrace {
  std::vector<TraceRow> rows;
  std::vector<double> pi;
  bool converged = false;

  // Columns: iteration, objective_after_feedback, objective, one metric per
  // task, failed_samples and (optionally) seconds.
  void WriteCsv(std::ostream& out, std::span<const TaskSpec> specs, bool with_seconds = true) const;
};

// Ground-truth score encoding of a label in `dim` dimensions.
Vector EncodeLabel(const TaskSpec& spec, const Label& label, int dim,
                   double margin = kLabelMargin);

// Z_j(s) = encoding of Y_j(s) for every labeled pair; other pairs stay empty.
LatentState InitializeLatents(const MultiTaskDataset& data, std::span<const int> latent_dims,
                              double margin = kLabelMargin);
LatentState InitializeLatents(const MultiTaskDataset& data);

// pi_j proportional to 1 / |Gamma_j|.
std::vector<double> UnifiedPi(std::span<const std::size_t> partition_sizes);
std::vector<double> UnifiedPi(const MultiTaskDataset& data);
std::vector<double> OneGoalPi(int num_tasks, TaskId k);
void ValidatePi(std::span<const double> pi, int num_tasks);
// pi used for training: explicit config.pi, else the instantiation's rule.
std::vector<double> ResolvePi(const MultiTaskDataset& train, const CascadeSetup& setup,
                              const FeedbackConfig& config);

// First-layer sample weights: r_s = max of pi_j over the tasks labeled in s,
// rescaled so the weights sum to the number of samples.
std::vector<double> SampleWeights(const MultiTaskDataset& data, std::span<const double> pi);

// CCM step: theta_i on Gamma_i against the thresholded initial latents (the
// ground truth), then omega_j on Gamma_j against first-layer outputs. On
// return `latents` holds the first-layer outputs for every pair.
CascadeModel InitialFeedForward(const MultiTaskDataset& train, LatentState& latents,
                                const CascadeSetup& setup, const FeedbackConfig& config);

// Refits theta_i on (psi_i, Z_i) with pi-derived sample weights and omega_j
// on (Phi_j(Z), Y_j) over Gamma_j. Classifiers of `warm_start` seed the
// learners.
CascadeModel FeedForwardStep(const MultiTaskDataset& train, const LatentState& latents,
                             std::span<const double> pi, const CascadeSetup& setup,
                             const FeedbackConfig& config,
                             const CascadeModel* warm_start = nullptr);

// Concatenation of per-task latents in task order, and its inverse.
Vector FlattenLatents(std::span<const Vector> z);
std::vector<Vector> SplitLatents(const Vector& flat, std::span<const int> dims);

// Exact-mode objective of one sample at latents z.
double FeedbackObjective(const CascadeModel& model, const Sample& sample,
                         std::span<const Vector> z);
// Gradient of FeedbackObjective with respect to the flattened latents.
Vector FeedbackGradient(const CascadeModel& model, const Sample& sample, const Vector& z_flat);

// Linear surrogates of every second-layer classifier, one per task.
std::vector<SurrogateModel> FitSurrogates(const CascadeModel& model,
                                          const MultiTaskDataset& train,
                                          const FeedbackConfig& config);

// Surrogate objective: sum_i |Z_i - Zhat_i|^2 + sum_{j labeled}
// |enc(Y_j) - alpha_j [Phi_j(Z); 1]|^2 with Zhat the first-layer outputs.
double SurrogateObjective(const CascadeModel& model, std::span<const SurrogateModel> surrogates,
                          const Sample& sample, std::span<const Vector> z,
                          double margin = kLabelMargin);

struct FeedbackStats {
  double objective = 0.0;
  int failed_samples = 0;
  std::vector<SampleId> failed_ids;
};

// Per-sample minimization of the feedback objective starting from the
// first-layer outputs; in exact mode also from `incumbent` when it covers the
// sample, keeping the lower value.
LatentState FeedbackStep(const CascadeModel& model, const MultiTaskDataset& train,
                         const LatentState& incumbent, const FeedbackConfig& config,
                         std::span<const SurrogateModel> surrogates = {},
                         FeedbackStats* stats = nullptr);

// Sum of FeedbackObjective over the rows of `latents` plus all penalties.
double JointObjective(const CascadeModel& model, const MultiTaskDataset& train,
                      const LatentState& latents, int threads = 1);

struct TrainResult {
  CascadeModel model;
  TrainingTrace trace;
};

// Metric rows of the trace are computed on `holdout` when given, otherwise on
// the training set.
TrainResult TrainFeccm(const MultiTaskDataset& train, const CascadeSetup& setup,
                       const FeedbackConfig& config, const MultiTaskDataset* holdout = nullptr);
TrainResult TrainFeccm(const MultiTaskDataset& train, const FeedbackConfig& config,
                       const MultiTaskDataset* holdout = nullptr);

CascadeModel TrainCcm(const MultiTaskDataset& train, const CascadeSetup& setup,
                      const FeedbackConfig& config);
CascadeModel TrainCcm(const MultiTaskDataset& train, const FeedbackConfig& config = {});

// Default grid: unified, e_k, (unified + e_k) / 2 and every e_i.
std::vector<std::vector<double>> DefaultPiGrid(const MultiTaskDataset& data, TaskId k);

struct PiSelection {
  std::vector<double> pi;
  // Mean hold-out metric of task k per grid point, grid order.
  std::vector<double> scores;
};

// Cross-validated choice of pi for task k: highest mean hold-out metric, ties
// to the unified point and then to the lexicographically smallest point.
PiSelection SelectPiTargetSpecific(const MultiTaskDataset& train, TaskId k,
                                   std::span<const std::vector<double>> grid, int folds,
                                   const CascadeSetup& setup, const FeedbackConfig& config);

}  // namespace feccm

#endif  // FECCM_TRAINING_HPP_
