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

// Synthetic data, baselines, evaluation and experiment orchestration.

#ifndef FECCM_HARNESS_HPP_
#define FECCM_HARNESS_HPP_

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "feccm/cascade.hpp"
#include "feccm/training.hpp"

namespace feccm {

enum class Coverage { kDisjoint, kFull, kMixed };
const char* CoverageName(Coverage coverage);
Coverage ParseCoverage(const std::string& name);

struct SyntheticTask {
  LabelKind kind = LabelKind::kCategorical;
  int num_classes = 2;
  int feature_dim = 6;
  Metric metric = Metric::kAccuracy;
};

// Each sample draws a shared latent u and private latents v_i (all N(0, I_d)).
// Task i sees h_i = sqrt(rho) u + sqrt(1 - rho) v_i through
//   psi_i = A_i h_i + feature_noise * eps,
// and its label comes from softmax(label_scale * B_i h_i) (categorical) or
// b_i . h_i + label_noise * eps (regression).
struct SyntheticConfig {
  std::vector<SyntheticTask> tasks;
  int latent_dim = 3;
  double rho = 0.7;
  double feature_noise = 1.0;
  double label_noise = 0.3;
  double label_scale = 3.0;
  // Training samples labeled for each task; the training set has
  // samples_per_task * n samples.
  int samples_per_task = 500;
  // Fully labeled test samples.
  int test_samples = 500;
  Coverage coverage = Coverage::kDisjoint;
  // Probability that a sample of the mixed policy carries each extra label.
  double mixed_p = 0.5;
  std::uint64_t seed = 0;
};

void ValidateSyntheticConfig(const SyntheticConfig& config);
nlohmann::json SyntheticConfigToJson(const SyntheticConfig& config);
SyntheticConfig SyntheticConfigFromJson(const nlohmann::json& doc);
std::vector<TaskSpec> SyntheticSpecs(const SyntheticConfig& config);

// Deterministic in config.seed. Parameters and samples do not depend on the
// coverage policy, so datasets generated under different policies share
// features and labels and differ only in which labels are kept.
std::pair<MultiTaskDataset, MultiTaskDataset> GenerateSynthetic(const SyntheticConfig& config);

// Anything that produces per-task scores for a sample.
class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual const std::vector<TaskSpec>& specs() const = 0;
  virtual std::vector<Vector> Scores(const Sample& sample) const = 0;
  virtual nlohmann::json ToJson() const = 0;
};

class CascadePredictor : public Predictor {
 public:
  explicit CascadePredictor(CascadeModel model) : model_(std::move(model)) {}
  const CascadeModel& model() const { return model_; }
  const std::vector<TaskSpec>& specs() const override { return model_.specs(); }
  std::vector<Vector> Scores(const Sample& sample) const override;
  nlohmann::json ToJson() const override { return model_.ToJson(); }

 private:
  CascadeModel model_;
};

// One classifier per task on psi_i alone ("base") or on the concatenation of
// every task's features ("all_features_direct").
class BaselinePredictor : public Predictor {
 public:
  enum class Kind { kBase, kAllFeatures };

  BaselinePredictor(Kind kind, std::vector<TaskSpec> specs, Standardizer standardizer,
                    std::vector<std::shared_ptr<const Classifier>> classifiers);

  Kind kind() const { return kind_; }
  const std::vector<std::shared_ptr<const Classifier>>& classifiers() const { return classifiers_; }
  const std::vector<TaskSpec>& specs() const override { return specs_; }
  std::vector<Vector> Scores(const Sample& sample) const override;
  nlohmann::json ToJson() const override;

  // Classifier input for task t.
  Vector Input(const std::vector<Vector>& standardized, TaskId t) const;

 private:
  Kind kind_;
  std::vector<TaskSpec> specs_;
  Standardizer standardizer_;
  std::vector<std::shared_ptr<const Classifier>> classifiers_;
};

inline constexpr const char* kBaselineSchema = "feccm.baseline/1";

BaselinePredictor TrainBase(const MultiTaskDataset& train, double l2_penalty = kDefaultL2Penalty,
                            int threads = 1);
BaselinePredictor TrainAllFeaturesDirect(const MultiTaskDataset& train,
                                         double l2_penalty = kDefaultL2Penalty, int threads = 1);

// Reads a cascade or baseline document.
std::unique_ptr<Predictor> PredictorFromJson(const nlohmann::json& doc);

struct TaskReport {
  TaskId task = 0;
  std::string name;
  Metric metric = Metric::kAccuracy;
  double value = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::size_t count = 0;
  // Rows are ground truth, columns predictions; empty for regression.
  std::vector<std::vector<std::size_t>> confusion;
};

struct EvalReport {
  std::string method;
  std::vector<TaskReport> tasks;

  nlohmann::json ToJson() const;
  void WriteCsv(std::ostream& out) const;
};

struct EvalOptions {
  int bootstrap = 1000;
  std::uint64_t seed = 0;
  int threads = 1;
};

// Metrics over the samples labeled for each task, 95% percentile bootstrap
// intervals (widened to contain the point estimate), confusion matrices.
EvalReport Evaluate(const Predictor& predictor, const MultiTaskDataset& test,
                    const EvalOptions& options = {}, const std::string& method = "");

// Predictions as comma-separated rows: id, then per task the predicted label
// and the scores.
void WritePredictions(std::ostream& out, const Predictor& predictor, const MultiTaskDataset& data);

struct BaselineRun {
  BaselinePredictor predictor;
  EvalReport report;
};
BaselineRun RunAllFeaturesDirect(const MultiTaskDataset& train, const MultiTaskDataset& test,
                                 double l2_penalty = kDefaultL2Penalty,
                                 const EvalOptions& options = {});

// Method names accepted by experiments and the command line.
const std::vector<std::string>& MethodNames();
bool IsMethod(const std::string& name);

// Training options shared by experiments, the C API and the command line:
//   seed, max_outer_iters, mode, pi ("unified" | "onegoal:<k>" | "grid" |
//   explicit array), target_task, beta ("auto" | number), surrogate_target,
//   tol, plateau_tol, margin, threads, folds, pi_grid, l2_penalty.
struct TrainOptions {
  FeedbackConfig feedback;
  double l2_penalty = kDefaultL2Penalty;
};
TrainOptions ParseTrainOptions(const nlohmann::json& doc, int num_tasks);
// Applies the "pi" option text to `config`.
void ApplyPiOption(const std::string& text, TaskId target, FeedbackConfig& config, int num_tasks);

struct MethodResult {
  std::unique_ptr<Predictor> predictor;
  // Empty for the baselines.
  std::optional<TrainingTrace> trace;
};

// Trains `method` on `train`. The feccm_* methods force their instantiation
// (one-goal and target-specific use feedback.instantiation.target, or task 1).
MethodResult TrainMethod(const std::string& method, const MultiTaskDataset& train,
                         const TrainOptions& options, const MultiTaskDataset* holdout = nullptr);

// Runs the experiment described by the document at `config_path` (see the
// README for the schema) and writes its tables into `out_dir`.
void RunExperiment(const std::string& config_path, const std::string& out_dir);
void RunExperiment(const nlohmann::json& config, const std::string& out_dir);

}  // namespace feccm

#endif  // FECCM_HARNESS_HPP_
