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

// Two-layer cascade: a first-layer classifier per task reads that task's
// features; the second-layer classifier of task j reads task j's features
// followed by the (adapted) first-layer outputs of every task in task order.

#ifndef FECCM_CASCADE_HPP_
#define FECCM_CASCADE_HPP_

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "feccm/classifiers.hpp"
#include "feccm/tasks.hpp"

namespace feccm {

// Transform applied to producer i's output before consumer j reads it. All
// adapters are coordinate selections, so their Jacobian is a scatter.
class Adapter {
 public:
  static Adapter Identity() { return Adapter(Mode::kIdentity, {}); }
  static Adapter Drop() { return Adapter(Mode::kDrop, {}); }
  static Adapter Select(std::vector<int> indices) { return Adapter(Mode::kSelect, std::move(indices)); }

  Vector Apply(const Vector& z) const;
  int OutputDim(int latent_dim) const;
  // grad_z[idx] += grad_out[k] for every selected coordinate.
  void Backward(const Vector& grad_out, Eigen::Ref<Vector> grad_z) const;

  bool is_identity() const { return mode_ == Mode::kIdentity; }
  nlohmann::json ToJson() const;
  static Adapter FromJson(const nlohmann::json& doc);

  bool operator==(const Adapter&) const = default;

 private:
  enum class Mode { kIdentity, kDrop, kSelect };
  Adapter(Mode mode, std::vector<int> indices) : mode_(mode), indices_(std::move(indices)) {}

  Mode mode_;
  std::vector<int> indices_;
};

// adapters[j - 1][i - 1] transforms producer i for consumer j.
using AdapterTable = std::vector<std::vector<Adapter>>;
AdapterTable IdentityAdapters(int num_tasks);

// Per-task feature standardization (x - mean) / scale; unit scale where the
// training variance vanishes.
struct Standardizer {
  std::vector<Vector> mean;
  std::vector<Vector> scale;

  static Standardizer Fit(const MultiTaskDataset& data);
  static Standardizer Identity(std::span<const TaskSpec> specs);

  Vector Apply(TaskId task, const Vector& psi) const;
  // Standardized feature blocks of one sample, task order.
  std::vector<Vector> Apply(const Sample& sample) const;
};

// Phi_j = [psi_j, adapter(1->j)(z_1), ..., adapter(n->j)(z_n)].
Vector AugmentFeatures(const Vector& psi_j, std::span<const Vector> z_all,
                       std::span<const Adapter> adapters);

class CascadeModel {
 public:
  using ClassifierPtr = std::shared_ptr<const Classifier>;

  CascadeModel(std::vector<TaskSpec> specs, std::vector<ClassifierPtr> first_layer,
               std::vector<ClassifierPtr> second_layer, AdapterTable adapters,
               Standardizer standardizer);

  const std::vector<TaskSpec>& specs() const { return specs_; }
  int num_tasks() const { return static_cast<int>(specs_.size()); }
  const Classifier& first_layer(TaskId task) const { return *theta_[task - 1]; }
  const Classifier& second_layer(TaskId task) const { return *omega_[task - 1]; }
  const std::vector<ClassifierPtr>& first_layers() const { return theta_; }
  const std::vector<ClassifierPtr>& second_layers() const { return omega_; }
  const AdapterTable& adapters() const { return adapters_; }
  const Standardizer& standardizer() const { return standardizer_; }

  int latent_dim(TaskId task) const { return theta_[task - 1]->output_dim(); }
  std::vector<int> latent_dims() const;
  int second_layer_input_dim(TaskId task) const;

  nlohmann::json ToJson() const;
  static CascadeModel FromJson(const nlohmann::json& doc);

 private:
  std::vector<TaskSpec> specs_;
  std::vector<ClassifierPtr> theta_;
  std::vector<ClassifierPtr> omega_;
  AdapterTable adapters_;
  Standardizer standardizer_;
};

inline constexpr const char* kModelSchema = "feccm.cascade/1";

struct TaskPrediction {
  Vector scores;
  Label label;
};

// First-layer outputs on standardized features, task order.
std::vector<Vector> InferFirstLayer(const CascadeModel& model, const Sample& sample);
// Second-layer scores and labels for every task, sharing one first-layer pass.
std::vector<TaskPrediction> Predict(const CascadeModel& model, const Sample& sample);

// Metric of `spec` from ground truth and score vectors. Average precision on a
// categorical task is the mean one-vs-rest value over classes present in the
// truth (class 1 only when K = 2).
double MetricValue(const TaskSpec& spec, std::span<const Label> truth,
                   std::span<const Vector> scores);
// Metric of every task over the samples of `data` labeled for it.
std::vector<double> TaskMetrics(const CascadeModel& model, const MultiTaskDataset& data);

// Per-sample first-layer outputs treated as hidden variables while training.
class LatentState {
 public:
  LatentState() = default;
  LatentState(std::vector<SampleId> ids, int num_tasks);

  std::size_t num_rows() const { return ids_.size(); }
  int num_tasks() const { return num_tasks_; }
  SampleId id(std::size_t row) const { return ids_[row]; }

  bool has(std::size_t row, TaskId task) const { return z_[row][task - 1].has_value(); }
  const Vector& at(std::size_t row, TaskId task) const;
  void set(std::size_t row, TaskId task, Vector z);
  // True when every (row, task) pair is present.
  bool complete() const;
  // All latents of a row, task order.
  std::vector<Vector> row(std::size_t row) const;

 private:
  std::vector<SampleId> ids_;
  int num_tasks_ = 0;
  std::vector<std::vector<std::optional<Vector>>> z_;
};

}  // namespace feccm

#endif  // FECCM_CASCADE_HPP_
