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

// Task declarations, samples and heterogeneous multi-task datasets.
//
// A dataset holds one row per underlying datum. Each row carries the feature
// block of every task (the per-task feature extraction of the same datum) and
// labels for an arbitrary non-empty subset of the tasks. The partition of a
// task is the set of rows labeled for it.

#ifndef FECCM_TASKS_HPP_
#define FECCM_TASKS_HPP_

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include "json.hpp"

namespace feccm {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Tasks are numbered 1..n.
using TaskId = int;
using SampleId = std::int64_t;

enum class LabelKind { kCategorical, kRegression };
enum class Metric { kAccuracy, kRmse, kAveragePrecision };

const char* MetricName(Metric metric);
Metric ParseMetric(const std::string& name);

// True when larger metric values are better.
bool HigherIsBetter(Metric metric);

struct TaskSpec {
  TaskId id = 0;
  std::string name;
  LabelKind kind = LabelKind::kCategorical;
  int num_classes = 0;  // K for categorical tasks, 0 for regression
  int feature_dim = 0;
  Metric metric = Metric::kAccuracy;

  static TaskSpec Categorical(TaskId id, std::string name, int num_classes,
                              int feature_dim,
                              Metric metric = Metric::kAccuracy);
  static TaskSpec Regression(TaskId id, std::string name, int feature_dim);

  bool categorical() const { return kind == LabelKind::kCategorical; }
  int output_dim() const { return categorical() ? num_classes : 1; }

  bool operator==(const TaskSpec&) const = default;
};

// Checks per-spec invariants and that ids run 1..n in order.
void ValidateSpecs(std::span<const TaskSpec> specs);

nlohmann::json SpecsToJson(std::span<const TaskSpec> specs);
std::vector<TaskSpec> SpecsFromJson(const nlohmann::json& doc);

class Label {
 public:
  static Label Class(int class_index);
  static Label Value(double value);

  bool is_class() const { return is_class_; }
  int class_index() const { return class_index_; }
  // Class labels report their index as a value.
  double value() const { return value_; }

  bool operator==(const Label&) const = default;

 private:
  bool is_class_ = true;
  int class_index_ = 0;
  double value_ = 0.0;
};

void ValidateLabel(const TaskSpec& spec, const Label& label);

struct Sample {
  SampleId id = 0;
  // features[t - 1] is the feature block of task t.
  std::vector<Vector> features;
  // labels[t - 1] is present iff the sample is labeled for task t.
  std::vector<std::optional<Label>> labels;

  const Vector& psi(TaskId task) const { return features[task - 1]; }
  bool has_label(TaskId task) const { return labels[task - 1].has_value(); }
  const Label& label(TaskId task) const { return *labels[task - 1]; }
  int num_labels() const;

  bool operator==(const Sample& other) const;
};

class MultiTaskDataset {
 public:
  MultiTaskDataset() = default;
  // Validates every sample against the specs and orders samples by id.
  MultiTaskDataset(std::vector<TaskSpec> specs, std::vector<Sample> samples);

  const std::vector<TaskSpec>& specs() const { return specs_; }
  const TaskSpec& spec(TaskId task) const;
  int num_tasks() const { return static_cast<int>(specs_.size()); }

  const std::vector<Sample>& samples() const { return samples_; }
  std::size_t size() const { return samples_.size(); }
  const Sample& operator[](std::size_t index) const { return samples_[index]; }

  // Row positions (ascending, hence ascending sample id) labeled for `task`.
  const std::vector<std::size_t>& partition_rows(TaskId task) const;
  // Sample ids labeled for `task`, ascending.
  std::vector<SampleId> partition(TaskId task) const;

  // Rows at the given positions, in position order.
  MultiTaskDataset Subset(std::span<const std::size_t> rows) const;

  bool operator==(const MultiTaskDataset& other) const;

 private:
  void CheckTask(TaskId task) const;

  std::vector<TaskSpec> specs_;
  std::vector<Sample> samples_;
  std::vector<std::vector<std::size_t>> partitions_;
};

// Index set of rows labeled for task j, as sample ids.
std::vector<SampleId> Partition(const MultiTaskDataset& dataset, TaskId task);

// Comma-separated dataset files: header `id,f<t>_<k>...,y<t>...`, one row per
// sample, an empty label field marks a missing label. The id column is
// optional on input (row order is used instead).
MultiTaskDataset ReadDataset(std::istream& in, std::vector<TaskSpec> specs);
MultiTaskDataset LoadDataset(const std::string& path,
                             std::vector<TaskSpec> specs);
void WriteDataset(std::ostream& out, const MultiTaskDataset& dataset);
void SaveDataset(const std::string& path, const MultiTaskDataset& dataset);

// Seeded stratified split into len(fractions) disjoint datasets. Strata are
// (first labeled task, class) pairs; each stratum is allocated with
// largest-remainder rounding so that part sizes also follow fractions.
std::vector<MultiTaskDataset> Split(const MultiTaskDataset& dataset,
                                    std::span<const double> fractions,
                                    std::uint64_t seed);

// Seeded stratified k-fold assignment: fold index per row.
std::vector<int> FoldAssignment(const MultiTaskDataset& dataset, int folds,
                                std::uint64_t seed);

// Shortest decimal text that parses back to the same double.
std::string FormatDouble(double value);

// Metrics. Inputs are aligned and must be non-empty (empty-eval error).
double Accuracy(std::span<const Label> truth, std::span<const Label> predicted);
double Rmse(std::span<const Label> truth, std::span<const Label> predicted);
// Mean precision at the rank of each positive. Equal scores keep input order.
double AveragePrecision(std::span<const bool> positive, std::span<const double> scores);

}  // namespace feccm

#endif  // FECCM_TASKS_HPP_
