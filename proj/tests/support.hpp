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

// Random generators shared by the test suites.

#ifndef FECCM_TESTS_SUPPORT_HPP_
#define FECCM_TESTS_SUPPORT_HPP_

#include <memory>
#include <random>
#include <vector>

#include "feccm/cascade.hpp"
#include "feccm/classifiers.hpp"
#include "feccm/harness.hpp"
#include "feccm/tasks.hpp"

namespace feccm::testing {

using Rng = std::mt19937_64;

inline double Uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline int UniformInt(Rng& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

inline Vector RandomVector(Rng& rng, Eigen::Index n, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Vector v(n);
  for (Eigen::Index k = 0; k < n; ++k) v[k] = normal(rng);
  return v;
}

inline Matrix RandomMatrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = normal(rng);
  }
  return m;
}

inline std::shared_ptr<const Classifier> RandomLinear(Rng& rng, ClassifierKind kind, int inputs,
                                                      int outputs, double scale = 1.0,
                                                      double l2 = kDefaultL2Penalty) {
  ClassifierParams p;
  p.kind = kind;
  p.weights = RandomMatrix(rng, outputs, inputs + 1, scale);
  p.l2_penalty = l2;
  return std::make_shared<LinearClassifier>(p);
}

// Random target appropriate for `kind` with `outputs` scores.
inline Target RandomLabelTarget(Rng& rng, ClassifierKind kind, int outputs) {
  switch (kind) {
    case ClassifierKind::kMultinomialLogistic: return Label::Class(UniformInt(rng, 0, outputs - 1));
    case ClassifierKind::kBinaryLogistic: return Label::Class(UniformInt(rng, 0, 1));
    case ClassifierKind::kRidgeRegression:
      return outputs == 1 ? Target(Label::Value(Uniform(rng, -2, 2)))
                          : Target(RandomVector(rng, outputs));
  }
  return Label::Class(0);
}

inline std::vector<TaskSpec> RandomSpecs(Rng& rng, int n, bool allow_regression = true) {
  std::vector<TaskSpec> specs;
  for (int t = 1; t <= n; ++t) {
    const int dim = UniformInt(rng, 1, 4);
    if (allow_regression && UniformInt(rng, 0, 2) == 0) {
      specs.push_back(TaskSpec::Regression(t, "t" + std::to_string(t), dim));
    } else {
      specs.push_back(TaskSpec::Categorical(t, "t" + std::to_string(t), UniformInt(rng, 2, 4), dim));
    }
  }
  return specs;
}

inline Label RandomLabel(Rng& rng, const TaskSpec& spec) {
  if (spec.categorical()) return Label::Class(UniformInt(rng, 0, spec.num_classes - 1));
  return Label::Value(Uniform(rng, -3, 3));
}

// Dataset with random features and each label present with probability p.
inline MultiTaskDataset RandomDataset(Rng& rng, const std::vector<TaskSpec>& specs, int rows,
                                      double p = 0.6) {
  std::vector<Sample> samples;
  for (int r = 0; r < rows; ++r) {
    Sample s;
    s.id = r;
    for (const TaskSpec& spec : specs) {
      s.features.push_back(RandomVector(rng, spec.feature_dim));
      if (Uniform(rng, 0, 1) < p) {
        s.labels.push_back(RandomLabel(rng, spec));
      } else {
        s.labels.push_back(std::nullopt);
      }
    }
    samples.push_back(std::move(s));
  }
  return MultiTaskDataset(specs, std::move(samples));
}

// Small synthetic generator configuration with the given task kinds.
inline SyntheticConfig SmallSynthetic(std::uint64_t seed, int samples_per_task = 60) {
  SyntheticConfig g;
  g.tasks = {SyntheticTask{LabelKind::kCategorical, 3, 4, Metric::kAccuracy},
             SyntheticTask{LabelKind::kCategorical, 2, 3, Metric::kAccuracy},
             SyntheticTask{LabelKind::kRegression, 0, 3, Metric::kRmse}};
  g.samples_per_task = samples_per_task;
  g.test_samples = 50;
  g.seed = seed;
  return g;
}

}  // namespace feccm::testing

#endif  // FECCM_TESTS_SUPPORT_HPP_
