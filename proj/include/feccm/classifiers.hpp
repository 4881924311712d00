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

// Black-box classifier contract and the built-in linear classifiers.
//
// A classifier maps an input vector to a score vector: log-odds for the
// logistic kinds, the prediction itself for ridge regression. Training
// targets are either ground-truth labels or latent score vectors; a latent
// vector z stands for the soft label softmax(z) (sigmoid(z) for the binary
// kind) and for itself under ridge regression.
//
// Likelihood terms:
//   multinomial  KL(softmax(z) || softmax(s))   (= -log p_c for a class label)
//   binary       KL(sigmoid(z) || sigmoid(s))   (= logistic loss for a label)
//   ridge        |s - t|^2 / 2
// where s = W [x; 1]. Each vanishes when the target equals the prediction, and
// learning minimizes the weighted sum of these terms plus l2/2 |W|^2 with the
// bias column unpenalized.

#ifndef FECCM_CLASSIFIERS_HPP_
#define FECCM_CLASSIFIERS_HPP_

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <variant>

#include "feccm/tasks.hpp"

namespace feccm {

enum class ClassifierKind { kMultinomialLogistic, kBinaryLogistic, kRidgeRegression };

const char* KindName(ClassifierKind kind);
ClassifierKind ParseKind(const std::string& name);

inline constexpr double kDefaultL2Penalty = 1e-2;
inline constexpr double kLabelMargin = 4.0;

// Score encoding of a hard class: +margin at the class and -margin elsewhere;
// a single score is the log-odds of class 1 (+margin for class 1).
Vector EncodeClass(int class_index, int dim, double margin = kLabelMargin);

struct ClassifierParams {
  ClassifierKind kind = ClassifierKind::kRidgeRegression;
  // output_dim x (input_dim + 1); the last column is the bias.
  Matrix weights;
  double l2_penalty = kDefaultL2Penalty;

  int input_dim() const { return static_cast<int>(weights.cols()) - 1; }
  int output_dim() const { return static_cast<int>(weights.rows()); }
};

struct ClassifierOutput {
  Vector scores;
};

// A ground-truth label or a latent score vector.
using Target = std::variant<Label, Vector>;

struct LearnOptions {
  double l2_penalty = kDefaultL2Penalty;
  std::uint64_t seed = 0;
  // Newton iterations for the logistic kinds.
  int max_iters = 100;
  // Optional starting point (same kind and shape); zero otherwise.
  const ClassifierParams* warm_start = nullptr;
};

ClassifierParams Learn(std::span<const Vector> inputs, std::span<const Target> targets,
                       std::span<const double> sample_weights, ClassifierKind kind,
                       int output_dim, const LearnOptions& options = {});

// Value of the training objective at `params`.
double LearnObjective(const ClassifierParams& params, std::span<const Vector> inputs,
                      std::span<const Target> targets, std::span<const double> sample_weights);

ClassifierOutput Infer(const ClassifierParams& params, const Vector& input);

// Categorical: argmax with ties to the lowest index; a single score is read as
// the log-odds of class 1 (class 0 at exactly zero). Regression: the score.
Label LabelFromScores(const Vector& scores, LabelKind kind);
Label PredictLabel(const ClassifierParams& params, const Vector& input, LabelKind kind);

double NegLogLikelihood(const ClassifierParams& params, const Vector& input, const Target& target);
Vector GradNllWrtInput(const ClassifierParams& params, const Vector& input, const Target& target);
// Gradient of NegLogLikelihood with respect to a latent target vector.
Vector GradNllWrtLatent(const ClassifierParams& params, const Vector& input, const Vector& latent);

// l2/2 times the squared norm of the non-bias weights.
double Penalty(const ClassifierParams& params);

Vector Softmax(const Vector& scores);
Vector LogSoftmax(const Vector& scores);
double Sigmoid(double x);

nlohmann::json ParamsToJson(const ClassifierParams& params);
ClassifierParams ParamsFromJson(const nlohmann::json& doc);

// ---------------------------------------------------------------------------
// Black-box contract. The trainer only talks to classifiers through these two
// interfaces. Likelihood and input gradients are optional; without them the
// trainer can only run surrogate feedback.

class Classifier {
 public:
  virtual ~Classifier() = default;

  virtual int input_dim() const = 0;
  virtual int output_dim() const = 0;
  virtual Vector Infer(const Vector& input) const = 0;

  virtual bool has_likelihood() const { return false; }
  virtual double NegLogLikelihood(const Vector& input, const Target& target) const;
  virtual Vector GradNllWrtInput(const Vector& input, const Target& target) const;
  virtual Vector GradNllWrtLatent(const Vector& input, const Vector& latent) const;
  // Regularizer that learning adds to the summed likelihood terms.
  virtual double Penalty() const { return 0.0; }

  virtual nlohmann::json ToJson() const = 0;
};

class ClassifierFactory {
 public:
  virtual ~ClassifierFactory() = default;

  virtual std::string name() const = 0;
  // Weight-incapable learners are fed a subsample drawn in proportion to the
  // sample weights instead.
  virtual bool accepts_weights() const { return true; }
  // When false, latent targets are thresholded to labels before learning.
  virtual bool accepts_latent_targets() const { return true; }
  // Latent dimension this learner produces for `spec` (first layer).
  virtual int LatentDim(const TaskSpec& spec) const { return spec.output_dim(); }

  virtual std::shared_ptr<const Classifier> Learn(std::span<const Vector> inputs,
                                                  std::span<const Target> targets,
                                                  std::span<const double> sample_weights,
                                                  int output_dim,
                                                  const Classifier* warm_start,
                                                  std::uint64_t seed) const = 0;
};

class LinearClassifier : public Classifier {
 public:
  explicit LinearClassifier(ClassifierParams params) : params_(std::move(params)) {}

  const ClassifierParams& params() const { return params_; }

  int input_dim() const override { return params_.input_dim(); }
  int output_dim() const override { return params_.output_dim(); }
  Vector Infer(const Vector& input) const override;
  bool has_likelihood() const override { return true; }
  double NegLogLikelihood(const Vector& input, const Target& target) const override;
  Vector GradNllWrtInput(const Vector& input, const Target& target) const override;
  Vector GradNllWrtLatent(const Vector& input, const Vector& latent) const override;
  double Penalty() const override;
  nlohmann::json ToJson() const override;

 private:
  ClassifierParams params_;
};

class LinearFactory : public ClassifierFactory {
 public:
  explicit LinearFactory(ClassifierKind kind, double l2_penalty = kDefaultL2Penalty)
      : kind_(kind), l2_penalty_(l2_penalty) {}

  ClassifierKind kind() const { return kind_; }
  std::string name() const override { return KindName(kind_); }
  int LatentDim(const TaskSpec& spec) const override;
  std::shared_ptr<const Classifier> Learn(std::span<const Vector> inputs,
                                          std::span<const Target> targets,
                                          std::span<const double> sample_weights,
                                          int output_dim, const Classifier* warm_start,
                                          std::uint64_t seed) const override;

 private:
  ClassifierKind kind_;
  double l2_penalty_;
};

// Default built-in kind for a task: multinomial logistic for categorical
// tasks, ridge for regression.
ClassifierKind DefaultKind(const TaskSpec& spec);

// Rebuilds a built-in classifier from its document.
std::shared_ptr<const Classifier> ClassifierFromJson(const nlohmann::json& doc);

}  // namespace feccm

#endif  // FECCM_CLASSIFIERS_HPP_
