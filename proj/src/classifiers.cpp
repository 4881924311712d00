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

#include "feccm/classifiers.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

#include "feccm/errors.hpp"

namespace feccm {

const char* KindName(ClassifierKind kind) {
  switch (kind) {
    case ClassifierKind::kMultinomialLogistic: return "multinomial_logistic";
    case ClassifierKind::kBinaryLogistic: return "binary_logistic";
    case ClassifierKind::kRidgeRegression: return "ridge_regression";
  }
  return "?";
}

ClassifierKind ParseKind(const std::string& name) {
  if (name == "multinomial_logistic") return ClassifierKind::kMultinomialLogistic;
  if (name == "binary_logistic") return ClassifierKind::kBinaryLogistic;
  if (name == "ridge_regression") return ClassifierKind::kRidgeRegression;
  Fail(ErrorCode::kSchema, "unknown classifier kind '" + name + "'");
}

double Sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Vector EncodeClass(int class_index, int dim, double margin) {
  if (dim == 1 && (class_index == 0 || class_index == 1)) {
    return Vector::Constant(1, class_index == 1 ? margin : -margin);
  }
  if (dim == 1 || class_index < 0 || class_index >= dim) {
    Fail(ErrorCode::kContract, "class " + std::to_string(class_index) + " outside [0, " +
                                   std::to_string(dim) + ")");
  }
  Vector z = Vector::Constant(dim, -margin);
  z[class_index] = margin;
  return z;
}

namespace {

// log(1 + exp(x)) without overflow.
double Softplus(double x) {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double LogSumExp(const Vector& v) {
  const double m = v.maxCoeff();
  return m + std::log((v.array() - m).exp().sum());
}

Vector Augment(const Vector& x) {
  Vector a(x.size() + 1);
  a.head(x.size()) = x;
  a[x.size()] = 1.0;
  return a;
}

void CheckInput(const ClassifierParams& params, const Vector& input) {
  if (input.size() != params.input_dim()) {
    Fail(ErrorCode::kContract, "classifier expects input dimension " +
                                   std::to_string(params.input_dim()) + ", got " +
                                   std::to_string(input.size()));
  }
}

// Target distribution (logistic kinds) or target vector (ridge).
Vector TargetVector(ClassifierKind kind, int output_dim, const Target& target) {
  if (const Label* label = std::get_if<Label>(&target)) {
    switch (kind) {
      case ClassifierKind::kMultinomialLogistic: {
        if (!label->is_class() || label->class_index() < 0 ||
            label->class_index() >= output_dim) {
          Fail(ErrorCode::kContract, "multinomial target must be a class in [0, K)");
        }
        Vector q = Vector::Zero(output_dim);
        q[label->class_index()] = 1.0;
        return q;
      }
      case ClassifierKind::kBinaryLogistic:
        if (!label->is_class() || label->class_index() < 0 || label->class_index() > 1) {
          Fail(ErrorCode::kContract, "binary target must be class 0 or 1");
        }
        return Vector::Constant(1, label->class_index());
      case ClassifierKind::kRidgeRegression:
        if (label->is_class()) return EncodeClass(label->class_index(), output_dim);
        if (output_dim != 1) Fail(ErrorCode::kContract, "real-valued ridge targets are scalars");
        return Vector::Constant(1, label->value());
    }
  }
  const Vector& latent = std::get<Vector>(target);
  if (latent.size() != output_dim) {
    Fail(ErrorCode::kContract, "latent target has dimension " + std::to_string(latent.size()) +
                                   ", expected " + std::to_string(output_dim));
  }
  switch (kind) {
    case ClassifierKind::kMultinomialLogistic: return Softmax(latent);
    case ClassifierKind::kBinaryLogistic: return Vector::Constant(1, Sigmoid(latent[0]));
    case ClassifierKind::kRidgeRegression: return latent;
  }
  return latent;
}

// Per-sample loss in score space and its first two derivatives. Logistic
// kinds use cross-entropy against the target distribution `q`.
struct ScoreLoss {
  double value;
  Vector grad;
  Matrix hess;
};

ScoreLoss LossInScores(ClassifierKind kind, const Vector& scores, const Vector& q,
                       bool want_hessian) {
  ScoreLoss out;
  switch (kind) {
    case ClassifierKind::kMultinomialLogistic: {
      const Vector log_p = LogSoftmax(scores);
      const Vector p = log_p.array().exp();
      out.value = -(q.array() * log_p.array()).sum();
      out.grad = p - q;
      if (want_hessian) {
        out.hess = Matrix(p.asDiagonal()) - p * p.transpose();
      }
      break;
    }
    case ClassifierKind::kBinaryLogistic: {
      const double s = scores[0];
      out.value = q[0] * Softplus(-s) + (1.0 - q[0]) * Softplus(s);
      const double p = Sigmoid(s);
      out.grad = Vector::Constant(1, p - q[0]);
      if (want_hessian) out.hess = Matrix::Constant(1, 1, p * (1.0 - p));
      break;
    }
    case ClassifierKind::kRidgeRegression: {
      const Vector r = scores - q;
      out.value = 0.5 * r.squaredNorm();
      out.grad = r;
      if (want_hessian) out.hess = Matrix::Identity(scores.size(), scores.size());
      break;
    }
  }
  return out;
}

struct Problem {
  std::vector<Vector> inputs;  // augmented with the bias coordinate
  std::vector<Vector> targets;
  std::vector<double> weights;
};

double Objective(ClassifierKind kind, const Matrix& w, const Problem& pb, double l2) {
  double total = 0;
  for (std::size_t i = 0; i < pb.inputs.size(); ++i) {
    const Vector s = w * pb.inputs[i];
    total += pb.weights[i] * LossInScores(kind, s, pb.targets[i], false).value;
  }
  return total + 0.5 * l2 * w.leftCols(w.cols() - 1).squaredNorm();
}

// Gradient of Objective with respect to w.
Matrix Gradient(ClassifierKind kind, const Matrix& w, const Problem& pb, double l2) {
  Matrix grad = Matrix::Zero(w.rows(), w.cols());
  for (std::size_t i = 0; i < pb.inputs.size(); ++i) {
    const ScoreLoss loss = LossInScores(kind, w * pb.inputs[i], pb.targets[i], false);
    grad.noalias() += pb.weights[i] * loss.grad * pb.inputs[i].transpose();
  }
  grad.leftCols(w.cols() - 1) += l2 * w.leftCols(w.cols() - 1);
  return grad;
}

Matrix SolveRidge(const Problem& pb, int output_dim, double l2) {
  const Eigen::Index d = pb.inputs.front().size();
  Matrix gram = Matrix::Zero(d, d);
  Matrix rhs = Matrix::Zero(d, output_dim);
  for (std::size_t i = 0; i < pb.inputs.size(); ++i) {
    gram.selfadjointView<Eigen::Lower>().rankUpdate(pb.inputs[i], pb.weights[i]);
    rhs += pb.weights[i] * pb.inputs[i] * pb.targets[i].transpose();
  }
  gram = gram.selfadjointView<Eigen::Lower>();
  gram.diagonal().head(d - 1).array() += l2;
  Eigen::LDLT<Matrix> ldlt(gram);
  Matrix sol;
  if (ldlt.info() == Eigen::Success && ldlt.isPositive() && ldlt.rcond() > 1e-13) {
    sol = ldlt.solve(rhs);
  } else {
    sol = gram.completeOrthogonalDecomposition().solve(rhs);
  }
  return sol.transpose();
}

// Damped Newton with Armijo backtracking (c = 1e-4, shrink 0.5).
Matrix SolveLogistic(ClassifierKind kind, const Problem& pb, int output_dim, double l2,
                     Matrix w, int max_iters) {
  const Eigen::Index d = pb.inputs.front().size();
  const Eigen::Index k = output_dim;
  const Eigen::Index n_params = k * d;
  double f = Objective(kind, w, pb, l2);
  if (!std::isfinite(f)) Fail(ErrorCode::kNumeric, "learn: non-finite objective at start");
  for (int iter = 0; iter < max_iters; ++iter) {
    Matrix grad = Matrix::Zero(k, d);
    Matrix hess = Matrix::Zero(n_params, n_params);
    for (std::size_t i = 0; i < pb.inputs.size(); ++i) {
      const Vector& x = pb.inputs[i];
      const ScoreLoss loss = LossInScores(kind, w * x, pb.targets[i], true);
      grad.noalias() += pb.weights[i] * loss.grad * x.transpose();
      const Matrix xxt = pb.weights[i] * x * x.transpose();
      for (Eigen::Index a = 0; a < k; ++a) {
        for (Eigen::Index b = 0; b <= a; ++b) {
          if (loss.hess(a, b) == 0.0) continue;
          hess.block(a * d, b * d, d, d).noalias() += loss.hess(a, b) * xxt;
        }
      }
    }
    grad.leftCols(d - 1) += l2 * w.leftCols(d - 1);
    for (Eigen::Index a = 0; a < k; ++a) {
      hess.block(a * d, a * d, d - 1, d - 1).diagonal().array() += l2;
    }
    hess = hess.selfadjointView<Eigen::Lower>();

    // Row-major flattening: parameter (a, j) -> a * d + j.
    Vector g(n_params);
    for (Eigen::Index a = 0; a < k; ++a) g.segment(a * d, d) = grad.row(a).transpose();
    if (g.lpNorm<Eigen::Infinity>() == 0.0) break;

    // The multinomial bias shift is a flat direction; a tiny ridge keeps the
    // system solvable without moving the step measurably.
    const double damping = 1e-12 * (1.0 + hess.diagonal().cwiseAbs().maxCoeff());
    hess.diagonal().array() += damping;
    Eigen::LDLT<Matrix> ldlt(hess);
    Vector step = -ldlt.solve(g);
    double slope = g.dot(step);
    if (!(slope < 0) || !step.allFinite()) {
      step = -g;
      slope = -g.squaredNorm();
    }
    Matrix dw(k, d);
    for (Eigen::Index a = 0; a < k; ++a) dw.row(a) = step.segment(a * d, d).transpose();

    double t = 1.0;
    bool accepted = false;
    double f_new = Objective(kind, w + dw, pb, l2);
    // A full step whose change in f is lost in round-off is taken when it
    // shrinks the gradient; otherwise Newton would stall short of the optimum.
    if (std::isfinite(f_new) && std::abs(f_new - f) <= 1e-12 * std::max(1.0, std::abs(f))) {
      accepted = Gradient(kind, w + dw, pb, l2).norm() < grad.norm();
    }
    for (int ls = 0; ls < 60 && !accepted; ++ls) {
      if (ls > 0) f_new = Objective(kind, w + t * dw, pb, l2);
      if (std::isfinite(f_new) && f_new <= f + 1e-4 * t * slope) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) break;
    w += t * dw;
    const double step_size = (t * dw).lpNorm<Eigen::Infinity>();
    f = f_new;
    if (step_size <= 1e-13 * (1.0 + w.lpNorm<Eigen::Infinity>())) break;
  }
  return w;
}

}  // namespace

Vector Softmax(const Vector& scores) { return LogSoftmax(scores).array().exp(); }

Vector LogSoftmax(const Vector& scores) {
  return scores.array() - LogSumExp(scores);
}

ClassifierParams Learn(std::span<const Vector> inputs, std::span<const Target> targets,
                       std::span<const double> sample_weights, ClassifierKind kind,
                       int output_dim, const LearnOptions& options) {
  if (inputs.empty() || inputs.size() != targets.size() ||
      inputs.size() != sample_weights.size()) {
    Fail(ErrorCode::kContract, "learn needs equally many inputs, targets and weights (>= 1)");
  }
  if (options.l2_penalty < 0 || !std::isfinite(options.l2_penalty)) {
    Fail(ErrorCode::kContract, "l2 penalty must be a finite nonnegative value");
  }
  if (kind == ClassifierKind::kBinaryLogistic && output_dim != 1) {
    Fail(ErrorCode::kContract, "binary logistic classifiers have a single output");
  }
  if (output_dim < 1) Fail(ErrorCode::kContract, "output dimension must be positive");
  const Eigen::Index dim = inputs.front().size();
  Problem pb;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (inputs[i].size() != dim) Fail(ErrorCode::kContract, "inconsistent input dimensions");
    if (!inputs[i].allFinite()) Fail(ErrorCode::kNumeric, "non-finite input at sample " + std::to_string(i));
    const double w = sample_weights[i];
    if (!(w >= 0) || !std::isfinite(w)) Fail(ErrorCode::kContract, "sample weights must be finite and nonnegative");
    if (w == 0.0) continue;
    Vector t = TargetVector(kind, output_dim, targets[i]);
    if (!t.allFinite()) Fail(ErrorCode::kNumeric, "non-finite target at sample " + std::to_string(i));
    pb.inputs.push_back(Augment(inputs[i]));
    pb.targets.push_back(std::move(t));
    pb.weights.push_back(w);
  }
  if (pb.inputs.empty()) Fail(ErrorCode::kEmptyFit, "all sample weights are zero");

  ClassifierParams params;
  params.kind = kind;
  params.l2_penalty = options.l2_penalty;
  if (kind == ClassifierKind::kRidgeRegression) {
    params.weights = SolveRidge(pb, output_dim, options.l2_penalty);
    return params;
  }

  // Every target the same hard class: the optimum sits at infinite bias, so
  // return a constant-score classifier instead.
  bool all_hard = true;
  for (const Target& t : targets) all_hard = all_hard && std::holds_alternative<Label>(t);
  if (all_hard) {
    const Vector& first = pb.targets.front();
    const bool single_class = std::all_of(pb.targets.begin(), pb.targets.end(),
                                          [&](const Vector& q) { return q == first; });
    if (single_class) {
      std::cerr << "feccm: warning: single observed class; using a constant-score classifier\n";
      params.weights = Matrix::Zero(output_dim, dim + 1);
      params.weights.col(dim) = (2.0 * first.array() - 1.0) * kLabelMargin;
      return params;
    }
  }

  Matrix start = Matrix::Zero(output_dim, dim + 1);
  if (options.warm_start != nullptr && options.warm_start->kind == kind &&
      options.warm_start->weights.rows() == output_dim &&
      options.warm_start->weights.cols() == dim + 1 && options.warm_start->weights.allFinite()) {
    start = options.warm_start->weights;
  }
  params.weights = SolveLogistic(kind, pb, output_dim, options.l2_penalty, std::move(start),
                                 options.max_iters);
  if (!params.weights.allFinite()) Fail(ErrorCode::kNumeric, "learn diverged");
  // Shifting every multinomial bias by the same amount changes nothing; pin
  // the optimum to zero-mean biases.
  if (kind == ClassifierKind::kMultinomialLogistic) {
    params.weights.col(dim).array() -= params.weights.col(dim).mean();
  }
  return params;
}

double LearnObjective(const ClassifierParams& params, std::span<const Vector> inputs,
                      std::span<const Target> targets, std::span<const double> sample_weights) {
  Problem pb;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (sample_weights[i] == 0.0) continue;
    CheckInput(params, inputs[i]);
    pb.inputs.push_back(Augment(inputs[i]));
    pb.targets.push_back(TargetVector(params.kind, params.output_dim(), targets[i]));
    pb.weights.push_back(sample_weights[i]);
  }
  return Objective(params.kind, params.weights, pb, params.l2_penalty);
}

ClassifierOutput Infer(const ClassifierParams& params, const Vector& input) {
  CheckInput(params, input);
  const Eigen::Index d = params.input_dim();
  return {params.weights.leftCols(d) * input + params.weights.col(d)};
}

Label LabelFromScores(const Vector& scores, LabelKind kind) {
  if (kind == LabelKind::kRegression) return Label::Value(scores[0]);
  if (scores.size() == 1) return Label::Class(scores[0] > 0 ? 1 : 0);
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[best]) best = i;
  }
  return Label::Class(static_cast<int>(best));
}

Label PredictLabel(const ClassifierParams& params, const Vector& input, LabelKind kind) {
  return LabelFromScores(Infer(params, input).scores, kind);
}

double NegLogLikelihood(const ClassifierParams& params, const Vector& input, const Target& target) {
  const Vector s = Infer(params, input).scores;
  const Vector* latent = std::get_if<Vector>(&target);
  if (latent == nullptr || params.kind == ClassifierKind::kRidgeRegression) {
    const Vector q = TargetVector(params.kind, params.output_dim(), target);
    return LossInScores(params.kind, s, q, false).value;
  }
  if (latent->size() != s.size()) Fail(ErrorCode::kContract, "latent dimension mismatch");
  double kl = 0;
  if (params.kind == ClassifierKind::kMultinomialLogistic) {
    const Vector log_q = LogSoftmax(*latent);
    kl = (log_q.array().exp() * (log_q - LogSoftmax(s)).array()).sum();
  } else {
    // log sigmoid(x) = -softplus(-x), log(1 - sigmoid(x)) = -softplus(x).
    const double z = (*latent)[0];
    const double q = Sigmoid(z);
    kl = q * (Softplus(-s[0]) - Softplus(-z)) + (1.0 - q) * (Softplus(s[0]) - Softplus(z));
  }
  return std::max(0.0, kl);
}

Vector GradNllWrtInput(const ClassifierParams& params, const Vector& input, const Target& target) {
  const Vector s = Infer(params, input).scores;
  const Vector q = TargetVector(params.kind, params.output_dim(), target);
  const Vector ds = LossInScores(params.kind, s, q, false).grad;
  return params.weights.leftCols(params.input_dim()).transpose() * ds;
}

Vector GradNllWrtLatent(const ClassifierParams& params, const Vector& input, const Vector& latent) {
  const Vector s = Infer(params, input).scores;
  if (latent.size() != s.size()) Fail(ErrorCode::kContract, "latent dimension mismatch");
  switch (params.kind) {
    case ClassifierKind::kMultinomialLogistic: {
      // d/dz KL(softmax(z) || p) = q .* (a - <q, a>),  a = log q - log p.
      const Vector log_q = LogSoftmax(latent);
      const Vector q = log_q.array().exp();
      const Vector a = log_q - LogSoftmax(s);
      return q.array() * (a.array() - q.dot(a));
    }
    case ClassifierKind::kBinaryLogistic: {
      const double q = Sigmoid(latent[0]);
      return Vector::Constant(1, q * (1.0 - q) * (latent[0] - s[0]));
    }
    case ClassifierKind::kRidgeRegression:
      return latent - s;
  }
  return Vector();
}

double Penalty(const ClassifierParams& params) {
  return 0.5 * params.l2_penalty * params.weights.leftCols(params.input_dim()).squaredNorm();
}

nlohmann::json ParamsToJson(const ClassifierParams& params) {
  nlohmann::json doc;
  doc["kind"] = KindName(params.kind);
  doc["l2_penalty"] = params.l2_penalty;
  doc["rows"] = params.weights.rows();
  doc["cols"] = params.weights.cols();
  std::vector<double> flat;
  flat.reserve(params.weights.size());
  for (Eigen::Index r = 0; r < params.weights.rows(); ++r) {
    for (Eigen::Index c = 0; c < params.weights.cols(); ++c) flat.push_back(params.weights(r, c));
  }
  doc["weights"] = flat;
  return doc;
}

ClassifierParams ParamsFromJson(const nlohmann::json& doc) {
  ClassifierParams params;
  try {
    params.kind = ParseKind(doc.at("kind").get<std::string>());
    params.l2_penalty = doc.at("l2_penalty").get<double>();
    const auto rows = doc.at("rows").get<Eigen::Index>();
    const auto cols = doc.at("cols").get<Eigen::Index>();
    const auto flat = doc.at("weights").get<std::vector<double>>();
    if (rows < 1 || cols < 1 || static_cast<Eigen::Index>(flat.size()) != rows * cols) {
      Fail(ErrorCode::kSchema, "classifier weights do not match the declared shape");
    }
    params.weights.resize(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) params.weights(r, c) = flat[r * cols + c];
    }
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorCode::kSchema, std::string("classifier document: ") + e.what());
  }
  if (!params.weights.allFinite() || params.l2_penalty < 0) {
    Fail(ErrorCode::kSchema, "classifier parameters must be finite");
  }
  return params;
}

// ---------------------------------------------------------------------------

double Classifier::NegLogLikelihood(const Vector&, const Target&) const {
  Fail(ErrorCode::kCapability, "classifier exposes no likelihood");
}

Vector Classifier::GradNllWrtInput(const Vector&, const Target&) const {
  Fail(ErrorCode::kCapability, "classifier exposes no likelihood gradient");
}

Vector Classifier::GradNllWrtLatent(const Vector&, const Vector&) const {
  Fail(ErrorCode::kCapability, "classifier exposes no likelihood gradient");
}

Vector LinearClassifier::Infer(const Vector& input) const {
  return feccm::Infer(params_, input).scores;
}

double LinearClassifier::NegLogLikelihood(const Vector& input, const Target& target) const {
  return feccm::NegLogLikelihood(params_, input, target);
}

Vector LinearClassifier::GradNllWrtInput(const Vector& input, const Target& target) const {
  return feccm::GradNllWrtInput(params_, input, target);
}

Vector LinearClassifier::GradNllWrtLatent(const Vector& input, const Vector& latent) const {
  return feccm::GradNllWrtLatent(params_, input, latent);
}

double LinearClassifier::Penalty() const { return feccm::Penalty(params_); }

nlohmann::json LinearClassifier::ToJson() const { return ParamsToJson(params_); }

int LinearFactory::LatentDim(const TaskSpec& spec) const {
  switch (kind_) {
    case ClassifierKind::kMultinomialLogistic:
      return spec.output_dim();
    case ClassifierKind::kBinaryLogistic:
      return 1;
    case ClassifierKind::kRidgeRegression:
      return spec.categorical() && spec.num_classes > 2 ? spec.num_classes : 1;
  }
  return spec.output_dim();
}

std::shared_ptr<const Classifier> LinearFactory::Learn(std::span<const Vector> inputs,
                                                       std::span<const Target> targets,
                                                       std::span<const double> sample_weights,
                                                       int output_dim,
                                                       const Classifier* warm_start,
                                                       std::uint64_t seed) const {
  LearnOptions options;
  options.l2_penalty = l2_penalty_;
  options.seed = seed;
  if (const auto* linear = dynamic_cast<const LinearClassifier*>(warm_start)) {
    options.warm_start = &linear->params();
  }
  return std::make_shared<LinearClassifier>(
      feccm::Learn(inputs, targets, sample_weights, kind_, output_dim, options));
}

ClassifierKind DefaultKind(const TaskSpec& spec) {
  return spec.categorical() ? ClassifierKind::kMultinomialLogistic
                            : ClassifierKind::kRidgeRegression;
}

std::shared_ptr<const Classifier> ClassifierFromJson(const nlohmann::json& doc) {
  return std::make_shared<LinearClassifier>(ParamsFromJson(doc));
}

}  // namespace feccm
