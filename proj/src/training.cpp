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

#include "feccm/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <ostream>
#include <random>

#include "feccm/errors.hpp"

namespace feccm {

namespace {

using Rows = std::vector<std::vector<Vector>>;

// Standardized feature blocks of every row.
Rows StandardizedFeatures(const Standardizer& st, const MultiTaskDataset& data, int threads) {
  Rows psi(data.size());
  ParallelFor(data.size(), threads, [&](std::size_t r) { psi[r] = st.Apply(data[r]); });
  return psi;
}

std::uint64_t LearnSeed(std::uint64_t seed, int layer, TaskId task) {
  std::uint64_t x = seed + 0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(2 * task + layer + 1);
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

const char* LayerName(int layer) { return layer == 0 ? "first" : "second"; }

std::shared_ptr<const Classifier> LearnOne(const ClassifierFactory& factory,
                                           std::vector<Vector> inputs,
                                           std::vector<Target> targets,
                                           std::vector<double> weights, int output_dim,
                                           const Classifier* warm_start, std::uint64_t seed,
                                           int layer, TaskId task) {
  const auto where = [&] {
    return std::string(LayerName(layer)) + " layer, task " + std::to_string(task);
  };
  const bool any = std::any_of(weights.begin(), weights.end(), [](double w) { return w > 0; });
  if (inputs.empty() || !any) Fail(ErrorCode::kEmptyFit, where() + ": no usable training pairs");
  if (!factory.accepts_weights()) {
    // Resample in proportion to the weights; the draw count keeps the size.
    std::mt19937_64 rng(seed);
    std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
    std::vector<Vector> in;
    std::vector<Target> tg;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
      const std::size_t i = pick(rng);
      in.push_back(inputs[i]);
      tg.push_back(targets[i]);
    }
    inputs = std::move(in);
    targets = std::move(tg);
    weights.assign(inputs.size(), 1.0);
  }
  try {
    return factory.Learn(inputs, targets, weights, output_dim, warm_start, seed);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kEmptyFit || e.code() == ErrorCode::kNumeric) {
      Fail(e.code(), where() + ": " + e.what());
    }
    throw;
  }
}

Label Threshold(const TaskSpec& spec, const Vector& z) {
  if (spec.categorical()) return LabelFromScores(z, spec.kind);
  return Label::Value(z[0]);
}

std::vector<int> SetupLatentDims(const MultiTaskDataset& data, const CascadeSetup& setup) {
  std::vector<int> dims;
  for (const TaskSpec& spec : data.specs()) dims.push_back(setup.first_layer[spec.id - 1]->LatentDim(spec));
  return dims;
}

void CheckSetup(const CascadeSetup& setup, int n) {
  if (static_cast<int>(setup.first_layer.size()) != n ||
      static_cast<int>(setup.second_layer.size()) != n) {
    Fail(ErrorCode::kConfig, "setup needs one learner per task on each layer");
  }
  for (int t = 0; t < n; ++t) {
    if (!setup.first_layer[t] || !setup.second_layer[t]) {
      Fail(ErrorCode::kConfig, "missing learner for task " + std::to_string(t + 1));
    }
  }
  if (static_cast<int>(setup.adapters.size()) != n) {
    Fail(ErrorCode::kConfig, "adapter table must have one row per task");
  }
}

void RequireLikelihood(const CascadeModel& model) {
  for (int t = 0; t < model.num_tasks(); ++t) {
    if (!model.first_layers()[t]->has_likelihood() || !model.second_layers()[t]->has_likelihood()) {
      Fail(ErrorCode::kCapability, "exact feedback needs likelihoods; classifier of task " +
                                       std::to_string(t + 1) + " has none");
    }
  }
}

double TotalPenalty(const CascadeModel& model) {
  double total = 0;
  for (const auto& c : model.first_layers()) total += c->Penalty();
  for (const auto& c : model.second_layers()) total += c->Penalty();
  return total;
}

std::vector<Vector> Predictions(const CascadeModel& model, const std::vector<Vector>& psi) {
  std::vector<Vector> z;
  for (int t = 0; t < model.num_tasks(); ++t) z.push_back(model.first_layers()[t]->Infer(psi[t]));
  return z;
}

// Exact-mode objective of one sample as a function of the flattened latents.
class SampleObjective {
 public:
  SampleObjective(const CascadeModel& model, const std::vector<Vector>& psi, const Sample& sample)
      : model_(model), psi_(psi), sample_(sample), dims_(model.latent_dims()) {}

  double Value(const Vector& flat) const {
    const std::vector<Vector> z = SplitLatents(flat, dims_);
    double total = 0;
    for (int i = 0; i < model_.num_tasks(); ++i) {
      total += model_.first_layers()[i]->NegLogLikelihood(psi_[i], Target(z[i]));
    }
    for (int j = 0; j < model_.num_tasks(); ++j) {
      if (!sample_.labels[j]) continue;
      const Vector phi = AugmentFeatures(psi_[j], z, model_.adapters()[j]);
      total += model_.second_layers()[j]->NegLogLikelihood(phi, Target(*sample_.labels[j]));
    }
    return total;
  }

  Vector Gradient(const Vector& flat) const {
    const std::vector<Vector> z = SplitLatents(flat, dims_);
    Vector grad = Vector::Zero(flat.size());
    std::vector<Eigen::Index> offsets;
    Eigen::Index off = 0;
    for (int i = 0; i < model_.num_tasks(); ++i) {
      offsets.push_back(off);
      grad.segment(off, dims_[i]) = model_.first_layers()[i]->GradNllWrtLatent(psi_[i], z[i]);
      off += dims_[i];
    }
    for (int j = 0; j < model_.num_tasks(); ++j) {
      if (!sample_.labels[j]) continue;
      const Vector phi = AugmentFeatures(psi_[j], z, model_.adapters()[j]);
      const Vector g =
          model_.second_layers()[j]->GradNllWrtInput(phi, Target(*sample_.labels[j]));
      Eigen::Index pos = psi_[j].size();
      for (int i = 0; i < model_.num_tasks(); ++i) {
        const Adapter& a = model_.adapters()[j][i];
        const int od = a.OutputDim(dims_[i]);
        a.Backward(g.segment(pos, od), grad.segment(offsets[i], dims_[i]));
        pos += od;
      }
    }
    return grad;
  }

 private:
  const CascadeModel& model_;
  const std::vector<Vector>& psi_;
  const Sample& sample_;
  std::vector<int> dims_;
};

// Surrogate targets. Multinomial scores are defined up to an additive
// constant, so multi-dimensional targets are centered.
Vector Centered(Vector v) {
  if (v.size() > 1) v.array() -= v.mean();
  return v;
}

Vector SurrogateEncoding(const TaskSpec& spec, const Label& label, int dim, double margin) {
  return Centered(EncodeLabel(spec, label, dim, margin));
}

// Linear map from the flattened latents to the appended block of Phi_j.
Matrix LatentSelection(const CascadeModel& model, TaskId j) {
  const std::vector<int> dims = model.latent_dims();
  Eigen::Index total = 0;
  for (int d : dims) total += d;
  Eigen::Index rows = model.second_layer_input_dim(j) - model.specs()[j - 1].feature_dim;
  Matrix s = Matrix::Zero(rows, total);
  Eigen::Index col = 0;
  Eigen::Index row = 0;
  for (int i = 0; i < model.num_tasks(); ++i) {
    const Adapter& a = model.adapters()[j - 1][i];
    const int od = a.OutputDim(dims[i]);
    for (int k = 0; k < dims[i]; ++k) {
      Vector e = Vector::Zero(dims[i]);
      e[k] = 1.0;
      s.block(row, col + k, od, 1) = a.Apply(e);
    }
    row += od;
    col += dims[i];
  }
  return s;
}

double SurrogateValue(const CascadeModel& model, std::span<const SurrogateModel> surrogates,
                      const std::vector<Vector>& psi, const Sample& sample,
                      std::span<const Vector> z, std::span<const Vector> z_hat, double margin) {
  double total = 0;
  for (int i = 0; i < model.num_tasks(); ++i) total += (z[i] - z_hat[i]).squaredNorm();
  for (int j = 0; j < model.num_tasks(); ++j) {
    if (!sample.labels[j]) continue;
    const SurrogateModel& s = surrogates[j];
    const Vector phi = AugmentFeatures(psi[j], z, model.adapters()[j]);
    const Vector t = SurrogateEncoding(model.specs()[j], *sample.labels[j],
                                       static_cast<int>(s.alpha.rows()), margin);
    total += (t - s.Predict(phi)).squaredNorm();
  }
  return total;
}

void CheckSurrogates(const CascadeModel& model, std::span<const SurrogateModel> surrogates) {
  if (static_cast<int>(surrogates.size()) != model.num_tasks()) {
    Fail(ErrorCode::kContract, "surrogate feedback needs one surrogate per task");
  }
  for (int j = 0; j < model.num_tasks(); ++j) {
    if (surrogates[j].alpha.cols() != model.second_layer_input_dim(j + 1) + 1) {
      Fail(ErrorCode::kContract, "surrogate of task " + std::to_string(j + 1) +
                                     " does not match the second-layer input");
    }
  }
}

std::vector<double> LabeledMetric(const CascadeModel& model, const MultiTaskDataset& data,
                                  TaskId k) {
  std::vector<Label> truth;
  std::vector<Vector> scores;
  for (std::size_t r : data.partition_rows(k)) {
    truth.push_back(data[r].label(k));
    scores.push_back(Predict(model, data[r])[k - 1].scores);
  }
  return {MetricValue(model.specs()[k - 1], truth, scores)};
}

bool SameVector(std::span<const double> a, std::span<const double> b, double tol) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::abs(a[i] - b[i]) > tol) return false;
  }
  return true;
}

}  // namespace

const char* FeedbackModeName(FeedbackMode mode) {
  return mode == FeedbackMode::kExact ? "exact" : "surrogate";
}

FeedbackMode ParseFeedbackMode(const std::string& name) {
  if (name == "exact") return FeedbackMode::kExact;
  if (name == "surrogate") return FeedbackMode::kSurrogate;
  Fail(ErrorCode::kConfig, "unknown feedback mode '" + name + "' (exact|surrogate)");
}

BetaPolicy ParseBetaPolicy(const std::string& text) {
  if (text == "auto") return {};
  double value = 0;
  std::size_t used = 0;
  try {
    value = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != text.size() || !(value >= 0) || !std::isfinite(value)) {
    Fail(ErrorCode::kConfig, "beta policy must be 'auto' or a nonnegative number, got '" + text + "'");
  }
  return {false, value};
}

void ValidatePi(std::span<const double> pi, int num_tasks) {
  if (static_cast<int>(pi.size()) != num_tasks) {
    Fail(ErrorCode::kConfig, "pi needs one entry per task");
  }
  double sum = 0;
  for (double p : pi) {
    if (!(p >= 0) || !std::isfinite(p)) Fail(ErrorCode::kConfig, "pi entries must be nonnegative");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) Fail(ErrorCode::kConfig, "pi must sum to 1");
}

void ValidateFeedbackConfig(const FeedbackConfig& config, int num_tasks) {
  if (config.max_outer_iters < 0) Fail(ErrorCode::kConfig, "max_outer_iters must be nonnegative");
  if (config.threads < 1) Fail(ErrorCode::kConfig, "threads must be positive");
  if (config.folds < 2) Fail(ErrorCode::kConfig, "folds must be at least 2");
  if (!(config.tol >= 0) || !(config.plateau_tol >= 0)) {
    Fail(ErrorCode::kConfig, "convergence tolerances must be nonnegative");
  }
  if (!(config.margin > 0) || !std::isfinite(config.margin)) {
    Fail(ErrorCode::kConfig, "label margin must be positive");
  }
  if (!config.beta.automatic && !(config.beta.value >= 0)) {
    Fail(ErrorCode::kConfig, "beta must be nonnegative");
  }
  ValidateDescentConfig(config.descent);
  const Instantiation& inst = config.instantiation;
  if (inst.kind != InstantiationKind::kUnified && (inst.target < 1 || inst.target > num_tasks)) {
    Fail(ErrorCode::kConfig, "instantiation target task " + std::to_string(inst.target) +
                                 " out of range");
  }
  if (!config.pi.empty()) ValidatePi(config.pi, num_tasks);
  for (const auto& point : config.pi_grid) ValidatePi(point, num_tasks);
}

CascadeSetup CascadeSetup::Default(std::span<const TaskSpec> specs, double l2_penalty) {
  CascadeSetup setup;
  for (const TaskSpec& spec : specs) {
    setup.first_layer.push_back(
        std::make_shared<LinearFactory>(ClassifierKind::kRidgeRegression, l2_penalty));
    setup.second_layer.push_back(std::make_shared<LinearFactory>(DefaultKind(spec), l2_penalty));
  }
  setup.adapters = IdentityAdapters(static_cast<int>(specs.size()));
  return setup;
}

void TrainingTrace::WriteCsv(std::ostream& out, std::span<const TaskSpec> specs,
                             bool with_seconds) const {
  out << "iteration,objective_after_feedback,objective";
  for (const TaskSpec& spec : specs) out << ",task" << spec.id << '_' << MetricName(spec.metric);
  out << ",failed_samples";
  if (with_seconds) out << ",seconds";
  out << '\n';
  for (const TraceRow& row : rows) {
    out << row.iteration << ',' << FormatDouble(row.objective_after_feedback) << ','
        << FormatDouble(row.objective);
    for (double m : row.metrics) out << ',' << FormatDouble(m);
    out << ',' << row.failed_samples;
    if (with_seconds) out << ',' << FormatDouble(row.seconds);
    out << '\n';
  }
}

Vector EncodeLabel(const TaskSpec& spec, const Label& label, int dim, double margin) {
  ValidateLabel(spec, label);
  if (spec.categorical()) return EncodeClass(label.class_index(), dim, margin);
  if (dim != 1) Fail(ErrorCode::kContract, "regression latents are scalars");
  return Vector::Constant(1, label.value());
}

LatentState InitializeLatents(const MultiTaskDataset& data, std::span<const int> latent_dims,
                              double margin) {
  if (static_cast<int>(latent_dims.size()) != data.num_tasks()) {
    Fail(ErrorCode::kContract, "one latent dimension per task is required");
  }
  std::vector<SampleId> ids;
  for (const Sample& s : data.samples()) ids.push_back(s.id);
  LatentState z(std::move(ids), data.num_tasks());
  for (std::size_t r = 0; r < data.size(); ++r) {
    for (TaskId t = 1; t <= data.num_tasks(); ++t) {
      if (data[r].has_label(t)) {
        z.set(r, t, EncodeLabel(data.spec(t), data[r].label(t), latent_dims[t - 1], margin));
      }
    }
  }
  return z;
}

LatentState InitializeLatents(const MultiTaskDataset& data) {
  const CascadeSetup setup = CascadeSetup::Default(data.specs());
  return InitializeLatents(data, SetupLatentDims(data, setup));
}

std::vector<double> UnifiedPi(std::span<const std::size_t> sizes) {
  // pi_j = prod_{i != j} |Gamma_i| / sum_k prod_{i != k} |Gamma_i|, which is
  // exact in floating point for moderate sizes.
  std::vector<double> q(sizes.size(), 1.0);
  for (std::size_t j = 0; j < sizes.size(); ++j) {
    if (sizes[j] == 0) {
      Fail(ErrorCode::kEmptyFit, "task " + std::to_string(j + 1) + " has no labeled samples");
    }
    for (std::size_t i = 0; i < sizes.size(); ++i) {
      if (i != j) q[j] *= static_cast<double>(sizes[i]);
    }
  }
  double total = 0;
  for (double v : q) total += v;
  for (double& v : q) v /= total;
  return q;
}

std::vector<double> UnifiedPi(const MultiTaskDataset& data) {
  std::vector<std::size_t> sizes;
  for (TaskId t = 1; t <= data.num_tasks(); ++t) sizes.push_back(data.partition_rows(t).size());
  return UnifiedPi(sizes);
}

std::vector<double> OneGoalPi(int num_tasks, TaskId k) {
  if (k < 1 || k > num_tasks) Fail(ErrorCode::kConfig, "one-goal task out of range");
  std::vector<double> pi(num_tasks, 0.0);
  pi[k - 1] = 1.0;
  return pi;
}

std::vector<double> ResolvePi(const MultiTaskDataset& train, const CascadeSetup& setup,
                              const FeedbackConfig& config) {
  const int n = train.num_tasks();
  const Instantiation& inst = config.instantiation;
  if (!config.pi.empty()) {
    ValidatePi(config.pi, n);
    if (inst.kind == InstantiationKind::kOneGoal && config.pi != OneGoalPi(n, inst.target)) {
      Fail(ErrorCode::kConfig, "one-goal instantiation fixes pi to the indicator of its task");
    }
    return config.pi;
  }
  switch (inst.kind) {
    case InstantiationKind::kUnified:
      return UnifiedPi(train);
    case InstantiationKind::kOneGoal:
      return OneGoalPi(n, inst.target);
    case InstantiationKind::kTargetSpecific: {
      const auto grid = config.pi_grid.empty() ? DefaultPiGrid(train, inst.target) : config.pi_grid;
      return SelectPiTargetSpecific(train, inst.target, grid, config.folds, setup, config).pi;
    }
  }
  return UnifiedPi(train);
}

std::vector<double> SampleWeights(const MultiTaskDataset& data, std::span<const double> pi) {
  if (static_cast<int>(pi.size()) != data.num_tasks()) {
    Fail(ErrorCode::kContract, "pi needs one entry per task");
  }
  std::vector<double> r(data.size(), 0.0);
  double total = 0;
  for (std::size_t s = 0; s < data.size(); ++s) {
    for (TaskId t = 1; t <= data.num_tasks(); ++t) {
      if (data[s].has_label(t)) r[s] = std::max(r[s], pi[t - 1]);
    }
    total += r[s];
  }
  if (!(total > 0)) {
    Fail(ErrorCode::kEmptyFit, "no training sample is labeled for a task with positive importance");
  }
  const double scale = static_cast<double>(data.size()) / total;
  for (double& w : r) w *= scale;
  return r;
}

CascadeModel InitialFeedForward(const MultiTaskDataset& train, LatentState& latents,
                                const CascadeSetup& setup, const FeedbackConfig& config) {
  const int n = train.num_tasks();
  CheckSetup(setup, n);
  if (latents.num_rows() != train.size() || latents.num_tasks() != n) {
    Fail(ErrorCode::kContract, "latent state does not match the training set");
  }
  Standardizer st = Standardizer::Fit(train);
  const Rows psi = StandardizedFeatures(st, train, config.threads);

  std::vector<CascadeModel::ClassifierPtr> theta(n);
  ParallelFor(n, config.threads, [&](std::size_t t) {
    const TaskId id = static_cast<TaskId>(t + 1);
    const TaskSpec& spec = train.spec(id);
    std::vector<Vector> inputs;
    std::vector<Target> targets;
    for (std::size_t r = 0; r < train.size(); ++r) {
      if (!latents.has(r, id)) continue;
      inputs.push_back(psi[r][t]);
      targets.push_back(Threshold(spec, latents.at(r, id)));
    }
    std::vector<double> weights(inputs.size(), 1.0);
    theta[t] = LearnOne(*setup.first_layer[t], std::move(inputs), std::move(targets),
                        std::move(weights), setup.first_layer[t]->LatentDim(spec), nullptr,
                        LearnSeed(config.seed, 0, id), 0, id);
  });

  std::vector<SampleId> ids;
  for (const Sample& s : train.samples()) ids.push_back(s.id);
  LatentState z_hat(std::move(ids), n);
  std::vector<std::vector<Vector>> rows(train.size());
  ParallelFor(train.size(), config.threads, [&](std::size_t r) {
    for (int t = 0; t < n; ++t) rows[r].push_back(theta[t]->Infer(psi[r][t]));
  });
  for (std::size_t r = 0; r < train.size(); ++r) {
    for (int t = 0; t < n; ++t) z_hat.set(r, t + 1, rows[r][t]);
  }

  std::vector<CascadeModel::ClassifierPtr> omega(n);
  ParallelFor(n, config.threads, [&](std::size_t t) {
    const TaskId id = static_cast<TaskId>(t + 1);
    const TaskSpec& spec = train.spec(id);
    std::vector<Vector> inputs;
    std::vector<Target> targets;
    for (std::size_t r : train.partition_rows(id)) {
      inputs.push_back(AugmentFeatures(psi[r][t], rows[r], setup.adapters[t]));
      targets.push_back(train[r].label(id));
    }
    std::vector<double> weights(inputs.size(), 1.0);
    omega[t] = LearnOne(*setup.second_layer[t], std::move(inputs), std::move(targets),
                        std::move(weights), setup.second_layer[t]->LatentDim(spec), nullptr,
                        LearnSeed(config.seed, 1, id), 1, id);
  });
  latents = std::move(z_hat);
  return CascadeModel(train.specs(), std::move(theta), std::move(omega), setup.adapters,
                      std::move(st));
}

CascadeModel FeedForwardStep(const MultiTaskDataset& train, const LatentState& latents,
                             std::span<const double> pi, const CascadeSetup& setup,
                             const FeedbackConfig& config, const CascadeModel* warm_start) {
  const int n = train.num_tasks();
  CheckSetup(setup, n);
  if (latents.num_rows() != train.size() || latents.num_tasks() != n) {
    Fail(ErrorCode::kContract, "latent state does not match the training set");
  }
  Standardizer st = Standardizer::Fit(train);
  const Rows psi = StandardizedFeatures(st, train, config.threads);
  const std::vector<double> weights = SampleWeights(train, pi);

  std::vector<CascadeModel::ClassifierPtr> theta(n);
  ParallelFor(n, config.threads, [&](std::size_t job) {
    const int t = static_cast<int>(job);
    const TaskId id = t + 1;
    const TaskSpec& spec = train.spec(id);
    const ClassifierFactory& f = *setup.first_layer[t];
    std::vector<Vector> inputs;
    std::vector<Target> targets;
    std::vector<double> w;
    for (std::size_t r = 0; r < train.size(); ++r) {
      if (!latents.has(r, id) || weights[r] == 0.0) continue;
      const Vector& z = latents.at(r, id);
      inputs.push_back(psi[r][t]);
      if (f.accepts_latent_targets() || !spec.categorical()) {
        targets.push_back(z);
      } else {
        targets.push_back(Threshold(spec, z));
      }
      w.push_back(weights[r]);
    }
    theta[t] = LearnOne(f, std::move(inputs), std::move(targets), std::move(w), f.LatentDim(spec),
                        warm_start ? &warm_start->first_layer(id) : nullptr,
                        LearnSeed(config.seed, 0, id), 0, id);
  });

  // Exact mode refits the second layer on the latents, so both half-steps
  // decrease the same objective. Surrogate mode refits it on the new
  // first-layer outputs, the inputs it sees at prediction time.
  const bool on_outputs = config.mode == FeedbackMode::kSurrogate;
  Rows z_hat;
  if (on_outputs) {
    z_hat.resize(train.size());
    ParallelFor(train.size(), config.threads, [&](std::size_t r) {
      for (int t = 0; t < n; ++t) z_hat[r].push_back(theta[t]->Infer(psi[r][t]));
    });
  }
  std::vector<CascadeModel::ClassifierPtr> omega(n);
  ParallelFor(n, config.threads, [&](std::size_t job) {
    const int t = static_cast<int>(job);
    const TaskId id = t + 1;
    const TaskSpec& spec = train.spec(id);
    const ClassifierFactory& f = *setup.second_layer[t];
    std::vector<Vector> inputs;
    std::vector<Target> targets;
    for (std::size_t r : train.partition_rows(id)) {
      inputs.push_back(on_outputs ? AugmentFeatures(psi[r][t], z_hat[r], setup.adapters[t])
                                  : AugmentFeatures(psi[r][t], latents.row(r), setup.adapters[t]));
      targets.push_back(train[r].label(id));
    }
    std::vector<double> w(inputs.size(), 1.0);
    omega[t] = LearnOne(f, std::move(inputs), std::move(targets), std::move(w), f.LatentDim(spec),
                        warm_start ? &warm_start->second_layer(id) : nullptr,
                        LearnSeed(config.seed, 1, id), 1, id);
  });
  return CascadeModel(train.specs(), std::move(theta), std::move(omega), setup.adapters,
                      std::move(st));
}

Vector FlattenLatents(std::span<const Vector> z) {
  Eigen::Index total = 0;
  for (const Vector& v : z) total += v.size();
  Vector flat(total);
  Eigen::Index off = 0;
  for (const Vector& v : z) {
    flat.segment(off, v.size()) = v;
    off += v.size();
  }
  return flat;
}

std::vector<Vector> SplitLatents(const Vector& flat, std::span<const int> dims) {
  std::vector<Vector> out;
  Eigen::Index off = 0;
  for (int d : dims) {
    if (off + d > flat.size()) Fail(ErrorCode::kContract, "flattened latents are too short");
    out.push_back(flat.segment(off, d));
    off += d;
  }
  if (off != flat.size()) Fail(ErrorCode::kContract, "flattened latents are too long");
  return out;
}

double FeedbackObjective(const CascadeModel& model, const Sample& sample,
                         std::span<const Vector> z) {
  RequireLikelihood(model);
  const std::vector<Vector> psi = model.standardizer().Apply(sample);
  return SampleObjective(model, psi, sample).Value(FlattenLatents(z));
}

Vector FeedbackGradient(const CascadeModel& model, const Sample& sample, const Vector& z_flat) {
  RequireLikelihood(model);
  const std::vector<Vector> psi = model.standardizer().Apply(sample);
  return SampleObjective(model, psi, sample).Gradient(z_flat);
}

std::vector<SurrogateModel> FitSurrogates(const CascadeModel& model,
                                          const MultiTaskDataset& train,
                                          const FeedbackConfig& config) {
  const Rows psi = StandardizedFeatures(model.standardizer(), train, config.threads);
  std::vector<std::vector<Vector>> z_hat(train.size());
  ParallelFor(train.size(), config.threads,
              [&](std::size_t r) { z_hat[r] = Predictions(model, psi[r]); });
  std::vector<SurrogateModel> out(model.num_tasks());
  ParallelFor(model.num_tasks(), config.threads, [&](std::size_t t) {
    const TaskId id = static_cast<TaskId>(t + 1);
    const Classifier& omega = model.second_layer(id);
    std::vector<std::size_t> rows;
    if (config.surrogate_target == SurrogateTarget::kModelOutput) {
      for (std::size_t r = 0; r < train.size(); ++r) rows.push_back(r);
    } else {
      rows = train.partition_rows(id);
    }
    if (rows.empty()) {
      Fail(ErrorCode::kEmptyFit, "surrogate of task " + std::to_string(id) + ": no rows");
    }
    Matrix design(rows.size(), omega.input_dim());
    Matrix targets(rows.size(), omega.output_dim());
    for (std::size_t k = 0; k < rows.size(); ++k) {
      const std::size_t r = rows[k];
      const Vector phi = AugmentFeatures(psi[r][t], z_hat[r], model.adapters()[t]);
      design.row(static_cast<Eigen::Index>(k)) = phi.transpose();
      const Vector y = config.surrogate_target == SurrogateTarget::kModelOutput
                           ? Centered(omega.Infer(phi))
                           : SurrogateEncoding(model.specs()[t], train[r].label(id),
                                               omega.output_dim(), config.margin);
      targets.row(static_cast<Eigen::Index>(k)) = y.transpose();
    }
    const double beta = config.beta.automatic ? SelectBeta(design, targets) : config.beta.value;
    out[t] = LassoFit(design, targets, beta);
    out[t].target_task = id;
  });
  return out;
}

double SurrogateObjective(const CascadeModel& model, std::span<const SurrogateModel> surrogates,
                          const Sample& sample, std::span<const Vector> z, double margin) {
  CheckSurrogates(model, surrogates);
  const std::vector<Vector> psi = model.standardizer().Apply(sample);
  const std::vector<Vector> z_hat = Predictions(model, psi);
  return SurrogateValue(model, surrogates, psi, sample, z, z_hat, margin);
}

LatentState FeedbackStep(const CascadeModel& model, const MultiTaskDataset& train,
                         const LatentState& incumbent, const FeedbackConfig& config,
                         std::span<const SurrogateModel> surrogates, FeedbackStats* stats) {
  const bool exact = config.mode == FeedbackMode::kExact;
  if (exact) {
    RequireLikelihood(model);
  } else {
    CheckSurrogates(model, surrogates);
  }
  const bool use_incumbent = incumbent.num_rows() == train.size() && incumbent.complete();
  const std::vector<int> dims = model.latent_dims();
  const Rows psi = StandardizedFeatures(model.standardizer(), train, config.threads);

  // Surrogate feedback is a quadratic in the flattened latents; precompute
  // the latent-to-Phi_j maps once.
  std::vector<Matrix> select;
  if (!exact) {
    for (TaskId j = 1; j <= model.num_tasks(); ++j) select.push_back(LatentSelection(model, j));
  }

  std::vector<Vector> solution(train.size());
  std::vector<double> values(train.size(), 0.0);
  std::vector<char> failed(train.size(), 0);
  ParallelFor(train.size(), config.threads, [&](std::size_t r) {
    const Sample& sample = train[r];
    const std::vector<Vector> z_hat = Predictions(model, psi[r]);
    const Vector start = FlattenLatents(z_hat);
    if (exact) {
      const SampleObjective obj(model, psi[r], sample);
      const double f0 = obj.Value(start);
      try {
        const auto f = [&](const Vector& x) { return obj.Value(x); };
        const auto g = [&](const Vector& x) { return obj.Gradient(x); };
        DescentResult best = Minimize(f, g, start, config.descent);
        if (use_incumbent) {
          const Vector inc = FlattenLatents(incumbent.row(r));
          if (inc != start) {
            DescentResult other = Minimize(f, g, inc, config.descent);
            if (other.value < best.value) best = std::move(other);
          }
        }
        if (best.value <= f0) {
          solution[r] = std::move(best.x);
          values[r] = best.value;
        } else {
          solution[r] = start;
          values[r] = f0;
        }
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kNumeric) throw;
        failed[r] = 1;
        solution[r] = start;
        values[r] = f0;
      }
      return;
    }
    // Normal equations of |Z - Zhat|^2 + sum_j |c_j - A_j Z|^2.
    const Eigen::Index dim = start.size();
    Matrix lhs = Matrix::Identity(dim, dim);
    Vector rhs = start;
    for (int j = 0; j < model.num_tasks(); ++j) {
      if (!sample.labels[j]) continue;
      const SurrogateModel& s = surrogates[j];
      const Eigen::Index p = psi[r][j].size();
      const Eigen::Index q = select[j].rows();
      const Matrix a = s.alpha.middleCols(p, q) * select[j];
      const Vector t = SurrogateEncoding(model.specs()[j], *sample.labels[j],
                                         static_cast<int>(s.alpha.rows()), config.margin);
      const Vector c = t - s.alpha.leftCols(p) * psi[r][j] - s.alpha.col(s.alpha.cols() - 1);
      lhs.noalias() += a.transpose() * a;
      rhs.noalias() += a.transpose() * c;
    }
    Vector z = lhs.ldlt().solve(rhs);
    const double f0 = SurrogateValue(model, surrogates, psi[r], sample, z_hat, z_hat, config.margin);
    if (!z.allFinite()) {
      failed[r] = 1;
      solution[r] = start;
      values[r] = f0;
      return;
    }
    const double f1 = SurrogateValue(model, surrogates, psi[r], sample, SplitLatents(z, dims),
                                     z_hat, config.margin);
    if (f1 <= f0) {
      solution[r] = std::move(z);
      values[r] = f1;
    } else {
      solution[r] = start;
      values[r] = f0;
    }
  });

  std::vector<SampleId> ids;
  for (const Sample& s : train.samples()) ids.push_back(s.id);
  LatentState out(std::move(ids), model.num_tasks());
  FeedbackStats local;
  for (std::size_t r = 0; r < train.size(); ++r) {
    const std::vector<Vector> z = SplitLatents(solution[r], dims);
    for (int t = 0; t < model.num_tasks(); ++t) out.set(r, t + 1, z[t]);
    local.objective += values[r];
    if (failed[r]) {
      ++local.failed_samples;
      local.failed_ids.push_back(train[r].id);
    }
  }
  if (stats != nullptr) *stats = std::move(local);
  return out;
}

double JointObjective(const CascadeModel& model, const MultiTaskDataset& train,
                      const LatentState& latents, int threads) {
  RequireLikelihood(model);
  if (latents.num_rows() != train.size()) {
    Fail(ErrorCode::kContract, "latent state does not match the training set");
  }
  const Rows psi = StandardizedFeatures(model.standardizer(), train, threads);
  std::vector<double> values(train.size());
  ParallelFor(train.size(), threads, [&](std::size_t r) {
    values[r] = SampleObjective(model, psi[r], train[r]).Value(FlattenLatents(latents.row(r)));
  });
  double total = 0;
  for (double v : values) total += v;
  return total + TotalPenalty(model);
}

namespace {

double SurrogateTotal(const CascadeModel& model, std::span<const SurrogateModel> surrogates,
                      const MultiTaskDataset& train, const LatentState& latents,
                      const FeedbackConfig& config) {
  const Rows psi = StandardizedFeatures(model.standardizer(), train, config.threads);
  std::vector<double> values(train.size());
  ParallelFor(train.size(), config.threads, [&](std::size_t r) {
    values[r] = SurrogateValue(model, surrogates, psi[r], train[r], latents.row(r),
                               Predictions(model, psi[r]), config.margin);
  });
  double total = 0;
  for (double v : values) total += v;
  return total;
}

bool Plateau(std::span<const double> prev, std::span<const double> cur, double tol) {
  for (std::size_t t = 0; t < cur.size(); ++t) {
    if (std::abs(cur[t] - prev[t]) > tol * std::max(std::abs(prev[t]), 1e-12)) return false;
  }
  return true;
}

}  // namespace

TrainResult TrainFeccm(const MultiTaskDataset& train, const CascadeSetup& setup,
                       const FeedbackConfig& config, const MultiTaskDataset* holdout) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };
  ValidateFeedbackConfig(config, train.num_tasks());
  CheckSetup(setup, train.num_tasks());
  const std::vector<double> pi = ResolvePi(train, setup, config);
  const bool exact = config.mode == FeedbackMode::kExact;
  const MultiTaskDataset& eval = holdout != nullptr ? *holdout : train;

  LatentState latents = InitializeLatents(train, SetupLatentDims(train, setup), config.margin);
  CascadeModel model = InitialFeedForward(train, latents, setup, config);

  TrainingTrace trace;
  trace.pi = pi;
  std::vector<SurrogateModel> surrogates;
  if (!exact) surrogates = FitSurrogates(model, train, config);
  const auto objective = [&] {
    return exact ? JointObjective(model, train, latents, config.threads)
                 : SurrogateTotal(model, surrogates, train, latents, config);
  };
  TraceRow row0;
  row0.objective = objective();
  row0.objective_after_feedback = row0.objective;
  row0.metrics = TaskMetrics(model, eval);
  row0.seconds = elapsed();
  trace.rows.push_back(row0);

  for (int it = 1; it <= config.max_outer_iters; ++it) {
    TraceRow row;
    row.iteration = it;
    FeedbackStats stats;
    latents = FeedbackStep(model, train, latents, config, surrogates, &stats);
    row.objective_after_feedback = exact ? stats.objective + TotalPenalty(model) : stats.objective;
    row.failed_samples = stats.failed_samples;
    if (stats.failed_samples > 0) {
      std::cerr << "feccm: warning: feedback failed on " << stats.failed_samples
                << " sample(s); their latents stay at the first-layer outputs\n";
    }
    model = FeedForwardStep(train, latents, pi, setup, config, &model);
    if (!exact) surrogates = FitSurrogates(model, train, config);
    row.objective = objective();
    row.metrics = TaskMetrics(model, eval);
    row.seconds = elapsed();
    const TraceRow& prev = trace.rows.back();
    const bool done =
        exact ? std::abs(prev.objective - row.objective) <=
                    config.tol * std::max(std::abs(prev.objective), 1e-12)
              : Plateau(prev.metrics, row.metrics, config.plateau_tol);
    trace.rows.push_back(std::move(row));
    if (done) {
      trace.converged = true;
      break;
    }
  }
  return TrainResult{std::move(model), std::move(trace)};
}

TrainResult TrainFeccm(const MultiTaskDataset& train, const FeedbackConfig& config,
                       const MultiTaskDataset* holdout) {
  return TrainFeccm(train, CascadeSetup::Default(train.specs()), config, holdout);
}

CascadeModel TrainCcm(const MultiTaskDataset& train, const CascadeSetup& setup,
                      const FeedbackConfig& config) {
  ValidateFeedbackConfig(config, train.num_tasks());
  CheckSetup(setup, train.num_tasks());
  LatentState latents = InitializeLatents(train, SetupLatentDims(train, setup), config.margin);
  return InitialFeedForward(train, latents, setup, config);
}

CascadeModel TrainCcm(const MultiTaskDataset& train, const FeedbackConfig& config) {
  return TrainCcm(train, CascadeSetup::Default(train.specs()), config);
}

std::vector<std::vector<double>> DefaultPiGrid(const MultiTaskDataset& data, TaskId k) {
  const int n = data.num_tasks();
  const std::vector<double> unified = UnifiedPi(data);
  const std::vector<double> ek = OneGoalPi(n, k);
  std::vector<double> mid(n);
  for (int t = 0; t < n; ++t) mid[t] = 0.5 * unified[t] + 0.5 * ek[t];
  std::vector<std::vector<double>> grid{unified, ek, mid};
  for (TaskId t = 1; t <= n; ++t) grid.push_back(OneGoalPi(n, t));
  std::vector<std::vector<double>> out;
  for (auto& p : grid) {
    if (std::find(out.begin(), out.end(), p) == out.end()) out.push_back(std::move(p));
  }
  return out;
}

PiSelection SelectPiTargetSpecific(const MultiTaskDataset& train, TaskId k,
                                   std::span<const std::vector<double>> grid, int folds,
                                   const CascadeSetup& setup, const FeedbackConfig& config) {
  if (grid.empty()) Fail(ErrorCode::kContract, "target-specific selection needs a non-empty grid");
  if (k < 1 || k > train.num_tasks()) Fail(ErrorCode::kConfig, "target task out of range");
  if (folds < 2) Fail(ErrorCode::kConfig, "folds must be at least 2");
  for (const auto& point : grid) ValidatePi(point, train.num_tasks());
  const std::vector<int> fold = FoldAssignment(train, folds, config.seed);

  FeedbackConfig inner = config;
  inner.instantiation = Instantiation::Unified();
  inner.pi_grid.clear();

  PiSelection result;
  for (const auto& point : grid) {
    inner.pi = point;
    double sum = 0;
    for (int f = 0; f < folds; ++f) {
      std::vector<std::size_t> fit_rows;
      std::vector<std::size_t> held_rows;
      for (std::size_t r = 0; r < train.size(); ++r) (fold[r] == f ? held_rows : fit_rows).push_back(r);
      const MultiTaskDataset fit = train.Subset(fit_rows);
      const MultiTaskDataset held = train.Subset(held_rows);
      const TrainResult trained = TrainFeccm(fit, setup, inner);
      sum += LabeledMetric(trained.model, held, k)[0];
    }
    result.scores.push_back(sum / folds);
  }

  const bool higher = HigherIsBetter(train.spec(k).metric);
  double best = result.scores[0];
  for (double s : result.scores) best = higher ? std::max(best, s) : std::min(best, s);
  const std::vector<double> unified = UnifiedPi(train);
  std::optional<std::size_t> pick;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    if (result.scores[g] != best) continue;
    if (SameVector(grid[g], unified, 1e-12)) {
      pick = g;
      break;
    }
    if (!pick || grid[g] < grid[*pick]) pick = g;
  }
  result.pi = grid[*pick];
  return result;
}

}  // namespace feccm
