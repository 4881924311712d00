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

#include "feccm/cascade.hpp"

#include <algorithm>
#include <cmath>

#include "feccm/errors.hpp"

namespace feccm {

Vector Adapter::Apply(const Vector& z) const {
  switch (mode_) {
    case Mode::kIdentity: return z;
    case Mode::kDrop: return Vector();
    case Mode::kSelect: {
      Vector out(indices_.size());
      for (std::size_t k = 0; k < indices_.size(); ++k) {
        if (indices_[k] < 0 || indices_[k] >= z.size()) {
          Fail(ErrorCode::kContract, "adapter selects a coordinate outside the latent vector");
        }
        out[static_cast<Eigen::Index>(k)] = z[indices_[k]];
      }
      return out;
    }
  }
  return z;
}

int Adapter::OutputDim(int latent_dim) const {
  switch (mode_) {
    case Mode::kIdentity: return latent_dim;
    case Mode::kDrop: return 0;
    case Mode::kSelect: return static_cast<int>(indices_.size());
  }
  return latent_dim;
}

void Adapter::Backward(const Vector& grad_out, Eigen::Ref<Vector> grad_z) const {
  switch (mode_) {
    case Mode::kIdentity:
      grad_z += grad_out;
      break;
    case Mode::kDrop:
      break;
    case Mode::kSelect:
      for (std::size_t k = 0; k < indices_.size(); ++k) {
        grad_z[indices_[k]] += grad_out[static_cast<Eigen::Index>(k)];
      }
      break;
  }
}

nlohmann::json Adapter::ToJson() const {
  switch (mode_) {
    case Mode::kIdentity: return "identity";
    case Mode::kDrop: return "drop";
    case Mode::kSelect: return nlohmann::json{{"select", indices_}};
  }
  return "identity";
}

Adapter Adapter::FromJson(const nlohmann::json& doc) {
  if (doc.is_string()) {
    const auto name = doc.get<std::string>();
    if (name == "identity") return Identity();
    if (name == "drop") return Drop();
    Fail(ErrorCode::kSchema, "unknown adapter '" + name + "'");
  }
  if (doc.is_object() && doc.contains("select")) {
    return Select(doc.at("select").get<std::vector<int>>());
  }
  Fail(ErrorCode::kSchema, "malformed adapter document");
}

AdapterTable IdentityAdapters(int num_tasks) {
  return AdapterTable(num_tasks, std::vector<Adapter>(num_tasks, Adapter::Identity()));
}

Standardizer Standardizer::Fit(const MultiTaskDataset& data) {
  Standardizer s;
  for (const TaskSpec& spec : data.specs()) {
    Vector mean = Vector::Zero(spec.feature_dim);
    Vector sq = Vector::Zero(spec.feature_dim);
    for (const Sample& sample : data.samples()) mean += sample.psi(spec.id);
    const double n = std::max<double>(1.0, static_cast<double>(data.size()));
    mean /= n;
    for (const Sample& sample : data.samples()) {
      sq += (sample.psi(spec.id) - mean).array().square().matrix();
    }
    Vector scale = (sq / n).array().sqrt();
    if (!mean.allFinite() || !scale.allFinite()) {
      Fail(ErrorCode::kNumeric, "feature statistics of task " + std::to_string(spec.id) + " overflow");
    }
    for (Eigen::Index k = 0; k < scale.size(); ++k) {
      if (!(scale[k] > 1e-12)) scale[k] = 1.0;
    }
    s.mean.push_back(std::move(mean));
    s.scale.push_back(std::move(scale));
  }
  return s;
}

Standardizer Standardizer::Identity(std::span<const TaskSpec> specs) {
  Standardizer s;
  for (const TaskSpec& spec : specs) {
    s.mean.push_back(Vector::Zero(spec.feature_dim));
    s.scale.push_back(Vector::Ones(spec.feature_dim));
  }
  return s;
}

Vector Standardizer::Apply(TaskId task, const Vector& psi) const {
  const Vector& m = mean.at(task - 1);
  if (psi.size() != m.size()) {
    Fail(ErrorCode::kContract, "task " + std::to_string(task) + ": feature dimension mismatch");
  }
  return (psi - m).cwiseQuotient(scale[task - 1]);
}

std::vector<Vector> Standardizer::Apply(const Sample& sample) const {
  if (sample.features.size() != mean.size()) {
    Fail(ErrorCode::kContract, "sample " + std::to_string(sample.id) +
                                   " does not carry features for every task");
  }
  std::vector<Vector> out;
  out.reserve(mean.size());
  for (std::size_t t = 0; t < mean.size(); ++t) {
    out.push_back(Apply(static_cast<TaskId>(t + 1), sample.features[t]));
  }
  return out;
}

Vector AugmentFeatures(const Vector& psi_j, std::span<const Vector> z_all,
                       std::span<const Adapter> adapters) {
  if (z_all.size() < adapters.size()) {
    Fail(ErrorCode::kContract, "augment: missing first-layer output of task " +
                                   std::to_string(z_all.size() + 1));
  }
  if (adapters.size() != z_all.size()) {
    Fail(ErrorCode::kContract, "augment: one adapter per producer task is required");
  }
  Eigen::Index total = psi_j.size();
  std::vector<Vector> parts;
  parts.reserve(z_all.size());
  for (std::size_t i = 0; i < z_all.size(); ++i) {
    if (z_all[i].size() == 0 && adapters[i].OutputDim(1) != 0) {
      Fail(ErrorCode::kContract, "augment: missing first-layer output of task " + std::to_string(i + 1));
    }
    parts.push_back(adapters[i].Apply(z_all[i]));
    total += parts.back().size();
  }
  Vector phi(total);
  phi.head(psi_j.size()) = psi_j;
  Eigen::Index offset = psi_j.size();
  for (const Vector& p : parts) {
    phi.segment(offset, p.size()) = p;
    offset += p.size();
  }
  return phi;
}

CascadeModel::CascadeModel(std::vector<TaskSpec> specs, std::vector<ClassifierPtr> first_layer,
                           std::vector<ClassifierPtr> second_layer, AdapterTable adapters,
                           Standardizer standardizer)
    : specs_(std::move(specs)),
      theta_(std::move(first_layer)),
      omega_(std::move(second_layer)),
      adapters_(std::move(adapters)),
      standardizer_(std::move(standardizer)) {
  ValidateSpecs(specs_);
  const std::size_t n = specs_.size();
  if (theta_.size() != n || omega_.size() != n) {
    Fail(ErrorCode::kContract, "cascade needs one classifier per task on each layer");
  }
  if (adapters_.size() != n) Fail(ErrorCode::kContract, "adapter table must have one row per task");
  for (const auto& row : adapters_) {
    if (row.size() != n) Fail(ErrorCode::kContract, "adapter table must be square");
  }
  if (standardizer_.mean.size() != n || standardizer_.scale.size() != n) {
    Fail(ErrorCode::kContract, "standardizer must cover every task");
  }
  for (std::size_t t = 0; t < n; ++t) {
    const TaskId id = static_cast<TaskId>(t + 1);
    if (!theta_[t] || !omega_[t]) Fail(ErrorCode::kContract, "missing classifier for task " + std::to_string(id));
    if (theta_[t]->input_dim() != specs_[t].feature_dim) {
      Fail(ErrorCode::kContract, "first-layer classifier of task " + std::to_string(id) +
                                     " has the wrong input dimension");
    }
    if (standardizer_.mean[t].size() != specs_[t].feature_dim ||
        standardizer_.scale[t].size() != specs_[t].feature_dim) {
      Fail(ErrorCode::kContract, "standardizer dimension mismatch for task " + std::to_string(id));
    }
  }
  for (std::size_t t = 0; t < n; ++t) {
    const TaskId id = static_cast<TaskId>(t + 1);
    if (omega_[t]->input_dim() != second_layer_input_dim(id)) {
      Fail(ErrorCode::kContract, "second-layer classifier of task " + std::to_string(id) +
                                     " expects " + std::to_string(omega_[t]->input_dim()) +
                                     " inputs, wiring provides " +
                                     std::to_string(second_layer_input_dim(id)));
    }
  }
}

std::vector<int> CascadeModel::latent_dims() const {
  std::vector<int> dims;
  for (const auto& c : theta_) dims.push_back(c->output_dim());
  return dims;
}

int CascadeModel::second_layer_input_dim(TaskId task) const {
  int dim = specs_[task - 1].feature_dim;
  for (int i = 0; i < num_tasks(); ++i) {
    dim += adapters_[task - 1][i].OutputDim(theta_[i]->output_dim());
  }
  return dim;
}

nlohmann::json CascadeModel::ToJson() const {
  nlohmann::json doc;
  doc["schema"] = kModelSchema;
  doc["specs"] = SpecsToJson(specs_);
  nlohmann::json theta = nlohmann::json::array();
  nlohmann::json omega = nlohmann::json::array();
  for (const auto& c : theta_) theta.push_back(c->ToJson());
  for (const auto& c : omega_) omega.push_back(c->ToJson());
  doc["first_layer"] = std::move(theta);
  doc["second_layer"] = std::move(omega);
  nlohmann::json adapters = nlohmann::json::array();
  for (const auto& row : adapters_) {
    nlohmann::json r = nlohmann::json::array();
    for (const Adapter& a : row) r.push_back(a.ToJson());
    adapters.push_back(std::move(r));
  }
  doc["adapters"] = std::move(adapters);
  nlohmann::json stats = nlohmann::json::array();
  for (std::size_t t = 0; t < standardizer_.mean.size(); ++t) {
    const Vector& m = standardizer_.mean[t];
    const Vector& s = standardizer_.scale[t];
    stats.push_back({{"mean", std::vector<double>(m.data(), m.data() + m.size())},
                     {"scale", std::vector<double>(s.data(), s.data() + s.size())}});
  }
  doc["standardization"] = std::move(stats);
  return doc;
}

CascadeModel CascadeModel::FromJson(const nlohmann::json& doc) {
  try {
    if (doc.value("schema", std::string()) != kModelSchema) {
      Fail(ErrorCode::kSchema, "not a cascade model document (schema tag '" +
                                   doc.value("schema", std::string()) + "')");
    }
    std::vector<TaskSpec> specs = SpecsFromJson(doc.at("specs"));
    std::vector<ClassifierPtr> theta;
    std::vector<ClassifierPtr> omega;
    for (const auto& c : doc.at("first_layer")) theta.push_back(ClassifierFromJson(c));
    for (const auto& c : doc.at("second_layer")) omega.push_back(ClassifierFromJson(c));
    AdapterTable adapters;
    for (const auto& row : doc.at("adapters")) {
      std::vector<Adapter> r;
      for (const auto& a : row) r.push_back(Adapter::FromJson(a));
      adapters.push_back(std::move(r));
    }
    Standardizer standardizer;
    for (const auto& s : doc.at("standardization")) {
      const auto m = s.at("mean").get<std::vector<double>>();
      const auto sc = s.at("scale").get<std::vector<double>>();
      standardizer.mean.push_back(Eigen::Map<const Vector>(m.data(), static_cast<Eigen::Index>(m.size())));
      standardizer.scale.push_back(Eigen::Map<const Vector>(sc.data(), static_cast<Eigen::Index>(sc.size())));
    }
    return CascadeModel(std::move(specs), std::move(theta), std::move(omega), std::move(adapters),
                        std::move(standardizer));
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorCode::kSchema, std::string("cascade model document: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kContract) Fail(ErrorCode::kSchema, e.what());
    throw;
  }
}

std::vector<Vector> InferFirstLayer(const CascadeModel& model, const Sample& sample) {
  const std::vector<Vector> psi = model.standardizer().Apply(sample);
  std::vector<Vector> z;
  z.reserve(psi.size());
  for (int t = 0; t < model.num_tasks(); ++t) {
    z.push_back(model.first_layers()[t]->Infer(psi[t]));
  }
  return z;
}

std::vector<TaskPrediction> Predict(const CascadeModel& model, const Sample& sample) {
  const std::vector<Vector> psi = model.standardizer().Apply(sample);
  std::vector<Vector> z;
  z.reserve(psi.size());
  for (int t = 0; t < model.num_tasks(); ++t) {
    z.push_back(model.first_layers()[t]->Infer(psi[t]));
  }
  std::vector<TaskPrediction> out;
  out.reserve(psi.size());
  for (int t = 0; t < model.num_tasks(); ++t) {
    const Vector phi = AugmentFeatures(psi[t], z, model.adapters()[t]);
    Vector scores = model.second_layers()[t]->Infer(phi);
    Label label = LabelFromScores(scores, model.specs()[t].kind);
    out.push_back({std::move(scores), label});
  }
  return out;
}

double MetricValue(const TaskSpec& spec, std::span<const Label> truth,
                   std::span<const Vector> scores) {
  if (truth.size() != scores.size()) Fail(ErrorCode::kContract, "metric inputs are not aligned");
  if (truth.empty()) {
    Fail(ErrorCode::kEmptyEval, "task " + std::to_string(spec.id) + " has no labeled samples");
  }
  if (spec.metric == Metric::kAveragePrecision) {
    const int k = spec.num_classes;
    std::vector<int> classes;
    if (k == 2) {
      classes.push_back(1);
    } else {
      for (int c = 0; c < k; ++c) {
        if (std::any_of(truth.begin(), truth.end(),
                        [&](const Label& l) { return l.class_index() == c; })) {
          classes.push_back(c);
        }
      }
    }
    double total = 0;
    for (int c : classes) {
      std::unique_ptr<bool[]> positive(new bool[truth.size()]);
      std::vector<double> s;
      for (std::size_t i = 0; i < truth.size(); ++i) {
        positive[i] = truth[i].class_index() == c;
        const Vector& v = scores[i];
        if (v.size() == 1) {
          s.push_back(v[0]);
        } else if (v.size() == 2) {
          s.push_back(v[1] - v[0]);
        } else {
          s.push_back(LogSoftmax(v)[c]);
        }
      }
      total += AveragePrecision(std::span<const bool>(positive.get(), truth.size()), s);
    }
    return classes.empty() ? 0.0 : total / static_cast<double>(classes.size());
  }
  std::vector<Label> predicted;
  predicted.reserve(scores.size());
  for (const Vector& s : scores) predicted.push_back(LabelFromScores(s, spec.kind));
  return spec.metric == Metric::kRmse ? Rmse(truth, predicted) : Accuracy(truth, predicted);
}

std::vector<double> TaskMetrics(const CascadeModel& model, const MultiTaskDataset& data) {
  std::vector<std::vector<Label>> truth(model.num_tasks());
  std::vector<std::vector<Vector>> scores(model.num_tasks());
  for (const Sample& sample : data.samples()) {
    if (sample.num_labels() == 0) continue;
    std::vector<TaskPrediction> pred = Predict(model, sample);
    for (TaskId t = 1; t <= model.num_tasks(); ++t) {
      if (!sample.has_label(t)) continue;
      truth[t - 1].push_back(sample.label(t));
      scores[t - 1].push_back(std::move(pred[t - 1].scores));
    }
  }
  std::vector<double> out;
  for (TaskId t = 1; t <= model.num_tasks(); ++t) {
    out.push_back(MetricValue(model.specs()[t - 1], truth[t - 1], scores[t - 1]));
  }
  return out;
}

LatentState::LatentState(std::vector<SampleId> ids, int num_tasks)
    : ids_(std::move(ids)), num_tasks_(num_tasks) {
  z_.assign(ids_.size(), std::vector<std::optional<Vector>>(num_tasks));
}

const Vector& LatentState::at(std::size_t row, TaskId task) const {
  const auto& z = z_.at(row).at(task - 1);
  if (!z) {
    Fail(ErrorCode::kContract, "no latent for sample " + std::to_string(ids_[row]) + ", task " +
                                   std::to_string(task));
  }
  return *z;
}

void LatentState::set(std::size_t row, TaskId task, Vector z) {
  if (!z.allFinite()) {
    Fail(ErrorCode::kNumeric, "non-finite latent for sample " + std::to_string(ids_[row]));
  }
  z_.at(row).at(task - 1) = std::move(z);
}

bool LatentState::complete() const {
  for (const auto& r : z_) {
    for (const auto& z : r) {
      if (!z) return false;
    }
  }
  return true;
}

std::vector<Vector> LatentState::row(std::size_t r) const {
  std::vector<Vector> out;
  for (TaskId t = 1; t <= num_tasks_; ++t) out.push_back(at(r, t));
  return out;
}

}  // namespace feccm
