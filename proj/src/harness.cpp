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

#include "feccm/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "feccm/errors.hpp"

namespace feccm {

namespace fs = std::filesystem;

namespace {

std::uint64_t Mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = a ^ (b + 0x9E3779B97F4A7C15ULL + (a << 6) + (a >> 2));
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

Matrix Gaussian(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double scale) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = normal(rng) * scale;
  }
  return m;
}

Vector GaussianVector(std::mt19937_64& rng, Eigen::Index n) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(n);
  for (Eigen::Index k = 0; k < n; ++k) v[k] = normal(rng);
  return v;
}

nlohmann::json StandardizerToJson(const Standardizer& st) {
  nlohmann::json stats = nlohmann::json::array();
  for (std::size_t t = 0; t < st.mean.size(); ++t) {
    const Vector& m = st.mean[t];
    const Vector& s = st.scale[t];
    stats.push_back({{"mean", std::vector<double>(m.data(), m.data() + m.size())},
                     {"scale", std::vector<double>(s.data(), s.data() + s.size())}});
  }
  return stats;
}

Standardizer StandardizerFromJson(const nlohmann::json& doc) {
  Standardizer st;
  for (const auto& s : doc) {
    const auto m = s.at("mean").get<std::vector<double>>();
    const auto sc = s.at("scale").get<std::vector<double>>();
    st.mean.push_back(Eigen::Map<const Vector>(m.data(), static_cast<Eigen::Index>(m.size())));
    st.scale.push_back(Eigen::Map<const Vector>(sc.data(), static_cast<Eigen::Index>(sc.size())));
  }
  return st;
}

// Linear-interpolated quantile of sorted values.
double Quantile(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

void EnsureDir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) Fail(ErrorCode::kIo, "cannot create directory '" + dir.string() + "': " + ec.message());
}

std::ofstream OpenOut(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) Fail(ErrorCode::kIo, "cannot write '" + path.string() + "'");
  return out;
}

}  // namespace

const char* CoverageName(Coverage coverage) {
  switch (coverage) {
    case Coverage::kDisjoint: return "disjoint";
    case Coverage::kFull: return "full";
    case Coverage::kMixed: return "mixed";
  }
  return "?";
}

Coverage ParseCoverage(const std::string& name) {
  if (name == "disjoint") return Coverage::kDisjoint;
  if (name == "full") return Coverage::kFull;
  if (name == "mixed") return Coverage::kMixed;
  Fail(ErrorCode::kConfig, "unknown coverage '" + name + "' (disjoint|full|mixed)");
}

void ValidateSyntheticConfig(const SyntheticConfig& c) {
  if (c.tasks.empty()) Fail(ErrorCode::kConfig, "generator needs at least one task");
  for (const SyntheticTask& t : c.tasks) {
    if (t.feature_dim < 1) Fail(ErrorCode::kConfig, "feature_dim must be positive");
    if (t.kind == LabelKind::kCategorical && t.num_classes < 2) {
      Fail(ErrorCode::kConfig, "categorical tasks need at least 2 classes");
    }
  }
  if (c.latent_dim < 1) Fail(ErrorCode::kConfig, "latent_dim must be positive");
  if (!(c.rho >= 0.0 && c.rho <= 1.0)) Fail(ErrorCode::kConfig, "rho must lie in [0, 1]");
  if (!(c.feature_noise >= 0) || !(c.label_noise >= 0) || !(c.label_scale >= 0)) {
    Fail(ErrorCode::kConfig, "noise levels and label scale must be nonnegative");
  }
  if (c.samples_per_task < 1 || c.test_samples < 1) {
    Fail(ErrorCode::kConfig, "sample counts must be positive");
  }
  if (!(c.mixed_p >= 0.0 && c.mixed_p <= 1.0)) Fail(ErrorCode::kConfig, "mixed_p must lie in [0, 1]");
}

nlohmann::json SyntheticConfigToJson(const SyntheticConfig& c) {
  nlohmann::json tasks = nlohmann::json::array();
  for (const SyntheticTask& t : c.tasks) {
    nlohmann::json j{{"label_space", t.kind == LabelKind::kCategorical ? "categorical" : "regression"},
                     {"feature_dim", t.feature_dim},
                     {"metric", MetricName(t.metric)}};
    if (t.kind == LabelKind::kCategorical) j["num_classes"] = t.num_classes;
    tasks.push_back(std::move(j));
  }
  return {{"tasks", tasks},
          {"latent_dim", c.latent_dim},
          {"rho", c.rho},
          {"feature_noise", c.feature_noise},
          {"label_noise", c.label_noise},
          {"label_scale", c.label_scale},
          {"samples_per_task", c.samples_per_task},
          {"test_samples", c.test_samples},
          {"coverage", CoverageName(c.coverage)},
          {"mixed_p", c.mixed_p},
          {"seed", c.seed}};
}

SyntheticConfig SyntheticConfigFromJson(const nlohmann::json& doc) {
  static const std::set<std::string> kKeys = {
      "tasks", "latent_dim", "rho", "feature_noise", "label_noise", "label_scale",
      "samples_per_task", "test_samples", "coverage", "mixed_p", "seed"};
  try {
    if (!doc.is_object()) Fail(ErrorCode::kConfig, "generator config must be an object");
    for (const auto& [key, value] : doc.items()) {
      if (!kKeys.count(key)) Fail(ErrorCode::kConfig, "unknown generator key '" + key + "'");
    }
    SyntheticConfig c;
    for (const auto& t : doc.at("tasks")) {
      SyntheticTask task;
      const std::string space = t.value("label_space", std::string("categorical"));
      if (space == "categorical") {
        task.kind = LabelKind::kCategorical;
        task.num_classes = t.value("num_classes", 2);
        task.metric = ParseMetric(t.value("metric", std::string("accuracy")));
      } else if (space == "regression") {
        task.kind = LabelKind::kRegression;
        task.num_classes = 0;
        task.metric = ParseMetric(t.value("metric", std::string("rmse")));
      } else {
        Fail(ErrorCode::kConfig, "unknown label_space '" + space + "'");
      }
      task.feature_dim = t.value("feature_dim", 6);
      c.tasks.push_back(task);
    }
    c.latent_dim = doc.value("latent_dim", c.latent_dim);
    c.rho = doc.value("rho", c.rho);
    c.feature_noise = doc.value("feature_noise", c.feature_noise);
    c.label_noise = doc.value("label_noise", c.label_noise);
    c.label_scale = doc.value("label_scale", c.label_scale);
    c.samples_per_task = doc.value("samples_per_task", c.samples_per_task);
    c.test_samples = doc.value("test_samples", c.test_samples);
    c.coverage = ParseCoverage(doc.value("coverage", std::string("disjoint")));
    c.mixed_p = doc.value("mixed_p", c.mixed_p);
    c.seed = doc.value("seed", c.seed);
    ValidateSyntheticConfig(c);
    return c;
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorCode::kConfig, std::string("generator config: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kSchema || e.code() == ErrorCode::kParse) {
      Fail(ErrorCode::kConfig, e.what());
    }
    throw;
  }
}

std::vector<TaskSpec> SyntheticSpecs(const SyntheticConfig& c) {
  std::vector<TaskSpec> specs;
  for (std::size_t t = 0; t < c.tasks.size(); ++t) {
    const SyntheticTask& task = c.tasks[t];
    const TaskId id = static_cast<TaskId>(t + 1);
    const std::string name = "task" + std::to_string(id);
    if (task.kind == LabelKind::kCategorical) {
      specs.push_back(TaskSpec::Categorical(id, name, task.num_classes, task.feature_dim, task.metric));
    } else {
      TaskSpec s = TaskSpec::Regression(id, name, task.feature_dim);
      s.metric = task.metric;
      specs.push_back(s);
    }
  }
  return specs;
}

std::pair<MultiTaskDataset, MultiTaskDataset> GenerateSynthetic(const SyntheticConfig& c) {
  ValidateSyntheticConfig(c);
  const int n = static_cast<int>(c.tasks.size());
  const int d = c.latent_dim;
  std::mt19937_64 rng(c.seed);
  const double unit = 1.0 / std::sqrt(static_cast<double>(d));
  std::vector<Matrix> a(n);
  std::vector<Matrix> b(n);
  for (int t = 0; t < n; ++t) {
    const SyntheticTask& task = c.tasks[t];
    a[t] = Gaussian(rng, task.feature_dim, d, unit);
    b[t] = Gaussian(rng, task.kind == LabelKind::kCategorical ? task.num_classes : 1, d, unit);
  }
  const double shared = std::sqrt(c.rho);
  const double own = std::sqrt(1.0 - c.rho);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  const auto draw = [&](SampleId id) {
    Sample s;
    s.id = id;
    const Vector u = GaussianVector(rng, d);
    for (int t = 0; t < n; ++t) {
      const SyntheticTask& task = c.tasks[t];
      const Vector h = shared * u + own * GaussianVector(rng, d);
      s.features.push_back(a[t] * h + c.feature_noise * GaussianVector(rng, task.feature_dim));
      if (task.kind == LabelKind::kCategorical) {
        const Vector p = Softmax(c.label_scale * (b[t] * h));
        const double x = uniform(rng);
        int cls = 0;
        double acc = p[0];
        while (cls + 1 < p.size() && x >= acc) acc += p[++cls];
        s.labels.push_back(Label::Class(cls));
      } else {
        s.labels.push_back(Label::Value((b[t] * h)[0] + c.label_noise * normal(rng)));
      }
    }
    return s;
  };

  const std::size_t n_train = static_cast<std::size_t>(c.samples_per_task) * n;
  std::vector<Sample> train;
  for (std::size_t i = 0; i < n_train; ++i) train.push_back(draw(static_cast<SampleId>(i)));
  std::vector<Sample> test;
  for (int i = 0; i < c.test_samples; ++i) test.push_back(draw(static_cast<SampleId>(i)));

  // Label coverage uses its own stream so that every policy sees the same
  // features and labels.
  std::mt19937_64 cover(Mix(c.seed, 0xC0FFEE));
  std::vector<std::size_t> order(n_train);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), cover);
  for (std::size_t p = 0; p < n_train; ++p) {
    Sample& s = train[order[p]];
    const int home = static_cast<int>(p % n);
    for (int t = 0; t < n; ++t) {
      bool keep = true;
      if (c.coverage == Coverage::kDisjoint) {
        keep = t == home;
      } else if (c.coverage == Coverage::kMixed) {
        const double x = uniform(cover);
        keep = t == home || x < c.mixed_p;
      }
      if (!keep) s.labels[t].reset();
    }
  }
  const std::vector<TaskSpec> specs = SyntheticSpecs(c);
  return {MultiTaskDataset(specs, std::move(train)), MultiTaskDataset(specs, std::move(test))};
}

std::vector<Vector> CascadePredictor::Scores(const Sample& sample) const {
  std::vector<Vector> out;
  for (TaskPrediction& p : Predict(model_, sample)) out.push_back(std::move(p.scores));
  return out;
}

BaselinePredictor::BaselinePredictor(Kind kind, std::vector<TaskSpec> specs,
                                     Standardizer standardizer,
                                     std::vector<std::shared_ptr<const Classifier>> classifiers)
    : kind_(kind),
      specs_(std::move(specs)),
      standardizer_(std::move(standardizer)),
      classifiers_(std::move(classifiers)) {
  ValidateSpecs(specs_);
  if (classifiers_.size() != specs_.size() || standardizer_.mean.size() != specs_.size()) {
    Fail(ErrorCode::kContract, "baseline needs one classifier and one standardizer per task");
  }
  int total = 0;
  for (const TaskSpec& s : specs_) total += s.feature_dim;
  for (std::size_t t = 0; t < specs_.size(); ++t) {
    if (!classifiers_[t]) Fail(ErrorCode::kContract, "missing baseline classifier");
    const int want = kind_ == Kind::kBase ? specs_[t].feature_dim : total;
    if (classifiers_[t]->input_dim() != want) {
      Fail(ErrorCode::kContract, "baseline classifier of task " + std::to_string(t + 1) +
                                     " has the wrong input dimension");
    }
  }
}

Vector BaselinePredictor::Input(const std::vector<Vector>& standardized, TaskId t) const {
  if (kind_ == Kind::kBase) return standardized[t - 1];
  return FlattenLatents(standardized);
}

std::vector<Vector> BaselinePredictor::Scores(const Sample& sample) const {
  const std::vector<Vector> psi = standardizer_.Apply(sample);
  std::vector<Vector> out;
  for (std::size_t t = 0; t < specs_.size(); ++t) {
    out.push_back(classifiers_[t]->Infer(Input(psi, static_cast<TaskId>(t + 1))));
  }
  return out;
}

nlohmann::json BaselinePredictor::ToJson() const {
  nlohmann::json classifiers = nlohmann::json::array();
  for (const auto& c : classifiers_) classifiers.push_back(c->ToJson());
  return {{"schema", kBaselineSchema},
          {"method", kind_ == Kind::kBase ? "base" : "all_features_direct"},
          {"specs", SpecsToJson(specs_)},
          {"standardization", StandardizerToJson(standardizer_)},
          {"classifiers", std::move(classifiers)}};
}

namespace {

BaselinePredictor TrainBaseline(BaselinePredictor::Kind kind, const MultiTaskDataset& train,
                                double l2_penalty, int threads) {
  Standardizer st = Standardizer::Fit(train);
  std::vector<std::vector<Vector>> psi(train.size());
  ParallelFor(train.size(), threads, [&](std::size_t r) { psi[r] = st.Apply(train[r]); });
  const int n = train.num_tasks();
  std::vector<std::shared_ptr<const Classifier>> classifiers(n);
  ParallelFor(n, threads, [&](std::size_t t) {
    const TaskId id = static_cast<TaskId>(t + 1);
    const TaskSpec& spec = train.spec(id);
    std::vector<Vector> inputs;
    std::vector<Target> targets;
    for (std::size_t r : train.partition_rows(id)) {
      inputs.push_back(kind == BaselinePredictor::Kind::kBase ? psi[r][t] : FlattenLatents(psi[r]));
      targets.push_back(train[r].label(id));
    }
    if (inputs.empty()) {
      Fail(ErrorCode::kEmptyFit, "baseline, task " + std::to_string(id) + ": no labeled samples");
    }
    const std::vector<double> weights(inputs.size(), 1.0);
    const LinearFactory factory(DefaultKind(spec), l2_penalty);
    classifiers[t] = factory.Learn(inputs, targets, weights, factory.LatentDim(spec), nullptr, 0);
  });
  return BaselinePredictor(kind, train.specs(), std::move(st), std::move(classifiers));
}

}  // namespace

BaselinePredictor TrainBase(const MultiTaskDataset& train, double l2_penalty, int threads) {
  return TrainBaseline(BaselinePredictor::Kind::kBase, train, l2_penalty, threads);
}

BaselinePredictor TrainAllFeaturesDirect(const MultiTaskDataset& train, double l2_penalty,
                                         int threads) {
  return TrainBaseline(BaselinePredictor::Kind::kAllFeatures, train, l2_penalty, threads);
}

std::unique_ptr<Predictor> PredictorFromJson(const nlohmann::json& doc) {
  const std::string schema = doc.is_object() ? doc.value("schema", std::string()) : std::string();
  if (schema == kModelSchema) return std::make_unique<CascadePredictor>(CascadeModel::FromJson(doc));
  if (schema != kBaselineSchema) {
    Fail(ErrorCode::kSchema, "unknown model document (schema tag '" + schema + "')");
  }
  try {
    const std::string method = doc.at("method").get<std::string>();
    BaselinePredictor::Kind kind;
    if (method == "base") {
      kind = BaselinePredictor::Kind::kBase;
    } else if (method == "all_features_direct") {
      kind = BaselinePredictor::Kind::kAllFeatures;
    } else {
      Fail(ErrorCode::kSchema, "unknown baseline method '" + method + "'");
    }
    std::vector<std::shared_ptr<const Classifier>> classifiers;
    for (const auto& c : doc.at("classifiers")) classifiers.push_back(ClassifierFromJson(c));
    return std::make_unique<BaselinePredictor>(kind, SpecsFromJson(doc.at("specs")),
                                               StandardizerFromJson(doc.at("standardization")),
                                               std::move(classifiers));
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorCode::kSchema, std::string("baseline document: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kContract) Fail(ErrorCode::kSchema, e.what());
    throw;
  }
}

nlohmann::json EvalReport::ToJson() const {
  nlohmann::json tasks_doc = nlohmann::json::array();
  for (const TaskReport& t : tasks) {
    nlohmann::json j{{"task", t.task},     {"name", t.name},       {"metric", MetricName(t.metric)},
                     {"value", t.value},   {"ci_low", t.ci_low},   {"ci_high", t.ci_high},
                     {"count", t.count}};
    if (!t.confusion.empty()) j["confusion"] = t.confusion;
    tasks_doc.push_back(std::move(j));
  }
  return {{"method", method}, {"tasks", std::move(tasks_doc)}};
}

void EvalReport::WriteCsv(std::ostream& out) const {
  out << "task,name,metric,value,ci_low,ci_high,count\n";
  for (const TaskReport& t : tasks) {
    out << t.task << ',' << t.name << ',' << MetricName(t.metric) << ',' << FormatDouble(t.value)
        << ',' << FormatDouble(t.ci_low) << ',' << FormatDouble(t.ci_high) << ',' << t.count
        << '\n';
  }
}

EvalReport Evaluate(const Predictor& predictor, const MultiTaskDataset& test,
                    const EvalOptions& options, const std::string& method) {
  if (predictor.specs() != test.specs()) {
    Fail(ErrorCode::kSchema, "model and dataset task specs differ");
  }
  if (options.bootstrap < 0) Fail(ErrorCode::kConfig, "bootstrap count must be nonnegative");
  std::vector<std::vector<Vector>> scores(test.size());
  ParallelFor(test.size(), options.threads,
              [&](std::size_t r) { scores[r] = predictor.Scores(test[r]); });

  EvalReport report;
  report.method = method;
  for (const TaskSpec& spec : test.specs()) {
    const auto& rows = test.partition_rows(spec.id);
    std::vector<Label> truth;
    std::vector<Vector> s;
    for (std::size_t r : rows) {
      truth.push_back(test[r].label(spec.id));
      s.push_back(scores[r][spec.id - 1]);
    }
    TaskReport tr;
    tr.task = spec.id;
    tr.name = spec.name;
    tr.metric = spec.metric;
    tr.count = truth.size();
    tr.value = MetricValue(spec, truth, s);
    tr.ci_low = tr.value;
    tr.ci_high = tr.value;
    if (options.bootstrap > 0) {
      std::mt19937_64 rng(Mix(options.seed, static_cast<std::uint64_t>(spec.id)));
      std::uniform_int_distribution<std::size_t> pick(0, truth.size() - 1);
      std::vector<double> stats;
      std::vector<Label> bt;
      std::vector<Vector> bs;
      for (int b = 0; b < options.bootstrap; ++b) {
        bt.clear();
        bs.clear();
        for (std::size_t k = 0; k < truth.size(); ++k) {
          const std::size_t i = pick(rng);
          bt.push_back(truth[i]);
          bs.push_back(s[i]);
        }
        stats.push_back(MetricValue(spec, bt, bs));
      }
      std::sort(stats.begin(), stats.end());
      tr.ci_low = std::min(tr.value, Quantile(stats, 0.025));
      tr.ci_high = std::max(tr.value, Quantile(stats, 0.975));
    }
    if (spec.categorical()) {
      tr.confusion.assign(spec.num_classes, std::vector<std::size_t>(spec.num_classes, 0));
      for (std::size_t k = 0; k < truth.size(); ++k) {
        const Label p = LabelFromScores(s[k], spec.kind);
        ++tr.confusion[truth[k].class_index()][p.class_index()];
      }
    }
    report.tasks.push_back(std::move(tr));
  }
  return report;
}

void WritePredictions(std::ostream& out, const Predictor& predictor, const MultiTaskDataset& data) {
  if (predictor.specs() != data.specs()) Fail(ErrorCode::kSchema, "model and dataset task specs differ");
  out << "id";
  std::vector<std::vector<Vector>> scores(data.size());
  for (std::size_t r = 0; r < data.size(); ++r) scores[r] = predictor.Scores(data[r]);
  for (const TaskSpec& spec : data.specs()) {
    out << ",y" << spec.id << "_pred";
    const Eigen::Index dim = data.size() > 0 ? scores[0][spec.id - 1].size() : 0;
    for (Eigen::Index k = 0; k < dim; ++k) out << ",s" << spec.id << '_' << (k + 1);
  }
  out << '\n';
  for (std::size_t r = 0; r < data.size(); ++r) {
    out << data[r].id;
    for (const TaskSpec& spec : data.specs()) {
      const Vector& s = scores[r][spec.id - 1];
      const Label label = LabelFromScores(s, spec.kind);
      out << ',' << (label.is_class() ? std::to_string(label.class_index()) : FormatDouble(label.value()));
      for (Eigen::Index k = 0; k < s.size(); ++k) out << ',' << FormatDouble(s[k]);
    }
    out << '\n';
  }
}

BaselineRun RunAllFeaturesDirect(const MultiTaskDataset& train, const MultiTaskDataset& test,
                                 double l2_penalty, const EvalOptions& options) {
  BaselinePredictor p = TrainAllFeaturesDirect(train, l2_penalty, options.threads);
  EvalReport report = Evaluate(p, test, options, "all_features_direct");
  return BaselineRun{std::move(p), std::move(report)};
}

const std::vector<std::string>& MethodNames() {
  static const std::vector<std::string> kNames = {
      "base", "all_features_direct", "ccm", "feccm_unified", "feccm_one_goal",
      "feccm_target_specific"};
  return kNames;
}

bool IsMethod(const std::string& name) {
  const auto& names = MethodNames();
  return std::find(names.begin(), names.end(), name) != names.end();
}

void ApplyPiOption(const std::string& text, TaskId target, FeedbackConfig& config, int num_tasks) {
  config.pi.clear();
  if (text == "unified") {
    config.instantiation = Instantiation::Unified();
    return;
  }
  if (text == "grid") {
    if (target < 1 || target > num_tasks) {
      Fail(ErrorCode::kConfig, "pi=grid needs a target task in 1.." + std::to_string(num_tasks));
    }
    config.instantiation = Instantiation::TargetSpecific(target);
    return;
  }
  const std::string prefix = "onegoal:";
  if (text.rfind(prefix, 0) == 0) {
    int k = 0;
    try {
      std::size_t used = 0;
      k = std::stoi(text.substr(prefix.size()), &used);
      if (used != text.size() - prefix.size()) k = 0;
    } catch (const std::exception&) {
      k = 0;
    }
    if (k < 1 || k > num_tasks) Fail(ErrorCode::kConfig, "bad one-goal task in '" + text + "'");
    config.instantiation = Instantiation::OneGoal(k);
    return;
  }
  Fail(ErrorCode::kConfig, "pi must be unified, onegoal:<k> or grid, got '" + text + "'");
}

TrainOptions ParseTrainOptions(const nlohmann::json& doc, int num_tasks) {
  static const std::set<std::string> kKeys = {
      "seed", "max_outer_iters", "mode", "pi", "target_task", "beta", "surrogate_target", "tol",
      "plateau_tol", "margin", "threads", "folds", "pi_grid", "l2_penalty"};
  TrainOptions o;
  if (doc.is_null()) return o;
  try {
    if (!doc.is_object()) Fail(ErrorCode::kConfig, "training options must be an object");
    for (const auto& [key, value] : doc.items()) {
      if (!kKeys.count(key)) Fail(ErrorCode::kConfig, "unknown training option '" + key + "'");
    }
    FeedbackConfig& f = o.feedback;
    f.seed = doc.value("seed", f.seed);
    f.max_outer_iters = doc.value("max_outer_iters", f.max_outer_iters);
    if (doc.contains("mode")) f.mode = ParseFeedbackMode(doc.at("mode").get<std::string>());
    const TaskId target = doc.value("target_task", 0);
    f.instantiation.target = target;
    if (doc.contains("pi")) {
      const auto& pi = doc.at("pi");
      if (pi.is_string()) {
        ApplyPiOption(pi.get<std::string>(), target, f, num_tasks);
      } else {
        f.pi = pi.get<std::vector<double>>();
        ValidatePi(f.pi, num_tasks);
      }
    }
    if (doc.contains("beta")) {
      const auto& beta = doc.at("beta");
      f.beta = beta.is_number() ? ParseBetaPolicy(FormatDouble(beta.get<double>()))
                                : ParseBetaPolicy(beta.get<std::string>());
    }
    if (doc.contains("surrogate_target")) {
      const std::string t = doc.at("surrogate_target").get<std::string>();
      if (t == "model_output") {
        f.surrogate_target = SurrogateTarget::kModelOutput;
      } else if (t == "ground_truth") {
        f.surrogate_target = SurrogateTarget::kGroundTruth;
      } else {
        Fail(ErrorCode::kConfig, "surrogate_target must be model_output or ground_truth");
      }
    }
    f.tol = doc.value("tol", f.tol);
    f.plateau_tol = doc.value("plateau_tol", f.plateau_tol);
    f.margin = doc.value("margin", f.margin);
    f.threads = doc.value("threads", f.threads);
    f.folds = doc.value("folds", f.folds);
    if (doc.contains("pi_grid")) f.pi_grid = doc.at("pi_grid").get<std::vector<std::vector<double>>>();
    o.l2_penalty = doc.value("l2_penalty", o.l2_penalty);
    if (!(o.l2_penalty >= 0) || !std::isfinite(o.l2_penalty)) {
      Fail(ErrorCode::kConfig, "l2_penalty must be nonnegative");
    }
    ValidateFeedbackConfig(f, num_tasks);
    return o;
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorCode::kConfig, std::string("training options: ") + e.what());
  }
}

MethodResult TrainMethod(const std::string& method, const MultiTaskDataset& train,
                         const TrainOptions& options, const MultiTaskDataset* holdout) {
  const int threads = options.feedback.threads;
  MethodResult result;
  if (method == "base") {
    result.predictor = std::make_unique<BaselinePredictor>(TrainBase(train, options.l2_penalty, threads));
    return result;
  }
  if (method == "all_features_direct") {
    result.predictor = std::make_unique<BaselinePredictor>(
        TrainAllFeaturesDirect(train, options.l2_penalty, threads));
    return result;
  }
  const CascadeSetup setup = CascadeSetup::Default(train.specs(), options.l2_penalty);
  if (method == "ccm") {
    result.predictor = std::make_unique<CascadePredictor>(TrainCcm(train, setup, options.feedback));
    return result;
  }
  FeedbackConfig config = options.feedback;
  const TaskId target = config.instantiation.target >= 1 ? config.instantiation.target : 1;
  if (method == "feccm_unified") {
    config.pi.clear();
    config.instantiation = Instantiation::Unified();
  } else if (method == "feccm_one_goal") {
    config.pi.clear();
    config.instantiation = Instantiation::OneGoal(target);
  } else if (method == "feccm_target_specific") {
    config.pi.clear();
    config.instantiation = Instantiation::TargetSpecific(target);
  } else if (method != "feccm") {
    Fail(ErrorCode::kConfig, "unknown method '" + method + "'");
  }
  TrainResult trained = TrainFeccm(train, setup, config, holdout);
  result.predictor = std::make_unique<CascadePredictor>(std::move(trained.model));
  result.trace = std::move(trained.trace);
  return result;
}

namespace {

struct Cell {
  Coverage coverage;
  std::uint64_t seed;
  std::string method;
  EvalReport report;
  std::optional<TrainingTrace> trace;
  double seconds = 0;
};

struct Summary {
  double mean = 0;
  double ci_low = 0;
  double ci_high = 0;
};

// Mean over seeds with a normal-approximation 95% interval; a single seed
// reports its bootstrap interval.
Summary Summarize(const std::vector<const TaskReport*>& runs) {
  Summary s;
  const double n = static_cast<double>(runs.size());
  for (const TaskReport* r : runs) s.mean += r->value;
  s.mean /= n;
  if (runs.size() == 1) {
    s.ci_low = runs[0]->ci_low;
    s.ci_high = runs[0]->ci_high;
    return s;
  }
  double var = 0;
  for (const TaskReport* r : runs) var += (r->value - s.mean) * (r->value - s.mean);
  var /= (n - 1);
  const double half = 1.96 * std::sqrt(var / n);
  s.ci_low = s.mean - half;
  s.ci_high = s.mean + half;
  return s;
}

std::string CellName(const Cell& c) {
  return std::string(CoverageName(c.coverage)) + "_" + c.method + "_seed" + std::to_string(c.seed);
}

}  // namespace

void RunExperiment(const std::string& config_path, const std::string& out_dir) {
  std::ifstream in(config_path, std::ios::binary);
  if (!in) Fail(ErrorCode::kIo, "cannot open experiment config '" + config_path + "'");
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorCode::kConfig, std::string("experiment config: ") + e.what());
  }
  const fs::path base = fs::path(config_path).parent_path();
  // Dataset paths are relative to the config document.
  if (doc.contains("datasets") && doc["datasets"].is_object()) {
    for (auto& [key, value] : doc["datasets"].items()) {
      if (value.is_string() && fs::path(value.get<std::string>()).is_relative()) {
        value = (base / value.get<std::string>()).string();
      }
    }
  }
  RunExperiment(doc, out_dir);
}

void RunExperiment(const nlohmann::json& doc, const std::string& out_dir) {
  static const std::set<std::string> kKeys = {"generator", "datasets", "methods", "seeds",
                                              "num_seeds", "folds", "feedback", "threads",
                                              "bootstrap", "coverage_grid"};
  if (!doc.is_object()) Fail(ErrorCode::kConfig, "experiment config must be an object");
  for (const auto& [key, value] : doc.items()) {
    if (!kKeys.count(key)) Fail(ErrorCode::kConfig, "unknown experiment key '" + key + "'");
  }
  if (doc.contains("generator") == doc.contains("datasets")) {
    Fail(ErrorCode::kConfig, "experiment needs exactly one of 'generator' and 'datasets'");
  }
  std::vector<std::string> methods;
  std::vector<std::uint64_t> seeds;
  int threads = 1;
  int bootstrap = 1000;
  bool grid = false;
  std::optional<SyntheticConfig> gen;
  std::vector<TaskSpec> specs;
  nlohmann::json feedback_doc = nlohmann::json::object();
  try {
    methods = doc.at("methods").get<std::vector<std::string>>();
    if (methods.empty()) Fail(ErrorCode::kConfig, "experiment needs at least one method");
    for (const std::string& m : methods) {
      if (!IsMethod(m)) Fail(ErrorCode::kConfig, "unknown method '" + m + "'");
    }
    if (std::set<std::string>(methods.begin(), methods.end()).size() != methods.size()) {
      Fail(ErrorCode::kConfig, "methods must be distinct");
    }
    if (doc.contains("seeds")) {
      seeds = doc.at("seeds").get<std::vector<std::uint64_t>>();
    } else {
      const int k = doc.value("num_seeds", 1);
      if (k < 1) Fail(ErrorCode::kConfig, "num_seeds must be positive");
      for (int s = 1; s <= k; ++s) seeds.push_back(static_cast<std::uint64_t>(s));
    }
    if (seeds.empty()) Fail(ErrorCode::kConfig, "experiment needs at least one seed");
    threads = doc.value("threads", 1);
    if (threads < 1) Fail(ErrorCode::kConfig, "threads must be positive");
    bootstrap = doc.value("bootstrap", 1000);
    if (bootstrap < 0) Fail(ErrorCode::kConfig, "bootstrap must be nonnegative");
    if (doc.contains("feedback")) feedback_doc = doc.at("feedback");
    if (doc.contains("folds")) feedback_doc["folds"] = doc.at("folds");
    if (doc.contains("generator")) {
      gen = SyntheticConfigFromJson(doc.at("generator"));
      specs = SyntheticSpecs(*gen);
      grid = doc.value("coverage_grid", true);
    } else {
      grid = doc.value("coverage_grid", false);
      if (grid) Fail(ErrorCode::kConfig, "coverage_grid needs a generator");
    }
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorCode::kConfig, std::string("experiment config: ") + e.what());
  }

  // Data for every (coverage, seed).
  std::vector<Coverage> coverages;
  std::map<std::pair<int, std::uint64_t>, std::pair<MultiTaskDataset, MultiTaskDataset>> data;
  if (gen) {
    coverages.push_back(gen->coverage);
    if (grid) {
      for (Coverage c : {Coverage::kDisjoint, Coverage::kFull}) {
        if (std::find(coverages.begin(), coverages.end(), c) == coverages.end()) coverages.push_back(c);
      }
    }
    for (Coverage c : coverages) {
      for (std::uint64_t s : seeds) {
        SyntheticConfig g = *gen;
        g.coverage = c;
        g.seed = s;
        data.emplace(std::make_pair(static_cast<int>(c), s), GenerateSynthetic(g));
      }
    }
  } else {
    const auto& ds = doc.at("datasets");
    std::string specs_path;
    std::string train_path;
    std::string test_path;
    try {
      specs_path = ds.at("specs").get<std::string>();
      train_path = ds.at("train").get<std::string>();
      test_path = ds.at("test").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      Fail(ErrorCode::kConfig, std::string("datasets: ") + e.what());
    }
    std::ifstream sf(specs_path, std::ios::binary);
    if (!sf) Fail(ErrorCode::kIo, "cannot open specs '" + specs_path + "'");
    nlohmann::json sdoc;
    try {
      sdoc = nlohmann::json::parse(sf);
    } catch (const nlohmann::json::exception& e) {
      Fail(ErrorCode::kSchema, std::string("specs: ") + e.what());
    }
    specs = SpecsFromJson(sdoc);
    MultiTaskDataset train = LoadDataset(train_path, specs);
    MultiTaskDataset test = LoadDataset(test_path, specs);
    coverages.push_back(Coverage::kMixed);
    for (std::uint64_t s : seeds) data.emplace(std::make_pair(static_cast<int>(Coverage::kMixed), s), std::make_pair(train, test));
  }
  const int n = static_cast<int>(specs.size());
  TrainOptions options = ParseTrainOptions(feedback_doc, n);

  std::vector<Cell> cells;
  for (Coverage c : coverages) {
    for (std::uint64_t s : seeds) {
      for (const std::string& m : methods) cells.push_back(Cell{c, s, m, {}, std::nullopt, 0});
    }
  }
  ParallelFor(cells.size(), threads, [&](std::size_t i) {
    Cell& cell = cells[i];
    const auto t0 = std::chrono::steady_clock::now();
    const auto& [train, test] = data.at({static_cast<int>(cell.coverage), cell.seed});
    TrainOptions o = options;
    o.feedback.seed = cell.seed;
    o.feedback.threads = 1;
    MethodResult r = TrainMethod(cell.method, train, o);
    cell.report = Evaluate(*r.predictor, test, EvalOptions{bootstrap, cell.seed, 1}, cell.method);
    cell.trace = std::move(r.trace);
    cell.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  });

  const fs::path out(out_dir);
  EnsureDir(out);
  EnsureDir(out / "reports");
  EnsureDir(out / "traces");
  EnsureDir(out / "confusion");

  {
    std::ofstream per_seed = OpenOut(out / "per_seed.csv");
    std::ofstream timing = OpenOut(out / "timing.csv");
    per_seed << "coverage,method,seed,task,metric,value,ci_low,ci_high\n";
    timing << "coverage,method,seed,seconds\n";
    for (const Cell& cell : cells) {
      for (const TaskReport& t : cell.report.tasks) {
        per_seed << CoverageName(cell.coverage) << ',' << cell.method << ',' << cell.seed << ','
                 << t.task << ',' << MetricName(t.metric) << ',' << FormatDouble(t.value) << ','
                 << FormatDouble(t.ci_low) << ',' << FormatDouble(t.ci_high) << '\n';
      }
      timing << CoverageName(cell.coverage) << ',' << cell.method << ',' << cell.seed << ','
             << FormatDouble(cell.seconds) << '\n';
      std::ofstream rep = OpenOut(out / "reports" / (CellName(cell) + ".csv"));
      cell.report.WriteCsv(rep);
      for (const TaskReport& t : cell.report.tasks) {
        if (t.confusion.empty()) continue;
        std::ofstream cf = OpenOut(out / "confusion" /
                                   (CellName(cell) + "_task" + std::to_string(t.task) + ".csv"));
        for (const auto& row : t.confusion) {
          for (std::size_t k = 0; k < row.size(); ++k) cf << (k ? "," : "") << row[k];
          cf << '\n';
        }
      }
      if (cell.trace) {
        std::ofstream tr = OpenOut(out / "traces" / (CellName(cell) + ".csv"));
        cell.trace->WriteCsv(tr, specs, false);
      }
    }
  }

  // Tables over seeds, per coverage and method.
  const auto table = [&](Coverage c) {
    std::map<std::string, std::vector<Summary>> rows;
    for (const std::string& m : methods) {
      std::vector<Summary> per_task;
      for (int t = 0; t < n; ++t) {
        std::vector<const TaskReport*> runs;
        for (const Cell& cell : cells) {
          if (cell.coverage == c && cell.method == m) runs.push_back(&cell.report.tasks[t]);
        }
        per_task.push_back(Summarize(runs));
      }
      rows[m] = std::move(per_task);
    }
    return rows;
  };
  const auto header = [&](std::ostream& os) {
    for (const TaskSpec& s : specs) {
      const std::string col = s.name + "_" + MetricName(s.metric);
      os << ',' << col << "_mean," << col << "_ci_low," << col << "_ci_high";
    }
    os << '\n';
  };
  const auto write_row = [&](std::ostream& os, const std::vector<Summary>& row) {
    for (const Summary& s : row) {
      os << ',' << FormatDouble(s.mean) << ',' << FormatDouble(s.ci_low) << ','
         << FormatDouble(s.ci_high);
    }
    os << '\n';
  };

  nlohmann::json summary;
  summary["config"] = doc;
  summary["seeds"] = seeds;
  summary["methods"] = methods;
  {
    const auto main = table(coverages.front());
    std::ofstream cmp = OpenOut(out / "comparison.csv");
    cmp << "method";
    header(cmp);
    nlohmann::json cmp_doc = nlohmann::json::object();
    for (const std::string& m : methods) {
      cmp << m;
      write_row(cmp, main.at(m));
      nlohmann::json tasks = nlohmann::json::array();
      for (int t = 0; t < n; ++t) {
        const Summary& s = main.at(m)[t];
        tasks.push_back({{"task", t + 1}, {"mean", s.mean}, {"ci_low", s.ci_low}, {"ci_high", s.ci_high}});
      }
      cmp_doc[m] = std::move(tasks);
    }
    summary["comparison"] = std::move(cmp_doc);
    summary["coverage"] = gen ? CoverageName(coverages.front()) : "datasets";
  }
  if (grid) {
    std::ofstream g = OpenOut(out / "coverage_grid.csv");
    g << "coverage,method";
    header(g);
    nlohmann::json grid_doc = nlohmann::json::array();
    for (Coverage c : {Coverage::kDisjoint, Coverage::kFull}) {
      const auto rows = table(c);
      for (const std::string& m : methods) {
        g << CoverageName(c) << ',' << m;
        write_row(g, rows.at(m));
        nlohmann::json means = nlohmann::json::array();
        for (const Summary& s : rows.at(m)) means.push_back(s.mean);
        grid_doc.push_back({{"coverage", CoverageName(c)}, {"method", m}, {"means", means}});
      }
    }
    summary["coverage_grid"] = std::move(grid_doc);
  }
  std::ofstream sj = OpenOut(out / "summary.json");
  sj << summary.dump(2) << '\n';
}

}  // namespace feccm
