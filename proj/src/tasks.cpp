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

#include "feccm/tasks.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <tuple>

#include "feccm/errors.hpp"

namespace feccm {

const char* ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kOk: return "ok";
    case ErrorCode::kParse: return "parse error";
    case ErrorCode::kSchema: return "schema error";
    case ErrorCode::kLookup: return "lookup error";
    case ErrorCode::kContract: return "contract error";
    case ErrorCode::kDegenerateSplit: return "degenerate split";
    case ErrorCode::kEmptyFit: return "empty fit";
    case ErrorCode::kNumeric: return "numeric error";
    case ErrorCode::kCapability: return "capability error";
    case ErrorCode::kEmptyEval: return "empty evaluation";
    case ErrorCode::kConfig: return "config error";
    case ErrorCode::kIo: return "io error";
  }
  return "unknown error";
}

const char* MetricName(Metric metric) {
  switch (metric) {
    case Metric::kAccuracy: return "accuracy";
    case Metric::kRmse: return "rmse";
    case Metric::kAveragePrecision: return "average_precision";
  }
  return "?";
}

Metric ParseMetric(const std::string& name) {
  if (name == "accuracy") return Metric::kAccuracy;
  if (name == "rmse") return Metric::kRmse;
  if (name == "average_precision") return Metric::kAveragePrecision;
  Fail(ErrorCode::kSchema, "unknown metric '" + name + "'");
}

bool HigherIsBetter(Metric metric) { return metric != Metric::kRmse; }

TaskSpec TaskSpec::Categorical(TaskId id, std::string name, int num_classes,
                               int feature_dim, Metric metric) {
  return TaskSpec{id, std::move(name), LabelKind::kCategorical, num_classes,
                  feature_dim, metric};
}

TaskSpec TaskSpec::Regression(TaskId id, std::string name, int feature_dim) {
  return TaskSpec{id, std::move(name), LabelKind::kRegression, 0, feature_dim,
                  Metric::kRmse};
}

void ValidateSpecs(std::span<const TaskSpec> specs) {
  if (specs.empty()) Fail(ErrorCode::kSchema, "no tasks declared");
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const TaskSpec& s = specs[i];
    const std::string where = "task " + std::to_string(s.id);
    if (s.id != static_cast<TaskId>(i + 1)) {
      Fail(ErrorCode::kSchema, "task ids must run 1..n in order; position " +
                                   std::to_string(i + 1) + " has id " +
                                   std::to_string(s.id));
    }
    if (s.feature_dim <= 0) Fail(ErrorCode::kSchema, where + ": feature_dim must be positive");
    if (s.categorical()) {
      if (s.num_classes < 2) Fail(ErrorCode::kSchema, where + ": categorical tasks need K >= 2");
      if (s.metric == Metric::kRmse) Fail(ErrorCode::kSchema, where + ": rmse is not a categorical metric");
      if (s.metric == Metric::kAveragePrecision && s.num_classes != 2) {
        Fail(ErrorCode::kSchema, where + ": average_precision needs a 2-class task");
      }
    } else {
      if (s.num_classes != 0) Fail(ErrorCode::kSchema, where + ": regression tasks take no classes");
      if (s.metric != Metric::kRmse) Fail(ErrorCode::kSchema, where + ": regression tasks use rmse");
    }
  }
}

nlohmann::json SpecsToJson(std::span<const TaskSpec> specs) {
  nlohmann::json doc = nlohmann::json::array();
  for (const TaskSpec& s : specs) {
    nlohmann::json t;
    t["id"] = s.id;
    t["name"] = s.name;
    t["label_space"] = s.categorical() ? "categorical" : "regression";
    if (s.categorical()) t["num_classes"] = s.num_classes;
    t["feature_dim"] = s.feature_dim;
    t["metric"] = MetricName(s.metric);
    doc.push_back(std::move(t));
  }
  return doc;
}

std::vector<TaskSpec> SpecsFromJson(const nlohmann::json& doc) {
  const nlohmann::json& list = doc.is_object() && doc.contains("tasks") ? doc.at("tasks") : doc;
  if (!list.is_array()) Fail(ErrorCode::kSchema, "task specs must be an array");
  std::vector<TaskSpec> specs;
  try {
    for (const auto& t : list) {
      TaskSpec s;
      s.id = t.at("id").get<int>();
      s.name = t.value("name", "task" + std::to_string(s.id));
      const std::string space = t.at("label_space").get<std::string>();
      s.feature_dim = t.at("feature_dim").get<int>();
      if (space == "categorical") {
        s.kind = LabelKind::kCategorical;
        s.num_classes = t.at("num_classes").get<int>();
        s.metric = ParseMetric(t.value("metric", std::string("accuracy")));
      } else if (space == "regression") {
        s.kind = LabelKind::kRegression;
        s.metric = ParseMetric(t.value("metric", std::string("rmse")));
      } else {
        Fail(ErrorCode::kSchema, "unknown label_space '" + space + "'");
      }
      specs.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorCode::kSchema, std::string("task specs: ") + e.what());
  }
  ValidateSpecs(specs);
  return specs;
}

Label Label::Class(int class_index) {
  Label l;
  l.is_class_ = true;
  l.class_index_ = class_index;
  l.value_ = class_index;
  return l;
}

Label Label::Value(double value) {
  Label l;
  l.is_class_ = false;
  l.value_ = value;
  return l;
}

void ValidateLabel(const TaskSpec& spec, const Label& label) {
  if (spec.categorical()) {
    if (!label.is_class() || label.class_index() < 0 ||
        label.class_index() >= spec.num_classes) {
      Fail(ErrorCode::kContract, "task " + std::to_string(spec.id) +
                                     ": class label out of range");
    }
  } else if (label.is_class() || !std::isfinite(label.value())) {
    Fail(ErrorCode::kContract, "task " + std::to_string(spec.id) +
                                   ": regression label must be a finite value");
  }
}

int Sample::num_labels() const {
  return static_cast<int>(std::count_if(labels.begin(), labels.end(),
                                        [](const auto& l) { return l.has_value(); }));
}

bool Sample::operator==(const Sample& other) const {
  if (id != other.id || labels != other.labels ||
      features.size() != other.features.size()) {
    return false;
  }
  for (std::size_t t = 0; t < features.size(); ++t) {
    if (features[t].size() != other.features[t].size() ||
        features[t] != other.features[t]) {
      return false;
    }
  }
  return true;
}

MultiTaskDataset::MultiTaskDataset(std::vector<TaskSpec> specs,
                                   std::vector<Sample> samples)
    : specs_(std::move(specs)), samples_(std::move(samples)) {
  ValidateSpecs(specs_);
  const std::size_t n = specs_.size();
  std::stable_sort(samples_.begin(), samples_.end(),
                   [](const Sample& a, const Sample& b) { return a.id < b.id; });
  partitions_.assign(n, {});
  for (std::size_t row = 0; row < samples_.size(); ++row) {
    const Sample& s = samples_[row];
    const std::string where = "sample " + std::to_string(s.id);
    if (row > 0 && samples_[row - 1].id == s.id) {
      Fail(ErrorCode::kContract, where + ": duplicate sample id");
    }
    if (s.features.size() != n || s.labels.size() != n) {
      Fail(ErrorCode::kContract, where + ": expected feature and label slots for " +
                                     std::to_string(n) + " tasks");
    }
    for (std::size_t t = 0; t < n; ++t) {
      if (s.features[t].size() != specs_[t].feature_dim) {
        Fail(ErrorCode::kContract, where + ": task " + std::to_string(t + 1) +
                                       " features have dimension " +
                                       std::to_string(s.features[t].size()) +
                                       ", declared " +
                                       std::to_string(specs_[t].feature_dim));
      }
      if (!s.features[t].allFinite()) {
        Fail(ErrorCode::kContract, where + ": non-finite feature value");
      }
      if (s.labels[t]) {
        ValidateLabel(specs_[t], *s.labels[t]);
        partitions_[t].push_back(row);
      }
    }
  }
}

void MultiTaskDataset::CheckTask(TaskId task) const {
  if (task < 1 || task > num_tasks()) {
    Fail(ErrorCode::kLookup, "unknown task id " + std::to_string(task));
  }
}

const TaskSpec& MultiTaskDataset::spec(TaskId task) const {
  CheckTask(task);
  return specs_[task - 1];
}

const std::vector<std::size_t>& MultiTaskDataset::partition_rows(TaskId task) const {
  CheckTask(task);
  return partitions_[task - 1];
}

std::vector<SampleId> MultiTaskDataset::partition(TaskId task) const {
  std::vector<SampleId> ids;
  for (std::size_t row : partition_rows(task)) ids.push_back(samples_[row].id);
  return ids;
}

MultiTaskDataset MultiTaskDataset::Subset(std::span<const std::size_t> rows) const {
  std::vector<Sample> picked;
  picked.reserve(rows.size());
  for (std::size_t row : rows) picked.push_back(samples_.at(row));
  return MultiTaskDataset(specs_, std::move(picked));
}

bool MultiTaskDataset::operator==(const MultiTaskDataset& other) const {
  return specs_ == other.specs_ && samples_ == other.samples_;
}

std::vector<SampleId> Partition(const MultiTaskDataset& dataset, TaskId task) {
  return dataset.partition(task);
}

// ---------------------------------------------------------------------------
// File format.

namespace {

std::string_view Trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

std::vector<std::string_view> SplitFields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(Trim(line.substr(start)));
      break;
    }
    fields.push_back(Trim(line.substr(start, comma - start)));
    start = comma + 1;
  }
  return fields;
}

bool ParseDouble(std::string_view field, double* out) {
  if (field.empty()) return false;
  if (field.front() == '+') field.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), *out);
  return ec == std::errc() && ptr == field.data() + field.size() && std::isfinite(*out);
}

bool ParseInt(std::string_view field, long long* out) {
  if (field.empty()) return false;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), *out);
  return ec == std::errc() && ptr == field.data() + field.size();
}

bool ParsePositiveIndex(std::string_view digits, int* out) {
  if (digits.empty() || digits.front() == '0') return false;
  long long v = 0;
  if (!ParseInt(digits, &v) || v <= 0 || v > 1'000'000) return false;
  *out = static_cast<int>(v);
  return true;
}

enum class ColumnRole { kId, kFeature, kLabel };
struct Column {
  ColumnRole role;
  int task = 0;
  int index = 0;  // 1-based feature index
};

Column ParseColumnName(std::string_view name, const std::vector<TaskSpec>& specs) {
  const auto unknown = [&]() -> Column {
    Fail(ErrorCode::kSchema, "unknown column '" + std::string(name) + "'");
  };
  if (name == "id") return {ColumnRole::kId};
  if (name.size() >= 2 && name.front() == 'y') {
    int task = 0;
    if (!ParsePositiveIndex(name.substr(1), &task)) return unknown();
    if (task > static_cast<int>(specs.size())) {
      Fail(ErrorCode::kSchema, "label column '" + std::string(name) +
                                   "' names an undeclared task");
    }
    return {ColumnRole::kLabel, task};
  }
  if (name.size() >= 4 && name.front() == 'f') {
    const std::size_t us = name.find('_');
    int task = 0;
    int index = 0;
    if (us == std::string_view::npos ||
        !ParsePositiveIndex(name.substr(1, us - 1), &task) ||
        !ParsePositiveIndex(name.substr(us + 1), &index)) {
      return unknown();
    }
    if (task > static_cast<int>(specs.size())) {
      Fail(ErrorCode::kSchema, "feature column '" + std::string(name) +
                                   "' names an undeclared task");
    }
    if (index > specs[task - 1].feature_dim) {
      Fail(ErrorCode::kSchema, "feature column '" + std::string(name) +
                                   "' exceeds the declared feature_dim");
    }
    return {ColumnRole::kFeature, task, index};
  }
  return unknown();
}

}  // namespace

MultiTaskDataset ReadDataset(std::istream& in, std::vector<TaskSpec> specs) {
  ValidateSpecs(specs);
  const std::size_t n = specs.size();
  std::string line;
  if (!std::getline(in, line)) Fail(ErrorCode::kParse, "missing header line");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  if (!line.empty() && line.back() == '\r') line.pop_back();

  std::vector<Column> columns;
  std::set<std::tuple<int, int, int>> seen;
  for (std::string_view name : SplitFields(line)) {
    Column c = ParseColumnName(name, specs);
    if (!seen.emplace(static_cast<int>(c.role), c.task, c.index).second) {
      Fail(ErrorCode::kSchema, "duplicate column '" + std::string(name) + "'");
    }
    columns.push_back(c);
  }
  for (const TaskSpec& s : specs) {
    if (!seen.count({static_cast<int>(ColumnRole::kLabel), s.id, 0})) {
      Fail(ErrorCode::kSchema, "missing label column y" + std::to_string(s.id));
    }
    for (int k = 1; k <= s.feature_dim; ++k) {
      if (!seen.count({static_cast<int>(ColumnRole::kFeature), s.id, k})) {
        Fail(ErrorCode::kSchema, "missing feature column f" + std::to_string(s.id) +
                                     "_" + std::to_string(k));
      }
    }
  }

  std::vector<Sample> samples;
  int line_no = 1;
  int data_row = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (Trim(line).empty()) continue;
    ++data_row;
    const std::string where = "line " + std::to_string(line_no) + " (data row " +
                              std::to_string(data_row) + ")";
    const auto fields = SplitFields(line);
    if (fields.size() != columns.size()) {
      Fail(ErrorCode::kParse, where + ": expected " + std::to_string(columns.size()) +
                                  " fields, found " + std::to_string(fields.size()));
    }
    Sample s;
    s.id = data_row - 1;
    s.labels.assign(n, std::nullopt);
    s.features.reserve(n);
    for (const TaskSpec& spec : specs) s.features.push_back(Vector::Zero(spec.feature_dim));
    for (std::size_t c = 0; c < columns.size(); ++c) {
      const Column& col = columns[c];
      const std::string_view field = fields[c];
      switch (col.role) {
        case ColumnRole::kId: {
          long long id = 0;
          if (!ParseInt(field, &id)) Fail(ErrorCode::kParse, where + ": bad id '" + std::string(field) + "'");
          s.id = id;
          break;
        }
        case ColumnRole::kFeature: {
          double v = 0;
          if (!ParseDouble(field, &v)) {
            Fail(ErrorCode::kParse, where + ": non-numeric feature f" + std::to_string(col.task) +
                                        "_" + std::to_string(col.index) + " '" +
                                        std::string(field) + "'");
          }
          s.features[col.task - 1][col.index - 1] = v;
          break;
        }
        case ColumnRole::kLabel: {
          if (field.empty()) break;
          const TaskSpec& spec = specs[col.task - 1];
          if (spec.categorical()) {
            long long k = 0;
            if (!ParseInt(field, &k) || k < 0 || k >= spec.num_classes) {
              Fail(ErrorCode::kParse, where + ": bad class label y" + std::to_string(col.task) +
                                          " '" + std::string(field) + "'");
            }
            s.labels[col.task - 1] = Label::Class(static_cast<int>(k));
          } else {
            double v = 0;
            if (!ParseDouble(field, &v)) {
              Fail(ErrorCode::kParse, where + ": bad regression label y" +
                                          std::to_string(col.task) + " '" + std::string(field) + "'");
            }
            s.labels[col.task - 1] = Label::Value(v);
          }
          break;
        }
      }
    }
    samples.push_back(std::move(s));
  }
  try {
    return MultiTaskDataset(std::move(specs), std::move(samples));
  } catch (const Error& e) {
    Fail(ErrorCode::kParse, e.what());
  }
}

MultiTaskDataset LoadDataset(const std::string& path, std::vector<TaskSpec> specs) {
  std::ifstream in(path, std::ios::binary);
  if (!in) Fail(ErrorCode::kIo, "cannot open dataset '" + path + "'");
  return ReadDataset(in, std::move(specs));
}

std::string FormatDouble(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

void WriteDataset(std::ostream& out, const MultiTaskDataset& dataset) {
  out << "id";
  for (const TaskSpec& s : dataset.specs()) {
    for (int k = 1; k <= s.feature_dim; ++k) out << ",f" << s.id << '_' << k;
  }
  for (const TaskSpec& s : dataset.specs()) out << ",y" << s.id;
  out << '\n';
  for (const Sample& sample : dataset.samples()) {
    out << sample.id;
    for (const Vector& f : sample.features) {
      for (Eigen::Index k = 0; k < f.size(); ++k) out << ',' << FormatDouble(f[k]);
    }
    for (const auto& label : sample.labels) {
      out << ',';
      if (!label) continue;
      if (label->is_class()) {
        out << label->class_index();
      } else {
        out << FormatDouble(label->value());
      }
    }
    out << '\n';
  }
}

void SaveDataset(const std::string& path, const MultiTaskDataset& dataset) {
  std::ofstream out(path, std::ios::binary);
  if (!out) Fail(ErrorCode::kIo, "cannot write dataset '" + path + "'");
  WriteDataset(out, dataset);
  if (!out) Fail(ErrorCode::kIo, "write failed for '" + path + "'");
}

// ---------------------------------------------------------------------------
// Stratified splitting.

namespace {

// Largest-remainder apportionment of `total` units by `fractions`; ties go to
// the lower index.
std::vector<std::size_t> Apportion(std::size_t total, std::span<const double> fractions) {
  const std::size_t parts = fractions.size();
  std::vector<std::size_t> counts(parts);
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t f = 0; f < parts; ++f) {
    const double exact = static_cast<double>(total) * fractions[f];
    counts[f] = static_cast<std::size_t>(std::floor(exact));
    assigned += counts[f];
    remainders.emplace_back(exact - std::floor(exact), f);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < total; ++i, ++assigned) {
    ++counts[remainders[i % parts].second];
  }
  return counts;
}

std::vector<int> StratifiedAssign(const MultiTaskDataset& dataset,
                                  std::span<const double> fractions,
                                  std::uint64_t seed) {
  const std::size_t parts = fractions.size();
  // Stratum key: (first labeled task, class index); unlabeled rows form stratum (0, 0).
  std::map<std::pair<int, int>, std::vector<std::size_t>> strata;
  for (std::size_t row = 0; row < dataset.size(); ++row) {
    const Sample& s = dataset[row];
    std::pair<int, int> key{0, 0};
    for (TaskId t = 1; t <= dataset.num_tasks(); ++t) {
      if (!s.has_label(t)) continue;
      key = {t, s.label(t).is_class() ? s.label(t).class_index() : 0};
      break;
    }
    strata[key].push_back(row);
  }

  std::mt19937_64 rng(seed);
  std::vector<std::vector<std::size_t>> members;
  for (auto& [key, rows] : strata) {
    std::shuffle(rows.begin(), rows.end(), rng);
    members.push_back(rows);
  }

  const std::vector<std::size_t> totals = Apportion(dataset.size(), fractions);
  const std::size_t num_strata = members.size();
  std::vector<std::vector<std::size_t>> alloc(num_strata, std::vector<std::size_t>(parts));
  std::vector<std::size_t> remaining(num_strata);
  std::vector<long long> need(totals.begin(), totals.end());
  struct Cell {
    double remainder;
    std::size_t stratum;
    std::size_t part;
  };
  std::vector<Cell> cells;
  for (std::size_t s = 0; s < num_strata; ++s) {
    const std::size_t size = members[s].size();
    std::size_t used = 0;
    for (std::size_t f = 0; f < parts; ++f) {
      const double exact = static_cast<double>(size) * fractions[f];
      alloc[s][f] = static_cast<std::size_t>(std::floor(exact));
      used += alloc[s][f];
      need[f] -= static_cast<long long>(alloc[s][f]);
      cells.push_back({exact - std::floor(exact), s, f});
    }
    remaining[s] = size - used;
  }
  std::stable_sort(cells.begin(), cells.end(),
                   [](const Cell& a, const Cell& b) { return a.remainder > b.remainder; });
  for (const Cell& c : cells) {
    if (remaining[c.stratum] > 0 && need[c.part] > 0) {
      ++alloc[c.stratum][c.part];
      --remaining[c.stratum];
      --need[c.part];
    }
  }
  for (std::size_t s = 0; s < num_strata; ++s) {
    for (std::size_t f = 0; f < parts && remaining[s] > 0; ++f) {
      while (remaining[s] > 0 && need[f] > 0) {
        ++alloc[s][f];
        --remaining[s];
        --need[f];
      }
    }
  }

  std::vector<int> assignment(dataset.size(), -1);
  for (std::size_t s = 0; s < num_strata; ++s) {
    std::size_t pos = 0;
    for (std::size_t f = 0; f < parts; ++f) {
      for (std::size_t k = 0; k < alloc[s][f]; ++k) {
        assignment[members[s][pos++]] = static_cast<int>(f);
      }
    }
  }
  return assignment;
}

void CheckFractions(std::span<const double> fractions) {
  if (fractions.empty()) Fail(ErrorCode::kContract, "split needs at least one fraction");
  double sum = 0;
  for (double f : fractions) {
    if (!(f > 0)) Fail(ErrorCode::kContract, "split fractions must be positive");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9) Fail(ErrorCode::kContract, "split fractions must sum to 1");
}

void CheckCoverage(const MultiTaskDataset& dataset, const std::vector<int>& assignment,
                   int parts, const char* what) {
  for (TaskId t = 1; t <= dataset.num_tasks(); ++t) {
    const auto& rows = dataset.partition_rows(t);
    if (rows.empty()) continue;
    std::vector<int> counts(parts, 0);
    for (std::size_t row : rows) ++counts[assignment[row]];
    for (int p = 0; p < parts; ++p) {
      if (counts[p] == 0) {
        Fail(ErrorCode::kDegenerateSplit,
             std::string(what) + " " + std::to_string(p) + " receives no samples labeled for task " +
                 std::to_string(t) + " (" + dataset.spec(t).name + ")");
      }
    }
  }
}

}  // namespace

std::vector<MultiTaskDataset> Split(const MultiTaskDataset& dataset,
                                    std::span<const double> fractions,
                                    std::uint64_t seed) {
  CheckFractions(fractions);
  const std::vector<int> assignment = StratifiedAssign(dataset, fractions, seed);
  const int parts = static_cast<int>(fractions.size());
  CheckCoverage(dataset, assignment, parts, "part");
  std::vector<std::vector<std::size_t>> rows(parts);
  for (std::size_t row = 0; row < assignment.size(); ++row) rows[assignment[row]].push_back(row);
  std::vector<MultiTaskDataset> out;
  for (const auto& r : rows) out.push_back(dataset.Subset(r));
  return out;
}

std::vector<int> FoldAssignment(const MultiTaskDataset& dataset, int folds,
                                std::uint64_t seed) {
  if (folds < 2) Fail(ErrorCode::kContract, "need at least 2 folds");
  const std::vector<double> fractions(folds, 1.0 / folds);
  std::vector<int> assignment = StratifiedAssign(dataset, fractions, seed);
  CheckCoverage(dataset, assignment, folds, "fold");
  return assignment;
}

namespace {

void CheckAligned(std::size_t a, std::size_t b) {
  if (a != b) Fail(ErrorCode::kContract, "metric inputs are not aligned");
  if (a == 0) Fail(ErrorCode::kEmptyEval, "no labeled samples to evaluate");
}

}  // namespace

double Accuracy(std::span<const Label> truth, std::span<const Label> predicted) {
  CheckAligned(truth.size(), predicted.size());
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i].is_class() && predicted[i].is_class() &&
        truth[i].class_index() == predicted[i].class_index()) {
      ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(truth.size());
}

double Rmse(std::span<const Label> truth, std::span<const Label> predicted) {
  CheckAligned(truth.size(), predicted.size());
  double sq = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double d = truth[i].value() - predicted[i].value();
    sq += d * d;
  }
  return std::sqrt(sq / static_cast<double>(truth.size()));
}

double AveragePrecision(std::span<const bool> positive, std::span<const double> scores) {
  CheckAligned(positive.size(), scores.size());
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double sum = 0;
  std::size_t hits = 0;
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (!positive[order[r]]) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(r + 1);
  }
  if (hits == 0) return 0.0;
  return sum / static_cast<double>(hits);
}

}  // namespace feccm
