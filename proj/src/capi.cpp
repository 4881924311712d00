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

#include "feccm/feccm.h"

#include <cstdlib>
#include <cstring>
#include <fstream>
#include <new>
#include <sstream>
#include <string>

#include "feccm/errors.hpp"
#include "feccm/harness.hpp"

struct feccm_dataset {
  feccm::MultiTaskDataset data;
};

struct feccm_model {
  std::unique_ptr<feccm::Predictor> predictor;
};

namespace {

thread_local std::string last_error;

int Record(int status, const std::string& message) {
  last_error = message;
  return status;
}

// Runs fn, translating exceptions into status codes.
template <typename Fn>
int Guard(Fn&& fn) {
  try {
    fn();
    last_error.clear();
    return FECCM_OK;
  } catch (const feccm::Error& e) {
    return Record(static_cast<int>(e.code()), e.what());
  } catch (const nlohmann::json::exception& e) {
    return Record(FECCM_E_PARSE, e.what());
  } catch (const std::bad_alloc&) {
    return Record(FECCM_E_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return Record(FECCM_E_INTERNAL, e.what());
  } catch (...) {
    return Record(FECCM_E_INTERNAL, "unknown failure");
  }
}

char* Dup(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void Require(bool ok, const char* what) {
  if (!ok) feccm::Fail(feccm::ErrorCode::kContract, std::string("null argument: ") + what);
}

nlohmann::json ParseJson(const char* text, feccm::ErrorCode code, const char* what) {
  if (text == nullptr || *text == '\0') return nlohmann::json();
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    feccm::Fail(code, std::string(what) + ": " + e.what());
  }
}

std::string ReadFile(const char* path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) feccm::Fail(feccm::ErrorCode::kIo, std::string("cannot open '") + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<feccm::TaskSpec> ParseSpecs(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    feccm::Fail(feccm::ErrorCode::kParse, std::string("task specs: ") + e.what());
  }
  return feccm::SpecsFromJson(doc);
}

}  // namespace

extern "C" {

const char* feccm_version(void) { return "1.0.0"; }

const char* feccm_status_name(int status) {
  if (status == FECCM_E_INTERNAL) return "internal";
  if (status < 0 || status > FECCM_E_IO) return "unknown";
  return feccm::ErrorCodeName(static_cast<feccm::ErrorCode>(status));
}

const char* feccm_last_error(void) { return last_error.c_str(); }

void feccm_string_free(char* s) { std::free(s); }

int feccm_dataset_load(const char* specs_json_path, const char* csv_path, feccm_dataset** out) {
  return Guard([&] {
    Require(specs_json_path && csv_path && out, "dataset_load");
    auto specs = ParseSpecs(ReadFile(specs_json_path));
    *out = new feccm_dataset{feccm::LoadDataset(csv_path, std::move(specs))};
  });
}

int feccm_dataset_parse(const char* specs_json, const char* csv, feccm_dataset** out) {
  return Guard([&] {
    Require(specs_json && csv && out, "dataset_parse");
    auto specs = ParseSpecs(specs_json);
    std::istringstream in(csv);
    *out = new feccm_dataset{feccm::ReadDataset(in, std::move(specs))};
  });
}

int feccm_dataset_save(const feccm_dataset* data, const char* csv_path) {
  return Guard([&] {
    Require(data && csv_path, "dataset_save");
    feccm::SaveDataset(csv_path, data->data);
  });
}

int feccm_dataset_to_csv(const feccm_dataset* data, char** out) {
  return Guard([&] {
    Require(data && out, "dataset_to_csv");
    std::ostringstream ss;
    feccm::WriteDataset(ss, data->data);
    *out = Dup(ss.str());
  });
}

int feccm_dataset_specs_json(const feccm_dataset* data, char** out) {
  return Guard([&] {
    Require(data && out, "dataset_specs_json");
    *out = Dup(feccm::SpecsToJson(data->data.specs()).dump(2));
  });
}

int feccm_dataset_info(const feccm_dataset* data, size_t* num_samples, int* num_tasks) {
  return Guard([&] {
    Require(data != nullptr, "dataset_info");
    if (num_samples) *num_samples = data->data.size();
    if (num_tasks) *num_tasks = data->data.num_tasks();
  });
}

int feccm_dataset_labeled(const feccm_dataset* data, int task, size_t* count) {
  return Guard([&] {
    Require(data && count, "dataset_labeled");
    if (task < 1 || task > data->data.num_tasks()) {
      feccm::Fail(feccm::ErrorCode::kLookup, "no task " + std::to_string(task));
    }
    *count = data->data.partition_rows(task).size();
  });
}

void feccm_dataset_free(feccm_dataset* data) { delete data; }

int feccm_synth(const char* generator_json, uint64_t seed, feccm_dataset** train,
                feccm_dataset** test) {
  return Guard([&] {
    Require(generator_json && train && test, "synth");
    feccm::SyntheticConfig config = feccm::SyntheticConfigFromJson(
        ParseJson(generator_json, feccm::ErrorCode::kConfig, "generator config"));
    config.seed = seed;
    auto [tr, te] = feccm::GenerateSynthetic(config);
    auto a = std::make_unique<feccm_dataset>(feccm_dataset{std::move(tr)});
    auto b = std::make_unique<feccm_dataset>(feccm_dataset{std::move(te)});
    *train = a.release();
    *test = b.release();
  });
}

int feccm_train(const char* method, const feccm_dataset* train, const feccm_dataset* holdout,
                const char* options_json, feccm_model** out, char** trace_csv) {
  return Guard([&] {
    Require(method && train && out, "train");
    const feccm::TrainOptions options = feccm::ParseTrainOptions(
        ParseJson(options_json, feccm::ErrorCode::kConfig, "training options"),
        train->data.num_tasks());
    feccm::MethodResult result =
        feccm::TrainMethod(method, train->data, options, holdout ? &holdout->data : nullptr);
    std::string trace;
    if (trace_csv && result.trace) {
      std::ostringstream ss;
      result.trace->WriteCsv(ss, train->data.specs(), false);
      trace = ss.str();
    }
    auto model = std::make_unique<feccm_model>(feccm_model{std::move(result.predictor)});
    if (trace_csv) *trace_csv = Dup(trace);
    *out = model.release();
  });
}

int feccm_model_parse(const char* json, feccm_model** out) {
  return Guard([&] {
    Require(json && out, "model_parse");
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(json);
    } catch (const nlohmann::json::exception& e) {
      feccm::Fail(feccm::ErrorCode::kParse, std::string("model document: ") + e.what());
    }
    *out = new feccm_model{feccm::PredictorFromJson(doc)};
  });
}

int feccm_model_load(const char* path, feccm_model** out) {
  std::string text;
  const int status = Guard([&] {
    Require(path && out, "model_load");
    text = ReadFile(path);
  });
  if (status != FECCM_OK) return status;
  return feccm_model_parse(text.c_str(), out);
}

int feccm_model_save(const feccm_model* model, const char* path) {
  return Guard([&] {
    Require(model && path, "model_save");
    std::ofstream out(path, std::ios::binary);
    if (!out) feccm::Fail(feccm::ErrorCode::kIo, std::string("cannot write '") + path + "'");
    out << model->predictor->ToJson().dump(2) << '\n';
    if (!out) feccm::Fail(feccm::ErrorCode::kIo, std::string("write failed: '") + path + "'");
  });
}

int feccm_model_to_json(const feccm_model* model, char** out) {
  return Guard([&] {
    Require(model && out, "model_to_json");
    *out = Dup(model->predictor->ToJson().dump(2));
  });
}

void feccm_model_free(feccm_model* model) { delete model; }

int feccm_predict(const feccm_model* model, const feccm_dataset* data, char** csv) {
  return Guard([&] {
    Require(model && data && csv, "predict");
    std::ostringstream ss;
    feccm::WritePredictions(ss, *model->predictor, data->data);
    *csv = Dup(ss.str());
  });
}

int feccm_evaluate(const feccm_model* model, const feccm_dataset* data, const char* options_json,
                   char** report_json) {
  return Guard([&] {
    Require(model && data && report_json, "evaluate");
    const nlohmann::json doc = ParseJson(options_json, feccm::ErrorCode::kConfig, "evaluate options");
    feccm::EvalOptions options;
    std::string method;
    if (!doc.is_null()) {
      try {
        for (const auto& [key, value] : doc.items()) {
          if (key != "bootstrap" && key != "seed" && key != "threads" && key != "method") {
            feccm::Fail(feccm::ErrorCode::kConfig, "unknown evaluate option '" + key + "'");
          }
        }
        options.bootstrap = doc.value("bootstrap", options.bootstrap);
        options.seed = doc.value("seed", options.seed);
        options.threads = doc.value("threads", options.threads);
        method = doc.value("method", method);
      } catch (const nlohmann::json::exception& e) {
        feccm::Fail(feccm::ErrorCode::kConfig, std::string("evaluate options: ") + e.what());
      }
    }
    if (options.threads < 1) feccm::Fail(feccm::ErrorCode::kConfig, "threads must be positive");
    *report_json = Dup(feccm::Evaluate(*model->predictor, data->data, options, method).ToJson().dump(2));
  });
}

int feccm_experiment(const char* config_path, const char* out_dir) {
  return Guard([&] {
    Require(config_path && out_dir, "experiment");
    feccm::RunExperiment(std::string(config_path), std::string(out_dir));
  });
}

int feccm_select_pi(const feccm_dataset* train, int target, const char* options_json,
                    char** result_json) {
  return Guard([&] {
    Require(train && result_json, "select_pi");
    const int n = train->data.num_tasks();
    if (target < 1 || target > n) {
      feccm::Fail(feccm::ErrorCode::kConfig, "target task " + std::to_string(target) + " out of range");
    }
    const feccm::TrainOptions options = feccm::ParseTrainOptions(
        ParseJson(options_json, feccm::ErrorCode::kConfig, "training options"), n);
    const auto setup = feccm::CascadeSetup::Default(train->data.specs(), options.l2_penalty);
    const auto grid = options.feedback.pi_grid.empty()
                          ? feccm::DefaultPiGrid(train->data, target)
                          : options.feedback.pi_grid;
    const feccm::PiSelection sel = feccm::SelectPiTargetSpecific(
        train->data, target, grid, options.feedback.folds, setup, options.feedback);
    nlohmann::json doc{{"target", target}, {"pi", sel.pi}, {"grid", grid}, {"scores", sel.scores}};
    *result_json = Dup(doc.dump(2));
  });
}

}  // extern "C"
