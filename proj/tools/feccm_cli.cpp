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

// feccm command line. Uses only the C interface of libfeccm.
//
// Exit codes: 0 success, 2 configuration, 3 data, 4 numeric, 1 other.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "feccm/feccm.h"
#include "json.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitOther = 1;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

int ExitCode(int status) {
  switch (status) {
    case FECCM_OK: return kExitOk;
    case FECCM_E_CONFIG:
    case FECCM_E_CAPABILITY:
    case FECCM_E_CONTRACT: return kExitConfig;
    case FECCM_E_PARSE:
    case FECCM_E_SCHEMA:
    case FECCM_E_LOOKUP:
    case FECCM_E_DEGENERATE_SPLIT:
    case FECCM_E_EMPTY_FIT:
    case FECCM_E_EMPTY_EVAL:
    case FECCM_E_IO: return kExitData;
    case FECCM_E_NUMERIC: return kExitNumeric;
    default: return kExitOther;
  }
}

// Thrown to unwind with a status after printing the message.
struct Failure {
  int status;
};

void Check(int status) {
  if (status == FECCM_OK) return;
  std::cerr << "feccm: " << feccm_status_name(status) << ": " << feccm_last_error() << '\n';
  throw Failure{status};
}

[[noreturn]] void ConfigError(const std::string& message) {
  std::cerr << "feccm: config: " << message << '\n';
  throw Failure{FECCM_E_CONFIG};
}

std::string Take(char* s) {
  std::string out = s ? s : "";
  feccm_string_free(s);
  return out;
}

void WriteText(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out || !(out << text)) {
    std::cerr << "feccm: io: cannot write '" << path << "'\n";
    throw Failure{FECCM_E_IO};
  }
}

std::string ReadText(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    std::cerr << "feccm: io: cannot open '" << path << "'\n";
    throw Failure{FECCM_E_IO};
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Dataset {
  feccm_dataset* p = nullptr;
  ~Dataset() { feccm_dataset_free(p); }
};

struct Model {
  feccm_model* p = nullptr;
  ~Model() { feccm_model_free(p); }
};

// Training flags shared by train and xval-pi.
struct TrainFlags {
  std::string options_file;
  std::optional<std::uint64_t> seed;
  std::optional<int> iters;
  std::optional<std::string> mode;
  std::optional<std::string> pi;
  std::optional<std::string> beta;
  std::optional<int> target;
  std::optional<int> threads;
  std::optional<int> folds;
  std::optional<double> l2;

  void Add(CLI::App* app) {
    app->add_option("--options", options_file, "training options JSON file");
    app->add_option("--seed", seed, "random seed");
    app->add_option("--iters", iters, "maximum outer iterations");
    app->add_option("--mode", mode, "feedback mode: exact|surrogate");
    app->add_option("--pi", pi, "importance factors: unified|onegoal:<k>|grid");
    app->add_option("--beta", beta, "surrogate sparsity: auto or a number");
    app->add_option("--target", target, "target task for grid selection");
    app->add_option("--threads", threads, "worker threads");
    app->add_option("--folds", folds, "cross-validation folds");
    app->add_option("--l2", l2, "L2 penalty of the built-in classifiers");
  }

  std::string Json() const {
    nlohmann::json doc = nlohmann::json::object();
    if (!options_file.empty()) {
      try {
        doc = nlohmann::json::parse(ReadText(options_file));
      } catch (const nlohmann::json::exception& e) {
        ConfigError(std::string("options file: ") + e.what());
      }
    }
    if (seed) doc["seed"] = *seed;
    if (iters) doc["max_outer_iters"] = *iters;
    if (mode) doc["mode"] = *mode;
    if (target) doc["target_task"] = *target;
    if (pi) doc["pi"] = *pi;
    if (beta) doc["beta"] = *beta;
    if (threads) doc["threads"] = *threads;
    if (folds) doc["folds"] = *folds;
    if (l2) doc["l2_penalty"] = *l2;
    return doc.dump();
  }
};

void LoadData(const std::string& specs, const std::string& csv, Dataset* out) {
  Check(feccm_dataset_load(specs.c_str(), csv.c_str(), &out->p));
}

// Specs file, or the specs embedded in the model when none is given.
void LoadDataForModel(const Model& model, const std::string& specs, const std::string& csv,
                      Dataset* out) {
  if (!specs.empty()) {
    LoadData(specs, csv, out);
    return;
  }
  char* json = nullptr;
  Check(feccm_model_to_json(model.p, &json));
  const nlohmann::json doc = nlohmann::json::parse(Take(json));
  Check(feccm_dataset_parse(doc.at("specs").dump().c_str(), ReadText(csv).c_str(), &out->p));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"feccm: cascaded multi-task classification with feedback"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(feccm_version()));

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic train/test pair");
  std::string synth_config;
  std::uint64_t synth_seed = 0;
  std::string synth_out = ".";
  synth->add_option("--config", synth_config, "generator JSON file")->required();
  synth->add_option("--seed", synth_seed, "random seed");
  synth->add_option("--out-dir", synth_out, "output directory");

  // train
  auto* train = app.add_subcommand("train", "train a model");
  std::string train_specs, train_data, train_holdout, train_method = "feccm", train_model,
      train_trace;
  TrainFlags train_flags;
  train->add_option("--specs", train_specs, "task specs JSON")->required();
  train->add_option("--train", train_data, "training CSV")->required();
  train->add_option("--holdout", train_holdout, "hold-out CSV for trace metrics");
  train->add_option("--method", train_method, "base|all_features_direct|ccm|feccm|feccm_unified|"
                                              "feccm_one_goal|feccm_target_specific");
  train->add_option("--model", train_model, "output model JSON")->required();
  train->add_option("--trace", train_trace, "output trace CSV");
  train_flags.Add(train);

  // predict
  auto* predict = app.add_subcommand("predict", "write predictions");
  std::string pred_model, pred_specs, pred_data, pred_out;
  predict->add_option("--model", pred_model, "model JSON")->required();
  predict->add_option("--specs", pred_specs, "task specs JSON (default: from the model)");
  predict->add_option("--data", pred_data, "input CSV")->required();
  predict->add_option("--out", pred_out, "output CSV (default stdout)");

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "evaluate a model");
  std::string eval_model, eval_specs, eval_data, eval_out;
  int eval_bootstrap = 1000;
  std::uint64_t eval_seed = 0;
  int eval_threads = 1;
  evaluate->add_option("--model", eval_model, "model JSON")->required();
  evaluate->add_option("--specs", eval_specs, "task specs JSON (default: from the model)");
  evaluate->add_option("--data", eval_data, "test CSV")->required();
  evaluate->add_option("--bootstrap", eval_bootstrap, "bootstrap resamples");
  evaluate->add_option("--seed", eval_seed, "bootstrap seed");
  evaluate->add_option("--threads", eval_threads, "worker threads");
  evaluate->add_option("--out", eval_out, "output report JSON (default stdout)");

  // experiment
  auto* experiment = app.add_subcommand("experiment", "run an experiment config");
  std::string exp_config, exp_out;
  experiment->add_option("--config", exp_config, "experiment JSON")->required();
  experiment->add_option("--out-dir", exp_out, "output directory")->required();

  // xval-pi
  auto* xval = app.add_subcommand("xval-pi", "cross-validated importance factors");
  std::string xval_specs, xval_data, xval_out;
  TrainFlags xval_flags;
  xval->add_option("--specs", xval_specs, "task specs JSON")->required();
  xval->add_option("--train", xval_data, "training CSV")->required();
  xval->add_option("--out", xval_out, "output JSON (default stdout)");
  xval_flags.Add(xval);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*synth) {
      const std::string generator = ReadText(synth_config);
      Dataset tr, te;
      Check(feccm_synth(generator.c_str(), synth_seed, &tr.p, &te.p));
      std::error_code ec;
      std::filesystem::create_directories(synth_out, ec);
      if (ec) {
        std::cerr << "feccm: io: cannot create '" << synth_out << "'\n";
        return kExitData;
      }
      const std::filesystem::path dir(synth_out);
      char* specs = nullptr;
      Check(feccm_dataset_specs_json(tr.p, &specs));
      WriteText((dir / "specs.json").string(), Take(specs) + "\n");
      Check(feccm_dataset_save(tr.p, (dir / "train.csv").string().c_str()));
      Check(feccm_dataset_save(te.p, (dir / "test.csv").string().c_str()));
    } else if (*train) {
      Dataset tr, ho;
      LoadData(train_specs, train_data, &tr);
      if (!train_holdout.empty()) LoadData(train_specs, train_holdout, &ho);
      if (train_flags.pi && *train_flags.pi == "grid" && !train_flags.target) {
        ConfigError("--pi grid needs --target");
      }
      const std::string options = train_flags.Json();
      Model model;
      char* trace = nullptr;
      Check(feccm_train(train_method.c_str(), tr.p, ho.p, options.c_str(), &model.p,
                        train_trace.empty() ? nullptr : &trace));
      Check(feccm_model_save(model.p, train_model.c_str()));
      if (!train_trace.empty()) WriteText(train_trace, Take(trace));
    } else if (*predict) {
      Model model;
      Check(feccm_model_load(pred_model.c_str(), &model.p));
      Dataset data;
      LoadDataForModel(model, pred_specs, pred_data, &data);
      char* csv = nullptr;
      Check(feccm_predict(model.p, data.p, &csv));
      WriteText(pred_out, Take(csv));
    } else if (*evaluate) {
      Model model;
      Check(feccm_model_load(eval_model.c_str(), &model.p));
      Dataset data;
      LoadDataForModel(model, eval_specs, eval_data, &data);
      const nlohmann::json options{
          {"bootstrap", eval_bootstrap}, {"seed", eval_seed}, {"threads", eval_threads}};
      char* report = nullptr;
      Check(feccm_evaluate(model.p, data.p, options.dump().c_str(), &report));
      WriteText(eval_out, Take(report) + "\n");
    } else if (*experiment) {
      Check(feccm_experiment(exp_config.c_str(), exp_out.c_str()));
    } else if (*xval) {
      Dataset tr;
      LoadData(xval_specs, xval_data, &tr);
      if (!xval_flags.target) ConfigError("xval-pi needs --target");
      const std::string options = xval_flags.Json();
      char* result = nullptr;
      Check(feccm_select_pi(tr.p, *xval_flags.target, options.c_str(), &result));
      WriteText(xval_out, Take(result) + "\n");
    }
  } catch (const Failure& f) {
    return ExitCode(f.status);
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "feccm: parse: " << e.what() << '\n';
    return kExitData;
  }
  return kExitOk;
}
