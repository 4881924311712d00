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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <string>

#include "feccm/feccm.h"

namespace {

const char* kGenerator = R"({
  "tasks": [
    {"label_space": "categorical", "num_classes": 3, "feature_dim": 4, "metric": "accuracy"},
    {"label_space": "regression", "feature_dim": 2, "metric": "rmse"}
  ],
  "samples_per_task": 40,
  "test_samples": 30
})";

std::string Take(char* s) {
  std::string out = s ? s : "";
  feccm_string_free(s);
  return out;
}

struct Pair {
  feccm_dataset* train = nullptr;
  feccm_dataset* test = nullptr;
  explicit Pair(uint64_t seed) { REQUIRE(feccm_synth(kGenerator, seed, &train, &test) == FECCM_OK); }
  ~Pair() {
    feccm_dataset_free(train);
    feccm_dataset_free(test);
  }
};

TEST_CASE("status names and version") {
  CHECK(std::string(feccm_version()) == "1.0.0");
  CHECK(std::string(feccm_status_name(FECCM_OK)) == "ok");
  CHECK(std::string(feccm_status_name(FECCM_E_CONFIG)) == "config error");
  CHECK(std::string(feccm_status_name(FECCM_E_INTERNAL)) == "internal");
  CHECK(std::string(feccm_status_name(12345)) == "unknown");
}

TEST_CASE("synthetic datasets roundtrip through csv") {
  Pair p(3);
  size_t n = 0;
  int tasks = 0;
  REQUIRE(feccm_dataset_info(p.train, &n, &tasks) == FECCM_OK);
  CHECK(n == 80);
  CHECK(tasks == 2);
  size_t labeled = 0;
  CHECK(feccm_dataset_labeled(p.train, 1, &labeled) == FECCM_OK);
  CHECK(labeled == 40);
  CHECK(feccm_dataset_labeled(p.train, 3, &labeled) == FECCM_E_LOOKUP);

  char* csv = nullptr;
  char* specs = nullptr;
  REQUIRE(feccm_dataset_to_csv(p.train, &csv) == FECCM_OK);
  REQUIRE(feccm_dataset_specs_json(p.train, &specs) == FECCM_OK);
  const std::string csv_text = Take(csv), specs_text = Take(specs);
  feccm_dataset* back = nullptr;
  REQUIRE(feccm_dataset_parse(specs_text.c_str(), csv_text.c_str(), &back) == FECCM_OK);
  char* again = nullptr;
  REQUIRE(feccm_dataset_to_csv(back, &again) == FECCM_OK);
  CHECK(Take(again) == csv_text);
  feccm_dataset_free(back);
}

TEST_CASE("train, serialize, reload and predict") {
  Pair p(4);
  feccm_model* model = nullptr;
  char* trace = nullptr;
  REQUIRE(feccm_train("feccm_unified", p.train, p.test, R"({"max_outer_iters": 2, "seed": 9})",
                      &model, &trace) == FECCM_OK);
  const std::string trace_text = Take(trace);
  CHECK(trace_text.find("objective") != std::string::npos);

  char* json = nullptr;
  REQUIRE(feccm_model_to_json(model, &json) == FECCM_OK);
  const std::string doc = Take(json);
  feccm_model* back = nullptr;
  REQUIRE(feccm_model_parse(doc.c_str(), &back) == FECCM_OK);
  char* a = nullptr;
  char* b = nullptr;
  REQUIRE(feccm_predict(model, p.test, &a) == FECCM_OK);
  REQUIRE(feccm_predict(back, p.test, &b) == FECCM_OK);
  CHECK(Take(a) == Take(b));

  char* report = nullptr;
  REQUIRE(feccm_evaluate(back, p.test, R"({"bootstrap": 100, "seed": 1})", &report) == FECCM_OK);
  CHECK(Take(report).find("\"rmse\"") != std::string::npos);
  feccm_model_free(model);
  feccm_model_free(back);
}

TEST_CASE("training through the interface is deterministic") {
  Pair p(5);
  std::string docs[2];
  for (int threads : {1, 4}) {
    feccm_model* m = nullptr;
    const std::string opts = R"({"max_outer_iters": 2, "threads": )" + std::to_string(threads) + "}";
    REQUIRE(feccm_train("feccm_unified", p.train, nullptr, opts.c_str(), &m, nullptr) == FECCM_OK);
    char* json = nullptr;
    REQUIRE(feccm_model_to_json(m, &json) == FECCM_OK);
    docs[threads == 4] = Take(json);
    feccm_model_free(m);
  }
  CHECK(docs[0] == docs[1]);
}

TEST_CASE("errors come back as status codes with messages") {
  Pair p(6);
  feccm_model* m = nullptr;
  CHECK(feccm_train("no_such_method", p.train, nullptr, nullptr, &m, nullptr) == FECCM_E_CONFIG);
  CHECK(std::string(feccm_last_error()).size() > 0);
  CHECK(feccm_train("ccm", p.train, nullptr, R"({"mode": "sideways"})", &m, nullptr) == FECCM_E_CONFIG);
  CHECK(feccm_train("ccm", p.train, nullptr, "{not json", &m, nullptr) == FECCM_E_CONFIG);
  CHECK(feccm_train("ccm", nullptr, nullptr, nullptr, &m, nullptr) == FECCM_E_CONTRACT);
  CHECK(feccm_model_parse("{\"schema\": \"other\"}", &m) == FECCM_E_SCHEMA);
  CHECK(feccm_model_parse("[", &m) == FECCM_E_PARSE);
  CHECK(feccm_model_load("/nonexistent/model.json", &m) == FECCM_E_IO);

  feccm_dataset* d = nullptr;
  CHECK(feccm_dataset_parse("[{\"id\": 1, \"name\": \"a\", \"label_space\": \"regression\", "
                            "\"feature_dim\": 1, \"metric\": \"rmse\"}]",
                            "id,f1_1,y1\n0,1.0\n", &d) == FECCM_E_PARSE);
  CHECK(std::string(feccm_last_error()).find("row") != std::string::npos);
  CHECK(feccm_select_pi(p.train, 7, nullptr, nullptr) == FECCM_E_CONTRACT);
  char* out = nullptr;
  CHECK(feccm_select_pi(p.train, 7, nullptr, &out) == FECCM_E_CONFIG);

  REQUIRE(feccm_train("ccm", p.train, nullptr, nullptr, &m, nullptr) == FECCM_OK);
  CHECK(std::string(feccm_last_error()).empty());
  feccm_model_free(m);
}

}  // namespace
