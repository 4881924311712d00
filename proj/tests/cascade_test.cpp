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

#include <functional>

#include "feccm/cascade.hpp"
#include "feccm/errors.hpp"
#include "support.hpp"

namespace {

using namespace feccm;
using feccm::testing::RandomMatrix;
using feccm::testing::RandomVector;
using feccm::testing::Rng;
using feccm::testing::Uniform;
using feccm::testing::UniformInt;

ErrorCode CodeOf(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::kOk;
}

std::shared_ptr<const Classifier> Linear(ClassifierKind kind, Matrix w) {
  ClassifierParams p;
  p.kind = kind;
  p.weights = std::move(w);
  return std::make_shared<LinearClassifier>(p);
}

ClassifierKind SecondKind(const TaskSpec& spec, Rng& rng) {
  if (!spec.categorical()) return ClassifierKind::kRidgeRegression;
  if (spec.num_classes == 2 && UniformInt(rng, 0, 1) == 0) return ClassifierKind::kBinaryLogistic;
  return ClassifierKind::kMultinomialLogistic;
}

// Random cascade with ridge or logistic first layers, random adapters and a
// random standardizer.
CascadeModel RandomCascade(Rng& rng, const std::vector<TaskSpec>& specs, bool drop_some = false) {
  const int n = static_cast<int>(specs.size());
  std::vector<CascadeModel::ClassifierPtr> theta, omega;
  std::vector<int> zdim;
  for (const TaskSpec& s : specs) {
    const int k = UniformInt(rng, 1, 3);
    const ClassifierKind kind = k == 1 && UniformInt(rng, 0, 1) ? ClassifierKind::kBinaryLogistic
                                                                 : ClassifierKind::kRidgeRegression;
    theta.push_back(Linear(kind, RandomMatrix(rng, k, s.feature_dim + 1)));
    zdim.push_back(k);
  }
  AdapterTable adapters = IdentityAdapters(n);
  if (drop_some) {
    for (auto& row : adapters) {
      for (int i = 0; i < n; ++i) {
        const int r = UniformInt(rng, 0, 2);
        if (r == 1) row[i] = Adapter::Drop();
        if (r == 2) row[i] = Adapter::Select({zdim[i] - 1});
      }
    }
  }
  for (int j = 0; j < n; ++j) {
    int in = specs[j].feature_dim;
    for (int i = 0; i < n; ++i) in += adapters[j][i].OutputDim(zdim[i]);
    const ClassifierKind kind = SecondKind(specs[j], rng);
    const int out = kind == ClassifierKind::kBinaryLogistic ? 1 : specs[j].output_dim();
    omega.push_back(Linear(kind, RandomMatrix(rng, out, in + 1)));
  }
  Standardizer st = Standardizer::Identity(specs);
  for (int t = 0; t < n; ++t) {
    st.mean[t] = RandomVector(rng, specs[t].feature_dim);
    st.scale[t] = (RandomVector(rng, specs[t].feature_dim).array().abs() + 0.5).matrix();
  }
  return CascadeModel(specs, theta, omega, adapters, st);
}

Sample RandomSample(Rng& rng, const std::vector<TaskSpec>& specs) {
  Sample s;
  for (const TaskSpec& spec : specs) {
    s.features.push_back(RandomVector(rng, spec.feature_dim));
    s.labels.push_back(feccm::testing::RandomLabel(rng, spec));
  }
  return s;
}

const Matrix& W(const Classifier& c) { return dynamic_cast<const LinearClassifier&>(c).params().weights; }

}  // namespace

TEST_CASE("augmented feature dimensions") {
  const std::vector<Vector> z = {Vector::Ones(3), Vector::Ones(1), Vector::Ones(2)};
  const std::vector<Adapter> id(3, Adapter::Identity());
  CHECK(AugmentFeatures(Vector::Zero(5), z, id).size() == 11);

  const std::vector<Vector> six = {Vector::Ones(8), Vector::Ones(1), Vector::Ones(8),
                                   Vector::Ones(1), Vector::Ones(4), Vector::Ones(3)};
  const std::vector<Adapter> id6(6, Adapter::Identity());
  CHECK(AugmentFeatures(Vector::Zero(0), six, id6).size() == 25);

  std::vector<Adapter> drop = id;
  drop[0] = Adapter::Drop();
  CHECK(AugmentFeatures(Vector::Zero(5), z, drop).size() == 8);

  const std::vector<Vector> short_z = {Vector::Ones(3), Vector::Ones(1)};
  try {
    (void)AugmentFeatures(Vector::Zero(5), short_z, id);
    FAIL("expected a contract error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kContract);
    CHECK(std::string(e.what()).find("task 3") != std::string::npos);
  }
  std::vector<Vector> missing = z;
  missing[1] = Vector();
  try {
    (void)AugmentFeatures(Vector::Zero(5), missing, id);
    FAIL("expected a contract error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kContract);
    CHECK(std::string(e.what()).find("task 2") != std::string::npos);
  }
}

TEST_CASE("augmentation orders blocks by task") {
  Vector psi(2);
  psi << 10, 11;
  const std::vector<Vector> z = {Vector::Constant(1, 1.0), (Vector(2) << 2, 3).finished()};
  const std::vector<Adapter> ad = {Adapter::Identity(), Adapter::Select({1})};
  Vector expect(4);
  expect << 10, 11, 1, 3;
  CHECK(AugmentFeatures(psi, z, ad) == expect);
}

TEST_CASE("first layer examples") {
  const std::vector<TaskSpec> one = {TaskSpec::Regression(1, "r", 1)};
  Matrix w(1, 2);
  w << 2, 1;
  const CascadeModel ridge(one, {Linear(ClassifierKind::kRidgeRegression, w)},
                           {Linear(ClassifierKind::kRidgeRegression, Matrix::Zero(1, 3))},
                           IdentityAdapters(1), Standardizer::Identity(one));
  Sample s;
  s.features = {Vector::Constant(1, 3.0)};
  s.labels = {std::nullopt};
  CHECK(InferFirstLayer(ridge, s)[0] == Vector::Constant(1, 7.0));

  const std::vector<TaskSpec> cat = {TaskSpec::Categorical(1, "c", 3, 2)};
  const CascadeModel zero(cat, {Linear(ClassifierKind::kMultinomialLogistic, Matrix::Zero(3, 3))},
                          {Linear(ClassifierKind::kMultinomialLogistic, Matrix::Zero(3, 6))},
                          IdentityAdapters(1), Standardizer::Identity(cat));
  Sample c;
  c.features = {Vector::Constant(2, 5.0)};
  c.labels = {std::nullopt};
  CHECK(InferFirstLayer(zero, c)[0] == Vector::Zero(3));
  CHECK(Predict(zero, c)[0].label == Label::Class(0));
}

TEST_CASE("predict matches a hand-unrolled two-task pass") {
  const std::vector<TaskSpec> specs = {TaskSpec::Categorical(1, "a", 2, 2), TaskSpec::Regression(2, "b", 1)};
  Matrix t1(1, 3), t2(1, 2), o1(2, 5), o2(1, 4);
  t1 << 1.0, -2.0, 0.5;
  t2 << 3.0, -1.0;
  o1 << 0.5, 0.0, 1.0, -1.0, 0.2,
        -0.5, 1.0, 0.0, 2.0, -0.1;
  o2 << 2.0, 0.25, -0.5, 1.0;
  Standardizer st = Standardizer::Identity(specs);
  st.mean[0] << 1.0, 0.0;
  st.scale[0] << 2.0, 1.0;
  const CascadeModel model(specs,
                           {Linear(ClassifierKind::kRidgeRegression, t1), Linear(ClassifierKind::kRidgeRegression, t2)},
                           {Linear(ClassifierKind::kMultinomialLogistic, o1), Linear(ClassifierKind::kRidgeRegression, o2)},
                           IdentityAdapters(2), st);
  Sample s;
  s.features = {(Vector(2) << 3.0, 1.0).finished(), Vector::Constant(1, 2.0)};
  s.labels = {std::nullopt, std::nullopt};
  // psi1 -> ((3-1)/2, 1) = (1, 1); z1 = 1 - 2 + 0.5 = -0.5; z2 = 3*2 - 1 = 5.
  // task 1: phi = (1, 1, -0.5, 5); scores = (0.5 - 0.5 - 5 + 0.2, -0.5 + 1 + 10 - 0.1) = (-4.8, 10.4).
  // task 2: phi = (2, -0.5, 5); score = 4 - 0.125 - 2.5 + 1 = 2.375.
  const auto pred = Predict(model, s);
  CHECK(pred[0].scores[0] == doctest::Approx(-4.8).epsilon(1e-14));
  CHECK(pred[0].scores[1] == doctest::Approx(10.4).epsilon(1e-14));
  CHECK(pred[0].label == Label::Class(1));
  CHECK(pred[1].scores[0] == doctest::Approx(2.375).epsilon(1e-14));
  CHECK(pred[1].label == Label::Value(pred[1].scores[0]));
}

TEST_CASE("prediction agrees with a direct composition on random models") {
  Rng rng(41);
  for (int trial = 0; trial < 50; ++trial) {
    const auto specs = feccm::testing::RandomSpecs(rng, UniformInt(rng, 1, 4));
    const CascadeModel model = RandomCascade(rng, specs, true);
    const Sample s = RandomSample(rng, specs);
    std::vector<Vector> z;
    for (std::size_t i = 0; i < specs.size(); ++i) {
      const Vector x = (s.features[i] - model.standardizer().mean[i]).cwiseQuotient(model.standardizer().scale[i]);
      const Matrix& w = W(*model.first_layers()[i]);
      z.push_back(w.leftCols(w.cols() - 1) * x + w.col(w.cols() - 1));
    }
    const auto pred = Predict(model, s);
    for (std::size_t j = 0; j < specs.size(); ++j) {
      Vector phi = (s.features[j] - model.standardizer().mean[j]).cwiseQuotient(model.standardizer().scale[j]);
      for (std::size_t i = 0; i < specs.size(); ++i) {
        const Vector part = model.adapters()[j][i].Apply(z[i]);
        Vector grown(phi.size() + part.size());
        grown << phi, part;
        phi = grown;
      }
      CHECK(phi.size() == model.second_layer_input_dim(static_cast<TaskId>(j + 1)));
      const Matrix& w = W(*model.second_layers()[j]);
      const Vector expect = w.leftCols(w.cols() - 1) * phi + w.col(w.cols() - 1);
      CHECK((pred[j].scores - expect).cwiseAbs().maxCoeff() < 1e-12);
    }
    const auto again = Predict(model, s);
    for (std::size_t j = 0; j < specs.size(); ++j) CHECK(again[j].scores == pred[j].scores);
  }
}

TEST_CASE("zeroed latent columns reduce the second layer to the features alone") {
  Rng rng(42);
  for (int trial = 0; trial < 50; ++trial) {
    const auto specs = feccm::testing::RandomSpecs(rng, UniformInt(rng, 1, 4));
    const CascadeModel model = RandomCascade(rng, specs);
    std::vector<CascadeModel::ClassifierPtr> omega;
    std::vector<ClassifierParams> plain;
    for (std::size_t j = 0; j < specs.size(); ++j) {
      const auto& p = dynamic_cast<const LinearClassifier&>(*model.second_layers()[j]).params();
      ClassifierParams zeroed = p;
      const int d = specs[j].feature_dim;
      zeroed.weights.block(0, d, p.weights.rows(), p.weights.cols() - 1 - d).setZero();
      omega.push_back(std::make_shared<LinearClassifier>(zeroed));
      ClassifierParams direct = p;
      direct.weights.resize(p.weights.rows(), d + 1);
      direct.weights << p.weights.leftCols(d), p.weights.col(p.weights.cols() - 1);
      plain.push_back(direct);
    }
    const CascadeModel nulled(specs, model.first_layers(), omega, model.adapters(), model.standardizer());
    const Sample s = RandomSample(rng, specs);
    const auto pred = Predict(nulled, s);
    for (std::size_t j = 0; j < specs.size(); ++j) {
      const Vector x = model.standardizer().Apply(static_cast<TaskId>(j + 1), s.features[j]);
      CHECK(pred[j].label == PredictLabel(plain[j], x, specs[j].kind));
    }
  }
}

TEST_CASE("model documents roundtrip") {
  Rng rng(43);
  for (int trial = 0; trial < 20; ++trial) {
    const auto specs = feccm::testing::RandomSpecs(rng, UniformInt(rng, 1, 3));
    const CascadeModel model = RandomCascade(rng, specs, true);
    const nlohmann::json doc = model.ToJson();
    CHECK(doc.at("schema") == kModelSchema);
    const CascadeModel back = CascadeModel::FromJson(doc);
    CHECK(back.ToJson().dump() == doc.dump());
    const Sample s = RandomSample(rng, specs);
    const auto a = Predict(model, s), b = Predict(back, s);
    for (std::size_t j = 0; j < specs.size(); ++j) CHECK(a[j].scores == b[j].scores);
  }
  nlohmann::json bad = {{"schema", "other/1"}};
  CHECK(CodeOf([&] { (void)CascadeModel::FromJson(bad); }) == ErrorCode::kSchema);
}

TEST_CASE("second-layer input length is fixed across a dataset") {
  Rng rng(44);
  const auto specs = feccm::testing::RandomSpecs(rng, 3);
  const CascadeModel model = RandomCascade(rng, specs, true);
  const auto data = feccm::testing::RandomDataset(rng, specs, 40);
  for (TaskId j = 1; j <= 3; ++j) {
    const std::vector<Adapter>& ad = model.adapters()[j - 1];
    for (const Sample& s : data.samples()) {
      const auto z = InferFirstLayer(model, s);
      CHECK(AugmentFeatures(s.psi(j), z, ad).size() == model.second_layer_input_dim(j));
    }
  }
}

TEST_CASE("latent state bookkeeping") {
  LatentState st({4, 9}, 2);
  CHECK(!st.complete());
  st.set(0, 1, Vector::Ones(2));
  CHECK(st.has(0, 1));
  CHECK(!st.has(0, 2));
  CHECK(CodeOf([&] { (void)st.at(1, 2); }) == ErrorCode::kContract);
  st.set(0, 2, Vector::Ones(1));
  st.set(1, 1, Vector::Ones(2));
  st.set(1, 2, Vector::Ones(1));
  CHECK(st.complete());
  CHECK(CodeOf([&] { st.set(0, 1, Vector::Constant(1, std::nan(""))); }) == ErrorCode::kNumeric);
}

TEST_CASE("standardizer fitting") {
  const std::vector<TaskSpec> specs = {TaskSpec::Regression(1, "r", 2)};
  std::vector<Sample> samples;
  for (int i = 0; i < 4; ++i) {
    samples.push_back(Sample{i, {(Vector(2) << i, 5.0).finished()}, {Label::Value(0)}});
  }
  const Standardizer st = Standardizer::Fit(MultiTaskDataset(specs, samples));
  CHECK(st.mean[0][0] == doctest::Approx(1.5));
  CHECK(st.scale[0][1] == 1.0);
  CHECK(st.Apply(1, (Vector(2) << 1.5, 5.0).finished()).isZero(1e-15));

  samples[0].features[0][0] = 1e308;
  samples[1].features[0][0] = -1e308;
  bool numeric = false;
  try {
    (void)Standardizer::Fit(MultiTaskDataset(specs, samples));
  } catch (const Error& e) {
    numeric = e.code() == ErrorCode::kNumeric;
  }
  CHECK(numeric);
}
