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

#include <algorithm>
#include <atomic>
#include <functional>
#include <numeric>

#include "feccm/errors.hpp"
#include "feccm/harness.hpp"
#include "feccm/training.hpp"
#include "oracles.hpp"
#include "support.hpp"

namespace {

using namespace feccm;
using feccm::testing::Rng;
using feccm::testing::UniformInt;

ErrorCode CodeOf(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::kOk;
}

std::pair<MultiTaskDataset, MultiTaskDataset> Small(std::uint64_t seed, int per_task = 60,
                                                     Coverage coverage = Coverage::kDisjoint) {
  SyntheticConfig g = feccm::testing::SmallSynthetic(seed, per_task);
  g.coverage = coverage;
  return GenerateSynthetic(g);
}

// Wraps a built-in classifier and hides its likelihood.
class Opaque : public Classifier {
 public:
  explicit Opaque(std::shared_ptr<const Classifier> inner) : inner_(std::move(inner)) {}
  int input_dim() const override { return inner_->input_dim(); }
  int output_dim() const override { return inner_->output_dim(); }
  Vector Infer(const Vector& input) const override { return inner_->Infer(input); }
  nlohmann::json ToJson() const override { return inner_->ToJson(); }

 private:
  std::shared_ptr<const Classifier> inner_;
};

// Learner that takes neither weights nor latent targets; counts latent
// targets it is handed anyway.
class OpaqueFactory : public ClassifierFactory {
 public:
  explicit OpaqueFactory(ClassifierKind kind) : inner_(kind) {}
  std::string name() const override { return "opaque"; }
  bool accepts_weights() const override { return false; }
  bool accepts_latent_targets() const override { return false; }
  int LatentDim(const TaskSpec& spec) const override { return inner_.LatentDim(spec); }
  std::shared_ptr<const Classifier> Learn(std::span<const Vector> inputs,
                                          std::span<const Target> targets,
                                          std::span<const double> weights, int output_dim,
                                          const Classifier*, std::uint64_t seed) const override {
    for (const Target& t : targets) latent_targets += std::holds_alternative<Vector>(t);
    for (double w : weights) {
      if (w != 1.0) unit_weights = false;
    }
    return std::make_shared<Opaque>(inner_.Learn(inputs, targets, weights, output_dim, nullptr, seed));
  }
  mutable std::atomic<int> latent_targets{0};
  mutable std::atomic<bool> unit_weights{true};

 private:
  LinearFactory inner_;
};

CascadeModel ZeroLatentColumns(const CascadeModel& m) {
  std::vector<CascadeModel::ClassifierPtr> omega;
  for (int j = 0; j < m.num_tasks(); ++j) {
    ClassifierParams p = feccm::testing::ParamsOf(*m.second_layers()[j]);
    const int d = m.specs()[j].feature_dim;
    p.weights.block(0, d, p.weights.rows(), p.weights.cols() - 1 - d).setZero();
    omega.push_back(std::make_shared<LinearClassifier>(p));
  }
  return CascadeModel(m.specs(), m.first_layers(), omega, m.adapters(), m.standardizer());
}

}  // namespace

TEST_CASE("label encodings and initial latents") {
  const TaskSpec cat = TaskSpec::Categorical(1, "c", 3, 2);
  Vector expect(3);
  expect << -4, -4, 4;
  CHECK(EncodeLabel(cat, Label::Class(2), 3) == expect);
  const TaskSpec reg = TaskSpec::Regression(2, "r", 1);
  CHECK(EncodeLabel(reg, Label::Value(2.5), 1) == Vector::Constant(1, 2.5));

  const std::vector<TaskSpec> specs = {TaskSpec::Categorical(1, "a", 2, 1), TaskSpec::Regression(2, "b", 1),
                                       TaskSpec::Categorical(3, "c", 3, 1)};
  const MultiTaskDataset data(specs, {Sample{0, {Vector::Ones(1), Vector::Ones(1), Vector::Ones(1)},
                                             {Label::Class(1), std::nullopt, std::nullopt}}});
  const LatentState z = InitializeLatents(data);
  CHECK(z.has(0, 1));
  CHECK(!z.has(0, 2));
  CHECK(!z.has(0, 3));
  CHECK(z.at(0, 1) == Vector::Constant(1, 4.0));
}

TEST_CASE("importance factor instantiations") {
  const std::vector<std::size_t> sizes = {100, 300};
  const auto pi = UnifiedPi(sizes);
  CHECK(pi[0] == 0.75);
  CHECK(pi[1] == 0.25);
  CHECK(OneGoalPi(3, 2) == std::vector<double>{0, 1, 0});
  CHECK(CodeOf([] { (void)OneGoalPi(3, 4); }) == ErrorCode::kConfig);

  Rng rng(51);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::size_t> s(UniformInt(rng, 1, 6));
    for (auto& v : s) v = UniformInt(rng, 1, 2000);
    const auto p = UnifiedPi(s);
    CHECK(std::abs(std::accumulate(p.begin(), p.end(), 0.0) - 1.0) < 1e-12);
    for (std::size_t j = 0; j < s.size(); ++j) {
      // pi_j |Gamma_j| is the same for every task.
      CHECK(p[j] * s[j] == doctest::Approx(p[0] * s[0]).epsilon(1e-12));
    }
  }
}

TEST_CASE("sample weights follow the max rule") {
  Rng rng(52);
  for (int trial = 0; trial < 30; ++trial) {
    const auto specs = feccm::testing::RandomSpecs(rng, 3);
    const auto data = feccm::testing::RandomDataset(rng, specs, 40, 0.5);
    std::vector<double> pi = {0.5, 0.3, 0.2};
    std::shuffle(pi.begin(), pi.end(), rng);
    bool any = false;
    for (TaskId t = 1; t <= 3; ++t) any = any || !data.partition_rows(t).empty();
    if (!any) continue;
    const auto w = SampleWeights(data, pi);
    std::vector<double> raw(data.size(), 0.0);
    for (std::size_t r = 0; r < data.size(); ++r) {
      for (int t = 0; t < 3; ++t) {
        if (data[r].labels[t]) raw[r] = std::max(raw[r], pi[t]);
      }
    }
    const double total = std::accumulate(raw.begin(), raw.end(), 0.0);
    for (std::size_t r = 0; r < data.size(); ++r) {
      CHECK(w[r] == doctest::Approx(raw[r] * data.size() / total).epsilon(1e-14));
    }
  }
}

TEST_CASE("zero feedback iterations reproduce the plain cascade") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto [train, test] = Small(seed);
    FeedbackConfig cfg;
    cfg.max_outer_iters = 0;
    cfg.seed = seed;
    const TrainResult fe = TrainFeccm(train, cfg);
    const CascadeModel ccm = TrainCcm(train, cfg);
    CHECK(fe.model.ToJson().dump() == ccm.ToJson().dump());
    for (const Sample& s : test.samples()) {
      const auto a = Predict(fe.model, s), b = Predict(ccm, s);
      for (std::size_t j = 0; j < a.size(); ++j) CHECK(a[j].scores == b[j].scores);
    }
  }
}

TEST_CASE("first layer of the plain cascade is fitted on ground truth") {
  const auto [train, test] = Small(4);
  const CascadeModel ccm = TrainCcm(train);
  const Standardizer st = Standardizer::Fit(train);
  for (TaskId t = 1; t <= train.num_tasks(); ++t) {
    const TaskSpec& spec = train.spec(t);
    const int dim = ccm.latent_dim(t);
    std::vector<Vector> x;
    std::vector<Target> y;
    for (std::size_t r : train.partition_rows(t)) {
      x.push_back(st.Apply(t, train[r].psi(t)));
      y.push_back(Target(EncodeLabel(spec, train[r].label(t), dim)));
    }
    const std::vector<double> w(x.size(), 1.0);
    const ClassifierParams direct = Learn(x, y, w, ClassifierKind::kRidgeRegression, dim);
    CHECK((direct.weights - feccm::testing::ParamsOf(ccm.first_layer(t)).weights).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("feedback objective matches a term-by-term oracle") {
  Rng rng(53);
  const auto [train, test] = Small(5);
  const CascadeModel ccm = TrainCcm(train);
  for (const Sample& s : train.samples()) {
    std::vector<Vector> z;
    for (TaskId t = 1; t <= ccm.num_tasks(); ++t) z.push_back(feccm::testing::RandomVector(rng, ccm.latent_dim(t), 3.0));
    const double got = FeedbackObjective(ccm, s, z);
    CHECK(got == doctest::Approx(feccm::testing::FeedbackObjectiveRef(ccm, s, z)).epsilon(1e-12));
  }
}

TEST_CASE("a single-label sample has one second-layer term") {
  const auto [train, test] = Small(6);
  const CascadeModel ccm = TrainCcm(train);
  for (std::size_t r = 0; r < 20; ++r) {
    const Sample& s = train[r];
    REQUIRE(s.num_labels() == 1);
    const auto z = InferFirstLayer(ccm, s);
    Sample unlabeled = s;
    for (auto& l : unlabeled.labels) l.reset();
    const double j1 = FeedbackObjective(ccm, unlabeled, z);
    const double all = FeedbackObjective(ccm, s, z);
    TaskId j = 1;
    while (!s.has_label(j)) ++j;
    const Vector phi = AugmentFeatures(ccm.standardizer().Apply(j, s.psi(j)), z, ccm.adapters()[j - 1]);
    CHECK(all - j1 == doctest::Approx(ccm.second_layer(j).NegLogLikelihood(phi, s.label(j))).epsilon(1e-12));
  }
}

TEST_CASE("feedback gradient matches finite differences") {
  Rng rng(54);
  const auto [train, test] = Small(7, 60, Coverage::kMixed);
  const CascadeModel ccm = TrainCcm(train);
  for (const Sample& s : train.samples()) {
    std::vector<Vector> z;
    for (TaskId t = 1; t <= ccm.num_tasks(); ++t) z.push_back(feccm::testing::RandomVector(rng, ccm.latent_dim(t), 2.0));
    const std::vector<int> dims = ccm.latent_dims();
    const double err = CheckGradient(
        [&](const Vector& x) { return FeedbackObjective(ccm, s, SplitLatents(x, dims)); },
        [&](const Vector& x) { return FeedbackGradient(ccm, s, x); }, FlattenLatents(z), 1e-5);
    CHECK(err < 1e-5);
  }
}

TEST_CASE("latents stay at the prediction when the second layer ignores them") {
  const auto [train, test] = Small(8);
  const CascadeModel nulled = ZeroLatentColumns(TrainCcm(train));
  const LatentState z = FeedbackStep(nulled, train, LatentState(), FeedbackConfig{});
  for (std::size_t r = 0; r < train.size(); ++r) {
    const auto hat = InferFirstLayer(nulled, train[r]);
    for (TaskId t = 1; t <= nulled.num_tasks(); ++t) CHECK((z.at(r, t) - hat[t - 1]).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("feedback never raises a sample's objective") {
  for (std::uint64_t seed : {9u, 10u}) {
    const auto [train, test] = Small(seed, 60, Coverage::kMixed);
    const CascadeModel ccm = TrainCcm(train);
    const LatentState z = FeedbackStep(ccm, train, LatentState(), FeedbackConfig{});
    for (std::size_t r = 0; r < train.size(); ++r) {
      const auto hat = InferFirstLayer(ccm, train[r]);
      CHECK(FeedbackObjective(ccm, train[r], z.row(r)) <= FeedbackObjective(ccm, train[r], hat));
    }
  }
}

TEST_CASE("all-ridge feedback solves the normal equations") {
  SyntheticConfig g;
  g.tasks = {SyntheticTask{LabelKind::kRegression, 0, 3, Metric::kRmse},
             SyntheticTask{LabelKind::kRegression, 0, 2, Metric::kRmse}};
  g.samples_per_task = 40;
  g.test_samples = 10;
  g.coverage = Coverage::kMixed;
  g.seed = 55;
  const auto [train, test] = GenerateSynthetic(g);
  const CascadeModel ccm = TrainCcm(train);
  const LatentState z = FeedbackStep(ccm, train, LatentState(), FeedbackConfig{});
  for (std::size_t r = 0; r < train.size(); ++r) {
    const Vector expect = feccm::testing::RidgeFeedbackClosedForm(ccm, train[r]);
    CHECK((FlattenLatents(z.row(r)) - expect).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("hard-EM trace does not increase") {
  for (std::uint64_t seed : {11u, 12u, 13u}) {
    const auto [train, test] = Small(seed, 80);
    FeedbackConfig cfg;
    cfg.seed = seed;
    cfg.tol = 0;
    const TrainResult res = TrainFeccm(train, cfg);
    REQUIRE(res.trace.rows.size() == 6);
    for (std::size_t i = 1; i < res.trace.rows.size(); ++i) {
      CHECK(res.trace.rows[i].objective_after_feedback <= res.trace.rows[i - 1].objective + 1e-6);
      CHECK(res.trace.rows[i].objective <= res.trace.rows[i].objective_after_feedback + 1e-6);
    }
  }
}

TEST_CASE("default configuration") {
  const FeedbackConfig cfg;
  CHECK(cfg.max_outer_iters == 5);
  CHECK(cfg.mode == FeedbackMode::kExact);
  CHECK(cfg.margin == 4.0);
  CHECK(cfg.surrogate_target == SurrogateTarget::kModelOutput);
}

TEST_CASE("training is deterministic and thread-count independent") {
  const auto [train, test] = Small(14);
  for (FeedbackMode mode : {FeedbackMode::kExact, FeedbackMode::kSurrogate}) {
    FeedbackConfig cfg;
    cfg.mode = mode;
    cfg.max_outer_iters = 2;
    cfg.seed = 3;
    const std::string a = TrainFeccm(train, cfg).model.ToJson().dump();
    const std::string b = TrainFeccm(train, cfg).model.ToJson().dump();
    cfg.threads = 4;
    const std::string c = TrainFeccm(train, cfg).model.ToJson().dump();
    CHECK(a == b);
    CHECK(a == c);
  }
}

TEST_CASE("disjoint coverage trains to finite parameters") {
  const auto [train, test] = Small(15);
  for (TaskId t = 1; t <= train.num_tasks(); ++t) {
    for (std::size_t r : train.partition_rows(t)) CHECK(train[r].num_labels() == 1);
  }
  FeedbackConfig cfg;
  cfg.max_outer_iters = 3;
  const TrainResult res = TrainFeccm(train, cfg);
  for (TaskId t = 1; t <= 3; ++t) {
    CHECK(feccm::testing::ParamsOf(res.model.first_layer(t)).weights.allFinite());
    CHECK(feccm::testing::ParamsOf(res.model.second_layer(t)).weights.allFinite());
  }
}

TEST_CASE("relabeling tasks permutes the model") {
  const auto [train, test] = Small(16, 50, Coverage::kMixed);
  const std::vector<int> perm = {2, 0, 1};  // new task t+1 is old task perm[t]+1
  std::vector<TaskSpec> specs;
  for (int t = 0; t < 3; ++t) {
    TaskSpec s = train.spec(perm[t] + 1);
    s.id = t + 1;
    specs.push_back(s);
  }
  const auto permute = [&](const MultiTaskDataset& d) {
    std::vector<Sample> out;
    for (const Sample& s : d.samples()) {
      Sample p;
      p.id = s.id;
      for (int t = 0; t < 3; ++t) {
        p.features.push_back(s.features[perm[t]]);
        p.labels.push_back(s.labels[perm[t]]);
      }
      out.push_back(p);
    }
    return MultiTaskDataset(specs, out);
  };
  const MultiTaskDataset ptrain = permute(train), ptest = permute(test);
  FeedbackConfig cfg;
  cfg.max_outer_iters = 2;
  cfg.pi = {0.5, 0.3, 0.2};
  FeedbackConfig pcfg = cfg;
  for (int t = 0; t < 3; ++t) pcfg.pi[t] = cfg.pi[perm[t]];
  const CascadeModel a = TrainFeccm(train, cfg).model;
  const CascadeModel b = TrainFeccm(ptrain, pcfg).model;
  for (std::size_t r = 0; r < test.size(); ++r) {
    const auto pa = Predict(a, test[r]);
    const auto pb = Predict(b, ptest[r]);
    for (int t = 0; t < 3; ++t) CHECK((pa[perm[t]].scores - pb[t].scores).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("exact feedback needs likelihoods") {
  const auto [train, test] = Small(17);
  CascadeSetup setup = CascadeSetup::Default(train.specs());
  std::vector<std::shared_ptr<OpaqueFactory>> opaque;
  for (const TaskSpec& s : train.specs()) {
    opaque.push_back(std::make_shared<OpaqueFactory>(DefaultKind(s)));
    setup.second_layer[s.id - 1] = opaque.back();
  }
  FeedbackConfig cfg;
  cfg.max_outer_iters = 1;
  CHECK(CodeOf([&] { (void)TrainFeccm(train, setup, cfg); }) == ErrorCode::kCapability);
  cfg.mode = FeedbackMode::kSurrogate;
  const TrainResult res = TrainFeccm(train, setup, cfg);
  CHECK(res.trace.rows.size() >= 2);
  for (const auto& f : opaque) CHECK(f->unit_weights.load());
}

TEST_CASE("label-only learners get thresholded targets") {
  const auto [train, test] = Small(18);
  CascadeSetup setup = CascadeSetup::Default(train.specs());
  std::vector<std::shared_ptr<OpaqueFactory>> first;
  for (const TaskSpec& s : train.specs()) {
    first.push_back(std::make_shared<OpaqueFactory>(ClassifierKind::kRidgeRegression));
    setup.first_layer[s.id - 1] = first.back();
  }
  FeedbackConfig cfg;
  cfg.mode = FeedbackMode::kSurrogate;
  cfg.max_outer_iters = 2;
  (void)TrainFeccm(train, setup, cfg);
  // Categorical tasks 1 and 2 are thresholded; regression task 3 keeps scores.
  CHECK(first[0]->latent_targets.load() == 0);
  CHECK(first[1]->latent_targets.load() == 0);
  CHECK(first[2]->latent_targets.load() > 0);
}

TEST_CASE("surrogate objective at the prediction has no first-layer part") {
  const auto [train, test] = Small(19, 60, Coverage::kMixed);
  const CascadeModel ccm = TrainCcm(train);
  FeedbackConfig cfg;
  cfg.mode = FeedbackMode::kSurrogate;
  const auto sur = FitSurrogates(ccm, train, cfg);
  for (const Sample& s : train.samples()) {
    const auto hat = InferFirstLayer(ccm, s);
    double j2 = 0;
    for (TaskId j = 1; j <= 3; ++j) {
      if (!s.has_label(j)) continue;
      const Vector phi = AugmentFeatures(ccm.standardizer().Apply(j, s.psi(j)), hat, ccm.adapters()[j - 1]);
      Vector t = EncodeLabel(ccm.specs()[j - 1], s.label(j), static_cast<int>(sur[j - 1].alpha.rows()));
      if (t.size() > 1) t.array() -= t.mean();
      j2 += (t - sur[j - 1].Predict(phi)).squaredNorm();
    }
    CHECK(SurrogateObjective(ccm, sur, s, hat) == doctest::Approx(j2).epsilon(1e-12));
  }
}

TEST_CASE("surrogate feedback minimizes its quadratic") {
  Rng rng(56);
  const auto [train, test] = Small(20, 60, Coverage::kMixed);
  const CascadeModel ccm = TrainCcm(train);
  FeedbackConfig cfg;
  cfg.mode = FeedbackMode::kSurrogate;
  cfg.beta = BetaPolicy{false, 0.5};
  const auto sur = FitSurrogates(ccm, train, cfg);
  const LatentState z = FeedbackStep(ccm, train, LatentState(), cfg, sur);
  const std::vector<int> dims = ccm.latent_dims();
  for (std::size_t r = 0; r < train.size(); ++r) {
    const Vector best = FlattenLatents(z.row(r));
    const double f = SurrogateObjective(ccm, sur, train[r], z.row(r));
    for (int probe = 0; probe < 5; ++probe) {
      const Vector moved = best + feccm::testing::RandomVector(rng, best.size(), 1e-3);
      CHECK(SurrogateObjective(ccm, sur, train[r], SplitLatents(moved, dims)) >= f - 1e-12);
    }
  }
}

TEST_CASE("target-specific selection picks the cross-validated argmax") {
  const auto [train, test] = Small(21, 40);
  const CascadeSetup setup = CascadeSetup::Default(train.specs());
  FeedbackConfig cfg;
  cfg.max_outer_iters = 1;
  const std::vector<std::vector<double>> grid = {UnifiedPi(train), OneGoalPi(3, 3)};
  const PiSelection sel = SelectPiTargetSpecific(train, 3, grid, 2, setup, cfg);
  REQUIRE(sel.scores.size() == 2);

  // Recompute the hold-out scores with explicit folds.
  const auto folds = FoldAssignment(train, 2, cfg.seed);
  for (std::size_t g = 0; g < grid.size(); ++g) {
    FeedbackConfig inner = cfg;
    inner.pi = grid[g];
    double sum = 0;
    for (int f = 0; f < 2; ++f) {
      std::vector<std::size_t> fit, held;
      for (std::size_t r = 0; r < train.size(); ++r) (folds[r] == f ? held : fit).push_back(r);
      const CascadeModel m = TrainFeccm(train.Subset(fit), setup, inner).model;
      const MultiTaskDataset h = train.Subset(held);
      std::vector<Label> truth;
      std::vector<Vector> scores;
      for (std::size_t r : h.partition_rows(3)) {
        truth.push_back(h[r].label(3));
        scores.push_back(Predict(m, h[r])[2].scores);
      }
      sum += MetricValue(h.spec(3), truth, scores);
    }
    CHECK(sel.scores[g] == sum / 2);
  }
  // RMSE: lower wins; ties go to the unified point.
  const std::size_t win = sel.scores[1] < sel.scores[0] ? 1 : 0;
  CHECK(sel.pi == grid[win]);
}

TEST_CASE("target-specific ties prefer unified, then lexicographic order") {
  // With every sample labeled for every task all weights coincide, so every
  // grid point trains the same model.
  const auto [train, test] = Small(22, 30, Coverage::kFull);
  const CascadeSetup setup = CascadeSetup::Default(train.specs());
  FeedbackConfig cfg;
  cfg.max_outer_iters = 1;
  const std::vector<double> unified = UnifiedPi(train);
  const std::vector<std::vector<double>> with_unified = {OneGoalPi(3, 2), OneGoalPi(3, 1), unified};
  const PiSelection a = SelectPiTargetSpecific(train, 1, with_unified, 2, setup, cfg);
  CHECK(a.scores[0] == a.scores[1]);
  CHECK(a.scores[0] == a.scores[2]);
  CHECK(a.pi == unified);
  const std::vector<std::vector<double>> axes = {OneGoalPi(3, 1), OneGoalPi(3, 3), OneGoalPi(3, 2)};
  const PiSelection b = SelectPiTargetSpecific(train, 1, axes, 2, setup, cfg);
  CHECK(b.pi == OneGoalPi(3, 3));
  const std::vector<std::vector<double>> none;
  CHECK(CodeOf([&] { (void)SelectPiTargetSpecific(train, 1, none, 2, setup, cfg); }) == ErrorCode::kContract);
}

TEST_CASE("default grid contents") {
  const auto [train, test] = Small(23, 20);
  const auto grid = DefaultPiGrid(train, 2);
  const auto u = UnifiedPi(train);
  CHECK(grid[0] == u);
  CHECK(grid[1] == OneGoalPi(3, 2));
  CHECK(grid[2][1] == doctest::Approx(0.5 * u[1] + 0.5));
  CHECK(grid.size() == 5);
}

TEST_CASE("configuration errors") {
  const auto [train, test] = Small(24, 20);
  FeedbackConfig cfg;
  cfg.pi = {0.5, 0.5, 0.5};
  CHECK(CodeOf([&] { (void)TrainFeccm(train, cfg); }) == ErrorCode::kConfig);
  cfg.pi.clear();
  cfg.instantiation = Instantiation::OneGoal(5);
  CHECK(CodeOf([&] { (void)TrainFeccm(train, cfg); }) == ErrorCode::kConfig);
  cfg.instantiation = Instantiation::OneGoal(1);
  cfg.pi = {0.2, 0.3, 0.5};
  CHECK(CodeOf([&] { (void)TrainFeccm(train, cfg); }) == ErrorCode::kConfig);
  CHECK(CodeOf([] { (void)ParseBetaPolicy("lots"); }) == ErrorCode::kConfig);
  CHECK(ParseBetaPolicy("0.25").value == 0.25);
  CHECK(ParseBetaPolicy("auto").automatic);
}
