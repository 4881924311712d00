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

// Shared numerical routines: a descent minimizer, the L1 proximal operator, an
// ISTA lasso solver and a finite-difference gradient check.

#ifndef FECCM_OPTIMIZE_HPP_
#define FECCM_OPTIMIZE_HPP_

#include <functional>
#include <span>
#include <vector>

#include "feccm/tasks.hpp"

namespace feccm {

struct DescentConfig {
  int max_iters = 500;
  // Stop once an accepted step lowers f by less than rel_tol * |f|.
  double rel_tol = 1e-8;
  // Stop once |grad|_inf <= grad_tol (0 disables).
  double grad_tol = 0.0;
  double armijo_c = 1e-4;
  double backtrack = 0.5;
};

void ValidateDescentConfig(const DescentConfig& config);

using ObjectiveFn = std::function<double(const Vector&)>;
using GradientFn = std::function<Vector(const Vector&)>;

struct DescentResult {
  Vector x;
  double value = 0.0;
  int iterations = 0;
  // Objective after every accepted step, starting with f(x0).
  std::vector<double> trace;
};

// Descent along limited-memory BFGS directions (steepest descent until
// curvature pairs exist) with Armijo backtracking. Every accepted step
// satisfies the Armijo condition, or its derivative form once the decrease is
// below the resolution of f. In that regime f may rise by a few ulps; the
// trace is otherwise non-increasing.
DescentResult Minimize(const ObjectiveFn& objective, const GradientFn& gradient,
                       const Vector& x0, const DescentConfig& config = {});

// Elementwise sign(v) * max(|v| - t, 0).
Vector SoftThreshold(const Vector& v, double t);

// Sparse linear surrogate of one second-layer classifier. Row r of `alpha`
// maps [design_row, 1] to output dimension r; the last column is the bias.
struct SurrogateModel {
  Matrix alpha;
  double beta = 0.0;
  TaskId target_task = 0;

  Vector Predict(const Vector& design_row) const;
};

struct LassoConfig {
  int max_iters = 200000;
  double kkt_tol = 1e-5;
};

// Minimizes sum_rows |target - alpha [x; 1]|^2 + beta * |alpha_nonbias|_1 for
// every target column independently, by ISTA with backtracking followed by an
// exact solve on the detected support.
SurrogateModel LassoFit(const Matrix& design, const Matrix& targets, double beta,
                        const LassoConfig& config = {});

double LassoObjective(const Matrix& design, const Vector& targets, const Vector& alpha_row,
                      double beta);

// Largest violation of the lasso optimality conditions for one alpha row.
double LassoKktResidual(const Matrix& design, const Vector& targets, const Vector& alpha_row,
                        double beta);

// Beta that makes every non-bias coefficient zero: 2 |X_c^T (y - mean y)|_inf
// for centered columns X_c.
double LassoNullBeta(const Matrix& design, const Matrix& targets);

// Hold-out selection over {0, 1e-3, 1e-2, 1e-1, 1} x |design^T targets|_inf / rows;
// every fifth row is held out. Returns the beta with the lowest hold-out
// squared error (ties to the smaller beta).
double SelectBeta(const Matrix& design, const Matrix& targets);

// Max over coordinates of |fd - grad| / max(1, |grad|) with central
// differences of step h.
double CheckGradient(const ObjectiveFn& f, const GradientFn& grad, const Vector& x, double h);

// Runs fn(i) for i in [0, n) on up to `threads` workers, each owning one
// contiguous chunk. If calls throw, the exception of the lowest index is
// rethrown after all workers finish.
void ParallelFor(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

}  // namespace feccm

#endif  // FECCM_OPTIMIZE_HPP_
