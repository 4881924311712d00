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

#include "feccm/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <exception>
#include <thread>

#include "feccm/errors.hpp"

namespace feccm {

void ValidateDescentConfig(const DescentConfig& config) {
  if (config.max_iters < 0 || !(config.rel_tol >= 0) || !(config.grad_tol >= 0) ||
      !(config.armijo_c > 0 && config.armijo_c < 1) ||
      !(config.backtrack > 0 && config.backtrack < 1)) {
    Fail(ErrorCode::kConfig, "invalid descent configuration");
  }
}

namespace {

// Two-loop recursion: approximate inverse Hessian times g.
Vector LbfgsDirection(const Vector& g, const std::deque<Vector>& s, const std::deque<Vector>& y) {
  Vector q = g;
  const std::size_t m = s.size();
  std::vector<double> alpha(m);
  for (std::size_t k = m; k-- > 0;) {
    alpha[k] = s[k].dot(q) / y[k].dot(s[k]);
    q -= alpha[k] * y[k];
  }
  if (m > 0) q *= s.back().dot(y.back()) / y.back().squaredNorm();
  for (std::size_t k = 0; k < m; ++k) {
    const double beta = y[k].dot(q) / y[k].dot(s[k]);
    q += (alpha[k] - beta) * s[k];
  }
  return -q;
}

}  // namespace

DescentResult Minimize(const ObjectiveFn& objective, const GradientFn& gradient,
                       const Vector& x0, const DescentConfig& config) {
  ValidateDescentConfig(config);
  constexpr std::size_t kMemory = 8;
  DescentResult result;
  result.x = x0;
  result.value = objective(x0);
  if (!std::isfinite(result.value)) {
    Fail(ErrorCode::kNumeric, "minimize: non-finite objective at iterate 0");
  }
  Vector g = gradient(x0);
  if (!g.allFinite()) Fail(ErrorCode::kNumeric, "minimize: non-finite gradient at iterate 0");
  result.trace.push_back(result.value);

  std::deque<Vector> hist_s, hist_y;
  for (int iter = 1; iter <= config.max_iters; ++iter) {
    const double g_inf = g.lpNorm<Eigen::Infinity>();
    if (g_inf == 0.0 || g_inf <= config.grad_tol) break;

    Vector d = LbfgsDirection(g, hist_s, hist_y);
    double slope = g.dot(d);
    if (!(slope < 0) || !d.allFinite()) {
      hist_s.clear();
      hist_y.clear();
      d = -g;
      slope = -g.squaredNorm();
    }
    // Without curvature information the first step moves at most one unit.
    double step = hist_s.empty() ? std::min(1.0, 1.0 / g_inf) : 1.0;

    Vector x_new;
    Vector g_new;
    double f_new = 0;
    bool accepted = false;
    for (int ls = 0; ls < 200; ++ls) {
      x_new = result.x + step * d;
      f_new = objective(x_new);
      if (std::isfinite(f_new) && f_new <= result.value + config.armijo_c * step * slope) {
        accepted = true;
        break;
      }
      // Near the optimum the decrease drops below the resolution of f; fall
      // back to the derivative form of the Armijo test, which is exact for
      // quadratics, tolerating a change in f of a few ulps either way.
      if (std::isfinite(f_new) && f_new <= result.value + 8e-16 * std::abs(result.value) &&
          std::abs(result.value - f_new) <= 1e-10 * std::max(1.0, std::abs(result.value))) {
        g_new = gradient(x_new);
        if (g_new.allFinite() && g_new.dot(d) <= (2.0 * config.armijo_c - 1.0) * slope) {
          accepted = true;
          break;
        }
        g_new.resize(0);
      }
      step *= config.backtrack;
      if (step < 1e-300) break;
    }
    if (!accepted) break;  // no representable decrease left

    if (g_new.size() == 0) g_new = gradient(x_new);
    if (!g_new.allFinite()) {
      Fail(ErrorCode::kNumeric, "minimize: non-finite gradient at iterate " + std::to_string(iter));
    }
    Vector sk = x_new - result.x;
    Vector yk = g_new - g;
    const double f_old = result.value;
    result.x = std::move(x_new);
    result.value = f_new;
    g = std::move(g_new);
    result.iterations = iter;
    result.trace.push_back(f_new);
    if (config.rel_tol > 0 && f_old - f_new < config.rel_tol * std::abs(f_old)) break;
    // Steps at the rounding level of x mean the gradient is all noise.
    if (sk.lpNorm<Eigen::Infinity>() <= 1e-15 * (1.0 + result.x.lpNorm<Eigen::Infinity>())) break;

    if (sk.dot(yk) > 1e-12 * sk.norm() * yk.norm()) {
      hist_s.push_back(std::move(sk));
      hist_y.push_back(std::move(yk));
      if (hist_s.size() > kMemory) {
        hist_s.pop_front();
        hist_y.pop_front();
      }
    }
  }
  return result;
}

Vector SoftThreshold(const Vector& v, double t) {
  if (t < 0) Fail(ErrorCode::kContract, "soft threshold needs t >= 0");
  Vector out(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double mag = std::abs(v[i]) - t;
    out[i] = mag > 0 ? std::copysign(mag, v[i]) : 0.0;
  }
  return out;
}

Vector SurrogateModel::Predict(const Vector& design_row) const {
  const Eigen::Index p = alpha.cols() - 1;
  return alpha.leftCols(p) * design_row + alpha.col(p);
}

namespace {

Matrix WithBias(const Matrix& design) {
  Matrix x(design.rows(), design.cols() + 1);
  x.leftCols(design.cols()) = design;
  x.col(design.cols()).setOnes();
  return x;
}

// KKT residual from the smooth gradient g = 2 (G a - b).
double KktFromGradient(const Vector& g, const Vector& a, double beta) {
  const Eigen::Index p = a.size() - 1;
  double worst = std::abs(g[p]);
  for (Eigen::Index k = 0; k < p; ++k) {
    const double r = a[k] != 0.0 ? std::abs(g[k] + beta * (a[k] > 0 ? 1.0 : -1.0))
                                 : std::max(0.0, std::abs(g[k]) - beta);
    worst = std::max(worst, r);
  }
  return worst;
}

double SmoothValue(const Matrix& gram, const Vector& b, double yy, const Vector& a) {
  return a.dot(gram * a) - 2.0 * a.dot(b) + yy;
}

// Exact minimizer on a fixed support and sign pattern, if consistent.
bool PolishOnSupport(const Matrix& gram, const Vector& b, double beta, Vector* a) {
  const Eigen::Index p = a->size() - 1;
  std::vector<Eigen::Index> support;
  for (Eigen::Index k = 0; k < p; ++k) {
    if ((*a)[k] != 0.0) support.push_back(k);
  }
  support.push_back(p);
  const auto m = static_cast<Eigen::Index>(support.size());
  Matrix gs(m, m);
  Vector rhs(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const Eigen::Index ki = support[i];
    for (Eigen::Index j = 0; j < m; ++j) gs(i, j) = gram(ki, support[j]);
    const double sign = ki == p ? 0.0 : ((*a)[ki] > 0 ? 1.0 : -1.0);
    rhs[i] = b[ki] - 0.5 * beta * sign;
  }
  Eigen::LDLT<Matrix> ldlt(gs);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || ldlt.rcond() < 1e-14) return false;
  const Vector sol = ldlt.solve(rhs);
  if (!sol.allFinite()) return false;
  for (Eigen::Index i = 0; i + 1 < m; ++i) {
    const double old = (*a)[support[i]];
    if (sol[i] == 0.0 || (sol[i] > 0) != (old > 0)) return false;
  }
  Vector candidate = Vector::Zero(p + 1);
  for (Eigen::Index i = 0; i < m; ++i) candidate[support[i]] = sol[i];
  *a = candidate;
  return true;
}

Vector LassoColumn(const Matrix& gram, const Vector& b, double yy, double beta,
                   double lipschitz, const LassoConfig& config) {
  const Eigen::Index p = gram.rows() - 1;
  Vector a = Vector::Zero(p + 1);
  double step = lipschitz > 0 ? 1.0 / lipschitz : 1.0;
  const auto prox = [&](const Vector& v, double t) {
    Vector out = SoftThreshold(v, beta * t);
    out[p] = v[p];
    return out;
  };
  for (int iter = 0; iter < config.max_iters; ++iter) {
    const Vector g = 2.0 * (gram * a - b);
    if (iter % 50 == 0) {
      if (KktFromGradient(g, a, beta) <= 0.1 * config.kkt_tol) break;
      Vector polished = a;
      if (PolishOnSupport(gram, b, beta, &polished)) {
        const Vector gp = 2.0 * (gram * polished - b);
        if (KktFromGradient(gp, polished, beta) <= 0.1 * config.kkt_tol) {
          a = polished;
          break;
        }
      }
    }
    const double f = SmoothValue(gram, b, yy, a);
    // Backtracking on the quadratic upper bound.
    Vector next;
    for (int ls = 0; ls < 100; ++ls) {
      next = prox(a - step * g, step);
      const Vector d = next - a;
      if (SmoothValue(gram, b, yy, next) <= f + g.dot(d) + d.squaredNorm() / (2.0 * step) + 1e-12 * std::abs(f)) {
        break;
      }
      step *= 0.5;
    }
    if (next == a) break;
    a = next;
  }
  return a;
}

}  // namespace

SurrogateModel LassoFit(const Matrix& design, const Matrix& targets, double beta,
                        const LassoConfig& config) {
  if (design.rows() == 0) Fail(ErrorCode::kEmptyFit, "lasso fit needs at least one row");
  if (targets.rows() != design.rows()) Fail(ErrorCode::kContract, "lasso design and targets disagree on rows");
  if (!(beta >= 0) || !std::isfinite(beta)) Fail(ErrorCode::kContract, "lasso beta must be finite and >= 0");
  if (!design.allFinite() || !targets.allFinite()) Fail(ErrorCode::kNumeric, "lasso inputs must be finite");

  const Matrix x = WithBias(design);
  const Matrix gram = x.transpose() * x;
  const double lipschitz =
      2.0 * Eigen::SelfAdjointEigenSolver<Matrix>(gram, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff();
  SurrogateModel model;
  model.beta = beta;
  model.alpha.resize(targets.cols(), x.cols());
  for (Eigen::Index c = 0; c < targets.cols(); ++c) {
    const Vector y = targets.col(c);
    const Vector b = x.transpose() * y;
    model.alpha.row(c) = LassoColumn(gram, b, y.squaredNorm(), beta, lipschitz, config).transpose();
  }
  return model;
}

double LassoObjective(const Matrix& design, const Vector& targets, const Vector& alpha_row,
                      double beta) {
  const Eigen::Index p = design.cols();
  const Vector r = targets - design * alpha_row.head(p) - Vector::Constant(design.rows(), alpha_row[p]);
  return r.squaredNorm() + beta * alpha_row.head(p).lpNorm<1>();
}

double LassoKktResidual(const Matrix& design, const Vector& targets, const Vector& alpha_row,
                        double beta) {
  const Matrix x = WithBias(design);
  const Vector g = 2.0 * x.transpose() * (x * alpha_row - targets);
  return KktFromGradient(g, alpha_row, beta);
}

double LassoNullBeta(const Matrix& design, const Matrix& targets) {
  const Matrix xc = design.rowwise() - design.colwise().mean();
  const Matrix yc = targets.rowwise() - targets.colwise().mean();
  return 2.0 * (xc.transpose() * yc).cwiseAbs().maxCoeff();
}

double SelectBeta(const Matrix& design, const Matrix& targets) {
  const Eigen::Index rows = design.rows();
  if (rows < 5) return 0.0;
  const double scale = (design.transpose() * targets).cwiseAbs().maxCoeff() / static_cast<double>(rows);
  std::vector<Eigen::Index> train_rows;
  std::vector<Eigen::Index> hold_rows;
  for (Eigen::Index r = 0; r < rows; ++r) (r % 5 == 4 ? hold_rows : train_rows).push_back(r);
  const Matrix x_train = design(train_rows, Eigen::all);
  const Matrix y_train = targets(train_rows, Eigen::all);
  const Matrix x_hold = design(hold_rows, Eigen::all);
  const Matrix y_hold = targets(hold_rows, Eigen::all);

  double best_beta = 0.0;
  double best_err = std::numeric_limits<double>::infinity();
  for (double factor : {0.0, 1e-3, 1e-2, 1e-1, 1.0}) {
    const double beta = factor * scale;
    const SurrogateModel m = LassoFit(x_train, y_train, beta);
    double err = 0;
    for (Eigen::Index r = 0; r < x_hold.rows(); ++r) {
      err += (y_hold.row(r).transpose() - m.Predict(x_hold.row(r).transpose())).squaredNorm();
    }
    if (err < best_err) {
      best_err = err;
      best_beta = beta;
    }
  }
  return best_beta;
}

double CheckGradient(const ObjectiveFn& f, const GradientFn& grad, const Vector& x, double h) {
  if (!(h > 0)) Fail(ErrorCode::kContract, "finite-difference step must be positive");
  const Vector g = grad(x);
  if (!g.allFinite()) Fail(ErrorCode::kNumeric, "gradient check: non-finite analytic gradient");
  double worst = 0;
  Vector probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double up = f(probe);
    probe[i] = x[i] - h;
    const double down = f(probe);
    probe[i] = x[i];
    if (!std::isfinite(up) || !std::isfinite(down)) {
      Fail(ErrorCode::kNumeric, "gradient check: non-finite objective at coordinate " + std::to_string(i));
    }
    const double fd = (up - down) / (2.0 * h);
    worst = std::max(worst, std::abs(fd - g[i]) / std::max(1.0, std::abs(g[i])));
  }
  return worst;
}

void ParallelFor(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers =
      std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, threads)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = n * w / workers;
    const std::size_t end = n * (w + 1) / workers;
    pool.emplace_back([&, w, begin, end] {
      try {
        for (std::size_t i = begin; i < end; ++i) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (std::thread& t : pool) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace feccm
