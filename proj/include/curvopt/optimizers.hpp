#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "curvopt/curvature.hpp"
#include "curvopt/network.hpp"
#include "curvopt/numerics.hpp"

namespace curvopt {

inline constexpr std::size_t kNewtonParamCap = 2000;

enum class OptimKind { kLbfgs, kBfgs, kNewton, kAdam, kGd };

inline std::string optim_kind_name(OptimKind k) {
  switch (k) {
    case OptimKind::kLbfgs: return "lbfgs";
    case OptimKind::kBfgs: return "bfgs";
    case OptimKind::kNewton: return "newton";
    case OptimKind::kAdam: return "adam";
    case OptimKind::kGd: return "gd";
  }
  return "?";
}

inline OptimKind parse_optim_kind(const std::string& s) {
  if (s == "lbfgs") return OptimKind::kLbfgs;
  if (s == "bfgs") return OptimKind::kBfgs;
  if (s == "newton") return OptimKind::kNewton;
  if (s == "adam") return OptimKind::kAdam;
  if (s == "gd") return OptimKind::kGd;
  throw ConfigError("unknown optimizer '" + s + "'");
}

// ---------------------------------------------------------------------------
// BFGS inverse-Hessian update:
//   M+ = (I - y s^T / y^T s)^T M (I - y s^T / y^T s) + s s^T / y^T s.
// Pairs with y^T s <= curvature_eps are skipped (M unchanged).
// ---------------------------------------------------------------------------

inline Mat bfgs_update(const Mat& m, const Vec& s, const Vec& y, double curvature_eps = 1e-10,
                       bool* skipped = nullptr) {
  const std::size_t n = s.size();
  if (m.rows != n || m.cols != n || y.size() != n) throw ConfigError("bfgs_update: shape mismatch");
  const double ys = dot(y, s);
  if (!(ys > curvature_eps)) {
    if (skipped) *skipped = true;
    return m;
  }
  if (skipped) *skipped = false;
  const double rho = 1.0 / ys;
  const Vec u = matvec(m, y);       // M y (M symmetric, so y^T M = u^T)
  const double yu = dot(y, u);
  Mat out(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    const double si = s[i];
    const double ui = u[i];
    for (std::size_t j = 0; j < n; ++j)
      out(i, j) = m(i, j) - rho * (si * u[j] + ui * s[j]) + (rho * rho * yu + rho) * si * s[j];
  }
  return out;
}

// max |M y - s|: the secant condition residual, zero for an exact update
inline double secant_residual(const Mat& m, const Vec& s, const Vec& y) {
  const Vec my = matvec(m, y);
  double r = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) r = std::max(r, std::abs(my[i] - s[i]));
  return r;
}

// ---------------------------------------------------------------------------
// L-BFGS history and the two-loop recursion
// ---------------------------------------------------------------------------

struct CurvaturePair {
  Vec s;
  Vec y;
  double rho;  // 1 / (y^T s)
};

struct LbfgsState {
  std::size_t history_size = 10;
  double curvature_eps = 1e-10;
  std::deque<CurvaturePair> pairs;  // oldest at the front
  double gamma = 1.0;               // initial H0 = gamma * I scaling
  std::size_t skipped = 0;
  bool update_gamma = true;

  // Admit a curvature pair if y^T s > curvature_eps; otherwise count a skip.
  bool push(Vec s, Vec y) {
    const double ys = dot(y, s);
    if (!(ys > curvature_eps)) {
      ++skipped;
      return false;
    }
    const double yy = dot(y, y);
    pairs.push_back({std::move(s), std::move(y), 1.0 / ys});
    if (pairs.size() > history_size) pairs.pop_front();
    if (update_gamma && yy > 0.0) gamma = ys / yy;
    return true;
  }

  void clear() {
    pairs.clear();
    gamma = 1.0;
  }
};

// Two-loop recursion: returns -M_t * grad without materializing M_t, where
// M_t is the dense BFGS recursion applied to M_0 = gamma * I over the stored
// pairs, oldest first. Empty history gives -gamma * grad.
inline Vec lbfgs_direction(const LbfgsState& state, const Vec& grad) {
  if (!all_finite(grad)) throw NumericalError("lbfgs_direction: non-finite gradient");
  Vec q = grad;
  const std::size_t t = state.pairs.size();
  if (t == 0) return scaled(grad, -state.gamma);

  std::vector<double> alpha(t);
  for (std::size_t i = t; i-- > 0;) {
    const auto& p = state.pairs[i];
    alpha[i] = p.rho * dot(p.s, q);
    axpy(-alpha[i], p.y, q);
  }
  Vec r = scaled(q, state.gamma);
  for (std::size_t i = 0; i < t; ++i) {
    const auto& p = state.pairs[i];
    const double beta = p.rho * dot(p.y, r);
    axpy(alpha[i] - beta, p.s, r);
  }
  for (double& x : r) x = -x;
  return r;
}

// ---------------------------------------------------------------------------
// Strong Wolfe line search (bracketing + cubic-interpolation zoom)
// ---------------------------------------------------------------------------

struct WolfeConfig {
  double c1 = 1e-4;
  double c2 = 0.9;
  double alpha_init = 1.0;
  int max_evals = 25;

  void validate() const {
    if (!(0.0 < c1 && c1 < c2 && c2 < 1.0)) throw ConfigError("wolfe: require 0 < c1 < c2 < 1");
    if (!(alpha_init > 0.0) || max_evals < 1) throw ConfigError("wolfe: invalid config");
  }
};

struct LineSearchResult {
  double alpha = 0.0;
  int evals = 0;
  bool warning = false;  // budget exhausted, best-so-far returned
  double f_new = 0.0;
  double dphi_new = 0.0;  // g(x + alpha d)^T d
  Vec x_new;
  Vec g_new;
};

namespace detail {

// cubic minimizer of the interpolant through (a, fa, da) and (b, fb, db);
// falls back to bisection when the data is degenerate
inline double cubic_interp(double a, double fa, double da, double b, double fb, double db) {
  const double bisect = 0.5 * (a + b);
  if (!std::isfinite(fa) || !std::isfinite(fb) || !std::isfinite(da) || !std::isfinite(db))
    return bisect;
  const double d1 = da + db - 3.0 * (fa - fb) / (a - b);
  const double radicand = d1 * d1 - da * db;
  if (!(radicand >= 0.0)) return bisect;
  const double d2 = (b >= a ? 1.0 : -1.0) * std::sqrt(radicand);
  const double denom = db - da + 2.0 * d2;
  if (denom == 0.0) return bisect;
  double t = b - (b - a) * (db + d2 - d1) / denom;
  const double lo = std::min(a, b);
  const double hi = std::max(a, b);
  const double margin = 0.1 * (hi - lo);
  if (!std::isfinite(t) || t < lo + margin || t > hi - margin) return bisect;
  return t;
}

}  // namespace detail

// Finds alpha satisfying both strong Wolfe conditions along a descent
// direction:
//   f(x + a d) <= f(x) + c1 a g^T d   and   |g(x + a d)^T d| <= c2 |g^T d|.
// Objective signature: double f(const Vec& x, Vec* grad). Every trial point
// costs one combined value+gradient evaluation. Exhausting max_evals returns
// the best Armijo-feasible point seen with the warning flag set; a collapsed
// step (< 1e-20) raises NumericalError.
template <class F>
LineSearchResult wolfe_line_search(F&& f, const Vec& x, double fx, const Vec& gx, const Vec& dir,
                                   const WolfeConfig& cfg = {}) {
  cfg.validate();
  const double dphi0 = dot(gx, dir);
  if (!(dphi0 < 0.0)) throw ConfigError("wolfe_line_search: not a descent direction");

  LineSearchResult best;  // best-so-far fallback
  best.f_new = std::numeric_limits<double>::infinity();
  int evals = 0;

  Vec xt(x.size());
  Vec gt(x.size());
  auto eval = [&](double alpha, double& phi, double& dphi) {
    xt = x;
    axpy(alpha, dir, xt);
    ++evals;
    try {
      phi = f(xt, &gt);
    } catch (const NumericalError&) {
      phi = std::numeric_limits<double>::infinity();
      dphi = std::numeric_limits<double>::infinity();
      return;
    }
    if (!std::isfinite(phi)) {
      phi = std::numeric_limits<double>::infinity();
      dphi = std::numeric_limits<double>::infinity();
      return;
    }
    dphi = dot(gt, dir);
    if (phi <= fx + cfg.c1 * alpha * dphi0 && phi < best.f_new) {
      best.alpha = alpha;
      best.f_new = phi;
      best.dphi_new = dphi;
      best.x_new = xt;
      best.g_new = gt;
    }
  };

  auto accept = [&](double alpha, double phi, double dphi) {
    LineSearchResult r;
    r.alpha = alpha;
    r.evals = evals;
    r.f_new = phi;
    r.dphi_new = dphi;
    r.x_new = xt;
    r.g_new = gt;
    return r;
  };

  auto exhausted = [&]() {
    if (!std::isfinite(best.f_new))
      throw NumericalError("wolfe_line_search: no acceptable step within evaluation budget");
    best.evals = evals;
    best.warning = true;
    return best;
  };

  // zoom phase: maintains a bracket [alo, ahi] known to contain a Wolfe point
  auto zoom = [&](double alo, double flo, double dlo, double ahi, double fhi,
                  double dhi) -> LineSearchResult {
    while (evals < cfg.max_evals) {
      if (std::abs(ahi - alo) < 1e-20 || std::min(alo, ahi) + std::abs(ahi - alo) <= 1e-20)
        throw NumericalError("wolfe_line_search: step underflow in zoom (interval " +
                             std::to_string(std::abs(ahi - alo)) + ")");
      const double aj = detail::cubic_interp(alo, flo, dlo, ahi, fhi, dhi);
      double phi, dphi;
      eval(aj, phi, dphi);
      if (phi > fx + cfg.c1 * aj * dphi0 || phi >= flo) {
        ahi = aj;
        fhi = phi;
        dhi = dphi;
      } else {
        if (std::abs(dphi) <= -cfg.c2 * dphi0) return accept(aj, phi, dphi);
        if (dphi * (ahi - alo) >= 0.0) {
          ahi = alo;
          fhi = flo;
          dhi = dlo;
        }
        alo = aj;
        flo = phi;
        dlo = dphi;
      }
    }
    return exhausted();
  };

  double a_prev = 0.0;
  double f_prev = fx;
  double d_prev = dphi0;
  double a = cfg.alpha_init;
  constexpr double kAlphaMax = 1e8;
  bool first = true;
  while (evals < cfg.max_evals) {
    if (a < 1e-20) throw NumericalError("wolfe_line_search: step underflow");
    double phi, dphi;
    eval(a, phi, dphi);
    if (phi > fx + cfg.c1 * a * dphi0 || (!first && phi >= f_prev))
      return zoom(a_prev, f_prev, d_prev, a, phi, dphi);
    if (std::abs(dphi) <= -cfg.c2 * dphi0) return accept(a, phi, dphi);
    if (dphi >= 0.0) return zoom(a, phi, dphi, a_prev, f_prev, d_prev);
    a_prev = a;
    f_prev = phi;
    d_prev = dphi;
    a = std::min(2.0 * a, kAlphaMax);
    if (a_prev >= kAlphaMax) break;
    first = false;
  }
  return exhausted();
}

// ---------------------------------------------------------------------------
// Newton step: theta' = theta - H^{-1} grad with H symmetrized first and
// ridge-regularized (lambda = 1e-8 ||H||_max) if the factorization breaks.
// ---------------------------------------------------------------------------

inline Vec newton_step(const Vec& theta, const Vec& grad, const Mat& hessian) {
  const std::size_t p = theta.size();
  if (p > kNewtonParamCap)
    throw ConfigError("newton_step: " + std::to_string(p) + " parameters exceeds the cap of " +
                      std::to_string(kNewtonParamCap));
  if (hessian.rows != p || hessian.cols != p || grad.size() != p)
    throw ConfigError("newton_step: shape mismatch");

  Mat h(p, p);
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j < p; ++j) h(i, j) = 0.5 * (hessian(i, j) + hessian(j, i));

  Vec step;
  if (!ldlt_solve(h, grad, step)) {
    const double scale = max_abs(h);
    const double lambda = 1e-8 * (scale > 0.0 ? scale : 1.0);
    for (std::size_t i = 0; i < p; ++i) h(i, i) += lambda;
    if (!ldlt_solve(h, grad, step))
      throw NumericalError("newton_step: Hessian singular even after ridge regularization");
  }
  Vec out = theta;
  axpy(-1.0, step, out);
  return out;
}

template <class LossFn, class GradFn, class HessFn>
Vec newton_step(LossFn&&, GradFn&& grad_fn, HessFn&& hess_fn, const Vec& theta) {
  return newton_step(theta, grad_fn(theta), hess_fn(theta));
}

// ---------------------------------------------------------------------------
// Optimization driver
// ---------------------------------------------------------------------------

struct Budget {
  std::size_t max_iters = 100;
  double max_seconds = std::numeric_limits<double>::infinity();
  double target_loss = -std::numeric_limits<double>::infinity();
};

struct IterationRecord {
  std::size_t iter = 0;
  double loss = 0.0;
  double grad_norm = 0.0;
  double step_len = 0.0;
  double elapsed_ms = 0.0;
  std::optional<double> psnr;
};

// One entry per accepted quasi-Newton step; enough to re-verify both strong
// Wolfe inequalities after the fact.
struct WolfeAudit {
  std::size_t iter = 0;
  double f0 = 0.0;     // loss at the step start
  double dphi0 = 0.0;  // g^T d at the step start
  double alpha = 0.0;
  double f1 = 0.0;     // loss at the accepted point
  double dphi1 = 0.0;  // g(x + alpha d)^T d
  bool warning = false;
};

enum class OptimStatus { kBudgetExhausted, kTargetReached, kGradConverged, kLineSearchFailure, kNumericalAbort };

inline std::string optim_status_name(OptimStatus s) {
  switch (s) {
    case OptimStatus::kBudgetExhausted: return "budget-exhausted";
    case OptimStatus::kTargetReached: return "target-reached";
    case OptimStatus::kGradConverged: return "gradient-converged";
    case OptimStatus::kLineSearchFailure: return "line-search-failure";
    case OptimStatus::kNumericalAbort: return "numerical-abort";
  }
  return "?";
}

struct OptimizeOptions {
  WolfeConfig wolfe;
  std::size_t lbfgs_history = 10;
  double curvature_eps = 1e-10;
  double adam_lr = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double gd_lr = 1e-2;
  double grad_tol = 1e-14;  // clean stop near stationarity; 0 disables
  std::function<Mat(const Vec&)> hessian_fn;              // required for Newton
  std::function<double(double)> psnr_from_loss;           // optional trace column
  std::function<void(std::size_t, const Vec&)> callback;  // after each iteration
  bool keep_audits = true;
};

struct OptimizeResult {
  Vec params;
  std::vector<IterationRecord> trace;
  std::vector<WolfeAudit> audits;
  std::size_t curvature_skips = 0;
  std::size_t line_search_warnings = 0;
  OptimStatus status = OptimStatus::kBudgetExhausted;
  std::string diagnostic;
  double final_loss = 0.0;
  double final_grad_norm = 0.0;
};

// Full-batch minimization of a deterministic objective
// f(x, grad_out) -> value. One IterationRecord per iteration; terminates on
// the first satisfied budget clause.
template <class F>
OptimizeResult minimize(OptimKind kind, F&& f, Vec x0, const Budget& budget,
                        const OptimizeOptions& opts = {}) {
  using clock = std::chrono::steady_clock;
  const auto t_start = clock::now();

  OptimizeResult res;
  res.params = std::move(x0);
  const std::size_t p = res.params.size();

  Vec grad(p);
  double loss;
  try {
    loss = f(res.params, &grad);
  } catch (const NumericalError& e) {
    res.status = OptimStatus::kNumericalAbort;
    res.diagnostic = std::string("initial evaluation failed: ") + e.what();
    return res;
  }
  res.final_loss = loss;
  res.final_grad_norm = norm(grad);

  LbfgsState lbfgs;
  lbfgs.history_size = opts.lbfgs_history;
  lbfgs.curvature_eps = opts.curvature_eps;
  Mat bfgs_m;
  if (kind == OptimKind::kBfgs) {
    if (p > 4000) throw ConfigError("bfgs: dense inverse-Hessian storage capped at 4000 parameters");
    bfgs_m = Mat::identity(p);
  }
  if (kind == OptimKind::kNewton && !opts.hessian_fn)
    throw ConfigError("newton: a Hessian callback is required");
  Vec adam_m(p, 0.0), adam_v(p, 0.0);

  const auto elapsed_s = [&] { return std::chrono::duration<double>(clock::now() - t_start).count(); };

  for (std::size_t iter = 1; iter <= budget.max_iters; ++iter) {
    if (loss <= budget.target_loss) {
      res.status = OptimStatus::kTargetReached;
      return res;
    }
    if (elapsed_s() >= budget.max_seconds) {
      res.status = OptimStatus::kBudgetExhausted;
      res.diagnostic = "time budget exhausted";
      return res;
    }
    const double gnorm = norm(grad);
    if (opts.grad_tol > 0.0 && gnorm <= opts.grad_tol) {
      res.status = OptimStatus::kGradConverged;
      return res;
    }

    const auto t_iter = clock::now();
    Vec x_next;
    double loss_next = loss;
    Vec grad_next;
    double step_len = 0.0;

    try {
      switch (kind) {
        case OptimKind::kGd: {
          x_next = res.params;
          axpy(-opts.gd_lr, grad, x_next);
          loss_next = f(x_next, &grad_next);
          step_len = opts.gd_lr * gnorm;
          break;
        }
        case OptimKind::kAdam: {
          x_next = res.params;
          const double t = static_cast<double>(iter);
          const double bc1 = 1.0 - std::pow(opts.adam_beta1, t);
          const double bc2 = 1.0 - std::pow(opts.adam_beta2, t);
          double sq = 0.0;
          for (std::size_t i = 0; i < p; ++i) {
            adam_m[i] = opts.adam_beta1 * adam_m[i] + (1.0 - opts.adam_beta1) * grad[i];
            adam_v[i] = opts.adam_beta2 * adam_v[i] + (1.0 - opts.adam_beta2) * grad[i] * grad[i];
            const double upd = opts.adam_lr * (adam_m[i] / bc1) / (std::sqrt(adam_v[i] / bc2) + opts.adam_eps);
            x_next[i] -= upd;
            sq += upd * upd;
          }
          loss_next = f(x_next, &grad_next);
          step_len = std::sqrt(sq);
          break;
        }
        case OptimKind::kNewton: {
          x_next = newton_step(res.params, grad, opts.hessian_fn(res.params));
          loss_next = f(x_next, &grad_next);
          step_len = norm(vsub(x_next, res.params));
          break;
        }
        case OptimKind::kLbfgs:
        case OptimKind::kBfgs: {
          Vec dir = (kind == OptimKind::kLbfgs) ? lbfgs_direction(lbfgs, grad)
                                                : scaled(matvec(bfgs_m, grad), -1.0);
          if (!(dot(dir, grad) < 0.0)) {
            // positive definiteness lost to rounding; restart from steepest descent
            if (kind == OptimKind::kLbfgs) lbfgs.clear();
            else bfgs_m = Mat::identity(p);
            dir = scaled(grad, -1.0);
          }
          auto ls = wolfe_line_search(f, res.params, loss, grad, dir, opts.wolfe);
          if (ls.warning) ++res.line_search_warnings;
          if (opts.keep_audits)
            res.audits.push_back({iter, loss, dot(grad, dir), ls.alpha, ls.f_new, ls.dphi_new, ls.warning});
          Vec s = vsub(ls.x_new, res.params);
          Vec y = vsub(ls.g_new, grad);
          if (kind == OptimKind::kLbfgs) {
            lbfgs.push(std::move(s), std::move(y));
          } else {
            bool skipped = false;
            bfgs_m = bfgs_update(bfgs_m, s, y, opts.curvature_eps, &skipped);
            if (skipped) ++res.curvature_skips;
          }
          step_len = ls.alpha * norm(dir);
          x_next = std::move(ls.x_new);
          grad_next = std::move(ls.g_new);
          loss_next = ls.f_new;
          break;
        }
      }
    } catch (const NumericalError& e) {
      res.status = (kind == OptimKind::kLbfgs || kind == OptimKind::kBfgs)
                       ? OptimStatus::kLineSearchFailure
                       : OptimStatus::kNumericalAbort;
      res.diagnostic = e.what();
      return res;  // last-good params retained
    }

    if (!std::isfinite(loss_next) || !all_finite(grad_next)) {
      res.status = OptimStatus::kNumericalAbort;
      res.diagnostic = "non-finite loss or gradient at iteration " + std::to_string(iter);
      return res;
    }

    res.params = std::move(x_next);
    loss = loss_next;
    grad = std::move(grad_next);
    res.final_loss = loss;
    res.final_grad_norm = norm(grad);
    res.curvature_skips = (kind == OptimKind::kLbfgs) ? lbfgs.skipped : res.curvature_skips;

    IterationRecord rec;
    rec.iter = iter;
    rec.loss = loss;
    rec.grad_norm = res.final_grad_norm;
    rec.step_len = step_len;
    rec.elapsed_ms = std::chrono::duration<double, std::milli>(clock::now() - t_iter).count();
    if (opts.psnr_from_loss) rec.psnr = opts.psnr_from_loss(loss);
    res.trace.push_back(std::move(rec));

    if (opts.callback) opts.callback(iter, res.params);
  }

  if (loss <= budget.target_loss) res.status = OptimStatus::kTargetReached;
  return res;
}

// ---------------------------------------------------------------------------
// Network training entry point
// ---------------------------------------------------------------------------

// PSNR derived from the running loss: with peak P and c channels,
// mean squared error per sample entry is 2 L / c, so
// psnr = 10 log10(P^2 c / (2 L)). Valid for full-batch fits where the
// training set is the whole signal.
inline double psnr_from_loss(double loss, double peak, std::size_t channels) {
  if (loss <= 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak * static_cast<double>(channels) / (2.0 * loss));
}

struct TrainConfig {
  OptimKind kind = OptimKind::kLbfgs;
  Budget budget;
  OptimizeOptions opts;
  double psnr_peak = 0.0;  // > 0 enables the psnr trace column
};

inline OptimizeResult run_optimizer(const NetworkSpec& spec, const TrainingSet& ts,
                                    TrainConfig cfg) {
  spec.validate();
  if (ts.X.rows == 0 || ts.X.rows != ts.Y.rows)
    throw ConfigError("run_optimizer: empty or inconsistent training set");
  ParamVector init = init_params(spec);

  if (cfg.kind == OptimKind::kNewton) {
    if (init.flat.size() > kNewtonParamCap)
      throw ConfigError("newton: network has " + std::to_string(init.flat.size()) +
                        " parameters, cap is " + std::to_string(kNewtonParamCap));
    if (!cfg.opts.hessian_fn)
      cfg.opts.hessian_fn = [&spec, &ts](const Vec& th) { return full_hessian(spec, th, ts).h; };
  }
  if (cfg.psnr_peak > 0.0 && !cfg.opts.psnr_from_loss) {
    const double peak = cfg.psnr_peak;
    const std::size_t c = spec.output_dim;
    cfg.opts.psnr_from_loss = [peak, c](double l) { return psnr_from_loss(l, peak, c); };
  }

  detail::EvalWorkspace ws;  // shared across evaluations of this run
  auto objective = [&spec, &ts, &ws](const Vec& theta, Vec* grad) {
    if (grad) return loss_and_gradient(spec, theta, ts, *grad, ws);
    return mse_loss(spec, theta, ts, ws);
  };
  return minimize(cfg.kind, objective, std::move(init.flat), cfg.budget, cfg.opts);
}

// ---------------------------------------------------------------------------
// Convergence-rate diagnostic
// ---------------------------------------------------------------------------

enum class RateClass { kSuperlinearConsistent, kLinearConsistent, kStalled };

inline std::string rate_class_name(RateClass c) {
  switch (c) {
    case RateClass::kSuperlinearConsistent: return "superlinear-consistent";
    case RateClass::kLinearConsistent: return "linear-consistent";
    case RateClass::kStalled: return "stalled";
  }
  return "?";
}

struct RateReport {
  Vec ratios;  // r_t = grad_norm_t / grad_norm_{t-1}
  double tail_median = 0.0;
  RateClass classification = RateClass::kStalled;
};

// Classifies the tail behavior of a gradient-norm trace: the median ratio
// over the last 10 iterations falls below 0.5 (superlinear-consistent),
// inside [0.5, 0.999] (linear-consistent), or above (stalled).
inline RateReport convergence_rate_report(const std::vector<IterationRecord>& trace) {
  if (trace.size() < 12)
    throw ConfigError("convergence_rate_report: need a trace of at least 12 iterations, got " +
                      std::to_string(trace.size()));
  RateReport rep;
  rep.ratios.reserve(trace.size() - 1);
  for (std::size_t t = 1; t < trace.size(); ++t) {
    const double prev = trace[t - 1].grad_norm;
    const double cur = trace[t].grad_norm;
    rep.ratios.push_back(prev > 0.0 ? cur / prev : 0.0);
  }
  Vec tail(rep.ratios.end() - 10, rep.ratios.end());
  std::sort(tail.begin(), tail.end());
  rep.tail_median = 0.5 * (tail[4] + tail[5]);
  if (rep.tail_median < 0.5)
    rep.classification = RateClass::kSuperlinearConsistent;
  else if (rep.tail_median <= 0.999)
    rep.classification = RateClass::kLinearConsistent;
  else
    rep.classification = RateClass::kStalled;
  return rep;
}

// ---------------------------------------------------------------------------
// Spectrum snapshots along a training run: reports at iteration 0 and after
// every snapshot_every-th iteration (post-update parameter point).
// ---------------------------------------------------------------------------

inline std::vector<SpectrumReport> spectrum_trace(const NetworkSpec& spec, const TrainingSet& ts,
                                                  OptimKind kind, std::size_t iters,
                                                  std::size_t snapshot_every,
                                                  double zero_tol = 1e-8,
                                                  const SpectrumWindow& window = {},
                                                  OptimizeOptions opts = {}) {
  if (snapshot_every == 0) throw ConfigError("spectrum_trace: snapshot_every must be positive");
  std::vector<SpectrumReport> reports;
  const ParamVector init = init_params(spec);
  reports.push_back(spectrum(spec, init.flat, ts, zero_tol, window, 0));

  opts.grad_tol = 0.0;  // keep the snapshot schedule exact
  opts.callback = [&](std::size_t iter, const Vec& params) {
    if (iter % snapshot_every == 0)
      reports.push_back(spectrum(spec, params, ts, zero_tol, window, iter));
  };
  TrainConfig cfg;
  cfg.kind = kind;
  cfg.budget.max_iters = iters;
  cfg.opts = std::move(opts);
  run_optimizer(spec, ts, std::move(cfg));
  return reports;
}

}  // namespace curvopt
