#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "curvopt/network.hpp"
#include "curvopt/numerics.hpp"

namespace curvopt {

inline constexpr std::size_t kHessianParamCap = 2500;

// ---------------------------------------------------------------------------
// Hessian-vector product by central differences of the analytic gradient:
// H v ~ (grad(theta + h v_hat) - grad(theta - h v_hat)) * |v| / (2 h),
// h = 1e-5 * (1 + |theta|).
// ---------------------------------------------------------------------------

inline Vec hvp(const NetworkSpec& spec, const Vec& params, const TrainingSet& ts, const Vec& v,
               detail::EvalWorkspace& ws) {
  const double vnorm = norm(v);
  if (!(vnorm > 1e-20)) throw ConfigError("hvp: direction norm too small");
  const double h = 1e-5 * (1.0 + norm(params));
  const double step = h / vnorm;

  Vec theta_p = params;
  Vec theta_m = params;
  axpy(step, v, theta_p);
  axpy(-step, v, theta_m);

  Vec gp, gm;
  loss_and_gradient(spec, theta_p, ts, gp, ws);
  loss_and_gradient(spec, theta_m, ts, gm, ws);

  Vec r(params.size());
  const double scale = vnorm / (2.0 * h);
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = (gp[i] - gm[i]) * scale;
  if (!all_finite(r)) throw NumericalError("hvp: non-finite result");
  return r;
}

inline Vec hvp(const NetworkSpec& spec, const Vec& params, const TrainingSet& ts, const Vec& v) {
  detail::EvalWorkspace ws;
  return hvp(spec, params, ts, v, ws);
}

struct HessianResult {
  Mat h;               // symmetrized: (H + H^T) / 2
  double asymmetry;    // pre-symmetrization ||H - H^T||_max / ||H||_max
};

// Dense loss Hessian, column j = hvp(e_j). Columns are independent and
// assembled in index order, so the result does not depend on scheduling.
inline HessianResult full_hessian(const NetworkSpec& spec, const Vec& params,
                                  const TrainingSet& ts) {
  const std::size_t p = params.size();
  if (p > kHessianParamCap)
    throw ConfigError("full_hessian: " + std::to_string(p) +
                      " parameters exceeds the desk-scale cap of " +
                      std::to_string(kHessianParamCap));

  Mat raw(p, p);
  detail::parallel_chunks(p, [&](std::size_t lo, std::size_t hi) {
    detail::EvalWorkspace ws;  // one per worker
    Vec e(p, 0.0);
    for (std::size_t j = lo; j < hi; ++j) {
      e[j] = 1.0;
      const Vec col = hvp(spec, params, ts, e, ws);
      e[j] = 0.0;
      for (std::size_t i = 0; i < p; ++i) raw(i, j) = col[i];
    }
  });

  double asym = 0.0;
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = i + 1; j < p; ++j)
      asym = std::max(asym, std::abs(raw(i, j) - raw(j, i)));
  const double scale = max_abs(raw);
  HessianResult res;
  res.asymmetry = scale > 0.0 ? asym / scale : 0.0;
  res.h = Mat(p, p);
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j < p; ++j) res.h(i, j) = 0.5 * (raw(i, j) + raw(j, i));
  return res;
}

// ---------------------------------------------------------------------------
// Eigen-spectrum census
// ---------------------------------------------------------------------------

struct SpectrumWindow {
  double lo = -0.01;
  double hi = 0.01;
  std::size_t bins = 100;
};

struct SpectrumReport {
  Vec eigenvalues;                  // ascending
  double zero_fraction = 0.0;       // share with |lambda| < zero_tol
  double min_abs_nonzero = 0.0;     // +inf when every eigenvalue is "zero"
  double lambda_min = 0.0;
  double lambda_max = 0.0;
  Vec hist_edges;                   // bins+1 edges over the window
  std::vector<std::size_t> hist_counts;
  double zero_tol = 1e-8;
  std::size_t theta_snapshot_iter = 0;
  double hessian_asymmetry = 0.0;
};

inline SpectrumReport make_spectrum_report(Vec eigenvalues_sorted, double zero_tol,
                                           const SpectrumWindow& window,
                                           std::size_t snapshot_iter = 0) {
  if (!(zero_tol > 0.0)) throw ConfigError("spectrum: zero_tol must be positive");
  if (!(window.lo < window.hi) || window.bins == 0)
    throw ConfigError("spectrum: invalid histogram window");
  SpectrumReport rep;
  rep.zero_tol = zero_tol;
  rep.theta_snapshot_iter = snapshot_iter;
  rep.eigenvalues = std::move(eigenvalues_sorted);
  const std::size_t n = rep.eigenvalues.size();

  std::size_t zeros = 0;
  double min_nz = std::numeric_limits<double>::infinity();
  for (double ev : rep.eigenvalues) {
    if (std::abs(ev) < zero_tol)
      ++zeros;
    else
      min_nz = std::min(min_nz, std::abs(ev));
  }
  rep.zero_fraction = n == 0 ? 0.0 : static_cast<double>(zeros) / static_cast<double>(n);
  rep.min_abs_nonzero = min_nz;
  rep.lambda_min = n == 0 ? 0.0 : rep.eigenvalues.front();
  rep.lambda_max = n == 0 ? 0.0 : rep.eigenvalues.back();

  rep.hist_edges.resize(window.bins + 1);
  rep.hist_counts.assign(window.bins, 0);
  const double width = (window.hi - window.lo) / static_cast<double>(window.bins);
  for (std::size_t b = 0; b <= window.bins; ++b)
    rep.hist_edges[b] = window.lo + width * static_cast<double>(b);
  for (double ev : rep.eigenvalues) {
    if (ev < window.lo || ev >= window.hi) continue;
    auto bin = static_cast<std::size_t>((ev - window.lo) / width);
    if (bin >= window.bins) bin = window.bins - 1;
    ++rep.hist_counts[bin];
  }
  return rep;
}

inline SpectrumReport spectrum(const NetworkSpec& spec, const Vec& params, const TrainingSet& ts,
                               double zero_tol = 1e-8, const SpectrumWindow& window = {},
                               std::size_t snapshot_iter = 0) {
  const HessianResult hess = full_hessian(spec, params, ts);
  EigenResult eig = symmetric_eigen(hess.h, 1e-8);
  SpectrumReport rep =
      make_spectrum_report(std::move(eig.eigenvalues), zero_tol, window, snapshot_iter);
  rep.hessian_asymmetry = hess.asymmetry;
  return rep;
}

}  // namespace curvopt
