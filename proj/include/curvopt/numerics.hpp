#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <condition_variable>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "curvopt/errors.hpp"

namespace curvopt {

using Vec = std::vector<double>;

// Dense row-major matrix of doubles. All reductions over its entries run in
// ascending index order so results are identical from run to run.
struct Mat {
  std::size_t rows = 0;
  std::size_t cols = 0;
  Vec data;

  Mat() = default;
  Mat(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  double* row(std::size_t i) { return data.data() + i * cols; }
  const double* row(std::size_t i) const { return data.data() + i * cols; }

  static Mat identity(std::size_t n) {
    Mat m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }
};

namespace detail {

inline unsigned thread_budget() {
  static const unsigned budget = [] {
    if (const char* env = std::getenv("CURVOPT_THREADS")) {
      const long v = std::strtol(env, nullptr, 10);
      if (v >= 1 && v <= 256) return static_cast<unsigned>(v);
    }
    const unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1u : hc;
  }();
  return budget;
}

inline thread_local int parallel_depth = 0;

// Persistent worker pool: thread creation costs ~100us in sandboxed kernels,
// far too much to pay per matrix product. Workers park on a condition
// variable between jobs. Only one job runs at a time (callers are serialized
// by the mutex in run()).
class WorkerPool {
public:
  static WorkerPool& instance() {
    static WorkerPool pool(thread_budget() - 1);
    return pool;
  }

  std::size_t worker_count() const { return workers_.size(); }

  // fn(slot) is invoked from the calling thread with slot 0 and from every
  // pool worker with slots 1..worker_count()
  void run(const std::function<void(std::size_t)>& fn) {
    std::lock_guard caller_lock(caller_mu_);
    {
      std::lock_guard lk(mu_);
      job_ = &fn;
      ++epoch_;
      pending_ = workers_.size();
    }
    cv_work_.notify_all();
    fn(0);
    std::unique_lock lk(mu_);
    cv_done_.wait(lk, [&] { return pending_ == 0; });
    job_ = nullptr;
  }

  ~WorkerPool() {
    {
      std::lock_guard lk(mu_);
      stop_ = true;
    }
    cv_work_.notify_all();
    for (auto& t : workers_) t.join();
  }

private:
  explicit WorkerPool(std::size_t n_workers) {
    for (std::size_t w = 0; w < n_workers; ++w)
      workers_.emplace_back([this, w] {
        std::uint64_t seen = 0;
        std::unique_lock lk(mu_);
        for (;;) {
          cv_work_.wait(lk, [&] { return stop_ || epoch_ != seen; });
          if (stop_) return;
          seen = epoch_;
          const auto* job = job_;
          lk.unlock();
          ++parallel_depth;
          (*job)(w + 1);
          --parallel_depth;
          lk.lock();
          if (--pending_ == 0) cv_done_.notify_one();
        }
      });
  }

  std::vector<std::thread> workers_;
  std::mutex caller_mu_;
  std::mutex mu_;
  std::condition_variable cv_work_;
  std::condition_variable cv_done_;
  const std::function<void(std::size_t)>* job_ = nullptr;
  std::uint64_t epoch_ = 0;
  std::size_t pending_ = 0;
  bool stop_ = false;
};

// Runs fn(lo, hi) over a partition of [0, n) into contiguous chunks, one per
// worker. Chunks are disjoint, so any fn writing only to indices in its chunk
// is deterministic regardless of scheduling. Nested calls run serially.
template <class Fn>
void parallel_chunks(std::size_t n, Fn&& fn, std::size_t min_per_thread = 1) {
  const unsigned budget = thread_budget();
  if (n == 0) return;
  std::size_t workers = std::min<std::size_t>(budget, n / std::max<std::size_t>(min_per_thread, 1));
  if (parallel_depth > 0 || workers <= 1) {
    fn(std::size_t{0}, n);
    return;
  }
  ++parallel_depth;
  const std::size_t chunk = (n + workers - 1) / workers;
  std::function<void(std::size_t)> job = [&fn, n, chunk, workers](std::size_t slot) {
    if (slot >= workers) return;
    const std::size_t lo = slot * chunk;
    const std::size_t hi = std::min(n, lo + chunk);
    if (lo < hi) fn(lo, hi);
  };
  WorkerPool::instance().run(job);
  --parallel_depth;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Vector operations. Summations run over ascending indices, no reordering.
// ---------------------------------------------------------------------------

inline double dot(const Vec& a, const Vec& b) {
  if (a.size() != b.size())
    throw ConfigError("dot: length mismatch " + std::to_string(a.size()) + " vs " +
                      std::to_string(b.size()));
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm(const Vec& a) {
  double s = 0.0;
  for (double x : a) s += x * x;
  return std::sqrt(s);
}

inline double max_abs(const Vec& a) {
  double m = 0.0;
  for (double x : a) m = std::max(m, std::abs(x));
  return m;
}

inline void axpy(double alpha, const Vec& x, Vec& y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline Vec scaled(const Vec& x, double alpha) {
  Vec r(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) r[i] = alpha * x[i];
  return r;
}

inline Vec vsub(const Vec& a, const Vec& b) {
  Vec r(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] - b[i];
  return r;
}

inline Vec vadd(const Vec& a, const Vec& b) {
  Vec r(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] + b[i];
  return r;
}

inline bool all_finite(const Vec& a) {
  for (double x : a)
    if (!std::isfinite(x)) return false;
  return true;
}

inline double max_abs(const Mat& m) { return max_abs(m.data); }

// ---------------------------------------------------------------------------
// Matrix products. Each output element accumulates its contraction in
// ascending index order, matching the naive triple loop bit for bit.
// ---------------------------------------------------------------------------

inline Vec matvec(const Mat& m, const Vec& v) {
  if (m.cols != v.size())
    throw ConfigError("matvec: " + std::to_string(m.rows) + "x" + std::to_string(m.cols) +
                      " times vector of length " + std::to_string(v.size()));
  Vec r(m.rows, 0.0);
  for (std::size_t i = 0; i < m.rows; ++i) {
    const double* mi = m.row(i);
    double s = 0.0;
    for (std::size_t j = 0; j < m.cols; ++j) s += mi[j] * v[j];
    r[i] = s;
  }
  return r;
}

// C = A * B
inline Mat matmul(const Mat& a, const Mat& b) {
  if (a.cols != b.rows)
    throw ConfigError("matmul: inner dimensions " + std::to_string(a.cols) + " vs " +
                      std::to_string(b.rows));
  Mat c(a.rows, b.cols);
  detail::parallel_chunks(
      a.rows,
      [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
          double* __restrict ci = c.row(i);
          const double* ai = a.row(i);
          for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = ai[k];
            const double* __restrict bk = b.row(k);
            for (std::size_t j = 0; j < b.cols; ++j) ci[j] += aik * bk[j];
          }
        }
      },
      std::max<std::size_t>(1, (1u << 18) / std::max<std::size_t>(1, a.cols * b.cols)));
  return c;
}

// C = A * B^T
inline Mat matmul_nt(const Mat& a, const Mat& b) {
  if (a.cols != b.cols)
    throw ConfigError("matmul_nt: inner dimensions " + std::to_string(a.cols) + " vs " +
                      std::to_string(b.cols));
  Mat c(a.rows, b.rows);
  detail::parallel_chunks(
      a.rows,
      [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
          double* ci = c.row(i);
          const double* ai = a.row(i);
          for (std::size_t j = 0; j < b.rows; ++j) {
            const double* __restrict bj = b.row(j);
            double s = 0.0;
            for (std::size_t k = 0; k < a.cols; ++k) s += ai[k] * bj[k];
            ci[j] = s;
          }
        }
      },
      std::max<std::size_t>(1, (1u << 18) / std::max<std::size_t>(1, a.cols * b.rows)));
  return c;
}

// C += A^T * B, contracting over rows of A and B in ascending order. Serial:
// every output element touches all rows, so a row split would change nothing
// and a column split costs more than it saves at our sizes.
inline void accum_tn(const Mat& a, const Mat& b, Mat& c) {
  if (a.rows != b.rows || c.rows != a.cols || c.cols != b.cols)
    throw ConfigError("accum_tn: shape mismatch");
  for (std::size_t n = 0; n < a.rows; ++n) {
    const double* an = a.row(n);
    const double* bn = b.row(n);
    for (std::size_t i = 0; i < a.cols; ++i) {
      const double ani = an[i];
      double* ci = c.row(i);
      for (std::size_t j = 0; j < b.cols; ++j) ci[j] += ani * bn[j];
    }
  }
}

inline Mat transpose(const Mat& m) {
  Mat t(m.cols, m.rows);
  for (std::size_t i = 0; i < m.rows; ++i)
    for (std::size_t j = 0; j < m.cols; ++j) t(j, i) = m(i, j);
  return t;
}

// ---------------------------------------------------------------------------
// Deterministic random stream (splitmix64). The same seed reproduces the same
// draw sequence on every run and platform; no libstdc++ distributions are
// involved.
// ---------------------------------------------------------------------------

class RngStream {
public:
  explicit RngStream(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double a, double b) {
    if (!(a < b)) throw ConfigError("uniform: require a < b");
    double r = a + (b - a) * uniform01();
    if (r >= b) r = std::nextafter(b, a);  // rounding guard at the open end
    return r;
  }

  // Box-Muller from two uniforms; consumes exactly two draws per call so the
  // stream position is independent of call history.
  double normal(double mu, double sigma) {
    if (!(sigma > 0.0)) throw ConfigError("normal: require sigma > 0");
    const double u1 = 1.0 - uniform01();  // (0, 1], keeps log finite
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    return mu + sigma * r * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

private:
  std::uint64_t state_;
};

// ---------------------------------------------------------------------------
// Symmetric eigensolver: cyclic Jacobi with threshold sweeps.
// ---------------------------------------------------------------------------

struct EigenResult {
  Vec eigenvalues;    // ascending
  Mat eigenvectors;   // column k pairs with eigenvalues[k]
  std::size_t sweeps = 0;
};

namespace detail {

inline double off_diag_max(const Mat& a) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = i + 1; j < a.cols; ++j) m = std::max(m, std::abs(a(i, j)));
  return m;
}

}  // namespace detail

// Eigendecomposition of a symmetric matrix. The caller is expected to
// symmetrize first; inputs asymmetric beyond a 1e-8 relative tolerance are
// rejected. Eigenvalues come back sorted ascending with matching orthonormal
// eigenvector columns satisfying ||V L V^T - m||_max < tol * ||m||_max.
inline EigenResult symmetric_eigen(const Mat& m, double tol = 1e-10) {
  if (m.rows != m.cols) throw ConfigError("symmetric_eigen: matrix is not square");
  const std::size_t n = m.rows;
  const double scale = max_abs(m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (std::abs(m(i, j) - m(j, i)) > 1e-8 * std::max(1.0, scale))
        throw ConfigError("symmetric_eigen: input asymmetric beyond tolerance at (" +
                          std::to_string(i) + "," + std::to_string(j) + ")");

  Mat a = m;
  Mat v = Mat::identity(n);
  EigenResult out;

  if (n == 0) return out;

  const double stop = std::max(1e-14 * std::max(1.0, scale), 0.01 * tol * std::max(1.0, scale) / static_cast<double>(n));
  constexpr std::size_t kMaxSweeps = 50;

  std::size_t sweep = 0;
  for (; sweep < kMaxSweeps; ++sweep) {
    const double off = detail::off_diag_max(a);
    if (off <= stop) break;
    // rotate only entries above the sweep threshold; smaller ones wait
    const double thresh = (sweep < 3) ? 0.2 * off : 0.0;
    for (std::size_t p = 0; p < n - 1; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (std::abs(apq) <= thresh || apq == 0.0) continue;
        const double app = a(p, p);
        const double aqq = a(q, q);
        // symmetric Schur 2x2: tan via the stable quadratic root
        const double theta = (aqq - app) / (2.0 * apq);
        const double t = (theta >= 0.0) ? 1.0 / (theta + std::sqrt(theta * theta + 1.0))
                                        : 1.0 / (theta - std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  if (sweep == kMaxSweeps && detail::off_diag_max(a) > stop)
    throw NumericalError("symmetric_eigen: no convergence in " + std::to_string(kMaxSweeps) +
                         " sweeps, residual off-diagonal max " +
                         std::to_string(detail::off_diag_max(a)));

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return a(x, x) < a(y, y); });

  out.eigenvalues.resize(n);
  out.eigenvectors = Mat(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    out.eigenvalues[k] = a(order[k], order[k]);
    for (std::size_t i = 0; i < n; ++i) out.eigenvectors(i, k) = v(i, order[k]);
  }
  out.sweeps = sweep;
  return out;
}

// ---------------------------------------------------------------------------
// Symmetric linear solve via LDL^T (no pivoting; callers regularize).
// ---------------------------------------------------------------------------

// Factors A = L D L^T in place and solves A x = b. Returns false on pivot
// breakdown (singular or numerically indefinite beyond rescue).
inline bool ldlt_solve(Mat a, const Vec& b, Vec& x) {
  const std::size_t n = a.rows;
  if (a.cols != n || b.size() != n) throw ConfigError("ldlt_solve: shape mismatch");
  const double tiny = 1e-14 * std::max(1.0, max_abs(a));
  Vec d(n);
  for (std::size_t j = 0; j < n; ++j) {
    double dj = a(j, j);
    for (std::size_t k = 0; k < j; ++k) dj -= a(j, k) * a(j, k) * d[k];
    if (std::abs(dj) < tiny) return false;
    d[j] = dj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double lij = a(i, j);
      for (std::size_t k = 0; k < j; ++k) lij -= a(i, k) * a(j, k) * d[k];
      a(i, j) = lij / dj;
    }
  }
  x = b;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < i; ++k) x[i] -= a(i, k) * x[k];
  for (std::size_t i = 0; i < n; ++i) x[i] /= d[i];
  for (std::size_t ii = n; ii-- > 0;)
    for (std::size_t k = ii + 1; k < n; ++k) x[ii] -= a(k, ii) * x[k];
  return true;
}

}  // namespace curvopt
