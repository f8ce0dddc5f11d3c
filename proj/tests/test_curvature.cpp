#include <catch2/catch.hpp>

#include "curvopt/curvature.hpp"
#include "curvopt/optimizers.hpp"
#include "curvopt/tasks.hpp"
#include "testutil.hpp"

using namespace curvopt;

namespace {

// linear scalar net: f(x) = w . x + b, so the loss Hessian is the constant
// Gram matrix (1/N) sum_n z_n z_n^T with z = (x, 1)
NetworkSpec linear_spec(std::size_t d) {
  NetworkSpec spec;
  spec.input_dim = d;
  spec.output_dim = 1;
  spec.activation = ActivationKind::tanh();  // unused: no hidden layers
  return spec;
}

TrainingSet orthogonal_samples() {
  // x in {(0, 1), (0, -1)}: Gram of (x1, x2, 1) = diag(0, 1, 1)
  TrainingSet ts;
  ts.X = Mat(2, 2);
  ts.X(0, 1) = 1.0;
  ts.X(1, 1) = -1.0;
  ts.Y = Mat(2, 1);
  ts.Y(0, 0) = 0.4;
  ts.Y(1, 0) = -0.1;
  return ts;
}

}  // namespace

TEST_CASE("hvp of a quadratic loss is the constant Hessian times v") {
  auto spec = linear_spec(2);
  const TrainingSet ts = orthogonal_samples();
  const Vec theta{0.3, -0.2, 0.1};
  RngStream rng(3);
  for (int trial = 0; trial < 5; ++trial) {
    Vec v(3);
    for (auto& x : v) x = rng.uniform(-2.0, 2.0);
    const Vec hv = hvp(spec, theta, ts, v);
    // H = diag(0, 1, 1)
    REQUIRE(hv[0] == Approx(0.0).margin(1e-8));
    REQUIRE(hv[1] == Approx(v[1]).margin(1e-8));
    REQUIRE(hv[2] == Approx(v[2]).margin(1e-8));
  }
}

TEST_CASE("hvp rejects vanishing directions") {
  auto spec = linear_spec(2);
  const TrainingSet ts = orthogonal_samples();
  REQUIRE_THROWS_AS(hvp(spec, Vec{0.0, 0.0, 0.0}, ts, Vec{1e-30, 0.0, 0.0}), ConfigError);
}

TEST_CASE("hvp on a tiny sine net matches the full FD Hessian times v") {
  NetworkSpec spec;
  spec.hidden_widths = {4};
  spec.activation = ActivationKind::sine(1.0);
  spec.seed = 9;
  const ParamVector pv = init_params(spec);
  RngStream rng(10);
  TrainingSet ts;
  ts.X = Mat(12, 2);
  ts.Y = Mat(12, 1);
  for (auto& v : ts.X.data) v = rng.uniform(-1.0, 1.0);
  for (auto& v : ts.Y.data) v = rng.uniform(0.0, 1.0);

  const std::size_t p = pv.flat.size();  // 21
  // independent FD Hessian from loss values only (different operator route);
  // four-point central stencil for O(h^2) accuracy
  Mat h_fd(p, p);
  auto loss_of = [&](const Vec& th) { return mse_loss(spec, th, ts); };
  const double h = 1e-4;
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j <= i; ++j) {
      Vec t = pv.flat;
      auto at = [&](double di, double dj) {
        t[i] = pv.flat[i] + di;
        t[j] = pv.flat[j] + dj;
        if (i == j) t[i] = pv.flat[i] + di + dj;
        const double f = loss_of(t);
        t[i] = pv.flat[i];
        t[j] = pv.flat[j];
        return f;
      };
      h_fd(i, j) = h_fd(j, i) =
          (at(h, h) - at(h, -h) - at(-h, h) + at(-h, -h)) / (4.0 * h * h);
    }

  Vec v(p);
  for (auto& x : v) x = rng.normal(0.0, 1.0);
  const Vec hv = hvp(spec, pv.flat, ts, v);
  const Vec hv_ref = matvec(h_fd, v);
  const double scale = std::max(norm(hv_ref), 1e-10);
  for (std::size_t i = 0; i < p; ++i) REQUIRE(std::abs(hv[i] - hv_ref[i]) / scale < 1e-4);
}

TEST_CASE("full_hessian of a quadratic loss recovers the Gram matrix") {
  auto spec = linear_spec(2);
  const TrainingSet ts = orthogonal_samples();
  const HessianResult hr = full_hessian(spec, Vec{0.5, 0.5, 0.5}, ts);
  REQUIRE(hr.h.rows == 3);
  const double expected[3][3] = {{0, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      REQUIRE(hr.h(i, j) == Approx(expected[i][j]).margin(1e-7));
  REQUIRE(hr.asymmetry < 1e-6);
}

TEST_CASE("full_hessian asymmetry is small for smooth activations") {
  NetworkSpec spec;
  spec.hidden_widths = {6, 6};
  spec.activation = ActivationKind::sine();
  spec.seed = 21;
  const ParamVector pv = init_params(spec);
  RngStream rng(22);
  TrainingSet ts;
  ts.X = Mat(40, 2);
  ts.Y = Mat(40, 1);
  for (auto& v : ts.X.data) v = rng.uniform(-1.0, 1.0);
  for (auto& v : ts.Y.data) v = rng.uniform(0.0, 1.0);
  const HessianResult hr = full_hessian(spec, pv.flat, ts);
  REQUIRE(hr.asymmetry < 1e-3);
}

TEST_CASE("full_hessian rejects oversized parameter counts") {
  NetworkSpec spec;
  spec.hidden_widths = {64, 64};  // 2 -> 64 -> 64 -> 1: p = 4545 > 2500
  spec.seed = 1;
  REQUIRE(spec.param_count() > kHessianParamCap);
  const ParamVector pv = init_params(spec);
  TrainingSet ts;
  ts.X = Mat(4, 2, 0.1);
  ts.Y = Mat(4, 1, 0.5);
  REQUIRE_THROWS_AS(full_hessian(spec, pv.flat, ts), ConfigError);
}

TEST_CASE("spectrum census fields") {
  SpectrumWindow window;
  const auto rep = make_spectrum_report(Vec{0.0, 0.0, 1.0, 2.0}, 1e-8, window, 3);
  REQUIRE(rep.zero_fraction == Approx(0.5));
  REQUIRE(rep.min_abs_nonzero == Approx(1.0));
  REQUIRE(rep.lambda_min == 0.0);
  REQUIRE(rep.lambda_max == 2.0);
  REQUIRE(rep.theta_snapshot_iter == 3);

  // histogram covers only the window; counts never exceed the total
  std::size_t total = 0;
  for (auto c : rep.hist_counts) total += c;
  REQUIRE(total <= rep.eigenvalues.size());
  REQUIRE(rep.hist_edges.front() == Approx(-0.01));
  REQUIRE(rep.hist_edges.back() == Approx(0.01));

  // census consistency: recount against the definition
  std::size_t zeros = 0;
  for (double ev : rep.eigenvalues)
    if (std::abs(ev) < rep.zero_tol) ++zeros;
  REQUIRE(rep.zero_fraction == Approx(double(zeros) / rep.eigenvalues.size()));
}

TEST_CASE("spectrum of the quadratic linear-net loss") {
  auto spec = linear_spec(2);
  const TrainingSet ts = orthogonal_samples();
  const SpectrumReport rep = spectrum(spec, Vec{0.1, 0.2, 0.3}, ts);
  // eigenvalues (0, 1, 1) to FD tolerance
  REQUIRE(rep.eigenvalues.size() == 3);
  REQUIRE(rep.zero_fraction == Approx(1.0 / 3.0));
  REQUIRE(rep.min_abs_nonzero == Approx(1.0).margin(1e-6));
}

TEST_CASE("spectrum is invariant under hidden-unit relabeling") {
  NetworkSpec spec;
  spec.hidden_widths = {3};
  spec.activation = ActivationKind::gaussian();
  spec.seed = 31;
  const ParamVector pv = init_params(spec);
  RngStream rng(32);
  TrainingSet ts;
  ts.X = Mat(15, 2);
  ts.Y = Mat(15, 1);
  for (auto& v : ts.X.data) v = rng.uniform(-1.0, 1.0);
  for (auto& v : ts.Y.data) v = rng.uniform(0.0, 1.0);

  // swap hidden units 0 and 2: rows of A1 and b1, columns of A2
  LayerParams lp = unflatten_params(spec, pv.flat);
  for (std::size_t c = 0; c < 2; ++c) std::swap(lp.weights[0](0, c), lp.weights[0](2, c));
  std::swap(lp.biases[0][0], lp.biases[0][2]);
  std::swap(lp.weights[1](0, 0), lp.weights[1](0, 2));
  const Vec permuted = flatten_params(spec, lp);

  REQUIRE(mse_loss(spec, pv.flat, ts) == Approx(mse_loss(spec, permuted, ts)).epsilon(1e-14));
  const SpectrumReport a = spectrum(spec, pv.flat, ts);
  const SpectrumReport b = spectrum(spec, permuted, ts);
  for (std::size_t i = 0; i < a.eigenvalues.size(); ++i)
    REQUIRE(a.eigenvalues[i] == Approx(b.eigenvalues[i]).margin(1e-7));
}

TEST_CASE("spectrum_trace snapshot schedule") {
  NetworkSpec spec;
  spec.hidden_widths = {3};
  spec.activation = ActivationKind::sine();
  spec.seed = 41;
  const auto img = testutil::make_test_image(8, 8, 42);
  const TrainingSet ts = image_to_training_set(img);

  auto two = spectrum_trace(spec, ts, OptimKind::kLbfgs, 6, 6);
  REQUIRE(two.size() == 2);  // initial + final
  REQUIRE(two.front().theta_snapshot_iter == 0);
  REQUIRE(two.back().theta_snapshot_iter == 6);

  auto many = spectrum_trace(spec, ts, OptimKind::kGd, 7, 2);
  REQUIRE(many.size() == 7 / 2 + 1);  // 0, 2, 4, 6
  REQUIRE(many.back().theta_snapshot_iter == 6);
}

TEST_CASE("hvp agrees with the assembled Hessian on random directions") {
  NetworkSpec spec;
  spec.hidden_widths = {5};
  spec.activation = ActivationKind::sine();
  spec.seed = 61;
  const ParamVector pv = init_params(spec);
  RngStream rng(62);
  TrainingSet ts;
  ts.X = Mat(20, 2);
  ts.Y = Mat(20, 1);
  for (auto& v : ts.X.data) v = rng.uniform(-1.0, 1.0);
  for (auto& v : ts.Y.data) v = rng.uniform(0.0, 1.0);
  const HessianResult hr = full_hessian(spec, pv.flat, ts);
  for (int trial = 0; trial < 4; ++trial) {
    Vec v(pv.flat.size());
    for (auto& x : v) x = rng.normal(0.0, 1.0);
    const Vec hv = hvp(spec, pv.flat, ts, v);
    const Vec ref = matvec(hr.h, v);
    const double scale = std::max(norm(ref), 1e-10);
    for (std::size_t i = 0; i < hv.size(); ++i)
      REQUIRE(std::abs(hv[i] - ref[i]) / scale < 1e-4);
  }
}

TEST_CASE("seeded regression: ReLU-PE develops more zero curvature than sine and Gaussian") {
  // scaled-down pairing of the activations on the same data and seed
  const auto img = testutil::make_test_image(24, 24, 99);
  const TrainingSet ts = image_to_training_set(img);

  NetworkSpec sine;
  sine.hidden_widths = {8, 8};
  sine.activation = ActivationKind::sine();
  sine.seed = 7;
  NetworkSpec gauss = sine;
  gauss.activation = ActivationKind::gaussian();
  NetworkSpec relupe = sine;
  relupe.activation = ActivationKind::relu();
  relupe.pe.enabled = true;
  relupe.pe.num_frequencies = 6;

  const auto sine_reports = spectrum_trace(sine, ts, OptimKind::kLbfgs, 30, 15);
  const auto gauss_reports = spectrum_trace(gauss, ts, OptimKind::kLbfgs, 30, 15);
  const auto relupe_reports = spectrum_trace(relupe, ts, OptimKind::kLbfgs, 30, 15);
  REQUIRE(sine_reports.size() == relupe_reports.size());
  // at the trained end of the run the ordering is strict
  REQUIRE(sine_reports.back().zero_fraction < relupe_reports.back().zero_fraction);
  REQUIRE(gauss_reports.back().zero_fraction < relupe_reports.back().zero_fraction);
  REQUIRE(sine_reports.back().zero_fraction == 0.0);
}
