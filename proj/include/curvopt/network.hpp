#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "curvopt/numerics.hpp"

namespace curvopt {

inline constexpr double kPi = 3.14159265358979323846;

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

enum class Activation { kReLU, kTanh, kSine, kGaussian };

struct ActivationKind {
  Activation kind = Activation::kSine;
  double omega = 10.0;   // sine: psi(z) = sin(2*pi*omega*z)
  double mu = 0.0;       // gaussian mean
  double sigma = 0.1;    // gaussian width; smaller = higher frequency

  static ActivationKind relu() { return {Activation::kReLU, 0, 0, 0}; }
  static ActivationKind tanh() { return {Activation::kTanh, 0, 0, 0}; }
  static ActivationKind sine(double omega = 10.0) { return {Activation::kSine, omega, 0, 0}; }
  static ActivationKind gaussian(double mu = 0.0, double sigma = 0.1) {
    return {Activation::kGaussian, 0, mu, sigma};
  }

  void validate() const {
    if (kind == Activation::kSine && !(omega > 0.0))
      throw ConfigError("activation: sine requires omega > 0");
    if (kind == Activation::kGaussian && !(sigma > 0.0))
      throw ConfigError("activation: gaussian requires sigma > 0");
  }

  double apply(double z) const {
    switch (kind) {
      case Activation::kReLU: return z > 0.0 ? z : 0.0;
      case Activation::kTanh: return std::tanh(z);
      case Activation::kSine: return std::sin(2.0 * kPi * omega * z);
      case Activation::kGaussian: {
        const double u = (z - mu) / sigma;
        return std::exp(-0.5 * u * u);
      }
    }
    return 0.0;
  }

  // derivative; ReLU uses the subgradient convention psi'(0) = 0
  double deriv(double z) const {
    switch (kind) {
      case Activation::kReLU: return z > 0.0 ? 1.0 : 0.0;
      case Activation::kTanh: {
        const double t = std::tanh(z);
        return 1.0 - t * t;
      }
      case Activation::kSine: {
        const double w = 2.0 * kPi * omega;
        return w * std::cos(w * z);
      }
      case Activation::kGaussian: {
        const double u = (z - mu) / sigma;
        return -(u / sigma) * std::exp(-0.5 * u * u);
      }
    }
    return 0.0;
  }

  std::string name() const {
    switch (kind) {
      case Activation::kReLU: return "relu";
      case Activation::kTanh: return "tanh";
      case Activation::kSine: return "sine";
      case Activation::kGaussian: return "gaussian";
    }
    return "?";
  }
};

// ---------------------------------------------------------------------------
// Positional encoding: x -> [x, sin(f_k x_i), cos(f_k x_i), ...] with
// f_k = pi * base^k, k = 0..num_frequencies-1, per input dimension. The first
// d components of the embedding are the identity.
// ---------------------------------------------------------------------------

struct PositionalEncoding {
  bool enabled = false;
  std::size_t num_frequencies = 6;  // D_half
  double base = 2.0;

  std::size_t embedded_dim(std::size_t d) const {
    return enabled ? d + 2 * d * num_frequencies : d;
  }

  double frequency(std::size_t k) const { return kPi * std::pow(base, static_cast<double>(k)); }

  // layout: [x_0..x_{d-1}, then per dim i: (sin(f_0 x_i), cos(f_0 x_i), ...,
  // sin(f_{K-1} x_i), cos(f_{K-1} x_i))]
  void embed(const double* x, std::size_t d, double* out) const {
    for (std::size_t i = 0; i < d; ++i) out[i] = x[i];
    if (!enabled) return;
    std::size_t pos = d;
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t k = 0; k < num_frequencies; ++k) {
        const double f = frequency(k);
        out[pos++] = std::sin(f * x[i]);
        out[pos++] = std::cos(f * x[i]);
      }
    }
  }
};

// ---------------------------------------------------------------------------
// Network description and parameter layout
// ---------------------------------------------------------------------------

enum class InitScheme {
  kAuto,           // sine -> kSirenUniform, everything else -> kXavierUniform
  kSirenUniform,   // first layer U(-1/fan_in, 1/fan_in); later layers
                   // U(+-sqrt(6/fan_in)/(2 pi omega)) so the activation's full
                   // frequency multiplier cancels and hidden pre-activations
                   // keep unit scale
  kXavierUniform,  // all layers U(+-sqrt(6/fan_in))
};

struct NetworkSpec {
  std::size_t input_dim = 2;
  std::size_t output_dim = 1;
  std::vector<std::size_t> hidden_widths;
  ActivationKind activation = ActivationKind::sine();
  PositionalEncoding pe;
  InitScheme init = InitScheme::kAuto;
  std::uint64_t seed = 1;

  std::size_t embedded_dim() const { return pe.embedded_dim(input_dim); }

  // widths of the affine chain: [embedded input, hidden..., output]
  std::vector<std::size_t> layer_widths() const {
    std::vector<std::size_t> w;
    w.reserve(hidden_widths.size() + 2);
    w.push_back(embedded_dim());
    for (std::size_t h : hidden_widths) w.push_back(h);
    w.push_back(output_dim);
    return w;
  }

  std::size_t num_affine() const { return hidden_widths.size() + 1; }

  std::size_t param_count() const {
    const auto w = layer_widths();
    std::size_t p = 0;
    for (std::size_t l = 1; l < w.size(); ++l) p += w[l - 1] * w[l] + w[l];
    return p;
  }

  void validate() const {
    if (input_dim == 0 || output_dim == 0)
      throw ConfigError("network: input and output dimensions must be positive");
    for (std::size_t h : hidden_widths)
      if (h == 0) throw ConfigError("network: zero-width hidden layer");
    activation.validate();
    if (pe.enabled && pe.num_frequencies == 0)
      throw ConfigError("network: positional encoding with zero frequencies");
  }

  InitScheme resolved_init() const {
    if (init != InitScheme::kAuto) return init;
    return activation.kind == Activation::kSine ? InitScheme::kSirenUniform
                                                : InitScheme::kXavierUniform;
  }
};

// Flat parameter vector with the per-layer layout. Weights for affine map l
// are stored input-major: W_l has shape (fan_in x fan_out) so that a batched
// forward is Z = H * W_l + b_l; W_l is the transpose of the math convention's
// A_l. Storage order: W_1, b_1, W_2, b_2, ...
struct ParamLayout {
  struct Span {
    std::size_t offset = 0;
    std::size_t rows = 0;  // fan_in for weights, 1 for biases
    std::size_t cols = 0;  // fan_out
  };
  std::vector<Span> weights;
  std::vector<Span> biases;
  std::size_t total = 0;

  static ParamLayout from_spec(const NetworkSpec& spec) {
    ParamLayout lay;
    const auto w = spec.layer_widths();
    std::size_t off = 0;
    for (std::size_t l = 1; l < w.size(); ++l) {
      lay.weights.push_back({off, w[l - 1], w[l]});
      off += w[l - 1] * w[l];
      lay.biases.push_back({off, 1, w[l]});
      off += w[l];
    }
    lay.total = off;
    return lay;
  }
};

struct ParamVector {
  Vec flat;
  ParamLayout layout;
};

struct TrainingSet {
  Mat X;  // N x d coordinates, normalized to [-1, 1]^d
  Mat Y;  // N x output_dim targets
};

// ---------------------------------------------------------------------------
// Initialization. Deterministic given spec.seed: weights are drawn layer by
// layer in storage order, biases are zero and consume no draws.
// ---------------------------------------------------------------------------

inline ParamVector init_params(const NetworkSpec& spec) {
  spec.validate();
  ParamVector pv;
  pv.layout = ParamLayout::from_spec(spec);
  pv.flat.assign(pv.layout.total, 0.0);

  RngStream rng(spec.seed);
  const auto widths = spec.layer_widths();
  const InitScheme scheme = spec.resolved_init();

  for (std::size_t l = 0; l < pv.layout.weights.size(); ++l) {
    const auto& span = pv.layout.weights[l];
    const double fan_in = static_cast<double>(widths[l]);
    double bound;
    if (scheme == InitScheme::kSirenUniform) {
      bound = (l == 0) ? 1.0 / fan_in
                       : std::sqrt(6.0 / fan_in) / (2.0 * kPi * spec.activation.omega);
    } else {
      bound = std::sqrt(6.0 / fan_in);
    }
    double* w = pv.flat.data() + span.offset;
    const std::size_t count = span.rows * span.cols;
    for (std::size_t i = 0; i < count; ++i) w[i] = rng.uniform(-bound, bound);
  }
  return pv;
}

// Flattened params -> per-layer (A_l, b_l) in the math convention, A_l of
// shape (fan_out x fan_in). Round-trips exactly with flatten_params.
struct LayerParams {
  std::vector<Mat> weights;  // A_l, fan_out x fan_in
  std::vector<Vec> biases;
};

inline LayerParams unflatten_params(const NetworkSpec& spec, const Vec& flat) {
  const ParamLayout lay = ParamLayout::from_spec(spec);
  if (flat.size() != lay.total)
    throw ConfigError("unflatten_params: expected " + std::to_string(lay.total) +
                      " parameters, got " + std::to_string(flat.size()));
  LayerParams lp;
  for (std::size_t l = 0; l < lay.weights.size(); ++l) {
    const auto& ws = lay.weights[l];
    Mat a(ws.cols, ws.rows);
    for (std::size_t i = 0; i < ws.rows; ++i)
      for (std::size_t j = 0; j < ws.cols; ++j) a(j, i) = flat[ws.offset + i * ws.cols + j];
    lp.weights.push_back(std::move(a));
    const auto& bs = lay.biases[l];
    lp.biases.emplace_back(flat.begin() + bs.offset, flat.begin() + bs.offset + bs.cols);
  }
  return lp;
}

inline Vec flatten_params(const NetworkSpec& spec, const LayerParams& lp) {
  const ParamLayout lay = ParamLayout::from_spec(spec);
  Vec flat(lay.total);
  for (std::size_t l = 0; l < lay.weights.size(); ++l) {
    const auto& ws = lay.weights[l];
    for (std::size_t i = 0; i < ws.rows; ++i)
      for (std::size_t j = 0; j < ws.cols; ++j) flat[ws.offset + i * ws.cols + j] = lp.weights[l](j, i);
    const auto& bs = lay.biases[l];
    for (std::size_t j = 0; j < bs.cols; ++j) flat[bs.offset + j] = lp.biases[l][j];
  }
  return flat;
}

// ---------------------------------------------------------------------------
// Forward evaluation
// ---------------------------------------------------------------------------

namespace detail {

inline void resize_mat(Mat& m, std::size_t r, std::size_t c) {
  m.rows = r;
  m.cols = c;
  m.data.resize(r * c);  // shrink keeps capacity, so repeated evals do not churn
}

inline Mat embed_batch(const NetworkSpec& spec, const Mat& x) {
  if (x.cols != spec.input_dim)
    throw ConfigError("forward: input has " + std::to_string(x.cols) + " columns, spec expects " +
                      std::to_string(spec.input_dim));
  if (!spec.pe.enabled) return x;
  Mat e(x.rows, spec.embedded_dim());
  for (std::size_t n = 0; n < x.rows; ++n) spec.pe.embed(x.row(n), x.cols, e.row(n));
  return e;
}

// activation value (and optionally derivative) over a contiguous block,
// in place: z is overwritten with psi(z)
inline void activate_block(const ActivationKind& act, double* __restrict z,
                           double* __restrict dv, std::size_t count) {
  switch (act.kind) {
    case Activation::kReLU:
      if (dv) {
        for (std::size_t i = 0; i < count; ++i) {
          const bool on = z[i] > 0.0;
          dv[i] = on ? 1.0 : 0.0;
          z[i] = on ? z[i] : 0.0;
        }
      } else {
        for (std::size_t i = 0; i < count; ++i) z[i] = z[i] > 0.0 ? z[i] : 0.0;
      }
      break;
    case Activation::kTanh:
      for (std::size_t i = 0; i < count; ++i) {
        const double t = std::tanh(z[i]);
        if (dv) dv[i] = 1.0 - t * t;
        z[i] = t;
      }
      break;
    case Activation::kSine: {
      const double w = 2.0 * kPi * act.omega;
      if (dv) {
        for (std::size_t i = 0; i < count; ++i) {
          const double a = w * z[i];
          double s, c;
#if defined(__GLIBC__)
          ::sincos(a, &s, &c);  // glibc kernel, bit-equal to separate sin/cos
#else
          s = std::sin(a);
          c = std::cos(a);
#endif
          dv[i] = w * c;
          z[i] = s;
        }
      } else {
        for (std::size_t i = 0; i < count; ++i) z[i] = std::sin(w * z[i]);
      }
      break;
    }
    case Activation::kGaussian: {
      const double inv_s = 1.0 / act.sigma;
      for (std::size_t i = 0; i < count; ++i) {
        const double u = (z[i] - act.mu) * inv_s;
        const double e = std::exp(-0.5 * u * u);
        if (dv) dv[i] = -u * inv_s * e;
        z[i] = e;
      }
      break;
    }
  }
}

// Reusable buffers for repeated loss/gradient evaluations over one training
// set. The embedding of X is computed once and cached.
struct EvalWorkspace {
  Mat embedded;
  const double* bound_x = nullptr;
  std::size_t bound_rows = 0;
  std::vector<Mat> acts;    // acts[l] = psi(Z_l); acts.back() unused (see out)
  std::vector<Mat> derivs;  // derivs[l] = psi'(Z_{l+1}) for hidden layers
  Mat out;
  Mat delta, delta_prev;
  Vec w_t;  // scratch for transposed layer weights
};

// Forward pass through the affine chain: fills ws.acts (hidden activations),
// ws.out, and optionally ws.derivs. Each output element is bias plus an
// ascending-index accumulation over the fan-in.
inline void forward_ws(const NetworkSpec& spec, const Vec& params, const Mat& x, EvalWorkspace& ws,
                       bool want_derivs) {
  const ParamLayout lay = ParamLayout::from_spec(spec);
  if (params.size() != lay.total)
    throw ConfigError("forward: parameter count mismatch, expected " + std::to_string(lay.total));
  if (ws.bound_x != x.data.data() || ws.bound_rows != x.rows) {
    ws.embedded = embed_batch(spec, x);
    ws.bound_x = x.data.data();
    ws.bound_rows = x.rows;
  }
  const std::size_t n_samples = x.rows;
  const std::size_t last = lay.weights.size() - 1;
  ws.acts.resize(last);    // hidden activations only
  ws.derivs.resize(want_derivs ? last : 0);

  const Mat* h = &ws.embedded;
  for (std::size_t l = 0; l <= last; ++l) {
    const auto& w = lay.weights[l];
    const auto& b = lay.biases[l];
    Mat& z = (l == last) ? ws.out : ws.acts[l];
    resize_mat(z, n_samples, w.cols);
    Mat* dv = (want_derivs && l < last) ? &ws.derivs[l] : nullptr;
    if (dv) resize_mat(*dv, n_samples, w.cols);
    const ActivationKind act = spec.activation;
    const std::size_t fan_in = w.rows;
    const std::size_t fan_out = w.cols;
    const double* wbase = params.data() + w.offset;
    const double* bias = params.data() + b.offset;
    const double* hbase = h->data.data();
    double* zbase = z.data.data();
    parallel_chunks(
        n_samples,
        [=, &act, dvp = dv ? dv->data.data() : nullptr](std::size_t lo, std::size_t hi) {
          for (std::size_t n = lo; n < hi; ++n) {
            double* __restrict zn = zbase + n * fan_out;
            for (std::size_t j = 0; j < fan_out; ++j) zn[j] = bias[j];
            const double* hn = hbase + n * fan_in;
            for (std::size_t k = 0; k < fan_in; ++k) {
              const double hk = hn[k];
              const double* __restrict wk = wbase + k * fan_out;
              for (std::size_t j = 0; j < fan_out; ++j) zn[j] += hk * wk[j];
            }
          }
          if (l < last)
            activate_block(act, zbase + lo * fan_out, dvp ? dvp + lo * fan_out : nullptr,
                           (hi - lo) * fan_out);
        },
        std::max<std::size_t>(1, (1u << 17) / std::max<std::size_t>(1, w.rows * w.cols)));
    h = &z;
  }
}

inline void check_finite_output(const NetworkSpec& spec, const Vec& params, const Mat& x,
                                const Mat& out) {
  if (all_finite(out.data)) return;
  // slow re-walk naming the first offending layer
  const LayerParams lp = unflatten_params(spec, params);
  for (std::size_t n = 0; n < x.rows; ++n) {
    Vec h(spec.embedded_dim());
    spec.pe.embed(x.row(n), x.cols, h.data());
    for (std::size_t l = 0; l < lp.weights.size(); ++l) {
      const Mat& a = lp.weights[l];
      Vec z(a.rows);
      for (std::size_t i = 0; i < a.rows; ++i) {
        double s = lp.biases[l][i];
        for (std::size_t k = 0; k < a.cols; ++k) s += h[k] * a(i, k);
        z[i] = s;
      }
      if (!all_finite(z))
        throw NumericalError("forward: non-finite output first appears in layer " +
                             std::to_string(l + 1));
      h.resize(z.size());
      for (std::size_t i = 0; i < z.size(); ++i) h[i] = spec.activation.apply(z[i]);
    }
  }
  throw NumericalError("forward: non-finite output");
}

}  // namespace detail

// Batched evaluation: one output row per input row.
inline Mat forward(const NetworkSpec& spec, const Vec& params, const Mat& x) {
  detail::EvalWorkspace ws;
  detail::forward_ws(spec, params, x, ws, /*want_derivs=*/false);
  detail::check_finite_output(spec, params, x, ws.out);
  return std::move(ws.out);
}

// ---------------------------------------------------------------------------
// MSE loss and its parameter gradient. L = (1/N) sum_i 0.5 * |f(x_i) - y_i|^2
// (note the 1/2 inside the sum).
// ---------------------------------------------------------------------------

namespace detail {

inline double residual_loss(const Mat& out, const Mat& y) {
  if (out.rows != y.rows || out.cols != y.cols)
    throw ConfigError("mse_loss: prediction/target shape mismatch");
  double acc = 0.0;
  for (std::size_t n = 0; n < out.rows; ++n) {
    const double* on = out.row(n);
    const double* yn = y.row(n);
    double s = 0.0;
    for (std::size_t c = 0; c < out.cols; ++c) {
      const double r = on[c] - yn[c];
      s += r * r;
    }
    acc += 0.5 * s;
  }
  return acc / static_cast<double>(out.rows);
}

}  // namespace detail

inline double mse_loss(const NetworkSpec& spec, const Vec& params, const TrainingSet& ts,
                       detail::EvalWorkspace& ws) {
  detail::forward_ws(spec, params, ts.X, ws, /*want_derivs=*/false);
  detail::check_finite_output(spec, params, ts.X, ws.out);
  return detail::residual_loss(ws.out, ts.Y);
}

inline double mse_loss(const NetworkSpec& spec, const Vec& params, const TrainingSet& ts) {
  detail::EvalWorkspace ws;
  return mse_loss(spec, params, ts, ws);
}

// Reverse-mode gradient of mse_loss. Returns the loss; grad is resized to the
// parameter count. Every contraction runs in a fixed ascending order per
// output element, so gradients are reproducible bit for bit.
inline double loss_and_gradient(const NetworkSpec& spec, const Vec& params, const TrainingSet& ts,
                                Vec& grad, detail::EvalWorkspace& ws) {
  const ParamLayout lay = ParamLayout::from_spec(spec);
  detail::forward_ws(spec, params, ts.X, ws, /*want_derivs=*/true);
  detail::check_finite_output(spec, params, ts.X, ws.out);
  const double loss = detail::residual_loss(ws.out, ts.Y);

  grad.assign(lay.total, 0.0);
  const std::size_t n_samples = ts.X.rows;
  const double inv_n = 1.0 / static_cast<double>(n_samples);
  const std::size_t last = lay.weights.size() - 1;

  // delta at the output (no activation on the final affine map)
  detail::resize_mat(ws.delta, n_samples, spec.output_dim);
  for (std::size_t n = 0; n < n_samples; ++n)
    for (std::size_t c = 0; c < spec.output_dim; ++c)
      ws.delta(n, c) = inv_n * (ws.out(n, c) - ts.Y(n, c));

  for (std::size_t l = last + 1; l-- > 0;) {
    const auto& wspan = lay.weights[l];
    const auto& bspan = lay.biases[l];
    const Mat& h = (l == 0) ? ws.embedded : ws.acts[l - 1];
    const std::size_t fan_in = wspan.rows;
    const std::size_t fan_out = wspan.cols;
    // weight gradient: h^T * delta. Samples are walked in blocks so the
    // gradient slab stays cache-resident; per element the accumulation is
    // still plain ascending sample order. Threads own disjoint column
    // ranges aligned to cache lines.
    {
      const double* hbase = h.data.data();
      const double* dbase = ws.delta.data.data();
      double* gbase = grad.data() + wspan.offset;
      constexpr std::size_t kBlock = 128;
      for (std::size_t nb = 0; nb < n_samples; nb += kBlock) {
        const std::size_t ne = std::min(n_samples, nb + kBlock);
        for (std::size_t i = 0; i < fan_in; ++i) {
          double* __restrict g = gbase + i * fan_out;
          for (std::size_t n = nb; n < ne; ++n) {
            const double hni = hbase[n * fan_in + i];
            const double* __restrict dn = dbase + n * fan_out;
            for (std::size_t j = 0; j < fan_out; ++j) g[j] += hni * dn[j];
          }
        }
      }
    }
    double* gb = grad.data() + bspan.offset;
    for (std::size_t n = 0; n < n_samples; ++n) {
      const double* dn = ws.delta.row(n);
      for (std::size_t j = 0; j < bspan.cols; ++j) gb[j] += dn[j];
    }
    if (l == 0) break;
    // propagate: delta_prev = (delta * W_l^T) .* psi'(Z_{l-1}). Work from a
    // transposed weight copy so the i-accumulations are independent and
    // vectorize; per element the j sum stays in ascending order.
    detail::resize_mat(ws.delta_prev, n_samples, wspan.rows);
    {
      ws.w_t.resize(fan_in * fan_out);
      const double* wbase = params.data() + wspan.offset;
      for (std::size_t i = 0; i < fan_in; ++i)
        for (std::size_t j = 0; j < fan_out; ++j) ws.w_t[j * fan_in + i] = wbase[i * fan_out + j];
      const double* dbase = ws.delta.data.data();
      const double* dvbase = ws.derivs[l - 1].data.data();
      const double* wtbase = ws.w_t.data();
      double* pbase = ws.delta_prev.data.data();
      detail::parallel_chunks(
          n_samples,
          [=](std::size_t lo, std::size_t hi) {
            for (std::size_t n = lo; n < hi; ++n) {
              const double* __restrict dn = dbase + n * fan_out;
              const double* __restrict dvn = dvbase + n * fan_in;
              double* __restrict pn = pbase + n * fan_in;
              for (std::size_t i = 0; i < fan_in; ++i) pn[i] = 0.0;
              for (std::size_t j = 0; j < fan_out; ++j) {
                const double dnj = dn[j];
                const double* __restrict wtj = wtbase + j * fan_in;
                for (std::size_t i = 0; i < fan_in; ++i) pn[i] += dnj * wtj[i];
              }
              for (std::size_t i = 0; i < fan_in; ++i) pn[i] *= dvn[i];
            }
          },
          std::max<std::size_t>(1, (1u << 17) / std::max<std::size_t>(1, fan_in * fan_out)));
    }
    std::swap(ws.delta, ws.delta_prev);
  }

  if (!all_finite(grad)) throw NumericalError("loss_gradient: non-finite gradient");
  return loss;
}

inline double loss_and_gradient(const NetworkSpec& spec, const Vec& params, const TrainingSet& ts,
                                Vec& grad) {
  detail::EvalWorkspace ws;
  return loss_and_gradient(spec, params, ts, grad, ws);
}

inline Vec loss_gradient(const NetworkSpec& spec, const Vec& params, const TrainingSet& ts) {
  Vec grad;
  loss_and_gradient(spec, params, ts, grad);
  return grad;
}

// ---------------------------------------------------------------------------
// Input-space derivatives at a single point
// ---------------------------------------------------------------------------

// d f_c / d x for one output channel, by reverse accumulation through the
// affine chain and the encoding Jacobian.
inline Vec channel_input_gradient(const NetworkSpec& spec, const Vec& params, const Vec& x,
                                  std::size_t channel) {
  spec.validate();
  if (x.size() != spec.input_dim) throw ConfigError("input_gradient: coordinate dimension mismatch");
  if (channel >= spec.output_dim) throw ConfigError("input_gradient: channel out of range");
  const ParamLayout lay = ParamLayout::from_spec(spec);
  if (params.size() != lay.total) throw ConfigError("input_gradient: parameter count mismatch");

  const std::size_t d = spec.input_dim;
  const std::size_t n_layers = lay.weights.size();

  // forward, keeping pre-activations
  Vec h(spec.embedded_dim());
  spec.pe.embed(x.data(), d, h.data());
  std::vector<Vec> pre;
  for (std::size_t l = 0; l + 1 < n_layers; ++l) {
    const auto& ws = lay.weights[l];
    const auto& bs = lay.biases[l];
    Vec z(ws.cols);
    for (std::size_t j = 0; j < ws.cols; ++j) z[j] = params[bs.offset + j];
    for (std::size_t k = 0; k < ws.rows; ++k) {
      const double hk = h[k];
      const double* wk = params.data() + ws.offset + k * ws.cols;
      for (std::size_t j = 0; j < ws.cols; ++j) z[j] += hk * wk[j];
    }
    pre.push_back(z);
    h.resize(ws.cols);
    for (std::size_t j = 0; j < ws.cols; ++j) h[j] = spec.activation.apply(z[j]);
  }

  // reverse pass: u starts as the selected output row of the last affine map
  const auto& wl = lay.weights[n_layers - 1];
  Vec u(wl.rows);
  for (std::size_t i = 0; i < wl.rows; ++i) u[i] = params[wl.offset + i * wl.cols + channel];

  for (std::size_t l = n_layers - 1; l-- > 0;) {
    const Vec& z = pre[l];
    for (std::size_t j = 0; j < u.size(); ++j) u[j] *= spec.activation.deriv(z[j]);
    const auto& ws = lay.weights[l];
    Vec v(ws.rows);
    for (std::size_t i = 0; i < ws.rows; ++i) {
      const double* wi = params.data() + ws.offset + i * ws.cols;
      double s = 0.0;
      for (std::size_t j = 0; j < ws.cols; ++j) s += wi[j] * u[j];
      v[i] = s;
    }
    u = std::move(v);
  }

  // chain through the encoding: identity on the first d slots, sin/cos pairs after
  Vec g(d);
  for (std::size_t i = 0; i < d; ++i) g[i] = u[i];
  if (spec.pe.enabled) {
    std::size_t pos = d;
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t k = 0; k < spec.pe.num_frequencies; ++k) {
        const double f = spec.pe.frequency(k);
        g[i] += f * std::cos(f * x[i]) * u[pos];
        g[i] -= f * std::sin(f * x[i]) * u[pos + 1];
        pos += 2;
      }
    }
  }
  return g;
}

// Gradient of a scalar-output network with respect to its input coordinates.
inline Vec output_input_gradient(const NetworkSpec& spec, const Vec& params, const Vec& x) {
  if (spec.output_dim != 1)
    throw ConfigError("output_input_gradient: scalar-output network required");
  return channel_input_gradient(spec, params, x, 0);
}

// Laplacian of one output channel: central differences of the analytic input
// gradient with step h = 1e-4.
inline double channel_laplacian(const NetworkSpec& spec, const Vec& params, const Vec& x,
                                std::size_t channel) {
  const double h = 1e-4;
  double lap = 0.0;
  Vec xp = x, xm = x;
  for (std::size_t j = 0; j < x.size(); ++j) {
    xp[j] = x[j] + h;
    xm[j] = x[j] - h;
    const Vec gp = channel_input_gradient(spec, params, xp, channel);
    const Vec gm = channel_input_gradient(spec, params, xm, channel);
    lap += (gp[j] - gm[j]) / (2.0 * h);
    xp[j] = x[j];
    xm[j] = x[j];
  }
  return lap;
}

inline double output_laplacian(const NetworkSpec& spec, const Vec& params, const Vec& x) {
  if (spec.output_dim != 1)
    throw ConfigError("output_laplacian: scalar-output network required");
  return channel_laplacian(spec, params, x, 0);
}

}  // namespace curvopt
