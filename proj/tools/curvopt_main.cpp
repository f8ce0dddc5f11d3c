// curvopt command-line tool: fits coordinate networks to images and audio
// with second-order and first-order optimizers, probes loss-Hessian spectra,
// renders derivative maps, and runs tiled (kilo) fits.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "curvopt/curvature.hpp"
#include "curvopt/io.hpp"
#include "curvopt/network.hpp"
#include "curvopt/optimizers.hpp"
#include "curvopt/tasks.hpp"

namespace {

using namespace curvopt;
namespace fs = std::filesystem;

struct NetFlags {
  std::string activation = "sine";
  double omega = 10.0;
  double mu = 0.0;
  double sigma = 0.1;
  std::size_t pe_frequencies = 6;
  double pe_base = 2.0;
  std::size_t width = 64;
  std::size_t depth = 4;
  std::uint64_t seed = 1;
};

struct OptimFlags {
  std::string optimizer = "lbfgs";
  std::size_t iters = 200;
  double lr = 0.0;  // 0 = optimizer default
  std::size_t history = 10;
  double target_psnr = 0.0;  // 0 = no PSNR target
  std::size_t log_every = 1;
};

void add_net_flags(CLI::App* cmd, NetFlags& f) {
  cmd->add_option("--activation", f.activation, "relu|relu-pe|tanh|sine|gaussian")
      ->check(CLI::IsMember({"relu", "relu-pe", "tanh", "sine", "gaussian"}));
  cmd->add_option("--omega", f.omega, "sine frequency hyperparameter");
  cmd->add_option("--mu", f.mu, "gaussian activation mean");
  cmd->add_option("--sigma", f.sigma, "gaussian activation width");
  cmd->add_option("--pe-frequencies", f.pe_frequencies, "positional-encoding frequency count");
  cmd->add_option("--pe-base", f.pe_base, "positional-encoding frequency base");
  cmd->add_option("--width", f.width, "hidden layer width");
  cmd->add_option("--depth", f.depth, "hidden layer count");
  cmd->add_option("--seed", f.seed, "initialization seed");
}

void add_optim_flags(CLI::App* cmd, OptimFlags& f, bool with_optimizer = true) {
  if (with_optimizer)
    cmd->add_option("--optimizer", f.optimizer, "lbfgs|bfgs|newton|adam|gd")
        ->check(CLI::IsMember({"lbfgs", "bfgs", "newton", "adam", "gd"}));
  cmd->add_option("--iters", f.iters, "iteration budget");
  cmd->add_option("--lr", f.lr, "learning rate for adam/gd (0 = default)");
  cmd->add_option("--history", f.history, "L-BFGS curvature-pair history size");
  cmd->add_option("--target-psnr", f.target_psnr, "stop when this PSNR (dB) is reached");
  cmd->add_option("--log-every", f.log_every, "CSV row cadence in iterations");
}

NetworkSpec make_spec(const NetFlags& f, std::size_t input_dim, std::size_t output_dim) {
  NetworkSpec spec;
  spec.input_dim = input_dim;
  spec.output_dim = output_dim;
  spec.hidden_widths.assign(f.depth, f.width);
  spec.seed = f.seed;
  if (f.activation == "relu") {
    spec.activation = ActivationKind::relu();
  } else if (f.activation == "relu-pe") {
    spec.activation = ActivationKind::relu();
    spec.pe.enabled = true;
  } else if (f.activation == "tanh") {
    spec.activation = ActivationKind::tanh();
  } else if (f.activation == "sine") {
    spec.activation = ActivationKind::sine(f.omega);
  } else if (f.activation == "gaussian") {
    spec.activation = ActivationKind::gaussian(f.mu, f.sigma);
  } else {
    throw ConfigError("unknown activation '" + f.activation + "'");
  }
  spec.pe.num_frequencies = f.pe_frequencies;
  spec.pe.base = f.pe_base;
  spec.validate();
  return spec;
}

TrainConfig make_train_config(const OptimFlags& f, double psnr_peak, std::size_t channels) {
  TrainConfig cfg;
  cfg.kind = parse_optim_kind(f.optimizer);
  cfg.budget.max_iters = f.iters;
  cfg.opts.lbfgs_history = f.history;
  if (f.lr > 0.0) {
    cfg.opts.adam_lr = f.lr;
    cfg.opts.gd_lr = f.lr;
  }
  cfg.psnr_peak = psnr_peak;
  if (f.target_psnr > 0.0) {
    // psnr = 10 log10(peak^2 c / (2 L))  =>  L at the target
    cfg.budget.target_loss = psnr_peak * psnr_peak * static_cast<double>(channels) /
                             (2.0 * std::pow(10.0, f.target_psnr / 10.0));
  }
  return cfg;
}

void echo_config(RunSummary& s, const NetFlags& nf, const OptimFlags& of) {
  s.add("activation", nf.activation);
  s.add("omega", nf.omega);
  s.add("mu", nf.mu);
  s.add("sigma", nf.sigma);
  s.add("pe_frequencies", nf.pe_frequencies);
  s.add("pe_base", nf.pe_base);
  s.add("width", nf.width);
  s.add("depth", nf.depth);
  s.add("seed", std::to_string(nf.seed));
  s.add("optimizer", of.optimizer);
  s.add("iters", of.iters);
  s.add("lr", of.lr);
  s.add("history", of.history);
  s.add("target_psnr", of.target_psnr);
  s.add("log_every", of.log_every);
  s.add("wolfe_c1", WolfeConfig{}.c1);
  s.add("wolfe_c2", WolfeConfig{}.c2);
}

void add_result_fields(RunSummary& s, const OptimizeResult& res) {
  s.add("iterations", res.trace.size());
  s.add("final_loss", res.final_loss);
  s.add("final_grad_norm", res.final_grad_norm);
  if (!res.trace.empty() && res.trace.back().psnr)
    s.add("final_psnr", *res.trace.back().psnr);
  s.add("status", optim_status_name(res.status));
  if (!res.diagnostic.empty()) s.add("diagnostic", res.diagnostic);
  s.add("curvature_skips", res.curvature_skips);
  s.add("line_search_warnings", res.line_search_warnings);
  if (res.trace.size() >= 12) {
    const RateReport rate = convergence_rate_report(res.trace);
    s.add("rate_tail_median", rate.tail_median);
    s.add("rate_classification", rate_class_name(rate.classification));
  } else {
    s.add("rate_classification", "n/a (trace shorter than 12)");
  }
}

std::vector<IterationRecord> thin_trace(const std::vector<IterationRecord>& trace,
                                        std::size_t every) {
  if (every <= 1) return trace;
  std::vector<IterationRecord> out;
  for (std::size_t i = 0; i < trace.size(); ++i)
    if (trace[i].iter % every == 0 || i + 1 == trace.size()) out.push_back(trace[i]);
  return out;
}

std::string image_out_name(std::size_t channels, const std::string& stem) {
  return stem + (channels == 3 ? ".ppm" : ".pgm");
}

// exit code 3 when the optimizer aborted, 0 otherwise
int status_exit_code(const OptimizeResult& res) {
  return (res.status == OptimStatus::kNumericalAbort ||
          res.status == OptimStatus::kLineSearchFailure)
             ? 3
             : 0;
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

int cmd_fit(const std::string& image_path, const std::string& audio_path, const NetFlags& nf,
            const OptimFlags& of, const std::string& out_dir) {
  const auto t0 = std::chrono::steady_clock::now();
  fs::create_directories(out_dir);

  RunSummary summary;
  summary.add("command", "fit");
  ModelArtifact model;
  OptimizeResult res;
  std::size_t channels = 1;

  if (!image_path.empty()) {
    const ImageSignal img = read_image(image_path);
    channels = img.channels;
    summary.add("image", image_path);
    summary.add("img_width", img.width);
    summary.add("img_height", img.height);
    summary.add("channels", img.channels);
    echo_config(summary, nf, of);

    const NetworkSpec spec = make_spec(nf, 2, img.channels);
    res = run_optimizer(spec, image_to_training_set(img), make_train_config(of, 1.0, channels));

    const ImageSignal rec = reconstruct_image(spec, res.params, img.width, img.height);
    const std::string rec_path = out_dir + "/" + image_out_name(channels, "reconstruction");
    write_image(rec, rec_path);
    summary.add("reconstruction_psnr", psnr(img, rec));
    summary.add("artifact_reconstruction", rec_path);

    model.spec = spec;
    model.signal = "image";
    model.img_width = img.width;
    model.img_height = img.height;
  } else {
    const AudioSignal audio = read_audio(audio_path);
    summary.add("audio", audio_path);
    summary.add("sample_rate", std::size_t{audio.sample_rate});
    summary.add("num_samples", audio.samples.size());
    echo_config(summary, nf, of);

    const NetworkSpec spec = make_spec(nf, 1, 1);
    res = run_optimizer(spec, audio_to_training_set(audio), make_train_config(of, 2.0, 1));

    AudioSignal rec = audio;
    const TrainingSet ts = audio_to_training_set(audio);
    const Mat out = forward(spec, res.params, ts.X);
    for (std::size_t i = 0; i < rec.samples.size(); ++i)
      rec.samples[i] = std::clamp(out.data[i], -1.0, 1.0);
    const std::string rec_path = out_dir + "/reconstruction.wav";
    write_audio(rec, rec_path);
    summary.add("psnr_peak", 2.0);
    summary.add("reconstruction_psnr", audio_psnr(audio, rec));
    summary.add("artifact_reconstruction", rec_path);

    model.spec = spec;
    model.signal = "audio";
    model.sample_rate = audio.sample_rate;
    model.num_samples = audio.samples.size();
  }

  model.params = res.params;
  add_result_fields(summary, res);
  write_convergence_csv(thin_trace(res.trace, of.log_every), out_dir + "/convergence.csv");
  save_model(model, out_dir + "/model.txt");
  summary.add("artifact_csv", out_dir + "/convergence.csv");
  summary.add("artifact_model", out_dir + "/model.txt");
  summary.add_timing("wall_clock_seconds",
                     std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  summary.write(out_dir + "/summary.txt");
  return status_exit_code(res);
}

// ---------------------------------------------------------------------------
// compare: L-BFGS vs Adam with matched seed and budget
// ---------------------------------------------------------------------------

int cmd_compare(const std::string& image_path, const NetFlags& nf, OptimFlags of,
                const std::string& out_dir) {
  const auto t0 = std::chrono::steady_clock::now();
  fs::create_directories(out_dir);
  if (of.target_psnr <= 0.0) of.target_psnr = 30.0;

  const ImageSignal img = read_image(image_path);
  const NetworkSpec spec = make_spec(nf, 2, img.channels);
  const TrainingSet ts = image_to_training_set(img);

  RunSummary summary;
  summary.add("command", "compare");
  summary.add("image", image_path);
  summary.add("img_width", img.width);
  summary.add("img_height", img.height);
  echo_config(summary, nf, of);

  int exit_code = 0;
  std::size_t iters_to_target[2] = {0, 0};
  const char* names[2] = {"lbfgs", "adam"};
  for (int k = 0; k < 2; ++k) {
    OptimFlags run_flags = of;
    run_flags.optimizer = names[k];
    const OptimizeResult res =
        run_optimizer(spec, ts, make_train_config(run_flags, 1.0, img.channels));
    write_convergence_csv(thin_trace(res.trace, of.log_every),
                          out_dir + "/" + names[k] + ".csv");
    const ImageSignal rec = reconstruct_image(spec, res.params, img.width, img.height);
    write_image(rec, out_dir + "/" + image_out_name(img.channels, names[k]));

    std::size_t hit = 0;  // first iteration reaching the target PSNR
    for (const auto& r : res.trace)
      if (r.psnr && *r.psnr >= of.target_psnr) {
        hit = r.iter;
        break;
      }
    iters_to_target[k] = hit;
    const std::string prefix = names[k];
    summary.add(prefix + "_iterations", res.trace.size());
    summary.add(prefix + "_final_loss", res.final_loss);
    if (!res.trace.empty() && res.trace.back().psnr)
      summary.add(prefix + "_final_psnr", *res.trace.back().psnr);
    summary.add(prefix + "_iters_to_target",
                hit ? std::to_string(hit) : std::string("not reached"));
    summary.add(prefix + "_status", optim_status_name(res.status));
    exit_code = std::max(exit_code, status_exit_code(res));
  }
  if (iters_to_target[0] && iters_to_target[1])
    summary.add("iteration_speedup_lbfgs_over_adam",
                static_cast<double>(iters_to_target[1]) / static_cast<double>(iters_to_target[0]));
  else
    summary.add("iteration_speedup_lbfgs_over_adam", "n/a");

  summary.add_timing("wall_clock_seconds",
                     std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  summary.write(out_dir + "/compare_summary.txt");
  return exit_code;
}

// ---------------------------------------------------------------------------
// spectrum: Hessian eigenvalue census along a training run
// ---------------------------------------------------------------------------

int cmd_spectrum(const std::string& image_path, const NetFlags& nf, const OptimFlags& of,
                 std::size_t snapshot_every, double zero_tol, double window_half,
                 std::size_t bins, const std::string& out_dir) {
  const auto t0 = std::chrono::steady_clock::now();
  fs::create_directories(out_dir);

  const ImageSignal img = read_image(image_path);
  const NetworkSpec spec = make_spec(nf, 2, img.channels);
  if (spec.param_count() > kHessianParamCap)
    throw ConfigError("spectrum: network " + std::to_string(nf.depth) + "x" +
                      std::to_string(nf.width) + " has " + std::to_string(spec.param_count()) +
                      " parameters, above the dense-Hessian cap of " +
                      std::to_string(kHessianParamCap));

  SpectrumWindow window;
  window.lo = -window_half;
  window.hi = window_half;
  window.bins = bins;
  const auto reports = spectrum_trace(spec, image_to_training_set(img), parse_optim_kind(of.optimizer),
                                      of.iters, snapshot_every, zero_tol, window);

  RunSummary summary;
  summary.add("command", "spectrum");
  summary.add("image", image_path);
  echo_config(summary, nf, of);
  summary.add("snapshot_every", snapshot_every);
  summary.add("zero_tol", zero_tol);
  summary.add("window_half", window_half);
  summary.add("bins", bins);
  summary.add("snapshots", reports.size());

  for (const auto& rep : reports) {
    char tag[32];
    std::snprintf(tag, sizeof(tag), "iter%04zu", rep.theta_snapshot_iter);
    write_eigenvalues(rep, out_dir + "/eigenvalues_" + tag + ".txt");
    write_histogram_csv(rep, out_dir + "/histogram_" + tag + ".csv");
    summary.add(std::string(tag) + "_zero_fraction", rep.zero_fraction);
    summary.add(std::string(tag) + "_min_abs_nonzero", rep.min_abs_nonzero);
    summary.add(std::string(tag) + "_lambda_min", rep.lambda_min);
    summary.add(std::string(tag) + "_lambda_max", rep.lambda_max);
    summary.add(std::string(tag) + "_hessian_asymmetry", rep.hessian_asymmetry);
  }
  summary.add_timing("wall_clock_seconds",
                     std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  summary.write(out_dir + "/summary.txt");
  return 0;
}

// ---------------------------------------------------------------------------
// derivs: reconstruction, gradient-magnitude and Laplacian maps from a model
// ---------------------------------------------------------------------------

int cmd_derivs(const std::string& model_path, std::size_t width_override,
               std::size_t height_override, const std::string& out_dir) {
  const auto t0 = std::chrono::steady_clock::now();
  fs::create_directories(out_dir);

  const ModelArtifact model = load_model(model_path);
  if (model.signal != "image")
    throw ConfigError("derivs: model was fitted to '" + model.signal + "', an image fit is required");
  const std::size_t w = width_override ? width_override : model.img_width;
  const std::size_t h = height_override ? height_override : model.img_height;
  if (w < 2 || h < 2) throw ConfigError("derivs: image dimensions unknown; pass --img-width/--img-height");
  const std::size_t channels = model.spec.output_dim;

  const ImageSignal rec = reconstruct_image(model.spec, model.params, w, h);

  ImageSignal gradmag, laplacian;
  gradmag.width = laplacian.width = w;
  gradmag.height = laplacian.height = h;
  gradmag.channels = laplacian.channels = 1;
  gradmag.pixels.assign(w * h, 0.0);
  laplacian.pixels.assign(w * h, 0.0);

  detail::parallel_chunks(h, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      for (std::size_t j = 0; j < w; ++j) {
        const Vec x{axis_coord(j, w), axis_coord(i, h)};
        double gm = 0.0, lap = 0.0;
        for (std::size_t c = 0; c < channels; ++c) {  // per channel, averaged
          const Vec g = channel_input_gradient(model.spec, model.params, x, c);
          gm += std::sqrt(g[0] * g[0] + g[1] * g[1]);
          lap += channel_laplacian(model.spec, model.params, x, c);
        }
        gradmag.pixels[i * w + j] = gm / static_cast<double>(channels);
        laplacian.pixels[i * w + j] = lap / static_cast<double>(channels);
      }
    }
  });

  RunSummary summary;
  summary.add("command", "derivs");
  summary.add("model", model_path);
  summary.add("img_width", w);
  summary.add("img_height", h);
  summary.add("channels", channels);

  auto normalize_map = [&](ImageSignal& map, const std::string& name) {
    double lo = map.pixels[0], hi = map.pixels[0];
    for (double v : map.pixels) {
      if (!std::isfinite(v)) throw NumericalError(name + " map contains non-finite values");
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    const double span = hi - lo;
    for (double& v : map.pixels) v = span > 0.0 ? (v - lo) / span : 0.0;
    summary.add(name + "_min", lo);
    summary.add(name + "_max", hi);
  };
  normalize_map(gradmag, "gradient_magnitude");
  normalize_map(laplacian, "laplacian");

  const std::string rec_path = out_dir + "/" + image_out_name(channels, "reconstruction");
  write_image(rec, rec_path);
  write_image(gradmag, out_dir + "/gradient_magnitude.pgm");
  write_image(laplacian, out_dir + "/laplacian.pgm");
  summary.add("artifact_reconstruction", rec_path);
  summary.add("artifact_gradient_magnitude", out_dir + "/gradient_magnitude.pgm");
  summary.add("artifact_laplacian", out_dir + "/laplacian.pgm");
  summary.add_timing("wall_clock_seconds",
                     std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  summary.write(out_dir + "/summary.txt");
  return 0;
}

// ---------------------------------------------------------------------------
// kilofit: tiled decomposition fit
// ---------------------------------------------------------------------------

int cmd_kilofit(const std::string& image_path, const NetFlags& nf, const OptimFlags& of,
                std::size_t tile_w, std::size_t tile_h, unsigned parallel,
                std::size_t sample_cap, const std::string& out_dir) {
  const auto t0 = std::chrono::steady_clock::now();
  fs::create_directories(out_dir);

  const ImageSignal img = read_image(image_path);
  KiloConfig cfg;
  cfg.tile_w = tile_w;
  cfg.tile_h = tile_h;
  cfg.net = make_spec(nf, 2, img.channels);
  cfg.train = make_train_config(of, 1.0, img.channels);
  cfg.seed = nf.seed;
  cfg.sample_cap = sample_cap;
  cfg.log_every = of.log_every;
  cfg.parallel = parallel;

  const KiloResult res = kilo_fit(img, cfg);

  const ImageSignal stitched = stitch(res.grid, cfg.net);
  const std::string stitched_path = out_dir + "/" + image_out_name(img.channels, "stitched");
  write_image(stitched, stitched_path);

  for (std::size_t ti = 0; ti < res.tile_traces.size(); ++ti) {
    char name[32];
    std::snprintf(name, sizeof(name), "tile_%03zu.csv", ti);
    write_convergence_csv(res.tile_traces[ti], out_dir + "/" + name);
  }
  std::string psnr_csv = "iter,psnr\n";
  for (const auto& [iter, value] : res.global_psnr)
    psnr_csv += std::to_string(iter) + "," + fmt_double(value) + "\n";
  detail::write_file_bytes(out_dir + "/global_psnr.csv", psnr_csv);

  RunSummary summary;
  summary.add("command", "kilofit");
  summary.add("image", image_path);
  summary.add("img_width", img.width);
  summary.add("img_height", img.height);
  echo_config(summary, nf, of);
  summary.add("tile_w", res.grid.tile_w);
  summary.add("tile_h", res.grid.tile_h);
  summary.add("tiles", res.grid.tiles.size());
  summary.add("parallel", std::size_t{parallel});
  summary.add("sample_cap", sample_cap);
  summary.add("stitched_psnr", psnr(img, stitched));
  summary.add("curvature_skips", res.curvature_skips);
  summary.add("line_search_warnings", res.line_search_warnings);
  summary.add("failed_tiles", res.failures.size());
  for (const auto& f : res.failures)
    summary.add("failure_tile_" + std::to_string(f.index),
                optim_status_name(f.status) + ": " + f.diagnostic);
  summary.add("artifact_stitched", stitched_path);
  summary.add_timing("wall_clock_seconds",
                     std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  summary.write(out_dir + "/summary.txt");
  return res.failures.empty() ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"coordinate-network fitting with curvature-aware optimizers"};
  app.require_subcommand(1);

  NetFlags nf;
  OptimFlags of;
  std::string image_path, audio_path, out_dir, model_path;
  std::size_t tile_w = 64, tile_h = 64;
  unsigned parallel = 1;
  std::size_t sample_cap = 10000;
  std::size_t snapshot_every = 10, bins = 100;
  double zero_tol = 1e-8, window_half = 0.01;
  std::size_t width_override = 0, height_override = 0;

  auto* fit = app.add_subcommand("fit", "fit one network to an image or audio signal");
  fit->add_option("--image", image_path, "input image (PGM/PPM)");
  fit->add_option("--audio", audio_path, "input audio (16-bit mono WAV)");
  fit->add_option("--out", out_dir, "output directory")->required();
  add_net_flags(fit, nf);
  add_optim_flags(fit, of);

  auto* compare = app.add_subcommand("compare", "race L-BFGS against Adam on the same fit");
  compare->add_option("--image", image_path, "input image (PGM/PPM)")->required();
  compare->add_option("--out", out_dir, "output directory")->required();
  add_net_flags(compare, nf);
  add_optim_flags(compare, of, /*with_optimizer=*/false);

  auto* spectrum = app.add_subcommand("spectrum", "Hessian eigen-spectrum along a training run");
  spectrum->add_option("--image", image_path, "input image (PGM/PPM)")->required();
  spectrum->add_option("--out", out_dir, "output directory")->required();
  spectrum->add_option("--snapshot-every", snapshot_every, "iterations between spectra");
  spectrum->add_option("--zero-tol", zero_tol, "|eigenvalue| below this counts as zero");
  spectrum->add_option("--window", window_half, "histogram half-window");
  spectrum->add_option("--bins", bins, "histogram bin count");
  add_net_flags(spectrum, nf);
  add_optim_flags(spectrum, of);

  auto* derivs = app.add_subcommand("derivs", "derivative maps from a fitted model");
  derivs->add_option("--model", model_path, "model artifact from fit")->required();
  derivs->add_option("--out", out_dir, "output directory")->required();
  derivs->add_option("--img-width", width_override, "render width override");
  derivs->add_option("--img-height", height_override, "render height override");

  auto* kilofit = app.add_subcommand("kilofit", "tile-decomposed fit with per-tile networks");
  kilofit->add_option("--image", image_path, "input image (PGM/PPM)")->required();
  kilofit->add_option("--out", out_dir, "output directory")->required();
  kilofit->add_option("--tile-w", tile_w, "tile width");
  kilofit->add_option("--tile-h", tile_h, "tile height");
  kilofit->add_option("--iters-per-tile", of.iters, "iterations per tile");
  kilofit->add_option("--parallel", parallel, "concurrent tile fits");
  kilofit->add_option("--sample-cap", sample_cap, "per-tile training sample cap");
  add_net_flags(kilofit, nf);
  add_optim_flags(kilofit, of);

  CLI11_PARSE(app, argc, argv);

  try {
    if (fit->parsed()) {
      if (image_path.empty() == audio_path.empty())
        throw ConfigError("fit: exactly one of --image or --audio is required");
      return cmd_fit(image_path, audio_path, nf, of, out_dir);
    }
    if (compare->parsed()) return cmd_compare(image_path, nf, of, out_dir);
    if (spectrum->parsed())
      return cmd_spectrum(image_path, nf, of, snapshot_every, zero_tol, window_half, bins, out_dir);
    if (derivs->parsed()) return cmd_derivs(model_path, width_override, height_override, out_dir);
    if (kilofit->parsed())
      return cmd_kilofit(image_path, nf, of, tile_w, tile_h, parallel, sample_cap, out_dir);
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  }
  return 2;
}
