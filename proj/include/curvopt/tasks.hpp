#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "curvopt/network.hpp"
#include "curvopt/numerics.hpp"
#include "curvopt/optimizers.hpp"

namespace curvopt {

// ---------------------------------------------------------------------------
// Signals
// ---------------------------------------------------------------------------

struct ImageSignal {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 1;  // 1 or 3
  Vec pixels;                // row-major, channel-interleaved, values in [0,1]

  double at(std::size_t row, std::size_t col, std::size_t c) const {
    return pixels[(row * width + col) * channels + c];
  }
  double& at(std::size_t row, std::size_t col, std::size_t c) {
    return pixels[(row * width + col) * channels + c];
  }
};

struct AudioSignal {
  std::uint32_t sample_rate = 8000;
  Vec samples;  // values in [-1, 1]
};

// pixel/sample index -> [-1, 1]; an axis of extent 1 maps to the midpoint
inline double axis_coord(std::size_t index, std::size_t extent) {
  if (extent < 2) return 0.0;
  return 2.0 * static_cast<double>(index) / static_cast<double>(extent - 1) - 1.0;
}

// Full-image training set: row-major sample order, coordinate of pixel
// (row i, col j) is (x, y) = (2j/(w-1) - 1, 2i/(h-1) - 1).
inline TrainingSet image_to_training_set(const ImageSignal& img) {
  if (img.width * img.height < 2)
    throw ConfigError("image_to_training_set: need at least 2 pixels to normalize coordinates");
  if (img.channels != 1 && img.channels != 3)
    throw ConfigError("image_to_training_set: channels must be 1 or 3");
  TrainingSet ts;
  ts.X = Mat(img.width * img.height, 2);
  ts.Y = Mat(img.width * img.height, img.channels);
  std::size_t n = 0;
  for (std::size_t i = 0; i < img.height; ++i) {
    const double y = axis_coord(i, img.height);
    for (std::size_t j = 0; j < img.width; ++j, ++n) {
      ts.X(n, 0) = axis_coord(j, img.width);
      ts.X(n, 1) = y;
      for (std::size_t c = 0; c < img.channels; ++c) ts.Y(n, c) = img.at(i, j, c);
    }
  }
  return ts;
}

inline TrainingSet audio_to_training_set(const AudioSignal& a) {
  if (a.samples.size() < 2) throw ConfigError("audio_to_training_set: need at least 2 samples");
  TrainingSet ts;
  ts.X = Mat(a.samples.size(), 1);
  ts.Y = Mat(a.samples.size(), 1);
  for (std::size_t k = 0; k < a.samples.size(); ++k) {
    ts.X(k, 0) = axis_coord(k, a.samples.size());
    ts.Y(k, 0) = a.samples[k];
  }
  return ts;
}

// ---------------------------------------------------------------------------
// PSNR (peak 1 for images). MSE here carries no 1/2 factor.
// ---------------------------------------------------------------------------

inline double image_mse(const ImageSignal& a, const ImageSignal& b) {
  if (a.width != b.width || a.height != b.height || a.channels != b.channels)
    throw ConfigError("psnr: image dimensions differ");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    const double d = a.pixels[i] - b.pixels[i];
    acc += d * d;
  }
  return acc / static_cast<double>(a.pixels.size());
}

inline double psnr(const ImageSignal& reference, const ImageSignal& reconstruction) {
  const double mse = image_mse(reference, reconstruction);
  if (mse <= 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

// audio variant, peak 2 for the [-1, 1] range
inline double audio_psnr(const AudioSignal& reference, const AudioSignal& reconstruction) {
  if (reference.samples.size() != reconstruction.samples.size())
    throw ConfigError("audio_psnr: sample counts differ");
  double acc = 0.0;
  for (std::size_t i = 0; i < reference.samples.size(); ++i) {
    const double d = reference.samples[i] - reconstruction.samples[i];
    acc += d * d;
  }
  const double mse = acc / static_cast<double>(reference.samples.size());
  if (mse <= 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(4.0 / mse);
}

// ---------------------------------------------------------------------------
// Tiling
// ---------------------------------------------------------------------------

struct Tile {
  std::size_t index = 0;
  std::size_t x0 = 0, y0 = 0;  // top-left pixel
  std::size_t w = 0, h = 0;
  Vec params;  // empty until fitted
  double final_loss = std::numeric_limits<double>::quiet_NaN();
  OptimStatus status = OptimStatus::kBudgetExhausted;
};

struct TileGrid {
  std::size_t tile_w = 0, tile_h = 0;
  std::size_t grid_cols = 0, grid_rows = 0;
  std::size_t image_w = 0, image_h = 0, channels = 1;
  std::vector<Tile> tiles;  // row-major
};

// Partition of the image into tiles: interior tiles are exactly
// tile_w x tile_h, right/bottom remainders absorb the rest, and a tile size
// larger than the image collapses to a single tile.
inline TileGrid make_tiles(std::size_t image_w, std::size_t image_h, std::size_t channels,
                           std::size_t tile_w, std::size_t tile_h) {
  if (tile_w < 2 || tile_h < 2) throw ConfigError("make_tiles: tile sides must be at least 2");
  if (image_w == 0 || image_h == 0) throw ConfigError("make_tiles: empty image");
  tile_w = std::min(tile_w, image_w);
  tile_h = std::min(tile_h, image_h);
  TileGrid grid;
  grid.tile_w = tile_w;
  grid.tile_h = tile_h;
  grid.image_w = image_w;
  grid.image_h = image_h;
  grid.channels = channels;
  grid.grid_cols = (image_w + tile_w - 1) / tile_w;
  grid.grid_rows = (image_h + tile_h - 1) / tile_h;
  for (std::size_t ty = 0; ty < grid.grid_rows; ++ty) {
    for (std::size_t tx = 0; tx < grid.grid_cols; ++tx) {
      Tile t;
      t.index = ty * grid.grid_cols + tx;
      t.x0 = tx * tile_w;
      t.y0 = ty * tile_h;
      t.w = std::min(tile_w, image_w - t.x0);
      t.h = std::min(tile_h, image_h - t.y0);
      grid.tiles.push_back(std::move(t));
    }
  }
  return grid;
}

// Training set for one tile with coordinates normalized to [-1,1]^2 LOCALLY
// within the tile. When the tile holds more than sample_cap pixels, a seeded
// uniform subsample without replacement is drawn once (indices re-sorted
// ascending); it is never resampled during training.
inline TrainingSet tile_training_set(const ImageSignal& img, const Tile& tile,
                                     std::size_t sample_cap, std::uint64_t sample_seed) {
  const std::size_t count = tile.w * tile.h;
  std::vector<std::size_t> chosen;
  if (sample_cap > 0 && count > sample_cap) {
    std::vector<std::size_t> idx(count);
    for (std::size_t i = 0; i < count; ++i) idx[i] = i;
    RngStream rng(sample_seed);
    for (std::size_t i = 0; i < sample_cap; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.next_u64() % (count - i));
      std::swap(idx[i], idx[j]);
    }
    chosen.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(sample_cap));
    std::sort(chosen.begin(), chosen.end());
  } else {
    chosen.resize(count);
    for (std::size_t i = 0; i < count; ++i) chosen[i] = i;
  }

  TrainingSet ts;
  ts.X = Mat(chosen.size(), 2);
  ts.Y = Mat(chosen.size(), img.channels);
  for (std::size_t n = 0; n < chosen.size(); ++n) {
    const std::size_t li = chosen[n] / tile.w;  // local row
    const std::size_t lj = chosen[n] % tile.w;
    ts.X(n, 0) = axis_coord(lj, tile.w);
    ts.X(n, 1) = axis_coord(li, tile.h);
    for (std::size_t c = 0; c < img.channels; ++c)
      ts.Y(n, c) = img.at(tile.y0 + li, tile.x0 + lj, c);
  }
  return ts;
}

// ---------------------------------------------------------------------------
// Stitch: every pixel is evaluated by exactly its owning tile's network,
// outputs clamped to [0,1].
// ---------------------------------------------------------------------------

inline ImageSignal stitch(const TileGrid& grid, const NetworkSpec& net) {
  std::string missing;
  for (const Tile& t : grid.tiles)
    if (t.params.empty()) missing += (missing.empty() ? "" : ", ") + std::to_string(t.index);
  if (!missing.empty()) throw ConfigError("stitch: tiles without parameters: " + missing);

  ImageSignal out;
  out.width = grid.image_w;
  out.height = grid.image_h;
  out.channels = grid.channels;
  out.pixels.assign(grid.image_w * grid.image_h * grid.channels, 0.0);

  for (const Tile& t : grid.tiles) {
    Mat coords(t.w * t.h, 2);
    std::size_t n = 0;
    for (std::size_t li = 0; li < t.h; ++li) {
      const double y = axis_coord(li, t.h);
      for (std::size_t lj = 0; lj < t.w; ++lj, ++n) {
        coords(n, 0) = axis_coord(lj, t.w);
        coords(n, 1) = y;
      }
    }
    NetworkSpec spec = net;
    spec.output_dim = grid.channels;
    const Mat pred = forward(spec, t.params, coords);
    n = 0;
    for (std::size_t li = 0; li < t.h; ++li)
      for (std::size_t lj = 0; lj < t.w; ++lj, ++n)
        for (std::size_t c = 0; c < grid.channels; ++c)
          out.at(t.y0 + li, t.x0 + lj, c) = std::clamp(pred(n, c), 0.0, 1.0);
  }
  return out;
}

// whole-image reconstruction for a monolithic fit, same clamp rule as stitch
inline ImageSignal reconstruct_image(const NetworkSpec& spec, const Vec& params, std::size_t width,
                                     std::size_t height) {
  ImageSignal img;
  img.width = width;
  img.height = height;
  img.channels = spec.output_dim;
  img.pixels.assign(width * height * spec.output_dim, 0.0);
  TrainingSet grid_only;
  grid_only.X = Mat(width * height, 2);
  std::size_t n = 0;
  for (std::size_t i = 0; i < height; ++i) {
    const double y = axis_coord(i, height);
    for (std::size_t j = 0; j < width; ++j, ++n) {
      grid_only.X(n, 0) = axis_coord(j, width);
      grid_only.X(n, 1) = y;
    }
  }
  const Mat pred = forward(spec, params, grid_only.X);
  for (std::size_t k = 0; k < img.pixels.size(); ++k)
    img.pixels[k] = std::clamp(pred.data[k], 0.0, 1.0);
  return img;
}

// ---------------------------------------------------------------------------
// KiloImage: independent per-tile fits with deterministic per-tile seeding
// (tile seed = global seed XOR tile index). Concurrent execution at any
// parallelism degree produces results identical to sequential execution.
// ---------------------------------------------------------------------------

struct KiloConfig {
  std::size_t tile_w = 64;
  std::size_t tile_h = 64;
  NetworkSpec net;    // per-tile architecture; seed field is overridden per tile
  TrainConfig train;  // per-tile optimizer configuration and budget
  std::uint64_t seed = 1;
  std::size_t sample_cap = 10000;
  std::size_t log_every = 10;  // global-PSNR reporting interval (iterations)
  unsigned parallel = 1;
};

struct TileFailure {
  std::size_t index = 0;
  OptimStatus status = OptimStatus::kNumericalAbort;
  std::string diagnostic;
};

struct KiloResult {
  TileGrid grid;
  std::vector<std::vector<IterationRecord>> tile_traces;
  std::vector<std::vector<WolfeAudit>> tile_audits;
  std::vector<std::pair<std::size_t, double>> global_psnr;  // (iteration, dB)
  std::vector<TileFailure> failures;
  std::size_t curvature_skips = 0;
  std::size_t line_search_warnings = 0;
};

inline KiloResult kilo_fit(const ImageSignal& img, const KiloConfig& cfg) {
  KiloResult result;
  result.grid = make_tiles(img.width, img.height, img.channels, cfg.tile_w, cfg.tile_h);
  const std::size_t n_tiles = result.grid.tiles.size();
  result.tile_traces.resize(n_tiles);
  result.tile_audits.resize(n_tiles);

  const std::size_t iters = cfg.train.budget.max_iters;
  std::vector<std::size_t> snapshot_iters;  // 0, log_every, 2*log_every, ..., iters
  snapshot_iters.push_back(0);
  if (cfg.log_every > 0)
    for (std::size_t it = cfg.log_every; it < iters; it += cfg.log_every) snapshot_iters.push_back(it);
  if (iters > 0) snapshot_iters.push_back(iters);

  // params snapshot per (tile, interval); forward-filled when a tile stops early
  std::vector<std::vector<Vec>> snaps(n_tiles, std::vector<Vec>(snapshot_iters.size()));
  std::vector<OptimizeResult> tile_results(n_tiles);

  auto fit_tile = [&](std::size_t ti) {
    Tile& tile = result.grid.tiles[ti];
    NetworkSpec spec = cfg.net;
    spec.output_dim = img.channels;
    spec.seed = cfg.seed ^ static_cast<std::uint64_t>(ti);
    const TrainingSet ts =
        tile_training_set(img, tile, cfg.sample_cap, spec.seed ^ 0x5b1ce5ce5eedull);

    TrainConfig train = cfg.train;
    train.psnr_peak = 1.0;
    std::size_t next_snap = 1;  // slot 0 is the initial point
    train.opts.callback = [&](std::size_t iter, const Vec& params) {
      while (next_snap < snapshot_iters.size() && snapshot_iters[next_snap] <= iter) {
        snaps[ti][next_snap] = params;
        ++next_snap;
      }
    };
    snaps[ti][0] = init_params(spec).flat;

    OptimizeResult r = run_optimizer(spec, ts, std::move(train));
    for (std::size_t s = next_snap; s < snapshot_iters.size(); ++s) snaps[ti][s] = r.params;
    tile.params = r.params;
    tile.final_loss = r.final_loss;
    tile.status = r.status;
    tile_results[ti] = std::move(r);
  };

  const unsigned degree = std::max(1u, std::min<unsigned>(cfg.parallel, n_tiles));
  if (degree == 1) {
    for (std::size_t ti = 0; ti < n_tiles; ++ti) fit_tile(ti);
  } else {
    std::atomic<std::size_t> cursor{0};
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < degree; ++w)
      pool.emplace_back([&] {
        ++detail::parallel_depth;  // tiles are the unit of parallelism here
        for (;;) {
          const std::size_t ti = cursor.fetch_add(1);
          if (ti >= n_tiles) break;
          fit_tile(ti);
        }
        --detail::parallel_depth;
      });
    for (auto& t : pool) t.join();
  }

  for (std::size_t ti = 0; ti < n_tiles; ++ti) {
    OptimizeResult& r = tile_results[ti];
    if (r.status == OptimStatus::kNumericalAbort || r.status == OptimStatus::kLineSearchFailure)
      result.failures.push_back({ti, r.status, r.diagnostic});
    result.curvature_skips += r.curvature_skips;
    result.line_search_warnings += r.line_search_warnings;
    result.tile_traces[ti] = std::move(r.trace);
    result.tile_audits[ti] = std::move(r.audits);
  }

  // global PSNR after a full synchronization: stitched from the per-interval
  // snapshots, so the values are independent of the parallel degree
  NetworkSpec render = cfg.net;
  render.output_dim = img.channels;
  for (std::size_t s = 0; s < snapshot_iters.size(); ++s) {
    TileGrid g = result.grid;
    for (std::size_t ti = 0; ti < n_tiles; ++ti) g.tiles[ti].params = snaps[ti][s];
    const ImageSignal stitched = stitch(g, render);
    result.global_psnr.emplace_back(snapshot_iters[s], psnr(img, stitched));
  }
  return result;
}

}  // namespace curvopt
