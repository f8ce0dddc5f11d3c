#include <catch2/catch.hpp>

#include <set>

#include "curvopt/tasks.hpp"
#include "testutil.hpp"

using namespace curvopt;

TEST_CASE("image_to_training_set corner and center coordinates") {
  ImageSignal img;
  img.width = 2;
  img.height = 2;
  img.channels = 1;
  img.pixels = {0.1, 0.2, 0.3, 0.4};
  const TrainingSet ts = image_to_training_set(img);
  REQUIRE(ts.X.rows == 4);
  // row-major: (row 0, col 0), (row 0, col 1), (row 1, col 0), (row 1, col 1)
  REQUIRE(ts.X(0, 0) == -1.0);
  REQUIRE(ts.X(0, 1) == -1.0);
  REQUIRE(ts.X(1, 0) == 1.0);
  REQUIRE(ts.X(1, 1) == -1.0);
  REQUIRE(ts.X(2, 0) == -1.0);
  REQUIRE(ts.X(2, 1) == 1.0);
  REQUIRE(ts.X(3, 0) == 1.0);
  REQUIRE(ts.X(3, 1) == 1.0);

  ImageSignal odd;
  odd.width = 3;
  odd.height = 3;
  odd.channels = 1;
  odd.pixels.assign(9, 0.5);
  const TrainingSet ts3 = image_to_training_set(odd);
  REQUIRE(ts3.X(4, 0) == 0.0);  // center pixel
  REQUIRE(ts3.X(4, 1) == 0.0);
}

TEST_CASE("image_to_training_set round-trips targets and rejects 1x1") {
  const auto img = testutil::make_test_image(5, 4, 7, 3);
  const TrainingSet ts = image_to_training_set(img);
  REQUIRE(ts.Y.data == img.pixels);  // same row-major, channel-interleaved order

  ImageSignal tiny;
  tiny.width = 1;
  tiny.height = 1;
  tiny.channels = 1;
  tiny.pixels = {0.5};
  REQUIRE_THROWS_AS(image_to_training_set(tiny), ConfigError);
}

TEST_CASE("psnr basics") {
  const auto img = testutil::make_test_image(6, 6, 8);
  REQUIRE(std::isinf(psnr(img, img)));

  ImageSignal shifted = img;
  for (auto& p : shifted.pixels) p = std::clamp(p + 0.1, 0.0, 1.0);
  // uniform error 0.1 (clamp never binds: generator stays within [0.28, 0.72])
  REQUIRE(psnr(img, shifted) == Approx(20.0).margin(1e-9));

  ImageSignal wrong = img;
  wrong.width = 3;
  REQUIRE_THROWS_AS(psnr(img, wrong), ConfigError);
}

TEST_CASE("psnr matches a per-pixel loop oracle and decreases with mse") {
  const auto a = testutil::make_test_image(9, 7, 11);
  auto b = testutil::make_test_image(9, 7, 12);
  double acc = 0.0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    const double d = a.pixels[i] - b.pixels[i];
    acc += d * d;
  }
  const double mse = acc / static_cast<double>(a.pixels.size());
  REQUIRE(psnr(a, b) == Approx(10.0 * std::log10(1.0 / mse)).margin(1e-10));

  auto worse = b;
  for (auto& p : worse.pixels) p = std::clamp(p + 0.05, 0.0, 1.0);
  REQUIRE(image_mse(a, worse) > image_mse(a, b));
  REQUIRE(psnr(a, worse) < psnr(a, b));
}

TEST_CASE("make_tiles counts and remainders") {
  const TileGrid four = make_tiles(100, 100, 1, 50, 50);
  REQUIRE(four.tiles.size() == 4);
  for (const auto& t : four.tiles) {
    REQUIRE(t.w == 50);
    REQUIRE(t.h == 50);
  }

  const TileGrid rem = make_tiles(70, 50, 1, 50, 50);
  REQUIRE(rem.tiles.size() == 2);
  REQUIRE(rem.tiles[0].w == 50);
  REQUIRE(rem.tiles[1].w == 20);
  REQUIRE(rem.tiles[1].x0 == 50);

  // tile larger than the image collapses to a single covering tile
  const TileGrid one = make_tiles(30, 20, 1, 64, 64);
  REQUIRE(one.tiles.size() == 1);
  REQUIRE(one.tiles[0].w == 30);
  REQUIRE(one.tiles[0].h == 20);

  REQUIRE_THROWS_AS(make_tiles(10, 10, 1, 1, 4), ConfigError);
}

TEST_CASE("tiling is an exact partition for random sizes") {
  RngStream rng(55);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t w = 2 + rng.next_u64() % 90;
    const std::size_t h = 2 + rng.next_u64() % 90;
    const std::size_t tw = 2 + rng.next_u64() % 40;
    const std::size_t th = 2 + rng.next_u64() % 40;
    const TileGrid grid = make_tiles(w, h, 1, tw, th);
    std::vector<int> owners(w * h, 0);
    std::size_t area = 0;
    for (const auto& t : grid.tiles) {
      area += t.w * t.h;
      for (std::size_t i = 0; i < t.h; ++i)
        for (std::size_t j = 0; j < t.w; ++j) ++owners[(t.y0 + i) * w + (t.x0 + j)];
    }
    REQUIRE(area == w * h);
    for (int c : owners) REQUIRE(c == 1);
  }
}

TEST_CASE("tile-local coordinates span [-1, 1] on both axes") {
  const auto img = testutil::make_test_image(30, 20, 5);
  const TileGrid grid = make_tiles(img.width, img.height, 1, 12, 8);
  for (const auto& t : grid.tiles) {
    if (t.w < 2 || t.h < 2) continue;
    const TrainingSet ts = tile_training_set(img, t, 0, 1);
    double xmin = 1e9, xmax = -1e9, ymin = 1e9, ymax = -1e9;
    for (std::size_t n = 0; n < ts.X.rows; ++n) {
      xmin = std::min(xmin, ts.X(n, 0));
      xmax = std::max(xmax, ts.X(n, 0));
      ymin = std::min(ymin, ts.X(n, 1));
      ymax = std::max(ymax, ts.X(n, 1));
    }
    REQUIRE(xmin == -1.0);
    REQUIRE(xmax == 1.0);
    REQUIRE(ymin == -1.0);
    REQUIRE(ymax == 1.0);
  }
}

TEST_CASE("tile subsampling is deterministic, capped, and without replacement") {
  const auto img = testutil::make_test_image(40, 40, 6);
  Tile whole;
  whole.w = img.width;
  whole.h = img.height;
  const TrainingSet a = tile_training_set(img, whole, 100, 33);
  const TrainingSet b = tile_training_set(img, whole, 100, 33);
  REQUIRE(a.X.data == b.X.data);
  REQUIRE(a.X.rows == 100);
  // without replacement: all coordinate pairs distinct
  std::set<std::pair<double, double>> seen;
  for (std::size_t n = 0; n < a.X.rows; ++n) seen.emplace(a.X(n, 0), a.X(n, 1));
  REQUIRE(seen.size() == 100);
}

TEST_CASE("stitch reproduces a bias-net mean mosaic and clamps") {
  ImageSignal img;
  img.width = 8;
  img.height = 4;
  img.channels = 1;
  img.pixels.assign(32, 0.0);
  TileGrid grid = make_tiles(8, 4, 1, 4, 4);
  REQUIRE(grid.tiles.size() == 2);

  NetworkSpec bias_net;  // single affine map of the coordinates
  bias_net.input_dim = 2;
  bias_net.output_dim = 1;

  grid.tiles[0].params = {0.0, 0.0, 0.25};  // w=(0,0), b=0.25
  grid.tiles[1].params = {0.0, 0.0, 1.3};   // emits 1.3 -> clamped to 1.0
  const ImageSignal out = stitch(grid, bias_net);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 8; ++j)
      REQUIRE(out.at(i, j, 0) == (j < 4 ? 0.25 : 1.0));
}

TEST_CASE("stitch rejects grids with missing parameters, naming the tiles") {
  TileGrid grid = make_tiles(8, 8, 1, 4, 4);
  grid.tiles[1].params = {0.0, 0.0, 0.5};
  NetworkSpec net;
  try {
    stitch(grid, net);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    REQUIRE(msg.find("0") != std::string::npos);
    REQUIRE(msg.find("2") != std::string::npos);
    REQUIRE(msg.find("3") != std::string::npos);
  }
}

TEST_CASE("audio_to_training_set endpoints and round trip") {
  AudioSignal two;
  two.samples = {0.5, -0.5};
  const TrainingSet ts = audio_to_training_set(two);
  REQUIRE(ts.X(0, 0) == -1.0);
  REQUIRE(ts.X(1, 0) == 1.0);
  REQUIRE(ts.Y(0, 0) == 0.5);
  REQUIRE(ts.Y(1, 0) == -0.5);

  const auto tone = testutil::make_tone(440.0, 0.05, 8000);
  const TrainingSet tts = audio_to_training_set(tone);
  REQUIRE(tts.Y.data == tone.samples);

  AudioSignal tiny;
  tiny.samples = {0.1};
  REQUIRE_THROWS_AS(audio_to_training_set(tiny), ConfigError);
}

TEST_CASE("sine tone reconstruction under L-BFGS") {
  const auto tone = testutil::make_tone(440.0, 1.0, 8000);
  const TrainingSet ts = audio_to_training_set(tone);
  NetworkSpec spec;
  spec.input_dim = 1;
  spec.output_dim = 1;
  spec.hidden_widths = {64, 64, 64};
  spec.activation = ActivationKind::sine(55.0);  // tone band needs a high-frequency net
  spec.seed = 3;
  TrainConfig cfg;
  cfg.budget.max_iters = 300;
  cfg.budget.target_loss = 1e-4 / 2.0;  // loss carries the 1/2 factor
  cfg.opts.keep_audits = false;
  const auto res = run_optimizer(spec, ts, cfg);
  REQUIRE(res.status == OptimStatus::kTargetReached);
  REQUIRE(2.0 * res.final_loss < 1e-4);  // reconstruction MSE
}

TEST_CASE("kilo_fit drives every tile of a constant image below 1e-6") {
  ImageSignal flat;
  flat.width = 12;
  flat.height = 12;
  flat.channels = 1;
  flat.pixels.assign(144, 0.5);
  KiloConfig cfg;
  cfg.tile_w = 6;
  cfg.tile_h = 6;
  cfg.net.hidden_widths = {4};
  cfg.net.activation = ActivationKind::sine();
  cfg.train.budget.max_iters = 20;
  cfg.train.budget.target_loss = 1e-8;
  cfg.seed = 5;
  const KiloResult res = kilo_fit(flat, cfg);
  REQUIRE(res.failures.empty());
  for (const auto& t : res.grid.tiles) REQUIRE(t.final_loss < 1e-6);
}

TEST_CASE("degenerate single-tile kilo_fit equals the plain fit bit for bit") {
  const auto img = testutil::make_test_image(16, 16, 77);
  KiloConfig cfg;
  cfg.tile_w = 64;  // larger than the image: one tile
  cfg.tile_h = 64;
  cfg.net.hidden_widths = {8, 8};
  cfg.net.activation = ActivationKind::sine();
  cfg.train.budget.max_iters = 15;
  cfg.seed = 123;
  const KiloResult kres = kilo_fit(img, cfg);
  REQUIRE(kres.grid.tiles.size() == 1);

  NetworkSpec spec = cfg.net;
  spec.seed = 123;  // tile seed = global ^ 0
  TrainConfig train = cfg.train;
  train.psnr_peak = 1.0;
  const auto plain = run_optimizer(spec, image_to_training_set(img), std::move(train));
  REQUIRE(kres.grid.tiles[0].params == plain.params);

  const ImageSignal stitched = stitch(kres.grid, cfg.net);
  const ImageSignal direct = reconstruct_image(spec, plain.params, img.width, img.height);
  REQUIRE(stitched.pixels == direct.pixels);
}

TEST_CASE("kilo_fit is deterministic across parallelism degrees") {
  const auto img = testutil::make_test_image(24, 24, 31);
  KiloConfig cfg;
  cfg.tile_w = 12;
  cfg.tile_h = 12;
  cfg.net.hidden_widths = {6};
  cfg.net.activation = ActivationKind::sine();
  cfg.train.budget.max_iters = 10;
  cfg.seed = 9;
  cfg.log_every = 5;

  cfg.parallel = 1;
  const KiloResult a = kilo_fit(img, cfg);
  cfg.parallel = 4;
  const KiloResult b = kilo_fit(img, cfg);
  REQUIRE(a.grid.tiles.size() == b.grid.tiles.size());
  for (std::size_t i = 0; i < a.grid.tiles.size(); ++i)
    REQUIRE(a.grid.tiles[i].params == b.grid.tiles[i].params);
  REQUIRE(a.global_psnr == b.global_psnr);

  const NetworkSpec render = cfg.net;
  REQUIRE(stitch(a.grid, render).pixels == stitch(b.grid, render).pixels);
}

TEST_CASE("kilo_fit reports per-tile failures and keeps going") {
  // a diverging configuration: huge GD steps blow the loss up to non-finite
  const auto img = testutil::make_test_image(16, 8, 13);
  KiloConfig cfg;
  cfg.tile_w = 8;
  cfg.tile_h = 8;
  cfg.net.hidden_widths = {6};
  cfg.net.activation = ActivationKind::tanh();
  cfg.train.kind = OptimKind::kGd;
  cfg.train.budget.max_iters = 200;
  cfg.train.opts.gd_lr = 1e14;
  cfg.seed = 2;
  const KiloResult res = kilo_fit(img, cfg);
  REQUIRE_FALSE(res.failures.empty());
  REQUIRE(res.grid.tiles.size() == 2);
  // the run carried on: every tile still holds its last-good parameters
  for (const auto& t : res.grid.tiles) {
    REQUIRE_FALSE(t.params.empty());
    for (double v : t.params) REQUIRE(std::isfinite(v));
  }
  for (const auto& f : res.failures) REQUIRE(f.index < res.grid.tiles.size());
}
