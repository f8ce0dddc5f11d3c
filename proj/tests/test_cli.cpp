#include <catch2/catch.hpp>

#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include "curvopt/io.hpp"
#include "testutil.hpp"

using namespace curvopt;

namespace {

std::string cli_bin() {
  const char* env = std::getenv("CURVOPT_CLI_BIN");
  REQUIRE(env != nullptr);
  return env;
}

int run_cli(const std::string& args) {
  const std::string cmd = cli_bin() + " " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const std::string& path) { return detail::read_file_bytes(path); }

// drop the machine-dependent elapsed_ms column (field 2 of the fixed schema)
std::string strip_elapsed(const std::string& csv) {
  std::istringstream in(csv);
  std::string out, line;
  while (std::getline(in, line)) {
    const auto a = line.find(',');
    const auto b = line.find(',', a + 1);
    out += line.substr(0, a) + line.substr(b) + "\n";
  }
  return out;
}

// everything before the [timing] section
std::string strip_timing(const std::string& text) {
  const auto pos = text.find("[timing]");
  return pos == std::string::npos ? text : text.substr(0, pos);
}

std::string test_image_path() {
  static const std::string path = [] {
    const std::string p = testutil::scratch_path("cli_input.pgm");
    write_image(testutil::make_test_image(20, 20, 88), p);
    return p;
  }();
  return path;
}

}  // namespace

TEST_CASE("fit smoke: artifacts present, exit 0") {
  const std::string out = testutil::scratch_path("fit_smoke");
  REQUIRE(run_cli("fit --image " + test_image_path() +
                  " --activation sine --optimizer lbfgs --iters 20 --seed 3 --out " + out) == 0);
  REQUIRE(std::filesystem::exists(out + "/reconstruction.pgm"));
  REQUIRE(std::filesystem::exists(out + "/convergence.csv"));
  REQUIRE(std::filesystem::exists(out + "/summary.txt"));
  REQUIRE(std::filesystem::exists(out + "/model.txt"));
  const std::string csv = slurp(out + "/convergence.csv");
  REQUIRE(csv.rfind("iter,elapsed_ms,loss,grad_norm,psnr\n", 0) == 0);
}

TEST_CASE("fit with zero iterations emits initial-state artifacts") {
  const std::string out = testutil::scratch_path("fit_zero");
  REQUIRE(run_cli("fit --image " + test_image_path() + " --iters 0 --seed 3 --out " + out) == 0);
  const std::string csv = slurp(out + "/convergence.csv");
  REQUIRE(csv == "iter,elapsed_ms,loss,grad_norm,psnr\n");
  REQUIRE(std::filesystem::exists(out + "/reconstruction.pgm"));
}

TEST_CASE("fit is byte-deterministic apart from wall-clock fields") {
  // identical flags twice, including --out: the first run's artifacts are
  // saved aside before the rerun overwrites them
  const std::string out = testutil::scratch_path("det");
  const std::string cmd = "fit --image " + test_image_path() +
                          " --activation gaussian --optimizer lbfgs --iters 15 --seed 9 --out " +
                          out;
  REQUIRE(run_cli(cmd) == 0);
  const std::string csv_a = slurp(out + "/convergence.csv");
  const std::string summary_a = slurp(out + "/summary.txt");
  const std::string model_a = slurp(out + "/model.txt");
  const std::string rec_a = slurp(out + "/reconstruction.pgm");
  REQUIRE(run_cli(cmd) == 0);
  REQUIRE(strip_elapsed(csv_a) == strip_elapsed(slurp(out + "/convergence.csv")));
  REQUIRE(strip_timing(summary_a) == strip_timing(slurp(out + "/summary.txt")));
  REQUIRE(model_a == slurp(out + "/model.txt"));
  REQUIRE(rec_a == slurp(out + "/reconstruction.pgm"));
}

TEST_CASE("a summary's config echo reproduces the final loss exactly") {
  const std::string out = testutil::scratch_path("echo_a");
  REQUIRE(run_cli("fit --image " + test_image_path() +
                  " --activation sine --omega 7 --width 12 --depth 2 --optimizer lbfgs"
                  " --iters 18 --seed 21 --out " + out) == 0);
  // re-issue the run from the echoed configuration
  std::map<std::string, std::string> kv;
  std::istringstream in(strip_timing(slurp(out + "/summary.txt")));
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find(" = ");
    if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 3);
  }
  const std::string out2 = testutil::scratch_path("echo_b");
  REQUIRE(run_cli("fit --image " + kv["image"] + " --activation " + kv["activation"] +
                  " --omega " + kv["omega"] + " --width " + kv["width"] + " --depth " +
                  kv["depth"] + " --optimizer " + kv["optimizer"] + " --iters " + kv["iters"] +
                  " --seed " + kv["seed"] + " --out " + out2) == 0);
  std::map<std::string, std::string> kv2;
  std::istringstream in2(strip_timing(slurp(out2 + "/summary.txt")));
  while (std::getline(in2, line)) {
    const auto eq = line.find(" = ");
    if (eq != std::string::npos) kv2[line.substr(0, eq)] = line.substr(eq + 3);
  }
  REQUIRE(kv2["final_loss"] == kv["final_loss"]);
  REQUIRE(kv2["final_grad_norm"] == kv["final_grad_norm"]);
}

TEST_CASE("unreadable input and bad flags exit 2") {
  REQUIRE(run_cli("fit --image /nonexistent.pgm --out " + testutil::scratch_path("x1")) == 2);
  REQUIRE(run_cli("fit --image " + test_image_path() + " --audio x.wav --out " +
                  testutil::scratch_path("x2")) == 2);
  REQUIRE(run_cli("fit --out " + testutil::scratch_path("x3")) == 2);
  // CLI11 usage errors do not use our exit contract's success path either
  REQUIRE(run_cli("fit --image " + test_image_path() + " --optimizer nope --out " +
                  testutil::scratch_path("x4")) != 0);
}

TEST_CASE("spectrum over the parameter cap exits 2 naming the cap") {
  const std::string out = testutil::scratch_path("speccap");
  const std::string cmd = cli_bin() + " spectrum --image " + test_image_path() +
                          " --width 64 --depth 4 --out " + out + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[512];
  std::string output;
  while (fgets(buf, sizeof(buf), pipe)) output += buf;
  const int rc = pclose(pipe);
  REQUIRE(WEXITSTATUS(rc) == 2);
  REQUIRE(output.find("2500") != std::string::npos);
  REQUIRE(output.find("4x64") != std::string::npos);
}

TEST_CASE("spectrum emits per-snapshot artifacts") {
  const std::string out = testutil::scratch_path("spec");
  REQUIRE(run_cli("spectrum --image " + test_image_path() +
                  " --activation sine --width 8 --depth 2 --iters 10 --snapshot-every 5"
                  " --seed 2 --out " + out) == 0);
  for (const char* tag : {"iter0000", "iter0005", "iter0010"}) {
    REQUIRE(std::filesystem::exists(out + "/eigenvalues_" + tag + ".txt"));
    REQUIRE(std::filesystem::exists(out + "/histogram_" + tag + ".csv"));
  }
  const std::string summary = slurp(out + "/summary.txt");
  REQUIRE(summary.find("iter0005_zero_fraction") != std::string::npos);
  REQUIRE(summary.find("iter0005_min_abs_nonzero") != std::string::npos);
}

TEST_CASE("compare reports iterations-to-target for both optimizers") {
  const std::string out = testutil::scratch_path("cmp");
  REQUIRE(run_cli("compare --image " + test_image_path() +
                  " --activation sine --iters 40 --seed 2 --target-psnr 25 --out " + out) == 0);
  REQUIRE(std::filesystem::exists(out + "/lbfgs.csv"));
  REQUIRE(std::filesystem::exists(out + "/adam.csv"));
  const std::string summary = slurp(out + "/compare_summary.txt");
  REQUIRE(summary.find("lbfgs_iters_to_target") != std::string::npos);
  REQUIRE(summary.find("adam_iters_to_target") != std::string::npos);
  REQUIRE(summary.find("iteration_speedup_lbfgs_over_adam") != std::string::npos);
  REQUIRE(summary.find("target_psnr = 25") != std::string::npos);
}

TEST_CASE("compare defaults the target to 30 dB") {
  const std::string out = testutil::scratch_path("cmp30");
  REQUIRE(run_cli("compare --image " + test_image_path() + " --iters 10 --seed 2 --out " + out) == 0);
  REQUIRE(slurp(out + "/compare_summary.txt").find("target_psnr = 30") != std::string::npos);
}

TEST_CASE("derivs renders three finite maps from a fitted model") {
  const std::string fit_out = testutil::scratch_path("fit_for_derivs");
  REQUIRE(run_cli("fit --image " + test_image_path() +
                  " --activation sine --width 16 --depth 2 --iters 25 --seed 5 --out " + fit_out) == 0);
  const std::string out = testutil::scratch_path("derivs");
  REQUIRE(run_cli("derivs --model " + fit_out + "/model.txt --out " + out) == 0);
  REQUIRE(std::filesystem::exists(out + "/reconstruction.pgm"));
  REQUIRE(std::filesystem::exists(out + "/gradient_magnitude.pgm"));
  REQUIRE(std::filesystem::exists(out + "/laplacian.pgm"));
  const std::string summary = slurp(out + "/summary.txt");
  REQUIRE(summary.find("gradient_magnitude_min") != std::string::npos);
  REQUIRE(summary.find("laplacian_max") != std::string::npos);

  REQUIRE(run_cli("derivs --model /nonexistent/model.txt --out " + out) == 2);
}

TEST_CASE("derivs of an affine-only model yields a constant-zero Laplacian map") {
  // hand-built model: f(x, y) = 0.3 x - 0.2 y + 0.5
  ModelArtifact model;
  model.spec.input_dim = 2;
  model.spec.output_dim = 1;
  model.spec.activation = ActivationKind::tanh();
  model.params = {0.3, -0.2, 0.5};
  model.signal = "image";
  model.img_width = 8;
  model.img_height = 8;
  const std::string model_path = testutil::scratch_path("affine_model.txt");
  save_model(model, model_path);

  const std::string out = testutil::scratch_path("derivs_affine");
  REQUIRE(run_cli("derivs --model " + model_path + " --out " + out) == 0);
  const std::string summary = slurp(out + "/summary.txt");
  // pre-normalization Laplacian bounds recorded in the summary are both ~0
  std::istringstream in(summary);
  std::string line;
  double lap_min = 1.0, lap_max = -1.0;
  while (std::getline(in, line)) {
    if (line.rfind("laplacian_min = ", 0) == 0) lap_min = std::strtod(line.c_str() + 16, nullptr);
    if (line.rfind("laplacian_max = ", 0) == 0) lap_max = std::strtod(line.c_str() + 16, nullptr);
  }
  REQUIRE(std::abs(lap_min) < 1e-9);
  REQUIRE(std::abs(lap_max) < 1e-9);
}

TEST_CASE("kilofit writes per-tile artifacts and a stitched image") {
  const std::string out = testutil::scratch_path("kilo");
  REQUIRE(run_cli("kilofit --image " + test_image_path() +
                  " --tile-w 10 --tile-h 10 --iters-per-tile 8 --parallel 2 --seed 4 --out " +
                  out) == 0);
  REQUIRE(std::filesystem::exists(out + "/stitched.pgm"));
  REQUIRE(std::filesystem::exists(out + "/global_psnr.csv"));
  for (int t = 0; t < 4; ++t) {
    char name[32];
    std::snprintf(name, sizeof(name), "/tile_%03d.csv", t);
    REQUIRE(std::filesystem::exists(out + name));
  }
  const std::string summary = slurp(out + "/summary.txt");
  REQUIRE(summary.find("tiles = 4") != std::string::npos);
  REQUIRE(summary.find("failed_tiles = 0") != std::string::npos);
}

TEST_CASE("kilofit parallel degrees produce byte-identical stitched output") {
  const std::string base = "kilofit --image " + test_image_path() +
                           " --tile-w 10 --tile-h 10 --iters-per-tile 6 --seed 11 --out ";
  const std::string out_a = testutil::scratch_path("kilo_p1");
  const std::string out_b = testutil::scratch_path("kilo_p4");
  REQUIRE(run_cli(base + out_a + " --parallel 1") == 0);
  REQUIRE(run_cli(base + out_b + " --parallel 4") == 0);
  REQUIRE(slurp(out_a + "/stitched.pgm") == slurp(out_b + "/stitched.pgm"));
  REQUIRE(slurp(out_a + "/global_psnr.csv") == slurp(out_b + "/global_psnr.csv"));
}

TEST_CASE("audio fit round-trips through the WAV codec") {
  const std::string wav = testutil::scratch_path("tone.wav");
  write_audio(testutil::make_tone(440.0, 0.02, 8000), wav);  // 160 samples
  const std::string out = testutil::scratch_path("fit_audio");
  REQUIRE(run_cli("fit --audio " + wav +
                  " --activation sine --omega 20 --width 16 --depth 2 --iters 30 --seed 6 --out " +
                  out) == 0);
  REQUIRE(std::filesystem::exists(out + "/reconstruction.wav"));
  const std::string summary = slurp(out + "/summary.txt");
  REQUIRE(summary.find("psnr_peak = 2") != std::string::npos);
  const AudioSignal rec = read_audio(out + "/reconstruction.wav");
  REQUIRE(rec.samples.size() == 160);
}
