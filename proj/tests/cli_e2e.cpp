// End-to-end checks of the CLI binary. The test runner passes the binary
// location in DDB_BIN and a scratch directory in DDB_TMP.

#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "ddb/dataset.hpp"
#include "ddb/io.hpp"
#include "ddb/linop.hpp"

using namespace ddb;
namespace fs = std::filesystem;

namespace {

std::string bin_path() {
  const char* p = std::getenv("DDB_BIN");
  REQUIRE(p != nullptr);
  return p;
}

fs::path work_dir() {
  const char* p = std::getenv("DDB_TMP");
  REQUIRE(p != nullptr);
  fs::create_directories(p);
  return p;
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = bin_path() + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  REQUIRE(f.good());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("cli check passes on defaults") {
  const fs::path wd = work_dir();
  fs::remove_all(wd / "check_out");
  const int rc = run_cli("check --out " + (wd / "check_out").string(),
                         wd / "check.log");
  CHECK(rc == 0);
  const std::string log = slurp(wd / "check.log");
  CHECK(log.find("[PASS]") != std::string::npos);
  CHECK(log.find("[FAIL]") == std::string::npos);
  CHECK(fs::exists(wd / "check_out" / "report.txt"));
  CHECK(fs::exists(wd / "check_out" / "run_meta"));
}

TEST_CASE("cli sample is deterministic and refuses dirty out dirs") {
  const fs::path wd = work_dir();

  // Build a toy measurement: blurred gaussian field.
  DatasetSpec spec;
  spec.shape = {12, 12};
  spec.seed = 5;
  const Tensor truth = make_test_sample(spec, 0);
  const PeriodicConvolutionOp blur({12, 12}, gaussian_kernel(5, 1.5));
  const Tensor y = blur.apply(truth);
  const fs::path meas = wd / "measurement.ddbt";
  write_tensor(meas.string(), y);
  const fs::path truth_file = wd / "truth.ddbt";
  write_tensor(truth_file.string(), truth);

  fs::remove_all(wd / "s1");
  fs::remove_all(wd / "s2");
  const std::string common =
      " --input " + meas.string() + " --truth " + truth_file.string() +
      " --method cddb --nfe 10 --seed 7 --dataset.dim 12 --dataset.train_size 16" +
      " --operator.kernel_std 1.5 --oracle.sigma_floor 0.1";
  const int rc1 = run_cli("sample" + common + " --out " + (wd / "s1").string(),
                          wd / "s1.log");
  const int rc2 = run_cli("sample" + common + " --out " + (wd / "s2").string(),
                          wd / "s2.log");
  REQUIRE(rc1 == 0);
  REQUIRE(rc2 == 0);

  for (const char* name : {"recon.ddbt", "recon.pgm", "result.csv", "trace.csv",
                           "run_meta"}) {
    CAPTURE(name);
    REQUIRE(fs::exists(wd / "s1" / name));
    CHECK(slurp(wd / "s1" / name) == slurp(wd / "s2" / name));
  }

  // Rerunning into the now non-empty directory requires --force.
  const int rc3 = run_cli("sample" + common + " --out " + (wd / "s1").string(),
                          wd / "s3.log");
  CHECK(rc3 == 2);
  const int rc4 = run_cli("sample" + common + " --force --out " + (wd / "s1").string(),
                          wd / "s4.log");
  CHECK(rc4 == 0);
}

TEST_CASE("cli sweep writes the documented artifacts") {
  const fs::path wd = work_dir();
  fs::remove_all(wd / "sweep_out");
  const int rc = run_cli(
      "sweep --out " + (wd / "sweep_out").string() +
          " --dataset.dim 8 --dataset.train_size 12 --trials 3"
          " --sweep.nfe_list 2,4 --sweep.methods ddb,cddb --oracle.sigma_floor 0.1",
      wd / "sweep.log");
  REQUIRE(rc == 0);
  const std::string csv = slurp(wd / "sweep_out" / "result.csv");
  CHECK(csv.rfind("method,nfe,seed,psnr,mse,residual,energy_distance,runtime_s", 0) == 0);
  // header + 2 methods x 2 nfe x 3 seeds
  int lines = 0;
  for (char ch : csv) lines += (ch == '\n');
  CHECK(lines == 1 + 12);
  CHECK(fs::exists(wd / "sweep_out" / "summary.txt"));
  CHECK(fs::exists(wd / "sweep_out" / "run_meta"));
}

TEST_CASE("cli rejects bad config values with exit code 2") {
  const fs::path wd = work_dir();
  const int rc = run_cli("sweep --out " + (wd / "bad_out").string() +
                             " --guidance.c -1",
                         wd / "bad.log");
  CHECK(rc == 2);
  const std::string log = slurp(wd / "bad.log");
  CHECK(log.find("guidance.c") != std::string::npos);
}

TEST_CASE("cli noise and ablate subcommands run") {
  const fs::path wd = work_dir();
  fs::remove_all(wd / "noise_out");
  const int rc1 = run_cli(
      "noise --out " + (wd / "noise_out").string() +
          " --dataset.dim 8 --dataset.train_size 12 --trials 2 --nfe 3"
          " --noise.stds 0,0.05 --sweep.methods ddb,cddb --oracle.sigma_floor 0.1",
      wd / "noise.log");
  REQUIRE(rc1 == 0);
  CHECK(fs::exists(wd / "noise_out" / "result_noise_0.csv"));
  CHECK(fs::exists(wd / "noise_out" / "result_noise_0.05.csv"));
  CHECK(fs::exists(wd / "noise_out" / "summary.txt"));

  fs::remove_all(wd / "ablate_out");
  const int rc2 = run_cli(
      "ablate-gd --out " + (wd / "ablate_out").string() +
          " --dataset.dim 8 --dataset.train_size 12 --trials 2 --nfe 6"
          " --ablate.max_steps 4 --oracle.sigma_floor 0.1",
      wd / "ablate.log");
  REQUIRE(rc2 == 0);
  const std::string csv = slurp(wd / "ablate_out" / "ablation.csv");
  CHECK(csv.rfind("steps,psnr,residual", 0) == 0);
}
