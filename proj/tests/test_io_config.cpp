#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "ddb/config.hpp"
#include "ddb/factory.hpp"
#include "ddb/io.hpp"
#include "ddb/rng.hpp"

using namespace ddb;
namespace fs = std::filesystem;

namespace {

std::string temp_path(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "ddb_io_tests";
  fs::create_directories(dir);
  return (dir / name).string();
}

}  // namespace

TEST_CASE("tensor file round trip is bit exact") {
  CounterRng rng(1);
  Tensor t = rng.normal_tensor({3, 5});
  t[0] = 1e308;
  t[1] = -1e-308;
  t[2] = -0.0;
  t[3] = 5e-324;  // subnormal
  const std::string path = temp_path("roundtrip.ddbt");
  write_tensor(path, t);
  const Tensor back = read_tensor(path);
  CHECK(bit_identical(back, t));
}

TEST_CASE("tensor file error paths") {
  CHECK_THROWS_AS(read_tensor(temp_path("missing.ddbt")), IoError);
  const std::string bad = temp_path("bad.ddbt");
  write_text_file(bad, "NOPE 1 3\n");
  CHECK_THROWS_AS(read_tensor(bad), IoError);
  const std::string trunc = temp_path("trunc.ddbt");
  write_text_file(trunc, "DDBT1 1 8\n0123");
  CHECK_THROWS_AS(read_tensor(trunc), IoError);
}

TEST_CASE("pgm io") {
  SECTION("uniform 8-bit image reads as constant 128/255") {
    const std::string path = temp_path("uniform.pgm");
    std::string p2 = "P2\n# a comment\n3 2\n255\n";
    for (int i = 0; i < 6; ++i) p2 += "128 ";
    write_text_file(path, p2);
    const Tensor img = read_pgm(path);
    REQUIRE(img.shape == Shape{2, 3});
    for (double v : img.data) CHECK(v == Catch::Approx(128.0 / 255.0).epsilon(1e-15));
  }

  SECTION("write/read round trip stays within the quantization bound") {
    CounterRng rng(5);
    Tensor img({6, 4});
    for (double& v : img.data) v = rng.uniform();
    const std::string path = temp_path("rt.pgm");
    write_pgm(path, img);
    const Tensor back = read_pgm(path);
    for (std::size_t i = 0; i < img.size(); ++i)
      CHECK(std::abs(back[i] - img[i]) <= 0.5 / 255.0 + 1e-12);
  }

  SECTION("P2 and P5 encodings load identically") {
    Tensor img({2, 2}, {0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0});
    const std::string p5path = temp_path("enc.pgm");
    write_pgm(p5path, img, 3);  // tiny maxval keeps values exact
    const std::string p2path = temp_path("enc_p2.pgm");
    write_text_file(p2path, "P2\n2 2\n3\n0 1\n2 3\n");
    const Tensor a = read_pgm(p5path);
    const Tensor b = read_pgm(p2path);
    CHECK(bit_identical(a, b));
  }

  SECTION("16-bit path") {
    Tensor img({1, 3}, {0.0, 0.5, 1.0});
    const std::string path = temp_path("wide.pgm");
    write_pgm(path, img, 65535);
    const Tensor back = read_pgm(path);
    for (std::size_t i = 0; i < img.size(); ++i)
      CHECK(std::abs(back[i] - img[i]) <= 0.5 / 65535.0 + 1e-12);
  }

  SECTION("malformed headers throw") {
    const std::string path = temp_path("badhdr.pgm");
    write_text_file(path, "P7\n2 2\n255\n");
    CHECK_THROWS_AS(read_pgm(path), IoError);
    write_text_file(path, "P2\n2 x\n255\n0 0 0 0");
    CHECK_THROWS_AS(read_pgm(path), IoError);
  }

  SECTION("masks threshold at 0.5") {
    const std::string path = temp_path("mask.pgm");
    write_text_file(path, "P2\n4 1\n255\n0 100 200 255\n");
    const Tensor m = read_mask_pgm(path);
    CHECK(m.data == std::vector<double>{0, 0, 1, 1});
  }
}

TEST_CASE("config defaults match the documented schedule") {
  std::istringstream empty("");
  const RunConfig cfg = parse_config_stream(empty, "<empty>");
  CHECK(cfg.schedule_kind == "i2sb");
  CHECK(cfg.beta_min == 1e-4);
  CHECK(cfg.beta_max == 2e-2);
  CHECK(cfg.eps == 0.01);
  CHECK(cfg == RunConfig{});
}

TEST_CASE("config parsing rejects bad input with the offending key") {
  RunConfig cfg;
  CHECK_THROWS_WITH(set_config_key(cfg, "no.such.key", "1"),
                    Catch::Matchers::ContainsSubstring("no.such.key"));
  CHECK_THROWS_WITH(set_config_key(cfg, "sampler.nfe", "abc"),
                    Catch::Matchers::ContainsSubstring("sampler.nfe"));
  CHECK_THROWS_WITH(set_config_key(cfg, "guidance.c", "-1"),
                    Catch::Matchers::ContainsSubstring("guidance.c"));
  CHECK_THROWS_WITH(set_config_key(cfg, "schedule.kind", "banana"),
                    Catch::Matchers::ContainsSubstring("schedule.kind"));
  CHECK_THROWS_AS(set_config_key(cfg, "operator.kernel_size", "4"), ConfigError);

  std::istringstream bad("seed 7\n");
  CHECK_THROWS_AS(parse_config_stream(bad, "<s>"), ConfigError);
}

TEST_CASE("config round trips through serialization") {
  RunConfig cfg;
  cfg.schedule_kind = "indi";
  cfg.eps = 0.1;
  cfg.beta_max = 0.033;
  cfg.operator_kind = "avgpool";
  cfg.pool_factor = 4;
  cfg.guidance_c = 1.75;
  cfg.replacement = true;
  cfg.seed = 123456789012345ull;
  cfg.sweep_methods = "ddb,cddb,cddb_deep";
  cfg.out_dir = "elsewhere";

  const std::string text = serialize_config(cfg);
  std::istringstream in(text);
  const RunConfig back = parse_config_stream(in, "<roundtrip>");
  CHECK(back == cfg);
}

TEST_CASE("config handles comments and whitespace") {
  std::istringstream in(
      "# full line comment\n"
      "  sampler.nfe = 42   # trailing comment\n"
      "\n"
      "guidance.precond=adjoint\n");
  const RunConfig cfg = parse_config_stream(in, "<c>");
  CHECK(cfg.nfe == 42);
  CHECK(cfg.precond == "adjoint");
}

TEST_CASE("list parsing") {
  CHECK(parse_int_list("k", "5, 20,100") == std::vector<int>{5, 20, 100});
  CHECK(parse_double_list("k", "0,0.05") == std::vector<double>{0.0, 0.05});
  CHECK(parse_string_list("k", "ddb, cddb") ==
        std::vector<std::string>{"ddb", "cddb"});
  CHECK_THROWS_AS(parse_int_list("k", ","), ConfigError);
  CHECK_THROWS_AS(parse_int_list("k", "1,x"), ConfigError);
}

TEST_CASE("factory builds schedules and operators from config") {
  RunConfig cfg;
  const BridgeSchedule i2sb = build_schedule(cfg);
  CHECK(i2sb.kind() == ScheduleKind::I2SB);

  cfg.schedule_kind = "indi";
  CHECK(build_schedule(cfg).kind() == ScheduleKind::InDI);

  cfg.schedule_kind = "irsde";
  CHECK_THROWS_AS(build_schedule(cfg), ConfigError);  // no theta_bar file
  const std::string table = temp_path("theta.txt");
  write_text_file(table, "# t theta\n0 0\n0.5 1.0\n1 2.0\n");
  cfg.theta_bar_file = table;
  CHECK(build_schedule(cfg).kind() == ScheduleKind::IRSDE);

  RunConfig opcfg;
  opcfg.operator_kind = "avgpool";
  opcfg.pool_factor = 2;
  const OperatorBundle pool = build_operator(opcfg, {8, 8});
  CHECK(pool.op().is_linear());
  CHECK(pool.lin->output_shape() == Shape{4, 4});

  opcfg.operator_kind = "quantizer";
  const OperatorBundle q = build_operator(opcfg, {8, 8});
  CHECK_FALSE(q.op().is_linear());

  opcfg.operator_kind = "mask";
  opcfg.mask_keep = 0.5;
  const OperatorBundle mask = build_operator(opcfg, {8, 8});
  CHECK(mask.op().is_linear());
}

TEST_CASE("pair files save and load") {
  DatasetSpec spec;
  spec.shape = {4, 4};
  spec.train_size = 3;
  spec.seed = 2;
  const IdentityOp ident({4, 4});
  const PairedDataset pairs = make_training_pairs(spec, ForwardOp::linear(ident));

  const std::string dir = temp_path("pairs");
  fs::create_directories(dir);
  save_pairs(dir, pairs);
  const PairedDataset back = load_pairs(dir);
  REQUIRE(back.x0s.size() == 3);
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(bit_identical(back.x0s[k], pairs.x0s[k]));
    CHECK(bit_identical(back.x1s[k], pairs.x1s[k]));
  }
  CHECK_THROWS_AS(load_pairs(temp_path("nonexistent_dir")), ConfigError);
}
