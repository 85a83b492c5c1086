#include <catch2/catch_amalgamated.hpp>
#include <filesystem>

#include "vigil/config.hpp"
#include "vigil/io.hpp"
#include "vigil/matrix.hpp"
#include "vigil/rng.hpp"
#include "vigil/rundir.hpp"

using namespace vigil;
namespace fs = std::filesystem;

namespace {
fs::path scratch_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / ("vigil_core_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}
}  // namespace

TEST_CASE("matrix products match hand results") {
  Matrix a(2, 3);
  a.data = {1, 2, 3, 4, 5, 6};
  Matrix b(3, 2);
  b.data = {7, 8, 9, 10, 11, 12};
  Matrix c = matmul(a, b);
  REQUIRE(c.rows == 2);
  REQUIRE(c.cols == 2);
  CHECK(c(0, 0) == 58);
  CHECK(c(0, 1) == 64);
  CHECK(c(1, 0) == 139);
  CHECK(c(1, 1) == 154);

  Matrix atb = matmul_tn(a, a);  // 3x3
  CHECK(atb(0, 0) == 17);
  CHECK(atb(2, 2) == 45);
  Matrix abt = matmul_nt(a, a);  // 2x2
  CHECK(abt(0, 0) == 14);
  CHECK(abt(0, 1) == 32);
  CHECK_THROWS_AS(matmul(a, a), Error);
}

TEST_CASE("rng streams are deterministic and well distributed") {
  Rng a(123), b(123);
  for (int i = 0; i < 100; ++i) REQUIRE(a.next_u64() == b.next_u64());

  Rng r(7);
  double mean = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) mean += r.uniform();
  mean /= n;
  CHECK_THAT(mean, Catch::Matchers::WithinAbs(0.5, 0.005));

  Rng g(9);
  double m2 = 0.0, m = 0.0;
  for (int i = 0; i < n; ++i) {
    double v = g.normal();
    m += v;
    m2 += v * v;
  }
  CHECK_THAT(m / n, Catch::Matchers::WithinAbs(0.0, 0.01));
  CHECK_THAT(m2 / n, Catch::Matchers::WithinAbs(1.0, 0.02));

  Rng p(11);
  double pm = 0.0;
  for (int i = 0; i < 20000; ++i) pm += p.poisson(50.0);
  CHECK_THAT(pm / 20000.0, Catch::Matchers::WithinAbs(50.0, 0.5));

  CHECK(derive_seed(1, "a") != derive_seed(1, "b"));
  CHECK(derive_seed(1, "a") != derive_seed(2, "a"));
  CHECK(derive_seed(1, "a", 0) != derive_seed(1, "a", 1));
}

TEST_CASE("sha1 matches known vectors") {
  CHECK(detail::sha1_hex("abc") == "a9993e364706816aba3e25717850c26c9cd0d89d");
  CHECK(detail::sha1_hex("") == "da39a3ee5e6b4b0d3255bfef95601890afd80709");
  CHECK(detail::sha1_hex("abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq") ==
        "84983e441c3bd26ebaae4aa1f95129e5e54670f1");
  // same as `git hash-object` on a file containing "hello\n"
  CHECK(git_blob_sha1("hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a");
}

TEST_CASE("kv files parse with comments and report bad lines") {
  auto dir = scratch_dir("kv");
  write_file_atomic(dir / "a.txt", "# comment\nkey = value\n\nx=1 # trailing\n");
  auto kv = read_kv(dir / "a.txt");
  CHECK(kv.at("key") == "value");
  CHECK(kv.at("x") == "1");
  write_file_atomic(dir / "bad.txt", "no equals sign\n");
  CHECK_THROWS_AS(read_kv(dir / "bad.txt"), IoError);
}

TEST_CASE("format_double at 17 digits round-trips exactly") {
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    double v = (rng.uniform() - 0.5) * std::pow(10.0, rng.uniform(-12.0, 12.0));
    double back = std::stod(format_double(v, 17));
    REQUIRE(back == v);
  }
}

TEST_CASE("run config rejects unknown keys and builds typed configs") {
  RunConfig cfg = RunConfig::defaults();
  CHECK_THROWS_AS(cfg.set("no.such.key", "1"), ConfigError);
  cfg.set("env.dt", "0.05");
  cfg.set("agent.gamma", "0.9");
  auto env = cfg.env_config();
  CHECK(env.dt == 0.05);
  CHECK(env.delay_steps() == 10);
  auto agent = cfg.agent_config();
  CHECK(agent.gamma == 0.9);
  CHECK_THAT(agent.epsilon(300), Catch::Matchers::WithinAbs(0.1, 1e-9));
  CHECK(agent.epsilon(10000) == 0.05);

  // every schema key has a documented default that parses
  for (const auto& key : config_schema()) {
    CHECK(std::string(key.help).size() > 0);
  }

  cfg.set("env.dt", "0.07");  // 0.5 s delay is not a whole number of steps
  CHECK_THROWS_AS(cfg.env_config(), ConfigError);
}

TEST_CASE("run directory writes manifest before artifacts and refuses reuse") {
  auto dir = scratch_dir("rundir");
  write_file_atomic(dir / "input.txt", "payload\n");
  RunConfig cfg = RunConfig::defaults();
  auto run = RunDirectory::create(dir / "run", "test-cmd", cfg, 42, {dir / "input.txt"});
  auto manifest = read_kv(dir / "run" / "manifest.txt");
  CHECK(manifest.at("command") == "test-cmd");
  CHECK(manifest.at("seed") == "42");
  CHECK(manifest.at("input.input.txt") == git_blob_sha1("payload\n"));
  CHECK(manifest.at("config.env.dt") == "0.05");

  run.write_text("result.csv", "a,b\n1,2\n");
  auto lines = read_lines(dir / "run" / "manifest.txt");
  CHECK(lines.back() == "artifact=result.csv");
  CHECK(read_file(dir / "run" / "result.csv") == "a,b\n1,2\n");

  CHECK_THROWS_AS(RunDirectory::create(dir / "run", "test-cmd", cfg, 42, {}), IoError);
}
