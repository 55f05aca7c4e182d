#include <mblkam/cli.hpp>

#include <gtest/gtest.h>

#include <filesystem>

using namespace mblkam;
namespace fs = std::filesystem;

namespace {

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("mblkam_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  int run(std::vector<std::string> args) {
    args.insert(args.begin(), "mblkam");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream log, err;
    const int code = cli::run_command(static_cast<int>(argv.size()), argv.data(), log, err);
    last_err_ = err.str();
    return code;
  }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  void write(const std::string& name, const std::string& text) const { write_atomic(dir_ / name, text); }

  fs::path dir_;
  std::string last_err_;
};

}  // namespace

TEST_F(CliTest, DiagonalizeWritesContractFiles) {
  write("run.toml", "[chain]\nn = 6\n[disorder]\ngamma = 0.02\n[kam]\nepsilon_exponent = 0.5\n");
  ASSERT_EQ(run({"diagonalize", "--config", path("run.toml"), "--out", path("out")}), 0) << last_err_;
  for (const char* f : {"summary.json", "steps.jsonl", "spectrum.csv", "config.toml"}) {
    EXPECT_TRUE(fs::exists(dir_ / "out" / f)) << f;
  }
  const auto summary = Json::parse(read_file(dir_ / "out" / "summary.json"));
  EXPECT_EQ(summary["status"], "ok");
  EXPECT_EQ(summary["config"]["chain"]["n"], 6);
  EXPECT_LE(summary["oracle"]["max_rel_error"].get<double>(), 1e-8);
  const auto csv = read_file(dir_ / "out" / "spectrum.csv");
  EXPECT_EQ(csv.find('\r'), std::string::npos);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 65);
}

TEST_F(CliTest, EchoedConfigReproducesRun) {
  ASSERT_EQ(run({"diagonalize", "--n", "5", "--gamma", "0.03", "--seed", "11", "--out", path("a")}), 0);
  ASSERT_EQ(run({"diagonalize", "--config", path("a/config.toml"), "--out", path("b")}), 0);
  EXPECT_EQ(read_file(dir_ / "a" / "spectrum.csv"), read_file(dir_ / "b" / "spectrum.csv"));
  EXPECT_EQ(read_file(dir_ / "a" / "summary.json"), read_file(dir_ / "b" / "summary.json"));
}

TEST_F(CliTest, LlaWritesProfileAndFit) {
  ASSERT_EQ(run({"lla", "--n", "4", "--gamma", "0.05", "--realizations", "300", "--seed", "1", "--out", path("lla")}),
            0);
  const auto csv = read_file(dir_ / "lla" / "profiles.csv");
  EXPECT_EQ(csv.rfind("delta,probability,stderr", 0), 0u);
  const auto summary = Json::parse(read_file(dir_ / "lla" / "summary.json"));
  EXPECT_TRUE(summary["lla"].contains("nu"));
  EXPECT_TRUE(summary["lla"].contains("C_n"));
  EXPECT_EQ(summary["samples"], 300);
}

TEST_F(CliTest, EnsembleRecordsIndependentOfWorkers) {
  write("e.toml", "[chain]\nn = 5\n[disorder]\ngammas = [0.01, 0.05]\n[kam]\nepsilon_exponent = 0.5\n"
                  "[ensemble]\nrealizations = 12\ncorrelation_distances = [1, 2, 3]\n");
  ASSERT_EQ(run({"ensemble", "--config", path("e.toml"), "--workers", "1", "--out", path("w1")}), 0) << last_err_;
  ASSERT_EQ(run({"ensemble", "--config", path("e.toml"), "--workers", "4", "--out", path("w4")}), 0);
  EXPECT_EQ(read_file(dir_ / "w1" / "records.jsonl"), read_file(dir_ / "w4" / "records.jsonl"));
  EXPECT_EQ(read_file(dir_ / "w1" / "profiles.csv"), read_file(dir_ / "w4" / "profiles.csv"));
  const auto records = read_file(dir_ / "w1" / "records.jsonl");
  EXPECT_EQ(std::count(records.begin(), records.end(), '\n'), 24);
}

TEST_F(CliTest, ReportIsDeterministicAndReadOnly) {
  write("e.toml", "[chain]\nn = 4\n[disorder]\ngammas = [0.01, 0.02]\n[kam]\nepsilon_exponent = 0.5\n"
                  "[ensemble]\nrealizations = 6\ncorrelation_distances = [1, 2]\n");
  ASSERT_EQ(run({"ensemble", "--config", path("e.toml"), "--out", path("e")}), 0);
  const auto records = read_file(dir_ / "e" / "records.jsonl");
  ASSERT_EQ(run({"report", "--in", path("e"), "--svg", "--out", path("p1")}), 0) << last_err_;
  ASSERT_EQ(run({"report", "--in", path("e"), "--svg", "--out", path("p2")}), 0);
  for (const char* f : {"magnetization_vs_gamma.svg", "correlation_decay.svg", "block_connectivity.svg"}) {
    ASSERT_TRUE(fs::exists(dir_ / "p1" / f)) << f;
    EXPECT_EQ(read_file(dir_ / "p1" / f), read_file(dir_ / "p2" / f));
    EXPECT_EQ(read_file(dir_ / "p1" / f).rfind("<svg", 0), 0u);
  }
  EXPECT_EQ(read_file(dir_ / "e" / "records.jsonl"), records);
}

TEST_F(CliTest, ObservablesTable) {
  ASSERT_EQ(run({"observables", "--n", "4", "--gamma", "0.01", "--realizations", "2", "--out", path("o"), "--svg"}),
            0)
      << last_err_;
  const auto csv = read_file(dir_ / "o" / "observables.csv");
  EXPECT_EQ(csv.rfind("seed,aggregation,observable,value\n", 0), 0u);
  EXPECT_NE(csv.find("lbit_decay_ratio"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir_ / "o" / "lbit_profile.svg"));
}

TEST_F(CliTest, OutputCollisionNeedsForce) {
  ASSERT_EQ(run({"diagonalize", "--n", "3", "--out", path("c")}), 0);
  EXPECT_EQ(run({"diagonalize", "--n", "3", "--out", path("c")}), 1);
  EXPECT_NE(last_err_.find("--force"), std::string::npos);
  EXPECT_EQ(run({"diagonalize", "--n", "3", "--out", path("c"), "--force"}), 0);
}

TEST_F(CliTest, ConfigErrorsExitOne) {
  EXPECT_EQ(run({"diagonalize", "--bogus", "--out", path("x")}), 1);
  EXPECT_EQ(run({"diagonalize", "--config", path("missing.toml"), "--out", path("x")}), 1);
  write("bad.toml", "[chain]\nn = 4\nwidth = 3\n");
  EXPECT_EQ(run({"diagonalize", "--config", path("bad.toml"), "--out", path("x")}), 1);
  EXPECT_NE(last_err_.find("width"), std::string::npos);
  write("syntax.toml", "[chain\nn = 4\n");
  EXPECT_EQ(run({"diagonalize", "--config", path("syntax.toml"), "--out", path("x")}), 1);
  write("range.toml", "[disorder]\nfield = [1.0, 1.0]\n");
  EXPECT_EQ(run({"diagonalize", "--config", path("range.toml"), "--out", path("x")}), 1);
  EXPECT_EQ(run({"diagonalize", "--n", "20", "--out", path("x")}), 1);
  EXPECT_EQ(run({"report", "--in", path("nothing")}), 1);
  EXPECT_EQ(run({"ensemble"}), 1);
}

TEST_F(CliTest, NumericalFailureExitsTwoWithDiagnostics) {
  write("k.toml", "[chain]\nn = 4\n[disorder]\ngamma = 0.05\n[kam]\nk_max = 0\n");
  EXPECT_EQ(run({"diagonalize", "--config", path("k.toml"), "--out", path("f")}), 2);
  const auto summary = Json::parse(read_file(dir_ / "f" / "summary.json"));
  EXPECT_EQ(summary["status"], "numerical_failure");
  EXPECT_FALSE(summary["kam"]["converged"].get<bool>());
}

TEST(Config, ParsesAllSections) {
  const auto cfg = parse_config_string(
      "[chain]\nK = 1\nK_prime = 3\n[disorder]\ngamma = 0.02\nexchange = 0.0\nfield = [-2.0, 2.0]\n"
      "[kam]\nrho = 0.2\ngrowth = 2.0\n[ensemble]\nweights = \"gibbs\"\nbeta = 1.5\nworkers = 3\n"
      "[lla]\npoints = 7\n[observables]\nradius = 0\n");
  EXPECT_EQ(cfg.ensemble.geometry, ChainGeometry(1, 3));
  EXPECT_EQ(cfg.ensemble.distribution.exchange, Distribution::constant(0.0));
  EXPECT_EQ(cfg.ensemble.distribution.field, Distribution::uniform(-2.0, 2.0));
  EXPECT_EQ(*cfg.ensemble.kam.rho, 0.2);
  EXPECT_EQ(cfg.ensemble.weights.kind, WeightsSpec::Kind::gibbs);
  EXPECT_EQ(cfg.ensemble.workers, 3);
  EXPECT_EQ(cfg.lla.points, 7);
  EXPECT_EQ(cfg.operator_radius, 0);
  std::ostringstream echo;
  echo << to_toml(cfg);
  EXPECT_EQ(to_json(parse_config_string(echo.str())), to_json(cfg));
}

TEST(Config, RejectsConflictsAndTypes) {
  EXPECT_THROW(parse_config_string("[chain]\nn = 4\nK = 1\n"), ConfigError);
  EXPECT_THROW(parse_config_string("[chain]\nn = \"four\"\n"), ConfigError);
  EXPECT_THROW(parse_config_string("[ensemble]\nweights = \"boltzmann\"\n"), ConfigError);
  EXPECT_THROW(parse_config_string("chain = 3\n"), ConfigError);
}

TEST(Csv, FormatsShortestRoundTrip) {
  EXPECT_EQ(fmt(0.1), "0.1");
  EXPECT_EQ(fmt(0.5), "0.5");
  EXPECT_EQ(std::strtod(fmt(1.0 / 3.0).c_str(), nullptr), 1.0 / 3.0);
  CsvWriter w({"a", "b"});
  w.row(1, 2.5);
  EXPECT_EQ(w.str(), "a,b\n1,2.5\n");
}
