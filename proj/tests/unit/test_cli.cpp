#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "spiked_cli/runner.hpp"

namespace fs = std::filesystem;
using namespace spiked::cli;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "spiked_cli_tests" / name;
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::ifstream in(p);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

int run_with(const std::string& sub, const std::string& config, const fs::path& out) {
  Invocation inv;
  inv.subcommand = sub;
  inv.config_text = config;
  inv.out_dir = out.string();
  return run(inv);
}

}  // namespace

TEST(ContentHash, GitBlobHash) {
  EXPECT_EQ(content_hash(""), "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
  EXPECT_EQ(content_hash("hello\n"), "ce013625030ba8dba906f756967f9e9ca394464a");
}

TEST(Cli, PriorWritesCsvAndManifest) {
  const auto out = scratch("prior");
  ASSERT_EQ(run_with("prior", R"({"prior": {"kind": "sparse_rademacher", "p": 0.3}})", out),
            kSuccess);
  const auto rows = read_csv(out / "prior_atoms.csv");
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0][0], "config_hash");
  EXPECT_EQ(rows[0][1], "seed");
  const auto manifest = nlohmann::json::parse(slurp(out / "manifest.json"));
  EXPECT_EQ(manifest["partial"], false);
  EXPECT_EQ(manifest["config_hash"], rows[1][0]);
  EXPECT_FALSE(fs::exists(out / "error.json"));
}

TEST(Cli, RerunIsByteIdentical) {
  const std::string cfg =
      R"({"N": [3, 4], "M": [2], "lambda": [1.5], "replicates": 6, "seed": 5})";
  const auto a = scratch("det_a"), b = scratch("det_b");
  ASSERT_EQ(run_with("simulate", cfg, a), kSuccess);
  ASSERT_EQ(run_with("simulate", cfg, b), kSuccess);
  EXPECT_EQ(slurp(a / "simulate.csv"), slurp(b / "simulate.csv"));
  EXPECT_FALSE(slurp(a / "simulate.csv").empty());
}

TEST(Cli, HashIgnoresThreadsAndOutput) {
  const auto a = scratch("hash_a"), b = scratch("hash_b");
  ASSERT_EQ(run_with("prior", R"({"threads": 1})", a), kSuccess);
  ASSERT_EQ(run_with("prior", R"({"threads": 2})", b), kSuccess);
  const auto ha = nlohmann::json::parse(slurp(a / "manifest.json"))["config_hash"];
  const auto hb = nlohmann::json::parse(slurp(b / "manifest.json"))["config_hash"];
  EXPECT_EQ(ha, hb);
}

TEST(Cli, UnknownKeyIsValidationError) {
  const auto out = scratch("unknown");
  EXPECT_EQ(run_with("phase-scan", R"({"lamda": [1, 2]})", out), kValidationError);
  EXPECT_TRUE(fs::exists(out / "error.json"));
  EXPECT_FALSE(fs::exists(out / "phase_scan.csv"));
  const auto err = nlohmann::json::parse(slurp(out / "error.json"));
  EXPECT_EQ(err["exit_code"], 2);
}

TEST(Cli, MalformedConfigs) {
  const auto out = scratch("malformed");
  EXPECT_EQ(run_with("prior", "{not json", out), kValidationError);
  EXPECT_EQ(run_with("prior", R"({"subcommand": "mi"})", out), kValidationError);
  EXPECT_EQ(run_with("prior", R"({"prior": {"kind": "gaussian"}})", out), kValidationError);
  EXPECT_EQ(run_with("mi", R"({"snr": [0.0005, 1]})", out), kValidationError);
  EXPECT_EQ(run_with("nope", "{}", out), kValidationError);
}

TEST(Cli, EnumerationBudget) {
  const auto out = scratch("budget");
  EXPECT_EQ(run_with("simulate", R"({"N": [20], "M": [2], "replicates": 2})", out), kBudgetError);
  const auto err = nlohmann::json::parse(slurp(out / "error.json"));
  EXPECT_EQ(err["error"], "budget");
}

TEST(Cli, FatalNonConvergence) {
  const auto out = scratch("nonconv");
  const std::string cfg =
      R"({"mode": "matrix", "M": 2, "lambda": [2.0], "max_iterations": 1, "damping": 0.1,
          "fatal_nonconvergence": true})";
  EXPECT_EQ(run_with("fixed-point", cfg, out), kNonConvergence);
  const auto manifest = nlohmann::json::parse(slurp(out / "manifest.json"));
  EXPECT_EQ(manifest["partial"], true);
}

TEST(Cli, ConstantRankCavityHasNoRankIncrements) {
  const auto out = scratch("cavity");
  const std::string cfg =
      R"({"lambda": 1.5, "alpha": 2, "gamma": 0, "N_max": 4, "replicates": 3})";
  ASSERT_EQ(run_with("cavity", cfg, out), kSuccess);
  const auto rows = read_csv(out / "cavity_increments.csv");
  ASSERT_GE(rows.size(), 2u);
  std::size_t col = 0;
  while (col < rows[0].size() && rows[0][col] != "delta_M") ++col;
  ASSERT_LT(col, rows[0].size());
  for (std::size_t r = 1; r < rows.size(); ++r) EXPECT_EQ(std::stod(rows[r][col]), 0.0);
}
