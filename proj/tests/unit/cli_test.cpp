#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "ctxprobe/cli/cli.hpp"
#include "ctxprobe/error.hpp"
#include "ctxprobe/models/attention_lm.hpp"
#include "ctxprobe/models/train.hpp"
#include "ctxprobe/probes/report.hpp"

namespace ctxprobe {
namespace {

namespace fs = std::filesystem;

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path fresh_dir(const std::string& name) {
  auto d = fs::temp_directory_path() / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

TEST(CliConfig, MergeRejectsUnknownAndMistypedKeys) {
  auto base = cli::default_config();
  EXPECT_EQ(base["config_version"], cli::kConfigVersion);
  EXPECT_TRUE(base["samples"].is_null());
  auto merged = cli::merge_config(base, {{"samples", 7}, {"scorer", "uniform"}});
  EXPECT_EQ(merged["samples"], 7);
  EXPECT_EQ(merged["scorer"], "uniform");
  EXPECT_THROW(cli::merge_config(base, {{"smaples", 7}}), InvalidArgument);
  EXPECT_THROW(cli::merge_config(base, {{"samples", "seven"}}), InvalidArgument);
  EXPECT_THROW(cli::merge_config(base, {{"unit_sizes", {1.5}}}), InvalidArgument);
}

TEST(CliConfig, ParseSettingTypesByKey) {
  EXPECT_EQ(cli::parse_setting("samples=12").second, 12);
  EXPECT_EQ(cli::parse_setting("pppl_min=2.5").second, 2.5);
  EXPECT_EQ(cli::parse_setting("emit_svg=true").second, true);
  EXPECT_EQ(cli::parse_setting("unit_sizes=5,6,7").second, nlohmann::json({5, 6, 7}));
  EXPECT_THROW(cli::parse_setting("samples"), InvalidArgument);
  EXPECT_THROW(cli::parse_setting("samples=many"), InvalidArgument);
  EXPECT_THROW(cli::parse_setting("nonsense=1"), InvalidArgument);
}

TEST(CliConfig, ReadCsvHandlesQuoting) {
  std::istringstream in("id,note\na,\"x, \"\"y\"\"\"\nb,plain\n");
  auto rows = cli::read_csv(in);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[1][1], "x, \"y\"");
  EXPECT_EQ(rows[2][0], "b");
}

TEST(CliRun, UsageErrorsExitTwo) {
  auto dir = fresh_dir("ctxprobe_cli_usage");
  EXPECT_EQ(run({"probe", "bogus", "--random", "2x20", "--out", dir.string()}).code, cli::kUsage);
  EXPECT_EQ(run({"frobnicate"}).code, cli::kUsage);
  EXPECT_EQ(run({"score", "--set", "nonsense=1"}).code, cli::kUsage);
  EXPECT_EQ(run({"score", "--out", dir.string()}).code, cli::kUsage);  // no sequences
  EXPECT_EQ(run({"score", "--mode", "sideways", "--random", "1x10"}).code, cli::kUsage);
}

TEST(CliRun, DoublingUnderOracleWritesReportAndEcho) {
  auto dir = fresh_dir("ctxprobe_cli_doubling");
  auto r = run({"probe", "doubling", "--scorer", "oracle", "--random", "5x60-80", "--seed", "3", "--set",
                "exclude_first=false", "--out", dir.string()});
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  std::ifstream f(dir / "doubling.json");
  auto report = ProbeReport::from_json(nlohmann::json::parse(f));
  ASSERT_EQ(report.rows.size(), 5u);
  for (const auto& row : report.rows) {
    EXPECT_EQ(row.metric_value("pppl_nx"), 1.0);
    EXPECT_EQ(row.metric_value("pppl_1x"), 20.0);
  }
  std::ifstream e(dir / "config.json");
  auto echo = nlohmann::json::parse(e);
  EXPECT_EQ(echo["command"], "probe");
  EXPECT_EQ(echo["config"]["seed"], 3);
  EXPECT_EQ(echo["config"]["exclude_first"], false);
}

TEST(CliRun, ConfigFileAndFlagsLayer) {
  auto dir = fresh_dir("ctxprobe_cli_layer");
  {
    std::ofstream c(dir / "run.json");
    c << nlohmann::json{{"scorer", "uniform"}, {"random", "3x20"}, {"seed", 5}}.dump();
  }
  auto r = run({"score", "--config", (dir / "run.json").string(), "--seed", "6", "--out", dir.string()});
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  std::ifstream e(dir / "config.json");
  auto echo = nlohmann::json::parse(e);
  EXPECT_EQ(echo["config"]["scorer"], "uniform");
  EXPECT_EQ(echo["config"]["seed"], 6);
}

TEST(CliRun, ScoreOfsIssuesOneQueryPerSequence) {
  auto dir = fresh_dir("ctxprobe_cli_ofs");
  auto r = run({"score", "--scorer", "uniform", "--random", "5x30", "--ofs", "--out", dir.string()});
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  std::ifstream f(dir / "score.json");
  auto report = ProbeReport::from_json(nlohmann::json::parse(f));
  EXPECT_EQ(report.scorer_queries, 5u);
  EXPECT_EQ(report.rows.size(), 5u);
  EXPECT_NE(r.out.find("pppl"), std::string::npos);

  // OFS is also the default for corpus scoring.
  r = run({"score", "--scorer", "uniform", "--random", "5x30", "--out", dir.string()});
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  std::ifstream g(dir / "score.json");
  EXPECT_EQ(ProbeReport::from_json(nlohmann::json::parse(g)).scorer_queries, 5u);
}

TEST(CliRun, MaskedScoringLogsOfsDivergence) {
  auto dir = fresh_dir("ctxprobe_cli_masked");
  auto r = run({"score", "--scorer", "uniform", "--random", "2x30", "--mode", "one-at-a-time", "--out", dir.string()});
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  std::ifstream f(dir / "score.json");
  auto report = ProbeReport::from_json(nlohmann::json::parse(f));
  ASSERT_EQ(report.rows.size(), 2u);
  for (const auto& row : report.rows) {
    EXPECT_NEAR(row.metric_value("pppl"), 20.0, 1e-12);
    EXPECT_NEAR(row.metric_value("pppl_ofs"), 20.0, 1e-12);
    EXPECT_EQ(row.metric_value("ofs_mean_kl"), 0.0);
  }
}

TEST(CliRun, FilterKeepsRowsAboveThreshold) {
  auto dir = fresh_dir("ctxprobe_cli_filter");
  {
    std::ofstream s(dir / "scores.csv");
    s << "id,length,pppl\na,10,4\nb,10,5\nc,10,5.5\nd,10,\n\"e,f\",10,9\n";
  }
  auto r = run({"filter", "--scores", (dir / "scores.csv").string(), "--pppl-min", "5", "--out", dir.string()});
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  EXPECT_EQ(r.out, "id,length,pppl\nc,10,5.5\n\"e,f\",10,9\n");
  EXPECT_EQ(run({"filter", "--scores", (dir / "scores.csv").string(), "--out", dir.string()}).code, cli::kUsage);
}

TEST(CliRun, MissingEmbeddingsExitThree) {
  auto dir = fresh_dir("ctxprobe_cli_capability");
  auto r = run({"embed-regress", "--scorer", "oracle", "--random", "4x20", "--out", dir.string()});
  EXPECT_EQ(r.code, cli::kCapability);
  EXPECT_NE(r.err.find("capabilities:"), std::string::npos);
}

TEST(CliRun, ContextOverflowIsPartial) {
  auto dir = fresh_dir("ctxprobe_cli_partial");
  ToyAttentionConfig cfg;
  cfg.width = 8;
  cfg.heads = 2;
  cfg.depth = 1;
  cfg.context_cap = 40;
  save_checkpoint(ToyAttentionLm(cfg), dir / "small.ckpt");
  auto r = run({"probe", "doubling", "--scorer", "toy", "--checkpoint", (dir / "small.ckpt").string(), "--random",
                "3x15-30", "--out", dir.string()});
  EXPECT_EQ(r.code, cli::kPartial) << r.err;
  std::ifstream f(dir / "doubling.json");
  auto report = ProbeReport::from_json(nlohmann::json::parse(f));
  EXPECT_GT(report.flagged_rows(), 0u);
}

}  // namespace
}  // namespace ctxprobe
