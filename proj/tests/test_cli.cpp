#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <sys/wait.h>

#include "semloc/config.hpp"
#include "semloc/errors.hpp"
#include "semloc/pipeline.hpp"

using namespace semloc;
namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  out << s;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("semloc_test_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(SEMLOC_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

RunConfig short_config(const std::string& canned) {
  RunConfig c = canned_config(canned);
  c.scenario.duration = 20.0;
  c.scenario.dropouts.clear();
  if (canned == "dropout_30_60") c.scenario.dropouts = {{5, 10}, {15, 20}};
  c.estimator.burn_in = 2.0;
  c.resolve();
  return c;
}

}  // namespace

TEST(Config, JsonRoundTripIsExact) {
  for (const std::string name : {"nominal", "dropout_30_60"}) {
    const RunConfig c = canned_config(name);
    const nlohmann::json j = config_to_json(c);
    EXPECT_EQ(config_to_json(config_from_json(j)).dump(), j.dump());
  }
}

TEST(Config, RejectsUnknownKeysAndSchema) {
  nlohmann::json j = config_to_json(canned_config("nominal"));
  j["typo"] = 1;
  EXPECT_THROW(config_from_json(j), ParseError);
  j = config_to_json(canned_config("nominal"));
  j["scenario"]["nosie"] = 1;
  EXPECT_THROW(config_from_json(j), ParseError);
  j = config_to_json(canned_config("nominal"));
  j["schema_version"] = 2;
  EXPECT_THROW(config_from_json(j), ParseError);
  j = config_to_json(canned_config("nominal"));
  j["scenario"]["rate"] = "fast";
  EXPECT_THROW(config_from_json(j), ParseError);
  j = config_to_json(canned_config("nominal"));
  j["scenario"]["rate"] = -1.0;
  EXPECT_THROW(config_from_json(j), ValidationError);
  EXPECT_THROW(canned_config("nope"), ValidationError);
  EXPECT_THROW(load_config("/nonexistent/semloc.json"), Error);
}

TEST(Config, MissingKeysKeepDefaults) {
  const RunConfig c = config_from_json(nlohmann::json{{"schema_version", 1}});
  EXPECT_EQ(config_to_json(c)["scenario"], config_to_json(RunConfig{})["scenario"]);
}

TEST(Config, CannedScenarios) {
  const RunConfig n = canned_config("nominal");
  EXPECT_TRUE(n.scenario.dropouts.empty());
  EXPECT_EQ(n.scenario.frame_count(), 1200u);
  const RunConfig d = canned_config("dropout_30_60");
  ASSERT_EQ(d.scenario.dropouts.size(), 2u);
  EXPECT_EQ(d.scenario.dropouts[0], std::make_pair(30.0, 60.0));
  EXPECT_EQ(d.scenario.dropouts[1], std::make_pair(90.0, 120.0));
}

TEST(Pipeline, ArtifactsAndDeterminism) {
  const RunConfig c = short_config("dropout_30_60");
  std::vector<DetectionFrame> frames;
  const RunResult r = run_pipeline(c, &frames);
  EXPECT_EQ(r.frames.size(), 200u);
  EXPECT_EQ(frames.size(), 200u);
  EXPECT_DOUBLE_EQ(r.gps_fraction, 0.5);

  const fs::path a = scratch("a");
  const fs::path b = scratch("b");
  write_artifacts(c, r, a, &frames);
  write_artifacts(c, run_pipeline(c), b);
  for (const char* f : {"frames.csv", "offset.csv", "histogram.csv", "summary.json",
                        "config_resolved.json"}) {
    ASSERT_TRUE(fs::exists(a / f)) << f;
    EXPECT_EQ(read_file(a / f), read_file(b / f)) << f;
  }
  EXPECT_TRUE(fs::exists(a / "frames.jsonl"));
  EXPECT_FALSE(fs::exists(b / "frames.jsonl"));

  // The GPS column of frames.csv reproduces the dropout fraction.
  std::istringstream csv(read_file(a / "frames.csv"));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "t,longitudinal,lateral,heading,offset_err,gps_present");
  std::size_t rows = 0;
  std::size_t present = 0;
  while (std::getline(csv, line)) {
    ++rows;
    if (line.back() == '1') ++present;
  }
  EXPECT_EQ(rows, 200u);
  EXPECT_EQ(2 * present, rows);

  const auto summary = nlohmann::json::parse(read_file(a / "summary.json"));
  EXPECT_EQ(summary["schema_version"], 1);
  EXPECT_EQ(summary["frames"], 200);
  for (const char* m : {"longitudinal", "lateral", "heading", "offset"}) {
    EXPECT_TRUE(summary["metrics"][m].contains("p99")) << m;
  }

  // The resolved echo reloads into the same run.
  const RunConfig again = load_config((a / "config_resolved.json").string());
  EXPECT_EQ(frames_csv(run_pipeline(again)), read_file(a / "frames.csv"));

  std::ifstream jsonl(a / "frames.jsonl");
  std::size_t k = 0;
  while (std::getline(jsonl, line)) {
    EXPECT_EQ(frame_to_json_line(frame_from_json_line(line)), line);
    EXPECT_EQ(line, frame_to_json_line(frames[k++]));
  }
  EXPECT_EQ(k, frames.size());
}

TEST(Pipeline, CompareRuns) {
  const RunConfig n = short_config("nominal");
  const RunConfig d = short_config("dropout_30_60");
  const fs::path a = scratch("cmp_a");
  const fs::path b = scratch("cmp_b");
  write_artifacts(n, run_pipeline(n), a);
  write_artifacts(d, run_pipeline(d), b);

  const CompareReport self = compare_runs(a, a);
  for (const auto& [metric, row] : self.deltas) {
    EXPECT_EQ(row.median, 0.0) << metric;
    EXPECT_EQ(row.p99, 0.0) << metric;
  }
  const CompareReport cross = compare_runs(a, b);
  EXPECT_EQ(cross.deltas.size(), 4u);
  EXPECT_GT(cross.deltas.at("longitudinal").p99, 0.0);
  EXPECT_FALSE(format_compare(cross).empty());

  const fs::path empty = scratch("cmp_empty");
  EXPECT_THROW(compare_runs(a, empty), MissingArtifact);
  auto j = nlohmann::json::parse(read_file(b / "summary.json"));
  j["schema_version"] = 99;
  write_file(empty / "summary.json", j.dump());
  EXPECT_THROW(compare_runs(a, empty), MissingArtifact);
}

TEST(Cli, ExitCodes) {
  const fs::path dir = scratch("exit");
  EXPECT_EQ(run_cli("--help"), 0);
  EXPECT_EQ(run_cli("run --canned nope --out " + (dir / "x").string()), 2);
  write_file(dir / "bad.json", R"({"schema_version": 1, "bogus": true})");
  EXPECT_EQ(run_cli("run --config " + (dir / "bad.json").string() + " --out " +
                    (dir / "y").string()),
            2);
  EXPECT_EQ(run_cli("compare " + (dir / "none1").string() + " " + (dir / "none2").string()), 2);

  // A condition limit near 1 makes the first correction fail.
  nlohmann::json j = config_to_json(short_config("nominal"));
  j["estimator"]["max_condition"] = 1.001;
  write_file(dir / "fail.json", j.dump());
  EXPECT_EQ(run_cli("run --config " + (dir / "fail.json").string() + " --out " +
                    (dir / "z").string()),
            3);

  write_file(dir / "ok.json", config_to_json(short_config("nominal")).dump());
  EXPECT_EQ(run_cli("run --config " + (dir / "ok.json").string() + " --out " +
                    (dir / "ok").string()),
            0);
  EXPECT_TRUE(fs::exists(dir / "ok" / "summary.json"));
  EXPECT_EQ(run_cli("dump-map --config " + (dir / "ok.json").string() + " --out " +
                    (dir / "map.json").string()),
            0);
  EXPECT_NO_THROW(load_map(read_file(dir / "map.json")));
  EXPECT_EQ(run_cli("compare " + (dir / "ok").string() + " " + (dir / "ok").string()), 0);
}

TEST(Config, ShippedFilesMatchCannedScenarios) {
  for (const std::string name : {"nominal", "dropout_30_60"}) {
    const fs::path p = fs::path(SEMLOC_CONFIG_DIR) / (name + ".json");
    EXPECT_EQ(config_to_json(load_config(p.string())).dump(),
              config_to_json(canned_config(name)).dump())
        << name;
  }
}

TEST(Pipeline, StaticOffsetConvergesWithoutOffsetProcessNoise) {
  RunConfig c = canned_config("nominal");
  c.noise.q_gm = Mat6::Zero();
  c.resolve();
  const RunResult r = run_pipeline(c);
  EXPECT_LT(r.frames.back().error.offset_err, 0.1);
}
