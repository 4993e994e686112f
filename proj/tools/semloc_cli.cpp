// Command-line driver: run a scenario, compare two runs, or dump the map.
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "semloc/config.hpp"
#include "semloc/pipeline.hpp"
#include "semloc/simulator.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

semloc::RunConfig resolve_config(const std::string& path, const std::string& canned) {
  if (!path.empty() && !canned.empty()) {
    throw semloc::ValidationError("--config and --canned are mutually exclusive");
  }
  if (!canned.empty()) return semloc::canned_config(canned);
  if (path.empty()) throw semloc::ValidationError("one of --config or --canned is required");
  return semloc::load_config(path);
}

int cmd_run(const std::string& config_path, const std::string& canned, std::string out_dir,
            bool dump_frames) {
  semloc::RunConfig config;
  try {
    config = resolve_config(config_path, canned);
    if (out_dir.empty()) out_dir = config.output_dir;
    if (out_dir.empty()) throw semloc::ValidationError("no output directory (--out)");
  } catch (const semloc::Error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  }

  std::vector<semloc::DetectionFrame> frames;
  semloc::RunResult result;
  try {
    result = semloc::run_pipeline(config, dump_frames ? &frames : nullptr);
  } catch (const semloc::RunFailure& e) {
    std::cerr << e.what() << "\n";
    std::cerr << "failing frame: " << e.frame() << "\n";
    return kExitRuntime;
  }

  try {
    semloc::write_artifacts(config, result, out_dir, dump_frames ? &frames : nullptr);
  } catch (const std::exception& e) {
    std::cerr << "cannot write artifacts: " << e.what() << "\n";
    return kExitConfig;
  }

  const auto& s = result.summary;
  std::cout << "run " << config.name << ": " << result.frames.size() << " frames, gps fraction "
            << semloc::format_sig(result.gps_fraction, 4) << "\n"
            << "  median lon/lat/heading: " << semloc::format_sig(s.longitudinal.median, 4) << " "
            << semloc::format_sig(s.lateral.median, 4) << " "
            << semloc::format_sig(s.heading.median, 4) << "\n"
            << "  final offset error: "
            << semloc::format_sig(result.frames.back().error.offset_err, 4) << "\n";
  return kExitOk;
}

int cmd_compare(const std::string& a, const std::string& b) {
  try {
    std::cout << semloc::format_compare(semloc::compare_runs(a, b));
  } catch (const semloc::Error& e) {
    std::cerr << "compare error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitOk;
}

int cmd_dump_map(const std::string& config_path, const std::string& canned,
                 const std::string& out) {
  try {
    const semloc::RunConfig config = resolve_config(config_path, canned);
    const std::string bytes = semloc::save_map(semloc::generate_world(config.scenario));
    if (out.empty()) {
      std::cout << bytes;
    } else {
      std::ofstream f(out, std::ios::binary | std::ios::trunc);
      if (!f) throw semloc::Error("cannot write " + out);
      f << bytes;
    }
  } catch (const semloc::Error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semantic-map localization experiments"};
  app.require_subcommand(1);

  std::string config_path, canned, out_dir;
  bool dump_frames = false;
  auto* run = app.add_subcommand("run", "Simulate a scenario and write metric artifacts");
  run->add_option("--config", config_path, "Scenario config JSON");
  run->add_option("--canned", canned, "Built-in scenario (nominal, dropout_30_60)");
  run->add_option("--out", out_dir, "Artifact directory");
  run->add_flag("--dump-frames", dump_frames, "Also write raw detections as frames.jsonl");

  std::string dir_a, dir_b;
  auto* compare = app.add_subcommand("compare", "Metric deltas between two runs");
  compare->add_option("run_a", dir_a, "First artifact directory")->required();
  compare->add_option("run_b", dir_b, "Second artifact directory")->required();

  std::string map_out;
  auto* dump = app.add_subcommand("dump-map", "Write the generated semantic map as JSON");
  dump->add_option("--config", config_path, "Scenario config JSON");
  dump->add_option("--canned", canned, "Built-in scenario");
  dump->add_option("--out", map_out, "Output file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  if (*run) return cmd_run(config_path, canned, out_dir, dump_frames);
  if (*compare) return cmd_compare(dir_a, dir_b);
  return cmd_dump_map(config_path, canned, map_out);
}
