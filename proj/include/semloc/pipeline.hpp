/**
 * \file pipeline.hpp
 * \brief simulator -> association -> estimator loop and its artifacts.
 */
#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "semloc/config.hpp"
#include "semloc/errors.hpp"
#include "semloc/evaluation.hpp"

namespace semloc {

struct FrameRecord {
  FrameError error;
  bool gps_present = false;
  std::size_t light_matches = 0;
  std::size_t lane_observations = 0;
  int gn_iterations = 0;
  double cov_asymmetry = 0.0;   ///< max |P - P^T|
  double cov_min_eig = 0.0;
  double offset_cov_trace = 0.0;
  bool cost_non_increasing = true;
  Pose t_vm_est;
  Pose t_gm_est;
};

struct RunResult {
  std::vector<FrameRecord> frames;
  EstimatorState final_state;
  ErrorSummary summary;  ///< after burn-in
  double gps_fraction = 0.0;
};

/// Raised when the estimator throws mid-run.
class RunFailure : public Error {
 public:
  RunFailure(std::size_t frame, const std::string& what)
      : Error("estimator failed at frame " + std::to_string(frame) + ": " + what), frame_(frame) {}
  std::size_t frame() const { return frame_; }

 private:
  std::size_t frame_;
};

/// Runs the full loop; throws RunFailure if the estimator fails.
/// When frames_out is given, every simulated DetectionFrame is appended to it.
RunResult run_pipeline(const RunConfig& config, std::vector<DetectionFrame>* frames_out = nullptr);

std::string frames_csv(const RunResult& result);
std::string offset_csv(const RunResult& result);
std::string histogram_csv(const RunResult& result, double burn_in);
nlohmann::json summary_json(const RunConfig& config, const RunResult& result);

/// Writes frames.csv, offset.csv, histogram.csv, summary.json and
/// config_resolved.json (and frames.jsonl when frames is non-null).
void write_artifacts(const RunConfig& config, const RunResult& result,
                     const std::filesystem::path& dir,
                     const std::vector<DetectionFrame>* frames = nullptr);

struct CompareReport {
  std::string name_a;
  std::string name_b;
  /// metric -> (b - a) for median, p95, p99.
  std::map<std::string, PercentileRow> deltas;
};

/// Throws MissingArtifact when a summary is absent or schemas differ.
CompareReport compare_runs(const std::filesystem::path& run_a, const std::filesystem::path& run_b);
std::string format_compare(const CompareReport& report);

}  // namespace semloc
