#include "semloc/pipeline.hpp"

#include <fstream>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "semloc/association.hpp"

namespace semloc {

using nlohmann::json;

namespace {

constexpr int kCsvDigits = 10;

std::string num(double v) { return format_sig(v, kCsvDigits); }

bool costs_non_increasing(const CorrectionReport& report) {
  for (const auto& [before, after] : report.costs) {
    if (after > before + 1e-9 * std::max(1.0, std::abs(before))) return false;
  }
  return true;
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << bytes;
  if (!out) throw Error("write failed for " + path.string());
}

json row_json(const PercentileRow& r) {
  return json{{"median", r.median}, {"p95", r.p95}, {"p99", r.p99}};
}

PercentileRow row_from_json(const json& j, const std::string& where) {
  try {
    return PercentileRow{j.at("median").get<double>(), j.at("p95").get<double>(),
                         j.at("p99").get<double>()};
  } catch (const json::exception&) {
    throw MissingArtifact("malformed metric row in " + where);
  }
}

json read_summary(const std::filesystem::path& dir) {
  const auto path = dir / "summary.json";
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifact("missing " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return json::parse(ss.str());
  } catch (const json::parse_error&) {
    throw MissingArtifact("unreadable " + path.string());
  }
}

}  // namespace

RunResult run_pipeline(const RunConfig& config, std::vector<DetectionFrame>* frames_out) {
  const Scenario& scenario = config.scenario;
  const SemanticMap map = generate_world(scenario);
  const std::vector<GroundTruthFrame> truth = generate_trajectory(scenario, map);
  const double dt = 1.0 / scenario.rate;
  const auto& s = config.estimator.initial_std;
  const Mat18 cov0 = initial_covariance(s.pose_trans, s.pose_rot, s.vel_lin, s.vel_ang,
                                        s.offset_trans, s.offset_rot);

  RunResult result;
  result.frames.reserve(truth.size());
  EstimatorState state;
  std::size_t gps_frames = 0;

  for (std::size_t k = 0; k < truth.size(); ++k) {
    const DetectionFrame det = simulate_frame(truth[k], k, scenario, map, config.camera);
    if (frames_out) frames_out->push_back(det);

    FrameRecord rec;
    try {
      if (k == 0) {
        if (!det.gps) throw Error("no GPS fix at the first frame");
        state = init_state(*det.gps, config.estimator.offset_guess.pose(), cov0);
        state.time = det.t;
      } else {
        state = predict(state, dt, config.noise);
      }

      const FrameAssociation assoc = associate_frame(det.light_detections, det.lane_pixels, map,
                                                     state.t_vm, config.camera, config.association);
      MeasurementBundle bundle;
      bundle.gps = det.gps;
      bundle.light_matches = assoc.lights.matches;
      bundle.lane_matches = assoc.lanes;
      bundle.wheel = det.wheel;
      bundle.dt = dt;

      CorrectionReport report;
      state = correct(state, bundle, map, config.camera, config.noise,
                      config.estimator.correction, &report);
      state.time = det.t;

      rec.light_matches = bundle.light_matches.size();
      rec.lane_observations = bundle.lane_matches.size();
      rec.gn_iterations = report.iterations;
      rec.cost_non_increasing = costs_non_increasing(report);
    } catch (const Error& e) {
      throw RunFailure(k, e.what());
    }

    rec.gps_present = det.gps.has_value();
    if (rec.gps_present) ++gps_frames;
    const PoseErrorComponents c = decompose_error(state.t_vm, truth[k].t_vm_true);
    rec.error = FrameError{det.t, c.longitudinal, c.lateral, c.heading,
                           offset_error(state.t_gm, truth[k].t_gm_true)};
    rec.cov_asymmetry = (state.cov - state.cov.transpose()).cwiseAbs().maxCoeff();
    const Mat18 sym = 0.5 * (state.cov + state.cov.transpose());
    rec.cov_min_eig = Eigen::SelfAdjointEigenSolver<Mat18>(sym, Eigen::EigenvaluesOnly)
                          .eigenvalues()
                          .minCoeff();
    rec.offset_cov_trace = state.cov.bottomRightCorner<6, 6>().trace();
    rec.t_vm_est = state.t_vm;
    rec.t_gm_est = state.t_gm;
    result.frames.push_back(rec);
  }

  result.final_state = state;
  result.gps_fraction =
      truth.empty() ? 0.0 : static_cast<double>(gps_frames) / static_cast<double>(truth.size());
  std::vector<FrameError> errors;
  errors.reserve(result.frames.size());
  for (const auto& f : result.frames) errors.push_back(f.error);
  const auto kept = after_burn_in(errors, config.estimator.burn_in);
  if (!kept.empty()) result.summary = summarize(kept);
  return result;
}

std::string frames_csv(const RunResult& result) {
  std::string out = "t,longitudinal,lateral,heading,offset_err,gps_present\n";
  for (const auto& f : result.frames) {
    const FrameError& e = f.error;
    out += num(e.t) + ',' + num(e.longitudinal) + ',' + num(e.lateral) + ',' + num(e.heading) +
           ',' + num(e.offset_err) + ',' + (f.gps_present ? "1" : "0") + '\n';
  }
  return out;
}

std::string offset_csv(const RunResult& result) {
  std::string out = "t,offset_err\n";
  for (const auto& f : result.frames) out += num(f.error.t) + ',' + num(f.error.offset_err) + '\n';
  return out;
}

std::string histogram_csv(const RunResult& result, double burn_in) {
  std::vector<FrameError> errors;
  for (const auto& f : result.frames) errors.push_back(f.error);
  const auto kept = after_burn_in(errors, burn_in);
  std::vector<double> lon, lat, head;
  for (const auto& e : kept) {
    lon.push_back(e.longitudinal);
    lat.push_back(e.lateral);
    head.push_back(e.heading);
  }
  std::string out = "metric,bin_start,bin_end,count\n";
  const auto emit = [&out](const char* name, const std::vector<double>& values, double width) {
    if (values.empty()) return;
    const Histogram h = histogram(values, width);
    for (std::size_t i = 0; i < h.counts.size(); ++i) {
      out += std::string(name) + ',' + num(i * width) + ',' + num((i + 1) * width) + ',' +
             std::to_string(h.counts[i]) + '\n';
    }
  };
  emit("longitudinal", lon, 0.01);
  emit("lateral", lat, 0.01);
  emit("heading", head, 0.001);
  return out;
}

json summary_json(const RunConfig& config, const RunResult& result) {
  const Vec6 offset_final = log_se3(result.final_state.t_gm);
  json metrics = json::object();
  metrics["longitudinal"] = row_json(result.summary.longitudinal);
  metrics["lateral"] = row_json(result.summary.lateral);
  metrics["heading"] = row_json(result.summary.heading);
  metrics["offset"] = row_json(result.summary.offset);
  return json{{"schema_version", kSchemaVersion},
              {"name", config.name},
              {"frames", result.frames.size()},
              {"burn_in_s", config.estimator.burn_in},
              {"summary_frames", result.summary.count},
              {"gps_fraction", result.gps_fraction},
              {"offset_final_error",
               result.frames.empty() ? 0.0 : result.frames.back().error.offset_err},
              {"offset_final_twist",
               json::array({offset_final(0), offset_final(1), offset_final(2), offset_final(3),
                            offset_final(4), offset_final(5)})},
              {"metrics", metrics}};
}

void write_artifacts(const RunConfig& config, const RunResult& result,
                     const std::filesystem::path& dir,
                     const std::vector<DetectionFrame>* frames) {
  std::filesystem::create_directories(dir);
  write_file(dir / "frames.csv", frames_csv(result));
  write_file(dir / "offset.csv", offset_csv(result));
  write_file(dir / "histogram.csv", histogram_csv(result, config.estimator.burn_in));
  write_file(dir / "summary.json", summary_json(config, result).dump(2) + "\n");
  write_file(dir / "config_resolved.json", config_to_json(config).dump(2) + "\n");
  if (frames) {
    std::string lines;
    for (const auto& f : *frames) lines += frame_to_json_line(f) + '\n';
    write_file(dir / "frames.jsonl", lines);
  }
}

CompareReport compare_runs(const std::filesystem::path& run_a,
                           const std::filesystem::path& run_b) {
  const json a = read_summary(run_a);
  const json b = read_summary(run_b);
  if (!a.contains("schema_version") || !b.contains("schema_version") ||
      a["schema_version"] != b["schema_version"]) {
    throw MissingArtifact("summary schema versions differ");
  }
  if (!a.contains("metrics") || !b.contains("metrics")) {
    throw MissingArtifact("summary without metrics");
  }
  CompareReport report;
  report.name_a = a.value("name", run_a.string());
  report.name_b = b.value("name", run_b.string());
  for (const auto& item : a["metrics"].items()) {
    if (!b["metrics"].contains(item.key())) {
      throw MissingArtifact("metric " + item.key() + " missing from " + run_b.string());
    }
    const PercentileRow ra = row_from_json(item.value(), run_a.string());
    const PercentileRow rb = row_from_json(b["metrics"][item.key()], run_b.string());
    report.deltas[item.key()] = PercentileRow{rb.median - ra.median, rb.p95 - ra.p95,
                                              rb.p99 - ra.p99};
  }
  return report;
}

std::string format_compare(const CompareReport& report) {
  std::string out = "delta (" + report.name_b + " - " + report.name_a + ")\n";
  out += "metric,median,p95,p99\n";
  for (const auto& [metric, row] : report.deltas) {
    out += metric + ',' + format_sig(row.median, 4) + ',' + format_sig(row.p95, 4) + ',' +
           format_sig(row.p99, 4) + '\n';
  }
  return out;
}

}  // namespace semloc
