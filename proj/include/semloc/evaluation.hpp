/**
 * \file evaluation.hpp
 * \brief Localization error metrics and their tabulation.
 *
 * Position errors are expressed in the TRUE vehicle frame: longitudinal along
 * its x axis, lateral along y. Percentiles use the nearest-rank rule.
 */
#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "semloc/liegroup.hpp"

namespace semloc {

struct PoseErrorComponents {
  double longitudinal = 0.0;  ///< m
  double lateral = 0.0;       ///< m
  double heading = 0.0;       ///< rad, in [0, pi]
};

struct FrameError {
  double t = 0.0;
  double longitudinal = 0.0;
  double lateral = 0.0;
  double heading = 0.0;
  double offset_err = 0.0;
};

struct PercentileRow {
  double median = 0.0;
  double p95 = 0.0;
  double p99 = 0.0;
};

struct ErrorSummary {
  std::size_t count = 0;
  PercentileRow longitudinal;
  PercentileRow lateral;
  PercentileRow heading;
  PercentileRow offset;
};

PoseErrorComponents decompose_error(const Pose& t_est, const Pose& t_true);

/// Norm of the translation of t_gm_est * t_gm_true^-1.
double offset_error(const Pose& t_gm_est, const Pose& t_gm_true);

/// Nearest-rank percentile, p in (0, 100]. Throws EmptyInput.
double percentile_nearest_rank(std::vector<double> values, double p);

/// Throws EmptyInput for an empty list.
ErrorSummary summarize(const std::vector<FrameError>& errors);

/// Frames with t >= burn_in.
std::vector<FrameError> after_burn_in(const std::vector<FrameError>& errors, double burn_in);

struct Histogram {
  double bin_width = 0.0;
  std::vector<std::size_t> counts;  ///< bin i covers [i w, (i + 1) w)
};

Histogram histogram(const std::vector<double>& values, double bin_width);

/// Formats a double with the given number of significant digits.
std::string format_sig(double value, int digits);

}  // namespace semloc
