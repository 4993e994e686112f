#include "semloc/evaluation.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

#include "semloc/errors.hpp"

namespace semloc {

PoseErrorComponents decompose_error(const Pose& t_est, const Pose& t_true) {
  // Estimated vehicle origin expressed in the true vehicle frame.
  const Pose rel = t_true * t_est.inverse();
  const Vec3 d = rel.translation();
  const Mat3 r = rel.rotation();
  PoseErrorComponents out;
  out.longitudinal = std::abs(d.x());
  out.lateral = std::abs(d.y());
  out.heading = std::abs(std::atan2(r(1, 0), r(0, 0)));
  return out;
}

double offset_error(const Pose& t_gm_est, const Pose& t_gm_true) {
  return (t_gm_est * t_gm_true.inverse()).translation().norm();
}

double percentile_nearest_rank(std::vector<double> values, double p) {
  if (values.empty()) throw EmptyInput("percentile of an empty list");
  std::sort(values.begin(), values.end());
  const double n = static_cast<double>(values.size());
  auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * n - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, values.size());
  return values[rank - 1];
}

ErrorSummary summarize(const std::vector<FrameError>& errors) {
  if (errors.empty()) throw EmptyInput("cannot summarize an empty error list");
  std::array<std::vector<double>, 4> cols;
  for (const auto& e : errors) {
    cols[0].push_back(e.longitudinal);
    cols[1].push_back(e.lateral);
    cols[2].push_back(e.heading);
    cols[3].push_back(e.offset_err);
  }
  const auto row = [](const std::vector<double>& v) {
    return PercentileRow{percentile_nearest_rank(v, 50.0), percentile_nearest_rank(v, 95.0),
                         percentile_nearest_rank(v, 99.0)};
  };
  ErrorSummary s;
  s.count = errors.size();
  s.longitudinal = row(cols[0]);
  s.lateral = row(cols[1]);
  s.heading = row(cols[2]);
  s.offset = row(cols[3]);
  return s;
}

std::vector<FrameError> after_burn_in(const std::vector<FrameError>& errors, double burn_in) {
  std::vector<FrameError> out;
  std::copy_if(errors.begin(), errors.end(), std::back_inserter(out),
               [burn_in](const FrameError& e) { return e.t >= burn_in; });
  return out;
}

Histogram histogram(const std::vector<double>& values, double bin_width) {
  Histogram h;
  h.bin_width = bin_width;
  for (double v : values) {
    const auto bin = static_cast<std::size_t>(std::floor(v / bin_width));
    if (bin >= h.counts.size()) h.counts.resize(bin + 1, 0);
    ++h.counts[bin];
  }
  return h;
}

std::string format_sig(double value, int digits) {
  char buf[64];
  const auto res =
      std::to_chars(buf, buf + sizeof(buf), value, std::chars_format::general, digits);
  return std::string(buf, res.ptr);
}

}  // namespace semloc
