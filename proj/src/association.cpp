#include "semloc/association.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <tuple>

#include <Eigen/Eigenvalues>

#include "semloc/errors.hpp"

namespace semloc {

namespace {

bool pixel_less(const Pixel& a, const Pixel& b) {
  return a.x() != b.x() ? a.x() < b.x() : a.y() < b.y();
}

double angle_from_horizontal_deg(const ImageLine& line) {
  const Pixel d = line.b - line.a;
  return std::atan2(std::abs(d.y()), std::abs(d.x())) * 180.0 / std::numbers::pi;
}

}  // namespace

std::vector<Pixel> subsample_pixels(const std::vector<Pixel>& pixels, int stride,
                                    double bottom_fraction, int image_height) {
  if (stride < 1) throw ValidationError("subsampling stride must be >= 1");
  const double v_min = (1.0 - bottom_fraction) * image_height;
  std::vector<Pixel> out;
  std::size_t survivor = 0;
  for (const auto& p : pixels) {
    if (p.y() < v_min) continue;
    if (survivor % static_cast<std::size_t>(stride) == 0) out.push_back(p);
    ++survivor;
  }
  return out;
}

LightAssociation associate_lights(const std::vector<Pixel>& detections,
                                  const std::vector<LightCandidate>& candidates, double gate,
                                  int icp_iters) {
  if (!(gate > 0.0)) throw ValidationError("light gate must be > 0");
  LightAssociation out;
  if (candidates.empty()) {
    out.outliers = detections;
    std::sort(out.outliers.begin(), out.outliers.end(), pixel_less);
    return out;
  }

  // Nearest candidate index for a query, smaller light id on exact ties.
  const auto nearest = [&](const Pixel& q) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < candidates.size(); ++j) {
      const double d = (candidates[j].projected - q).norm();
      if (d < best_d || (d == best_d && candidates[j].light_id < candidates[best].light_id)) {
        best = j;
        best_d = d;
      }
    }
    return std::make_pair(best, best_d);
  };

  const double capture = 2.0 * gate;
  Pixel shift = Pixel::Zero();
  for (int it = 0; it < icp_iters; ++it) {
    Pixel sum = Pixel::Zero();
    int count = 0;
    for (const auto& det : detections) {
      const auto [j, d] = nearest(det + shift);
      if (d < capture) {
        sum += candidates[j].projected - (det + shift);
        ++count;
      }
    }
    if (count == 0) break;
    shift += sum / count;
  }
  out.shift = shift;

  struct Pair {
    double dist;
    std::size_t det;
    std::size_t cand;
  };
  std::vector<Pair> pairs;
  for (std::size_t i = 0; i < detections.size(); ++i) {
    for (std::size_t j = 0; j < candidates.size(); ++j) {
      const double d = (candidates[j].projected - (detections[i] + shift)).norm();
      if (d <= gate) pairs.push_back({d, i, j});
    }
  }
  std::sort(pairs.begin(), pairs.end(), [&](const Pair& a, const Pair& b) {
    if (a.dist != b.dist) return a.dist < b.dist;
    if (candidates[a.cand].light_id != candidates[b.cand].light_id) {
      return candidates[a.cand].light_id < candidates[b.cand].light_id;
    }
    return pixel_less(detections[a.det], detections[b.det]);
  });
  std::vector<bool> det_used(detections.size(), false);
  std::vector<bool> cand_used(candidates.size(), false);
  for (const auto& p : pairs) {
    if (det_used[p.det] || cand_used[p.cand]) continue;
    det_used[p.det] = true;
    cand_used[p.cand] = true;
    out.matches.push_back(
        {detections[p.det], candidates[p.cand].light_id, candidates[p.cand].projected});
  }
  for (std::size_t i = 0; i < detections.size(); ++i) {
    if (!det_used[i]) out.outliers.push_back(detections[i]);
  }
  std::sort(out.matches.begin(), out.matches.end(), [](const LightMatch& a, const LightMatch& b) {
    return a.light_id < b.light_id;
  });
  std::sort(out.outliers.begin(), out.outliers.end(), pixel_less);
  return out;
}

double point_segment_distance_2d(const Pixel& p, const Pixel& a, const Pixel& b) {
  const Pixel d = b - a;
  const double len2 = d.squaredNorm();
  const double s = len2 > 0.0 ? std::clamp((p - a).dot(d) / len2, 0.0, 1.0) : 0.0;
  return (a + s * d - p).norm();
}

LanePixelAssignment match_lane_pixels(const std::vector<Pixel>& pixels,
                                      const std::vector<ProjectedLane>& projected, double gate) {
  if (!(gate > 0.0)) throw ValidationError("lane gate must be > 0");
  std::vector<const ProjectedLane*> order;
  for (const auto& pl : projected) order.push_back(&pl);
  std::sort(order.begin(), order.end(),
            [](const ProjectedLane* a, const ProjectedLane* b) { return a->lane_id < b->lane_id; });

  LanePixelAssignment out;
  for (const auto& px : pixels) {
    const ProjectedLane* best_lane = nullptr;
    std::size_t best_seg = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (const ProjectedLane* pl : order) {
      for (const auto& seg : pl->segments) {
        const double d = point_segment_distance_2d(px, seg.line.a, seg.line.b);
        // Lanes are visited by ascending id, so a later lane must be strictly
        // closer by more than the tie tolerance to take over.
        const bool better = best_lane == nullptr ? d < best_d
                            : pl == best_lane    ? d < best_d
                                                 : d < best_d - 1e-9;
        if (better) {
          best_lane = pl;
          best_seg = seg.segment_index;
          best_d = d;
        }
      }
    }
    if (best_lane == nullptr || best_d > gate) {
      out.outliers.push_back(px);
    } else {
      out.by_lane[best_lane->lane_id].push_back({px, best_seg, best_d});
    }
  }
  return out;
}

ImageLine fit_line(const std::vector<Pixel>& pixels) {
  if (pixels.size() < 2) throw DegenerateInput("line fit needs at least 2 pixels");
  Pixel mean = Pixel::Zero();
  for (const auto& p : pixels) mean += p;
  mean /= static_cast<double>(pixels.size());
  double spread = 0.0;
  Eigen::Matrix2d scatter = Eigen::Matrix2d::Zero();
  for (const auto& p : pixels) {
    const Pixel d = p - mean;
    spread = std::max(spread, d.norm());
    scatter += d * d.transpose();
  }
  if (spread <= 1e-6) throw DegenerateInput("all pixels coincide");
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(scatter);
  Pixel dir = eig.eigenvectors().col(1);  // largest eigenvalue
  if (dir.y() < 0.0 || (dir.y() == 0.0 && dir.x() < 0.0)) dir = -dir;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (const auto& p : pixels) {
    const double s = (p - mean).dot(dir);
    lo = std::min(lo, s);
    hi = std::max(hi, s);
  }
  return ImageLine(mean + lo * dir, mean + hi * dir);
}

double line_residual(const ImageLine& line, const std::vector<Pixel>& pixels) {
  const Pixel d = (line.b - line.a).normalized();
  const Pixel n(-d.y(), d.x());
  double sum = 0.0;
  for (const auto& p : pixels) {
    const double e = (p - line.a).dot(n);
    sum += e * e;
  }
  return sum;
}

std::vector<LightCandidate> light_candidates(const SemanticMap& map, const Pose& t_vm,
                                             const CameraModel& cam, double radius,
                                             double margin) {
  std::vector<LightCandidate> out;
  for (const auto& light : nearby_lights(map, vehicle_position(t_vm), radius)) {
    Pixel px;
    try {
      px = project_point(light.position, t_vm, cam);
    } catch (const BehindCamera&) {
      continue;
    }
    if (px.x() < -margin || px.x() > cam.width + margin || px.y() < -margin ||
        px.y() > cam.height + margin) {
      continue;
    }
    out.push_back({light.id, px});
  }
  return out;
}

std::vector<ProjectedLane> project_lanes(const SemanticMap& map, const Pose& t_vm,
                                         const CameraModel& cam, double radius) {
  std::vector<ProjectedLane> out;
  for (const auto& lane : nearby_lanes(map, vehicle_position(t_vm), radius)) {
    auto segs = project_polyline(lane.vertices, t_vm, cam);
    if (!segs.empty()) out.push_back({lane.id, std::move(segs)});
  }
  return out;
}

std::vector<LaneObservation> build_lane_observations(const LanePixelAssignment& assignment,
                                                     const std::vector<ProjectedLane>& projected,
                                                     const CameraModel& cam,
                                                     const AssociationOptions& opts) {
  std::vector<LaneObservation> out;
  for (const auto& [lane_id, assigned] : assignment.by_lane) {
    if (assigned.size() < std::max<std::size_t>(opts.min_lane_support, 2)) continue;
    const auto pl = std::find_if(projected.begin(), projected.end(),
                                 [id = lane_id](const ProjectedLane& p) { return p.lane_id == id; });
    if (pl == projected.end()) continue;

    // Segment carrying the most pixels, lower index on ties.
    std::map<std::size_t, std::size_t> votes;
    for (const auto& a : assigned) ++votes[a.segment_index];
    std::size_t seg_index = votes.begin()->first;
    std::size_t seg_votes = 0;
    for (const auto& [idx, n] : votes) {
      if (n > seg_votes) {
        seg_index = idx;
        seg_votes = n;
      }
    }
    const auto seg = std::find_if(pl->segments.begin(), pl->segments.end(),
                                  [&](const ImageSegment& s) { return s.segment_index == seg_index; });
    if (seg == pl->segments.end()) continue;

    std::vector<Pixel> pts;
    pts.reserve(assigned.size());
    for (const auto& a : assigned) pts.push_back(a.pixel);
    ImageLine fitted;
    try {
      fitted = fit_line(pts);
    } catch (const DegenerateInput&) {
      continue;
    }
    if (angle_from_horizontal_deg(seg->line) < opts.min_line_angle_deg ||
        angle_from_horizontal_deg(fitted) < opts.min_line_angle_deg) {
      continue;
    }

    const double v_lo = std::min(seg->line.a.y(), seg->line.b.y());
    const double v_hi = std::max(seg->line.a.y(), seg->line.b.y());
    Vec2 rows = opts.lane_row_fractions * static_cast<double>(cam.height);
    rows(0) = std::clamp(rows(0), v_lo, v_hi);
    rows(1) = std::clamp(rows(1), v_lo, v_hi);
    if (std::abs(rows(1) - rows(0)) < opts.min_row_separation) continue;

    LaneObservation obs;
    obs.match.lane_id = lane_id;
    obs.match.segment_index = seg_index;
    obs.match.fitted = fitted;
    obs.match.projected_segment = seg->line;
    obs.match.support = assigned.size();
    obs.y_rows = rows;
    out.push_back(obs);
  }
  return out;
}

FrameAssociation associate_frame(const std::vector<Pixel>& light_detections,
                                 const std::vector<Pixel>& lane_pixels, const SemanticMap& map,
                                 const Pose& t_vm, const CameraModel& cam,
                                 const AssociationOptions& opts) {
  FrameAssociation out;
  const auto candidates = light_candidates(map, t_vm, cam, opts.light_radius, opts.light_gate);
  out.lights = associate_lights(light_detections, candidates, opts.light_gate, opts.icp_iters);

  const auto pixels =
      subsample_pixels(lane_pixels, opts.lane_stride, opts.lane_bottom_fraction, cam.height);
  out.lane_pixels_used = pixels.size();
  const auto projected = project_lanes(map, t_vm, cam, opts.lane_radius);
  const auto assignment = match_lane_pixels(pixels, projected, opts.lane_gate);
  out.lane_outliers = assignment.outliers;
  out.lanes = build_lane_observations(assignment, projected, cam, opts);
  return out;
}

}  // namespace semloc
