#include "semloc/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Cholesky>
#include <json.hpp>

#include "semloc/errors.hpp"

namespace semloc {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

Mat3 rot_z(double yaw) {
  Mat3 r;
  r << std::cos(yaw), -std::sin(yaw), 0.0,
       std::sin(yaw), std::cos(yaw), 0.0,
       0.0, 0.0, 1.0;
  return r;
}

// Polyline from a to b with vertices at most `spacing` apart.
std::vector<Vec3> straight_polyline(const Vec3& a, const Vec3& b, double spacing) {
  const double len = (b - a).norm();
  const int n = std::max(1, static_cast<int>(std::ceil(len / spacing - 1e-9)));
  std::vector<Vec3> out;
  out.reserve(n + 1);
  for (int i = 0; i <= n; ++i) out.push_back(a + (b - a) * (static_cast<double>(i) / n));
  return out;
}

Pixel uniform_pixel(CounterRng& rng, const CameraModel& cam) {
  const double u = rng.uniform() * cam.width;
  const double v = rng.uniform() * cam.height;
  return Pixel(u, v);
}

}  // namespace

CounterRng::CounterRng(std::uint64_t seed, std::uint64_t frame, std::uint64_t channel)
    : state_(splitmix(seed ^ splitmix(frame ^ splitmix(channel)))) {}

std::uint64_t CounterRng::next_u64() {
  state_ += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = state_;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double CounterRng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double CounterRng::normal() {
  const double u1 = 1.0 - uniform();  // (0, 1]
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

void WorldParams::validate() const {
  if (blocks_x < 1 || blocks_y < 1) throw ValidationError("world needs at least 1x1 blocks");
  if (lanes_per_direction < 1) throw ValidationError("lanes_per_direction must be >= 1");
  if (lights_per_intersection < 0 || lights_per_intersection > 4) {
    throw ValidationError("lights_per_intersection must be in [0, 4]");
  }
  if (!(block_size > 0.0) || !(lane_width > 0.0) || !(vertex_spacing > 0.0)) {
    throw ValidationError("world lengths must be > 0");
  }
  const double trim = lane_width * lanes_per_direction + marking_margin;
  if (block_size <= 2.0 * trim + 1.0) throw ValidationError("block_size too small for the roads");
  if (!(turn_radius > 0.0) || 2.0 * turn_radius >= block_size) {
    throw ValidationError("turn_radius must be in (0, block_size / 2)");
  }
  if (!(turn_speed > 0.0) || cruise_speed < turn_speed || !(max_accel > 0.0)) {
    throw ValidationError("speed profile needs 0 < turn_speed <= cruise_speed and max_accel > 0");
  }
  if (start_arc < 0.0) throw ValidationError("start_arc must be >= 0");
}

void Scenario::validate() const {
  world.validate();
  if (!(rate > 0.0)) throw ValidationError("scenario rate must be > 0");
  if (!(duration > 0.0)) throw ValidationError("scenario duration must be > 0");
  double prev_end = 0.0;
  for (std::size_t i = 0; i < dropouts.size(); ++i) {
    const auto& [a, b] = dropouts[i];
    if (!(a >= 0.0 && b <= duration && a < b)) {
      throw ValidationError("dropout intervals must lie within [0, duration]");
    }
    if (i > 0 && a < prev_end) {
      throw ValidationError("dropout intervals must be sorted and non-overlapping");
    }
    prev_end = b;
  }
  if (!(outlier_rate >= 0.0 && outlier_rate <= 1.0)) {
    throw ValidationError("outlier_rate must be in [0, 1]");
  }
  const double stds[] = {light_noise_px, lane_noise_px, gps_pos_std,
                         gps_rot_std,    wheel_v_std,   wheel_omega_std};
  for (double s : stds) {
    if (!(s >= 0.0)) throw ValidationError("noise standard deviations must be >= 0");
  }
  if (!(lane_sample_spacing > 0.0)) throw ValidationError("lane_sample_spacing must be > 0");
}

std::size_t Scenario::frame_count() const {
  return static_cast<std::size_t>(std::llround(duration * rate));
}

bool Scenario::gps_available(double t) const {
  return std::none_of(dropouts.begin(), dropouts.end(),
                      [t](const auto& d) { return t >= d.first && t < d.second; });
}

Route::Route(const WorldParams& world) : world_(world) {
  world.validate();
  const double w = world.blocks_x * world.block_size;
  const double h = world.blocks_y * world.block_size;
  const double d = world.lane_width * (world.lanes_per_direction - 0.5);
  const double r = world.turn_radius;
  const double sides[4] = {w + 2.0 * d, h + 2.0 * d, w + 2.0 * d, h + 2.0 * d};
  Vec2 pos(-d + r, -d);
  double heading = 0.0;
  double s = 0.0;
  for (int i = 0; i < 4; ++i) {
    const double straight = sides[i] - 2.0 * r;
    pieces_.push_back({pos, heading, straight, 0.0, s});
    s += straight;
    pos += straight * Vec2(std::cos(heading), std::sin(heading));
    const double arc = 0.5 * std::numbers::pi * r;
    pieces_.push_back({pos, heading, arc, 1.0 / r, s});
    s += arc;
    // Left quarter turn of radius r.
    pos += r * Vec2(std::sin(heading + 0.5 * std::numbers::pi) - std::sin(heading),
                    -std::cos(heading + 0.5 * std::numbers::pi) + std::cos(heading));
    heading += 0.5 * std::numbers::pi;
  }
  length_ = s;
}

double Route::wrap(double s) const {
  double x = std::fmod(s, length_);
  if (x < 0.0) x += length_;
  return x;
}

const Route::Piece& Route::piece_at(double s) const {
  const double x = wrap(s);
  auto it = std::upper_bound(pieces_.begin(), pieces_.end(), x,
                             [](double v, const Piece& p) { return v < p.s0; });
  return *std::prev(it);
}

Pose Route::pose_at(double s) const {
  const Piece& p = piece_at(s);
  const double u = wrap(s) - p.s0;
  Vec2 pos;
  double heading = p.heading;
  if (p.curvature == 0.0) {
    pos = p.start + u * Vec2(std::cos(p.heading), std::sin(p.heading));
  } else {
    heading = p.heading + p.curvature * u;
    pos = p.start + (1.0 / p.curvature) *
                        Vec2(std::sin(heading) - std::sin(p.heading),
                             -std::cos(heading) + std::cos(p.heading));
  }
  const Pose t_mv(rot_z(heading), Vec3(pos.x(), pos.y(), 0.0));
  return t_mv.inverse();
}

double Route::curvature_at(double s) const { return piece_at(s).curvature; }

double Route::distance_to_turn(double s) const {
  const double x = wrap(s);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& p : pieces_) {
    if (p.curvature == 0.0) continue;
    const double a = p.s0;
    const double b = p.s0 + p.length;
    if (x >= a && x <= b) return 0.0;
    const double before = x < a ? a - x : a + length_ - x;
    const double after = x > b ? x - b : x + length_ - b;
    best = std::min({best, before, after});
  }
  return best;
}

double Route::speed_at(double s) const {
  const double d = distance_to_turn(s);
  const double v_turn = world_.turn_speed;
  return std::min(world_.cruise_speed, std::sqrt(v_turn * v_turn + 2.0 * world_.max_accel * d));
}

SemanticMap generate_world(const Scenario& scenario) {
  const WorldParams& w = scenario.world;
  w.validate();
  const double b = w.block_size;
  const double trim = w.lane_width * w.lanes_per_direction + w.marking_margin;
  std::vector<LaneBoundary> lanes;
  std::int64_t next_lane = 0;

  const auto add_road = [&](const Vec2& from, const Vec2& to) {
    const Vec2 dir = (to - from).normalized();
    const Vec2 left(-dir.y(), dir.x());
    for (int k = -w.lanes_per_direction; k <= w.lanes_per_direction; ++k) {
      const Vec2 off = left * (k * w.lane_width);
      const Vec2 a = from + dir * trim + off;
      const Vec2 c = to - dir * trim + off;
      lanes.push_back({next_lane++, straight_polyline(Vec3(a.x(), a.y(), 0.0),
                                                      Vec3(c.x(), c.y(), 0.0), w.vertex_spacing)});
    }
  };
  // Roads along x, then along y.
  for (int j = 0; j <= w.blocks_y; ++j) {
    for (int i = 0; i < w.blocks_x; ++i) add_road(Vec2(i * b, j * b), Vec2((i + 1) * b, j * b));
  }
  for (int i = 0; i <= w.blocks_x; ++i) {
    for (int j = 0; j < w.blocks_y; ++j) add_road(Vec2(i * b, j * b), Vec2(i * b, (j + 1) * b));
  }

  std::vector<TrafficLight> lights;
  std::int64_t next_light = 0;
  const double c = w.light_corner_offset;
  const Vec2 corners[4] = {Vec2(c, c), Vec2(-c, c), Vec2(-c, -c), Vec2(c, -c)};
  for (int j = 0; j <= w.blocks_y; ++j) {
    for (int i = 0; i <= w.blocks_x; ++i) {
      for (int k = 0; k < w.lights_per_intersection; ++k) {
        const Vec2 p = Vec2(i * b, j * b) + corners[k];
        lights.push_back({next_light++, Vec3(p.x(), p.y(), w.light_height)});
      }
    }
  }
  return SemanticMap(std::move(lanes), std::move(lights));
}

std::vector<GroundTruthFrame> generate_trajectory(const Scenario& scenario,
                                                  const SemanticMap& /*map*/) {
  scenario.validate();
  const Route route(scenario.world);
  const std::size_t n = scenario.frame_count();
  const double dt = 1.0 / scenario.rate;
  constexpr int kSubsteps = 20;

  // Arc length at every frame time (plus one extra for the last velocity).
  std::vector<double> arc(n + 1, 0.0);
  double s = 0.0;
  const double s_start = scenario.world.start_arc;
  const double h = dt / kSubsteps;
  for (std::size_t k = 1; k <= n; ++k) {
    for (int i = 0; i < kSubsteps; ++i) {
      const double k1 = route.speed_at(s_start + s);
      const double k2 = route.speed_at(s_start + s + 0.5 * h * k1);
      const double k3 = route.speed_at(s_start + s + 0.5 * h * k2);
      const double k4 = route.speed_at(s_start + s + h * k3);
      s += h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0;
    }
    arc[k] = s;
  }

  Eigen::LLT<Mat6> drift_chol(scenario.offset_drift * dt);
  const bool drift = !scenario.offset_drift.isZero(0.0);
  std::vector<GroundTruthFrame> frames(n);
  Pose t_gm = scenario.offset_true;
  Pose next = route.pose_at(s_start + arc[0]);
  for (std::size_t k = 0; k < n; ++k) {
    GroundTruthFrame& f = frames[k];
    f.t = scenario.frame_time(k);
    f.arc = arc[k];
    f.t_vm_true = next;
    next = route.pose_at(s_start + arc[k + 1]);
    f.varpi_true = log_se3(next * f.t_vm_true.inverse()) / dt;
    if (drift && k > 0) {
      CounterRng rng(scenario.seed, k, static_cast<std::uint64_t>(Channel::kOffsetDrift));
      Vec6 z;
      for (int i = 0; i < 6; ++i) z(i) = rng.normal();
      t_gm = exp_se3(drift_chol.matrixL() * z) * t_gm;
    }
    f.t_gm_true = t_gm;
  }
  return frames;
}

namespace {

// Unit-variance pixel noise, redrawn until it lies within 3 sigma of zero.
Pixel pixel_noise(CounterRng& rng) {
  for (;;) {
    const Pixel n(rng.normal(), rng.normal());
    if (n.squaredNorm() <= 9.0) return n;
  }
}

}  // namespace

DetectionFrame simulate_frame(const GroundTruthFrame& truth, std::size_t index,
                              const Scenario& scenario, const SemanticMap& map,
                              const CameraModel& cam) {
  DetectionFrame out;
  out.index = index;
  out.t = truth.t;
  const auto rng_for = [&](Channel c) {
    return CounterRng(scenario.seed, index, static_cast<std::uint64_t>(c));
  };

  {
    CounterRng rng = rng_for(Channel::kGps);
    Vec6 n;
    for (int i = 0; i < 3; ++i) n(i) = scenario.gps_pos_std * rng.normal();
    for (int i = 3; i < 6; ++i) n(i) = scenario.gps_rot_std * rng.normal();
    if (scenario.gps_available(truth.t)) {
      out.gps = exp_se3(n) * truth.t_vm_true * truth.t_gm_true.inverse();
    }
  }

  const Vec3 position = vehicle_position(truth.t_vm_true);
  {
    CounterRng rng = rng_for(Channel::kLight);
    CounterRng spurious = rng_for(Channel::kLightOutlier);
    for (const auto& light : nearby_lights(map, position, scenario.light_detection_range)) {
      Pixel px;
      try {
        px = project_point(light.position, truth.t_vm_true, cam);
      } catch (const BehindCamera&) {
        continue;
      }
      if (!cam.in_image(px)) continue;
      out.light_detections.push_back(px + scenario.light_noise_px * pixel_noise(rng));
      if (spurious.bernoulli(scenario.outlier_rate)) {
        out.light_detections.push_back(uniform_pixel(spurious, cam));
      }
    }
    // One extra trial so frames without any light can still see false positives.
    if (spurious.bernoulli(scenario.outlier_rate)) {
      out.light_detections.push_back(uniform_pixel(spurious, cam));
    }
  }

  {
    CounterRng rng = rng_for(Channel::kLane);
    CounterRng spurious = rng_for(Channel::kLaneOutlier);
    const Pose t_cm = cam.t_cv * truth.t_vm_true;
    const double range = scenario.lane_detection_range;
    for (const auto& lane : nearby_lanes(map, position, range)) {
      for (std::size_t i = 0; i + 1 < lane.vertices.size(); ++i) {
        const Vec3& a = lane.vertices[i];
        const Vec3& b = lane.vertices[i + 1];
        if (point_segment_distance(position, a, b) > range) continue;
        const double len = (b - a).norm();
        const int steps = static_cast<int>(std::floor(len / scenario.lane_sample_spacing));
        for (int k = 0; k < steps; ++k) {
          const Vec3 p = a + (b - a) * (k * scenario.lane_sample_spacing / len);
          const Vec3 pc = t_cm * p;
          if (pc.z() <= 0.5 || pc.z() > range) continue;
          const Pixel px(cam.fx * pc.x() / pc.z() + cam.cx, cam.fy * pc.y() / pc.z() + cam.cy);
          if (!cam.in_image(px)) continue;
          out.lane_pixels.push_back(px + scenario.lane_noise_px * pixel_noise(rng));
          if (spurious.bernoulli(scenario.outlier_rate)) {
            out.lane_pixels.push_back(uniform_pixel(spurious, cam));
          }
        }
      }
    }
  }

  {
    CounterRng rng = rng_for(Channel::kWheel);
    out.wheel.v = -truth.varpi_true(0) + scenario.wheel_v_std * rng.normal();
    out.wheel.omega = -truth.varpi_true(5) + scenario.wheel_omega_std * rng.normal();
  }
  return out;
}

std::string frame_to_json_line(const DetectionFrame& frame) {
  std::string out = "{\"index\":" + std::to_string(frame.index) + ",\"t\":" + format_double(frame.t);
  out += ",\"gps\":";
  if (frame.gps) {
    out += '[';
    for (int r = 0; r < 4; ++r) {
      for (int c = 0; c < 4; ++c) {
        if (r + c > 0) out += ',';
        out += format_double(frame.gps->matrix()(r, c));
      }
    }
    out += ']';
  } else {
    out += "null";
  }
  const auto pixels = [&](const char* key, const std::vector<Pixel>& px) {
    out += ",\"";
    out += key;
    out += "\":[";
    for (std::size_t i = 0; i < px.size(); ++i) {
      if (i > 0) out += ',';
      out += '[' + format_double(px[i].x()) + ',' + format_double(px[i].y()) + ']';
    }
    out += ']';
  };
  pixels("lights", frame.light_detections);
  pixels("lanes", frame.lane_pixels);
  out += ",\"wheel\":[" + format_double(frame.wheel.v) + ',' + format_double(frame.wheel.omega) +
         "]}";
  return out;
}

DetectionFrame frame_from_json_line(const std::string& line) {
  using nlohmann::json;
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("frame line is not valid JSON: ") + e.what());
  }
  try {
    DetectionFrame f;
    f.index = j.at("index").get<std::size_t>();
    f.t = j.at("t").get<double>();
    if (!j.at("gps").is_null()) {
      const auto& g = j.at("gps");
      if (g.size() != 16) throw ParseError("gps must hold 16 numbers");
      Mat4 m;
      for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < 4; ++c) m(r, c) = g.at(r * 4 + c).get<double>();
      }
      f.gps = Pose::FromMatrix(m);
    }
    for (const auto& p : j.at("lights")) f.light_detections.emplace_back(p.at(0), p.at(1));
    for (const auto& p : j.at("lanes")) f.lane_pixels.emplace_back(p.at(0), p.at(1));
    f.wheel.v = j.at("wheel").at(0).get<double>();
    f.wheel.omega = j.at("wheel").at(1).get<double>();
    return f;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed frame line: ") + e.what());
  }
}

}  // namespace semloc
