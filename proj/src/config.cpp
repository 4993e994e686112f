#include "semloc/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "semloc/errors.hpp"

namespace semloc {

using nlohmann::json;

namespace {

// Reads the keys of one JSON object and rejects any key that was not asked for.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ParseError(path_ + " must be an object");
  }

  bool has(const char* key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  const json& at(const char* key) { return j_.at(key); }

  void number(const char* key, double& out) {
    if (!has(key)) return;
    if (!j_[key].is_number()) throw ParseError(where(key) + " must be a number");
    out = j_[key].get<double>();
  }

  void integer(const char* key, int& out) {
    if (!has(key)) return;
    if (!j_[key].is_number_integer()) throw ParseError(where(key) + " must be an integer");
    out = j_[key].get<int>();
  }

  void unsigned64(const char* key, std::uint64_t& out) {
    if (!has(key)) return;
    if (!j_[key].is_number_unsigned()) throw ParseError(where(key) + " must be a non-negative integer");
    out = j_[key].get<std::uint64_t>();
  }

  void size(const char* key, std::size_t& out) {
    std::uint64_t v = out;
    unsigned64(key, v);
    out = static_cast<std::size_t>(v);
  }

  void boolean(const char* key, bool& out) {
    if (!has(key)) return;
    if (!j_[key].is_boolean()) throw ParseError(where(key) + " must be a boolean");
    out = j_[key].get<bool>();
  }

  void string(const char* key, std::string& out) {
    if (!has(key)) return;
    if (!j_[key].is_string()) throw ParseError(where(key) + " must be a string");
    out = j_[key].get<std::string>();
  }

  template <int N>
  void vector(const char* key, Eigen::Matrix<double, N, 1>& out) {
    if (!has(key)) return;
    const json& a = j_[key];
    if (!a.is_array() || a.size() != static_cast<std::size_t>(N)) {
      throw ParseError(where(key) + " must be an array of " + std::to_string(N) + " numbers");
    }
    for (int i = 0; i < N; ++i) {
      if (!a[i].is_number()) throw ParseError(where(key) + " must hold numbers");
      out(i) = a[i].get<double>();
    }
  }

  template <int N>
  void diagonal(const char* key, Eigen::Matrix<double, N, N>& out) {
    if (!has(key)) return;
    Eigen::Matrix<double, N, 1> d = out.diagonal();
    vector<N>(key, d);
    out = d.asDiagonal();
  }

  std::string where(const char* key) const { return path_ + "." + key; }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!seen_.count(item.key())) throw ParseError("unknown key " + path_ + "." + item.key());
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <int N>
json to_array(const Eigen::Matrix<double, N, 1>& v) {
  json a = json::array();
  for (int i = 0; i < N; ++i) a.push_back(v(i));
  return a;
}

template <int N>
json diag_array(const Eigen::Matrix<double, N, N>& m) {
  const Eigen::Matrix<double, N, 1> d = m.diagonal();
  return to_array<N>(d);
}

void read_pose_spec(ObjectReader& parent, const char* key, PoseSpec& out) {
  if (!parent.has(key)) return;
  ObjectReader r(parent.at(key), parent.where(key));
  r.vector<3>("translation", out.translation);
  r.vector<3>("rotation_vector", out.rotation_vector);
  r.finish();
}

json pose_spec_json(const PoseSpec& p) {
  return json{{"translation", to_array<3>(p.translation)},
              {"rotation_vector", to_array<3>(p.rotation_vector)}};
}

void read_world(ObjectReader& parent, WorldParams& w) {
  if (!parent.has("world")) return;
  ObjectReader r(parent.at("world"), parent.where("world"));
  r.integer("blocks_x", w.blocks_x);
  r.integer("blocks_y", w.blocks_y);
  r.number("block_size", w.block_size);
  r.number("lane_width", w.lane_width);
  r.integer("lanes_per_direction", w.lanes_per_direction);
  r.integer("lights_per_intersection", w.lights_per_intersection);
  r.number("light_height", w.light_height);
  r.number("light_corner_offset", w.light_corner_offset);
  r.number("marking_margin", w.marking_margin);
  r.number("vertex_spacing", w.vertex_spacing);
  r.number("turn_radius", w.turn_radius);
  r.number("cruise_speed", w.cruise_speed);
  r.number("turn_speed", w.turn_speed);
  r.number("max_accel", w.max_accel);
  r.number("start_arc", w.start_arc);
  r.finish();
}

void read_scenario(ObjectReader& parent, RunConfig& c) {
  if (!parent.has("scenario")) return;
  ObjectReader r(parent.at("scenario"), "scenario");
  Scenario& s = c.scenario;
  r.unsigned64("seed", s.seed);
  r.number("duration", s.duration);
  r.number("rate", s.rate);
  read_pose_spec(r, "offset_true", c.offset_true);
  r.vector<6>("offset_drift", c.offset_drift_diag);
  if (r.has("dropouts")) {
    const json& d = r.at("dropouts");
    if (!d.is_array()) throw ParseError("scenario.dropouts must be an array");
    s.dropouts.clear();
    for (const auto& iv : d) {
      if (!iv.is_array() || iv.size() != 2 || !iv[0].is_number() || !iv[1].is_number()) {
        throw ParseError("scenario.dropouts entries must be [start, end]");
      }
      s.dropouts.emplace_back(iv[0].get<double>(), iv[1].get<double>());
    }
  }
  r.number("light_noise_px", s.light_noise_px);
  r.number("lane_noise_px", s.lane_noise_px);
  r.number("gps_pos_std", s.gps_pos_std);
  r.number("gps_rot_std", s.gps_rot_std);
  r.number("wheel_v_std", s.wheel_v_std);
  r.number("wheel_omega_std", s.wheel_omega_std);
  r.number("outlier_rate", s.outlier_rate);
  r.number("light_detection_range", s.light_detection_range);
  r.number("lane_detection_range", s.lane_detection_range);
  r.number("lane_sample_spacing", s.lane_sample_spacing);
  read_world(r, s.world);
  r.finish();
}

void read_camera(ObjectReader& parent, CameraModel& cam) {
  if (!parent.has("camera")) return;
  ObjectReader r(parent.at("camera"), "camera");
  r.number("fx", cam.fx);
  r.number("fy", cam.fy);
  r.number("cx", cam.cx);
  r.number("cy", cam.cy);
  r.integer("width", cam.width);
  r.integer("height", cam.height);
  if (r.has("t_cv")) {
    const json& a = r.at("t_cv");
    if (!a.is_array() || a.size() != 16) {
      throw ParseError("camera.t_cv must be 16 numbers (row-major 4x4)");
    }
    Mat4 m;
    for (int i = 0; i < 16; ++i) {
      if (!a[i].is_number()) throw ParseError("camera.t_cv must hold numbers");
      m(i / 4, i % 4) = a[i].get<double>();
    }
    cam.t_cv = Pose::FromMatrix(m);
  }
  r.finish();
}

void read_noise(ObjectReader& parent, NoiseConfig& n) {
  if (!parent.has("noise")) return;
  ObjectReader r(parent.at("noise"), "noise");
  r.diagonal<6>("q_c", n.q_c);
  r.diagonal<6>("q_gm", n.q_gm);
  r.diagonal<6>("r_vg", n.r_vg);
  r.diagonal<2>("r_light", n.r_light);
  r.diagonal<2>("r_lane", n.r_lane);
  r.diagonal<2>("r_wheel", n.r_wheel);
  r.vector<4>("r_pseudo", n.r_pseudo);
  r.finish();
}

void read_estimator(ObjectReader& parent, EstimatorOptions& e) {
  if (!parent.has("estimator")) return;
  ObjectReader r(parent.at("estimator"), "estimator");
  r.number("tol", e.correction.tol);
  r.integer("max_iters", e.correction.max_iters);
  r.integer("max_halvings", e.correction.max_halvings);
  r.boolean("pseudo_measurements", e.correction.pseudo_measurements);
  r.boolean("robust", e.correction.robust);
  r.number("max_condition", e.correction.max_condition);
  r.number("burn_in", e.burn_in);
  read_pose_spec(r, "offset_guess", e.offset_guess);
  if (r.has("initial_std")) {
    ObjectReader s(r.at("initial_std"), "estimator.initial_std");
    s.number("pose_trans", e.initial_std.pose_trans);
    s.number("pose_rot", e.initial_std.pose_rot);
    s.number("vel_lin", e.initial_std.vel_lin);
    s.number("vel_ang", e.initial_std.vel_ang);
    s.number("offset_trans", e.initial_std.offset_trans);
    s.number("offset_rot", e.initial_std.offset_rot);
    s.finish();
  }
  r.finish();
}

void read_association(ObjectReader& parent, AssociationOptions& a) {
  if (!parent.has("association")) return;
  ObjectReader r(parent.at("association"), "association");
  r.number("light_gate", a.light_gate);
  r.integer("icp_iters", a.icp_iters);
  r.number("light_radius", a.light_radius);
  r.number("lane_gate", a.lane_gate);
  r.number("lane_radius", a.lane_radius);
  r.integer("lane_stride", a.lane_stride);
  r.number("lane_bottom_fraction", a.lane_bottom_fraction);
  r.size("min_lane_support", a.min_lane_support);
  r.vector<2>("lane_row_fractions", a.lane_row_fractions);
  r.number("min_row_separation", a.min_row_separation);
  r.number("min_line_angle_deg", a.min_line_angle_deg);
  r.finish();
}

}  // namespace

void RunConfig::resolve() {
  scenario.offset_true = offset_true.pose();
  if (!(offset_drift_diag.array() >= 0.0).all()) {
    throw ValidationError("scenario.offset_drift entries must be >= 0");
  }
  scenario.offset_drift = offset_drift_diag.asDiagonal();
  scenario.validate();
  if (!scenario.gps_available(0.0)) {
    throw ValidationError("GPS must be available at t = 0 to initialize the filter");
  }
  camera.validate();
  noise.validate();
  const auto& c = estimator.correction;
  if (!(c.tol > 0.0) || c.max_iters < 1 || c.max_halvings < 0 || !(c.max_condition > 1.0)) {
    throw ValidationError("estimator options out of range");
  }
  const auto& s = estimator.initial_std;
  if (!(s.pose_trans > 0.0 && s.pose_rot > 0.0 && s.vel_lin > 0.0 && s.vel_ang > 0.0 &&
        s.offset_trans > 0.0 && s.offset_rot > 0.0)) {
    throw ValidationError("estimator.initial_std entries must be > 0");
  }
  if (estimator.burn_in < 0.0) throw ValidationError("estimator.burn_in must be >= 0");
  const auto& a = association;
  if (!(a.light_gate > 0.0) || !(a.lane_gate > 0.0) || a.icp_iters < 0 || a.lane_stride < 1 ||
      !(a.lane_bottom_fraction > 0.0 && a.lane_bottom_fraction <= 1.0) ||
      !(a.light_radius > 0.0) || !(a.lane_radius > 0.0)) {
    throw ValidationError("association options out of range");
  }
}

RunConfig config_from_json(const json& j) {
  RunConfig c;
  ObjectReader r(j, "config");
  if (!r.has("schema_version") || !j["schema_version"].is_number_integer()) {
    throw ParseError("config needs an integer schema_version");
  }
  if (j["schema_version"].get<int>() != kSchemaVersion) {
    throw ParseError("unsupported schema_version " + j["schema_version"].dump());
  }
  r.string("name", c.name);
  read_scenario(r, c);
  read_camera(r, c.camera);
  read_noise(r, c.noise);
  read_estimator(r, c.estimator);
  read_association(r, c.association);
  r.string("output_dir", c.output_dir);
  r.finish();
  c.resolve();
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open config file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  json j;
  try {
    j = json::parse(ss.str());
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("config is not valid JSON: ") + e.what());
  }
  return config_from_json(j);
}

json config_to_json(const RunConfig& c) {
  const Scenario& s = c.scenario;
  const WorldParams& w = s.world;
  json dropouts = json::array();
  for (const auto& [a, b] : s.dropouts) dropouts.push_back(json::array({a, b}));
  json t_cv = json::array();
  for (int i = 0; i < 16; ++i) t_cv.push_back(c.camera.t_cv.matrix()(i / 4, i % 4));
  const auto& e = c.estimator;
  const auto& a = c.association;
  return json{
      {"schema_version", kSchemaVersion},
      {"name", c.name},
      {"scenario",
       {{"seed", s.seed},
        {"duration", s.duration},
        {"rate", s.rate},
        {"offset_true", pose_spec_json(c.offset_true)},
        {"offset_drift", to_array<6>(c.offset_drift_diag)},
        {"dropouts", dropouts},
        {"light_noise_px", s.light_noise_px},
        {"lane_noise_px", s.lane_noise_px},
        {"gps_pos_std", s.gps_pos_std},
        {"gps_rot_std", s.gps_rot_std},
        {"wheel_v_std", s.wheel_v_std},
        {"wheel_omega_std", s.wheel_omega_std},
        {"outlier_rate", s.outlier_rate},
        {"light_detection_range", s.light_detection_range},
        {"lane_detection_range", s.lane_detection_range},
        {"lane_sample_spacing", s.lane_sample_spacing},
        {"world",
         {{"blocks_x", w.blocks_x},
          {"blocks_y", w.blocks_y},
          {"block_size", w.block_size},
          {"lane_width", w.lane_width},
          {"lanes_per_direction", w.lanes_per_direction},
          {"lights_per_intersection", w.lights_per_intersection},
          {"light_height", w.light_height},
          {"light_corner_offset", w.light_corner_offset},
          {"marking_margin", w.marking_margin},
          {"vertex_spacing", w.vertex_spacing},
          {"turn_radius", w.turn_radius},
          {"cruise_speed", w.cruise_speed},
          {"turn_speed", w.turn_speed},
          {"max_accel", w.max_accel},
          {"start_arc", w.start_arc}}}}},
      {"camera",
       {{"fx", c.camera.fx},
        {"fy", c.camera.fy},
        {"cx", c.camera.cx},
        {"cy", c.camera.cy},
        {"width", c.camera.width},
        {"height", c.camera.height},
        {"t_cv", t_cv}}},
      {"noise",
       {{"q_c", diag_array<6>(c.noise.q_c)},
        {"q_gm", diag_array<6>(c.noise.q_gm)},
        {"r_vg", diag_array<6>(c.noise.r_vg)},
        {"r_light", diag_array<2>(c.noise.r_light)},
        {"r_lane", diag_array<2>(c.noise.r_lane)},
        {"r_wheel", diag_array<2>(c.noise.r_wheel)},
        {"r_pseudo", to_array<4>(c.noise.r_pseudo)}}},
      {"estimator",
       {{"tol", e.correction.tol},
        {"max_iters", e.correction.max_iters},
        {"max_halvings", e.correction.max_halvings},
        {"pseudo_measurements", e.correction.pseudo_measurements},
        {"robust", e.correction.robust},
        {"max_condition", e.correction.max_condition},
        {"burn_in", e.burn_in},
        {"offset_guess", pose_spec_json(e.offset_guess)},
        {"initial_std",
         {{"pose_trans", e.initial_std.pose_trans},
          {"pose_rot", e.initial_std.pose_rot},
          {"vel_lin", e.initial_std.vel_lin},
          {"vel_ang", e.initial_std.vel_ang},
          {"offset_trans", e.initial_std.offset_trans},
          {"offset_rot", e.initial_std.offset_rot}}}}},
      {"association",
       {{"light_gate", a.light_gate},
        {"icp_iters", a.icp_iters},
        {"light_radius", a.light_radius},
        {"lane_gate", a.lane_gate},
        {"lane_radius", a.lane_radius},
        {"lane_stride", a.lane_stride},
        {"lane_bottom_fraction", a.lane_bottom_fraction},
        {"min_lane_support", a.min_lane_support},
        {"lane_row_fractions", to_array<2>(a.lane_row_fractions)},
        {"min_row_separation", a.min_row_separation},
        {"min_line_angle_deg", a.min_line_angle_deg}}},
      {"output_dir", c.output_dir}};
}

RunConfig canned_config(const std::string& name) {
  RunConfig c;
  c.name = name;
  if (name == "nominal") {
    c.scenario.dropouts.clear();
  } else if (name == "dropout_30_60") {
    c.scenario.dropouts.clear();
    for (double start = 30.0; start < c.scenario.duration; start += 60.0) {
      c.scenario.dropouts.emplace_back(start, std::min(start + 30.0, c.scenario.duration));
    }
  } else {
    throw ValidationError("unknown canned scenario \"" + name + "\"");
  }
  c.resolve();
  return c;
}

}  // namespace semloc
