#include "semloc/semantic_map.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "semloc/errors.hpp"

namespace semloc {

using nlohmann::json;

namespace {

Vec3 parse_point(const json& j) {
  if (!j.is_array() || j.size() != 3) throw ParseError("expected a 3-element coordinate array");
  Vec3 p;
  for (int i = 0; i < 3; ++i) {
    if (!j[i].is_number()) throw ParseError("coordinate must be a number");
    p(i) = j[i].get<double>();
  }
  return p;
}

std::int64_t parse_id(const json& obj) {
  if (!obj.contains("id") || !obj["id"].is_number_integer()) {
    throw ParseError("entry needs an integer \"id\"");
  }
  return obj["id"].get<std::int64_t>();
}

void check_keys(const json& obj, std::initializer_list<const char*> allowed) {
  for (const auto& item : obj.items()) {
    if (std::none_of(allowed.begin(), allowed.end(),
                     [&](const char* k) { return item.key() == k; })) {
      throw ParseError("unknown key \"" + item.key() + "\"");
    }
  }
}

void append_point(std::string& out, const Vec3& p) {
  out += '[';
  out += format_double(p.x());
  out += ',';
  out += format_double(p.y());
  out += ',';
  out += format_double(p.z());
  out += ']';
}

}  // namespace

std::string format_double(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

SemanticMap::SemanticMap(std::vector<LaneBoundary> lanes, std::vector<TrafficLight> lights)
    : lanes_(std::move(lanes)), lights_(std::move(lights)) {
  for (std::size_t i = 0; i < lanes_.size(); ++i) {
    const auto& lane = lanes_[i];
    if (lane.vertices.size() < 2) {
      throw ValidationError("lane " + std::to_string(lane.id) + " has fewer than 2 vertices");
    }
    for (std::size_t k = 0; k < lane.vertices.size(); ++k) {
      if (!lane.vertices[k].allFinite()) {
        throw ValidationError("lane " + std::to_string(lane.id) + " has non-finite vertex");
      }
      if (k > 0 && (lane.vertices[k] - lane.vertices[k - 1]).norm() <= 1e-6) {
        throw ValidationError("lane " + std::to_string(lane.id) + " repeats a vertex");
      }
    }
    if (!lane_index_.emplace(lane.id, i).second) {
      throw ValidationError("duplicate lane id " + std::to_string(lane.id));
    }
  }
  for (std::size_t i = 0; i < lights_.size(); ++i) {
    if (!lights_[i].position.allFinite()) {
      throw ValidationError("light " + std::to_string(lights_[i].id) + " is not finite");
    }
    if (!light_index_.emplace(lights_[i].id, i).second) {
      throw ValidationError("duplicate light id " + std::to_string(lights_[i].id));
    }
  }
}

const LaneBoundary& SemanticMap::lane(std::int64_t id) const {
  const auto it = lane_index_.find(id);
  if (it == lane_index_.end()) throw UnknownLandmark("no lane with id " + std::to_string(id));
  return lanes_[it->second];
}

const TrafficLight& SemanticMap::light(std::int64_t id) const {
  const auto it = light_index_.find(id);
  if (it == light_index_.end()) throw UnknownLandmark("no light with id " + std::to_string(id));
  return lights_[it->second];
}

SemanticMap load_map(std::string_view bytes) {
  json doc;
  try {
    doc = json::parse(bytes.begin(), bytes.end());
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("map is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ParseError("map document must be an object");
  check_keys(doc, {"lanes", "lights"});
  if (!doc.contains("lanes") || !doc["lanes"].is_array()) throw ParseError("missing \"lanes\" array");
  if (!doc.contains("lights") || !doc["lights"].is_array()) {
    throw ParseError("missing \"lights\" array");
  }
  std::vector<LaneBoundary> lanes;
  for (const auto& jl : doc["lanes"]) {
    if (!jl.is_object()) throw ParseError("lane entry must be an object");
    check_keys(jl, {"id", "vertices"});
    LaneBoundary lane;
    lane.id = parse_id(jl);
    if (!jl.contains("vertices") || !jl["vertices"].is_array()) {
      throw ParseError("lane needs a \"vertices\" array");
    }
    for (const auto& jv : jl["vertices"]) lane.vertices.push_back(parse_point(jv));
    lanes.push_back(std::move(lane));
  }
  std::vector<TrafficLight> lights;
  for (const auto& jt : doc["lights"]) {
    if (!jt.is_object()) throw ParseError("light entry must be an object");
    check_keys(jt, {"id", "position"});
    TrafficLight light;
    light.id = parse_id(jt);
    if (!jt.contains("position")) throw ParseError("light needs a \"position\"");
    light.position = parse_point(jt["position"]);
    lights.push_back(light);
  }
  return SemanticMap(std::move(lanes), std::move(lights));
}

SemanticMap load_map_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open map file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return load_map(ss.str());
}

std::string save_map(const SemanticMap& map) {
  std::string out = "{\"lanes\":[";
  for (std::size_t i = 0; i < map.lanes().size(); ++i) {
    const auto& lane = map.lanes()[i];
    if (i > 0) out += ',';
    out += "{\"id\":" + std::to_string(lane.id) + ",\"vertices\":[";
    for (std::size_t k = 0; k < lane.vertices.size(); ++k) {
      if (k > 0) out += ',';
      append_point(out, lane.vertices[k]);
    }
    out += "]}";
  }
  out += "],\"lights\":[";
  for (std::size_t i = 0; i < map.lights().size(); ++i) {
    const auto& light = map.lights()[i];
    if (i > 0) out += ',';
    out += "{\"id\":" + std::to_string(light.id) + ",\"position\":";
    append_point(out, light.position);
    out += '}';
  }
  out += "]}\n";
  return out;
}

double point_segment_distance(const Vec3& p, const Vec3& a, const Vec3& b) {
  const Vec3 d = b - a;
  const double len2 = d.squaredNorm();
  const double s = len2 > 0.0 ? std::clamp((p - a).dot(d) / len2, 0.0, 1.0) : 0.0;
  return (a + s * d - p).norm();
}

double point_polyline_distance(const Vec3& p, const std::vector<Vec3>& line) {
  double best = std::numeric_limits<double>::infinity();
  if (line.size() == 1) return (line.front() - p).norm();
  for (std::size_t i = 0; i + 1 < line.size(); ++i) {
    best = std::min(best, point_segment_distance(p, line[i], line[i + 1]));
  }
  return best;
}

std::vector<TrafficLight> nearby_lights(const SemanticMap& map, const Vec3& center, double radius) {
  std::vector<std::pair<double, const TrafficLight*>> hits;
  for (const auto& light : map.lights()) {
    const double d = (light.position - center).norm();
    if (d <= radius) hits.emplace_back(d, &light);
  }
  std::sort(hits.begin(), hits.end(), [](const auto& x, const auto& y) {
    return x.first != y.first ? x.first < y.first : x.second->id < y.second->id;
  });
  std::vector<TrafficLight> out;
  out.reserve(hits.size());
  for (const auto& h : hits) out.push_back(*h.second);
  return out;
}

std::vector<LaneBoundary> nearby_lanes(const SemanticMap& map, const Vec3& center, double radius) {
  std::vector<std::pair<double, const LaneBoundary*>> hits;
  for (const auto& lane : map.lanes()) {
    const double d = point_polyline_distance(center, lane.vertices);
    if (d <= radius) hits.emplace_back(d, &lane);
  }
  std::sort(hits.begin(), hits.end(), [](const auto& x, const auto& y) {
    return x.first != y.first ? x.first < y.first : x.second->id < y.second->id;
  });
  std::vector<LaneBoundary> out;
  out.reserve(hits.size());
  for (const auto& h : hits) out.push_back(*h.second);
  return out;
}

}  // namespace semloc
