#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "oracles.hpp"
#include "semloc/association.hpp"
#include "semloc/errors.hpp"
#include "semloc/estimator.hpp"
#include "semloc/simulator.hpp"

using namespace semloc;

namespace {

Scenario quiet_scenario() {
  Scenario sc;
  sc.duration = 40.0;
  sc.light_noise_px = 0.0;
  sc.lane_noise_px = 0.0;
  sc.gps_pos_std = 0.0;
  sc.gps_rot_std = 0.0;
  sc.wheel_v_std = 0.0;
  sc.wheel_omega_std = 0.0;
  sc.outlier_rate = 0.0;
  return sc;
}

}  // namespace

TEST(CounterRng, DeterministicAndKeyed) {
  CounterRng a(1, 2, 3);
  CounterRng b(1, 2, 3);
  CounterRng c(1, 2, 4);
  CounterRng d(1, 3, 3);
  for (int i = 0; i < 100; ++i) {
    const auto va = a.next_u64();
    EXPECT_EQ(va, b.next_u64());
    EXPECT_NE(va, c.next_u64());
    EXPECT_NE(va, d.next_u64());
  }
  CounterRng n(9, 0, 1);
  double sum = 0;
  double sq = 0;
  const int count = 200000;
  for (int i = 0; i < count; ++i) {
    const double x = n.normal();
    sum += x;
    sq += x * x;
  }
  EXPECT_NEAR(sum / count, 0.0, 0.01);
  EXPECT_NEAR(sq / count, 1.0, 0.02);
  CounterRng u(9, 0, 2);
  for (int i = 0; i < 1000; ++i) {
    const double x = u.uniform();
    EXPECT_GE(x, 0.0);
    EXPECT_LT(x, 1.0);
  }
}

TEST(Scenario, Validation) {
  Scenario sc;
  EXPECT_NO_THROW(sc.validate());
  sc.rate = 0;
  EXPECT_THROW(sc.validate(), ValidationError);
  sc = Scenario();
  sc.dropouts = {{30, 60}, {50, 70}};
  EXPECT_THROW(sc.validate(), ValidationError);
  sc.dropouts = {{30, 60}, {90, 130}};
  EXPECT_THROW(sc.validate(), ValidationError);
  sc.dropouts = {{60, 30}};
  EXPECT_THROW(sc.validate(), ValidationError);
  sc = Scenario();
  sc.outlier_rate = 1.5;
  EXPECT_THROW(sc.validate(), ValidationError);
}

TEST(GenerateWorld, OneBlockHasFourLitIntersections) {
  Scenario sc;
  sc.world.blocks_x = 1;
  sc.world.blocks_y = 1;
  const SemanticMap map = generate_world(sc);
  const double b = sc.world.block_size;
  EXPECT_EQ(map.lights().size(), 4u * sc.world.lights_per_intersection);
  std::set<std::pair<int, int>> corners;
  for (const auto& l : map.lights()) {
    const int ix = static_cast<int>(std::lround(l.position.x() / b));
    const int iy = static_cast<int>(std::lround(l.position.y() / b));
    corners.insert({ix, iy});
    EXPECT_NEAR(std::abs(l.position.x() - ix * b), sc.world.light_corner_offset, 1e-12);
    EXPECT_NEAR(l.position.z(), sc.world.light_height, 1e-12);
  }
  EXPECT_EQ(corners.size(), 4u);
}

TEST(GenerateWorld, DeterministicAndFlat) {
  Scenario sc;
  const std::string a = save_map(generate_world(sc));
  EXPECT_EQ(a, save_map(generate_world(sc)));
  for (const auto& lane : load_map(a).lanes()) {
    for (const auto& v : lane.vertices) EXPECT_EQ(v.z(), 0.0);
  }
}

TEST(GenerateTrajectory, KinematicsAndLength) {
  Scenario sc;
  const SemanticMap map = generate_world(sc);
  const auto frames = generate_trajectory(sc, map);
  ASSERT_EQ(frames.size(), sc.frame_count());
  const double dt = 1.0 / sc.rate;
  bool saw_straight = false;
  bool saw_turn = false;
  const Route route(sc.world);
  for (std::size_t k = 0; k + 1 < frames.size(); ++k) {
    const Pose next = exp_se3(dt * frames[k].varpi_true) * frames[k].t_vm_true;
    EXPECT_LT((next.matrix() - frames[k + 1].t_vm_true.matrix()).cwiseAbs().maxCoeff(), 1e-6);
    const Twist& w = frames[k].varpi_true;
    const double v = -w(0);
    EXPECT_GE(v, 5.0 - 1e-6);
    EXPECT_LE(v, 10.0 + 1e-6);
    const double s0 = sc.world.start_arc + frames[k].arc;
    const double s1 = sc.world.start_arc + frames[k + 1].arc;
    if (route.curvature_at(s0) == 0.0 && route.curvature_at(s1) == 0.0) {
      EXPECT_LT(w.tail<5>().cwiseAbs().maxCoeff(), 1e-9);
      saw_straight = true;
    }
    if (route.curvature_at(s0) != 0.0 && route.curvature_at(s1) != 0.0) {
      // Left turn of radius r: yaw rate v / r (sign flipped by the T_vm convention).
      EXPECT_NEAR(-w(5), v / sc.world.turn_radius, 1e-3 * v / sc.world.turn_radius);
      EXPECT_LT(std::abs(w(1)) + std::abs(w(2)) + std::abs(w(3)) + std::abs(w(4)), 1e-6);
      saw_turn = true;
    }
  }
  EXPECT_TRUE(saw_straight);
  EXPECT_TRUE(saw_turn);

  // Loop length by summing route samples against the closed form.
  double sampled = 0.0;
  Vec3 prev = route.pose_at(0).inverse().translation();
  for (int i = 1; i <= 200000; ++i) {
    const Vec3 p = route.pose_at(route.length() * i / 200000.0).inverse().translation();
    sampled += (p - prev).norm();
    prev = p;
  }
  EXPECT_NEAR(sampled, route.length(), 1e-3);
  EXPECT_NEAR(route.length(), 1000.0, 50.0);
  EXPECT_NEAR(frames.back().arc, 1000.0, 150.0);
}

TEST(SimulateFrame, NoiselessGpsIsGroundTruth) {
  Scenario sc = quiet_scenario();
  sc.offset_true = Pose();
  const SemanticMap map = generate_world(sc);
  const auto frames = generate_trajectory(sc, map);
  const CameraModel cam = default_camera();
  for (std::size_t k = 0; k < frames.size(); k += 37) {
    const DetectionFrame f = simulate_frame(frames[k], k, sc, map, cam);
    ASSERT_TRUE(f.gps.has_value());
    EXPECT_LT((f.gps->matrix() - frames[k].t_vm_true.matrix()).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(SimulateFrame, DropoutRemovesGps) {
  Scenario sc;
  sc.dropouts = {{30, 60}, {90, 120}};
  const SemanticMap map = generate_world(sc);
  const auto frames = generate_trajectory(sc, map);
  const CameraModel cam = default_camera();
  EXPECT_FALSE(simulate_frame(frames[450], 450, sc, map, cam).gps.has_value());
  EXPECT_NEAR(frames[450].t, 45.0, 1e-12);
  std::size_t present = 0;
  for (std::size_t k = 0; k < frames.size(); ++k) {
    if (simulate_frame(frames[k], k, sc, map, cam).gps) ++present;
  }
  EXPECT_EQ(2 * present, frames.size());
}

TEST(SimulateFrame, NoiselessMeasurementsAreConsistentAtTruth) {
  Scenario sc = quiet_scenario();
  sc.offset_true = Pose::Translation(Vec3(2, 2, 0));
  const SemanticMap map = generate_world(sc);
  const auto frames = generate_trajectory(sc, map);
  const CameraModel cam = default_camera();
  const AssociationOptions opts;
  std::size_t lights = 0;
  std::size_t lanes = 0;
  for (std::size_t k = 0; k < frames.size(); k += 7) {
    const auto& gt = frames[k];
    const DetectionFrame f = simulate_frame(gt, k, sc, map, cam);
    EXPECT_LT(gps_error(*f.gps, gt.t_vm_true, gt.t_gm_true).norm(), 1e-9);
    EXPECT_LT(wheel_error(f.wheel, gt.varpi_true).norm(), 1e-12);
    EXPECT_LT(pseudo_errors(gt.t_vm_true, gt.varpi_true).norm(), 1e-9);
    const auto a = associate_frame(f.light_detections, f.lane_pixels, map, gt.t_vm_true, cam, opts);
    for (const auto& m : a.lights.matches) {
      EXPECT_LT(light_error(m, gt.t_vm_true, map, cam).norm(), 1e-6);
      ++lights;
    }
    for (const auto& obs : a.lanes) {
      EXPECT_LT(lane_error(obs.match, obs.y_rows, gt.t_vm_true, map, cam).norm(), 1e-3);
      ++lanes;
    }
  }
  EXPECT_GT(lights, 20u);
  EXPECT_GT(lanes, 20u);
}

TEST(SimulateFrame, InlierDetectionsWithinThreeSigma) {
  Scenario sc;
  sc.duration = 60.0;
  const SemanticMap map = generate_world(sc);
  const auto frames = generate_trajectory(sc, map);
  const CameraModel cam = default_camera();
  std::size_t n = 0;
  for (std::size_t k = 0; k < frames.size(); k += 3) {
    const DetectionFrame f = simulate_frame(frames[k], k, sc, map, cam);
    for (const auto& d : f.light_detections) {
      double best = 1e300;
      for (const auto& l : map.lights()) {
        try {
          best = std::min(best, (project_point(l.position, frames[k].t_vm_true, cam) - d).norm());
        } catch (const BehindCamera&) {
        }
      }
      EXPECT_LE(best, 3.0 * sc.light_noise_px + 1e-9);
      ++n;
    }
  }
  EXPECT_GT(n, 100u);
}

TEST(SimulateFrame, DeterministicAndJsonRoundTrip) {
  Scenario sc;
  sc.outlier_rate = 0.1;
  sc.dropouts = {{1, 2}};
  const SemanticMap map = generate_world(sc);
  const auto frames = generate_trajectory(sc, map);
  const CameraModel cam = default_camera();
  for (std::size_t k : {0u, 15u, 300u}) {
    const DetectionFrame a = simulate_frame(frames[k], k, sc, map, cam);
    const DetectionFrame b = simulate_frame(frames[k], k, sc, map, cam);
    const std::string line = frame_to_json_line(a);
    EXPECT_EQ(line, frame_to_json_line(b));
    const DetectionFrame c = frame_from_json_line(line);
    EXPECT_EQ(frame_to_json_line(c), line);
    EXPECT_EQ(c.gps.has_value(), a.gps.has_value());
    EXPECT_EQ(c.lane_pixels.size(), a.lane_pixels.size());
  }
  EXPECT_THROW(frame_from_json_line("{"), ParseError);
  EXPECT_THROW(frame_from_json_line(R"({"index":0})"), ParseError);
}

TEST(SimulateFrame, OutlierChannelDoesNotPerturbInliers) {
  Scenario clean;
  Scenario dirty;
  dirty.outlier_rate = 0.3;
  const SemanticMap map = generate_world(clean);
  const auto frames = generate_trajectory(clean, map);
  const CameraModel cam = default_camera();
  const DetectionFrame a = simulate_frame(frames[100], 100, clean, map, cam);
  const DetectionFrame b = simulate_frame(frames[100], 100, dirty, map, cam);
  EXPECT_EQ(a.gps->matrix(), b.gps->matrix());
  EXPECT_EQ(a.wheel.v, b.wheel.v);
  // Every clean detection is still present in the outlier-injected frame.
  for (const auto& p : a.light_detections) {
    EXPECT_NE(std::find(b.light_detections.begin(), b.light_detections.end(), p),
              b.light_detections.end());
  }
  EXPECT_GE(b.lane_pixels.size(), a.lane_pixels.size());
}
