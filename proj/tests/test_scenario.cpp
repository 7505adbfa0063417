#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include <gtest/gtest.h>

#include "gpassm/scenario.hpp"

namespace gpassm {
namespace {

TEST(Config, DefaultsMatchPublishedTable) {
  const ScenarioConfig c;
  EXPECT_EQ(c.sampling_rate, 2.0);
  EXPECT_EQ(c.meas_noise_var, 0.2);
  EXPECT_EQ(c.sigma_f_sq, 0.05);
  EXPECT_EQ(c.length_scale, 0.5);
  EXPECT_EQ(c.filter_R, 1.0);
  EXPECT_EQ(c.grid_spacing, 1.0);
  EXPECT_EQ(c.n_vehicles, 30);
  EXPECT_EQ(c.n_runs, 100);
  EXPECT_EQ(c.sampling_interval(), 0.5);
  EXPECT_NO_THROW(c.validate());
}

TEST(Config, DefaultGridHas310InducingPoints) {
  const ScenarioConfig c;
  const InducingGrid g = build_scenario_grid(c);
  EXPECT_EQ(g.size(), 310);
  EXPECT_GE(g.size(), 250);
  EXPECT_LE(g.size(), 400);
}

TEST(Config, JsonRoundTripAndOverrides) {
  ScenarioConfig c;
  c.n_runs = 7;
  c.speed = 3.25;
  c.rng_seed = 1234567890123ULL;
  const ScenarioConfig back = config_from_json(nlohmann::json::parse(to_json(c).dump()));
  EXPECT_EQ(to_json(back), to_json(c));

  const ScenarioConfig partial = config_from_json(nlohmann::json::parse(R"({"n_vehicles": 3})"));
  EXPECT_EQ(partial.n_vehicles, 3);
  EXPECT_EQ(partial.n_runs, 100);
}

TEST(Config, RejectsBadValuesWithKeyName) {
  auto message = [](const char* text) {
    try {
      config_from_json(nlohmann::json::parse(text));
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  EXPECT_NE(message(R"({"sigma_f_sq": -1})").find("sigma_f_sq"), std::string::npos);
  EXPECT_NE(message(R"({"turn_radius": 0})").find("turn_radius"), std::string::npos);
  EXPECT_NE(message(R"({"bogus": 1})").find("bogus"), std::string::npos);
  EXPECT_NE(message(R"({"n_runs": 2.5})").find("n_runs"), std::string::npos);
  EXPECT_NE(message(R"({"speed": "fast"})").find("speed"), std::string::npos);
  EXPECT_NE(message(R"([1, 2])").find("object"), std::string::npos);
}

TEST(Config, LoadFromFile) {
  const auto path = std::filesystem::temp_directory_path() / "gpassm_test_config.json";
  std::ofstream(path) << R"({"n_runs": 4, "rng_seed": 5})";
  const ScenarioConfig c = load_config(path);
  EXPECT_EQ(c.n_runs, 4);
  EXPECT_EQ(c.rng_seed, 5u);
  EXPECT_THROW(load_config("/nonexistent/gpassm.json"), ConfigError);
  std::ofstream(path) << "{not json";
  EXPECT_THROW(load_config(path), ConfigError);
}

TEST(Paths, SharedApproach) {
  const PathPair p = build_paths(ScenarioConfig{});
  for (double s = 0.0; s < 20.0; s += 0.37) EXPECT_EQ(p.left.position(s), p.right.position(s));
  EXPECT_EQ(p.left.position(20.0), Point2(0.0, 0.0));
}

TEST(Paths, MirrorSymmetry) {
  const PathPair p = build_paths(ScenarioConfig{});
  for (double s = 0.0; s < p.left.total_length(); s += 0.41) {
    const Point2 l = p.left.position(s);
    const Point2 r = p.right.position(s);
    EXPECT_NEAR(l.x(), -r.x(), 1e-12);
    EXPECT_NEAR(l.y(), r.y(), 1e-12);
  }
}

TEST(Paths, TotalLength) {
  const PathPair p = build_paths(ScenarioConfig{});
  EXPECT_DOUBLE_EQ(p.left.total_length(), 20.0 + 0.5 * std::numbers::pi * 5.0 + 15.0);
}

TEST(Paths, ContinuousPositionAndTangent) {
  const PathPair p = build_paths(ScenarioConfig{});
  for (const PathSpec* path : {&p.left, &p.right}) {
    for (double joint : {path->approach_length(), path->approach_length() + path->arc_length()}) {
      EXPECT_LT((path->position(joint - 1e-9) - path->position(joint)).norm(), 1e-8);
      EXPECT_LT((path->tangent(joint - 1e-9) - path->tangent(joint)).norm(), 1e-8);
    }
    EXPECT_EQ(path->curvature_vector(path->approach_length() - 1e-9), Eigen::Vector2d::Zero());
    EXPECT_NEAR(path->curvature_vector(path->approach_length()).norm(), 1.0 / 5.0, 1e-12);
  }
  EXPECT_EQ(p.left.position(p.left.total_length()), Point2(-20.0, 5.0));
  EXPECT_EQ(p.right.position(p.right.total_length()), Point2(20.0, 5.0));
}

TEST(Paths, RejectsBadRadius) {
  ScenarioConfig c;
  c.turn_radius = 0.0;
  EXPECT_THROW(build_paths(c), InvalidArgument);
}

TEST(Paths, ProjectionAndCrossTrack) {
  const PathPair p = build_paths(ScenarioConfig{});
  // outside of a left turn lies to the right of travel
  const double s = 20.0 + 0.5 * p.left.arc_length();
  const Point2 on = p.left.position(s);
  const Eigen::Vector2d outward = (on - p.left.turn_center()).normalized();
  EXPECT_NEAR(p.left.cross_track(on + 0.3 * outward), 0.3, 1e-9);
  EXPECT_NEAR(p.left.cross_track(on - 0.2 * outward), -0.2, 1e-9);
  const Point2 on_r = p.right.position(s);
  const Eigen::Vector2d outward_r = (on_r - p.right.turn_center()).normalized();
  EXPECT_NEAR(p.right.cross_track(on_r + 0.3 * outward_r), 0.3, 1e-9);
  EXPECT_NEAR(p.left.project(Point2(0.5, -10.0)), 10.0, 1e-12);
  EXPECT_NEAR(p.left.distance(Point2(-10.0, 5.7)), 0.7, 1e-12);
}

TEST(Truth, StraightSpacing) {
  ScenarioConfig c;
  c.speed = 5.0;
  const TruthTrajectory t = generate_truth(build_paths(c).left, c);
  EXPECT_NEAR((t.states[1].head<2>() - t.states[0].head<2>()).norm(), 2.5, 1e-12);
  EXPECT_EQ(t.states[0].head<2>(), Point2(0.0, -20.0));
}

TEST(Truth, ArcAccelerationIsCentripetal) {
  ScenarioConfig c;
  c.speed = 5.0;
  const TruthTrajectory t = generate_truth(build_paths(c).right, c);
  const PathSpec path = build_paths(c).right;
  bool seen = false;
  for (std::size_t k = 0; k < t.size(); ++k) {
    if (path.segment(t.arc_lengths[k]) != PathSpec::Segment::arc) continue;
    seen = true;
    EXPECT_NEAR(t.accelerations[k].norm(), 5.0, 1e-12);
    EXPECT_NEAR(t.accelerations[k].dot(t.states[k].tail<2>()), 0.0, 1e-12);
  }
  EXPECT_TRUE(seen);
}

TEST(Truth, AccelerationJumpsAtTurnEntry) {
  const ScenarioConfig c;
  const PathSpec path = build_paths(c).left;
  const TruthTrajectory t = generate_truth(path, c);
  std::size_t first_arc = 0;
  while (path.segment(t.arc_lengths[first_arc]) == PathSpec::Segment::approach) ++first_arc;
  EXPECT_EQ(t.accelerations[first_arc - 1].norm(), 0.0);
  EXPECT_NEAR(t.accelerations[first_arc].norm(), c.speed * c.speed / c.turn_radius, 1e-12);
}

TEST(Truth, ConstantSpeedAndInsideRoad) {
  const ScenarioConfig c;
  const PathPair paths = build_paths(c);
  const Region road = road_region(c, c.road_half_width, c.approach_length);
  for (const PathSpec* p : {&paths.left, &paths.right}) {
    const TruthTrajectory t = generate_truth(*p, c);
    EXPECT_GE(t.size(), 30u);
    EXPECT_LE(t.size(), 40u);
    for (const auto& x : t.states) {
      EXPECT_NEAR(x.tail<2>().norm(), c.speed, 1e-9);
      EXPECT_TRUE(road.contains(x.head<2>()));
      EXPECT_LE(p->distance(x.head<2>()), c.road_half_width);
    }
  }
}

TEST(Measurements, NoiseFreeEqualsTruth) {
  const ScenarioConfig c;
  const TruthTrajectory t = generate_truth(build_paths(c).left, c);
  Rng rng(1);
  const auto y = simulate_measurements(t, 0.0, rng);
  for (std::size_t k = 0; k < t.size(); ++k) EXPECT_EQ(y[k], t.states[k].head<2>());
  EXPECT_THROW(simulate_measurements(t, -1.0, rng), InvalidArgument);
}

TEST(Measurements, SampleVarianceMatches) {
  TruthTrajectory t;
  t.states.assign(50000, KinVector::Zero());
  Rng rng(2);
  const auto y = simulate_measurements(t, 0.2, rng);
  double acc = 0.0;
  for (const auto& v : y) acc += v.squaredNorm();
  const double var = acc / (2.0 * static_cast<double>(y.size()));
  EXPECT_NEAR(var, 0.2, 0.05 * 0.2);
}

TEST(Measurements, SeededDeterminism) {
  const ScenarioConfig c;
  const TruthTrajectory t = generate_truth(build_paths(c).left, c);
  Rng a = derive_rng(7, 1, 2), b = derive_rng(7, 1, 2), other = derive_rng(7, 1, 3);
  const auto ya = simulate_measurements(t, 0.2, a);
  EXPECT_EQ(ya, simulate_measurements(t, 0.2, b));
  EXPECT_NE(ya, simulate_measurements(t, 0.2, other));
}

TEST(ChoosePath, FairCoin) {
  Rng rng(3);
  int left = 0;
  for (int i = 0; i < 10000; ++i) left += choose_path(rng) == PathLabel::left ? 1 : 0;
  EXPECT_GE(left, 4800);
  EXPECT_LE(left, 5200);
}

TEST(ChoosePath, DeterministicLabels) {
  Rng a(4), b(4);
  for (int i = 0; i < 100; ++i) {
    const PathLabel l = choose_path(a);
    EXPECT_EQ(l, choose_path(b));
    EXPECT_TRUE(l == PathLabel::left || l == PathLabel::right);
  }
  EXPECT_STREQ(to_string(PathLabel::left), "left");
  EXPECT_STREQ(to_string(PathLabel::right), "right");
}

}  // namespace
}  // namespace gpassm
