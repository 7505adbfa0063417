#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "gpassm/errors.hpp"
#include "gpassm/gpfield.hpp"
#include "gpassm/kernel.hpp"
#include "gpassm/models.hpp"

namespace gpassm {

/// Every tunable of the intersection experiment. Defaults reproduce the
/// published parameter table; geometry defaults are a calibration of the
/// drawn intersection, not published values.
struct ScenarioConfig {
  double sampling_rate = 2.0;     // Hz
  double meas_noise_var = 0.2;    // m^2, simulated sensor
  double sigma_f_sq = 0.05;       // (m/s^2)^2
  double length_scale = 0.5;      // m
  double filter_R = 1.0;          // m^2, assumed by both filters
  double grid_spacing = 1.0;      // m
  int n_vehicles = 30;
  int n_runs = 100;
  double speed = 2.5;             // m/s
  double approach_length = 20.0;  // m
  double turn_radius = 5.0;       // m
  double exit_length = 15.0;      // m
  double road_half_width = 3.5;   // m
  std::uint64_t rng_seed = 20200101;

  // Inducing region: rectangles of this half-width around the road
  // centerlines; the approach part reaches `grid_approach_length` back from
  // the split point. Defaults give L = 310.
  double grid_half_width = 2.5;
  double grid_approach_length = 18.0;
  double jitter_rel = 1e-9;       // jitter = jitter_rel * sigma_f_sq
  double drift_var = 0.0;         // Sigma = drift_var * I
  double init_pos_var = 0.2;      // initial kinematic covariance diagonal
  double init_vel_var = 0.25;
  double field_eval_radius = 1.0; // inducing points this close to a path are scored
  double split_exclusion_radius = 2.0;
  int threads = 0;                // 0: hardware concurrency

  [[nodiscard]] double sampling_interval() const { return 1.0 / sampling_rate; }

  [[nodiscard]] KernelParams kernel_params() const {
    return KernelParams{sigma_f_sq, length_scale, jitter_rel * sigma_f_sq, 0.0};
  }

  [[nodiscard]] KinMatrix initial_covariance() const {
    KinVector d;
    d << init_pos_var, init_pos_var, init_vel_var, init_vel_var;
    return d.asDiagonal();
  }

  void validate() const {
    auto positive = [](double v, const char* key) {
      if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(std::string(key) + ": must be positive");
    };
    auto non_negative = [](double v, const char* key) {
      if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError(std::string(key) + ": must be non-negative");
    };
    positive(sampling_rate, "sampling_rate");
    non_negative(meas_noise_var, "meas_noise_var");
    positive(sigma_f_sq, "sigma_f_sq");
    positive(length_scale, "length_scale");
    positive(filter_R, "filter_R");
    positive(grid_spacing, "grid_spacing");
    if (n_vehicles < 1) throw ConfigError("n_vehicles: must be at least 1");
    if (n_runs < 1) throw ConfigError("n_runs: must be at least 1");
    positive(speed, "speed");
    positive(approach_length, "approach_length");
    positive(turn_radius, "turn_radius");
    non_negative(exit_length, "exit_length");
    positive(road_half_width, "road_half_width");
    positive(grid_half_width, "grid_half_width");
    non_negative(grid_approach_length, "grid_approach_length");
    non_negative(jitter_rel, "jitter_rel");
    non_negative(drift_var, "drift_var");
    non_negative(init_pos_var, "init_pos_var");
    non_negative(init_vel_var, "init_vel_var");
    non_negative(field_eval_radius, "field_eval_radius");
    non_negative(split_exclusion_radius, "split_exclusion_radius");
    if (threads < 0) throw ConfigError("threads: must be non-negative");
  }
};

#define GPASSM_CONFIG_FIELDS(X)                                                                   \
  X(sampling_rate) X(meas_noise_var) X(sigma_f_sq) X(length_scale) X(filter_R) X(grid_spacing)   \
  X(n_vehicles) X(n_runs) X(speed) X(approach_length) X(turn_radius) X(exit_length)              \
  X(road_half_width) X(rng_seed) X(grid_half_width) X(grid_approach_length) X(jitter_rel)        \
  X(drift_var) X(init_pos_var) X(init_vel_var) X(field_eval_radius) X(split_exclusion_radius)    \
  X(threads)

inline nlohmann::ordered_json to_json(const ScenarioConfig& c) {
  nlohmann::ordered_json j;
#define GPASSM_WRITE(name) j[#name] = c.name;
  GPASSM_CONFIG_FIELDS(GPASSM_WRITE)
#undef GPASSM_WRITE
  return j;
}

/// Flat object; missing keys keep defaults, unknown keys are rejected.
inline ScenarioConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  ScenarioConfig c;
  const nlohmann::ordered_json known = to_json(c);
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw ConfigError(key + ": unknown configuration key");
    if (!value.is_number()) throw ConfigError(key + ": expected a number");
  }
  auto read = [&](const char* key, auto& field) {
    if (!j.contains(key)) return;
    using T = std::decay_t<decltype(field)>;
    const auto& v = j.at(key);
    if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer() || (std::is_unsigned_v<T> && v.get<long long>() < 0))
        throw ConfigError(std::string(key) + ": expected an integer");
    }
    field = v.get<T>();
  };
#define GPASSM_READ(name) read(#name, c.name);
  GPASSM_CONFIG_FIELDS(GPASSM_READ)
#undef GPASSM_READ
  c.validate();
  return c;
}

inline ScenarioConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string() + ": cannot open configuration file");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

enum class PathLabel { left, right };

inline const char* to_string(PathLabel label) { return label == PathLabel::left ? "left" : "right"; }

/// Straight approach along +y ending at the split point (origin), a quarter
/// circle, then a straight exit. Parameterized by arc length s.
class PathSpec {
 public:
  PathSpec(PathLabel label, double approach_length, double turn_radius, double exit_length)
      : label_(label), approach_(approach_length), radius_(turn_radius), exit_(exit_length) {
    if (!(turn_radius > 0.0)) throw InvalidArgument("PathSpec: turn_radius must be positive");
    if (!(approach_length >= 0.0) || !(exit_length >= 0.0))
      throw InvalidArgument("PathSpec: segment lengths must be non-negative");
  }

  [[nodiscard]] PathLabel label() const { return label_; }
  [[nodiscard]] double approach_length() const { return approach_; }
  [[nodiscard]] double turn_radius() const { return radius_; }
  [[nodiscard]] double exit_length() const { return exit_; }
  [[nodiscard]] double arc_length() const { return 0.5 * std::numbers::pi * radius_; }
  [[nodiscard]] double total_length() const { return approach_ + arc_length() + exit_; }
  /// +1 turns left (counter-clockwise), -1 turns right.
  [[nodiscard]] double turn_sign() const { return label_ == PathLabel::left ? 1.0 : -1.0; }
  [[nodiscard]] Point2 turn_center() const { return {-turn_sign() * radius_, 0.0}; }

  enum class Segment { approach, arc, exit };

  [[nodiscard]] Segment segment(double s) const {
    if (s < approach_) return Segment::approach;
    if (s < approach_ + arc_length()) return Segment::arc;
    return Segment::exit;
  }

  [[nodiscard]] Point2 position(double s) const {
    switch (segment(s)) {
      case Segment::approach:
        return {0.0, s - approach_};
      case Segment::arc: {
        const double phi = (s - approach_) / radius_;
        return {turn_sign() * (radius_ * std::cos(phi) - radius_), radius_ * std::sin(phi)};
      }
      case Segment::exit:
      default:
        return Point2(-turn_sign() * radius_, radius_) + (s - approach_ - arc_length()) * tangent(s);
    }
  }

  [[nodiscard]] Eigen::Vector2d tangent(double s) const {
    switch (segment(s)) {
      case Segment::approach:
        return {0.0, 1.0};
      case Segment::arc: {
        const double phi = (s - approach_) / radius_;
        return {-turn_sign() * std::sin(phi), std::cos(phi)};
      }
      case Segment::exit:
      default:
        return {-turn_sign(), 0.0};
    }
  }

  /// Signed curvature times the unit normal: the acceleration per unit speed^2.
  [[nodiscard]] Eigen::Vector2d curvature_vector(double s) const {
    if (segment(s) != Segment::arc) return Eigen::Vector2d::Zero();
    return (turn_center() - position(s)) / (radius_ * radius_);
  }

  /// Closest point on the centerline. Returns the arc length of that point.
  [[nodiscard]] double project(const Point2& p) const {
    double best_s = 0.0;
    double best_d = INFINITY;
    auto consider = [&](double s) {
      const double d = (position(s) - p).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best_s = s;
      }
    };
    consider(std::clamp(p.y() + approach_, 0.0, approach_));
    const Point2 c = turn_center();
    const Eigen::Vector2d rel = p - c;
    double phi = rel.norm() > 0.0 ? std::atan2(rel.y(), turn_sign() * rel.x()) : 0.0;
    phi = std::clamp(phi, 0.0, 0.5 * std::numbers::pi);
    consider(approach_ + radius_ * phi);
    const double exit_start = approach_ + arc_length();
    const double along = -turn_sign() * (p.x() + turn_sign() * radius_);
    consider(exit_start + std::clamp(along, 0.0, exit_));
    return best_s;
  }

  [[nodiscard]] double distance(const Point2& p) const { return (position(project(p)) - p).norm(); }

  /// Offset from the centerline, positive towards the outside of the turn.
  [[nodiscard]] double cross_track(const Point2& p) const {
    const double s = project(p);
    const Eigen::Vector2d t = tangent(s);
    const Eigen::Vector2d left_normal(-t.y(), t.x());
    return -turn_sign() * left_normal.dot(p - position(s));
  }

 private:
  PathLabel label_;
  double approach_;
  double radius_;
  double exit_;
};

struct PathPair {
  PathSpec left;
  PathSpec right;

  [[nodiscard]] const PathSpec& operator[](PathLabel label) const {
    return label == PathLabel::left ? left : right;
  }
};

inline PathPair build_paths(const ScenarioConfig& config) {
  if (!(config.turn_radius > 0.0)) throw InvalidArgument("build_paths: turn_radius must be positive");
  return {PathSpec(PathLabel::left, config.approach_length, config.turn_radius, config.exit_length),
          PathSpec(PathLabel::right, config.approach_length, config.turn_radius, config.exit_length)};
}

/// Road rectangles around the centerlines: the approach (extended across the
/// crossing road) and the crossing road spanning both exits.
inline Region road_region(const ScenarioConfig& c, double half_width, double approach_extent) {
  const double far = c.turn_radius + c.exit_length;
  return Region{{
      Rect{-half_width, half_width, -approach_extent, c.turn_radius + half_width},
      Rect{-far, far, c.turn_radius - half_width, c.turn_radius + half_width},
  }};
}

/// Mask used for the inducing grid.
inline Region grid_region(const ScenarioConfig& c) {
  return road_region(c, c.grid_half_width, c.grid_approach_length);
}

inline InducingGrid build_scenario_grid(const ScenarioConfig& c) {
  return build_grid(c.kernel_params(), grid_region(c), c.grid_spacing);
}

struct TruthTrajectory {
  PathLabel label = PathLabel::left;
  std::vector<KinVector> states;
  std::vector<Eigen::Vector2d> accelerations;
  std::vector<double> arc_lengths;

  [[nodiscard]] std::size_t size() const { return states.size(); }
};

/// Exact path following at constant speed, sampled every speed * T metres.
inline TruthTrajectory generate_truth(const PathSpec& path, const ScenarioConfig& config) {
  TruthTrajectory truth;
  truth.label = path.label();
  const double v = config.speed;
  const double ds = v * config.sampling_interval();
  const auto steps = static_cast<std::size_t>(std::floor(path.total_length() / ds + 1e-9));
  for (std::size_t k = 0; k <= steps; ++k) {
    const double s = static_cast<double>(k) * ds;
    KinVector x;
    x.head<2>() = path.position(s);
    x.tail<2>() = v * path.tangent(s);
    truth.states.push_back(x);
    truth.accelerations.push_back(v * v * path.curvature_vector(s));
    truth.arc_lengths.push_back(s);
  }
  return truth;
}

using Rng = std::mt19937_64;

/// Per-vehicle generator; each (seed, run, vehicle) triple gets its own stream.
inline Rng derive_rng(std::uint64_t seed, std::uint64_t run, std::uint64_t vehicle) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(run), static_cast<std::uint32_t>(vehicle), 0x9e3779b9u};
  return Rng(seq);
}

/// y_k = p_k + e_k, e_k ~ N(0, meas_noise_var I).
inline std::vector<Eigen::Vector2d> simulate_measurements(const TruthTrajectory& truth, double meas_noise_var,
                                                          Rng& rng) {
  if (!(meas_noise_var >= 0.0)) throw InvalidArgument("simulate_measurements: variance must be non-negative");
  std::normal_distribution<double> noise(0.0, std::sqrt(meas_noise_var));
  std::vector<Eigen::Vector2d> y;
  y.reserve(truth.size());
  for (const auto& x : truth.states) {
    const double ex = noise(rng);
    const double ey = noise(rng);
    y.emplace_back(x(0) + ex, x(1) + ey);
  }
  return y;
}

/// Left or right with equal probability.
inline PathLabel choose_path(Rng& rng) {
  std::bernoulli_distribution coin(0.5);
  return coin(rng) ? PathLabel::left : PathLabel::right;
}

}  // namespace gpassm
