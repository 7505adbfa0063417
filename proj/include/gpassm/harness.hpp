#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "gpassm/errors.hpp"
#include "gpassm/filter.hpp"
#include "gpassm/gpfield.hpp"
#include "gpassm/models.hpp"
#include "gpassm/scenario.hpp"

namespace gpassm {

inline constexpr const char* kVersion = "gpassm 1.0.0";

/// Everything shared read-only by all runs of one experiment.
struct ExperimentContext {
  ScenarioConfig config;
  KernelParams params;
  MotionModel model;
  ObservationModel obs;
  InducingGrid grid;
  PathPair paths;
  Eigen::MatrixXd drift_cov;

  explicit ExperimentContext(const ScenarioConfig& c)
      : config((c.validate(), c)),
        params(c.kernel_params()),
        model(cv_matrices(c.sampling_interval())),
        obs{c.filter_R},
        grid(build_scenario_grid(c)),
        paths(build_paths(c)) {
    if (c.drift_var > 0.0)
      drift_cov = c.drift_var * Eigen::MatrixXd::Identity(grid.state_dim(), grid.state_dim());
  }

  [[nodiscard]] FieldBelief prior() const { return prior_belief(grid, config.drift_var); }
};

/// One filter pass of one vehicle. Step 0 is the (true) initial state; the
/// filters run on steps 1..K and the error sequences cover those steps.
struct VehicleRunRecord {
  int vehicle = 0;
  PathLabel label = PathLabel::left;
  std::vector<KinVector> truth;
  std::vector<Eigen::Vector2d> measurements;
  std::vector<KinVector> gpassm;
  std::vector<KinVector> baseline;
  std::vector<double> err_gpassm;
  std::vector<double> err_cv;
  std::vector<double> cross_track_gpassm;
  std::vector<double> cross_track_cv;
  std::vector<bool> on_turn;
  double rmse_gpassm = 0.0;
  double rmse_cv = 0.0;

  [[nodiscard]] std::size_t steps() const { return err_gpassm.size(); }
};

/// sqrt(mean of squared errors).
inline double compute_rmse(std::span<const double> errors) {
  if (errors.empty()) throw InvalidArgument("compute_rmse: empty error sequence");
  double acc = 0.0;
  for (double e : errors) acc += e * e;
  return std::sqrt(acc / static_cast<double>(errors.size()));
}

inline double compute_rmse(std::span<const Eigen::Vector2d> errors) {
  std::vector<double> norms;
  norms.reserve(errors.size());
  for (const auto& e : errors) norms.push_back(e.norm());
  return compute_rmse(norms);
}

/// Runs the GPASSM filter and the CV baseline over one vehicle. `belief`
/// carries the shared field in and the learned field out.
inline VehicleRunRecord run_vehicle(AugmentedBelief& belief, const TruthTrajectory& truth,
                                    std::span<const Eigen::Vector2d> measurements, const ExperimentContext& ctx,
                                    FieldMode mode = FieldMode::learn, int vehicle = 0,
                                    bool run_gpassm = true) {
  if (truth.size() < 2 || measurements.size() != truth.size())
    throw InvalidArgument("run_vehicle: truth and measurements must share a length of at least 2");
  const PathSpec& path = ctx.paths[truth.label];
  const KinMatrix p0 = ctx.config.initial_covariance();
  reinitialize_vehicle_in_place(belief, truth.states.front(), p0);
  KinematicBelief cv{truth.states.front(), p0};

  VehicleRunRecord rec;
  rec.vehicle = vehicle;
  rec.label = truth.label;
  rec.truth = truth.states;
  rec.measurements.assign(measurements.begin(), measurements.end());
  const std::size_t n = truth.size() - 1;
  rec.gpassm.reserve(n);
  rec.baseline.reserve(n);

  for (std::size_t k = 1; k <= n; ++k) {
    if (run_gpassm) {
      try {
        predict_in_place(belief, ctx.model, ctx.grid, ctx.params, ctx.drift_cov);
        update_in_place(belief, ctx.obs, measurements[k], mode);
      } catch (const NumericalError& e) {
        throw NumericalError("vehicle " + std::to_string(vehicle) + ": " + e.what(), static_cast<long>(k));
      }
    }
    cv = cv_update(cv_predict(cv, ctx.model, ctx.params.sigma_f_sq), ctx.obs, measurements[k]);

    const KinVector est = run_gpassm ? belief.kinematic_mean() : KinVector::Constant(std::nan(""));
    rec.gpassm.push_back(est);
    rec.baseline.push_back(cv.mean);
    const Eigen::Vector2d p_true = truth.states[k].head<2>();
    rec.err_gpassm.push_back((est.head<2>() - p_true).norm());
    rec.err_cv.push_back((cv.mean.head<2>() - p_true).norm());
    rec.cross_track_gpassm.push_back(path.cross_track(est.head<2>()));
    rec.cross_track_cv.push_back(path.cross_track(cv.mean.head<2>()));
    rec.on_turn.push_back(path.segment(truth.arc_lengths[k]) == PathSpec::Segment::arc);
  }
  rec.rmse_gpassm = compute_rmse(rec.err_gpassm);
  rec.rmse_cv = compute_rmse(rec.err_cv);
  return rec;
}

/// Inducing points scored by the field metric, with the true acceleration of
/// the nearest path there.
struct FieldEvalPoint {
  Eigen::Index index = 0;
  Eigen::Vector2d true_accel;
};

inline std::vector<FieldEvalPoint> field_eval_points(const ExperimentContext& ctx, bool exclude_split = true) {
  std::vector<FieldEvalPoint> out;
  const auto points = ctx.grid.points();
  const double v2 = ctx.config.speed * ctx.config.speed;
  for (Eigen::Index l = 0; l < ctx.grid.size(); ++l) {
    const Point2& xi = points[static_cast<std::size_t>(l)];
    if (exclude_split && xi.norm() < ctx.config.split_exclusion_radius) continue;
    const PathSpec* best = nullptr;
    double best_d = INFINITY;
    for (const PathSpec* p : {&ctx.paths.left, &ctx.paths.right}) {
      const double d = p->distance(xi);
      if (d < best_d) {
        best_d = d;
        best = p;
      }
    }
    if (best_d > ctx.config.field_eval_radius) continue;
    out.push_back({l, v2 * best->curvature_vector(best->project(xi))});
  }
  return out;
}

/// RMSE between the mean field and the path accelerations at `eval`.
inline double field_rmse(const ExperimentContext& ctx, const Eigen::Ref<const Eigen::VectorXd>& field_mean,
                         std::span<const FieldEvalPoint> eval) {
  if (eval.empty()) throw InvalidArgument("field_rmse: no evaluation points");
  std::vector<double> err;
  err.reserve(eval.size());
  for (const auto& e : eval) {
    const Point2& xi = ctx.grid.points()[static_cast<std::size_t>(e.index)];
    err.push_back((input_mean(ctx.grid, ctx.params, field_mean, xi) - e.true_accel).norm());
  }
  return compute_rmse(err);
}

struct RunResult {
  int run = 0;
  std::vector<VehicleRunRecord> vehicles;
  /// Field RMSE after each vehicle; entry 0 is the prior.
  std::vector<double> field_rmse;
  /// Mean field at inducing points (mean_ax, mean_ay) after each vehicle.
  std::vector<Eigen::VectorXd> field_means;
  std::vector<FieldRow> final_field;
};

struct RunOptions {
  FieldMode mode = FieldMode::learn;
  /// Process only the first `vehicle_limit` vehicles (all when unset).
  std::optional<int> vehicle_limit;
  bool tabulate_final_field = true;
  /// Skip the GPASSM filter; its columns are reported as NaN.
  bool baseline_only = false;
};

inline RunResult run_single(const ExperimentContext& ctx, int run, const RunOptions& opt = {}) {
  const auto& c = ctx.config;
  const int n_vehicles = opt.vehicle_limit.value_or(c.n_vehicles);
  const auto eval = field_eval_points(ctx);
  const FieldBelief prior = ctx.prior();
  AugmentedBelief belief = make_belief(prior, KinVector::Zero(), KinMatrix::Zero());

  RunResult result;
  result.run = run;
  result.field_rmse.push_back(field_rmse(ctx, prior.mean, eval));
  result.field_means.push_back(prior.mean);
  for (int v = 0; v < n_vehicles; ++v) {
    Rng rng = derive_rng(c.rng_seed, static_cast<std::uint64_t>(run), static_cast<std::uint64_t>(v));
    const PathLabel label = choose_path(rng);
    const TruthTrajectory truth = generate_truth(ctx.paths[label], c);
    const auto y = simulate_measurements(truth, c.meas_noise_var, rng);
    result.vehicles.push_back(run_vehicle(belief, truth, y, ctx, opt.mode, v, !opt.baseline_only));
    const Eigen::VectorXd field_mean = belief.mean.tail(ctx.grid.state_dim());
    result.field_rmse.push_back(field_rmse(ctx, field_mean, eval));
    result.field_means.push_back(field_mean);
  }
  if (opt.tabulate_final_field && !opt.baseline_only) {
    const Eigen::Index nf = ctx.grid.state_dim();
    result.final_field = tabulate_field(ctx.grid, ctx.params, belief.mean.tail(nf),
                                        belief.covariance.bottomRightCorner(nf, nf));
  }
  return result;
}

struct CohortSummary {
  double gpassm = 0.0;
  double cv = 0.0;
  int count = 0;
};

struct ExperimentResult {
  ScenarioConfig config;
  std::vector<RunResult> runs;

  [[nodiscard]] CohortSummary overall() const {
    CohortSummary s;
    for (const auto& r : runs)
      for (const auto& v : r.vehicles) {
        s.gpassm += v.rmse_gpassm;
        s.cv += v.rmse_cv;
        ++s.count;
      }
    if (s.count > 0) {
      s.gpassm /= s.count;
      s.cv /= s.count;
    }
    return s;
  }
};

/// First (or last) vehicle on each path within one run.
inline std::vector<const VehicleRunRecord*> path_cohort(const RunResult& run, bool last) {
  std::vector<const VehicleRunRecord*> out;
  for (PathLabel label : {PathLabel::left, PathLabel::right}) {
    const VehicleRunRecord* pick = nullptr;
    for (const auto& v : run.vehicles) {
      if (v.label != label) continue;
      if (pick == nullptr || last) pick = &v;
    }
    if (pick != nullptr) out.push_back(pick);
  }
  return out;
}

inline CohortSummary cohort_mean(const RunResult& run, bool last) {
  CohortSummary s;
  for (const auto* v : path_cohort(run, last)) {
    s.gpassm += v->rmse_gpassm;
    s.cv += v->rmse_cv;
    ++s.count;
  }
  if (s.count > 0) {
    s.gpassm /= s.count;
    s.cv /= s.count;
  }
  return s;
}

struct TurnBias {
  double gpassm = 0.0;
  double cv = 0.0;
  long samples = 0;
};

/// Mean signed cross-track error over turn steps of the last `last_n`
/// vehicles of every run (positive: outside of the turn).
inline TurnBias turn_bias(std::span<const RunResult> runs, std::size_t last_n) {
  TurnBias b;
  for (const auto& r : runs) {
    const std::size_t first = r.vehicles.size() > last_n ? r.vehicles.size() - last_n : 0;
    for (std::size_t i = first; i < r.vehicles.size(); ++i) {
      const auto& v = r.vehicles[i];
      for (std::size_t k = 0; k < v.steps(); ++k) {
        if (!v.on_turn[k]) continue;
        b.gpassm += v.cross_track_gpassm[k];
        b.cv += v.cross_track_cv[k];
        ++b.samples;
      }
    }
  }
  if (b.samples > 0) {
    b.gpassm /= static_cast<double>(b.samples);
    b.cv /= static_cast<double>(b.samples);
  }
  return b;
}

/// Runs all Monte Carlo runs, in parallel when `config.threads` allows. The
/// result is ordered by run index and independent of scheduling.
inline ExperimentResult run_experiment(const ScenarioConfig& config, const RunOptions& opt = {}) {
  config.validate();
  const ExperimentContext ctx(config);
  ExperimentResult result;
  result.config = config;
  result.runs.resize(static_cast<std::size_t>(config.n_runs));

  unsigned workers = config.threads > 0 ? static_cast<unsigned>(config.threads) : std::thread::hardware_concurrency();
  workers = std::clamp(workers, 1u, static_cast<unsigned>(config.n_runs));
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (int r = next++; r < config.n_runs; r = next++) {
      try {
        result.runs[static_cast<std::size_t>(r)] = run_single(ctx, r, opt);
      } catch (const NumericalError& e) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::make_exception_ptr(NumericalError("run " + std::to_string(r) + ": " + e.what()));
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned i = 1; i < workers; ++i) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
  return result;
}

namespace detail {

inline std::ofstream open_csv(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(path.string() + ": cannot open for writing");
  out << std::setprecision(17);
  return out;
}

inline void close_csv(std::ofstream& out, const std::filesystem::path& path) {
  out.close();
  if (!out) throw std::runtime_error(path.string() + ": write failed");
}

}  // namespace detail

inline void write_field_csv(const std::filesystem::path& path, std::span<const FieldRow> rows) {
  auto out = detail::open_csv(path);
  out << "xi_x,xi_y,mean_ax,mean_ay,var\n";
  for (const auto& r : rows) out << r.xi_x << ',' << r.xi_y << ',' << r.mean_ax << ',' << r.mean_ay << ',' << r.var << '\n';
  detail::close_csv(out, path);
}

/// True path accelerations sampled every `step` metres of arc length.
inline void write_truth_accel_csv(const std::filesystem::path& path, const PathPair& paths, double speed,
                                  double step = 0.25) {
  auto out = detail::open_csv(path);
  out << "path,s,x,y,ax,ay\n";
  for (const PathSpec* p : {&paths.left, &paths.right}) {
    const auto n = static_cast<int>(std::floor(p->total_length() / step + 1e-9));
    for (int i = 0; i <= n; ++i) {
      const double s = i * step;
      const Point2 x = p->position(s);
      const Eigen::Vector2d a = speed * speed * p->curvature_vector(s);
      out << to_string(p->label()) << ',' << s << ',' << x.x() << ',' << x.y() << ',' << a.x() << ',' << a.y() << '\n';
    }
  }
  detail::close_csv(out, path);
}

inline void write_manifest(const std::filesystem::path& path, const ScenarioConfig& config,
                           const nlohmann::ordered_json& extra = {}) {
  nlohmann::ordered_json m;
  m["version"] = kVersion;
  m["config"] = to_json(config);
  for (const auto& [k, v] : extra.items()) m[k] = v;
  std::ofstream out(path);
  if (!out) throw std::runtime_error(path.string() + ": cannot open for writing");
  out << m.dump(2) << '\n';
  if (!out) throw std::runtime_error(path.string() + ": write failed");
}

/// field.csv and truth_accel.csv for a field belief.
inline void export_field(const FieldBelief& belief, const ExperimentContext& ctx, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  write_field_csv(out_dir / "field.csv", tabulate_field(ctx.grid, ctx.params, belief));
  write_truth_accel_csv(out_dir / "truth_accel.csv", ctx.paths, ctx.config.speed);
}

/// runs.csv, errors.csv, trajectories.csv, field_rmse.csv, field.csv (final
/// field of run 0), truth_accel.csv and manifest.json.
inline void export_results(const ExperimentResult& result, const std::filesystem::path& out_dir,
                           const nlohmann::ordered_json& manifest_extra = {}) {
  std::filesystem::create_directories(out_dir);
  {
    const auto path = out_dir / "runs.csv";
    auto out = detail::open_csv(path);
    out << "run,vehicle,path,rmse_gpassm,rmse_cv\n";
    for (const auto& r : result.runs)
      for (const auto& v : r.vehicles)
        out << r.run << ',' << v.vehicle << ',' << to_string(v.label) << ',' << v.rmse_gpassm << ',' << v.rmse_cv << '\n';
    detail::close_csv(out, path);
  }
  {
    const auto path = out_dir / "errors.csv";
    auto out = detail::open_csv(path);
    out << "run,vehicle,step,err_gpassm,err_cv\n";
    for (const auto& r : result.runs)
      for (const auto& v : r.vehicles)
        for (std::size_t k = 0; k < v.steps(); ++k)
          out << r.run << ',' << v.vehicle << ',' << k + 1 << ',' << v.err_gpassm[k] << ',' << v.err_cv[k] << '\n';
    detail::close_csv(out, path);
  }
  {
    const auto path = out_dir / "trajectories.csv";
    auto out = detail::open_csv(path);
    out << "run,vehicle,path,step,true_px,true_py,meas_x,meas_y,gpassm_px,gpassm_py,cv_px,cv_py\n";
    for (const auto& r : result.runs)
      for (const auto& v : r.vehicles)
        for (std::size_t k = 0; k < v.steps(); ++k) {
          const auto& t = v.truth[k + 1];
          const auto& y = v.measurements[k + 1];
          out << r.run << ',' << v.vehicle << ',' << to_string(v.label) << ',' << k + 1 << ',' << t(0) << ',' << t(1)
              << ',' << y(0) << ',' << y(1) << ',' << v.gpassm[k](0) << ',' << v.gpassm[k](1) << ','
              << v.baseline[k](0) << ',' << v.baseline[k](1) << '\n';
        }
    detail::close_csv(out, path);
  }
  {
    const auto path = out_dir / "field_rmse.csv";
    auto out = detail::open_csv(path);
    out << "run,vehicles_seen,field_rmse\n";
    for (const auto& r : result.runs)
      for (std::size_t i = 0; i < r.field_rmse.size(); ++i) out << r.run << ',' << i << ',' << r.field_rmse[i] << '\n';
    detail::close_csv(out, path);
  }
  if (!result.runs.empty() && !result.runs.front().final_field.empty())
    write_field_csv(out_dir / "field.csv", result.runs.front().final_field);
  write_truth_accel_csv(out_dir / "truth_accel.csv", build_paths(result.config), result.config.speed);
  write_manifest(out_dir / "manifest.json", result.config, manifest_extra);
}

}  // namespace gpassm
