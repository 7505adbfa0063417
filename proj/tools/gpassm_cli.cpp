// Command-line front end: simulate, field, validate-config, oracle-check.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "gpassm/harness.hpp"
#include "gpassm/testing/oracles.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitNumerical = 2;

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> runs;
  std::optional<int> vehicles;
  std::optional<int> threads;
};

gpassm::ScenarioConfig effective_config(const std::string& path, const Overrides& o) {
  gpassm::ScenarioConfig c = path.empty() ? gpassm::ScenarioConfig{} : gpassm::load_config(path);
  if (o.seed) c.rng_seed = *o.seed;
  if (o.runs) c.n_runs = *o.runs;
  if (o.vehicles) c.n_vehicles = *o.vehicles;
  if (o.threads) c.threads = *o.threads;
  c.validate();
  return c;
}

void print_summary(const gpassm::ExperimentResult& result) {
  double first_gp = 0, first_cv = 0, last_gp = 0, last_cv = 0, field = 0;
  for (const auto& r : result.runs) {
    const auto first = gpassm::cohort_mean(r, false);
    const auto last = gpassm::cohort_mean(r, true);
    first_gp += first.gpassm;
    first_cv += first.cv;
    last_gp += last.gpassm;
    last_cv += last.cv;
    field += r.field_rmse.back();
  }
  const double m = static_cast<double>(result.runs.size());
  const auto all = result.overall();
  std::printf("%-28s %12s %12s\n", "position RMSE [m]", "gpassm", "cv");
  std::printf("%-28s %12.4f %12.4f\n", "all vehicles", all.gpassm, all.cv);
  std::printf("%-28s %12.4f %12.4f\n", "first vehicle per path", first_gp / m, first_cv / m);
  std::printf("%-28s %12.4f %12.4f\n", "last vehicle per path", last_gp / m, last_cv / m);
  const auto bias = gpassm::turn_bias(result.runs, 10);
  std::printf("%-28s %12.4f %12.4f\n", "turn bias, last 10 [m]", bias.gpassm, bias.cv);
  std::printf("%-28s %12.4f\n", "final field RMSE [m/s^2]", field / m);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gaussian-process augmented state-space model: intersection experiment"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  Overrides overrides;
  bool baseline_only = false;
  int after_vehicle = -1;

  auto* simulate = app.add_subcommand("simulate", "Run the Monte Carlo experiment and write CSV results");
  simulate->add_option("--config", config_path, "Configuration file (JSON)");
  simulate->add_option("--out", out_dir, "Output directory")->required();
  simulate->add_option("--seed", overrides.seed, "Master seed override");
  simulate->add_option("--runs", overrides.runs, "Number of Monte Carlo runs override");
  simulate->add_option("--vehicles", overrides.vehicles, "Vehicles per run override");
  simulate->add_option("--threads", overrides.threads, "Worker threads (0: all cores)");
  simulate->add_flag("--baseline-only", baseline_only, "Run only the constant-velocity baseline");

  auto* field = app.add_subcommand("field", "Export the learned field after a number of vehicles");
  field->add_option("--config", config_path, "Configuration file (JSON)");
  field->add_option("--out", out_dir, "Output directory")->required();
  field->add_option("--seed", overrides.seed, "Master seed override");
  field->add_option("--vehicles", overrides.vehicles, "Vehicles per run override");
  field->add_option("--after-vehicle", after_vehicle, "Number of vehicles processed before export (default: all)");

  auto* validate = app.add_subcommand("validate-config", "Check a configuration file and print the effective values");
  validate->add_option("--config", config_path, "Configuration file (JSON)")->required();

  auto* oracle = app.add_subcommand("oracle-check", "Run the dense and finite-difference reference checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*validate) {
      const auto c = effective_config(config_path, overrides);
      const gpassm::ExperimentContext ctx(c);
      std::cout << gpassm::to_json(c).dump(2) << "\ninducing points: " << ctx.grid.size() << '\n';
      return kExitOk;
    }

    if (*oracle) {
      using namespace gpassm::testing;
      const auto params = gpassm::KernelParams::with_default_jitter(0.05, 0.5);
      std::vector<CheckResult> checks;
      for (int n : {2, 4, 6}) checks.push_back(check_jacobian_fd(toy_grid(n, params), params, 20, 7u + n));
      for (int n : {2, 6}) checks.push_back(check_dense_filter(n, 20, 11u + n));
      for (int n : {3, 6}) checks.push_back(check_batch_fic(n, 15, 13u + n));
      bool ok = true;
      for (const auto& c : checks) {
        std::printf("[%s] %s (error %.3e, tolerance %.1e)\n", c.passed ? "PASS" : "FAIL", c.name.c_str(), c.error,
                    c.tolerance);
        ok = ok && c.passed;
      }
      return ok ? kExitOk : kExitNumerical;
    }

    const auto c = effective_config(config_path, overrides);
    nlohmann::ordered_json extra;
    extra["command"] = simulate->parsed() ? "simulate" : "field";
    extra["seed"] = c.rng_seed;

    if (*simulate) {
      gpassm::RunOptions opt;
      opt.baseline_only = baseline_only;
      extra["baseline_only"] = baseline_only;
      const auto result = gpassm::run_experiment(c, opt);
      gpassm::export_results(result, out_dir, extra);
      print_summary(result);
      return kExitOk;
    }

    if (after_vehicle < 0) after_vehicle = c.n_vehicles;
    if (after_vehicle > c.n_vehicles) {
      std::cerr << "--after-vehicle " << after_vehicle << " exceeds n_vehicles " << c.n_vehicles << '\n';
      return kExitConfig;
    }
    const gpassm::ExperimentContext ctx(c);
    gpassm::RunOptions opt;
    opt.vehicle_limit = after_vehicle;
    const auto run = gpassm::run_single(ctx, 0, opt);
    std::filesystem::create_directories(out_dir);
    gpassm::write_field_csv(std::filesystem::path(out_dir) / "field.csv", run.final_field);
    gpassm::write_truth_accel_csv(std::filesystem::path(out_dir) / "truth_accel.csv", ctx.paths, c.speed);
    extra["after_vehicle"] = after_vehicle;
    gpassm::write_manifest(std::filesystem::path(out_dir) / "manifest.json", c, extra);
    std::printf("field RMSE after %d vehicles: %.4f m/s^2\n", after_vehicle, run.field_rmse.back());
    return kExitOk;
  } catch (const gpassm::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const gpassm::InvalidArgument& e) {
    std::cerr << "invalid argument: " << e.what() << '\n';
    return kExitConfig;
  } catch (const gpassm::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumerical;
  }
}
