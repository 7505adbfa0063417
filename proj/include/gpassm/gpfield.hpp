#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "gpassm/errors.hpp"
#include "gpassm/kernel.hpp"

namespace gpassm {

/// Number of input components carried per inducing point (planar acceleration).
inline constexpr Eigen::Index kInputDim = 2;

/// Closed axis-aligned rectangle.
struct Rect {
  double x_min = 0.0;
  double x_max = 0.0;
  double y_min = 0.0;
  double y_max = 0.0;

  [[nodiscard]] bool contains(const Point2& p, double tol = 1e-9) const {
    return p.x() >= x_min - tol && p.x() <= x_max + tol && p.y() >= y_min - tol &&
           p.y() <= y_max + tol;
  }
  [[nodiscard]] bool empty() const { return !(x_max >= x_min) || !(y_max >= y_min); }
};

/// Union of rectangles; the inducing grid covers exactly the lattice nodes inside it.
struct Region {
  std::vector<Rect> rects;

  [[nodiscard]] bool contains(const Point2& p) const {
    return std::any_of(rects.begin(), rects.end(), [&](const Rect& r) { return r.contains(p); });
  }
  [[nodiscard]] bool empty() const {
    return std::all_of(rects.begin(), rects.end(), [](const Rect& r) { return r.empty(); });
  }
};

/// Fixed inducing points with their cached Gram factorization. The Gram
/// matrix belongs to the kernel parameters given at construction; the grid is
/// immutable and may be shared between threads.
class InducingGrid {
 public:
  InducingGrid(std::vector<Point2> points, double spacing, const KernelParams& params)
      : points_(std::move(points)), spacing_(spacing), params_(params) {
    params_.validate();
    if (points_.empty()) throw InvalidArgument("InducingGrid: no inducing points");
    factor_ = std::make_shared<const GramFactor>(gram_matrix(params_, points_));
  }

  [[nodiscard]] std::span<const Point2> points() const { return points_; }
  [[nodiscard]] Eigen::Index size() const { return static_cast<Eigen::Index>(points_.size()); }
  /// Dimension of the whitened inducing state, 2L.
  [[nodiscard]] Eigen::Index state_dim() const { return kInputDim * size(); }
  [[nodiscard]] double spacing() const { return spacing_; }
  [[nodiscard]] const KernelParams& params() const { return params_; }
  [[nodiscard]] const GramFactor& factor() const { return *factor_; }

 private:
  std::vector<Point2> points_;
  double spacing_;
  KernelParams params_;
  std::shared_ptr<const GramFactor> factor_;
};

/// Gaussian belief over the whitened inducing state u' = Kuu^{-1} u, stored
/// with point-major ordering: entries (2l, 2l+1) are the two input
/// components at inducing point l. An empty `drift_cov` means no drift.
struct FieldBelief {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
  Eigen::MatrixXd drift_cov;
};

/// Lattice nodes at integer multiples of `spacing` that fall inside `region`,
/// ordered row-major (by y, then x).
inline InducingGrid build_grid(const KernelParams& params, const Region& region, double spacing) {
  if (!(spacing > 0.0) || !std::isfinite(spacing))
    throw InvalidArgument("build_grid: spacing must be positive");
  if (region.rects.empty() || region.empty()) throw InvalidArgument("build_grid: empty region");

  double x_lo = INFINITY, x_hi = -INFINITY, y_lo = INFINITY, y_hi = -INFINITY;
  for (const auto& r : region.rects) {
    if (r.empty()) continue;
    x_lo = std::min(x_lo, r.x_min);
    x_hi = std::max(x_hi, r.x_max);
    y_lo = std::min(y_lo, r.y_min);
    y_hi = std::max(y_hi, r.y_max);
  }
  constexpr double eps = 1e-9;
  const auto i_lo = static_cast<long>(std::ceil(x_lo / spacing - eps));
  const auto i_hi = static_cast<long>(std::floor(x_hi / spacing + eps));
  const auto j_lo = static_cast<long>(std::ceil(y_lo / spacing - eps));
  const auto j_hi = static_cast<long>(std::floor(y_hi / spacing + eps));

  std::vector<Point2> points;
  for (long j = j_lo; j <= j_hi; ++j) {
    for (long i = i_lo; i <= i_hi; ++i) {
      const Point2 p(static_cast<double>(i) * spacing, static_cast<double>(j) * spacing);
      if (region.contains(p)) points.push_back(p);
    }
  }
  if (points.empty()) throw InvalidArgument("build_grid: region contains no lattice nodes");
  return InducingGrid(std::move(points), spacing, params);
}

/// Expands an L x L matrix M to M (x) I_2 in point-major ordering.
inline Eigen::MatrixXd kron_input(const Eigen::MatrixXd& m) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(kInputDim * m.rows(), kInputDim * m.cols());
  for (Eigen::Index c = 0; c < m.cols(); ++c)
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index j = 0; j < kInputDim; ++j) out(kInputDim * r + j, kInputDim * c + j) = m(r, c);
  return out;
}

/// u' ~ N(0, Kuu^{-1} (x) I_2).
inline FieldBelief prior_belief(const InducingGrid& grid) {
  FieldBelief belief;
  belief.mean = Eigen::VectorXd::Zero(grid.state_dim());
  Eigen::MatrixXd inv = grid.factor().inverse();
  inv = (0.5 * (inv + inv.transpose())).eval();
  belief.covariance = kron_input(inv);
  return belief;
}

inline FieldBelief prior_belief(const InducingGrid& grid, double drift_var) {
  FieldBelief belief = prior_belief(grid);
  if (drift_var < 0.0) throw InvalidArgument("prior_belief: drift variance must be non-negative");
  if (drift_var > 0.0)
    belief.drift_cov = drift_var * Eigen::MatrixXd::Identity(grid.state_dim(), grid.state_dim());
  return belief;
}

/// Mean input at z: sum_l k(z, xi_l) u'_l, given the whitened inducing mean.
inline Eigen::Vector2d input_mean(const InducingGrid& grid, const KernelParams& params,
                                  const Eigen::Ref<const Eigen::VectorXd>& whitened_mean,
                                  const Point2& z) {
  if (whitened_mean.size() != grid.state_dim())
    throw InvalidArgument("input_mean: belief dimension does not match grid");
  const Eigen::RowVectorXd k = cross_covariance(params, z, grid.points());
  const Eigen::Map<const Eigen::Matrix<double, kInputDim, Eigen::Dynamic>> blocks(
      whitened_mean.data(), kInputDim, grid.size());
  return blocks * k.transpose();
}

inline Eigen::Vector2d input_mean(const InducingGrid& grid, const KernelParams& params,
                                  const FieldBelief& belief, const Point2& z) {
  return input_mean(grid, params, belief.mean, z);
}

/// Residual FIC variance lambda(z) = k(z,z) - K(z,xi) Kuu^{-1} K(xi,z).
/// The 2-D input noise covariance is lambda(z) * I_2.
inline double fic_variance(const InducingGrid& grid, const KernelParams& params, const Point2& z) {
  const Eigen::RowVectorXd k = cross_covariance(params, z, grid.points());
  const double lambda = kernel_eval(params, z, z) - grid.factor().quadratic_form(k);
  if (lambda < 0.0) {
    if (lambda < -1e-12 * params.sigma_f_sq)
      throw NumericalError("fic_variance: negative residual variance " + std::to_string(lambda));
    return 0.0;
  }
  return lambda;
}

/// Random-walk time update: covariance += Sigma.
inline FieldBelief drift(FieldBelief belief) {
  if (belief.drift_cov.size() != 0) belief.covariance += belief.drift_cov;
  return belief;
}

/// Linear-Gaussian update for a direct, noisy observation of the input at z.
/// Observation matrix K(z, xi) (x) I_2, noise (lambda(z) + noise_var) I_2.
inline FieldBelief condition_on_input_observation(const InducingGrid& grid,
                                                  const KernelParams& params, FieldBelief belief,
                                                  const Point2& z, const Eigen::Vector2d& u_obs,
                                                  double noise_var) {
  if (!(noise_var > 0.0)) throw InvalidArgument("condition_on_input_observation: noise_var must be > 0");
  const Eigen::RowVectorXd k = cross_covariance(params, z, grid.points());
  const Eigen::Index n = grid.state_dim();

  // P H^T, where H = k (x) I_2 has two rows.
  Eigen::MatrixXd pht(n, kInputDim);
  for (Eigen::Index j = 0; j < kInputDim; ++j) {
    pht.col(j).setZero();
    for (Eigen::Index l = 0; l < grid.size(); ++l) {
      if (k(l) != 0.0) pht.col(j) += k(l) * belief.covariance.col(kInputDim * l + j);
    }
  }
  Eigen::Matrix2d s;
  Eigen::Vector2d predicted;
  for (Eigen::Index j = 0; j < kInputDim; ++j) {
    predicted(j) = 0.0;
    for (Eigen::Index l = 0; l < grid.size(); ++l) predicted(j) += k(l) * belief.mean(kInputDim * l + j);
    for (Eigen::Index i = 0; i < kInputDim; ++i) {
      double acc = 0.0;
      for (Eigen::Index l = 0; l < grid.size(); ++l) acc += k(l) * pht(kInputDim * l + i, j);
      s(i, j) = acc;
    }
  }
  s += (fic_variance(grid, params, z) + noise_var) * Eigen::Matrix2d::Identity();
  s = (0.5 * (s + s.transpose())).eval();

  Eigen::LLT<Eigen::Matrix2d> llt(s);
  if (llt.info() != Eigen::Success)
    throw NumericalError("condition_on_input_observation: innovation covariance not positive definite");
  const Eigen::MatrixXd gain = llt.solve(pht.transpose()).transpose();

  belief.mean += gain * (u_obs - predicted);
  belief.covariance.noalias() -= gain * pht.transpose();
  belief.covariance = 0.5 * (belief.covariance + belief.covariance.transpose()).eval();
  return belief;
}

/// One row of a field table: inducing coordinate, mean input there, and the
/// predictive variance averaged over the two input components.
struct FieldRow {
  double xi_x = 0.0;
  double xi_y = 0.0;
  double mean_ax = 0.0;
  double mean_ay = 0.0;
  double var = 0.0;
};

/// Evaluates the field at every inducing point. `covariance` is the
/// whitened-state covariance (2L x 2L).
inline std::vector<FieldRow> tabulate_field(const InducingGrid& grid, const KernelParams& params,
                                            const Eigen::Ref<const Eigen::VectorXd>& mean,
                                            const Eigen::Ref<const Eigen::MatrixXd>& covariance) {
  // Rows of H = K(xi, xi) (x) I_2 map the whitened state to the input at
  // each inducing point.
  Eigen::MatrixXd k_xi(grid.size(), grid.size());
  for (Eigen::Index l = 0; l < grid.size(); ++l)
    k_xi.row(l) = cross_covariance(params, grid.points()[static_cast<std::size_t>(l)], grid.points());
  const Eigen::MatrixXd h = kron_input(k_xi);
  const Eigen::VectorXd inputs = h * mean;
  const Eigen::VectorXd var = (h * covariance).cwiseProduct(h).rowwise().sum();

  std::vector<FieldRow> rows;
  rows.reserve(static_cast<std::size_t>(grid.size()));
  for (Eigen::Index l = 0; l < grid.size(); ++l) {
    const Point2& xi = grid.points()[static_cast<std::size_t>(l)];
    const double lambda = fic_variance(grid, params, xi);
    const double v = 0.5 * (var(kInputDim * l) + var(kInputDim * l + 1)) + lambda;
    rows.push_back({xi.x(), xi.y(), inputs(kInputDim * l), inputs(kInputDim * l + 1), v});
  }
  return rows;
}

inline std::vector<FieldRow> tabulate_field(const InducingGrid& grid, const KernelParams& params,
                                            const FieldBelief& belief) {
  return tabulate_field(grid, params, belief.mean, belief.covariance);
}

}  // namespace gpassm
