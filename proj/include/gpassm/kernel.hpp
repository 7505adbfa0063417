#pragma once

#include <cmath>
#include <span>
#include <sstream>
#include <vector>

#include <Eigen/Dense>

#include "gpassm/errors.hpp"

namespace gpassm {

using Point2 = Eigen::Vector2d;

/// Hyperparameters of the squared-exponential kernel
///   k(z, z') = sigma_f_sq * exp(-|z - z'|^2 / (2 l^2)).
/// `jitter` is an absolute value added to Gram diagonals only.
struct KernelParams {
  double sigma_f_sq = 0.05;
  double length_scale = 0.5;
  double jitter = 1e-9 * 0.05;
  /// When > 0, kernel values below `locality_floor * sigma_f_sq` are
  /// truncated to zero in cross-covariance rows. Disabled by default.
  double locality_floor = 0.0;

  static KernelParams with_default_jitter(double sigma_f_sq, double length_scale) {
    return KernelParams{sigma_f_sq, length_scale, 1e-9 * sigma_f_sq, 0.0};
  }

  void validate() const {
    if (!(sigma_f_sq > 0.0) || !std::isfinite(sigma_f_sq))
      throw InvalidArgument("kernel: sigma_f_sq must be positive and finite");
    if (!(length_scale > 0.0) || !std::isfinite(length_scale))
      throw InvalidArgument("kernel: length_scale must be positive and finite");
    if (!(jitter >= 0.0) || !std::isfinite(jitter))
      throw InvalidArgument("kernel: jitter must be non-negative");
    if (!(locality_floor >= 0.0)) throw InvalidArgument("kernel: locality_floor must be non-negative");
  }
};

namespace detail {

inline void require_finite(const Point2& p, const char* who) {
  if (!std::isfinite(p.x()) || !std::isfinite(p.y()))
    throw InvalidArgument(std::string(who) + ": non-finite coordinate");
}

}  // namespace detail

inline double kernel_eval(const KernelParams& params, const Point2& z, const Point2& z_star) {
  detail::require_finite(z, "kernel_eval");
  detail::require_finite(z_star, "kernel_eval");
  const double ls2 = params.length_scale * params.length_scale;
  return params.sigma_f_sq * std::exp(-(z - z_star).squaredNorm() / (2.0 * ls2));
}

/// Gradient of k(z, z_star) with respect to its first argument.
inline Eigen::Vector2d kernel_grad(const KernelParams& params, const Point2& z, const Point2& z_star) {
  const double k = kernel_eval(params, z, z_star);
  const double ls2 = params.length_scale * params.length_scale;
  return -(k / ls2) * (z - z_star);
}

/// K(points, points) + jitter * I.
inline Eigen::MatrixXd gram_matrix(const KernelParams& params, std::span<const Point2> points) {
  if (points.empty()) throw InvalidArgument("gram_matrix: empty point list");
  const auto n = static_cast<Eigen::Index>(points.size());
  Eigen::MatrixXd gram(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    gram(i, i) = kernel_eval(params, points[i], points[i]) + params.jitter;
    for (Eigen::Index j = 0; j < i; ++j) {
      const double k = kernel_eval(params, points[i], points[j]);
      gram(i, j) = k;
      gram(j, i) = k;
    }
  }
  return gram;
}

/// Row vector K(z, points). No jitter.
inline Eigen::RowVectorXd cross_covariance(const KernelParams& params, const Point2& z,
                                           std::span<const Point2> points) {
  if (points.empty()) throw InvalidArgument("cross_covariance: empty point list");
  Eigen::RowVectorXd row(static_cast<Eigen::Index>(points.size()));
  const double floor = params.locality_floor * params.sigma_f_sq;
  for (std::size_t l = 0; l < points.size(); ++l) {
    double k = kernel_eval(params, z, points[l]);
    if (k < floor) k = 0.0;
    row(static_cast<Eigen::Index>(l)) = k;
  }
  return row;
}

/// Cholesky factor of a Gram matrix. Immutable after construction.
class GramFactor {
 public:
  GramFactor() = default;

  explicit GramFactor(Eigen::MatrixXd gram) : gram_(std::move(gram)), llt_(gram_) {
    if (llt_.info() != Eigen::Success || !llt_.matrixL().toDenseMatrix().allFinite() ||
        (llt_.matrixLLT().diagonal().array() <= 0.0).any()) {
      throw NumericalError("gram factorization failed: " + diagnostics());
    }
  }

  [[nodiscard]] const Eigen::MatrixXd& gram() const { return gram_; }
  [[nodiscard]] Eigen::Index size() const { return gram_.rows(); }

  template <typename Rhs>
  [[nodiscard]] Eigen::MatrixXd solve(const Eigen::MatrixBase<Rhs>& rhs) const {
    return llt_.solve(rhs);
  }

  /// Gram^{-1}, formed once from the factor.
  [[nodiscard]] Eigen::MatrixXd inverse() const {
    return llt_.solve(Eigen::MatrixXd::Identity(size(), size()));
  }

  /// q(z) = k K^{-1} k^T for a cross-covariance row k.
  [[nodiscard]] double quadratic_form(const Eigen::RowVectorXd& k) const {
    const Eigen::VectorXd w = llt_.matrixL().solve(k.transpose());
    return w.squaredNorm();
  }

 private:
  [[nodiscard]] std::string diagnostics() const {
    std::ostringstream out;
    out << "size " << gram_.rows();
    if (gram_.size() > 0) {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram_, Eigen::EigenvaluesOnly);
      const double lo = eig.eigenvalues().minCoeff();
      const double hi = eig.eigenvalues().maxCoeff();
      out << ", eigenvalue range [" << lo << ", " << hi << "]";
      if (lo > 0.0) out << ", condition " << hi / lo;
      else out << ", matrix not positive definite; increase jitter";
    }
    return out.str();
  }

  Eigen::MatrixXd gram_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
};

}  // namespace gpassm
