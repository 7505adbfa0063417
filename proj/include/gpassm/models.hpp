#pragma once

#include <Eigen/Dense>

#include "gpassm/errors.hpp"
#include "gpassm/gpfield.hpp"
#include "gpassm/kernel.hpp"

namespace gpassm {

/// Kinematic state (p_x, p_y, v_x, v_y).
inline constexpr Eigen::Index kKinDim = 4;

using KinVector = Eigen::Matrix<double, kKinDim, 1>;
using KinMatrix = Eigen::Matrix<double, kKinDim, kKinDim>;
using InputGain = Eigen::Matrix<double, kKinDim, kInputDim>;

/// Constant-velocity model x+ = F x + G u.
struct MotionModel {
  KinMatrix F;
  InputGain G;
  double sampling_interval = 0.0;
};

/// Position measurement y = [I 0 ... 0] x + e, e ~ N(0, r I).
struct ObservationModel {
  double r = 1.0;

  [[nodiscard]] Eigen::Matrix2d R() const { return r * Eigen::Matrix2d::Identity(); }

  /// Dense 2 x state_dim selector.
  [[nodiscard]] Eigen::MatrixXd H(Eigen::Index state_dim) const {
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(2, state_dim);
    h(0, 0) = 1.0;
    h(1, 1) = 1.0;
    return h;
  }
};

/// z = D x: the input is evaluated at the vehicle position.
inline Point2 input_location(const Eigen::Ref<const Eigen::VectorXd>& state) {
  return state.head<2>();
}

inline Eigen::Matrix<double, 2, kKinDim> input_selector() {
  Eigen::Matrix<double, 2, kKinDim> d = Eigen::Matrix<double, 2, kKinDim>::Zero();
  d(0, 0) = 1.0;
  d(1, 1) = 1.0;
  return d;
}

inline MotionModel cv_matrices(double sampling_interval) {
  const double t = sampling_interval;
  if (!(t > 0.0) || !std::isfinite(t)) throw InvalidArgument("cv_matrices: sampling interval must be positive");
  MotionModel m;
  m.sampling_interval = t;
  m.F.setIdentity();
  m.F(0, 2) = t;
  m.F(1, 3) = t;
  m.G.setZero();
  m.G(0, 0) = 0.5 * t * t;
  m.G(1, 1) = 0.5 * t * t;
  m.G(2, 0) = t;
  m.G(3, 1) = t;
  return m;
}

/// Jacobian of the augmented transition in block form
///   [ kin   field ]
///   [  0      I   ]
/// `kin` is 4 x 4 and `field` is 4 x 2L.
struct TransitionJacobian {
  KinMatrix kin;
  Eigen::Matrix<double, kKinDim, Eigen::Dynamic> field;

  [[nodiscard]] Eigen::MatrixXd dense() const {
    const Eigen::Index n = kKinDim + field.cols();
    Eigen::MatrixXd j = Eigen::MatrixXd::Identity(n, n);
    j.topLeftCorner<kKinDim, kKinDim>() = kin;
    j.topRightCorner(kKinDim, field.cols()) = field;
    return j;
  }
};

/// Mean of [x+; u'+] for the augmented model. The inducing mean is carried
/// through unchanged (random walk).
inline Eigen::VectorXd augmented_transition_mean(const MotionModel& model, const InducingGrid& grid,
                                                 const KernelParams& params,
                                                 const Eigen::Ref<const Eigen::VectorXd>& aug_mean) {
  if (aug_mean.size() != kKinDim + grid.state_dim())
    throw InvalidArgument("augmented_transition_mean: state dimension does not match grid");
  const KinVector x = aug_mean.head<kKinDim>();
  const Eigen::Vector2d u = input_mean(grid, params, aug_mean.tail(grid.state_dim()), input_location(aug_mean));
  Eigen::VectorXd next = aug_mean;
  next.head<kKinDim>() = model.F * x + model.G * u;
  return next;
}

/// Analytic Jacobian of augmented_transition_mean.
///   kin   = F + G (du/dz) D,  du/dz = sum_l u'_l grad_z k(z, xi_l)^T
///   field = G (K(z, xi) (x) I_2)
inline TransitionJacobian augmented_transition_jacobian(const MotionModel& model, const InducingGrid& grid,
                                                        const KernelParams& params,
                                                        const Eigen::Ref<const Eigen::VectorXd>& aug_mean) {
  if (aug_mean.size() != kKinDim + grid.state_dim())
    throw InvalidArgument("augmented_transition_jacobian: state dimension does not match grid");
  const Point2 z = input_location(aug_mean);
  const auto points = grid.points();
  const auto n_points = grid.size();
  const double ls2 = params.length_scale * params.length_scale;
  const double floor = params.locality_floor * params.sigma_f_sq;

  TransitionJacobian jac;
  jac.field.resize(kKinDim, grid.state_dim());
  Eigen::Matrix2d du_dz = Eigen::Matrix2d::Zero();
  for (Eigen::Index l = 0; l < n_points; ++l) {
    const Point2& xi = points[static_cast<std::size_t>(l)];
    double k = kernel_eval(params, z, xi);
    if (k < floor) k = 0.0;
    jac.field.middleCols<kInputDim>(kInputDim * l) = k * model.G;
    if (k != 0.0) {
      const Eigen::Vector2d grad = -(k / ls2) * (z - xi);
      du_dz += aug_mean.segment<kInputDim>(kKinDim + kInputDim * l) * grad.transpose();
    }
  }
  jac.kin = model.F + model.G * du_dz * input_selector();
  return jac;
}

/// Process noise of the augmented model in block form: the kinematic block
/// is lambda(z) G G^T and the field block is the drift covariance.
struct AugmentedNoise {
  KinMatrix kin;
  double lambda = 0.0;
};

inline AugmentedNoise augmented_process_noise_blocks(const MotionModel& model, const InducingGrid& grid,
                                                     const KernelParams& params, const Point2& z) {
  AugmentedNoise q;
  q.lambda = fic_variance(grid, params, z);
  q.kin = q.lambda * model.G * model.G.transpose();
  return q;
}

/// Dense blockdiag(lambda(z) G G^T, Sigma). An empty `drift_cov` is zero.
inline Eigen::MatrixXd augmented_process_noise(const MotionModel& model, const InducingGrid& grid,
                                               const KernelParams& params,
                                               const Eigen::Ref<const Eigen::MatrixXd>& drift_cov,
                                               const Point2& z) {
  const Eigen::Index n = kKinDim + grid.state_dim();
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(n, n);
  q.topLeftCorner<kKinDim, kKinDim>() = augmented_process_noise_blocks(model, grid, params, z).kin;
  if (drift_cov.size() != 0) {
    if (drift_cov.rows() != grid.state_dim() || drift_cov.cols() != grid.state_dim())
      throw InvalidArgument("augmented_process_noise: drift covariance has wrong shape");
    q.bottomRightCorner(grid.state_dim(), grid.state_dim()) = drift_cov;
  }
  return q;
}

}  // namespace gpassm
