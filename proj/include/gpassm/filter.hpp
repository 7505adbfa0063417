#pragma once

#include <Eigen/Dense>

#include "gpassm/errors.hpp"
#include "gpassm/gpfield.hpp"
#include "gpassm/models.hpp"

namespace gpassm {

/// Joint Gaussian belief over [x; u'] with dimension 4 + 2L.
struct AugmentedBelief {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
  long step = 0;

  [[nodiscard]] Eigen::Index field_dim() const { return mean.size() - kKinDim; }
  [[nodiscard]] KinVector kinematic_mean() const { return mean.head<kKinDim>(); }
  [[nodiscard]] KinMatrix kinematic_covariance() const { return covariance.topLeftCorner<kKinDim, kKinDim>(); }
};

/// How a measurement update treats the field block.
enum class FieldMode {
  learn,   ///< joint update of vehicle and field
  frozen,  ///< field left at its current belief; vehicle-field cross terms dropped
};

/// Vehicle state at `x0` with covariance `p0_kin`, field taken from `field`.
inline AugmentedBelief make_belief(const FieldBelief& field, const KinVector& x0, const KinMatrix& p0_kin) {
  const Eigen::Index nf = field.mean.size();
  AugmentedBelief b;
  b.mean.resize(kKinDim + nf);
  b.mean.head<kKinDim>() = x0;
  b.mean.tail(nf) = field.mean;
  b.covariance = Eigen::MatrixXd::Zero(kKinDim + nf, kKinDim + nf);
  b.covariance.topLeftCorner<kKinDim, kKinDim>() = p0_kin;
  b.covariance.bottomRightCorner(nf, nf) = field.covariance;
  return b;
}

inline FieldBelief field_of(const AugmentedBelief& belief, const Eigen::MatrixXd& drift_cov = {}) {
  const Eigen::Index nf = belief.field_dim();
  return FieldBelief{belief.mean.tail(nf), belief.covariance.bottomRightCorner(nf, nf), drift_cov};
}

namespace detail {

inline void symmetrize(Eigen::MatrixXd& m) {
  const Eigen::Index n = m.rows();
  for (Eigen::Index c = 0; c < n; ++c) {
    for (Eigen::Index r = c + 1; r < n; ++r) {
      const double avg = 0.5 * (m(r, c) + m(c, r));
      m(r, c) = avg;
      m(c, r) = avg;
    }
  }
}

/// Mean, kinematic rows and the covariance diagonal; a non-finite value
/// anywhere else reaches these within one step.
inline void require_finite(const AugmentedBelief& b, const char* who) {
  if (!b.mean.allFinite() || !b.covariance.topRows(kKinDim).allFinite() || !b.covariance.diagonal().allFinite())
    throw NumericalError(std::string(who) + ": non-finite belief", b.step);
}

}  // namespace detail

/// EKF time update in place. Uses the block structure of the Jacobian so the
/// cost is O((4+2L)^2) rather than cubic.
inline void predict_in_place(AugmentedBelief& belief, const MotionModel& model, const InducingGrid& grid,
                             const KernelParams& params, const Eigen::MatrixXd& drift_cov = {}) {
  const Eigen::Index nf = grid.state_dim();
  if (belief.mean.size() != kKinDim + nf || belief.covariance.rows() != kKinDim + nf)
    throw InvalidArgument("predict: belief dimension does not match grid");

  const Point2 z = input_location(belief.mean);
  const TransitionJacobian jac = augmented_transition_jacobian(model, grid, params, belief.mean);
  const AugmentedNoise noise = augmented_process_noise_blocks(model, grid, params, z);
  belief.mean = augmented_transition_mean(model, grid, params, belief.mean);

  auto& p = belief.covariance;
  const KinMatrix pxx = p.topLeftCorner<kKinDim, kKinDim>();
  const Eigen::Matrix<double, kKinDim, Eigen::Dynamic> pxu = p.topRightCorner(kKinDim, nf);
  // B = G (k (x) I_2), so B Puu = G [(k (x) I_2) Puu].
  const Eigen::RowVectorXd k = cross_covariance(params, z, grid.points());
  Eigen::Matrix<double, kInputDim, Eigen::Dynamic> k_puu = Eigen::Matrix<double, kInputDim, Eigen::Dynamic>::Zero(kInputDim, nf);
  for (Eigen::Index l = 0; l < grid.size(); ++l) {
    if (k(l) == 0.0) continue;
    // Puu is symmetric: rows 2l, 2l+1 equal the transposed columns.
    k_puu.noalias() += k(l) * p.block(kKinDim, kKinDim + kInputDim * l, nf, kInputDim).transpose();
  }
  const Eigen::Matrix<double, kKinDim, Eigen::Dynamic> b_puu = model.G * k_puu;

  // [A B; 0 I] P [A B; 0 I]^T
  const Eigen::Matrix<double, kKinDim, Eigen::Dynamic> new_pxu = jac.kin * pxu + b_puu;
  const KinMatrix a_pxu_bt = jac.kin * pxu * jac.field.transpose();
  KinMatrix new_pxx = jac.kin * pxx * jac.kin.transpose() + a_pxu_bt + a_pxu_bt.transpose() +
                      b_puu * jac.field.transpose() + noise.kin;
  new_pxx = 0.5 * (new_pxx + new_pxx.transpose()).eval();

  p.topLeftCorner<kKinDim, kKinDim>() = new_pxx;
  p.topRightCorner(kKinDim, nf) = new_pxu;
  p.bottomLeftCorner(nf, kKinDim) = new_pxu.transpose();
  if (drift_cov.size() != 0) {
    if (drift_cov.rows() != nf || drift_cov.cols() != nf)
      throw InvalidArgument("predict: drift covariance has wrong shape");
    p.bottomRightCorner(nf, nf) += drift_cov;
  }
  ++belief.step;
  detail::require_finite(belief, "predict");
}

inline AugmentedBelief predict(AugmentedBelief belief, const MotionModel& model, const InducingGrid& grid,
                               const KernelParams& params, const Eigen::MatrixXd& drift_cov = {}) {
  predict_in_place(belief, model, grid, params, drift_cov);
  return belief;
}

/// Position measurement update in place, Joseph form
///   P+ = (I - K H) P (I - K H)^T + K R K^T,
/// expanded with rank-2 products since H only selects the position.
inline void update_in_place(AugmentedBelief& belief, const ObservationModel& obs, const Eigen::Vector2d& y,
                            FieldMode mode = FieldMode::learn) {
  if (!(obs.r > 0.0)) throw InvalidArgument("update: measurement variance must be positive");
  auto& p = belief.covariance;
  const Eigen::Index n = mode == FieldMode::learn ? p.rows() : kKinDim;

  Eigen::Matrix2d s = p.topLeftCorner<2, 2>() + obs.R();
  s = 0.5 * (s + s.transpose()).eval();
  Eigen::LLT<Eigen::Matrix2d> llt(s);
  if (llt.info() != Eigen::Success)
    throw NumericalError("update: innovation covariance not positive definite", belief.step);

  const Eigen::MatrixXd pht = p.topLeftCorner(n, 2);
  const Eigen::MatrixXd gain = llt.solve(pht.transpose()).transpose();  // n x 2
  const Eigen::Vector2d innovation = y - belief.mean.head<2>();
  belief.mean.head(n) += gain * innovation;

  // With M = (I - K H) P, the Joseph form is M - (M H^T) K^T + K R K^T and
  // M H^T = P H^T - K H P H^T. Collecting terms:
  //   P+ = P - K (P H^T)^T - (P H^T - K S) K^T,
  // applied as one rank-4 product. The second factor vanishes for the exact
  // optimal gain and carries the Joseph correction otherwise.
  Eigen::MatrixXd left(n, 4);
  Eigen::MatrixXd right(n, 4);
  left.leftCols<2>() = gain;
  left.rightCols<2>() = pht - gain * s;
  right.leftCols<2>() = pht;
  right.rightCols<2>() = gain;
  p.topLeftCorner(n, n).noalias() -= left * right.transpose();

  if (mode == FieldMode::frozen) {
    const Eigen::Index nf = p.rows() - kKinDim;
    p.topRightCorner(kKinDim, nf).setZero();
    p.bottomLeftCorner(nf, kKinDim).setZero();
  }
  detail::symmetrize(p);
  detail::require_finite(belief, "update");
}

inline AugmentedBelief update(AugmentedBelief belief, const ObservationModel& obs, const Eigen::Vector2d& y,
                              FieldMode mode = FieldMode::learn) {
  update_in_place(belief, obs, y, mode);
  return belief;
}

/// Starts a new vehicle: kinematic block reset, cross-covariances zeroed,
/// field mean and covariance left untouched.
inline void reinitialize_vehicle_in_place(AugmentedBelief& belief, const KinVector& x0, const KinMatrix& p0_kin) {
  const Eigen::Index nf = belief.field_dim();
  belief.mean.head<kKinDim>() = x0;
  belief.covariance.topLeftCorner<kKinDim, kKinDim>() = 0.5 * (p0_kin + p0_kin.transpose());
  belief.covariance.topRightCorner(kKinDim, nf).setZero();
  belief.covariance.bottomLeftCorner(nf, kKinDim).setZero();
  belief.step = 0;
}

inline AugmentedBelief reinitialize_vehicle(AugmentedBelief belief, const KinVector& x0, const KinMatrix& p0_kin) {
  reinitialize_vehicle_in_place(belief, x0, p0_kin);
  return belief;
}

/// Plain 4-state CV Kalman filter with white acceleration noise q G G^T.
/// This is the baseline without input learning.
struct KinematicBelief {
  KinVector mean;
  KinMatrix covariance;
};

inline KinematicBelief cv_predict(const KinematicBelief& b, const MotionModel& model, double accel_var) {
  KinematicBelief out;
  out.mean = model.F * b.mean;
  out.covariance = model.F * b.covariance * model.F.transpose() + accel_var * model.G * model.G.transpose();
  out.covariance = 0.5 * (out.covariance + out.covariance.transpose()).eval();
  return out;
}

inline KinematicBelief cv_update(const KinematicBelief& b, const ObservationModel& obs, const Eigen::Vector2d& y) {
  Eigen::Matrix<double, 2, kKinDim> h = Eigen::Matrix<double, 2, kKinDim>::Zero();
  h(0, 0) = 1.0;
  h(1, 1) = 1.0;
  const Eigen::Matrix2d s = h * b.covariance * h.transpose() + obs.R();
  const Eigen::Matrix<double, kKinDim, 2> gain = b.covariance * h.transpose() * s.inverse();
  const KinMatrix i_kh = KinMatrix::Identity() - gain * h;
  KinematicBelief out;
  out.mean = b.mean + gain * (y - h * b.mean);
  out.covariance = i_kh * b.covariance * i_kh.transpose() + gain * obs.R() * gain.transpose();
  out.covariance = 0.5 * (out.covariance + out.covariance.transpose()).eval();
  return out;
}

}  // namespace gpassm
