#include <algorithm>
#include <numeric>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "gpassm/models.hpp"
#include "gpassm/scenario.hpp"
#include "gpassm/testing/oracles.hpp"

namespace gpassm {
namespace {

const KernelParams kDefaultKernel = KernelParams::with_default_jitter(0.05, 0.5);
const KernelParams kExact{0.05, 0.5, 0.0, 0.0};

Eigen::VectorXd random_state(const InducingGrid& g, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::VectorXd x(4 + g.state_dim());
  for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = (i < 4 ? 1.0 : 10.0) * n(rng);
  return x;
}

TEST(CvMatrices, HalfSecondEntries) {
  const MotionModel m = cv_matrices(0.5);
  KinMatrix f;
  f << 1, 0, 0.5, 0, 0, 1, 0, 0.5, 0, 0, 1, 0, 0, 0, 0, 1;
  InputGain g;
  g << 0.125, 0, 0, 0.125, 0.5, 0, 0, 0.5;
  EXPECT_EQ(m.F, f);
  EXPECT_EQ(m.G, g);
}

TEST(CvMatrices, KroneckerStructure) {
  const double t = 0.37;
  const MotionModel m = cv_matrices(t);
  Eigen::Matrix2d base;
  base << 1, t, 0, 1;
  const Eigen::Vector2d gain(t * t / 2, t);
  const Eigen::Matrix<double, 4, 4> f_ref = Eigen::kroneckerProduct(base, Eigen::Matrix2d::Identity()).eval();
  const Eigen::Matrix<double, 4, 2> g_ref = Eigen::kroneckerProduct(gain, Eigen::Matrix2d::Identity()).eval();
  EXPECT_TRUE(m.F.isApprox(f_ref));
  EXPECT_TRUE(m.G.isApprox(g_ref));
  EXPECT_TRUE((m.F.bottomRightCorner<2, 2>() == Eigen::Matrix2d::Identity()));
}

TEST(CvMatrices, UnitStep) {
  const MotionModel m = cv_matrices(1.0);
  KinVector x;
  x << 0, 0, 1, 0;
  const KinVector next = m.F * x;
  EXPECT_EQ(next.head<2>(), Eigen::Vector2d(1, 0));
}

TEST(CvMatrices, RejectsNonPositiveInterval) {
  EXPECT_THROW(cv_matrices(0.0), InvalidArgument);
  EXPECT_THROW(cv_matrices(-0.5), InvalidArgument);
}

TEST(ObservationModel, SelectsPosition) {
  const ObservationModel obs{1.0};
  const Eigen::MatrixXd h = obs.H(10);
  Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(10, 1.0, 10.0);
  EXPECT_EQ(h * x, Eigen::Vector2d(1.0, 2.0));
  EXPECT_EQ(obs.R(), Eigen::Matrix2d::Identity());
}

TEST(TransitionMean, ZeroFieldIsConstantVelocity) {
  const InducingGrid g = testing::toy_grid(6, kDefaultKernel);
  const MotionModel m = cv_matrices(0.5);
  std::mt19937_64 rng(1);
  for (int t = 0; t < 20; ++t) {
    Eigen::VectorXd x = random_state(g, rng);
    x.tail(g.state_dim()).setZero();
    const Eigen::VectorXd next = augmented_transition_mean(m, g, kDefaultKernel, x);
    EXPECT_EQ(next.head<4>(), KinVector(m.F * x.head<4>()));
    EXPECT_EQ(next.tail(g.state_dim()), x.tail(g.state_dim()));
  }
}

TEST(TransitionMean, SinglePointUnderVehicle) {
  const InducingGrid g({{2.0, 3.0}}, 1.0, kExact);
  const MotionModel m = cv_matrices(0.5);
  Eigen::VectorXd x(6);
  x << 2.0, 3.0, 1.0, -1.0, 1.0, 0.0;
  const Eigen::VectorXd next = augmented_transition_mean(m, g, kExact, x);
  const KinVector expected = m.F * x.head<4>() + m.G * Eigen::Vector2d(0.05, 0.0);
  EXPECT_LT((next.head<4>() - expected).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(TransitionMean, MatchesDenseAssembly) {
  const InducingGrid g = testing::toy_grid(6, kDefaultKernel);
  const MotionModel m = cv_matrices(0.5);
  std::mt19937_64 rng(2);
  for (int t = 0; t < 20; ++t) {
    const Eigen::VectorXd x = random_state(g, rng);
    const Eigen::MatrixXd h = Eigen::kroneckerProduct(testing::dense_cross_row(g, kDefaultKernel, x.head<2>()),
                                                      Eigen::Matrix2d::Identity()).eval();
    const KinVector dense = m.F * x.head<4>() + m.G * (h * x.tail(g.state_dim()));
    EXPECT_LT((augmented_transition_mean(m, g, kDefaultKernel, x).head<4>() - dense).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(TransitionJacobian, ZeroFieldBlocks) {
  const InducingGrid g = testing::toy_grid(4, kDefaultKernel);
  const MotionModel m = cv_matrices(0.5);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(4 + g.state_dim());
  x.head<4>() << 0.4, 0.6, 1.0, 2.0;
  const TransitionJacobian j = augmented_transition_jacobian(m, g, kDefaultKernel, x);
  EXPECT_EQ(j.kin, m.F);
  const Eigen::MatrixXd expected = m.G * kron_input(testing::dense_cross_row(g, kDefaultKernel, x.head<2>()));
  EXPECT_LT((j.field - expected).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(TransitionJacobian, BottomRowsAreRandomWalk) {
  const InducingGrid g = testing::toy_grid(3, kDefaultKernel);
  std::mt19937_64 rng(4);
  const Eigen::MatrixXd j = augmented_transition_jacobian(cv_matrices(0.5), g, kDefaultKernel, random_state(g, rng)).dense();
  EXPECT_EQ(j.bottomLeftCorner(6, 4), Eigen::MatrixXd::Zero(6, 4));
  EXPECT_EQ(j.bottomRightCorner(6, 6), Eigen::MatrixXd::Identity(6, 6));
}

TEST(TransitionJacobian, MatchesFiniteDifferencesOnScenarioGrid) {
  ScenarioConfig c;
  c.approach_length = 6.0;
  c.grid_approach_length = 4.0;
  c.exit_length = 2.0;
  const InducingGrid g = build_scenario_grid(c);
  ASSERT_LE(g.size(), 120);
  const auto check = testing::check_jacobian_fd(g, c.kernel_params(), 50, 77, 1e-5);
  EXPECT_TRUE(check.passed) << "rel error " << check.error;
}

TEST(TransitionJacobian, LocalityFloorOnlyDropsNegligibleTerms) {
  const InducingGrid g = testing::toy_grid(6, kDefaultKernel, 3.0);
  KernelParams local = kDefaultKernel;
  local.locality_floor = 1e-12;
  std::mt19937_64 rng(8);
  const Eigen::VectorXd x = random_state(g, rng);
  const Eigen::MatrixXd exact = augmented_transition_jacobian(cv_matrices(0.5), g, kDefaultKernel, x).dense();
  const Eigen::MatrixXd approx = augmented_transition_jacobian(cv_matrices(0.5), g, local, x).dense();
  EXPECT_LT((exact - approx).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(ProcessNoise, ZeroAtInducingPointWithoutDrift) {
  const InducingGrid g = testing::toy_grid(4, kExact);
  const Eigen::MatrixXd q = augmented_process_noise(cv_matrices(0.5), g, kExact, Eigen::MatrixXd(), g.points()[2]);
  EXPECT_LT(q.cwiseAbs().maxCoeff(), 1e-15);
}

TEST(ProcessNoise, FarFromGridIsFullPriorVariance) {
  const InducingGrid g = testing::toy_grid(4, kDefaultKernel);
  const MotionModel m = cv_matrices(0.5);
  const Eigen::MatrixXd q = augmented_process_noise(m, g, kDefaultKernel, Eigen::MatrixXd(), {100.0, 100.0});
  EXPECT_TRUE((q.topLeftCorner<4, 4>().isApprox(0.05 * m.G * m.G.transpose())));
  EXPECT_EQ(q.bottomRightCorner(8, 8), Eigen::MatrixXd::Zero(8, 8));
}

TEST(ProcessNoise, SymmetricPsdRankTwoKinematicBlock) {
  const InducingGrid g = testing::toy_grid(6, kDefaultKernel);
  const Eigen::MatrixXd drift = 1e-3 * Eigen::MatrixXd::Identity(12, 12);
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-2.0, 4.0);
  for (int t = 0; t < 20; ++t) {
    const Eigen::MatrixXd q = augmented_process_noise(cv_matrices(0.5), g, kDefaultKernel, drift, {u(rng), u(rng)});
    EXPECT_EQ((q - q.transpose()).cwiseAbs().maxCoeff(), 0.0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(q);
    EXPECT_GE(eig.eigenvalues().minCoeff(), -1e-15);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(q.topLeftCorner(4, 4));
    lu.setThreshold(1e-12);
    EXPECT_LE(lu.rank(), 2);
  }
  EXPECT_THROW(augmented_process_noise(cv_matrices(0.5), g, kDefaultKernel, Eigen::MatrixXd::Identity(3, 3), {0, 0}),
               InvalidArgument);
}

TEST(Permutation, JacobianAndNoiseFollowInducingOrder) {
  const InducingGrid g = testing::toy_grid(5, kDefaultKernel);
  std::vector<std::size_t> order(5);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(10);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<Point2> permuted;
  for (auto i : order) permuted.push_back(g.points()[i]);
  const InducingGrid gp(permuted, 1.0, kDefaultKernel);

  Eigen::VectorXd x = random_state(g, rng);
  Eigen::VectorXd xp = x;
  Eigen::MatrixXd perm = Eigen::MatrixXd::Zero(14, 14);
  perm.topLeftCorner<4, 4>().setIdentity();
  for (std::size_t l = 0; l < 5; ++l)
    for (int j = 0; j < 2; ++j) {
      xp(4 + 2 * static_cast<Eigen::Index>(l) + j) = x(4 + 2 * static_cast<Eigen::Index>(order[l]) + j);
      perm(4 + 2 * static_cast<Eigen::Index>(l) + j, 4 + 2 * static_cast<Eigen::Index>(order[l]) + j) = 1.0;
    }
  const MotionModel m = cv_matrices(0.5);
  const Eigen::MatrixXd j = augmented_transition_jacobian(m, g, kDefaultKernel, x).dense();
  const Eigen::MatrixXd jp = augmented_transition_jacobian(m, gp, kDefaultKernel, xp).dense();
  EXPECT_LT((perm * j * perm.transpose() - jp).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((augmented_transition_mean(m, g, kDefaultKernel, x).head<4>() - augmented_transition_mean(m, gp, kDefaultKernel, xp).head<4>())
                .cwiseAbs()
                .maxCoeff(),
            1e-12);
}

}  // namespace
}  // namespace gpassm
