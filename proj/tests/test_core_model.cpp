/*
 Copyright 2026 The steer Authors

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

      https://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/

#include <gtest/gtest.h>

#include <cmath>

#include "steer/core_model.hpp"
#include "test_helpers.hpp"

namespace steer {
namespace {

using testing::eye;
using testing::inertial_problem;
using testing::mat;

// Independent reference for the double integrator: e^{At}Σ₀e^{Aᵀt} plus the
// controllability Gramian, integrated with composite Simpson.
Matrix double_integrator_covariance(double t, const Matrix& Sigma0) {
  auto expA = [](double s) { return mat({{1, s}, {0, 1}}); };
  const Matrix B = mat({{0}, {1}});
  const int panels = 2000;
  const double h = t / panels;
  Matrix gram = Matrix::Zero(2, 2);
  for (int i = 0; i <= panels; ++i) {
    const double s = i * h;
    const double w = (i == 0 || i == panels) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    const Matrix eb = expA(s) * B;
    gram += w * eb * eb.transpose();
  }
  gram *= h / 3.0;
  return expA(t) * Sigma0 * expA(t).transpose() + gram;
}

TEST(TimeGridTest, UniformEndpointsAndWidths) {
  const auto g = TimeGrid::uniform(1.0, 7);
  EXPECT_EQ(g.size(), 8u);
  EXPECT_EQ(g.t(0), 0.0);
  EXPECT_EQ(g.t(7), 1.0);
  double sum = 0.0;
  for (std::size_t k = 0; k < g.intervals(); ++k) sum += g.dt(k);
  EXPECT_NEAR(sum, 1.0, 1e-12);
  EXPECT_TRUE(g.is_uniform());
  EXPECT_EQ(g.interval_of(1.0), 6u);
  EXPECT_EQ(g.interval_of(0.5), 3u);
}

TEST(TimeGridTest, RejectsBadPoints) {
  EXPECT_THROW(TimeGrid::uniform(1.0, 0), StructuralError);
  EXPECT_THROW(TimeGrid::uniform(-1.0, 3), StructuralError);
  EXPECT_THROW(TimeGrid::from_points({0.0, 0.5, 0.5, 1.0}), StructuralError);
  EXPECT_THROW(TimeGrid::from_points({0.1, 0.5}), StructuralError);
  const auto g = TimeGrid::from_points({0.0, 0.1, 0.5, 1.0});
  EXPECT_FALSE(g.is_uniform());
}

TEST(SteeringProblemTest, DimensionMismatchIsStructural) {
  EXPECT_THROW(SteeringProblem(eye(2), mat({{0}, {1}}), LossWeight::constant(eye(2)),
                               eye(3), eye(2), 1.0),
               StructuralError);
  EXPECT_THROW(SteeringProblem(eye(2), mat({{1}}), LossWeight::constant(eye(2)), eye(2),
                               eye(2), 1.0),
               StructuralError);
  EXPECT_THROW(inertial_problem(1.0, 2.0, 0.25, 0.0), StructuralError);
}

TEST(ValidateProblemTest, InertialExamplePasses) {
  const auto r = validate_problem(inertial_problem(1.0), TimeGrid::uniform(1.0, 10));
  EXPECT_TRUE(r.passed());
  EXPECT_EQ(r.controllability_rank, 2);
  ASSERT_NE(r.find("spd_sigma0"), nullptr);
  EXPECT_NEAR(r.find("spd_sigma0")->margin, 2.0, 1e-12);
}

TEST(ValidateProblemTest, UncontrollablePairFailsHypoellipticity) {
  const SteeringProblem p(Matrix::Zero(2, 2), mat({{0}, {1}}), LossWeight::constant(eye(2)),
                          2 * eye(2), 0.25 * eye(2), 1.0);
  const auto r = validate_problem(p);
  EXPECT_EQ(r.controllability_rank, 1);
  EXPECT_FALSE(r.find("controllability_rank")->passed);
  EXPECT_FALSE(r.passed());
}

TEST(ValidateProblemTest, SingularTargetFailsWithZeroMargin) {
  const SteeringProblem p(mat({{0, 1}, {0, 0}}), mat({{0}, {1}}),
                          LossWeight::constant(eye(2)), 2 * eye(2), mat({{1, 0}, {0, 0}}), 1.0);
  const auto r = validate_problem(p);
  const auto* c = r.find("spd_sigmaT");
  ASSERT_NE(c, nullptr);
  EXPECT_FALSE(c->passed);
  EXPECT_DOUBLE_EQ(c->margin, 0.0);
}

TEST(ValidateProblemTest, IndefiniteSampledLossFails) {
  const auto g = TimeGrid::uniform(1.0, 2);
  const auto S = LossWeight::sampled(g, {eye(2), mat({{1, 0}, {0, -0.5}}), eye(2)});
  const SteeringProblem p(mat({{0, 1}, {0, 0}}), mat({{0}, {1}}), S, 2 * eye(2),
                          0.25 * eye(2), 1.0);
  const auto r = validate_problem(p, g);
  EXPECT_FALSE(r.find("psd_S")->passed);
  EXPECT_NEAR(r.find("psd_S")->margin, -0.5, 1e-12);
}

TEST(ValidateProblemTest, DeterministicReports) {
  const auto p = inertial_problem(10.0);
  const auto g = TimeGrid::uniform(1.0, 25);
  const auto a = validate_problem(p, g);
  const auto b = validate_problem(p, g);
  ASSERT_EQ(a.checks.size(), b.checks.size());
  for (std::size_t i = 0; i < a.checks.size(); ++i) {
    EXPECT_EQ(a.checks[i].name, b.checks[i].name);
    EXPECT_EQ(a.checks[i].passed, b.checks[i].passed);
    EXPECT_EQ(a.checks[i].margin, b.checks[i].margin);
  }
}

TEST(UncontrolledCovarianceTest, DoubleIntegratorMatchesQuadratureOracle) {
  const auto p = inertial_problem(1.0);
  const auto path = uncontrolled_covariance(p, TimeGrid::uniform(1.0, 100));
  const Matrix oracle = double_integrator_covariance(1.0, 2 * eye(2));
  EXPECT_NEAR((oracle - mat({{13.0 / 3, 2.5}, {2.5, 3.0}})).norm(), 0.0, 1e-10);
  EXPECT_NEAR((path.Sigma.back() - oracle).norm(), 0.0, 1e-10);
  EXPECT_LE(path.invariant_violation(), 0.0);
}

TEST(UncontrolledCovarianceTest, ScalarPureDiffusion) {
  const auto p = testing::scalar_problem(0.0, 1.0, 0.0, 1.0, 1.0, 2.0);
  const auto path = uncontrolled_covariance(p, TimeGrid::uniform(2.0, 8));
  EXPECT_NEAR(path.Sigma.back()(0, 0), 3.0, 1e-12);
}

TEST(UncontrolledCovarianceTest, FrozenDynamics) {
  const Matrix Sigma = mat({{2, 0.3}, {0.3, 1}});
  const SteeringProblem p(Matrix::Zero(2, 2), Matrix::Zero(2, 1), LossWeight::constant(eye(2)),
                          Sigma, Sigma, 1.0);
  const auto path = uncontrolled_covariance(p, TimeGrid::uniform(1.0, 5));
  for (const auto& S : path.Sigma) EXPECT_EQ((S - Sigma).norm(), 0.0);
}

TEST(UncontrolledCovarianceTest, LyapunovResidualIsFirstOrderInDt) {
  const auto p = inertial_problem(1.0);
  const Matrix A = p.A();
  auto residual = [&](std::size_t N) {
    const auto g = TimeGrid::uniform(1.0, N);
    const auto path = uncontrolled_covariance(p, g);
    double worst = 0.0;
    for (std::size_t k = 0; k < N; ++k) {
      const Matrix& S = path.Sigma[k];
      const Matrix fd = (path.Sigma[k + 1] - S) / g.dt(k);
      worst = std::max(worst, (fd - (A * S + S * A.transpose() + p.BBt())).norm());
    }
    return worst;
  };
  const double r1 = residual(50), r2 = residual(100), r3 = residual(200);
  EXPECT_GE(std::log2(r1 / r2), 0.9);
  EXPECT_GE(std::log2(r2 / r3), 0.9);
}

TEST(CostFunctionalTest, UncontrolledDoubleIntegratorCost) {
  // ½∫₀¹ tr Σ(t) dt with tr Σ(t) = 4 + t + 2t² + t³/3.
  const double exact = 2.625;
  const auto p = inertial_problem(1.0);
  double prev_err = 0.0;
  for (std::size_t N : {100u, 200u, 400u}) {
    const auto g = TimeGrid::uniform(1.0, N);
    const double J = cost_functional(p, GainSchedule::zero(g, 1, 2), uncontrolled_covariance(p, g));
    const double err = std::abs(J - exact);
    EXPECT_LE(err, 2.0 / static_cast<double>(N));
    if (prev_err > 0) EXPECT_NEAR(prev_err / err, 2.0, 0.1);
    prev_err = err;
  }
}

TEST(CostFunctionalTest, RefinementChangeShrinks) {
  const auto p = inertial_problem(1.0);
  auto J = [&](std::size_t N) {
    const auto g = TimeGrid::uniform(1.0, N);
    return cost_functional(p, GainSchedule::zero(g, 1, 2), uncontrolled_covariance(p, g));
  };
  const double d1 = std::abs(J(100) - J(50));
  const double d2 = std::abs(J(200) - J(100));
  EXPECT_LT(d2, 2.0 * d1);
}

TEST(CostFunctionalTest, TrivialCases) {
  const auto g = TimeGrid::uniform(1.0, 10);
  const SteeringProblem zero_loss(mat({{0, 1}, {0, 0}}), mat({{0}, {1}}),
                                  LossWeight::constant(Matrix::Zero(2, 2)), 2 * eye(2),
                                  0.25 * eye(2), 1.0);
  EXPECT_EQ(cost_functional(zero_loss, GainSchedule::zero(g, 1, 2),
                            uncontrolled_covariance(zero_loss, g)),
            0.0);

  const auto scalar = testing::scalar_problem(0.0, 1.0, 0.0, 1.0, 1.0, 1.0);
  const GainSchedule ones(g, std::vector<Matrix>(10, mat({{1}})));
  const CovariancePath unit(g, std::vector<Matrix>(11, mat({{1}})));
  EXPECT_NEAR(cost_functional(scalar, ones, unit), 0.5, 1e-14);
}

TEST(CostFunctionalTest, GridMismatchRejected) {
  const auto p = inertial_problem(1.0);
  const auto g1 = TimeGrid::uniform(1.0, 10);
  const auto g2 = TimeGrid::uniform(1.0, 20);
  EXPECT_THROW(cost_functional(p, GainSchedule::zero(g1, 1, 2), uncontrolled_covariance(p, g2)),
               StructuralError);
}

TEST(ClosedLoopCovarianceTest, SchemesAgreeToFirstOrder) {
  const auto p = inertial_problem(1.0);
  const auto g = TimeGrid::uniform(1.0, 400);
  const GainSchedule K(g, std::vector<Matrix>(400, mat({{1.0, 2.0}})));
  const auto rk = closed_loop_covariance(p, K, LyapunovScheme::kRk4);
  const auto eu = closed_loop_covariance(p, K, LyapunovScheme::kEuler);
  const auto ch = closed_loop_covariance(p, K, LyapunovScheme::kSampledChain);
  EXPECT_LT((rk.Sigma.back() - eu.Sigma.back()).norm(), 1e-2);
  EXPECT_LT((rk.Sigma.back() - ch.Sigma.back()).norm(), 1e-2);
  const auto zero = closed_loop_covariance(p, GainSchedule::zero(g, 1, 2), LyapunovScheme::kRk4);
  EXPECT_LT((zero.Sigma.back() - uncontrolled_covariance(p, g).Sigma.back()).norm(), 1e-13);
}

TEST(GainScheduleTest, PiecewiseConstantLookupAndShapeChecks) {
  const auto g = TimeGrid::uniform(1.0, 4);
  std::vector<Matrix> K;
  for (int k = 0; k < 4; ++k) K.push_back(mat({{double(k), 0.0}}));
  const GainSchedule s(g, K);
  EXPECT_EQ(s.at(0.0)(0, 0), 0.0);
  EXPECT_EQ(s.at(0.3)(0, 0), 1.0);
  EXPECT_EQ(s.at(1.0)(0, 0), 3.0);
  EXPECT_THROW(GainSchedule(g, std::vector<Matrix>(3, mat({{0.0, 0.0}}))), StructuralError);
  K[1](0, 0) = std::nan("");
  EXPECT_THROW(GainSchedule(g, K), StructuralError);
}

}  // namespace
}  // namespace steer
