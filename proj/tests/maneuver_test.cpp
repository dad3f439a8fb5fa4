#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "gtest/gtest.h"
#include "nhtrack/maneuver.hpp"

namespace nhtrack {
namespace {

constexpr double kPi = std::numbers::pi;

ShapeVec<double> random_shape(std::mt19937_64& rng, int n, const ComponentIndex& mu,
                              double spread = 1.4) {
  std::uniform_real_distribution<double> head(-kPi, kPi), joint(-spread, spread);
  ShapeVec<double> y;
  y.push_back(head(rng));
  for (int i = 1; i < n; ++i) y.push_back(joint(rng) + mu.mu[i - 1] * kPi);
  return y;
}

ComponentIndex zero_component(int n) {
  ComponentIndex c;
  for (int i = 1; i < n; ++i) c.mu.push_back(0);
  return c;
}

TEST(LieTower, AutomobileAtOrigin) {
  const auto t = lie_derivative_tower(automobile(), ShapeVec<double>{0.0, 0.0}, 1);
  EXPECT_EQ(t.drift[0], 0.0);
  EXPECT_EQ(t.drift[1], 0.0);
  EXPECT_EQ(t.steering[0], 0.0);
  EXPECT_EQ(t.steering[1], 1.0);
}

TEST(LieTower, AutomobileMatchesHandDerivatives) {
  // L_h1 y1 = tan y2, L_h2 L_h1 y1 = sec^2 y2, L_h1^2 y1 = 0.
  const double y2 = 0.7;
  const auto t = lie_derivative_tower(automobile(), ShapeVec<double>{1.1, y2}, 2);
  EXPECT_NEAR(t.drift[1], std::tan(y2), 1e-15);
  EXPECT_NEAR(t.steering[1], 1 / std::pow(std::cos(y2), 2), 1e-14);
  EXPECT_EQ(t.drift[2], 0.0);
}

TEST(LieTower, FrontAxleSteeringMovesHeading) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> a(-3, 3);
  for (int k = 0; k < 50; ++k) {
    const auto t = lie_derivative_tower(automobile_front_axle(), ShapeVec<double>{a(rng), a(rng)}, 1);
    EXPECT_EQ(t.steering[0], 1.0);
  }
}

TEST(LieTower, TruckFirstDerivativeIsFirstDriftCoefficient) {
  const auto m = truck_with_trailers({1.7, 0.9});
  std::mt19937_64 rng(2);
  for (int k = 0; k < 50; ++k) {
    const auto y = random_shape(rng, 3, zero_component(3));
    const auto t = lie_derivative_tower(m, y, 1);
    EXPECT_NEAR(t.drift[1], std::tan(y[1]) / 1.7, 1e-14);
  }
}

TEST(Maneuverability, Verdicts) {
  EXPECT_TRUE(check_maneuverability(automobile(), 50).pass);
  EXPECT_TRUE(check_maneuverability(chaplygin_sled(), 50).pass);
  const auto front = check_maneuverability(automobile_front_axle(), 50);
  EXPECT_FALSE(front.pass);
  EXPECT_EQ(front.witness_order, 0);
  EXPECT_EQ(front.witness_value, 1.0);
  const auto truck = check_maneuverability(truck_with_trailers({1, 1, 1}), 50);
  EXPECT_TRUE(truck.pass) << truck.summary();
  EXPECT_EQ(truck.samples, 8 * 50);
}

TEST(GenericTransform, AutomobileClosedForm) {
  const auto tr = ChainTransform::generic(automobile(), zero_component(2));
  std::mt19937_64 rng(3);
  for (int k = 0; k < 50; ++k) {
    const auto y = random_shape(rng, 2, zero_component(2));
    const auto s = tr.forward(y);
    EXPECT_EQ(s[0], y[0]);
    EXPECT_NEAR(s[1], std::tan(y[1]), 1e-14);
    // v2 = u2 / cos^2 y2.
    const auto v = tr.to_chained_input(y, {0.3, -1.2});
    EXPECT_EQ(v[0], 0.3);
    EXPECT_NEAR(v[1], -1.2 / std::pow(std::cos(y[1]), 2), 1e-12);
  }
}

TEST(GenericTransform, SledIsIdentity) {
  const auto tr = ChainTransform::generic(chaplygin_sled(), ComponentIndex{});
  const ShapeVec<double> y{0.8};
  EXPECT_EQ(tr.forward(y)[0], 0.8);
  const auto row = tr.feedback_row(y);
  EXPECT_EQ(row[0], 0.0);
  EXPECT_EQ(row[1], 1.0);
  EXPECT_EQ(tr.inverse(ShapeVec<double>{-2.5})[0], -2.5);
}

TEST(GenericTransform, RejectsNonManeuverableModel) {
  EXPECT_THROW(ChainTransform::generic(automobile_front_axle(), ComponentIndex{}),
               UnsupportedModelError);
}

TEST(GenericTransform, NewtonInverseRecoversPoint) {
  const auto m = truck_with_trailers({1.0, 1.3});
  std::mt19937_64 rng(4);
  for (const auto& mu : all_components(m)) {
    const auto tr = ChainTransform::generic(m, mu);
    for (int k = 0; k < 20; ++k) {
      const auto y = random_shape(rng, 3, mu, 1.2);
      const auto back = tr.inverse(tr.forward(y));
      for (int i = 0; i < 3; ++i) EXPECT_NEAR(back[i], y[i], 1e-9) << mu.label();
    }
  }
}

TEST(ClosedFormTransform, GenericAndClosedFormAgreeOnTruck) {
  const auto m = truck_with_trailers({1.2, 0.8});
  std::mt19937_64 rng(5);
  for (const auto& mu : all_components(m)) {
    const auto g = ChainTransform::generic(m, mu);
    const auto c = ChainTransform::truck(m, mu);
    for (int k = 0; k < 250; ++k) {
      const auto y = random_shape(rng, 3, mu);
      const auto sg = g.forward(y), sc = c.forward(y);
      for (int i = 0; i < 3; ++i) {
        EXPECT_LE(std::abs(sg[i] - sc[i]), 1e-10 * std::max(1.0, std::abs(sg[i])));
      }
      const auto fg = g.feedback_row(y), fc = c.feedback_row(y);
      for (int i = 0; i < 2; ++i) {
        EXPECT_LE(std::abs(fg[i] - fc[i]), 1e-10 * std::max(1.0, std::abs(fg[i])));
      }
    }
  }
}

TEST(ClosedFormTransform, TwoAxleTruckIsAutomobile) {
  const auto tr = ChainTransform::truck(truck_with_trailers({1.0}), zero_component(2));
  const auto s = tr.forward(ShapeVec<double>{0.4, -0.6});
  EXPECT_EQ(s[0], 0.4);
  EXPECT_NEAR(s[1], std::tan(-0.6), 1e-15);
}

TEST(ClosedFormTransform, RoundTripEveryComponent) {
  const auto m = truck_with_trailers({1, 1, 1});
  std::mt19937_64 rng(6);
  for (const auto& mu : all_components(m)) {
    const auto tr = ChainTransform::truck(m, mu);
    double worst = 0;
    for (int k = 0; k < 1000; ++k) {
      const auto y = random_shape(rng, 4, mu);
      const auto back = tr.inverse(tr.forward(y));
      for (int i = 0; i < 4; ++i) worst = std::max(worst, std::abs(back[i] - y[i]));
    }
    EXPECT_LE(worst, 1e-10) << mu.label();
  }
}

TEST(ClosedFormTransform, ForwardOfInverseIsIdentity) {
  const auto m = truck_with_trailers({0.7, 1.5, 1.1});
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> s(-3, 3);
  for (const auto& mu : all_components(m)) {
    const auto tr = ChainTransform::truck(m, mu);
    for (int k = 0; k < 100; ++k) {
      const ShapeVec<double> target{s(rng), s(rng), s(rng), s(rng)};
      const auto y = tr.inverse(target);
      EXPECT_TRUE(tr.contains(y));
      const auto back = tr.forward(y);
      for (int i = 0; i < 4; ++i) EXPECT_NEAR(back[i], target[i], 1e-10 * std::max(1.0, std::abs(target[i])));
    }
  }
}

// Jacobian of S by forward-mode seeding of every y_j.
std::vector<std::vector<double>> jacobian(const ChainTransform& tr, const ShapeVec<double>& y) {
  using D = ad::Dual<double, kMaxShapeDim>;
  const int n = tr.n();
  ShapeVec<D> yd(n), sd(n);
  for (int i = 0; i < n; ++i) {
    yd[i] = D(y[i]);
    yd[i].d[i] = 1.0;
  }
  tr.forward<D>(yd, sd);
  std::vector<std::vector<double>> j(n, std::vector<double>(n));
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < n; ++k) j[i][k] = sd[i].d[k];
  return j;
}

TEST(ClosedFormTransform, JacobianIsTriangularWithClosedFormDiagonal) {
  const auto m = truck_with_trailers({1.3, 0.6, 2.0});
  std::mt19937_64 rng(8);
  for (const auto& mu : all_components(m)) {
    const auto tr = ChainTransform::truck(m, mu);
    for (int k = 0; k < 30; ++k) {
      const auto y = random_shape(rng, 4, mu);
      const auto j = jacobian(tr, y);
      double det = 1;
      for (int i = 0; i < 4; ++i) {
        for (int c = i + 1; c < 4; ++c) EXPECT_EQ(j[i][c], 0.0);
        const double diag = truck_transform_diagonal(m, y, i + 1);
        EXPECT_LE(std::abs(j[i][i] - diag), 1e-10 * std::abs(diag));
        det *= diag;
      }
      // The steering entry of F is the last diagonal entry.
      EXPECT_NEAR(tr.feedback_row(y)[1], truck_transform_diagonal(m, y, 4),
                  1e-12 * std::abs(det));
    }
  }
}

TEST(ClosedFormTransform, InputMapRoundTrip) {
  const auto m = truck_with_trailers({1, 1});
  const auto tr = ChainTransform::truck(m, zero_component(3));
  const ShapeVec<double> y{0.2, 0.3, -0.5};
  const Vec2 u{1.5, -0.7};
  const auto back = tr.from_chained_input(y, tr.to_chained_input(y, u));
  EXPECT_NEAR(back[0], u[0], 1e-15);
  EXPECT_NEAR(back[1], u[1], 1e-14);
}

TEST(InitialHeading, Branches) {
  const Trajectory line = LineTrajectory{{0, 0}, {1, 0}};
  EXPECT_EQ(initial_heading(line, 1, HeadingBranch::kForward), 0.0);
  EXPECT_NEAR(initial_heading(line, -1, HeadingBranch::kBackward), kPi, 1e-15);
  EXPECT_NEAR(initial_heading(line, -1, HeadingBranch::kForward), kPi, 1e-15);
  const Trajectory down = LineTrajectory{{0, 0}, {0, -1}};
  EXPECT_NEAR(initial_heading(down, 1, HeadingBranch::kForward), -kPi / 2, 1e-15);
  EXPECT_NEAR(initial_heading(down, 1, HeadingBranch::kBackward), 3 * kPi / 2, 1e-15);
}

TEST(ManeuveringOperator, StraightLineForward) {
  ManeuveringOperator op(automobile(), zero_component(2), LineTrajectory{{0, 0}, {1, 0}}, 1);
  for (double t : {0.0, 1.0, 7.5}) {
    const auto r = op.at(t);
    EXPECT_EQ(r.sD[0], 0.0);
    EXPECT_EQ(r.sD[1], 0.0);
    EXPECT_EQ(r.uD[0], 1.0);
    EXPECT_EQ(r.uD[1], 0.0);
    EXPECT_EQ(r.qD.y[0], 0.0);
    EXPECT_EQ(r.qD.y[1], 0.0);
    EXPECT_EQ(r.qD.x[0], t);
  }
}

TEST(ManeuveringOperator, StraightLineBackward) {
  ManeuveringOperator op(automobile(), zero_component(2), LineTrajectory{{0, 0}, {1, 0}}, -1);
  EXPECT_NEAR(op.heading(), kPi, 1e-15);
  const auto r = op.at(2.0);
  EXPECT_NEAR(r.uD[0], -1.0, 1e-15);
  EXPECT_NEAR(r.qD.y[0], kPi, 1e-15);
}

TEST(ManeuveringOperator, CircleCurvature) {
  const double R = 5;
  const Trajectory circle = CircleTrajectory{{0, 0}, R, 1 / R, 0};
  ManeuveringOperator op(automobile(), zero_component(2), circle, 1, std::nullopt, 1e-3);
  double prev_s1 = op.heading();
  const double h = 1e-2;
  for (int k = 1; k <= 300; ++k) {
    const auto r = op.at(k * h);
    EXPECT_NEAR(r.sD[1], 1 / R, 1e-12);
    EXPECT_NEAR(r.vD[1], 0.0, 1e-12);
    EXPECT_NEAR(r.qD.y[1], std::atan(1 / R), 1e-12);
    // Finite difference of the integrated heading equals v1 s2.
    EXPECT_NEAR((r.sD[0] - prev_s1) / h, r.vD[0] * r.sD[1], 1e-9);
    prev_s1 = r.sD[0];
  }
}

TEST(ManeuveringOperator, ChainDerivativesMatchFiniteDifferences) {
  // s_i' = v1 s_{i+1} and s_n' = v2 against central differences.
  const Trajectory lane = LaneChangeTrajectory{{0, 0}, 1.0, 1.5, 0.4};
  const auto m = truck_with_trailers({1, 1, 1});
  ManeuveringOperator op(m, zero_component(4), lane, 1, std::nullopt, 1e-4);
  const double h = 1e-3;
  for (double t : {1.0, 2.5, 4.0}) {
    const auto a = op.at(t - h);
    const auto mid = op.at(t);
    const auto b = op.at(t + h);
    for (int i = 0; i < 4; ++i) {
      const double fd = (b.sD[i] - a.sD[i]) / (2 * h);
      const double exact = i < 3 ? mid.vD[0] * mid.sD[i + 1] : mid.vD[1];
      EXPECT_LE(std::abs(fd - exact), 1e-5 * std::max(1.0, std::abs(exact))) << "s" << i + 1;
    }
  }
}

// Finite difference of q^D against the model velocity at the reference.
double feasibility_residual(const WheeledModel& m, const Trajectory& traj, int direction,
                            double horizon) {
  const ComponentIndex mu = zero_component(m.n());
  ManeuveringOperator op(m, mu, traj, direction, std::nullopt, 1e-4);
  const double h = 1e-4;
  double worst = 0;
  ReferencePoint prev = op.at(0.0);
  ReferencePoint cur = op.at(h);
  for (double t = 2 * h; t <= horizon; t += h) {
    const ReferencePoint next = op.at(t);
    const auto qdot = rhs(m, cur.qD, cur.uD);
    for (int i = 0; i < 2; ++i) {
      worst = std::max(worst, std::abs((next.qD.x[i] - prev.qD.x[i]) / (2 * h) - qdot[i]));
    }
    for (int i = 0; i < m.n(); ++i) {
      worst = std::max(worst, std::abs((next.qD.y[i] - prev.qD.y[i]) / (2 * h) - qdot[2 + i]));
    }
    prev = cur;
    cur = next;
  }
  return worst;
}

TEST(ManeuveringOperator, ReferenceIsFeasible) {
  const Trajectory lane = LaneChangeTrajectory{{0, 0}, 1.0, 1.0, 0.5};
  const Trajectory circle = CircleTrajectory{{0, 0}, 4.0, 0.25, 0.0};
  EXPECT_LE(feasibility_residual(automobile(), lane, 1, 3.0), 1e-6);
  EXPECT_LE(feasibility_residual(automobile(), circle, -1, 3.0), 1e-6);
  EXPECT_LE(feasibility_residual(chaplygin_sled(), lane, -1, 3.0), 1e-6);
}

TEST(ManeuveringOperator, DirectionPersists) {
  const Trajectory lane = LaneChangeTrajectory{{0, 0}, 1.0, 1.0, 0.5};
  for (int dir : {1, -1}) {
    ManeuveringOperator op(automobile(), zero_component(2), lane, dir);
    for (double t = 0; t < 10; t += 0.25) EXPECT_EQ(op.at(t).uD[0] > 0, dir > 0);
  }
}

TEST(ManeuveringOperator, StopIsAReferenceError) {
  const Trajectory cubic = PolynomialTrajectory({0, 0, 0, 1}, {0});
  EXPECT_THROW(ManeuveringOperator(automobile(), zero_component(2), cubic, 1), ReferenceError);
}

TEST(ManeuveringOperator, LeavingComponentIsReported) {
  // Backward along a line with the truck folded: every joint sits at the
  // box center of mu = (1, 0), which the straight reference never visits.
  const auto m = truck_with_trailers({1, 1});
  ComponentIndex mu;
  mu.mu = {1, 0};
  const auto tr = ChainTransform::truck(m, mu);
  const Trajectory line = LineTrajectory{{0, 0}, {1, 0}};
  const auto r = reference_point(tr, line, 1, 0.0, 0.0);
  EXPECT_NEAR(std::cos(r.qD.y[1]), -1.0, 1e-12);
}

TEST(ArcLength, UnitSpeedLine) {
  const ArcLength a(LineTrajectory{{0, 0}, {0.6, 0.8}}, 10);
  EXPECT_NEAR(a.tau_of_t(3.7), 3.7, 1e-14);
  EXPECT_NEAR(a.t_of_tau(2.2), 2.2, 1e-14);
}

TEST(ArcLength, FastLine) {
  const ArcLength a(LineTrajectory{{0, 0}, {2, 0}}, 10);
  EXPECT_NEAR(a.tau_of_t(3.0), 6.0, 1e-13);
  EXPECT_NEAR(a.t_of_tau(5.0), 2.5, 1e-13);
}

TEST(ArcLength, CircleRoundTrip) {
  const double R = 3, w = 0.7;
  const ArcLength a(CircleTrajectory{{1, 2}, R, w, 0.3}, 20);
  for (double t = 0; t <= 20; t += 0.37) {
    EXPECT_NEAR(a.tau_of_t(t), R * w * t, 1e-11);
    EXPECT_NEAR(a.t_of_tau(a.tau_of_t(t)), t, 1e-10);
  }
}

TEST(ArcLength, LaneChangeRoundTripAgainstFineQuadrature) {
  const Trajectory lane = LaneChangeTrajectory{{0, 0}, 1.0, 2.0, 0.9};
  const ArcLength a(lane, 15);
  // Composite Simpson with a fine grid as an independent oracle.
  const int m = 200000;
  const double T = 12.3, h = T / m;
  double acc = lane.speed(0) + lane.speed(T);
  for (int i = 1; i < m; ++i) acc += (i % 2 ? 4 : 2) * lane.speed(i * h);
  EXPECT_NEAR(a.tau_of_t(T), acc * h / 3, 1e-9);
  EXPECT_NEAR(a.t_of_tau(a.tau_of_t(T)), T, 1e-10);
}

TEST(Admissibility, Line) {
  const auto r = admissibility_report(LineTrajectory{{0, 0}, {1, 1}}, 4, 10);
  EXPECT_TRUE(r.admissible);
  EXPECT_TRUE(r.strongly_admissible);
  EXPECT_NEAR(r.min_speed, std::sqrt(2.0), 1e-14);
}

TEST(Admissibility, StoppingCurve) {
  const auto r = admissibility_report(PolynomialTrajectory({0, 0, 0, 1}, {0}), 2, 1);
  EXPECT_FALSE(r.admissible);
  EXPECT_FALSE(r.strongly_admissible);
  EXPECT_EQ(r.min_speed, 0.0);
}

TEST(Admissibility, PolynomialSpeedFloorIsExact) {
  // x' = (2t - 2, 1): |x'|^2 = (2t - 2)^2 + 1 is smallest at t = 1.
  const PolynomialTrajectory bowl({0, -2, 1}, {0, 1});
  EXPECT_NEAR(*bowl.speed_floor(3.0), 1.0, 1e-12);
  EXPECT_NEAR(*bowl.speed_floor(0.5), std::sqrt(2.0), 1e-12);
  // x' = 1 - t stops at t = 1, between sampling nodes of a 2001-point grid.
  const Trajectory stop = PolynomialTrajectory({0, 1, -0.5}, {0});
  EXPECT_LE(*stop.speed_floor(3.0), 1e-6);
  const auto r = admissibility_report(stop, 1, 3.0);
  EXPECT_GT(r.min_speed, 1e-6);
  EXPECT_FALSE(r.admissible);
  EXPECT_NEAR(*PolynomialTrajectory({0, 2}, {1}).speed_floor(5.0), 2.0, 1e-15);
}

TEST(Admissibility, CircleDerivativeNorms) {
  const double R = 2.5, w = 0.8;
  const auto r = admissibility_report(CircleTrajectory{{0, 0}, R, w, 0.1}, 4, 10);
  EXPECT_TRUE(r.strongly_admissible);
  ASSERT_EQ(r.max_derivative_norms.size(), 5u);
  for (int k = 1; k <= 5; ++k) {
    EXPECT_NEAR(r.max_derivative_norms[k - 1], R * std::pow(w, k), 1e-12);
    EXPECT_NEAR(*r.analytic_derivative_bounds[k - 1], R * std::pow(w, k), 1e-15);
  }
}

}  // namespace
}  // namespace nhtrack
