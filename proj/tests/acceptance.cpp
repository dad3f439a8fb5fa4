// Acceptance suite: runs every criterion and prints one PASS/FAIL line each.
// Exit status is nonzero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nhtrack/backstepping.hpp"
#include "nhtrack/cli.hpp"
#include "nhtrack/maneuver.hpp"
#include "nhtrack/simulator.hpp"
#include "nhtrack/transform.hpp"

using namespace nhtrack;

namespace {

constexpr double kPi = std::numbers::pi;
const std::filesystem::path kScenarios = NHTRACK_SCENARIO_DIR;

struct Verdict {
  bool pass;
  std::string detail;
};

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

ComponentIndex zero_component(int n) {
  ComponentIndex c;
  for (int i = 1; i < n; ++i) c.mu.push_back(0);
  return c;
}

ShapeVec<double> random_shape(std::mt19937_64& rng, int n, const ComponentIndex& mu) {
  std::uniform_real_distribution<double> head(-kPi, kPi), joint(-1.4, 1.4);
  ShapeVec<double> y;
  y.push_back(head(rng));
  for (int i = 1; i < n; ++i) y.push_back(joint(rng) + mu.mu[i - 1] * kPi);
  return y;
}

// 1. S^-1(S(y)) = y on every component of the four-axle truck.
Verdict transform_round_trip() {
  const auto start = std::chrono::steady_clock::now();
  const auto m = truck_with_trailers({1, 1, 1});
  std::mt19937_64 rng(101);
  double worst = 0.0;
  int components = 0;
  for (const auto& mu : all_components(m)) {
    const auto tr = ChainTransform::truck(m, mu);
    ++components;
    for (int k = 0; k < 1000; ++k) {
      const auto y = random_shape(rng, 4, mu);
      const auto back = tr.inverse(tr.forward(y));
      for (int i = 0; i < 4; ++i) worst = std::max(worst, std::abs(back[i] - y[i]));
    }
  }
  const double elapsed = seconds_since(start);
  return {components == 8 && worst <= 1e-10 && elapsed < 5.0,
          std::to_string(components) + " components x 1000 points, max error " + sci(worst) +
              ", " + cli::fmt2(elapsed) + " s"};
}

// 2. |det Jac S(y)| against |L_h2 L_h1^(n-1) y1|^n.
Verdict jacobian_identity() {
  using D = ad::Dual<double, kMaxShapeDim>;
  std::mt19937_64 rng(102);
  const std::vector<WheeledModel> models{automobile(), truck_with_trailers({1, 1}),
                                         truck_with_trailers({1, 1, 1})};
  double worst = 0.0;
  std::string detail = "500 points per n, max relative error";
  for (const auto& m : models) {
    const int n = m.n();
    const auto comps = all_components(m);
    double worst_n = 0.0;
    for (int k = 0; k < 500; ++k) {
      const auto& mu = comps[k % comps.size()];
      const auto tr = ChainTransform::truck(m, mu);
      const auto y = random_shape(rng, n, mu);
      ShapeVec<D> yd(n), sd(n);
      for (int i = 0; i < n; ++i) {
        yd[i] = D(y[i]);
        yd[i].d[i] = 1.0;
      }
      tr.forward<D>(yd, sd);
      Eigen::MatrixXd jac(n, n);
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) jac(i, j) = sd[i].d[j];
      }
      const double det = std::abs(jac.determinant());
      const double lie = std::abs(lie_derivative_tower(m, y, n - 1).steering[n - 1]);
      const double expected = std::pow(lie, n);
      worst_n = std::max(worst_n, std::abs(det - expected) / expected);
    }
    detail += " " + sci(worst_n) + " (n = " + std::to_string(n) + ")";
    worst = std::max(worst, worst_n);
  }
  return {worst <= 1e-8, detail};
}

// 3. Maneuverability verdicts.
Verdict maneuverability_gate() {
  bool ok = true;
  std::string detail;
  const std::vector<WheeledModel> good{automobile(), truck_with_trailers({1}),
                                       truck_with_trailers({1, 1}), truck_with_trailers({1, 1, 1})};
  for (const auto& m : good) {
    const auto r = check_maneuverability(m, 50);
    ok = ok && r.pass;
    detail += std::string(m.name()) + " n=" + std::to_string(m.n()) + (r.pass ? " pass, " : " FAIL, ");
  }
  const auto front = check_maneuverability(automobile_front_axle(), 50);
  ok = ok && !front.pass && front.witness_order == 0;
  detail += "automobile_front_axle " + std::string(front.pass ? "pass" : "fails") +
            " with witness i = " + std::to_string(front.witness_order);
  return {ok, detail};
}

// Central difference of q^D against rhs(q^D, u^D) along [0, horizon].
double feasibility_residual(const WheeledModel& m, const Trajectory& traj, int direction,
                            double horizon) {
  const double h = 1e-4;
  ManeuveringOperator op(m, zero_component(m.n()), traj, direction, std::nullopt, h);
  double worst = 0.0;
  ReferencePoint prev = op.at(0.0);
  ReferencePoint cur = op.at(h);
  const long steps = std::lround(horizon / h);
  for (long k = 2; k <= steps; ++k) {
    const ReferencePoint next = op.at(k * h);
    const auto qdot = rhs(m, cur.qD, cur.uD);
    for (int i = 0; i < 2; ++i) {
      worst = std::max(worst, std::abs((next.qD.x[i] - prev.qD.x[i]) / (2 * h) - qdot[i]));
    }
    for (int i = 0; i < m.n(); ++i) {
      worst = std::max(worst, std::abs((next.qD.y[i] - prev.qD.y[i]) / (2 * h) - qdot[2 + i]));
    }
    prev = cur;
    cur = std::move(next);
  }
  return worst;
}

// 4. Reference feasibility over the catalog, both directions, three models.
Verdict reference_feasibility() {
  const std::vector<std::pair<std::string, Trajectory>> trajectories{
      {"line", LineTrajectory{{0, 0}, {1, 0.5}}},
      {"circle", CircleTrajectory{{0, 0}, 5.0, 0.2, 0.0}},
      {"lane_change", LaneChangeTrajectory{{0, 0}, 1.0, 1.0, 0.4}}};
  const std::vector<WheeledModel> models{chaplygin_sled(), automobile(), truck_with_trailers({1, 1, 1})};
  double worst = 0.0;
  std::string where;
  int cases = 0;
  for (const auto& [name, traj] : trajectories) {
    for (int direction : {1, -1}) {
      for (const auto& m : models) {
        const double r = feasibility_residual(m, traj, direction, 5.0);
        ++cases;
        if (r >= worst) {
          worst = r;
          where = name + "/" + std::string(m.name()) + (direction > 0 ? "/forward" : "/backward");
        }
      }
    }
  }
  return {worst <= 1e-6, std::to_string(cases) + " cases over 5 s at h = 1e-4, max residual " +
                             sci(worst) + " (" + where + ")"};
}

// Directional derivatives consumed by one stage against central differences
// of the previous stage. Returns the worst relative error.
template <class Stage>
double stage_gradient_error(const Stage& st, std::mt19937_64& rng, int level) {
  std::uniform_real_distribution<double> u(-2.0, 2.0), a(-kPi, kPi), s(-0.8, 0.8);
  const auto& prev = st.previous();
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    StageVec<double> z{u(rng), u(rng)}, p;
    for (int i = 0; i < level; ++i) z.push_back(s(rng));
    const double s1 = a(rng);
    p = {std::cos(s1), std::sin(s1)};
    for (int i = 0; i < level; ++i) p.push_back(s(rng));

    const auto t = st.template terms<double>(z, p);
    const double h = 1e-6;
    auto shifted = [&](double eps, bool along_b) {
      StageVec<double> zz(t.B.size()), r(t.r.size());
      for (std::size_t j = 0; j < zz.size(); ++j) zz[j] = z[j] + eps * (along_b ? t.B[j] : t.D[j]);
      for (std::size_t j = 0; j < r.size(); ++j) r[j] = t.r[j] + (along_b ? eps * t.r1[j] : 0.0);
      return prev.template eval<double>(zz, r);
    };
    const double fa = (shifted(h, true).alpha - shifted(-h, true).alpha) / (2 * h);
    const double fv = (shifted(h, false).V - shifted(-h, false).V) / (2 * h);
    worst = std::max(worst, std::abs(fa - t.dalpha) / std::max(1.0, std::abs(t.dalpha)));
    worst = std::max(worst, std::abs(fv - t.dV) / std::max(1.0, std::abs(t.dV)));
  }
  return worst;
}

// 5. Gradient integrity of every backstepping stage for n = 4.
Verdict gradient_integrity() {
  std::mt19937_64 rng(105);
  double worst = 0.0;
  for (double wbar : {1.0, -1.0}) {
    const auto g = Gains::defaults(4, 0.5);
    worst = std::max(worst, stage_gradient_error(make_planar_stage<1>(4, g, wbar), rng, 1));
    worst = std::max(worst, stage_gradient_error(make_planar_stage<2>(4, g, wbar), rng, 2));
    worst = std::max(worst, stage_gradient_error(make_planar_stage<3>(4, g, wbar), rng, 3));
    worst = std::max(worst, stage_gradient_error(make_planar_stage<4>(4, g, wbar), rng, 4));
  }
  return {worst <= 1e-5, "4 stages x 100 points x 2 directions, max relative error " + sci(worst)};
}

struct Run {
  std::string name;
  Scenario scenario;
  SimulationResult result;
  std::optional<DiagnosticsReport> report;
};

Run run_scenario(const std::string& name) {
  Run r;
  r.name = name;
  auto f = cli::load_scenario(kScenarios / (name + ".json"));
  cli::fill_initial(f);
  r.scenario = f.scenario;
  r.result = integrate_closed_loop(r.scenario);
  if (!r.result.trace.empty()) r.report = diagnostics(r.result.trace, r.scenario.gains.gamma);
  return r;
}

bool component_constant(const Run& r) {
  for (const auto& s : r.result.trace.samples) {
    if (!(component_of(r.scenario.model, s.q.y) == r.result.trace.component)) return false;
  }
  return true;
}

// 6. V(tau_k) <= V(0) exp(-2 gamma tau_k) (1 + 1e-3) on every bundled scenario.
Verdict lyapunov_decay(const std::vector<Run>& runs) {
  bool ok = true;
  std::string detail;
  for (const auto& r : runs) {
    const bool pass = r.result.ok() && r.report && r.report->decay_ok;
    ok = ok && pass;
    detail += r.name + (pass ? " ok" : " FAIL") + " (worst ratio " +
              (r.report ? sci(r.report->worst_decay_ratio) : std::string("n/a")) + "); ";
  }
  return {ok, detail};
}

// Criterion 7 verdict for one run.
bool converged(const Run& r, std::string& why) {
  if (!r.result.ok()) {
    why = "fault " + r.result.fault->kind + ": " + r.result.fault->message;
    return false;
  }
  const auto& d = *r.report;
  const bool ok = d.terminal_x_error <= 1e-3 && d.terminal_shape_distance <= 1e-3 &&
                  d.terminal_input_error <= 1e-3 && d.sign_invariant && component_constant(r) &&
                  r.result.wall_seconds < 10.0 && std::abs(r.result.trace.back().t - 30.0) < 1e-9;
  why = "|x-xD| " + sci(d.terminal_x_error) + ", d(y,yD) " + sci(d.terminal_shape_distance) +
        ", |u-uD| " + sci(d.terminal_input_error) + ", sign " + (d.sign_invariant ? "const" : "FLIPS") +
        ", component " + (component_constant(r) ? "const" : "CHANGES") + ", " +
        cli::fmt2(r.result.wall_seconds) + " s";
  return ok;
}

// 7. Terminal convergence of the bundled scenarios.
Verdict convergence(const std::vector<Run>& runs) {
  bool ok = true;
  std::string detail;
  for (const auto& r : runs) {
    std::string why;
    const bool pass = converged(r, why);
    ok = ok && pass;
    detail += r.name + (pass ? " ok [" : " FAIL [") + why + "]; ";
  }
  return {ok, detail};
}

// 8. 100 random sled starts with |x~(0)| <= 10 and arbitrary heading.
Verdict sled_basin(std::vector<Run>& extra) {
  auto f = cli::load_scenario(kScenarios / "sled_line_offset.json");
  std::mt19937_64 rng(108);
  std::uniform_real_distribution<double> unit(0.0, 1.0), angle(-kPi, kPi);
  const auto x0 = f.scenario.trajectory.position(0.0);
  int passed = 0;
  double worst_x = 0.0, worst_wall = 0.0;
  std::string first_failure;
  for (int k = 0; k < 100; ++k) {
    Run r;
    r.name = "sled start " + std::to_string(k);
    r.scenario = f.scenario;
    const double radius = 10.0 * std::sqrt(unit(rng));
    const double phi = angle(rng);
    double y1 = angle(rng);
    if (y1 == -kPi) y1 = kPi;
    r.scenario.initial.x = {x0[0] + radius * std::cos(phi), x0[1] + radius * std::sin(phi)};
    r.scenario.initial.y = ShapeVec<double>{y1};
    r.result = integrate_closed_loop(r.scenario);
    if (!r.result.trace.empty()) r.report = diagnostics(r.result.trace, r.scenario.gains.gamma);
    std::string why;
    if (converged(r, why)) {
      ++passed;
    } else if (first_failure.empty()) {
      first_failure = "; first failure: start " + std::to_string(k) + " [" + why + "]";
    }
    if (r.report) worst_x = std::max(worst_x, r.report->terminal_x_error);
    worst_wall = std::max(worst_wall, r.result.wall_seconds);
    extra.push_back(std::move(r));
  }
  return {passed == 100, std::to_string(passed) + "/100 converged, worst terminal |x-xD| " +
                             sci(worst_x) + ", slowest run " + cli::fmt2(worst_wall) + " s" +
                             first_failure};
}

// 9. Constraint residuals along every successful run.
Verdict constraint_residuals_ok(const std::vector<Run>& runs, const std::vector<Run>& extra) {
  double worst = 0.0;
  int count = 0;
  for (const auto* set : {&runs, &extra}) {
    for (const auto& r : *set) {
      if (!r.result.ok() || !r.report) continue;
      ++count;
      worst = std::max(worst, r.report->max_residual);
    }
  }
  return {count > 0 && worst <= 1e-6,
          std::to_string(count) + " successful runs, max residual " + sci(worst)};
}

// 10. Step-halving ratio on the automobile circle scenario.
Verdict integrator_order() {
  auto f = cli::load_scenario(kScenarios / "auto_circle_forward.json");
  f.scenario.horizon = 4.0;
  f.scenario.decimation = 1;
  std::vector<Configuration> finals;
  for (double h : {0.04, 0.02, 0.01}) {
    Scenario sc = f.scenario;
    sc.step = h;
    const auto res = integrate_closed_loop(sc);
    if (!res.ok()) return {false, "fault at h = " + sci(h) + ": " + res.fault->message};
    finals.push_back(res.trace.back().q);
  }
  auto dist = [](const Configuration& a, const Configuration& b) {
    double d = std::hypot(a.x[0] - b.x[0], a.x[1] - b.x[1]);
    for (std::size_t i = 0; i < a.y.size(); ++i) d = std::hypot(d, a.y[i] - b.y[i]);
    return d;
  };
  const double e1 = dist(finals[0], finals[1]);
  const double e2 = dist(finals[1], finals[2]);
  const double ratio = e1 / e2;
  return {ratio >= 12.0 && ratio <= 20.0, "h = 0.04/0.02/0.01 over 4 s, differences " + sci(e1) +
                                              " and " + sci(e2) + ", ratio " + cli::fmt2(ratio)};
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](int id, const char* title, const std::function<Verdict()>& f) {
    Verdict v;
    try {
      v = f();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    if (!v.pass) ++failures;
    std::printf("[%s] %2d %s: %s\n", v.pass ? "PASS" : "FAIL", id, title, v.detail.c_str());
    std::fflush(stdout);
  };

  report(1, "transform round-trip", transform_round_trip);
  report(2, "jacobian identity", jacobian_identity);
  report(3, "maneuverability gate", maneuverability_gate);
  report(4, "reference feasibility", reference_feasibility);
  report(5, "gradient integrity", gradient_integrity);

  std::vector<Run> runs;
  for (const char* name : {"sled_line_offset", "auto_circle_forward", "auto_circle_backward",
                           "uturn_truck_2trailers"}) {
    runs.push_back(run_scenario(name));
  }
  std::vector<Run> basin;
  report(6, "lyapunov decay", [&] { return lyapunov_decay(runs); });
  report(7, "convergence", [&] { return convergence(runs); });
  report(8, "sled basin", [&] { return sled_basin(basin); });
  report(9, "constraint residuals", [&] { return constraint_residuals_ok(runs, basin); });
  report(10, "integrator order", integrator_order);

  std::printf("%d of 10 criteria passed\n", 10 - failures);
  return failures == 0 ? 0 : 1;
}
