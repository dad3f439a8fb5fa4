#pragma once

// Fixed-step RK4 integration of the closed loop. The integrated state is
// (x, y, s1D, tau): the plant, the reference heading and the arc length of
// the desired curve. The control is re-evaluated at every stage.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "nhtrack/backstepping.hpp"
#include "nhtrack/errors.hpp"
#include "nhtrack/maneuver.hpp"
#include "nhtrack/models.hpp"
#include "nhtrack/trajectory.hpp"

namespace nhtrack {

struct Scenario {
  WheeledModel model = automobile();
  Trajectory trajectory = LineTrajectory{};
  int direction = 1;
  Gains gains = Gains::defaults(2);
  Configuration initial{{0.0, 0.0}, ShapeVec<double>{0.0, 0.0}};
  double horizon = 30.0;  // s
  double step = 1e-3;     // s
  int decimation = 10;    // record every decimation-th step
  std::optional<HeadingBranch> branch;

  void validate() const {
    validate_direction(direction);
    gains.validate(model.n());
    if (!(horizon > 0.0) || !std::isfinite(horizon)) throw DomainError("horizon must be positive");
    if (!(step > 0.0) || !std::isfinite(step)) throw DomainError("step must be positive");
    if (decimation < 1) throw DomainError("decimation must be at least 1");
    if (static_cast<int>(initial.y.size()) != model.n()) {
      throw DomainError("initial state has " + std::to_string(initial.y.size()) +
                        " shape variables, model has " + std::to_string(model.n()));
    }
  }
};

struct TraceSample {
  double t = 0.0;
  double tau = 0.0;
  Configuration q;
  Vec2 u{};
  Configuration qD;
  Vec2 uD{};
  double x_error = 0.0;         // |x - xD|
  double shape_distance = 0.0;  // sum_i |y_i - yD_i|
  double lyapunov = 0.0;        // V_n
  double residual = 0.0;        // max constraint residual since the previous sample
};

struct Trace {
  ComponentIndex component;
  std::vector<TraceSample> samples;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  const TraceSample& back() const { return samples.back(); }
};

struct SimulationFault {
  std::string kind;  // boundary, singularity, reference, inversion, domain
  std::string message;
  double t = 0.0;
  Configuration last_state;
};

struct SimulationResult {
  Trace trace;
  std::optional<SimulationFault> fault;
  double wall_seconds = 0.0;
  long steps = 0;

  bool ok() const { return !fault.has_value(); }
};

namespace detail {

using Augmented = SmallVec<double, kMaxShapeDim + 4>;

inline Configuration unpack(const Augmented& s, int n) {
  Configuration q;
  q.x = {s[0], s[1]};
  for (int i = 0; i < n; ++i) q.y.push_back(s[2 + i]);
  return q;
}

inline double shape_distance(std::span<const double> a, std::span<const double> b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d += std::abs(a[i] - b[i]);
  return d;
}

class ClosedLoop {
 public:
  explicit ClosedLoop(const Scenario& sc)
      : sc_(sc),
        law_(sc.model, component_of(sc.model, sc.initial.y), sc.gains, sc.direction),
        n_(sc.model.n()) {}

  const FeedbackLaw& law() const { return law_; }

  Augmented rate(double t, const Augmented& s) const {
    const auto q = unpack(s, n_);
    const auto chain = chain_reference(sc_.trajectory, n_, sc_.direction, t, s[n_ + 2]);
    const auto u = law_(q, sc_.trajectory.position(t), chain.s, chain.v);
    const auto qdot = rhs(sc_.model, q, u);
    Augmented out(n_ + 4);
    for (int i = 0; i < n_ + 2; ++i) out[i] = qdot[i];
    out[n_ + 2] = n_ >= 2 ? chain.v[0] * chain.s[1] : chain.v[1];
    out[n_ + 3] = std::abs(chain.v[0]);
    return out;
  }

  TraceSample sample(double t, const Augmented& s, double residual) const {
    TraceSample r;
    r.t = t;
    r.tau = s[n_ + 3];
    r.q = unpack(s, n_);
    const auto chain = chain_reference(sc_.trajectory, n_, sc_.direction, t, s[n_ + 2]);
    const auto xD = sc_.trajectory.position(t);
    const auto ev = law_.evaluate(r.q, xD, chain.s, chain.v, true);
    r.u = ev.u;
    r.lyapunov = ev.lyapunov;
    r.qD.x = xD;
    r.qD.y = law_.transform().inverse(chain.s);
    require_in_component(law_.transform(), r.qD.y, t);
    r.uD = law_.transform().from_chained_input(r.qD.y, chain.v);
    r.x_error = std::hypot(r.q.x[0] - xD[0], r.q.x[1] - xD[1]);
    r.shape_distance = shape_distance(r.q.y, r.qD.y);
    r.residual = residual;
    return r;
  }

  // Residual of the nonholonomic constraints at the middle of five
  // consecutive grid states, with the velocity from the fourth-order central
  // difference. The difference error is O(h^4), so the value measures the
  // integrator's departure from the constraint manifold.
  double grid_residual(const std::array<Augmented, 5>& w, double h) const {
    StateVec<double> mid(n_ + 2), vel(n_ + 2);
    for (int i = 0; i < n_ + 2; ++i) {
      mid[i] = w[2][i];
      vel[i] = (w[0][i] - 8 * w[1][i] + 8 * w[3][i] - w[4][i]) / (12 * h);
    }
    double worst = 0.0;
    for (double r : constraint_residuals(sc_.model, mid, vel)) worst = std::max(worst, std::abs(r));
    return worst;
  }

 private:
  const Scenario& sc_;
  FeedbackLaw law_;
  int n_;
};

inline Augmented axpy(const Augmented& x, const Augmented& k, double a) {
  Augmented r(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) r[i] = x[i] + a * k[i];
  return r;
}

template <class F>
std::optional<SimulationFault> guarded(double t, const Configuration& last, F&& f) {
  auto fault = [&](std::string kind, const std::exception& e) {
    return SimulationFault{std::move(kind), e.what(), t, last};
  };
  try {
    f();
  } catch (const BoundaryError& e) {
    return fault("boundary", e);
  } catch (const SingularityError& e) {
    return fault("singularity", e);
  } catch (const ReferenceError& e) {
    return fault("reference", e);
  } catch (const InversionError& e) {
    return fault("inversion", e);
  } catch (const DomainError& e) {
    return fault("domain", e);
  }
  return std::nullopt;
}

}  // namespace detail

inline SimulationResult integrate_closed_loop(const Scenario& sc) {
  sc.validate();
  const auto start = std::chrono::steady_clock::now();
  const int n = sc.model.n();
  const detail::ClosedLoop loop(sc);

  SimulationResult res;
  res.trace.component = loop.law().transform().component();

  detail::Augmented s(n + 4);
  s[0] = sc.initial.x[0];
  s[1] = sc.initial.x[1];
  for (int i = 0; i < n; ++i) s[2 + i] = sc.initial.y[i];
  s[n + 2] = initial_heading(sc.trajectory, sc.direction,
                             sc.branch.value_or(default_branch(sc.direction)));
  s[n + 3] = 0.0;

  const long steps = std::max(1L, static_cast<long>(std::ceil(sc.horizon / sc.step - 1e-9)));
  double residual = 0.0;
  std::array<detail::Augmented, 5> window;
  window[4] = s;
  auto record = [&](double t) {
    return detail::guarded(t, detail::unpack(s, n), [&] {
      res.trace.samples.push_back(loop.sample(t, s, residual));
      residual = 0.0;
    });
  };

  res.fault = record(0.0);
  for (long k = 0; k < steps && !res.fault; ++k) {
    const double t = k * sc.step;
    const double t1 = k + 1 == steps ? sc.horizon : (k + 1) * sc.step;
    const double h = t1 - t;
    detail::Augmented next;
    res.fault = detail::guarded(t, detail::unpack(s, n), [&] {
      const auto k1 = loop.rate(t, s);
      const auto k2 = loop.rate(t + h / 2, detail::axpy(s, k1, h / 2));
      const auto k3 = loop.rate(t + h / 2, detail::axpy(s, k2, h / 2));
      const auto k4 = loop.rate(t1, detail::axpy(s, k3, h));
      next = detail::Augmented(s.size());
      for (std::size_t i = 0; i < s.size(); ++i) {
        next[i] = s[i] + h / 6 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
      }
      // The end point must lie in the same component.
      if (!(component_of(sc.model, std::span<const double>(next.data() + 2, n)) ==
            res.trace.component)) {
        throw BoundaryError("state left component " + res.trace.component.label(), 0);
      }
    });
    if (res.fault) break;
    s = next;
    ++res.steps;
    std::rotate(window.begin(), window.begin() + 1, window.end());
    window[4] = s;
    if (res.steps >= 4 && h == sc.step) residual = std::max(residual, loop.grid_residual(window, h));
    if ((k + 1) % sc.decimation == 0 || k + 1 == steps) res.fault = record(t1);
  }
  res.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return res;
}

// ---------------------------------------------------------------------------
// Diagnostics

struct DiagnosticsOptions {
  double decay_slack = 1e-3;  // V(tau) <= V(0) exp(-2 gamma tau) (1 + slack)
  double decay_floor = 1e-24;  // values below this are rounding noise
  double convergence_tolerance = 1e-3;
  double residual_tolerance = 1e-6;
};

struct DiagnosticsReport {
  bool decay_ok = true;
  std::optional<std::size_t> first_decay_violation;
  double worst_decay_ratio = 0.0;  // max V / (V(0) exp(-2 gamma tau))
  double terminal_x_error = 0.0;
  double terminal_shape_distance = 0.0;
  double terminal_input_error = 0.0;
  bool converged = false;
  double max_residual = 0.0;
  bool residual_ok = true;
  double max_input_norm = 0.0;
  double max_reference_input_norm = 0.0;
  bool input_bounded = true;
  bool sign_invariant = true;
  std::optional<double> time_to_one_percent;

  bool pass() const { return decay_ok && converged && residual_ok && input_bounded && sign_invariant; }

  std::string summary() const {
    std::ostringstream os;
    os.precision(3);
    os << std::scientific;
    os << "decay " << (decay_ok ? "pass" : "FAIL");
    if (first_decay_violation) os << " (first violation at sample " << *first_decay_violation << ")";
    os << ", terminal |x-xD| " << terminal_x_error << ", d(y,yD) " << terminal_shape_distance
       << ", |u-uD| " << terminal_input_error << ", converged " << (converged ? "yes" : "no")
       << ", max residual " << max_residual << ", sign invariant "
       << (sign_invariant ? "yes" : "no");
    return os.str();
  }
};

inline DiagnosticsReport diagnostics(const Trace& trace, double gamma,
                                     const DiagnosticsOptions& opt = {}) {
  if (trace.empty()) throw DomainError("diagnostics of an empty trace");
  DiagnosticsReport r;
  const auto& first = trace.samples.front();
  const double v0 = first.lyapunov;
  const double x0 = first.x_error;
  const int sign0 = first.u[0] > 0 ? 1 : -1;
  for (std::size_t k = 0; k < trace.size(); ++k) {
    const auto& s = trace.samples[k];
    const double bound = v0 * std::exp(-2 * gamma * s.tau);
    if (bound > 0.0) r.worst_decay_ratio = std::max(r.worst_decay_ratio, s.lyapunov / bound);
    if (s.lyapunov > bound * (1 + opt.decay_slack) && s.lyapunov > opt.decay_floor) {
      if (r.decay_ok) r.first_decay_violation = k;
      r.decay_ok = false;
    }
    r.max_residual = std::max(r.max_residual, s.residual);
    const double un = std::hypot(s.u[0], s.u[1]);
    r.max_input_norm = std::max(r.max_input_norm, un);
    r.max_reference_input_norm = std::max(r.max_reference_input_norm, std::hypot(s.uD[0], s.uD[1]));
    if (!std::isfinite(un)) r.input_bounded = false;
    if ((s.u[0] > 0 ? 1 : -1) != sign0 || s.u[0] == 0.0) r.sign_invariant = false;
  }
  // Last time |x - xD| exceeds 1% of its initial value.
  std::optional<double> last_above;
  for (const auto& s : trace.samples) {
    if (s.x_error > 0.01 * x0) last_above = s.t;
  }
  if (!last_above) {
    r.time_to_one_percent = first.t;
  } else if (*last_above < trace.back().t) {
    r.time_to_one_percent = *last_above;
  }
  const auto& last = trace.back();
  r.terminal_x_error = last.x_error;
  r.terminal_shape_distance = last.shape_distance;
  r.terminal_input_error = std::hypot(last.u[0] - last.uD[0], last.u[1] - last.uD[1]);
  r.converged = r.terminal_x_error <= opt.convergence_tolerance &&
                r.terminal_shape_distance <= opt.convergence_tolerance &&
                r.terminal_input_error <= opt.convergence_tolerance;
  r.residual_ok = r.max_residual <= opt.residual_tolerance;
  return r;
}

}  // namespace nhtrack
