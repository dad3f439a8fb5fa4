#pragma once

// Maneuvering operator: lifts a planar curve x^D(t) to a reference
// (q^D(t), u^D(t)) of the vehicle.
//
// In chained coordinates x' = v1 (cos s1, sin s1), so |v1| = |x^D'| with the
// sign chosen by the travel direction, and s1 obeys
//
//   s1' = (x2'' cos s1 - x1'' sin s1) / v1.
//
// The remaining coordinates follow from s_i = s_{i-1}' / v1 and v2 = s_n'.
// All time derivatives are exact: s1 is lifted to a jet by repeatedly feeding
// the jet of the right-hand side back into itself.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "nhtrack/dual.hpp"
#include "nhtrack/errors.hpp"
#include "nhtrack/models.hpp"
#include "nhtrack/trajectory.hpp"
#include "nhtrack/transform.hpp"

namespace nhtrack {

// Reference speed below this is treated as a stop.
inline constexpr double kReferenceSpeedFloor = 1e-9;

// Initial heading range: forward (-pi, pi], backward [0, 2 pi).
enum class HeadingBranch { kForward, kBackward };

inline HeadingBranch default_branch(int direction) {
  return direction > 0 ? HeadingBranch::kForward : HeadingBranch::kBackward;
}

inline void validate_direction(int direction) {
  if (direction != 1 && direction != -1) throw DomainError("direction must be +1 or -1");
}

// Right-hand side of the s1 equation, over any scalar.
template <ad::Scalar T>
T heading_rate(const Trajectory& traj, int direction, const T& t, const T& s1) {
  using ad::sincos;
  using ad::sqrt;
  const auto v = traj.velocity<T>(t);
  const auto a = traj.acceleration<T>(t);
  const T speed2 = v[0] * v[0] + v[1] * v[1];
  if (!(ad::value_of(speed2) > kReferenceSpeedFloor * kReferenceSpeedFloor)) {
    throw ReferenceError("reference speed vanishes at t = " + std::to_string(ad::value_of(t)));
  }
  const auto [s, c] = sincos(s1);
  return (a[1] * c - a[0] * s) / (sqrt(speed2) * static_cast<double>(direction));
}

// s1^D(t0): the heading of direction * x^D'(t0) on the requested branch.
inline double initial_heading(const Trajectory& traj, int direction, HeadingBranch branch,
                              double t0 = 0.0) {
  validate_direction(direction);
  const auto v = traj.velocity(t0);
  if (std::hypot(v[0], v[1]) <= kReferenceSpeedFloor) {
    throw ReferenceError("reference speed vanishes at t = " + std::to_string(t0));
  }
  double a = std::atan2(direction * v[1], direction * v[0]);
  if (branch == HeadingBranch::kForward) {
    if (a <= -std::numbers::pi) a += 2 * std::numbers::pi;
  } else if (a < 0.0) {
    a += 2 * std::numbers::pi;
  }
  return a;
}

// Chained reference (s^D, v^D) at one instant.
struct ChainReference {
  ShapeVec<double> s;
  Vec2 v{};
};

namespace detail {

// Depth-K time jet of s1 through (t, s1).
template <int K>
ad::Jet<K> heading_jet(const Trajectory& traj, int direction, double t, double s1) {
  if constexpr (K == 0) {
    return s1;
  } else {
    const auto lower = heading_jet<K - 1>(traj, direction, t, s1);
    const auto rate = heading_rate(traj, direction, ad::variable_jet<K - 1>(t), lower);
    return ad::Jet<K>(lower, {rate});
  }
}

// s_{index+1} is the value of s; its derivative divided by v1 is the next one.
template <int K>
void descend_chain(const ad::Jet<K>& s, const ad::Jet<K>& v1, int index, int n,
                   ChainReference& out) {
  out.s[index] = ad::value_of(s);
  if constexpr (K >= 1) {
    if (index == n - 1) {
      out.v[1] = ad::value_of(s.d[0]);
      return;
    }
    if constexpr (K >= 2) descend_chain<K - 1>(s.d[0] / v1.v, v1.v, index + 1, n, out);
  }
}

template <int N>
ChainReference chain_reference(const Trajectory& traj, int direction, double t, double s1) {
  using ad::sqrt;
  ChainReference out;
  out.s.resize(N);
  const auto s = heading_jet<N>(traj, direction, t, s1);
  const auto vel = traj.velocity(ad::variable_jet<N>(t));
  const auto v1 = sqrt(vel[0] * vel[0] + vel[1] * vel[1]) * static_cast<double>(direction);
  out.v[0] = ad::value_of(v1);
  descend_chain<N>(s, v1, 0, N, out);
  return out;
}

}  // namespace detail

inline ChainReference chain_reference(const Trajectory& traj, int n, int direction, double t,
                                      double s1) {
  validate_direction(direction);
  if (n < 1) throw DomainError("shape dimension must be positive");
  ChainReference out;
  detail::with_depth(n, [&](auto k) {
    constexpr int K = decltype(k)::value;
    if constexpr (K >= 1) out = detail::chain_reference<K>(traj, direction, t, s1);
  });
  return out;
}

struct ReferencePoint {
  double t = 0.0;
  Configuration qD;
  Vec2 uD{};
  ShapeVec<double> sD;
  Vec2 vD{};
  int direction = 1;
};

// Throws ReferenceError naming the joint when y is outside the transform's
// component.
inline void require_in_component(const ChainTransform& tr, std::span<const double> y, double t) {
  if (tr.contains(y)) return;
  for (int i = 1; i < tr.n(); ++i) {
    const double c = std::cos(y[i]);
    const int side = c > 0.0 ? 0 : 1;
    if (std::abs(c) < kBoundaryTolerance || side != tr.component().mu[i - 1]) {
      throw ReferenceError("reference leaves component " + tr.component().label() + " at t = " +
                           std::to_string(t) + ": joint y" + std::to_string(i + 1) + " = " +
                           std::to_string(y[i]));
    }
  }
}

inline ReferencePoint reference_point(const ChainTransform& tr, const Trajectory& traj,
                                      int direction, double t, double s1) {
  ReferencePoint r;
  r.t = t;
  r.direction = direction;
  const auto chain = chain_reference(traj, tr.n(), direction, t, s1);
  r.sD = chain.s;
  r.vD = chain.v;
  r.qD.x = traj.position(t);
  r.qD.y = tr.inverse(chain.s);
  require_in_component(tr, r.qD.y, t);
  r.uD = tr.from_chained_input(r.qD.y, chain.v);
  return r;
}

// Reference generator for one component and direction. Integrates the s1
// equation with classical RK4 in steps of at most `step`; queries must not
// go back in time.
class ManeuveringOperator {
 public:
  ManeuveringOperator(const WheeledModel& model, const ComponentIndex& mu, Trajectory traj,
                      int direction, std::optional<HeadingBranch> branch = std::nullopt,
                      double step = 1e-3)
      : transform_(ChainTransform::best(model, mu)),
        traj_(std::move(traj)),
        direction_(direction),
        step_(step) {
    validate_direction(direction);
    if (!(step > 0.0)) throw DomainError("step must be positive");
    s1_ = initial_heading(traj_, direction, branch.value_or(default_branch(direction)));
  }

  double time() const { return t_; }
  double heading() const { return s1_; }
  const ChainTransform& transform() const { return transform_; }

  ReferencePoint at(double t) {
    advance_to(t);
    return reference_point(transform_, traj_, direction_, t_, s1_);
  }

  void advance_to(double t) {
    if (t < t_) throw DomainError("reference generator cannot go back in time");
    while (t_ < t) {
      const double h = std::min(step_, t - t_);
      const auto f = [&](double tt, double s) { return heading_rate(traj_, direction_, tt, s); };
      const double k1 = f(t_, s1_);
      const double k2 = f(t_ + h / 2, s1_ + h / 2 * k1);
      const double k3 = f(t_ + h / 2, s1_ + h / 2 * k2);
      const double k4 = f(t_ + h, s1_ + h * k3);
      s1_ += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
      // Land exactly on t when the last step is the remainder.
      t_ = (h == t - t_) ? t : t_ + h;
    }
  }

 private:
  ChainTransform transform_;
  Trajectory traj_;
  int direction_;
  double step_;
  double t_ = 0.0;
  double s1_ = 0.0;
};

// Cumulative path length tau(t) = int_0^t |x^D'| and its inverse, over
// [0, horizon]. Uses 5-point Gauss-Legendre quadrature on equal panels.
class ArcLength {
 public:
  ArcLength(Trajectory traj, double horizon, int panels = 1024)
      : traj_(std::move(traj)), horizon_(horizon), panel_(horizon / panels) {
    if (!(horizon > 0.0)) throw DomainError("arc length horizon must be positive");
    cumulative_.push_back(0.0);
    for (int k = 0; k < panels; ++k) {
      cumulative_.push_back(cumulative_.back() + integrate(k * panel_, (k + 1) * panel_));
    }
    for (std::size_t k = 1; k < cumulative_.size(); ++k) {
      if (!(cumulative_[k] > cumulative_[k - 1])) {
        throw ReferenceError("arc length is not strictly increasing (reference stops)");
      }
    }
  }

  double horizon() const { return horizon_; }
  double length() const { return cumulative_.back(); }

  double tau_of_t(double t) const {
    if (t < 0.0 || t > horizon_ * (1 + 1e-12)) throw DomainError("time outside arc length range");
    const int k = std::min(static_cast<int>(t / panel_), static_cast<int>(cumulative_.size()) - 2);
    return cumulative_[k] + integrate(k * panel_, t);
  }

  double t_of_tau(double tau) const {
    if (tau < 0.0 || tau > length() * (1 + 1e-12)) {
      throw DomainError("arc length outside the tabulated range");
    }
    const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), tau);
    const int k = std::clamp(static_cast<int>(it - cumulative_.begin()) - 1, 0,
                             static_cast<int>(cumulative_.size()) - 2);
    const double frac = (tau - cumulative_[k]) / (cumulative_[k + 1] - cumulative_[k]);
    double t = (k + frac) * panel_;
    for (int it_n = 0; it_n < 50; ++it_n) {
      const double dt = (tau_of_t(std::clamp(t, 0.0, horizon_)) - tau) / traj_.speed(t);
      t -= dt;
      if (std::abs(dt) <= 1e-15 * std::max(1.0, std::abs(t))) break;
    }
    return t;
  }

 private:
  double integrate(double a, double b) const {
    static constexpr std::array<double, 5> kNodes = {
        0.0, -0.5384693101056831, 0.5384693101056831, -0.9061798459386640, 0.9061798459386640};
    static constexpr std::array<double, 5> kWeights = {
        0.5688888888888889, 0.4786286704993665, 0.4786286704993665, 0.2369268850561891,
        0.2369268850561891};
    const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    double acc = 0.0;
    for (int i = 0; i < 5; ++i) acc += kWeights[i] * traj_.speed(mid + half * kNodes[i]);
    return acc * half;
  }

  Trajectory traj_;
  double horizon_;
  double panel_;
  std::vector<double> cumulative_;
};

// Speed below this over the horizon makes a trajectory inadmissible.
inline constexpr double kAdmissibleSpeedFloor = 1e-6;

struct AdmissibilityReport {
  double min_speed = 0.0;                     // sampled
  std::optional<double> analytic_speed_floor;  // from the catalog, when known
  std::vector<double> max_derivative_norms;   // orders 1..n+1, sampled
  std::vector<std::optional<double>> analytic_derivative_bounds;
  bool admissible = false;
  bool strongly_admissible = false;

  std::string summary() const {
    std::string out = "min speed " + std::to_string(min_speed);
    out += admissible ? " (admissible" : " (not admissible";
    out += strongly_admissible ? ", strongly admissible)" : ")";
    return out;
  }
};

inline AdmissibilityReport admissibility_report(const Trajectory& traj, int n, double horizon,
                                                int samples = 2001) {
  if (n < 1 || n > kMaxShapeDim) throw DomainError("shape dimension out of range");
  if (!(horizon > 0.0) || samples < 2) throw DomainError("invalid sampling grid");
  AdmissibilityReport r;
  r.min_speed = std::numeric_limits<double>::infinity();
  r.max_derivative_norms.assign(n + 1, 0.0);
  for (int k = 1; k <= n + 1; ++k) r.analytic_derivative_bounds.push_back(traj.derivative_bound(k, horizon));
  r.analytic_speed_floor = traj.speed_floor(horizon);
  bool finite = true;
  detail::with_depth<kMaxShapeDim + 1>(n + 1, [&](auto k) {
    constexpr int K = decltype(k)::value;
    for (int j = 0; j < samples; ++j) {
      const double t = horizon * j / (samples - 1);
      const auto x = traj.position(ad::variable_jet<K>(t));
      for (int order = 1; order <= K; ++order) {
        const double norm = std::hypot(ad::derivative<K>(x[0], order), ad::derivative<K>(x[1], order));
        if (!std::isfinite(norm)) finite = false;
        r.max_derivative_norms[order - 1] = std::max(r.max_derivative_norms[order - 1], norm);
      }
      r.min_speed = std::min(r.min_speed, traj.speed(t));
    }
  });
  r.admissible = r.min_speed > kAdmissibleSpeedFloor &&
                 (!r.analytic_speed_floor || *r.analytic_speed_floor > kAdmissibleSpeedFloor);
  r.strongly_admissible = r.admissible && finite;
  return r;
}

}  // namespace nhtrack
