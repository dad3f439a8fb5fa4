#pragma once

// Recursive backstepping design for the chained error system in arc-length
// time:
//
//   x~' = -w1bar p0 + w1 G(s1bar) (cos s~1, sin s~1)
//   s~i' = w1 s~(i+1) + (w1 - w1bar) s(i+1)bar,   s~n' = w2
//
// Stages are built at compile time. A stage maps (z, p) to the virtual
// control alpha and its Lyapunov function V, and evaluates over any scalar in
// the dual tower, so the next stage obtains the derivatives it needs by
// evaluating the previous one over Dual<T, 2>.

#include <cmath>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "nhtrack/dual.hpp"
#include "nhtrack/errors.hpp"
#include "nhtrack/maneuver.hpp"
#include "nhtrack/models.hpp"
#include "nhtrack/norm_functions.hpp"
#include "nhtrack/small_vector.hpp"
#include "nhtrack/transform.hpp"

namespace nhtrack {

// Below this |zeta - eta| the divided difference switches to dB/dzeta.
inline constexpr double kDividedDifferenceSwitch = 1e-9;
inline constexpr double kBetaFloor = 1e-12;

template <class T>
using StageVec = SmallVec<T, kMaxShapeDim + 2>;

struct Gains {
  double gamma = 1.0;
  ShapeVec<double> deltas;

  // Unit deltas for a model with n shape variables.
  static Gains defaults(int n, double gamma = 1.0) {
    Gains g;
    g.gamma = gamma;
    g.deltas = ShapeVec<double>(n, 1.0);
    return g;
  }

  void validate(int n) const {
    if (!(gamma > 0.0) || !std::isfinite(gamma)) throw DomainError("gamma must be positive");
    if (static_cast<int>(deltas.size()) != n) {
      throw DomainError("expected " + std::to_string(n) + " deltas, got " +
                        std::to_string(deltas.size()));
    }
    for (double d : deltas) {
      if (!(d > 0.0) || !std::isfinite(d)) throw DomainError("deltas must be positive");
    }
  }
};

template <class T>
struct StageValue {
  T alpha;
  T V;
};

// ---------------------------------------------------------------------------
// Error coordinates

struct ErrorState {
  Vec2 x_tilde{};
  ShapeVec<double> s_tilde;
  double tau = 0.0;
};

inline ErrorState error_coordinates(const Configuration& q, std::span<const double> s,
                                    const Vec2& xD, std::span<const double> sD, double tau = 0.0) {
  if (s.size() != sD.size()) throw DomainError("error coordinates: dimension mismatch");
  ErrorState e;
  e.x_tilde = {q.x[0] - xD[0], q.x[1] - xD[1]};
  for (std::size_t i = 0; i < s.size(); ++i) e.s_tilde.push_back(s[i] - sD[i]);
  e.tau = tau;
  return e;
}

inline void require_reference_speed(const Vec2& vbar) {
  if (!(std::abs(vbar[0]) > 0.0)) throw ReferenceError("reference speed v1bar is zero");
}

// w1 = v1 / |v1bar|, w2 = (v2 - v2bar) / |v1bar|
inline Vec2 to_w(const Vec2& v, const Vec2& vbar) {
  require_reference_speed(vbar);
  const double a = std::abs(vbar[0]);
  return {v[0] / a, (v[1] - vbar[1]) / a};
}

// v = |v1bar| w + (0, v2bar)
inline Vec2 from_w(const Vec2& w, const Vec2& vbar) {
  require_reference_speed(vbar);
  const double a = std::abs(vbar[0]);
  return {a * w[0], a * w[1] + vbar[1]};
}

// ---------------------------------------------------------------------------
// x-subsystem

template <class T>
struct XFeedback {
  T lambda;
  T alpha;
  T c1, c2;
};

// c = -tanhc G(s1bar)^{-1} x~ + w1bar (1, 0), lambda = w1bar |c|,
// alpha0 = arctan(c2 / c1). p0 = (cos s1bar, sin s1bar) enters as data.
template <ad::Scalar T>
XFeedback<T> x_feedback(const T& x1, const T& x2, const T& cs, const T& sn, double wbar,
                        double gamma) {
  using ad::atan2;
  using ad::sqrt;
  const T k = ad::tanhc_sq(x1 * x1 + x2 * x2, gamma);
  XFeedback<T> f;
  f.c1 = wbar - k * (cs * x1 + sn * x2);
  f.c2 = k * (sn * x1 - cs * x2);
  f.lambda = sqrt(f.c1 * f.c1 + f.c2 * f.c2) * wbar;
  // w1bar c1 > 0, so this is the principal arctan(c2 / c1).
  f.alpha = atan2(f.c2 * wbar, f.c1 * wbar);
  return f;
}

// alpha0(x~, p0), V0(x~) = sinh^2(gamma |x~|)
class XStage {
 public:
  static constexpr int kLevel = 0;

  XStage(double wbar, double gamma) : wbar_(wbar), gamma_(gamma) {}

  double wbar() const { return wbar_; }
  double gamma() const { return gamma_; }

  template <ad::Scalar T>
  T lambda(std::span<const T> x, std::span<const T> p0) const {
    return x_feedback(x[0], x[1], p0[0], p0[1], wbar_, gamma_).lambda;
  }

  template <ad::Scalar T>
  StageValue<T> eval(std::span<const T> z, std::span<const T> p) const {
    check(z.size(), p.size());
    const auto f = x_feedback(z[0], z[1], p[0], p[1], wbar_, gamma_);
    return {f.alpha, ad::sinh_sq_norm(z[0] * z[0] + z[1] * z[1], gamma_)};
  }

  int z_dim() const { return 2; }
  int p_dim() const { return 2; }

 private:
  static void check(std::size_t z, std::size_t p) {
    if (z != 2 || p != 2) throw DomainError("x stage expects z in R^2 and p in R^2");
  }

  double wbar_;
  double gamma_;
};

// ---------------------------------------------------------------------------
// One backstepping step
//
// A cascade describes
//   z' = B(z, zeta, p),  zeta' = b(z, zeta, p) + beta(z, zeta, p) upsilon
// together with the reduction r = R(p), r1 = R'(p) of the parameters of the
// previous stage. Required members:
//
//   int z_dim(), p_dim()
//   drift<T>(z, zeta, p, out)       B
//   b<T>(z, zeta, p), beta<T>(...)
//   reduce<T>(p, r), reduce_rate<T>(p, r1)
//
// Optional: divided_difference<T>(z, zeta, eta, p, out) overriding the
// secant form, coefficients<T>(z, zeta, eta, p, B, D, b, beta) computing all
// of them at once, and `static constexpr bool kAffineInZeta` when D does not
// depend on eta (then eta is not computed).

namespace detail {

template <class C, class T>
concept HasDividedDifference =
    requires(const C& c, std::span<const T> z, const T& x, std::span<T> out) {
      c.template divided_difference<T>(z, x, x, z, out);
    };

template <class C, class T>
concept HasCoefficients = requires(const C& c, std::span<const T> z, const T& x, std::span<T> out,
                                   T& scalar) {
  c.template coefficients<T>(z, x, x, z, out, out, scalar, scalar);
};

template <class C>
constexpr bool affine_in_zeta() {
  if constexpr (requires { C::kAffineInZeta; }) {
    return C::kAffineInZeta;
  } else {
    return false;
  }
}

}  // namespace detail

// (B(zeta) - B(eta)) / (zeta - eta), or dB/dzeta when the two are closer than
// kDividedDifferenceSwitch.
template <class Cascade, ad::Scalar T>
void secant_divided_difference(const Cascade& c, std::span<const T> z, const T& zeta, const T& eta,
                               std::span<const T> p, std::span<T> out) {
  const std::size_t k = out.size();
  if (std::abs(ad::value_of(zeta) - ad::value_of(eta)) < kDividedDifferenceSwitch) {
    using D1 = ad::Dual<T, 1>;
    StageVec<D1> zd(k), pd(p.size()), bd(k);
    for (std::size_t j = 0; j < k; ++j) zd[j] = D1(z[j]);
    for (std::size_t j = 0; j < p.size(); ++j) pd[j] = D1(p[j]);
    const D1 zeta_d(zeta, {T(1.0)});
    c.template drift<D1>(zd, zeta_d, pd, bd);
    for (std::size_t j = 0; j < k; ++j) out[j] = bd[j].d[0];
    return;
  }
  StageVec<T> bz(k), be(k);
  c.template drift<T>(z, zeta, p, bz);
  c.template drift<T>(z, eta, p, be);
  const T h = zeta - eta;
  for (std::size_t j = 0; j < k; ++j) out[j] = (bz[j] - be[j]) / h;
}

// Every quantity entering alpha^ at one point, for inspection and tests.
template <class T>
struct BackstepTerms {
  T zeta;
  T alpha;         // alpha(z, r)
  T V;             // V(z, p, r)
  T dalpha;        // d alpha/dz B + d alpha/dr r1
  T dV;            // dV/dz D
  T b;
  T beta;
  StageVec<T> B;
  StageVec<T> D;
  StageVec<T> r;
  StageVec<T> r1;
};

// alpha^ = beta^{-1} [ dalpha/dz B + dalpha/dr r1 - delta^{-1} dV/dz D - b
//                      - gamma (zeta - alpha) ]
// V^     = V + delta (zeta - alpha)^2 / 2
template <class Prev, class Cascade>
class BackstepStage {
 public:
  static constexpr int kLevel = Prev::kLevel + 1;

  BackstepStage(Prev prev, Cascade cascade, double delta, double gamma)
      : prev_(std::move(prev)), cascade_(std::move(cascade)), delta_(delta), gamma_(gamma) {
    if (!(delta > 0.0) || !(gamma > 0.0)) throw DomainError("backstep gains must be positive");
  }

  const Prev& previous() const { return prev_; }
  const Cascade& cascade() const { return cascade_; }
  double delta() const { return delta_; }
  double gamma() const { return gamma_; }
  int z_dim() const { return cascade_.z_dim() + 1; }
  int p_dim() const { return cascade_.p_dim(); }

  template <ad::Scalar T>
  BackstepTerms<T> terms(std::span<const T> z, std::span<const T> p) const {
    check(z.size(), p.size());
    const std::size_t k = z.size() - 1;
    const std::span<const T> zp = z.first(k);
    BackstepTerms<T> t;
    t.zeta = z[k];
    t.r = StageVec<T>(prev_.p_dim());
    t.r1 = StageVec<T>(prev_.p_dim());
    cascade_.template reduce<T>(p, t.r);
    cascade_.template reduce_rate<T>(p, t.r1);
    t.B = StageVec<T>(k);

    T eta = t.zeta;
    if constexpr (!detail::affine_in_zeta<Cascade>()) {
      eta = prev_.template eval<T>(zp, std::span<const T>(t.r)).alpha;
    }
    t.D = StageVec<T>(k);
    if constexpr (detail::HasCoefficients<Cascade, T>) {
      cascade_.template coefficients<T>(zp, t.zeta, eta, p, t.B, t.D, t.b, t.beta);
    } else {
      cascade_.template drift<T>(zp, t.zeta, p, t.B);
      if constexpr (detail::HasDividedDifference<Cascade, T>) {
        cascade_.template divided_difference<T>(zp, t.zeta, eta, p, t.D);
      } else {
        secant_divided_difference<Cascade, T>(cascade_, zp, t.zeta, eta, p, t.D);
      }
      t.b = cascade_.template b<T>(zp, t.zeta, p);
      t.beta = cascade_.template beta<T>(zp, t.zeta, p);
    }

    // Tangent 0 carries (B, r1), tangent 1 carries (D, 0).
    using D2 = ad::Dual<T, 2>;
    StageVec<D2> zd(k), rd(t.r.size());
    for (std::size_t j = 0; j < k; ++j) zd[j] = D2(zp[j], {t.B[j], t.D[j]});
    for (std::size_t j = 0; j < t.r.size(); ++j) rd[j] = D2(t.r[j], {t.r1[j], T(0.0)});
    const auto pv = prev_.template eval<D2>(std::span<const D2>(zd), std::span<const D2>(rd));
    t.alpha = pv.alpha.v;
    t.dalpha = pv.alpha.d[0];
    t.V = pv.V.v;
    t.dV = pv.V.d[1];
    return t;
  }

  template <ad::Scalar T>
  StageValue<T> eval(std::span<const T> z, std::span<const T> p) const {
    const auto t = terms<T>(z, p);
    const double beta0 = ad::value_of(t.beta);
    if (!(std::abs(beta0) >= kBetaFloor)) {
      throw SingularityError("backstep: beta vanishes", beta0);
    }
    const T err = t.zeta - t.alpha;
    StageValue<T> out;
    out.alpha = (t.dalpha - t.dV / delta_ - t.b - err * gamma_) / t.beta;
    out.V = t.V + err * err * (delta_ / 2);
    return out;
  }

 private:
  void check(std::size_t z, std::size_t p) const {
    if (static_cast<int>(z) != z_dim() || static_cast<int>(p) != p_dim()) {
      throw DomainError("backstep stage " + std::to_string(kLevel) + ": expected z in R^" +
                        std::to_string(z_dim()) + " and p in R^" + std::to_string(p_dim()));
    }
  }

  Prev prev_;
  Cascade cascade_;
  double delta_;
  double gamma_;
};

template <class Prev, class Cascade>
BackstepStage<Prev, Cascade> backstep(Prev prev, Cascade cascade, double delta, double gamma) {
  return BackstepStage<Prev, Cascade>(std::move(prev), std::move(cascade), delta, gamma);
}

// ---------------------------------------------------------------------------
// The chained error cascade
//
// Level i (1 <= i <= n) has z = (x~, s~1..s~(i-1)), zeta = s~i and
// p = p^i = (cos s1bar, sin s1bar, s2bar, ..., s(i+1)bar), where the entry
// after s_n bar is v2bar / v1bar.

template <int Level>
class PlanarCascade {
  static_assert(Level >= 1 && Level <= kMaxShapeDim);

 public:
  static constexpr bool kAffineInZeta = Level >= 2;

  PlanarCascade(int n, double wbar, double gamma) : n_(n), wbar_(wbar), gamma_(gamma) {
    if (n < Level || n > kMaxShapeDim) throw DomainError("cascade level exceeds model dimension");
  }

  int z_dim() const { return Level + 1; }
  int p_dim() const { return Level + 2; }
  bool terminal() const { return Level == n_; }

  template <ad::Scalar T>
  T lambda(std::span<const T> z, std::span<const T> p) const {
    return x_feedback(z[0], z[1], p[0], p[1], wbar_, gamma_).lambda;
  }

  // B = (B0(x~, s~1, p0), b_k + beta_k s~(k+1) for k < Level)
  template <ad::Scalar T>
  void drift(std::span<const T> z, const T& zeta, std::span<const T> p, std::span<T> out) const {
    drift_with<T>(lambda<T>(z, p), z, zeta, p, out);
  }

  template <ad::Scalar T>
  T b(std::span<const T> z, const T&, std::span<const T> p) const {
    if (terminal()) return T(0.0);
    return (lambda<T>(z, p) - wbar_) * p[Level + 1];
  }

  template <ad::Scalar T>
  T beta(std::span<const T> z, const T&, std::span<const T> p) const {
    if (terminal()) return T(1.0);
    return lambda<T>(z, p);
  }

  // At level 1 the secant of G (cos, sin) is written with half-angle sinc so
  // it stays smooth through zeta = eta. Above level 1, B is affine in zeta.
  template <ad::Scalar T>
  void divided_difference(std::span<const T> z, const T& zeta, const T& eta, std::span<const T> p,
                          std::span<T> out) const {
    divided_difference_with<T>(lambda<T>(z, p), zeta, eta, p, out);
  }

  template <ad::Scalar T>
  void coefficients(std::span<const T> z, const T& zeta, const T& eta, std::span<const T> p,
                    std::span<T> B, std::span<T> D, T& b_out, T& beta_out) const {
    const T lam = lambda<T>(z, p);
    drift_with<T>(lam, z, zeta, p, B);
    divided_difference_with<T>(lam, zeta, eta, p, D);
    b_out = terminal() ? T(0.0) : (lam - wbar_) * p[Level + 1];
    beta_out = terminal() ? T(1.0) : lam;
  }

  // r = p^(i-1): the first Level + 1 entries.
  template <ad::Scalar T>
  void reduce(std::span<const T> p, std::span<T> r) const {
    for (int j = 0; j <= Level; ++j) r[j] = p[j];
  }

  // r1 = (p^(i-1))' = (-sin s1bar s2bar, cos s1bar s2bar, s3bar, ..., s(i+1)bar) w1bar
  template <ad::Scalar T>
  void reduce_rate(std::span<const T> p, std::span<T> r1) const {
    r1[0] = -p[1] * p[2] * wbar_;
    r1[1] = p[0] * p[2] * wbar_;
    for (int j = 2; j <= Level; ++j) r1[j] = p[j + 1] * wbar_;
  }

 private:
  template <ad::Scalar T>
  void drift_with(const T& lam, std::span<const T> z, const T& zeta, std::span<const T> p,
                  std::span<T> out) const {
    using ad::sincos;
    const T& s1 = Level == 1 ? zeta : z[2];
    const auto [sn, cs] = sincos(s1);
    out[0] = lam * (p[0] * cs - p[1] * sn) - p[0] * wbar_;
    out[1] = lam * (p[1] * cs + p[0] * sn) - p[1] * wbar_;
    for (int k = 1; k < Level; ++k) {
      const T& next = k + 1 == Level ? zeta : z[2 + k];
      out[1 + k] = (lam - wbar_) * p[k + 1] + lam * next;
    }
  }

  template <ad::Scalar T>
  void divided_difference_with(const T& lam, const T& zeta, const T& eta, std::span<const T> p,
                               std::span<T> out) const {
    if constexpr (Level == 1) {
      using ad::sincos;
      const T m = (zeta + eta) * 0.5;
      const T sc = sinc((zeta - eta) * 0.5);
      const auto [sm, cm] = sincos(m);
      const T d1 = -sm * sc, d2 = cm * sc;
      out[0] = lam * (p[0] * d1 - p[1] * d2);
      out[1] = lam * (p[1] * d1 + p[0] * d2);
    } else {
      for (std::size_t j = 0; j + 1 < out.size(); ++j) out[j] = T(0.0);
      out[out.size() - 1] = lam;
    }
  }

  // sin(h)/h with its series near zero so derivatives stay accurate.
  template <ad::Scalar T>
  static T sinc(const T& h) {
    using ad::sin;
    if (std::abs(ad::value_of(h)) < 1e-3) {
      const T h2 = h * h;
      return 1.0 - h2 * (1.0 / 6 - h2 * (1.0 / 120 - h2 * (1.0 / 5040)));
    }
    return sin(h) / h;
  }

  int n_;
  double wbar_;
  double gamma_;
};

namespace detail {

template <int L>
struct PlanarStageType {
  using type = BackstepStage<typename PlanarStageType<L - 1>::type, PlanarCascade<L>>;
};
template <>
struct PlanarStageType<0> {
  using type = XStage;
};

}  // namespace detail

template <int L>
using PlanarStage = typename detail::PlanarStageType<L>::type;

// alpha_L, V_L for a model with n shape variables.
template <int L>
PlanarStage<L> make_planar_stage(int n, const Gains& gains, double wbar) {
  if constexpr (L == 0) {
    return XStage(wbar, gains.gamma);
  } else {
    return PlanarStage<L>(make_planar_stage<L - 1>(n, gains, wbar),
                          PlanarCascade<L>(n, wbar, gains.gamma), gains.deltas[L - 1],
                          gains.gamma);
  }
}

// p^n = (cos s1bar, sin s1bar, s2bar, ..., snbar, v2bar / v1bar)
inline StageVec<double> reference_parameters(std::span<const double> sbar, const Vec2& vbar) {
  require_reference_speed(vbar);
  StageVec<double> p;
  p.push_back(std::cos(sbar[0]));
  p.push_back(std::sin(sbar[0]));
  for (std::size_t i = 1; i < sbar.size(); ++i) p.push_back(sbar[i]);
  p.push_back(vbar[1] / vbar[0]);
  return p;
}

// ---------------------------------------------------------------------------
// Psi(x~, s~, sbar, vbar) = (lambda(x~, s1bar), alpha_n(z^n, p^n))

class Psi {
 public:
  Psi(int n, const Gains& gains, int direction) : n_(n), wbar_(direction), gains_(gains) {
    validate_direction(direction);
    if (n < 1 || n > kMaxShapeDim) throw DomainError("Psi: shape dimension out of range");
    gains.validate(n);
    build<1>();
  }

  int n() const { return n_; }
  double wbar() const { return wbar_; }
  const Gains& gains() const { return gains_; }

  Vec2 operator()(const Vec2& x_tilde, std::span<const double> s_tilde,
                  std::span<const double> sbar, const Vec2& vbar) const {
    check(s_tilde.size(), sbar.size(), vbar);
    const auto z = state(x_tilde, s_tilde);
    const auto p = reference_parameters(sbar, vbar);
    const double alpha = std::visit(
        [&](const auto& st) { return st.template eval<double>(z, p).alpha; }, stage_);
    return {XStage(wbar_, gains_.gamma).lambda<double>(std::span<const double>(z).first(2),
                                                        std::span<const double>(p).first(2)),
            alpha};
  }

  // V_n at the same arguments.
  double lyapunov(const Vec2& x_tilde, std::span<const double> s_tilde,
                  std::span<const double> sbar, const Vec2& vbar) const {
    check(s_tilde.size(), sbar.size(), vbar);
    const auto z = state(x_tilde, s_tilde);
    const auto p = reference_parameters(sbar, vbar);
    return std::visit([&](const auto& st) { return st.template eval<double>(z, p).V; }, stage_);
  }

 private:
  template <int L>
  void build() {
    if (L == n_) {
      stage_ = make_planar_stage<L>(n_, gains_, wbar_);
    } else if constexpr (L < kMaxShapeDim) {
      build<L + 1>();
    }
  }

  void check(std::size_t ns, std::size_t nb, const Vec2& vbar) const {
    if (static_cast<int>(ns) != n_ || static_cast<int>(nb) != n_) {
      throw DomainError("Psi: expected " + std::to_string(n_) + " chained coordinates");
    }
    require_reference_speed(vbar);
    if ((vbar[0] > 0) != (wbar_ > 0)) throw ReferenceError("reference speed has the wrong sign");
  }

  static StageVec<double> state(const Vec2& x, std::span<const double> s) {
    StageVec<double> z{x[0], x[1]};
    for (double v : s) z.push_back(v);
    return z;
  }

  using Stages = std::variant<PlanarStage<1>, PlanarStage<2>, PlanarStage<3>, PlanarStage<4>,
                              PlanarStage<5>, PlanarStage<6>>;

  int n_;
  double wbar_;
  Gains gains_;
  Stages stage_{make_planar_stage<1>(1, Gains::defaults(1), 1.0)};
};

// ---------------------------------------------------------------------------
// Feedback on one component manifold
//
// Phi(q, qD, uD) = F(y)^{-1} { |u1D| Psi(x - xD, S(y) - S(yD), S(yD), F(yD) uD)
//                              + (0, (F(yD) uD)_2) }

struct FeedbackEvaluation {
  Vec2 u{};
  Vec2 w{};
  ErrorState error;
  double lyapunov = 0.0;
};

class FeedbackLaw {
 public:
  FeedbackLaw(const WheeledModel& model, const ComponentIndex& mu, const Gains& gains,
              int direction)
      : transform_(ChainTransform::best(model, mu)), psi_(model.n(), gains, direction) {}

  const ChainTransform& transform() const { return transform_; }
  const Psi& psi() const { return psi_; }
  int direction() const { return static_cast<int>(psi_.wbar()); }

  // Evaluation from chained reference data sD = S(yD), vD = F(yD) uD.
  FeedbackEvaluation evaluate(const Configuration& q, const Vec2& xD, std::span<const double> sD,
                              const Vec2& vD, bool with_lyapunov = false) const {
    require_component(q.y);
    const auto s = transform_.forward(q.y);
    FeedbackEvaluation out;
    out.error = error_coordinates(q, s, xD, sD);
    out.w = psi_(out.error.x_tilde, out.error.s_tilde, sD, vD);
    out.u = transform_.from_chained_input(q.y, from_w(out.w, vD));
    if (with_lyapunov) {
      out.lyapunov = psi_.lyapunov(out.error.x_tilde, out.error.s_tilde, sD, vD);
    }
    return out;
  }

  Vec2 operator()(const Configuration& q, const Vec2& xD, std::span<const double> sD,
                  const Vec2& vD) const {
    return evaluate(q, xD, sD, vD).u;
  }

  // The composition in terms of the reference configuration and input.
  Vec2 phi(const Configuration& q, const Configuration& qD, const Vec2& uD) const {
    if (uD[0] == 0.0) throw ReferenceError("reference input u1D is zero");
    require_component(qD.y);
    const auto sD = transform_.forward(qD.y);
    const auto vD = transform_.to_chained_input(qD.y, uD);
    return (*this)(q, qD.x, sD, vD);
  }

  double lyapunov(const Configuration& q, const Vec2& xD, std::span<const double> sD,
                  const Vec2& vD) const {
    require_component(q.y);
    const auto s = transform_.forward(q.y);
    const auto e = error_coordinates(q, s, xD, sD);
    return psi_.lyapunov(e.x_tilde, e.s_tilde, sD, vD);
  }

 private:
  void require_component(std::span<const double> y) const {
    const auto mu = component_of(transform_.model(), y);
    if (!(mu == transform_.component())) {
      throw BoundaryError("state in component " + mu.label() + ", law designed for " +
                              transform_.component().label(),
                          first_mismatch(mu));
    }
  }

  int first_mismatch(const ComponentIndex& mu) const {
    const auto& own = transform_.component().mu;
    for (std::size_t i = 0; i < own.size() && i < mu.mu.size(); ++i) {
      if (own[i] != mu.mu[i]) return static_cast<int>(i) + 2;
    }
    return 0;
  }

  ChainTransform transform_;
  Psi psi_;
};

// ---------------------------------------------------------------------------
// U(t, q, xD): dispatch over component manifolds for one direction.

class ControlLaw {
 public:
  ControlLaw(WheeledModel model, const Gains& gains, Trajectory traj, int direction)
      : model_(std::move(model)), gains_(gains), traj_(std::move(traj)), direction_(direction) {
    validate_direction(direction);
    gains_.validate(model_.n());
    if (!model_.is_truck_family()) {
      throw UnsupportedModelError(std::string(model_.name()) + " is not maneuverable");
    }
    for (const auto& mu : all_components(model_)) laws_.emplace_back(model_, mu, gains_, direction_);
  }

  const WheeledModel& model() const { return model_; }
  const Trajectory& trajectory() const { return traj_; }
  int direction() const { return direction_; }

  const FeedbackLaw& law_for(const ComponentIndex& mu) const {
    for (const auto& law : laws_) {
      if (law.transform().component() == mu) return law;
    }
    throw BoundaryError("no control law for component " + mu.label(), 0);
  }

  // u at time t given the reference heading s1D(t); pure in its arguments.
  Vec2 evaluate(double t, double s1D, const Configuration& q) const {
    const auto& law = law_for(component_of(model_, q.y));
    const auto chain = chain_reference(traj_, model_.n(), direction_, t, s1D);
    return law(q, traj_.position(t), chain.s, chain.v);
  }

 private:
  WheeledModel model_;
  Gains gains_;
  Trajectory traj_;
  int direction_;
  std::vector<FeedbackLaw> laws_;
};

}  // namespace nhtrack
