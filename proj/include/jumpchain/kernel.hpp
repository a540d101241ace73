#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "error.hpp"
#include "expression.hpp"
#include "parallel.hpp"
#include "quadrature.hpp"

namespace jumpchain {

using Point = std::vector<double>;
using DensityFn = std::function<double(std::span<const double>, std::span<const double>)>;
using TailFn = std::function<double(std::span<const double>, double)>;
using DriftFn = std::function<void(std::span<const double>, std::span<double>)>;
using ScalarField = std::function<double(std::span<const double>)>;

inline double norm(std::span<const double> v) {
  double s = 0.0;
  for (double c : v) s += c * c;
  return std::sqrt(s);
}

/// Jump density k(x, y) defined off the diagonal.
struct JumpKernel {
  int dim = 1;
  DensityFn density;
  bool symmetric = false;
  // k(x, y) depends on y - x only; discretizations then share one offset stencil.
  bool translation_invariant = false;
  // Optional closure (x, r) -> integral of k(x, y) over |y - x| > r.
  TailFn tail;
  // Radii where k(x, x + z) jumps in |z|; radial quadrature splits there.
  std::vector<double> radial_breaks;
  std::string name = "custom";

  double operator()(std::span<const double> x, std::span<const double> y) const { return density(x, y); }
  bool has_tail() const { return static_cast<bool>(tail); }
};

struct KernelParts {
  double ks = 0.0;
  double ka = 0.0;
};

inline KernelParts k_parts(const JumpKernel& k, std::span<const double> x, std::span<const double> y) {
  if (std::equal(x.begin(), x.end(), y.begin(), y.end()))
    throw ConfigError("k_parts: x and y coincide (diagonal)");
  const double kxy = k(x, y), kyx = k(y, x);
  return {0.5 * (kxy + kyx), 0.5 * (kxy - kyx)};
}

/// Normalizing constant of the rotationally invariant alpha-stable kernel.
inline double stable_gamma(double alpha, int d) {
  return alpha * std::pow(2.0, alpha - 1.0) * std::tgamma(0.5 * (alpha + d)) /
         (std::pow(std::numbers::pi, 0.5 * d) * std::tgamma(1.0 - 0.5 * alpha));
}

namespace detail {

inline std::vector<Point> default_probes(int d) {
  std::vector<Point> out;
  const double grid[] = {-4.0, -1.0, -0.5, 0.0, 0.5, 1.0, 4.0};
  for (double g : grid) {
    Point p(static_cast<std::size_t>(d), 0.0);
    p[0] = g;
    out.push_back(p);
  }
  return out;
}

inline double check_alpha(double a) {
  if (!(a > 0.0 && a < 2.0)) throw ConfigError("stability index outside (0, 2): " + std::to_string(a));
  return a;
}

inline double dist(std::span<const double> x, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += (y[i] - x[i]) * (y[i] - x[i]);
  return std::sqrt(s);
}

}  // namespace detail

/// k(x, y) = gamma(x) |y - x|^{-alpha(x) - d}.
inline JumpKernel stable_like_kernel(ScalarField alpha, int d, const std::vector<Point>& probes = {}) {
  detail::require(d >= 1, "dimension must be >= 1");
  for (const auto& p : probes.empty() ? detail::default_probes(d) : probes) detail::check_alpha(alpha(p));
  JumpKernel k;
  k.dim = d;
  k.name = "stable_like";
  k.density = [alpha, d](std::span<const double> x, std::span<const double> y) {
    const double a = detail::check_alpha(alpha(x));
    return stable_gamma(a, d) * std::pow(detail::dist(x, y), -a - d);
  };
  k.tail = [alpha, d](std::span<const double> x, double r) {
    const double a = detail::check_alpha(alpha(x));
    return stable_gamma(a, d) * sphere_area(d) * std::pow(r, -a) / a;
  };
  return k;
}

inline JumpKernel stable_kernel(double alpha, int d) {
  detail::check_alpha(alpha);
  JumpKernel k = stable_like_kernel([alpha](std::span<const double>) { return alpha; }, d);
  k.symmetric = true;
  k.translation_invariant = true;
  k.name = "stable";
  const double g = stable_gamma(alpha, d);
  k.density = [g, alpha, d](std::span<const double> x, std::span<const double> y) {
    return g * std::pow(detail::dist(x, y), -alpha - d);
  };
  return k;
}

/// Cauchy jump kernel, the alpha = 1 stable kernel (1/(pi z^2) in d = 1).
inline JumpKernel cauchy_kernel(int d = 1) {
  JumpKernel k = stable_kernel(1.0, d);
  k.name = "cauchy";
  return k;
}

/// Membership test on jump vectors z.
struct Region {
  enum class Kind { Whole, Empty, HalfSpace, Ball };
  Kind kind = Kind::HalfSpace;
  std::vector<double> normal{1.0};   // half-space {<normal, z> > offset}
  double offset = 0.0;
  std::vector<double> center;        // ball {|z - center| < radius}
  double radius = 1.0;

  bool contains(std::span<const double> z) const {
    switch (kind) {
      case Kind::Whole: return true;
      case Kind::Empty: return false;
      case Kind::HalfSpace: {
        double s = 0.0;
        for (std::size_t i = 0; i < z.size(); ++i) s += normal[i] * z[i];
        return s > offset;
      }
      case Kind::Ball: {
        double s = 0.0;
        for (std::size_t i = 0; i < z.size(); ++i) s += (z[i] - center[i]) * (z[i] - center[i]);
        return s < radius * radius;
      }
    }
    return false;
  }

  static Region positive_half_line() { return Region{}; }
  static Region whole() { return Region{Kind::Whole, {}, 0.0, {}, 0.0}; }
  static Region empty() { return Region{Kind::Empty, {}, 0.0, {}, 0.0}; }
};

/// k(x, y) = |y-x|^{-alpha-d} 1_B(x-y) + |y-x|^{-beta-d} 1_{B^c}(x-y), both
/// pieces restricted to |y - x| >= min_jump (the two Levy densities vanish on
/// the unit ball by default).
inline JumpKernel levy_mix_kernel(double alpha, double beta, Region B, int d, double min_jump = 1.0) {
  detail::check_alpha(alpha);
  detail::check_alpha(beta);
  detail::require(d >= 1, "dimension must be >= 1");
  detail::require(min_jump >= 0.0, "min_jump must be >= 0");
  if (B.kind == Region::Kind::HalfSpace) detail::require(B.normal.size() == static_cast<std::size_t>(d), "half-space normal has wrong dimension");
  if (B.kind == Region::Kind::Ball) detail::require(B.center.size() == static_cast<std::size_t>(d), "ball centre has wrong dimension");
  JumpKernel k;
  k.dim = d;
  k.name = "levy_mix";
  k.translation_invariant = true;
  k.symmetric = alpha == beta || B.kind == Region::Kind::Whole || B.kind == Region::Kind::Empty;
  if (min_jump > 0.0) k.radial_breaks = {min_jump};
  k.density = [alpha, beta, B, d, min_jump](std::span<const double> x, std::span<const double> y) {
    std::array<double, 8> buf{};
    std::vector<double> heap;
    double* z = buf.data();
    if (x.size() > buf.size()) {
      heap.resize(x.size());
      z = heap.data();
    }
    double r2 = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      z[i] = x[i] - y[i];
      r2 += z[i] * z[i];
    }
    const double r = std::sqrt(r2);
    if (r < min_jump) return 0.0;
    const bool in_b = B.contains(std::span<const double>(z, x.size()));
    return std::pow(r, -(in_b ? alpha : beta) - d);
  };
  const bool through_origin = B.kind == Region::Kind::HalfSpace && B.offset == 0.0;
  if (k.symmetric || through_origin) {
    const double area = sphere_area(d);
    const double wa = B.kind == Region::Kind::Empty ? 0.0 : (B.kind == Region::Kind::Whole ? 1.0 : 0.5);
    k.tail = [alpha, beta, area, wa, min_jump](std::span<const double>, double r) {
      const double rr = std::max(r, min_jump);
      if (rr == 0.0) return std::numeric_limits<double>::infinity();
      return area * (wa * std::pow(rr, -alpha) / alpha + (1.0 - wa) * std::pow(rr, -beta) / beta);
    };
  }
  return k;
}

/// k(x, y) = c on |y - x| <= support (support may be +inf).
inline JumpKernel constant_kernel(double c, int d, double support = std::numeric_limits<double>::infinity()) {
  detail::require(c >= 0.0, "constant kernel value must be >= 0");
  detail::require(support > 0.0, "constant kernel support must be > 0");
  JumpKernel k;
  k.dim = d;
  k.name = "constant";
  k.symmetric = true;
  k.translation_invariant = true;
  if (std::isfinite(support)) k.radial_breaks = {support};
  k.density = [c, support](std::span<const double> x, std::span<const double> y) {
    return detail::dist(x, y) <= support ? c : 0.0;
  };
  k.tail = [c, d, support](std::span<const double>, double r) {
    if (!std::isfinite(support)) return c > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
    if (r >= support) return 0.0;
    const double vol = sphere_area(d) / d;
    return c * vol * (std::pow(support, d) - std::pow(r, d));
  };
  return k;
}

namespace detail {

inline std::vector<std::string> kernel_variables(int d, bool field) {
  std::vector<std::string> v;
  for (int i = 1; i <= d; ++i) v.push_back("x" + std::to_string(i));
  for (int i = 1; i <= d; ++i) v.push_back("y" + std::to_string(i));
  if (!field)
    for (int i = 1; i <= d; ++i) v.push_back("z" + std::to_string(i));
  v.insert(v.end(), {"x", "y"});
  if (!field) v.push_back("z");
  v.push_back("r");
  return v;
}

}  // namespace detail

/// User kernel from an expression in x1..xd, y1..yd, z1..zd (z = y - x),
/// x, y, z (first coordinates) and r = |y - x|.
inline JumpKernel expression_kernel(const std::string& src, int d, bool symmetric = false,
                                    bool translation_invariant = false) {
  detail::require(d >= 1 && d <= 6, "expression kernels support 1 <= d <= 6");
  auto expr = std::make_shared<Expression>(src, detail::kernel_variables(d, false));
  JumpKernel k;
  k.dim = d;
  k.name = "expression";
  k.symmetric = symmetric;
  k.translation_invariant = translation_invariant;
  k.density = [expr, d](std::span<const double> x, std::span<const double> y) {
    std::array<double, 32> v{};
    double r2 = 0.0;
    for (int i = 0; i < d; ++i) {
      v[static_cast<std::size_t>(i)] = x[static_cast<std::size_t>(i)];
      v[static_cast<std::size_t>(d + i)] = y[static_cast<std::size_t>(i)];
      const double z = y[static_cast<std::size_t>(i)] - x[static_cast<std::size_t>(i)];
      v[static_cast<std::size_t>(2 * d + i)] = z;
      r2 += z * z;
    }
    v[static_cast<std::size_t>(3 * d)] = x[0];
    v[static_cast<std::size_t>(3 * d + 1)] = y[0];
    v[static_cast<std::size_t>(3 * d + 2)] = y[0] - x[0];
    v[static_cast<std::size_t>(3 * d + 3)] = std::sqrt(r2);
    const double val = (*expr)(v.data());
    if (std::isnan(val)) throw NumericError("kernel expression evaluated to NaN");
    return val;
  };
  return k;
}

/// x -> nu(x, dy) with drift b(x): the characteristics of the limit semimartingale.
struct LevyMeasureField {
  int dim = 1;
  DriftFn drift;  // empty when no drift was supplied
  DensityFn density;  // (x, y) -> d nu(x, .)/dy at jump y != 0
  TailFn tail;        // (x, r) -> nu(x, B_r(0)^c)
  bool symmetric = false;  // nu(x, .) symmetric under y -> -y
  bool translation_invariant = false;
  bool finite_second_moment = false;
  std::vector<double> radial_breaks;
  std::string name = "custom";

  double operator()(std::span<const double> x, std::span<const double> y) const { return density(x, y); }
  bool has_tail() const { return static_cast<bool>(tail); }
  bool has_drift() const { return static_cast<bool>(drift); }
};

inline DriftFn zero_drift() {
  return [](std::span<const double>, std::span<double> out) { std::fill(out.begin(), out.end(), 0.0); };
}

inline LevyMeasureField stable_like_field(ScalarField alpha, int d, const std::vector<Point>& probes = {}) {
  detail::require(d >= 1, "dimension must be >= 1");
  for (const auto& p : probes.empty() ? detail::default_probes(d) : probes) detail::check_alpha(alpha(p));
  LevyMeasureField f;
  f.dim = d;
  f.name = "stable_like";
  f.symmetric = true;
  f.drift = zero_drift();
  f.density = [alpha, d](std::span<const double> x, std::span<const double> y) {
    const double a = detail::check_alpha(alpha(x));
    return stable_gamma(a, d) * std::pow(norm(y), -a - d);
  };
  f.tail = [alpha, d](std::span<const double> x, double r) {
    const double a = detail::check_alpha(alpha(x));
    return stable_gamma(a, d) * sphere_area(d) * std::pow(r, -a) / a;
  };
  return f;
}

inline LevyMeasureField stable_field(double alpha, int d) {
  detail::check_alpha(alpha);
  LevyMeasureField f = stable_like_field([alpha](std::span<const double>) { return alpha; }, d);
  f.name = "stable";
  f.translation_invariant = true;
  const double g = stable_gamma(alpha, d);
  f.density = [g, alpha, d](std::span<const double>, std::span<const double> y) {
    return g * std::pow(norm(y), -alpha - d);
  };
  return f;
}

inline LevyMeasureField cauchy_field(int d = 1) {
  LevyMeasureField f = stable_field(1.0, d);
  f.name = "cauchy";
  return f;
}

/// Jump measure of dX = phi(X_-) dZ for a symmetric Levy process Z with
/// jump measure base: nu(x, dy) = base(dy / |phi(x)|).
inline LevyMeasureField sde_field(ScalarField phi, const LevyMeasureField& base,
                                  const std::vector<Point>& probes = {}) {
  const int d = base.dim;
  detail::require(base.symmetric, "sde_field needs a symmetric base measure");
  for (const auto& p : probes.empty() ? detail::default_probes(d) : probes) {
    const double v = std::abs(phi(p));
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError("sde_field: |phi| must be positive and finite at probe points");
  }
  LevyMeasureField f;
  f.dim = d;
  f.name = "sde";
  f.symmetric = true;
  f.drift = zero_drift();
  f.finite_second_moment = base.finite_second_moment;
  auto base_density = base.density;
  f.density = [phi, base_density, d](std::span<const double> x, std::span<const double> y) {
    const double s = std::abs(phi(x));
    std::vector<double> origin(y.size(), 0.0), scaled(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) scaled[i] = y[i] / s;
    return base_density(origin, scaled) * std::pow(s, -d);
  };
  if (base.has_tail()) {
    auto base_tail = base.tail;
    f.tail = [phi, base_tail, d](std::span<const double> x, double r) {
      const double s = std::abs(phi(x));
      std::vector<double> origin(static_cast<std::size_t>(d), 0.0);
      return base_tail(origin, r / s);
    };
  }
  return f;
}

/// User field from an expression in x1..xd, y1..yd (y is the jump), x, y and r = |y|.
inline LevyMeasureField expression_field(const std::string& src, int d, bool symmetric = false,
                                         const std::vector<std::string>& drift_src = {}) {
  detail::require(d >= 1 && d <= 6, "expression fields support 1 <= d <= 6");
  auto expr = std::make_shared<Expression>(src, detail::kernel_variables(d, true));
  LevyMeasureField f;
  f.dim = d;
  f.name = "expression";
  f.symmetric = symmetric;
  f.density = [expr, d](std::span<const double> x, std::span<const double> y) {
    std::array<double, 32> v{};
    for (int i = 0; i < d; ++i) {
      v[static_cast<std::size_t>(i)] = x[static_cast<std::size_t>(i)];
      v[static_cast<std::size_t>(d + i)] = y[static_cast<std::size_t>(i)];
    }
    v[static_cast<std::size_t>(2 * d)] = x[0];
    v[static_cast<std::size_t>(2 * d + 1)] = y[0];
    v[static_cast<std::size_t>(2 * d + 2)] = norm(y);
    const double val = (*expr)(v.data());
    if (std::isnan(val)) throw NumericError("field expression evaluated to NaN");
    return val;
  };
  if (!drift_src.empty()) {
    detail::require(drift_src.size() == static_cast<std::size_t>(d), "drift needs one expression per coordinate");
    std::vector<std::string> xv;
    for (int i = 1; i <= d; ++i) xv.push_back("x" + std::to_string(i));
    xv.push_back("x");
    auto comps = std::make_shared<std::vector<Expression>>();
    for (const auto& s : drift_src) comps->emplace_back(s, xv);
    f.drift = [comps, d](std::span<const double> x, std::span<double> out) {
      std::array<double, 8> v{};
      for (int i = 0; i < d; ++i) v[static_cast<std::size_t>(i)] = x[static_cast<std::size_t>(i)];
      v[static_cast<std::size_t>(d)] = x[0];
      for (int i = 0; i < d; ++i) out[static_cast<std::size_t>(i)] = (*comps)[static_cast<std::size_t>(i)](v.data());
    };
  }
  return f;
}

/// h(z) = z on |z| <= radius, radius * z/|z| outside.
struct TruncationFunction {
  double radius = 1.0;

  double bound() const { return radius; }
  double identity_radius() const { return radius; }
  bool symmetric() const { return true; }

  void apply(std::span<const double> z, std::span<double> out) const {
    const double r = norm(z);
    const double s = r <= radius ? 1.0 : radius / r;
    for (std::size_t i = 0; i < z.size(); ++i) out[i] = s * z[i];
  }
  double component(std::span<const double> z, std::size_t i) const {
    const double r = norm(z);
    return r <= radius ? z[i] : radius * z[i] / r;
  }
};

struct Alpha0Estimate {
  double value = 0.0;
  std::vector<double> per_probe;
  bool stable = true;  // innermost shell negligible and tails summed
};

/// sup over probes of the integral of k_a^2 / k_s over {k_s != 0}.
inline Alpha0Estimate alpha0_estimate(const JumpKernel& k, const std::vector<Point>& probes,
                                      const QuadratureSpec& quad) {
  detail::require(!probes.empty(), "alpha0_estimate needs a nonempty probe grid");
  quad.validate();
  Alpha0Estimate out;
  out.per_probe.assign(probes.size(), 0.0);
  if (k.symmetric) return out;
  std::vector<char> ok(probes.size(), 1);
  parallel_for(probes.size(), [&](std::size_t i) {
    const Point& x = probes[i];
    Point y(x.size());
    auto g = [&](std::span<const double> z) {
      for (std::size_t c = 0; c < x.size(); ++c) y[c] = x[c] + z[c];
      const double kxy = k(x, y), kyx = k(y, x);
      const double ks = 0.5 * (kxy + kyx), ka = 0.5 * (kxy - kyx);
      return ks != 0.0 ? ka * ka / ks : 0.0;
    };
    const RadialResult r = radial_integral(k.dim, 0.0, std::numeric_limits<double>::infinity(), g, quad, k.radial_breaks);
    out.per_probe[i] = r.value;
    ok[i] = r.converged && std::abs(r.innermost) <= 1e-3 * std::abs(r.value) + 1e-12;
  });
  for (std::size_t i = 0; i < probes.size(); ++i) {
    out.value = std::max(out.value, out.per_probe[i]);
    out.stable = out.stable && ok[i];
  }
  return out;
}

}  // namespace jumpchain
