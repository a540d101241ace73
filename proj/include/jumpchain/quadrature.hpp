#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <mutex>
#include <numbers>
#include <span>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "error.hpp"

namespace jumpchain {

/// Quadrature controls shared by every integral in the library.
struct QuadratureSpec {
  int q = 3;                 // Gauss nodes per axis for cell averages
  double eps_q = 1e-6;       // innermost radius of singular radial integrals
  int budget = 8;            // maximum bisection depth of adaptive rules
  double rel_tol = 1e-10;
  int radial_nodes = 16;     // Gauss nodes per radial shell
  int angular_nodes = 64;    // directions on the circle (d=2), azimuths*2 (d=3)

  void validate() const {
    detail::require(q >= 1, "quadrature.q must be >= 1");
    detail::require(eps_q > 0.0, "quadrature.eps_q must be > 0");
    detail::require(budget >= 0 && budget <= 40, "quadrature.budget must be in [0, 40]");
    detail::require(rel_tol > 0.0 && rel_tol < 1.0, "quadrature.rel_tol must be in (0, 1)");
    detail::require(radial_nodes >= 2, "quadrature.radial_nodes must be >= 2");
    detail::require(angular_nodes >= 4, "quadrature.angular_nodes must be >= 4");
  }
};

struct GaussRule {
  std::vector<double> nodes;    // on [-1, 1]
  std::vector<double> weights;  // sum to 2
};

namespace detail {

inline GaussRule make_gauss_legendre(int m) {
  GaussRule rule;
  rule.nodes.resize(static_cast<std::size_t>(m));
  rule.weights.resize(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    // Tricomi initial guess, then Newton on P_m.
    double x = std::cos(std::numbers::pi * (i + 0.75) / (m + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= m; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      const double pm = (m == 1) ? x : p1;
      const double pm1 = (m == 1) ? 1.0 : p0;
      dp = m * (x * pm - pm1) / (x * x - 1.0);
      const double dx = pm / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= m; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      const double pm = (m == 1) ? x : p1;
      const double pm1 = (m == 1) ? 1.0 : p0;
      dp = m * (x * pm - pm1) / (x * x - 1.0);
    }
    rule.nodes[static_cast<std::size_t>(i)] = -x;
    rule.weights[static_cast<std::size_t>(i)] = 2.0 / ((1.0 - x * x) * dp * dp);
  }
  if (m % 2 == 1) rule.nodes[static_cast<std::size_t>(m / 2)] = 0.0;
  return rule;
}

}  // namespace detail

/// Gauss-Legendre rule with m nodes; cached, safe to call concurrently.
inline const GaussRule& gauss_rule(int m) {
  static std::mutex mutex;
  static std::map<int, GaussRule> cache;
  if (m < 1) throw ConfigError("Gauss rule needs at least one node");
  std::lock_guard<std::mutex> lock(mutex);
  auto it = cache.find(m);
  if (it == cache.end()) it = cache.emplace(m, detail::make_gauss_legendre(m)).first;
  return it->second;
}

/// Fixed Gauss-Legendre rule on [a, b].
template <class F>
double integrate_gl(F&& f, double a, double b, int m) {
  const GaussRule& rule = gauss_rule(m);
  const double half = 0.5 * (b - a), mid = 0.5 * (a + b);
  double sum = 0.0;
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) sum += rule.weights[i] * f(mid + half * rule.nodes[i]);
  return sum * half;
}

/// Adaptive Gauss-Kronrod on [a, b]; infinite limits allowed.
template <class F>
double integrate_adaptive(F&& f, double a, double b, double rel_tol, int max_depth = 15,
                          double* error = nullptr) {
  if (a == b) return 0.0;
  double err = 0.0;
  auto g = [&](double x) { return f(x); };
  const double v = boost::math::quadrature::gauss_kronrod<double, 21>::integrate(g, a, b, max_depth,
                                                                                 rel_tol, &err);
  if (!std::isfinite(v)) throw NumericError("adaptive quadrature produced a non-finite value");
  if (error) *error = err;
  return v;
}

/// Adaptive integral over [a, b] split at the given breakpoints.
template <class F>
double integrate_piecewise(F&& f, double a, double b, std::span<const double> breaks, double rel_tol,
                           int max_depth = 15) {
  std::vector<double> pts{a};
  for (double x : breaks)
    if (x > a && x < b) pts.push_back(x);
  pts.push_back(b);
  std::sort(pts.begin(), pts.end());
  double sum = 0.0;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) sum += integrate_adaptive(f, pts[i], pts[i + 1], rel_tol, max_depth);
  return sum;
}

/// Tensor Gauss rule of order q on an axis-aligned box. f takes std::span<const double>.
template <class F>
double tensor_box(F&& f, std::span<const double> lo, std::span<const double> hi, int q) {
  const std::size_t dim = lo.size();
  const GaussRule& rule = gauss_rule(q);
  const std::size_t m = rule.nodes.size();
  std::vector<std::size_t> idx(dim, 0);
  std::vector<double> point(dim);
  double vol = 1.0;
  for (std::size_t k = 0; k < dim; ++k) vol *= 0.5 * (hi[k] - lo[k]);
  double sum = 0.0;
  for (;;) {
    double w = 1.0;
    for (std::size_t k = 0; k < dim; ++k) {
      point[k] = 0.5 * (lo[k] + hi[k]) + 0.5 * (hi[k] - lo[k]) * rule.nodes[idx[k]];
      w *= rule.weights[idx[k]];
    }
    sum += w * f(std::span<const double>(point));
    std::size_t k = 0;
    while (k < dim && ++idx[k] == m) idx[k++] = 0;
    if (k == dim) break;
  }
  return sum * vol;
}

namespace detail {

template <class F>
double adaptive_box_rec(F& f, std::vector<double>& lo, std::vector<double>& hi, int q, double coarse,
                        double abs_tol, int depth, bool& converged) {
  const std::size_t dim = lo.size();
  const std::size_t children = std::size_t{1} << dim;
  std::vector<std::vector<double>> clo(children, lo), chi(children, hi);
  std::vector<double> parts(children);
  double fine = 0.0;
  for (std::size_t c = 0; c < children; ++c) {
    for (std::size_t k = 0; k < dim; ++k) {
      const double mid = 0.5 * (lo[k] + hi[k]);
      if ((c >> k) & 1U) clo[c][k] = mid;
      else chi[c][k] = mid;
    }
    parts[c] = tensor_box(f, clo[c], chi[c], q);
    fine += parts[c];
  }
  if (std::abs(fine - coarse) <= abs_tol) return fine;
  if (depth <= 0) {
    converged = false;
    return fine;
  }
  double sum = 0.0;
  for (std::size_t c = 0; c < children; ++c)
    sum += adaptive_box_rec(f, clo[c], chi[c], q, parts[c], abs_tol / std::sqrt(double(children)), depth - 1,
                            converged);
  return sum;
}

}  // namespace detail

struct BoxResult {
  double value = 0.0;
  bool converged = true;
};

/// Adaptive tensor Gauss on a box: bisects every axis until the refined and
/// coarse estimates agree to max(rel_tol*|value|, abs_tol) or depth runs out.
template <class F>
BoxResult adaptive_box(F&& f, std::span<const double> lo, std::span<const double> hi, int q, double rel_tol,
                       double abs_tol, int depth) {
  std::vector<double> l(lo.begin(), lo.end()), h(hi.begin(), hi.end());
  const double coarse = tensor_box(f, l, h, q);
  BoxResult out;
  const double tol = std::max(rel_tol * std::abs(coarse), abs_tol);
  out.value = detail::adaptive_box_rec(f, l, h, q, coarse, tol, depth, out.converged);
  return out;
}

/// Quadrature directions on the unit sphere S^{d-1}, weights summing to its area.
struct SphereRule {
  std::vector<std::vector<double>> dirs;
  std::vector<double> weights;
};

inline SphereRule sphere_rule(int d, int angular_nodes) {
  SphereRule s;
  if (d == 1) {
    s.dirs = {{1.0}, {-1.0}};
    s.weights = {1.0, 1.0};
  } else if (d == 2) {
    const int m = angular_nodes;
    for (int j = 0; j < m; ++j) {
      const double phi = 2.0 * std::numbers::pi * (j + 0.5) / m;
      s.dirs.push_back({std::cos(phi), std::sin(phi)});
      s.weights.push_back(2.0 * std::numbers::pi / m);
    }
  } else if (d == 3) {
    const int mphi = std::max(4, angular_nodes / 2);
    const GaussRule& polar = gauss_rule(std::max(2, angular_nodes / 4));
    for (std::size_t i = 0; i < polar.nodes.size(); ++i) {
      const double c = polar.nodes[i];
      const double sn = std::sqrt(std::max(0.0, 1.0 - c * c));
      for (int j = 0; j < mphi; ++j) {
        const double phi = 2.0 * std::numbers::pi * (j + 0.5) / mphi;
        s.dirs.push_back({sn * std::cos(phi), sn * std::sin(phi), c});
        s.weights.push_back(polar.weights[i] * 2.0 * std::numbers::pi / mphi);
      }
    }
  } else {
    throw ConfigError("radial-shell quadrature supports d <= 3");
  }
  return s;
}

/// Surface area of the unit sphere in R^d.
inline double sphere_area(int d) {
  return 2.0 * std::pow(std::numbers::pi, 0.5 * d) / std::tgamma(0.5 * d);
}

struct RadialResult {
  double value = 0.0;
  double innermost = 0.0;  // contribution of the innermost shell; exposes the small-radius trend
  std::size_t shells = 0;
  bool converged = true;
};

/// Integral of g(z) over the annulus r_in <= |z| < r_out (r_out may be +inf)
/// by geometric radial shells (ratio 2) with Gauss nodes in r and a product
/// rule on the sphere. Breakpoints are added to the shell edges. r_in = 0 is
/// replaced by spec.eps_q.
template <class G>
RadialResult radial_integral(int d, double r_in, double r_out, G&& g, const QuadratureSpec& spec,
                             std::span<const double> breaks = {}) {
  RadialResult res;
  if (r_in <= 0.0) r_in = spec.eps_q;
  if (!(r_out > r_in)) return res;
  const SphereRule sph = sphere_rule(d, spec.angular_nodes);
  const GaussRule& rule = gauss_rule(spec.radial_nodes);
  std::vector<double> z(static_cast<std::size_t>(d));

  auto shell = [&](double a, double b) {
    const double half = 0.5 * (b - a), mid = 0.5 * (a + b);
    double sum = 0.0;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
      const double r = mid + half * rule.nodes[i];
      const double rad = std::pow(r, d - 1);
      double ang = 0.0;
      for (std::size_t j = 0; j < sph.dirs.size(); ++j) {
        for (int k = 0; k < d; ++k) z[static_cast<std::size_t>(k)] = r * sph.dirs[j][static_cast<std::size_t>(k)];
        ang += sph.weights[j] * g(std::span<const double>(z));
      }
      sum += rule.weights[i] * rad * ang;
    }
    return sum * half;
  };

  std::vector<double> brk;
  for (double b : breaks)
    if (b > r_in && b < r_out) brk.push_back(b);
  std::sort(brk.begin(), brk.end());
  const double last_break = brk.empty() ? r_in : brk.back();

  double a = r_in;
  std::size_t bi = 0;
  int quiet = 0;
  double prev = 0.0, cur = 0.0;
  const std::size_t cap = 1000;
  while (a < r_out && res.shells < cap) {
    double b = std::min(2.0 * a, r_out);
    if (bi < brk.size() && brk[bi] <= b) b = brk[bi++];
    while (bi < brk.size() && brk[bi] <= b) ++bi;
    const double c = shell(a, b);
    if (!std::isfinite(c)) throw NumericError("radial quadrature produced a non-finite value");
    if (res.shells == 0) res.innermost = c;
    res.value += c;
    ++res.shells;
    prev = cur;
    cur = c;
    a = b;
    if (std::isinf(r_out) && a > last_break) {
      if (std::abs(c) <= 1e-3 * spec.rel_tol * std::abs(res.value) || c == 0.0) {
        if (++quiet >= 4) break;
      } else {
        quiet = 0;
      }
    }
  }
  if (std::isinf(r_out) && quiet < 4) {
    // Heavy tail still running: add the geometric remainder of the last two shells.
    const double ratio = (prev != 0.0) ? cur / prev : 0.0;
    if (ratio > 0.0 && ratio < 1.0) res.value += cur * ratio / (1.0 - ratio);
    else res.converged = false;
  }
  return res;
}

}  // namespace jumpchain
