#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "discretize.hpp"
#include "error.hpp"
#include "format.hpp"
#include "forms.hpp"
#include "kernel.hpp"
#include "lattice.hpp"
#include "parallel.hpp"
#include "quadrature.hpp"

namespace jumpchain {

inline constexpr double kNA = std::numeric_limits<double>::quiet_NaN();

/// One numeric value with the exact parameter tuple it was computed for.
struct ConditionEntry {
  std::string quantity;
  double value = 0.0;
  double target = kNA;  // reference value when the quantity is a discrepancy
  double rho = kNA, r = kNA, eps = kNA, R = kNA, p = kNA;
  int n = 0;
  int index = -1;  // coordinate index (or flattened pair)
  int probe = -1;  // probe index for per-probe values, -1 for suprema
};

struct ConditionReport {
  std::string id;
  std::vector<ConditionEntry> entries;
  std::string verdict = "n/a";  // pass | fail | trend-ok | trend-fail | n/a
  std::string note;

  bool passed() const { return verdict == "pass" || verdict == "trend-ok"; }
  /// Largest value among entries with the given quantity name (suprema only).
  double value(const std::string& quantity) const {
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& e : entries)
      if (e.quantity == quantity && e.probe < 0) best = std::max(best, e.value);
    return best;
  }
  std::vector<ConditionEntry> select(const std::string& quantity) const {
    std::vector<ConditionEntry> out;
    for (const auto& e : entries)
      if (e.quantity == quantity && e.probe < 0) out.push_back(e);
    return out;
  }
};

// Trend rules for sweeps over n: bounded means every value stays below
// max(first value, cap); vanishing means strictly decreasing with each ratio <= max_ratio.
inline bool trend_bounded(const std::vector<double>& v, double cap = 0.0) {
  if (v.empty()) return true;
  const double lim = std::max(v.front(), cap);
  for (double x : v)
    if (!(x <= lim * (1.0 + 1e-12))) return false;
  return true;
}

inline bool trend_vanishing(const std::vector<double>& v, double max_ratio = 0.9) {
  for (std::size_t i = 1; i < v.size(); ++i)
    if (!(v[i] < v[i - 1] && v[i] <= max_ratio * v[i - 1])) return false;
  return true;
}

/// epsilon-families: the value at the smallest eps may exceed the value at the
/// largest eps by at most growth_budget (eps_grid sorted descending).
inline bool eps_trend_bounded(const std::vector<double>& v, double growth_budget = 10.0) {
  if (v.empty()) return true;
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return std::abs(v.back()) <= growth_budget * std::max(std::abs(v.front()), 1e-300) || std::abs(v.back()) < 1e-12;
}

namespace detail {

inline int lattice_n(const ConductanceMatrix& C) { return C.lattice().n(); }

/// Rows whose distance to the window edge is at least margin.
inline std::vector<std::size_t> interior_rows(const Lattice& lat, double margin) {
  std::vector<std::size_t> rows;
  const double lim = lat.window_radius() - margin;
  for (std::size_t a = 0; a < lat.size(); ++a)
    if (norm(lat.point(a)) <= lim + 1e-12) rows.push_back(a);
  return rows;
}

/// sum_b w(b) C(a, a + b) over the full row. Stencil rows include offsets
/// outside the window and the beyond-stencil mass (weighted by w_inf);
/// explicit rows add lost(a) * w_inf.
template <class W>
double row_sum(const ConductanceMatrix& C, std::size_t a, W&& w, double w_inf) {
  const Lattice& lat = C.lattice();
  const std::size_t d = static_cast<std::size_t>(lat.dim());
  std::vector<double> z(d);
  double s = 0.0;
  if (C.is_stencil()) {
    const auto& off = C.stencil_offsets();
    const auto& rates = C.stencil_rates();
    for (std::size_t e = 0; e < rates.size(); ++e) {
      for (std::size_t c = 0; c < d; ++c) z[c] = static_cast<double>(off[e * d + c]) / lat.n();
      s += w(std::span<const double>(z)) * rates[e];
    }
    return s + C.stencil_beyond() * w_inf;
  }
  const auto ka = lat.index_coords(a);
  C.for_each_entry(a, [&](std::size_t b, double r) {
    const auto kb = lat.index_coords(b);
    for (std::size_t c = 0; c < d; ++c) z[c] = static_cast<double>(kb[c] - ka[c]) / lat.n();
    s += w(std::span<const double>(z)) * r;
  });
  return s + C.lost(a) * w_inf;
}

inline std::vector<Point> probes_or_default(const std::vector<Point>& probes, int d) {
  return probes.empty() ? default_probes(d) : probes;
}

inline std::vector<Point> probes_in_ball(const std::vector<Point>& probes, double radius, int d) {
  std::vector<Point> out;
  for (const auto& x : probes)
    if (norm(x) <= radius) out.push_back(x);
  if (out.empty()) out.push_back(Point(static_cast<std::size_t>(d), 0.0));
  return out;
}

/// Integral of w(z) k(x, x + z) over r_in <= |z| < r_out.
template <class W>
double kernel_annulus(const JumpKernel& k, std::span<const double> x, double r_in, double r_out, W&& w,
                      const QuadratureSpec& quad, bool symmetrize = false, std::vector<double> breaks = {}) {
  const std::size_t d = x.size();
  std::vector<double> y(d);
  auto g = [&](std::span<const double> z) {
    for (std::size_t c = 0; c < d; ++c) y[c] = x[c] + z[c];
    double kv = k(x, y);
    if (symmetrize) kv = 0.5 * (kv + k(y, x));
    return kv == 0.0 ? 0.0 : w(z) * kv;
  };
  breaks.insert(breaks.end(), k.radial_breaks.begin(), k.radial_breaks.end());
  std::sort(breaks.begin(), breaks.end());
  return radial_integral(k.dim, r_in, r_out, g, quad, breaks).value;
}

template <class W>
double field_annulus(const LevyMeasureField& f, std::span<const double> x, double r_in, double r_out, W&& w,
                     const QuadratureSpec& quad, std::vector<double> breaks = {}) {
  auto g = [&](std::span<const double> y) {
    const double v = f.density(x, y);
    return v == 0.0 ? 0.0 : w(y) * v;
  };
  breaks.insert(breaks.end(), f.radial_breaks.begin(), f.radial_breaks.end());
  std::sort(breaks.begin(), breaks.end());
  return radial_integral(f.dim, r_in, r_out, g, quad, breaks).value;
}

inline double kernel_tail(const JumpKernel& k, std::span<const double> x, double r, const QuadratureSpec& quad) {
  if (k.tail) return k.tail(x, r);
  return kernel_annulus(k, x, r, std::numeric_limits<double>::infinity(), [](std::span<const double>) { return 1.0; }, quad);
}

inline double field_tail(const LevyMeasureField& f, std::span<const double> x, double r, const QuadratureSpec& quad) {
  if (f.tail) return f.tail(x, r);
  return field_annulus(f, x, r, std::numeric_limits<double>::infinity(), [](std::span<const double>) { return 1.0; }, quad);
}

template <class F>
double sup_over(const std::vector<Point>& probes, F&& f) {
  std::vector<double> v(probes.size());
  parallel_for(probes.size(), [&](std::size_t i) { v[i] = f(probes[i]); });
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  return m;
}

}  // namespace detail

/// Cubic B-spline bump on the radial shell l <= |y| <= 2l, peak 1.
inline double shell_bump(std::span<const double> y, double l) {
  const double s = 4.0 * (norm(y) - l) / l;
  if (s <= 0.0 || s >= 4.0) return 0.0;
  double b;
  if (s < 1.0) b = s * s * s / 6.0;
  else if (s < 2.0) b = (-3.0 * s * s * s + 12.0 * s * s - 12.0 * s + 4.0) / 6.0;
  else if (s < 3.0) b = (3.0 * s * s * s - 24.0 * s * s + 60.0 * s - 44.0) / 6.0;
  else b = (4.0 - s) * (4.0 - s) * (4.0 - s) / 6.0;
  return 1.5 * b;
}

/// Suprema over interior rows of (i) sum_{|b|>rho} C, (ii) sum_{|b|>r} C,
/// (iii) |sum_{|b|<rho} b_i C| and (iv) |sum_{|b|<rho} b_i b_k C|.
inline std::vector<ConditionReport> check_T3toT6(const ConductanceMatrix& C, double rho, std::vector<double> r_grid) {
  detail::require(rho > 0.0, "check.rho must be > 0");
  const Lattice& lat = C.lattice();
  const int d = lat.dim();
  const std::size_t ud = static_cast<std::size_t>(d);
  std::sort(r_grid.begin(), r_grid.end());
  double margin = rho;
  for (double r : r_grid) margin = std::max(margin, r);
  std::vector<std::size_t> rows = detail::interior_rows(lat, margin);
  if (rows.empty()) throw ConfigError("window too small for the requested rho / r grid");
  // Translation-invariant stencils give identical rows.
  if (C.is_stencil()) rows = {rows[rows.size() / 2]};
  const int n = lat.n();
  const std::size_t nr = r_grid.size();
  std::vector<std::vector<double>> vals(rows.size(), std::vector<double>(1 + nr + ud + ud * ud, 0.0));
  parallel_for(rows.size(), [&](std::size_t ri) {
    auto& v = vals[ri];
    const std::size_t a = rows[ri];
    // The lost mass of an interior row consists of jumps longer than margin.
    v[0] = detail::row_sum(C, a, [&](std::span<const double> z) { return norm(z) > rho ? 1.0 : 0.0; }, 1.0);
    for (std::size_t j = 0; j < nr; ++j)
      v[1 + j] = detail::row_sum(C, a, [&](std::span<const double> z) { return norm(z) > r_grid[j] ? 1.0 : 0.0; }, 1.0);
    for (std::size_t i = 0; i < ud; ++i)
      v[1 + nr + i] = std::abs(detail::row_sum(C, a, [&](std::span<const double> z) { return norm(z) < rho ? z[i] : 0.0; }, 0.0));
    for (std::size_t i = 0; i < ud; ++i)
      for (std::size_t k = 0; k < ud; ++k)
        v[1 + nr + ud + i * ud + k] = std::abs(detail::row_sum(
            C, a, [&](std::span<const double> z) { return norm(z) < rho ? z[i] * z[k] : 0.0; }, 0.0));
  });
  std::vector<double> sup(vals.empty() ? 0 : vals[0].size(), 0.0);
  for (const auto& v : vals)
    for (std::size_t j = 0; j < v.size(); ++j) sup[j] = std::max(sup[j], v[j]);

  auto entry = [&](const std::string& q, double v) {
    ConditionEntry e;
    e.quantity = q;
    e.value = v;
    e.rho = rho;
    e.n = n;
    e.p = C.p();
    return e;
  };
  std::vector<ConditionReport> out(4);
  out[0].id = "T3";
  out[0].entries.push_back(entry("sup_row_sum_jumps_gt_rho", sup[0]));
  out[0].verdict = std::isfinite(sup[0]) ? "pass" : "fail";
  out[1].id = "T4";
  std::vector<double> tail;
  for (std::size_t j = 0; j < nr; ++j) {
    ConditionEntry e = entry("sup_row_sum_jumps_gt_r", sup[1 + j]);
    e.r = r_grid[j];
    out[1].entries.push_back(e);
    tail.push_back(sup[1 + j]);
  }
  bool nonincreasing = true;
  for (std::size_t j = 1; j < tail.size(); ++j) nonincreasing = nonincreasing && tail[j] <= tail[j - 1] * (1.0 + 1e-12);
  out[1].verdict = nr == 0 ? "n/a" : (nonincreasing ? "trend-ok" : "trend-fail");
  out[1].note = "tail must shrink as r grows; uniformity in n needs a sweep";
  out[2].id = "T5";
  out[3].id = "T6";
  bool fin = true;
  for (std::size_t i = 0; i < ud; ++i) {
    ConditionEntry e = entry("sup_abs_first_moment_lt_rho", sup[1 + nr + i]);
    e.index = static_cast<int>(i);
    out[2].entries.push_back(e);
    fin = fin && std::isfinite(e.value);
  }
  out[2].verdict = fin ? "pass" : "fail";
  fin = true;
  for (std::size_t i = 0; i < ud * ud; ++i) {
    ConditionEntry e = entry("sup_abs_second_moment_lt_rho", sup[1 + nr + ud + i]);
    e.index = static_cast<int>(i);
    out[3].entries.push_back(e);
    fin = fin && std::isfinite(e.value);
  }
  out[3].verdict = fin ? "pass" : "fail";
  return out;
}

struct RouteOptions {
  std::vector<double> rho_grid{1.0};
  std::vector<double> eps_grid{0.1, 0.01, 0.001};  // sorted descending
  std::vector<double> r_grid{1.0, 2.0, 4.0, 8.0};
  double p = 1.0;
  double growth_budget = 10.0;
};

/// Kernel-level sufficient conditions for the Dirichlet discretization.
inline std::vector<ConditionReport> check_dirichlet_route(const JumpKernel& k, std::vector<Point> probes,
                                                          const QuadratureSpec& quad, RouteOptions opt = {}) {
  quad.validate();
  const int d = k.dim;
  const std::size_t ud = static_cast<std::size_t>(d);
  probes = detail::probes_or_default(probes, d);
  detail::require(!opt.rho_grid.empty(), "check.rho_grid must be nonempty");
  std::sort(opt.eps_grid.begin(), opt.eps_grid.end(), std::greater<>());
  const double sd = std::sqrt(static_cast<double>(d));
  std::vector<ConditionReport> out(4);

  out[0].id = "T1.D";
  bool fin = true;
  for (double rho : opt.rho_grid) {
    ConditionEntry e;
    e.quantity = "sup_tail_rho";
    e.rho = rho;
    e.value = detail::sup_over(probes, [&](const Point& x) { return detail::kernel_tail(k, x, rho, quad); });
    fin = fin && std::isfinite(e.value);
    out[0].entries.push_back(e);
  }
  out[0].verdict = fin ? "pass" : "fail";

  out[1].id = "T3.D";
  std::vector<double> tails;
  for (double r : opt.r_grid) {
    ConditionEntry e;
    e.quantity = "sup_tail_r";
    e.r = r;
    e.value = detail::sup_over(probes, [&](const Point& x) { return detail::kernel_tail(k, x, r, quad); });
    tails.push_back(e.value);
    out[1].entries.push_back(e);
  }
  out[1].verdict = tails.size() < 2 ? "n/a" : (trend_vanishing(tails, 0.9) ? "trend-ok" : "trend-fail");

  // (T4.D.1) and (T5.D.1): the three epsilon-families for each rho.
  out[2].id = "T4.D.1";
  out[3].id = "T5.D.1";
  bool ok4 = true, ok5 = true;
  for (double rho : opt.rho_grid) {
    for (std::size_t i = 0; i < ud; ++i) {
      std::vector<double> l1, l2, l3;
      for (double eps : opt.eps_grid) {
        const double ep = std::pow(eps, opt.p);
        const double ring_hi = sd * ep, ring_lo = std::max(0.0, sd * ep - 0.5 * sd * eps);
        const double v1 = detail::sup_over(probes, [&](const Point& x) {
          return std::abs(detail::kernel_annulus(k, x, eps, rho, [&](std::span<const double> z) { return z[i]; }, quad));
        });
        const double v2 = ring_hi > ring_lo ? detail::sup_over(probes, [&](const Point& x) {
          return detail::kernel_annulus(k, x, ring_lo, ring_hi, [&](std::span<const double> z) { return std::abs(z[i]); }, quad);
        }) : 0.0;
        const double v3 = ep < rho ? eps * detail::sup_over(probes, [&](const Point& x) {
          return detail::kernel_annulus(k, x, ep, rho, [](std::span<const double>) { return 1.0; }, quad);
        }) : 0.0;
        l1.push_back(v1);
        l2.push_back(v2);
        l3.push_back(v3);
        const char* names[] = {"sup_abs_first_moment_annulus", "sup_abs_moment_ring", "eps_times_sup_mass_annulus"};
        const double vals[] = {v1, v2, v3};
        for (int q = 0; q < 3; ++q) {
          ConditionEntry e;
          e.quantity = names[q];
          e.value = vals[q];
          e.rho = rho;
          e.eps = eps;
          e.p = opt.p;
          e.index = static_cast<int>(i);
          out[2].entries.push_back(e);
        }
      }
      ok4 = ok4 && eps_trend_bounded(l1, opt.growth_budget) && eps_trend_bounded(l2, opt.growth_budget) &&
            eps_trend_bounded(l3, opt.growth_budget);
    }
    for (std::size_t i = 0; i < ud; ++i)
      for (std::size_t kk = 0; kk < ud; ++kk) {
        std::vector<double> l1, l2, l3;
        for (double eps : opt.eps_grid) {
          const double ep = std::pow(eps, opt.p);
          const double ring_hi = sd * ep, ring_lo = std::max(0.0, sd * ep - 0.5 * sd * eps);
          const double v1 = detail::sup_over(probes, [&](const Point& x) {
            return std::abs(detail::kernel_annulus(k, x, eps, rho, [&](std::span<const double> z) { return z[i] * z[kk]; }, quad));
          });
          const double v2 = ring_hi > ring_lo ? detail::sup_over(probes, [&](const Point& x) {
            return detail::kernel_annulus(k, x, ring_lo, ring_hi, [&](std::span<const double> z) { return std::abs(z[i] * z[kk]); }, quad);
          }) : 0.0;
          const double v3 = ep < rho ? eps * detail::sup_over(probes, [&](const Point& x) {
            return detail::kernel_annulus(k, x, ep, rho, [&](std::span<const double> z) { return std::abs(z[i]); }, quad);
          }) : 0.0;
          l1.push_back(v1);
          l2.push_back(v2);
          l3.push_back(v3);
          const char* names[] = {"sup_abs_second_moment_annulus", "sup_abs_second_moment_ring", "eps_times_sup_abs_moment_annulus"};
          const double vals[] = {v1, v2, v3};
          for (int q = 0; q < 3; ++q) {
            ConditionEntry e;
            e.quantity = names[q];
            e.value = vals[q];
            e.rho = rho;
            e.eps = eps;
            e.p = opt.p;
            e.index = static_cast<int>(i * ud + kk);
            out[3].entries.push_back(e);
          }
        }
        ok5 = ok5 && eps_trend_bounded(l1, opt.growth_budget) && eps_trend_bounded(l2, opt.growth_budget) &&
              eps_trend_bounded(l3, opt.growth_budget);
      }
  }
  out[2].verdict = ok4 ? "trend-ok" : "trend-fail";
  out[3].verdict = ok5 ? "trend-ok" : "trend-fail";
  if (!ok4 || !ok5) out[2].note = out[3].note = "epsilon trend grows beyond the budget";
  return out;
}

/// alpha_0^n (C2), the C3 integral, its discrete analogue C4 and the bound
/// that C3 implies for C4 on the Dirichlet discretization.
inline std::vector<ConditionReport> check_C2_C3_C4(const JumpKernel& k, const ConductanceMatrix& C,
                                                   std::vector<double> rho_grid, std::vector<Point> probes,
                                                   const QuadratureSpec& quad) {
  quad.validate();
  const Lattice& lat = C.lattice();
  const int d = lat.dim();
  const int n = lat.n();
  detail::require(k.dim == d, "kernel and matrix dimensions differ");
  probes = detail::probes_or_default(probes, d);
  std::vector<ConditionReport> out(3);
  const SplitMatrix S = split_symmetric(C);

  out[0].id = "C2";
  ConditionEntry a0;
  a0.quantity = "alpha0_n";
  a0.value = alpha0_n(S);
  a0.n = n;
  a0.p = C.p();
  out[0].entries.push_back(a0);
  if (a0.value > 0.0 && std::isfinite(a0.value)) {
    out[0].verdict = "pass";
  } else {
    out[0].verdict = "fail";
    out[0].note = a0.value == 0.0 ? "alpha0^n = 0: symmetric conductances, C2 fails but is not needed in the symmetric case"
                                  : "alpha0^n is not finite";
  }

  auto one_sq = [](std::span<const double> z) {
    const double r2 = [&] { double s = 0.0; for (double v : z) s += v * v; return s; }();
    return std::min(1.0, r2);
  };
  const double sd = std::sqrt(static_cast<double>(d));
  const double inf = std::numeric_limits<double>::infinity();
  out[1].id = "C3";
  out[2].id = "C4";
  bool c3_ok = true, c4_ok = true;
  for (double rho : rho_grid) {
    ConditionEntry e3;
    e3.quantity = "sup_int_min1_sq_ks";
    e3.rho = rho;
    const auto inside = detail::probes_in_ball(probes, rho, d);
    e3.value = detail::sup_over(inside, [&](const Point& x) {
      return detail::kernel_annulus(k, x, 0.0, inf, one_sq, quad, true, {1.0});
    });
    c3_ok = c3_ok && std::isfinite(e3.value);
    out[1].entries.push_back(e3);

    // Discrete: rows with |a| < rho; out-of-window mass enters through lost(a).
    double c4 = 0.0;
    std::size_t rows = 0;
    for (std::size_t a = 0; a < lat.size(); ++a) {
      const auto pa = lat.point(a);
      if (norm(pa) >= rho && !(rho <= 0.5 / n && norm(pa) == 0.0)) continue;
      ++rows;
      const auto ka = lat.index_coords(a);
      double s = 0.0;
      std::vector<double> z(static_cast<std::size_t>(d));
      for (std::size_t e = S.row_ptr[a]; e < S.row_ptr[a + 1]; ++e) {
        const auto kb = lat.index_coords(S.cols[e]);
        for (int c = 0; c < d; ++c) z[static_cast<std::size_t>(c)] = static_cast<double>(kb[static_cast<std::size_t>(c)] - ka[static_cast<std::size_t>(c)]) / n;
        s += one_sq(z) * S.sym[e];
      }
      c4 = std::max(c4, s + C.lost(a));
    }
    if (rows == 0) throw ConfigError("no lattice rows inside B_rho for C4");
    ConditionEntry e4;
    e4.quantity = "sup_sum_min1_sq_Cs";
    e4.rho = rho;
    e4.n = n;
    e4.p = C.p();
    e4.value = c4;
    out[2].entries.push_back(e4);

    ConditionEntry eb;
    eb.quantity = "c3_bound";
    eb.rho = rho;
    eb.n = n;
    eb.p = C.p();
    if (1.0 - sd / n <= 0.0) {
      eb.value = inf;
    } else {
      const auto near = detail::probes_in_ball(probes, rho + sd / (2.0 * n), d);
      const double far = detail::sup_over(near, [&](const Point& x) {
        return detail::kernel_annulus(k, x, 1.0 - sd / n, inf, [](std::span<const double>) { return 1.0; }, quad, true);
      });
      const double mom = detail::sup_over(near, [&](const Point& x) {
        return detail::kernel_annulus(k, x, 0.0, 1.0 + sd / n, [](std::span<const double> z) { double s = 0.0; for (double v : z) s += v * v; return s; }, quad, true);
      });
      eb.value = far + 4.0 * mom;
    }
    out[2].entries.push_back(eb);
    c4_ok = c4_ok && std::isfinite(c4) && c4 <= eb.value * (1.0 + 1e-6);
  }
  out[1].verdict = c3_ok ? "pass" : "fail";
  out[2].verdict = c4_ok ? "pass" : "fail";
  out[2].note = "C4 checked against the bound built from C3 integrals over the enlarged ball";
  return out;
}

struct SemimartingaleOptions {
  std::vector<double> bump_scales{0.5, 1.0, 2.0};
  bool require_drift = false;
  double tolerance = kNA;  // verdict threshold on relative discrepancy, none when NaN
};

/// Discrepancies between row sums of the chain at [x]_n and the limit
/// characteristics at x, for probes x in B_R(0).
inline std::vector<ConditionReport> check_semimartingale_route(const LevyMeasureField& field, const ConductanceMatrix& C,
                                                               const TruncationFunction& h, double R, std::vector<Point> probes,
                                                               const QuadratureSpec& quad, SemimartingaleOptions opt = {}) {
  quad.validate();
  const Lattice& lat = C.lattice();
  const int d = lat.dim();
  const std::size_t ud = static_cast<std::size_t>(d);
  detail::require(field.dim == d, "field and matrix dimensions differ");
  probes = detail::probes_or_default(probes, d);
  std::vector<Point> inball;
  for (const auto& x : probes)
    if (norm(x) <= R + 1e-12) inball.push_back(x);
  if (inball.empty()) throw ConfigError("no probe lies in B_R(0)");
  if (opt.require_drift && !field.has_drift()) throw ConfigError("C4.S requested but the field has no drift");
  const double inf = std::numeric_limits<double>::infinity();
  const std::vector<double> hbreak{h.radius};
  const int n = lat.n();

  std::vector<std::size_t> rows(inball.size());
  for (std::size_t i = 0; i < inball.size(); ++i) {
    const auto a = lat.locate(inball[i]);
    if (a < 0) throw ConfigError("window does not cover B_R(0)");
    rows[i] = static_cast<std::size_t>(a);
  }

  struct ProbeValues {
    std::vector<double> drift_disc, drift_target;
    std::vector<double> second_disc, second_target;
    std::vector<double> bump_disc, bump_target;
    std::vector<double> sq_disc, sq_target, sqdrift_disc, sqdrift_target;
  };
  std::vector<ProbeValues> pv(inball.size());
  const std::size_t nb = opt.bump_scales.size();
  parallel_for(inball.size(), [&](std::size_t pi) {
    const Point& x = inball[pi];
    const std::size_t a = rows[pi];
    ProbeValues& v = pv[pi];
    std::vector<double> hz(ud);
    if (field.has_drift()) {
      std::vector<double> b(ud);
      field.drift(x, b);
      for (std::size_t i = 0; i < ud; ++i) {
        v.drift_disc.push_back(detail::row_sum(C, a, [&](std::span<const double> z) { return h.component(z, i); }, 0.0));
        v.drift_target.push_back(b[i]);
      }
    }
    for (std::size_t i = 0; i < ud; ++i)
      for (std::size_t k = 0; k < ud; ++k) {
        auto w = [&](std::span<const double> z) { return h.component(z, i) * h.component(z, k); };
        v.second_disc.push_back(detail::row_sum(C, a, w, i == k ? 1.0 / d : 0.0));
        v.second_target.push_back(detail::field_annulus(field, x, 0.0, inf, w, quad, hbreak));
      }
    for (std::size_t j = 0; j < nb; ++j) {
      const double l = opt.bump_scales[j];
      auto g = [&](std::span<const double> z) { return shell_bump(z, l); };
      v.bump_disc.push_back(detail::row_sum(C, a, g, 0.0));
      const std::vector<double> bb{l, 1.25 * l, 1.5 * l, 1.75 * l, 2.0 * l};
      v.bump_target.push_back(detail::field_annulus(field, x, l, 2.0 * l, g, quad, bb));
    }
    if (field.finite_second_moment) {
      for (std::size_t i = 0; i < ud; ++i)
        for (std::size_t k = 0; k < ud; ++k) {
          auto w = [&](std::span<const double> z) { return z[i] * z[k]; };
          v.sq_disc.push_back(detail::row_sum(C, a, w, 0.0));
          v.sq_target.push_back(detail::field_annulus(field, x, 0.0, inf, w, quad, hbreak));
        }
      if (field.has_drift()) {
        std::vector<double> b(ud);
        field.drift(x, b);
        for (std::size_t i = 0; i < ud; ++i) {
          v.sqdrift_disc.push_back(detail::row_sum(C, a, [&](std::span<const double> z) { return z[i]; }, 0.0));
          v.sqdrift_target.push_back(b[i] + detail::field_annulus(field, x, 0.0, inf,
                                                                   [&](std::span<const double> z) { return z[i] - h.component(z, i); }, quad, hbreak));
        }
      }
    }
  });

  auto build = [&](const std::string& id, const std::string& quantity, auto get_disc, auto get_target, std::size_t count,
                   const std::vector<double>* scales) {
    ConditionReport rep;
    rep.id = id;
    bool ok = true;
    for (std::size_t c = 0; c < count; ++c) {
      double sup = 0.0, tgt_at_sup = kNA;
      for (std::size_t pi = 0; pi < inball.size(); ++pi) {
        const double disc = get_disc(pv[pi])[c], tgt = get_target(pv[pi])[c];
        ConditionEntry e;
        e.quantity = quantity;
        e.value = std::abs(disc - tgt);
        e.target = tgt;
        e.R = R;
        e.n = n;
        e.p = C.p();
        e.index = static_cast<int>(c);
        e.probe = static_cast<int>(pi);
        if (scales) e.r = (*scales)[c];
        rep.entries.push_back(e);
        if (e.value >= sup) {
          sup = e.value;
          tgt_at_sup = tgt;
        }
      }
      ConditionEntry e;
      e.quantity = quantity;
      e.value = sup;
      e.target = tgt_at_sup;
      e.R = R;
      e.n = n;
      e.p = C.p();
      e.index = static_cast<int>(c);
      if (scales) e.r = (*scales)[c];
      rep.entries.push_back(e);
      if (!std::isnan(opt.tolerance)) ok = ok && sup <= opt.tolerance * std::max(std::abs(tgt_at_sup), 1.0);
    }
    rep.verdict = std::isnan(opt.tolerance) ? "n/a" : (ok ? "pass" : "fail");
    if (std::isnan(opt.tolerance)) rep.note = "discrepancy at fixed n; convergence needs an n-sweep";
    return rep;
  };

  std::vector<ConditionReport> out;
  if (field.has_drift())
    out.push_back(build("C4.S", "sup_drift_discrepancy", [](const ProbeValues& v) { return v.drift_disc; },
                        [](const ProbeValues& v) { return v.drift_target; }, ud, nullptr));
  out.push_back(build("C5.S", "sup_truncated_second_moment_discrepancy", [](const ProbeValues& v) { return v.second_disc; },
                      [](const ProbeValues& v) { return v.second_target; }, ud * ud, nullptr));
  out.push_back(build("C6.S", "sup_bump_discrepancy", [](const ProbeValues& v) { return v.bump_disc; },
                      [](const ProbeValues& v) { return v.bump_target; }, nb, &opt.bump_scales));
  if (field.finite_second_moment) {
    if (field.has_drift())
      out.push_back(build("C4.S2", "sup_full_drift_discrepancy", [](const ProbeValues& v) { return v.sqdrift_disc; },
                          [](const ProbeValues& v) { return v.sqdrift_target; }, ud, nullptr));
    out.push_back(build("C5.S2", "sup_second_moment_discrepancy", [](const ProbeValues& v) { return v.sq_disc; },
                        [](const ProbeValues& v) { return v.sq_target; }, ud * ud, nullptr));
    ConditionReport c6 = out[field.has_drift() ? 2 : 1];
    c6.id = "C6.S2";
    out.push_back(c6);
  }
  return out;
}

/// Field-level tightness conditions for the measure discretization.
inline std::vector<ConditionReport> check_TS_family(const LevyMeasureField& field, std::vector<Point> probes,
                                                    const QuadratureSpec& quad, RouteOptions opt = {}) {
  quad.validate();
  const int d = field.dim;
  const std::size_t ud = static_cast<std::size_t>(d);
  probes = detail::probes_or_default(probes, d);
  std::sort(opt.eps_grid.begin(), opt.eps_grid.end(), std::greater<>());
  std::vector<ConditionReport> out(4);
  out[0].id = "T1.S";
  bool fin = true;
  for (double rho : opt.rho_grid) {
    ConditionEntry e;
    e.quantity = "sup_tail_rho";
    e.rho = rho;
    e.value = detail::sup_over(probes, [&](const Point& x) { return detail::field_tail(field, x, rho, quad); });
    fin = fin && std::isfinite(e.value);
    out[0].entries.push_back(e);
  }
  out[0].verdict = fin ? "pass" : "fail";

  out[1].id = "T2.S";
  std::vector<double> tails;
  for (double r : opt.r_grid) {
    ConditionEntry e;
    e.quantity = "sup_tail_r";
    e.r = r;
    e.value = detail::sup_over(probes, [&](const Point& x) { return detail::field_tail(field, x, r, quad); });
    tails.push_back(e.value);
    out[1].entries.push_back(e);
  }
  out[1].verdict = tails.size() < 2 ? "n/a" : (trend_vanishing(tails, 0.9) ? "trend-ok" : "trend-fail");

  out[2].id = "T3.S";
  out[3].id = "T4.S";
  bool ok3 = true, ok4 = true;
  for (double rho : opt.rho_grid) {
    for (std::size_t i = 0; i < ud; ++i) {
      std::vector<double> l1, l2;
      for (double eps : opt.eps_grid) {
        const double ep = std::pow(eps, opt.p);
        const double v1 = ep < rho ? detail::sup_over(probes, [&](const Point& x) {
          return std::abs(detail::field_annulus(field, x, ep, rho, [&](std::span<const double> y) { return y[i]; }, quad));
        }) : 0.0;
        const double v2 = ep < rho ? eps * detail::sup_over(probes, [&](const Point& x) {
          return detail::field_annulus(field, x, ep, rho, [](std::span<const double>) { return 1.0; }, quad);
        }) : 0.0;
        l1.push_back(v1);
        l2.push_back(v2);
        for (int q = 0; q < 2; ++q) {
          ConditionEntry e;
          e.quantity = q == 0 ? "sup_abs_first_moment_annulus" : "eps_times_sup_mass_annulus";
          e.value = q == 0 ? v1 : v2;
          e.rho = rho;
          e.eps = eps;
          e.p = opt.p;
          e.index = static_cast<int>(i);
          out[2].entries.push_back(e);
        }
      }
      ok3 = ok3 && eps_trend_bounded(l1, opt.growth_budget) && eps_trend_bounded(l2, opt.growth_budget);
    }
    std::vector<double> l4;
    for (double eps : opt.eps_grid) {
      ConditionEntry e;
      e.quantity = "sup_second_moment_annulus";
      e.rho = rho;
      e.eps = eps;
      e.value = eps < rho ? detail::sup_over(probes, [&](const Point& x) {
        return detail::field_annulus(field, x, eps, rho, [](std::span<const double> y) { double s = 0.0; for (double v : y) s += v * v; return s; }, quad);
      }) : 0.0;
      l4.push_back(e.value);
      out[3].entries.push_back(e);
    }
    ok4 = ok4 && eps_trend_bounded(l4, opt.growth_budget);
  }
  if (field.symmetric) {
    out[2].verdict = "pass";
    out[2].note = "field is symmetric near 0; moment families reported for reference";
  } else {
    out[2].verdict = ok3 ? "trend-ok" : "trend-fail";
  }
  out[3].verdict = ok4 ? "trend-ok" : "trend-fail";
  return out;
}

/// alpha_0^n report, for sweeps.
inline ConditionReport alpha0_report(const ConductanceMatrix& C) {
  ConditionReport r;
  r.id = "alpha0n";
  ConditionEntry e;
  e.quantity = "alpha0_n";
  e.value = alpha0_n(C);
  e.n = C.lattice().n();
  e.p = C.p();
  r.entries.push_back(e);
  r.verdict = std::isfinite(e.value) ? "pass" : "fail";
  return r;
}

inline void write_reports_csv(std::ostream& os, const std::vector<ConditionReport>& reports, bool header = true) {
  if (header) os << "condition,quantity,index,probe,rho,r,eps,R,n,p,value,target,verdict\n";
  auto num = [](double v) { return std::isnan(v) ? std::string() : fmt_double(v); };
  for (const auto& rep : reports)
    for (const auto& e : rep.entries)
      os << rep.id << ',' << e.quantity << ',' << e.index << ',' << e.probe << ',' << num(e.rho) << ',' << num(e.r) << ','
         << num(e.eps) << ',' << num(e.R) << ',' << (e.n > 0 ? std::to_string(e.n) : std::string()) << ',' << num(e.p) << ',' << fmt_double(e.value) << ','
         << num(e.target) << ',' << rep.verdict << "\n";
}

inline std::string summarize_reports(const std::vector<ConditionReport>& reports) {
  std::ostringstream os;
  for (const auto& rep : reports) {
    // Largest value per quantity, in order of first appearance.
    std::vector<std::pair<std::string, double>> maxima;
    for (const auto& e : rep.entries) {
      if (e.probe >= 0) continue;
      auto it = std::find_if(maxima.begin(), maxima.end(), [&](const auto& m) { return m.first == e.quantity; });
      if (it == maxima.end()) maxima.emplace_back(e.quantity, e.value);
      else it->second = std::max(it->second, e.value);
    }
    os << rep.id << ": " << rep.verdict;
    for (std::size_t i = 0; i < maxima.size(); ++i)
      os << (i == 0 ? " (" : ", ") << maxima[i].first << " max " << fmt_double(maxima[i].second) << (i + 1 == maxima.size() ? ")" : "");
    if (!rep.note.empty()) os << " - " << rep.note;
    os << "\n";
  }
  return os.str();
}

}  // namespace jumpchain
