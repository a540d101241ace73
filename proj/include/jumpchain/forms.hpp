#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <limits>
#include <string>
#include <vector>

#include "discretize.hpp"
#include "error.hpp"
#include "kernel.hpp"
#include "lattice.hpp"
#include "parallel.hpp"
#include "quadrature.hpp"

namespace jumpchain {

namespace detail {

inline void require_on(const LatticeFunction& f, const Lattice& lat) {
  if (!f.lattice || !(f.lattice.get() == &lat || f.lattice->same_as(lat)))
    throw ConfigError("lattice function does not live on the matrix lattice");
}

}  // namespace detail

/// A f(a) = sum_b (f(b) - f(a)) C(a, b) - f(a) lost(a): the generator of the
/// chain killed when it leaves the window.
inline LatticeFunction apply_generator(const ConductanceMatrix& C, const LatticeFunction& f) {
  detail::require_on(f, C.lattice());
  LatticeFunction out(f.lattice);
  parallel_for(C.size(), [&](std::size_t a) {
    const double fa = f.values[a];
    double s = 0.0;
    C.for_each_entry(a, [&](std::size_t b, double r) { s += (f.values[b] - fa) * r; });
    out.values[a] = s - fa * C.lost(a);
  });
  return out;
}

struct FormValue {
  double value = 0.0;
  double symmetric = 0.0;       // 1/2 E^n(f, g) for H, E^n itself for E
  double antisymmetric = 0.0;   // the C_a correction (zero for E)
};

/// E^n(f, g) = n^{-d} sum_a sum_b (f(b) - f(a)) (g(b) - g(a)) C_s(a, b).
inline FormValue dirichlet_form_E(const SplitMatrix& S, const LatticeFunction& f, const LatticeFunction& g) {
  detail::require_same(f, g);
  detail::require_on(f, *S.lattice);
  std::vector<double> rows(S.size(), 0.0);
  parallel_for(S.size(), [&](std::size_t a) {
    double s = 0.0;
    for (std::size_t e = S.row_ptr[a]; e < S.row_ptr[a + 1]; ++e) {
      const std::size_t b = S.cols[e];
      s += (f.values[b] - f.values[a]) * (g.values[b] - g.values[a]) * S.sym[e];
    }
    rows[a] = s;
  });
  double total = 0.0;
  for (double r : rows) total += r;
  total *= S.lattice->cell_volume();
  return {total, total, 0.0};
}

/// H^n(f, g) = E^n(f, g)/2 - n^{-d} sum_a sum_b (f(b) - f(a)) g(b) C_a(a, b).
inline FormValue form_H(const SplitMatrix& S, const LatticeFunction& f, const LatticeFunction& g) {
  const FormValue e = dirichlet_form_E(S, f, g);
  std::vector<double> rows(S.size(), 0.0);
  parallel_for(S.size(), [&](std::size_t a) {
    double s = 0.0;
    for (std::size_t e2 = S.row_ptr[a]; e2 < S.row_ptr[a + 1]; ++e2) {
      const std::size_t b = S.cols[e2];
      s += (f.values[b] - f.values[a]) * g.values[b] * S.anti[e2];
    }
    rows[a] = s;
  });
  double corr = 0.0;
  for (double r : rows) corr += r;
  corr *= S.lattice->cell_volume();
  return {0.5 * e.value - corr, 0.5 * e.value, -corr};
}

inline FormValue form_H(const ConductanceMatrix& C, const LatticeFunction& f, const LatticeFunction& g) {
  return form_H(split_symmetric(C), f, g);
}

/// alpha_0^n = sup_a sum_{C_s(a,b) != 0} C_a(a,b)^2 / C_s(a,b).
inline double alpha0_n(const SplitMatrix& S) {
  double best = 0.0;
  for (std::size_t a = 0; a < S.size(); ++a) {
    double s = 0.0;
    for (std::size_t e = S.row_ptr[a]; e < S.row_ptr[a + 1]; ++e)
      if (S.sym[e] != 0.0) s += S.anti[e] * S.anti[e] / S.sym[e];
    best = std::max(best, s);
  }
  return best;
}

/// Stencil storage: the summand depends only on the offset, so each row sums
/// the per-offset terms whose target stays in the window. Avoids materializing
/// the split for large windows.
inline double alpha0_n(const ConductanceMatrix& C) {
  if (!C.is_stencil()) return alpha0_n(split_symmetric(C));
  const Lattice& lat = C.lattice();
  const std::size_t d = static_cast<std::size_t>(lat.dim());
  const auto& off = C.stencil_offsets();
  const auto& rates = C.stencil_rates();
  std::map<std::vector<long>, double> rate;
  for (std::size_t e = 0; e < rates.size(); ++e) rate[std::vector<long>(off.begin() + e * d, off.begin() + (e + 1) * d)] += rates[e];
  std::vector<std::pair<std::vector<long>, double>> terms;
  for (const auto& [o, r] : rate) {
    std::vector<long> neg(o);
    for (auto& v : neg) v = -v;
    const auto it = rate.find(neg);
    const double rb = it == rate.end() ? 0.0 : it->second;
    const double sym = 0.5 * (r + rb), anti = 0.5 * (r - rb);
    if (sym != 0.0 && anti != 0.0) {
      terms.emplace_back(o, anti * anti / sym);
      if (it == rate.end()) terms.emplace_back(neg, anti * anti / sym);
    }
  }
  if (terms.empty()) return 0.0;
  if (d == 1) {
    // Row i keeps offsets o with 0 <= i + o < M: a sliding window over offsets.
    const long M = static_cast<long>(lat.size());
    long K = 0;
    for (const auto& t : terms) K = std::max(K, std::abs(t.first[0]));
    std::vector<double> dense(static_cast<std::size_t>(2 * K + 2), 0.0);
    for (const auto& t : terms) dense[static_cast<std::size_t>(t.first[0] + K + 1)] += t.second;
    std::vector<double> pre(dense.size(), 0.0);
    for (std::size_t i = 1; i < dense.size(); ++i) pre[i] = pre[i - 1] + dense[i];
    auto sum_range = [&](long lo, long hi) {  // offsets in [lo, hi]
      lo = std::max(lo, -K);
      hi = std::min(hi, K);
      if (lo > hi) return 0.0;
      return pre[static_cast<std::size_t>(hi + K + 1)] - pre[static_cast<std::size_t>(lo + K)];
    };
    double best = 0.0;
    for (long i = 0; i < M; ++i) best = std::max(best, sum_range(-i, M - 1 - i));
    return best;
  }
  std::vector<double> row(lat.size(), 0.0);
  parallel_for(lat.size(), [&](std::size_t a) {
    const auto ka = lat.index_coords(a);
    std::vector<long> t(d);
    double s = 0.0;
    for (const auto& [o, v] : terms) {
      for (std::size_t c = 0; c < d; ++c) t[c] = ka[c] + o[c];
      if (lat.find(std::span<const long>(t)) >= 0) s += v;
    }
    row[a] = s;
  });
  return *std::max_element(row.begin(), row.end());
}

struct ComparisonReport {
  double alpha0 = 0.0;
  double E = 0.0, H = 0.0, norm2 = 0.0;
  double E1 = 0.0, H1 = 0.0, Halpha = 0.0;
  double comp1_lower = 0.0, comp1_upper = 0.0;  // bounds on H_alpha0 from E_1
  double comp2_lower = 0.0, comp2_upper = 0.0;  // bounds on H_alpha0 from H_1
  bool degenerate = false;  // alpha0 = 0: H = E/2, the chains are not evaluated
  bool comp1_ok = true;
  bool comp2_ok = true;
  bool ok() const { return comp1_ok && comp2_ok; }
};

/// Evaluates 1/4 (1 ^ a) E_1 <= H_a <= (2 + sqrt 2)/2 (1 v a) E_1 and
/// (1 ^ a) H_1 <= H_a <= (1 v a) H_1 with a = alpha_0^n, H_a(f) = H(f,f) + a ||f||^2.
inline ComparisonReport comparison_check(const SplitMatrix& S, const LatticeFunction& f, double rel_slack = 1e-12) {
  ComparisonReport r;
  r.alpha0 = alpha0_n(S);
  r.E = dirichlet_form_E(S, f, f).value;
  r.H = form_H(S, f, f).value;
  r.norm2 = l2n_inner(f, f);
  r.E1 = r.E + r.norm2;
  r.H1 = r.H + r.norm2;
  r.Halpha = r.H + r.alpha0 * r.norm2;
  if (r.alpha0 == 0.0) {
    r.degenerate = true;
    r.comp1_ok = r.comp2_ok = std::abs(r.H - 0.5 * r.E) <= rel_slack * std::max(1.0, std::abs(r.E)) * 10;
    return r;
  }
  const double lo = std::min(1.0, r.alpha0), hi = std::max(1.0, r.alpha0);
  r.comp1_lower = 0.25 * lo * r.E1;
  r.comp1_upper = 0.5 * (2.0 + std::sqrt(2.0)) * hi * r.E1;
  r.comp2_lower = lo * r.H1;
  r.comp2_upper = hi * r.H1;
  const double tol = rel_slack * (std::abs(r.Halpha) + r.E1);
  r.comp1_ok = r.comp1_lower <= r.Halpha + tol && r.Halpha <= r.comp1_upper + tol;
  r.comp2_ok = r.comp2_lower <= r.Halpha + tol && r.Halpha <= r.comp2_upper + tol;
  return r;
}

inline ComparisonReport comparison_check(const ConductanceMatrix& C, const LatticeFunction& f) {
  return comparison_check(split_symmetric(C), f);
}

struct TruncatedForms {
  double continuous = 0.0;  // E_{m,eps}(f, f)
  double discrete = 0.0;    // bar E^n_{m,eps}(f, f)
  double abs_diff() const { return std::abs(discrete - continuous); }
  double rel_diff() const { return continuous != 0.0 ? abs_diff() / std::abs(continuous) : abs_diff(); }
};

/// E_{m,eps}(f,f) = 1/2 of the integral over {x, y in B_m, |x - y| > eps} of
/// (f(y) - f(x))^2 k_s(x, y), and its lattice counterpart with n^d C_s(a, b)
/// on cell(a) x cell(b). f_breaks lists coordinates where f has kinks (d = 1).
template <class F>
TruncatedForms truncated_form_compare(const JumpKernel& k, const ConductanceMatrix& C, F&& f, double m, double eps,
                                      const QuadratureSpec& quad, std::vector<double> f_breaks = {}) {
  detail::require(m > 0.0 && eps > 0.0, "truncated form needs m > 0 and eps > 0");
  detail::require(k.dim == C.lattice().dim(), "kernel and matrix dimensions differ");
  const Lattice& lat = C.lattice();
  const int d = lat.dim();
  const int n = lat.n();
  const double h = 0.5 / n;
  TruncatedForms out;
  if (eps >= 2.0 * m) return out;
  const double rt = std::max(quad.rel_tol, 1e-12);

  if (d == 1) {
    auto fv = [&](double x) {
      const double v[1] = {x};
      return f(std::span<const double>(v, 1));
    };
    // Continuous value: nested adaptive integrals with kinks of f and the eps gap as breaks.
    auto ks = [&](double x, double y) {
      const double a[1] = {x}, b[1] = {y};
      return 0.5 * (k(std::span<const double>(a, 1), std::span<const double>(b, 1)) +
                    k(std::span<const double>(b, 1), std::span<const double>(a, 1)));
    };
    auto inner = [&](double x, double lo, double hi) {
      auto g = [&](double y) {
        const double df = fv(y) - fv(x);
        return df == 0.0 ? 0.0 : df * df * ks(x, y);
      };
      std::vector<double> brk = f_breaks;
      for (double b : k.radial_breaks) {
        brk.push_back(x + b);
        brk.push_back(x - b);
      }
      double s = 0.0;
      if (x - eps > lo) s += integrate_piecewise(g, lo, std::min(hi, x - eps), brk, rt);
      if (x + eps < hi) s += integrate_piecewise(g, std::max(lo, x + eps), hi, brk, rt);
      return s;
    };
    std::vector<double> outer_brk = f_breaks;
    for (double b : f_breaks) {
      outer_brk.push_back(b - eps);
      outer_brk.push_back(b + eps);
    }
    outer_brk.push_back(-m + eps);
    outer_brk.push_back(m - eps);
    out.continuous = 0.5 * integrate_piecewise([&](double x) { return inner(x, -m, m); }, -m, m, outer_brk, rt);

    // Discrete value: cell pairs intersecting [-m, m].
    const long kk = static_cast<long>(std::floor(m * n + 0.5));
    std::vector<std::size_t> cells;
    for (long i = -kk; i <= kk; ++i) {
      const long idx[1] = {i};
      const auto j = lat.find(std::span<const long>(idx, 1));
      if (j < 0) throw ConfigError("truncated form: window does not cover B_m");
      cells.push_back(static_cast<std::size_t>(j));
    }
    std::vector<double> rows(cells.size(), 0.0);
    parallel_for(cells.size(), [&](std::size_t ia) {
      const std::size_t a = cells[ia];
      const double xa = lat.point(a)[0];
      const double xlo = std::max(-m, xa - h), xhi = std::min(m, xa + h);
      if (xhi <= xlo) return;
      double s = 0.0;
      for (std::size_t ib = 0; ib < cells.size(); ++ib) {
        const std::size_t b = cells[ib];
        if (b == a) continue;
        const double cs = 0.5 * (C.rate(a, b) + C.rate(b, a));
        if (cs == 0.0) continue;
        const double yb = lat.point(b)[0];
        const double ylo = std::max(-m, yb - h), yhi = std::min(m, yb + h);
        if (yhi <= ylo) continue;
        std::vector<double> brk = f_breaks;
        brk.push_back(ylo - eps);
        brk.push_back(ylo + eps);
        brk.push_back(yhi - eps);
        brk.push_back(yhi + eps);
        auto outer = [&](double x) {
          auto g = [&](double y) {
            const double df = fv(y) - fv(x);
            return df * df;
          };
          double v = 0.0;
          if (x - eps > ylo) v += integrate_piecewise(g, ylo, std::min(yhi, x - eps), f_breaks, rt);
          if (x + eps < yhi) v += integrate_piecewise(g, std::max(ylo, x + eps), yhi, f_breaks, rt);
          return v;
        };
        s += cs * integrate_piecewise(outer, xlo, xhi, brk, rt);
      }
      rows[ia] = s;
    });
    double tot = 0.0;
    for (double r : rows) tot += r;
    out.discrete = 0.5 * n * tot;
    return out;
  }

  // d >= 2: tensor rules with indicator cut-offs (slowly convergent, bounded by the depth budget).
  const int qq = std::max(quad.q, 4);
  {
    std::vector<double> lo(static_cast<std::size_t>(d), -m), hi(static_cast<std::size_t>(d), m);
    std::vector<double> y(static_cast<std::size_t>(d));
    auto outer = [&](std::span<const double> x) {
      if (norm(x) >= m) return 0.0;
      const double fx = f(x);
      auto g = [&](std::span<const double> z) {
        for (int c = 0; c < d; ++c) y[static_cast<std::size_t>(c)] = x[static_cast<std::size_t>(c)] + z[static_cast<std::size_t>(c)];
        if (norm(y) >= m) return 0.0;
        const double df = f(std::span<const double>(y)) - fx;
        return df * df * 0.5 * (k(x, y) + k(y, x));
      };
      return radial_integral(d, eps, 2.0 * m, g, quad, k.radial_breaks).value;
    };
    out.continuous = 0.5 * adaptive_box(outer, lo, hi, qq, 1e-6, 0.0, std::min(quad.budget, 3)).value;
  }
  {
    std::vector<std::size_t> cells;
    for (std::size_t a = 0; a < lat.size(); ++a)
      if (norm(lat.point(a)) < m + std::sqrt(double(d)) * h) cells.push_back(a);
    std::vector<double> rows(cells.size(), 0.0);
    const double nd = std::pow(static_cast<double>(n), d);
    parallel_for(cells.size(), [&](std::size_t ia) {
      const std::size_t a = cells[ia];
      const auto pa = lat.point(a);
      double s = 0.0;
      for (std::size_t b : cells) {
        if (b == a) continue;
        const double cs = 0.5 * (C.rate(a, b) + C.rate(b, a));
        if (cs == 0.0) continue;
        const auto pb = lat.point(b);
        std::vector<double> lo(static_cast<std::size_t>(2 * d)), hi(lo.size());
        for (int c = 0; c < d; ++c) {
          lo[static_cast<std::size_t>(c)] = pa[static_cast<std::size_t>(c)] - h;
          hi[static_cast<std::size_t>(c)] = pa[static_cast<std::size_t>(c)] + h;
          lo[static_cast<std::size_t>(d + c)] = pb[static_cast<std::size_t>(c)] - h;
          hi[static_cast<std::size_t>(d + c)] = pb[static_cast<std::size_t>(c)] + h;
        }
        auto g = [&](std::span<const double> xy) {
          auto x = xy.subspan(0, static_cast<std::size_t>(d));
          auto y = xy.subspan(static_cast<std::size_t>(d));
          if (norm(x) >= m || norm(y) >= m) return 0.0;
          double r2 = 0.0;
          for (int c = 0; c < d; ++c) r2 += (y[static_cast<std::size_t>(c)] - x[static_cast<std::size_t>(c)]) * (y[static_cast<std::size_t>(c)] - x[static_cast<std::size_t>(c)]);
          if (r2 <= eps * eps) return 0.0;
          const double df = f(y) - f(x);
          return df * df;
        };
        s += cs * adaptive_box(g, lo, hi, qq, 1e-6, 0.0, 2).value;
      }
      rows[ia] = s;
    });
    double tot = 0.0;
    for (double r : rows) tot += r;
    out.discrete = 0.5 * nd * tot;
  }
  return out;
}

}  // namespace jumpchain
