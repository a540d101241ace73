#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

#include "discretize.hpp"
#include "error.hpp"
#include "kernel.hpp"
#include "lattice.hpp"
#include "parallel.hpp"
#include "quadrature.hpp"

namespace jumpchain {

/// The killed generator as a linear operator: off-diagonal C(a, b), diagonal
/// -(kept(a) + lost(a)).
class GeneratorOperator {
 public:
  explicit GeneratorOperator(const ConductanceMatrix& C, double factor = 1.01) : C_(&C), diag_(C.size()) {
    detail::require(factor >= 1.0, "uniformization factor must be >= 1");
    double mx = 0.0;
    for (std::size_t a = 0; a < C.size(); ++a) {
      diag_[a] = -(C.kept(a) + C.lost(a));
      mx = std::max(mx, -diag_[a]);
    }
    lambda_ = factor * mx;
  }

  const ConductanceMatrix& matrix() const { return *C_; }
  const Lattice& lattice() const { return C_->lattice(); }
  std::size_t size() const { return diag_.size(); }
  double diagonal(std::size_t a) const { return diag_[a]; }
  double lambda() const { return lambda_; }

  /// out = G x.
  void apply(const std::vector<double>& x, std::vector<double>& out) const {
    out.resize(x.size());
    parallel_for(x.size(), [&](std::size_t a) {
      double s = diag_[a] * x[a];
      C_->for_each_entry(a, [&](std::size_t b, double r) { s += r * x[b]; });
      out[a] = s;
    });
  }

  /// out = (I + G / lambda) x, the uniformized jump operator.
  void apply_uniformized(const std::vector<double>& x, std::vector<double>& out) const {
    out.resize(x.size());
    const double inv = lambda_ > 0.0 ? 1.0 / lambda_ : 0.0;
    parallel_for(x.size(), [&](std::size_t a) {
      double s = (1.0 + diag_[a] * inv) * x[a];
      C_->for_each_entry(a, [&](std::size_t b, double r) { s += r * inv * x[b]; });
      out[a] = s;
    });
  }

 private:
  const ConductanceMatrix* C_;
  std::vector<double> diag_;
  double lambda_ = 0.0;
};

struct SemigroupStats {
  std::size_t terms = 0;
  std::size_t substeps = 0;
  double tail_bound = 0.0;  // Poisson tail times sup|f|, summed over substeps
};

/// P^n_t f_n = e^{-lambda t} sum_j (lambda t)^j / j! (I + G/lambda)^j f_n, cut
/// when the Poisson tail times sup|f_n| drops below tol. Long horizons are
/// split so that lambda t <= 500 per substep.
inline LatticeFunction apply_semigroup(const GeneratorOperator& G, const LatticeFunction& fn, double t,
                                       double tol = 1e-12, std::size_t max_terms = 100000,
                                       SemigroupStats* stats = nullptr) {
  detail::require(t >= 0.0 && std::isfinite(t), "semigroup time must be finite and >= 0");
  detail::require(tol > 0.0, "semigroup tolerance must be > 0");
  if (!fn.lattice || !fn.lattice->same_as(G.lattice())) throw ConfigError("lattice function does not live on the generator lattice");
  LatticeFunction out = fn;
  if (t == 0.0 || G.lambda() == 0.0) return out;
  const double total = G.lambda() * t;
  const std::size_t steps = static_cast<std::size_t>(std::ceil(total / 500.0));
  const double mu = total / static_cast<double>(steps);
  const double step_tol = tol / static_cast<double>(steps);
  SemigroupStats st;
  st.substeps = steps;
  std::vector<double> v, w, acc;
  for (std::size_t s = 0; s < steps; ++s) {
    double sup = 0.0;
    for (double x : out.values) sup = std::max(sup, std::abs(x));
    v = out.values;
    acc.assign(v.size(), 0.0);
    if (sup == 0.0) continue;
    std::size_t j = 0;
    double tail = 1.0;
    for (;; ++j) {
      if (j >= max_terms) throw NumericError("uniformization did not reach tol within the term cap");
      const double wj = std::exp(-mu + static_cast<double>(j) * std::log(mu) - std::lgamma(static_cast<double>(j) + 1.0));
      for (std::size_t a = 0; a < v.size(); ++a) acc[a] += wj * v[a];
      // P(N > j) for N ~ Poisson(mu).
      tail = boost::math::gamma_p(static_cast<double>(j) + 1.0, mu);
      if (tail * sup < step_tol && static_cast<double>(j) >= mu) break;
      G.apply_uniformized(v, w);
      v.swap(w);
    }
    st.terms += j + 1;
    st.tail_bound += tail * sup;
    out.values = acc;
  }
  if (stats) *stats = st;
  return out;
}

/// Symbol of a symmetric Levy process on R^d with an evaluation method.
struct ReferenceSemigroup {
  enum class Method { CauchyClosure, Spectral };
  std::string name;
  std::function<double(double)> symbol;  // psi(|xi|)
  Method method = Method::Spectral;
  double scale = 1.0;  // Cauchy closure: psi = scale |xi|
  // Spectral quadrature: f sampled on [-extent, extent] with spacing h, frequency
  // integral cut where t psi(xi) exceeds cutoff_exponent.
  double extent = 40.0;
  double h = 0.01;
  double cutoff_exponent = 40.0;
};

/// psi(xi) = scale |xi|^alpha. Only alpha = 1 has the analytic closure.
inline ReferenceSemigroup stable_reference(double alpha, double scale = 1.0) {
  detail::require(alpha > 0.0 && alpha <= 2.0, "reference alpha must lie in (0, 2]");
  detail::require(scale > 0.0, "reference scale must be > 0");
  ReferenceSemigroup P;
  P.name = alpha == 1.0 ? "cauchy" : "stable";
  P.symbol = [alpha, scale](double xi) { return scale * std::pow(std::abs(xi), alpha); };
  P.method = alpha == 1.0 ? ReferenceSemigroup::Method::CauchyClosure : ReferenceSemigroup::Method::Spectral;
  P.scale = scale;
  return P;
}

inline double cauchy_density(double x, double s) { return s / (std::numbers::pi * (s * s + x * x)); }

/// Integral of cauchy_density(., s)^2 over |x| > R.
inline double cauchy_density_l2_tail(double s, double R) {
  const double th = std::atan(s / R);
  // x = s cot(theta) on each side
  return (2.0 / (std::numbers::pi * std::numbers::pi * s)) * 0.5 * (th - 0.5 * std::sin(2.0 * th));
}

struct ReferenceResult {
  std::vector<double> values;
  double error_estimate = 0.0;
};

/// P_t f on x_grid (d = 1).
inline ReferenceResult reference_apply(const ReferenceSemigroup& P, const std::function<double(double)>& f, double t,
                                       const std::vector<double>& x_grid, double rel_tol = 1e-11) {
  detail::require(t >= 0.0, "reference time must be >= 0");
  ReferenceResult r;
  r.values.resize(x_grid.size());
  if (t == 0.0) {
    for (std::size_t i = 0; i < x_grid.size(); ++i) r.values[i] = f(x_grid[i]);
    return r;
  }
  if (P.method == ReferenceSemigroup::Method::CauchyClosure) {
    const double s = P.scale * t;
    parallel_for(x_grid.size(), [&](std::size_t i) {
      const double x = x_grid[i];
      const double brk[] = {-s, 0.0, s};
      auto g = [&](double y) { return f(x - y) * cauchy_density(y, s); };
      r.values[i] = integrate_adaptive(g, -std::numeric_limits<double>::infinity(), brk[0], rel_tol) +
                    integrate_piecewise(g, brk[0], brk[2], brk, rel_tol) +
                    integrate_adaptive(g, brk[2], std::numeric_limits<double>::infinity(), rel_tol);
    });
    return r;
  }
  if (!P.symbol) throw ConfigError("reference semigroup has no symbol");
  // Fourier pair via trapezoid sums on the sample grid, frequency integral by
  // Gauss panels: P_t f(x) = (1/pi) int_0^Xi e^{-t psi} (Cf(xi) cos xi x + Sf(xi) sin xi x) dxi.
  const std::size_t ny = static_cast<std::size_t>(std::ceil(2.0 * P.extent / P.h));
  std::vector<double> ys(ny + 1), fy(ny + 1);
  double l1 = 0.0;
  for (std::size_t j = 0; j <= ny; ++j) {
    ys[j] = -P.extent + P.h * static_cast<double>(j);
    fy[j] = f(ys[j]) * ((j == 0 || j == ny) ? 0.5 : 1.0) * P.h;
    l1 += std::abs(fy[j]);
  }
  const double nyquist = std::numbers::pi / P.h;
  double xi_max = nyquist;
  {
    double lo = 0.0, hi = nyquist;
    if (t * P.symbol(hi) > P.cutoff_exponent) {
      for (int it = 0; it < 100; ++it) {
        const double mid = 0.5 * (lo + hi);
        (t * P.symbol(mid) > P.cutoff_exponent ? hi : lo) = mid;
      }
      xi_max = hi;
    }
  }
  const GaussRule& rule = gauss_rule(20);
  const std::size_t panels = std::max<std::size_t>(8, static_cast<std::size_t>(std::ceil(xi_max * P.extent / 20.0)));
  const double pw = xi_max / static_cast<double>(panels);
  const std::size_t nx = panels * rule.nodes.size();
  std::vector<double> xi(nx), wt(nx), cf(nx), sf(nx);
  for (std::size_t p = 0; p < panels; ++p)
    for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
      const std::size_t k = p * rule.nodes.size() + q;
      xi[k] = pw * (static_cast<double>(p) + 0.5 * (rule.nodes[q] + 1.0));
      wt[k] = 0.5 * pw * rule.weights[q] * std::exp(-t * P.symbol(xi[k]));
    }
  parallel_for(nx, [&](std::size_t k) {
    double c = 0.0, s = 0.0;
    for (std::size_t j = 0; j <= ny; ++j) {
      c += fy[j] * std::cos(xi[k] * ys[j]);
      s += fy[j] * std::sin(xi[k] * ys[j]);
    }
    cf[k] = c;
    sf[k] = s;
  });
  parallel_for(x_grid.size(), [&](std::size_t i) {
    double v = 0.0;
    for (std::size_t k = 0; k < nx; ++k) v += wt[k] * (cf[k] * std::cos(xi[k] * x_grid[i]) + sf[k] * std::sin(xi[k] * x_grid[i]));
    r.values[i] = v / std::numbers::pi;
  });
  // Frequency cut-off remainder plus the mass of f beyond the sampled extent.
  const double edge = std::abs(f(P.extent)) + std::abs(f(-P.extent));
  r.error_estimate = l1 * std::exp(-P.cutoff_exponent) * (xi_max > 0 ? 1.0 : 0.0) / std::numbers::pi + edge * P.extent;
  return r;
}

struct SemigroupError {
  double error = 0.0;
  double inside = 0.0;
  double leakage = 0.0;  // L^2 norm of P_t f outside the window
  bool leakage_flag = false;
  SemigroupStats stats;
};

/// ||e_n P^n_t r_n f - P_t f||_{L^2} where pt_f evaluates P_t f exactly (or
/// from a reference), and pt_tail2 is its squared L^2 mass beyond outer_radius.
template <class F, class G>
SemigroupError strong_semigroup_error(const ConductanceMatrix& C, F&& f, double t, G&& pt_f, double outer_radius = -1.0,
                                      double pt_tail2 = 0.0, double leak_threshold = 1e-3, double tol = 1e-12) {
  LatticePtr lat = std::make_shared<const Lattice>(C.lattice());
  const LatticeFunction fn = restrict_fn(f, lat, 6);
  const GeneratorOperator Gop(C);
  SemigroupError out;
  const LatticeFunction pn = apply_semigroup(Gop, fn, t, tol, 100000, &out.stats);
  const StrongError e = strong_convergence_error(pn, pt_f, outer_radius, pt_tail2);
  out.error = e.error;
  out.inside = std::sqrt(e.inside);
  out.leakage = std::sqrt(e.leakage);
  out.leakage_flag = out.leakage >= leak_threshold;
  return out;
}

/// Cauchy-closure convenience: f = Cauchy(s) density, P_t f = Cauchy(s + t) density.
inline SemigroupError cauchy_strong_error(const ConductanceMatrix& C, double s, double t, double leak_threshold = 1e-3) {
  detail::require(C.lattice().dim() == 1, "Cauchy closure is registered for d = 1");
  const double outer = 2.0 * C.lattice().window_radius() + 1.0;
  auto f = [s](std::span<const double> x) { return cauchy_density(x[0], s); };
  auto g = [u = s + t](std::span<const double> x) { return cauchy_density(x[0], u); };
  return strong_semigroup_error(C, f, t, g, outer, cauchy_density_l2_tail(s + t, std::ceil(outer * C.lattice().n()) / C.lattice().n() + 0.5 / C.lattice().n()),
                                leak_threshold);
}

}  // namespace jumpchain
