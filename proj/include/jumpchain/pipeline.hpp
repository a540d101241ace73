#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <ostream>
#include <string>
#include <vector>

#include "chain.hpp"
#include "conditions.hpp"
#include "config.hpp"
#include "diagnostics.hpp"
#include "discretize.hpp"
#include "forms.hpp"
#include "format.hpp"
#include "quadrature.hpp"
#include "semigroup.hpp"

namespace jumpchain {

/// Marginal-law diagnostics of one ensemble at its last marginal time.
struct MarginalDiagnostics {
  bool has_reference = false;
  double time = 0.0;
  CFReport cf;
  KSResult ks;
  std::vector<double> sample;  // first coordinate at the last marginal time
};

inline MarginalDiagnostics marginal_diagnostics(const RunConfig& cfg, const EnsembleSummary& s) {
  MarginalDiagnostics m;
  const std::size_t k = s.times.size() - 1;
  m.time = s.times[k];
  m.sample = s.component(k, 0);
  m.cf = empirical_cf(m.sample, cfg.diagnostics.xi);
  m.has_reference = cauchy_reference(cfg) && m.time > 0.0;
  if (m.has_reference) {
    const double loc = cfg.simulate.x0.empty() ? 0.0 : cfg.simulate.x0[0];
    m.cf.set_target(cauchy_cf(m.time, loc));
    m.ks = ks_against_cauchy(m.sample, m.time, loc, cfg.diagnostics.ks_bound);
  }
  return m;
}

inline void write_cf_csv(std::ostream& os, const CFReport& r) {
  const bool t = !r.target.empty();
  os << "xi,re,im,half_re,half_im" << (t ? ",target_re,target_im,within_ci" : "") << "\n";
  for (std::size_t i = 0; i < r.xi.size(); ++i) {
    os << fmt_double(r.xi[i]) << ',' << fmt_double(r.cf[i].real()) << ',' << fmt_double(r.cf[i].imag()) << ','
       << fmt_double(r.half_re[i]) << ',' << fmt_double(r.half_im[i]);
    if (t)
      os << ',' << fmt_double(r.target[i].real()) << ',' << fmt_double(r.target[i].imag()) << ',' << (r.within_ci(i) ? 1 : 0);
    os << "\n";
  }
}

/// P_t f for f = Cauchy(s) density under psi = |xi|^alpha (d = 1), tabulated on
/// [-L, L] and interpolated by cubic Hermite splines; zero outside.
class StableCauchyReference {
 public:
  StableCauchyReference(double alpha, double s, double t, double L, double h = 1.0 / 64.0) : L_(L), h_(h) {
    detail::require(alpha > 0.0 && alpha <= 2.0, "stable reference alpha must lie in (0, 2]");
    const std::size_t m = static_cast<std::size_t>(std::ceil(2.0 * L / h));
    v_.resize(m + 1);
    parallel_for(m + 1, [&](std::size_t i) {
      const double x = -L + h * static_cast<double>(i);
      auto g = [&](double xi) { return std::exp(-s * xi - t * std::pow(xi, alpha)) * std::cos(xi * x); };
      // Panels of one oscillation period keep the adaptive rule honest.
      const double period = x == 0.0 ? 1.0 : std::min(1.0, 2.0 * std::numbers::pi / std::abs(x));
      double acc = 0.0, a = 0.0;
      for (int p = 0; p < 100000; ++p) {
        const double b = a + period;
        const double part = integrate_adaptive(g, a, b, 1e-12);
        acc += part;
        a = b;
        if (std::exp(-s * a - t * std::pow(a, alpha)) < 1e-17) break;
      }
      v_[i] = acc / std::numbers::pi;
    });
  }

  double operator()(double x) const {
    if (x <= -L_ || x >= L_) return 0.0;
    const double u = (x + L_) / h_;
    const std::size_t i = std::min(static_cast<std::size_t>(u), v_.size() - 2);
    const double w = u - static_cast<double>(i);
    auto at = [&](std::ptrdiff_t j) {
      j = std::clamp<std::ptrdiff_t>(j, 0, static_cast<std::ptrdiff_t>(v_.size()) - 1);
      return v_[static_cast<std::size_t>(j)];
    };
    const auto ii = static_cast<std::ptrdiff_t>(i);
    const double p0 = at(ii - 1), p1 = at(ii), p2 = at(ii + 1), p3 = at(ii + 2);
    // Catmull-Rom
    return p1 + 0.5 * w * (p2 - p0 + w * (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3 + w * (3.0 * (p1 - p2) + p3 - p0)));
  }

  double radius() const { return L_; }

 private:
  double L_, h_;
  std::vector<double> v_;
};

/// Strong semigroup error for the configured kernel with f = Cauchy(s) density.
inline SemigroupError configured_semigroup_error(const RunConfig& cfg, const ConductanceMatrix& C) {
  detail::require(C.lattice().dim() == 1, "semigroup reference is registered for d = 1");
  const double s = cfg.semigroup.s, t = cfg.semigroup.t;
  if (cauchy_reference(cfg)) return cauchy_strong_error(C, s, t, cfg.semigroup.leak_threshold);
  double alpha = 0.0;
  if (cfg.scheme == Scheme::DirichletAverage && cfg.kernel.family == "stable") alpha = cfg.kernel.alpha;
  if (cfg.scheme == Scheme::SemimartingaleMeasure && cfg.field.family == "stable") alpha = cfg.field.alpha;
  if (alpha <= 0.0) throw ConfigError("semigroup needs a cauchy or stable kernel for its reference");
  const double L = C.lattice().window_radius() + 1.0;
  const StableCauchyReference ref(alpha, s, t, L);
  auto f = [s](std::span<const double> x) { return cauchy_density(x[0], s); };
  auto g = [&ref](std::span<const double> x) { return ref(x[0]); };
  return strong_semigroup_error(C, f, t, g, L, 0.0, cfg.semigroup.leak_threshold, cfg.semigroup.tol);
}

struct SweepRow {
  int n = 0;
  std::size_t states = 0;
  double p = 0.0;
  double alpha0 = 0.0;
  double absorbed_fraction = 0.0;
  double mean_jumps = 0.0;
  double ks = kNA, ks_p = kNA;
  double cf_sup = kNA;
  bool cf_within_ci = false;
  double ks_successive = kNA;  // two-sample distance to the previous n
  double strong_error = kNA, leakage = kNA;
  double condition = kNA;  // C5.S sup (measure) or C4 sup (Dirichlet)
  std::string condition_name;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  double noise_floor = 0.0;
  bool has_reference = false;
  bool ks_decreasing = false;          // outside the noise floor
  bool successive_decreasing = false;  // self-consistency when no reference
  std::vector<std::string> histograms;  // per-n histogram CSV
  std::vector<std::string> marginals;   // per-n marginal CSV
};

inline void write_sweep_header(std::ostream& os) {
  os << "n,states,p,alpha0_n,absorbed_fraction,mean_jumps,ks,ks_p,cf_sup,cf_within_ci,ks_successive,strong_error,leakage,"
        "condition,condition_value\n";
}

inline void write_sweep_row(std::ostream& os, const SweepRow& r) {
  auto num = [](double v) { return std::isnan(v) ? std::string() : fmt_double(v); };
  os << r.n << ',' << r.states << ',' << fmt_double(r.p) << ',' << fmt_double(r.alpha0) << ',' << fmt_double(r.absorbed_fraction)
     << ',' << fmt_double(r.mean_jumps) << ',' << num(r.ks) << ',' << num(r.ks_p) << ',' << num(r.cf_sup) << ','
     << (std::isnan(r.cf_sup) ? "" : (r.cf_within_ci ? "1" : "0")) << ',' << num(r.ks_successive) << ','
     << num(r.strong_error) << ',' << num(r.leakage) << ',' << r.condition_name << ',' << num(r.condition) << "\n";
}

/// One pipeline run per n: conductances, ensemble, marginal distances and the
/// optional semigroup and condition columns. Rows stream to csv as they
/// finish, so a failure leaves a partial table.
inline SweepResult convergence_sweep(const RunConfig& cfg, std::ostream* csv = nullptr) {
  cfg.validate();
  SweepResult out;
  out.noise_floor = ks_noise_floor(cfg.simulate.N_paths);
  if (csv) write_sweep_header(*csv);
  std::vector<double> prev;
  for (int n : cfg.n_list) {
    const ConductanceMatrix C = build_from_config(cfg, n);
    SweepRow row;
    row.n = n;
    row.states = C.size();
    row.p = C.p();
    row.alpha0 = alpha0_n(C);
    const EnsembleSummary s = simulate_ensemble(C, cfg.simulation());
    row.absorbed_fraction = s.absorbed_fraction;
    row.mean_jumps = s.mean_jumps;
    const MarginalDiagnostics md = marginal_diagnostics(cfg, s);
    out.has_reference = md.has_reference;
    if (md.has_reference) {
      row.ks = md.ks.statistic;
      row.ks_p = md.ks.p_value;
      row.cf_sup = md.cf.sup_discrepancy;
      row.cf_within_ci = md.cf.all_within_ci();
    }
    if (!prev.empty()) row.ks_successive = ks_two_sample(prev, md.sample);
    prev = md.sample;
    if (cfg.sweep.semigroup) {
      const SemigroupError e = configured_semigroup_error(cfg, C);
      row.strong_error = e.error;
      row.leakage = e.leakage;
    }
    if (cfg.sweep.conditions) {
      if (cfg.scheme == Scheme::SemimartingaleMeasure) {
        const auto reps = check_semimartingale_route(make_field(cfg.field, cfg.d), C, TruncationFunction{cfg.truncation_radius},
                                                     cfg.check.R, cfg.probe_points(), cfg.quadrature);
        for (const auto& r : reps)
          if (r.id == "C5.S") row.condition = r.value("sup_truncated_second_moment_discrepancy");
        row.condition_name = "C5.S";
      } else {
        const auto reps = check_C2_C3_C4(make_kernel(cfg.kernel, cfg.d), C, {cfg.check.rho}, cfg.probe_points(), cfg.quadrature);
        row.condition = reps[2].value("sup_sum_min1_sq_Cs");
        row.condition_name = "C4";
      }
    }
    if (cfg.sweep.histograms) {
      std::ostringstream h;
      write_histogram_csv(h, s, cfg.simulate.histogram_half_width, cfg.simulate.histogram_bins);
      out.histograms.push_back(h.str());
    }
    std::ostringstream m;
    write_marginals_csv(m, s);
    out.marginals.push_back(m.str());
    out.rows.push_back(row);
    if (csv) {
      write_sweep_row(*csv, row);
      csv->flush();
    }
  }
  std::vector<double> ks, succ;
  for (const auto& r : out.rows) {
    ks.push_back(r.ks);
    if (!std::isnan(r.ks_successive)) succ.push_back(r.ks_successive);
  }
  out.ks_decreasing = out.has_reference && decreasing_outside_noise(ks, out.noise_floor);
  out.successive_decreasing = decreasing_outside_noise(succ, out.noise_floor);
  return out;
}

}  // namespace jumpchain
