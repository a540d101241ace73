#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/poisson.hpp>

#include "error.hpp"

namespace jumpchain {

inline constexpr double kZ99 = 2.5758293035489004;  // two-sided 99% normal quantile

struct CFReport {
  std::vector<double> xi;  // d = 1 frequencies (points along the first axis for d > 1)
  std::vector<std::complex<double>> cf;
  std::vector<double> half_re, half_im;  // CI half-widths of the real and imaginary parts
  std::vector<std::complex<double>> target;
  double sup_discrepancy = std::numeric_limits<double>::quiet_NaN();
  std::size_t n = 0;

  /// Attaches a target and computes the sup discrepancy.
  void set_target(const std::function<std::complex<double>(double)>& phi) {
    target.resize(xi.size());
    sup_discrepancy = 0.0;
    for (std::size_t i = 0; i < xi.size(); ++i) {
      target[i] = phi(xi[i]);
      sup_discrepancy = std::max(sup_discrepancy, std::abs(cf[i] - target[i]));
    }
  }
  bool within_ci(std::size_t i) const {
    return std::abs(cf[i].real() - target[i].real()) <= half_re[i] &&
           std::abs(cf[i].imag() - target[i].imag()) <= half_im[i];
  }
  bool all_within_ci() const {
    for (std::size_t i = 0; i < xi.size(); ++i)
      if (!within_ci(i)) return false;
    return true;
  }
};

/// (1/N) sum_j exp(i xi X_j) with 99% normal-approximation intervals. NaN
/// samples (paths that left to an unknown place) contribute 0, the limit of the
/// summand as |X| grows in the averaged sense.
inline CFReport empirical_cf(const std::vector<double>& sample, const std::vector<double>& xi_grid, double z = kZ99) {
  detail::require(!sample.empty(), "empirical CF needs a nonempty sample");
  CFReport r;
  r.xi = xi_grid;
  r.n = sample.size();
  const double N = static_cast<double>(sample.size());
  for (double xi : xi_grid) {
    double sc = 0.0, ss = 0.0, sc2 = 0.0, ss2 = 0.0;
    for (double x : sample) {
      if (std::isnan(x)) continue;
      const double c = std::cos(xi * x), s = std::sin(xi * x);
      sc += c;
      ss += s;
      sc2 += c * c;
      ss2 += s * s;
    }
    const double mc = sc / N, ms = ss / N;
    const double vc = std::max(0.0, sc2 / N - mc * mc), vs = std::max(0.0, ss2 / N - ms * ms);
    r.cf.emplace_back(mc, ms);
    const double corr = N > 1 ? N / (N - 1) : 1.0;
    r.half_re.push_back(z * std::sqrt(vc * corr / N));
    r.half_im.push_back(z * std::sqrt(vs * corr / N));
  }
  return r;
}

/// exp(-t |xi|) shifted by a location: the Cauchy(t) characteristic function.
inline std::function<std::complex<double>(double)> cauchy_cf(double t, double location = 0.0) {
  return [t, location](double xi) { return std::exp(std::complex<double>(-t * std::abs(xi), xi * location)); };
}

struct KSResult {
  double statistic = 0.0;
  double p_value = 1.0;
  std::size_t n = 0;
  bool pass = true;  // statistic below the threshold given to the caller
};

/// Kolmogorov limit law Q(lambda) = 2 sum (-1)^{k-1} exp(-2 k^2 lambda^2).
inline double kolmogorov_q(double lambda) {
  if (lambda < 0.2) return 1.0;
  double s = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    s += (k % 2 ? 1.0 : -1.0) * term;
    if (term < 1e-18) break;
  }
  return std::clamp(2.0 * s, 0.0, 1.0);
}

/// One-sample p-value with the small-sample correction of Stephens.
inline double ks_p_value(double D, std::size_t n) {
  const double sn = std::sqrt(static_cast<double>(n));
  return kolmogorov_q((sn + 0.12 + 0.11 / sn) * D);
}

/// sup_x |F_N(x) - F(x)|. NaN samples are placed at -inf and +inf alternately.
inline KSResult ks_statistic(std::vector<double> sample, const std::function<double(double)>& cdf,
                             double threshold = std::numeric_limits<double>::infinity()) {
  detail::require(!sample.empty(), "KS test needs a nonempty sample");
  bool flip = false;
  for (double& x : sample)
    if (std::isnan(x)) {
      x = flip ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
      flip = !flip;
    }
  std::sort(sample.begin(), sample.end());
  const double N = static_cast<double>(sample.size());
  double D = 0.0;
  for (std::size_t i = 0; i < sample.size();) {
    // Ties share one jump of the empirical CDF.
    std::size_t j = i;
    while (j < sample.size() && sample[j] == sample[i]) ++j;
    const double F = cdf(sample[i]);
    D = std::max({D, std::abs(F - static_cast<double>(i) / N), std::abs(static_cast<double>(j) / N - F)});
    i = j;
  }
  KSResult r;
  r.statistic = D;
  r.n = sample.size();
  r.p_value = ks_p_value(D, r.n);
  r.pass = D < threshold;
  return r;
}

inline double cauchy_cdf(double x, double t, double location = 0.0) {
  if (std::isinf(x)) return x > 0 ? 1.0 : 0.0;
  return 0.5 + std::atan((x - location) / t) / std::numbers::pi;
}

inline KSResult ks_against_cauchy(const std::vector<double>& sample, double t, double location = 0.0,
                                  double threshold = std::numeric_limits<double>::infinity()) {
  detail::require(t > 0.0, "Cauchy scale must be > 0");
  return ks_statistic(sample, [t, location](double x) { return cauchy_cdf(x, t, location); }, threshold);
}

inline KSResult ks_against_exponential(const std::vector<double>& sample, double rate) {
  return ks_statistic(sample, [rate](double x) { return x <= 0.0 ? 0.0 : -std::expm1(-rate * x); });
}

/// Two-sample KS distance, used as a self-consistency distance between successive n.
inline double ks_two_sample(std::vector<double> a, std::vector<double> b) {
  detail::require(!a.empty() && !b.empty(), "two-sample KS needs nonempty samples");
  auto clean = [](std::vector<double>& v) {
    bool flip = false;
    for (double& x : v)
      if (std::isnan(x)) {
        x = flip ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
        flip = !flip;
      }
    std::sort(v.begin(), v.end());
  };
  clean(a);
  clean(b);
  std::size_t i = 0, j = 0;
  double D = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == x) ++i;
    while (j < b.size() && b[j] == x) ++j;
    D = std::max(D, std::abs(static_cast<double>(i) / a.size() - static_cast<double>(j) / b.size()));
  }
  return D;
}

struct ChiSquareResult {
  double statistic = 0.0;
  double p_value = 1.0;
  int dof = 0;
};

/// Pearson goodness of fit of integer counts against Poisson(mean). Bins with
/// expected count below min_expected are pooled into the two tails.
inline ChiSquareResult chi_square_poisson(const std::vector<std::size_t>& counts, double mean, double min_expected = 5.0) {
  detail::require(!counts.empty() && mean > 0.0, "chi-square needs counts and a positive mean");
  const double N = static_cast<double>(counts.size());
  const boost::math::poisson_distribution<double> P(mean);
  // Cells [0, lo], lo+1, ..., hi-1, [hi, inf).
  long lo = 0, hi = static_cast<long>(std::floor(mean));
  while (lo < hi && N * boost::math::cdf(P, static_cast<double>(lo)) < min_expected) ++lo;
  while (N * boost::math::cdf(boost::math::complement(P, static_cast<double>(hi))) >= min_expected) ++hi;
  if (hi <= lo) hi = lo + 1;
  std::vector<double> expected, observed;
  expected.push_back(N * boost::math::cdf(P, static_cast<double>(lo)));
  for (long k = lo + 1; k < hi; ++k) expected.push_back(N * boost::math::pdf(P, static_cast<double>(k)));
  expected.push_back(N * boost::math::cdf(boost::math::complement(P, static_cast<double>(hi - 1))));
  observed.assign(expected.size(), 0.0);
  for (std::size_t c : counts) {
    const long k = static_cast<long>(c);
    if (k <= lo) observed.front() += 1;
    else if (k >= hi) observed.back() += 1;
    else observed[static_cast<std::size_t>(k - lo)] += 1;
  }
  ChiSquareResult r;
  for (std::size_t i = 0; i < expected.size(); ++i) r.statistic += std::pow(observed[i] - expected[i], 2) / expected[i];
  r.dof = static_cast<int>(expected.size()) - 1;
  if (r.dof < 1) throw NumericError("chi-square test has no degrees of freedom");
  r.p_value = boost::math::cdf(boost::math::complement(boost::math::chi_squared_distribution<double>(r.dof), r.statistic));
  return r;
}

/// Noise floor of a KS distance at the 99% level: the asymptotic critical value over sqrt(N).
inline double ks_noise_floor(std::size_t n) { return 1.6276 / std::sqrt(static_cast<double>(n)); }

/// True when each successive value either decreases or already sits below the floor.
inline bool decreasing_outside_noise(const std::vector<double>& v, double floor) {
  for (std::size_t i = 1; i < v.size(); ++i)
    if (!(v[i] < v[i - 1] || v[i] <= floor)) return false;
  return true;
}

inline bool strictly_decreasing(const std::vector<double>& v) {
  for (std::size_t i = 1; i < v.size(); ++i)
    if (!(v[i] < v[i - 1])) return false;
  return true;
}

}  // namespace jumpchain
