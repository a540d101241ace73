#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "error.hpp"
#include "format.hpp"
#include "kernel.hpp"
#include "lattice.hpp"
#include "parallel.hpp"
#include "quadrature.hpp"

namespace jumpchain {

enum class Scheme { DirichletAverage, SemimartingaleMeasure };

inline std::string scheme_name(Scheme s) {
  return s == Scheme::DirichletAverage ? "dirichlet" : "measure";
}

inline Scheme parse_scheme(const std::string& s) {
  if (s == "dirichlet") return Scheme::DirichletAverage;
  if (s == "measure") return Scheme::SemimartingaleMeasure;
  throw ConfigError("scheme must be 'dirichlet' or 'measure', got '" + s + "'");
}

/// Pairs with |a - b| <= cutoff_radius are never connected.
inline double cutoff_radius(Scheme s, int d, int n, double p) {
  const double c = s == Scheme::DirichletAverage ? 2.0 : 1.0;
  return c * std::sqrt(static_cast<double>(d)) / std::pow(static_cast<double>(n), p);
}

namespace detail {

/// Squared cutoff in integer offset units: keep iff sum o_i^2 > this.
inline double cutoff2_int(Scheme s, int d, int n, double p) {
  const double r = cutoff_radius(s, d, n, p) * n;
  return r * r * (1.0 + 1e-12);
}

}  // namespace detail

struct RateSplit {
  double kept = 0.0;
  double lost = 0.0;
};

struct JumpDraw {
  std::ptrdiff_t target = -1;  // -1: the chain left the window
  bool exit_known = false;     // exit coordinates filled (stencil storage)
  std::vector<long> exit;      // integer coordinates of the exit state
};

/// Sparse nonnegative rates C(a, b) on a lattice window, plus the rate each
/// row loses to targets outside the window. Rows are stored either explicitly
/// (CSR, targets ascending) or, for translation-invariant sources, as one
/// shared stencil of offsets that every row applies.
class ConductanceMatrix {
 public:
  ConductanceMatrix() = default;
  ConductanceMatrix(LatticePtr lat, Scheme scheme, double p) : lat_(std::move(lat)), scheme_(scheme), p_(p) {}

  const Lattice& lattice() const { return *lat_; }
  const LatticePtr& lattice_ptr() const { return lat_; }
  Scheme scheme() const { return scheme_; }
  double p() const { return p_; }
  std::size_t size() const { return lat_->size(); }
  bool is_stencil() const { return stencil_; }

  /// Calls fn(target, rate) for each stored entry of the row in ascending target order.
  template <class Fn>
  void for_each_entry(std::size_t row, Fn&& fn) const {
    if (!stencil_) {
      for (std::size_t e = row_ptr_[row]; e < row_ptr_[row + 1]; ++e) fn(static_cast<std::size_t>(cols_[e]), vals_[e]);
      return;
    }
    const int d = lat_->dim();
    auto k = lat_->index_coords(row);
    if (d == 1) {
      const long kmax = lat_->kmax();
      const long base = k[0];
      for (std::size_t s = 0; s < st_rates_.size(); ++s) {
        const long t = base + st_offsets_[s];
        if (t < -kmax || t > kmax) continue;
        fn(static_cast<std::size_t>(t + kmax), st_rates_[s]);
      }
      return;
    }
    std::vector<long> t(static_cast<std::size_t>(d));
    for (std::size_t s = 0; s < st_rates_.size(); ++s) {
      for (int c = 0; c < d; ++c)
        t[static_cast<std::size_t>(c)] = k[static_cast<std::size_t>(c)] + st_offsets_[s * static_cast<std::size_t>(d) + static_cast<std::size_t>(c)];
      const auto j = lat_->find(std::span<const long>(t));
      if (j >= 0) fn(static_cast<std::size_t>(j), st_rates_[s]);
    }
  }

  /// C(a, b), zero when not stored.
  double rate(std::size_t a, std::size_t b) const {
    if (!stencil_) {
      auto first = cols_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[a]);
      auto last = cols_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[a + 1]);
      auto it = std::lower_bound(first, last, static_cast<std::uint32_t>(b));
      return (it != last && *it == b) ? vals_[static_cast<std::size_t>(it - cols_.begin())] : 0.0;
    }
    const int d = lat_->dim();
    auto ka = lat_->index_coords(a), kb = lat_->index_coords(b);
    std::vector<long> o(static_cast<std::size_t>(d));
    for (int c = 0; c < d; ++c) o[static_cast<std::size_t>(c)] = kb[static_cast<std::size_t>(c)] - ka[static_cast<std::size_t>(c)];
    const auto s = stencil_find(o);
    return s < 0 ? 0.0 : st_rates_[static_cast<std::size_t>(s)];
  }

  RateSplit total_rate(std::size_t row) const { return {kept_[row], lost_[row]}; }
  double kept(std::size_t row) const { return kept_[row]; }
  double lost(std::size_t row) const { return lost_[row]; }
  double pruned(std::size_t row) const { return pruned_.empty() ? 0.0 : pruned_[row]; }
  double max_total_rate() const {
    double m = 0.0;
    for (std::size_t i = 0; i < size(); ++i) m = std::max(m, kept_[i] + lost_[i]);
    return m;
  }
  std::size_t nnz() const {
    if (!stencil_) return cols_.size();
    std::size_t c = 0;
    for (std::size_t i = 0; i < size(); ++i) for_each_entry(i, [&](std::size_t, double) { ++c; });
    return c;
  }

  /// Draws the next state from row a using u in (0, 1): a jump target, or
  /// an exit from the window with probability lost/(kept + lost).
  JumpDraw sample_jump(std::size_t row, double u) const {
    JumpDraw out;
    if (!stencil_) {
      const double x = u * (kept_[row] + lost_[row]);
      if (x >= kept_[row]) return out;
      const auto first = cum_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[row]);
      const auto last = cum_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[row + 1]);
      auto it = std::upper_bound(first, last, x);
      if (it == last) --it;
      out.target = cols_[static_cast<std::size_t>(it - cum_.begin())];
      return out;
    }
    const double total = st_cum_.empty() ? 0.0 : st_cum_.back();
    const double x = u * (total + beyond_);
    if (x >= total) return out;
    auto it = std::upper_bound(st_cum_.begin(), st_cum_.end(), x);
    if (it == st_cum_.end()) --it;
    const std::size_t s = static_cast<std::size_t>(it - st_cum_.begin());
    const int d = lat_->dim();
    auto k = lat_->index_coords(row);
    std::vector<long> t(static_cast<std::size_t>(d));
    for (int c = 0; c < d; ++c) t[static_cast<std::size_t>(c)] = k[static_cast<std::size_t>(c)] + st_offsets_[s * static_cast<std::size_t>(d) + static_cast<std::size_t>(c)];
    out.target = lat_->find(std::span<const long>(t));
    if (out.target < 0) {
      out.exit_known = true;
      out.exit = std::move(t);
    }
    return out;
  }

  // Build diagnostics.
  std::size_t clamped_entries = 0;
  std::size_t nonconverged_entries = 0;

  // Stencil accessors (empty for explicit storage).
  const std::vector<long>& stencil_offsets() const { return st_offsets_; }
  const std::vector<double>& stencil_rates() const { return st_rates_; }
  double stencil_beyond() const { return beyond_; }

  /// Assembles explicit rows; entries per row are sorted by target.
  struct Triplet {
    std::size_t row;
    std::size_t col;
    double value;
  };
  static ConductanceMatrix from_triplets(LatticePtr lat, Scheme scheme, double p, std::vector<Triplet> triplets,
                                         std::vector<double> lost = {}, std::vector<double> pruned = {}) {
    ConductanceMatrix m(std::move(lat), scheme, p);
    const std::size_t M = m.lat_->size();
    std::sort(triplets.begin(), triplets.end(), [](const Triplet& x, const Triplet& y) {
      return x.row != y.row ? x.row < y.row : x.col < y.col;
    });
    m.row_ptr_.assign(M + 1, 0);
    for (std::size_t i = 0; i < triplets.size(); ++i) {
      const auto& t = triplets[i];
      if (t.row >= M || t.col >= M) throw ConfigError("triplet outside the lattice window");
      if (t.row == t.col) throw ConfigError("diagonal conductance must be zero");
      if (!(t.value >= 0.0) || !std::isfinite(t.value)) throw ConfigError("conductances must be finite and >= 0");
      if (i > 0 && triplets[i - 1].row == t.row && triplets[i - 1].col == t.col) throw ConfigError("duplicate triplet");
      if (t.value == 0.0) continue;
      ++m.row_ptr_[t.row + 1];
      m.cols_.push_back(static_cast<std::uint32_t>(t.col));
      m.vals_.push_back(t.value);
    }
    for (std::size_t i = 0; i < M; ++i) m.row_ptr_[i + 1] += m.row_ptr_[i];
    m.lost_ = lost.empty() ? std::vector<double>(M, 0.0) : std::move(lost);
    m.pruned_ = pruned.empty() ? std::vector<double>(M, 0.0) : std::move(pruned);
    if (m.lost_.size() != M || m.pruned_.size() != M) throw ConfigError("per-row ledger has wrong length");
    m.finalize_explicit();
    return m;
  }

  /// Shared-offset storage. offsets holds d integers per stencil entry.
  static ConductanceMatrix from_stencil(LatticePtr lat, Scheme scheme, double p, std::vector<long> offsets,
                                        std::vector<double> rates, double beyond, double pruned_mass = 0.0) {
    ConductanceMatrix m(std::move(lat), scheme, p);
    const std::size_t d = static_cast<std::size_t>(m.lat_->dim());
    if (offsets.size() != rates.size() * d) throw ConfigError("stencil offsets/rates length mismatch");
    // Lexicographic order of offsets.
    std::vector<std::size_t> order(rates.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
      return std::lexicographical_compare(offsets.begin() + static_cast<std::ptrdiff_t>(x * d), offsets.begin() + static_cast<std::ptrdiff_t>((x + 1) * d),
                                          offsets.begin() + static_cast<std::ptrdiff_t>(y * d), offsets.begin() + static_cast<std::ptrdiff_t>((y + 1) * d));
    });
    for (std::size_t s : order) {
      bool zero = true;
      for (std::size_t c = 0; c < d; ++c) zero = zero && offsets[s * d + c] == 0;
      if (zero) throw ConfigError("stencil contains the zero offset");
      if (!(rates[s] >= 0.0) || !std::isfinite(rates[s])) throw ConfigError("stencil rates must be finite and >= 0");
      if (rates[s] == 0.0) continue;
      for (std::size_t c = 0; c < d; ++c) m.st_offsets_.push_back(offsets[s * d + c]);
      m.st_rates_.push_back(rates[s]);
    }
    m.stencil_ = true;
    m.beyond_ = beyond;
    m.pruned_.assign(m.lat_->size(), pruned_mass);
    m.finalize_stencil();
    return m;
  }

 private:
  std::ptrdiff_t stencil_find(const std::vector<long>& o) const {
    const std::size_t d = static_cast<std::size_t>(lat_->dim());
    std::size_t lo = 0, hi = st_rates_.size();
    while (lo < hi) {
      const std::size_t mid = (lo + hi) / 2;
      const auto b = st_offsets_.begin() + static_cast<std::ptrdiff_t>(mid * d);
      if (std::lexicographical_compare(b, b + static_cast<std::ptrdiff_t>(d), o.begin(), o.end())) lo = mid + 1;
      else hi = mid;
    }
    if (lo < st_rates_.size() && std::equal(o.begin(), o.end(), st_offsets_.begin() + static_cast<std::ptrdiff_t>(lo * d))) return static_cast<std::ptrdiff_t>(lo);
    return -1;
  }

  void finalize_explicit() {
    const std::size_t M = lat_->size();
    kept_.assign(M, 0.0);
    cum_.resize(vals_.size());
    for (std::size_t i = 0; i < M; ++i) {
      double s = 0.0;
      for (std::size_t e = row_ptr_[i]; e < row_ptr_[i + 1]; ++e) {
        s += vals_[e];
        cum_[e] = s;
      }
      kept_[i] = s;
    }
  }

  void finalize_stencil() {
    const std::size_t M = lat_->size();
    st_cum_.resize(st_rates_.size());
    double total = 0.0;
    for (std::size_t s = 0; s < st_rates_.size(); ++s) {
      total += st_rates_[s];
      st_cum_[s] = total;
    }
    kept_.assign(M, 0.0);
    lost_.assign(M, 0.0);
    if (lat_->dim() == 1) {
      // Offsets ascending: the in-window ones form one contiguous run.
      const long kmax = lat_->kmax();
      for (std::size_t i = 0; i < M; ++i) {
        const long k = static_cast<long>(i) - kmax;
        const auto lo = std::lower_bound(st_offsets_.begin(), st_offsets_.end(), -kmax - k);
        const auto hi = std::upper_bound(st_offsets_.begin(), st_offsets_.end(), kmax - k);
        const std::size_t a = static_cast<std::size_t>(lo - st_offsets_.begin());
        const std::size_t b = static_cast<std::size_t>(hi - st_offsets_.begin());
        double s = 0.0;
        for (std::size_t e = a; e < b; ++e) s += st_rates_[e];
        kept_[i] = s;
      }
    } else {
      parallel_for(M, [&](std::size_t i) {
        double s = 0.0;
        for_each_entry(i, [&](std::size_t, double r) { s += r; });
        kept_[i] = s;
      });
    }
    for (std::size_t i = 0; i < M; ++i) lost_[i] = std::max(0.0, total - kept_[i]) + beyond_;
  }

  LatticePtr lat_;
  Scheme scheme_ = Scheme::DirichletAverage;
  double p_ = 1.0;
  bool stencil_ = false;
  // explicit storage
  std::vector<std::size_t> row_ptr_;
  std::vector<std::uint32_t> cols_;
  std::vector<double> vals_;
  std::vector<double> cum_;
  // stencil storage
  std::vector<long> st_offsets_;
  std::vector<double> st_rates_;
  std::vector<double> st_cum_;
  double beyond_ = 0.0;
  // per row
  std::vector<double> kept_;
  std::vector<double> lost_;
  std::vector<double> pruned_;

  friend void write_matrix(const ConductanceMatrix&, std::ostream&);
};

namespace detail {

constexpr double kPruneRatio = 1e-15;

struct EntryResult {
  double value = 0.0;
  bool converged = true;
};

/// Integral over the box of half-width 1/n around o/n of kappa(z) times
/// n^d prod(1/n - |z_i - o_i/n|) (tent weight, scheme (1.5) for translation
/// invariant kernels) or times 1 (cell mass, measure scheme).
template <class Kappa>
EntryResult stencil_integral(Kappa& kappa, std::span<const long> o, int n, bool tent, std::span<const double> breaks,
                             const QuadratureSpec& quad) {
  const int d = static_cast<int>(o.size());
  const double h = 1.0 / n;
  EntryResult res;
  if (d == 1) {
    const double c = static_cast<double>(o[0]) * h;
    std::vector<double> brk;
    for (double b : breaks) {
      brk.push_back(b);
      brk.push_back(-b);
    }
    std::vector<double> z(1);
    if (tent) {
      auto f = [&](double x) {
        z[0] = x;
        return kappa(std::span<const double>(z)) * n * (h - std::abs(x - c));
      };
      res.value = integrate_piecewise(f, c - h, c, brk, quad.rel_tol * 1e-2) + integrate_piecewise(f, c, c + h, brk, quad.rel_tol * 1e-2);
    } else {
      auto f = [&](double x) {
        z[0] = x;
        return kappa(std::span<const double>(z));
      };
      res.value = integrate_piecewise(f, c - 0.5 * h, c + 0.5 * h, brk, quad.rel_tol * 1e-2);
    }
    return res;
  }
  const int qq = std::max(quad.q, 4);
  std::vector<double> lo(static_cast<std::size_t>(d)), hi(lo.size());
  if (tent) {
    const double nd = std::pow(static_cast<double>(n), d);
    auto f = [&](std::span<const double> z) {
      double w = nd;
      for (int c = 0; c < d; ++c) w *= h - std::abs(z[static_cast<std::size_t>(c)] - static_cast<double>(o[static_cast<std::size_t>(c)]) * h);
      return w * kappa(z);
    };
    const std::size_t parts = std::size_t{1} << d;
    for (std::size_t m = 0; m < parts; ++m) {
      for (int c = 0; c < d; ++c) {
        const double ctr = static_cast<double>(o[static_cast<std::size_t>(c)]) * h;
        lo[static_cast<std::size_t>(c)] = ((m >> c) & 1U) ? ctr : ctr - h;
        hi[static_cast<std::size_t>(c)] = lo[static_cast<std::size_t>(c)] + h;
      }
      const BoxResult b = adaptive_box(f, lo, hi, qq, 1e-9, 0.0, quad.budget);
      res.value += b.value;
      res.converged = res.converged && b.converged;
    }
  } else {
    for (int c = 0; c < d; ++c) {
      const double ctr = static_cast<double>(o[static_cast<std::size_t>(c)]) * h;
      lo[static_cast<std::size_t>(c)] = ctr - 0.5 * h;
      hi[static_cast<std::size_t>(c)] = ctr + 0.5 * h;
    }
    const BoxResult b = adaptive_box(kappa, lo, hi, qq, 1e-9, 0.0, quad.budget);
    res.value = b.value;
    res.converged = b.converged;
  }
  return res;
}

template <class Kappa, class TailAt>
ConductanceMatrix build_stencil(Kappa kappa, TailAt tail_at, LatticePtr lat, Scheme scheme, double p,
                                std::span<const double> breaks, const QuadratureSpec& quad) {
  const int d = lat->dim();
  const int n = lat->n();
  const long reach = 2 * lat->kmax();
  const double cut2 = cutoff2_int(scheme, d, n, p);
  // Enumerate offsets in [-reach, reach]^d within the ball of radius reach, beyond the cutoff.
  std::vector<long> offsets;
  {
    std::vector<long> o(static_cast<std::size_t>(d), -reach);
    const std::int64_t lim = static_cast<std::int64_t>(reach) * reach;
    for (;;) {
      std::int64_t s2 = 0;
      for (long v : o) s2 += static_cast<std::int64_t>(v) * v;
      if (s2 <= lim && static_cast<double>(s2) > cut2) offsets.insert(offsets.end(), o.begin(), o.end());
      int c = d - 1;
      while (c >= 0 && ++o[static_cast<std::size_t>(c)] > reach) o[static_cast<std::size_t>(c--)] = -reach;
      if (c < 0) break;
    }
  }
  const std::size_t count = offsets.size() / static_cast<std::size_t>(d);
  std::vector<double> rates(count, 0.0);
  std::atomic<std::size_t> clamped{0}, nonconv{0};
  const bool tent = scheme == Scheme::DirichletAverage;
  parallel_for(count, [&](std::size_t s) {
    auto kap = kappa;
    const EntryResult r = stencil_integral(kap, std::span<const long>(offsets.data() + s * static_cast<std::size_t>(d), static_cast<std::size_t>(d)), n, tent, breaks, quad);
    if (!std::isfinite(r.value)) throw NumericError("non-finite conductance in stencil");
    double v = r.value;
    if (v < 0.0) {
      ++clamped;
      v = 0.0;
    }
    if (!r.converged) ++nonconv;
    rates[s] = v;
  });
  double rmax = 0.0;
  for (double v : rates) rmax = std::max(rmax, v);
  double pruned = 0.0;
  for (double& v : rates)
    if (v < kPruneRatio * rmax) {
      pruned += v;
      v = 0.0;
    }
  double beyond = 0.0;
  if (d == 1 && tent) {
    // Offsets past the reach: their tents sum to 1/n beyond (reach+1)/n and
    // ramp up linearly on [reach/n, (reach+1)/n].
    const double r0 = static_cast<double>(reach) / n, r1 = (static_cast<double>(reach) + 1.0) / n;
    std::vector<double> z(1);
    auto ramp = [&](double x) {
      double s = 0.0;
      z[0] = x;
      s += kappa(std::span<const double>(z));
      z[0] = -x;
      s += kappa(std::span<const double>(z));
      return s * n * (x - r0);
    };
    beyond = tail_at(r1) + integrate_adaptive(ramp, r0, r1, quad.rel_tol * 1e-2);
  } else {
    beyond = tail_at((static_cast<double>(reach) + 0.5) / n);
  }
  ConductanceMatrix m = ConductanceMatrix::from_stencil(lat, scheme, p, std::move(offsets), std::move(rates), beyond, pruned);
  m.clamped_entries = clamped.load();
  m.nonconverged_entries = nonconv.load();
  return m;
}

/// Row-by-row assembly for state-dependent sources. entry(a, b) returns the
/// quadrature value, lost(a, o_min) the rate to targets outside the window.
template <class Entry, class Lost>
ConductanceMatrix build_explicit(Entry entry, Lost lost_fn, LatticePtr lat, Scheme scheme, double p) {
  const int d = lat->dim();
  const std::size_t M = lat->size();
  const double cut2 = cutoff2_int(scheme, d, lat->n(), p);
  std::vector<std::vector<ConductanceMatrix::Triplet>> rows(M);
  std::vector<double> lost(M, 0.0), pruned(M, 0.0);
  std::atomic<std::size_t> clamped{0}, nonconv{0};
  parallel_for(M, [&](std::size_t a) {
    auto ka = lat->index_coords(a);
    auto& row = rows[a];
    for (std::size_t b = 0; b < M; ++b) {
      if (b == a) continue;
      auto kb = lat->index_coords(b);
      double s2 = 0.0;
      for (int c = 0; c < d; ++c) {
        const double o = kb[static_cast<std::size_t>(c)] - ka[static_cast<std::size_t>(c)];
        s2 += o * o;
      }
      if (s2 <= cut2) continue;
      EntryResult r = entry(a, b);
      if (!std::isfinite(r.value)) throw NumericError("non-finite conductance entry");
      if (r.value < 0.0) {
        ++clamped;
        r.value = 0.0;
      }
      if (!r.converged) ++nonconv;
      row.push_back({a, b, r.value});
    }
    double rmax = 0.0;
    for (const auto& t : row) rmax = std::max(rmax, t.value);
    std::vector<ConductanceMatrix::Triplet> kept;
    for (const auto& t : row) {
      if (t.value < kPruneRatio * rmax) pruned[a] += t.value;
      else kept.push_back(t);
    }
    row.swap(kept);
    lost[a] = lost_fn(a);
  });
  std::vector<ConductanceMatrix::Triplet> all;
  for (auto& r : rows) all.insert(all.end(), r.begin(), r.end());
  ConductanceMatrix m = ConductanceMatrix::from_triplets(lat, scheme, p, std::move(all), std::move(lost), std::move(pruned));
  m.clamped_entries = clamped.load();
  m.nonconverged_entries = nonconv.load();
  return m;
}

/// Smallest kept |offset| along one axis (d = 1 rows).
inline long min_kept_offset(double cut2) {
  long o = 1;
  while (static_cast<double>(o) * o <= cut2) ++o;
  return o;
}

template <class TailFnT>
double radial_tail(int d, double r, TailFnT&& density_at, const QuadratureSpec& quad, std::span<const double> breaks) {
  return radial_integral(d, r, std::numeric_limits<double>::infinity(), density_at, quad, breaks).value;
}

}  // namespace detail

struct BuildOptions {
  bool allow_stencil = true;  // use shared offset storage for translation-invariant sources
};

/// C(a, b) = n^d * integral over cell(a) x cell(b) of k, for |a - b| > 2 sqrt(d)/n^p.
inline ConductanceMatrix build_dirichlet_conductances(const JumpKernel& k, LatticePtr lat, double p,
                                                      const QuadratureSpec& quad, BuildOptions opt = {}) {
  detail::require(p > 0.0 && p <= 1.0, "p must be in (0, 1]");
  detail::require(k.dim == lat->dim(), "kernel and lattice dimensions differ");
  quad.validate();
  const int d = lat->dim();
  const int n = lat->n();
  if (k.translation_invariant && opt.allow_stencil) {
    const std::vector<double> origin(static_cast<std::size_t>(d), 0.0);
    auto kappa = [&k, origin](std::span<const double> z) { return k(origin, z); };
    auto tail_at = [&](double r) {
      if (k.has_tail()) return k.tail(origin, r);
      return detail::radial_tail(d, r, kappa, quad, k.radial_breaks);
    };
    return detail::build_stencil(kappa, tail_at, lat, Scheme::DirichletAverage, p, k.radial_breaks, quad);
  }
  const double h = 0.5 / n;
  const double nd = std::pow(static_cast<double>(n), d);
  const int qq = std::max(quad.q, 4);
  auto entry = [&](std::size_t a, std::size_t b) {
    std::vector<double> lo(static_cast<std::size_t>(2 * d)), hi(lo.size());
    auto ka = lat->index_coords(a), kb = lat->index_coords(b);
    for (int c = 0; c < d; ++c) {
      lo[static_cast<std::size_t>(c)] = static_cast<double>(ka[static_cast<std::size_t>(c)]) / n - h;
      lo[static_cast<std::size_t>(d + c)] = static_cast<double>(kb[static_cast<std::size_t>(c)]) / n - h;
      hi[static_cast<std::size_t>(c)] = lo[static_cast<std::size_t>(c)] + 2 * h;
      hi[static_cast<std::size_t>(d + c)] = lo[static_cast<std::size_t>(d + c)] + 2 * h;
    }
    auto f = [&](std::span<const double> xy) { return k(xy.subspan(0, static_cast<std::size_t>(d)), xy.subspan(static_cast<std::size_t>(d))); };
    const BoxResult r = adaptive_box(f, lo, hi, qq, quad.rel_tol, 0.0, quad.budget);
    return detail::EntryResult{nd * r.value, r.converged};
  };
  const double cut2 = detail::cutoff2_int(Scheme::DirichletAverage, d, n, p);
  const long omin = detail::min_kept_offset(cut2);
  auto lost = [&](std::size_t a) {
    auto ka = lat->index_coords(a);
    if (d == 1) {
      // Exact: targets y in cells with index > K (and >= k_a + omin), likewise below.
      const long K = lat->kmax();
      const double y_hi = (static_cast<double>(std::max(K + 1, ka[0] + omin)) - 0.5) / n;
      const double y_lo = (static_cast<double>(std::min(-K - 1, ka[0] - omin)) + 0.5) / n;
      std::vector<double> x(1), y(1);
      auto outer = [&](double xv) {
        x[0] = xv;
        auto up = [&](double yv) { y[0] = yv; return k(x, y); };
        return integrate_adaptive(up, y_hi, std::numeric_limits<double>::infinity(), quad.rel_tol * 1e-2) +
               integrate_adaptive(up, -std::numeric_limits<double>::infinity(), y_lo, quad.rel_tol * 1e-2);
      };
      const double ac = static_cast<double>(ka[0]) / n;
      return n * integrate_gl(outer, ac - h, ac + h, 8);
    }
    // Ball estimate: tail beyond the distance from a to the window edge.
    std::vector<double> x = lat->point(a);
    const double r = std::max(lat->window_radius() + h - norm(x), cutoff_radius(Scheme::DirichletAverage, d, n, p));
    if (k.has_tail()) return k.tail(x, r);
    std::vector<double> y(x.size());
    auto dens = [&](std::span<const double> z) {
      for (std::size_t c = 0; c < y.size(); ++c) y[c] = x[c] + z[c];
      return k(x, y);
    };
    return detail::radial_tail(d, r, dens, quad, k.radial_breaks);
  };
  return detail::build_explicit(entry, lost, lat, Scheme::DirichletAverage, p);
}

/// C(a, b) = nu(a, cell(b) - a), for |a - b| > sqrt(d)/n^p.
inline ConductanceMatrix build_measure_conductances(const LevyMeasureField& field, LatticePtr lat, double p,
                                                    const QuadratureSpec& quad, BuildOptions opt = {}) {
  detail::require(p > 0.0 && p <= 1.0, "p must be in (0, 1]");
  detail::require(field.dim == lat->dim(), "field and lattice dimensions differ");
  quad.validate();
  const int d = lat->dim();
  const int n = lat->n();
  if (field.translation_invariant && opt.allow_stencil) {
    const std::vector<double> origin(static_cast<std::size_t>(d), 0.0);
    auto kappa = [&field, origin](std::span<const double> z) { return field(origin, z); };
    auto tail_at = [&](double r) {
      if (field.has_tail()) return field.tail(origin, r);
      return detail::radial_tail(d, r, kappa, quad, field.radial_breaks);
    };
    return detail::build_stencil(kappa, tail_at, lat, Scheme::SemimartingaleMeasure, p, field.radial_breaks, quad);
  }
  const double h = 0.5 / n;
  const int qq = std::max(quad.q, 4);
  auto entry = [&](std::size_t a, std::size_t b) {
    std::vector<double> lo(static_cast<std::size_t>(d)), hi(lo.size());
    auto ka = lat->index_coords(a), kb = lat->index_coords(b);
    std::vector<double> x = lat->point(a);
    for (int c = 0; c < d; ++c) {
      const double off = static_cast<double>(kb[static_cast<std::size_t>(c)] - ka[static_cast<std::size_t>(c)]) / n;
      lo[static_cast<std::size_t>(c)] = off - h;
      hi[static_cast<std::size_t>(c)] = off + h;
    }
    auto f = [&](std::span<const double> y) { return field(x, y); };
    if (d == 1) {
      auto g = [&](double yv) { std::vector<double> y{yv}; return field(x, y); };
      std::vector<double> brk;
      for (double bk : field.radial_breaks) {
        brk.push_back(bk);
        brk.push_back(-bk);
      }
      return detail::EntryResult{integrate_piecewise(g, lo[0], hi[0], brk, quad.rel_tol * 1e-2), true};
    }
    const BoxResult r = adaptive_box(f, lo, hi, qq, quad.rel_tol, 0.0, quad.budget);
    return detail::EntryResult{r.value, r.converged};
  };
  const double cut2 = detail::cutoff2_int(Scheme::SemimartingaleMeasure, d, n, p);
  const long omin = detail::min_kept_offset(cut2);
  auto lost = [&](std::size_t a) {
    auto ka = lat->index_coords(a);
    std::vector<double> x = lat->point(a);
    if (d == 1) {
      const long K = lat->kmax();
      const double y_hi = (static_cast<double>(std::max(K + 1, ka[0] + omin)) - 0.5) / n - x[0];
      const double y_lo = (static_cast<double>(std::min(-K - 1, ka[0] - omin)) + 0.5) / n - x[0];
      std::vector<double> y(1);
      auto g = [&](double yv) { y[0] = yv; return field(x, y); };
      return integrate_adaptive(g, y_hi, std::numeric_limits<double>::infinity(), quad.rel_tol * 1e-2) +
             integrate_adaptive(g, -std::numeric_limits<double>::infinity(), y_lo, quad.rel_tol * 1e-2);
    }
    const double r = std::max(lat->window_radius() + h - norm(x), cutoff_radius(Scheme::SemimartingaleMeasure, d, n, p));
    if (field.has_tail()) return field.tail(x, r);
    auto dens = [&](std::span<const double> z) { return field(x, z); };
    return detail::radial_tail(d, r, dens, quad, field.radial_breaks);
  };
  return detail::build_explicit(entry, lost, lat, Scheme::SemimartingaleMeasure, p);
}

inline RateSplit total_rate(const ConductanceMatrix& C, std::size_t a) { return C.total_rate(a); }

/// Symmetric and antisymmetric parts on the union sparsity pattern (both
/// endpoints in the window).
struct SplitMatrix {
  LatticePtr lattice;
  std::vector<std::size_t> row_ptr;
  std::vector<std::uint32_t> cols;
  std::vector<double> sym;   // (C(a,b) + C(b,a)) / 2
  std::vector<double> anti;  // (C(a,b) - C(b,a)) / 2

  std::size_t size() const { return row_ptr.empty() ? 0 : row_ptr.size() - 1; }
};

inline SplitMatrix split_symmetric(const ConductanceMatrix& C) {
  const std::size_t M = C.size();
  std::vector<std::vector<std::pair<std::uint32_t, double>>> fwd(M), bwd(M);
  for (std::size_t a = 0; a < M; ++a)
    C.for_each_entry(a, [&](std::size_t b, double r) {
      fwd[a].push_back({static_cast<std::uint32_t>(b), r});
      bwd[b].push_back({static_cast<std::uint32_t>(a), r});
    });
  SplitMatrix S;
  S.lattice = C.lattice_ptr();
  S.row_ptr.assign(M + 1, 0);
  for (std::size_t a = 0; a < M; ++a) {
    // fwd[a] sorted by construction; bwd[a] sorted since rows were visited in order.
    std::size_t i = 0, j = 0;
    const auto& F = fwd[a];
    const auto& B = bwd[a];
    while (i < F.size() || j < B.size()) {
      std::uint32_t col;
      double cab = 0.0, cba = 0.0;
      if (j == B.size() || (i < F.size() && F[i].first < B[j].first)) {
        col = F[i].first;
        cab = F[i++].second;
      } else if (i == F.size() || B[j].first < F[i].first) {
        col = B[j].first;
        cba = B[j++].second;
      } else {
        col = F[i].first;
        cab = F[i++].second;
        cba = B[j++].second;
      }
      S.cols.push_back(col);
      S.sym.push_back(0.5 * (cab + cba));
      S.anti.push_back(0.5 * (cab - cba));
    }
    S.row_ptr[a + 1] = S.cols.size();
  }
  return S;
}

// ---------------------------------------------------------------------------
// Serialization.
//
// Text format:
//   jumpchain-conductances 1
//   n <n>
//   d <d>
//   p <p>
//   scheme dirichlet|measure
//   R_w <radius>
//   storage explicit|stencil
//   explicit: "rows <M>" then per row "row <i> <lost> <pruned> <count>" and
//             <count> lines "<target> <rate>"
//   stencil:  "beyond <rate>", "pruned <mass>", "offsets <S>" then S lines
//             "<o_1> ... <o_d> <rate>"

inline void write_matrix(const ConductanceMatrix& C, std::ostream& os) {
  const Lattice& L = C.lattice();
  os << "jumpchain-conductances 1\n"
     << "n " << L.n() << "\n"
     << "d " << L.dim() << "\n"
     << "p " << fmt_double(C.p()) << "\n"
     << "scheme " << scheme_name(C.scheme()) << "\n"
     << "R_w " << fmt_double(L.window_radius()) << "\n";
  if (C.is_stencil()) {
    os << "storage stencil\n";
    os << "beyond " << fmt_double(C.stencil_beyond()) << "\n";
    os << "pruned " << fmt_double(C.pruned(0)) << "\n";
    const auto& off = C.stencil_offsets();
    const auto& rates = C.stencil_rates();
    os << "offsets " << rates.size() << "\n";
    const std::size_t d = static_cast<std::size_t>(L.dim());
    for (std::size_t s = 0; s < rates.size(); ++s) {
      for (std::size_t c = 0; c < d; ++c) os << off[s * d + c] << ' ';
      os << fmt_double(rates[s]) << "\n";
    }
    return;
  }
  os << "storage explicit\n";
  os << "rows " << C.size() << "\n";
  for (std::size_t a = 0; a < C.size(); ++a) {
    std::size_t cnt = C.row_ptr_[a + 1] - C.row_ptr_[a];
    os << "row " << a << ' ' << fmt_double(C.lost(a)) << ' ' << fmt_double(C.pruned(a)) << ' ' << cnt << "\n";
    C.for_each_entry(a, [&](std::size_t b, double r) { os << b << ' ' << fmt_double(r) << "\n"; });
  }
}

inline ConductanceMatrix read_matrix(std::istream& is) {
  auto fail = [](const std::string& what) -> IoError { return IoError("conductance file: " + what); };
  std::string key;
  int version = 0;
  if (!(is >> key >> version) || key != "jumpchain-conductances" || version != 1) throw fail("bad magic line");
  auto expect = [&](const char* k) {
    std::string got;
    if (!(is >> got) || got != k) throw fail(std::string("expected '") + k + "'");
  };
  auto read_d = [&]() {
    std::string s;
    if (!(is >> s)) throw fail("truncated file");
    try {
      return parse_double(s);
    } catch (const std::exception&) {
      throw fail("bad number '" + s + "'");
    }
  };
  int n = 0, d = 0;
  expect("n");
  if (!(is >> n)) throw fail("bad n");
  expect("d");
  if (!(is >> d)) throw fail("bad d");
  expect("p");
  const double p = read_d();
  expect("scheme");
  std::string sch;
  is >> sch;
  Scheme scheme;
  try {
    scheme = parse_scheme(sch);
  } catch (const ConfigError&) {
    throw fail("bad scheme");
  }
  expect("R_w");
  const double rw = read_d();
  expect("storage");
  std::string storage;
  is >> storage;
  LatticePtr lat;
  try {
    lat = make_lattice(n, d, rw);
  } catch (const ConfigError& e) {
    throw fail(e.what());
  }
  if (storage == "stencil") {
    expect("beyond");
    const double beyond = read_d();
    expect("pruned");
    const double pruned = read_d();
    expect("offsets");
    std::size_t S = 0;
    if (!(is >> S)) throw fail("bad offset count");
    std::vector<long> off;
    std::vector<double> rates;
    for (std::size_t s = 0; s < S; ++s) {
      for (int c = 0; c < d; ++c) {
        long v;
        if (!(is >> v)) throw fail("truncated stencil");
        off.push_back(v);
      }
      rates.push_back(read_d());
    }
    return ConductanceMatrix::from_stencil(lat, scheme, p, std::move(off), std::move(rates), beyond, pruned);
  }
  if (storage != "explicit") throw fail("unknown storage '" + storage + "'");
  expect("rows");
  std::size_t M = 0;
  if (!(is >> M) || M != lat->size()) throw fail("row count does not match the window");
  std::vector<ConductanceMatrix::Triplet> trip;
  std::vector<double> lost(M), pruned(M);
  for (std::size_t a = 0; a < M; ++a) {
    expect("row");
    std::size_t idx = 0, cnt = 0;
    if (!(is >> idx) || idx != a) throw fail("rows out of order");
    lost[a] = read_d();
    pruned[a] = read_d();
    if (!(is >> cnt)) throw fail("bad entry count");
    for (std::size_t e = 0; e < cnt; ++e) {
      std::size_t b;
      if (!(is >> b)) throw fail("truncated row");
      trip.push_back({a, b, read_d()});
    }
  }
  try {
    return ConductanceMatrix::from_triplets(lat, scheme, p, std::move(trip), std::move(lost), std::move(pruned));
  } catch (const ConfigError& e) {
    throw fail(e.what());
  }
}

inline void save_matrix(const ConductanceMatrix& C, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path);
  write_matrix(C, os);
  if (!os) throw IoError("write failed: " + path);
}

inline ConductanceMatrix load_matrix(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open matrix file " + path);
  return read_matrix(is);
}

/// CSV triplets a_1..a_d, b_1..b_d, value (coordinates, not indices).
inline void write_matrix_csv(const ConductanceMatrix& C, std::ostream& os) {
  const Lattice& L = C.lattice();
  const int d = L.dim();
  for (int c = 1; c <= d; ++c) os << "a" << c << ",";
  for (int c = 1; c <= d; ++c) os << "b" << c << ",";
  os << "value\n";
  for (std::size_t a = 0; a < C.size(); ++a) {
    const auto pa = L.point(a);
    C.for_each_entry(a, [&](std::size_t b, double r) {
      const auto pb = L.point(b);
      for (double v : pa) os << fmt_double(v) << ',';
      for (double v : pb) os << fmt_double(v) << ',';
      os << fmt_double(r) << "\n";
    });
  }
}

}  // namespace jumpchain
