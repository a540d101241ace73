#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "error.hpp"
#include "parallel.hpp"
#include "quadrature.hpp"

namespace jumpchain {

/// Integer part used by the rounding map; floor for every sign.
inline long lattice_floor(double v) { return static_cast<long>(std::floor(v)); }

/// Integer coordinates of [x]_n, i.e. floor(n x_i + 1/2).
inline std::vector<long> round_index(std::span<const double> x, int n) {
  std::vector<long> k(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) k[i] = lattice_floor(n * x[i] + 0.5);
  return k;
}

/// [x]_n = (floor(n x_1 + 1/2)/n, ...): the lattice point whose half-open cell contains x.
inline std::vector<double> round_to_lattice(std::span<const double> x, int n) {
  std::vector<double> a(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) a[i] = static_cast<double>(lattice_floor(n * x[i] + 0.5)) / n;
  return a;
}

/// Window {a in (1/n)Z^d : |a| <= R_w}, states in lexicographic order of
/// their integer coordinates (first coordinate slowest).
class Lattice {
 public:
  Lattice(int n, int dim, double window_radius) : n_(n), dim_(dim), radius_(window_radius) {
    detail::require(n >= 1, "lattice.n must be >= 1");
    detail::require(dim >= 1, "lattice.d must be >= 1");
    detail::require(window_radius >= 0.0 && std::isfinite(window_radius), "lattice.R_w must be finite and >= 0");
    const double kr = n * window_radius;
    kmax_ = static_cast<long>(std::floor(kr * (1.0 + 1e-12) + 1e-9));
    limit2_ = static_cast<std::int64_t>(std::floor(kr * kr * (1.0 + 1e-12) + 1e-9));
    const std::size_t side = static_cast<std::size_t>(2 * kmax_ + 1);
    std::size_t lines = 1;
    for (int i = 0; i + 1 < dim; ++i) lines *= side;
    line_start_.assign(lines, 0);
    line_half_.assign(lines, -1);
    std::vector<long> prefix(static_cast<std::size_t>(dim > 1 ? dim - 1 : 0), -kmax_);
    std::size_t count = 0;
    for (std::size_t line = 0; line < lines; ++line) {
      std::int64_t s2 = 0;
      for (long v : prefix) s2 += static_cast<std::int64_t>(v) * v;
      if (s2 <= limit2_) {
        long h = static_cast<long>(std::floor(std::sqrt(static_cast<double>(limit2_ - s2))));
        while (static_cast<std::int64_t>(h + 1) * (h + 1) + s2 <= limit2_) ++h;
        while (h >= 0 && static_cast<std::int64_t>(h) * h + s2 > limit2_) --h;
        line_half_[line] = h;
        line_start_[line] = count;
        for (long last = -h; last <= h; ++last) {
          for (long v : prefix) coords_.push_back(static_cast<int>(v));
          coords_.push_back(static_cast<int>(last));
          ++count;
        }
      }
      for (std::size_t i = prefix.size(); i-- > 0;) {
        if (++prefix[i] <= kmax_) break;
        prefix[i] = -kmax_;
      }
    }
    size_ = count;
  }

  int n() const { return n_; }
  int dim() const { return dim_; }
  double window_radius() const { return radius_; }
  double spacing() const { return 1.0 / n_; }
  double cell_volume() const { return std::pow(static_cast<double>(n_), -dim_); }
  std::size_t size() const { return size_; }
  long kmax() const { return kmax_; }

  std::span<const int> index_coords(std::size_t i) const {
    return {coords_.data() + i * static_cast<std::size_t>(dim_), static_cast<std::size_t>(dim_)};
  }

  std::vector<double> point(std::size_t i) const {
    std::vector<double> p(static_cast<std::size_t>(dim_));
    point_into(i, p);
    return p;
  }
  void point_into(std::size_t i, std::span<double> out) const {
    auto k = index_coords(i);
    for (int c = 0; c < dim_; ++c) out[static_cast<std::size_t>(c)] = static_cast<double>(k[static_cast<std::size_t>(c)]) / n_;
  }

  /// Index of the state with integer coordinates k, or -1 outside the window.
  template <class Int>
  std::ptrdiff_t find(std::span<const Int> k) const {
    std::size_t line = 0;
    for (int c = 0; c + 1 < dim_; ++c) {
      const long v = static_cast<long>(k[static_cast<std::size_t>(c)]);
      if (v < -kmax_ || v > kmax_) return -1;
      line = line * static_cast<std::size_t>(2 * kmax_ + 1) + static_cast<std::size_t>(v + kmax_);
    }
    const long h = line_half_[line];
    const long last = static_cast<long>(k[static_cast<std::size_t>(dim_ - 1)]);
    if (h < 0 || last < -h || last > h) return -1;
    return static_cast<std::ptrdiff_t>(line_start_[line] + static_cast<std::size_t>(last + h));
  }

  /// Index of the state whose cell contains x, or -1.
  std::ptrdiff_t locate(std::span<const double> x) const {
    const auto k = round_index(x, n_);
    return find(std::span<const long>(k));
  }

  bool same_as(const Lattice& o) const { return n_ == o.n_ && dim_ == o.dim_ && size_ == o.size_ && kmax_ == o.kmax_; }

 private:
  int n_;
  int dim_;
  double radius_;
  long kmax_ = 0;
  std::int64_t limit2_ = 0;
  std::size_t size_ = 0;
  std::vector<int> coords_;
  std::vector<std::size_t> line_start_;
  std::vector<long> line_half_;
};

using LatticePtr = std::shared_ptr<const Lattice>;

inline LatticePtr make_lattice(int n, int dim, double window_radius) {
  return std::make_shared<const Lattice>(n, dim, window_radius);
}

/// Real function on the window states.
struct LatticeFunction {
  LatticePtr lattice;
  std::vector<double> values;

  LatticeFunction() = default;
  explicit LatticeFunction(LatticePtr lat, double fill = 0.0) : lattice(std::move(lat)), values(lattice->size(), fill) {}
  LatticeFunction(LatticePtr lat, std::vector<double> v) : lattice(std::move(lat)), values(std::move(v)) {
    if (values.size() != lattice->size()) throw ConfigError("lattice function size does not match its lattice");
  }

  double operator[](std::size_t i) const { return values[i]; }
  double& operator[](std::size_t i) { return values[i]; }
  std::size_t size() const { return values.size(); }
};

namespace detail {

inline void require_same(const LatticeFunction& f, const LatticeFunction& g) {
  if (!f.lattice || !g.lattice || !(f.lattice == g.lattice || f.lattice->same_as(*g.lattice)))
    throw ConfigError("lattice functions live on different lattices");
}

inline void cell_box(const Lattice& lat, std::size_t i, std::vector<double>& lo, std::vector<double>& hi) {
  const double h = 0.5 / lat.n();
  auto k = lat.index_coords(i);
  for (int c = 0; c < lat.dim(); ++c) {
    const double a = static_cast<double>(k[static_cast<std::size_t>(c)]) / lat.n();
    lo[static_cast<std::size_t>(c)] = a - h;
    hi[static_cast<std::size_t>(c)] = a + h;
  }
}

}  // namespace detail

/// r_n f(a) = n^d times the integral of f over the cell of a (tensor Gauss, q nodes per axis).
template <class F>
LatticeFunction restrict_fn(F&& f, LatticePtr lat, int q = 3) {
  LatticeFunction out(lat);
  const double inv_vol = 1.0 / lat->cell_volume();
  parallel_for(lat->size(), [&](std::size_t i) {
    std::vector<double> lo(static_cast<std::size_t>(lat->dim())), hi(lo.size());
    detail::cell_box(*lat, i, lo, hi);
    const double v = tensor_box(f, lo, hi, q) * inv_vol;
    if (!std::isfinite(v)) throw NumericError("restriction: non-finite cell average");
    out.values[i] = v;
  });
  return out;
}

/// e_n f_n evaluated at x: f_n(a) for x in the cell of a, 0 outside the window.
inline double extend_at(const LatticeFunction& fn, std::span<const double> x) {
  const auto i = fn.lattice->locate(x);
  return i < 0 ? 0.0 : fn.values[static_cast<std::size_t>(i)];
}

inline std::function<double(std::span<const double>)> extend(LatticeFunction fn) {
  return [fn = std::move(fn)](std::span<const double> x) { return extend_at(fn, x); };
}

/// <f, g> = n^{-d} sum_a f(a) g(a).
inline double l2n_inner(const LatticeFunction& f, const LatticeFunction& g) {
  detail::require_same(f, g);
  double s = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) s += f.values[i] * g.values[i];
  return s * f.lattice->cell_volume();
}

inline double l2n_norm(const LatticeFunction& f) { return std::sqrt(l2n_inner(f, f)); }

namespace detail {

/// Integral of F(x) over the bounding box of the window, on a grid of boxes of
/// side 1/(2n) aligned with the cell faces. The pieces never straddle a face,
/// so piecewise-constant extensions are integrated exactly.
template <class F>
double integrate_window_box(const Lattice& lat, F&& fx, int q) {
  const int d = lat.dim();
  const long m = 2 * (2 * lat.kmax() + 1);
  const double side = 0.5 / lat.n();
  const double start = -(static_cast<double>(lat.kmax()) + 0.5) / lat.n();
  std::vector<long> idx(static_cast<std::size_t>(d), 0);
  std::vector<double> lo(static_cast<std::size_t>(d)), hi(lo.size());
  double sum = 0.0;
  for (;;) {
    for (int c = 0; c < d; ++c) {
      lo[static_cast<std::size_t>(c)] = start + side * static_cast<double>(idx[static_cast<std::size_t>(c)]);
      hi[static_cast<std::size_t>(c)] = lo[static_cast<std::size_t>(c)] + side;
    }
    sum += tensor_box(fx, lo, hi, q);
    int c = 0;
    while (c < d && ++idx[static_cast<std::size_t>(c)] == m) idx[static_cast<std::size_t>(c++)] = 0;
    if (c == d) break;
  }
  return sum;
}

}  // namespace detail

/// <f, e_n f_n> in L^2(R^d) for f supported in the window's bounding box.
template <class F>
double l2_inner_extension(F&& f, const LatticeFunction& fn, int q = 5) {
  auto prod = [&](std::span<const double> x) {
    const double e = extend_at(fn, x);
    return e == 0.0 ? 0.0 : f(x) * e;
  };
  return detail::integrate_window_box(*fn.lattice, prod, q);
}

/// ||e_n f_n||_{L^2}^2 by quadrature of the extension.
inline double l2_norm2_extension(const LatticeFunction& fn, int q = 2) {
  auto sq = [&](std::span<const double> x) {
    const double e = extend_at(fn, x);
    return e * e;
  };
  return detail::integrate_window_box(*fn.lattice, sq, q);
}

struct StrongError {
  double error = 0.0;    // ||e_n f_n - f||_{L^2} including the outside part
  double inside = 0.0;   // squared error over window cells
  double leakage = 0.0;  // squared L^2 mass of f outside the window (within outer_radius)
};

/// ||e_n f_n - f||_{L^2}. Inside the window each cell is integrated
/// adaptively; outside, f^2 is integrated over the cells of the box
/// [-outer_radius, outer_radius]^d that are not window states, plus the
/// optional analytic remainder outside_tail2 (squared mass beyond the box).
template <class F>
StrongError strong_convergence_error(const LatticeFunction& fn, F&& f, double outer_radius = -1.0,
                                     double outside_tail2 = 0.0, int q = 6, int depth = 6) {
  const Lattice& lat = *fn.lattice;
  const int d = lat.dim();
  StrongError out;
  std::vector<double> part(lat.size(), 0.0);
  parallel_for(lat.size(), [&](std::size_t i) {
    std::vector<double> lo(static_cast<std::size_t>(d)), hi(lo.size());
    detail::cell_box(lat, i, lo, hi);
    const double v = fn.values[i];
    auto g = [&](std::span<const double> x) {
      const double e = v - f(x);
      return e * e;
    };
    part[i] = adaptive_box(g, lo, hi, q, 1e-10, 1e-16, depth).value;
  });
  for (double p : part) out.inside += p;

  if (outer_radius < 0.0) outer_radius = 2.0 * lat.window_radius() + 1.0;
  const long km = static_cast<long>(std::ceil(outer_radius * lat.n()));
  if (km > lat.kmax()) {
    const std::size_t side = static_cast<std::size_t>(2 * km + 1);
    std::size_t total = 1;
    for (int c = 0; c < d; ++c) total *= side;
    std::vector<double> outside(total, 0.0);
    parallel_for(total, [&](std::size_t flat) {
      std::vector<long> k(static_cast<std::size_t>(d));
      std::size_t rem = flat;
      for (int c = d - 1; c >= 0; --c) {
        k[static_cast<std::size_t>(c)] = static_cast<long>(rem % side) - km;
        rem /= side;
      }
      if (lat.find(std::span<const long>(k)) >= 0) return;
      std::vector<double> lo(static_cast<std::size_t>(d)), hi(lo.size());
      for (int c = 0; c < d; ++c) {
        lo[static_cast<std::size_t>(c)] = (static_cast<double>(k[static_cast<std::size_t>(c)]) - 0.5) / lat.n();
        hi[static_cast<std::size_t>(c)] = lo[static_cast<std::size_t>(c)] + 1.0 / lat.n();
      }
      auto g = [&](std::span<const double> x) {
        const double v = f(x);
        return v * v;
      };
      outside[flat] = tensor_box(g, lo, hi, q);
    });
    for (double p : outside) out.leakage += p;
  }
  out.leakage += outside_tail2;
  out.error = std::sqrt(out.inside + out.leakage);
  return out;
}

}  // namespace jumpchain
