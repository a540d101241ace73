#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "discretize.hpp"
#include "error.hpp"
#include "format.hpp"
#include "kernel.hpp"
#include "lattice.hpp"
#include "parallel.hpp"
#include "rng.hpp"

namespace jumpchain {

struct SimulationConfig {
  double T = 1.0;
  std::size_t n_paths = 1000;
  std::uint64_t seed = 1;
  Point x0;                                 // point mass at [x0]_n (zero when empty)
  std::optional<ScalarField> initial_density;  // otherwise r_n of this density, normalized
  std::vector<double> marginal_times;       // defaults to {T}
  bool keep_paths = false;

  void validate() const {
    detail::require(T > 0.0 && std::isfinite(T), "simulate.T must be finite and > 0");
    detail::require(n_paths >= 1, "simulate.N_paths must be >= 1");
    for (double t : marginal_times) detail::require(t >= 0.0 && t <= T, "simulate.marginal_times must lie in [0, T]");
  }
};

/// One trajectory on [0, T]. states[0] is the initial state and states[i] the
/// state entered at times[i-1]. An absorbed path has one more time than jumps
/// inside the window: the last time is the exit.
struct PathSample {
  std::size_t initial = 0;
  std::vector<double> times;
  std::vector<std::size_t> states;
  bool absorbed = false;
  bool exit_known = false;
  std::vector<long> exit;
  double horizon = 0.0;

  std::size_t jumps() const { return absorbed ? times.size() - 1 : times.size(); }
  double absorb_time() const { return absorbed ? times.back() : std::numeric_limits<double>::infinity(); }
  /// State at time t (right-continuous), or -1 once absorbed.
  std::ptrdiff_t state_at(double t) const {
    if (absorbed && t >= times.back()) return -1;
    const auto it = std::upper_bound(times.begin(), times.begin() + static_cast<std::ptrdiff_t>(jumps()), t);
    return static_cast<std::ptrdiff_t>(states[static_cast<std::size_t>(it - times.begin())]);
  }
};

namespace detail {

inline std::vector<double> initial_weights(const Lattice& lat, const ScalarField& f) {
  LatticePtr lp = std::make_shared<const Lattice>(lat);
  const LatticeFunction r = restrict_fn(f, lp, 3);
  std::vector<double> cum(r.values.size());
  double s = 0.0;
  for (std::size_t i = 0; i < cum.size(); ++i) {
    s += std::max(0.0, r.values[i]);
    cum[i] = s;
  }
  if (!(s > 0.0)) throw ConfigError("simulate.initial_density has no mass on the window");
  for (auto& c : cum) c /= s;
  return cum;
}

inline std::size_t initial_point_state(const Lattice& lat, const SimulationConfig& cfg) {
  Point x = cfg.x0.empty() ? Point(static_cast<std::size_t>(lat.dim()), 0.0) : cfg.x0;
  require(x.size() == static_cast<std::size_t>(lat.dim()), "simulate.x0 has the wrong dimension");
  const auto i = lat.locate(x);
  require(i >= 0, "simulate.x0 lies outside the lattice window");
  return static_cast<std::size_t>(i);
}

inline PathSample run_path(const ConductanceMatrix& C, const SimulationConfig& cfg, std::uint64_t path_index,
                           const std::vector<double>* init_cum, std::size_t init_state) {
  PhiloxStream rng(cfg.seed, path_index);
  PathSample p;
  p.horizon = cfg.T;
  std::size_t a = init_state;
  if (init_cum) {
    const double u = rng.uniform();
    a = static_cast<std::size_t>(std::lower_bound(init_cum->begin(), init_cum->end(), u) - init_cum->begin());
    a = std::min(a, init_cum->size() - 1);
  }
  p.initial = a;
  p.states.push_back(a);
  double t = 0.0;
  for (;;) {
    const double rate = C.kept(a) + C.lost(a);
    if (!(rate > 0.0)) break;
    t += rng.exponential(rate);
    if (t > cfg.T) break;
    JumpDraw j = C.sample_jump(a, rng.uniform());
    p.times.push_back(t);
    if (j.target < 0) {
      p.absorbed = true;
      p.exit_known = j.exit_known;
      p.exit = std::move(j.exit);
      break;
    }
    a = static_cast<std::size_t>(j.target);
    p.states.push_back(a);
  }
  return p;
}

}  // namespace detail

/// Exact (Gillespie) path; stream (seed, path_index) makes it reproducible.
inline PathSample simulate_path(const ConductanceMatrix& C, const SimulationConfig& cfg, std::uint64_t path_index) {
  cfg.validate();
  if (cfg.initial_density) {
    const auto cum = detail::initial_weights(C.lattice(), *cfg.initial_density);
    return detail::run_path(C, cfg, path_index, &cum, 0);
  }
  return detail::run_path(C, cfg, path_index, nullptr, detail::initial_point_state(C.lattice(), cfg));
}

struct EnsembleSummary {
  int dim = 1;
  std::vector<double> times;
  // marginals[k][path * dim + c]: position at times[k]. Absorbed paths report
  // their exit point when known and NaN otherwise.
  std::vector<std::vector<double>> marginals;
  std::vector<std::size_t> jump_counts;
  std::vector<std::uint8_t> absorbed;
  std::size_t unknown_exits = 0;
  double absorbed_fraction = 0.0;
  double mean_jumps = 0.0;
  std::vector<PathSample> paths;  // filled when keep_paths

  std::size_t n_paths() const { return jump_counts.size(); }
  /// Coordinate c of all paths at times[k].
  std::vector<double> component(std::size_t k, int c = 0) const {
    std::vector<double> v(n_paths());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = marginals[k][i * static_cast<std::size_t>(dim) + static_cast<std::size_t>(c)];
    return v;
  }
};

inline EnsembleSummary simulate_ensemble(const ConductanceMatrix& C, const SimulationConfig& cfg) {
  cfg.validate();
  const Lattice& lat = C.lattice();
  const int d = lat.dim();
  const std::size_t ud = static_cast<std::size_t>(d);
  EnsembleSummary s;
  s.dim = d;
  s.times = cfg.marginal_times.empty() ? std::vector<double>{cfg.T} : cfg.marginal_times;
  s.marginals.assign(s.times.size(), std::vector<double>(cfg.n_paths * ud));
  s.jump_counts.assign(cfg.n_paths, 0);
  s.absorbed.assign(cfg.n_paths, 0);
  if (cfg.keep_paths) s.paths.resize(cfg.n_paths);

  std::vector<double> cum;
  std::size_t init = 0;
  if (cfg.initial_density) cum = detail::initial_weights(lat, *cfg.initial_density);
  else init = detail::initial_point_state(lat, cfg);
  const std::vector<double>* cp = cfg.initial_density ? &cum : nullptr;
  std::vector<std::uint8_t> unknown(cfg.n_paths, 0);

  parallel_for(cfg.n_paths, [&](std::size_t i) {
    PathSample p = detail::run_path(C, cfg, i, cp, init);
    s.jump_counts[i] = p.jumps();
    s.absorbed[i] = p.absorbed ? 1 : 0;
    unknown[i] = p.absorbed && !p.exit_known ? 1 : 0;
    for (std::size_t k = 0; k < s.times.size(); ++k) {
      double* out = &s.marginals[k][i * ud];
      const auto st = p.state_at(s.times[k]);
      if (st >= 0) {
        lat.point_into(static_cast<std::size_t>(st), std::span<double>(out, ud));
      } else if (p.exit_known) {
        for (std::size_t c = 0; c < ud; ++c) out[c] = static_cast<double>(p.exit[c]) / lat.n();
      } else {
        for (std::size_t c = 0; c < ud; ++c) out[c] = std::numeric_limits<double>::quiet_NaN();
      }
    }
    if (cfg.keep_paths) s.paths[i] = std::move(p);
  });
  std::size_t ab = 0, jumps = 0;
  for (std::size_t i = 0; i < cfg.n_paths; ++i) {
    ab += s.absorbed[i];
    jumps += s.jump_counts[i];
    s.unknown_exits += unknown[i];
  }
  s.absorbed_fraction = static_cast<double>(ab) / static_cast<double>(cfg.n_paths);
  s.mean_jumps = static_cast<double>(jumps) / static_cast<double>(cfg.n_paths);
  return s;
}

/// B^n(h), A~^n(h) and jump counts N^n([0,t], |jump| > r) on a time grid.
struct CharacteristicsTrace {
  int dim = 1;
  std::vector<double> times;
  std::vector<double> r_grid;
  std::vector<double> B;       // times x dim
  std::vector<double> A;       // times x dim x dim
  std::vector<std::size_t> N;  // times x r_grid

  double b(std::size_t k, int i) const { return B[k * static_cast<std::size_t>(dim) + static_cast<std::size_t>(i)]; }
  double a(std::size_t k, int i, int j) const {
    const std::size_t ud = static_cast<std::size_t>(dim);
    return A[(k * ud + static_cast<std::size_t>(i)) * ud + static_cast<std::size_t>(j)];
  }
  std::size_t count(std::size_t k, std::size_t r) const { return N[k * r_grid.size() + r]; }
};

/// Row functionals sum_b h(b) C(a, a+b) and sum_b h_i(b) h_k(b) C(a, a+b) over in-window targets.
struct RowFunctional {
  std::vector<double> b;
  std::vector<double> a;
};

inline RowFunctional row_functional(const ConductanceMatrix& C, std::size_t row, const TruncationFunction& h) {
  const Lattice& lat = C.lattice();
  const std::size_t ud = static_cast<std::size_t>(lat.dim());
  RowFunctional r{std::vector<double>(ud, 0.0), std::vector<double>(ud * ud, 0.0)};
  const auto ka = lat.index_coords(row);
  std::vector<double> z(ud), hz(ud);
  C.for_each_entry(row, [&](std::size_t col, double rate) {
    const auto kb = lat.index_coords(col);
    for (std::size_t c = 0; c < ud; ++c) z[c] = static_cast<double>(kb[c] - ka[c]) / lat.n();
    h.apply(z, hz);
    for (std::size_t i = 0; i < ud; ++i) {
      r.b[i] += hz[i] * rate;
      for (std::size_t k = 0; k < ud; ++k) r.a[i * ud + k] += hz[i] * hz[k] * rate;
    }
  });
  return r;
}

/// Default trace grid: 64 uniform points on [0, T] plus every jump time.
inline std::vector<double> default_time_grid(const PathSample& p, std::size_t points = 64) {
  std::vector<double> g;
  for (std::size_t i = 0; i < points; ++i) g.push_back(p.horizon * static_cast<double>(i) / static_cast<double>(points - 1));
  g.insert(g.end(), p.times.begin(), p.times.end());
  std::sort(g.begin(), g.end());
  g.erase(std::unique(g.begin(), g.end()), g.end());
  return g;
}

/// Integrands are constant between jumps, so the time integrals are exact
/// sums of segment length times row functional. The killed chain contributes
/// nothing after absorption.
inline CharacteristicsTrace characteristics_along_path(const PathSample& p, const ConductanceMatrix& C,
                                                       const TruncationFunction& h, std::vector<double> time_grid = {},
                                                       std::vector<double> r_grid = {}) {
  const Lattice& lat = C.lattice();
  const int d = lat.dim();
  const std::size_t ud = static_cast<std::size_t>(d);
  for (std::size_t s : p.states)
    if (s >= lat.size()) throw NumericError("path visits a state outside the window");
  if (time_grid.empty()) time_grid = default_time_grid(p);
  detail::require(std::is_sorted(time_grid.begin(), time_grid.end()), "trace time grid must be sorted");
  CharacteristicsTrace tr;
  tr.dim = d;
  tr.times = time_grid;
  tr.r_grid = r_grid;
  tr.B.assign(time_grid.size() * ud, 0.0);
  tr.A.assign(time_grid.size() * ud * ud, 0.0);
  tr.N.assign(time_grid.size() * r_grid.size(), 0);

  std::map<std::size_t, RowFunctional> cache;
  auto rowf = [&](std::size_t s) -> const RowFunctional& {
    auto it = cache.find(s);
    if (it == cache.end()) it = cache.emplace(s, row_functional(C, s, h)).first;
    return it->second;
  };
  // Jump sizes in point units (exit jumps count when their target is known).
  std::vector<double> sizes;
  for (std::size_t j = 0; j < p.times.size(); ++j) {
    const auto ka = lat.index_coords(p.states[j]);
    double r2 = 0.0;
    if (j + 1 < p.states.size()) {
      const auto kb = lat.index_coords(p.states[j + 1]);
      for (std::size_t c = 0; c < ud; ++c) r2 += std::pow(static_cast<double>(kb[c] - ka[c]) / lat.n(), 2);
    } else if (p.exit_known) {
      for (std::size_t c = 0; c < ud; ++c) r2 += std::pow(static_cast<double>(p.exit[c] - ka[c]) / lat.n(), 2);
    } else {
      r2 = std::numeric_limits<double>::infinity();
    }
    sizes.push_back(std::sqrt(r2));
  }

  // Segment j holds states[j] on [starts[j], starts[j+1]); the last one ends at
  // the horizon or at absorption.
  const std::size_t S = p.states.size();
  std::vector<double> starts(S + 1);
  starts[0] = 0.0;
  for (std::size_t j = 1; j < S; ++j) starts[j] = p.times[j - 1];
  starts[S] = std::min(p.horizon, p.absorb_time());
  std::vector<double> cumB((S + 1) * ud, 0.0), cumA((S + 1) * ud * ud, 0.0);
  for (std::size_t j = 0; j < S; ++j) {
    const RowFunctional& rf = rowf(p.states[j]);
    const double dt = starts[j + 1] - starts[j];
    for (std::size_t i = 0; i < ud; ++i) cumB[(j + 1) * ud + i] = cumB[j * ud + i] + dt * rf.b[i];
    for (std::size_t i = 0; i < ud * ud; ++i) cumA[(j + 1) * ud * ud + i] = cumA[j * ud * ud + i] + dt * rf.a[i];
  }
  for (std::size_t k = 0; k < time_grid.size(); ++k) {
    const double u = std::clamp(time_grid[k], 0.0, starts[S]);
    std::size_t j = static_cast<std::size_t>(std::upper_bound(starts.begin(), starts.begin() + static_cast<std::ptrdiff_t>(S), u) - starts.begin());
    j = j == 0 ? 0 : j - 1;
    const RowFunctional& rf = rowf(p.states[j]);
    const double dt = u - starts[j];
    for (std::size_t i = 0; i < ud; ++i) tr.B[k * ud + i] = cumB[j * ud + i] + dt * rf.b[i];
    for (std::size_t i = 0; i < ud * ud; ++i) tr.A[k * ud * ud + i] = cumA[j * ud * ud + i] + dt * rf.a[i];
    const std::size_t jumps_done = static_cast<std::size_t>(std::upper_bound(p.times.begin(), p.times.end(), time_grid[k]) - p.times.begin());
    for (std::size_t r = 0; r < r_grid.size(); ++r) {
      std::size_t c = 0;
      for (std::size_t q = 0; q < jumps_done; ++q)
        if (sizes[q] > r_grid[r]) ++c;
      tr.N[k * r_grid.size() + r] = c;
    }
  }
  return tr;
}

// CSV exports. Numbers use the shortest round-trip form so equal runs give equal bytes.

inline void write_path_csv(std::ostream& os, const PathSample& p, const Lattice& lat) {
  const int d = lat.dim();
  os << "time";
  for (int c = 1; c <= d; ++c) os << ",x" << c;
  os << ",absorbed\n";
  auto row = [&](double t, std::span<const double> x, int absorbed) {
    os << fmt_double(t);
    for (double v : x) os << ',' << fmt_double(v);
    os << ',' << absorbed << "\n";
  };
  for (std::size_t i = 0; i < p.states.size(); ++i) row(i == 0 ? 0.0 : p.times[i - 1], lat.point(p.states[i]), 0);
  if (p.absorbed) {
    std::vector<double> x(static_cast<std::size_t>(d), std::numeric_limits<double>::quiet_NaN());
    if (p.exit_known)
      for (int c = 0; c < d; ++c) x[static_cast<std::size_t>(c)] = static_cast<double>(p.exit[static_cast<std::size_t>(c)]) / lat.n();
    row(p.times.back(), x, 1);
  }
}

inline void write_marginals_csv(std::ostream& os, const EnsembleSummary& s) {
  os << "path,time";
  for (int c = 1; c <= s.dim; ++c) os << ",x" << c;
  os << ",absorbed,jumps\n";
  const std::size_t ud = static_cast<std::size_t>(s.dim);
  for (std::size_t k = 0; k < s.times.size(); ++k)
    for (std::size_t i = 0; i < s.n_paths(); ++i) {
      os << i << ',' << fmt_double(s.times[k]);
      for (std::size_t c = 0; c < ud; ++c) os << ',' << fmt_double(s.marginals[k][i * ud + c]);
      os << ',' << int(s.absorbed[i]) << ',' << s.jump_counts[i] << "\n";
    }
}

/// Histogram of coordinate 1 at each marginal time on [-half_width, half_width];
/// values outside land in the two overflow rows.
inline void write_histogram_csv(std::ostream& os, const EnsembleSummary& s, double half_width, std::size_t bins) {
  detail::require(half_width > 0.0 && bins > 0, "histogram needs half_width > 0 and bins > 0");
  os << "time,bin_lo,bin_hi,count\n";
  const double w = 2.0 * half_width / static_cast<double>(bins);
  for (std::size_t k = 0; k < s.times.size(); ++k) {
    std::vector<std::size_t> h(bins + 2, 0);
    std::size_t nan = 0;
    for (double x : s.component(k, 0)) {
      if (std::isnan(x)) ++nan;
      else if (x < -half_width) ++h[0];
      else if (x >= half_width) ++h[bins + 1];
      else ++h[1 + std::min(bins - 1, static_cast<std::size_t>((x + half_width) / w))];
    }
    const std::string t = fmt_double(s.times[k]);
    os << t << ",-inf," << fmt_double(-half_width) << ',' << h[0] << "\n";
    for (std::size_t b = 0; b < bins; ++b)
      os << t << ',' << fmt_double(-half_width + w * static_cast<double>(b)) << ','
         << fmt_double(-half_width + w * static_cast<double>(b + 1)) << ',' << h[b + 1] << "\n";
    os << t << ',' << fmt_double(half_width) << ",inf," << h[bins + 1] << "\n";
    os << t << ",nan,nan," << nan << "\n";
  }
}

inline void write_trace_csv(std::ostream& os, const CharacteristicsTrace& tr) {
  const int d = tr.dim;
  os << "time";
  for (int i = 1; i <= d; ++i) os << ",B" << i;
  for (int i = 1; i <= d; ++i)
    for (int k = 1; k <= d; ++k) os << ",A" << i << k;
  for (double r : tr.r_grid) os << ",N_gt_" << fmt_double(r);
  os << "\n";
  for (std::size_t k = 0; k < tr.times.size(); ++k) {
    os << fmt_double(tr.times[k]);
    for (int i = 0; i < d; ++i) os << ',' << fmt_double(tr.b(k, i));
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) os << ',' << fmt_double(tr.a(k, i, j));
    for (std::size_t r = 0; r < tr.r_grid.size(); ++r) os << ',' << tr.count(k, r);
    os << "\n";
  }
}

}  // namespace jumpchain
