#pragma once

#include <algorithm>
#include <boost/math/quadrature/gauss.hpp>
#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sensindex/errors.hpp"
#include "sensindex/util.hpp"

namespace sensindex {

struct QuadratureSpec {
  int nodes = 256;            // Gauss-Legendre nodes per axis at the first pass
  double rel_tol = 1e-8;      // doubling stops when the relative change is below this
  double abs_tol = 1e-12;     // floor for integrals whose true value is (near) zero
  int max_doublings = 3;      // 256 -> 512 -> 1024 -> 2048
  int stieltjes_points = 2048;  // grid for integrals against a monotone dT-type measure
  double stieltjes_rel_tol = 1e-6;
};

// Gauss-Legendre nodes/weights mapped to [0,1]. N must be even (all the sizes
// used here are powers of two); nodes are emitted in increasing order.
struct GaussGrid {
  std::vector<double> nodes;
  std::vector<double> weights;
};

namespace detail {

template <int N>
GaussGrid make_gauss_grid_fixed() {
  using G = boost::math::quadrature::gauss<double, N>;
  const auto& half_nodes = G::abscissa();   // positive half of (-1,1), increasing
  const auto& half_weights = G::weights();
  GaussGrid g;
  g.nodes.resize(N);
  g.weights.resize(N);
  const std::size_t h = half_nodes.size();
  for (std::size_t i = 0; i < h; ++i) {
    const double a = half_nodes[i];
    const double w = half_weights[i] * 0.5;  // interval halves from 2 to 1
    g.nodes[h - 1 - i] = 0.5 * (1.0 - a);   // mirrored node, below 1/2
    g.weights[h - 1 - i] = w;
    g.nodes[h + i] = 0.5 * (1.0 + a);
    g.weights[h + i] = w;
  }
  return g;
}

}  // namespace detail

inline const GaussGrid& gauss_grid(int n) {
  static const GaussGrid g32 = detail::make_gauss_grid_fixed<32>();
  static const GaussGrid g64 = detail::make_gauss_grid_fixed<64>();
  static const GaussGrid g128 = detail::make_gauss_grid_fixed<128>();
  static const GaussGrid g256 = detail::make_gauss_grid_fixed<256>();
  static const GaussGrid g512 = detail::make_gauss_grid_fixed<512>();
  static const GaussGrid g1024 = detail::make_gauss_grid_fixed<1024>();
  static const GaussGrid g2048 = detail::make_gauss_grid_fixed<2048>();
  switch (n) {
    case 32: return g32;
    case 64: return g64;
    case 128: return g128;
    case 256: return g256;
    case 512: return g512;
    case 1024: return g1024;
    case 2048: return g2048;
    default: throw QuadratureNotConverged("gauss_grid: unsupported node count " + std::to_string(n));
  }
}

// Integral of f over [0,1] with one fixed grid (no refinement).
inline double integrate_01_fixed(const std::function<double(double)>& f, int nodes) {
  const GaussGrid& g = gauss_grid(nodes);
  std::vector<double> terms(g.nodes.size());
  for (std::size_t i = 0; i < g.nodes.size(); ++i) terms[i] = g.weights[i] * f(g.nodes[i]);
  return pairwise_sum(terms);
}

// Integral of f over [0,1], doubling the node count until the relative change
// drops below spec.rel_tol.
inline double integrate_01(const std::function<double(double)>& f, const QuadratureSpec& spec = {},
                           const char* what = "integral") {
  int n = spec.nodes;
  double prev = integrate_01_fixed(f, n);
  for (int pass = 0; pass < spec.max_doublings; ++pass) {
    n *= 2;
    const double next = integrate_01_fixed(f, n);
    const double scale = std::max(std::abs(next), std::abs(prev));
    if (std::abs(next - prev) <= spec.rel_tol * scale + spec.abs_tol) return next;
    prev = next;
  }
  throw QuadratureNotConverged(std::string(what) + ": Gauss-Legendre refinement did not stabilize to rel " +
                               std::to_string(spec.rel_tol));
}

// Tensor integral of f over [0,1]^2 with one fixed grid per axis.
inline double integrate_unit_square_fixed(const std::function<double(double, double)>& f, int nodes) {
  const GaussGrid& g = gauss_grid(nodes);
  const std::size_t m = g.nodes.size();
  std::vector<double> rows(m);
  std::vector<double> terms(m);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) terms[j] = g.weights[j] * f(g.nodes[i], g.nodes[j]);
    rows[i] = g.weights[i] * pairwise_sum(terms);
  }
  return pairwise_sum(rows);
}

inline double integrate_unit_square(const std::function<double(double, double)>& f,
                                    const QuadratureSpec& spec = {}, const char* what = "double integral") {
  int n = spec.nodes;
  double prev = integrate_unit_square_fixed(f, n);
  for (int pass = 0; pass < spec.max_doublings; ++pass) {
    n *= 2;
    const double next = integrate_unit_square_fixed(f, n);
    const double scale = std::max(std::abs(next), std::abs(prev));
    if (std::abs(next - prev) <= spec.rel_tol * scale + spec.abs_tol) return next;
    prev = next;
  }
  throw QuadratureNotConverged(std::string(what) +
                               ": tensor Gauss-Legendre refinement did not stabilize");
}

// Splits [0,1] at the given interior breakpoints (clamped, deduplicated).
// Integrands with known kink/jump locations are integrated piece by piece so
// that Gauss-Legendre sees only smooth cells and the doubling check can
// actually reach the pinned tolerance.
inline std::vector<std::pair<double, double>> unit_pieces(std::vector<double> breakpoints) {
  std::vector<double> cuts{0.0, 1.0};
  for (double b : breakpoints)
    if (b > 1e-14 && b < 1.0 - 1e-14) cuts.push_back(b);
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end(),
                         [](double a, double b) { return std::abs(a - b) < 1e-14; }),
             cuts.end());
  std::vector<std::pair<double, double>> pieces;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) pieces.emplace_back(cuts[i], cuts[i + 1]);
  return pieces;
}

inline double integrate_pieces_fixed(const std::function<double(double)>& f,
                                     const std::vector<std::pair<double, double>>& pieces, int nodes) {
  const GaussGrid& g = gauss_grid(nodes);
  std::vector<double> piece_vals(pieces.size());
  std::vector<double> terms(g.nodes.size());
  for (std::size_t p = 0; p < pieces.size(); ++p) {
    const double a = pieces[p].first, len = pieces[p].second - pieces[p].first;
    for (std::size_t i = 0; i < g.nodes.size(); ++i)
      terms[i] = g.weights[i] * f(a + len * g.nodes[i]);
    piece_vals[p] = len * pairwise_sum(terms);
  }
  return pairwise_sum(piece_vals);
}

inline double integrate_01_piecewise(const std::function<double(double)>& f,
                                     const std::vector<double>& breakpoints,
                                     const QuadratureSpec& spec = {}, const char* what = "integral") {
  const auto pieces = unit_pieces(breakpoints);
  int n = spec.nodes;
  double prev = integrate_pieces_fixed(f, pieces, n);
  for (int pass = 0; pass < spec.max_doublings; ++pass) {
    n *= 2;
    const double next = integrate_pieces_fixed(f, pieces, n);
    const double scale = std::max(std::abs(next), std::abs(prev));
    if (std::abs(next - prev) <= spec.rel_tol * scale + spec.abs_tol) return next;
    prev = next;
  }
  throw QuadratureNotConverged(std::string(what) +
                               ": piecewise Gauss-Legendre refinement did not stabilize");
}

// Left-continuous generalized inverse of a nondecreasing function g on [lo, hi]:
// inf { t : g(t) >= p }, found by bisection. Used for quantile transforms and
// for mapping u = F_Y(t) grids back to t.
inline double monotone_inverse(const std::function<double(double)>& g, double p, double lo, double hi,
                               int iters = 200) {
  double a = lo, b = hi;
  for (int it = 0; it < iters && (b - a) > 0.0; ++it) {
    const double m = 0.5 * (a + b);
    if (m <= a || m >= b) break;  // hit floating resolution
    if (g(m) >= p) b = m; else a = m;
  }
  return b;
}

}  // namespace sensindex
