#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "sensindex/errors.hpp"
#include "sensindex/estimators.hpp"
#include "sensindex/models.hpp"
#include "sensindex/quadrature.hpp"
#include "sensindex/rng.hpp"
#include "sensindex/stats.hpp"
#include "sensindex/util.hpp"

namespace sensindex {

using Mat3 = Eigen::Matrix3d;
using Vec3 = Eigen::Vector3d;

namespace detail {

// Integrates a small fixed-size vector of components over [0,1] with shared
// piecewise Gauss-Legendre passes; doubling stops when every component has
// stabilized in relative terms.
template <std::size_t K, typename Fn>
std::array<double, K> integrate_vec(Fn&& fn, const std::vector<double>& breakpoints,
                                    const QuadratureSpec& spec, const char* what) {
  const auto pieces = unit_pieces(breakpoints);
  const auto pass = [&](int nodes) {
    const GaussGrid& g = gauss_grid(nodes);
    std::array<double, K> total{};
    std::vector<std::array<double, K>> terms(g.nodes.size());
    for (const auto& [a, b] : pieces) {
      const double len = b - a;
      for (std::size_t i = 0; i < g.nodes.size(); ++i) {
        terms[i] = fn(a + len * g.nodes[i]);
        for (auto& tv : terms[i]) tv *= g.weights[i];
      }
      for (std::size_t k = 0; k < K; ++k) {
        std::vector<double> column(g.nodes.size());
        for (std::size_t i = 0; i < g.nodes.size(); ++i) column[i] = terms[i][k];
        total[k] += len * pairwise_sum(column);
      }
    }
    return total;
  };
  int n = spec.nodes;
  std::array<double, K> prev = pass(n);
  for (int d = 0; d < spec.max_doublings; ++d) {
    n *= 2;
    const std::array<double, K> next = pass(n);
    bool ok = true;
    for (std::size_t k = 0; k < K; ++k) {
      const double scale = std::max(std::abs(next[k]), std::abs(prev[k]));
      if (std::abs(next[k] - prev[k]) > spec.rel_tol * scale + spec.abs_tol) ok = false;
    }
    if (ok) return next;
    prev = next;
  }
  throw QuadratureNotConverged(std::string(what) + ": component integrals did not stabilize");
}

inline std::vector<double> merged_x_breakpoints(const GenerativeModel& f,
                                                const GenerativeModel& g) {
  std::vector<double> bs = f.x_breakpoints;
  bs.insert(bs.end(), g.x_breakpoints.begin(), g.x_breakpoints.end());
  return bs;
}

struct NoiseCross {
  double e_fg = 0.0;    // E[f g]
  double e_fg2 = 0.0;   // E[f g^2]
  double e_f2g = 0.0;   // E[f^2 g]
  double e_f2g2 = 0.0;  // E[f^2 g^2]
};

// Raw mixed conditional moments of two outputs that share the same noise
// vector, by tensor Gauss-Legendre over the noise cube (used only when no
// closed form applies; every catalogue output is smooth in its noise).
inline NoiseCross cross_noise_moments(const GenerativeModel& f, const GenerativeModel& g,
                                      double x) {
  const int dim = std::max(f.eps_dim, g.eps_dim);
  const GaussGrid& grid = gauss_grid(64);
  NoiseCross nc;
  if (dim == 1) {
    for (std::size_t i = 0; i < grid.nodes.size(); ++i) {
      const double e[1] = {grid.nodes[i]};
      const double fv = f.f(x, std::span<const double>(e, 1));
      const double gv = g.f(x, std::span<const double>(e, 1));
      const double w = grid.weights[i];
      nc.e_fg += w * fv * gv;
      nc.e_fg2 += w * fv * gv * gv;
      nc.e_f2g += w * fv * fv * gv;
      nc.e_f2g2 += w * fv * fv * gv * gv;
    }
    return nc;
  }
  if (dim != 2)
    throw ParseError("cross noise moments are implemented for at most two noise coordinates");
  for (std::size_t i = 0; i < grid.nodes.size(); ++i)
    for (std::size_t j = 0; j < grid.nodes.size(); ++j) {
      const double e[2] = {grid.nodes[i], grid.nodes[j]};
      const double fv = f.f(x, std::span<const double>(e, 2));
      const double gv = g.f(x, std::span<const double>(e, 2));
      const double w = grid.weights[i] * grid.weights[j];
      nc.e_fg += w * fv * gv;
      nc.e_fg2 += w * fv * gv * gv;
      nc.e_f2g += w * fv * fv * gv;
      nc.e_f2g2 += w * fv * fv * gv * gv;
    }
  return nc;
}

inline bool same_indicator_family(const GenerativeModel& f, const GenerativeModel& g) {
  return f.indicator_base && g.indicator_base && f.indicator_base == g.indicator_base &&
         f.indicator_threshold && g.indicator_threshold;
}

}  // namespace detail

// Conditional noise covariance Cov(f, g | X = x) of two outputs sharing eps.
inline double noise_covariance(const GenerativeModel& f, const GenerativeModel& g, double x) {
  if (&f == &g) return f.m2(x) - f.phi(x) * f.phi(x);
  if (detail::same_indicator_family(f, g)) {
    const auto& base = *f.indicator_base;
    const double tf = *f.indicator_threshold, tg = *g.indicator_threshold;
    return base.cond_cdf(std::min(tf, tg), x) - base.cond_cdf(tf, x) * base.cond_cdf(tg, x);
  }
  const auto nc = detail::cross_noise_moments(f, g, x);
  return nc.e_fg - f.phi(x) * g.phi(x);
}

// Conditional covariance of the triples ((f, f, f^2), (g, g, g^2)) given x.
inline Mat3 sigma_b(const GenerativeModel& f, const GenerativeModel& g, double x) {
  Mat3 out;
  if (&f == &g && f.m3 && f.m4) {
    const double p = f.phi(x), q2 = f.m2(x), q3 = f.m3(x), q4 = f.m4(x);
    const double V = q2 - p * p;   // Var(f | x)
    const double C = q3 - p * q2;  // Cov(f, f^2 | x)
    const double W = q4 - q2 * q2; // Var(f^2 | x)
    out << V, V, C, V, V, C, C, C, W;
    return out;
  }
  if (detail::same_indicator_family(f, g)) {
    // indicators are idempotent, so every entry collapses to one covariance
    const double c = noise_covariance(f, g, x);
    out.setConstant(c);
    return out;
  }
  const double pf = f.phi(x), pg = g.phi(x);
  const double qf = f.m2(x), qg = g.m2(x);
  const auto nc = detail::cross_noise_moments(f, g, x);
  const double c11 = nc.e_fg - pf * pg;
  const double c13 = nc.e_fg2 - pf * qg;
  const double c31 = nc.e_f2g - qf * pg;
  const double c33 = nc.e_f2g2 - qf * qg;
  out << c11, c11, c13, c11, c11, c13, c31, c31, c33;
  return out;
}

// Coefficient outer-product part of the per-step bracket:
// (2 phi_f, 1, 1)(2 phi_g, 1, 1)^T plus the shared-noise covariance in the
// (1,1) slot.
inline Mat3 sigma_a(const GenerativeModel& f, const GenerativeModel& g, double x) {
  Vec3 af(2.0 * f.phi(x), 1.0, 1.0);
  Vec3 ag(2.0 * g.phi(x), 1.0, 1.0);
  Mat3 out = af * ag.transpose();
  out(0, 0) += noise_covariance(f, g, x);
  return out;
}

// Cross-covariance over the input of the moment triples
// w(x) = (phi(x)^2, phi(x), m2(x)).
inline Mat3 sigma0(const GenerativeModel& f, const GenerativeModel& g,
                   const QuadratureSpec& spec = {}) {
  const auto raw = detail::integrate_vec<15>(
      [&](double u) {
        const double xf = f.x_quantile(u);
        const double pf = f.phi(xf), qf = f.m2(xf);
        const double pg = g.phi(xf), qg = g.m2(xf);
        const std::array<double, 3> wf{pf * pf, pf, qf};
        const std::array<double, 3> wg{pg * pg, pg, qg};
        std::array<double, 15> vals{};
        for (int r = 0; r < 3; ++r)
          for (int c = 0; c < 3; ++c) vals[static_cast<std::size_t>(3 * r + c)] = wf[static_cast<std::size_t>(r)] * wg[static_cast<std::size_t>(c)];
        for (int r = 0; r < 3; ++r) vals[static_cast<std::size_t>(9 + r)] = wf[static_cast<std::size_t>(r)];
        for (int c = 0; c < 3; ++c) vals[static_cast<std::size_t>(12 + c)] = wg[static_cast<std::size_t>(c)];
        return vals;
      },
      detail::merged_x_breakpoints(f, g), spec, "sigma0");
  Mat3 out;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c)
      out(r, c) = raw[static_cast<std::size_t>(3 * r + c)] -
                  raw[static_cast<std::size_t>(9 + r)] * raw[static_cast<std::size_t>(12 + c)];
  return out;
}

// Nearest-neighbour interaction term: the input average of the entrywise
// product sigma_a .* sigma_b.
inline Mat3 sigma1(const GenerativeModel& f, const GenerativeModel& g,
                   const QuadratureSpec& spec = {}) {
  const auto raw = detail::integrate_vec<9>(
      [&](double u) {
        const double x = f.x_quantile(u);
        const Mat3 prod = sigma_a(f, g, x).cwiseProduct(sigma_b(f, g, x));
        std::array<double, 9> vals{};
        for (int r = 0; r < 3; ++r)
          for (int c = 0; c < 3; ++c) vals[static_cast<std::size_t>(3 * r + c)] = prod(r, c);
        return vals;
      },
      detail::merged_x_breakpoints(f, g), spec, "sigma1");
  Mat3 out;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) out(r, c) = raw[static_cast<std::size_t>(3 * r + c)];
  return out;
}

// Gradient of h(t, s1, s2) = (t - s1^2) / (s2 - s1^2) at the population
// moment vector; the delta-method weight vector.
inline Vec3 v_vector(const GenerativeModel& m, const QuadratureSpec& spec = {}) {
  const ModelMoments mm = model_moments(m, spec);
  const double floor = 0x1.0p-40 * std::max(1.0, mm.m2_y);
  if (mm.var_y <= floor)
    throw DegenerateVariance("model '" + m.name + "': output variance is numerically zero");
  const double rho = mm.var_phi / mm.var_y;
  return Vec3(1.0, 2.0 * mm.mean_y * (rho - 1.0), -rho) / mm.var_y;
}

struct SobolVarianceBreakdown {
  Mat3 sigma0;
  Mat3 sigma1;
  Vec3 v;
  double mean_y = 0.0;
  double var_y = 0.0;
  double rho = 0.0;
  double contrib_sigma0 = 0.0;
  double contrib_sigma1 = 0.0;
  double total = 0.0;
};

inline SobolVarianceBreakdown sobol_asymptotic_variance(const GenerativeModel& m,
                                                        const QuadratureSpec& spec = {}) {
  SobolVarianceBreakdown out;
  const ModelMoments mm = model_moments(m, spec);
  const double floor = 0x1.0p-40 * std::max(1.0, mm.m2_y);
  if (mm.var_y <= floor)
    throw DegenerateVariance("model '" + m.name + "': output variance is numerically zero");
  out.mean_y = mm.mean_y;
  out.var_y = mm.var_y;
  out.rho = mm.var_phi / mm.var_y;
  out.v = Vec3(1.0, 2.0 * mm.mean_y * (out.rho - 1.0), -out.rho) / mm.var_y;
  out.sigma0 = sigma0(m, m, spec);
  out.sigma1 = sigma1(m, m, spec);
  out.contrib_sigma0 = out.v.dot(out.sigma0 * out.v);
  out.contrib_sigma1 = out.v.dot(out.sigma1 * out.v);
  out.total = out.contrib_sigma0 + out.contrib_sigma1;
  // Degenerate links cancel the quadratic form exactly; snap roundoff-scale
  // negative results to zero so the variance stays a variance.
  const Vec3 va = out.v.cwiseAbs();
  const double window =
      1e-12 * (va.dot(out.sigma0.cwiseAbs() * va) + va.dot(out.sigma1.cwiseAbs() * va) + 1.0);
  if (out.total < 0.0 && out.total >= -window) out.total = 0.0;
  return out;
}

// Joint limiting covariance of the component estimators of a vector output.
inline Eigen::MatrixXd gamma_matrix(const VectorModel& vm, const QuadratureSpec& spec = {}) {
  const std::size_t d = vm.components.size();
  std::vector<Vec3> vs(d);
  for (std::size_t k = 0; k < d; ++k) vs[k] = v_vector(vm.components[k], spec);
  Eigen::MatrixXd gamma(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  for (std::size_t k = 0; k < d; ++k)
    for (std::size_t l = k; l < d; ++l) {
      const Mat3 s = sigma0(vm.components[k], vm.components[l], spec) +
                     sigma1(vm.components[k], vm.components[l], spec);
      const double val = vs[k].dot(s * vs[l]);
      gamma(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(l)) = val;
      gamma(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(k)) = val;
    }
  return gamma;
}

inline double min_eigenvalue(const Eigen::MatrixXd& sym) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym);
  return solver.eigenvalues().minCoeff();
}

// ---------------------------------------------------------------------------
// Finite-n nearest-neighbour bias gaps
// ---------------------------------------------------------------------------
//
// In the pinned-input scale U = F_X(X), the gap between a point and its
// nearest right neighbour among n i.i.d. uniforms is Beta(1, n-1) and is
// independent of the point's own position, so the expected squared
// conditional-mean increment can be sampled directly without building
// n-point samples.

struct DeltaEstimate {
  double value = 0.0;
  double std_error = 0.0;
  std::size_t n = 0;
  std::size_t budget = 0;
};

namespace detail {

template <typename PairFn>
DeltaEstimate delta_mc(std::size_t n, std::size_t budget, std::uint64_t seed, PairFn&& fn) {
  if (n < 2) throw ParseError("bias gap needs n >= 2");
  if (budget < 100) throw ParseError("bias-gap Monte Carlo budget below minimum (100)");
  DeltaEstimate de;
  de.n = n;
  de.budget = budget;
  const double expo = 1.0 / static_cast<double>(n - 1);
  std::vector<double> vals(budget);
  for (std::size_t r = 0; r < budget; ++r) {
    Stream st(seed, r);
    const double u = st.uniform01();
    const double beta = 1.0 - std::pow(1.0 - st.uniform01(), expo);
    double w = u + beta;
    if (w >= 1.0) w -= 1.0;
    vals[r] = fn(u, w);
  }
  de.value = mean_of(vals);
  de.std_error = std::sqrt(sample_variance(vals) / static_cast<double>(budget));
  return de;
}

}  // namespace detail

// E[(phi(X_i) - phi(X_{N(i)}))^2] at sample size n.
inline DeltaEstimate delta_n(const GenerativeModel& m, std::size_t n, std::size_t budget = 400'000,
                             std::uint64_t seed = 0x5eedbea7u) {
  return detail::delta_mc(n, budget, seed, [&](double u, double w) {
    const double d = m.phi(m.x_quantile(u)) - m.phi(m.x_quantile(w));
    return d * d;
  });
}

// Integrated CDF version: E[ int (F(Q_Y(v)|X_i) - F(Q_Y(v)|X_{N(i)}))^2 dv ].
inline DeltaEstimate delta_n_cvm(const GenerativeModel& m, std::size_t n,
                                 std::size_t budget = 200'000,
                                 std::uint64_t seed = 0x5eedbea7u) {
  // fixed inner grid in the output-CDF scale, with quantiles cached once
  const auto pieces = unit_pieces(m.v_breakpoints);
  const GaussGrid& g = gauss_grid(64);
  std::vector<double> vw, vt;
  for (const auto& [a, b] : pieces) {
    const double len = b - a;
    for (std::size_t i = 0; i < g.nodes.size(); ++i) {
      vw.push_back(len * g.weights[i]);
      vt.push_back(model_y_quantile(m, a + len * g.nodes[i]));
    }
  }
  return detail::delta_mc(n, budget, seed, [&](double u, double w) {
    const double xu = m.x_quantile(u), xw = m.x_quantile(w);
    double acc = 0.0;
    for (std::size_t i = 0; i < vt.size(); ++i) {
      const double d = m.cond_cdf(vt[i], xu) - m.cond_cdf(vt[i], xw);
      acc += vw[i] * d * d;
    }
    return acc;
  });
}

// ---------------------------------------------------------------------------
// Cramer-von Mises kernels and asymptotic variance
// ---------------------------------------------------------------------------

struct CvmKernelEval {
  double t = 0.0;
  double s = 0.0;
  double c_xx = 0.0;
  double c_xy = 0.0;  // squared conditional-CDF slot sits at s
  double c_yy = 0.0;
};

namespace detail {

struct KernelMoments {
  double ea, eb, ea2, eb2, ea2b2, eabw, ebw, eb2a;
};

// Input-side expectations of products of psi_t = F(t|X), psi_s = F(s|X) and
// psi_min = F(t^s|X); psi_min coincides pointwise with psi of the smaller
// threshold.
inline KernelMoments kernel_moments(const GenerativeModel& m, double t, double s,
                                    int nodes_per_piece = 32) {
  std::vector<double> bs = cond_cdf_kinks_of(m, t);
  {
    const auto extra = cond_cdf_kinks_of(m, s);
    bs.insert(bs.end(), extra.begin(), extra.end());
  }
  const auto pieces = unit_pieces(bs);
  const GaussGrid& g = gauss_grid(nodes_per_piece);
  const bool t_is_min = t <= s;
  KernelMoments km{};
  for (const auto& [lo, hi] : pieces) {
    const double len = hi - lo;
    for (std::size_t i = 0; i < g.nodes.size(); ++i) {
      const double x = m.x_quantile(lo + len * g.nodes[i]);
      const double w = len * g.weights[i];
      const double a = m.cond_cdf(t, x);
      const double b = m.cond_cdf(s, x);
      const double mn = t_is_min ? a : b;
      km.ea += w * a;
      km.eb += w * b;
      km.ea2 += w * a * a;
      km.eb2 += w * b * b;
      km.ea2b2 += w * a * a * b * b;
      km.eabw += w * a * b * mn;
      km.ebw += w * b * mn;
      km.eb2a += w * b * b * a;
    }
  }
  return km;
}

}  // namespace detail

// Pointwise evaluation of the three covariance kernels at output thresholds
// (t, s). The cross kernel is reported with its squared slot at s, which
// reduces to 2 F(s) (F(t^s) - F(t)F(s)) under independence.
inline CvmKernelEval cvm_kernels(const GenerativeModel& m, double t, double s,
                                 const QuadratureSpec& spec = {}) {
  (void)spec;
  CvmKernelEval ev;
  ev.t = t;
  ev.s = s;
  const auto km = detail::kernel_moments(m, t, s);
  ev.c_xx = (km.ea2b2 - km.ea2 * km.eb2) +
            ((t <= s ? km.ea2 : km.eb2) + 2.0 * km.eabw - 3.0 * km.ea2b2);
  ev.c_xy = (km.eb2a - km.eb2 * km.ea) + 2.0 * (km.ebw - km.eb2a);
  ev.c_yy = m.y_cdf(std::min(t, s)) - m.y_cdf(t) * m.y_cdf(s);
  return ev;
}

struct CvmVarianceBreakdown {
  double term_input = 0.0;   // double integral of C_XX against dF_Y x dF_Y
  double term_output = 0.0;  // double integral of C_YY against dT x dT
  double term_cross = 0.0;   // mixed term, squared slot paired with dF_Y
  double total_raw = 0.0;    // 36 * (input + output - 2 * cross)
  double total = 0.0;        // total_raw with the cancellation guard applied
};

inline CvmVarianceBreakdown cvm_asymptotic_variance(const GenerativeModel& m,
                                                    const QuadratureSpec& spec = {}) {
  CvmVarianceBreakdown out;

  // --- input term: 2 * integral over {v <= u} of C_XX(Q(u), Q(v)) du dv.
  // On the lower triangle the smaller threshold is Q(v), so the integrand is
  // smooth between the declared output-scale breakpoints.
  const auto c_xx_at = [&](double u, double v) {
    const double t = model_y_quantile(m, u);
    const double s = model_y_quantile(m, v);
    const auto km = detail::kernel_moments(m, t, s);
    const double min2 = (t <= s) ? km.ea2 : km.eb2;
    return (km.ea2b2 - km.ea2 * km.eb2) + (min2 + 2.0 * km.eabw - 3.0 * km.ea2b2);
  };
  const auto input_pass = [&](int nodes) {
    const GaussGrid& g = gauss_grid(nodes);
    const auto outer_pieces = unit_pieces(m.v_breakpoints);
    std::vector<double> outer_terms;
    for (const auto& [oa, ob] : outer_pieces) {
      const double olen = ob - oa;
      for (std::size_t i = 0; i < g.nodes.size(); ++i) {
        const double u = oa + olen * g.nodes[i];
        std::vector<double> cuts;
        for (double b : m.v_breakpoints)
          if (b < u) cuts.push_back(b / u);
        const auto inner_pieces = unit_pieces(cuts);
        std::vector<double> inner_terms;
        for (const auto& [ia, ib] : inner_pieces) {
          const double ilen = ib - ia;
          for (std::size_t j = 0; j < g.nodes.size(); ++j) {
            const double v = u * (ia + ilen * g.nodes[j]);
            inner_terms.push_back(u * ilen * g.weights[j] * c_xx_at(u, v));
          }
        }
        outer_terms.push_back(olen * g.weights[i] * pairwise_sum(inner_terms));
      }
    }
    return 2.0 * pairwise_sum(outer_terms);
  };
  {
    int n = spec.nodes;
    double prev = input_pass(n);
    bool converged = false;
    for (int d = 0; d < spec.max_doublings && !converged; ++d) {
      n *= 2;
      const double next = input_pass(n);
      const double scale = std::max(std::abs(next), std::abs(prev));
      converged = std::abs(next - prev) <= spec.rel_tol * scale + spec.abs_tol;
      prev = next;
    }
    if (!converged)
      throw QuadratureNotConverged("cvm variance: input term did not stabilize");
    out.term_input = prev;
  }

  // --- output term: by parts, the C_YY double integral against dT x dT
  // collapses to Var(G(V)) with V uniform.
  {
    const auto pair = detail::integrate_vec<2>(
        [&](double v) {
          const double gv = model_g_of_v(m, v, spec);
          return std::array<double, 2>{gv, gv * gv};
        },
        m.v_breakpoints, spec, "cvm output term");
    out.term_output = pair[1] - pair[0] * pair[0];
  }

  // --- cross term: midpoint Riemann-Stieltjes against dG over the output
  // grid; the inner integral runs the cross kernel (squared slot at the
  // du-variable) over u.
  const auto cross_kernel = [&](double u, double v) {
    // u pairs with dF_Y (squared slot), v with dG.
    const double t_u = model_y_quantile(m, u);
    const double s_v = model_y_quantile(m, v);
    std::vector<double> bs = cond_cdf_kinks_of(m, t_u);
    {
      const auto extra = cond_cdf_kinks_of(m, s_v);
      bs.insert(bs.end(), extra.begin(), extra.end());
    }
    const auto pieces = unit_pieces(bs);
    const GaussGrid& g = gauss_grid(32);
    double e_a2b = 0.0, e_aw = 0.0, e_a2 = 0.0;
    const bool t_is_min = t_u <= s_v;
    for (const auto& [a0, b0] : pieces) {
      const double len = b0 - a0;
      for (std::size_t i = 0; i < g.nodes.size(); ++i) {
        const double x = m.x_quantile(a0 + len * g.nodes[i]);
        const double w = len * g.weights[i];
        const double pa = m.cond_cdf(t_u, x);  // psi at the dF_Y slot
        const double pb = m.cond_cdf(s_v, x);  // psi at the dG slot
        const double mn = t_is_min ? pa : pb;
        e_a2b += w * pa * pa * pb;
        e_aw += w * pa * mn;
        e_a2 += w * pa * pa;
      }
    }
    return -e_a2b - e_a2 * v + 2.0 * e_aw;
  };
  const auto cross_pass = [&](int points, int u_nodes) {
    // G at the grid nodes, kappa at midpoints
    std::vector<double> grid_g(static_cast<std::size_t>(points) + 1);
    for (int k = 0; k <= points; ++k)
      grid_g[static_cast<std::size_t>(k)] =
          model_g_of_v(m, static_cast<double>(k) / points, spec);
    const GaussGrid& g = gauss_grid(u_nodes);
    std::vector<double> terms(static_cast<std::size_t>(points));
    for (int k = 0; k < points; ++k) {
      const double v_mid = (k + 0.5) / points;
      std::vector<double> cuts = m.v_breakpoints;
      cuts.push_back(v_mid);
      const auto pieces = unit_pieces(cuts);
      std::vector<double> inner;
      for (const auto& [a, b] : pieces) {
        const double len = b - a;
        for (std::size_t i = 0; i < g.nodes.size(); ++i)
          inner.push_back(len * g.weights[i] * cross_kernel(a + len * g.nodes[i], v_mid));
      }
      terms[static_cast<std::size_t>(k)] =
          pairwise_sum(inner) *
          (grid_g[static_cast<std::size_t>(k) + 1] - grid_g[static_cast<std::size_t>(k)]);
    }
    return pairwise_sum(terms);
  };
  {
    const int p0 = spec.stieltjes_points;
    const double first = cross_pass(p0, 128);
    const double second = cross_pass(2 * p0, 128);
    const double scale = std::max({std::abs(first), std::abs(second), 1e-12});
    if (std::abs(second - first) > spec.stieltjes_rel_tol * scale &&
        std::abs(second - first) > 1e-9)
      throw QuadratureNotConverged("cvm variance: cross term did not stabilize");
    out.term_cross = second;
  }

  out.total_raw = 36.0 * (out.term_input + out.term_output - 2.0 * out.term_cross);
  // The three converged integrals can cancel almost exactly (deterministic
  // link); snap tiny negative results of that cancellation to zero.
  const double window = 36.0 * spec.stieltjes_rel_tol *
                        (std::abs(out.term_input) + std::abs(out.term_output) +
                         2.0 * std::abs(out.term_cross));
  out.total = (out.total_raw < 0.0 && out.total_raw >= -window) ? 0.0 : out.total_raw;
  return out;
}

// Central-limit confidence interval for an estimate with limiting variance
// sigma2 at sample size n.
inline ConfidenceInterval confidence_interval(double point, double sigma2, std::size_t n,
                                              double level) {
  if (!(level > 0.0 && level < 1.0)) throw InvalidLevel("confidence level must lie in (0, 1)");
  if (sigma2 < 0.0) throw DegenerateVariance("negative variance passed to confidence_interval");
  if (n == 0) throw ParseError("confidence interval needs n >= 1");
  const double z = normal_quantile(0.5 + level / 2.0);
  const double half = z * std::sqrt(sigma2 / static_cast<double>(n));
  return ConfidenceInterval{point - half, point + half, level};
}

}  // namespace sensindex
