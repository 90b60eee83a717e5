#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "sensindex/errors.hpp"
#include "sensindex/models.hpp"
#include "sensindex/ranking.hpp"
#include "sensindex/rng.hpp"
#include "sensindex/util.hpp"
#include "sensindex/variance.hpp"

namespace sensindex {

// Decomposition of the running nearest-neighbour inner product
//   Z_j = sum_{i=1..j} f(X_{sigma(i-1)}, e_{i-1}) f(X_{sigma(i)}, e_i)
// along the input-sorted order sigma, with the cyclic conventions
// sigma(0) = sigma(n), sigma(n+1) = sigma(1) and e_0 := 0.
//
// Exact split: Z_j = A_j + M_j with
//   A_j = f(X_{sigma(0)}, 0) phi_1 + sum_{i=2..j} phi_{i-1} phi_i,
//   M_j = sum_{k=1..j-1} (f_{k-1} + phi_{k+1}) dm_k + f_{j-1} dm_j,
// where f_k = f(X_{sigma(k)}, e_k), phi_k = phi(X_{sigma(k)}) and
// dm_k = f_k - phi_k.
//
// Approximate split: A~_j = sum phi_i^2 and M~_j = sum_{k<=j} (f_{k-1} +
// phi_{k+1}) dm_k; the remainder R_j = Z_j - A~_j - M~_j concentrates around
// -(1/2) sum (phi_{i-1} - phi_i)^2 within a uniform envelope. Unlike the
// exact M, the approximate M~ has genuinely centered increments given the
// sorted past, which is what the property check below exercises.
struct DecompositionPath {
  std::size_t n = 0;
  std::vector<double> z;         // index 0..n
  std::vector<double> a_exact;
  std::vector<double> m_exact;
  std::vector<double> a_approx;
  std::vector<double> m_approx;
  std::vector<double> r_approx;
  std::vector<double> increments;  // dm_i, index 1..n ([0] unused)
  double f_sup = 0.0;              // bound on |f| used by the envelope
  double phi_gap_sq = 0.0;         // sum_{i=1..n} (phi_{i-1} - phi_i)^2
};

namespace detail {

struct OrderedDraw {
  std::vector<double> x;    // x_k = X_{sigma(k)}, index 1..n ([0] unused)
  std::vector<double> w;    // w_k = f(X_{sigma(k)}, e_k); w[0] = f(X_{sigma(n)}, 0)
  std::vector<double> phi;  // phi_k; phi[0] = phi_n duplicated for convenience
  std::vector<std::vector<double>> eps;  // noise rows in sorted order, 1..n
};

inline OrderedDraw order_draw(const GenerativeModel& m, const ModelDraw& draw) {
  const std::size_t n = draw.sample.n();
  const auto sigma = sort_permutation(draw.sample.xs, TiePolicy::error);
  OrderedDraw od;
  od.x.assign(n + 1, 0.0);
  od.w.assign(n + 1, 0.0);
  od.phi.assign(n + 1, 0.0);
  od.eps.assign(n + 1, {});
  const std::size_t ed = static_cast<std::size_t>(draw.eps_dim);
  for (std::size_t k = 1; k <= n; ++k) {
    const std::size_t idx = sigma[k - 1];
    od.x[k] = draw.sample.xs[idx];
    od.w[k] = draw.sample.ys[0][idx];
    od.phi[k] = m.phi(od.x[k]);
    od.eps[k].assign(draw.eps.begin() + static_cast<std::ptrdiff_t>(idx * ed),
                     draw.eps.begin() + static_cast<std::ptrdiff_t>((idx + 1) * ed));
  }
  const std::vector<double> zero(ed, 0.0);
  od.w[0] = m.f(od.x[n], zero);  // e_0 := 0 at the cyclic seam
  od.phi[0] = od.phi[n];
  return od;
}

}  // namespace detail

inline DecompositionPath build_path_from(const GenerativeModel& m, const ModelDraw& draw) {
  const std::size_t n = draw.sample.n();
  if (n < 2) throw ParseError("decomposition path needs n >= 2");
  const auto od = detail::order_draw(m, draw);

  DecompositionPath p;
  p.n = n;
  p.f_sup = std::max(std::abs(m.f_min), std::abs(m.f_max));
  p.z.assign(n + 1, 0.0);
  p.a_exact.assign(n + 1, 0.0);
  p.m_exact.assign(n + 1, 0.0);
  p.a_approx.assign(n + 1, 0.0);
  p.m_approx.assign(n + 1, 0.0);
  p.r_approx.assign(n + 1, 0.0);
  p.increments.assign(n + 1, 0.0);

  const auto phi_next = [&](std::size_t k) { return k == n ? od.phi[1] : od.phi[k + 1]; };

  double s_running = 0.0;  // sum_{k<=j} (w_{k-1} + phi_{k+1}) dm_k
  double gap = 0.0;
  for (std::size_t j = 1; j <= n; ++j) {
    const double dm = od.w[j] - od.phi[j];
    p.increments[j] = dm;
    p.z[j] = p.z[j - 1] + od.w[j - 1] * od.w[j];
    p.a_exact[j] = p.a_exact[j - 1] + (j == 1 ? od.w[0] * od.phi[1] : od.phi[j - 1] * od.phi[j]);
    p.m_exact[j] = s_running + od.w[j - 1] * dm;
    s_running += (od.w[j - 1] + phi_next(j)) * dm;
    p.m_approx[j] = s_running;
    p.a_approx[j] = p.a_approx[j - 1] + od.phi[j] * od.phi[j];
    p.r_approx[j] = p.z[j] - p.a_approx[j] - p.m_approx[j];
    const double pg = od.phi[j - 1] - od.phi[j];
    gap += pg * pg;
  }
  p.phi_gap_sq = gap;
  return p;
}

inline DecompositionPath build_path(const GenerativeModel& m, std::size_t n,
                                    std::uint64_t seed) {
  return build_path_from(m, sample_model_with_noise(m, n, seed));
}

// Largest violation of the exact identity Z = A + M along the path.
inline double doob_identity_deviation(const DecompositionPath& p) {
  double worst = 0.0;
  for (std::size_t j = 0; j <= p.n; ++j)
    worst = std::max(worst, std::abs(p.z[j] - p.a_exact[j] - p.m_exact[j]));
  return worst;
}

// ---------------------------------------------------------------------------
// Martingale property of the approximate split
// ---------------------------------------------------------------------------

struct MartingaleCheckRow {
  std::size_t j = 0;
  double mean = 0.0;
  double std_error = 0.0;
  bool pass = false;
};

struct MartingaleCheckReport {
  std::vector<MartingaleCheckRow> rows;
  bool pass = true;
};

// Conditionally on the sorted inputs and the noise used up to step j-1, the
// increment M~_j - M~_{j-1} = (f_{j-1} + phi_{j+1}) (f_j - phi_j) has mean
// zero over a fresh draw of e_j. The check freezes one base draw and averages
// the increment over `reps` fresh noise draws at each probe step.
inline MartingaleCheckReport martingale_property_check(const GenerativeModel& m, std::size_t n,
                                                       std::size_t reps, std::uint64_t seed,
                                                       const std::vector<std::size_t>& probe_js) {
  if (n < 2) throw ParseError("martingale check needs n >= 2");
  if (reps < 10) throw TooFewValues("martingale check needs at least 10 replicates");
  const auto draw = sample_model_with_noise(m, n, seed);
  const auto od = detail::order_draw(m, draw);
  const std::size_t ed = static_cast<std::size_t>(m.eps_dim);

  MartingaleCheckReport rep;
  const double f_sup = std::max(std::abs(m.f_min), std::abs(m.f_max));
  std::vector<double> fresh(ed);
  for (std::size_t j : probe_js) {
    if (j < 1 || j > n) throw ParseError("martingale check: probe step out of range");
    const double coef = od.w[j - 1] + (j == n ? od.phi[1] : od.phi[j + 1]);
    std::vector<double> vals(reps);
    for (std::size_t r = 0; r < reps; ++r) {
      Stream st(seed ^ 0xd1b54a32d192ed03ULL, j * 0x100000000ULL + r);
      for (std::size_t c = 0; c < ed; ++c) fresh[c] = st.uniform01();
      vals[r] = coef * (m.f(od.x[j], fresh) - od.phi[j]);
    }
    MartingaleCheckRow row;
    row.j = j;
    row.mean = mean_of(vals);
    row.std_error = std::sqrt(sample_variance(vals) / static_cast<double>(reps));
    row.pass = std::abs(row.mean) <= 4.0 * row.std_error + 1e-12 * f_sup * f_sup;
    rep.pass = rep.pass && row.pass;
    rep.rows.push_back(row);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Predictable bracket of the martingale parts
// ---------------------------------------------------------------------------

struct BracketPath {
  std::size_t n = 0;
  std::vector<Mat3> path;    // running bracket, index 0..n
  Mat3 normalized_final;     // (1/n) <M(f), M(g)>_n
};

// <M(f), M(g)>_j = sum_{i<=j} (a_i(f) a_i(g)^T) .* Sigma_b(X_{sigma(i)})
// with a_i(f) = (f_{i-1} + phi^f_{i+1}, 1, 1); the three coordinates track
// the product statistic, the mean and the second-moment components.
inline BracketPath bracket_path(const GenerativeModel& f, const GenerativeModel& g,
                                std::size_t n, std::uint64_t seed) {
  if (n < 2) throw ParseError("bracket path needs n >= 2");
  const int ed = std::max(f.eps_dim, g.eps_dim);
  // draw both components on shared input and noise
  std::vector<GenerativeModel> pair_vec;
  pair_vec.push_back(f);
  pair_vec.push_back(g);
  const ModelDraw draw =
      detail::draw_points(f.name + "+" + g.name, ed, f.x_quantile,
                          std::span<const GenerativeModel>(pair_vec.data(), 2), n, seed);

  const std::size_t nn = n;
  const auto sigma = sort_permutation(draw.sample.xs, TiePolicy::error);
  std::vector<double> xs(nn + 1), wf(nn + 1), wg(nn + 1), pf(nn + 1), pg(nn + 1);
  for (std::size_t k = 1; k <= nn; ++k) {
    const std::size_t idx = sigma[k - 1];
    xs[k] = draw.sample.xs[idx];
    wf[k] = draw.sample.ys[0][idx];
    wg[k] = draw.sample.ys[1][idx];
    pf[k] = f.phi(xs[k]);
    pg[k] = g.phi(xs[k]);
  }
  const std::vector<double> zero(static_cast<std::size_t>(ed), 0.0);
  wf[0] = f.f(xs[nn], zero);
  wg[0] = g.f(xs[nn], zero);

  BracketPath bp;
  bp.n = nn;
  bp.path.assign(nn + 1, Mat3::Zero());
  for (std::size_t i = 1; i <= nn; ++i) {
    const double pf_next = (i == nn) ? pf[1] : pf[i + 1];
    const double pg_next = (i == nn) ? pg[1] : pg[i + 1];
    const Vec3 af(wf[i - 1] + pf_next, 1.0, 1.0);
    const Vec3 ag(wg[i - 1] + pg_next, 1.0, 1.0);
    const Mat3 incr = (af * ag.transpose()).cwiseProduct(sigma_b(f, g, xs[i]));
    bp.path[i] = bp.path[i - 1] + incr;
  }
  bp.normalized_final = bp.path[nn] / static_cast<double>(nn);
  return bp;
}

// Convenience for the common f == g case, preserving the identity of the
// model object so the closed-form conditional moments are used.
inline BracketPath bracket_path(const GenerativeModel& f, std::size_t n, std::uint64_t seed) {
  return bracket_path(f, f, n, seed);
}

// ---------------------------------------------------------------------------
// Remainder envelope
// ---------------------------------------------------------------------------

struct RemainderReport {
  std::size_t n = 0;
  double r_n = 0.0;           // remainder of the approximate split at j = n
  double half_phi_gap = 0.0;  // (1/2) sum (phi_{i-1} - phi_i)^2
  double deviation = 0.0;     // |r_n + half_phi_gap|
  double bound = 0.0;         // c * sup|f|^2
  bool pass = false;
};

inline RemainderReport remainder_envelope(const GenerativeModel& m, std::size_t n,
                                          std::uint64_t seed, double c = 8.0,
                                          bool throw_on_violation = false) {
  const DecompositionPath p = build_path(m, n, seed);
  RemainderReport r;
  r.n = n;
  r.r_n = p.r_approx[n];
  r.half_phi_gap = 0.5 * p.phi_gap_sq;
  r.deviation = std::abs(r.r_n + r.half_phi_gap);
  r.bound = c * p.f_sup * p.f_sup;
  r.pass = r.deviation <= r.bound;
  if (!r.pass && throw_on_violation)
    throw BoundViolated("remainder envelope violated: deviation " + std::to_string(r.deviation) +
                        " exceeds " + std::to_string(r.bound));
  return r;
}

}  // namespace sensindex
