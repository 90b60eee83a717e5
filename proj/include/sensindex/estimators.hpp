#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sensindex/errors.hpp"
#include "sensindex/ranking.hpp"
#include "sensindex/util.hpp"

namespace sensindex {

// Rank sums are accumulated in exact 64-bit integers (values bounded by n^3)
// before a single floating division; guard the bound.
inline void check_rank_sum_capacity(std::size_t n) {
  if (n > 2'000'000)
    throw Error(exit_parse_error, "sample too large for exact integer rank sums (n > 2e6)");
}

// First/second-moment summary: t estimates E[E[Y|X]^2] through the
// neighbor-product sum, s1 estimates E[Y], s2 estimates E[Y^2].
struct MomentVector {
  double t = 0.0;
  double s1 = 0.0;
  double s2 = 0.0;
};

// Variance-ratio map rho = h(theta): h(t, s1, s2) = (t - s1^2) / (s2 - s1^2).
// Throws when the variance denominator is degenerate (scale-aware threshold).
inline double variance_ratio(const MomentVector& th) {
  const double denom = th.s2 - th.s1 * th.s1;
  const double threshold = 0x1.0p-40 * std::max(1.0, th.s2);
  if (!(denom > threshold))
    throw DegenerateVariance("output variance " + std::to_string(denom) +
                             " at or below threshold " + std::to_string(threshold));
  return (th.t - th.s1 * th.s1) / denom;
}

inline MomentVector theta_hat_from(const std::vector<double>& ys, const RankStructure& rs) {
  const std::size_t n = ys.size();
  std::vector<double> prod(n), sq(n);
  for (std::size_t i = 0; i < n; ++i) {
    prod[i] = ys[i] * ys[rs.neighbor[i]];
    sq[i] = ys[i] * ys[i];
  }
  MomentVector th;
  th.t = pairwise_sum(prod) / static_cast<double>(n);
  th.s1 = pairwise_sum(ys) / static_cast<double>(n);
  th.s2 = pairwise_sum(sq) / static_cast<double>(n);
  return th;
}

inline MomentVector theta_hat(const Sample& sample, TiePolicy policy, std::uint64_t jitter_seed = 0) {
  const RankStructure rs = build_rank_structure(sample, policy, jitter_seed, /*with_y_ranks=*/false);
  return theta_hat_from(sample.y(), rs);
}

// Rank/nearest-neighbor variance-ratio estimate:
//   [ (1/n) sum_i y_i y_{N(i)} - ((1/n) sum y_i)^2 ] / [ (1/n) sum y_i^2 - ((1/n) sum y_i)^2 ]
// with the cyclic neighbor map N.
inline double sobol_rank_estimate_from(const std::vector<double>& ys, const RankStructure& rs) {
  if (ys.size() < 3) throw ParseError("variance-ratio estimator needs n >= 3");
  return variance_ratio(theta_hat_from(ys, rs));
}

inline double sobol_rank_estimate(const Sample& sample, TiePolicy policy, std::uint64_t jitter_seed = 0) {
  const RankStructure rs = build_rank_structure(sample, policy, jitter_seed, /*with_y_ranks=*/false);
  return sobol_rank_estimate_from(sample.y(), rs);
}

// Componentwise estimate for d-vector outputs, sharing the single x-order.
// A degenerate component is reported with its index.
inline std::vector<double> sobol_multivariate(const Sample& sample, TiePolicy policy,
                                              std::uint64_t jitter_seed = 0) {
  const RankStructure rs = build_rank_structure(sample, policy, jitter_seed, /*with_y_ranks=*/false);
  std::vector<double> out;
  out.reserve(sample.dim());
  for (std::size_t k = 0; k < sample.dim(); ++k) {
    try {
      out.push_back(sobol_rank_estimate_from(sample.ys[k], rs));
    } catch (const DegenerateVariance& e) {
      throw DegenerateVariance("component " + std::to_string(k + 1) + ": " + e.what());
    }
  }
  return out;
}

// T_n(t) = (1/n) #{ i : max(y_i, y_{N(i)}) <= t }, a right-continuous
// nondecreasing step function of t with values in [0,1].
inline double tn_curve_from(const std::vector<double>& ys, const RankStructure& rs, double t) {
  std::size_t count = 0;
  for (std::size_t i = 0; i < ys.size(); ++i)
    if (std::max(ys[i], ys[rs.neighbor[i]]) <= t) ++count;
  return static_cast<double>(count) / static_cast<double>(ys.size());
}

inline double tn_curve(const Sample& sample, double t, TiePolicy policy, std::uint64_t jitter_seed = 0) {
  const RankStructure rs = build_rank_structure(sample, policy, jitter_seed, /*with_y_ranks=*/false);
  return tn_curve_from(sample.y(), rs, t);
}

// Exact integer cores of the rank statistics. With r_i the strict rank of the
// y attached to sorted position i (1-based, cyclically extended):
//   tn_sum  = sum_i ( n - max(r_i, r_{i+1}) + 1 )          (cyclic)
//   gap_cyclic = sum_i | r_{i+1} - r_i |                   (cyclic)
//   gap_linear = sum_{i=1}^{n-1} | r_{i+1} - r_i |         (no wrap)
struct RankSums {
  std::int64_t n = 0;
  std::int64_t tn_sum = 0;
  std::int64_t gap_cyclic = 0;
  std::int64_t gap_linear = 0;
};

inline RankSums rank_sums(const RankStructure& rs) {
  const std::size_t n = rs.sigma.size();
  check_rank_sum_capacity(n);
  if (rs.ranks_y.empty())
    throw ParseError("rank sums need the y ranks of a scalar sample (built with with_y_ranks)");
  RankSums s;
  s.n = static_cast<std::int64_t>(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::int64_t r_here = rs.ranks_y[rs.sigma[k]];
    const std::int64_t r_next = rs.ranks_y[rs.sigma[(k + 1) % n]];
    s.tn_sum += s.n - std::max(r_here, r_next) + 1;
    const std::int64_t gap = std::llabs(r_next - r_here);
    s.gap_cyclic += gap;
    if (k + 1 < n) s.gap_linear += gap;
  }
  return s;
}

// Integrated statistic T_n^CvM = (1/n^2) sum_i (n - max(r_i, r_{i+1}) + 1);
// equals the double sum (1/n) sum_j T_n(y_j) exactly.
inline double tn_cvm_integral_from(const RankSums& s) {
  return static_cast<double>(s.tn_sum) / (static_cast<double>(s.n) * static_cast<double>(s.n));
}

inline double tn_cvm_integral(const Sample& sample, TiePolicy policy, std::uint64_t jitter_seed = 0) {
  const RankStructure rs = build_rank_structure(sample, policy, jitter_seed);
  return tn_cvm_integral_from(rank_sums(rs));
}

// Cyclic rank-gap estimate of the Cramer-von Mises index:
//   rho = 1 + 3/n - (3/n^2) sum_i |r_{i+1} - r_i|  (cyclic sum)
// Computed as an exact integer numerator over n^2. The identity
// rho == 6*T_n^CvM - 2 is exact at the integer level: the numerators coincide
// because 2*tn_sum + gap_cyclic == n*(n+1). (Evaluating 6*T - 2 in floating
// point rounds in a different order and may differ by a few ulp.)
inline double cvm_rank_estimate_from(const RankSums& s) {
  const std::int64_t numerator = s.n * s.n + 3 * s.n - 3 * s.gap_cyclic;
  return static_cast<double>(numerator) / (static_cast<double>(s.n) * static_cast<double>(s.n));
}

inline double cvm_rank_estimate(const Sample& sample, TiePolicy policy, std::uint64_t jitter_seed = 0) {
  const RankStructure rs = build_rank_structure(sample, policy, jitter_seed);
  return cvm_rank_estimate_from(rank_sums(rs));
}

// Non-cyclic variant (original rank-correlation form):
//   xi = 1 - 3 sum_{i=1}^{n-1} |r_{i+1} - r_i| / (n^2 - 1).
inline double chatterjee_estimate_from(const RankSums& s) {
  const std::int64_t denom = s.n * s.n - 1;
  const std::int64_t numerator = denom - 3 * s.gap_linear;
  return static_cast<double>(numerator) / static_cast<double>(denom);
}

inline double chatterjee_estimate(const Sample& sample, TiePolicy policy, std::uint64_t jitter_seed = 0) {
  const RankStructure rs = build_rank_structure(sample, policy, jitter_seed);
  return chatterjee_estimate_from(rank_sums(rs));
}

enum class IndexKind { sobol, cvm, chatterjee };

inline const char* to_string(IndexKind k) {
  switch (k) {
    case IndexKind::sobol: return "sobol";
    case IndexKind::cvm: return "cvm";
    case IndexKind::chatterjee: return "chatterjee";
  }
  return "?";
}

inline IndexKind index_kind_from_string(const std::string& s) {
  if (s == "sobol") return IndexKind::sobol;
  if (s == "cvm") return IndexKind::cvm;
  if (s == "chatterjee") return IndexKind::chatterjee;
  throw InvalidLevel("unknown index kind '" + s + "' (sobol|cvm|chatterjee)");
}

struct ConfidenceInterval {
  double lower = 0.0;
  double upper = 0.0;
  double level = 0.0;
};

// Aggregated result for one estimate, as emitted by the CLI.
struct EstimateReport {
  std::string index_name;                 // "sobol", "sobol[k]", "cvm", "chatterjee"
  std::vector<double> point;              // one entry per component
  std::size_t n = 0;
  std::optional<double> bias_delta_n;     // model-assisted neighbor-gap bias term
  std::optional<double> variance;         // asymptotic variance from the formula
  std::optional<ConfidenceInterval> ci;
};

}  // namespace sensindex
