#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "sensindex/errors.hpp"
#include "sensindex/estimators.hpp"
#include "sensindex/models.hpp"
#include "sensindex/ranking.hpp"
#include "sensindex/rng.hpp"
#include "sensindex/stats.hpp"
#include "sensindex/util.hpp"
#include "sensindex/variance.hpp"

namespace sensindex {

enum class Centering { none, delta_corrected };

inline std::string to_string(Centering c) {
  return c == Centering::none ? "none" : "delta-corrected";
}

namespace detail {

// Replicate seeds are derived from the master seed by a fixed hash so that
// results are independent of scheduling and thread count.
inline std::uint64_t replicate_seed(std::uint64_t master, std::size_t r) {
  return splitmix64(master + 0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(r) + 1));
}

inline double estimate_scalar_index(const GenerativeModel& m, IndexKind kind, std::size_t n,
                                    std::uint64_t seed) {
  const Sample s = sample_model(m, n, seed);
  const RankStructure rs = build_rank_structure(s, TiePolicy::error, 0, kind != IndexKind::sobol);
  switch (kind) {
    case IndexKind::sobol:
      return sobol_rank_estimate_from(s.y(), rs);
    case IndexKind::cvm:
      return cvm_rank_estimate_from(rank_sums(rs));
    case IndexKind::chatterjee:
      return chatterjee_estimate_from(rank_sums(rs));
  }
  throw ParseError("unknown index kind");
}

inline double median_of(std::vector<double> vals) {
  if (vals.empty()) throw TooFewValues("median of an empty set");
  const std::size_t mid = vals.size() / 2;
  std::nth_element(vals.begin(), vals.begin() + static_cast<std::ptrdiff_t>(mid), vals.end());
  double hi = vals[mid];
  if (vals.size() % 2 == 1) return hi;
  std::nth_element(vals.begin(), vals.begin() + static_cast<std::ptrdiff_t>(mid) - 1, vals.end());
  return 0.5 * (vals[mid - 1] + hi);
}

}  // namespace detail

struct NormalityDiagnostics {
  double ks_statistic = 0.0;
  double skewness = 0.0;
  double excess_kurtosis = 0.0;
};

inline NormalityDiagnostics normality_diagnostics(std::span<const double> values) {
  if (values.size() < 100)
    throw TooFewValues("normality diagnostics need at least 100 values");
  NormalityDiagnostics d;
  d.ks_statistic = ks_distance_to_normal(values);
  d.skewness = sample_skewness(values);
  d.excess_kurtosis = sample_excess_kurtosis(values);
  return d;
}

// ---------------------------------------------------------------------------
// Central-limit experiment for a scalar index
// ---------------------------------------------------------------------------

struct CltReport {
  std::string model;
  IndexKind kind = IndexKind::sobol;
  Centering centering = Centering::delta_corrected;
  std::size_t n = 0;
  std::size_t reps = 0;

  double rho_true = 0.0;
  double sigma2_formula = 0.0;
  double delta_value = 0.0;   // finite-n bias gap used for the correction
  double delta_se = 0.0;
  double shift = 0.0;         // bias shift implied by the gap
  double center = 0.0;        // rho_true - shift under delta correction

  std::vector<double> estimates;     // raw replicate estimates (retained)
  std::vector<double> standardized;  // sqrt(n) (est - center) / sigma

  double mean_z = 0.0;
  double var_z = 0.0;
  double ks_statistic = 0.0;
  double ks_critical_1pct = 0.0;
  double skewness = 0.0;
  double excess_kurtosis = 0.0;
  double scaled_sample_var = 0.0;  // n * Var(estimates), the empirical sigma^2

  // Diagnostic for the sign of the bias correction: the standardized mean is
  // evaluated under both candidate centerings rho -+ shift.
  double mean_z_minus = 0.0;
  double mean_z_plus = 0.0;
  std::string sign_diagnosis;  // "minus", "plus" or "indistinguishable"
};

inline CltReport run_clt_experiment(const GenerativeModel& m, IndexKind kind, std::size_t n,
                                    std::size_t reps, std::uint64_t master_seed,
                                    Centering centering = Centering::delta_corrected,
                                    const QuadratureSpec& spec = {}) {
  if (n < 3) throw ParseError("CLT experiment needs n >= 3");
  if (reps < 100) throw TooFewValues("CLT experiment needs at least 100 replicates");
  if (kind == IndexKind::chatterjee)
    throw ParseError("CLT experiment supports the sobol and cvm indices");

  CltReport rep;
  rep.model = m.name;
  rep.kind = kind;
  rep.centering = centering;
  rep.n = n;
  rep.reps = reps;

  const TrueIndices ti = true_indices(m, spec);
  if (kind == IndexKind::sobol) {
    rep.rho_true = ti.sobol;
    const auto br = sobol_asymptotic_variance(m, spec);
    rep.sigma2_formula = br.total;
    const auto de = delta_n(m, n);
    rep.delta_value = de.value;
    rep.delta_se = de.std_error;
    rep.shift = de.value / (2.0 * br.var_y);
  } else {
    rep.rho_true = ti.cvm;
    rep.sigma2_formula = cvm_asymptotic_variance(m, spec).total;
    const auto de = delta_n_cvm(m, n);
    rep.delta_value = de.value;
    rep.delta_se = de.std_error;
    rep.shift = 3.0 * de.value;
  }
  if (rep.sigma2_formula <= 0.0)
    throw DegenerateVariance("CLT experiment: asymptotic variance is zero for model '" +
                             m.name + "'");
  const double sigma = std::sqrt(rep.sigma2_formula);
  rep.center = rep.rho_true - (centering == Centering::delta_corrected ? rep.shift : 0.0);

  rep.estimates.assign(reps, 0.0);
  parallel_for(reps, [&](std::size_t r) {
    rep.estimates[r] = detail::estimate_scalar_index(m, kind, n, detail::replicate_seed(master_seed, r));
  });

  const double root_n = std::sqrt(static_cast<double>(n));
  rep.standardized.resize(reps);
  for (std::size_t r = 0; r < reps; ++r)
    rep.standardized[r] = root_n * (rep.estimates[r] - rep.center) / sigma;

  rep.mean_z = mean_of(rep.standardized);
  rep.var_z = sample_variance(rep.standardized);
  rep.ks_statistic = ks_distance_to_normal(rep.standardized);
  rep.ks_critical_1pct = ks_critical_value(0.01, reps);
  rep.skewness = sample_skewness(rep.standardized);
  rep.excess_kurtosis = sample_excess_kurtosis(rep.standardized);
  rep.scaled_sample_var = static_cast<double>(n) * sample_variance(rep.estimates);

  // both candidate signs of the correction, on the same replicates
  const double shift_z = root_n * rep.shift / sigma;
  const double mean_raw = mean_of(rep.estimates);
  const double base = root_n * (mean_raw - rep.rho_true) / sigma;
  rep.mean_z_minus = base + shift_z;   // center rho - shift
  rep.mean_z_plus = base - shift_z;    // center rho + shift
  const double margin = 3.0 / std::sqrt(static_cast<double>(reps));
  if (std::abs(rep.mean_z_minus) + margin < std::abs(rep.mean_z_plus))
    rep.sign_diagnosis = "minus";
  else if (std::abs(rep.mean_z_plus) + margin < std::abs(rep.mean_z_minus))
    rep.sign_diagnosis = "plus";
  else
    rep.sign_diagnosis = "indistinguishable";
  return rep;
}

// ---------------------------------------------------------------------------
// Joint experiment for a vector output
// ---------------------------------------------------------------------------

struct MultiCltComponent {
  std::string name;
  double rho_true = 0.0;
  double gamma_kk = 0.0;
  double shift = 0.0;
  double center = 0.0;
  double mean_z = 0.0;
  double var_z = 0.0;
};

struct MultiCltReport {
  std::string model;
  std::size_t n = 0;
  std::size_t reps = 0;
  std::vector<MultiCltComponent> components;
  Eigen::MatrixXd gamma;           // formula covariance of the limit
  Eigen::MatrixXd empirical_cov;   // covariance of the standardized estimates
  double gamma_corr_12 = 0.0;      // formula correlation (d >= 2)
  double empirical_corr_12 = 0.0;  // empirical correlation (d >= 2)
  std::vector<std::vector<double>> standardized;  // [component][replicate]
};

inline MultiCltReport run_multivariate_clt(const VectorModel& vm, std::size_t n,
                                           std::size_t reps, std::uint64_t master_seed,
                                           const QuadratureSpec& spec = {}) {
  const std::size_t d = vm.components.size();
  if (d < 2) throw ParseError("joint experiment needs at least two components");
  if (reps < 100) throw TooFewValues("joint experiment needs at least 100 replicates");

  MultiCltReport rep;
  rep.model = vm.name;
  rep.n = n;
  rep.reps = reps;
  rep.gamma = gamma_matrix(vm, spec);

  rep.components.resize(d);
  for (std::size_t k = 0; k < d; ++k) {
    auto& comp = rep.components[k];
    comp.name = vm.components[k].name;
    comp.rho_true = true_indices(vm.components[k], spec).sobol;
    comp.gamma_kk = rep.gamma(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
    const ModelMoments mm = model_moments(vm.components[k], spec);
    comp.shift = delta_n(vm.components[k], n).value / (2.0 * mm.var_y);
    comp.center = comp.rho_true - comp.shift;
  }

  std::vector<std::vector<double>> est(d, std::vector<double>(reps));
  parallel_for(reps, [&](std::size_t r) {
    const Sample s = sample_model(vm, n, detail::replicate_seed(master_seed, r));
    const std::vector<double> point = sobol_multivariate(s, TiePolicy::error);
    for (std::size_t k = 0; k < d; ++k) est[k][r] = point[k];
  });

  const double root_n = std::sqrt(static_cast<double>(n));
  rep.standardized.assign(d, std::vector<double>(reps));
  for (std::size_t k = 0; k < d; ++k) {
    const double sd = std::sqrt(rep.components[k].gamma_kk);
    for (std::size_t r = 0; r < reps; ++r)
      rep.standardized[k][r] = root_n * (est[k][r] - rep.components[k].center) / sd;
    rep.components[k].mean_z = mean_of(rep.standardized[k]);
    rep.components[k].var_z = sample_variance(rep.standardized[k]);
  }

  rep.empirical_cov.resize(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = 0; b < d; ++b) {
      const double ma = rep.components[a].mean_z, mb = rep.components[b].mean_z;
      std::vector<double> cross(reps);
      for (std::size_t r = 0; r < reps; ++r)
        cross[r] = (rep.standardized[a][r] - ma) * (rep.standardized[b][r] - mb);
      rep.empirical_cov(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) =
          pairwise_sum(cross) / static_cast<double>(reps - 1);
    }
  if (d >= 2) {
    rep.gamma_corr_12 = rep.gamma(0, 1) / std::sqrt(rep.gamma(0, 0) * rep.gamma(1, 1));
    rep.empirical_corr_12 = rep.empirical_cov(0, 1) /
                            std::sqrt(rep.empirical_cov(0, 0) * rep.empirical_cov(1, 1));
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Consistency sweep and bias-gap scaling
// ---------------------------------------------------------------------------

struct ConsistencyRow {
  std::size_t n = 0;
  double rho_true = 0.0;
  double median_abs_error = 0.0;
  double mean_abs_error = 0.0;
};

inline std::vector<ConsistencyRow> consistency_sweep(const GenerativeModel& m, IndexKind kind,
                                                     const std::vector<std::size_t>& ns,
                                                     std::size_t reps, std::uint64_t master_seed,
                                                     const QuadratureSpec& spec = {}) {
  if (reps < 3) throw TooFewValues("consistency sweep needs at least 3 replicates");
  const TrueIndices ti = true_indices(m, spec);
  const double rho = (kind == IndexKind::sobol) ? ti.sobol : ti.cvm;
  std::vector<ConsistencyRow> rows;
  for (std::size_t n : ns) {
    std::vector<double> errs(reps);
    parallel_for(reps, [&](std::size_t r) {
      const std::uint64_t seed = detail::replicate_seed(master_seed ^ n, r);
      errs[r] = std::abs(detail::estimate_scalar_index(m, kind, n, seed) - rho);
    });
    ConsistencyRow row;
    row.n = n;
    row.rho_true = rho;
    row.median_abs_error = detail::median_of(errs);
    row.mean_abs_error = mean_of(errs);
    rows.push_back(row);
  }
  return rows;
}

struct DeltaScalingRow {
  std::size_t n = 0;
  double delta = 0.0;
  double std_error = 0.0;
  double sqrt_n_delta = 0.0;
};

inline std::vector<DeltaScalingRow> delta_scaling_study(const GenerativeModel& m, IndexKind kind,
                                                        const std::vector<std::size_t>& ns,
                                                        std::size_t budget,
                                                        std::uint64_t seed) {
  if (kind == IndexKind::chatterjee)
    throw ParseError("bias-gap study supports the sobol and cvm indices");
  std::vector<DeltaScalingRow> rows;
  for (std::size_t n : ns) {
    const DeltaEstimate de =
        (kind == IndexKind::sobol) ? delta_n(m, n, budget, seed) : delta_n_cvm(m, n, budget, seed);
    DeltaScalingRow row;
    row.n = n;
    row.delta = de.value;
    row.std_error = de.std_error;
    row.sqrt_n_delta = std::sqrt(static_cast<double>(n)) * de.value;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace sensindex
