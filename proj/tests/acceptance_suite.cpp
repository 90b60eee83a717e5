// Acceptance gate: ten integration criteria covering the estimator identities,
// the martingale decomposition, the asymptotic-variance formulas, the CLTs,
// the bias-term scaling, and the conditional-quantile coupling. One line per
// criterion; the process exits 0 iff every criterion passes.

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "sensindex/cli_support.hpp"

namespace {

using namespace sensindex;

std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return std::string(buf);
}

struct Outcome {
  bool pass = false;
  std::string text;  // "measured ..., limit ..."
};

bool run_criterion(int k, const std::string& description, double runtime_limit_s,
                   const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome out;
  try {
    out = body();
  } catch (const std::exception& e) {
    out.pass = false;
    out.text = std::string("exception: ") + e.what();
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool in_time = secs < runtime_limit_s;
  const bool pass = out.pass && in_time;
  std::printf("[%s] %d. %s (%s; runtime %.1fs, limit %.0fs)\n", pass ? "PASS" : "FAIL", k,
              description.c_str(), out.text.c_str(), secs, runtime_limit_s);
  std::fflush(stdout);
  return pass;
}

double json_number(const nlohmann::json& j, const char* key) { return j.at(key).get<double>(); }

Outcome criterion_doob_identity() {
  const auto names = catalogue_names();
  double worst_ratio = 0.0;
  for (std::size_t mi = 0; mi < names.size(); ++mi) {
    const GenerativeModel m = make_model(names[mi]);
    for (std::size_t n : {std::size_t{10}, std::size_t{100}, std::size_t{1000}}) {
      const std::uint64_t base = splitmix64(0xacce97edULL ^ (mi * 4096 + n));
      for (std::size_t k = 0; k < 100; ++k) {
        const auto p = build_path(m, n, detail::replicate_seed(base, k));
        worst_ratio = std::max(worst_ratio,
                               doob_identity_deviation(p) / (1e-10 * static_cast<double>(n)));
      }
    }
  }
  return {worst_ratio < 1.0,
          "measured max |Z-A-M| = " + fmt(worst_ratio) + " of the 1e-10*n allowance, limit < 1"};
}

Outcome criterion_rank_identity() {
  const auto names = catalogue_names();
  std::int64_t violations = 0;
  for (std::size_t s = 0; s < 1000; ++s) {
    const std::int64_t n = 3 + static_cast<std::int64_t>(splitmix64(0x9a4e1ULL + s) % 498);
    const GenerativeModel m = make_model(names[s % names.size()]);
    const Sample smp = sample_model(m, static_cast<std::size_t>(n), 77'000 + s);
    const RankSums sums = rank_sums(build_rank_structure(smp, TiePolicy::error, 0));
    // estimator-relation numerators, exact in 64-bit integers:
    //   n^2 + 3n - 3*gap == 6*tn - 2*n^2   <=>   2*tn + gap == n*(n+1)
    if (2 * sums.tn_sum + sums.gap_cyclic != n * (n + 1)) ++violations;
    if (n * n + 3 * n - 3 * sums.gap_cyclic != 6 * sums.tn_sum - 2 * n * n) ++violations;
  }
  return {violations == 0,
          "measured " + std::to_string(violations) + " integer-identity violations, limit 0"};
}

Outcome criterion_bracket() {
  const VerifyReport r = run_verify_suite("bracket", VerifyConfig{});
  double worst = 0.0;
  for (const auto& a : r.assertions) worst = std::max(worst, a.measured);
  return {r.pass, "measured worst entrywise relative error " + fmt(worst) + ", limit 0.05"};
}

Outcome criterion_clt_sobol() {
  const VerifyReport r = run_verify_suite("clt-sobol", VerifyConfig{});
  return {r.pass, "measured var(z) = " + fmt(json_number(r.details, "var_z")) + ", KS = " +
                      fmt(json_number(r.details, "ks_statistic")) +
                      "; limits var(z) in [0.9, 1.1], KS <= " +
                      fmt(1.5 * json_number(r.details, "ks_critical_1pct"))};
}

Outcome criterion_clt_cvm() {
  const VerifyReport r = run_verify_suite("clt-cvm", VerifyConfig{});
  const double rel = std::abs(json_number(r.details, "scaled_sample_var") -
                              json_number(r.details, "sigma2_formula")) /
                     json_number(r.details, "sigma2_formula");
  return {r.pass, "measured var(z) = " + fmt(json_number(r.details, "var_z")) +
                      ", formula-vs-empirical gap = " + fmt(rel) +
                      "; limits var(z) in [0.9, 1.1], gap <= 0.1"};
}

Outcome criterion_joint() {
  const MultiCltReport rep = run_multivariate_clt(make_pair_linear_noise(), 4000, 2000, 42);
  const double gap = std::abs(rep.empirical_corr_12 - rep.gamma_corr_12);
  return {gap <= 0.15, "measured |corr_emp - corr_formula| = |" + fmt(rep.empirical_corr_12) +
                           " - " + fmt(rep.gamma_corr_12) + "| = " + fmt(gap) + ", limit 0.15"};
}

Outcome criterion_delta_scaling() {
  const VerifyReport r = run_verify_suite("delta", VerifyConfig{});
  double worst_level = 0.0, worst_monotone = -std::numeric_limits<double>::infinity();
  for (const auto& a : r.assertions) {
    if (a.name.rfind("sqrt-n-delta-monotone/", 0) == 0)
      worst_monotone = std::max(worst_monotone, a.measured);
    else
      worst_level = std::max(worst_level, a.measured);
  }
  return {r.pass, "measured worst sqrt(n)*Delta_n = " + fmt(worst_level) +
                      " (limit 0.02), worst monotonicity excess " + fmt(worst_monotone) +
                      " (limit 0)"};
}

Outcome criterion_consistency() {
  const VerifyReport r = run_verify_suite("consistency", VerifyConfig{});
  double worst_ratio = 0.0;
  for (const auto& a : r.assertions) worst_ratio = std::max(worst_ratio, a.measured / a.limit);
  return {r.pass, "measured worst median-error-to-threshold ratio " + fmt(worst_ratio) +
                      ", limit < 1 against 2*sigma/sqrt(n) (0.01 when degenerate)"};
}

Outcome criterion_psd() {
  // Margin: min eigenvalue + 1e-9 * trace, with a 1e-12 absolute floor because
  // degenerate models make Sigma an exact zero matrix known to ~1e-12 per entry.
  const double psd_abs = 1e-12;
  double worst_margin = std::numeric_limits<double>::infinity();
  double min_sigma2 = std::numeric_limits<double>::infinity();
  for (const auto& name : catalogue_names()) {
    const GenerativeModel m = make_model(name);
    const auto sb = sobol_asymptotic_variance(m);
    const auto cb = cvm_asymptotic_variance(m);
    worst_margin = std::min(worst_margin,
                            min_eigenvalue(sb.sigma0) + 1e-9 * sb.sigma0.trace() + psd_abs);
    worst_margin = std::min(worst_margin,
                            min_eigenvalue(sb.sigma1) + 1e-9 * sb.sigma1.trace() + psd_abs);
    min_sigma2 = std::min({min_sigma2, sb.total, cb.total});
  }
  const Eigen::MatrixXd gamma = gamma_matrix(make_pair_linear_noise());
  worst_margin = std::min(worst_margin, min_eigenvalue(gamma) + 1e-9 * gamma.trace() + psd_abs);
  const bool pass = worst_margin >= 0.0 && min_sigma2 >= 0.0;
  return {pass, "measured worst PSD margin " + fmt(worst_margin) + " (limit >= 0), min sigma^2 " +
                    fmt(min_sigma2) + " (limit >= 0)"};
}

Outcome criterion_transfer() {
  double worst = 0.0;
  for (const std::string name : {"linear_uniform", "step_model"}) {
    const GenerativeModel native = make_model(name);
    ConditionalLaw law;
    law.name = name + "-transfer";
    law.cond_cdf = native.cond_cdf;
    law.t_lo = native.f_min;
    law.t_hi = native.f_max;
    law.x_cdf = native.x_cdf;
    law.x_quantile = native.x_quantile;
    const GenerativeModel rebuilt = quantile_transfer(law);
    const std::size_t n = 10000;
    const Sample a = sample_model(rebuilt, n, 2024);
    const Sample b = sample_model(native, n, 9090);
    worst = std::max(worst, ecdf2d_max_deviation(a.xs, a.ys[0], b.xs, b.ys[0]));
  }
  return {worst < 0.03,
          "measured worst 2-D ECDF deviation " + fmt(worst) + " at n = 10^4, limit < 0.03"};
}

}  // namespace

int main() {
  bool all = true;
  all &= run_criterion(1, "exact Doob split Z = A + M across the catalogue (100 seeds, n in {10, 100, 1000})",
                       60, criterion_doob_identity);
  all &= run_criterion(2, "rank-formula identity between the CvM statistic and the rank-gap estimator (10^3 samples, n <= 500)",
                       10, criterion_rank_identity);
  all &= run_criterion(3, "seed-averaged normalized bracket matches Sigma_1 from quadrature (n = 10^4, 50 seeds)",
                       300, criterion_bracket);
  all &= run_criterion(4, "Gaussian fluctuations of the variance-ratio estimator (linear_uniform, n = 4000, 2000 reps, bias-corrected center)",
                       600, criterion_clt_sobol);
  all &= run_criterion(5, "Gaussian fluctuations of the rank CvM estimator with formula variance (pure_noise, n = 4000, 2000 reps)",
                       600, criterion_clt_cvm);
  all &= run_criterion(6, "joint normality of the two-component estimator matches the Gamma correlation (n = 4000, 2000 reps)",
                       900, criterion_joint);
  all &= run_criterion(7, "bias term scaling: sqrt(n)*Delta_n small at n = 10^4 and decreasing over n in {10^2, 10^3, 10^4}",
                       300, criterion_delta_scaling);
  all &= run_criterion(8, "consistency of both indices at n = 10^4 for every catalogue model (50 seeds)",
                       600, criterion_consistency);
  all &= run_criterion(9, "PSD structure of Sigma_0, Sigma_1, Gamma and nonnegative asymptotic variances",
                       60, criterion_psd);
  all &= run_criterion(10, "conditional-quantile coupling reproduces the joint law (2-D ECDF, two catalogue laws)",
                       120, criterion_transfer);
  std::printf("%s\n", all ? "acceptance: all criteria passed" : "acceptance: FAILURES present");
  return all ? 0 : 1;
}
