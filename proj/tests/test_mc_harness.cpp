#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "sensindex/errors.hpp"
#include "sensindex/estimators.hpp"
#include "sensindex/mc_harness.hpp"
#include "sensindex/models.hpp"
#include "sensindex/ranking.hpp"
#include "sensindex/stats.hpp"

using namespace sensindex;
using Catch::Approx;

TEST_CASE("replicate seeds are a fixed hash of (master, index)") {
  for (std::size_t r : {0u, 1u, 17u}) {
    const std::uint64_t expected =
        splitmix64(42ULL + 0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(r) + 1ULL));
    CHECK(detail::replicate_seed(42, r) == expected);
  }
  CHECK(detail::replicate_seed(42, 0) != detail::replicate_seed(42, 1));
  CHECK(detail::replicate_seed(42, 0) != detail::replicate_seed(43, 0));
}

TEST_CASE("scalar replicate estimates match the direct pipeline") {
  const auto m = make_linear_uniform();
  const std::size_t n = 500;
  const std::uint64_t seed = 99;
  const Sample s = sample_model(m, n, seed);
  const RankStructure rs = build_rank_structure(s, TiePolicy::error);
  const RankSums sums = rank_sums(rs);

  CHECK(detail::estimate_scalar_index(m, IndexKind::sobol, n, seed) ==
        sobol_rank_estimate_from(s.y(), rs));
  CHECK(detail::estimate_scalar_index(m, IndexKind::cvm, n, seed) ==
        cvm_rank_estimate_from(sums));
  CHECK(detail::estimate_scalar_index(m, IndexKind::chatterjee, n, seed) ==
        chatterjee_estimate_from(sums));
}

TEST_CASE("median_of") {
  CHECK(detail::median_of({3.0, 1.0, 2.0}) == 2.0);
  CHECK(detail::median_of({4.0, 1.0, 3.0, 2.0}) == 2.5);
  CHECK(detail::median_of({7.0}) == 7.0);
  CHECK_THROWS_AS(detail::median_of({}), TooFewValues);
}

TEST_CASE("normality diagnostics on a stratified normal sample") {
  CHECK_THROWS_AS(normality_diagnostics(std::vector<double>(99, 0.0)), TooFewValues);

  const std::size_t n = 400;
  std::vector<double> vals(n);
  for (std::size_t i = 0; i < n; ++i)
    vals[i] = normal_quantile((static_cast<double>(i) + 0.5) / static_cast<double>(n));
  const auto d = normality_diagnostics(vals);
  CHECK(d.ks_statistic < 2.0 / static_cast<double>(n));
  CHECK(std::abs(d.skewness) < 1e-10);
  CHECK(std::abs(d.excess_kurtosis) < 0.5);
}

TEST_CASE("Centering labels") {
  CHECK(to_string(Centering::none) == "none");
  CHECK(to_string(Centering::delta_corrected) == "delta-corrected");
}

TEST_CASE("central-limit experiment guards") {
  const auto m = make_linear_uniform();
  CHECK_THROWS_AS(run_clt_experiment(m, IndexKind::sobol, 2, 200, 1), ParseError);
  CHECK_THROWS_AS(run_clt_experiment(m, IndexKind::sobol, 100, 50, 1), TooFewValues);
  CHECK_THROWS_AS(run_clt_experiment(m, IndexKind::chatterjee, 100, 200, 1), ParseError);
  // deterministic link: limiting variance is exactly zero
  CHECK_THROWS_AS(run_clt_experiment(make_deterministic_monotone(), IndexKind::sobol, 100, 200, 1),
                  DegenerateVariance);
}

TEST_CASE("central-limit experiment smoke run") {
  const auto m = make_linear_uniform();
  const auto rep = run_clt_experiment(m, IndexKind::sobol, 500, 200, 42);
  CHECK(rep.model == "linear_uniform");
  CHECK(rep.n == 500);
  CHECK(rep.reps == 200);
  CHECK(rep.rho_true == Approx(0.5).margin(1e-8));
  CHECK(rep.sigma2_formula == Approx(0.6).margin(1e-6));
  CHECK(rep.delta_value > 0.0);
  CHECK(rep.shift == Approx(rep.delta_value / (2.0 / 6.0)).margin(1e-12));
  CHECK(rep.center == Approx(rep.rho_true - rep.shift).margin(1e-15));
  REQUIRE(rep.estimates.size() == 200);
  REQUIRE(rep.standardized.size() == 200);

  // Loose statistical bands; the acceptance-grade run uses n = 4000 x 2000.
  CHECK(std::abs(rep.mean_z) < 0.6);
  CHECK(rep.var_z > 0.5);
  CHECK(rep.var_z < 1.6);
  CHECK(rep.scaled_sample_var > 0.35);
  CHECK(rep.scaled_sample_var < 0.95);
  CHECK(rep.ks_critical_1pct == Approx(ks_critical_value(0.01, 200)).margin(1e-15));
  CHECK(rep.ks_statistic < 3.0 * rep.ks_critical_1pct);

  // The reported mean_z must agree with the minus-centering diagnostic.
  CHECK(rep.mean_z == Approx(rep.mean_z_minus).margin(1e-9));
  CHECK(rep.mean_z_minus - rep.mean_z_plus ==
        Approx(2.0 * std::sqrt(500.0) * rep.shift / std::sqrt(rep.sigma2_formula)).margin(1e-9));
  CHECK((rep.sign_diagnosis == "minus" || rep.sign_diagnosis == "plus" ||
         rep.sign_diagnosis == "indistinguishable"));

  // Replicates are deterministic in the master seed.
  const auto again = run_clt_experiment(m, IndexKind::sobol, 500, 200, 42);
  CHECK(rep.estimates == again.estimates);

  // Uncentered run: same replicates, center at the population index.
  const auto raw = run_clt_experiment(m, IndexKind::sobol, 500, 200, 42, Centering::none);
  CHECK(raw.center == raw.rho_true);
  CHECK(raw.estimates == rep.estimates);
}

TEST_CASE("distribution-scale central-limit smoke run") {
  const auto rep = run_clt_experiment(make_pure_noise(), IndexKind::cvm, 400, 150, 7);
  CHECK(rep.rho_true == Approx(0.0).margin(1e-9));
  CHECK(rep.sigma2_formula == Approx(0.4).margin(1e-4));
  CHECK(rep.shift == Approx(3.0 * rep.delta_value).margin(1e-12));
  CHECK(rep.delta_value == 0.0);  // conditional law does not depend on x
  CHECK(std::abs(rep.mean_z) < 0.7);
  CHECK(rep.var_z > 0.5);
  CHECK(rep.var_z < 1.7);
}

TEST_CASE("joint experiment guards and smoke run") {
  CHECK_THROWS_AS(run_multivariate_clt(make_vector_model("linear_uniform"), 200, 200, 1),
                  ParseError);
  CHECK_THROWS_AS(run_multivariate_clt(make_pair_linear_noise(), 200, 50, 1), TooFewValues);

  const auto rep = run_multivariate_clt(make_pair_linear_noise(), 500, 150, 11);
  CHECK(rep.model == "pair_linear_noise");
  REQUIRE(rep.components.size() == 2);
  CHECK(rep.components[0].rho_true == Approx(0.5).margin(1e-8));
  CHECK(rep.components[1].rho_true == Approx(0.0).margin(1e-8));
  CHECK(rep.gamma(0, 0) == Approx(0.6).margin(1e-6));
  CHECK(rep.gamma(1, 1) == Approx(1.0).margin(1e-6));
  CHECK(rep.gamma_corr_12 == Approx(0.0).margin(1e-6));

  for (const auto& comp : rep.components) {
    CHECK(std::abs(comp.mean_z) < 0.7);
    CHECK(comp.var_z > 0.4);
    CHECK(comp.var_z < 1.8);
  }
  CHECK(rep.empirical_cov(0, 1) == Approx(rep.empirical_cov(1, 0)).margin(1e-12));
  // True correlation is zero; 150 replicates put ~4 s.e. at 0.33.
  CHECK(std::abs(rep.empirical_corr_12) < 0.35);
  REQUIRE(rep.standardized.size() == 2);
  CHECK(rep.standardized[0].size() == 150);
}

TEST_CASE("consistency sweep errors shrink with n") {
  const auto m = make_linear_uniform();
  const auto rows = consistency_sweep(m, IndexKind::sobol, {200, 2000}, 30, 5);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].n == 200);
  CHECK(rows[1].n == 2000);
  CHECK(rows[0].rho_true == Approx(0.5).margin(1e-8));
  CHECK(rows[0].median_abs_error > rows[1].median_abs_error);
  CHECK(rows[0].mean_abs_error > rows[1].mean_abs_error);
  CHECK(rows[1].median_abs_error < 0.05);

  CHECK_THROWS_AS(consistency_sweep(m, IndexKind::sobol, {100}, 2, 5), TooFewValues);
}

TEST_CASE("bias-gap scaling study") {
  const auto m = make_linear_uniform();
  const auto rows = delta_scaling_study(m, IndexKind::sobol, {100, 400}, 20000, 3);
  REQUIRE(rows.size() == 2);
  for (const auto& row : rows) {
    CHECK(row.sqrt_n_delta ==
          Approx(std::sqrt(static_cast<double>(row.n)) * row.delta).margin(1e-15));
    CHECK(row.std_error > 0.0);
  }
  CHECK(rows[0].delta > rows[1].delta);

  const auto cvm_rows = delta_scaling_study(m, IndexKind::cvm, {100}, 20000, 3);
  CHECK(cvm_rows[0].delta > 0.0);

  CHECK_THROWS_AS(delta_scaling_study(m, IndexKind::chatterjee, {100}, 20000, 3), ParseError);
}
