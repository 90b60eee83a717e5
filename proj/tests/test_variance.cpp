#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <cmath>
#include <memory>

#include "sensindex/errors.hpp"
#include "sensindex/models.hpp"
#include "sensindex/variance.hpp"

using namespace sensindex;
using Catch::Approx;

namespace {

void expect_mat3(const Mat3& actual, const std::array<double, 9>& expected, double margin) {
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) {
      CAPTURE(r, c);
      CHECK(actual(r, c) == Approx(expected[static_cast<std::size_t>(3 * r + c)]).margin(margin));
    }
}

GenerativeModel constant_output_model() {
  auto m = make_pure_noise();
  m.name = "constant_output";
  m.f = [](double, std::span<const double>) { return 0.5; };
  m.phi = [](double) { return 0.5; };
  m.m2 = [](double) { return 0.25; };
  m.m3 = [](double) { return 0.125; };
  m.m4 = [](double) { return 0.0625; };
  return m;
}

}  // namespace

TEST_CASE("sigma0 closed forms") {
  // linear link: w(x) = ((x+1/2)^2, x+1/2, x^2+x+1/3) under X ~ U[0,1].
  expect_mat3(sigma0(make_linear_uniform(), make_linear_uniform()),
              {61.0 / 180.0, 1.0 / 6.0, 61.0 / 180.0,
               1.0 / 6.0, 1.0 / 12.0, 1.0 / 6.0,
               61.0 / 180.0, 1.0 / 6.0, 61.0 / 180.0},
              1e-10);
  // pure noise: the moment triple is constant in x.
  expect_mat3(sigma0(make_pure_noise(), make_pure_noise()),
              {0, 0, 0, 0, 0, 0, 0, 0, 0}, 1e-12);
}

TEST_CASE("sigma1 closed forms") {
  expect_mat3(sigma1(make_linear_uniform(), make_linear_uniform()),
              {53.0 / 144.0, 1.0 / 6.0, 13.0 / 36.0,
               1.0 / 6.0, 1.0 / 12.0, 1.0 / 6.0,
               13.0 / 36.0, 1.0 / 6.0, 11.0 / 30.0},
              1e-10);
  expect_mat3(sigma1(make_pure_noise(), make_pure_noise()),
              {13.0 / 144.0, 1.0 / 12.0, 1.0 / 12.0,
               1.0 / 12.0, 1.0 / 12.0, 1.0 / 12.0,
               1.0 / 12.0, 1.0 / 12.0, 4.0 / 45.0},
              1e-10);
  // deterministic link: no conditional noise, so the interaction term dies.
  expect_mat3(sigma1(make_deterministic_monotone(), make_deterministic_monotone()),
              {0, 0, 0, 0, 0, 0, 0, 0, 0}, 1e-12);
}

TEST_CASE("sigma0 cross-covariance transposes when swapping the pair") {
  const auto f = make_linear_uniform();
  const auto g = make_deterministic_monotone();
  const Mat3 fg = sigma0(f, g);
  const Mat3 gf = sigma0(g, f);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) CHECK(fg(r, c) == Approx(gf(c, r)).margin(1e-10));
}

TEST_CASE("delta-method weight vectors") {
  const Vec3 lin = v_vector(make_linear_uniform());
  CHECK(lin(0) == Approx(6.0).margin(1e-10));
  CHECK(lin(1) == Approx(-6.0).margin(1e-10));
  CHECK(lin(2) == Approx(-3.0).margin(1e-10));

  const Vec3 noise = v_vector(make_pure_noise());
  CHECK(noise(0) == Approx(12.0).margin(1e-9));
  CHECK(noise(1) == Approx(-12.0).margin(1e-9));
  CHECK(noise(2) == Approx(0.0).margin(1e-9));

  CHECK_THROWS_AS(v_vector(constant_output_model()), DegenerateVariance);
}

TEST_CASE("first-order index limiting variances") {
  const auto lin = sobol_asymptotic_variance(make_linear_uniform());
  CHECK(lin.rho == Approx(0.5).margin(1e-10));
  CHECK(lin.mean_y == Approx(1.0).margin(1e-10));
  CHECK(lin.var_y == Approx(1.0 / 6.0).margin(1e-10));
  CHECK(lin.contrib_sigma0 == Approx(0.05).margin(1e-9));
  CHECK(lin.contrib_sigma1 == Approx(0.55).margin(1e-9));
  CHECK(lin.total == Approx(0.6).margin(1e-9));

  const auto noise = sobol_asymptotic_variance(make_pure_noise());
  CHECK(noise.rho == Approx(0.0).margin(1e-10));
  CHECK(noise.total == Approx(1.0).margin(1e-9));

  // Fully deterministic link: exact cancellation, snapped to a true zero.
  const auto det = sobol_asymptotic_variance(make_deterministic_monotone());
  CHECK(det.rho == Approx(1.0).margin(1e-10));
  CHECK(det.total == 0.0);
  CHECK(det.contrib_sigma0 == Approx(0.0).margin(1e-10));
  CHECK(det.contrib_sigma1 == Approx(0.0).margin(1e-10));

  CHECK_THROWS_AS(sobol_asymptotic_variance(constant_output_model()), DegenerateVariance);
}

TEST_CASE("noise covariance fast paths") {
  const auto lin = make_linear_uniform();
  for (double x : {0.2, 0.7}) CHECK(noise_covariance(lin, lin, x) == Approx(1.0 / 12.0).margin(1e-12));

  // Indicator pair over the same shared base: exact conditional-CDF formula.
  const auto base = std::make_shared<const GenerativeModel>(lin);
  const auto i1 = indicator_model(base, 1.0);
  const auto i2 = indicator_model(base, 1.2);
  CHECK(noise_covariance(i1, i2, 0.3) == Approx(0.7 - 0.7 * 0.9).margin(1e-14));
  CHECK(noise_covariance(i1, i1, 0.3) == Approx(0.7 - 0.49).margin(1e-14));

  // Components reading disjoint noise coordinates are conditionally
  // uncorrelated; the tensor quadrature route must find exactly that.
  const auto pair = make_pair_linear_noise();
  CHECK(noise_covariance(pair.components[0], pair.components[1], 0.4) ==
        Approx(0.0).margin(1e-12));

  auto wide = make_pure_noise();
  wide.eps_dim = 3;
  CHECK_THROWS_AS(noise_covariance(wide, make_pure_noise(), 0.5), ParseError);
}

TEST_CASE("joint limiting covariance of the two-component fixture") {
  const auto pair = make_pair_linear_noise();
  const Eigen::MatrixXd gamma = gamma_matrix(pair);
  REQUIRE(gamma.rows() == 2);
  REQUIRE(gamma.cols() == 2);
  CHECK(gamma(0, 0) == Approx(0.6).margin(1e-8));
  CHECK(gamma(1, 1) == Approx(1.0).margin(1e-8));
  CHECK(gamma(0, 1) == Approx(0.0).margin(1e-8));
  CHECK(gamma(0, 1) == gamma(1, 0));
  CHECK(min_eigenvalue(gamma) > 0.5);
}

TEST_CASE("min_eigenvalue on known symmetric matrices") {
  Eigen::MatrixXd a(2, 2);
  a << 2.0, 0.0, 0.0, -1.0;
  CHECK(min_eigenvalue(a) == Approx(-1.0).margin(1e-12));
  a << 2.0, 1.0, 1.0, 2.0;
  CHECK(min_eigenvalue(a) == Approx(1.0).margin(1e-12));
}

TEST_CASE("nearest-neighbour bias gap: identity link closed form") {
  // phi(U) = U with a cyclic Beta(1, n-1) right gap gives
  // E[(phi_i - phi_N(i))^2] = (n-1)/(n(n+1)).
  const auto det = make_deterministic_monotone();
  for (std::size_t n : {10u, 100u}) {
    const auto de = delta_n(det, n, 400000);
    const double exact = static_cast<double>(n - 1) / (static_cast<double>(n) * static_cast<double>(n + 1));
    CAPTURE(n);
    CHECK(de.n == n);
    CHECK(de.std_error > 0.0);
    CHECK(std::abs(de.value - exact) < 4.0 * de.std_error + 1e-12);
  }

  // Determinism in the seed, and decay in n.
  const auto a = delta_n(make_linear_uniform(), 100, 50000, 7);
  const auto b = delta_n(make_linear_uniform(), 100, 50000, 7);
  CHECK(a.value == b.value);
  const auto small_n = delta_n(make_linear_uniform(), 10, 50000, 7);
  const auto large_n = delta_n(make_linear_uniform(), 1000, 50000, 7);
  CHECK(small_n.value > large_n.value);

  CHECK_THROWS_AS(delta_n(det, 1, 1000), ParseError);
  CHECK_THROWS_AS(delta_n(det, 100, 50), ParseError);
}

TEST_CASE("integrated conditional-CDF bias gap") {
  // Identity link: the integrated squared CDF increment is the cyclic
  // distance, with mean 2(n-1)/(n(n+1)).
  const auto det = make_deterministic_monotone();
  const std::size_t n = 100;
  const auto de = delta_n_cvm(det, n, 200000);
  const double exact = 2.0 * static_cast<double>(n - 1) /
                       (static_cast<double>(n) * static_cast<double>(n + 1));
  CHECK(std::abs(de.value - exact) < 4.0 * de.std_error + 1e-9);

  // X-independent conditional law: the increment vanishes identically.
  const auto noise = delta_n_cvm(make_pure_noise(), 50, 1000);
  CHECK(noise.value == 0.0);
  CHECK(noise.std_error == 0.0);
}

TEST_CASE("distribution-free kernel reductions under independence") {
  const auto m = make_pure_noise();  // F_Y(t) = t on [0,1]
  for (double t : {0.15, 0.5, 0.85}) {
    for (double s : {0.15, 0.5, 0.85}) {
      CAPTURE(t, s);
      const auto ev = cvm_kernels(m, t, s);
      const double mn = std::min(t, s);
      CHECK(ev.c_yy == Approx(mn - t * s).margin(1e-12));
      CHECK(ev.c_xy == Approx(2.0 * s * (mn - t * s)).margin(1e-12));
      CHECK(ev.c_xx == Approx((mn + 3.0 * t * s) * (mn - t * s)).margin(1e-12));
    }
  }
}

TEST_CASE("distribution-scale variance: independent link") {
  const auto bd = cvm_asymptotic_variance(make_pure_noise());
  CHECK(bd.term_input == Approx(0.1).margin(1e-6));
  CHECK(bd.term_output == Approx(4.0 / 45.0).margin(1e-6));
  CHECK(bd.term_cross == Approx(4.0 / 45.0).margin(1e-6));
  CHECK(bd.total == Approx(0.4).margin(1e-4));
}

TEST_CASE("distribution-scale variance: deterministic link cancels to zero") {
  const auto bd = cvm_asymptotic_variance(make_deterministic_monotone());
  CHECK(bd.total == 0.0);
  CHECK(std::abs(bd.total_raw) < 1e-6);
}

TEST_CASE("distribution-scale variance: frozen catalogue values") {
  // Numeric references frozen from converged quadrature; they are regression
  // guards, independently corroborated by the Monte Carlo harness.
  CHECK(cvm_asymptotic_variance(make_linear_uniform()).total ==
        Approx(0.4288887234274693).margin(1e-6));
  CHECK(cvm_asymptotic_variance(make_step_model(0.5)).total ==
        Approx(0.46874979138375905).margin(1e-6));
  CHECK(cvm_asymptotic_variance(make_trig_bounded(0.5)).total ==
        Approx(0.09548060593996821).margin(1e-6));
}

TEST_CASE("confidence_interval arithmetic and guards") {
  const auto ci = confidence_interval(0.5, 1.0, 100, 0.95);
  CHECK(ci.level == 0.95);
  CHECK(ci.lower == Approx(0.5 - 1.959963984540054 / 10.0).margin(1e-9));
  CHECK(ci.upper == Approx(0.5 + 1.959963984540054 / 10.0).margin(1e-9));

  const auto tight = confidence_interval(0.25, 0.0, 50, 0.9);
  CHECK(tight.lower == 0.25);
  CHECK(tight.upper == 0.25);

  CHECK_THROWS_AS(confidence_interval(0.5, 1.0, 100, 0.0), InvalidLevel);
  CHECK_THROWS_AS(confidence_interval(0.5, 1.0, 100, 1.0), InvalidLevel);
  CHECK_THROWS_AS(confidence_interval(0.5, -1e-6, 100, 0.95), DegenerateVariance);
  CHECK_THROWS_AS(confidence_interval(0.5, 1.0, 0, 0.95), ParseError);
}
