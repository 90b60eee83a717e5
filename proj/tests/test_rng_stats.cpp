#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdlib>
#include <string>
#include <vector>

#include "sensindex/errors.hpp"
#include "sensindex/rng.hpp"
#include "sensindex/stats.hpp"
#include "sensindex/util.hpp"

using namespace sensindex;

namespace {

// RAII guard so env-var tests cannot leak state into other test cases.
class EnvGuard {
 public:
  explicit EnvGuard(const char* name) : name_(name) {
    if (const char* v = std::getenv(name)) {
      had_ = true;
      old_ = v;
    }
  }
  ~EnvGuard() {
    if (had_) {
      ::setenv(name_.c_str(), old_.c_str(), 1);
    } else {
      ::unsetenv(name_.c_str());
    }
  }
  void set(const char* value) { ::setenv(name_.c_str(), value, 1); }
  void unset() { ::unsetenv(name_.c_str()); }

 private:
  std::string name_;
  bool had_ = false;
  std::string old_;
};

}  // namespace

TEST_CASE("splitmix64 matches the published finalizer sequence") {
  // First outputs of SplittableRandom-style splitmix64 streams seeded at the
  // argument (increment folded into the call).
  CHECK(splitmix64(0) == 0xE220A8397B1DCDAFULL);
  CHECK(splitmix64(1) == 0x910A2DEC89025CC1ULL);
  CHECK(splitmix64(0xDEADBEEFULL) == 0x4ADFB90F68C9EB9BULL);
}

TEST_CASE("Stream is deterministic in (master_seed, counter)") {
  Stream a(42, 7);
  Stream b(42, 7);
  for (int i = 0; i < 64; ++i) CHECK(a.raw() == b.raw());

  Stream c(42, 8);
  Stream d(43, 7);
  Stream base(42, 7);
  int diff_counter = 0, diff_master = 0;
  for (int i = 0; i < 16; ++i) {
    const std::uint64_t r = base.raw();
    if (c.raw() != r) ++diff_counter;
    if (d.raw() != r) ++diff_master;
  }
  CHECK(diff_counter >= 15);
  CHECK(diff_master >= 15);
}

TEST_CASE("Stream::uniform01 stays in [0,1) with sane moments") {
  Stream s(123, 0);
  const std::size_t n = 200000;
  double sum = 0.0, sumsq = 0.0;
  double lo = 1.0, hi = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double u = s.uniform01();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
    sumsq += u * u;
    lo = std::min(lo, u);
    hi = std::max(hi, u);
  }
  const double mean = sum / static_cast<double>(n);
  const double var = sumsq / static_cast<double>(n) - mean * mean;
  CHECK(std::abs(mean - 0.5) < 0.005);        // se ~ 0.00065
  CHECK(std::abs(var - 1.0 / 12.0) < 0.005);  // se ~ 0.0002
  CHECK(lo < 0.01);
  CHECK(hi > 0.99);
}

TEST_CASE("pairwise_sum agrees with high-precision accumulation") {
  Stream s(9, 1);
  for (std::size_t n : {0u, 1u, 7u, 8u, 9u, 1000u, 4097u}) {
    std::vector<double> v(n);
    long double ref = 0.0L;
    for (auto& x : v) {
      x = s.uniform01() - 0.25;
      ref += static_cast<long double>(x);
    }
    const double got = pairwise_sum(v);
    CHECK(std::abs(got - static_cast<double>(ref)) <=
          1e-12 * std::max(1.0, std::abs(static_cast<double>(ref))));
    CHECK(pairwise_sum(v) == got);  // rerun is bit-identical
  }
}

TEST_CASE("mean_of and sample_variance on known data") {
  CHECK(mean_of({}) == 0.0);
  const std::vector<double> v{1.0, 2.0, 3.0, 4.0};
  CHECK(mean_of(v) == 2.5);
  CHECK(sample_variance(v) == Catch::Approx(5.0 / 3.0).epsilon(1e-15));
  CHECK(sample_variance(std::vector<double>{3.0}) == 0.0);
  CHECK(sample_variance(std::vector<double>{}) == 0.0);
}

TEST_CASE("worker_count honors SENSINDEX_THREADS") {
  EnvGuard guard("SENSINDEX_THREADS");

  guard.set("1");
  CHECK(worker_count() == 1);

  guard.set("3");
  CHECK(worker_count() >= 1);
  CHECK(worker_count() <= 3);

  guard.set("9999");  // cap only lowers, never raises past min(hw, 8)
  CHECK(worker_count() <= 8);

  guard.set("not-a-number");
  const unsigned fallback = worker_count();
  guard.unset();
  CHECK(fallback == worker_count());
  CHECK(worker_count() >= 1);
  CHECK(worker_count() <= 8);
}

TEST_CASE("parallel_for writes every slot exactly once, any worker count") {
  EnvGuard guard("SENSINDEX_THREADS");
  const std::size_t count = 1000;
  std::vector<std::vector<double>> results;
  for (const char* threads : {"1", "8"}) {
    guard.set(threads);
    std::vector<double> out(count, -1.0);
    std::vector<int> hits(count, 0);
    parallel_for(count, [&](std::size_t i) {
      out[i] = static_cast<double>(i * i);
      ++hits[i];
    });
    for (std::size_t i = 0; i < count; ++i) {
      REQUIRE(hits[i] == 1);
      REQUIRE(out[i] == static_cast<double>(i * i));
    }
    results.push_back(std::move(out));
  }
  CHECK(results[0] == results[1]);
  parallel_for(0, [&](std::size_t) { FAIL("must not be called"); });
}

TEST_CASE("normal_cdf hits tabulated values") {
  CHECK(normal_cdf(0.0) == Catch::Approx(0.5).margin(1e-16));
  CHECK(normal_cdf(-1.0) == Catch::Approx(0.15865525393145707).margin(1e-12));
  CHECK(normal_cdf(1.959963984540054) == Catch::Approx(0.975).margin(1e-12));
  CHECK(normal_cdf(1.0) + normal_cdf(-1.0) == Catch::Approx(1.0).margin(1e-15));
}

TEST_CASE("normal_quantile inverts normal_cdf") {
  CHECK(normal_quantile(0.975) == Catch::Approx(1.959963984540054).margin(1e-9));
  CHECK(normal_quantile(0.5) == Catch::Approx(0.0).margin(1e-12));
  for (double x : {-3.0, -1.0, -0.1, 0.0, 0.5, 2.3263478740408408}) {
    CHECK(normal_quantile(normal_cdf(x)) == Catch::Approx(x).margin(1e-9));
  }
  CHECK_THROWS_AS(normal_quantile(0.0), InvalidLevel);
  CHECK_THROWS_AS(normal_quantile(1.0), InvalidLevel);
  CHECK_THROWS_AS(normal_quantile(-0.5), InvalidLevel);
}

TEST_CASE("ks_distance hand-worked cases") {
  auto ident = [](double x) { return std::clamp(x, 0.0, 1.0); };
  CHECK(ks_distance(std::vector<double>{0.5}, ident) == Catch::Approx(0.5).margin(1e-15));
  CHECK(ks_distance(std::vector<double>{0.25, 0.75}, ident) ==
        Catch::Approx(0.25).margin(1e-15));
  CHECK_THROWS_AS(ks_distance(std::vector<double>{}, ident), TooFewValues);

  // A stratified normal sample has KS distance exactly 1/(2n) up to the
  // quantile approximation error.
  const std::size_t n = 1000;
  std::vector<double> strat(n);
  for (std::size_t i = 0; i < n; ++i)
    strat[i] = normal_quantile((static_cast<double>(i) + 0.5) / static_cast<double>(n));
  CHECK(ks_distance_to_normal(strat) == Catch::Approx(0.5 / static_cast<double>(n)).margin(1e-9));
}

TEST_CASE("ks_critical_value matches the Kolmogorov limit inversion") {
  CHECK(ks_critical_value(0.05, 1) ==
        Catch::Approx(std::sqrt(-std::log(0.025) / 2.0)).epsilon(1e-15));
  CHECK(ks_critical_value(0.05, 100) == Catch::Approx(0.13581).margin(5e-5));
  CHECK(ks_critical_value(0.01, 100) == Catch::Approx(0.16276).margin(5e-5));
  CHECK_THROWS_AS(ks_critical_value(0.0, 10), InvalidLevel);
  CHECK_THROWS_AS(ks_critical_value(1.0, 10), InvalidLevel);
}

TEST_CASE("sample_skewness and sample_excess_kurtosis on closed-form data") {
  const std::vector<double> sym{-2.0, -1.0, 0.0, 1.0, 2.0};
  CHECK(sample_skewness(sym) == Catch::Approx(0.0).margin(1e-15));

  // {0,0,0,1} is Bernoulli(1/4) exactly: skew (1-2p)/sqrt(p(1-p)) = 2/sqrt(3),
  // excess kurtosis (1-6p(1-p))/(p(1-p)) = -2/3.
  const std::vector<double> bern{0.0, 0.0, 0.0, 1.0};
  CHECK(sample_skewness(bern) == Catch::Approx(2.0 / std::sqrt(3.0)).epsilon(1e-12));
  CHECK(sample_excess_kurtosis(bern) == Catch::Approx(-2.0 / 3.0).epsilon(1e-12));

  const std::vector<double> flat{4.0, 4.0, 4.0};
  CHECK(sample_skewness(flat) == 0.0);
  CHECK(sample_excess_kurtosis(flat) == 0.0);
}

TEST_CASE("ecdf2d_max_deviation detects matching and divergent clouds") {
  const std::vector<double> xa{0.2, 0.8}, ya{0.2, 0.8};
  CHECK(ecdf2d_max_deviation(xa, ya, xa, ya) == 0.0);

  const std::vector<double> xb{0.5}, yb{0.5};
  CHECK(ecdf2d_max_deviation(xa, ya, xb, yb) == Catch::Approx(0.5).margin(1e-15));

  const std::vector<double> zeros{0.0, 0.0}, ones{1.0, 1.0};
  CHECK(ecdf2d_max_deviation(zeros, zeros, ones, ones) == Catch::Approx(1.0).margin(1e-15));

  // Same underlying law, independent draws: deviation decays like n^{-1/2}.
  Stream s(7, 3);
  const std::size_t n = 2000;
  std::vector<double> x1(n), y1(n), x2(n), y2(n);
  for (std::size_t i = 0; i < n; ++i) {
    x1[i] = s.uniform01();
    y1[i] = 0.5 * x1[i] + 0.5 * s.uniform01();
    x2[i] = s.uniform01();
    y2[i] = 0.5 * x2[i] + 0.5 * s.uniform01();
  }
  CHECK(ecdf2d_max_deviation(x1, y1, x2, y2) < 0.06);
}
